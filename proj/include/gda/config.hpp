#pragma once

// Strict JSON (de)serialization of experiment, grid and generator settings.
// Every key is optional and falls back to the struct default; an unknown key
// or a value of the wrong type is a ConfigError naming the key path.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gda/csbm.hpp"
#include "gda/error.hpp"
#include "gda/trainer.hpp"

namespace gda {

using Json = nlohmann::ordered_json;

namespace detail {

class Reader {
public:
    Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError("config " + where() + " must be a JSON object");
    }

    /// Rejects keys outside `allowed`.
    void only(std::initializer_list<std::string_view> allowed) const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            bool ok = false;
            for (auto a : allowed) ok = ok || it.key() == a;
            if (!ok) throw ConfigError("unknown config key '" + key_path(it.key()) + "'");
        }
    }

    bool has(const char* key) const { return obj_.contains(key); }
    const Json& at(const char* key) const { return obj_.at(key); }
    std::string key_path(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

    void number(const char* key, double& out) const {
        if (!has(key)) return;
        const Json& v = obj_.at(key);
        if (!v.is_number()) throw ConfigError("config key '" + key_path(key) + "' must be a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ConfigError("config key '" + key_path(key) + "' must be finite");
    }

    template <class Int>
    void integer(const char* key, Int& out) const {
        if (!has(key)) return;
        const Json& v = obj_.at(key);
        if (!v.is_number_integer()) throw ConfigError("config key '" + key_path(key) + "' must be an integer");
        if constexpr (std::is_unsigned_v<Int>) {
            if (v.is_number_unsigned()) {
                out = static_cast<Int>(v.get<std::uint64_t>());
                return;
            }
            if (v.get<std::int64_t>() < 0) throw ConfigError("config key '" + key_path(key) + "' must be nonnegative");
            out = static_cast<Int>(v.get<std::int64_t>());
        } else {
            const auto x = v.get<std::int64_t>();
            if (x < std::numeric_limits<Int>::min() || x > std::numeric_limits<Int>::max())
                throw ConfigError("config key '" + key_path(key) + "' out of range");
            out = static_cast<Int>(x);
        }
    }

    void boolean(const char* key, bool& out) const {
        if (!has(key)) return;
        const Json& v = obj_.at(key);
        if (!v.is_boolean()) throw ConfigError("config key '" + key_path(key) + "' must be true or false");
        out = v.get<bool>();
    }

    std::string string(const char* key, std::string fallback) const {
        if (!has(key)) return fallback;
        const Json& v = obj_.at(key);
        if (!v.is_string()) throw ConfigError("config key '" + key_path(key) + "' must be a string");
        return v.get<std::string>();
    }

    void numbers(const char* key, std::vector<double>& out) const {
        if (!has(key)) return;
        const Json& v = obj_.at(key);
        if (!v.is_array()) throw ConfigError("config key '" + key_path(key) + "' must be an array of numbers");
        out.clear();
        for (const Json& e : v) {
            if (!e.is_number()) throw ConfigError("config key '" + key_path(key) + "' must be an array of numbers");
            out.push_back(e.get<double>());
        }
    }

    Reader child(const char* key) const { return Reader(obj_.at(key), key_path(key)); }

private:
    std::string where() const { return path_.empty() ? "root" : "'" + path_ + "'"; }

    const Json& obj_;
    std::string path_;
};

template <class Enum, std::size_t N>
Enum pick(const std::string& value, const std::pair<const char*, Enum> (&table)[N], const std::string& key) {
    std::string options;
    for (const auto& [name, e] : table) {
        if (value == name) return e;
        options += options.empty() ? name : std::string(", ") + name;
    }
    throw ConfigError("config key '" + key + "' must be one of " + options + " (got '" + value + "')");
}

template <class Enum, std::size_t N>
const char* name_of(Enum e, const std::pair<const char*, Enum> (&table)[N]) {
    for (const auto& [name, v] : table)
        if (v == e) return name;
    return "?";
}

inline constexpr std::pair<const char*, AlignKind> kAlignKinds[] = {
    {"none", AlignKind::None}, {"mmd", AlignKind::Mmd}, {"adversarial", AlignKind::Adversarial}};
inline constexpr std::pair<const char*, LambdaSchedule> kSchedules[] = {{"constant", LambdaSchedule::Constant},
                                                                       {"ramp", LambdaSchedule::Ramp}};
inline constexpr std::pair<const char*, UnsupKind> kUnsupKinds[] = {
    {"none", UnsupKind::None}, {"im", UnsupKind::Im}, {"ae", UnsupKind::Ae}, {"cl", UnsupKind::Cl}};
inline constexpr std::pair<const char*, Aggregator> kAggregators[] = {{"gcn", Aggregator::GcnSum},
                                                                     {"mean", Aggregator::Mean},
                                                                     {"max", Aggregator::Max},
                                                                     {"attention", Aggregator::Attention},
                                                                     {"gin", Aggregator::GinSum}};

inline Json parse_json(std::string_view text, std::string_view what) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
    }
}

}  // namespace detail

/// Reads an experiment object. With allow_grid, a top-level "grid" key is tolerated (and ignored here).
inline ExperimentConfig experiment_from_json(const Json& j, bool allow_grid = false) {
    using detail::Reader;
    ExperimentConfig cfg;
    Reader root(j, "");
    if (allow_grid)
        root.only({"encoder", "align", "unsup", "optim", "seed", "repeats", "grid"});
    else
        root.only({"encoder", "align", "unsup", "optim", "seed", "repeats"});
    if (root.has("encoder")) {
        Reader r = root.child("encoder");
        r.only({"aggregator", "hops", "hidden", "residual", "dropout"});
        cfg.encoder.aggregator = detail::pick(r.string("aggregator", "gcn"), detail::kAggregators,
                                              r.key_path("aggregator"));
        r.integer("hops", cfg.encoder.hops);
        r.integer("hidden", cfg.encoder.hidden);
        r.boolean("residual", cfg.encoder.residual);
        r.number("dropout", cfg.encoder.dropout);
    }
    if (root.has("align")) {
        Reader r = root.child("align");
        r.only({"kind", "alpha", "bandwidth_scales", "disc_hidden", "lambda_max", "lambda_schedule"});
        cfg.align.kind = detail::pick(r.string("kind", "none"), detail::kAlignKinds, r.key_path("kind"));
        r.number("alpha", cfg.align.alpha);
        r.numbers("bandwidth_scales", cfg.align.bandwidth_scales);
        r.integer("disc_hidden", cfg.align.disc_hidden);
        r.number("lambda_max", cfg.align.lambda_max);
        cfg.align.lambda_schedule =
            detail::pick(r.string("lambda_schedule", "ramp"), detail::kSchedules, r.key_path("lambda_schedule"));
    }
    if (root.has("unsup")) {
        Reader r = root.child("unsup");
        r.only({"kind", "beta", "decoder_dropout", "neg_ratio", "mask_prob", "temperature", "proj_dim"});
        cfg.unsup.kind = detail::pick(r.string("kind", "none"), detail::kUnsupKinds, r.key_path("kind"));
        r.number("beta", cfg.unsup.beta);
        r.number("decoder_dropout", cfg.unsup.decoder_dropout);
        r.integer("neg_ratio", cfg.unsup.neg_ratio);
        r.number("mask_prob", cfg.unsup.mask_prob);
        r.number("temperature", cfg.unsup.temperature);
        r.integer("proj_dim", cfg.unsup.proj_dim);
    }
    if (root.has("optim")) {
        Reader r = root.child("optim");
        r.only({"lr", "weight_decay", "momentum", "epochs"});
        r.number("lr", cfg.optim.lr);
        r.number("weight_decay", cfg.optim.weight_decay);
        r.number("momentum", cfg.optim.momentum);
        r.integer("epochs", cfg.optim.epochs);
    }
    root.integer("seed", cfg.seed);
    root.integer("repeats", cfg.repeats);
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_experiment(std::string_view text, bool allow_grid = false) {
    return experiment_from_json(detail::parse_json(text, "experiment config"), allow_grid);
}

/// Full JSON form of a config with every field spelled out.
inline Json to_json(const ExperimentConfig& c) {
    Json j;
    j["encoder"] = {{"aggregator", detail::name_of(c.encoder.aggregator, detail::kAggregators)},
                    {"hops", c.encoder.hops},
                    {"hidden", c.encoder.hidden},
                    {"residual", c.encoder.residual},
                    {"dropout", c.encoder.dropout}};
    j["align"] = {{"kind", detail::name_of(c.align.kind, detail::kAlignKinds)},
                  {"alpha", c.align.alpha},
                  {"bandwidth_scales", c.align.bandwidth_scales},
                  {"disc_hidden", c.align.disc_hidden},
                  {"lambda_max", c.align.lambda_max},
                  {"lambda_schedule", detail::name_of(c.align.lambda_schedule, detail::kSchedules)}};
    j["unsup"] = {{"kind", detail::name_of(c.unsup.kind, detail::kUnsupKinds)},
                  {"beta", c.unsup.beta},
                  {"decoder_dropout", c.unsup.decoder_dropout},
                  {"neg_ratio", c.unsup.neg_ratio},
                  {"mask_prob", c.unsup.mask_prob},
                  {"temperature", c.unsup.temperature},
                  {"proj_dim", c.unsup.proj_dim}};
    j["optim"] = {{"lr", c.optim.lr},
                  {"weight_decay", c.optim.weight_decay},
                  {"momentum", c.optim.momentum},
                  {"epochs", c.optim.epochs}};
    j["seed"] = c.seed;
    j["repeats"] = c.repeats;
    return j;
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// One searched field: a dotted key path ("optim.lr") and its candidate values.
struct GridAxis {
    std::string key;
    std::vector<Json> values;
};

using Grid = std::vector<GridAxis>;

/// Copy of base with one dotted key replaced; the key must name an existing field.
inline ExperimentConfig with_override(const ExperimentConfig& base, const std::string& key, const Json& value) {
    Json j = to_json(base);
    Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown grid key '" + key + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("grid key '" + key + "' names a section, not a field");
    *node = value;
    return experiment_from_json(j);
}

/// The "grid" object of a grid config, axes in file order.
inline Grid grid_from_json(const Json& j) {
    if (!j.contains("grid")) throw ConfigError("grid config has no 'grid' object");
    const Json& g = j.at("grid");
    if (!g.is_object() || g.empty()) throw ConfigError("config key 'grid' must be a nonempty object");
    Grid grid;
    const ExperimentConfig probe = experiment_from_json(j, true);
    for (auto it = g.begin(); it != g.end(); ++it) {
        if (!it.value().is_array() || it.value().empty())
            throw ConfigError("config key 'grid." + it.key() + "' must be a nonempty array");
        GridAxis axis{it.key(), {}};
        for (const Json& v : it.value()) {
            with_override(probe, axis.key, v);
            axis.values.push_back(v);
        }
        grid.push_back(std::move(axis));
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Synthetic pair settings
// ---------------------------------------------------------------------------

inline CsbmParams csbm_from_json(const Json& j, const std::string& path) {
    detail::Reader r(j, path);
    r.only({"n_per_class", "p_intra", "p_inter", "class_means", "sigma", "class_priors", "seed"});
    CsbmParams p;
    r.integer("n_per_class", p.n_per_class);
    r.number("p_intra", p.p_intra);
    r.number("p_inter", p.p_inter);
    r.number("sigma", p.sigma);
    r.numbers("class_priors", p.class_priors);
    r.integer("seed", p.seed);
    if (!r.has("class_means")) throw ConfigError("config key '" + r.key_path("class_means") + "' is required");
    const Json& m = r.at("class_means");
    const std::string mk = r.key_path("class_means");
    if (!m.is_array() || m.empty() || !m.front().is_array() || m.front().empty())
        throw ConfigError("config key '" + mk + "' must be a nonempty array of equal-length number arrays");
    p.class_means = Matrix(m.size(), m.front().size());
    for (std::size_t k = 0; k < m.size(); ++k) {
        if (!m[k].is_array() || m[k].size() != p.class_means.cols)
            throw ConfigError("config key '" + mk + "' rows must have equal length");
        for (std::size_t f = 0; f < p.class_means.cols; ++f) {
            if (!m[k][f].is_number()) throw ConfigError("config key '" + mk + "' must contain numbers");
            p.class_means(k, f) = m[k][f].get<double>();
        }
    }
    return p;
}

struct SynthConfig {
    CsbmParams source;
    CsbmParams target;
};

inline SynthConfig parse_synth(std::string_view text) {
    const Json j = detail::parse_json(text, "synth config");
    detail::Reader r(j, "");
    r.only({"source", "target"});
    if (!r.has("source") || !r.has("target")) throw ConfigError("synth config needs 'source' and 'target' objects");
    return {csbm_from_json(j.at("source"), "source"), csbm_from_json(j.at("target"), "target")};
}

}  // namespace gda
