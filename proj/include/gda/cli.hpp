#pragma once

// Command-line front end: `gda <shift|train|grid|eval|synth> [flags]`.
// Exit codes: 0 success, 2 bad input or configuration, 3 diverged training run,
// 1 anything unexpected.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gda/config.hpp"
#include "gda/csbm.hpp"
#include "gda/error.hpp"
#include "gda/graph_io.hpp"
#include "gda/grid.hpp"
#include "gda/io.hpp"
#include "gda/shift.hpp"
#include "gda/snapshot.hpp"
#include "gda/trainer.hpp"

namespace gda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnexpected = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDiverged = 3;

namespace fs = std::filesystem;

struct Options {
    std::string config, source, target, out, params;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    bool timing = false;
};

namespace detail {

inline std::string dir_name(const std::string& p) {
    fs::path path = fs::path(p).lexically_normal();
    if (path.filename().empty()) path = path.parent_path();
    return path.filename().string();
}

inline std::string task_name(const Options& o) { return dir_name(o.source) + "->" + dir_name(o.target); }

inline std::string config_name(const Options& o) { return fs::path(o.config).stem().string(); }

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

inline std::string metric(double v) { return io::format_fixed(v, 4); }

inline unsigned resolve_jobs(const Options& o) {
    if (o.jobs) {
        if (*o.jobs == 0) throw ConfigError("--jobs must be at least 1");
        return *o.jobs;
    }
    if (const char* env = std::getenv("GDA_JOBS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) throw ConfigError("GDA_JOBS must be a positive integer (got '" + std::string(env) + "')");
        return static_cast<unsigned>(v);
    }
    return 1;
}

inline ExperimentConfig load_experiment(const Options& o, bool allow_grid) {
    ExperimentConfig cfg = parse_experiment(io::read_file(o.config), allow_grid);
    if (o.seed) cfg.seed = *o.seed;
    return cfg;
}

inline DomainPair load_pair(const Options& o) {
    return DomainPair::make(load_graph(o.source), load_graph(o.target));
}

inline const char* kRunHeader = "config_id,task,seed,micro_f1,macro_f1,auroc,runtime_s,status\n";

inline std::string run_row(const std::string& config_id, const std::string& task, std::uint64_t seed,
                           const std::optional<Metrics>& m, std::optional<double> runtime, const std::string& status) {
    std::string row = csv_field(config_id) + "," + csv_field(task) + "," + std::to_string(seed) + ",";
    if (m) {
        row += metric(m->micro_f1) + "," + metric(m->macro_f1) + "," + (m->auroc ? metric(*m->auroc) : "");
    } else {
        row += ",,";
    }
    row += "," + (runtime ? io::format_fixed(*runtime, 3) : std::string()) + "," + status + "\n";
    return row;
}

inline std::string seed_prefix(std::uint64_t seed) { return "seed=" + std::to_string(seed) + "/"; }

}  // namespace detail

inline int cmd_shift(const Options& o, std::ostream& out) {
    const DomainPair pair = detail::load_pair(o);
    const ShiftReport r = shift_report(pair);
    io::write_file_atomic(o.out, to_json(r));
    out << "feature_shift=" << io::format_fixed(r.feature_shift, 6)
        << " structure_shift=" << io::format_fixed(r.structure_shift, 6)
        << " label_shift=" << io::format_fixed(r.label_shift, 6) << "\n";
    return kExitOk;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    const ExperimentConfig cfg = detail::load_experiment(o, false);
    const DomainPair pair = detail::load_pair(o);
    const std::string id = detail::config_name(o), task = detail::task_name(o);
    std::string csv = detail::kRunHeader;
    std::vector<SnapshotEntry> snapshot;
    bool diverged = false;
    for (int r = 0; r < cfg.repeats; ++r) {
        ExperimentConfig run = cfg;
        run.seed = cfg.seed + static_cast<std::uint64_t>(r);
        try {
            TrainOutput t = train(pair, run);
            csv += detail::run_row(id, task, run.seed, t.result.metrics,
                                   o.timing ? std::optional<double>(t.result.runtime_seconds) : std::nullopt, "ok");
            for (auto& e : model_entries(t.model, detail::seed_prefix(run.seed))) snapshot.push_back(std::move(e));
            out << "seed " << run.seed << ": micro_f1=" << detail::metric(t.result.metrics.micro_f1)
                << " macro_f1=" << detail::metric(t.result.metrics.macro_f1) << "\n";
        } catch (const DivergedRun& e) {
            diverged = true;
            csv += detail::run_row(id, task, run.seed, std::nullopt, std::nullopt, "diverged");
            err << "seed " << run.seed << ": " << e.what() << "\n";
        }
    }
    io::write_file_atomic(o.out, csv);
    save_snapshot(o.out + ".params", snapshot);
    return diverged ? kExitDiverged : kExitOk;
}

inline int cmd_grid(const Options& o, std::ostream& out, std::ostream& err) {
    const Json j = gda::detail::parse_json(io::read_file(o.config), "grid config");
    ExperimentConfig base = experiment_from_json(j, true);
    if (o.seed) base.seed = *o.seed;
    const Grid grid = grid_from_json(j);
    const DomainPair pair = detail::load_pair(o);
    std::vector<std::uint64_t> seeds;
    for (int r = 0; r < base.repeats; ++r) seeds.push_back(base.seed + static_cast<std::uint64_t>(r));
    const auto rows = grid_search(pair, base, grid, seeds, detail::resolve_jobs(o));

    const std::string task = detail::task_name(o);
    std::string csv =
        "config_id,task,seeds,micro_f1_mean,micro_f1_std,macro_f1_mean,macro_f1_std,auroc_mean,auroc_std,status\n";
    bool diverged = false;
    for (const GridRow& row : rows) {
        std::size_t ok = 0;
        for (const auto& r : row.runs) ok += r.result ? 1 : 0;
        csv += detail::csv_field(row.config_id) + "," + detail::csv_field(task) + "," + std::to_string(ok) + ",";
        if (ok > 0)
            csv += detail::metric(row.micro_f1.mean) + "," + detail::metric(row.micro_f1.std) + "," +
                   detail::metric(row.macro_f1.mean) + "," + detail::metric(row.macro_f1.std) + ",";
        else
            csv += ",,,,";
        csv += row.auroc ? detail::metric(row.auroc->mean) + "," + detail::metric(row.auroc->std) : std::string(",");
        csv += row.failed ? ",diverged\n" : ",ok\n";
        if (row.failed) {
            diverged = true;
            for (const auto& r : row.runs)
                if (!r.result) err << row.config_id << " seed " << r.seed << ": " << r.failure << "\n";
        }
    }
    io::write_file_atomic(o.out, csv);
    out << rows.size() << " grid cells x " << seeds.size() << " seeds\n";
    return diverged ? kExitDiverged : kExitOk;
}

/// Scores every model stored in a params file (or only --seed) on the target's labels.
inline int cmd_eval(const Options& o, std::ostream& out) {
    const ExperimentConfig cfg = detail::load_experiment(o, false);
    const DomainPair pair = detail::load_pair(o);
    const auto entries = load_snapshot(o.params);
    std::vector<std::uint64_t> seeds;
    for (const auto& e : entries) {
        const auto slash = e.name.find('/');
        if (e.name.rfind("seed=", 0) != 0 || slash == std::string::npos)
            throw ValidationError("parameter entry '" + e.name + "' has no seed prefix");
        const std::uint64_t s = std::stoull(e.name.substr(5, slash - 5));
        if (std::find(seeds.begin(), seeds.end(), s) == seeds.end()) seeds.push_back(s);
    }
    if (o.seed) {
        if (std::find(seeds.begin(), seeds.end(), *o.seed) == seeds.end())
            throw ValidationError("no parameters stored for seed " + std::to_string(*o.seed));
        seeds = {*o.seed};
    }
    std::string csv = detail::kRunHeader;
    for (std::uint64_t s : seeds) {
        const Model m = restore_model(entries, cfg, pair.target, detail::seed_prefix(s));
        const Metrics met = evaluate_target(m, pair);
        csv += detail::run_row(detail::config_name(o), detail::task_name(o), s, met, std::nullopt, "ok");
        out << "seed " << s << ": micro_f1=" << detail::metric(met.micro_f1) << "\n";
    }
    io::write_file_atomic(o.out, csv);
    return kExitOk;
}

inline int cmd_synth(const Options& o, std::ostream& out) {
    SynthConfig sc = parse_synth(io::read_file(o.config));
    if (o.seed) sc.source.seed = sc.target.seed = *o.seed;
    const SparseGraph s = gen_csbm(sc.source);
    const SparseGraph t = gen_csbm(sc.target);
    save_graph(s, o.source);
    save_graph(t, o.target);
    const std::string report = to_json(shift_report(s, t));
    if (!o.out.empty()) io::write_file_atomic(o.out, report);
    out << report;
    return kExitOk;
}

/// Parses argv and runs one subcommand; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Graph domain adaptation toolkit"};
    app.require_subcommand(1);
    Options o;

    auto dataset_flags = [&](CLI::App* sub, bool inputs_must_exist) {
        auto* s = sub->add_option("--source", o.source, "source dataset directory")->required();
        auto* t = sub->add_option("--target", o.target, "target dataset directory")->required();
        if (inputs_must_exist) {
            s->check(CLI::ExistingDirectory);
            t->check(CLI::ExistingDirectory);
        }
    };
    auto seed_flag = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "override the config seed");
    };

    auto* shift = app.add_subcommand("shift", "measure feature, structure and label shift between two datasets");
    dataset_flags(shift, true);
    shift->add_option("--out", o.out, "shift report JSON")->required();

    auto* trn = app.add_subcommand("train", "train per seed; write results CSV and <out>.params");
    trn->add_option("--config", o.config, "experiment config JSON")->required()->check(CLI::ExistingFile);
    dataset_flags(trn, true);
    trn->add_option("--out", o.out, "results CSV")->required();
    seed_flag(trn);
    trn->add_flag("--timing", o.timing, "fill the runtime_s column");

    auto* grid = app.add_subcommand("grid", "grid search; write a ranked CSV");
    grid->add_option("--config", o.config, "grid config JSON")->required()->check(CLI::ExistingFile);
    dataset_flags(grid, true);
    grid->add_option("--out", o.out, "ranked results CSV")->required();
    seed_flag(grid);
    grid->add_option("--jobs", o.jobs, "worker threads (default: $GDA_JOBS or 1)");

    auto* ev = app.add_subcommand("eval", "score saved parameters on the target labels");
    ev->add_option("--config", o.config, "experiment config JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--params", o.params, "parameter snapshot written by train")->required()->check(CLI::ExistingFile);
    dataset_flags(ev, true);
    ev->add_option("--out", o.out, "results CSV")->required();
    seed_flag(ev);

    auto* synth = app.add_subcommand("synth", "generate a CSBM source/target pair");
    synth->add_option("--config", o.config, "generator config JSON")->required()->check(CLI::ExistingFile);
    dataset_flags(synth, false);
    synth->add_option("--out", o.out, "optional shift report JSON");
    seed_flag(synth);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (shift->parsed()) return cmd_shift(o, out);
        if (trn->parsed()) return cmd_train(o, out, err);
        if (grid->parsed()) return cmd_grid(o, out, err);
        if (ev->parsed()) return cmd_eval(o, out);
        if (synth->parsed()) return cmd_synth(o, out);
    } catch (const DivergedRun& e) {
        err << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUnexpected;
    }
    return kExitUnexpected;
}

}  // namespace gda::cli
