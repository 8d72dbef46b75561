#pragma once

// Dataset directory format:
//   meta.json     {"num_nodes": int, "num_features": int, "num_classes": int, "directed": bool}
//   edges.tsv     one "src<TAB>dst" pair per line, 0-indexed, no header
//   features.csv  num_nodes lines of num_features comma-separated floats
//   labels.csv    num_nodes lines, one integer in {-1, 0..C-1}

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gda/error.hpp"
#include "gda/graph.hpp"
#include "gda/io.hpp"

namespace gda {

namespace detail {

inline std::string where(const std::filesystem::path& file, std::size_t line) {
    return file.filename().string() + ":" + std::to_string(line);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace detail

inline SparseGraph load_graph(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const char* name : {"meta.json", "edges.tsv", "features.csv", "labels.csv"})
        if (!fs::exists(dir / name)) throw IoError("missing file " + (dir / name).string());

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(io::read_file(dir / "meta.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("meta.json: " + std::string(e.what()));
    }
    std::size_t n = 0, d = 0;
    int num_classes = 0;
    bool directed = false;
    try {
        const long long nn = meta.at("num_nodes").get<long long>();
        const long long dd = meta.at("num_features").get<long long>();
        num_classes = meta.at("num_classes").get<int>();
        directed = meta.at("directed").get<bool>();
        if (nn < 0 || dd < 0 || num_classes < 0) throw ValidationError("meta.json: negative size");
        n = static_cast<std::size_t>(nn);
        d = static_cast<std::size_t>(dd);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("meta.json: " + std::string(e.what()));
    }

    const fs::path edge_file = dir / "edges.tsv";
    const std::string edge_text = io::read_file(edge_file);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    {
        const auto lines = io::split_lines(edge_text);
        for (std::size_t ln = 0; ln < lines.size(); ++ln) {
            std::string_view line = detail::trim(lines[ln]);
            if (line.empty()) continue;
            const std::size_t sep = line.find_first_of(" \t");
            long long u = 0, v = 0;
            if (sep == std::string_view::npos || !detail::parse_number(line.substr(0, sep), u) ||
                !detail::parse_number(line.substr(sep + 1), v))
                throw ValidationError(detail::where(edge_file, ln + 1) + ": expected \"src<TAB>dst\"");
            if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n)
                throw ValidationError(detail::where(edge_file, ln + 1) + ": node index out of range [0, " +
                                      std::to_string(n) + ")");
            edges.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
        }
    }

    const fs::path feat_file = dir / "features.csv";
    const std::string feat_text = io::read_file(feat_file);
    Matrix x(n, d);
    {
        const auto lines = io::split_lines(feat_text);
        if (lines.size() != n)
            throw ValidationError(feat_file.filename().string() + ": expected " + std::to_string(n) + " rows, found " +
                                  std::to_string(lines.size()));
        for (std::size_t i = 0; i < n; ++i) {
            std::string_view line = lines[i];
            std::size_t col = 0;
            while (d > 0) {
                const std::size_t comma = line.find(',');
                const std::string_view field = line.substr(0, comma);
                double v = 0.0;
                if (col >= d || !detail::parse_number(field, v))
                    throw ValidationError(detail::where(feat_file, i + 1) + ": malformed value in column " +
                                          std::to_string(col + 1));
                if (!std::isfinite(v))
                    throw ValidationError(detail::where(feat_file, i + 1) + ": non-finite value in column " +
                                          std::to_string(col + 1));
                x(i, col++) = v;
                if (comma == std::string_view::npos) break;
                line.remove_prefix(comma + 1);
            }
            if (col != d)
                throw ValidationError(detail::where(feat_file, i + 1) + ": expected " + std::to_string(d) +
                                      " values, found " + std::to_string(col));
        }
    }

    const fs::path label_file = dir / "labels.csv";
    const std::string label_text = io::read_file(label_file);
    std::vector<int> y(n);
    {
        const auto lines = io::split_lines(label_text);
        if (lines.size() != n)
            throw ValidationError(label_file.filename().string() + ": expected " + std::to_string(n) + " rows, found " +
                                  std::to_string(lines.size()));
        for (std::size_t i = 0; i < n; ++i) {
            int v = 0;
            if (!detail::parse_number(lines[i], v))
                throw ValidationError(detail::where(label_file, i + 1) + ": malformed label");
            if (v < -1 || v >= num_classes)
                throw ValidationError(detail::where(label_file, i + 1) + ": label " + std::to_string(v) +
                                      " outside {-1, 0.." + std::to_string(num_classes - 1) + "}");
            y[i] = v;
        }
    }
    return SparseGraph::from_edges(n, edges, directed, std::move(x), std::move(y), num_classes);
}

/// Writes the canonical form: undirected edges once with src <= dst, rows in CSR order.
inline void save_graph(const SparseGraph& g, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string meta = "{\"num_nodes\": " + std::to_string(g.n) + ", \"num_features\": " + std::to_string(g.d()) +
                       ", \"num_classes\": " + std::to_string(g.num_classes) +
                       ", \"directed\": " + (g.directed ? "true" : "false") + "}\n";
    std::string edges;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::uint32_t j : g.neighbors(i)) {
            if (!g.directed && j < i) continue;
            edges += std::to_string(i);
            edges += '\t';
            edges += std::to_string(j);
            edges += '\n';
        }
    std::string feats;
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t c = 0; c < g.d(); ++c) {
            if (c) feats += ',';
            feats += io::format_shortest(g.features(i, c));
        }
        feats += '\n';
    }
    std::string labels;
    for (int y : g.labels) {
        labels += std::to_string(y);
        labels += '\n';
    }
    io::write_file_atomic(dir / "edges.tsv", edges);
    io::write_file_atomic(dir / "features.csv", feats);
    io::write_file_atomic(dir / "labels.csv", labels);
    io::write_file_atomic(dir / "meta.json", meta);
}

}  // namespace gda
