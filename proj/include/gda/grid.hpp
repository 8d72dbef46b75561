#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gda/config.hpp"
#include "gda/trainer.hpp"

namespace gda {

/// Outcome of one (cell, seed) run. A diverged run keeps its error text instead of metrics.
struct SeedRun {
    std::uint64_t seed = 0;
    std::optional<RunResult> result;
    std::string failure;
};

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single value
};

struct GridRow {
    std::size_t cell = 0;        // index in Cartesian enumeration order
    std::string config_id;       // "key=value;key=value" in axis order
    ExperimentConfig config;
    std::vector<SeedRun> runs;
    bool failed = false;
    Summary micro_f1, macro_f1;
    std::optional<Summary> auroc;
};

inline Summary summarize(const std::vector<double>& v) {
    Summary s;
    if (v.empty()) return s;
    double total = 0.0;
    for (double x : v) total += x;
    s.mean = total / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

/// Every combination of grid values, the last axis varying fastest.
inline std::vector<std::pair<std::string, ExperimentConfig>> expand_grid(const ExperimentConfig& base,
                                                                        const Grid& grid) {
    std::vector<std::pair<std::string, ExperimentConfig>> cells{{"", base}};
    for (const GridAxis& axis : grid) {
        if (axis.values.empty()) throw ConfigError("grid axis '" + axis.key + "' has no values");
        std::vector<std::pair<std::string, ExperimentConfig>> next;
        for (const auto& [id, cfg] : cells)
            for (const Json& v : axis.values)
                next.emplace_back(id + (id.empty() ? "" : ";") + axis.key + "=" + v.dump(),
                                  with_override(cfg, axis.key, v));
        cells = std::move(next);
    }
    return cells;
}

/// Trains every cell for every seed on up to `jobs` threads. Rows come back
/// sorted by mean target Micro-F1 (descending); equal means keep enumeration
/// order; failed cells go last.
inline std::vector<GridRow> grid_search(const DomainPair& pair, const ExperimentConfig& base, const Grid& grid,
                                        const std::vector<std::uint64_t>& seeds, unsigned jobs = 1) {
    if (seeds.empty()) throw ConfigError("grid_search: no seeds");
    pair.validate();
    const auto cells = expand_grid(base, grid);
    std::vector<GridRow> rows(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        rows[c].cell = c;
        rows[c].config_id = cells[c].first.empty() ? "base" : cells[c].first;
        rows[c].config = cells[c].second;
        rows[c].runs.resize(seeds.size());
    }

    const std::size_t tasks = cells.size() * seeds.size();
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(tasks);
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks;) {
            const std::size_t c = t / seeds.size(), s = t % seeds.size();
            SeedRun& run = rows[c].runs[s];
            run.seed = seeds[s];
            ExperimentConfig cfg = rows[c].config;
            cfg.seed = seeds[s];
            try {
                run.result = train(pair, cfg).result;
            } catch (const DivergedRun& e) {
                run.failure = e.what();
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tasks)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (GridRow& row : rows) {
        std::vector<double> mi, ma, au;
        for (const SeedRun& r : row.runs) {
            if (!r.result) {
                row.failed = true;
                continue;
            }
            mi.push_back(r.result->metrics.micro_f1);
            ma.push_back(r.result->metrics.macro_f1);
            if (r.result->metrics.auroc) au.push_back(*r.result->metrics.auroc);
        }
        row.micro_f1 = summarize(mi);
        row.macro_f1 = summarize(ma);
        if (!au.empty() && au.size() == mi.size()) row.auroc = summarize(au);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
        if (a.failed != b.failed) return !a.failed;
        return a.micro_f1.mean > b.micro_f1.mean;
    });
    return rows;
}

}  // namespace gda
