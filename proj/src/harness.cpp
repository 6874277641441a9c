#include "qdtune/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "qdtune/error.hpp"
#include "qdtune/preprocess.hpp"

namespace qdtune {

void SuccessRegions::validate() const {
    if (!(theta_close < theta_ideal) || !(theta_close >= 0.0) || !(theta_ideal <= 1.0))
        throw ConfigError("regions: need 0 <= theta_close < theta_ideal <= 1");
}

double success_weight(RunClass c) {
    switch (c) {
        case RunClass::Ideal: return 1.0;
        case RunClass::Close: return 0.5;
        case RunClass::Fail: return 0.0;
    }
    return 0.0;
}

std::string_view to_string(RunClass c) {
    switch (c) {
        case RunClass::Ideal: return "ideal";
        case RunClass::Close: return "close";
        case RunClass::Fail: return "fail";
    }
    return "?";
}

RunClass run_class_from_string(std::string_view s) {
    if (s == "ideal") return RunClass::Ideal;
    if (s == "close") return RunClass::Close;
    if (s == "fail") return RunClass::Fail;
    throw ParseError("unknown run class \"" + std::string(s) + "\"");
}

double success_rate(std::span<const RunClass> runs) {
    if (runs.empty()) throw ConfigError("success_rate: no runs");
    double total = 0.0;
    for (RunClass c : runs) total += success_weight(c);
    return total / static_cast<double>(runs.size());
}

RunClass score_run(const TuningRun& run, const MeasurementSource& source, const RunSettings& settings) {
    settings.regions.validate();
    const auto center = run.final_center();
    if (!center) return RunClass::Fail;
    const AcquireResult acquired =
        acquire(source, *center, settings.scan.span, settings.scan.resolution, settings.sandbox);
    const auto* window = std::get_if<ScanWindow>(&acquired);
    if (!window) return RunClass::Fail;
    if (!window->labels) throw ConfigError("score_run: source has no ground-truth labels");
    const double p_dd = oracle_probability(*window->labels).p_dd;
    if (p_dd >= settings.regions.theta_ideal) return RunClass::Ideal;
    if (p_dd >= settings.regions.theta_close) return RunClass::Close;
    return RunClass::Fail;
}

namespace {

void require_labels(const MeasurementSource& source, Voltage2 at, const RunSettings& settings) {
    const AcquireResult r = acquire(source, at, settings.scan.span, settings.scan.resolution, settings.sandbox);
    if (const auto* w = std::get_if<ScanWindow>(&r); w && !w->labels)
        throw ConfigError("scoring: source has no ground-truth labels");
}

}  // namespace

IterationSummary summarize_iterations(std::span<const int> counts) {
    IterationSummary s;
    s.count = counts.size();
    if (counts.empty()) return s;
    double sum = 0.0;
    for (int c : counts) sum += c;
    s.mean = sum / static_cast<double>(counts.size());
    if (counts.size() > 1) {
        double ss = 0.0;
        for (int c : counts) ss += (c - s.mean) * (c - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(counts.size() - 1));
    }
    return s;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::size_t failed_index = n;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                // Report the lowest failing index so the error is reproducible.
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

double native_pitch(const MeasurementSource& source, const ScanSettings& scan) {
    if (const auto* p = std::get_if<PremeasuredScan>(&source)) return p->grid.resolution;
    return scan.resolution;
}

ExperimentReport neighborhood_experiment(const MeasurementSource& source,
                                         const StateClassifier& classifier, Voltage2 point,
                                         const RunSettings& settings, int radius_px, int workers) {
    if (radius_px < 0) throw ConfigError("neighborhood: radius must be >= 0");
    settings.sandbox.validate();
    const double pitch = native_pitch(source, settings.scan);
    const int side = 2 * radius_px + 1;
    std::vector<Voltage2> starts;
    for (int j = -radius_px; j <= radius_px; ++j)
        for (int i = -radius_px; i <= radius_px; ++i)
            starts.push_back({point.v1 + i * pitch, point.v2 + j * pitch});
    for (const auto& s : starts)
        if (!settings.sandbox.contains(s.v1, s.v2))
            throw DomainError("neighborhood: start (" + std::to_string(s.v1) + ", " +
                              std::to_string(s.v2) + ") lies outside the sandbox");

    require_labels(source, point, settings);

    ExperimentReport report;
    report.point = point;
    report.policy = policy_name(settings.policy);
    report.runs.resize(static_cast<std::size_t>(side * side));
    parallel_for(starts.size(), workers, [&](std::size_t i) {
        TuningRun run = autotune(source, classifier, starts[i], settings.scan, settings.fitness,
                                 settings.policy, settings.termination, settings.sandbox);
        const RunClass cls = score_run(run, source, settings);
        report.runs[i] = {std::move(run), cls};
    });

    std::vector<RunClass> classes;
    std::vector<int> iterations;
    for (const auto& r : report.runs) {
        classes.push_back(r.cls);
        iterations.push_back(r.run.iteration_count);
        ++report.counts[static_cast<std::size_t>(r.cls)];
    }
    report.success = success_rate(classes);
    report.iterations = summarize_iterations(iterations);
    return report;
}

std::vector<double> heatmap_axis(Interval extent, const HeatmapConfig& config) {
    if (!(config.grid_step > 0.0) || !(config.margin >= 0.0))
        throw ConfigError("heatmap: grid_step must be > 0 and margin >= 0");
    std::vector<double> axis;
    const double first = extent.lower + config.margin;
    const double last = extent.upper - config.margin;
    for (int k = 0;; ++k) {
        const double v = first + k * config.grid_step;
        if (v > last + 1e-9) break;
        axis.push_back(v);
    }
    return axis;
}

Heatmap heatmap(const MeasurementSource& source, const StateClassifier& classifier,
                const RunSettings& settings, const HeatmapConfig& config, Interval v1_extent,
                Interval v2_extent, int workers) {
    Heatmap map;
    map.policy = policy_name(settings.policy);
    map.v1_starts = heatmap_axis(v1_extent, config);
    map.v2_starts = heatmap_axis(v2_extent, config);
    const std::size_t n1 = map.v1_starts.size();
    const std::size_t n = n1 * map.v2_starts.size();
    map.weights.assign(n, 0.0);
    map.iterations.assign(n, 0);
    if (n > 0) require_labels(source, {map.v1_starts.front(), map.v2_starts.front()}, settings);
    parallel_for(n, workers, [&](std::size_t i) {
        const Voltage2 start{map.v1_starts[i % n1], map.v2_starts[i / n1]};
        const TuningRun run = autotune(source, classifier, start, settings.scan, settings.fitness,
                                       settings.policy, settings.termination, settings.sandbox);
        map.weights[i] = success_weight(score_run(run, source, settings));
        map.iterations[i] = run.iteration_count;
    });
    return map;
}

Heatmap heatmap(const PremeasuredScan& scan, const StateClassifier& classifier,
                const RunSettings& settings, const HeatmapConfig& config, int workers) {
    const double half = 0.5 * scan.grid.resolution;
    const Interval v1{scan.grid.v1_axis.front() - half, scan.grid.v1_axis.back() + half};
    const Interval v2{scan.grid.v2_axis.front() - half, scan.grid.v2_axis.back() + half};
    return heatmap(MeasurementSource{scan}, classifier, settings, config, v1, v2, workers);
}

LandscapeMap fitness_landscape(const PremeasuredScan& scan, const StateClassifier& classifier,
                               std::size_t window_px, const FitnessConfig& fitness_config, int workers) {
    scan.grid.validate();
    fitness_config.validate();
    const std::size_t rows = scan.grid.rows();
    const std::size_t cols = scan.grid.cols();
    if (window_px == 0 || window_px > rows || window_px > cols)
        throw ShapeError("landscape: window of " + std::to_string(window_px) +
                         " px does not fit in the " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " scan");
    LandscapeMap map;
    map.rows = rows - window_px + 1;
    map.cols = cols - window_px + 1;
    for (std::size_t c = 0; c < map.cols; ++c)
        map.v1_centers.push_back(0.5 * (scan.grid.v1_axis[c] + scan.grid.v1_axis[c + window_px - 1]));
    for (std::size_t r = 0; r < map.rows; ++r)
        map.v2_centers.push_back(0.5 * (scan.grid.v2_axis[r] + scan.grid.v2_axis[r + window_px - 1]));
    map.values.assign(map.rows * map.cols, 0.0);
    parallel_for(map.rows, workers, [&](std::size_t r) {
        for (std::size_t c = 0; c < map.cols; ++c) {
            const ScanWindow w = crop(scan, r, c, window_px, window_px);
            const ProbabilityVector p =
                classifier.classify(process(w.grid), w.labels ? &*w.labels : nullptr);
            map.values[r * map.cols + c] = fitness(p, fitness_config);
        }
    });
    return map;
}

IterationTable iteration_stats(std::span<const ExperimentReport> reports) {
    if (reports.empty()) throw ConfigError("iteration_stats: no reports");
    IterationTable table;
    struct Acc {
        std::size_t n = 0;
        double sum = 0.0;
        double weighted_var = 0.0;
        std::size_t dof = 0;
    };
    std::vector<Acc> acc;
    for (const auto& r : reports) {
        table.rows.push_back({r.point, r.policy, r.iterations});
        auto it = std::find_if(table.pooled.begin(), table.pooled.end(),
                               [&](const PooledIterations& p) { return p.policy == r.policy; });
        if (it == table.pooled.end()) {
            table.pooled.push_back({r.policy});
            acc.emplace_back();
            it = table.pooled.end() - 1;
        }
        Acc& a = acc[static_cast<std::size_t>(it - table.pooled.begin())];
        const std::size_t n = r.iterations.count;
        a.n += n;
        a.sum += r.iterations.mean * static_cast<double>(n);
        if (n > 1) {
            a.weighted_var += static_cast<double>(n - 1) * r.iterations.sd * r.iterations.sd;
            a.dof += n - 1;
        }
    }
    for (std::size_t i = 0; i < table.pooled.size(); ++i) {
        table.pooled[i].count = acc[i].n;
        table.pooled[i].mean = acc[i].n ? acc[i].sum / static_cast<double>(acc[i].n) : 0.0;
        table.pooled[i].pooled_sd = acc[i].dof ? std::sqrt(acc[i].weighted_var / static_cast<double>(acc[i].dof)) : 0.0;
    }
    return table;
}

namespace {

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

}  // namespace

std::string reports_to_csv(std::span<const ExperimentReport> reports) {
    std::string out = "v1,v2,policy,runs,ideal,close,fail,success_rate,mean_iterations,sd_iterations\n";
    for (const auto& r : reports)
        out += fmt("%.17g,%.17g,%s,%zu,%zu,%zu,%zu,%.17g,%.17g,%.17g\n", r.point.v1, r.point.v2,
                   r.policy.c_str(), r.runs.size(), r.counts[0], r.counts[1], r.counts[2], r.success,
                   r.iterations.mean, r.iterations.sd);
    return out;
}

std::string iteration_table_to_csv(const IterationTable& table) {
    std::string out = "v1,v2,policy,runs,mean_iterations,sd_iterations\n";
    for (const auto& row : table.rows)
        out += fmt("%.17g,%.17g,%s,%zu,%.17g,%.17g\n", row.point.v1, row.point.v2, row.policy.c_str(),
                   row.summary.count, row.summary.mean, row.summary.sd);
    for (const auto& p : table.pooled)
        out += fmt("pooled,pooled,%s,%zu,%.17g,%.17g\n", p.policy.c_str(), p.count, p.mean, p.pooled_sd);
    return out;
}

std::string summary_text(std::span<const ExperimentReport> reports) {
    std::string out;
    for (const auto& r : reports)
        out += fmt("(%g, %g) %-10s P = %5.1f %%  ideal %zu  close %zu  fail %zu  iterations %.1f (%.1f)\n",
                   r.point.v1, r.point.v2, r.policy.c_str(), 100.0 * r.success, r.counts[0],
                   r.counts[1], r.counts[2], r.iterations.mean, r.iterations.sd);
    return out;
}

nlohmann::json reports_to_json(std::span<const ExperimentReport> reports) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json runs = nlohmann::json::array();
        for (const auto& s : r.runs) {
            nlohmann::json j = run_to_json(s.run);
            j["class"] = std::string(to_string(s.cls));
            runs.push_back(std::move(j));
        }
        out.push_back({{"point", {r.point.v1, r.point.v2}},
                       {"policy", r.policy},
                       {"success_rate", r.success},
                       {"counts", {{"ideal", r.counts[0]}, {"close", r.counts[1]}, {"fail", r.counts[2]}}},
                       {"iterations", {{"mean", r.iterations.mean}, {"sd", r.iterations.sd}}},
                       {"runs", runs}});
    }
    return out;
}

std::vector<ExperimentReport> reports_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw ParseError("reports: expected an array");
    std::vector<ExperimentReport> out;
    for (const auto& j : doc) {
        ExperimentReport r;
        std::vector<RunClass> classes;
        std::vector<int> iterations;
        try {
            r.point = {j.at("point").at(0).get<double>(), j.at("point").at(1).get<double>()};
            r.policy = j.at("policy").get<std::string>();
            for (const auto& run : j.at("runs")) {
                ScoredRun sr{run_from_json(run), run_class_from_string(run.at("class").get<std::string>())};
                classes.push_back(sr.cls);
                iterations.push_back(sr.run.iteration_count);
                ++r.counts[static_cast<std::size_t>(sr.cls)];
                r.runs.push_back(std::move(sr));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("reports: ") + e.what());
        }
        r.success = success_rate(classes);
        r.iterations = summarize_iterations(iterations);
        out.push_back(std::move(r));
    }
    return out;
}

nlohmann::json heatmap_to_json(const Heatmap& map) {
    return {{"policy", map.policy},
            {"v1_starts", map.v1_starts},
            {"v2_starts", map.v2_starts},
            {"rows", map.v2_starts.size()},
            {"cols", map.v1_starts.size()},
            {"weights", map.weights},
            {"iterations", map.iterations}};
}

nlohmann::json landscape_to_json(const LandscapeMap& map) {
    return {{"rows", map.rows},
            {"cols", map.cols},
            {"v1_centers", map.v1_centers},
            {"v2_centers", map.v2_centers},
            {"values", map.values}};
}

}  // namespace qdtune
