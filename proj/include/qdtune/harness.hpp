#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "qdtune/classifier.hpp"
#include "qdtune/scan_io.hpp"
#include "qdtune/tuner.hpp"

namespace qdtune {

// A run ends in the ideal region when the ground-truth double-dot fraction of
// its final window reaches theta_ideal, and close enough at theta_close.
struct SuccessRegions {
    double theta_ideal = 0.8;
    double theta_close = 0.4;

    void validate() const;
};

enum class RunClass { Ideal, Close, Fail };

double success_weight(RunClass c);
std::string_view to_string(RunClass c);
RunClass run_class_from_string(std::string_view s);

// P = (#ideal + 0.5 #close) / #runs. Throws ConfigError on an empty list.
double success_rate(std::span<const RunClass> runs);

// Everything a single run needs besides the source and classifier.
struct RunSettings {
    ScanSettings scan{};
    FitnessConfig fitness{};
    SimplexPolicy policy = FixedSimplex{75.0};
    TerminationConfig termination{};
    Sandbox sandbox{};
    SuccessRegions regions{};
};

// Ground-truth class of a finished run. Needs a source with labels; aborted
// runs and blocked final windows are failures.
RunClass score_run(const TuningRun& run, const MeasurementSource& source, const RunSettings& settings);

struct ScoredRun {
    TuningRun run;
    RunClass cls = RunClass::Fail;
};

struct IterationSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, 0 for a single run
};

IterationSummary summarize_iterations(std::span<const int> counts);

struct ExperimentReport {
    Voltage2 point;
    std::string policy;
    std::vector<ScoredRun> runs;
    double success = 0.0;
    std::array<std::size_t, 3> counts{};  // ideal, close, fail
    IterationSummary iterations;
};

// Native pixel pitch of the source: stored resolution for premeasured scans,
// requested resolution for live devices.
double native_pitch(const MeasurementSource& source, const ScanSettings& scan);

// One run per pixel of the (2*radius+1)^2 neighborhood around `point`,
// executed on `workers` threads. Results never depend on the worker count.
ExperimentReport neighborhood_experiment(const MeasurementSource& source,
                                         const StateClassifier& classifier, Voltage2 point,
                                         const RunSettings& settings, int radius_px = 4,
                                         int workers = 1);

struct HeatmapConfig {
    double grid_step = 10.0;  // mV
    double margin = 65.0;     // mV on every side of the sampled rectangle
};

struct Heatmap {
    std::string policy;
    std::vector<double> v1_starts;
    std::vector<double> v2_starts;
    std::vector<double> weights;  // row-major, rows follow v2_starts
    std::vector<int> iterations;
};

// Start lattice: lo + margin + k * step <= hi - margin on each axis.
std::vector<double> heatmap_axis(Interval extent, const HeatmapConfig& config);

// `extent` defaults to the stored raster for premeasured sources.
Heatmap heatmap(const MeasurementSource& source, const StateClassifier& classifier,
                const RunSettings& settings, const HeatmapConfig& config, Interval v1_extent,
                Interval v2_extent, int workers = 1);
Heatmap heatmap(const PremeasuredScan& scan, const StateClassifier& classifier,
                const RunSettings& settings, const HeatmapConfig& config, int workers = 1);

struct LandscapeMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v1_centers;
    std::vector<double> v2_centers;
    std::vector<double> values;  // row-major
};

// Fitness of every window_px x window_px window that fits in the raster.
LandscapeMap fitness_landscape(const PremeasuredScan& scan, const StateClassifier& classifier,
                               std::size_t window_px, const FitnessConfig& fitness_config,
                               int workers = 1);

struct IterationRow {
    Voltage2 point;
    std::string policy;
    IterationSummary summary;
};

struct PooledIterations {
    std::string policy;
    std::size_t count = 0;
    double mean = 0.0;
    double pooled_sd = 0.0;  // sqrt(sum (n_i - 1) s_i^2 / sum (n_i - 1))
};

struct IterationTable {
    std::vector<IterationRow> rows;
    std::vector<PooledIterations> pooled;  // in first-seen policy order
};

IterationTable iteration_stats(std::span<const ExperimentReport> reports);

// Report writers; output is a pure function of the input.
std::string reports_to_csv(std::span<const ExperimentReport> reports);
std::string iteration_table_to_csv(const IterationTable& table);
std::string summary_text(std::span<const ExperimentReport> reports);
nlohmann::json reports_to_json(std::span<const ExperimentReport> reports);
// Rebuilds reports (runs included) from reports_to_json output.
std::vector<ExperimentReport> reports_from_json(const nlohmann::json& doc);
nlohmann::json heatmap_to_json(const Heatmap& map);
nlohmann::json landscape_to_json(const LandscapeMap& map);

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace qdtune
