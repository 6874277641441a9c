#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qdtune/classifier.hpp"
#include "qdtune/scan_io.hpp"

namespace qdtune {

struct FitnessConfig {
    ProbabilityVector target{0.0, 0.0, 1.0};
    double alpha = 1.0;  // no-dot penalty weight
    double beta = 1.0;   // single-dot penalty weight
    double steepness = 10.0;
    double blocked_fitness = 2.0;
    bool cap = true;  // clamp fitness at blocked_fitness

    void validate() const;
};

// Arctangent penalty shifted and scaled so g(0) = 0, g(1) = 1 with its
// inflection at 0.5. Throws DomainError outside [0, 1].
double penalty_g(double x, double steepness);

double fitness(const ProbabilityVector& p, const FitnessConfig& config);

struct FixedSimplex {
    double delta = 75.0;
};

// Initial size grows with the fitness of the first scan:
// clamp(delta_min * (1 + fitness0), delta_min, delta_max).
struct DynamicSimplex {
    double delta_min = 50.0;
    double delta_max = 150.0;
};

using SimplexPolicy = std::variant<FixedSimplex, DynamicSimplex>;

void validate_policy(const SimplexPolicy& policy);
std::string policy_name(const SimplexPolicy& policy);
// Accepts "fixed75", "fixed100", "fixed<N>" and "dynamic".
SimplexPolicy parse_policy(const std::string& name);

double simplex_size(const SimplexPolicy& policy, double fitness0);

using Simplex = std::array<Voltage2, 3>;

// {start, start - (size, 0), start - (0, size)}
Simplex initial_simplex(Voltage2 start, const SimplexPolicy& policy, double fitness0);

struct TerminationConfig {
    double fitness_tolerance = 0.02;
    double simplex_size_tolerance = 2.0;  // mV
    int max_iterations = 50;              // objective evaluations

    void validate() const;
};

struct ObjectiveSample {
    Voltage2 point;
    double value = 0.0;
};

enum class StopReason { Converged, MaxIterations };

struct NelderMeadResult {
    Voltage2 best;
    double best_value = 0.0;
    std::vector<ObjectiveSample> trace;  // every objective call in order
    StopReason reason = StopReason::Converged;
};

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink
// 0.5). Stops once the fitness spread or the simplex diameter drops below
// its tolerance, or when the evaluation budget is spent. first_value, when given, is the already-known
// objective value at simplex[0] and is not re-evaluated.
NelderMeadResult nelder_mead(const std::function<double(Voltage2)>& objective,
                             const Simplex& simplex, const TerminationConfig& term,
                             std::optional<double> first_value = std::nullopt);

struct TuningStep {
    Voltage2 center;
    ProbabilityVector p;  // zeros when blocked
    double fitness = 0.0;
    bool blocked = false;
};

struct Converged {
    Voltage2 center;
};
struct MaxIterations {
    Voltage2 center;  // best center seen
};
struct Aborted {
    std::string cause;
};

using Outcome = std::variant<Converged, MaxIterations, Aborted>;

struct TuningRun {
    Voltage2 start;
    std::string policy;
    double initial_simplex_size = 0.0;
    std::vector<TuningStep> steps;
    Outcome outcome;
    int iteration_count = 0;  // objective evaluations == acquisitions

    // Best center for Converged/MaxIterations, nullopt when aborted.
    std::optional<Voltage2> final_center() const;
};

struct ScanSettings {
    Voltage2 span{60.0, 60.0};
    double resolution = 2.0;
};

// One closed-loop run: acquire -> (Blocked => blocked_fitness) | process ->
// classify -> fitness, driven by Nelder-Mead from `start`.
TuningRun autotune(const MeasurementSource& source, const StateClassifier& classifier, Voltage2 start,
                   const ScanSettings& scan, const FitnessConfig& fitness_config,
                   const SimplexPolicy& policy, const TerminationConfig& term, const Sandbox& sandbox);

nlohmann::json run_to_json(const TuningRun& run);
// Inverse of run_to_json; throws ParseError on malformed input.
TuningRun run_from_json(const nlohmann::json& doc);
// Columns: step,v1,v2,p_none,p_sd,p_dd,fitness
std::string run_to_csv(const TuningRun& run);

}  // namespace qdtune
