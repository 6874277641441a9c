#include "qdtune/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "qdtune/error.hpp"
#include "qdtune/preprocess.hpp"

namespace qdtune {

void FitnessConfig::validate() const {
    if (!target.valid(1e-9)) throw ConfigError("fitness: target is not a probability vector");
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("fitness: alpha and beta must be >= 0");
    if (!(steepness > 0.0)) throw ConfigError("fitness: steepness must be > 0");
}

double penalty_g(double x, double steepness) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("penalty_g: x = " + std::to_string(x) + " outside [0, 1]");
    const double half = std::atan(0.5 * steepness);
    return (std::atan(steepness * (x - 0.5)) + half) / (2.0 * half);
}

double fitness(const ProbabilityVector& p, const FitnessConfig& c) {
    const double dn = c.target.p_none - p.p_none;
    const double ds = c.target.p_sd - p.p_sd;
    const double dd = c.target.p_dd - p.p_dd;
    // Components can stray past [0, 1] by rounding; the penalty domain is strict.
    auto unit = [](double x) { return std::clamp(x, 0.0, 1.0); };
    const double delta = std::sqrt(dn * dn + ds * ds + dd * dd) +
                         c.alpha * penalty_g(unit(p.p_none), c.steepness) +
                         c.beta * penalty_g(unit(p.p_sd), c.steepness);
    return c.cap ? std::min(delta, c.blocked_fitness) : delta;
}

void validate_policy(const SimplexPolicy& policy) {
    if (const auto* f = std::get_if<FixedSimplex>(&policy)) {
        if (!(f->delta > 0.0)) throw ConfigError("simplex: delta must be > 0");
    } else {
        const auto& d = std::get<DynamicSimplex>(policy);
        if (!(d.delta_min > 0.0) || !(d.delta_min < d.delta_max))
            throw ConfigError("simplex: need 0 < delta_min < delta_max");
    }
}

std::string policy_name(const SimplexPolicy& policy) {
    if (const auto* f = std::get_if<FixedSimplex>(&policy)) {
        std::ostringstream os;
        os << "fixed" << f->delta;
        return os.str();
    }
    return "dynamic";
}

SimplexPolicy parse_policy(const std::string& name) {
    if (name == "dynamic") return DynamicSimplex{};
    if (name.rfind("fixed", 0) == 0 && name.size() > 5) {
        try {
            std::size_t used = 0;
            const double delta = std::stod(name.substr(5), &used);
            if (used == name.size() - 5 && delta > 0.0) return FixedSimplex{delta};
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("unknown simplex policy \"" + name + "\" (expected fixed75, fixed100, fixed<N> or dynamic)");
}

double simplex_size(const SimplexPolicy& policy, double fitness0) {
    validate_policy(policy);
    if (const auto* f = std::get_if<FixedSimplex>(&policy)) return f->delta;
    const auto& d = std::get<DynamicSimplex>(policy);
    return std::clamp(d.delta_min * (1.0 + fitness0), d.delta_min, d.delta_max);
}

Simplex initial_simplex(Voltage2 start, const SimplexPolicy& policy, double fitness0) {
    const double size = simplex_size(policy, fitness0);
    return {start, Voltage2{start.v1 - size, start.v2}, Voltage2{start.v1, start.v2 - size}};
}

void TerminationConfig::validate() const {
    if (!(fitness_tolerance > 0.0) || !(simplex_size_tolerance > 0.0) || max_iterations <= 0)
        throw ConfigError("termination: all tolerances and the budget must be positive");
}

namespace {

struct BudgetSpent {};

Voltage2 along(Voltage2 from, Voltage2 to, double t) {
    return {from.v1 + t * (to.v1 - from.v1), from.v2 + t * (to.v2 - from.v2)};
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(Voltage2)>& objective,
                             const Simplex& simplex, const TerminationConfig& term,
                             std::optional<double> first_value) {
    term.validate();
    NelderMeadResult result;
    int evaluations = first_value ? 1 : 0;
    bool have_best = false;
    auto note_best = [&](Voltage2 x, double f) {
        if (!have_best || f < result.best_value) {
            result.best = x;
            result.best_value = f;
            have_best = true;
        }
    };
    auto eval = [&](Voltage2 x) {
        if (evaluations >= term.max_iterations) throw BudgetSpent{};
        ++evaluations;
        const double f = objective(x);
        result.trace.push_back({x, f});
        note_best(x, f);
        return f;
    };

    std::array<Voltage2, 3> x = simplex;
    std::array<double, 3> f{};
    try {
        if (first_value) {
            f[0] = *first_value;
            note_best(x[0], f[0]);
        } else {
            f[0] = eval(x[0]);
        }
        f[1] = eval(x[1]);
        f[2] = eval(x[2]);

        for (;;) {
            std::array<int, 3> order{0, 1, 2};
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });
            const std::array<Voltage2, 3> xs{x[order[0]], x[order[1]], x[order[2]]};
            const std::array<double, 3> fs{f[order[0]], f[order[1]], f[order[2]]};
            x = xs;
            f = fs;

            double diameter = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = a + 1; b < 3; ++b)
                    diameter = std::max(diameter, std::hypot(x[a].v1 - x[b].v1, x[a].v2 - x[b].v2));
            const double spread = f[2] - f[0];
            if (diameter < term.simplex_size_tolerance || spread < term.fitness_tolerance) {
                result.reason = StopReason::Converged;
                break;
            }

            const Voltage2 centroid{0.5 * (x[0].v1 + x[1].v1), 0.5 * (x[0].v2 + x[1].v2)};
            const Voltage2 xr = along(centroid, x[2], -1.0);
            const double fr = eval(xr);
            if (fr < f[0]) {
                const Voltage2 xe = along(centroid, x[2], -2.0);
                const double fe = eval(xe);
                if (fe < fr) {
                    x[2] = xe;
                    f[2] = fe;
                } else {
                    x[2] = xr;
                    f[2] = fr;
                }
                continue;
            }
            if (fr < f[1]) {
                x[2] = xr;
                f[2] = fr;
                continue;
            }
            bool shrink = false;
            if (fr < f[2]) {
                const Voltage2 xc = along(centroid, xr, 0.5);
                const double fc = eval(xc);
                if (fc <= fr) {
                    x[2] = xc;
                    f[2] = fc;
                } else {
                    shrink = true;
                }
            } else {
                const Voltage2 xcc = along(centroid, x[2], 0.5);
                const double fcc = eval(xcc);
                if (fcc < f[2]) {
                    x[2] = xcc;
                    f[2] = fcc;
                } else {
                    shrink = true;
                }
            }
            if (shrink) {
                for (int j = 1; j < 3; ++j) {
                    x[j] = along(x[0], x[j], 0.5);
                    f[j] = eval(x[j]);
                }
            }
        }
    } catch (const BudgetSpent&) {
        result.reason = StopReason::MaxIterations;
    }
    return result;
}

std::optional<Voltage2> TuningRun::final_center() const {
    if (const auto* c = std::get_if<Converged>(&outcome)) return c->center;
    if (const auto* m = std::get_if<MaxIterations>(&outcome)) return m->center;
    return std::nullopt;
}

TuningRun autotune(const MeasurementSource& source, const StateClassifier& classifier, Voltage2 start,
                   const ScanSettings& scan, const FitnessConfig& fitness_config,
                   const SimplexPolicy& policy, const TerminationConfig& term, const Sandbox& sandbox) {
    fitness_config.validate();
    validate_policy(policy);
    term.validate();
    sandbox.validate();
    if (!sandbox.contains(start.v1, start.v2))
        throw DomainError("autotune: start point lies outside the sandbox");

    TuningRun run;
    run.start = start;
    run.policy = policy_name(policy);

    auto objective = [&](Voltage2 center) {
        ++run.iteration_count;
        AcquireResult acquired = acquire(source, center, scan.span, scan.resolution, sandbox);
        if (std::holds_alternative<Blocked>(acquired)) {
            run.steps.push_back({center, ProbabilityVector{}, fitness_config.blocked_fitness, true});
            return fitness_config.blocked_fitness;
        }
        const ScanWindow& window = std::get<ScanWindow>(acquired);
        const ProcessedImage image = process(window.grid);
        const ProbabilityVector p =
            classifier.classify(image, window.labels ? &*window.labels : nullptr);
        const double value = fitness(p, fitness_config);
        run.steps.push_back({center, p, value, false});
        return value;
    };

    try {
        NelderMeadResult nm;
        if (std::holds_alternative<DynamicSimplex>(policy)) {
            const double f0 = objective(start);
            run.initial_simplex_size = simplex_size(policy, f0);
            nm = nelder_mead(objective, initial_simplex(start, policy, f0), term, f0);
        } else {
            run.initial_simplex_size = simplex_size(policy, 0.0);
            nm = nelder_mead(objective, initial_simplex(start, policy, 0.0), term);
        }
        if (nm.reason == StopReason::Converged)
            run.outcome = Converged{nm.best};
        else
            run.outcome = MaxIterations{nm.best};
    } catch (const Error& e) {
        run.outcome = Aborted{e.code() + ": " + e.what()};
    }
    return run;
}

nlohmann::json run_to_json(const TuningRun& run) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : run.steps)
        steps.push_back({{"center", {s.center.v1, s.center.v2}},
                         {"p", {s.p.p_none, s.p.p_sd, s.p.p_dd}},
                         {"fitness", s.fitness},
                         {"blocked", s.blocked}});
    nlohmann::json outcome;
    if (const auto* c = std::get_if<Converged>(&run.outcome))
        outcome = {{"type", "converged"}, {"center", {c->center.v1, c->center.v2}}};
    else if (const auto* m = std::get_if<MaxIterations>(&run.outcome))
        outcome = {{"type", "max_iterations"}, {"center", {m->center.v1, m->center.v2}}};
    else
        outcome = {{"type", "aborted"}, {"cause", std::get<Aborted>(run.outcome).cause}};
    return {{"start", {run.start.v1, run.start.v2}},
            {"policy", run.policy},
            {"initial_simplex_size", run.initial_simplex_size},
            {"iteration_count", run.iteration_count},
            {"outcome", outcome},
            {"steps", steps}};
}

namespace {

Voltage2 pair_at(const nlohmann::json& doc, const char* name) {
    const auto& v = doc.at(name);
    if (!v.is_array() || v.size() != 2) throw ParseError(std::string("run: field \"") + name + "\" is not a pair");
    return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

TuningRun run_from_json(const nlohmann::json& doc) {
    try {
        TuningRun run;
        run.start = pair_at(doc, "start");
        run.policy = doc.at("policy").get<std::string>();
        run.initial_simplex_size = doc.at("initial_simplex_size").get<double>();
        run.iteration_count = doc.at("iteration_count").get<int>();
        for (const auto& s : doc.at("steps")) {
            const auto& p = s.at("p");
            run.steps.push_back({pair_at(s, "center"),
                                 ProbabilityVector{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()},
                                 s.at("fitness").get<double>(), s.at("blocked").get<bool>()});
        }
        const auto& o = doc.at("outcome");
        const std::string type = o.at("type").get<std::string>();
        if (type == "converged")
            run.outcome = Converged{pair_at(o, "center")};
        else if (type == "max_iterations")
            run.outcome = MaxIterations{pair_at(o, "center")};
        else if (type == "aborted")
            run.outcome = Aborted{o.at("cause").get<std::string>()};
        else
            throw ParseError("run: unknown outcome \"" + type + "\"");
        return run;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("run: ") + e.what());
    }
}

std::string run_to_csv(const TuningRun& run) {
    std::ostringstream os;
    os << "step,v1,v2,p_none,p_sd,p_dd,fitness\n";
    char line[256];
    for (std::size_t i = 0; i < run.steps.size(); ++i) {
        const auto& s = run.steps[i];
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, s.center.v1,
                      s.center.v2, s.p.p_none, s.p.p_sd, s.p.p_dd, s.fitness);
        os << line;
    }
    return os.str();
}

}  // namespace qdtune
