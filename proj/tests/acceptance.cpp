// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qdtune/harness.hpp"

using namespace qdtune;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& check) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s [%2d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
}

std::string fmt(const char* pattern, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

class CountingOracle final : public StateClassifier {
public:
    ProbabilityVector classify(const ProcessedImage& image, const LabelGrid* labels) const override {
        ++calls;
        return inner.classify(image, labels);
    }
    mutable std::atomic<long> calls{0};
    OracleClassifier inner;
};

Outcome oracle_exactness() {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> dim(1, 60);
    std::uniform_int_distribution<int> pick(0, kStateLabelCount - 1);
    std::vector<LabelGrid> grids;
    for (int t = 0; t < 1000; ++t) {
        LabelGrid l;
        l.v1_axis = make_axis(0.0, 1.0, dim(rng));
        l.v2_axis = make_axis(0.0, 1.0, dim(rng));
        for (std::size_t i = 0; i < l.rows() * l.cols(); ++i) l.labels.push_back(label_from_int(pick(rng)));
        grids.push_back(std::move(l));
    }
    const auto t0 = Clock::now();
    int mismatches = 0;
    for (const auto& l : grids) {
        const ProbabilityVector p = oracle_probability(l);
        std::size_t sd = 0, dd = 0;
        for (StateLabel s : l.labels) {
            const int v = static_cast<int>(s);
            sd += v >= 1 && v <= 3;
            dd += v == 4;
        }
        const double n = static_cast<double>(l.labels.size());
        mismatches += !(p.p_sd == sd / n && p.p_dd == dd / n && p.p_none == (n - sd - dd) / n);
    }
    const double dt = seconds_since(t0);
    return {mismatches == 0 && dt < 1.0, fmt("%d mismatches in 1000 grids, %.3f s", mismatches, dt)};
}

Outcome penalty_shape() {
    const double s = 10.0;
    bool exact = penalty_g(0.0, s) == 0.0 && penalty_g(1.0, s) == 1.0 && penalty_g(0.5, s) == 0.5;
    bool monotone = true;
    for (int i = 1; i <= 1000; ++i) monotone &= penalty_g(i * 1e-3, s) > penalty_g((i - 1) * 1e-3, s);
    double inflection = -1.0;
    double prev = 0.0;
    for (int i = 1; i < 1000; ++i) {
        const double x = i * 1e-3;
        const double d2 = penalty_g(x + 1e-3, s) - 2 * penalty_g(x, s) + penalty_g(x - 1e-3, s);
        if (i > 1 && prev > 0.0 && d2 <= 0.0) {
            inflection = x;
            break;
        }
        prev = d2;
    }
    const bool ok = exact && monotone && std::abs(inflection - 0.5) <= 1e-3 && penalty_g(0.0, s) >= 0.0;
    return {ok, fmt("anchors %s, monotone %s, inflection at %.3f", exact ? "exact" : "off",
                    monotone ? "yes" : "no", inflection)};
}

Outcome fitness_anchor() {
    FitnessConfig capped;
    FitnessConfig raw;
    raw.cap = false;
    // Independent evaluation: sqrt(1 + 1) + g(1) + g(0) with g from its closed form.
    auto g = [](double x) { return (std::atan(10 * (x - 0.5)) + std::atan(5.0)) / (2 * std::atan(5.0)); };
    const double expect = std::sqrt(2.0) + g(1.0) + g(0.0);
    const double a = fitness({1, 0, 0}, raw);
    const double b = fitness({0, 1, 0}, raw);
    const bool ok = fitness({0, 0, 1}, capped) == 0.0 && std::abs(a - expect) <= 1e-5 &&
                    std::abs(b - expect) <= 1e-5 && std::abs(a - 2.41421) <= 1e-5 &&
                    fitness({1, 0, 0}, capped) == 2.0 && fitness({0, 1, 0}, capped) == 2.0;
    return {ok, fmt("target 0, pre-cap %.6f / %.6f, capped %.1f / %.1f", a, b, fitness({1, 0, 0}, capped),
                    fitness({0, 1, 0}, capped))};
}

Outcome simplex_construction() {
    const Simplex s = initial_simplex({350, 400}, FixedSimplex{75}, 0.0);
    const bool ok = s[0] == Voltage2{350, 400} && s[1] == Voltage2{275, 400} && s[2] == Voltage2{350, 325};
    return {ok, fmt("{(%g,%g), (%g,%g), (%g,%g)}", s[0].v1, s[0].v2, s[1].v1, s[1].v2, s[2].v1, s[2].v2)};
}

Outcome sandbox_blocking() {
    const SimulatedDevice dev{reference_device(), true, 5};
    const Sandbox sb;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> edge(0.0, 110.0), any(0.0, 600.0);
    long blocked = 0, crossing = 0, bad = 0, calls_expected = 0;
    CountingOracle oracle;
    for (int i = 0; i < 200; ++i) {
        // Starts near a low edge so lowered vertices cross the boundary.
        const Voltage2 start = i % 2 ? Voltage2{edge(rng), any(rng)} : Voltage2{any(rng), edge(rng)};
        for (const char* pol : {"fixed75", "dynamic"}) {
            const TuningRun run = autotune(dev, oracle, start, ScanSettings{}, FitnessConfig{}, parse_policy(pol),
                                           TerminationConfig{}, sb);
            for (const auto& st : run.steps) {
                const bool crosses = st.center.v1 - 30 < 0 || st.center.v2 - 30 < 0 || st.center.v1 + 30 > 600 ||
                                     st.center.v2 + 30 > 600;
                crossing += crosses;
                blocked += st.blocked;
                if (crosses != st.blocked || (crosses && st.fitness != 2.0)) ++bad;
                if (!st.blocked) ++calls_expected;
            }
        }
    }
    const bool ok = bad == 0 && crossing > 0 && oracle.calls.load() == calls_expected;
    return {ok, fmt("%ld crossing windows, %ld blocked, %ld mismatches, classifier calls %ld (expected %ld)",
                    crossing, blocked, bad, oracle.calls.load(), calls_expected)};
}

Outcome optimizer_sanity() {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(50.0, 550.0);
    std::uniform_real_distribution<double> curv(0.5, 3.0);
    std::uniform_real_distribution<double> mix(-0.9, 0.9);
    const double x0 = u(rng), y0 = u(rng);
    const double a = curv(rng), b = curv(rng);
    const double c = mix(rng) * std::sqrt(a * b);  // keeps the form positive definite
    auto f = [&](Voltage2 p) {
        const double dx = p.v1 - x0, dy = p.v2 - y0;
        return a * dx * dx + b * dy * dy + c * dx * dy;
    };
    TerminationConfig term;
    term.fitness_tolerance = 1e-13;
    term.simplex_size_tolerance = 1e-5;
    term.max_iterations = 200;
    int ok_runs = 0;
    double worst = 0.0;
    std::size_t most = 0;
    for (int i = 0; i < 100; ++i) {
        const Voltage2 start{u(rng), u(rng)};
        const auto r = nelder_mead(f, initial_simplex(start, FixedSimplex{75}, 0.0), term);
        const double err = std::hypot(r.best.v1 - x0, r.best.v2 - y0);
        worst = std::max(worst, err);
        most = std::max(most, r.trace.size());
        ok_runs += err <= 1e-3 && r.trace.size() <= 200;
    }
    return {ok_runs == 100, fmt("%d/100 within 1e-3 mV, worst %.2e mV, max %zu evaluations", ok_runs, worst, most)};
}

Outcome flip_invariance() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(30.0, 570.0);
    int same = 0;
    for (int i = 0; i < 100; ++i) {
        const DeviceParams p = sample_device(rng());
        auto [g, l] = render_scan(p, {u(rng), u(rng)}, {60, 60}, 2.0, true, rng());
        same += process(inject_sensor_flip(g)) == process(g);
    }
    return {same == 100, fmt("%d/100 bit-identical", same)};
}

Outcome classifier_accuracy() {
    const auto t0 = Clock::now();
    const Dataset data = generate_dataset(1001, 10, 60.0, 2019);
    auto [train_set, test_set] = split_dataset(data, 0.8, 7);
    const TrainingResult tr = train(train_set, TrainingConfig{});
    const Evaluation ev = evaluate(tr.model, test_set);
    const double dt = seconds_since(t0);
    return {data.size() == 10010 && ev.accuracy >= 0.90 && dt <= 600.0,
            fmt("%zu samples, held-out accuracy %.4f on %zu, %.0f s", data.size(), ev.accuracy, ev.count, dt)};
}

Outcome gradient_check() {
    const Dataset data = generate_dataset(10, 5, 60.0, 31);
    ClassifierModel m = init_model(kDefaultLayers, 32);
    std::vector<std::size_t> batch(data.size());
    std::iota(batch.begin(), batch.end(), std::size_t{0});
    std::vector<double> grad;
    loss_and_gradient(m, data, batch, &grad);
    std::mt19937_64 rng(33);
    std::uniform_int_distribution<std::size_t> pick(0, m.parameter_count() - 1);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t k = pick(rng);
        const double h = 1e-6;
        const double orig = m.parameter(k);
        m.parameter(k) = orig + h;
        const double up = loss_and_gradient(m, data, batch, nullptr);
        m.parameter(k) = orig - h;
        const double down = loss_and_gradient(m, data, batch, nullptr);
        m.parameter(k) = orig;
        const double fd = (up - down) / (2 * h);
        const double scale = std::max(std::abs(fd), std::abs(grad[k]));
        const double rel = scale == 0.0 ? 0.0 : std::abs(fd - grad[k]) / scale;
        worst = std::max(worst, rel);
    }
    return {worst < 1e-5, fmt("worst relative error %.2e over 20 parameters", worst)};
}

const PremeasuredScan& reference_scan() {
    static const PremeasuredScan scan = [] {
        auto [g, l] = render_scan(reference_device(), {300, 300}, {600, 600}, 2.0, true);
        return PremeasuredScan{g, l};
    }();
    return scan;
}

const std::vector<Voltage2> kBandPoints{{250, 400}, {350, 400}, {350, 415}, {350, 425},
                                        {350, 450}, {400, 350}, {450, 350}};
const std::vector<Voltage2> kPlateauPoints{{500, 500}, {520, 480}, {480, 520}, {540, 540}};
const std::vector<std::string> kPolicies{"fixed75", "fixed100", "dynamic"};

struct PolicyResults {
    std::vector<ExperimentReport> band;
    std::vector<ExperimentReport> plateau;
};

const std::vector<PolicyResults>& offline_results() {
    static const std::vector<PolicyResults> results = [] {
        std::vector<PolicyResults> out;
        const OracleClassifier oracle;
        for (const auto& pol : kPolicies) {
            RunSettings s;
            s.policy = parse_policy(pol);
            PolicyResults r;
            for (Voltage2 p : kBandPoints) r.band.push_back(neighborhood_experiment(reference_scan(), oracle, p, s));
            for (Voltage2 p : kPlateauPoints)
                r.plateau.push_back(neighborhood_experiment(reference_scan(), oracle, p, s));
            out.push_back(std::move(r));
        }
        return out;
    }();
    return results;
}

double mean_success(const std::vector<ExperimentReport>& reports) {
    double sum = 0.0;
    for (const auto& r : reports) sum += r.success;
    return sum / static_cast<double>(reports.size());
}

Outcome offline_tuning() {
    const auto t0 = Clock::now();
    const auto& res = offline_results();
    double band = 0.0, plateau = 0.0;
    std::vector<double> aggregate;
    std::string detail;
    for (std::size_t i = 0; i < kPolicies.size(); ++i) {
        const double b = mean_success(res[i].band);
        const double p = mean_success(res[i].plateau);
        band += b / 3.0;
        plateau += p / 3.0;
        std::vector<ExperimentReport> all = res[i].band;
        all.insert(all.end(), res[i].plateau.begin(), res[i].plateau.end());
        aggregate.push_back(mean_success(all));
        detail += fmt("%s band %.3f plateau %.3f aggregate %.3f; ", kPolicies[i].c_str(), b, p, aggregate.back());
    }
    const double dt = seconds_since(t0);
    const bool a = band >= 0.70;
    const bool b = plateau <= 0.40;
    const bool c = aggregate[2] >= aggregate[1] && aggregate[1] >= aggregate[0] - 0.05;
    detail += fmt("(a) %.3f (b) %.3f (c) %s", band, plateau, c ? "ordered" : "not ordered");
    return {a && b && c && dt <= 900.0, detail};
}

Outcome iteration_statistics() {
    const auto& res = offline_results();
    std::vector<double> means;
    std::string detail;
    for (std::size_t i = 0; i < kPolicies.size(); ++i) {
        const IterationTable t = iteration_stats(res[i].band);
        means.push_back(t.pooled.at(0).mean);
        detail += fmt("%s %.2f (%.2f); ", kPolicies[i].c_str(), t.pooled[0].mean, t.pooled[0].pooled_sd);
    }
    const double lo = *std::min_element(means.begin(), means.end());
    const double hi = *std::max_element(means.begin(), means.end());
    detail += fmt("spread %.1f %%", 100.0 * (hi / lo - 1.0));
    return {lo >= 8.0 && hi <= 30.0 && hi / lo - 1.0 <= 0.20, detail};
}

Outcome landscape_geometry() {
    auto [g, l] = render_scan(reference_device(), {300, 350}, {400, 400}, 2.0, true);
    const PremeasuredScan scan{g, l};
    const LandscapeMap m = fitness_landscape(scan, OracleClassifier{}, 30, FitnessConfig{});
    std::size_t best = 0;
    bool in_range = true;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        in_range &= m.values[i] >= 0.0 && m.values[i] <= 2.0;
        if (m.values[i] < m.values[best]) best = i;
    }
    const std::size_t r = best / m.cols, c = best % m.cols;
    const StateLabel truth = state_at(reference_device(), m.v1_centers[c], m.v2_centers[r]);
    const bool ok = m.rows == 171 && m.cols == 171 && m.values.size() == 171u * 171u && in_range &&
                    truth == StateLabel::DoubleDot;
    return {ok, fmt("%zux%zu map, values in [0,2]: %s, argmin at (%.0f, %.0f) mV labeled %s, fitness %.3g", m.rows,
                    m.cols, in_range ? "yes" : "no", m.v1_centers[c], m.v2_centers[r],
                    std::string(to_string(truth)).c_str(), m.values[best])};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome end_to_end_determinism(const std::string& cli) {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "qdtune_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    save_scan(reference_scan().grid, reference_scan().labels, root / "scan.json");
    {
        std::ofstream cfg(root / "config.json");
        cfg << R"({"points": [[350, 425], [250, 400]], "policies": ["fixed75", "dynamic"]})";
    }
    const std::vector<std::pair<std::string, int>> runs{{"a", 1}, {"b", 1}, {"c", 3}};
    for (const auto& [name, workers] : runs) {
        const std::string cmd = "\"" + cli + "\" neighborhood --config \"" + (root / "config.json").string() +
                                "\" --source scan:\"" + (root / "scan.json").string() + "\" --workers " +
                                std::to_string(workers) + " --out \"" + (root / name).string() + "\" > /dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
    int files = 0, identical = 0;
    for (const auto& entry : fs::directory_iterator(root / "a")) {
        ++files;
        const std::string ref = slurp(entry.path());
        identical += ref == slurp(root / "b" / entry.path().filename()) &&
                     ref == slurp(root / "c" / entry.path().filename()) && !ref.empty();
    }
    return {files > 0 && identical == files,
            fmt("%d/%d report files byte-identical across repeats and 1 vs 3 workers", identical, files)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : QDTUNE_CLI_PATH;
    report(1, "oracle exactness", oracle_exactness);
    report(2, "penalty shape", penalty_shape);
    report(3, "fitness anchor", fitness_anchor);
    report(4, "simplex construction", simplex_construction);
    report(5, "sandbox", sandbox_blocking);
    report(6, "optimizer sanity", optimizer_sanity);
    report(7, "preprocessing flip invariance", flip_invariance);
    report(8, "classifier accuracy", classifier_accuracy);
    report(9, "gradient correctness", gradient_check);
    report(10, "off-line tuning", offline_tuning);
    report(11, "iteration statistics", iteration_statistics);
    report(12, "landscape geometry", landscape_geometry);
    report(13, "end-to-end determinism", [&] { return end_to_end_determinism(cli); });
    std::printf("%d of 13 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
