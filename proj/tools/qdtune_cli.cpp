// qdtune: command-line front end for simulation, training and off-line tuning.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qdtune/codec.hpp"
#include "qdtune/error.hpp"
#include "qdtune/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qdtune;

namespace {

// Everything an experiment can be configured with. Loaded from --config and
// then overridden by explicit flags.
struct Config {
    std::uint64_t seed = 2019;
    std::optional<std::string> device_file;
    std::optional<std::uint64_t> device_seed;  // unset: reference device
    bool noise = true;
    std::optional<std::uint64_t> noise_seed;
    RunSettings run;
    std::vector<Voltage2> points{{350, 400}};
    std::vector<std::string> policies{"fixed75"};
    int radius_px = 4;
    int workers = 1;
    DynamicSimplex dynamic;
    HeatmapConfig heatmap;
    std::optional<Interval> heatmap_v1, heatmap_v2;
    std::size_t window_px = 30;
    int n_devices = 1001;
    int samples_per_device = 10;
    double window_span = 60.0;
    DatasetOptions dataset;
    TrainingConfig training;
    double test_fraction = 0.2;
};

void check_keys(const json& doc, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!doc.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
}

Voltage2 pair_of(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError(where + ": expected [v1, v2]");
    return {v[0].get<double>(), v[1].get<double>()};
}

Interval interval_of(const json& v, const std::string& where) {
    const Voltage2 p = pair_of(v, where);
    return {p.v1, p.v2};
}

template <class T>
void read(const json& doc, const char* key, T& out) {
    if (auto it = doc.find(key); it != doc.end()) {
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("config: key \"") + key + "\" has the wrong type");
        }
    }
}

Config parse_config(const json& doc);

Config load_config(const std::string& path) {
    if (path.empty()) return Config{};
    const json doc = read_json_file(path);
    try {
        return parse_config(doc);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

Config parse_config(const json& doc) {
    Config c;
    check_keys(doc, "config",
               {"seed", "device_file", "device_seed", "noise", "noise_seed", "scan", "fitness", "termination",
                "dynamic", "regions", "sandbox", "points", "policies", "radius_px", "workers", "heatmap",
                "landscape", "dataset", "training"});
    read(doc, "seed", c.seed);
    if (doc.contains("device_file")) c.device_file = doc["device_file"].get<std::string>();
    if (doc.contains("device_seed")) c.device_seed = doc["device_seed"].get<std::uint64_t>();
    read(doc, "noise", c.noise);
    if (doc.contains("noise_seed")) c.noise_seed = doc["noise_seed"].get<std::uint64_t>();
    if (doc.contains("scan")) {
        const json& s = doc["scan"];
        check_keys(s, "scan", {"span", "resolution"});
        if (s.contains("span")) c.run.scan.span = pair_of(s["span"], "scan.span");
        read(s, "resolution", c.run.scan.resolution);
    }
    if (doc.contains("fitness")) {
        const json& f = doc["fitness"];
        check_keys(f, "fitness", {"alpha", "beta", "steepness", "cap", "target"});
        read(f, "alpha", c.run.fitness.alpha);
        read(f, "beta", c.run.fitness.beta);
        read(f, "steepness", c.run.fitness.steepness);
        read(f, "cap", c.run.fitness.cap);
        if (f.contains("target")) {
            const auto t = f["target"].get<std::vector<double>>();
            if (t.size() != 3) throw ConfigError("fitness.target: expected three components");
            c.run.fitness.target = {t[0], t[1], t[2]};
        }
    }
    if (doc.contains("termination")) {
        const json& t = doc["termination"];
        check_keys(t, "termination", {"fitness_tolerance", "simplex_size_tolerance", "max_iterations"});
        read(t, "fitness_tolerance", c.run.termination.fitness_tolerance);
        read(t, "simplex_size_tolerance", c.run.termination.simplex_size_tolerance);
        read(t, "max_iterations", c.run.termination.max_iterations);
    }
    if (doc.contains("dynamic")) {
        const json& d = doc["dynamic"];
        check_keys(d, "dynamic", {"delta_min", "delta_max"});
        read(d, "delta_min", c.dynamic.delta_min);
        read(d, "delta_max", c.dynamic.delta_max);
    }
    if (doc.contains("regions")) {
        const json& r = doc["regions"];
        check_keys(r, "regions", {"theta_ideal", "theta_close"});
        read(r, "theta_ideal", c.run.regions.theta_ideal);
        read(r, "theta_close", c.run.regions.theta_close);
    }
    if (doc.contains("sandbox")) {
        const json& s = doc["sandbox"];
        check_keys(s, "sandbox", {"v1", "v2"});
        if (s.contains("v1")) c.run.sandbox.v1_range = interval_of(s["v1"], "sandbox.v1");
        if (s.contains("v2")) c.run.sandbox.v2_range = interval_of(s["v2"], "sandbox.v2");
    }
    if (doc.contains("points")) {
        c.points.clear();
        for (const auto& p : doc["points"]) c.points.push_back(pair_of(p, "points"));
    }
    read(doc, "policies", c.policies);
    read(doc, "radius_px", c.radius_px);
    read(doc, "workers", c.workers);
    if (doc.contains("heatmap")) {
        const json& h = doc["heatmap"];
        check_keys(h, "heatmap", {"grid_step", "margin", "v1", "v2"});
        read(h, "grid_step", c.heatmap.grid_step);
        read(h, "margin", c.heatmap.margin);
        if (h.contains("v1")) c.heatmap_v1 = interval_of(h["v1"], "heatmap.v1");
        if (h.contains("v2")) c.heatmap_v2 = interval_of(h["v2"], "heatmap.v2");
    }
    if (doc.contains("landscape")) {
        check_keys(doc["landscape"], "landscape", {"window_px"});
        read(doc["landscape"], "window_px", c.window_px);
    }
    if (doc.contains("dataset")) {
        const json& d = doc["dataset"];
        check_keys(d, "dataset", {"n_devices", "samples_per_device", "window_span", "resolution", "noise", "noise_scale"});
        read(d, "n_devices", c.n_devices);
        read(d, "samples_per_device", c.samples_per_device);
        read(d, "window_span", c.window_span);
        read(d, "resolution", c.dataset.resolution);
        read(d, "noise", c.dataset.noise);
        read(d, "noise_scale", c.dataset.noise_scale);
    }
    if (doc.contains("training")) {
        const json& t = doc["training"];
        check_keys(t, "training", {"learning_rate", "steps", "batch_size", "seed", "layer_sizes", "test_fraction"});
        read(t, "learning_rate", c.training.learning_rate);
        read(t, "steps", c.training.steps);
        read(t, "batch_size", c.training.batch_size);
        read(t, "seed", c.training.seed);
        read(t, "layer_sizes", c.training.layer_sizes);
        read(t, "test_fraction", c.test_fraction);
    }
    return c;
}

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::string policy;
    std::string source = "sim";
    std::string classifier = "oracle";
    std::optional<int> workers;
};

DeviceParams device_for(const Config& c) {
    if (c.device_file) return device_from_json(read_json_file(*c.device_file));
    if (c.device_seed) return sample_device(*c.device_seed);
    return reference_device();
}

MeasurementSource source_for(const std::string& spec, const Config& c) {
    if (spec == "sim") {
        const DeviceParams p = device_for(c);
        return SimulatedDevice{p, c.noise, c.noise_seed.value_or(p.seed)};
    }
    if (spec.rfind("scan:", 0) == 0 && spec.size() > 5) return load_scan(spec.substr(5));
    throw ConfigError("--source must be \"sim\" or \"scan:<path>\", got \"" + spec + "\"");
}

std::unique_ptr<StateClassifier> classifier_for(const std::string& spec) {
    if (spec == "oracle") return std::make_unique<OracleClassifier>();
    if (spec.rfind("model:", 0) == 0 && spec.size() > 6)
        return std::make_unique<ModelClassifier>(load_model(spec.substr(6)));
    throw ConfigError("--classifier must be \"oracle\" or \"model:<path>\", got \"" + spec + "\"");
}

std::vector<std::string> policies_for(const Flags& f, const Config& c) {
    std::vector<std::string> out = f.policy.empty() ? c.policies : std::vector<std::string>{f.policy};
    if (out.empty()) throw ConfigError("no simplex policy given");
    for (const auto& p : out) parse_policy(p);
    return out;
}

RunSettings settings_for(const Config& c, const std::string& policy) {
    RunSettings s = c.run;
    s.policy = parse_policy(policy);
    if (std::holds_alternative<DynamicSimplex>(s.policy)) s.policy = c.dynamic;
    return s;
}

fs::path out_file(const Flags& f, const std::string& name) {
    fs::create_directories(f.out);
    return fs::path(f.out) / name;
}

json evaluation_to_json(const Evaluation& ev) {
    json confusion = json::array();
    for (const auto& row : ev.confusion) confusion.push_back(row);
    return {{"accuracy", ev.accuracy}, {"count", ev.count}, {"confusion", confusion},
            {"classes", {"none", "single_dot", "double_dot"}}};
}

void emit_ok(const std::string& command, const std::vector<fs::path>& outputs, json extra = json::object()) {
    json doc = {{"status", "ok"}, {"command", command}};
    json files = json::array();
    for (const auto& p : outputs) files.push_back(p.string());
    doc["outputs"] = files;
    for (auto it = extra.begin(); it != extra.end(); ++it) doc[it.key()] = it.value();
    std::cout << doc.dump() << '\n';
}

void emit_error(const std::string& code, const std::string& message) {
    std::cerr << json{{"status", "error"}, {"code", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qdtune: simulated quantum-dot autotuning"};
    app.require_subcommand(1);
    app.fallthrough();
    Flags f;
    std::uint64_t seed_value = 0;
    int workers_value = 1;
    app.add_option("--config", f.config, "JSON experiment config");
    auto* seed_opt = app.add_option("--seed", seed_value, "Master seed");
    app.add_option("--out", f.out, "Output directory");
    app.add_option("--policy", f.policy, "fixed75 | fixed100 | dynamic");
    app.add_option("--source", f.source, "sim | scan:<path>");
    app.add_option("--classifier", f.classifier, "oracle | model:<path>");
    auto* workers_opt = app.add_option("--workers", workers_value, "Worker threads");

    auto* sample = app.add_subcommand("sample-device", "Draw a device and write device.json");
    bool reference = false;
    sample->add_flag("--reference", reference, "Write the reference device");

    auto* render = app.add_subcommand("render-scan", "Render a labeled scan and write scan.json");
    std::string device_path;
    std::vector<double> center{300, 300}, span{600, 600};
    double resolution = 2.0;
    bool no_noise = false;
    std::string acquisition = "v1";
    render->add_option("--device", device_path, "Device file (default: config or reference device)");
    render->add_option("--center", center, "Window center v1 v2 (mV)")->expected(2);
    render->add_option("--span", span, "Window span v1 v2 (mV)")->expected(2);
    render->add_option("--resolution", resolution, "mV per pixel");
    render->add_flag("--no-noise", no_noise, "Disable sensor noise");
    render->add_option("--acquisition", acquisition, "Sweep axis v1 | v2");

    auto* gen = app.add_subcommand("gen-dataset", "Generate a labeled training set");
    std::optional<int> n_devices, samples;
    gen->add_option("--devices", n_devices, "Number of sampled devices");
    gen->add_option("--samples", samples, "Windows per device");

    auto* train_cmd = app.add_subcommand("train", "Train the state classifier");
    std::string dataset_path;
    std::optional<int> steps;
    train_cmd->add_option("--dataset", dataset_path, "Dataset file (default: generate from config)");
    train_cmd->add_option("--steps", steps, "Optimizer steps");

    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a classifier on a dataset");
    eval_cmd->add_option("--dataset", dataset_path, "Dataset file")->required();

    auto* tune = app.add_subcommand("tune", "Run one autotuning episode");
    std::vector<double> start{350, 400};
    tune->add_option("--start", start, "Start point v1 v2 (mV)")->expected(2);

    auto* hood = app.add_subcommand("neighborhood", "Run 9x9 neighborhood experiments");
    std::vector<double> point;
    hood->add_option("--point", point, "Center point v1 v2 (mV); default: config points")->expected(2);

    auto* heat = app.add_subcommand("heatmap", "Success map over a grid of start points");
    auto* land = app.add_subcommand("landscape", "Fitness of every window of a scan");
    std::optional<std::size_t> window_px;
    land->add_option("--window", window_px, "Window side in pixels");

    auto* rep = app.add_subcommand("report", "Tables and summary from neighborhood.json files");
    std::vector<std::string> inputs;
    rep->add_option("--input", inputs, "neighborhood.json files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("usage_error", e.what());
        return 2;
    }
    if (*seed_opt) f.seed = seed_value;
    if (*workers_opt) f.workers = workers_value;

    try {
        Config cfg = load_config(f.config);
        if (f.seed) cfg.seed = *f.seed;
        if (f.workers) cfg.workers = *f.workers;
        if (cfg.workers < 1) throw ConfigError("--workers must be >= 1");

        if (*sample) {
            const DeviceParams p = reference ? reference_device() : sample_device(cfg.seed);
            const auto path = out_file(f, "device.json");
            write_json_file(device_to_json(p), path);
            emit_ok("sample-device", {path}, {{"device_seed", p.seed}});
        } else if (*render) {
            if (!device_path.empty()) cfg.device_file = device_path;
            const DeviceParams p = device_for(cfg);
            auto [grid, labels] = render_scan(p, {center[0], center[1]}, {span[0], span[1]}, resolution,
                                              cfg.noise && !no_noise, cfg.noise_seed.value_or(p.seed));
            grid.acquisition = axis_from_string(acquisition);
            const auto path = out_file(f, "scan.json");
            save_scan(grid, labels, path);
            emit_ok("render-scan", {path}, {{"rows", grid.rows()}, {"cols", grid.cols()}});
        } else if (*gen) {
            const Dataset d = generate_dataset(n_devices.value_or(cfg.n_devices), samples.value_or(cfg.samples_per_device),
                                               cfg.window_span, cfg.seed, cfg.dataset);
            const auto path = out_file(f, "dataset.json");
            save_dataset(d, path);
            emit_ok("gen-dataset", {path}, {{"samples", d.size()}});
        } else if (*train_cmd) {
            const Dataset d = dataset_path.empty()
                                  ? generate_dataset(cfg.n_devices, cfg.samples_per_device, cfg.window_span, cfg.seed,
                                                     cfg.dataset)
                                  : load_dataset(dataset_path);
            if (steps) cfg.training.steps = *steps;
            auto [train_set, test_set] = split_dataset(d, 1.0 - cfg.test_fraction, cfg.seed);
            const TrainingResult tr = train(train_set, cfg.training);
            const Evaluation ev = evaluate(tr.model, test_set);
            const auto model_path = out_file(f, "model.json");
            const auto loss_path = out_file(f, "loss.csv");
            const auto eval_path = out_file(f, "evaluation.json");
            save_model(tr.model, model_path);
            std::string loss = "step,loss\n";
            char line[64];
            for (std::size_t i = 0; i < tr.loss_trace.size(); ++i) {
                std::snprintf(line, sizeof line, "%zu,%.17g\n", i, tr.loss_trace[i]);
                loss += line;
            }
            write_text_file(loss, loss_path);
            write_json_file(evaluation_to_json(ev), eval_path);
            emit_ok("train", {model_path, loss_path, eval_path}, {{"test_accuracy", ev.accuracy}});
        } else if (*eval_cmd) {
            const Dataset d = load_dataset(dataset_path);
            if (f.classifier.rfind("model:", 0) != 0)
                throw ConfigError("evaluate needs --classifier model:<path>; datasets carry no label rasters");
            const ClassifierModel m = load_model(f.classifier.substr(6));
            const Evaluation ev = evaluate(m, d);
            const auto path = out_file(f, "evaluation.json");
            write_json_file(evaluation_to_json(ev), path);
            emit_ok("evaluate", {path}, {{"accuracy", ev.accuracy}});
        } else if (*tune) {
            const MeasurementSource src = source_for(f.source, cfg);
            validate_source(src);
            const auto cls = classifier_for(f.classifier);
            const RunSettings s = settings_for(cfg, policies_for(f, cfg).front());
            const TuningRun run = autotune(src, *cls, {start[0], start[1]}, s.scan, s.fitness, s.policy,
                                           s.termination, s.sandbox);
            const auto json_path = out_file(f, "run.json");
            const auto csv_path = out_file(f, "run.csv");
            json doc = run_to_json(run);
            const auto* scan = std::get_if<PremeasuredScan>(&src);
            if (!scan || scan->labels) doc["class"] = std::string(to_string(score_run(run, src, s)));
            write_json_file(doc, json_path);
            write_text_file(run_to_csv(run), csv_path);
            emit_ok("tune", {json_path, csv_path},
                    {{"iterations", run.iteration_count}, {"outcome", doc["outcome"]["type"]}});
        } else if (*hood) {
            const MeasurementSource src = source_for(f.source, cfg);
            validate_source(src);
            const auto cls = classifier_for(f.classifier);
            const std::vector<Voltage2> points =
                point.empty() ? cfg.points : std::vector<Voltage2>{{point[0], point[1]}};
            std::vector<ExperimentReport> reports;
            for (const auto& pol : policies_for(f, cfg))
                for (const auto& p : points)
                    reports.push_back(
                        neighborhood_experiment(src, *cls, p, settings_for(cfg, pol), cfg.radius_px, cfg.workers));
            const auto json_path = out_file(f, "neighborhood.json");
            const auto csv_path = out_file(f, "neighborhood.csv");
            const auto iter_path = out_file(f, "iterations.csv");
            const auto text_path = out_file(f, "summary.txt");
            write_json_file(reports_to_json(reports), json_path);
            write_text_file(reports_to_csv(reports), csv_path);
            write_text_file(iteration_table_to_csv(iteration_stats(reports)), iter_path);
            write_text_file(summary_text(reports), text_path);
            emit_ok("neighborhood", {json_path, csv_path, iter_path, text_path}, {{"experiments", reports.size()}});
        } else if (*heat) {
            const MeasurementSource src = source_for(f.source, cfg);
            validate_source(src);
            const auto cls = classifier_for(f.classifier);
            std::vector<fs::path> outputs;
            for (const auto& pol : policies_for(f, cfg)) {
                Heatmap m;
                const RunSettings s = settings_for(cfg, pol);
                if (const auto* scan = std::get_if<PremeasuredScan>(&src); scan && !cfg.heatmap_v1 && !cfg.heatmap_v2) {
                    m = heatmap(*scan, *cls, s, cfg.heatmap, cfg.workers);
                } else {
                    const Interval v1 = cfg.heatmap_v1.value_or(s.sandbox.v1_range);
                    const Interval v2 = cfg.heatmap_v2.value_or(s.sandbox.v2_range);
                    m = heatmap(src, *cls, s, cfg.heatmap, v1, v2, cfg.workers);
                }
                const auto path = out_file(f, "heatmap_" + pol + ".json");
                write_json_file(heatmap_to_json(m), path);
                outputs.push_back(path);
            }
            emit_ok("heatmap", outputs);
        } else if (*land) {
            MeasurementSource src = source_for(f.source, cfg);
            if (const auto* sim = std::get_if<SimulatedDevice>(&src)) {
                auto [grid, labels] = render_scan(sim->params, {300, 300}, {600, 600}, cfg.run.scan.resolution,
                                                  sim->noise, sim->noise_seed);
                src = PremeasuredScan{grid, labels};
            }
            validate_source(src);
            const auto cls = classifier_for(f.classifier);
            const LandscapeMap m = fitness_landscape(std::get<PremeasuredScan>(src), *cls,
                                                     window_px.value_or(cfg.window_px), cfg.run.fitness, cfg.workers);
            const auto path = out_file(f, "landscape.json");
            write_json_file(landscape_to_json(m), path);
            emit_ok("landscape", {path}, {{"rows", m.rows}, {"cols", m.cols}});
        } else if (*rep) {
            std::vector<ExperimentReport> reports;
            for (const auto& in : inputs) {
                auto part = reports_from_json(read_json_file(in));
                for (auto& r : part) reports.push_back(std::move(r));
            }
            if (reports.empty()) throw ConfigError("report: inputs hold no experiments");
            const auto csv_path = out_file(f, "report.csv");
            const auto iter_path = out_file(f, "report_iterations.csv");
            const auto text_path = out_file(f, "report.txt");
            write_text_file(reports_to_csv(reports), csv_path);
            write_text_file(iteration_table_to_csv(iteration_stats(reports)), iter_path);
            write_text_file(summary_text(reports), text_path);
            emit_ok("report", {csv_path, iter_path, text_path}, {{"experiments", reports.size()}});
        }
    } catch (const Error& e) {
        emit_error(e.code(), e.what());
        return 1;
    } catch (const std::exception& e) {
        emit_error("internal_error", e.what());
        return 3;
    }
    return 0;
}
