#include "qdtune/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "qdtune/codec.hpp"
#include "qdtune/error.hpp"

namespace qdtune {

int ProbabilityVector::argmax() const {
    int best = 0;
    const auto a = as_array();
    for (int k = 1; k < 3; ++k)
        if (a[static_cast<std::size_t>(k)] > a[static_cast<std::size_t>(best)]) best = k;
    return best;
}

bool ProbabilityVector::valid(double tol) const {
    for (double p : as_array())
        if (!(p >= 0.0 && p <= 1.0)) return false;
    return std::abs(p_none + p_sd + p_dd - 1.0) <= tol;
}

ProbabilityVector oracle_probability(const LabelGrid& labels) {
    const std::size_t n = labels.labels.size();
    if (n == 0) throw ShapeError("oracle_probability: empty label grid");
    std::size_t sd = 0;
    std::size_t dd = 0;
    for (StateLabel s : labels.labels) {
        sd += is_single_dot(s);
        dd += s == StateLabel::DoubleDot;
    }
    const double total = static_cast<double>(n);
    return {static_cast<double>(n - sd - dd) / total, static_cast<double>(sd) / total,
            static_cast<double>(dd) / total};
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Dataset generate_dataset(int n_devices, int samples_per_device, double window_span,
                         std::uint64_t seed, const DatasetOptions& options) {
    if (n_devices < 1 || samples_per_device < 1)
        throw ConfigError("generate_dataset: n_devices and samples_per_device must be >= 1");
    if (!(window_span > 0.0)) throw ConfigError("generate_dataset: window_span must be positive");
    Dataset out;
    out.reserve(static_cast<std::size_t>(n_devices) * static_cast<std::size_t>(samples_per_device));
    const double half = 0.5 * window_span;
    for (int d = 0; d < n_devices; ++d) {
        const std::uint64_t device_seed = mix(seed, static_cast<std::uint64_t>(d));
        DeviceParams device = sample_device(device_seed, options.variation);
        device.noise_sigma *= options.noise_scale;
        std::mt19937_64 rng(mix(device_seed, 0x5eedULL));
        for (int s = 0; s < samples_per_device; ++s) {
            Voltage2 center{};
            int tries = 0;
            for (;;) {
                center = {kDomainMax * uniform01(rng), kDomainMax * uniform01(rng)};
                if (center.v1 - half >= kDomainMin && center.v1 + half <= kDomainMax &&
                    center.v2 - half >= kDomainMin && center.v2 + half <= kDomainMax)
                    break;
                if (++tries >= options.max_redraws)
                    throw ConfigError("generate_dataset: no in-domain window after " +
                                      std::to_string(tries) + " draws");
            }
            auto [grid, labels] = render_scan(device, center, {window_span, window_span},
                                              options.resolution, options.noise,
                                              mix(device_seed, static_cast<std::uint64_t>(s) + 1));
            out.push_back({process(grid), oracle_probability(labels), center,
                           {window_span, window_span}, device_seed});
        }
    }
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction,
                                          std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("split_dataset: train_fraction must be in (0, 1)");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(data.size())));
    std::pair<Dataset, Dataset> out;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? out.first : out.second).push_back(data[order[i]]);
    return out;
}

std::size_t ClassifierModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

double& ClassifierModel::parameter(std::size_t flat) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (flat < weights[l].size()) return weights[l][flat];
        flat -= weights[l].size();
        if (flat < biases[l].size()) return biases[l][flat];
        flat -= biases[l].size();
    }
    throw ShapeError("parameter index out of range");
}

void ClassifierModel::validate() const {
    if (layer_sizes.size() < 2) throw ShapeError("model: need at least input and output layers");
    if (layer_sizes.front() != kImagePixels) throw ShapeError("model: input layer must have 900 units");
    if (layer_sizes.back() != 3) throw ShapeError("model: output layer must have 3 units");
    const std::size_t layers = layer_sizes.size() - 1;
    if (weights.size() != layers || biases.size() != layers)
        throw ShapeError("model: tensor count does not match layer sizes");
    for (std::size_t l = 0; l < layers; ++l) {
        if (weights[l].size() != layer_sizes[l] * layer_sizes[l + 1])
            throw ShapeError("model: weight tensor " + std::to_string(l) + " has the wrong size");
        if (biases[l].size() != layer_sizes[l + 1])
            throw ShapeError("model: bias tensor " + std::to_string(l) + " has the wrong size");
    }
}

ClassifierModel init_model(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    ClassifierModel m;
    m.layer_sizes = layer_sizes;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t in = layer_sizes[l];
        const std::size_t out = layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in));
        std::vector<double> w(in * out);
        for (double& x : w) x = limit * (2.0 * uniform01(rng) - 1.0);
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(out, 0.0);
    }
    m.validate();
    return m;
}

void TrainingConfig::validate() const {
    if (!(learning_rate > 0.0) || steps <= 0 || batch_size <= 0)
        throw ConfigError("training: learning_rate, steps and batch_size must be positive");
}

namespace {

// Activations of every layer for one input; the last entry holds logits.
void forward(const ClassifierModel& m, std::span<const double> input,
             std::vector<std::vector<double>>& acts) {
    const std::size_t layers = m.weights.size();
    acts.resize(layers + 1);
    acts[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = m.layer_sizes[l];
        const std::size_t out = m.layer_sizes[l + 1];
        auto& z = acts[l + 1];
        z = m.biases[l];
        const double* w = m.weights[l].data();
        for (std::size_t i = 0; i < in; ++i) {
            const double a = acts[l][i];
            if (a == 0.0) continue;
            const double* row = w + i * out;
            for (std::size_t o = 0; o < out; ++o) z[o] += a * row[o];
        }
        if (l + 1 < layers)
            for (double& v : z) v = std::max(v, 0.0);
    }
}

// log-softmax of logits.
std::array<double, 3> log_softmax(const std::vector<double>& z) {
    const double top = std::max({z[0], z[1], z[2]});
    const double lse = top + std::log(std::exp(z[0] - top) + std::exp(z[1] - top) + std::exp(z[2] - top));
    return {z[0] - lse, z[1] - lse, z[2] - lse};
}

}  // namespace

double loss_and_gradient(const ClassifierModel& m, const Dataset& data,
                         std::span<const std::size_t> batch, std::vector<double>* gradient) {
    if (batch.empty()) throw ConfigError("loss_and_gradient: empty batch");
    const std::size_t layers = m.weights.size();
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    // Gradient tensors laid out like the model.
    std::vector<std::vector<double>> gw;
    std::vector<std::vector<double>> gb;
    if (gradient) {
        for (std::size_t l = 0; l < layers; ++l) {
            gw.emplace_back(m.weights[l].size(), 0.0);
            gb.emplace_back(m.biases[l].size(), 0.0);
        }
    }

    std::vector<std::vector<double>> acts;
    std::vector<double> delta;
    std::vector<double> prev;
    double loss = 0.0;
    for (std::size_t idx : batch) {
        const LabeledSample& s = data.at(idx);
        forward(m, s.image.values, acts);
        const auto logp = log_softmax(acts[layers]);
        const auto t = s.target.as_array();
        for (std::size_t k = 0; k < 3; ++k) loss -= t[k] * logp[k];
        if (!gradient) continue;

        delta.assign(3, 0.0);
        for (std::size_t k = 0; k < 3; ++k) delta[k] = (std::exp(logp[k]) - t[k]) * inv_b;
        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = m.layer_sizes[l];
            const std::size_t out = m.layer_sizes[l + 1];
            for (std::size_t o = 0; o < out; ++o) gb[l][o] += delta[o];
            double* g = gw[l].data();
            for (std::size_t i = 0; i < in; ++i) {
                const double a = acts[l][i];
                if (a == 0.0) continue;
                double* row = g + i * out;
                for (std::size_t o = 0; o < out; ++o) row[o] += a * delta[o];
            }
            if (l == 0) break;
            prev.assign(in, 0.0);
            const double* w = m.weights[l].data();
            for (std::size_t i = 0; i < in; ++i) {
                if (acts[l][i] <= 0.0) continue;  // ReLU gate
                const double* row = w + i * out;
                double acc = 0.0;
                for (std::size_t o = 0; o < out; ++o) acc += row[o] * delta[o];
                prev[i] = acc;
            }
            delta.swap(prev);
        }
    }

    if (gradient) {
        gradient->clear();
        gradient->reserve(m.parameter_count());
        for (std::size_t l = 0; l < layers; ++l) {
            gradient->insert(gradient->end(), gw[l].begin(), gw[l].end());
            gradient->insert(gradient->end(), gb[l].begin(), gb[l].end());
        }
    }
    return loss * inv_b;
}

TrainingResult train(const Dataset& data, const TrainingConfig& config) {
    config.validate();
    if (data.size() < static_cast<std::size_t>(config.batch_size))
        throw ConfigError("train: dataset has fewer samples than one batch");

    TrainingResult result;
    result.model = init_model(config.layer_sizes, config.seed);
    ClassifierModel& m = result.model;
    const std::size_t n_params = m.parameter_count();
    std::vector<double> first(n_params, 0.0);
    std::vector<double> second(n_params, 0.0);
    std::vector<double> grad;

    std::mt19937_64 rng(mix(config.seed, 0xba7c4ULL));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    std::vector<std::size_t> batch(static_cast<std::size_t>(config.batch_size));

    result.loss_trace.reserve(static_cast<std::size_t>(config.steps));
    double beta1_t = 1.0;
    double beta2_t = 1.0;
    for (int step = 0; step < config.steps; ++step) {
        for (auto& b : batch) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            b = order[cursor++];
        }
        const double loss = loss_and_gradient(m, data, batch, &grad);
        if (!std::isfinite(loss))
            throw DivergenceError("train: non-finite loss at step " + std::to_string(step), step);
        result.loss_trace.push_back(loss);

        beta1_t *= config.beta1;
        beta2_t *= config.beta2;
        const double step_size = config.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
        std::size_t flat = 0;
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            for (auto* tensor : {&m.weights[l], &m.biases[l]}) {
                for (double& p : *tensor) {
                    const double g = grad[flat];
                    first[flat] = config.beta1 * first[flat] + (1.0 - config.beta1) * g;
                    second[flat] = config.beta2 * second[flat] + (1.0 - config.beta2) * g * g;
                    p -= step_size * first[flat] / (std::sqrt(second[flat]) + config.epsilon);
                    ++flat;
                }
            }
        }
    }
    return result;
}

ProbabilityVector classify(const ClassifierModel& model, const ProcessedImage& image) {
    std::vector<std::vector<double>> acts;
    forward(model, image.values, acts);
    const auto logp = log_softmax(acts.back());
    std::array<double, 3> p{std::exp(logp[0]), std::exp(logp[1]), std::exp(logp[2])};
    const double total = p[0] + p[1] + p[2];
    for (double& x : p) x /= total;
    return ProbabilityVector::from_array(p);
}

Evaluation evaluate(const ClassifierModel& model, const Dataset& testset) {
    return evaluate_with(testset, [&](const LabeledSample& s) { return classify(model, s.image); });
}

ProbabilityVector OracleClassifier::classify(const ProcessedImage&, const LabelGrid* labels) const {
    if (!labels) throw ConfigError("oracle classifier needs ground-truth labels from the source");
    return oracle_probability(*labels);
}

ModelClassifier::ModelClassifier(ClassifierModel model) : model_(std::move(model)) { model_.validate(); }

ProbabilityVector ModelClassifier::classify(const ProcessedImage& image, const LabelGrid*) const {
    return qdtune::classify(model_, image);
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
    model.validate();
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        weights.push_back(encode_f64(model.weights[l]));
        biases.push_back(encode_f64(model.biases[l]));
    }
    write_json_file({{"schema", kModelSchema},
                     {"layer_sizes", model.layer_sizes},
                     {"activation", "relu"},
                     {"output", "softmax"},
                     {"weight_layout", "input-major"},
                     {"weights", weights},
                     {"biases", biases}},
                    path);
}

ClassifierModel load_model(const std::filesystem::path& path) {
    const auto doc = read_json_file(path);
    const std::string ctx = "model";
    require_schema(doc, ctx, kModelSchema);
    ClassifierModel m;
    const auto& sizes = require_field(doc, ctx, "layer_sizes");
    if (!sizes.is_array()) throw ParseError("model: field \"layer_sizes\" is not an array");
    for (const auto& s : sizes) {
        if (!s.is_number_unsigned()) throw ParseError("model: field \"layer_sizes\" holds a non-integer");
        m.layer_sizes.push_back(s.get<std::size_t>());
    }
    const auto& weights = require_field(doc, ctx, "weights");
    const auto& biases = require_field(doc, ctx, "biases");
    if (!weights.is_array() || !biases.is_array() || weights.size() + 1 != m.layer_sizes.size() ||
        biases.size() != weights.size())
        throw ParseError("model: weights/biases do not match layer_sizes");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const std::size_t in = m.layer_sizes[l];
        const std::size_t out = m.layer_sizes[l + 1];
        if (!weights[l].is_string() || !biases[l].is_string())
            throw ParseError("model: weight blobs must be base64 strings");
        m.weights.push_back(decode_f64(weights[l].get<std::string>(),
                                       "model.weights[" + std::to_string(l) + "]", in * out));
        m.biases.push_back(decode_f64(biases[l].get<std::string>(),
                                      "model.biases[" + std::to_string(l) + "]", out));
    }
    try {
        m.validate();
    } catch (const ShapeError& e) {
        throw ParseError(e.what());
    }
    return m;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::vector<double> images;
    std::vector<double> targets;
    images.reserve(data.size() * kImagePixels);
    targets.reserve(data.size() * 3);
    nlohmann::json provenance = nlohmann::json::array();
    for (const auto& s : data) {
        images.insert(images.end(), s.image.values.begin(), s.image.values.end());
        const auto t = s.target.as_array();
        targets.insert(targets.end(), t.begin(), t.end());
        provenance.push_back({{"center", {s.center.v1, s.center.v2}},
                              {"span", {s.span.v1, s.span.v2}},
                              {"device_seed", s.device_seed}});
    }
    write_json_file({{"schema", kDatasetSchema},
                     {"count", data.size()},
                     {"image_shape", {kImageSide, kImageSide}},
                     {"images", encode_f64(images)},
                     {"targets", encode_f64(targets)},
                     {"provenance", provenance}},
                    path);
}

Dataset load_dataset(const std::filesystem::path& path) {
    const auto doc = read_json_file(path);
    const std::string ctx = "dataset";
    require_schema(doc, ctx, kDatasetSchema);
    const std::size_t count = require_size(doc, ctx, "count");
    const auto images = decode_f64(require_string(doc, ctx, "images"), "dataset.images", count * kImagePixels);
    const auto targets = decode_f64(require_string(doc, ctx, "targets"), "dataset.targets", count * 3);
    const auto& prov = require_field(doc, ctx, "provenance");
    if (!prov.is_array() || prov.size() != count)
        throw ParseError("dataset: field \"provenance\" must hold one record per sample");
    Dataset out(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto& s = out[i];
        std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(i * kImagePixels), kImagePixels,
                    s.image.values.begin());
        s.target = {targets[3 * i], targets[3 * i + 1], targets[3 * i + 2]};
        const auto& p = prov[i];
        try {
            s.center = {p.at("center").at(0).get<double>(), p.at("center").at(1).get<double>()};
            s.span = {p.at("span").at(0).get<double>(), p.at("span").at(1).get<double>()};
            s.device_seed = p.at("device_seed").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("dataset: provenance[" + std::to_string(i) + "]: " + e.what());
        }
    }
    return out;
}

}  // namespace qdtune
