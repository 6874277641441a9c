#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qdtune/device_model.hpp"
#include "qdtune/grid.hpp"
#include "qdtune/preprocess.hpp"

namespace qdtune {

// Fractions of a window's pixels in each global state. Component order
// {none, single dot, double dot} is also the class index order.
struct ProbabilityVector {
    double p_none = 0.0;
    double p_sd = 0.0;
    double p_dd = 0.0;

    std::array<double, 3> as_array() const { return {p_none, p_sd, p_dd}; }
    static ProbabilityVector from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
    // Index of the largest component; ties go to the lower index.
    int argmax() const;
    bool valid(double tol = 1e-12) const;

    friend bool operator==(const ProbabilityVector&, const ProbabilityVector&) = default;
};

enum class StateClass : int { None = 0, SingleDot = 1, DoubleDot = 2 };

ProbabilityVector oracle_probability(const LabelGrid& labels);

struct LabeledSample {
    ProcessedImage image;
    ProbabilityVector target;
    Voltage2 center;
    Voltage2 span;
    std::uint64_t device_seed = 0;
};

using Dataset = std::vector<LabeledSample>;

struct DatasetOptions {
    VariationConfig variation{};
    double resolution = 2.0;
    bool noise = true;
    // Multiplies every sampled device's noise_sigma.
    double noise_scale = 1.0;
    int max_redraws = 1000;
};

// samples_per_device random windows from each of n_devices sampled devices.
// Reproducible from seed.
Dataset generate_dataset(int n_devices, int samples_per_device, double window_span,
                         std::uint64_t seed, const DatasetOptions& options = {});

// Deterministic split: the first round(train_fraction * n) samples of a
// seeded permutation go to training.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction,
                                          std::uint64_t seed);

// Fully connected network with ReLU hidden layers and softmax output.
// weights[l] is stored input-major: weights[l][i * out + o].
struct ClassifierModel {
    std::vector<std::size_t> layer_sizes;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    std::size_t parameter_count() const;
    // Flat view order: layer 0 weights, layer 0 biases, layer 1 weights, ...
    double& parameter(std::size_t flat_index);
    void validate() const;

    friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

ClassifierModel init_model(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);

inline const std::vector<std::size_t> kDefaultLayers{kImagePixels, 128, 64, 3};

struct TrainingConfig {
    double learning_rate = 0.001;
    int steps = 5000;
    int batch_size = 50;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    std::vector<std::size_t> layer_sizes = kDefaultLayers;

    void validate() const;
};

struct TrainingResult {
    ClassifierModel model;
    std::vector<double> loss_trace;  // mini-batch loss per step
};

TrainingResult train(const Dataset& data, const TrainingConfig& config);

// Mean soft-target cross-entropy over `batch` (indices into data); fills
// `gradient` (flat parameter order) when non-null.
double loss_and_gradient(const ClassifierModel& model, const Dataset& data,
                         std::span<const std::size_t> batch, std::vector<double>* gradient);

ProbabilityVector classify(const ClassifierModel& model, const ProcessedImage& image);

struct Evaluation {
    double accuracy = 0.0;
    // confusion[true class][predicted class]
    std::array<std::array<std::size_t, 3>, 3> confusion{};
    std::size_t count = 0;
};

template <class Predict>
Evaluation evaluate_with(const Dataset& testset, Predict&& predict) {
    Evaluation ev;
    std::size_t hits = 0;
    for (const auto& s : testset) {
        const int truth = s.target.argmax();
        const int guess = predict(s).argmax();
        ++ev.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(guess)];
        hits += truth == guess;
    }
    ev.count = testset.size();
    ev.accuracy = testset.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(testset.size());
    return ev;
}

Evaluation evaluate(const ClassifierModel& model, const Dataset& testset);

// What the tuner calls in Step 3. Implementations must be safe for
// concurrent calls.
class StateClassifier {
public:
    virtual ~StateClassifier() = default;
    // labels is the window's ground truth when the source has it.
    virtual ProbabilityVector classify(const ProcessedImage& image, const LabelGrid* labels) const = 0;
};

// Returns the exact pixel fractions; requires ground-truth labels.
class OracleClassifier final : public StateClassifier {
public:
    ProbabilityVector classify(const ProcessedImage& image, const LabelGrid* labels) const override;
};

class ModelClassifier final : public StateClassifier {
public:
    explicit ModelClassifier(ClassifierModel model);
    ProbabilityVector classify(const ProcessedImage& image, const LabelGrid* labels) const override;
    const ClassifierModel& model() const { return model_; }

private:
    ClassifierModel model_;
};

inline constexpr const char* kModelSchema = "qdtune.model/1";
inline constexpr const char* kDatasetSchema = "qdtune.dataset/1";

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace qdtune
