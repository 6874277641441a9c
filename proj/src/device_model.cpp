#include "qdtune/device_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "qdtune/error.hpp"

namespace qdtune {

namespace {

// Half-width of the smooth gates that switch a dot's lines on and off at
// region boundaries, mV.
constexpr double kGateHalfWidth = 4.0;

// Central-dot lines are denser than the individual dots' lines.
constexpr double kCentralSpacingRatio = 0.75;

// Relation between the logistic scale and the FWHM of its derivative:
// FWHM = 2 * ln(3 + 2 sqrt 2) * scale.
const double kFwhmPerScale = 2.0 * std::log(3.0 + 2.0 * std::numbers::sqrt2);

bool in_domain(double v) { return v >= kDomainMin && v <= kDomainMax; }

void require_domain(double v1, double v2) {
    if (!in_domain(v1) || !in_domain(v2))
        throw DomainError("voltage (" + std::to_string(v1) + ", " + std::to_string(v2) +
                          ") mV outside [0, 600]^2");
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// C1 step from 0 (x <= -h) to 1 (x >= h), exactly flat outside.
double gate(double x) {
    if (x <= -kGateHalfWidth) return 0.0;
    if (x >= kGateHalfWidth) return 1.0;
    const double t = 0.5 * (x / kGateHalfWidth + 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Periodic staircase: broadened unit steps at mu = k * spacing for every
// integer k, minus the mean ramp so the value stays bounded. Gradient is a
// positive peak at each line and -1/spacing between lines.
double staircase(double mu, double spacing, double scale) {
    const double n = std::floor(mu / spacing);
    double sum = 0.0;
    for (int k = -4; k <= 4; ++k) sum += logistic((mu - (n + k) * spacing) / scale);
    return sum + (n - 4.0) - mu / spacing - 0.5;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double unit_open(std::uint64_t bits) {
    // (0, 1]
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

double gaussian_at(std::uint64_t seed, double v1, double v2) {
    std::uint64_t h = splitmix64(seed ^ 0x51ed270b2c8a5a3fULL);
    h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v1));
    h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v2));
    const double u1 = unit_open(h);
    const double u2 = unit_open(splitmix64(h));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double draw(std::mt19937_64& rng, const Interval& range) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (range.lower == range.upper) return range.lower;
    return range.lower + u * (range.upper - range.lower);
}

void check_range(const Interval& r, const char* name) {
    if (!(r.lower <= r.upper))
        throw ConfigError(std::string("variation.") + name + ": lower > upper");
}

}  // namespace

void DeviceParams::validate() const {
    auto open_domain = [](double v) { return v > kDomainMin && v < kDomainMax; };
    if (!open_domain(formation.lower) || !open_domain(formation.upper))
        throw ConfigError("formation thresholds must lie in (0, 600) mV");
    if (!(dd_band.lower < dd_band.upper)) throw ConfigError("dd_band.lower must be < upper");
    if (!(line_spacing > 0.0)) throw ConfigError("line_spacing must be positive");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
    if (!(transition_width > 0.0)) throw ConfigError("transition_width must be positive");
}

void VariationConfig::validate() const {
    check_range(v1_on, "v1_on");
    check_range(v2_on, "v2_on");
    check_range(merge_threshold, "merge_threshold");
    check_range(dd_band_lower, "dd_band_lower");
    check_range(dd_band_upper, "dd_band_upper");
    check_range(lever_arm, "lever_arm");
    check_range(line_spacing, "line_spacing");
    check_range(line_slope, "line_slope");
    check_range(interdot_coupling, "interdot_coupling");
    check_range(noise_sigma, "noise_sigma");
    check_range(background_gradient, "background_gradient");
}

VariationConfig pinned_variation(const VariationConfig& base) {
    auto pin = [](const Interval& r) { return Interval{r.mid(), r.mid()}; };
    VariationConfig v;
    v.v1_on = pin(base.v1_on);
    v.v2_on = pin(base.v2_on);
    v.merge_threshold = pin(base.merge_threshold);
    v.dd_band_lower = pin(base.dd_band_lower);
    v.dd_band_upper = pin(base.dd_band_upper);
    v.lever_arm = pin(base.lever_arm);
    v.line_spacing = pin(base.line_spacing);
    v.line_slope = pin(base.line_slope);
    v.interdot_coupling = pin(base.interdot_coupling);
    v.noise_sigma = pin(base.noise_sigma);
    v.background_gradient = pin(base.background_gradient);
    return v;
}

DeviceParams sample_device(std::uint64_t seed, const VariationConfig& variation) {
    variation.validate();
    std::mt19937_64 rng(splitmix64(seed));
    DeviceParams p;
    p.seed = seed;
    // Draw order is part of the format: changing it changes every device.
    p.formation.lower = draw(rng, variation.v1_on);
    p.formation.upper = draw(rng, variation.v2_on);
    p.merge_threshold = draw(rng, variation.merge_threshold);
    p.dd_band.lower = draw(rng, variation.dd_band_lower);
    p.dd_band.upper = draw(rng, variation.dd_band_upper);
    p.lever_arms.lower = draw(rng, variation.lever_arm);
    p.lever_arms.upper = draw(rng, variation.lever_arm);
    p.line_spacing = draw(rng, variation.line_spacing);
    p.line_slopes.lower = draw(rng, variation.line_slope);
    p.line_slopes.upper = draw(rng, variation.line_slope);
    p.interdot_coupling = draw(rng, variation.interdot_coupling);
    p.noise_sigma = draw(rng, variation.noise_sigma);
    p.background_gradient = draw(rng, variation.background_gradient);
    p.validate();
    return p;
}

DeviceParams reference_device() { return sample_device(2019, pinned_variation()); }

StateLabel state_at(const DeviceParams& p, double v1, double v2) {
    require_domain(v1, v2);
    const bool on1 = v1 >= p.v1_on();
    const bool on2 = v2 >= p.v2_on();
    if (!on1 && !on2) return StateLabel::NoDot;
    if (on1 && !on2) return StateLabel::SingleLeft;
    if (!on1 && on2) return StateLabel::SingleRight;
    if (v1 >= p.merge_threshold && v2 >= p.merge_threshold) return StateLabel::SingleCentral;
    const double detuning = v1 - v2;
    if (detuning > p.dd_band.upper) return StateLabel::SingleLeft;
    if (detuning < p.dd_band.lower) return StateLabel::SingleRight;
    return StateLabel::DoubleDot;
}

double sensor_response(const DeviceParams& p, double v1, double v2, bool with_noise,
                       std::uint64_t noise_seed) {
    require_domain(v1, v2);
    const double scale = p.transition_width / kFwhmPerScale;
    const double detuning = v1 - v2;

    const double merged = gate(std::min(v1, v2) - p.merge_threshold);
    const double left_on =
        gate(v1 - p.v1_on()) * gate(detuning - p.dd_band.lower) * (1.0 - merged);
    const double right_on =
        gate(v2 - p.v2_on()) * gate(p.dd_band.upper - detuning) * (1.0 - merged);

    const double mu1 = (v1 - p.v1_on()) + p.line_slopes.lower * (v2 - p.v2_on());
    const double mu2 = (v2 - p.v2_on()) + p.line_slopes.upper * (v1 - p.v1_on());

    double value = p.background_gradient * (v1 + v2);
    double right = 0.0;
    if (right_on > 0.0) {
        right = staircase(mu2, p.line_spacing, scale);
        value += p.lever_arms.upper * right_on * right;
    }
    if (left_on > 0.0) {
        // Each electron added to the right dot shifts the left dot's lines,
        // which opens the anticrossings of the honeycomb.
        const double shift = p.interdot_coupling * right_on * (right + mu2 / p.line_spacing);
        value += p.lever_arms.lower * left_on * staircase(mu1 - shift, p.line_spacing, scale);
    }
    if (merged > 0.0) {
        const double mu_c = v1 + v2 - 2.0 * p.merge_threshold;
        const double a_c = 0.5 * (p.lever_arms.lower + p.lever_arms.upper);
        value += a_c * merged * staircase(mu_c, kCentralSpacingRatio * p.line_spacing, scale);
    }
    if (with_noise && p.noise_sigma > 0.0)
        value += p.noise_sigma * gaussian_at(noise_seed, v1, v2);
    return value;
}

double sensor_response(const DeviceParams& p, double v1, double v2, bool with_noise) {
    return sensor_response(p, v1, v2, with_noise, p.seed);
}

std::pair<ScanGrid, LabelGrid> render_scan(const DeviceParams& p, Voltage2 center, Voltage2 span,
                                           double resolution, bool with_noise,
                                           std::uint64_t noise_seed) {
    if (!(resolution > 0.0) || !(span.v1 > 0.0) || !(span.v2 > 0.0))
        throw ShapeError("span and resolution must be positive");
    const double n1f = span.v1 / resolution;
    const double n2f = span.v2 / resolution;
    const double n1r = std::round(n1f);
    const double n2r = std::round(n2f);
    if (std::abs(n1f - n1r) > 1e-9 || std::abs(n2f - n2r) > 1e-9)
        throw ShapeError("span/resolution must be an integer pixel count");
    const double lo1 = center.v1 - 0.5 * span.v1;
    const double lo2 = center.v2 - 0.5 * span.v2;
    if (lo1 < kDomainMin || lo2 < kDomainMin || lo1 + span.v1 > kDomainMax ||
        lo2 + span.v2 > kDomainMax)
        throw DomainError("scan window leaves [0, 600]^2");

    const auto n1 = static_cast<std::size_t>(n1r);
    const auto n2 = static_cast<std::size_t>(n2r);
    ScanGrid grid;
    grid.resolution = resolution;
    grid.acquisition = Axis::V1;
    grid.v1_axis = make_axis(lo1 + 0.5 * resolution, resolution, n1);
    grid.v2_axis = make_axis(lo2 + 0.5 * resolution, resolution, n2);
    grid.values.resize(n1 * n2);

    LabelGrid labels;
    labels.v1_axis = grid.v1_axis;
    labels.v2_axis = grid.v2_axis;
    labels.labels.resize(n1 * n2);

    for (std::size_t r = 0; r < n2; ++r) {
        const double v2 = grid.v2_axis[r];
        for (std::size_t c = 0; c < n1; ++c) {
            const double v1 = grid.v1_axis[c];
            grid.values[r * n1 + c] = sensor_response(p, v1, v2, with_noise, noise_seed);
            labels.labels[r * n1 + c] = state_at(p, v1, v2);
        }
    }
    return {std::move(grid), std::move(labels)};
}

std::pair<ScanGrid, LabelGrid> render_scan(const DeviceParams& p, Voltage2 center, Voltage2 span,
                                           double resolution, bool with_noise) {
    return render_scan(p, center, span, resolution, with_noise, p.seed);
}

nlohmann::json device_to_json(const DeviceParams& p) {
    return {
        {"schema", kDeviceSchema},
        {"seed", p.seed},
        {"formation_thresholds", {p.formation.lower, p.formation.upper}},
        {"merge_threshold", p.merge_threshold},
        {"dd_band", {p.dd_band.lower, p.dd_band.upper}},
        {"lever_arms", {p.lever_arms.lower, p.lever_arms.upper}},
        {"line_spacing", p.line_spacing},
        {"line_slopes", {p.line_slopes.lower, p.line_slopes.upper}},
        {"interdot_coupling", p.interdot_coupling},
        {"noise_sigma", p.noise_sigma},
        {"background_gradient", p.background_gradient},
        {"transition_width", p.transition_width},
    };
}

namespace {

const nlohmann::json& field(const nlohmann::json& doc, const char* name) {
    auto it = doc.find(name);
    if (it == doc.end()) throw ParseError(std::string("device: missing field \"") + name + "\"");
    return *it;
}

double number(const nlohmann::json& doc, const char* name) {
    const auto& v = field(doc, name);
    if (!v.is_number()) throw ParseError(std::string("device: field \"") + name + "\" is not a number");
    return v.get<double>();
}

Interval pair_of(const nlohmann::json& doc, const char* name) {
    const auto& v = field(doc, name);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ParseError(std::string("device: field \"") + name + "\" must be a 2-number array");
    return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

DeviceParams device_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("device: document is not an object");
    const auto& schema = field(doc, "schema");
    if (!schema.is_string()) throw ParseError("device: field \"schema\" is not a string");
    if (schema.get<std::string>() != kDeviceSchema)
        throw VersionError("device: schema \"" + schema.get<std::string>() + "\", expected \"" +
                           kDeviceSchema + "\"");
    DeviceParams p;
    const auto& seed = field(doc, "seed");
    if (!seed.is_number_unsigned()) throw ParseError("device: field \"seed\" is not an unsigned integer");
    p.seed = seed.get<std::uint64_t>();
    p.formation = pair_of(doc, "formation_thresholds");
    p.merge_threshold = number(doc, "merge_threshold");
    p.dd_band = pair_of(doc, "dd_band");
    p.lever_arms = pair_of(doc, "lever_arms");
    p.line_spacing = number(doc, "line_spacing");
    p.line_slopes = pair_of(doc, "line_slopes");
    p.interdot_coupling = number(doc, "interdot_coupling");
    p.noise_sigma = number(doc, "noise_sigma");
    p.background_gradient = number(doc, "background_gradient");
    if (doc.contains("transition_width")) p.transition_width = number(doc, "transition_width");
    p.validate();
    return p;
}

}  // namespace qdtune
