#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <json.hpp>

#include "qdtune/grid.hpp"

namespace qdtune {

// Plunger voltages accepted by the device model, mV.
inline constexpr double kDomainMin = 0.0;
inline constexpr double kDomainMax = 600.0;

struct Interval {
    double lower = 0.0;
    double upper = 0.0;

    double mid() const { return 0.5 * (lower + upper); }
    friend bool operator==(const Interval&, const Interval&) = default;
};

// One synthetic double-dot device.
//
// State geometry: no dot below both formation thresholds; a single left
// (right) dot when only plunger 1 (2) is above its threshold; a double dot
// when both are formed and v1 - v2 lies inside dd_band; the dot on the
// leading side absorbs the other outside the band; both plungers above
// merge_threshold form one central dot.
//
// Sensor response: each active dot contributes a train of thermally
// broadened charge-addition steps along its chemical-potential coordinate,
// weighted by its lever arm, on top of a linear background.
struct DeviceParams {
    std::uint64_t seed = 0;
    Interval formation{210.0, 210.0};  // (v1_on, v2_on)
    double merge_threshold = 410.0;
    Interval dd_band{-80.0, 80.0};  // bounds on v1 - v2
    Interval lever_arms{1.0, 1.0};  // (a1, a2)
    double line_spacing = 19.0;
    Interval line_slopes{0.22, 0.22};  // (s_left, s_right)
    double interdot_coupling = 4.0;
    double noise_sigma = 0.015;
    double background_gradient = 0.025;
    double transition_width = 2.0;  // FWHM of one line in the gradient, mV

    double v1_on() const { return formation.lower; }
    double v2_on() const { return formation.upper; }

    // Throws ConfigError on violated invariants.
    void validate() const;

    friend bool operator==(const DeviceParams&, const DeviceParams&) = default;
};

// Sampling ranges for sample_device. A zero-width range pins the field.
struct VariationConfig {
    Interval v1_on{175.0, 245.0};
    Interval v2_on{175.0, 245.0};
    Interval merge_threshold{380.0, 440.0};
    Interval dd_band_lower{-100.0, -60.0};
    Interval dd_band_upper{60.0, 100.0};
    Interval lever_arm{0.7, 1.3};
    Interval line_spacing{14.0, 24.0};
    Interval line_slope{0.1, 0.34};
    Interval interdot_coupling{2.0, 6.0};
    Interval noise_sigma{0.0, 0.03};
    Interval background_gradient{0.01, 0.04};

    void validate() const;
};

// VariationConfig with every range collapsed to its midpoint; sampling it
// yields the reference device.
VariationConfig pinned_variation(const VariationConfig& base = {});

DeviceParams sample_device(std::uint64_t seed, const VariationConfig& variation = {});

// The seeded device used by the experiments and acceptance checks.
DeviceParams reference_device();

StateLabel state_at(const DeviceParams& params, double v1, double v2);

// Noise is a pure function of (noise_seed, v1, v2) so repeated or overlapping
// acquisitions agree.
double sensor_response(const DeviceParams& params, double v1, double v2, bool with_noise,
                       std::uint64_t noise_seed);
double sensor_response(const DeviceParams& params, double v1, double v2, bool with_noise);

// Raster of span/resolution pixels per axis whose pixel centers are
// center - span/2 + (i + 1/2) * resolution. Throws DomainError when the window
// leaves [0, 600]^2 and ShapeError when span/resolution is not an integer.
std::pair<ScanGrid, LabelGrid> render_scan(const DeviceParams& params, Voltage2 center,
                                           Voltage2 span, double resolution, bool with_noise,
                                           std::uint64_t noise_seed);
std::pair<ScanGrid, LabelGrid> render_scan(const DeviceParams& params, Voltage2 center,
                                           Voltage2 span, double resolution, bool with_noise);

inline constexpr const char* kDeviceSchema = "qdtune.device/1";

nlohmann::json device_to_json(const DeviceParams& params);
DeviceParams device_from_json(const nlohmann::json& doc);

}  // namespace qdtune
