#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>

#include "qdtune/device_model.hpp"
#include "qdtune/grid.hpp"

namespace qdtune {

struct Sandbox {
    Interval v1_range{0.0, 600.0};
    Interval v2_range{0.0, 600.0};
    double blocked_fitness = 2.0;

    void validate() const;
    bool contains(double v1, double v2) const {
        return v1 >= v1_range.lower && v1 <= v1_range.upper && v2 >= v2_range.lower &&
               v2 <= v2_range.upper;
    }
};

struct SimulatedDevice {
    DeviceParams params;
    bool noise = false;
    std::uint64_t noise_seed = 0;
};

struct PremeasuredScan {
    ScanGrid grid;
    std::optional<LabelGrid> labels;
};

// Backend a tuner measures through. Both alternatives are immutable once
// built, so one source can serve concurrent runs.
using MeasurementSource = std::variant<SimulatedDevice, PremeasuredScan>;

// Checks the PremeasuredScan invariants (valid raster, aligned labels).
void validate_source(const MeasurementSource& source);

// One acquired window, with ground truth when the backend has it.
struct ScanWindow {
    ScanGrid grid;
    std::optional<LabelGrid> labels;
};

// The requested window touched voltages outside the sandbox or the stored
// raster; nothing was measured.
struct Blocked {
    std::string reason;
};

using AcquireResult = std::variant<ScanWindow, Blocked>;

// Measures span around center at the given resolution. Windows whose edges
// leave the sandbox are Blocked. Premeasured sources snap the window center
// to the nearest stored pixel and crop; coarser integer multiples of the
// native resolution are subsampled, finer ones throw UnsupportedResolution.
AcquireResult acquire(const MeasurementSource& source, Voltage2 center, Voltage2 span,
                      double resolution, const Sandbox& sandbox);

// Sub-raster [row0, row0+rows) x [col0, col0+cols) of a stored scan.
ScanWindow crop(const PremeasuredScan& scan, std::size_t row0, std::size_t col0,
                std::size_t rows, std::size_t cols);

// Negates every sensor value (charge-sensor flip fixture).
ScanGrid inject_sensor_flip(ScanGrid grid);

inline constexpr const char* kScanSchema = "qdtune.scan/1";

// File layout: one JSON object, see README. Values and axes are base64 of
// little-endian float64, row-major; labels are an integer array.
void save_scan(const ScanGrid& grid, const std::optional<LabelGrid>& labels,
               const std::filesystem::path& path);
PremeasuredScan load_scan(const std::filesystem::path& path);

nlohmann::json scan_to_json(const ScanGrid& grid, const std::optional<LabelGrid>& labels);
PremeasuredScan scan_from_json(const nlohmann::json& doc);

}  // namespace qdtune
