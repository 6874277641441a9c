#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qdtune {

// A point in plunger-gate space, millivolts.
struct Voltage2 {
    double v1 = 0.0;
    double v2 = 0.0;

    friend bool operator==(const Voltage2&, const Voltage2&) = default;
};

// Axis along which consecutive samples of a row were swept.
enum class Axis : std::uint8_t { V1, V2 };

std::string_view to_string(Axis a);
Axis axis_from_string(std::string_view s);

// Uniform axis of pixel-center voltages: origin + i * resolution.
std::vector<double> make_axis(double origin, double resolution, std::size_t n);

// Charge-sensor raster. Rows follow v2_axis, columns follow v1_axis, stored
// row-major.
struct ScanGrid {
    std::vector<double> v1_axis;
    std::vector<double> v2_axis;
    std::vector<double> values;
    double resolution = 1.0;
    Axis acquisition = Axis::V1;

    std::size_t rows() const { return v2_axis.size(); }
    std::size_t cols() const { return v1_axis.size(); }

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    // Throws ShapeError when axes and values disagree or spacing is off.
    void validate() const;

    friend bool operator==(const ScanGrid&, const ScanGrid&) = default;
};

// Ground-truth global state of the device at one voltage point. The integer
// values are the on-disk encoding.
enum class StateLabel : std::uint8_t {
    NoDot = 0,
    SingleLeft = 1,
    SingleCentral = 2,
    SingleRight = 3,
    DoubleDot = 4,
};

inline constexpr int kStateLabelCount = 5;

std::string_view to_string(StateLabel s);
StateLabel label_from_int(int v);

inline bool is_single_dot(StateLabel s) {
    return s == StateLabel::SingleLeft || s == StateLabel::SingleCentral ||
           s == StateLabel::SingleRight;
}

struct LabelGrid {
    std::vector<double> v1_axis;
    std::vector<double> v2_axis;
    std::vector<StateLabel> labels;

    std::size_t rows() const { return v2_axis.size(); }
    std::size_t cols() const { return v1_axis.size(); }
    StateLabel at(std::size_t r, std::size_t c) const { return labels[r * cols() + c]; }

    friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

// True when the label raster shares the scan's axes exactly.
bool aligned(const ScanGrid& grid, const LabelGrid& labels);

}  // namespace qdtune
