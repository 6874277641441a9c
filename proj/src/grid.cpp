#include "qdtune/grid.hpp"

#include <algorithm>
#include <cmath>

#include "qdtune/error.hpp"

namespace qdtune {

std::string_view to_string(Axis a) { return a == Axis::V1 ? "v1" : "v2"; }

Axis axis_from_string(std::string_view s) {
    if (s == "v1") return Axis::V1;
    if (s == "v2") return Axis::V2;
    throw ParseError("acquisition: expected \"v1\" or \"v2\", got \"" + std::string(s) + "\"");
}

std::vector<double> make_axis(double origin, double resolution, std::size_t n) {
    std::vector<double> axis(n);
    for (std::size_t i = 0; i < n; ++i) axis[i] = origin + static_cast<double>(i) * resolution;
    return axis;
}

namespace {

void check_axis(const std::vector<double>& axis, double resolution, const char* name) {
    if (axis.empty()) throw ShapeError(std::string(name) + " is empty");
    for (std::size_t i = 1; i < axis.size(); ++i) {
        const double step = axis[i] - axis[i - 1];
        if (!(step > 0.0)) throw ShapeError(std::string(name) + " is not strictly increasing");
        if (std::abs(step - resolution) > 1e-9 * std::max(1.0, resolution))
            throw ShapeError(std::string(name) + " spacing differs from resolution");
    }
}

}  // namespace

void ScanGrid::validate() const {
    if (!(resolution > 0.0)) throw ShapeError("resolution must be positive");
    check_axis(v1_axis, resolution, "v1_axis");
    check_axis(v2_axis, resolution, "v2_axis");
    if (values.size() != rows() * cols())
        throw ShapeError("values size " + std::to_string(values.size()) + " != " +
                         std::to_string(rows()) + "x" + std::to_string(cols()));
}

std::string_view to_string(StateLabel s) {
    switch (s) {
        case StateLabel::NoDot: return "NoDot";
        case StateLabel::SingleLeft: return "SingleLeft";
        case StateLabel::SingleCentral: return "SingleCentral";
        case StateLabel::SingleRight: return "SingleRight";
        case StateLabel::DoubleDot: return "DoubleDot";
    }
    return "?";
}

StateLabel label_from_int(int v) {
    if (v < 0 || v >= kStateLabelCount)
        throw ParseError("labels: integer " + std::to_string(v) + " is not a state label");
    return static_cast<StateLabel>(v);
}

bool aligned(const ScanGrid& grid, const LabelGrid& labels) {
    return grid.v1_axis == labels.v1_axis && grid.v2_axis == labels.v2_axis &&
           labels.labels.size() == grid.values.size();
}

}  // namespace qdtune
