#include "qdtune/scan_io.hpp"

#include <cmath>

#include "qdtune/codec.hpp"
#include "qdtune/error.hpp"

namespace qdtune {

void Sandbox::validate() const {
    if (!(v1_range.lower < v1_range.upper) || !(v2_range.lower < v2_range.upper))
        throw ConfigError("sandbox: min must be < max on both axes");
}

void validate_source(const MeasurementSource& source) {
    if (const auto* scan = std::get_if<PremeasuredScan>(&source)) {
        scan->grid.validate();
        if (scan->labels && !aligned(scan->grid, *scan->labels))
            throw ShapeError("premeasured scan: labels do not align with the scan axes");
    } else {
        std::get<SimulatedDevice>(source).params.validate();
    }
}

namespace {

std::size_t pixel_count(double span, double resolution, const char* axis) {
    const double n = span / resolution;
    const double r = std::round(n);
    if (std::abs(n - r) > 1e-9 || r < 1.0)
        throw ShapeError(std::string("span/resolution along ") + axis + " is not a positive integer");
    return static_cast<std::size_t>(r);
}

template <class T>
std::vector<T> gather(const std::vector<T>& src, std::size_t src_cols, std::size_t row0,
                      std::size_t col0, std::size_t rows, std::size_t cols, std::size_t stride) {
    std::vector<T> out;
    out.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out.push_back(src[(row0 + r * stride) * src_cols + col0 + c * stride]);
    return out;
}

std::vector<double> axis_slice(const std::vector<double>& axis, std::size_t first, std::size_t n,
                               std::size_t stride) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = axis[first + i * stride];
    return out;
}

ScanWindow crop_strided(const PremeasuredScan& scan, std::size_t row0, std::size_t col0,
                        std::size_t rows, std::size_t cols, std::size_t stride) {
    const ScanGrid& g = scan.grid;
    ScanWindow w;
    w.grid.resolution = g.resolution * static_cast<double>(stride);
    w.grid.acquisition = g.acquisition;
    w.grid.v1_axis = axis_slice(g.v1_axis, col0, cols, stride);
    w.grid.v2_axis = axis_slice(g.v2_axis, row0, rows, stride);
    w.grid.values = gather(g.values, g.cols(), row0, col0, rows, cols, stride);
    if (scan.labels) {
        LabelGrid l;
        l.v1_axis = w.grid.v1_axis;
        l.v2_axis = w.grid.v2_axis;
        l.labels = gather(scan.labels->labels, g.cols(), row0, col0, rows, cols, stride);
        w.labels = std::move(l);
    }
    return w;
}

AcquireResult acquire_premeasured(const PremeasuredScan& scan, Voltage2 center, Voltage2 span,
                                  double resolution, const Sandbox& sandbox) {
    const ScanGrid& g = scan.grid;
    const double native = g.resolution;
    if (resolution < native * (1.0 - 1e-9))
        throw UnsupportedResolution("requested " + std::to_string(resolution) +
                                    " mV/pixel is finer than the stored " +
                                    std::to_string(native) + " mV/pixel");
    const double ratio = resolution / native;
    const double stride_f = std::round(ratio);
    if (std::abs(ratio - stride_f) > 1e-9)
        throw UnsupportedResolution("requested resolution is not an integer multiple of the stored one");
    const auto stride = static_cast<std::size_t>(stride_f);
    const std::size_t n1 = pixel_count(span.v1, resolution, "v1");
    const std::size_t n2 = pixel_count(span.v2, resolution, "v2");

    // Index of the stored pixel nearest to the window's first pixel center.
    auto first_index = [&](double c, double s, double origin) {
        return std::floor((c - 0.5 * s + 0.5 * resolution - origin) / native + 0.5);
    };
    const double col0 = first_index(center.v1, span.v1, g.v1_axis.front());
    const double row0 = first_index(center.v2, span.v2, g.v2_axis.front());
    const double last_col = col0 + static_cast<double>((n1 - 1) * stride);
    const double last_row = row0 + static_cast<double>((n2 - 1) * stride);
    if (col0 < 0.0 || row0 < 0.0 || last_col >= static_cast<double>(g.cols()) ||
        last_row >= static_cast<double>(g.rows()))
        return Blocked{"window extends beyond the stored raster"};

    const auto c0 = static_cast<std::size_t>(col0);
    const auto r0 = static_cast<std::size_t>(row0);
    if (!sandbox.contains(g.v1_axis[c0], g.v2_axis[r0]) ||
        !sandbox.contains(g.v1_axis[static_cast<std::size_t>(last_col)],
                          g.v2_axis[static_cast<std::size_t>(last_row)]))
        return Blocked{"snapped window has pixels outside the sandbox"};
    return crop_strided(scan, r0, c0, n2, n1, stride);
}

}  // namespace

AcquireResult acquire(const MeasurementSource& source, Voltage2 center, Voltage2 span,
                      double resolution, const Sandbox& sandbox) {
    if (!(span.v1 > 0.0) || !(span.v2 > 0.0) || !(resolution > 0.0))
        throw ShapeError("acquire: span and resolution must be positive");
    const double lo1 = center.v1 - 0.5 * span.v1;
    const double hi1 = center.v1 + 0.5 * span.v1;
    const double lo2 = center.v2 - 0.5 * span.v2;
    const double hi2 = center.v2 + 0.5 * span.v2;
    if (!sandbox.contains(lo1, lo2) || !sandbox.contains(hi1, hi2))
        return Blocked{"window leaves the sandbox"};

    if (const auto* scan = std::get_if<PremeasuredScan>(&source))
        return acquire_premeasured(*scan, center, span, resolution, sandbox);

    const auto& sim = std::get<SimulatedDevice>(source);
    if (lo1 < kDomainMin || lo2 < kDomainMin || hi1 > kDomainMax || hi2 > kDomainMax)
        return Blocked{"window leaves the device domain"};
    auto [grid, labels] = render_scan(sim.params, center, span, resolution, sim.noise, sim.noise_seed);
    return ScanWindow{std::move(grid), std::move(labels)};
}

ScanWindow crop(const PremeasuredScan& scan, std::size_t row0, std::size_t col0, std::size_t rows,
                std::size_t cols) {
    if (rows == 0 || cols == 0 || row0 + rows > scan.grid.rows() || col0 + cols > scan.grid.cols())
        throw ShapeError("crop exceeds the stored raster");
    return crop_strided(scan, row0, col0, rows, cols, 1);
}

ScanGrid inject_sensor_flip(ScanGrid grid) {
    for (double& v : grid.values) v = -v;
    return grid;
}

nlohmann::json scan_to_json(const ScanGrid& grid, const std::optional<LabelGrid>& labels) {
    grid.validate();
    nlohmann::json doc = {
        {"schema", kScanSchema},
        {"units", {{"voltage", "mV"}, {"value", "sensor"}}},
        {"rows", grid.rows()},
        {"cols", grid.cols()},
        {"v1_origin", grid.v1_axis.front()},
        {"v2_origin", grid.v2_axis.front()},
        {"resolution", grid.resolution},
        {"acquisition", std::string(to_string(grid.acquisition))},
        {"v1_axis", encode_f64(grid.v1_axis)},
        {"v2_axis", encode_f64(grid.v2_axis)},
        {"values", encode_f64(grid.values)},
    };
    if (labels) {
        if (!aligned(grid, *labels)) throw ShapeError("save_scan: labels do not align with the scan");
        std::vector<int> ints;
        ints.reserve(labels->labels.size());
        for (StateLabel s : labels->labels) ints.push_back(static_cast<int>(s));
        doc["labels"] = ints;
        nlohmann::json table = nlohmann::json::object();
        for (int i = 0; i < kStateLabelCount; ++i)
            table[std::to_string(i)] = std::string(to_string(static_cast<StateLabel>(i)));
        doc["label_table"] = table;
    }
    return doc;
}

PremeasuredScan scan_from_json(const nlohmann::json& doc) {
    const std::string ctx = "scan";
    require_schema(doc, ctx, kScanSchema);
    const std::size_t rows = require_size(doc, ctx, "rows");
    const std::size_t cols = require_size(doc, ctx, "cols");
    PremeasuredScan out;
    ScanGrid& g = out.grid;
    g.resolution = require_number(doc, ctx, "resolution");
    g.acquisition = axis_from_string(require_string(doc, ctx, "acquisition"));
    g.v1_axis = decode_f64(require_string(doc, ctx, "v1_axis"), "scan.v1_axis", cols);
    g.v2_axis = decode_f64(require_string(doc, ctx, "v2_axis"), "scan.v2_axis", rows);
    g.values = decode_f64(require_string(doc, ctx, "values"), "scan.values", rows * cols);
    try {
        g.validate();
    } catch (const ShapeError& e) {
        throw ParseError(std::string("scan: ") + e.what());
    }
    if (auto it = doc.find("labels"); it != doc.end()) {
        if (!it->is_array() || it->size() != rows * cols)
            throw ParseError("scan: field \"labels\" must be an integer array of rows*cols entries");
        LabelGrid l;
        l.v1_axis = g.v1_axis;
        l.v2_axis = g.v2_axis;
        l.labels.reserve(rows * cols);
        for (const auto& v : *it) {
            if (!v.is_number_integer()) throw ParseError("scan: field \"labels\" holds a non-integer");
            l.labels.push_back(label_from_int(v.get<int>()));
        }
        out.labels = std::move(l);
    }
    return out;
}

void save_scan(const ScanGrid& grid, const std::optional<LabelGrid>& labels,
               const std::filesystem::path& path) {
    write_json_file(scan_to_json(grid, labels), path);
}

PremeasuredScan load_scan(const std::filesystem::path& path) {
    return scan_from_json(read_json_file(path));
}

}  // namespace qdtune
