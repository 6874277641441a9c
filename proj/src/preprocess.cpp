#include "qdtune/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "qdtune/error.hpp"

namespace qdtune {

ScanGrid gradient_along_measurement(const ScanGrid& grid) {
    grid.validate();
    const std::size_t rows = grid.rows();
    const std::size_t cols = grid.cols();
    const bool along_v1 = grid.acquisition == Axis::V1;
    if ((along_v1 ? cols : rows) < 2)
        throw ShapeError("gradient: acquisition axis has fewer than 2 pixels");

    ScanGrid out = grid;
    const double res = grid.resolution;
    if (along_v1) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c + 1 < cols; ++c)
                out.at(r, c) = (grid.at(r, c + 1) - grid.at(r, c)) / res;
            out.at(r, cols - 1) = out.at(r, cols - 2);
        }
    } else {
        for (std::size_t r = 0; r + 1 < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                out.at(r, c) = (grid.at(r + 1, c) - grid.at(r, c)) / res;
        for (std::size_t c = 0; c < cols; ++c) out.at(rows - 1, c) = out.at(rows - 2, c);
    }
    return out;
}

namespace {

// Sign of the dominant gradient features. Odd in its argument: negating the
// grid negates the result exactly, which is what makes flip correction an
// exact involution.
int dominant_sign(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n == 0) return 0;
    const std::size_t k = std::max<std::size_t>(1, (n + 9) / 10);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto by_magnitude = [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(v[a]);
        const double mb = std::abs(v[b]);
        return ma != mb ? ma > mb : a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(),
                     by_magnitude);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    double sum = 0.0;
    for (std::size_t i : idx) sum += v[i];
    if (sum > 0.0) return 1;
    if (sum < 0.0) return -1;
    for (double x : v)
        if (x != 0.0) return x > 0.0 ? 1 : -1;
    return 0;
}

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    const double upper = *mid;
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

// Row i of the result holds the fraction of each source cell that falls into
// target cell i, divided by the target cell's width.
std::vector<double> area_weights(std::size_t source, std::size_t target) {
    std::vector<double> w(target * source, 0.0);
    const double scale = static_cast<double>(source) / static_cast<double>(target);
    for (std::size_t t = 0; t < target; ++t) {
        const double lo = static_cast<double>(t) * scale;
        const double hi = static_cast<double>(t + 1) * scale;
        const auto first = static_cast<std::size_t>(std::floor(lo));
        const auto last = std::min(source, static_cast<std::size_t>(std::ceil(hi)));
        for (std::size_t s = first; s < last; ++s) {
            const double overlap =
                std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
            if (overlap > 0.0) w[t * source + s] = overlap / scale;
        }
    }
    return w;
}

}  // namespace

ScanGrid flip_correct(ScanGrid grad) {
    if (dominant_sign(grad.values) < 0)
        for (double& v : grad.values) v = -v;
    return grad;
}

ScanGrid normalize_threshold(ScanGrid grad) {
    if (grad.values.empty()) return grad;
    for (double& v : grad.values) v = std::max(v, 0.0);
    const double floor = median_of(grad.values);
    double peak = 0.0;
    for (double& v : grad.values) {
        v = std::max(v - floor, 0.0);
        peak = std::max(peak, v);
    }
    if (peak == 0.0) {
        std::fill(grad.values.begin(), grad.values.end(), 0.0);
        return grad;
    }
    for (double& v : grad.values) v /= peak;
    return grad;
}

ProcessedImage resize_to_30(const ScanGrid& grid) {
    const std::size_t rows = grid.rows();
    const std::size_t cols = grid.cols();
    if (rows < kImageSide || cols < kImageSide || grid.values.size() != rows * cols)
        throw ShapeError("resize: raster " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " is smaller than 30x30");

    ProcessedImage img;
    if (rows == kImageSide && cols == kImageSide) {
        std::copy(grid.values.begin(), grid.values.end(), img.values.begin());
    } else {
        const auto wr = area_weights(rows, kImageSide);
        const auto wc = area_weights(cols, kImageSide);
        // Columns first: tmp is rows x 30.
        std::vector<double> tmp(rows * kImageSide, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < kImageSide; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cols; ++c) acc += wc[j * cols + c] * grid.at(r, c);
                tmp[r * kImageSide + j] = acc;
            }
        for (std::size_t i = 0; i < kImageSide; ++i)
            for (std::size_t j = 0; j < kImageSide; ++j) {
                double acc = 0.0;
                for (std::size_t r = 0; r < rows; ++r) acc += wr[i * rows + r] * tmp[r * kImageSide + j];
                img.values[i * kImageSide + j] = acc;
            }
    }

    double peak = 0.0;
    for (double& v : img.values) {
        v = std::clamp(v, 0.0, 1.0);
        peak = std::max(peak, v);
    }
    if (peak > 0.0 && peak != 1.0)
        for (double& v : img.values) v = std::min(v / peak, 1.0);
    return img;
}

ProcessedImage process(const ScanGrid& grid) {
    return resize_to_30(normalize_threshold(flip_correct(gradient_along_measurement(grid))));
}

std::string image_to_csv(const ProcessedImage& image) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t r = 0; r < kImageSide; ++r) {
        for (std::size_t c = 0; c < kImageSide; ++c) {
            if (c) os << ',';
            os << image.at(r, c);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace qdtune
