#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "qdtune/grid.hpp"

namespace qdtune {

inline constexpr std::size_t kImageSide = 30;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

// Classifier input: 30x30 row-major, every pixel in [0, 1], max 1 unless all
// zero.
struct ProcessedImage {
    std::array<double, kImagePixels> values{};

    double at(std::size_t r, std::size_t c) const { return values[r * kImageSide + c]; }
    friend bool operator==(const ProcessedImage&, const ProcessedImage&) = default;
};

// Forward difference along the acquisition direction divided by the
// resolution; the last row/column repeats its neighbor. Throws ShapeError
// when the acquisition axis has a single pixel.
ScanGrid gradient_along_measurement(const ScanGrid& grid);

// Negates the gradient when the mean of its top-decile-magnitude pixels is
// negative, so charge-transition lines come out positive.
ScanGrid flip_correct(ScanGrid grad);

// Clamp at zero, subtract the median, clamp again, divide by the maximum.
ScanGrid normalize_threshold(ScanGrid grad);

// Area-weighted block mean onto 30x30, re-clamped and re-normalized to max 1.
// Throws ShapeError for rasters smaller than 30x30.
ProcessedImage resize_to_30(const ScanGrid& grid);

// gradient_along_measurement -> flip_correct -> normalize_threshold -> resize_to_30
ProcessedImage process(const ScanGrid& grid);

std::string image_to_csv(const ProcessedImage& image);

}  // namespace qdtune
