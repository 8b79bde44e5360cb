#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace crisp {

/// Binary H×W plane, row-major, values 0 or 1.
using BinaryPlane = std::vector<std::uint8_t>;

// 3×3 square structuring element. Pixels outside the grid count as 0.
BinaryPlane dilate3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width);
BinaryPlane erode3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width);

BinaryPlane dilate3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width,
                      int iterations);
BinaryPlane erode3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width,
                     int iterations);

} // namespace crisp
