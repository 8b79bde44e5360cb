#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crisp/maps.hpp"

namespace crisp {

/// 8-bit grayscale raster as stored in a binary PGM (P5) file.
struct GrayImage8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;
};

std::string encode_pgm(const GrayImage8& image);
GrayImage8 decode_pgm(std::string_view bytes);
void save_pgm(const GrayImage8& image, const std::filesystem::path& path);
GrayImage8 load_pgm(const std::filesystem::path& path);

/// value = round(255·U)
GrayImage8 uncertainty_to_gray(const UncertaintyMap& map);
/// value = class index
GrayImage8 mask_to_gray(const Mask& mask);
Mask gray_to_mask(const GrayImage8& image, std::size_t num_classes);

} // namespace crisp
