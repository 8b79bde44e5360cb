#include "crisp/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "crisp/errors.hpp"

namespace crisp {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::string_view bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) tok += bytes[pos++];
    if (tok.empty()) throw FormatError("pgm: truncated header");
    return tok;
}

std::size_t parse_count(const std::string& tok) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(tok, &used);
    } catch (const std::exception&) {
        throw FormatError("pgm: bad header number '" + tok + "'");
    }
    if (used != tok.size()) throw FormatError("pgm: bad header number '" + tok + "'");
    return v;
}

} // namespace

std::string encode_pgm(const GrayImage8& image) {
    if (image.pixels.size() != image.height * image.width) throw DimensionError("pgm: pixel count mismatch");
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    return out;
}

GrayImage8 decode_pgm(std::string_view bytes) {
    std::size_t pos = 0;
    if (next_token(bytes, pos) != "P5") throw FormatError("pgm: not a binary PGM (P5)");
    GrayImage8 img;
    img.width = parse_count(next_token(bytes, pos));
    img.height = parse_count(next_token(bytes, pos));
    if (parse_count(next_token(bytes, pos)) != 255) throw FormatError("pgm: only maxval 255 is supported");
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos || bytes.size() - pos != img.width * img.height) {
        throw FormatError("pgm: payload size mismatch");
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return img;
}

void save_pgm(const GrayImage8& image, const std::filesystem::path& path) {
    detail::write_file(path, encode_pgm(image));
}

GrayImage8 load_pgm(const std::filesystem::path& path) {
    return decode_pgm(detail::read_file(path));
}

GrayImage8 uncertainty_to_gray(const UncertaintyMap& map) {
    GrayImage8 g{map.height, map.width, std::vector<std::uint8_t>(map.values.size())};
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        g.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(map.values[i], 0.0, 1.0)));
    }
    return g;
}

GrayImage8 mask_to_gray(const Mask& mask) {
    return {mask.height(), mask.width(), std::vector<std::uint8_t>(mask.labels().begin(), mask.labels().end())};
}

Mask gray_to_mask(const GrayImage8& image, std::size_t num_classes) {
    for (auto v : image.pixels) {
        if (v >= num_classes) throw FormatError("pgm: class index out of range");
    }
    return Mask(image.height, image.width, num_classes, image.pixels);
}

} // namespace crisp
