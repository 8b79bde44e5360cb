#include "crisp/maps.hpp"

#include <string>

#include "crisp/errors.hpp"

namespace crisp {

Mask::Mask(std::size_t height, std::size_t width, std::size_t num_classes)
    : Mask(height, width, num_classes, std::vector<std::uint8_t>(height * width, 0)) {}

Mask::Mask(std::size_t height, std::size_t width, std::size_t num_classes,
           std::vector<std::uint8_t> labels)
    : height_(height), width_(width), num_classes_(num_classes), labels_(std::move(labels)) {
    if (num_classes_ < 1 || num_classes_ > 255) throw ConfigError("mask: invalid class count");
    if (labels_.size() != height_ * width_) throw DimensionError("mask: label plane size mismatch");
    for (std::uint8_t l : labels_) {
        if (l >= num_classes_) {
            throw InputError("mask: label " + std::to_string(l) + " out of range for " +
                             std::to_string(num_classes_) + " classes");
        }
    }
}

Mask Mask::from_probabilities(std::size_t height, std::size_t width, std::size_t num_classes,
                              std::span<const double> channel_major) {
    const std::size_t n = height * width;
    if (channel_major.size() != num_classes * n) throw DimensionError("mask: probability map size");
    std::vector<std::uint8_t> labels(n, 0);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < num_classes; ++k) {
            if (channel_major[k * n + p] > channel_major[best * n + p]) best = k;
        }
        labels[p] = static_cast<std::uint8_t>(best);
    }
    return Mask(height, width, num_classes, std::move(labels));
}

void Mask::set_label(std::size_t pixel, std::uint8_t cls) {
    if (cls >= num_classes_) throw InputError("mask: label out of range");
    labels_.at(pixel) = cls;
}

Vector Mask::one_hot() const {
    const std::size_t n = pixel_count();
    Vector out(num_classes_ * n, 0.0);
    for (std::size_t p = 0; p < n; ++p) out[labels_[p] * n + p] = 1.0;
    return out;
}

std::vector<std::uint8_t> Mask::foreground() const {
    std::vector<std::uint8_t> fg(labels_.size());
    for (std::size_t p = 0; p < labels_.size(); ++p) fg[p] = labels_[p] != 0 ? 1 : 0;
    return fg;
}

std::size_t Mask::foreground_count() const {
    std::size_t c = 0;
    for (std::uint8_t l : labels_) c += l != 0 ? 1 : 0;
    return c;
}

} // namespace crisp
