#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "crisp/numerics.hpp"

namespace crisp {

/// Grayscale H×W image, values in [0, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    std::size_t pixel_count() const noexcept { return height * width; }
    bool operator==(const Image&) const = default;
};

/// Segmentation mask stored as a class-index plane; the K×H×W one-hot view is
/// derived on demand, which makes an invalid one-hot state unrepresentable.
class Mask {
public:
    Mask() = default;
    Mask(std::size_t height, std::size_t width, std::size_t num_classes);
    Mask(std::size_t height, std::size_t width, std::size_t num_classes,
         std::vector<std::uint8_t> labels);

    /// Class index per pixel from the argmax over channels (ties → lowest class).
    static Mask from_probabilities(std::size_t height, std::size_t width, std::size_t num_classes,
                                   std::span<const double> channel_major);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t pixel_count() const noexcept { return labels_.size(); }

    std::uint8_t label(std::size_t pixel) const { return labels_[pixel]; }
    std::uint8_t label(std::size_t y, std::size_t x) const { return labels_[y * width_ + x]; }
    void set_label(std::size_t pixel, std::uint8_t cls);

    std::span<const std::uint8_t> labels() const noexcept { return labels_; }

    /// Channel-major K×H×W one-hot expansion.
    Vector one_hot() const;
    /// 1 where the label is not background.
    std::vector<std::uint8_t> foreground() const;
    std::size_t foreground_count() const;

    bool operator==(const Mask&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<std::uint8_t> labels_;
};

/// Channel-major K×H×W per-pixel class probabilities.
struct ProbMap {
    std::size_t num_classes = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    std::size_t pixel_count() const noexcept { return height * width; }
    double at(std::size_t cls, std::size_t pixel) const { return values[cls * pixel_count() + pixel]; }
    Mask argmax() const { return Mask::from_probabilities(height, width, num_classes, values); }
};

/// Per-pixel uncertainty in [0, 1].
struct UncertaintyMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    std::size_t pixel_count() const noexcept { return height * width; }
    bool operator==(const UncertaintyMap&) const = default;
};

} // namespace crisp
