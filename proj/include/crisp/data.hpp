#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crisp/maps.hpp"
#include "crisp/random.hpp"

namespace crisp {

struct Sample {
    Image image;
    Mask mask;

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;
    std::vector<Sample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    bool operator==(const Dataset&) const = default;
};

/// Filled ellipse (class 1), optionally wrapped in a ring of class 2.
struct EllipseShape {
    double center_x = 0.0;
    double center_y = 0.0;
    double semi_axis_a = 1.0;
    double semi_axis_b = 1.0;
    double angle = 0.0;           // radians, rotation of the a axis
    double ring_thickness = 0.0;  // 0 disables the ring
};

struct GeneratorOptions {
    double noise_sigma = 0.05;
    /// Mean intensity per class: background, structure, ring.
    std::array<double, 3> class_intensity{0.2, 0.7, 0.45};
};

/// Rasterizes `shape` by sampling pixel centers (x + 0.5, y + 0.5).
Mask rasterize(const EllipseShape& shape, std::size_t height, std::size_t width,
               std::size_t num_classes);

/// Class mean intensity plus Gaussian noise, clamped to [0, 1].
Image render_image(const Mask& mask, const GeneratorOptions& options, Rng& rng);

EllipseShape random_shape(Rng& rng, std::size_t height, std::size_t width, std::size_t num_classes);

/// Byte-identical output for identical arguments.
Dataset generate_dataset(std::size_t count, std::size_t height, std::size_t width,
                         std::size_t num_classes, std::uint64_t seed,
                         const GeneratorOptions& options = {});

/// Checks the dataset invariants (non-empty, shared shape, image range).
void validate_dataset(const Dataset& dataset);

// Corruption ---------------------------------------------------------------

enum class CorruptionMode : std::uint8_t { none, dilate, erode, shift, hole };

std::string_view to_string(CorruptionMode mode);
CorruptionMode parse_corruption_mode(std::string_view name);

struct CorruptionConfig {
    double severity = 0.0;
    /// One mode is drawn uniformly from this set per call.
    std::vector<CorruptionMode> modes{CorruptionMode::dilate, CorruptionMode::erode,
                                      CorruptionMode::shift, CorruptionMode::hole};
    std::uint64_t seed = 0;
};

struct CorruptionResult {
    Mask mask;
    CorruptionMode mode = CorruptionMode::none;
};

CorruptionResult corrupt_mask_detailed(const Mask& mask, const CorruptionConfig& config);
Mask corrupt_mask(const Mask& mask, const CorruptionConfig& config);
/// Applies exactly `mode`; ⌈severity⌉ is the iteration/shift/hole count.
Mask corrupt_mask(const Mask& mask, CorruptionMode mode, double severity, std::uint64_t seed);

// Files --------------------------------------------------------------------

inline constexpr std::string_view kDatasetMagic = "CRSPDS01";
inline constexpr std::size_t kDatasetHeaderBytes = 8 + 4 * 4 + 8;

std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Concatenates samples; the seed of the first dataset is kept.
Dataset concat(const std::vector<Dataset>& parts);

} // namespace crisp
