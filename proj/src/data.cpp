#include "crisp/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "binary_io.hpp"
#include "crisp/errors.hpp"
#include "crisp/morphology.hpp"

namespace crisp {

namespace {

void check_shape_args(std::size_t height, std::size_t width, std::size_t num_classes) {
    if (height < 16 || width < 16) throw ConfigError("dataset: height and width must be >= 16");
    if (num_classes != 2 && num_classes != 3) throw ConfigError("dataset: num_classes must be 2 or 3");
    if (height > 4096 || width > 4096) throw ConfigError("dataset: image too large");
}

int steps_for(double severity) {
    return static_cast<int>(std::ceil(severity));
}

Mask dilate_foreground(const Mask& mask, int iterations) {
    const std::size_t h = mask.height(), w = mask.width();
    std::vector<std::uint8_t> labels(mask.labels().begin(), mask.labels().end());
    for (int it = 0; it < iterations; ++it) {
        std::vector<std::uint8_t> next = labels;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                if (labels[y * w + x] != 0) continue;
                std::uint8_t best = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const long yy = static_cast<long>(y) + dy;
                        const long xx = static_cast<long>(x) + dx;
                        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                        best = std::max(best, labels[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)]);
                    }
                }
                next[y * w + x] = best;
            }
        }
        labels = std::move(next);
    }
    return Mask(h, w, mask.num_classes(), std::move(labels));
}

Mask erode_foreground(const Mask& mask, int iterations) {
    const auto fg = mask.foreground();
    const auto kept = erode3x3(fg, mask.height(), mask.width(), iterations);
    std::vector<std::uint8_t> labels(mask.labels().begin(), mask.labels().end());
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (!kept[p]) labels[p] = 0;
    }
    return Mask(mask.height(), mask.width(), mask.num_classes(), std::move(labels));
}

Mask shift_foreground(const Mask& mask, int distance, Rng& rng) {
    static constexpr int kDirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    const auto& dir = kDirs[rng.below(4)];
    const long dx = dir[0] * distance;
    const long dy = dir[1] * distance;
    const long h = static_cast<long>(mask.height());
    const long w = static_cast<long>(mask.width());
    std::vector<std::uint8_t> labels(mask.pixel_count(), 0);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            const std::uint8_t l = mask.label(static_cast<std::size_t>(y * w + x));
            if (l == 0) continue;
            const long ty = y + dy;
            const long tx = x + dx;
            if (ty < 0 || tx < 0 || ty >= h || tx >= w) continue;
            labels[static_cast<std::size_t>(ty * w + tx)] = l;
        }
    }
    return Mask(mask.height(), mask.width(), mask.num_classes(), std::move(labels));
}

Mask punch_holes(const Mask& mask, int holes, Rng& rng) {
    constexpr long kRadius = 2;
    std::vector<std::size_t> fg_pixels;
    for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
        if (mask.label(p) != 0) fg_pixels.push_back(p);
    }
    std::vector<std::uint8_t> labels(mask.labels().begin(), mask.labels().end());
    if (fg_pixels.empty()) return mask;
    const long h = static_cast<long>(mask.height());
    const long w = static_cast<long>(mask.width());
    for (int i = 0; i < holes; ++i) {
        const std::size_t c = fg_pixels[rng.below(fg_pixels.size())];
        const long cy = static_cast<long>(c) / w;
        const long cx = static_cast<long>(c) % w;
        for (long y = cy - kRadius; y <= cy + kRadius; ++y) {
            for (long x = cx - kRadius; x <= cx + kRadius; ++x) {
                if (y < 0 || x < 0 || y >= h || x >= w) continue;
                if ((y - cy) * (y - cy) + (x - cx) * (x - cx) > kRadius * kRadius) continue;
                labels[static_cast<std::size_t>(y * w + x)] = 0;
            }
        }
    }
    return Mask(mask.height(), mask.width(), mask.num_classes(), std::move(labels));
}

} // namespace

Mask rasterize(const EllipseShape& shape, std::size_t height, std::size_t width,
               std::size_t num_classes) {
    if (shape.semi_axis_a <= 0.0 || shape.semi_axis_b <= 0.0) {
        throw ConfigError("rasterize: semi-axes must be positive");
    }
    Mask mask(height, width, num_classes);
    const double c = std::cos(shape.angle);
    const double s = std::sin(shape.angle);
    const bool ring = num_classes >= 3 && shape.ring_thickness > 0.0;
    const double ra = shape.semi_axis_a + shape.ring_thickness;
    const double rb = shape.semi_axis_b + shape.ring_thickness;
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - shape.center_x;
            const double dy = static_cast<double>(y) + 0.5 - shape.center_y;
            const double u = dx * c + dy * s;
            const double v = -dx * s + dy * c;
            const double inner = (u / shape.semi_axis_a) * (u / shape.semi_axis_a) +
                                 (v / shape.semi_axis_b) * (v / shape.semi_axis_b);
            if (inner <= 1.0) {
                mask.set_label(y * width + x, 1);
            } else if (ring && (u / ra) * (u / ra) + (v / rb) * (v / rb) <= 1.0) {
                mask.set_label(y * width + x, 2);
            }
        }
    }
    return mask;
}

Image render_image(const Mask& mask, const GeneratorOptions& options, Rng& rng) {
    Image image{mask.height(), mask.width(), std::vector<double>(mask.pixel_count())};
    for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
        const double mean = options.class_intensity.at(mask.label(p));
        const double noise = options.noise_sigma > 0.0 ? options.noise_sigma * rng.normal() : 0.0;
        image.pixels[p] = std::clamp(mean + noise, 0.0, 1.0);
    }
    return image;
}

EllipseShape random_shape(Rng& rng, std::size_t height, std::size_t width, std::size_t num_classes) {
    const double side = static_cast<double>(std::min(height, width));
    EllipseShape shape;
    shape.center_x = static_cast<double>(width) / 2.0 + rng.uniform(-side / 8.0, side / 8.0);
    shape.center_y = static_cast<double>(height) / 2.0 + rng.uniform(-side / 8.0, side / 8.0);
    shape.semi_axis_a = rng.uniform(0.16 * side, 0.28 * side);
    shape.semi_axis_b = rng.uniform(0.16 * side, 0.28 * side);
    shape.angle = rng.uniform(0.0, std::numbers::pi);
    shape.ring_thickness = num_classes >= 3 ? std::max(1.0, std::round(side / 16.0)) : 0.0;
    return shape;
}

Dataset generate_dataset(std::size_t count, std::size_t height, std::size_t width,
                         std::size_t num_classes, std::uint64_t seed,
                         const GeneratorOptions& options) {
    if (count < 1) throw ConfigError("dataset: count must be >= 1");
    check_shape_args(height, width, num_classes);
    if (options.noise_sigma < 0.0) throw ConfigError("dataset: noise sigma must be >= 0");

    Dataset ds{height, width, num_classes, seed, {}};
    ds.samples.reserve(count);
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const EllipseShape shape = random_shape(rng, height, width, num_classes);
        Mask mask = rasterize(shape, height, width, num_classes);
        Image image = render_image(mask, options, rng);
        ds.samples.push_back({std::move(image), std::move(mask)});
    }
    return ds;
}

void validate_dataset(const Dataset& d) {
    if (d.samples.empty()) throw FormatError("dataset: no samples");
    for (const Sample& s : d.samples) {
        if (s.image.height != d.height || s.image.width != d.width ||
            s.image.pixels.size() != d.height * d.width) {
            throw DimensionError("dataset: image shape mismatch");
        }
        if (s.mask.height() != d.height || s.mask.width() != d.width ||
            s.mask.num_classes() != d.num_classes) {
            throw DimensionError("dataset: mask shape mismatch");
        }
        for (double v : s.image.pixels) {
            if (!(v >= 0.0 && v <= 1.0)) throw InputError("dataset: image value outside [0,1]");
        }
    }
}

std::string_view to_string(CorruptionMode mode) {
    switch (mode) {
        case CorruptionMode::none: return "none";
        case CorruptionMode::dilate: return "dilate";
        case CorruptionMode::erode: return "erode";
        case CorruptionMode::shift: return "shift";
        case CorruptionMode::hole: return "hole";
    }
    return "none";
}

CorruptionMode parse_corruption_mode(std::string_view name) {
    for (auto m : {CorruptionMode::none, CorruptionMode::dilate, CorruptionMode::erode,
                   CorruptionMode::shift, CorruptionMode::hole}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown corruption mode '" + std::string(name) + "'");
}

Mask corrupt_mask(const Mask& mask, CorruptionMode mode, double severity, std::uint64_t seed) {
    if (!(severity >= 0.0) || !std::isfinite(severity)) {
        throw ConfigError("corruption: severity must be finite and >= 0");
    }
    const int steps = steps_for(severity);
    if (steps == 0) return mask;
    Rng rng(seed);
    switch (mode) {
        case CorruptionMode::none: return mask;
        case CorruptionMode::dilate: return dilate_foreground(mask, steps);
        case CorruptionMode::erode: return erode_foreground(mask, steps);
        case CorruptionMode::shift: return shift_foreground(mask, steps, rng);
        case CorruptionMode::hole: return punch_holes(mask, steps, rng);
    }
    return mask;
}

CorruptionResult corrupt_mask_detailed(const Mask& mask, const CorruptionConfig& config) {
    if (config.modes.empty()) return {mask, CorruptionMode::none};
    Rng rng(config.seed);
    const CorruptionMode mode = config.modes[rng.below(config.modes.size())];
    return {corrupt_mask(mask, mode, config.severity, derive_seed(config.seed, 1)), mode};
}

Mask corrupt_mask(const Mask& mask, const CorruptionConfig& config) {
    return corrupt_mask_detailed(mask, config).mask;
}

std::string encode_dataset(const Dataset& d) {
    validate_dataset(d);
    detail::ByteWriter w;
    w.raw(kDatasetMagic);
    w.u32(static_cast<std::uint32_t>(d.samples.size()));
    w.u32(static_cast<std::uint32_t>(d.height));
    w.u32(static_cast<std::uint32_t>(d.width));
    w.u32(static_cast<std::uint32_t>(d.num_classes));
    w.u64(d.seed);
    for (const Sample& s : d.samples) {
        for (double v : s.image.pixels) w.f64(v);
        for (std::uint8_t l : s.mask.labels()) w.u8(l);
    }
    return w.take();
}

Dataset decode_dataset(std::string_view bytes) {
    detail::ByteReader r(bytes, "dataset");
    r.expect_magic(kDatasetMagic);
    const std::uint32_t count = r.u32();
    Dataset d;
    d.height = r.u32();
    d.width = r.u32();
    d.num_classes = r.u32();
    d.seed = r.u64();
    if (count == 0) throw FormatError("dataset: zero sample count");
    if (d.num_classes < 1 || d.num_classes > 255) throw FormatError("dataset: invalid class count");
    const std::size_t n = d.height * d.width;
    if (n == 0) throw FormatError("dataset: empty image shape");
    if (r.remaining() != static_cast<std::size_t>(count) * n * 9) {
        throw FormatError("dataset: payload is " + std::to_string(r.remaining()) +
                          " bytes, header implies " + std::to_string(std::size_t(count) * n * 9));
    }
    d.samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Image image{d.height, d.width, std::vector<double>(n)};
        for (double& v : image.pixels) v = r.f64();
        std::vector<std::uint8_t> labels(n);
        for (auto& l : labels) {
            l = r.u8();
            if (l >= d.num_classes) throw FormatError("dataset: class index out of range");
        }
        d.samples.push_back({std::move(image), Mask(d.height, d.width, d.num_classes, std::move(labels))});
    }
    r.expect_end();
    validate_dataset(d);
    return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    detail::write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
    try {
        return decode_dataset(detail::read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

Dataset concat(const std::vector<Dataset>& parts) {
    if (parts.empty()) throw InputError("concat: no datasets");
    Dataset out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const Dataset& p = parts[i];
        if (p.height != out.height || p.width != out.width || p.num_classes != out.num_classes) {
            throw DimensionError("concat: dataset shapes differ");
        }
        out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
    }
    return out;
}

} // namespace crisp
