#include "crisp/morphology.hpp"

#include "crisp/errors.hpp"

namespace crisp {

namespace {

// Min or max over the 3×3 neighborhood with zero padding.
template <bool Dilate>
BinaryPlane filter3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width) {
    if (plane.size() != height * width) throw DimensionError("morphology: plane size mismatch");
    BinaryPlane out(plane.size(), 0);
    const auto h = static_cast<long>(height);
    const auto w = static_cast<long>(width);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            bool any = false;
            bool all = true;
            for (long dy = -1; dy <= 1; ++dy) {
                for (long dx = -1; dx <= 1; ++dx) {
                    const long yy = y + dy;
                    const long xx = x + dx;
                    const bool inside = yy >= 0 && yy < h && xx >= 0 && xx < w;
                    const bool on = inside && plane[static_cast<std::size_t>(yy * w + xx)] != 0;
                    any = any || on;
                    all = all && on;
                }
            }
            out[static_cast<std::size_t>(y * w + x)] = (Dilate ? any : all) ? 1 : 0;
        }
    }
    return out;
}

} // namespace

BinaryPlane dilate3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width) {
    return filter3x3<true>(plane, height, width);
}

BinaryPlane erode3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width) {
    return filter3x3<false>(plane, height, width);
}

BinaryPlane dilate3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width,
                      int iterations) {
    BinaryPlane out(plane.begin(), plane.end());
    for (int i = 0; i < iterations; ++i) out = dilate3x3(out, height, width);
    return out;
}

BinaryPlane erode3x3(std::span<const std::uint8_t> plane, std::size_t height, std::size_t width,
                     int iterations) {
    BinaryPlane out(plane.begin(), plane.end());
    for (int i = 0; i < iterations; ++i) out = erode3x3(out, height, width);
    return out;
}

} // namespace crisp
