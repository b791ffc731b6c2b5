#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "skywatch/tensor.hpp"

namespace skywatch {

inline constexpr std::size_t kFrameSize = 64;

/// Planar float image, channel-major, pixel values nominally in [0,1].
struct Image {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
        : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

    float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
    bool operator==(const Image&) const = default;
};

Tensor to_tensor(const Image& image);
Image from_tensor(const Tensor& tensor);

Image to_grayscale(const Image& image);

/// Rotation about the image center with bilinear interpolation. Output has the
/// input's size; pixels whose source falls outside the input take `fill`.
/// Angles are reduced modulo 360 first, and multiples of 90 use exact trig.
Image rotate(const Image& image, double angle_deg, float fill = 0.0f);

/// Half side (in pixel-center units) of the largest centered axis-aligned
/// square whose bilinear resampling touches no border fill after rotating an
/// image of this size by `angle_deg`.
double inscribed_half_side(std::size_t height, std::size_t width, double angle_deg);

/// Samples a centered square of the given half side onto an out_size x out_size
/// grid (corner-aligned bilinear).
Image center_crop_resize(const Image& image, double half_side, std::size_t out_size = kFrameSize);

/// Bilinear corner-aligned resize of the full image.
Image resize(const Image& image, std::size_t out_h, std::size_t out_w);

/// rotate -> crop to the fill-free inscribed square -> resize to 64x64.
Image rotate_augment(const Image& image, double angle_deg, std::size_t out_size = kFrameSize);

/// Rotation of an already-captured frame: upsample 2x, then rotate_augment
/// back to the frame size. Views built this way are softer than rendered ones.
Image rotate_captured(const Image& frame, double angle_deg);

struct AugmentedPair {
    Image image;
    double label_deg;
};
AugmentedPair rotate_augment_labeled(const Image& image, double angle_deg);

/// Left-right mirror.
Image mirror(const Image& image);
/// Exact rotation by k quarter turns (counterclockwise, square images only).
Image quarter_turn(const Image& image, int k);

/// Binary netpbm: P5 (gray) or P6 (RGB), 8-bit. Values are scaled to [0,1].
Image read_netpbm(const std::filesystem::path& path);
/// Writes P5 for one channel, P6 for three. Values are clamped to [0,1] and
/// rounded to 8 bits.
void write_netpbm(const std::filesystem::path& path, const Image& image);

}  // namespace skywatch
