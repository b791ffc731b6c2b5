#include "skywatch/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace skywatch {
namespace {

struct Trig {
    double cos;
    double sin;
};

Trig exact_trig(double angle_deg) {
    double a = std::fmod(angle_deg, 360.0);
    if (a < 0.0) a += 360.0;
    if (a == 0.0) return {1.0, 0.0};
    if (a == 90.0) return {0.0, 1.0};
    if (a == 180.0) return {-1.0, 0.0};
    if (a == 270.0) return {0.0, -1.0};
    const double rad = a * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

float sample_bilinear(const Image& image, std::size_t c, double y, double x) {
    const double max_y = static_cast<double>(image.height - 1);
    const double max_x = static_cast<double>(image.width - 1);
    y = std::clamp(y, 0.0, max_y);
    x = std::clamp(x, 0.0, max_x);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const std::size_t x1 = std::min(x0 + 1, image.width - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    const double top = (1.0 - fx) * image.at(c, y0, x0) + fx * image.at(c, y0, x1);
    const double bottom = (1.0 - fx) * image.at(c, y1, x0) + fx * image.at(c, y1, x1);
    return static_cast<float>((1.0 - fy) * top + fy * bottom);
}

// Tolerance for source coordinates that land on the border up to rounding.
constexpr double kEdgeTolerance = 1e-6;

void read_token(std::istream& in, std::string& token) {
    token.clear();
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!token.empty()) return;
            continue;
        }
        token.push_back(ch);
    }
}

}  // namespace

Tensor to_tensor(const Image& image) {
    return Tensor::from({image.channels, image.height, image.width}, image.pixels);
}

Image from_tensor(const Tensor& tensor) {
    if (tensor.rank() != 3) throw ShapeError("image tensor must be [C,H,W], got " + shape_to_string(tensor.shape()));
    Image image(tensor.dim(0), tensor.dim(1), tensor.dim(2));
    std::copy(tensor.data().begin(), tensor.data().end(), image.pixels.begin());
    return image;
}

Image to_grayscale(const Image& image) {
    if (image.channels == 1) return image;
    if (image.channels != 3) {
        throw std::invalid_argument("grayscale conversion expects 1 or 3 channels, got " +
                                    std::to_string(image.channels));
    }
    Image gray(1, image.height, image.width);
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            gray.at(0, y, x) = 0.299f * image.at(0, y, x) + 0.587f * image.at(1, y, x) + 0.114f * image.at(2, y, x);
        }
    }
    return gray;
}

Image rotate(const Image& image, double angle_deg, float fill) {
    const Trig t = exact_trig(angle_deg);
    Image out(image.channels, image.height, image.width, fill);
    const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
    const double max_y = static_cast<double>(image.height - 1);
    const double max_x = static_cast<double>(image.width - 1);
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            // inverse map: output pixel -> source location
            const double sx = t.cos * dx + t.sin * dy + cx;
            const double sy = -t.sin * dx + t.cos * dy + cy;
            if (sx < -kEdgeTolerance || sy < -kEdgeTolerance || sx > max_x + kEdgeTolerance ||
                sy > max_y + kEdgeTolerance) {
                continue;
            }
            for (std::size_t c = 0; c < image.channels; ++c) out.at(c, y, x) = sample_bilinear(image, c, sy, sx);
        }
    }
    return out;
}

double inscribed_half_side(std::size_t height, std::size_t width, double angle_deg) {
    const Trig t = exact_trig(angle_deg);
    const double half = (static_cast<double>(std::min(height, width)) - 1.0) / 2.0;
    const double h = half / (std::abs(t.cos) + std::abs(t.sin));
    // one pixel of margin keeps the bilinear taps inside the inscribed square
    return std::max(h - 1.0, 0.0);
}

Image center_crop_resize(const Image& image, double half_side, std::size_t out_size) {
    Image out(image.channels, out_size, out_size);
    const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
    const double step = out_size > 1 ? 2.0 * half_side / static_cast<double>(out_size - 1) : 0.0;
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t j = 0; j < out_size; ++j) {
            const double sy = cy - half_side + step * static_cast<double>(j);
            for (std::size_t i = 0; i < out_size; ++i) {
                const double sx = cx - half_side + step * static_cast<double>(i);
                out.at(c, j, i) = sample_bilinear(image, c, sy, sx);
            }
        }
    }
    return out;
}

Image resize(const Image& image, std::size_t out_h, std::size_t out_w) {
    if (image.height == out_h && image.width == out_w) return image;
    Image out(image.channels, out_h, out_w);
    const double step_y = out_h > 1 ? static_cast<double>(image.height - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double step_x = out_w > 1 ? static_cast<double>(image.width - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t x = 0; x < out_w; ++x) {
                out.at(c, y, x) = sample_bilinear(image, c, step_y * static_cast<double>(y), step_x * static_cast<double>(x));
            }
        }
    }
    return out;
}

Image rotate_augment(const Image& image, double angle_deg, std::size_t out_size) {
    const Image rotated = rotate(image, angle_deg);
    return center_crop_resize(rotated, inscribed_half_side(image.height, image.width, angle_deg), out_size);
}

Image rotate_captured(const Image& frame, double angle_deg) {
    return rotate_augment(resize(frame, 2 * frame.height, 2 * frame.width), angle_deg, frame.height);
}

AugmentedPair rotate_augment_labeled(const Image& image, double angle_deg) {
    return {rotate_augment(image, angle_deg), angle_deg};
}

Image mirror(const Image& image) {
    Image out(image.channels, image.height, image.width);
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t y = 0; y < image.height; ++y) {
            for (std::size_t x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
        }
    }
    return out;
}

Image quarter_turn(const Image& image, int k) {
    if (image.height != image.width) throw std::invalid_argument("quarter_turn needs a square image");
    k = ((k % 4) + 4) % 4;
    Image out = image;
    const std::size_t n = image.width;
    for (int turn = 0; turn < k; ++turn) {
        Image next(out.channels, n, n);
        for (std::size_t c = 0; c < out.channels; ++c) {
            for (std::size_t y = 0; y < n; ++y) {
                for (std::size_t x = 0; x < n; ++x) next.at(c, n - 1 - x, y) = out.at(c, y, x);
            }
        }
        out = std::move(next);
    }
    return out;
}

Image read_netpbm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image " + path.string());
    std::string magic, token;
    read_token(in, magic);
    if (magic != "P5" && magic != "P6") {
        throw std::runtime_error("unsupported image format '" + magic + "' in " + path.string() + " (expected P5 or P6)");
    }
    std::size_t dims[3] = {};
    for (auto& d : dims) {
        read_token(in, token);
        try {
            d = std::stoul(token);
        } catch (const std::exception&) {
            throw std::runtime_error("malformed netpbm header in " + path.string());
        }
    }
    const std::size_t width = dims[0], height = dims[1], maxval = dims[2];
    if (width == 0 || height == 0 || maxval == 0 || maxval > 255) {
        throw std::runtime_error("unsupported netpbm geometry or depth in " + path.string());
    }
    const std::size_t channels = magic == "P5" ? 1 : 3;
    std::vector<unsigned char> raw(width * height * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw std::runtime_error("truncated image " + path.string());
    Image image(channels, height, width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                image.at(c, y, x) = static_cast<float>(raw[(y * width + x) * channels + c]) / static_cast<float>(maxval);
            }
        }
    }
    return image;
}

void write_netpbm(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw std::invalid_argument("netpbm output supports 1 or 3 channels");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image " + path.string());
    out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
    std::vector<unsigned char> raw(image.size());
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            for (std::size_t c = 0; c < image.channels; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                raw[(y * image.width + x) * image.channels + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("failed writing image " + path.string());
}

}  // namespace skywatch
