#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace meqa {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;
    bool operator==(const Rgb&) const = default;
};

// Row-major 8-bit RGB raster.
class RgbImage {
public:
    RgbImage() = default;
    RgbImage(int width, int height, Rgb fill = {});

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    Rgb at(int x, int y) const;
    void set(int x, int y, Rgb c);
    std::span<const std::uint8_t> bytes() const { return data_; }

    RgbImage crop(int x0, int y0, int x1, int y1) const;
    bool operator==(const RgbImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// Per-pixel range in meters along the pixel ray.
class DepthImage {
public:
    DepthImage() = default;
    DepthImage(int width, int height, float fill = 0.0f);

    int width() const { return width_; }
    int height() const { return height_; }
    float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    void set(int x, int y, float d) { data_[static_cast<std::size_t>(y) * width_ + x] = d; }
    bool operator==(const DepthImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

// Luma in [0, 255], BT.601 weights.
std::vector<double> to_grayscale(const RgbImage& img);

std::vector<std::uint8_t> encode_png(const RgbImage& img);
void write_png(const RgbImage& img, const std::filesystem::path& path);
RgbImage read_png(const std::filesystem::path& path);

// 8-bit grayscale binary PGM (P5).
void write_pgm(int width, int height, std::span<const std::uint8_t> pixels,
               const std::filesystem::path& path);

// Fraction of pixels whose channels are all below 8 (i.e. below 8/255).
double black_fraction(const RgbImage& img);

std::string base64_encode(std::span<const std::uint8_t> bytes);

// Raster drawing used for annotated observations and map renders.
void draw_circle(RgbImage& img, int cx, int cy, int radius, Rgb color, bool filled);
void draw_letter(RgbImage& img, int x, int y, char letter, Rgb color, int scale = 1);
void draw_line(RgbImage& img, int x0, int y0, int x1, int y1, Rgb color);

}  // namespace meqa
