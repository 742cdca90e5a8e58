// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace relgen::core {

// RGB image, values in [0,1], row-major (y, x, channel). File I/O is binary
// PPM (P6, 8-bit); quantisation is round-to-nearest so identical doubles
// always produce identical bytes.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> data;  // height*width*3

    Image() = default;
    Image(std::size_t w, std::size_t h, double fill = 0.0)
        : width(w), height(h), data(w * h * 3, fill) {}

    double& at(std::size_t x, std::size_t y, std::size_t c) {
        return data[(y * width + x) * 3 + c];
    }
    double at(std::size_t x, std::size_t y, std::size_t c) const {
        return data[(y * width + x) * 3 + c];
    }

    void set_pixel(std::size_t x, std::size_t y, const std::array<double, 3>& rgb) {
        for (std::size_t c = 0; c < 3; ++c) at(x, y, c) = rgb[c];
    }

    bool in_bounds(long x, long y) const {
        return x >= 0 && y >= 0 && x < static_cast<long>(width) && y < static_cast<long>(height);
    }

    double max_abs_diff(const Image& o) const;
};

using Color = std::array<double, 3>;

void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

// Drawing primitives used by the synthetic scenes and the report grids.
// All of them clip against the image bounds.
void draw_disc(Image& img, double cx, double cy, double radius, const Color& color);
void draw_square(Image& img, double cx, double cy, double half, const Color& color);
void draw_segment(Image& img, double x0, double y0, double x1, double y1, double thickness,
                  const Color& color);
void fill_rect(Image& img, long x0, long y0, long x1, long y1, const Color& color);

// 5x7 bitmap text, one pixel per dot. Printable ASCII only; everything else
// renders as a blank cell.
void draw_text(Image& img, long x, long y, const std::string& text, const Color& color);

Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1);

// Mean color of a rectangular region [x0,x1) x [y0,y1).
Color region_mean(const Image& img, std::size_t x0, std::size_t y0, std::size_t x1,
                  std::size_t y1);

}  // namespace relgen::core
