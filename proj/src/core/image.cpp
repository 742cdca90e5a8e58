// SPDX-License-Identifier: Apache-2.0
#include "core/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "core/error.hpp"

namespace relgen::core {

double Image::max_abs_diff(const Image& o) const {
    require(width == o.width && height == o.height, "image: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        m = std::max(m, std::fabs(data[i] - o.data[i]));
    return m;
}

static unsigned char quantize(double v) {
    double c = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<unsigned char>(std::lround(c));
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "image: cannot open for write: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> buf(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) buf[i] = quantize(img.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(out.good(), "image: write failed: " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "image: cannot open: " + path);
    std::string magic;
    in >> magic;
    require(magic == "P6", "image: not a binary PPM (P6): " + path);
    auto skip_ws_and_comments = [&in]() {
        while (true) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
    };
    std::size_t w = 0, h = 0, maxval = 0;
    skip_ws_and_comments();
    in >> w;
    skip_ws_and_comments();
    in >> h;
    skip_ws_and_comments();
    in >> maxval;
    require(maxval == 255, "image: only 8-bit PPM supported: " + path);
    in.get();  // single whitespace after header
    Image img(w, h);
    std::vector<unsigned char> buf(w * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(in.gcount() == static_cast<std::streamsize>(buf.size()),
            "image: truncated PPM: " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
    return img;
}

void draw_disc(Image& img, double cx, double cy, double radius, const Color& color) {
    long x0 = static_cast<long>(std::floor(cx - radius)), x1 = static_cast<long>(std::ceil(cx + radius));
    long y0 = static_cast<long>(std::floor(cy - radius)), y1 = static_cast<long>(std::ceil(cy + radius));
    for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
            if (!img.in_bounds(x, y)) continue;
            double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= radius * radius)
                img.set_pixel(static_cast<std::size_t>(x), static_cast<std::size_t>(y), color);
        }
}

void draw_square(Image& img, double cx, double cy, double half, const Color& color) {
    fill_rect(img, static_cast<long>(std::lround(cx - half)), static_cast<long>(std::lround(cy - half)),
              static_cast<long>(std::lround(cx + half)), static_cast<long>(std::lround(cy + half)), color);
}

void fill_rect(Image& img, long x0, long y0, long x1, long y1, const Color& color) {
    for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x)
            if (img.in_bounds(x, y))
                img.set_pixel(static_cast<std::size_t>(x), static_cast<std::size_t>(y), color);
}

void draw_segment(Image& img, double x0, double y0, double x1, double y1, double thickness,
                  const Color& color) {
    double dx = x1 - x0, dy = y1 - y0;
    double len = std::sqrt(dx * dx + dy * dy);
    int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
    for (int i = 0; i <= steps; ++i) {
        double t = static_cast<double>(i) / steps;
        draw_disc(img, x0 + t * dx, y0 + t * dy, thickness * 0.5, color);
    }
}

// Classic 5x7 font for printable ASCII 0x20..0x7e, column-major bytes.
static const unsigned char kFont5x7[95][5] = {
    {0x00, 0x00, 0x00, 0x00, 0x00}, {0x00, 0x00, 0x5f, 0x00, 0x00}, {0x00, 0x07, 0x00, 0x07, 0x00},
    {0x14, 0x7f, 0x14, 0x7f, 0x14}, {0x24, 0x2a, 0x7f, 0x2a, 0x12}, {0x23, 0x13, 0x08, 0x64, 0x62},
    {0x36, 0x49, 0x55, 0x22, 0x50}, {0x00, 0x05, 0x03, 0x00, 0x00}, {0x00, 0x1c, 0x22, 0x41, 0x00},
    {0x00, 0x41, 0x22, 0x1c, 0x00}, {0x14, 0x08, 0x3e, 0x08, 0x14}, {0x08, 0x08, 0x3e, 0x08, 0x08},
    {0x00, 0x50, 0x30, 0x00, 0x00}, {0x08, 0x08, 0x08, 0x08, 0x08}, {0x00, 0x60, 0x60, 0x00, 0x00},
    {0x20, 0x10, 0x08, 0x04, 0x02}, {0x3e, 0x51, 0x49, 0x45, 0x3e}, {0x00, 0x42, 0x7f, 0x40, 0x00},
    {0x42, 0x61, 0x51, 0x49, 0x46}, {0x21, 0x41, 0x45, 0x4b, 0x31}, {0x18, 0x14, 0x12, 0x7f, 0x10},
    {0x27, 0x45, 0x45, 0x45, 0x39}, {0x3c, 0x4a, 0x49, 0x49, 0x30}, {0x01, 0x71, 0x09, 0x05, 0x03},
    {0x36, 0x49, 0x49, 0x49, 0x36}, {0x06, 0x49, 0x49, 0x29, 0x1e}, {0x00, 0x36, 0x36, 0x00, 0x00},
    {0x00, 0x56, 0x36, 0x00, 0x00}, {0x08, 0x14, 0x22, 0x41, 0x00}, {0x14, 0x14, 0x14, 0x14, 0x14},
    {0x00, 0x41, 0x22, 0x14, 0x08}, {0x02, 0x01, 0x51, 0x09, 0x06}, {0x32, 0x49, 0x79, 0x41, 0x3e},
    {0x7e, 0x11, 0x11, 0x11, 0x7e}, {0x7f, 0x49, 0x49, 0x49, 0x36}, {0x3e, 0x41, 0x41, 0x41, 0x22},
    {0x7f, 0x41, 0x41, 0x22, 0x1c}, {0x7f, 0x49, 0x49, 0x49, 0x41}, {0x7f, 0x09, 0x09, 0x09, 0x01},
    {0x3e, 0x41, 0x49, 0x49, 0x7a}, {0x7f, 0x08, 0x08, 0x08, 0x7f}, {0x00, 0x41, 0x7f, 0x41, 0x00},
    {0x20, 0x40, 0x41, 0x3f, 0x01}, {0x7f, 0x08, 0x14, 0x22, 0x41}, {0x7f, 0x40, 0x40, 0x40, 0x40},
    {0x7f, 0x02, 0x0c, 0x02, 0x7f}, {0x7f, 0x04, 0x08, 0x10, 0x7f}, {0x3e, 0x41, 0x41, 0x41, 0x3e},
    {0x7f, 0x09, 0x09, 0x09, 0x06}, {0x3e, 0x41, 0x51, 0x21, 0x5e}, {0x7f, 0x09, 0x19, 0x29, 0x46},
    {0x46, 0x49, 0x49, 0x49, 0x31}, {0x01, 0x01, 0x7f, 0x01, 0x01}, {0x3f, 0x40, 0x40, 0x40, 0x3f},
    {0x1f, 0x20, 0x40, 0x20, 0x1f}, {0x3f, 0x40, 0x38, 0x40, 0x3f}, {0x63, 0x14, 0x08, 0x14, 0x63},
    {0x07, 0x08, 0x70, 0x08, 0x07}, {0x61, 0x51, 0x49, 0x45, 0x43}, {0x00, 0x7f, 0x41, 0x41, 0x00},
    {0x02, 0x04, 0x08, 0x10, 0x20}, {0x00, 0x41, 0x41, 0x7f, 0x00}, {0x04, 0x02, 0x01, 0x02, 0x04},
    {0x40, 0x40, 0x40, 0x40, 0x40}, {0x00, 0x01, 0x02, 0x04, 0x00}, {0x20, 0x54, 0x54, 0x54, 0x78},
    {0x7f, 0x48, 0x44, 0x44, 0x38}, {0x38, 0x44, 0x44, 0x44, 0x20}, {0x38, 0x44, 0x44, 0x48, 0x7f},
    {0x38, 0x54, 0x54, 0x54, 0x18}, {0x08, 0x7e, 0x09, 0x01, 0x02}, {0x0c, 0x52, 0x52, 0x52, 0x3e},
    {0x7f, 0x08, 0x04, 0x04, 0x78}, {0x00, 0x44, 0x7d, 0x40, 0x00}, {0x20, 0x40, 0x44, 0x3d, 0x00},
    {0x7f, 0x10, 0x28, 0x44, 0x00}, {0x00, 0x41, 0x7f, 0x40, 0x00}, {0x7c, 0x04, 0x18, 0x04, 0x78},
    {0x7c, 0x08, 0x04, 0x04, 0x78}, {0x38, 0x44, 0x44, 0x44, 0x38}, {0x7c, 0x14, 0x14, 0x14, 0x08},
    {0x08, 0x14, 0x14, 0x18, 0x7c}, {0x7c, 0x08, 0x04, 0x04, 0x08}, {0x48, 0x54, 0x54, 0x54, 0x20},
    {0x04, 0x3f, 0x44, 0x40, 0x20}, {0x3c, 0x40, 0x40, 0x20, 0x7c}, {0x1c, 0x20, 0x40, 0x20, 0x1c},
    {0x3c, 0x40, 0x30, 0x40, 0x3c}, {0x44, 0x28, 0x10, 0x28, 0x44}, {0x0c, 0x50, 0x50, 0x50, 0x3c},
    {0x44, 0x64, 0x54, 0x4c, 0x44}, {0x00, 0x08, 0x36, 0x41, 0x00}, {0x00, 0x00, 0x7f, 0x00, 0x00},
    {0x00, 0x41, 0x36, 0x08, 0x00}, {0x08, 0x08, 0x2a, 0x1c, 0x08}};

void draw_text(Image& img, long x, long y, const std::string& text, const Color& color) {
    long cx = x;
    for (char ch : text) {
        if (ch >= 0x20 && ch < 0x7f) {
            const unsigned char* glyph = kFont5x7[ch - 0x20];
            for (int col = 0; col < 5; ++col)
                for (int row = 0; row < 7; ++row)
                    if (glyph[col] & (1u << row))
                        if (img.in_bounds(cx + col, y + row))
                            img.set_pixel(static_cast<std::size_t>(cx + col),
                                          static_cast<std::size_t>(y + row), color);
        }
        cx += 6;
    }
}

Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1) {
    require(x0 < x1 && y0 < y1 && x1 <= img.width && y1 <= img.height, "image: bad crop rect");
    Image out(x1 - x0, y1 - y0);
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(x - x0, y - y0, c) = img.at(x, y, c);
    return out;
}

Color region_mean(const Image& img, std::size_t x0, std::size_t y0, std::size_t x1,
                  std::size_t y1) {
    require(x0 < x1 && y0 < y1 && x1 <= img.width && y1 <= img.height, "image: bad region");
    Color acc{0.0, 0.0, 0.0};
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
            for (std::size_t c = 0; c < 3; ++c) acc[c] += img.at(x, y, c);
    double n = static_cast<double>((x1 - x0) * (y1 - y0));
    for (auto& v : acc) v /= n;
    return acc;
}

}  // namespace relgen::core
