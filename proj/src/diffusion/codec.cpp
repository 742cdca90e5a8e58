// SPDX-License-Identifier: Apache-2.0
#include "diffusion/codec.hpp"

#include <cmath>

namespace relgen::diffusion {

using core::Tensor;

// Gram-Schmidt over the rows of m, in place.
static void orthonormalize_rows(Tensor& m) {
    std::size_t r = m.rows(), c = m.cols();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < c; ++k) dot += m.at(i, k) * m.at(j, k);
            for (std::size_t k = 0; k < c; ++k) m.at(i, k) -= dot * m.at(j, k);
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < c; ++k) norm += m.at(i, k) * m.at(i, k);
        norm = std::sqrt(norm);
        core::require(norm > 1e-12, "codec: channel_map rows are rank deficient");
        for (std::size_t k = 0; k < c; ++k) m.at(i, k) /= norm;
    }
}

ToyCodec::ToyCodec(std::size_t downscale_factor, std::size_t channels) : factor_(downscale_factor) {
    core::require(factor_ > 0, "codec: downscale_factor must be positive");
    core::require(channels >= 1, "codec: need at least one channel");
    std::size_t f = factor_, dim = f * f * 3;
    core::require(channels <= dim, "codec: more channels than patch dim");
    map_ = Tensor({channels, dim});
    // seed patterns before orthonormalisation: mean, x-ramp, y-ramp, r-b axis
    for (std::size_t y = 0; y < f; ++y)
        for (std::size_t x = 0; x < f; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                std::size_t k = (y * f + x) * 3 + c;
                double xr = f == 1 ? 0.0 : (2.0 * x / (f - 1.0) - 1.0);
                double yr = f == 1 ? 0.0 : (2.0 * y / (f - 1.0) - 1.0);
                if (channels > 0) map_.at(0, k) = 1.0;
                if (channels > 1) map_.at(1, k) = xr;
                if (channels > 2) map_.at(2, k) = yr;
                if (channels > 3) map_.at(3, k) = (c == 0 ? 1.0 : (c == 2 ? -1.0 : 0.0));
                // further channels: shifted harmonics keep rows independent
                for (std::size_t ch = 4; ch < channels; ++ch)
                    map_.at(ch, k) = std::cos((ch - 2.0) * 3.14159265358979 * xr + 0.5 * c) *
                                     std::sin((ch - 2.5) * 1.7 * yr + 0.25);
            }
    orthonormalize_rows(map_);
    build_pinv();
}

ToyCodec::ToyCodec(std::size_t downscale_factor, Tensor channel_map)
    : factor_(downscale_factor), map_(std::move(channel_map)) {
    core::require(factor_ > 0, "codec: downscale_factor must be positive");
    core::require(map_.rank() == 2 && map_.cols() == factor_ * factor_ * 3,
                  "codec: channel_map must be [C, factor*factor*3]");
    build_pinv();
}

// pinv = M^T (M M^T)^{-1}; the Gram matrix is tiny (C x C).
void ToyCodec::build_pinv() {
    std::size_t c = map_.rows(), d = map_.cols();
    Tensor gram({c, c});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) acc += map_.at(i, k) * map_.at(j, k);
            gram.at(i, j) = acc;
        }
    // Gauss-Jordan inverse
    Tensor inv = Tensor::identity(c);
    for (std::size_t col = 0; col < c; ++col) {
        std::size_t piv = col;
        for (std::size_t r2 = col + 1; r2 < c; ++r2)
            if (std::fabs(gram.at(r2, col)) > std::fabs(gram.at(piv, col))) piv = r2;
        core::require(std::fabs(gram.at(piv, col)) > 1e-12,
                      "codec: channel_map rows are rank deficient");
        if (piv != col)
            for (std::size_t k = 0; k < c; ++k) {
                std::swap(gram.at(piv, k), gram.at(col, k));
                std::swap(inv.at(piv, k), inv.at(col, k));
            }
        double p = gram.at(col, col);
        for (std::size_t k = 0; k < c; ++k) {
            gram.at(col, k) /= p;
            inv.at(col, k) /= p;
        }
        for (std::size_t r2 = 0; r2 < c; ++r2) {
            if (r2 == col) continue;
            double f = gram.at(r2, col);
            if (f == 0.0) continue;
            for (std::size_t k = 0; k < c; ++k) {
                gram.at(r2, k) -= f * gram.at(col, k);
                inv.at(r2, k) -= f * inv.at(col, k);
            }
        }
    }
    pinv_ = Tensor({d, c});
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t i = 0; i < c; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += map_.at(j, k) * inv.at(j, i);
            pinv_.at(k, i) = acc;
        }
}

LatentGrid ToyCodec::encode(const core::Image& img) const {
    core::require(img.width % factor_ == 0 && img.height % factor_ == 0,
                  "codec: image dimensions must be divisible by downscale_factor");
    std::size_t h = img.height / factor_, w = img.width / factor_, c = map_.rows();
    LatentGrid z;
    z.downscale_factor = factor_;
    z.data = Tensor({c, h, w});
    std::vector<double> patch(factor_ * factor_ * 3);
    for (std::size_t py = 0; py < h; ++py)
        for (std::size_t px = 0; px < w; ++px) {
            std::size_t k = 0;
            for (std::size_t y = 0; y < factor_; ++y)
                for (std::size_t x = 0; x < factor_; ++x)
                    for (std::size_t ch = 0; ch < 3; ++ch)
                        patch[k++] = img.at(px * factor_ + x, py * factor_ + y, ch);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < patch.size(); ++i) acc += map_.at(ch, i) * patch[i];
                z.data.at(ch, py, px) = acc;
            }
        }
    return z;
}

core::Image ToyCodec::decode(const LatentGrid& z) const {
    core::require(z.channels() == map_.rows(), "codec: latent channel count mismatch");
    std::size_t h = z.height(), w = z.width();
    core::Image img(w * factor_, h * factor_);
    for (std::size_t py = 0; py < h; ++py)
        for (std::size_t px = 0; px < w; ++px) {
            std::size_t k = 0;
            for (std::size_t y = 0; y < factor_; ++y)
                for (std::size_t x = 0; x < factor_; ++x)
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < z.channels(); ++j)
                            acc += pinv_.at(k, j) * z.data.at(j, py, px);
                        img.at(px * factor_ + x, py * factor_ + y, ch) = acc;
                        ++k;
                    }
        }
    return img;
}

}  // namespace relgen::diffusion
