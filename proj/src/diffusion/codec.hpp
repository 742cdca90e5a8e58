// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "core/image.hpp"
#include "diffusion/schedule.hpp"

namespace relgen::diffusion {

// Fixed linear patch codec, the desk-scale stand-in for a VAE. encode splits
// the image into downscale_factor^2 pixel patches and applies channel_map
// (channels x patch_dim) to each flattened patch; decode applies the
// pseudo-inverse. Both directions are deterministic and linear.
class ToyCodec {
public:
    // Default map: 4 channels with orthonormal rows (mean, horizontal ramp,
    // vertical ramp, red-minus-blue), so decode is the transpose.
    explicit ToyCodec(std::size_t downscale_factor = 8, std::size_t channels = 4);
    // Custom map; the pseudo-inverse is computed from the rows (requires full
    // row rank).
    ToyCodec(std::size_t downscale_factor, core::Tensor channel_map);

    std::size_t downscale_factor() const { return factor_; }
    std::size_t channels() const { return map_.rows(); }
    std::size_t patch_dim() const { return map_.cols(); }

    LatentGrid encode(const core::Image& img) const;
    core::Image decode(const LatentGrid& z) const;

private:
    void build_pinv();

    std::size_t factor_;
    core::Tensor map_;   // [C, factor*factor*3]
    core::Tensor pinv_;  // [factor*factor*3, C]
};

}  // namespace relgen::diffusion
