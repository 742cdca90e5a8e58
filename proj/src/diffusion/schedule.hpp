// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace relgen::diffusion {

// Latent tensor (channels, h, w) plus the pixel-to-latent ratio of the codec
// that produced it.
struct LatentGrid {
    core::Tensor data;  // shape {C, h, w}
    std::size_t downscale_factor = 8;

    std::size_t channels() const { return data.shape().at(0); }
    std::size_t height() const { return data.shape().at(1); }
    std::size_t width() const { return data.shape().at(2); }

    bool same_shape(const LatentGrid& o) const { return data.same_shape(o.data); }

    // (positions x channels) view used by the attention stack; position index
    // is y * width + x.
    core::Tensor to_position_major() const;
    static LatentGrid from_position_major(const core::Tensor& t, std::size_t h, std::size_t w,
                                          std::size_t downscale_factor);
};

// Cumulative signal table for a DDPM-style forward process. Values are
// validated at construction: strictly decreasing, in (0,1], first entry
// >= 0.999.
class NoiseSchedule {
public:
    // linear-beta family
    static NoiseSchedule linear(std::size_t T, double beta_start = 1e-4, double beta_end = 2e-2);
    // explicit table (tests and custom schedules)
    static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

    std::size_t T() const { return alpha_bar_.size(); }
    double alpha_bar(std::size_t t) const {
        core::require(t < alpha_bar_.size(), "schedule: timestep out of range");
        return alpha_bar_[t];
    }
    const std::vector<double>& table() const { return alpha_bar_; }

    std::string family() const { return family_; }
    double beta_start() const { return beta_start_; }
    double beta_end() const { return beta_end_; }

    std::string to_json() const;
    static NoiseSchedule from_json(const std::string& json_text);

private:
    NoiseSchedule() = default;
    void validate() const;

    std::vector<double> alpha_bar_;
    std::string family_ = "explicit";
    double beta_start_ = 0.0;
    double beta_end_ = 0.0;
};

// z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps
LatentGrid forward_noise(const LatentGrid& z0, std::size_t t, const LatentGrid& eps,
                         const NoiseSchedule& sched);

// z0_hat = (z_t - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t); exact left
// inverse of forward_noise when eps_hat == eps.
LatentGrid predict_z0(const LatentGrid& zt, const LatentGrid& eps_hat, std::size_t t,
                      const NoiseSchedule& sched);

// Differentiable version over position-major Vars, used by the trainer.
core::ad::Var predict_z0_var(const core::ad::Var& zt, const core::ad::Var& eps_hat, std::size_t t,
                             const NoiseSchedule& sched);

}  // namespace relgen::diffusion
