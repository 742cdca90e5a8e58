// SPDX-License-Identifier: Apache-2.0
#include "diffusion/schedule.hpp"

#include <cmath>

#include <json.hpp>

namespace relgen::diffusion {

using core::Tensor;

Tensor LatentGrid::to_position_major() const {
    std::size_t c = channels(), h = height(), w = width();
    Tensor out({h * w, c});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out.at(y * w + x, ch) = data.at(ch, y, x);
    return out;
}

LatentGrid LatentGrid::from_position_major(const Tensor& t, std::size_t h, std::size_t w,
                                           std::size_t downscale_factor) {
    core::require(t.rank() == 2 && t.rows() == h * w, "latent: bad position-major shape");
    std::size_t c = t.cols();
    LatentGrid g;
    g.downscale_factor = downscale_factor;
    g.data = Tensor({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) g.data.at(ch, y, x) = t.at(y * w + x, ch);
    return g;
}

void NoiseSchedule::validate() const {
    core::require(!alpha_bar_.empty(), "schedule: empty table");
    core::require(alpha_bar_.front() >= 0.999, "schedule: alpha_bar[0] must be >= 0.999");
    for (std::size_t t = 0; t < alpha_bar_.size(); ++t) {
        core::require(alpha_bar_[t] > 0.0 && alpha_bar_[t] <= 1.0,
                      "schedule: alpha_bar values must lie in (0, 1]");
        if (t > 0)
            core::require(alpha_bar_[t] < alpha_bar_[t - 1],
                          "schedule: alpha_bar must be strictly decreasing");
    }
}

NoiseSchedule NoiseSchedule::linear(std::size_t T, double beta_start, double beta_end) {
    core::require(T > 0, "schedule: T must be positive");
    NoiseSchedule s;
    s.family_ = "linear";
    s.beta_start_ = beta_start;
    s.beta_end_ = beta_end;
    s.alpha_bar_.resize(T);
    double abar = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
        double beta = T == 1 ? beta_start
                             : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                                static_cast<double>(T - 1);
        abar *= 1.0 - beta;
        s.alpha_bar_[t] = abar;
    }
    s.validate();
    return s;
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
    NoiseSchedule s;
    s.family_ = "explicit";
    s.alpha_bar_ = std::move(alpha_bar);
    s.validate();
    return s;
}

std::string NoiseSchedule::to_json() const {
    nlohmann::ordered_json j;
    j["family"] = family_;
    j["T"] = T();
    if (family_ == "linear") {
        j["beta_start"] = beta_start_;
        j["beta_end"] = beta_end_;
    } else {
        j["alpha_bar"] = alpha_bar_;
    }
    return j.dump();
}

NoiseSchedule NoiseSchedule::from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
        core::fail_invalid(std::string("schedule: bad JSON: ") + e.what());
    }
    std::string family = j.value("family", std::string("linear"));
    if (family == "linear") {
        return linear(j.at("T").get<std::size_t>(), j.value("beta_start", 1e-4),
                      j.value("beta_end", 2e-2));
    }
    core::require(family == "explicit", "schedule: unknown family " + family);
    return from_alpha_bar(j.at("alpha_bar").get<std::vector<double>>());
}

static void check_pair(const LatentGrid& a, const LatentGrid& b, std::size_t t,
                       const NoiseSchedule& sched) {
    core::require(a.same_shape(b), "diffusion: latent shape mismatch");
    core::require(t < sched.T(), "diffusion: timestep out of range");
}

LatentGrid forward_noise(const LatentGrid& z0, std::size_t t, const LatentGrid& eps,
                         const NoiseSchedule& sched) {
    check_pair(z0, eps, t, sched);
    double abar = sched.alpha_bar(t);
    double cs = std::sqrt(abar), cn = std::sqrt(1.0 - abar);
    LatentGrid out = z0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = cs * z0.data[i] + cn * eps.data[i];
    return out;
}

LatentGrid predict_z0(const LatentGrid& zt, const LatentGrid& eps_hat, std::size_t t,
                      const NoiseSchedule& sched) {
    check_pair(zt, eps_hat, t, sched);
    double abar = sched.alpha_bar(t);
    core::require(abar > 0.0, "diffusion: alpha_bar must be positive to invert");
    double cn = std::sqrt(1.0 - abar), inv = 1.0 / std::sqrt(abar);
    LatentGrid out = zt;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (zt.data[i] - cn * eps_hat.data[i]) * inv;
    return out;
}

core::ad::Var predict_z0_var(const core::ad::Var& zt, const core::ad::Var& eps_hat, std::size_t t,
                             const NoiseSchedule& sched) {
    namespace ad = core::ad;
    double abar = sched.alpha_bar(t);
    core::require(abar > 0.0, "diffusion: alpha_bar must be positive to invert");
    double cn = std::sqrt(1.0 - abar), inv = 1.0 / std::sqrt(abar);
    return ad::scale(ad::sub(zt, ad::scale(eps_hat, cn)), inv);
}

}  // namespace relgen::diffusion
