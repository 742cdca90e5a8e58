// SPDX-License-Identifier: Apache-2.0
#include "train/trainer.hpp"

#include <cmath>
#include <cstdio>

namespace relgen::train {

void TrainConfig::validate() const {
    core::require(lambda_kml >= 0.0, "train config: lambda must be >= 0");
    core::require(steps > 0, "train config: steps must be positive");
    core::require(lr > 0.0, "train config: learning rate must be positive");
    core::require(batch_size > 0, "train config: batch size must be positive");
    core::require(lora_rank > 0, "train config: lora rank must be positive");
    core::require(gamma >= 0.0 && gamma <= 1.0, "train config: gamma must lie in [0, 1]");
}

MappedKeypoints keypoint_to_latent(const KeypointSet& kp, std::size_t downscale_factor,
                                   std::size_t latent_w, std::size_t latent_h) {
    core::require(downscale_factor > 0 && latent_w > 0 && latent_h > 0,
                  "keypoint_to_latent: bad grid");
    MappedKeypoints out;
    out.index.resize(kKeypointCount);
    out.visible.resize(kKeypointCount);
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
        double fx = std::floor(std::max(0.0, kp[k].x) / static_cast<double>(downscale_factor));
        double fy = std::floor(std::max(0.0, kp[k].y) / static_cast<double>(downscale_factor));
        std::size_t ix = std::min(static_cast<std::size_t>(fx), latent_w - 1);
        std::size_t iy = std::min(static_cast<std::size_t>(fy), latent_h - 1);
        out.index[k] = {ix, iy};
        out.visible[k] = kp[k].visible;
    }
    return out;
}

KmlResult kml_loss(const LatentGrid& z0_hat, const LatentGrid& enc_ci,
                   const std::vector<LatentIndex>& kp_z0, const std::vector<LatentIndex>& kp_ci,
                   const std::vector<bool>& visibility) {
    core::require(kp_z0.size() == kp_ci.size() && kp_z0.size() == visibility.size(),
                  "kml_loss: index lists must have equal length");
    core::require(z0_hat.channels() == enc_ci.channels(), "kml_loss: channel count mismatch");
    std::size_t c = z0_hat.channels();
    double acc = 0.0;
    std::size_t n_vis = 0;
    for (std::size_t k = 0; k < kp_z0.size(); ++k) {
        if (!visibility[k]) continue;
        core::require(kp_z0[k].x < z0_hat.width() && kp_z0[k].y < z0_hat.height() &&
                          kp_ci[k].x < enc_ci.width() && kp_ci[k].y < enc_ci.height(),
                      "kml_loss: keypoint index outside the latent grid");
        for (std::size_t ch = 0; ch < c; ++ch) {
            double d = enc_ci.data.at(ch, kp_ci[k].y, kp_ci[k].x) -
                       z0_hat.data.at(ch, kp_z0[k].y, kp_z0[k].x);
            acc += d * d;
        }
        ++n_vis;
    }
    if (n_vis == 0) return {0.0, true};
    return {acc / static_cast<double>(n_vis), false};
}

namespace {

// Differentiable KML over the position-major z0_hat of one batch item,
// summed (not yet averaged) over the visible pairs of every object.
struct KmlAccumulator {
    ad::Var sum;  // scalar
    std::size_t pairs = 0;

    void add(const ad::Var& z0_hat_pos, std::size_t lat_w, const Tensor& enc_ci_pos,
             const MappedKeypoints& kp_z0, const MappedKeypoints& kp_ci) {
        std::vector<std::size_t> idx_z0, idx_ci;
        for (std::size_t k = 0; k < kKeypointCount; ++k) {
            if (!kp_z0.visible[k] || !kp_ci.visible[k]) continue;
            idx_z0.push_back(kp_z0.index[k].y * lat_w + kp_z0.index[k].x);
            idx_ci.push_back(kp_ci.index[k].y * lat_w + kp_ci.index[k].x);
        }
        if (idx_z0.empty()) return;
        Tensor gathered_ci({idx_ci.size(), enc_ci_pos.cols()});
        for (std::size_t r = 0; r < idx_ci.size(); ++r)
            for (std::size_t ch = 0; ch < enc_ci_pos.cols(); ++ch)
                gathered_ci.at(r, ch) = enc_ci_pos.at(idx_ci[r], ch);
        auto diff = ad::sub(ad::constant(gathered_ci), ad::gather_rows(z0_hat_pos, idx_z0));
        auto sq = ad::sum_all(ad::square(diff));
        sum = sum ? ad::add(sum, sq) : sq;
        pairs += idx_z0.size();
    }
};

}  // namespace

LossBreakdown total_loss(Model& model, const std::vector<const Triplet*>& batch,
                         const TrainConfig& cfg, Rng& rng, bool do_backward, LossTerm term,
                         const DenoiserFn* denoiser_override) {
    core::require(!batch.empty(), "total_loss: empty batch");
    cfg.validate();

    core::GradModeGuard grad_mode(model.store(), do_backward);
    const NoiseSchedule& sched = model.schedule();
    std::size_t side = model.config().latent_side();
    double lambda = cfg.ablation == AblationMode::no_kml ? 0.0 : cfg.lambda_kml;

    ad::Var batch_total;
    double denoise_acc = 0.0, kml_acc = 0.0;
    bool kml_warning = false;

    // stratified timestep sampling: each batch slot draws uniformly within
    // its stratum of [0, T), so the per-step loss is a low-variance estimate
    // of the uniform-t expectation
    std::size_t strata = batch.size();
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
        const Triplet* item = batch[slot];
        std::size_t lo = slot * sched.T() / strata;
        std::size_t hi = (slot + 1) * sched.T() / strata;
        std::size_t t = lo + rng.uniform_index(std::max<std::size_t>(1, hi - lo));

        LatentGrid z0 = model.encode_standardized(item->target);
        LatentGrid eps = z0;
        rng.fill_normal(eps.data.vec());
        LatentGrid zt = diffusion::forward_noise(z0, t, eps, sched);

        Conditions cond = model.conditions_for(*item, cfg.ablation);
        auto eps_hat =
            denoiser_override
                ? (*denoiser_override)(zt.to_position_major(), t, cond.c_i, cond.c_t)
                : model.denoiser().forward(zt.to_position_major(), t, cond.c_i, cond.c_t,
                                           cfg.gamma);

        auto eps_const = ad::constant(eps.to_position_major());
        auto denoise = ad::mean_all(ad::square(ad::sub(eps_const, eps_hat)));

        auto z0_hat =
            diffusion::predict_z0_var(ad::constant(zt.to_position_major()), eps_hat, t, sched);
        KmlAccumulator kml;
        for (std::size_t j = 0; j < item->object_count(); ++j) {
            // blank-image-prompt mode replaces c_i everywhere it is used,
            // including the encoded prompt the matching loss reads from
            LatentGrid enc_ci = model.encode_standardized(
                cfg.ablation == AblationMode::blank_image_prompt ? model.blank_prompt()
                                                                 : item->prompts[j]);
            MappedKeypoints kp_z0 = keypoint_to_latent(
                item->kp_target[j], model.config().downscale_factor, side, side);
            MappedKeypoints kp_ci = keypoint_to_latent(
                item->kp_prompts[j], model.config().downscale_factor,
                enc_ci.width(), enc_ci.height());
            kml.add(z0_hat, side, enc_ci.to_position_major(), kp_z0, kp_ci);
        }

        ad::Var kml_term;
        if (kml.pairs > 0) {
            kml_term = ad::scale(kml.sum, 1.0 / static_cast<double>(kml.pairs));
        } else {
            kml_warning = true;
            kml_term = ad::constant(Tensor::scalar(0.0));
        }

        ad::Var item_loss;
        switch (term) {
            case LossTerm::full:
                item_loss = ad::add(denoise, ad::scale(kml_term, lambda));
                break;
            case LossTerm::denoise_only:
                item_loss = denoise;
                break;
            case LossTerm::kml_only:
                item_loss = ad::scale(kml_term, lambda);
                break;
        }
        denoise_acc += ad::val(denoise)[0];
        kml_acc += ad::val(kml_term)[0];
        batch_total = batch_total ? ad::add(batch_total, item_loss) : item_loss;
    }

    double inv = 1.0 / static_cast<double>(batch.size());
    batch_total = ad::scale(batch_total, inv);

    LossBreakdown out;
    out.total = ad::val(batch_total)[0];
    out.denoise = denoise_acc * inv;
    out.kml = kml_acc * inv;
    out.kml_warning = kml_warning;

    core::require(std::isfinite(out.total), "total_loss: non-finite loss");

    if (do_backward) {
        ad::backward(batch_total);
        model.store().harvest_and_clear();
    }
    return out;
}

FinetuneResult finetune(Model& model, const std::vector<Triplet>& dataset,
                        const TrainConfig& cfg) {
    cfg.validate();
    core::require(!dataset.empty(), "finetune: empty dataset");
    core::require(dataset.size() >= 4, "finetune: need at least 4 triplets (got " +
                                           std::to_string(dataset.size()) + ")");
    core::require(cfg.lora_rank == model.config().lora_rank,
                  "finetune: config lora_rank does not match the model's adapters");
    for (const auto& t : dataset) validate_triplet(t);

    model.set_freeze_policy(cfg.train_extractor_gates);
    model.store().zero_grads();

    FinetuneResult result;
    result.frozen_checksum_before = model.store().checksum_frozen();

    Rng rng(cfg.seed);
    core::Adam adam(cfg.lr);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::vector<const Triplet*> batch;
        for (std::size_t b = 0; b < cfg.batch_size; ++b)
            batch.push_back(&dataset[rng.uniform_index(dataset.size())]);

        LossBreakdown loss = total_loss(model, batch, cfg, rng, true);
        if (!std::isfinite(loss.total))
            core::fail_runtime("finetune: non-finite loss at step " + std::to_string(step));
        if (loss.total > 1e3)
            core::fail_runtime("finetune: divergence at step " + std::to_string(step) +
                               " (total " + std::to_string(loss.total) + ")");

        adam.step(model.store());
        model.store().zero_grads();
        result.log.push_back({step, loss.denoise, loss.kml, loss.total});
    }

    result.frozen_checksum_after = model.store().checksum_frozen();
    result.adapters = model.export_adapters(cfg.train_extractor_gates);
    return result;
}

std::string format_train_log(const std::vector<TrainLogEntry>& log) {
    std::string out;
    char buf[256];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf),
                      "{\"step\":%zu,\"denoise\":%.17g,\"kml\":%.17g,\"total\":%.17g}\n", e.step,
                      e.denoise, e.kml, e.total);
        out += buf;
    }
    return out;
}

}  // namespace relgen::train
