// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "train/model.hpp"
#include "train/triplet.hpp"

namespace relgen::train {

struct TrainConfig {
    unsigned lora_rank = 4;
    double lora_scale = 0.0;  // 0 -> 1/rank
    double gamma = 0.6;
    double lambda_kml = 1e-3;
    std::size_t steps = 500;
    double lr = 1e-4;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    AblationMode ablation = AblationMode::full;
    bool train_extractor_gates = false;

    void validate() const;
};

// Latent-grid index of one keypoint after the pixel-to-latent mapping.
struct LatentIndex {
    std::size_t x = 0;
    std::size_t y = 0;
};

struct MappedKeypoints {
    std::vector<LatentIndex> index;  // 17 entries
    std::vector<bool> visible;       // invisible keypoints are excluded
};

// Floor-divides pixel coordinates by downscale_factor and clamps into the
// latent grid. Total: never rejects.
MappedKeypoints keypoint_to_latent(const KeypointSet& kp, std::size_t downscale_factor,
                                   std::size_t latent_w, std::size_t latent_h);

struct KmlResult {
    double value = 0.0;
    bool no_visible_keypoints = false;  // loss defined as 0 in that case
};

// Mean over visible keypoint pairs of the squared channel-vector difference
// between the encoded image prompt and the predicted clean latent.
KmlResult kml_loss(const LatentGrid& z0_hat, const LatentGrid& enc_ci,
                   const std::vector<LatentIndex>& kp_z0, const std::vector<LatentIndex>& kp_ci,
                   const std::vector<bool>& visibility);

enum class LossTerm { full, denoise_only, kml_only };

// Test seam: replaces the model's noise predictor. Receives the position-major
// noisy latent, the timestep and the assembled conditions.
using DenoiserFn = std::function<ad::Var(const Tensor& zt, std::size_t t, const ad::Var& c_i,
                                         const ad::Var& c_t)>;

struct LossBreakdown {
    double total = 0.0;
    double denoise = 0.0;
    double kml = 0.0;
    bool kml_warning = false;  // a batch item had zero visible keypoint pairs
};

// One optimisation objective evaluation over a batch: samples t and eps per
// item, runs the denoiser, and assembles L_denoise + lambda * L_KML. With
// do_backward, gradients land on the store's trainable entries (adapters and,
// when configured, extractor gates).
LossBreakdown total_loss(Model& model, const std::vector<const Triplet*>& batch,
                         const TrainConfig& cfg, Rng& rng, bool do_backward,
                         LossTerm term = LossTerm::full, const DenoiserFn* denoiser_override = nullptr);

struct TrainLogEntry {
    std::size_t step = 0;
    double denoise = 0.0;
    double kml = 0.0;
    double total = 0.0;
};

struct FinetuneResult {
    core::WeightArchive adapters;
    std::vector<TrainLogEntry> log;
    std::uint64_t frozen_checksum_before = 0;
    std::uint64_t frozen_checksum_after = 0;
};

// RelationLoRA fine-tuning: Adam over the adapter parameters only (plus
// extractor gates when configured), `steps` optimisation steps, per-step loss
// log. Aborts on divergence (total > 1e3) or non-finite loss.
FinetuneResult finetune(Model& model, const std::vector<Triplet>& dataset,
                        const TrainConfig& cfg);

// Line-delimited JSON log: {"step":..,"denoise":..,"kml":..,"total":..} with
// full-precision floats so replays compare bit-for-bit.
std::string format_train_log(const std::vector<TrainLogEntry>& log);

}  // namespace relgen::train
