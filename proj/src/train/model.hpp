// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "attention/attention.hpp"
#include "core/archive.hpp"
#include "core/embedder.hpp"
#include "diffusion/codec.hpp"
#include "diffusion/schedule.hpp"
#include "idext/id_extractor.hpp"
#include "localenc/local_encoder.hpp"
#include "train/triplet.hpp"

namespace relgen::train {

using core::ParamStore;
using core::Rng;
using core::Tensor;
using diffusion::LatentGrid;
using diffusion::NoiseSchedule;
using diffusion::ToyCodec;
namespace ad = core::ad;

enum class AblationMode { full, blank_image_prompt, no_kml, no_local_tokens };

AblationMode ablation_from_string(const std::string& s);
const char* to_string(AblationMode m);

// Architecture-level configuration. Everything that decides parameter shapes
// or base initialisation lives here; run-time knobs live in TrainConfig.
struct ModelConfig {
    std::size_t image_size = 64;
    std::size_t downscale_factor = 8;
    std::size_t latent_channels = 4;
    std::size_t d_model = 16;
    std::size_t heads = 2;
    std::size_t text_dim = 16;
    std::size_t id_tokens = 4;
    std::size_t extractor_depth = 2;
    std::size_t local_grid = 4;
    std::string injection_method = "concatenate";
    unsigned lora_rank = 4;
    double lora_scale = 0.0;    // 0 -> 1/rank
    double lora_a_init = 20.0;  // init std of adapter A matrices (B is zero)
    double gamma = 0.6;
    std::uint64_t seed = 1234;  // base-weight init; equal seeds build equal models

    // latent standardisation and output-head conditioning
    double latent_scale = 1.0;
    double proj_out_scale = 0.05;
    bool scale_correction_by_signal = true;  // correction head scaled by sqrt(abar_t)

    // noise schedule
    std::size_t timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;

    std::size_t latent_side() const { return image_size / downscale_factor; }
    double effective_lora_scale() const {
        return lora_scale > 0.0 ? lora_scale : 1.0 / static_cast<double>(lora_rank);
    }

    std::string meta_json() const;  // dims header embedded into weight archives
    void validate() const;
};

// Noise predictor: three parallel cross-attention blocks around a pooled
// bottleneck, with the noisy latent passed through to the output so the
// network only has to learn a correction field.
class ToyDenoiser {
public:
    static ToyDenoiser create(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                              const NoiseSchedule& sched);
    static ToyDenoiser bind_existing(ParamStore& store, const ModelConfig& cfg,
                                     const NoiseSchedule& sched);

    // zt: position-major latent [side*side, C]; c_i: identity tokens; c_t:
    // text tokens. Returns eps_hat, position-major.
    ad::Var forward(const Tensor& zt, std::size_t t, const ad::Var& c_i, const ad::Var& c_t,
                    std::optional<double> gamma_override = std::nullopt) const;

    std::vector<std::string> adapter_param_names() const;
    const std::vector<attn::ParallelCrossAttentionLayer>& layers() const { return layers_; }
    static constexpr std::size_t kNumLayers = 3;

    ToyDenoiser() = default;

private:

    ad::Var block(const ad::Var& h, std::size_t index, const ad::Var& c_i, const ad::Var& c_t,
                  std::optional<double> gamma_override) const;

    ParamStore* store_ = nullptr;
    ModelConfig cfg_;
    std::vector<attn::ParallelCrossAttentionLayer> layers_;
    Tensor pool_, unpool_;  // fixed 2x2 average-pool and nearest-neighbour unpool
    const std::vector<double>* signal_level_ = nullptr;  // schedule alpha_bar table
};

// Conditions assembled for one denoiser call.
struct Conditions {
    ad::Var c_i;  // identity tokens, [n, d_model]
    ad::Var c_t;  // text tokens, [m, text_dim]
};

// The full desk-scale model: codec + schedule + text embedder + local encoder
// + id extractor + denoiser, all over one parameter store.
class Model {
public:
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const ToyCodec& codec() const { return codec_; }
    const core::TextEmbedder& embedder() const { return embedder_; }
    localenc::LocalEncoder& local_encoder() { return local_encoder_; }
    idext::IdExtractor& id_extractor() { return id_extractor_; }
    const ToyDenoiser& denoiser() const { return denoiser_; }

    // Standardised latent space used by training and sampling: encode() then
    // shift/scale per channel so entries are O(1).
    LatentGrid encode_standardized(const core::Image& img) const;
    core::Image decode_standardized(const LatentGrid& z) const;

    Tensor text_condition(const std::string& text) const;

    // Identity tokens from image prompts. Per object: local-encoder bundle,
    // grounded query from the caption embedding and box, then the extractor.
    // Differentiable through the extractor gates.
    ad::Var image_condition(const std::vector<core::Image>& prompts,
                            const std::vector<idext::Box>& boxes,
                            const std::vector<std::string>& object_captions,
                            AblationMode mode = AblationMode::full) const;

    Conditions conditions_for(const Triplet& t, AblationMode mode) const;

    const core::Image& blank_prompt() const { return blank_prompt_; }

    // Trainable-parameter policy. Adapters always train; extractor gates only
    // when requested.
    void set_freeze_policy(bool train_extractor_gates);

    std::vector<std::string> adapter_param_names() const;

    // AdapterSet archive: adapters keyed "layer<k>/<slot>", gates keyed
    // "id_extractor/block<k>/gate" when trained.
    core::WeightArchive export_adapters(bool include_gates) const;
    void import_adapters(const core::WeightArchive& ar);

    // Distilled local-encoder weights, namespace "local_encoder/".
    core::WeightArchive export_local_encoder() const;
    void import_local_encoder(const core::WeightArchive& ar);

private:
    ModelConfig cfg_;
    ParamStore store_;
    NoiseSchedule schedule_;
    ToyCodec codec_;
    core::TextEmbedder embedder_;
    localenc::LocalEncoder local_encoder_;
    idext::IdExtractor id_extractor_;
    ToyDenoiser denoiser_;
    std::vector<double> latent_shift_;
    double latent_scale_ = 0.35;

    mutable core::Image blank_prompt_;
};

}  // namespace relgen::train
