// SPDX-License-Identifier: Apache-2.0
#include "train/model.hpp"

#include <cmath>

#include <json.hpp>

namespace relgen::train {

AblationMode ablation_from_string(const std::string& s) {
    if (s == "full") return AblationMode::full;
    if (s == "blank_image_prompt") return AblationMode::blank_image_prompt;
    if (s == "no_kml") return AblationMode::no_kml;
    if (s == "no_local_tokens") return AblationMode::no_local_tokens;
    core::fail_invalid("model: unknown ablation mode " + s);
}

const char* to_string(AblationMode m) {
    switch (m) {
        case AblationMode::full: return "full";
        case AblationMode::blank_image_prompt: return "blank_image_prompt";
        case AblationMode::no_kml: return "no_kml";
        case AblationMode::no_local_tokens: return "no_local_tokens";
    }
    return "?";
}

void ModelConfig::validate() const {
    core::require(image_size % downscale_factor == 0,
                  "model config: downscale_factor must divide image_size");
    core::require(latent_side() % 2 == 0, "model config: latent side must be even (pooling)");
    core::require(d_model % heads == 0, "model config: heads must divide d_model");
    core::require(gamma >= 0.0 && gamma <= 1.0, "model config: gamma must lie in [0, 1]");
    core::require(lora_rank > 0, "model config: lora_rank must be positive");
    core::require(timesteps > 0, "model config: timesteps must be positive");
    std::size_t side = latent_side();
    core::require(local_grid > 0 && side % local_grid == 0,
                  "model config: local_grid must divide the token grid");
    idext::injection_from_string(injection_method);
}

std::string ModelConfig::meta_json() const {
    nlohmann::ordered_json j;
    j["image_size"] = image_size;
    j["downscale_factor"] = downscale_factor;
    j["latent_channels"] = latent_channels;
    j["d_model"] = d_model;
    j["heads"] = heads;
    j["text_dim"] = text_dim;
    j["id_tokens"] = id_tokens;
    j["extractor_depth"] = extractor_depth;
    j["lora_rank"] = lora_rank;
    j["layers"] = ToyDenoiser::kNumLayers;
    return j.dump();
}

// ---------------------------------------------------------------------------

// sinusoidal embeddings shared by the denoiser: 2-D for positions, 1-D for t
static Tensor grid_position_embedding(std::size_t side, std::size_t dim) {
    Tensor out({side * side, dim});
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            for (std::size_t c = 0; c < dim; ++c) {
                double freq = std::pow(50.0, -static_cast<double>(c / 4) * 4.0 /
                                                  static_cast<double>(dim));
                double v = (c % 4 < 2) ? static_cast<double>(x) * freq
                                       : static_cast<double>(y) * freq;
                out[(y * side + x) * dim + c] = (c % 2 == 0) ? std::sin(v) : std::cos(v);
            }
    return out;
}

static Tensor timestep_embedding(std::size_t t, std::size_t dim) {
    Tensor out({dim});
    for (std::size_t c = 0; c < dim; ++c) {
        double freq = std::pow(10000.0, -static_cast<double>(c / 2) * 2.0 /
                                            static_cast<double>(dim));
        double v = static_cast<double>(t) * freq;
        out[c] = (c % 2 == 0) ? std::sin(v) : std::cos(v);
    }
    return out;
}

ToyDenoiser ToyDenoiser::create(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                                const NoiseSchedule& sched) {
    ToyDenoiser dn;
    dn.store_ = &store;
    dn.cfg_ = cfg;
    dn.signal_level_ = &sched.table();

    std::size_t d = cfg.d_model, c = cfg.latent_channels, hid = 2 * d;
    store.create("denoiser/proj_in",
                 core::randn({d, c}, rng, 1.0 / std::sqrt(static_cast<double>(c))), false);
    store.create("denoiser/proj_in_b", Tensor({d}), false);
    // small output head keeps the initial prediction near the passthrough
    store.create("denoiser/proj_out", core::randn({c, d}, rng, cfg.proj_out_scale), false);

    attn::AttentionDims dims{d, cfg.heads, cfg.text_dim, d};
    for (std::size_t k = 0; k < kNumLayers; ++k) {
        dn.layers_.push_back(attn::ParallelCrossAttentionLayer::create(
            store, "denoiser/attn" + std::to_string(k), dims, cfg.gamma, cfg.lora_rank,
            cfg.effective_lora_scale(), rng, true, cfg.lora_a_init));
        std::string bp = "denoiser/block" + std::to_string(k);
        store.create(bp + "/ffn_W1", core::randn({hid, d}, rng,
                                                 1.0 / std::sqrt(static_cast<double>(d))),
                     false);
        store.create(bp + "/ffn_b1", Tensor({hid}), false);
        store.create(bp + "/ffn_W2", core::randn({d, hid}, rng,
                                                 1.0 / std::sqrt(static_cast<double>(hid))),
                     false);
        store.create(bp + "/ffn_b2", Tensor({d}), false);
    }

    std::size_t side = cfg.latent_side(), half = side / 2;
    dn.pool_ = Tensor({half * half, side * side});
    dn.unpool_ = Tensor({side * side, half * half});
    for (std::size_t y = 0; y < half; ++y)
        for (std::size_t x = 0; x < half; ++x) {
            for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                    std::size_t src = (2 * y + dy) * side + (2 * x + dx);
                    dn.pool_.at(y * half + x, src) = 0.25;
                    dn.unpool_.at(src, y * half + x) = 1.0;
                }
        }
    return dn;
}

ToyDenoiser ToyDenoiser::bind_existing(ParamStore& store, const ModelConfig& cfg,
                                       const NoiseSchedule& sched) {
    ToyDenoiser dn;
    dn.store_ = &store;
    dn.cfg_ = cfg;
    dn.signal_level_ = &sched.table();
    attn::AttentionDims dims{cfg.d_model, cfg.heads, cfg.text_dim, cfg.d_model};
    for (std::size_t k = 0; k < kNumLayers; ++k)
        dn.layers_.push_back(attn::ParallelCrossAttentionLayer::bind_existing(
            store, "denoiser/attn" + std::to_string(k), dims, cfg.gamma, cfg.lora_rank,
            cfg.effective_lora_scale(), true));
    std::size_t side = cfg.latent_side(), half = side / 2;
    dn.pool_ = Tensor({half * half, side * side});
    dn.unpool_ = Tensor({side * side, half * half});
    for (std::size_t y = 0; y < half; ++y)
        for (std::size_t x = 0; x < half; ++x)
            for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                    std::size_t src = (2 * y + dy) * side + (2 * x + dx);
                    dn.pool_.at(y * half + x, src) = 0.25;
                    dn.unpool_.at(src, y * half + x) = 1.0;
                }
    return dn;
}

std::vector<std::string> ToyDenoiser::adapter_param_names() const {
    std::vector<std::string> names;
    for (const auto& layer : layers_) {
        auto ln = layer.adapter_param_names();
        names.insert(names.end(), ln.begin(), ln.end());
    }
    return names;
}

ad::Var ToyDenoiser::block(const ad::Var& h, std::size_t index, const ad::Var& c_i,
                           const ad::Var& c_t, std::optional<double> gamma_override) const {
    auto attended = ad::add(h, layers_[index].forward(h, c_i, c_t, gamma_override));
    std::string bp = "denoiser/block" + std::to_string(index);
    auto ffn = ad::add_rowvec(
        ad::matmul(ad::tanh_v(ad::add_rowvec(
                       ad::matmul(attended, ad::transpose(store_->bind(bp + "/ffn_W1"))),
                       store_->bind(bp + "/ffn_b1"))),
                   ad::transpose(store_->bind(bp + "/ffn_W2"))),
        store_->bind(bp + "/ffn_b2"));
    return ad::add(attended, ffn);
}

ad::Var ToyDenoiser::forward(const Tensor& zt, std::size_t t, const ad::Var& c_i,
                             const ad::Var& c_t, std::optional<double> gamma_override) const {
    std::size_t side = cfg_.latent_side();
    core::require(zt.rank() == 2 && zt.rows() == side * side && zt.cols() == cfg_.latent_channels,
                  "denoiser: latent shape mismatch");

    auto zt_const = ad::constant(zt);
    auto h = ad::add_rowvec(ad::matmul(zt_const, ad::transpose(store_->bind("denoiser/proj_in"))),
                            store_->bind("denoiser/proj_in_b"));
    h = ad::add(h, ad::constant(grid_position_embedding(side, cfg_.d_model)));
    h = ad::add_rowvec(h, ad::constant(timestep_embedding(t, cfg_.d_model)));

    h = block(h, 0, c_i, c_t, gamma_override);
    auto down = ad::matmul(ad::constant(pool_), h);
    down = block(down, 1, c_i, c_t, gamma_override);
    h = ad::add(h, ad::matmul(ad::constant(unpool_), down));
    h = block(h, 2, c_i, c_t, gamma_override);

    auto correction = ad::matmul(h, ad::transpose(store_->bind("denoiser/proj_out")));
    if (cfg_.scale_correction_by_signal && signal_level_ != nullptr && !signal_level_->empty()) {
        core::require(t < signal_level_->size(), "denoiser: timestep outside schedule");
        correction = ad::scale(correction, std::sqrt((*signal_level_)[t]));
    }
    return ad::add(zt_const, correction);
}

// ---------------------------------------------------------------------------

Model::Model(const ModelConfig& cfg)
    : cfg_(cfg),
      schedule_(NoiseSchedule::linear(cfg.timesteps, cfg.beta_start, cfg.beta_end)),
      codec_(cfg.downscale_factor, cfg.latent_channels),
      embedder_(cfg.text_dim, core::derive_seed(cfg.seed, "text")) {
    cfg_.validate();
    Rng rng(core::derive_seed(cfg.seed, "model"));

    localenc::LocalEncoderConfig lec;
    lec.dim = cfg.d_model;
    lec.patch = cfg.downscale_factor;
    lec.heads = cfg.heads;
    lec.image_size = cfg.image_size;
    local_encoder_ = localenc::LocalEncoder::create(store_, "local_encoder", lec, rng);

    idext::IdExtractorConfig iec;
    iec.dim = cfg.d_model;
    iec.num_queries = cfg.id_tokens;
    iec.depth = cfg.extractor_depth;
    iec.class_embed_dim = cfg.text_dim;
    iec.injection = idext::injection_from_string(cfg.injection_method);
    id_extractor_ = idext::IdExtractor::create(store_, "id_extractor", iec, rng, false);

    denoiser_ = ToyDenoiser::create(store_, cfg_, rng, schedule_);

    // latent standardisation: center on the encoding of a flat background
    latent_scale_ = cfg.latent_scale;
    core::Image flat(cfg.image_size, cfg.image_size, 0.85);
    LatentGrid zf = codec_.encode(flat);
    latent_shift_.resize(cfg.latent_channels);
    for (std::size_t c = 0; c < cfg.latent_channels; ++c)
        latent_shift_[c] = zf.data.at(c, 0, 0);

    blank_prompt_ = core::Image(cfg.image_size, cfg.image_size, 1.0);
}

LatentGrid Model::encode_standardized(const core::Image& img) const {
    LatentGrid z = codec_.encode(img);
    std::size_t c = z.channels(), hw = z.height() * z.width();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i)
            z.data[ch * hw + i] = (z.data[ch * hw + i] - latent_shift_[ch]) * latent_scale_;
    return z;
}

core::Image Model::decode_standardized(const LatentGrid& z) const {
    LatentGrid raw = z;
    std::size_t c = z.channels(), hw = z.height() * z.width();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i)
            raw.data[ch * hw + i] = raw.data[ch * hw + i] / latent_scale_ + latent_shift_[ch];
    core::Image img = codec_.decode(raw);
    for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

Tensor Model::text_condition(const std::string& text) const {
    return embedder_.embed_tokens(text);
}

ad::Var Model::image_condition(const std::vector<core::Image>& prompts,
                               const std::vector<idext::Box>& boxes,
                               const std::vector<std::string>& object_captions,
                               AblationMode mode) const {
    core::require(!prompts.empty(), "model: at least one image prompt required");
    core::require(prompts.size() == boxes.size() && prompts.size() == object_captions.size(),
                  "model: prompts/boxes/captions must align");
    std::vector<ad::Var> parts;
    for (std::size_t j = 0; j < prompts.size(); ++j) {
        const core::Image& img =
            mode == AblationMode::blank_image_prompt ? blank_prompt_ : prompts[j];
        localenc::TokenBundle bundle =
            local_encoder_.token_bundle(img, cfg_.local_grid);
        if (mode == AblationMode::no_local_tokens) bundle.tok_l = Tensor({0, cfg_.d_model});
        auto query = id_extractor_.build_query(embedder_.embed_pooled(object_captions[j]),
                                               boxes[j]);
        parts.push_back(id_extractor_.extract_identity_var(bundle, query));
    }
    return parts.size() == 1 ? parts[0] : ad::concat_rows(parts);
}

Conditions Model::conditions_for(const Triplet& t, AblationMode mode) const {
    std::vector<std::string> object_captions(t.captions.begin() + 1, t.captions.end());
    Conditions c;
    c.c_t = ad::constant(text_condition(t.text));
    c.c_i = image_condition(t.prompts, t.boxes, object_captions, mode);
    return c;
}

void Model::set_freeze_policy(bool train_extractor_gates) {
    for (auto& [name, e] : store_.entries()) e.trainable = false;
    for (const auto& name : denoiser_.adapter_param_names()) store_.set_trainable(name, true);
    if (train_extractor_gates)
        for (const auto& name : id_extractor_.gate_param_names())
            store_.set_trainable(name, true);
}

std::vector<std::string> Model::adapter_param_names() const {
    return denoiser_.adapter_param_names();
}

core::WeightArchive Model::export_adapters(bool include_gates) const {
    core::WeightArchive ar;
    ar.meta_json = cfg_.meta_json();
    for (std::size_t k = 0; k < ToyDenoiser::kNumLayers; ++k) {
        std::string store_prefix = "denoiser/attn" + std::to_string(k) + "/";
        std::string key_prefix = "layer" + std::to_string(k) + "/";
        for (auto slot : attn::ParallelCrossAttentionLayer::adapted_slots()) {
            core::ArchiveEntry e;
            e.rank = cfg_.lora_rank;
            e.scale = cfg_.effective_lora_scale();
            e.a = store_.value(store_prefix + attn::to_string(slot) + ".lora_A");
            e.b = store_.value(store_prefix + attn::to_string(slot) + ".lora_B");
            ar.entries.emplace(key_prefix + attn::to_string(slot), std::move(e));
        }
    }
    if (include_gates) {
        for (const auto& name : id_extractor_.gate_param_names()) {
            core::ArchiveEntry e;
            e.rank = 0;
            e.scale = 1.0;
            e.a = store_.value(name);
            ar.entries.emplace(name, std::move(e));
        }
    }
    return ar;
}

void Model::import_adapters(const core::WeightArchive& ar) {
    // dim compatibility report, before any mutation
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ar.meta_json);
    } catch (...) {
        meta = nlohmann::json::object();
    }
    std::string report;
    auto check = [&](const char* key, std::size_t expect) {
        if (meta.contains(key)) {
            std::size_t got = meta.at(key).get<std::size_t>();
            if (got != expect)
                report += std::string(key) + ": archive " + std::to_string(got) + " vs model " +
                          std::to_string(expect) + "; ";
        }
    };
    check("d_model", cfg_.d_model);
    check("text_dim", cfg_.text_dim);
    check("lora_rank", cfg_.lora_rank);
    check("layers", ToyDenoiser::kNumLayers);
    core::require(report.empty(), "adapters: incompatible archive dims: " + report);

    for (std::size_t k = 0; k < ToyDenoiser::kNumLayers; ++k) {
        std::string store_prefix = "denoiser/attn" + std::to_string(k) + "/";
        std::string key_prefix = "layer" + std::to_string(k) + "/";
        for (auto slot : attn::ParallelCrossAttentionLayer::adapted_slots()) {
            auto it = ar.entries.find(key_prefix + attn::to_string(slot));
            core::require(it != ar.entries.end(),
                          "adapters: archive missing " + key_prefix + attn::to_string(slot));
            const core::ArchiveEntry& e = it->second;
            Tensor& a = store_.value(store_prefix + attn::to_string(slot) + ".lora_A");
            Tensor& b = store_.value(store_prefix + attn::to_string(slot) + ".lora_B");
            core::require(e.a.same_shape(a) && e.b.same_shape(b),
                          "adapters: shape mismatch at " + key_prefix + attn::to_string(slot) +
                              " (archive A " + std::to_string(e.a.rows()) + "x" +
                              std::to_string(e.a.cols()) + ", model A " + std::to_string(a.rows()) +
                              "x" + std::to_string(a.cols()) + ")");
            a = e.a;
            b = e.b;
        }
    }
    for (const auto& name : id_extractor_.gate_param_names()) {
        auto it = ar.entries.find(name);
        if (it != ar.entries.end()) store_.value(name) = it->second.a;
    }
}

core::WeightArchive Model::export_local_encoder() const {
    core::WeightArchive ar;
    ar.meta_json = cfg_.meta_json();
    for (const auto& name : local_encoder_.param_names()) {
        core::ArchiveEntry e;
        e.rank = 0;
        e.scale = 1.0;
        e.a = store_.value(name);
        ar.entries.emplace(name, std::move(e));
    }
    return ar;
}

void Model::import_local_encoder(const core::WeightArchive& ar) {
    for (const auto& [key, e] : ar.entries) {
        if (key.rfind("local_encoder/", 0) != 0) continue;
        core::require(store_.has(key), "local encoder: unknown parameter " + key);
        Tensor& v = store_.value(key);
        core::require(e.a.same_shape(v), "local encoder: shape mismatch at " + key);
        v = e.a;
    }
}

}  // namespace relgen::train
