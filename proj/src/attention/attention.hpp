// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/params.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace relgen::attn {

using core::ParamStore;
using core::Rng;
using core::Tensor;
namespace ad = core::ad;

// The six projection slots of a parallel cross-attention layer. Adapters may
// only attach to the text-branch slots and the output projection.
enum class SlotName { W_q, W_k_i, W_v_i, W_k_t, W_v_t, W_out };

const char* to_string(SlotName s);
bool slot_adaptable(SlotName s);

struct ProjectionSlot {
    SlotName name;
    Tensor base;  // [d_out, d_in], immutable during fine-tuning
};

// Low-rank update: effective weight = base + scale * B * A. B starts at zero
// so a fresh adapter leaves the forward pass bit-identical to the base.
struct LoRAAdapter {
    SlotName slot;
    Tensor a;  // [rank, d_in]
    Tensor b;  // [d_out, rank]
    unsigned rank = 4;
    double scale = 0.25;

    static LoRAAdapter fresh(SlotName slot, std::size_t d_out, std::size_t d_in, unsigned rank,
                             double scale, Rng& rng, double a_init_std = 0.0);
};

// y = (base + scale * B * A) x; without an adapter, y = base x.
std::vector<double> lora_forward(const std::vector<double>& x, const ProjectionSlot& slot,
                                 const LoRAAdapter* adapter = nullptr);

struct AttentionDims {
    std::size_t d_model = 16;
    std::size_t heads = 2;
    std::size_t text_dim = 16;
    std::size_t image_dim = 16;

    std::size_t head_dim() const { return d_model / heads; }
};

// Dual-branch cross-attention: the image branch is scaled by gamma and its
// key/value projections never carry adapters. Weights live in a ParamStore
// under `prefix`; base weights are frozen, adapter A/B pairs are trainable.
class ParallelCrossAttentionLayer {
public:
    static ParallelCrossAttentionLayer create(ParamStore& store, std::string prefix,
                                              const AttentionDims& dims, double gamma,
                                              unsigned lora_rank, double lora_scale, Rng& rng,
                                              bool attach_adapters = true,
                                              double lora_a_init = 0.0);
    // Bind to parameters that already exist in the store.
    static ParallelCrossAttentionLayer bind_existing(ParamStore& store, std::string prefix,
                                                     const AttentionDims& dims, double gamma,
                                                     unsigned lora_rank, double lora_scale,
                                                     bool has_adapters);

    // h: [n_query, d_model]; c_i: [n_image, image_dim]; c_t: [n_text, text_dim]
    ad::Var forward(const ad::Var& h, const ad::Var& c_i, const ad::Var& c_t,
                    std::optional<double> gamma_override = std::nullopt) const;
    Tensor forward_plain(const Tensor& h, const Tensor& c_i, const Tensor& c_t,
                         std::optional<double> gamma_override = std::nullopt) const;

    double gamma() const { return gamma_; }
    const AttentionDims& dims() const { return dims_; }
    const std::string& prefix() const { return prefix_; }
    bool has_adapters() const { return has_adapters_; }

    std::vector<std::string> adapter_param_names() const;
    static const std::vector<SlotName>& adapted_slots();

private:
    ParallelCrossAttentionLayer() = default;

    ad::Var project(const ad::Var& x, SlotName slot) const;

    ParamStore* store_ = nullptr;
    std::string prefix_;
    AttentionDims dims_;
    double gamma_ = 0.6;
    unsigned rank_ = 4;
    double lora_scale_ = 0.25;
    bool has_adapters_ = true;
};

// q = q + tanh(gate) * SelfAttn([q, tok_i, tok_l]) read out at the q rows.
// gate starts at zero, so a fresh block is the identity on q.
class GatedSelfAttentionBlock {
public:
    static GatedSelfAttentionBlock create(ParamStore& store, std::string prefix, std::size_t dim,
                                          Rng& rng, bool trainable_gate = false);
    static GatedSelfAttentionBlock bind_existing(ParamStore& store, std::string prefix,
                                                 std::size_t dim);

    // tok_i / tok_l may be empty ({0, dim}); q must be non-empty.
    ad::Var forward(const ad::Var& q, const ad::Var& tok_i, const ad::Var& tok_l) const;
    Tensor forward_plain(const Tensor& q, const Tensor& tok_i, const Tensor& tok_l) const;

    std::string gate_param_name() const { return prefix_ + "/gate"; }
    double gate_value() const;
    const std::string& prefix() const { return prefix_; }

private:
    GatedSelfAttentionBlock() = default;

    ParamStore* store_ = nullptr;
    std::string prefix_;
    std::size_t dim_ = 16;
};

// Spec-level convenience wrappers over the layer/block forwards.
Tensor parallel_cross_attention(const Tensor& h, const Tensor& c_i_tokens,
                                const Tensor& c_t_tokens,
                                const ParallelCrossAttentionLayer& layer,
                                std::optional<double> gamma_override = std::nullopt);
Tensor gated_self_attention(const Tensor& q, const Tensor& tok_i, const Tensor& tok_l,
                            const GatedSelfAttentionBlock& block);

}  // namespace relgen::attn
