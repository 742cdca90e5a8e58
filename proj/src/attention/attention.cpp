// SPDX-License-Identifier: Apache-2.0
#include "attention/attention.hpp"

#include <cmath>

namespace relgen::attn {

const char* to_string(SlotName s) {
    switch (s) {
        case SlotName::W_q: return "W_q";
        case SlotName::W_k_i: return "W_k_i";
        case SlotName::W_v_i: return "W_v_i";
        case SlotName::W_k_t: return "W_k_t";
        case SlotName::W_v_t: return "W_v_t";
        case SlotName::W_out: return "W_out";
    }
    return "?";
}

bool slot_adaptable(SlotName s) {
    return s == SlotName::W_q || s == SlotName::W_k_t || s == SlotName::W_v_t ||
           s == SlotName::W_out;
}

const std::vector<SlotName>& ParallelCrossAttentionLayer::adapted_slots() {
    static const std::vector<SlotName> slots = {SlotName::W_q, SlotName::W_k_t, SlotName::W_v_t,
                                                SlotName::W_out};
    return slots;
}

LoRAAdapter LoRAAdapter::fresh(SlotName slot, std::size_t d_out, std::size_t d_in, unsigned rank,
                               double scale, Rng& rng, double a_init_std) {
    core::require(slot_adaptable(slot),
                  std::string("lora: adapters cannot attach to ") + to_string(slot));
    core::require(rank > 0 && rank < std::min(d_in, d_out), "lora: rank must be in (0, min dims)");
    LoRAAdapter ad;
    ad.slot = slot;
    ad.rank = rank;
    ad.scale = scale;
    double std_a = a_init_std > 0.0 ? a_init_std : 1.0 / std::sqrt(static_cast<double>(d_in));
    ad.a = core::randn({rank, d_in}, rng, std_a);
    ad.b = Tensor({d_out, rank});  // zero: fresh adapters are inert
    return ad;
}

std::vector<double> lora_forward(const std::vector<double>& x, const ProjectionSlot& slot,
                                 const LoRAAdapter* adapter) {
    std::size_t d_out = slot.base.rows(), d_in = slot.base.cols();
    core::require(x.size() == d_in, "lora_forward: input dim mismatch");
    std::vector<double> y(d_out, 0.0);
    for (std::size_t i = 0; i < d_out; ++i)
        for (std::size_t j = 0; j < d_in; ++j) y[i] += slot.base.at(i, j) * x[j];
    if (adapter) {
        core::require(adapter->slot == slot.name, "lora_forward: adapter bound to another slot");
        core::require(adapter->a.rows() == adapter->rank && adapter->b.cols() == adapter->rank &&
                          adapter->a.cols() == d_in && adapter->b.rows() == d_out,
                      "lora_forward: adapter rank/shape mismatch");
        std::vector<double> ax(adapter->rank, 0.0);
        for (std::size_t r = 0; r < adapter->rank; ++r)
            for (std::size_t j = 0; j < d_in; ++j) ax[r] += adapter->a.at(r, j) * x[j];
        for (std::size_t i = 0; i < d_out; ++i) {
            double acc = 0.0;
            for (std::size_t r = 0; r < adapter->rank; ++r) acc += adapter->b.at(i, r) * ax[r];
            y[i] += adapter->scale * acc;
        }
    }
    return y;
}

// ---------------------------------------------------------------------------

static std::string slot_key(const std::string& prefix, SlotName s) {
    return prefix + "/" + to_string(s);
}

ParallelCrossAttentionLayer ParallelCrossAttentionLayer::create(
    ParamStore& store, std::string prefix, const AttentionDims& dims, double gamma,
    unsigned lora_rank, double lora_scale, Rng& rng, bool attach_adapters, double lora_a_init) {
    core::require(dims.d_model % dims.heads == 0, "attention: heads must divide d_model");
    core::require(gamma >= 0.0 && gamma <= 1.0, "attention: gamma must lie in [0, 1]");
    ParallelCrossAttentionLayer layer;
    layer.store_ = &store;
    layer.prefix_ = std::move(prefix);
    layer.dims_ = dims;
    layer.gamma_ = gamma;
    layer.rank_ = lora_rank;
    layer.lora_scale_ = lora_scale;
    layer.has_adapters_ = attach_adapters;

    auto init = [&](SlotName s, std::size_t d_out, std::size_t d_in) {
        store.create(slot_key(layer.prefix_, s),
                     core::randn({d_out, d_in}, rng, 1.0 / std::sqrt(static_cast<double>(d_in))),
                     false);
    };
    init(SlotName::W_q, dims.d_model, dims.d_model);
    init(SlotName::W_k_i, dims.d_model, dims.image_dim);
    init(SlotName::W_v_i, dims.d_model, dims.image_dim);
    init(SlotName::W_k_t, dims.d_model, dims.text_dim);
    init(SlotName::W_v_t, dims.d_model, dims.text_dim);
    init(SlotName::W_out, dims.d_model, dims.d_model);

    if (attach_adapters) {
        for (SlotName s : adapted_slots()) {
            std::size_t d_in = (s == SlotName::W_k_t || s == SlotName::W_v_t) ? dims.text_dim
                                                                              : dims.d_model;
            LoRAAdapter ad =
                LoRAAdapter::fresh(s, dims.d_model, d_in, lora_rank, lora_scale, rng, lora_a_init);
            store.create(slot_key(layer.prefix_, s) + ".lora_A", std::move(ad.a), true);
            store.create(slot_key(layer.prefix_, s) + ".lora_B", std::move(ad.b), true);
        }
    }
    return layer;
}

ParallelCrossAttentionLayer ParallelCrossAttentionLayer::bind_existing(
    ParamStore& store, std::string prefix, const AttentionDims& dims, double gamma,
    unsigned lora_rank, double lora_scale, bool has_adapters) {
    ParallelCrossAttentionLayer layer;
    layer.store_ = &store;
    layer.prefix_ = std::move(prefix);
    layer.dims_ = dims;
    layer.gamma_ = gamma;
    layer.rank_ = lora_rank;
    layer.lora_scale_ = lora_scale;
    layer.has_adapters_ = has_adapters;
    return layer;
}

std::vector<std::string> ParallelCrossAttentionLayer::adapter_param_names() const {
    std::vector<std::string> names;
    if (!has_adapters_) return names;
    for (SlotName s : adapted_slots()) {
        names.push_back(slot_key(prefix_, s) + ".lora_A");
        names.push_back(slot_key(prefix_, s) + ".lora_B");
    }
    return names;
}

ad::Var ParallelCrossAttentionLayer::project(const ad::Var& x, SlotName slot) const {
    auto w = store_->bind(slot_key(prefix_, slot));
    ad::Var y = ad::matmul(x, ad::transpose(w));
    if (has_adapters_ && slot_adaptable(slot)) {
        auto a = store_->bind(slot_key(prefix_, slot) + ".lora_A");
        auto b = store_->bind(slot_key(prefix_, slot) + ".lora_B");
        // x (base + s B A)^T = x base^T + s (x A^T) B^T
        auto low = ad::matmul(ad::matmul(x, ad::transpose(a)), ad::transpose(b));
        y = ad::add(y, ad::scale(low, lora_scale_));
    }
    return y;
}

ad::Var ParallelCrossAttentionLayer::forward(const ad::Var& h, const ad::Var& c_i,
                                             const ad::Var& c_t,
                                             std::optional<double> gamma_override) const {
    const Tensor& hv = ad::val(h);
    core::require(hv.rank() == 2 && hv.cols() == dims_.d_model,
                  "attention: query token dim mismatch");
    core::require(ad::val(c_i).rank() == 2 && ad::val(c_i).cols() == dims_.image_dim &&
                      ad::val(c_i).rows() > 0,
                  "attention: image condition tokens empty or wrong dim");
    core::require(ad::val(c_t).rank() == 2 && ad::val(c_t).cols() == dims_.text_dim &&
                      ad::val(c_t).rows() > 0,
                  "attention: text condition tokens empty or wrong dim");

    double gamma = gamma_override.value_or(gamma_);
    std::size_t dh = dims_.head_dim();
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));

    auto q = project(h, SlotName::W_q);
    auto k_i = project(c_i, SlotName::W_k_i);
    auto v_i = project(c_i, SlotName::W_v_i);
    auto k_t = project(c_t, SlotName::W_k_t);
    auto v_t = project(c_t, SlotName::W_v_t);

    std::vector<ad::Var> head_outs;
    head_outs.reserve(dims_.heads);
    for (std::size_t hd = 0; hd < dims_.heads; ++hd) {
        std::size_t lo = hd * dh, hi = lo + dh;
        auto qh = ad::slice_cols(q, lo, hi);
        auto att_i = ad::matmul(
            ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(ad::slice_cols(k_i, lo, hi))),
                                       inv_sqrt_d)),
            ad::slice_cols(v_i, lo, hi));
        auto att_t = ad::matmul(
            ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(ad::slice_cols(k_t, lo, hi))),
                                       inv_sqrt_d)),
            ad::slice_cols(v_t, lo, hi));
        head_outs.push_back(ad::add(ad::scale(att_i, gamma), att_t));
    }
    auto merged = dims_.heads == 1 ? head_outs[0] : ad::concat_cols(head_outs);
    return project(merged, SlotName::W_out);
}

Tensor ParallelCrossAttentionLayer::forward_plain(const Tensor& h, const Tensor& c_i,
                                                  const Tensor& c_t,
                                                  std::optional<double> gamma_override) const {
    core::GradModeGuard no_grad(*store_, false);
    auto out = forward(ad::constant(h), ad::constant(c_i), ad::constant(c_t), gamma_override);
    return ad::val(out);
}

// ---------------------------------------------------------------------------

GatedSelfAttentionBlock GatedSelfAttentionBlock::create(ParamStore& store, std::string prefix,
                                                        std::size_t dim, Rng& rng,
                                                        bool trainable_gate) {
    GatedSelfAttentionBlock blk;
    blk.store_ = &store;
    blk.prefix_ = std::move(prefix);
    blk.dim_ = dim;
    double s = 1.0 / std::sqrt(static_cast<double>(dim));
    store.create(blk.prefix_ + "/W_q", core::randn({dim, dim}, rng, s), false);
    store.create(blk.prefix_ + "/W_k", core::randn({dim, dim}, rng, s), false);
    store.create(blk.prefix_ + "/W_v", core::randn({dim, dim}, rng, s), false);
    store.create(blk.prefix_ + "/W_out", core::randn({dim, dim}, rng, s), false);
    store.create(blk.prefix_ + "/gate", Tensor({1}), trainable_gate);  // tanh(0) = 0
    return blk;
}

GatedSelfAttentionBlock GatedSelfAttentionBlock::bind_existing(ParamStore& store,
                                                               std::string prefix,
                                                               std::size_t dim) {
    GatedSelfAttentionBlock blk;
    blk.store_ = &store;
    blk.prefix_ = std::move(prefix);
    blk.dim_ = dim;
    return blk;
}

double GatedSelfAttentionBlock::gate_value() const {
    return store_->value(prefix_ + "/gate")[0];
}

ad::Var GatedSelfAttentionBlock::forward(const ad::Var& q, const ad::Var& tok_i,
                                         const ad::Var& tok_l) const {
    std::size_t nq = ad::val(q).rows();
    core::require(nq > 0, "gated attention: empty query sequence");
    core::require(ad::val(q).cols() == dim_, "gated attention: query dim mismatch");

    std::vector<ad::Var> parts = {q};
    for (const auto& t : {tok_i, tok_l}) {
        if (ad::val(t).size() == 0) continue;
        core::require(ad::val(t).cols() == dim_, "gated attention: token dim mismatch");
        parts.push_back(t);
    }
    auto x = parts.size() == 1 ? parts[0] : ad::concat_rows(parts);

    auto wq = store_->bind(prefix_ + "/W_q");
    auto wk = store_->bind(prefix_ + "/W_k");
    auto wv = store_->bind(prefix_ + "/W_v");
    auto wo = store_->bind(prefix_ + "/W_out");
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim_));

    auto att = ad::matmul(
        ad::softmax_rows(ad::scale(
            ad::matmul(ad::matmul(x, ad::transpose(wq)),
                       ad::transpose(ad::matmul(x, ad::transpose(wk)))),
            inv_sqrt_d)),
        ad::matmul(x, ad::transpose(wv)));
    auto out = ad::matmul(att, ad::transpose(wo));

    auto gate = ad::tanh_v(store_->bind(prefix_ + "/gate"));
    return ad::add(q, ad::mul_scalar_var(ad::slice_rows(out, 0, nq), gate));
}

Tensor GatedSelfAttentionBlock::forward_plain(const Tensor& q, const Tensor& tok_i,
                                              const Tensor& tok_l) const {
    core::GradModeGuard no_grad(*store_, false);
    auto out = forward(ad::constant(q), ad::constant(tok_i), ad::constant(tok_l));
    return ad::val(out);
}

Tensor parallel_cross_attention(const Tensor& h, const Tensor& c_i_tokens,
                                const Tensor& c_t_tokens,
                                const ParallelCrossAttentionLayer& layer,
                                std::optional<double> gamma_override) {
    return layer.forward_plain(h, c_i_tokens, c_t_tokens, gamma_override);
}

Tensor gated_self_attention(const Tensor& q, const Tensor& tok_i, const Tensor& tok_l,
                            const GatedSelfAttentionBlock& block) {
    return block.forward_plain(q, tok_i, tok_l);
}

}  // namespace relgen::attn
