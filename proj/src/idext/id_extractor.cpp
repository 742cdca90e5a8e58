// SPDX-License-Identifier: Apache-2.0
#include "idext/id_extractor.hpp"

#include <cmath>

namespace relgen::idext {

void Box::validate() const {
    core::require(x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 && y1 <= 1.0,
                  "box: coordinates must lie in [0, 1]");
    core::require(x0 < x1 && y0 < y1, "box: degenerate (zero-area) box");
}

InjectionMethod injection_from_string(const std::string& s) {
    if (s == "concatenate") return InjectionMethod::concatenate;
    if (s == "add") return InjectionMethod::add;
    if (s == "linear_projection") return InjectionMethod::linear_projection;
    core::fail_invalid("id extractor: unknown injection method " + s);
}

const char* to_string(InjectionMethod m) {
    switch (m) {
        case InjectionMethod::concatenate: return "concatenate";
        case InjectionMethod::add: return "add";
        case InjectionMethod::linear_projection: return "linear_projection";
    }
    return "?";
}

std::vector<double> fourier_box_encoding(const Box& box, std::size_t freqs) {
    std::array<double, 4> coords = {box.x0, box.y0, box.x1, box.y1};
    std::vector<double> out;
    out.reserve(coords.size() * freqs * 2);
    for (double c : coords)
        for (std::size_t f = 0; f < freqs; ++f) {
            double w = std::pow(2.0, static_cast<double>(f)) * 3.14159265358979323846;
            out.push_back(std::sin(w * c));
            out.push_back(std::cos(w * c));
        }
    return out;
}

IdExtractor IdExtractor::create(ParamStore& store, std::string prefix,
                                const IdExtractorConfig& cfg, Rng& rng, bool trainable_gates) {
    IdExtractor ext;
    ext.store_ = &store;
    ext.prefix_ = std::move(prefix);
    ext.cfg_ = cfg;

    std::size_t qin = cfg.class_embed_dim + cfg.fourier_freqs * 8;
    store.create(ext.prefix_ + "/query_proj",
                 core::randn({cfg.dim, qin}, rng, 1.0 / std::sqrt(static_cast<double>(qin))),
                 false);
    store.create(ext.prefix_ + "/query_pos",
                 core::randn({cfg.num_queries, cfg.dim}, rng, 0.5), false);
    store.create(ext.prefix_ + "/local_proj",
                 core::randn({cfg.dim, cfg.dim}, rng, 1.0 / std::sqrt(static_cast<double>(cfg.dim))),
                 false);
    for (std::size_t k = 0; k < cfg.depth; ++k)
        ext.blocks_.push_back(attn::GatedSelfAttentionBlock::create(
            store, ext.prefix_ + "/block" + std::to_string(k), cfg.dim, rng, trainable_gates));
    return ext;
}

IdExtractor IdExtractor::bind_existing(ParamStore& store, std::string prefix,
                                       const IdExtractorConfig& cfg) {
    IdExtractor ext;
    ext.store_ = &store;
    ext.prefix_ = std::move(prefix);
    ext.cfg_ = cfg;
    for (std::size_t k = 0; k < cfg.depth; ++k)
        ext.blocks_.push_back(attn::GatedSelfAttentionBlock::bind_existing(
            store, ext.prefix_ + "/block" + std::to_string(k), cfg.dim));
    return ext;
}

std::vector<std::string> IdExtractor::gate_param_names() const {
    std::vector<std::string> names;
    for (const auto& blk : blocks_) names.push_back(blk.gate_param_name());
    return names;
}

GroundedQuery IdExtractor::build_query(const std::vector<double>& class_embedding,
                                       const Box& box) const {
    box.validate();
    core::require(class_embedding.size() == cfg_.class_embed_dim,
                  "id extractor: class embedding dim mismatch");
    auto enc = fourier_box_encoding(box, cfg_.fourier_freqs);
    std::vector<double> cat;
    cat.reserve(enc.size() + class_embedding.size());
    cat.insert(cat.end(), enc.begin(), enc.end());
    cat.insert(cat.end(), class_embedding.begin(), class_embedding.end());

    const Tensor& proj = store_->value(prefix_ + "/query_proj");
    core::require(proj.cols() == cat.size(), "id extractor: query projection dim mismatch");
    std::vector<double> base(cfg_.dim, 0.0);
    for (std::size_t i = 0; i < cfg_.dim; ++i)
        for (std::size_t j = 0; j < cat.size(); ++j) base[i] += proj.at(i, j) * cat[j];

    const Tensor& pos = store_->value(prefix_ + "/query_pos");
    GroundedQuery q;
    q.class_embedding = class_embedding;
    q.box = box;
    q.q = Tensor({cfg_.num_queries, cfg_.dim});
    for (std::size_t r = 0; r < cfg_.num_queries; ++r)
        for (std::size_t c = 0; c < cfg_.dim; ++c) q.q.at(r, c) = base[c] + pos.at(r, c);
    return q;
}

ad::Var IdExtractor::extract_identity_var(const TokenBundle& bundle,
                                          const GroundedQuery& query) const {
    core::require(bundle.tok_i.size() > 0 || bundle.tok_l.size() > 0,
                  "id extractor: empty token bundle");
    if (bundle.tok_i.size() > 0)
        core::require(bundle.tok_i.cols() == cfg_.dim, "id extractor: tok_i dim mismatch");
    if (bundle.tok_l.size() > 0)
        core::require(bundle.tok_l.cols() == cfg_.dim, "id extractor: tok_l dim mismatch");

    ad::Var tok_i = ad::constant(bundle.tok_i);
    ad::Var tok_l = ad::constant(bundle.tok_l);
    ad::Var empty = ad::constant(Tensor({0, cfg_.dim}));

    // injection method decides how local tokens join the image-level tokens
    ad::Var keys_i = tok_i, keys_l = tok_l;
    switch (cfg_.injection) {
        case InjectionMethod::concatenate:
            break;
        case InjectionMethod::add: {
            // group-average local tokens down to the image token count, then
            // add them elementwise; no separate local sequence remains
            if (ad::val(tok_l).rows() > 0 && ad::val(tok_i).rows() > 0) {
                std::size_t ni = ad::val(tok_i).rows(), nl = ad::val(tok_l).rows();
                Tensor group({ni, nl});
                for (std::size_t r = 0; r < ni; ++r) {
                    std::size_t lo = r * nl / ni, hi = (r + 1) * nl / ni;
                    if (hi == lo) hi = lo + 1;
                    for (std::size_t c = lo; c < hi && c < nl; ++c)
                        group.at(r, c) = 1.0 / static_cast<double>(hi - lo);
                }
                keys_i = ad::add(tok_i, ad::matmul(ad::constant(group), tok_l));
            }
            keys_l = empty;
            break;
        }
        case InjectionMethod::linear_projection: {
            if (ad::val(tok_l).rows() > 0)
                keys_l = ad::matmul(tok_l, ad::transpose(store_->bind(prefix_ + "/local_proj")));
            break;
        }
    }

    ad::Var q = ad::constant(query.q);
    for (const auto& blk : blocks_) q = blk.forward(q, keys_i, keys_l);
    return q;
}

IdentityTokens IdExtractor::extract_identity(const TokenBundle& bundle, const GroundedQuery& query,
                                             std::size_t object_index) const {
    core::GradModeGuard no_grad(*store_, false);
    auto var = extract_identity_var(bundle, query);
    IdentityTokens out;
    out.tokens = ad::val(var);
    out.object_index = object_index;
    core::require(out.tokens.all_finite(), "id extractor: non-finite identity tokens");
    return out;
}

}  // namespace relgen::idext
