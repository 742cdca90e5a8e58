// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "attention/attention.hpp"
#include "localenc/local_encoder.hpp"

namespace relgen::idext {

using core::ParamStore;
using core::Rng;
using core::Tensor;
using localenc::TokenBundle;
namespace ad = core::ad;

// Normalized box, corners in [0,1], x0 < x1 and y0 < y1.
struct Box {
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;

    void validate() const;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

// Query built from the class text embedding plus the Fourier-encoded box.
struct GroundedQuery {
    std::vector<double> class_embedding;
    Box box;
    Tensor q;  // [num_queries, dim]
};

// Identity tokens for one image prompt, consumed by the image branch of the
// parallel cross-attention.
struct IdentityTokens {
    Tensor tokens;  // [num_queries, dim]
    std::size_t object_index = 0;
};

enum class InjectionMethod { concatenate, add, linear_projection };

InjectionMethod injection_from_string(const std::string& s);
const char* to_string(InjectionMethod m);

struct IdExtractorConfig {
    std::size_t dim = 16;
    std::size_t num_queries = 4;
    std::size_t depth = 2;
    std::size_t class_embed_dim = 16;
    std::size_t fourier_freqs = 4;
    InjectionMethod injection = InjectionMethod::concatenate;
};

// sin/cos features of the four box coordinates at `freqs` octaves.
std::vector<double> fourier_box_encoding(const Box& box, std::size_t freqs);

// Transformer resampler: grounded queries attend over image-level and local
// tokens through a stack of gated self-attention blocks; the query positions
// are read out as identity tokens.
class IdExtractor {
public:
    static IdExtractor create(ParamStore& store, std::string prefix,
                              const IdExtractorConfig& cfg, Rng& rng,
                              bool trainable_gates = false);
    static IdExtractor bind_existing(ParamStore& store, std::string prefix,
                                     const IdExtractorConfig& cfg);

    const IdExtractorConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }

    GroundedQuery build_query(const std::vector<double>& class_embedding, const Box& box) const;

    ad::Var extract_identity_var(const TokenBundle& bundle, const GroundedQuery& query) const;
    IdentityTokens extract_identity(const TokenBundle& bundle, const GroundedQuery& query,
                                    std::size_t object_index = 0) const;

    std::vector<std::string> gate_param_names() const;

    IdExtractor() = default;

private:

    ParamStore* store_ = nullptr;
    std::string prefix_;
    IdExtractorConfig cfg_;
    std::vector<attn::GatedSelfAttentionBlock> blocks_;
};

}  // namespace relgen::idext
