// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace relgen::core {

// Deterministic hashed token embeddings, the desk-scale stand-in for a text
// encoder. Each token maps to a fixed unit-norm Gaussian vector seeded from
// its hash, so identical strings always embed identically.
class TextEmbedder {
public:
    explicit TextEmbedder(std::size_t dim = 16, std::uint64_t seed = 101)
        : dim_(dim), seed_(seed) {}

    std::size_t dim() const { return dim_; }

    static std::vector<std::string> tokenize(const std::string& text);

    // One unit-norm vector per token; [n_tokens, dim]. Empty text is rejected.
    Tensor embed_tokens(const std::string& text) const;

    // Mean of token embeddings, re-normalised. Used for class embeddings and
    // the stub text backends.
    std::vector<double> embed_pooled(const std::string& text) const;

    std::vector<double> token_vector(const std::string& token) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

}  // namespace relgen::core
