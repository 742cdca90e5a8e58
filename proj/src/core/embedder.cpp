// SPDX-License-Identifier: Apache-2.0
#include "core/embedder.hpp"

#include <cctype>
#include <cmath>

#include "core/rng.hpp"

namespace relgen::core {

std::vector<std::string> TextEmbedder::tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

std::vector<double> TextEmbedder::token_vector(const std::string& token) const {
    Rng rng(derive_seed(seed_, "tok/" + token));
    std::vector<double> v(dim_);
    rng.fill_normal(v);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

Tensor TextEmbedder::embed_tokens(const std::string& text) const {
    auto tokens = tokenize(text);
    require(!tokens.empty(), "embedder: empty text");
    Tensor out({tokens.size(), dim_});
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto v = token_vector(tokens[i]);
        for (std::size_t j = 0; j < dim_; ++j) out.at(i, j) = v[j];
    }
    return out;
}

std::vector<double> TextEmbedder::embed_pooled(const std::string& text) const {
    Tensor toks = embed_tokens(text);
    std::vector<double> v(dim_, 0.0);
    for (std::size_t i = 0; i < toks.rows(); ++i)
        for (std::size_t j = 0; j < dim_; ++j) v[j] += toks.at(i, j);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
    return v;
}

}  // namespace relgen::core
