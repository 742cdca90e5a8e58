// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/backend.hpp"
#include "core/image.hpp"
#include "core/params.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace relgen::localenc {

using core::EmbeddingBackend;
using core::Image;
using core::ParamStore;
using core::Rng;
using core::Tensor;
namespace ad = core::ad;

// Spatial feature map recovered from the modified last attention layer: the
// class position is discarded and the remaining h*w positions are reshaped.
struct DenseFeatureMap {
    Tensor grid;  // {h, w, dim}
    std::size_t source_resolution = 0;

    std::size_t height() const { return grid.shape().at(0); }
    std::size_t width() const { return grid.shape().at(1); }
    std::size_t dim() const { return grid.shape().at(2); }

    Tensor position_major() const;  // [h*w, dim]
};

// Image-level tokens plus pooled local tokens for one image prompt.
struct TokenBundle {
    Tensor tok_i;          // [n_image_tokens, dim]
    Tensor tok_l;          // [g*g, dim]
    std::size_t grid = 4;  // partition size g
};

enum class NormKind { layer_norm, identity };

// Parameters of the modified last layer: value projection, output projection,
// feed-forward, and the pre-value norm.
struct LastLayerParams {
    NormKind norm = NormKind::layer_norm;
    Tensor ln_gain, ln_bias;          // [dim]
    Tensor w_v, b_v;                  // [dim, dim], [dim]
    Tensor w_out, b_out;              // [dim, dim], [dim]
    Tensor ffn_w1, ffn_b1;            // [hidden, dim], [hidden]
    Tensor ffn_w2, ffn_b2;            // [dim, hidden], [dim]
};

// Value-projection-only replacement for the final attention layer:
//   tmp = Proj_v(norm(h')); tmp = h' + Proj_out(tmp); tmp = tmp + FFN(tmp)
// then drop position 0 and reshape to (h, w). The token count past the class
// position must be a perfect square.
DenseFeatureMap dense_features(const Tensor& penultimate_tokens, const LastLayerParams& params,
                               std::size_t source_resolution = 0);

// Average-pools the map into g x g equal cells, row-major.
Tensor partition_pool(const DenseFeatureMap& map, std::size_t g);

// Mean over token pairs of (1 - cosine similarity); range [0, 2].
double distill_loss(const Tensor& student_local, const Tensor& teacher_crop);
ad::Var distill_loss_var(const ad::Var& student_local, const ad::Var& teacher_crop);

// Crops the image into g x g tiles and embeds each with the frozen teacher.
Tensor teacher_crop_tokens(const Image& image, std::size_t g, const EmbeddingBackend& teacher);

struct LocalEncoderConfig {
    std::size_t dim = 16;
    std::size_t patch = 8;
    std::size_t heads = 2;
    std::size_t ffn_hidden = 32;
    std::size_t image_size = 64;

    std::size_t tokens_per_side() const { return image_size / patch; }
};

// Two-layer vision transformer over pixel patches; the desk-scale student.
// Layer 1 doubles as the "last layer" whose parameters feed the modified
// dense-feature path.
class LocalEncoder {
public:
    static LocalEncoder create(ParamStore& store, std::string prefix,
                               const LocalEncoderConfig& cfg, Rng& rng);
    static LocalEncoder bind_existing(ParamStore& store, std::string prefix,
                                      const LocalEncoderConfig& cfg);

    const LocalEncoderConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }
    ParamStore& store() const { return *store_; }

    // Hidden states after layer 0 (the second-to-last layer): [1 + n, dim].
    ad::Var penultimate(const Image& img) const;
    // Modified-path dense map, position-major [n, dim].
    ad::Var dense_map_var(const Image& img) const;
    DenseFeatureMap dense_map(const Image& img) const;
    // Full standard forward; row 0 is the class token. [1 + n, dim]
    ad::Var full_forward(const Image& img) const;

    // tok_i = class token + 2x2 pooled dense map; tok_l = g x g pooled.
    TokenBundle token_bundle(const Image& img, std::size_t g) const;

    // Extracts the modified-last-layer parameters as plain tensors.
    LastLayerParams last_layer_params() const;

    std::vector<std::string> param_names() const;
    void set_trainable(bool trainable) const;

    LocalEncoder() = default;

private:

    ad::Var encoder_layer(const ad::Var& x, std::size_t layer) const;
    Tensor patchify(const Image& img) const;

    ParamStore* store_ = nullptr;
    std::string prefix_;
    LocalEncoderConfig cfg_;
};

struct DistillResult {
    std::vector<double> loss_log;  // per step
    double final_loss = 0.0;
};

struct DistillConfig {
    std::size_t steps = 500;
    double lr = 5e-3;
    std::size_t batch_size = 8;
    std::uint64_t seed = 17;
    std::size_t grid = 4;
};

// Single-writer distillation of the student against frozen teacher crop
// tokens. Trains every local-encoder parameter.
DistillResult distill(LocalEncoder& student, const std::vector<Image>& images,
                      const EmbeddingBackend& teacher, const DistillConfig& cfg);

}  // namespace relgen::localenc
