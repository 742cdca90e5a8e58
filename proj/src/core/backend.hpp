// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/embedder.hpp"
#include "core/image.hpp"

namespace relgen::core {

enum class BackendKind { joint_image_text, vision_only };

// Embedding backend contract shared by the metric harness and the frozen
// distillation teacher. Embeddings are unit-norm and deterministic per input.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;

    virtual std::string name() const = 0;
    virtual BackendKind kind() const = 0;
    virtual std::size_t dim() const = 0;

    virtual std::vector<double> image_embed(const Image& img) const = 0;
    // Only meaningful for joint backends; vision-only backends reject.
    virtual std::vector<double> text_embed(const std::string& text) const = 0;
};

// Deterministic stub: images embed through an 4x4 color-grid signature pushed
// through a fixed seeded projection; text through hashed token embeddings.
// Joint alignment between the modalities is not meaningful (and none of the
// desk-scale checks rely on it), but identical inputs always embed
// identically, which is what the acceptance checks exercise.
std::shared_ptr<EmbeddingBackend> make_stub_joint_backend(std::size_t dim = 32,
                                                          std::uint64_t seed = 2024);
std::shared_ptr<EmbeddingBackend> make_stub_vision_backend(std::size_t dim = 32,
                                                           std::uint64_t seed = 7717);

// Distillation teacher stub: embed(image) = unit-normalised [mean_r, mean_g,
// mean_b, 1, 0, ...]. The trailing 1 keeps black images well-defined.
std::shared_ptr<EmbeddingBackend> make_mean_color_backend(std::size_t dim = 16);

// "External" backend loaded from a model file: a JSON document carrying the
// image projection matrix (over the same 4x4 grid signature) and an embedding
// seed for text. Stands in for externally supplied weights.
std::shared_ptr<EmbeddingBackend> load_file_backend(const std::string& path);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Shared image signature: 4x4 grid of per-cell RGB means (48 values).
std::vector<double> image_signature(const Image& img);

}  // namespace relgen::core
