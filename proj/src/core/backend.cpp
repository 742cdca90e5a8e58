// SPDX-License-Identifier: Apache-2.0
#include "core/backend.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace relgen::core {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "cosine: dim mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    require(na > 0.0 && nb > 0.0, "cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> image_signature(const Image& img) {
    require(img.width >= 4 && img.height >= 4, "backend: image too small for signature");
    std::vector<double> sig;
    sig.reserve(48);
    for (std::size_t gy = 0; gy < 4; ++gy)
        for (std::size_t gx = 0; gx < 4; ++gx) {
            std::size_t x0 = gx * img.width / 4, x1 = (gx + 1) * img.width / 4;
            std::size_t y0 = gy * img.height / 4, y1 = (gy + 1) * img.height / 4;
            Color m = region_mean(img, x0, y0, x1, y1);
            sig.insert(sig.end(), m.begin(), m.end());
        }
    return sig;
}

static std::vector<double> normalize_or_pad(std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) {
        v[0] = 1.0;  // degenerate inputs map to a fixed unit vector
        return v;
    }
    for (double& x : v) x /= n;
    return v;
}

namespace {

class ProjectedBackend : public EmbeddingBackend {
public:
    ProjectedBackend(std::string name, BackendKind kind, std::size_t dim, Tensor proj,
                     std::uint64_t text_seed)
        : name_(std::move(name)), kind_(kind), dim_(dim), proj_(std::move(proj)),
          embedder_(dim, text_seed) {}

    std::string name() const override { return name_; }
    BackendKind kind() const override { return kind_; }
    std::size_t dim() const override { return dim_; }

    std::vector<double> image_embed(const Image& img) const override {
        auto sig = image_signature(img);
        std::vector<double> out(dim_, 0.0);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < sig.size(); ++j) out[i] += proj_.at(i, j) * sig[j];
        // constant channel keeps uniform images away from the zero vector
        for (std::size_t i = 0; i < dim_; ++i) out[i] += proj_.at(i, 48 % proj_.cols()) * 0.25;
        return normalize_or_pad(std::move(out));
    }

    std::vector<double> text_embed(const std::string& text) const override {
        require(kind_ == BackendKind::joint_image_text,
                "backend: text_embed on a vision-only backend");
        return embedder_.embed_pooled(text);
    }

private:
    std::string name_;
    BackendKind kind_;
    std::size_t dim_;
    Tensor proj_;  // [dim, 48]
    TextEmbedder embedder_;
};

class MeanColorBackend : public EmbeddingBackend {
public:
    explicit MeanColorBackend(std::size_t dim) : dim_(dim) {
        require(dim_ >= 4, "backend: mean-color backend needs dim >= 4");
    }

    std::string name() const override { return "stub-mean-color"; }
    BackendKind kind() const override { return BackendKind::vision_only; }
    std::size_t dim() const override { return dim_; }

    std::vector<double> image_embed(const Image& img) const override {
        Color m = region_mean(img, 0, 0, img.width, img.height);
        std::vector<double> v(dim_, 0.0);
        v[0] = m[0];
        v[1] = m[1];
        v[2] = m[2];
        v[3] = 1.0;
        return normalize_or_pad(std::move(v));
    }

    std::vector<double> text_embed(const std::string&) const override {
        fail_invalid("backend: text_embed on a vision-only backend");
    }

private:
    std::size_t dim_;
};

Tensor seeded_projection(std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    Tensor proj({dim, 48});
    rng.fill_normal(proj.vec(), 1.0 / std::sqrt(48.0));
    return proj;
}

}  // namespace

std::shared_ptr<EmbeddingBackend> make_stub_joint_backend(std::size_t dim, std::uint64_t seed) {
    return std::make_shared<ProjectedBackend>("stub-joint", BackendKind::joint_image_text, dim,
                                              seeded_projection(dim, seed), seed ^ 0x5bd1);
}

std::shared_ptr<EmbeddingBackend> make_stub_vision_backend(std::size_t dim, std::uint64_t seed) {
    return std::make_shared<ProjectedBackend>("stub-vision", BackendKind::vision_only, dim,
                                              seeded_projection(dim, seed), seed ^ 0x5bd1);
}

std::shared_ptr<EmbeddingBackend> make_mean_color_backend(std::size_t dim) {
    return std::make_shared<MeanColorBackend>(dim);
}

std::shared_ptr<EmbeddingBackend> load_file_backend(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "backend: cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail_invalid("backend: bad model file " + path + ": " + e.what());
    }
    require(j.contains("dim") && j.contains("projection"), "backend: model file missing fields");
    std::size_t dim = j.at("dim").get<std::size_t>();
    auto rows = j.at("projection").get<std::vector<std::vector<double>>>();
    require(rows.size() == dim, "backend: projection row count != dim");
    Tensor proj({dim, 48});
    for (std::size_t i = 0; i < dim; ++i) {
        require(rows[i].size() == 48, "backend: projection must have 48 columns");
        for (std::size_t k = 0; k < 48; ++k) proj.at(i, k) = rows[i][k];
    }
    std::uint64_t text_seed = j.value("text_seed", 424242ull);
    std::string name = j.value("name", std::string("external"));
    return std::make_shared<ProjectedBackend>(name, BackendKind::joint_image_text, dim,
                                              std::move(proj), text_seed);
}

}  // namespace relgen::core
