// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "core/backend.hpp"
#include "data/synthetic.hpp"
#include "localenc/local_encoder.hpp"

using namespace relgen;
using namespace relgen::localenc;
using core::Rng;
using core::Tensor;

namespace {

LastLayerParams identity_params(std::size_t dim, std::size_t hidden) {
    LastLayerParams p;
    p.norm = NormKind::identity;
    p.ln_gain = Tensor::full({dim}, 1.0);
    p.ln_bias = Tensor({dim});
    p.w_v = Tensor::identity(dim);
    p.b_v = Tensor({dim});
    p.w_out = Tensor::identity(dim);
    p.b_out = Tensor({dim});
    p.ffn_w1 = Tensor({hidden, dim});
    p.ffn_b1 = Tensor({hidden});
    p.ffn_w2 = Tensor({dim, hidden});
    p.ffn_b2 = Tensor({dim});
    return p;
}

LastLayerParams random_params(std::size_t dim, std::size_t hidden, Rng& rng) {
    LastLayerParams p;
    p.norm = NormKind::layer_norm;
    p.ln_gain = core::randn({dim}, rng, 0.3);
    for (auto& v : p.ln_gain.vec()) v += 1.0;
    p.ln_bias = core::randn({dim}, rng, 0.1);
    p.w_v = core::randn({dim, dim}, rng, 0.3);
    p.b_v = core::randn({dim}, rng, 0.1);
    p.w_out = core::randn({dim, dim}, rng, 0.3);
    p.b_out = core::randn({dim}, rng, 0.1);
    p.ffn_w1 = core::randn({hidden, dim}, rng, 0.3);
    p.ffn_b1 = core::randn({hidden}, rng, 0.1);
    p.ffn_w2 = core::randn({dim, hidden}, rng, 0.3);
    p.ffn_b2 = core::randn({dim}, rng, 0.1);
    return p;
}

// straight-line oracle for the three modified-layer assignments
Tensor dense_oracle(const Tensor& tokens, const LastLayerParams& p) {
    std::size_t n = tokens.rows(), d = tokens.cols(), hdim = p.ffn_w1.rows();
    Tensor normed = tokens;
    if (p.norm == NormKind::layer_norm) {
        for (std::size_t i = 0; i < n; ++i) {
            double mu = 0.0, var = 0.0;
            for (std::size_t j = 0; j < d; ++j) mu += tokens.at(i, j);
            mu /= d;
            for (std::size_t j = 0; j < d; ++j) {
                double dv = tokens.at(i, j) - mu;
                var += dv * dv;
            }
            var /= d;
            double inv = 1.0 / std::sqrt(var + 1e-5);
            for (std::size_t j = 0; j < d; ++j)
                normed.at(i, j) = p.ln_gain[j] * (tokens.at(i, j) - mu) * inv + p.ln_bias[j];
        }
    }
    auto affine = [](const Tensor& x, const Tensor& w, const Tensor& b) {
        Tensor y({x.rows(), w.rows()});
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t o = 0; o < w.rows(); ++o) {
                double acc = b[o];
                for (std::size_t j = 0; j < x.cols(); ++j) acc += w.at(o, j) * x.at(i, j);
                y.at(i, o) = acc;
            }
        return y;
    };
    Tensor tmp = affine(normed, p.w_v, p.b_v);
    Tensor tmp2 = affine(tmp, p.w_out, p.b_out);
    for (std::size_t i = 0; i < tmp2.size(); ++i) tmp2[i] += tokens[i];
    Tensor hid = affine(tmp2, p.ffn_w1, p.ffn_b1);
    for (auto& v : hid.vec()) v = std::tanh(v);
    (void)hdim;
    Tensor ffn = affine(hid, p.ffn_w2, p.ffn_b2);
    for (std::size_t i = 0; i < ffn.size(); ++i) ffn[i] += tmp2[i];
    return ffn;
}

}  // namespace

TEST_CASE("dense_features: identity parameters give 2x the penultimate tokens") {
    Rng rng(21);
    Tensor tokens = core::randn({5, 6}, rng, 1.0);  // 1 class + 4 spatial -> 2x2
    auto map = dense_features(tokens, identity_params(6, 12));
    CHECK(map.height() == 2);
    CHECK(map.width() == 2);
    CHECK(map.dim() == 6);
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t c = 0; c < 6; ++c)
                CHECK(map.grid.at(y, x, c) ==
                      doctest::Approx(2.0 * tokens.at(1 + y * 2 + x, c)).epsilon(1e-12));
}

TEST_CASE("dense_features: matches a straight-line evaluation of the modified layer") {
    Rng rng(22);
    Tensor tokens = core::randn({17, 8}, rng, 0.7);  // 1 + 16 -> 4x4
    auto params = random_params(8, 16, rng);
    auto map = dense_features(tokens, params);
    Tensor want = dense_oracle(tokens, params);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x)
            for (std::size_t c = 0; c < 8; ++c)
                CHECK(map.grid.at(y, x, c) ==
                      doctest::Approx(want.at(1 + y * 4 + x, c)).epsilon(1e-9));
}

TEST_CASE("dense_features: non-square remainder rejected") {
    Rng rng(23);
    Tensor tokens = core::randn({6, 4}, rng, 1.0);  // 5 spatial tokens: not a square
    CHECK_THROWS_AS(dense_features(tokens, identity_params(4, 8)), core::Error);
}

TEST_CASE("partition_pool: counts, constants, and the hand-rolled mean oracle") {
    DenseFeatureMap map;
    map.grid = Tensor({8, 8, 3});
    Rng rng(24);
    rng.fill_normal(map.grid.vec());

    // g = 4 -> 16 local tokens
    auto toks = partition_pool(map, 4);
    CHECK(toks.rows() == 16);

    // constant map -> every token equals the constant
    DenseFeatureMap cmap;
    cmap.grid = Tensor::full({8, 8, 3}, 0.37);
    auto ctoks = partition_pool(cmap, 2);
    for (std::size_t i = 0; i < ctoks.size(); ++i) CHECK(ctoks[i] == doctest::Approx(0.37));

    // 4x4 map with distinct corners, g = 2: each token is its 2x2 cell mean
    DenseFeatureMap m4;
    m4.grid = Tensor({4, 4, 1});
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) m4.grid.at(y, x, 0) = y * 10.0 + x;
    auto t4 = partition_pool(m4, 2);
    for (std::size_t gy = 0; gy < 2; ++gy)
        for (std::size_t gx = 0; gx < 2; ++gx) {
            double mean = 0.0;
            for (std::size_t y = 0; y < 2; ++y)
                for (std::size_t x = 0; x < 2; ++x)
                    mean += m4.grid.at(gy * 2 + y, gx * 2 + x, 0) / 4.0;
            CHECK(t4.at(gy * 2 + gx, 0) == doctest::Approx(mean).epsilon(1e-12));
        }

    // pooling preserves the global mean
    for (std::size_t g : {1, 2, 4, 8}) {
        auto tt = partition_pool(map, g);
        for (std::size_t c = 0; c < 3; ++c) {
            double pooled = 0.0, full = 0.0;
            for (std::size_t i = 0; i < tt.rows(); ++i) pooled += tt.at(i, c) / tt.rows();
            for (std::size_t y = 0; y < 8; ++y)
                for (std::size_t x = 0; x < 8; ++x) full += map.grid.at(y, x, c) / 64.0;
            CHECK(std::fabs(pooled - full) < 1e-6);
        }
    }

    // indivisible dims rejected
    CHECK_THROWS_AS(partition_pool(map, 3), core::Error);
}

TEST_CASE("distill_loss: trivial identities and rejection") {
    Rng rng(25);
    Tensor t = core::randn({6, 8}, rng, 1.0);
    CHECK(distill_loss(t, t) == doctest::Approx(0.0).epsilon(1e-12));

    Tensor neg = t;
    for (auto& v : neg.vec()) v = -v;
    CHECK(distill_loss(neg, t) == doctest::Approx(2.0).epsilon(1e-12));

    Tensor scaled = t;
    for (auto& v : scaled.vec()) v *= 3.0;
    CHECK(distill_loss(scaled, t) == doctest::Approx(0.0).epsilon(1e-12));

    Tensor zero = t;
    for (std::size_t j = 0; j < 8; ++j) zero.at(2, j) = 0.0;
    CHECK_THROWS_AS(distill_loss(zero, t), core::Error);
}

TEST_CASE("distill_loss: gradient matches finite differences") {
    Rng rng(26);
    Tensor student = core::randn({4, 6}, rng, 1.0);
    Tensor teacher = core::randn({4, 6}, rng, 1.0);

    auto sv = core::ad::leaf(student, true);
    auto loss = distill_loss_var(sv, core::ad::constant(teacher));
    core::ad::backward(loss);

    double h = 1e-4;
    for (std::size_t i = 0; i < student.size(); ++i) {
        Tensor sp = student, sm = student;
        sp[i] += h;
        sm[i] -= h;
        double fd = (distill_loss(sp, teacher) - distill_loss(sm, teacher)) / (2 * h);
        double an = sv->grad[i];
        CHECK(std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-8}) < 1e-3);
    }
}

TEST_CASE("teacher_crop_tokens: whole-image and per-patch mean-color oracle") {
    auto teacher = core::make_mean_color_backend(16);
    core::Image img(64, 64);
    Rng rng(27);
    for (auto& v : img.data) v = rng.uniform();

    // g = 1: single token equal to the whole-image embedding
    auto one = teacher_crop_tokens(img, 1, *teacher);
    CHECK(one.rows() == 1);
    auto whole = teacher->image_embed(img);
    for (std::size_t c = 0; c < 16; ++c) CHECK(one.at(0, c) == doctest::Approx(whole[c]));

    // g = 4 on 64x64: 16 tokens from 16x16 crops
    auto toks = teacher_crop_tokens(img, 4, *teacher);
    CHECK(toks.rows() == 16);

    // per-patch mean color oracle (normalised [r, g, b, 1, 0...])
    for (std::size_t gy = 0; gy < 4; ++gy)
        for (std::size_t gx = 0; gx < 4; ++gx) {
            double mean[3] = {0, 0, 0};
            for (std::size_t y = 0; y < 16; ++y)
                for (std::size_t x = 0; x < 16; ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        mean[c] += img.at(gx * 16 + x, gy * 16 + y, c) / 256.0;
            double norm = std::sqrt(mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2] + 1.0);
            std::size_t row = gy * 4 + gx;
            for (std::size_t c = 0; c < 3; ++c)
                CHECK(toks.at(row, c) == doctest::Approx(mean[c] / norm).epsilon(1e-9));
            CHECK(toks.at(row, 3) == doctest::Approx(1.0 / norm).epsilon(1e-9));
        }
}

TEST_CASE("student forward: shapes and token bundle contract") {
    core::ParamStore store;
    Rng rng(28);
    LocalEncoderConfig cfg;
    auto enc = LocalEncoder::create(store, "local_encoder", cfg, rng);
    auto scene = data::synthesize_scene(data::Relation::hug, 3);

    auto map = enc.dense_map(scene.image);
    CHECK(map.height() == 8);
    CHECK(map.width() == 8);
    CHECK(map.dim() == 16);

    auto bundle = enc.token_bundle(scene.image, 4);
    CHECK(bundle.tok_l.rows() == 16);
    CHECK(bundle.tok_i.rows() == 5);  // class token + 2x2 pooled
    CHECK(bundle.tok_i.cols() == 16);

    // dense_features through the public op agrees with the encoder's own path
    core::GradModeGuard off(store, false);
    auto pen = enc.penultimate(scene.image);
    auto map2 = dense_features(core::ad::val(pen), enc.last_layer_params(), 64);
    CHECK(map2.position_major().max_abs_diff(map.position_major()) < 1e-9);
}

TEST_CASE("distillation drives the stub-teacher loss below 0.05") {
    core::ParamStore store;
    Rng rng(29);
    LocalEncoderConfig cfg;
    auto enc = LocalEncoder::create(store, "local_encoder", cfg, rng);

    std::vector<core::Image> images;
    for (int i = 0; i < 8; ++i)
        images.push_back(data::synthesize_scene(data::all_relations()[i % 4], 600 + i).image);
    auto teacher = core::make_mean_color_backend(16);

    DistillConfig dc;
    dc.steps = 150;  // short: the unit test checks the trajectory, acceptance runs 500
    dc.seed = 17;
    auto res = distill(enc, images, *teacher, dc);
    CHECK(res.loss_log.front() > res.final_loss);
    CHECK(res.final_loss < 0.05);
}
