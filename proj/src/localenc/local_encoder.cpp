// SPDX-License-Identifier: Apache-2.0
#include "localenc/local_encoder.hpp"

#include <cmath>

namespace relgen::localenc {

Tensor DenseFeatureMap::position_major() const {
    std::size_t h = height(), w = width(), d = dim();
    Tensor out({h * w, d});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < d; ++c) out.at(y * w + x, c) = grid.at(y, x, c);
    return out;
}

namespace {

struct DenseVarParams {
    NormKind norm;
    ad::Var ln_gain, ln_bias, w_v, b_v, w_out, b_out, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// The three assignments of the modified last layer, over the full token
// sequence (class position included; the caller drops it afterwards).
ad::Var dense_path(const ad::Var& tokens, const DenseVarParams& p) {
    ad::Var normed = p.norm == NormKind::layer_norm
                         ? ad::layer_norm_rows(tokens, p.ln_gain, p.ln_bias)
                         : tokens;
    auto tmp = ad::add_rowvec(ad::matmul(normed, ad::transpose(p.w_v)), p.b_v);
    tmp = ad::add(tokens, ad::add_rowvec(ad::matmul(tmp, ad::transpose(p.w_out)), p.b_out));
    auto ffn = ad::add_rowvec(
        ad::matmul(ad::tanh_v(ad::add_rowvec(ad::matmul(tmp, ad::transpose(p.ffn_w1)), p.ffn_b1)),
                   ad::transpose(p.ffn_w2)),
        p.ffn_b2);
    return ad::add(tmp, ffn);
}

std::size_t integer_sqrt(std::size_t n) {
    std::size_t r = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r;
}

}  // namespace

DenseFeatureMap dense_features(const Tensor& penultimate_tokens, const LastLayerParams& params,
                               std::size_t source_resolution) {
    core::require(penultimate_tokens.rank() == 2 && penultimate_tokens.rows() >= 2,
                  "dense_features: need a class position plus spatial tokens");
    std::size_t n = penultimate_tokens.rows() - 1;
    std::size_t side = integer_sqrt(n);
    core::require(side * side == n,
                  "dense_features: spatial token count must be a perfect square");
    std::size_t d = penultimate_tokens.cols();

    DenseVarParams p{params.norm,
                     ad::constant(params.ln_gain), ad::constant(params.ln_bias),
                     ad::constant(params.w_v),     ad::constant(params.b_v),
                     ad::constant(params.w_out),   ad::constant(params.b_out),
                     ad::constant(params.ffn_w1),  ad::constant(params.ffn_b1),
                     ad::constant(params.ffn_w2),  ad::constant(params.ffn_b2)};
    auto out = dense_path(ad::constant(penultimate_tokens), p);
    const Tensor& v = ad::val(out);

    DenseFeatureMap map;
    map.source_resolution = source_resolution;
    map.grid = Tensor({side, side, d});
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            for (std::size_t c = 0; c < d; ++c)
                map.grid.at(y, x, c) = v.at(1 + y * side + x, c);
    return map;
}

Tensor partition_pool(const DenseFeatureMap& map, std::size_t g) {
    std::size_t h = map.height(), w = map.width(), d = map.dim();
    core::require(g > 0 && h % g == 0 && w % g == 0,
                  "partition_pool: grid must divide the map dimensions");
    std::size_t ch = h / g, cw = w / g;
    Tensor out({g * g, d});
    for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx) {
            for (std::size_t y = 0; y < ch; ++y)
                for (std::size_t x = 0; x < cw; ++x)
                    for (std::size_t c = 0; c < d; ++c)
                        out.at(gy * g + gx, c) += map.grid.at(gy * ch + y, gx * cw + x, c);
            for (std::size_t c = 0; c < d; ++c)
                out.at(gy * g + gx, c) /= static_cast<double>(ch * cw);
        }
    return out;
}

ad::Var distill_loss_var(const ad::Var& student_local, const ad::Var& teacher_crop) {
    const Tensor& s = ad::val(student_local);
    const Tensor& t = ad::val(teacher_crop);
    core::require(s.rank() == 2 && s.same_shape(t),
                  "distill_loss: token count/dim mismatch");
    core::require(s.rows() > 0, "distill_loss: no tokens");
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double ns = 0.0, nt = 0.0;
        for (std::size_t j = 0; j < s.cols(); ++j) {
            ns += s.at(i, j) * s.at(i, j);
            nt += t.at(i, j) * t.at(i, j);
        }
        core::require(ns > 0.0 && nt > 0.0, "distill_loss: zero-norm token");
    }
    auto dots = ad::sum_cols(ad::mul(student_local, teacher_crop));
    auto ns = ad::sqrt_v(ad::sum_cols(ad::square(student_local)));
    auto nt = ad::sqrt_v(ad::sum_cols(ad::square(teacher_crop)));
    auto cos = ad::div(dots, ad::mul(ns, nt));
    return ad::add_scalar(ad::scale(ad::mean_all(cos), -1.0), 1.0);
}

double distill_loss(const Tensor& student_local, const Tensor& teacher_crop) {
    return ad::val(distill_loss_var(ad::constant(student_local), ad::constant(teacher_crop)))[0];
}

Tensor teacher_crop_tokens(const Image& image, std::size_t g, const EmbeddingBackend& teacher) {
    core::require(g > 0 && image.width % g == 0 && image.height % g == 0,
                  "teacher_crop_tokens: image must divide into g x g patches");
    std::size_t cw = image.width / g, ch = image.height / g;
    Tensor out({g * g, teacher.dim()});
    for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx) {
            Image patch = core::crop(image, gx * cw, gy * ch, (gx + 1) * cw, (gy + 1) * ch);
            auto emb = teacher.image_embed(patch);
            for (std::size_t c = 0; c < emb.size(); ++c) out.at(gy * g + gx, c) = emb[c];
        }
    return out;
}

// ---------------------------------------------------------------------------

LocalEncoder LocalEncoder::create(ParamStore& store, std::string prefix,
                                  const LocalEncoderConfig& cfg, Rng& rng) {
    core::require(cfg.image_size % cfg.patch == 0, "local encoder: patch must divide image size");
    LocalEncoder enc;
    enc.store_ = &store;
    enc.prefix_ = std::move(prefix);
    enc.cfg_ = cfg;

    std::size_t d = cfg.dim, pd = cfg.patch * cfg.patch * 3, hid = cfg.ffn_hidden;
    double si = 1.0 / std::sqrt(static_cast<double>(pd));
    double sd = 1.0 / std::sqrt(static_cast<double>(d));
    store.create(enc.prefix_ + "/patch_embed", core::randn({d, pd}, rng, si), false);
    store.create(enc.prefix_ + "/patch_bias", Tensor({d}), false);
    store.create(enc.prefix_ + "/cls", core::randn({1, d}, rng, 0.5), false);
    for (std::size_t l = 0; l < 2; ++l) {
        std::string lp = enc.prefix_ + "/l" + std::to_string(l);
        store.create(lp + "/ln1_gain", Tensor::full({d}, 1.0), false);
        store.create(lp + "/ln1_bias", Tensor({d}), false);
        store.create(lp + "/W_q", core::randn({d, d}, rng, sd), false);
        store.create(lp + "/W_k", core::randn({d, d}, rng, sd), false);
        store.create(lp + "/W_v", core::randn({d, d}, rng, sd), false);
        store.create(lp + "/b_v", Tensor({d}), false);
        store.create(lp + "/W_o", core::randn({d, d}, rng, sd), false);
        store.create(lp + "/b_o", Tensor({d}), false);
        store.create(lp + "/ln2_gain", Tensor::full({d}, 1.0), false);
        store.create(lp + "/ln2_bias", Tensor({d}), false);
        store.create(lp + "/ffn_W1", core::randn({hid, d}, rng, sd), false);
        store.create(lp + "/ffn_b1", Tensor({hid}), false);
        store.create(lp + "/ffn_W2", core::randn({d, hid}, rng,
                                                 1.0 / std::sqrt(static_cast<double>(hid))),
                     false);
        store.create(lp + "/ffn_b2", Tensor({d}), false);
    }
    return enc;
}

LocalEncoder LocalEncoder::bind_existing(ParamStore& store, std::string prefix,
                                         const LocalEncoderConfig& cfg) {
    LocalEncoder enc;
    enc.store_ = &store;
    enc.prefix_ = std::move(prefix);
    enc.cfg_ = cfg;
    return enc;
}

std::vector<std::string> LocalEncoder::param_names() const {
    std::vector<std::string> out;
    for (const auto& name : store_->names())
        if (name.rfind(prefix_ + "/", 0) == 0) out.push_back(name);
    return out;
}

void LocalEncoder::set_trainable(bool trainable) const {
    for (const auto& name : param_names()) store_->set_trainable(name, trainable);
}

Tensor LocalEncoder::patchify(const Image& img) const {
    core::require(img.width == cfg_.image_size && img.height == cfg_.image_size,
                  "local encoder: unexpected image size");
    std::size_t side = cfg_.tokens_per_side(), p = cfg_.patch;
    Tensor out({side * side, p * p * 3});
    for (std::size_t py = 0; py < side; ++py)
        for (std::size_t px = 0; px < side; ++px) {
            std::size_t k = 0;
            for (std::size_t y = 0; y < p; ++y)
                for (std::size_t x = 0; x < p; ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        out.at(py * side + px, k++) = img.at(px * p + x, py * p + y, c);
        }
    return out;
}

// Fixed 2-D sinusoidal position embedding; row 0 (class position) is zero.
static Tensor position_embedding(std::size_t side, std::size_t dim) {
    Tensor out({1 + side * side, dim});
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            for (std::size_t c = 0; c < dim; ++c) {
                double freq = std::pow(100.0, -static_cast<double>(c / 4) * 4.0 /
                                                   static_cast<double>(dim));
                double v = (c % 4 < 2) ? static_cast<double>(x) * freq
                                       : static_cast<double>(y) * freq;
                out.at(1 + y * side + x, c) = (c % 2 == 0) ? std::sin(v) : std::cos(v);
            }
    return out;
}

ad::Var LocalEncoder::encoder_layer(const ad::Var& x, std::size_t layer) const {
    std::string lp = prefix_ + "/l" + std::to_string(layer);
    auto b = [&](const std::string& n) { return store_->bind(lp + "/" + n); };
    std::size_t d = cfg_.dim, heads = cfg_.heads, dh = d / heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    auto normed = ad::layer_norm_rows(x, b("ln1_gain"), b("ln1_bias"));
    auto q = ad::matmul(normed, ad::transpose(b("W_q")));
    auto k = ad::matmul(normed, ad::transpose(b("W_k")));
    auto v = ad::add_rowvec(ad::matmul(normed, ad::transpose(b("W_v"))), b("b_v"));
    std::vector<ad::Var> head_outs;
    for (std::size_t hd = 0; hd < heads; ++hd) {
        std::size_t lo = hd * dh, hi = lo + dh;
        auto att = ad::matmul(
            ad::softmax_rows(ad::scale(ad::matmul(ad::slice_cols(q, lo, hi),
                                                  ad::transpose(ad::slice_cols(k, lo, hi))),
                                       inv_sqrt)),
            ad::slice_cols(v, lo, hi));
        head_outs.push_back(att);
    }
    auto merged = heads == 1 ? head_outs[0] : ad::concat_cols(head_outs);
    auto attended =
        ad::add(x, ad::add_rowvec(ad::matmul(merged, ad::transpose(b("W_o"))), b("b_o")));

    auto normed2 = ad::layer_norm_rows(attended, b("ln2_gain"), b("ln2_bias"));
    auto ffn = ad::add_rowvec(
        ad::matmul(ad::tanh_v(ad::add_rowvec(ad::matmul(normed2, ad::transpose(b("ffn_W1"))),
                                             b("ffn_b1"))),
                   ad::transpose(b("ffn_W2"))),
        b("ffn_b2"));
    return ad::add(attended, ffn);
}

ad::Var LocalEncoder::penultimate(const Image& img) const {
    Tensor patches = patchify(img);
    std::size_t side = cfg_.tokens_per_side();
    auto embedded = ad::add_rowvec(
        ad::matmul(ad::constant(patches), ad::transpose(store_->bind(prefix_ + "/patch_embed"))),
        store_->bind(prefix_ + "/patch_bias"));
    auto x = ad::concat_rows({store_->bind(prefix_ + "/cls"), embedded});
    x = ad::add(x, ad::constant(position_embedding(side, cfg_.dim)));
    return encoder_layer(x, 0);
}

ad::Var LocalEncoder::dense_map_var(const Image& img) const {
    auto pen = penultimate(img);
    std::string lp = prefix_ + "/l1";
    auto b = [&](const std::string& n) { return store_->bind(lp + "/" + n); };
    DenseVarParams p{NormKind::layer_norm, b("ln1_gain"), b("ln1_bias"), b("W_v"),
                     b("b_v"),             b("W_o"),      b("b_o"),      b("ffn_W1"),
                     b("ffn_b1"),          b("ffn_W2"),   b("ffn_b2")};
    auto out = dense_path(pen, p);
    return ad::slice_rows(out, 1, ad::val(out).rows());  // drop the class position
}

DenseFeatureMap LocalEncoder::dense_map(const Image& img) const {
    core::GradModeGuard no_grad(*store_, false);
    auto v = dense_map_var(img);
    const Tensor& t = ad::val(v);
    std::size_t side = cfg_.tokens_per_side(), d = cfg_.dim;
    DenseFeatureMap map;
    map.source_resolution = cfg_.image_size;
    map.grid = Tensor({side, side, d});
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            for (std::size_t c = 0; c < d; ++c) map.grid.at(y, x, c) = t.at(y * side + x, c);
    return map;
}

ad::Var LocalEncoder::full_forward(const Image& img) const {
    return encoder_layer(penultimate(img), 1);
}

TokenBundle LocalEncoder::token_bundle(const Image& img, std::size_t g) const {
    core::GradModeGuard no_grad(*store_, false);
    auto full = full_forward(img);
    Tensor cls({1, cfg_.dim});
    for (std::size_t c = 0; c < cfg_.dim; ++c) cls.at(0, c) = ad::val(full).at(0, c);

    DenseFeatureMap map = dense_map(img);
    Tensor coarse = partition_pool(map, 2);
    Tensor local = partition_pool(map, g);

    TokenBundle bundle;
    bundle.grid = g;
    bundle.tok_l = std::move(local);
    bundle.tok_i = Tensor({1 + coarse.rows(), cfg_.dim});
    for (std::size_t c = 0; c < cfg_.dim; ++c) bundle.tok_i.at(0, c) = cls.at(0, c);
    for (std::size_t r = 0; r < coarse.rows(); ++r)
        for (std::size_t c = 0; c < cfg_.dim; ++c) bundle.tok_i.at(1 + r, c) = coarse.at(r, c);
    return bundle;
}

LastLayerParams LocalEncoder::last_layer_params() const {
    std::string lp = prefix_ + "/l1";
    LastLayerParams p;
    p.norm = NormKind::layer_norm;
    p.ln_gain = store_->value(lp + "/ln1_gain");
    p.ln_bias = store_->value(lp + "/ln1_bias");
    p.w_v = store_->value(lp + "/W_v");
    p.b_v = store_->value(lp + "/b_v");
    p.w_out = store_->value(lp + "/W_o");
    p.b_out = store_->value(lp + "/b_o");
    p.ffn_w1 = store_->value(lp + "/ffn_W1");
    p.ffn_b1 = store_->value(lp + "/ffn_b1");
    p.ffn_w2 = store_->value(lp + "/ffn_W2");
    p.ffn_b2 = store_->value(lp + "/ffn_b2");
    return p;
}

DistillResult distill(LocalEncoder& student, const std::vector<Image>& images,
                      const EmbeddingBackend& teacher, const DistillConfig& cfg) {
    core::require(!images.empty(), "distill: empty image set");
    core::require(teacher.dim() == student.config().dim,
                  "distill: teacher embedding dim must match the student");
    ParamStore& store = student.store();
    student.set_trainable(true);

    std::size_t side = student.config().tokens_per_side();
    std::size_t g = cfg.grid;
    core::require(side % g == 0, "distill: grid must divide the dense map");
    std::size_t cell = side / g;

    // frozen teacher targets, computed once per image
    std::vector<Tensor> targets;
    targets.reserve(images.size());
    for (const auto& img : images) targets.push_back(teacher_crop_tokens(img, g, teacher));

    // constant pooling matrix: [g*g, side*side], averages each cell
    Tensor pool({g * g, side * side});
    for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx)
            for (std::size_t y = 0; y < cell; ++y)
                for (std::size_t x = 0; x < cell; ++x)
                    pool.at(gy * g + gx, (gy * cell + y) * side + (gx * cell + x)) =
                        1.0 / static_cast<double>(cell * cell);

    Rng rng(cfg.seed);
    core::Adam adam(cfg.lr);
    DistillResult result;
    result.loss_log.reserve(cfg.steps);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        core::GradModeGuard grad_on(store, true);
        std::size_t bs = std::min(cfg.batch_size, images.size());
        ad::Var total;
        for (std::size_t b = 0; b < bs; ++b) {
            std::size_t idx = rng.uniform_index(images.size());
            auto dense = student.dense_map_var(images[idx]);
            auto pooled = ad::matmul(ad::constant(pool), dense);
            auto loss = distill_loss_var(pooled, ad::constant(targets[idx]));
            total = b == 0 ? loss : ad::add(total, loss);
        }
        total = ad::scale(total, 1.0 / static_cast<double>(bs));
        ad::backward(total);
        store.harvest_and_clear();
        adam.step(store);
        store.zero_grads();
        result.loss_log.push_back(ad::val(total)[0]);
    }

    // full-set evaluation at the final parameters
    double acc = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Tensor pooled = partition_pool(student.dense_map(images[i]), g);
        acc += distill_loss(pooled, targets[i]);
    }
    result.final_loss = acc / static_cast<double>(images.size());
    return result;
}

}  // namespace relgen::localenc
