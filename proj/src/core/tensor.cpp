// SPDX-License-Identifier: Apache-2.0
#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace relgen::core {

static std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_size(shape_), "tensor: data size does not match shape");
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor::max_abs_diff(const Tensor& o) const {
    require(same_shape(o), "tensor: shape mismatch in max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::fabs(data_[i] - o.data_[i]));
    return m;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    require(shape_size(shape) == data_.size(), "tensor: reshape size mismatch");
    return Tensor(std::move(shape), data_);
}

namespace ad {

Tensor& Node::ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
    return grad;
}

Var constant(Tensor v) { return leaf(std::move(v), false); }

Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

const Tensor& val(const Var& v) { return v->value; }

static Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward_fn = std::move(back);
    return n;
}

static void check_same_shape(const Var& a, const Var& b, const char* op) {
    require(a->value.same_shape(b->value), std::string("autodiff: shape mismatch in ") + op);
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) {
            auto& g = a.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (b.requires_grad) {
            auto& g = b.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) {
            auto& g = a.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (b.requires_grad) {
            auto& g = b.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) {
            auto& g = a.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b.value[i];
        }
        if (b.requires_grad) {
            auto& g = b.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a.value[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b->value[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) {
            auto& g = a.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / b.value[i];
        }
        if (b.requires_grad) {
            auto& g = b.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] -= n.grad[i] * a.value[i] / (b.value[i] * b.value[i]);
        }
    });
}

Var square(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.vec()) v *= v;
    return make(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * a.value[i] * n.grad[i];
    });
}

Var sqrt_v(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.vec()) v = std::sqrt(v);
    return make(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 0.5 / n.value[i] * n.grad[i];
    });
}

Var tanh_v(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.vec()) v = std::tanh(v);
    return make(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += (1.0 - n.value[i] * n.value[i]) * n.grad[i];
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (auto& v : out.vec()) v *= s;
    return make(std::move(out), {a}, [s](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (auto& v : out.vec()) v += s;
    return make(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var add_rowvec(const Var& a, const Var& v) {
    require(a->value.rank() == 2 && v->value.rank() == 1 && a->value.cols() == v->value.size(),
            "autodiff: add_rowvec shape mismatch");
    Tensor out = a->value;
    std::size_t m = out.rows(), c = out.cols();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) += v->value[j];
    return make(std::move(out), {a, v}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& v = *n.parents[1];
        std::size_t m = n.value.rows(), c = n.value.cols();
        if (a.requires_grad) {
            auto& g = a.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (v.requires_grad) {
            auto& g = v.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += n.grad.at(i, j);
        }
    });
}

Var mul_scalar_var(const Var& a, const Var& s) {
    require(s->value.size() == 1, "autodiff: mul_scalar_var expects a 1-element scalar");
    Tensor out = a->value;
    double sv = s->value[0];
    for (auto& v : out.vec()) v *= sv;
    return make(std::move(out), {a, s}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& s = *n.parents[1];
        double sv = s.value[0];
        if (a.requires_grad) {
            auto& g = a.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sv * n.grad[i];
        }
        if (s.requires_grad) {
            auto& g = s.ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < a.value.size(); ++i) acc += n.grad[i] * a.value[i];
            g[0] += acc;
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    require(a->value.rank() == 2 && b->value.rank() == 2 && a->value.cols() == b->value.rows(),
            "autodiff: matmul shape mismatch");
    std::size_t m = a->value.rows(), k = a->value.cols(), n2 = b->value.cols();
    Tensor out({m, n2});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            double av = a->value.at(i, l);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n2; ++j) out.at(i, j) += av * b->value.at(l, j);
        }
    return make(std::move(out), {a, b}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        std::size_t m = a.value.rows(), k = a.value.cols(), n2 = b.value.cols();
        if (a.requires_grad) {
            auto& g = a.ensure_grad();  // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n2; ++j) {
                    double gv = n.grad.at(i, j);
                    if (gv == 0.0) continue;
                    for (std::size_t l = 0; l < k; ++l) g.at(i, l) += gv * b.value.at(l, j);
                }
        }
        if (b.requires_grad) {
            auto& g = b.ensure_grad();  // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t l = 0; l < k; ++l) {
                    double av = a.value.at(i, l);
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < n2; ++j) g.at(l, j) += av * n.grad.at(i, j);
                }
        }
    });
}

Var transpose(const Var& a) {
    require(a->value.rank() == 2, "autodiff: transpose expects rank 2");
    std::size_t m = a->value.rows(), c = a->value.cols();
    Tensor out({c, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
    return make(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        std::size_t m = a.value.rows(), c = a.value.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) g.at(i, j) += n.grad.at(j, i);
    });
}

Var softmax_rows(const Var& a) {
    require(a->value.rank() == 2, "autodiff: softmax_rows expects rank 2");
    Tensor out = a->value;
    std::size_t m = out.rows(), c = out.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double mx = out.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, out.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double e = std::exp(out.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= z;
    }
    return make(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        std::size_t m = n.value.rows(), c = n.value.cols();
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            for (std::size_t j = 0; j < c; ++j)
                g.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
    require(a->value.rank() == 2, "autodiff: layer_norm_rows expects rank 2");
    std::size_t m = a->value.rows(), c = a->value.cols();
    require(gain->value.size() == c && bias->value.size() == c,
            "autodiff: layer_norm affine params must match column count");
    Tensor out({m, c});
    // stash x_hat and inv_std for the backward pass inside the closure
    auto xhat = std::make_shared<Tensor>(Tensor({m, c}));
    auto inv_std = std::make_shared<std::vector<double>>(m);
    for (std::size_t i = 0; i < m; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += a->value.at(i, j);
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double d = a->value.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < c; ++j) {
            double xh = (a->value.at(i, j) - mu) * is;
            xhat->at(i, j) = xh;
            out.at(i, j) = gain->value[j] * xh + bias->value[j];
        }
    }
    return make(std::move(out), {a, gain, bias}, [xhat, inv_std](Node& n) {
        auto& a = *n.parents[0];
        auto& gain = *n.parents[1];
        auto& bias = *n.parents[2];
        std::size_t m = n.value.rows(), c = n.value.cols();
        double cd = static_cast<double>(c);
        if (gain.requires_grad) {
            auto& g = gain.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += n.grad.at(i, j) * xhat->at(i, j);
        }
        if (bias.requires_grad) {
            auto& g = bias.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += n.grad.at(i, j);
        }
        if (a.requires_grad) {
            auto& g = a.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    double dy = n.grad.at(i, j) * gain.value[j];
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat->at(i, j);
                }
                for (std::size_t j = 0; j < c; ++j) {
                    double dy = n.grad.at(i, j) * gain.value[j];
                    g.at(i, j) += (*inv_std)[i] *
                                  (dy - sum_dy / cd - xhat->at(i, j) * sum_dy_xhat / cd);
                }
            }
        }
    });
}

Var sum_cols(const Var& a) {
    require(a->value.rank() == 2, "autodiff: sum_cols expects rank 2");
    std::size_t m = a->value.rows(), c = a->value.cols();
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += a->value.at(i, j);
    return make(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        std::size_t m = a.value.rows(), c = a.value.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) g.at(i, j) += n.grad[i];
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "autodiff: concat_rows of nothing");
    std::size_t c = parts[0]->value.cols(), m = 0;
    for (auto& p : parts) {
        require(p->value.rank() == 2 && p->value.cols() == c,
                "autodiff: concat_rows column mismatch");
        m += p->value.rows();
    }
    Tensor out({m, c});
    std::size_t r = 0;
    for (auto& p : parts) {
        std::copy(p->value.data(), p->value.data() + p->value.size(), out.data() + r * c);
        r += p->value.rows();
    }
    return make(std::move(out), parts, [](Node& n) {
        std::size_t c = n.value.cols(), r = 0;
        for (auto& pp : n.parents) {
            auto& p = *pp;
            std::size_t sz = p.value.size();
            if (p.requires_grad) {
                auto& g = p.ensure_grad();
                const double* src = n.grad.data() + r * c;
                for (std::size_t i = 0; i < sz; ++i) g[i] += src[i];
            }
            r += p.value.rows();
        }
    });
}

Var slice_rows(const Var& a, std::size_t from, std::size_t to) {
    require(a->value.rank() == 2 && from <= to && to <= a->value.rows(),
            "autodiff: slice_rows out of range");
    std::size_t c = a->value.cols();
    Tensor out({to - from, c});
    std::copy(a->value.data() + from * c, a->value.data() + to * c, out.data());
    return make(std::move(out), {a}, [from](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        std::size_t c = a.value.cols();
        double* dst = g.data() + from * c;
        for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "autodiff: concat_cols of nothing");
    std::size_t m = parts[0]->value.rows(), c = 0;
    for (auto& p : parts) {
        require(p->value.rank() == 2 && p->value.rows() == m, "autodiff: concat_cols row mismatch");
        c += p->value.cols();
    }
    Tensor out({m, c});
    std::size_t off = 0;
    for (auto& p : parts) {
        std::size_t pc = p->value.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pc; ++j) out.at(i, off + j) = p->value.at(i, j);
        off += pc;
    }
    return make(std::move(out), parts, [](Node& n) {
        std::size_t m = n.value.rows(), off = 0;
        for (auto& pp : n.parents) {
            auto& p = *pp;
            std::size_t pc = p.value.cols();
            if (p.requires_grad) {
                auto& g = p.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < pc; ++j) g.at(i, j) += n.grad.at(i, off + j);
            }
            off += pc;
        }
    });
}

Var slice_cols(const Var& a, std::size_t from, std::size_t to) {
    require(a->value.rank() == 2 && from <= to && to <= a->value.cols(),
            "autodiff: slice_cols out of range");
    std::size_t m = a->value.rows();
    Tensor out({m, to - from});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = from; j < to; ++j) out.at(i, j - from) = a->value.at(i, j);
    return make(std::move(out), {a}, [from](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        std::size_t m = n.value.rows(), w = n.value.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) g.at(i, from + j) += n.grad.at(i, j);
    });
}

Var gather_rows(const Var& a, std::vector<std::size_t> indices) {
    require(a->value.rank() == 2, "autodiff: gather_rows expects rank 2");
    std::size_t c = a->value.cols();
    for (auto idx : indices)
        require(idx < a->value.rows(), "autodiff: gather_rows index out of range");
    Tensor out({indices.size(), c});
    for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = a->value.at(indices[i], j);
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
    return make(std::move(out), {a}, [idx](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        std::size_t c = a.value.cols();
        for (std::size_t i = 0; i < idx->size(); ++i)
            for (std::size_t j = 0; j < c; ++j) g.at((*idx)[i], j) += n.grad.at(i, j);
    });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return make(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var sum_all(const Var& a) {
    double acc = 0.0;
    for (double v : a->value.vec()) acc += v;
    return make(Tensor::scalar(acc), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
    });
}

Var mean_all(const Var& a) {
    require(a->value.size() > 0, "autodiff: mean of empty tensor");
    double acc = 0.0;
    for (double v : a->value.vec()) acc += v;
    double inv = 1.0 / static_cast<double>(a->value.size());
    return make(Tensor::scalar(acc * inv), {a}, [inv](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        auto& g = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * inv;
    });
}

void backward(const Var& loss) {
    require(loss->value.size() == 1, "autodiff: backward expects a scalar loss");
    // iterative post-order DFS for reverse topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->requires_grad) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

}  // namespace ad

}  // namespace relgen::core
