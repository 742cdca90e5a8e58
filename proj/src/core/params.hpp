// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace relgen::core {

// Named parameter registry shared by the model modules.
//
// Gradient tracking is opt-in: with grad mode off (the default, used by all
// inference paths) bind() hands out constants. With grad mode on, trainable
// entries bind as gradient-accumulating leaves that are recorded until the
// training loop harvests them after backward(). Frozen entries always bind
// as constants, so their gradients are exactly zero by construction.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor adam_m, adam_v;
        bool trainable = false;
    };

    Tensor& create(const std::string& name, Tensor init, bool trainable = false) {
        require(!entries_.count(name), "param store: duplicate parameter " + name);
        Entry e;
        e.value = std::move(init);
        e.grad = Tensor(e.value.shape());
        e.trainable = trainable;
        auto [it, ok] = entries_.emplace(name, std::move(e));
        (void)ok;
        return it->second.value;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        require(it != entries_.end(), "param store: unknown parameter " + name);
        return it->second;
    }

    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        require(it != entries_.end(), "param store: unknown parameter " + name);
        return it->second;
    }

    const Tensor& value(const std::string& name) const { return entry(name).value; }
    Tensor& value(const std::string& name) { return entry(name).value; }

    void set_trainable(const std::string& name, bool t) { entry(name).trainable = t; }

    bool grad_enabled() const { return grad_enabled_; }
    void set_grad_enabled(bool on) { grad_enabled_ = on; }

    ad::Var bind(const std::string& name) {
        Entry& e = entry(name);
        if (!grad_enabled_ || !e.trainable) return ad::constant(e.value);
        ad::Var v = ad::leaf(e.value, true);
        recorded_.emplace_back(&e, v);
        return v;
    }

    // Accumulates gradients from every leaf bound since the last harvest into
    // the entries, then drops the recordings. Call after backward().
    void harvest_and_clear() {
        for (auto& [e, var] : recorded_) {
            if (var->grad.size() == e->value.size())
                for (std::size_t i = 0; i < e->grad.size(); ++i) e->grad[i] += var->grad[i];
        }
        recorded_.clear();
    }

    void zero_grads() {
        for (auto& [name, e] : entries_)
            std::fill(e.grad.vec().begin(), e.grad.vec().end(), 0.0);
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (auto& [name, e] : entries_) out.push_back(name);
        return out;
    }

    std::vector<std::string> trainable_names() const {
        std::vector<std::string> out;
        for (auto& [name, e] : entries_)
            if (e.trainable) out.push_back(name);
        return out;
    }

    double grad_norm(const std::vector<std::string>& names) const {
        double acc = 0.0;
        for (const auto& n : names) {
            const Entry& e = entry(n);
            for (std::size_t i = 0; i < e.grad.size(); ++i) acc += e.grad[i] * e.grad[i];
        }
        return std::sqrt(acc);
    }

    // FNV-1a over the raw bytes of parameter values in sorted name order.
    // Used by the freeze-policy checks.
    std::uint64_t checksum_frozen() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (auto& [name, e] : entries_) {
            if (e.trainable) continue;
            h = fnv1a64(name, h);
            h = fnv1a64(e.value.data(), e.value.size() * sizeof(double), h);
        }
        return h;
    }

    std::uint64_t checksum_all() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (auto& [name, e] : entries_) {
            h = fnv1a64(name, h);
            h = fnv1a64(e.value.data(), e.value.size() * sizeof(double), h);
        }
        return h;
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::map<std::string, Entry>& entries() { return entries_; }

private:
    std::map<std::string, Entry> entries_;  // sorted: deterministic iteration
    std::vector<std::pair<Entry*, ad::Var>> recorded_;
    bool grad_enabled_ = false;
};

// Scoped grad-mode switch; plain forward wrappers turn it off, training
// loops turn it on.
class GradModeGuard {
public:
    GradModeGuard(ParamStore& store, bool on) : store_(store), prev_(store.grad_enabled()) {
        store_.set_grad_enabled(on);
    }
    ~GradModeGuard() { store_.set_grad_enabled(prev_); }

    GradModeGuard(const GradModeGuard&) = delete;
    GradModeGuard& operator=(const GradModeGuard&) = delete;

private:
    ParamStore& store_;
    bool prev_;
};

// Gaussian init helper.
inline Tensor randn(std::vector<std::size_t> shape, Rng& rng, double scale) {
    Tensor t(std::move(shape));
    rng.fill_normal(t.vec(), scale);
    return t;
}

// Plain Adam, matching the common defaults. No weight decay.
class Adam {
public:
    Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), t_(0) {}

    void step(ParamStore& store) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& [name, e] : store.entries()) {
            if (!e.trainable) continue;
            if (e.adam_m.size() != e.value.size()) {
                e.adam_m = Tensor(e.value.shape());
                e.adam_v = Tensor(e.value.shape());
            }
            for (std::size_t i = 0; i < e.value.size(); ++i) {
                double g = e.grad[i];
                e.adam_m[i] = beta1_ * e.adam_m[i] + (1.0 - beta1_) * g;
                e.adam_v[i] = beta2_ * e.adam_v[i] + (1.0 - beta2_) * g * g;
                double mhat = e.adam_m[i] / bc1;
                double vhat = e.adam_v[i] / bc2;
                e.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_;
};

}  // namespace relgen::core
