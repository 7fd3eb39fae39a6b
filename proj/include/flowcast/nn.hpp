#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowcast/error.hpp"
#include "flowcast/rng.hpp"

// Minimal reverse-mode engine over a fixed op set. A Tape owns the forward
// values of one computation; backward() walks the nodes in reverse creation
// order and accumulates gradients of parameters into their ParamStore slots.
// The op set is exactly what the predictor and the Q-network need; there is
// no broadcasting beyond row-vector bias adds.

namespace flowcast::nn {

template <typename T>
struct Tensor {
    std::int64_t n = 0, m = 0;  // rows, cols ([1,m] represents a vector)
    std::vector<T> v;

    Tensor() = default;
    Tensor(std::int64_t rows, std::int64_t cols)
        : n(rows), m(cols), v(static_cast<std::size_t>(rows * cols), T(0)) {}

    static Tensor zeros(std::int64_t rows, std::int64_t cols) { return Tensor(rows, cols); }
    static Tensor row(std::vector<T> values) {
        Tensor t;
        t.n = 1;
        t.m = static_cast<std::int64_t>(values.size());
        t.v = std::move(values);
        return t;
    }

    std::size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T& at(std::int64_t i, std::int64_t j) { return v[static_cast<std::size_t>(i * m + j)]; }
    T at(std::int64_t i, std::int64_t j) const { return v[static_cast<std::size_t>(i * m + j)]; }

    bool same_shape(const Tensor& o) const { return n == o.n && m == o.m; }
    std::string shape_str() const {
        return "[" + std::to_string(n) + "," + std::to_string(m) + "]";
    }
};

// ---------------------------------------------------------------------------
// Matmul kernels (row-major). `accumulate` selects = vs +=.
// ---------------------------------------------------------------------------

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::int64_t n, std::int64_t k, std::int64_t m,
               bool accumulate) {
    if (!accumulate) std::fill(c, c + n * m, T(0));
    for (std::int64_t i = 0; i < n; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * m;
        for (std::int64_t l = 0; l < k; ++l) {
            const T av = arow[l];
            if (av == T(0)) continue;
            const T* brow = b + l * m;
            for (std::int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[n,m] = x[n,k] * y[m,k]^T
template <typename T>
void matmul_nt(const T* x, const T* y, T* c, std::int64_t n, std::int64_t k, std::int64_t m,
               bool accumulate) {
    for (std::int64_t i = 0; i < n; ++i) {
        const T* xrow = x + i * k;
        T* crow = c + i * m;
        for (std::int64_t j = 0; j < m; ++j) {
            const T* yrow = y + j * k;
            T acc = 0;
            for (std::int64_t l = 0; l < k; ++l) acc += xrow[l] * yrow[l];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

// c[n,m] = x[k,n]^T * y[k,m]
template <typename T>
void matmul_tn(const T* x, const T* y, T* c, std::int64_t n, std::int64_t k, std::int64_t m,
               bool accumulate) {
    if (!accumulate) std::fill(c, c + n * m, T(0));
    for (std::int64_t l = 0; l < k; ++l) {
        const T* xrow = x + l * n;
        const T* yrow = y + l * m;
        for (std::int64_t i = 0; i < n; ++i) {
            const T xv = xrow[i];
            if (xv == T(0)) continue;
            T* crow = c + i * m;
            for (std::int64_t j = 0; j < m; ++j) crow[j] += xv * yrow[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Parameters and optimizer
// ---------------------------------------------------------------------------

enum class Init { Zero, One, Glorot, LstmBias };

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> m1, m2;  // Adam moments
    std::int64_t step = 0;
};

template <typename T>
class ParamStore {
  public:
    // Initialization draws from a stream keyed by (seed, name) so that two
    // models sharing a parameter name and seed start from identical weights
    // regardless of creation order.
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    Param<T>& add(const std::string& name, std::int64_t rows, std::int64_t cols, Init init) {
        if (index_.count(name)) throw InternalError("duplicate parameter name: " + name);
        auto p = std::make_unique<Param<T>>();
        p->name = name;
        p->value = Tensor<T>(rows, cols);
        p->grad = Tensor<T>(rows, cols);
        p->m1 = Tensor<T>(rows, cols);
        p->m2 = Tensor<T>(rows, cols);
        switch (init) {
            case Init::Zero:
                break;
            case Init::One:
                std::fill(p->value.v.begin(), p->value.v.end(), T(1));
                break;
            case Init::Glorot: {
                Rng rng = seeded_rng(seed_, name);
                const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
                for (auto& x : p->value.v) x = static_cast<T>(uniform_range(rng, -bound, bound));
                break;
            }
            case Init::LstmBias: {
                // gate layout [i|f|g|o]: forget-gate bias starts at 1
                const std::int64_t h = cols / 4;
                for (std::int64_t j = h; j < 2 * h; ++j) p->value.v[static_cast<std::size_t>(j)] = T(1);
                break;
            }
        }
        params_.push_back(std::move(p));
        index_[name] = params_.size() - 1;
        return *params_.back();
    }

    Param<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw InternalError("unknown parameter: " + name);
        return *params_[it->second];
    }
    const Param<T>& get(const std::string& name) const {
        return const_cast<ParamStore*>(this)->get(name);
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t count() const { return params_.size(); }
    Param<T>& at(std::size_t i) { return *params_[i]; }
    const Param<T>& at(std::size_t i) const { return *params_[i]; }

    void zero_grads() {
        for (auto& p : params_) std::fill(p->grad.v.begin(), p->grad.v.end(), T(0));
    }

    // Value snapshot/restore (optimizer state excluded); used for
    // best-validation checkpoints.
    std::vector<Tensor<T>> snapshot_values() const {
        std::vector<Tensor<T>> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p->value);
        return out;
    }
    void restore_values(const std::vector<Tensor<T>>& snap) {
        if (snap.size() != params_.size()) throw InternalError("snapshot size mismatch");
        for (std::size_t i = 0; i < snap.size(); ++i) params_[i]->value = snap[i];
    }

    void copy_values_from(const ParamStore& other) {
        if (other.count() != count()) throw InternalError("parameter store shape mismatch");
        for (std::size_t i = 0; i < count(); ++i) {
            if (params_[i]->name != other.params_[i]->name)
                throw InternalError("parameter store name mismatch at " + params_[i]->name);
            params_[i]->value = other.params_[i]->value;
        }
    }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::vector<std::unique_ptr<Param<T>>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class OptKind { Adam, NAdam };

struct OptimizerConfig {
    OptKind kind = OptKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // 0 = no clipping
};

// One update over every parameter with a populated gradient; gradients are
// zeroed afterwards. NAdam applies Nesterov momentum to the first-moment
// term (schedule-free variant).
template <typename T>
void optimizer_step(ParamStore<T>& store, const OptimizerConfig& cfg) {
    if (cfg.lr <= 0) throw ConfigError("learning rate must be > 0");
    if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1)
        throw ConfigError("Adam betas must lie in [0,1)");

    if (cfg.clip_norm > 0) {
        double sq = 0;
        for (std::size_t i = 0; i < store.count(); ++i)
            for (T g : store.at(i).grad.v) sq += static_cast<double>(g) * static_cast<double>(g);
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
            const T scale = static_cast<T>(cfg.clip_norm / norm);
            for (std::size_t i = 0; i < store.count(); ++i)
                for (T& g : store.at(i).grad.v) g *= scale;
        }
    }

    for (std::size_t i = 0; i < store.count(); ++i) {
        Param<T>& p = store.at(i);
        p.step += 1;
        const double t = static_cast<double>(p.step);
        const double bc1 = 1.0 - std::pow(cfg.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, t);
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = static_cast<double>(p.grad.v[j]);
            double m = cfg.beta1 * static_cast<double>(p.m1.v[j]) + (1.0 - cfg.beta1) * g;
            double v = cfg.beta2 * static_cast<double>(p.m2.v[j]) + (1.0 - cfg.beta2) * g * g;
            p.m1.v[j] = static_cast<T>(m);
            p.m2.v[j] = static_cast<T>(v);
            double mhat;
            if (cfg.kind == OptKind::NAdam) {
                const double bc1_next = 1.0 - std::pow(cfg.beta1, t + 1.0);
                mhat = cfg.beta1 * m / bc1_next + (1.0 - cfg.beta1) * g / bc1;
            } else {
                mhat = m / bc1;
            }
            const double vhat = v / bc2;
            p.value.v[j] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
        std::fill(p.grad.v.begin(), p.grad.v.end(), T(0));
    }
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <typename T>
class Tape {
  public:
    using Ref = std::int32_t;

    Ref constant(Tensor<T> t) { return push(std::move(t), false, nullptr); }

    // A differentiable leaf that is not a parameter (gradient-check probes).
    Ref input(Tensor<T> t) { return push(std::move(t), true, nullptr); }

    // Repeated registration of the same parameter returns the same node, so a
    // batch touching one weight many times accumulates into a single slot.
    Ref param(Param<T>& p) {
        auto it = param_cache_.find(&p);
        if (it != param_cache_.end()) return it->second;
        Tensor<T> copy = p.value;
        Ref r = push(std::move(copy), true, &p);
        param_cache_.emplace(&p, r);
        return r;
    }

    const Tensor<T>& value(Ref r) const { return nodes_[idx(r)].value; }
    const Tensor<T>& grad(Ref r) const { return nodes_[idx(r)].grad; }

    // y[n,m] = x[n,k] * w[k,m]
    Ref matmul(Ref x, Ref w) {
        const auto& a = value(x);
        const auto& b = value(w);
        if (a.m != b.n)
            throw InternalError("matmul shape mismatch " + a.shape_str() + " x " + b.shape_str());
        Tensor<T> out(a.n, b.m);
        matmul_nn(a.data(), b.data(), out.data(), a.n, a.m, b.m, false);
        Ref r = push(std::move(out), needs(x) || needs(w), nullptr);
        if (needs(x) || needs(w)) {
            nodes_[idx(r)].back = [this, x, w, r] {
                const auto& g = nodes_[idx(r)].grad;
                const auto& a2 = value(x);
                const auto& b2 = value(w);
                if (needs(x))
                    matmul_nt(g.data(), b2.data(), grad_buf(x).data(), g.n, g.m, a2.m, true);
                if (needs(w))
                    matmul_tn(a2.data(), g.data(), grad_buf(w).data(), b2.n, a2.n, g.m, true);
            };
        }
        return r;
    }

    // y = x*w + b with b a row vector broadcast over rows.
    Ref linear(Ref x, Ref w, Ref b) { return add_row(matmul(x, w), b); }

    Ref add(Ref a, Ref b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        if (!ta.same_shape(tb))
            throw InternalError("add shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += tb.v[i];
        Ref r = push(std::move(out), needs(a) || needs(b), nullptr);
        if (needs(a) || needs(b)) {
            nodes_[idx(r)].back = [this, a, b, r] {
                const auto& g = nodes_[idx(r)].grad;
                if (needs(a)) axpy(grad_buf(a), g);
                if (needs(b)) axpy(grad_buf(b), g);
            };
        }
        return r;
    }

    // x[n,m] + row[1,m] broadcast
    Ref add_row(Ref x, Ref row) {
        const auto& tx = value(x);
        const auto& tr = value(row);
        if (tr.n != 1 || tr.m != tx.m)
            throw InternalError("add_row shape mismatch " + tx.shape_str() + " vs " + tr.shape_str());
        Tensor<T> out = tx;
        for (std::int64_t i = 0; i < out.n; ++i)
            for (std::int64_t j = 0; j < out.m; ++j) out.at(i, j) += tr.at(0, j);
        Ref r = push(std::move(out), needs(x) || needs(row), nullptr);
        if (needs(x) || needs(row)) {
            nodes_[idx(r)].back = [this, x, row, r] {
                const auto& g = nodes_[idx(r)].grad;
                if (needs(x)) axpy(grad_buf(x), g);
                if (needs(row)) {
                    auto& gb = grad_buf(row);
                    for (std::int64_t i = 0; i < g.n; ++i)
                        for (std::int64_t j = 0; j < g.m; ++j) gb.at(0, j) += g.at(i, j);
                }
            };
        }
        return r;
    }

    Ref mul(Ref a, Ref b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        if (!ta.same_shape(tb))
            throw InternalError("mul shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= tb.v[i];
        Ref r = push(std::move(out), needs(a) || needs(b), nullptr);
        if (needs(a) || needs(b)) {
            nodes_[idx(r)].back = [this, a, b, r] {
                const auto& g = nodes_[idx(r)].grad;
                if (needs(a)) {
                    auto& ga = grad_buf(a);
                    const auto& vb = value(b);
                    for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * vb.v[i];
                }
                if (needs(b)) {
                    auto& gb = grad_buf(b);
                    const auto& va = value(a);
                    for (std::size_t i = 0; i < g.size(); ++i) gb.v[i] += g.v[i] * va.v[i];
                }
            };
        }
        return r;
    }

    Ref scale(Ref x, T c) {
        Tensor<T> out = value(x);
        for (auto& v : out.v) v *= c;
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r, c] {
                const auto& g = nodes_[idx(r)].grad;
                auto& gx = grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i] * c;
            };
        }
        return r;
    }

    Ref sigmoid(Ref x) {
        Tensor<T> out = value(x);
        for (auto& v : out.v) v = T(1) / (T(1) + std::exp(-v));
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r] {
                const auto& g = nodes_[idx(r)].grad;
                const auto& y = nodes_[idx(r)].value;
                auto& gx = grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gx.v[i] += g.v[i] * y.v[i] * (T(1) - y.v[i]);
            };
        }
        return r;
    }

    Ref tanh_act(Ref x) {
        Tensor<T> out = value(x);
        for (auto& v : out.v) v = std::tanh(v);
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r] {
                const auto& g = nodes_[idx(r)].grad;
                const auto& y = nodes_[idx(r)].value;
                auto& gx = grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gx.v[i] += g.v[i] * (T(1) - y.v[i] * y.v[i]);
            };
        }
        return r;
    }

    Ref relu(Ref x) {
        Tensor<T> out = value(x);
        for (auto& v : out.v) v = v > T(0) ? v : T(0);
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r] {
                const auto& g = nodes_[idx(r)].grad;
                const auto& in = value(x);
                auto& gx = grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (in.v[i] > T(0)) gx.v[i] += g.v[i];
            };
        }
        return r;
    }

    Ref slice_cols(Ref x, std::int64_t c0, std::int64_t c1) {
        const auto& tx = value(x);
        if (c0 < 0 || c1 <= c0 || c1 > tx.m) throw InternalError("slice_cols out of range");
        Tensor<T> out(tx.n, c1 - c0);
        for (std::int64_t i = 0; i < tx.n; ++i)
            for (std::int64_t j = c0; j < c1; ++j) out.at(i, j - c0) = tx.at(i, j);
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r, c0] {
                const auto& g = nodes_[idx(r)].grad;
                auto& gx = grad_buf(x);
                for (std::int64_t i = 0; i < g.n; ++i)
                    for (std::int64_t j = 0; j < g.m; ++j) gx.at(i, c0 + j) += g.at(i, j);
            };
        }
        return r;
    }

    Ref concat_cols(std::span<const Ref> parts) {
        if (parts.empty()) throw InternalError("concat_cols of nothing");
        std::int64_t n = value(parts[0]).n, m = 0;
        bool any = false;
        for (Ref p : parts) {
            if (value(p).n != n) throw InternalError("concat_cols row mismatch");
            m += value(p).m;
            any = any || needs(p);
        }
        Tensor<T> out(n, m);
        std::int64_t off = 0;
        for (Ref p : parts) {
            const auto& tp = value(p);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < tp.m; ++j) out.at(i, off + j) = tp.at(i, j);
            off += tp.m;
        }
        std::vector<Ref> owned(parts.begin(), parts.end());
        Ref r = push(std::move(out), any, nullptr);
        if (any) {
            nodes_[idx(r)].back = [this, owned, r] {
                const auto& g = nodes_[idx(r)].grad;
                std::int64_t off2 = 0;
                for (Ref p : owned) {
                    const std::int64_t pm = value(p).m;
                    if (needs(p)) {
                        auto& gp = grad_buf(p);
                        for (std::int64_t i = 0; i < g.n; ++i)
                            for (std::int64_t j = 0; j < pm; ++j) gp.at(i, j) += g.at(i, off2 + j);
                    }
                    off2 += pm;
                }
            };
        }
        return r;
    }

    // Stack m row vectors [1,d] into [m,d].
    Ref stack_rows(std::span<const Ref> rows) {
        if (rows.empty()) throw InternalError("stack_rows of nothing");
        const std::int64_t d = value(rows[0]).m;
        bool any = false;
        for (Ref p : rows) {
            if (value(p).n != 1 || value(p).m != d) throw InternalError("stack_rows shape mismatch");
            any = any || needs(p);
        }
        Tensor<T> out(static_cast<std::int64_t>(rows.size()), d);
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy(value(rows[i]).v.begin(), value(rows[i]).v.end(),
                      out.v.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(d)));
        std::vector<Ref> owned(rows.begin(), rows.end());
        Ref r = push(std::move(out), any, nullptr);
        if (any) {
            nodes_[idx(r)].back = [this, owned, r] {
                const auto& g = nodes_[idx(r)].grad;
                for (std::size_t i = 0; i < owned.size(); ++i) {
                    if (!needs(owned[i])) continue;
                    auto& gp = grad_buf(owned[i]);
                    for (std::int64_t j = 0; j < g.m; ++j)
                        gp.at(0, j) += g.at(static_cast<std::int64_t>(i), j);
                }
            };
        }
        return r;
    }

    // Row gather with scatter-add backward; ids may repeat.
    Ref gather_rows(Ref table, const std::vector<int>& ids) {
        const auto& tt = value(table);
        Tensor<T> out(static_cast<std::int64_t>(ids.size()), tt.m);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const int id = ids[i];
            if (id < 0 || id >= tt.n)
                throw InternalError("row index " + std::to_string(id) + " out of range for " +
                                    tt.shape_str());
            std::copy(tt.v.begin() + static_cast<std::ptrdiff_t>(id * tt.m),
                      tt.v.begin() + static_cast<std::ptrdiff_t>((id + 1) * tt.m),
                      out.v.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(tt.m)));
        }
        Ref r = push(std::move(out), needs(table), nullptr);
        if (needs(table)) {
            nodes_[idx(r)].back = [this, table, r, ids] {
                const auto& g = nodes_[idx(r)].grad;
                auto& gt = grad_buf(table);
                for (std::size_t i = 0; i < ids.size(); ++i)
                    for (std::int64_t j = 0; j < g.m; ++j)
                        gt.at(ids[i], j) += g.at(static_cast<std::int64_t>(i), j);
            };
        }
        return r;
    }

    // Embedding lookup is exactly a row gather on the table parameter.
    Ref embedding(Ref table, const std::vector<int>& ids) { return gather_rows(table, ids); }

    // Row i of x lands at row targets[i] of an otherwise-zero [n, d] matrix.
    // Targets must be distinct.
    Ref scatter_rows(Ref x, const std::vector<int>& targets, std::int64_t n) {
        const auto& tx = value(x);
        if (static_cast<std::int64_t>(targets.size()) != tx.n)
            throw InternalError("scatter_rows target count mismatch");
        Tensor<T> out(n, tx.m);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const int t = targets[i];
            if (t < 0 || t >= n) throw InternalError("scatter_rows target out of range");
            std::copy(tx.v.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(tx.m)),
                      tx.v.begin() + static_cast<std::ptrdiff_t>((i + 1) * static_cast<std::size_t>(tx.m)),
                      out.v.begin() + static_cast<std::ptrdiff_t>(t * tx.m));
        }
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r, targets] {
                const auto& g = nodes_[idx(r)].grad;
                auto& gx = grad_buf(x);
                for (std::size_t i = 0; i < targets.size(); ++i)
                    for (std::int64_t j = 0; j < g.m; ++j)
                        gx.at(static_cast<std::int64_t>(i), j) += g.at(targets[i], j);
            };
        }
        return r;
    }

    Ref mean_rows(Ref x) {
        const auto& tx = value(x);
        if (tx.n < 1) throw InternalError("mean_rows over zero rows");
        Tensor<T> out(1, tx.m);
        for (std::int64_t i = 0; i < tx.n; ++i)
            for (std::int64_t j = 0; j < tx.m; ++j) out.at(0, j) += tx.at(i, j);
        const T inv = T(1) / static_cast<T>(tx.n);
        for (auto& v : out.v) v *= inv;
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r, inv] {
                const auto& g = nodes_[idx(r)].grad;
                auto& gx = grad_buf(x);
                for (std::int64_t i = 0; i < gx.n; ++i)
                    for (std::int64_t j = 0; j < g.m; ++j) gx.at(i, j) += g.at(0, j) * inv;
            };
        }
        return r;
    }

    // Elementwise max over rows; ties route the gradient to the first row.
    Ref max_rows(Ref x) {
        const auto& tx = value(x);
        if (tx.n < 1) throw InternalError("max_rows over zero rows");
        Tensor<T> out(1, tx.m);
        std::vector<std::int64_t> arg(static_cast<std::size_t>(tx.m), 0);
        for (std::int64_t j = 0; j < tx.m; ++j) {
            T best = tx.at(0, j);
            for (std::int64_t i = 1; i < tx.n; ++i)
                if (tx.at(i, j) > best) {
                    best = tx.at(i, j);
                    arg[static_cast<std::size_t>(j)] = i;
                }
            out.at(0, j) = best;
        }
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r, arg] {
                const auto& g = nodes_[idx(r)].grad;
                auto& gx = grad_buf(x);
                for (std::int64_t j = 0; j < g.m; ++j)
                    gx.at(arg[static_cast<std::size_t>(j)], j) += g.at(0, j);
            };
        }
        return r;
    }

    // Per-row normalization to zero mean / unit variance, then affine.
    Ref layer_norm(Ref x, Ref gain, Ref bias) {
        constexpr double kEps = 1e-5;
        const auto& tx = value(x);
        const auto& tg = value(gain);
        const auto& tb = value(bias);
        if (tg.n != 1 || tg.m != tx.m || tb.n != 1 || tb.m != tx.m)
            throw InternalError("layer_norm affine shape mismatch for " + tx.shape_str());
        Tensor<T> out(tx.n, tx.m);
        Tensor<T> xhat(tx.n, tx.m);
        std::vector<T> inv_sigma(static_cast<std::size_t>(tx.n));
        const double invm = 1.0 / static_cast<double>(tx.m);
        for (std::int64_t i = 0; i < tx.n; ++i) {
            double mu = 0;
            for (std::int64_t j = 0; j < tx.m; ++j) mu += tx.at(i, j);
            mu *= invm;
            double var = 0;
            for (std::int64_t j = 0; j < tx.m; ++j) {
                const double dlt = tx.at(i, j) - mu;
                var += dlt * dlt;
            }
            var *= invm;
            const double is = 1.0 / std::sqrt(var + kEps);
            inv_sigma[static_cast<std::size_t>(i)] = static_cast<T>(is);
            for (std::int64_t j = 0; j < tx.m; ++j) {
                const T xh = static_cast<T>((tx.at(i, j) - mu) * is);
                xhat.at(i, j) = xh;
                out.at(i, j) = xh * tg.at(0, j) + tb.at(0, j);
            }
        }
        Ref xh_ref = push(std::move(xhat), false, nullptr);  // cached forward intermediate
        Ref r = push(std::move(out), needs(x) || needs(gain) || needs(bias), nullptr);
        if (needs(x) || needs(gain) || needs(bias)) {
            nodes_[idx(r)].back = [this, x, gain, bias, r, xh_ref, inv_sigma] {
                const auto& g = nodes_[idx(r)].grad;
                const auto& xh = value(xh_ref);
                const auto& tg2 = value(gain);
                if (needs(gain)) {
                    auto& gg = grad_buf(gain);
                    for (std::int64_t i = 0; i < g.n; ++i)
                        for (std::int64_t j = 0; j < g.m; ++j)
                            gg.at(0, j) += g.at(i, j) * xh.at(i, j);
                }
                if (needs(bias)) {
                    auto& gb = grad_buf(bias);
                    for (std::int64_t i = 0; i < g.n; ++i)
                        for (std::int64_t j = 0; j < g.m; ++j) gb.at(0, j) += g.at(i, j);
                }
                if (needs(x)) {
                    auto& gx = grad_buf(x);
                    const double invm2 = 1.0 / static_cast<double>(g.m);
                    for (std::int64_t i = 0; i < g.n; ++i) {
                        double sum_d = 0, sum_dxh = 0;
                        for (std::int64_t j = 0; j < g.m; ++j) {
                            const double dxh = static_cast<double>(g.at(i, j)) * tg2.at(0, j);
                            sum_d += dxh;
                            sum_dxh += dxh * xh.at(i, j);
                        }
                        const double is = inv_sigma[static_cast<std::size_t>(i)];
                        for (std::int64_t j = 0; j < g.m; ++j) {
                            const double dxh = static_cast<double>(g.at(i, j)) * tg2.at(0, j);
                            gx.at(i, j) += static_cast<T>(
                                is * (dxh - invm2 * sum_d - invm2 * xh.at(i, j) * sum_dxh));
                        }
                    }
                }
            };
        }
        return r;
    }

    // Inverted dropout: mask and scale by 1/(1-rate) in training mode,
    // identity in evaluation mode.
    Ref dropout(Ref x, double rate, bool training, Rng& rng) {
        if (rate < 0 || rate >= 1) throw ConfigError("dropout rate must lie in [0,1)");
        if (!training || rate == 0.0) return x;
        const auto& tx = value(x);
        const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
        std::vector<T> mask(tx.size());
        for (auto& mv : mask) mv = uniform_real(rng) < rate ? T(0) : keep_scale;
        Tensor<T> out = tx;
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= mask[i];
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r, mask] {
                const auto& g = nodes_[idx(r)].grad;
                auto& gx = grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i] * mask[i];
            };
        }
        return r;
    }

    // Stabilized softmax + mean negative log likelihood. Returns the scalar
    // loss ref and a copy of the probability rows.
    std::pair<Ref, Tensor<T>> softmax_cross_entropy(Ref logits, const std::vector<int>& labels) {
        const auto& tl = value(logits);
        if (static_cast<std::int64_t>(labels.size()) != tl.n)
            throw InternalError("label count does not match logits rows");
        Tensor<T> probs(tl.n, tl.m);
        double loss = 0;
        for (std::int64_t i = 0; i < tl.n; ++i) {
            const int label = labels[static_cast<std::size_t>(i)];
            if (label < 0 || label >= tl.m)
                throw InternalError("label " + std::to_string(label) + " out of range for " +
                                    std::to_string(tl.m) + " classes");
            T mx = tl.at(i, 0);
            for (std::int64_t j = 1; j < tl.m; ++j) mx = std::max(mx, tl.at(i, j));
            double z = 0;
            for (std::int64_t j = 0; j < tl.m; ++j) z += std::exp(static_cast<double>(tl.at(i, j) - mx));
            for (std::int64_t j = 0; j < tl.m; ++j)
                probs.at(i, j) = static_cast<T>(std::exp(static_cast<double>(tl.at(i, j) - mx)) / z);
            loss -= std::log(std::max(static_cast<double>(probs.at(i, label)),
                                      std::numeric_limits<double>::min()));
        }
        loss /= static_cast<double>(tl.n);
        Tensor<T> out(1, 1);
        out.at(0, 0) = static_cast<T>(loss);
        Tensor<T> probs_copy = probs;
        Ref r = push(std::move(out), needs(logits), nullptr);
        if (needs(logits)) {
            nodes_[idx(r)].back = [this, logits, r, labels, probs] {
                const T up = nodes_[idx(r)].grad.at(0, 0);
                auto& gl = grad_buf(logits);
                const T invn = T(1) / static_cast<T>(gl.n);
                for (std::int64_t i = 0; i < gl.n; ++i)
                    for (std::int64_t j = 0; j < gl.m; ++j) {
                        T p = probs.at(i, j);
                        if (j == labels[static_cast<std::size_t>(i)]) p -= T(1);
                        gl.at(i, j) += up * p * invn;
                    }
            };
        }
        return {r, std::move(probs_copy)};
    }

    // q[n,c] -> [n,1] picking column cols[i] per row.
    Ref select_per_row(Ref x, const std::vector<int>& cols) {
        const auto& tx = value(x);
        if (static_cast<std::int64_t>(cols.size()) != tx.n)
            throw InternalError("column selector count mismatch");
        Tensor<T> out(tx.n, 1);
        for (std::int64_t i = 0; i < tx.n; ++i) {
            const int c = cols[static_cast<std::size_t>(i)];
            if (c < 0 || c >= tx.m) throw InternalError("selected column out of range");
            out.at(i, 0) = tx.at(i, c);
        }
        Ref r = push(std::move(out), needs(x), nullptr);
        if (needs(x)) {
            nodes_[idx(r)].back = [this, x, r, cols] {
                const auto& g = nodes_[idx(r)].grad;
                auto& gx = grad_buf(x);
                for (std::int64_t i = 0; i < g.n; ++i)
                    gx.at(i, cols[static_cast<std::size_t>(i)]) += g.at(i, 0);
            };
        }
        return r;
    }

    // Mean squared error of a column vector against fixed targets.
    Ref mse_to(Ref pred, const std::vector<T>& targets) {
        const auto& tp = value(pred);
        if (tp.m != 1 || static_cast<std::size_t>(tp.n) != targets.size())
            throw InternalError("mse_to expects a column vector matching the target count");
        double loss = 0;
        for (std::int64_t i = 0; i < tp.n; ++i) {
            const double d = static_cast<double>(tp.at(i, 0)) - targets[static_cast<std::size_t>(i)];
            loss += d * d;
        }
        loss /= static_cast<double>(tp.n);
        Tensor<T> out(1, 1);
        out.at(0, 0) = static_cast<T>(loss);
        Ref r = push(std::move(out), needs(pred), nullptr);
        if (needs(pred)) {
            nodes_[idx(r)].back = [this, pred, r, targets] {
                const T up = nodes_[idx(r)].grad.at(0, 0);
                const auto& tp2 = value(pred);
                auto& gp = grad_buf(pred);
                const T invn = T(1) / static_cast<T>(tp2.n);
                for (std::int64_t i = 0; i < tp2.n; ++i)
                    gp.at(i, 0) += up * T(2) * (tp2.at(i, 0) - targets[static_cast<std::size_t>(i)]) * invn;
            };
        }
        return r;
    }

    struct LstmRefs {
        Ref w_ih;  // [d, 4h]
        Ref w_hh;  // [h, 4h]
        Ref b;     // [1, 4h]
        std::int64_t hidden = 0;
    };

    // Standard LSTM cell over the rows of xs in order; returns the final
    // hidden state [1,h]. Gate layout [i|f|g|o]. Built from primitives, so
    // backward-through-time falls out of the tape.
    Ref lstm_sequence(Ref xs, const LstmRefs& p) {
        const auto& tx = value(xs);
        if (tx.n < 1) throw InternalError("lstm_sequence needs a non-empty sequence");
        const std::int64_t h = p.hidden;
        Ref hprev = constant(Tensor<T>::zeros(1, h));
        Ref cprev = constant(Tensor<T>::zeros(1, h));
        for (std::int64_t t = 0; t < tx.n; ++t) {
            Ref xt = gather_rows(xs, {static_cast<int>(t)});
            Ref z = add(linear(xt, p.w_ih, p.b), matmul(hprev, p.w_hh));
            Ref ig = sigmoid(slice_cols(z, 0, h));
            Ref fg = sigmoid(slice_cols(z, h, 2 * h));
            Ref gg = tanh_act(slice_cols(z, 2 * h, 3 * h));
            Ref og = sigmoid(slice_cols(z, 3 * h, 4 * h));
            cprev = add(mul(fg, cprev), mul(ig, gg));
            hprev = mul(og, tanh_act(cprev));
        }
        return hprev;
    }

    // All rows of xs through one LSTM step from the zero state: [m,d] -> [m,h].
    // Row i equals lstm_sequence over the single-row sequence {xs[i]}.
    Ref lstm_single_step(Ref xs, const LstmRefs& p) {
        const std::int64_t h = p.hidden;
        Ref z = linear(xs, p.w_ih, p.b);  // h0 = 0, so the recurrent term vanishes
        Ref ig = sigmoid(slice_cols(z, 0, h));
        Ref gg = tanh_act(slice_cols(z, 2 * h, 3 * h));
        Ref og = sigmoid(slice_cols(z, 3 * h, 4 * h));
        Ref c = mul(ig, gg);
        return mul(og, tanh_act(c));
    }

    // Reverse sweep from a scalar node; parameter gradients are added into
    // their stores afterwards.
    void backward(Ref loss) {
        auto& ln = nodes_[idx(loss)];
        if (ln.value.size() != 1) throw InternalError("backward needs a scalar loss");
        grad_buf(loss).v[0] = T(1);
        for (std::int64_t i = loss; i >= 0; --i) {
            Node& node = nodes_[static_cast<std::size_t>(i)];
            if (node.back && node.grad.size() > 0) node.back();
        }
        for (auto& node : nodes_) {
            if (node.param && node.grad.size() > 0)
                for (std::size_t i = 0; i < node.grad.size(); ++i)
                    node.param->grad.v[i] += node.grad.v[i];
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // allocated on first touch
        bool needs_grad = false;
        Param<T>* param = nullptr;
        std::function<void()> back;
    };

    static std::size_t idx(Ref r) { return static_cast<std::size_t>(r); }
    bool needs(Ref r) const { return nodes_[idx(r)].needs_grad; }

    Tensor<T>& grad_buf(Ref r) {
        Node& node = nodes_[idx(r)];
        if (node.grad.size() == 0) node.grad = Tensor<T>::zeros(node.value.n, node.value.m);
        return node.grad;
    }

    static void axpy(Tensor<T>& acc, const Tensor<T>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) acc.v[i] += g.v[i];
    }

    Ref push(Tensor<T> value, bool needs_grad, Param<T>* param) {
        Node node;
        node.value = std::move(value);
        node.needs_grad = needs_grad;
        node.param = param;
        nodes_.push_back(std::move(node));
        return static_cast<Ref>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::unordered_map<Param<T>*, Ref> param_cache_;
};

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

// Central-difference check of an analytic gradient against a scalar function
// of a flat coordinate vector. Relative error uses a unit floor so near-zero
// coordinates compare absolutely.
inline double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x,
                                      const std::vector<double>& analytic_grad, double eps = 1e-5) {
    if (x.size() != analytic_grad.size())
        throw InternalError("gradient length does not match coordinate count");
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double fp = f(x);
        x[i] = orig - eps;
        const double fm = f(x);
        x[i] = orig;
        const double fd = (fp - fm) / (2 * eps);
        const double an = analytic_grad[i];
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1.0});
        worst = std::max(worst, std::fabs(fd - an) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Serialization: versioned flat binary of named float32 matrices.
//   magic "FCPM" | u32 version | u32 count |
//   per entry: u32 name_len | name bytes | u32 rank (always 2) | u64 dims |
//              float32 little-endian values
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "parameter serialization assumes a little-endian host");

inline constexpr char kParamMagic[4] = {'F', 'C', 'P', 'M'};
inline constexpr std::uint32_t kParamVersion = 1;

void save_params_f32(const std::vector<std::pair<std::string, Tensor<float>>>& entries,
                     std::ostream& out);
std::vector<std::pair<std::string, Tensor<float>>> load_params_f32(std::istream& in);

template <typename T>
void save_store(const ParamStore<T>& store, std::ostream& out) {
    std::vector<std::pair<std::string, Tensor<float>>> entries;
    entries.reserve(store.count());
    for (std::size_t i = 0; i < store.count(); ++i) {
        const auto& p = store.at(i);
        Tensor<float> t(p.value.n, p.value.m);
        for (std::size_t j = 0; j < p.value.size(); ++j) t.v[j] = static_cast<float>(p.value.v[j]);
        entries.emplace_back(p.name, std::move(t));
    }
    save_params_f32(entries, out);
}

// Loads values into an already-constructed store; every entry must exist with
// a matching shape.
template <typename T>
void load_store(ParamStore<T>& store, std::istream& in) {
    auto entries = load_params_f32(in);
    if (entries.size() != store.count())
        throw DataError("parameter blob holds " + std::to_string(entries.size()) +
                        " entries, expected " + std::to_string(store.count()));
    for (auto& [name, tensor] : entries) {
        Param<T>& p = store.get(name);
        if (p.value.n != tensor.n || p.value.m != tensor.m)
            throw DataError("parameter " + name + " has shape " + tensor.shape_str() +
                            ", expected " + p.value.shape_str());
        for (std::size_t j = 0; j < tensor.size(); ++j) p.value.v[j] = static_cast<T>(tensor.v[j]);
    }
}

}  // namespace flowcast::nn
