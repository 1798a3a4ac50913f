// SPDX-License-Identifier: Apache-2.0
#include "oatok/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oatok/common.hpp"
#include "oatok/nn/kernels.hpp"

namespace oatok::nn {
namespace {

void require(bool cond, const char* what) {
    if (!cond) throw ShapeError(what);
}

constexpr float kLnEps = 1e-5f;
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2 / pi)

// Rational minimax tanh, |error| < 4e-7 on the whole line. libm tanhf was
// the single largest cost of a training step.
inline float fast_tanh(float v) {
    const float x = v > 9.0f ? 9.0f : (v < -9.0f ? -9.0f : v);
    const float x2 = x * x;
    float p = -2.76076847742355e-16f;
    p = p * x2 + 2.00018790482477e-13f;
    p = p * x2 + -8.60467152213735e-11f;
    p = p * x2 + 5.12229709037114e-08f;
    p = p * x2 + 1.48572235717979e-05f;
    p = p * x2 + 6.37261928875436e-04f;
    p = p * x2 + 4.89352455891786e-03f;
    float q = 1.19825839466702e-06f;
    q = q * x2 + 1.18534705686654e-04f;
    q = q * x2 + 2.26843463243900e-03f;
    q = q * x2 + 4.89352518554385e-03f;
    return x * p / q;
}

}  // namespace

AttentionMask AttentionMask::causal(std::size_t n) {
    AttentionMask m(n, n, false);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
    }
    return m;
}

Var Graph::push(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = record_grad_ && requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor& Graph::grad(Var v) {
    Node& n = node(v);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows, n.value.cols);
    return n.grad;
}

Var Graph::constant(Tensor t) { return push(std::move(t), false); }

Var Graph::param(ParameterStore& store, ParamId id) {
    const Var out = push(store[id].value, store[id].trainable);
    if (needs(out)) {
        node(out).store = &store;
        node(out).pid = id;
        node(out).back = [out](Graph& g) {
            const Node& n = g.node(out);
            auto& dst = n.store->operator[](n.pid).grad.data;
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad.data[i];
        };
    }
    return out;
}

Var Graph::matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.cols == B.rows, "matmul: inner dimensions differ");
    Tensor C(A.rows, B.cols);
    kernels::gemm_nn(A.rows, A.cols, B.cols, A.data.data(), B.data.data(), C.data.data());
    const Var out = push(std::move(C), requires_grad(a) || requires_grad(b));
    if (needs(out)) {
        node(out).back = [a, b, out](Graph& g) {
            const Tensor& dC = g.node(out).grad;
            const Tensor& A = g.value(a);
            const Tensor& B = g.value(b);
            if (g.needs(a)) kernels::gemm_nt(dC.rows, dC.cols, A.cols, dC.data.data(), B.data.data(), g.grad(a).data.data());
            if (g.needs(b)) kernels::gemm_tn(A.rows, A.cols, B.cols, A.data.data(), dC.data.data(), g.grad(b).data.data());
        };
    }
    return out;
}

Var Graph::linear(Var x, Var w, Var b) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    const Tensor& Bv = value(b);
    require(X.cols == W.rows, "linear: input width does not match weight rows");
    require(Bv.rows == 1 && Bv.cols == W.cols, "linear: bias must be 1 x out");
    Tensor Y(X.rows, W.cols);
    for (std::size_t i = 0; i < Y.rows; ++i) std::copy(Bv.data.begin(), Bv.data.end(), Y.row(i));
    kernels::gemm_nn(X.rows, X.cols, W.cols, X.data.data(), W.data.data(), Y.data.data());
    const Var out = push(std::move(Y), requires_grad(x) || requires_grad(w) || requires_grad(b));
    if (needs(out)) {
        node(out).back = [x, w, b, out](Graph& g) {
            const Tensor& dY = g.node(out).grad;
            const Tensor& X = g.value(x);
            const Tensor& W = g.value(w);
            if (g.needs(x)) kernels::gemm_nt(dY.rows, dY.cols, W.rows, dY.data.data(), W.data.data(), g.grad(x).data.data());
            if (g.needs(w)) kernels::gemm_tn(X.rows, X.cols, W.cols, X.data.data(), dY.data.data(), g.grad(w).data.data());
            if (g.needs(b)) {
                Tensor& db = g.grad(b);
                for (std::size_t i = 0; i < dY.rows; ++i) {
                    const float* r = dY.row(i);
                    for (std::size_t j = 0; j < dY.cols; ++j) db.data[j] += r[j];
                }
            }
        };
    }
    return out;
}

Var Graph::add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.same_shape(B), "add: shapes differ");
    Tensor C = A;
    for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] += B.data[i];
    const Var out = push(std::move(C), requires_grad(a) || requires_grad(b));
    if (needs(out)) {
        node(out).back = [a, b, out](Graph& g) {
            const Tensor& d = g.node(out).grad;
            for (Var v : {a, b}) {
                if (!g.needs(v)) continue;
                Tensor& dv = g.grad(v);
                for (std::size_t i = 0; i < d.data.size(); ++i) dv.data[i] += d.data[i];
            }
        };
    }
    return out;
}

Var Graph::add_tiled(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.cols == B.cols && B.rows > 0 && A.rows % B.rows == 0, "add_tiled: incompatible shapes");
    Tensor C = A;
    for (std::size_t i = 0; i < C.rows; ++i) {
        const float* r = B.row(i % B.rows);
        float* c = C.row(i);
        for (std::size_t j = 0; j < C.cols; ++j) c[j] += r[j];
    }
    const Var out = push(std::move(C), requires_grad(a) || requires_grad(b));
    if (needs(out)) {
        node(out).back = [a, b, out](Graph& g) {
            const Tensor& d = g.node(out).grad;
            if (g.needs(a)) {
                Tensor& da = g.grad(a);
                for (std::size_t i = 0; i < d.data.size(); ++i) da.data[i] += d.data[i];
            }
            if (g.needs(b)) {
                Tensor& db = g.grad(b);
                for (std::size_t i = 0; i < d.rows; ++i) {
                    float* r = db.row(i % db.rows);
                    const float* s = d.row(i);
                    for (std::size_t j = 0; j < d.cols; ++j) r[j] += s[j];
                }
            }
        };
    }
    return out;
}

Var Graph::add_repeated(Var a, Var b, std::size_t group) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(group > 0 && A.cols == B.cols && A.rows == B.rows * group, "add_repeated: incompatible shapes");
    Tensor C = A;
    for (std::size_t i = 0; i < C.rows; ++i) {
        const float* r = B.row(i / group);
        float* c = C.row(i);
        for (std::size_t j = 0; j < C.cols; ++j) c[j] += r[j];
    }
    const Var out = push(std::move(C), requires_grad(a) || requires_grad(b));
    if (needs(out)) {
        node(out).back = [a, b, group, out](Graph& g) {
            const Tensor& d = g.node(out).grad;
            if (g.needs(a)) {
                Tensor& da = g.grad(a);
                for (std::size_t i = 0; i < d.data.size(); ++i) da.data[i] += d.data[i];
            }
            if (g.needs(b)) {
                Tensor& db = g.grad(b);
                for (std::size_t i = 0; i < d.rows; ++i) {
                    float* r = db.row(i / group);
                    const float* s = d.row(i);
                    for (std::size_t j = 0; j < d.cols; ++j) r[j] += s[j];
                }
            }
        };
    }
    return out;
}

Var Graph::scale(Var a, float s) {
    Tensor C = value(a);
    for (auto& v : C.data) v *= s;
    const Var out = push(std::move(C), requires_grad(a));
    if (needs(out)) {
        node(out).back = [a, s, out](Graph& g) {
            const Tensor& d = g.node(out).grad;
            Tensor& da = g.grad(a);
            for (std::size_t i = 0; i < d.data.size(); ++i) da.data[i] += s * d.data[i];
        };
    }
    return out;
}

Var Graph::gelu(Var x) {
    Tensor Y = value(x);
    std::vector<float> th(Y.data.size());
    for (std::size_t i = 0; i < Y.data.size(); ++i) {
        const float v = Y.data[i];
        th[i] = fast_tanh(kGeluC * (v + 0.044715f * v * v * v));
        Y.data[i] = 0.5f * v * (1.0f + th[i]);
    }
    const Var out = push(std::move(Y), requires_grad(x));
    if (needs(out)) {
        node(out).back = [x, out, th = std::move(th)](Graph& g) {
            const Tensor& d = g.node(out).grad;
            const Tensor& X = g.value(x);
            Tensor& dx = g.grad(x);
            for (std::size_t i = 0; i < X.data.size(); ++i) {
                const float v = X.data[i];
                const float t = th[i];
                const float du = kGeluC * (1.0f + 3.0f * 0.044715f * v * v);
                dx.data[i] += d.data[i] * (0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du);
            }
        };
    }
    return out;
}

Var Graph::layer_norm(Var x, Var gain, Var bias) {
    const Tensor& X = value(x);
    const Tensor& G = value(gain);
    const Tensor& Bv = value(bias);
    require(G.rows == 1 && G.cols == X.cols && Bv.same_shape(G), "layer_norm: gain/bias must be 1 x cols");
    const std::size_t n = X.cols;
    Tensor Y(X.rows, n);
    std::vector<float> rstd(X.rows);
    Tensor xhat(X.rows, n);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const float* r = X.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += r[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= static_cast<double>(n);
        const float rs = static_cast<float>(1.0 / std::sqrt(var + kLnEps));
        rstd[i] = rs;
        float* h = xhat.row(i);
        float* y = Y.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            h[j] = static_cast<float>(r[j] - mean) * rs;
            y[j] = h[j] * G.data[j] + Bv.data[j];
        }
    }
    const Var out = push(std::move(Y), requires_grad(x) || requires_grad(gain) || requires_grad(bias));
    if (needs(out)) {
        node(out).back = [x, gain, bias, out, rstd = std::move(rstd), xhat = std::move(xhat)](Graph& g) {
            const Tensor& dY = g.node(out).grad;
            const Tensor& G = g.value(gain);
            const std::size_t n = dY.cols;
            if (g.needs(gain) || g.needs(bias)) {
                Tensor& dg = g.grad(gain);
                Tensor& db = g.grad(bias);
                for (std::size_t i = 0; i < dY.rows; ++i) {
                    const float* d = dY.row(i);
                    const float* h = xhat.row(i);
                    for (std::size_t j = 0; j < n; ++j) {
                        dg.data[j] += d[j] * h[j];
                        db.data[j] += d[j];
                    }
                }
            }
            if (g.needs(x)) {
                Tensor& dx = g.grad(x);
                std::vector<float> dh(n);
                for (std::size_t i = 0; i < dY.rows; ++i) {
                    const float* d = dY.row(i);
                    const float* h = xhat.row(i);
                    float mean_dh = 0.0f;
                    float mean_dh_h = 0.0f;
                    for (std::size_t j = 0; j < n; ++j) {
                        dh[j] = d[j] * G.data[j];
                        mean_dh += dh[j];
                        mean_dh_h += dh[j] * h[j];
                    }
                    mean_dh /= static_cast<float>(n);
                    mean_dh_h /= static_cast<float>(n);
                    float* o = dx.row(i);
                    for (std::size_t j = 0; j < n; ++j) o[j] += rstd[i] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                }
            }
        };
    }
    return out;
}

Var Graph::attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads, const AttentionMask& mask) {
    const Tensor& Q = value(q);
    const Tensor& K = value(k);
    const Tensor& V = value(v);
    require(batch > 0 && heads > 0, "attention: batch and heads must be positive");
    require(Q.cols == K.cols && K.same_shape(V), "attention: q/k/v widths differ");
    require(Q.cols % heads == 0, "attention: width not divisible by heads");
    require(Q.rows % batch == 0 && K.rows % batch == 0, "attention: rows not divisible by batch");
    const std::size_t sq = Q.rows / batch;
    const std::size_t sk = K.rows / batch;
    const bool masked = !mask.allowed.empty();
    require(!masked || (mask.q_len == sq && mask.k_len == sk), "attention: mask shape mismatch");
    const std::size_t hd = Q.cols / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    const auto& kt = kernels::active();

    std::vector<float> probs(batch * heads * sq * sk, 0.0f);
    Tensor O(Q.rows, Q.cols);
    std::vector<float> s(sk);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < sq; ++i) {
                const float* qi = Q.row(b * sq + i) + h * hd;
                float mx = -std::numeric_limits<float>::infinity();
                for (std::size_t j = 0; j < sk; ++j) {
                    if (masked && !mask(i, j)) continue;
                    s[j] = kt.dot(qi, K.row(b * sk + j) + h * hd, hd) * scale;
                    mx = std::max(mx, s[j]);
                }
                float* p = probs.data() + ((b * heads + h) * sq + i) * sk;
                if (mx == -std::numeric_limits<float>::infinity()) continue;  // fully masked row: zero output
                float sum = 0.0f;
                for (std::size_t j = 0; j < sk; ++j) {
                    if (masked && !mask(i, j)) continue;
                    p[j] = std::exp(s[j] - mx);
                    sum += p[j];
                }
                const float inv = 1.0f / sum;
                float* oi = O.row(b * sq + i) + h * hd;
                for (std::size_t j = 0; j < sk; ++j) {
                    if (p[j] == 0.0f) continue;
                    p[j] *= inv;
                    kt.axpy(p[j], V.row(b * sk + j) + h * hd, oi, hd);
                }
            }
        }
    }
    const Var out = push(std::move(O), requires_grad(q) || requires_grad(k) || requires_grad(v));
    if (needs(out)) {
        node(out).back = [q, k, v, out, batch, heads, sq, sk, hd, scale, probs = std::move(probs)](Graph& g) {
            const auto& kt = kernels::active();
            const Tensor& dO = g.node(out).grad;
            const Tensor& Q = g.value(q);
            const Tensor& K = g.value(k);
            const Tensor& V = g.value(v);
            Tensor* dQ = g.needs(q) ? &g.grad(q) : nullptr;
            Tensor* dK = g.needs(k) ? &g.grad(k) : nullptr;
            Tensor* dV = g.needs(v) ? &g.grad(v) : nullptr;
            std::vector<float> dp(sk);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    for (std::size_t i = 0; i < sq; ++i) {
                        const float* p = probs.data() + ((b * heads + h) * sq + i) * sk;
                        const float* doi = dO.row(b * sq + i) + h * hd;
                        float total = 0.0f;
                        for (std::size_t j = 0; j < sk; ++j) {
                            if (p[j] == 0.0f) {
                                dp[j] = 0.0f;
                                continue;
                            }
                            dp[j] = kt.dot(doi, V.row(b * sk + j) + h * hd, hd);
                            total += p[j] * dp[j];
                            if (dV) kt.axpy(p[j], doi, dV->row(b * sk + j) + h * hd, hd);
                        }
                        const float* qi = Q.row(b * sq + i) + h * hd;
                        for (std::size_t j = 0; j < sk; ++j) {
                            if (p[j] == 0.0f) continue;
                            const float ds = p[j] * (dp[j] - total) * scale;
                            if (dQ) kt.axpy(ds, K.row(b * sk + j) + h * hd, dQ->row(b * sq + i) + h * hd, hd);
                            if (dK) kt.axpy(ds, qi, dK->row(b * sk + j) + h * hd, hd);
                        }
                    }
                }
            }
        };
    }
    return out;
}

Var Graph::concat_rows(Var a, Var b, std::size_t batch) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(batch > 0 && A.cols == B.cols && A.rows % batch == 0 && B.rows % batch == 0,
            "concat_rows: incompatible shapes");
    const std::size_t sa = A.rows / batch;
    const std::size_t sb = B.rows / batch;
    Tensor C((sa + sb) * batch, A.cols);
    for (std::size_t s = 0; s < batch; ++s) {
        std::copy(A.row(s * sa), A.row(s * sa) + sa * A.cols, C.row(s * (sa + sb)));
        std::copy(B.row(s * sb), B.row(s * sb) + sb * B.cols, C.row(s * (sa + sb) + sa));
    }
    const Var out = push(std::move(C), requires_grad(a) || requires_grad(b));
    if (needs(out)) {
        node(out).back = [a, b, batch, sa, sb, out](Graph& g) {
            const Tensor& d = g.node(out).grad;
            const std::size_t cols = d.cols;
            for (std::size_t s = 0; s < batch; ++s) {
                if (g.needs(a)) {
                    float* dst = g.grad(a).row(s * sa);
                    const float* src = d.row(s * (sa + sb));
                    for (std::size_t i = 0; i < sa * cols; ++i) dst[i] += src[i];
                }
                if (g.needs(b)) {
                    float* dst = g.grad(b).row(s * sb);
                    const float* src = d.row(s * (sa + sb) + sa);
                    for (std::size_t i = 0; i < sb * cols; ++i) dst[i] += src[i];
                }
            }
        };
    }
    return out;
}

Var Graph::slice_rows(Var x, std::size_t batch, std::size_t seq, std::size_t begin, std::size_t count) {
    const Tensor& X = value(x);
    require(X.rows == batch * seq && begin + count <= seq, "slice_rows: out of range");
    Tensor Y(batch * count, X.cols);
    for (std::size_t s = 0; s < batch; ++s) {
        std::copy(X.row(s * seq + begin), X.row(s * seq + begin) + count * X.cols, Y.row(s * count));
    }
    const Var out = push(std::move(Y), requires_grad(x));
    if (needs(out)) {
        node(out).back = [x, batch, seq, begin, count, out](Graph& g) {
            const Tensor& d = g.node(out).grad;
            Tensor& dx = g.grad(x);
            for (std::size_t s = 0; s < batch; ++s) {
                float* dst = dx.row(s * seq + begin);
                const float* src = d.row(s * count);
                for (std::size_t i = 0; i < count * d.cols; ++i) dst[i] += src[i];
            }
        };
    }
    return out;
}

Var Graph::replace_rows(Var x, Var fill, std::span<const std::uint8_t> keep) {
    const Tensor& X = value(x);
    const Tensor& F = value(fill);
    require(F.rows == 1 && F.cols == X.cols && keep.size() == X.rows, "replace_rows: incompatible shapes");
    Tensor Y = X;
    for (std::size_t i = 0; i < X.rows; ++i) {
        if (!keep[i]) std::copy(F.data.begin(), F.data.end(), Y.row(i));
    }
    const Var out = push(std::move(Y), requires_grad(x) || requires_grad(fill));
    if (needs(out)) {
        node(out).back = [x, fill, out, keep = std::vector<std::uint8_t>(keep.begin(), keep.end())](Graph& g) {
            const Tensor& d = g.node(out).grad;
            for (std::size_t i = 0; i < d.rows; ++i) {
                const Var target = keep[i] ? x : fill;
                if (!g.needs(target)) continue;
                float* dst = keep[i] ? g.grad(x).row(i) : g.grad(fill).row(0);
                const float* src = d.row(i);
                for (std::size_t j = 0; j < d.cols; ++j) dst[j] += src[j];
            }
        };
    }
    return out;
}

Var Graph::gather_rows(Var table, std::span<const std::int32_t> ids) {
    const Tensor& T = value(table);
    Tensor Y(ids.size(), T.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= T.rows) {
            throw BoundsError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(T.rows));
        }
        std::copy(T.row(static_cast<std::size_t>(ids[i])), T.row(static_cast<std::size_t>(ids[i])) + T.cols, Y.row(i));
    }
    const Var out = push(std::move(Y), requires_grad(table));
    if (needs(out)) {
        node(out).back = [table, out, ids = std::vector<std::int32_t>(ids.begin(), ids.end())](Graph& g) {
            const Tensor& d = g.node(out).grad;
            Tensor& dt = g.grad(table);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                float* dst = dt.row(static_cast<std::size_t>(ids[i]));
                const float* src = d.row(i);
                for (std::size_t j = 0; j < d.cols; ++j) dst[j] += src[j];
            }
        };
    }
    return out;
}

Var Graph::fsq_ste(Var z, const fsq::FsqLevels& levels, std::vector<fsq::FsqCode>* codes) {
    const Tensor& Z = value(z);
    require(Z.cols == levels.dims(), "fsq_ste: latent width does not match levels");
    Tensor E(Z.rows, Z.cols);
    Tensor slope(Z.rows, Z.cols);
    if (codes) codes->clear();
    std::vector<double> row(Z.cols);
    for (std::size_t i = 0; i < Z.rows; ++i) {
        for (std::size_t c = 0; c < Z.cols; ++c) row[c] = Z.at(i, c);
        const auto qz = fsq::fsq_quantize(row, levels);
        for (std::size_t c = 0; c < Z.cols; ++c) {
            E.at(i, c) = static_cast<float>(qz.ste_value[c]);
            slope.at(i, c) = static_cast<float>(qz.ste_grad[c]);
        }
        if (codes) codes->push_back(qz.code);
    }
    const Var out = push(std::move(E), requires_grad(z));
    if (needs(out)) {
        node(out).back = [z, out, slope = std::move(slope)](Graph& g) {
            const Tensor& d = g.node(out).grad;
            Tensor& dz = g.grad(z);
            for (std::size_t i = 0; i < d.data.size(); ++i) dz.data[i] += d.data[i] * slope.data[i];
        };
    }
    return out;
}

Var Graph::mse_loss(Var pred, const Tensor& target) {
    const Tensor& P = value(pred);
    require(P.same_shape(target), "mse_loss: shapes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < P.data.size(); ++i) {
        const double d = static_cast<double>(P.data[i]) - target.data[i];
        acc += d * d;
    }
    Tensor L(1, 1, static_cast<float>(acc / static_cast<double>(P.data.size())));
    const Var out = push(std::move(L), requires_grad(pred));
    if (needs(out)) {
        node(out).back = [pred, out, target](Graph& g) {
            const float up = g.node(out).grad.data[0];
            const Tensor& P = g.value(pred);
            Tensor& dp = g.grad(pred);
            const float k = 2.0f * up / static_cast<float>(P.data.size());
            for (std::size_t i = 0; i < P.data.size(); ++i) dp.data[i] += k * (P.data[i] - target.data[i]);
        };
    }
    return out;
}

Var Graph::cross_entropy(Var logits, std::span<const std::int32_t> targets, std::span<const float> weights) {
    const Tensor& X = value(logits);
    require(targets.size() == X.rows && weights.size() == X.rows, "cross_entropy: one target per row");
    Tensor probs(X.rows, X.cols);
    double loss = 0.0;
    double wsum = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) {
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= X.cols) {
            throw BoundsError("cross_entropy: target outside vocabulary");
        }
        const float* r = X.row(i);
        const float mx = *std::max_element(r, r + X.cols);
        double sum = 0.0;
        float* p = probs.row(i);
        for (std::size_t j = 0; j < X.cols; ++j) {
            p[j] = std::exp(r[j] - mx);
            sum += p[j];
        }
        for (std::size_t j = 0; j < X.cols; ++j) p[j] = static_cast<float>(p[j] / sum);
        if (weights[i] != 0.0f) {
            loss += weights[i] * (std::log(sum) + mx - r[targets[i]]);
            wsum += weights[i];
        }
    }
    if (wsum <= 0.0) throw InvalidInputError("cross_entropy: all weights are zero");
    Tensor L(1, 1, static_cast<float>(loss / wsum));
    const Var out = push(std::move(L), requires_grad(logits));
    if (needs(out)) {
        node(out).back = [logits, out, wsum, probs = std::move(probs),
                          t = std::vector<std::int32_t>(targets.begin(), targets.end()),
                          w = std::vector<float>(weights.begin(), weights.end())](Graph& g) {
            const float up = g.node(out).grad.data[0];
            Tensor& dx = g.grad(logits);
            for (std::size_t i = 0; i < probs.rows; ++i) {
                if (w[i] == 0.0f) continue;
                const float k = up * w[i] / static_cast<float>(wsum);
                const float* p = probs.row(i);
                float* d = dx.row(i);
                for (std::size_t j = 0; j < probs.cols; ++j) d[j] += k * p[j];
                d[t[i]] -= k;
            }
        };
    }
    return out;
}

void Graph::backward(Var loss) {
    if (!record_grad_) throw StateError("backward on an inference graph");
    const Tensor& L = value(loss);
    require(L.rows == 1 && L.cols == 1, "backward: loss must be a scalar");
    grad(loss).data[0] = 1.0f;
    for (std::size_t i = static_cast<std::size_t>(loss.id) + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.back || n.grad.empty()) continue;
        n.back(*this);
    }
}

}  // namespace oatok::nn
