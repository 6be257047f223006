#include "fvlab/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fvlab/error.hpp"

namespace fvlab {

namespace {

std::string shape_str(const Tensor& t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape().size(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape()[i]);
    }
    return s + "]";
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    fail(ErrorKind::dimension,
         std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// c[n,m] += a[n,k] @ b[k,m]
void mm_nn(const real* a, const real* b, real* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        real* ci = c + static_cast<size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const real aip = a[static_cast<size_t>(i) * k + p];
            const real* bp = b + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
}

// c[n,m] += a[n,k] @ b[m,k]^T
void mm_nt(const real* a, const real* b, real* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const real* ai = a + static_cast<size_t>(i) * k;
        real* ci = c + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const real* bj = b + static_cast<size_t>(j) * k;
            real acc = 0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// c[k,m] += a[n,k]^T @ b[n,m]
void mm_tn(const real* a, const real* b, real* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const real* ai = a + static_cast<size_t>(i) * k;
        const real* bi = b + static_cast<size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const real aip = ai[p];
            real* cp = c + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) cp[j] += aip * bi[j];
        }
    }
}

real gelu_value(real x) {
    return real(0.5) * x * (real(1) + std::erf(x * real(std::numbers::inv_sqrt2)));
}

real gelu_derivative(real x) {
    const real cdf = real(0.5) * (real(1) + std::erf(x * real(std::numbers::inv_sqrt2)));
    const real pdf = std::exp(real(-0.5) * x * x) / real(std::sqrt(2.0 * std::numbers::pi));
    return cdf + x * pdf;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    const int n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) shape_fail("matmul", a, b);
    Tensor out = Tensor::zeros({n, m});
    mm_nn(a.data().data(), b.data().data(), out.mutable_data().data(), n, k, m);
    if (tape) {
        tape->record(
            [a, b, out, n, k, m](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                mm_nt(dout->data(), b.data().data(), t.adjoint(a).data(), n, m, k);
                mm_tn(a.data().data(), dout->data(), t.adjoint(b).data(), n, k, m);
            },
            {a, b});
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape) {
    const int n = a.rows(), k = a.cols(), m = b.rows();
    if (b.cols() != k) shape_fail("matmul_nt", a, b);
    Tensor out = Tensor::zeros({n, m});
    mm_nt(a.data().data(), b.data().data(), out.mutable_data().data(), n, k, m);
    if (tape) {
        tape->record(
            [a, b, out, n, k, m](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                mm_nn(dout->data(), b.data().data(), t.adjoint(a).data(), n, m, k);
                mm_tn(dout->data(), a.data().data(), t.adjoint(b).data(), n, m, k);
            },
            {a, b});
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape() != b.shape()) shape_fail("add", a, b);
    Tensor out = a.detached();
    auto o = out.mutable_data();
    auto bd = b.data();
    for (size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    if (tape) {
        tape->record(
            [a, b, out](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                auto& db = t.adjoint(b);
                for (size_t i = 0; i < dout->size(); ++i) {
                    da[i] += (*dout)[i];
                    db[i] += (*dout)[i];
                }
            },
            {a, b});
    }
    return out;
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& bias, Tape* tape) {
    const int n = a.rows(), m = a.cols();
    if (static_cast<int>(bias.size()) != m) shape_fail("add_row_broadcast", a, bias);
    Tensor out = a.detached();
    auto o = out.mutable_data();
    auto bd = bias.data();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) o[static_cast<size_t>(i) * m + j] += bd[static_cast<size_t>(j)];
    if (tape) {
        tape->record(
            [a, bias, out, n, m](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                auto& db = t.adjoint(bias);
                for (size_t i = 0; i < dout->size(); ++i) da[i] += (*dout)[i];
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < m; ++j) db[static_cast<size_t>(j)] += (*dout)[static_cast<size_t>(i) * m + j];
            },
            {a, bias});
    }
    return out;
}

Tensor scale(const Tensor& a, real c, Tape* tape) {
    Tensor out = a.detached();
    for (auto& v : out.mutable_data()) v *= c;
    if (tape) {
        tape->record(
            [a, out, c](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                for (size_t i = 0; i < dout->size(); ++i) da[i] += c * (*dout)[i];
            },
            {a});
    }
    return out;
}

Tensor gelu(const Tensor& a, Tape* tape) {
    Tensor out = a.detached();
    for (auto& v : out.mutable_data()) v = gelu_value(v);
    if (tape) {
        tape->record(
            [a, out](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                auto ad = a.data();
                for (size_t i = 0; i < dout->size(); ++i) da[i] += gelu_derivative(ad[i]) * (*dout)[i];
            },
            {a});
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps, Tape* tape) {
    const int n = x.rows(), m = x.cols();
    if (static_cast<int>(gain.size()) != m) shape_fail("layer_norm", x, gain);
    if (static_cast<int>(bias.size()) != m) shape_fail("layer_norm", x, bias);
    Tensor out = Tensor::zeros(x.shape());
    Tensor xhat = Tensor::zeros(x.shape());
    std::vector<real> inv_std(static_cast<size_t>(n));
    auto xd = x.data();
    auto g = gain.data();
    auto b = bias.data();
    auto o = out.mutable_data();
    auto xh = xhat.mutable_data();
    for (int i = 0; i < n; ++i) {
        const real* xi = xd.data() + static_cast<size_t>(i) * m;
        real mu = 0;
        for (int j = 0; j < m; ++j) mu += xi[j];
        mu /= m;
        real var = 0;
        for (int j = 0; j < m; ++j) {
            const real d = xi[j] - mu;
            var += d * d;
        }
        var /= m;
        const real is = real(1) / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(i)] = is;
        for (int j = 0; j < m; ++j) {
            const real h = (xi[j] - mu) * is;
            xh[static_cast<size_t>(i) * m + j] = h;
            o[static_cast<size_t>(i) * m + j] = g[static_cast<size_t>(j)] * h + b[static_cast<size_t>(j)];
        }
    }
    if (tape) {
        tape->record(
            [x, gain, bias, out, xhat, inv_std = std::move(inv_std), n, m](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& dx = t.adjoint(x);
                auto& dg = t.adjoint(gain);
                auto& db = t.adjoint(bias);
                auto g = gain.data();
                auto xh = xhat.data();
                for (int i = 0; i < n; ++i) {
                    const size_t off = static_cast<size_t>(i) * m;
                    real sum_dh = 0, sum_dh_xh = 0;
                    for (int j = 0; j < m; ++j) {
                        const real dh = (*dout)[off + j] * g[static_cast<size_t>(j)];
                        sum_dh += dh;
                        sum_dh_xh += dh * xh[off + j];
                        dg[static_cast<size_t>(j)] += (*dout)[off + j] * xh[off + j];
                        db[static_cast<size_t>(j)] += (*dout)[off + j];
                    }
                    const real is = inv_std[static_cast<size_t>(i)];
                    for (int j = 0; j < m; ++j) {
                        const real dh = (*dout)[off + j] * g[static_cast<size_t>(j)];
                        dx[off + j] += is * (dh - sum_dh / m - xh[off + j] * sum_dh_xh / m);
                    }
                }
            },
            {x, gain, bias});
    }
    return out;
}

namespace {

Tensor softmax_impl(const Tensor& a, bool causal, Tape* tape) {
    const int n = a.rows(), m = a.cols();
    if (causal && n != m) fail(ErrorKind::dimension, "causal_softmax requires a square score matrix");
    Tensor out = Tensor::zeros(a.shape());
    auto ad = a.data();
    auto o = out.mutable_data();
    for (int i = 0; i < n; ++i) {
        const int lim = causal ? i + 1 : m;
        const real* ai = ad.data() + static_cast<size_t>(i) * m;
        real* oi = o.data() + static_cast<size_t>(i) * m;
        real mx = ai[0];
        for (int j = 1; j < lim; ++j) mx = std::max(mx, ai[j]);
        real z = 0;
        for (int j = 0; j < lim; ++j) {
            oi[j] = std::exp(ai[j] - mx);
            z += oi[j];
        }
        for (int j = 0; j < lim; ++j) oi[j] /= z;
    }
    if (tape) {
        tape->record(
            [a, out, n, m, causal](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                auto p = out.data();
                for (int i = 0; i < n; ++i) {
                    const int lim = causal ? i + 1 : m;
                    const size_t off = static_cast<size_t>(i) * m;
                    real dot = 0;
                    for (int j = 0; j < lim; ++j) dot += (*dout)[off + j] * p[off + j];
                    for (int j = 0; j < lim; ++j) da[off + j] += p[off + j] * ((*dout)[off + j] - dot);
                }
            },
            {a});
    }
    return out;
}

}  // namespace

Tensor softmax_rows(const Tensor& a, Tape* tape) { return softmax_impl(a, false, tape); }

Tensor causal_softmax(const Tensor& scores, Tape* tape) { return softmax_impl(scores, true, tape); }

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids, Tape* tape) {
    const int v = table.rows(), d = table.cols();
    const int n = static_cast<int>(ids.size());
    if (n == 0) fail(ErrorKind::contract, "embedding_rows: empty id list");
    Tensor out = Tensor::zeros({n, d});
    auto td = table.data();
    auto o = out.mutable_data();
    for (int i = 0; i < n; ++i) {
        const int id = ids[static_cast<size_t>(i)];
        if (id < 0 || id >= v) fail(ErrorKind::contract, "embedding_rows: id " + std::to_string(id) + " out of range");
        const real* src = td.data() + static_cast<size_t>(id) * d;
        real* dst = o.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] = src[j];
    }
    if (tape) {
        tape->record(
            [table, out, ids, d, n](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& dt = t.adjoint(table);
                for (int i = 0; i < n; ++i) {
                    const size_t src = static_cast<size_t>(i) * d;
                    const size_t dst = static_cast<size_t>(ids[static_cast<size_t>(i)]) * d;
                    for (int j = 0; j < d; ++j) dt[dst + j] += (*dout)[src + j];
                }
            },
            {table});
    }
    return out;
}

Tensor row(const Tensor& a, int i, Tape* tape) {
    const int n = a.rows(), m = a.cols();
    if (i < 0 || i >= n) fail(ErrorKind::dimension, "row index out of range");
    std::vector<real> vals(a.data().begin() + static_cast<size_t>(i) * m,
                           a.data().begin() + static_cast<size_t>(i + 1) * m);
    Tensor out = Tensor::from({1, m}, std::move(vals));
    if (tape) {
        tape->record(
            [a, out, i, m](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                for (int j = 0; j < m; ++j) da[static_cast<size_t>(i) * m + j] += (*dout)[static_cast<size_t>(j)];
            },
            {a});
    }
    return out;
}

Tensor add_at_row(const Tensor& a, const Tensor& v, int i, Tape* tape) {
    const int n = a.rows(), m = a.cols();
    if (i < 0 || i >= n) fail(ErrorKind::dimension, "add_at_row: row index out of range");
    if (static_cast<int>(v.size()) != m) shape_fail("add_at_row", a, v);
    Tensor out = a.detached();
    auto o = out.mutable_data();
    auto vd = v.data();
    for (int j = 0; j < m; ++j) o[static_cast<size_t>(i) * m + j] += vd[static_cast<size_t>(j)];
    if (tape) {
        tape->record(
            [a, v, out, i, m](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                auto& dv = t.adjoint(v);
                for (size_t p = 0; p < dout->size(); ++p) da[p] += (*dout)[p];
                for (int j = 0; j < m; ++j) dv[static_cast<size_t>(j)] += (*dout)[static_cast<size_t>(i) * m + j];
            },
            {a, v});
    }
    return out;
}

Tensor replace_row(const Tensor& a, const Tensor& v, int i, Tape* tape) {
    const int n = a.rows(), m = a.cols();
    if (i < 0 || i >= n) fail(ErrorKind::dimension, "replace_row: row index out of range");
    if (static_cast<int>(v.size()) != m) shape_fail("replace_row", a, v);
    Tensor out = a.detached();
    auto o = out.mutable_data();
    auto vd = v.data();
    for (int j = 0; j < m; ++j) o[static_cast<size_t>(i) * m + j] = vd[static_cast<size_t>(j)];
    if (tape) {
        tape->record(
            [a, v, out, i, m](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                auto& dv = t.adjoint(v);
                const size_t off = static_cast<size_t>(i) * m;
                for (size_t p = 0; p < dout->size(); ++p) {
                    if (p >= off && p < off + static_cast<size_t>(m)) continue;
                    da[p] += (*dout)[p];
                }
                for (int j = 0; j < m; ++j) dv[static_cast<size_t>(j)] += (*dout)[off + j];
            },
            {a, v});
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, Tape* tape) {
    const int n = logits.rows(), v = logits.cols();
    if (static_cast<int>(targets.size()) != n)
        fail(ErrorKind::dimension, "cross_entropy: targets length must match logit rows");
    auto ld = logits.data();
    Tensor probs = Tensor::zeros(logits.shape());
    auto pd = probs.mutable_data();
    real total = 0;
    int used = 0;
    for (int i = 0; i < n; ++i) {
        const int tgt = targets[static_cast<size_t>(i)];
        if (tgt < 0) continue;
        if (tgt >= v) fail(ErrorKind::contract, "cross_entropy: target out of range");
        const real* li = ld.data() + static_cast<size_t>(i) * v;
        real* pi = pd.data() + static_cast<size_t>(i) * v;
        real mx = li[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, li[j]);
        real z = 0;
        for (int j = 0; j < v; ++j) {
            pi[j] = std::exp(li[j] - mx);
            z += pi[j];
        }
        for (int j = 0; j < v; ++j) pi[j] /= z;
        total += std::log(z) + mx - li[tgt];
        ++used;
    }
    if (used == 0) fail(ErrorKind::contract, "cross_entropy: no scored positions");
    Tensor out = Tensor::scalar(total / used);
    if (tape) {
        tape->record(
            [logits, out, probs, targets, n, v, used](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                const real s = (*dout)[0] / used;
                auto& dl = t.adjoint(logits);
                auto p = probs.data();
                for (int i = 0; i < n; ++i) {
                    const int tgt = targets[static_cast<size_t>(i)];
                    if (tgt < 0) continue;
                    const size_t off = static_cast<size_t>(i) * v;
                    for (int j = 0; j < v; ++j) dl[off + j] += s * p[off + j];
                    dl[off + tgt] -= s;
                }
            },
            {logits});
    }
    return out;
}

Tensor l2_norm(const Tensor& a, Tape* tape) {
    real ss = 0;
    for (real v : a.data()) ss += v * v;
    const real norm = std::sqrt(ss);
    Tensor out = Tensor::scalar(norm);
    if (tape) {
        tape->record(
            [a, out, norm](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout || norm == real(0)) return;  // subgradient at 0 taken as 0
                auto& da = t.adjoint(a);
                auto ad = a.data();
                const real s = (*dout)[0] / norm;
                for (size_t i = 0; i < ad.size(); ++i) da[i] += s * ad[i];
            },
            {a});
    }
    return out;
}

Tensor matvec(const Tensor& a, const Tensor& x, Tape* tape) {
    const int n = a.rows(), m = a.cols();
    if (static_cast<int>(x.size()) != m) shape_fail("matvec", a, x);
    Tensor out = Tensor::zeros({n});
    auto ad = a.data();
    auto xd = x.data();
    auto o = out.mutable_data();
    for (int i = 0; i < n; ++i) {
        real acc = 0;
        for (int j = 0; j < m; ++j) acc += ad[static_cast<size_t>(i) * m + j] * xd[static_cast<size_t>(j)];
        o[static_cast<size_t>(i)] = acc;
    }
    if (tape) {
        tape->record(
            [a, x, out, n, m](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& da = t.adjoint(a);
                auto& dx = t.adjoint(x);
                auto ad = a.data();
                auto xd = x.data();
                for (int i = 0; i < n; ++i) {
                    const real dy = (*dout)[static_cast<size_t>(i)];
                    for (int j = 0; j < m; ++j) {
                        da[static_cast<size_t>(i) * m + j] += dy * xd[static_cast<size_t>(j)];
                        dx[static_cast<size_t>(j)] += dy * ad[static_cast<size_t>(i) * m + j];
                    }
                }
            },
            {a, x});
    }
    return out;
}

Tensor vecmat(const Tensor& w, const Tensor& basis, Tape* tape) {
    const int n = basis.rows(), d = basis.cols();
    if (static_cast<int>(w.size()) != n) shape_fail("vecmat", w, basis);
    Tensor out = Tensor::zeros({d});
    auto wd = w.data();
    auto bd = basis.data();
    auto o = out.mutable_data();
    for (int i = 0; i < n; ++i) {
        const real wi = wd[static_cast<size_t>(i)];
        const real* bi = bd.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) o[static_cast<size_t>(j)] += wi * bi[j];
    }
    if (tape) {
        tape->record(
            [w, basis, out, n, d](Tape& t) {
                const auto* dout = t.find_adjoint(out);
                if (!dout) return;
                auto& dw = t.adjoint(w);
                auto& db = t.adjoint(basis);
                auto wd = w.data();
                auto bd = basis.data();
                for (int i = 0; i < n; ++i) {
                    const real* bi = bd.data() + static_cast<size_t>(i) * d;
                    real acc = 0;
                    for (int j = 0; j < d; ++j) {
                        acc += bi[j] * (*dout)[static_cast<size_t>(j)];
                        db[static_cast<size_t>(i) * d + j] += wd[static_cast<size_t>(i)] * (*dout)[static_cast<size_t>(j)];
                    }
                    dw[static_cast<size_t>(i)] += acc;
                }
            },
            {w, basis});
    }
    return out;
}

}  // namespace fvlab
