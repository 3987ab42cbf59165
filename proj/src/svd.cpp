// SPDX-License-Identifier: Apache-2.0
#include "loramerge/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "loramerge/errors.hpp"

// The public surface stores float32, but the QR/Jacobi kernels run in double
// so that the factored and materialized SVD routes agree to well below the
// float32 tolerances used by callers.

namespace loramerge {

namespace {

struct DMat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    DMat() = default;
    DMat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    static DMat identity(int n) {
        DMat m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

DMat widen(const Matrix& m) {
    DMat out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i];
    return out;
}

Matrix narrow(const DMat& m) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<float>(m.data[i]);
    return out;
}

DMat dmatmul(const DMat& x, const DMat& y) {
    DMat out(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i) {
        for (int t = 0; t < x.cols; ++t) {
            const double xv = x.at(i, t);
            for (int j = 0; j < y.cols; ++j) {
                out.at(i, j) += xv * y.at(t, j);
            }
        }
    }
    return out;
}

double dfrob(const DMat& m) {
    double acc = 0.0;
    for (double v : m.data) acc += v * v;
    return std::sqrt(acc);
}

// Householder QR; returns thin Q (m x n) and square R (n x n) with a
// non-negative diagonal.
void householder_qr(const DMat& input, DMat& q_out, DMat& r_out) {
    const int m = input.rows, n = input.cols;
    DMat a = input;
    // reflector k is stored in vs[k] (length m - k)
    std::vector<std::vector<double>> vs(static_cast<std::size_t>(n));

    for (int k = 0; k < n; ++k) {
        double norm_x = 0.0;
        for (int i = k; i < m; ++i) norm_x += a.at(i, k) * a.at(i, k);
        norm_x = std::sqrt(norm_x);
        auto& v = vs[static_cast<std::size_t>(k)];
        if (norm_x == 0.0) {
            // column already annihilated: rank-deficient, reflector is identity
            v.clear();
            continue;
        }
        const double alpha = a.at(k, k) >= 0.0 ? -norm_x : norm_x;
        v.assign(static_cast<std::size_t>(m - k), 0.0);
        v[0] = a.at(k, k) - alpha;
        for (int i = k + 1; i < m; ++i) v[static_cast<std::size_t>(i - k)] = a.at(i, k);
        double vnorm = 0.0;
        for (double x : v) vnorm += x * x;
        vnorm = std::sqrt(vnorm);
        if (vnorm == 0.0) {
            v.clear();
            continue;
        }
        for (double& x : v) x /= vnorm;
        // apply H = I - 2 v v^T to the trailing block
        for (int j = k; j < n; ++j) {
            double dot = 0.0;
            for (int i = k; i < m; ++i) dot += v[static_cast<std::size_t>(i - k)] * a.at(i, j);
            dot *= 2.0;
            for (int i = k; i < m; ++i) a.at(i, j) -= dot * v[static_cast<std::size_t>(i - k)];
        }
    }

    r_out = DMat(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) r_out.at(i, j) = a.at(i, j);
    }

    // Q = H_0 ... H_{n-1} applied to the first n columns of I
    q_out = DMat(m, n);
    for (int j = 0; j < n; ++j) q_out.at(j, j) = 1.0;
    for (int k = n - 1; k >= 0; --k) {
        const auto& v = vs[static_cast<std::size_t>(k)];
        if (v.empty()) continue;
        for (int j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int i = k; i < m; ++i) dot += v[static_cast<std::size_t>(i - k)] * q_out.at(i, j);
            dot *= 2.0;
            for (int i = k; i < m; ++i) q_out.at(i, j) -= dot * v[static_cast<std::size_t>(i - k)];
        }
    }

    // make the R diagonal non-negative
    for (int j = 0; j < n; ++j) {
        if (r_out.at(j, j) < 0.0) {
            for (int t = j; t < n; ++t) r_out.at(j, t) = -r_out.at(j, t);
            for (int i = 0; i < m; ++i) q_out.at(i, j) = -q_out.at(i, j);
        }
    }
}

struct JacobiOutcome {
    DMat u;                     // m x n, orthonormal columns
    std::vector<double> sigma;  // n values, descending
    DMat v;                     // n x n, orthonormal
};

constexpr double kJacobiTol = 1e-12;
// squared relative criterion: a pair also counts as converged only once
// |apq|^2 <= 1e-16 * app * aqq, which keeps tiny columns mutually orthogonal
constexpr double kJacobiRelTolSq = 1e-16;
constexpr int kJacobiMaxSweeps = 100;
constexpr double kDegenerateSigma = 1e-18;

// One-sided Jacobi on the columns of an m x n matrix (m >= n). The caller
// passes data scaled to unit Frobenius norm; sigma comes back on that scale.
JacobiOutcome one_sided_jacobi(DMat w) {
    const int m = w.rows, n = w.cols;
    DMat v = DMat::identity(n);

    bool converged = false;
    double max_off = 0.0;
    for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
        max_off = 0.0;
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (int i = 0; i < m; ++i) {
                    const double wp = w.at(i, p), wq = w.at(i, q);
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                max_off = std::max(max_off, std::fabs(apq));
                if (std::fabs(apq) <= kJacobiTol &&
                    apq * apq <= kJacobiRelTolSq * app * aqq) {
                    continue;
                }
                rotated = true;

                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < m; ++i) {
                    const double wp = w.at(i, p), wq = w.at(i, q);
                    w.at(i, p) = c * wp - s * wq;
                    w.at(i, q) = s * wp + c * wq;
                }
                for (int i = 0; i < n; ++i) {
                    const double vp = v.at(i, p), vq = v.at(i, q);
                    v.at(i, p) = c * vp - s * vq;
                    v.at(i, q) = s * vp + c * vq;
                }
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        throw NumericError("jacobi_svd: no convergence after " +
                               std::to_string(kJacobiMaxSweeps) +
                               " sweeps; max off-diagonal " + std::to_string(max_off),
                           max_off);
    }

    JacobiOutcome out;
    out.sigma.assign(static_cast<std::size_t>(n), 0.0);
    out.u = DMat(m, n);
    std::vector<double> norms(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += w.at(i, j) * w.at(i, j);
        norms[static_cast<std::size_t>(j)] = std::sqrt(acc);
    }

    // order columns by descending norm, index ascending on ties
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&norms](int a, int b) {
        return norms[static_cast<std::size_t>(a)] > norms[static_cast<std::size_t>(b)];
    });

    DMat v_sorted(n, n);
    for (int jj = 0; jj < n; ++jj) {
        const int src = order[static_cast<std::size_t>(jj)];
        const double nrm = norms[static_cast<std::size_t>(src)];
        out.sigma[static_cast<std::size_t>(jj)] = nrm;
        for (int i = 0; i < n; ++i) v_sorted.at(i, jj) = v.at(i, src);
        if (nrm > kDegenerateSigma) {
            for (int i = 0; i < m; ++i) out.u.at(i, jj) = w.at(i, src) / nrm;
        }
    }
    out.v = std::move(v_sorted);

    // complete U's basis where sigma vanished (zero columns of w)
    for (int j = 0; j < n; ++j) {
        if (out.sigma[static_cast<std::size_t>(j)] > kDegenerateSigma) continue;
        for (int cand = 0; cand < m; ++cand) {
            std::vector<double> col(static_cast<std::size_t>(m), 0.0);
            col[static_cast<std::size_t>(cand)] = 1.0;
            // two rounds of Gram-Schmidt against the filled columns
            for (int round = 0; round < 2; ++round) {
                for (int t = 0; t < n; ++t) {
                    if (t == j) continue;
                    if (t > j && out.sigma[static_cast<std::size_t>(t)] <= kDegenerateSigma) continue;
                    double dot = 0.0;
                    for (int i = 0; i < m; ++i) dot += col[static_cast<std::size_t>(i)] * out.u.at(i, t);
                    for (int i = 0; i < m; ++i) col[static_cast<std::size_t>(i)] -= dot * out.u.at(i, t);
                }
            }
            double nrm = 0.0;
            for (double x : col) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {
                for (int i = 0; i < m; ++i) out.u.at(i, j) = col[static_cast<std::size_t>(i)] / nrm;
                break;
            }
        }
    }
    return out;
}

// First nonzero component of each v column made non-negative; u flipped to
// compensate, so reported singular vectors are reproducible.
void apply_sign_convention(DMat& u, DMat& v) {
    for (int j = 0; j < v.cols; ++j) {
        double lead = 0.0;
        for (int i = 0; i < v.rows; ++i) {
            if (std::fabs(v.at(i, j)) > 1e-9) {
                lead = v.at(i, j);
                break;
            }
        }
        if (lead < 0.0) {
            for (int i = 0; i < v.rows; ++i) v.at(i, j) = -v.at(i, j);
            for (int i = 0; i < u.rows; ++i) u.at(i, j) = -u.at(i, j);
        }
    }
}

SvdTriple finish(DMat u, std::vector<double> sigma, DMat v, double scale) {
    apply_sign_convention(u, v);
    SvdTriple out;
    out.u = narrow(u);
    out.v = narrow(v);
    out.sigma.resize(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        out.sigma[i] = static_cast<float>(sigma[i] * scale);
    }
    return out;
}

}  // namespace

QrResult thin_qr(const Matrix& m) {
    if (m.rows < m.cols) {
        throw ShapeError("thin_qr: need rows >= cols, got " + std::to_string(m.rows) + "x" +
                         std::to_string(m.cols) + "; transpose the input");
    }
    require_finite(m, "thin_qr");
    DMat q, r;
    householder_qr(widen(m), q, r);
    return {narrow(q), narrow(r)};
}

SvdTriple jacobi_svd(const Matrix& c) {
    if (c.rows != c.cols) {
        throw ShapeError("jacobi_svd: input must be square, got " + std::to_string(c.rows) +
                         "x" + std::to_string(c.cols));
    }
    require_finite(c, "jacobi_svd");
    DMat w = widen(c);
    const double scale = dfrob(w);
    const int q = c.rows;
    if (scale == 0.0) {
        return {Matrix::identity(q), std::vector<float>(static_cast<std::size_t>(q), 0.0f),
                Matrix::identity(q)};
    }
    for (double& x : w.data) x /= scale;
    JacobiOutcome res = one_sided_jacobi(std::move(w));
    return finish(std::move(res.u), std::move(res.sigma), std::move(res.v), scale);
}

SvdTriple lowrank_svd(const std::vector<LowRankTerm>& factors) {
    if (factors.empty()) {
        throw ShapeError("lowrank_svd: factor list is empty");
    }
    const int d_out = factors.front().b.rows;
    const int d_in = factors.front().a.cols;
    int total_rank = 0;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const auto& f = factors[i];
        if (f.b.cols != f.a.rows) {
            throw ShapeError("lowrank_svd: factor " + std::to_string(i) + " has B " +
                             std::to_string(f.b.rows) + "x" + std::to_string(f.b.cols) +
                             " but A " + std::to_string(f.a.rows) + "x" +
                             std::to_string(f.a.cols));
        }
        if (f.b.rows != d_out || f.a.cols != d_in) {
            throw ShapeError("lowrank_svd: factor " + std::to_string(i) +
                             " disagrees on outer dimensions");
        }
        require_finite(f.b, "lowrank_svd");
        require_finite(f.a, "lowrank_svd");
        total_rank += f.b.cols;
    }
    if (total_rank > std::min(d_out, d_in)) {
        throw ShapeError("lowrank_svd: stacked rank " + std::to_string(total_rank) +
                         " exceeds min dimension " + std::to_string(std::min(d_out, d_in)));
    }

    // stack B factors side by side and A^T factors side by side
    DMat b_cat(d_out, total_rank);
    DMat a_cat_t(d_in, total_rank);
    int col = 0;
    for (const auto& f : factors) {
        for (int j = 0; j < f.b.cols; ++j) {
            for (int i = 0; i < d_out; ++i) b_cat.at(i, col + j) = f.b.at(i, j);
            for (int i = 0; i < d_in; ++i) a_cat_t.at(i, col + j) = f.a.at(j, i);
        }
        col += f.b.cols;
    }

    DMat qb, rb, qa, ra;
    householder_qr(b_cat, qb, rb);
    householder_qr(a_cat_t, qa, ra);

    // core = Rb * Ra^T; sum(B_i A_i) = Qb * core * Qa^T
    DMat core(total_rank, total_rank);
    for (int i = 0; i < total_rank; ++i) {
        for (int j = 0; j < total_rank; ++j) {
            double acc = 0.0;
            for (int t = 0; t < total_rank; ++t) acc += rb.at(i, t) * ra.at(j, t);
            core.at(i, j) = acc;
        }
    }

    const double scale = dfrob(core);
    if (scale == 0.0) {
        SvdTriple out;
        out.u = narrow(qb);
        out.v = narrow(qa);
        out.sigma.assign(static_cast<std::size_t>(total_rank), 0.0f);
        return out;
    }
    for (double& x : core.data) x /= scale;
    JacobiOutcome res = one_sided_jacobi(std::move(core));
    return finish(dmatmul(qb, res.u), std::move(res.sigma), dmatmul(qa, res.v), scale);
}

Matrix reconstruct(const SvdTriple& t) {
    std::vector<float> sigma(t.sigma.begin(), t.sigma.end());
    return matmul(scale_columns(t.u, sigma), transpose(t.v));
}

}  // namespace loramerge
