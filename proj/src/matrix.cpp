// SPDX-License-Identifier: Apache-2.0
#include "loramerge/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "loramerge/errors.hpp"

namespace loramerge {

namespace {

std::string shape_str(int rows, int cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

void require_positive_dims(int rows, int cols, const char* what) {
    if (rows <= 0 || cols <= 0) {
        throw ShapeError(std::string(what) + ": dimensions must be positive, got " +
                         shape_str(rows, cols));
    }
}

void require_same_shape(const Matrix& x, const Matrix& y, const char* what) {
    if (x.rows != y.rows || x.cols != y.cols) {
        throw ShapeError(std::string(what) + ": shapes disagree: " +
                         shape_str(x.rows, x.cols) + " vs " + shape_str(y.rows, y.cols));
    }
}

}  // namespace

Matrix::Matrix(int r, int c) : rows(r), cols(c) {
    require_positive_dims(r, c, "Matrix");
    data.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0f);
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0f;
    return m;
}

Matrix Matrix::from_data(int rows, int cols, std::vector<float> values) {
    require_positive_dims(rows, cols, "Matrix::from_data");
    if (values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
        throw ShapeError("Matrix::from_data: expected " +
                         std::to_string(static_cast<std::size_t>(rows) * cols) +
                         " values for shape " + shape_str(rows, cols) + ", got " +
                         std::to_string(values.size()));
    }
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.data = std::move(values);
    require_finite(m, "Matrix::from_data");
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    std::vector<float> values;
    int nrows = static_cast<int>(rows.size());
    int ncols = nrows > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != ncols) {
            throw ShapeError("Matrix::from_rows: ragged row lengths");
        }
        values.insert(values.end(), r.begin(), r.end());
    }
    return from_data(nrows, ncols, std::move(values));
}

std::size_t Mask::zero_count() const {
    std::size_t zeros = 0;
    for (std::uint8_t b : bits) zeros += (b == 0);
    return zeros;
}

Matrix matmul(const Matrix& x, const Matrix& y) {
    if (x.cols != y.rows) {
        throw ShapeError("matmul: inner dimensions disagree: left is " +
                         shape_str(x.rows, x.cols) + ", right is " +
                         shape_str(y.rows, y.cols));
    }
    Matrix out(x.rows, y.cols);
    const int m = x.rows, k = x.cols, n = y.cols;
    // i-k-j order: per output entry the k-sum runs in ascending order, which
    // keeps results identical under vectorization.
    for (int i = 0; i < m; ++i) {
        const float* xr = x.row(i);
        float* outr = out.row(i);
        for (int t = 0; t < k; ++t) {
            const float xv = xr[t];
            const float* yr = y.row(t);
            for (int j = 0; j < n; ++j) {
                outr[j] += xv * yr[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) {
            out.at(j, i) = m.at(i, j);
        }
    }
    return out;
}

Matrix add(const Matrix& x, const Matrix& y) {
    require_same_shape(x, y, "add");
    Matrix out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += y.data[i];
    return out;
}

Matrix sub(const Matrix& x, const Matrix& y) {
    require_same_shape(x, y, "sub");
    Matrix out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= y.data[i];
    return out;
}

Matrix scaled(const Matrix& m, float c) {
    Matrix out = m;
    for (float& v : out.data) v *= c;
    return out;
}

void accumulate(Matrix& acc, const Matrix& m) {
    require_same_shape(acc, m, "accumulate");
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += m.data[i];
}

Matrix scale_columns(const Matrix& m, const std::vector<float>& s) {
    if (s.size() != static_cast<std::size_t>(m.cols)) {
        throw ShapeError("scale_columns: " + std::to_string(s.size()) +
                         " factors for " + std::to_string(m.cols) + " columns");
    }
    Matrix out = m;
    for (int i = 0; i < m.rows; ++i) {
        float* r = out.row(i);
        for (int j = 0; j < m.cols; ++j) r[j] *= s[j];
    }
    return out;
}

Mask magnitude_mask(const Matrix& m, double k) {
    if (!(k >= 0.0 && k < 1.0)) {
        throw ParameterError("magnitude_mask: pruning rate must lie in [0,1), got " +
                             std::to_string(k));
    }
    require_finite(m, "magnitude_mask");
    const std::size_t n = m.numel();
    // The 1e-9 nudge keeps floor() exact for rates like 1/3 whose binary
    // representation lands a hair under the true product.
    const auto pruned = static_cast<std::size_t>(std::floor(k * static_cast<double>(n) + 1e-9));
    Mask mask{m.rows, m.cols, std::vector<std::uint8_t>(n, 1)};
    if (pruned == 0) return mask;

    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    // Total order (|value|, flat index): ties always resolve the same way.
    auto cmp = [&m](std::uint32_t a, std::uint32_t b) {
        const float fa = std::fabs(m.data[a]);
        const float fb = std::fabs(m.data[b]);
        if (fa != fb) return fa < fb;
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(pruned),
                     idx.end(), cmp);
    for (std::size_t i = 0; i < pruned; ++i) mask.bits[idx[i]] = 0;
    return mask;
}

Matrix apply_mask(const Matrix& m, const Mask& mask) {
    if (m.rows != mask.rows || m.cols != mask.cols) {
        throw ShapeError("apply_mask: matrix is " + shape_str(m.rows, m.cols) +
                         ", mask is " + shape_str(mask.rows, mask.cols));
    }
    Matrix out = m;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = mask.bits[i] ? out.data[i] : 0.0f;
    }
    return out;
}

std::vector<float> row_l1(const Matrix& m) {
    std::vector<float> sums(static_cast<std::size_t>(m.rows), 0.0f);
    for (int i = 0; i < m.rows; ++i) {
        const float* r = m.row(i);
        float acc = 0.0f;
        for (int j = 0; j < m.cols; ++j) acc += std::fabs(r[j]);
        sums[static_cast<std::size_t>(i)] = acc;
    }
    return sums;
}

float frobenius_norm(const Matrix& m) {
    // accumulate in double: norms feed tolerances, not the merge arithmetic
    double acc = 0.0;
    for (float v : m.data) acc += static_cast<double>(v) * static_cast<double>(v);
    return static_cast<float>(std::sqrt(acc));
}

float relative_frobenius_error(const Matrix& got, const Matrix& want) {
    require_same_shape(got, want, "relative_frobenius_error");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i) {
        const double d = static_cast<double>(got.data[i]) - static_cast<double>(want.data[i]);
        num += d * d;
        den += static_cast<double>(want.data[i]) * static_cast<double>(want.data[i]);
    }
    if (den == 0.0) return static_cast<float>(std::sqrt(num));
    return static_cast<float>(std::sqrt(num / den));
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

void require_finite(const Matrix& m, const std::string& what) {
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (!std::isfinite(m.data[i])) {
            throw NumericError(what + ": non-finite value at row " +
                               std::to_string(i / static_cast<std::size_t>(m.cols)) +
                               ", col " + std::to_string(i % static_cast<std::size_t>(m.cols)));
        }
    }
}

}  // namespace loramerge
