// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace loramerge {

/// Dense row-major float32 matrix; the toolkit's universal numeric carrier.
/// All arithmetic is 32-bit with a fixed accumulation order, so identical
/// inputs give bit-identical results regardless of thread count.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;  // rows*cols entries, row-major

    Matrix() = default;
    Matrix(int r, int c);  // zero-filled

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    const float* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    float* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    std::size_t numel() const { return data.size(); }

    static Matrix identity(int n);
    /// Validates length and finiteness; entry point for external data.
    static Matrix from_data(int rows, int cols, std::vector<float> values);
    static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows);
};

/// Binary keep/prune flags with the shape of the matrix they were derived from.
/// bits[i] == 0 means pruned.
struct Mask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> bits;

    std::size_t zero_count() const;
};

// Shape-checked kernels. All throw ShapeError on mismatched operands.
Matrix matmul(const Matrix& x, const Matrix& y);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& x, const Matrix& y);
Matrix sub(const Matrix& x, const Matrix& y);
Matrix scaled(const Matrix& m, float c);
void accumulate(Matrix& acc, const Matrix& m);  // acc += m, entrywise
/// out[:,j] = m[:,j] * s[j]; s must have one entry per column.
Matrix scale_columns(const Matrix& m, const std::vector<float>& s);

/// Flags the floor(k*numel) entries smallest by (|value|, flat index) as 0.
/// k must lie in [0,1).
Mask magnitude_mask(const Matrix& m, double k);
Matrix apply_mask(const Matrix& m, const Mask& mask);

/// Row-wise sums of absolute values.
std::vector<float> row_l1(const Matrix& m);

float frobenius_norm(const Matrix& m);
/// ||got - want||_F / ||want||_F; falls back to the absolute norm when
/// want is exactly zero.
float relative_frobenius_error(const Matrix& got, const Matrix& want);
bool bit_equal(const Matrix& a, const Matrix& b);

/// Throws NumericError when any entry is NaN or infinite.
void require_finite(const Matrix& m, const std::string& what);

}  // namespace loramerge
