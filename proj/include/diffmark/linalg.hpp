#pragma once

#include <vector>

namespace diffmark {

// Minimal dense row-major matrix, just enough for the metric kernels.
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

struct SymEigen {
    std::vector<double> values;  // ascending
    Matrix vectors;              // columns are eigenvectors
};

// Cyclic Jacobi eigendecomposition for symmetric matrices. Input symmetry is
// checked against `symmetry_tol` (infinity disables the check).
SymEigen sym_eigen(const Matrix& a, double symmetry_tol);

// Symmetric PSD square root via eigendecomposition; negative eigenvalues are
// clipped at zero.
Matrix sym_sqrt(const Matrix& a, double symmetry_tol);

}  // namespace diffmark
