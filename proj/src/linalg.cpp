#include "diffmark/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace diffmark {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
        }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

SymEigen sym_eigen(const Matrix& a, double symmetry_tol) {
    if (a.rows != a.cols) throw std::invalid_argument("sym_eigen: matrix not square");
    const int n = a.rows;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(a.at(i, j) - a.at(j, i)) > symmetry_tol)
                throw std::invalid_argument("sym_eigen: matrix not symmetric within tolerance");

    Matrix m = a;
    // symmetrize so roundoff asymmetry cannot bias the rotations
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = 0.5 * (m.at(i, j) + m.at(j, i));
            m.at(i, j) = v;
            m.at(j, i) = v;
        }

    Matrix v(n, n, 0.0);
    for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
        if (off < 1e-30) break;

        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = m.at(p, q);
                if (apq == 0.0) continue;
                double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double mkp = m.at(k, p), mkq = m.at(k, q);
                    m.at(k, p) = c * mkp - s * mkq;
                    m.at(k, q) = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    double mpk = m.at(p, k), mqk = m.at(q, k);
                    m.at(p, k) = c * mpk - s * mqk;
                    m.at(q, k) = s * mpk + c * mqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
    }

    SymEigen out;
    out.values.resize(n);
    for (int i = 0; i < n; ++i) out.values[i] = m.at(i, i);
    out.vectors = v;
    // sort ascending, permuting eigenvector columns alongside
    for (int i = 0; i < n; ++i) {
        int lo = i;
        for (int j = i + 1; j < n; ++j)
            if (out.values[j] < out.values[lo]) lo = j;
        if (lo != i) {
            std::swap(out.values[i], out.values[lo]);
            for (int k = 0; k < n; ++k) std::swap(out.vectors.at(k, i), out.vectors.at(k, lo));
        }
    }
    return out;
}

Matrix sym_sqrt(const Matrix& a, double symmetry_tol) {
    SymEigen e = sym_eigen(a, symmetry_tol);
    const int n = a.rows;
    Matrix out(n, n, 0.0);
    for (int k = 0; k < n; ++k) {
        double lam = e.values[k] > 0.0 ? std::sqrt(e.values[k]) : 0.0;
        if (lam == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            double vik = e.vectors.at(i, k) * lam;
            if (vik == 0.0) continue;
            for (int j = 0; j < n; ++j) out.at(i, j) += vik * e.vectors.at(j, k);
        }
    }
    return out;
}

}  // namespace diffmark
