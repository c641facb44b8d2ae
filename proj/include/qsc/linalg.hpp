#pragma once

#include <complex>
#include <vector>

namespace qsc {

using cplx = std::complex<double>;

/// Row-major dense complex matrix, sized at construction.
struct CMatrix {
    int n = 0, m = 0;
    std::vector<cplx> a;
    CMatrix() = default;
    CMatrix(int rows, int cols) : n(rows), m(cols), a(rows * cols, cplx(0)) {}
    cplx& operator()(int i, int j) { return a[i * m + j]; }
    cplx operator()(int i, int j) const { return a[i * m + j]; }
};

struct LuResult {
    std::vector<cplx> x;
    double cond_estimate = 0;  // ||A||_inf * ||A^-1||_inf, by explicit inverse
    bool singular = false;
};

/// Solve A x = b by LU with partial pivoting; A square.
LuResult lu_solve(CMatrix A, std::vector<cplx> b);

/// Least squares min ||A x - b|| via normal equations (A is tall, well
/// conditioned in our uses: tiny Vandermonde fits).
std::vector<cplx> lsq_solve(const CMatrix& A, const std::vector<cplx>& b);

}  // namespace qsc
