#include "qsc/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace qsc {

namespace {

// LU factorization in place with row pivots; returns false if singular.
bool lu_factor(CMatrix& A, std::vector<int>& piv) {
    int n = A.n;
    piv.resize(n);
    for (int i = 0; i < n; ++i) piv[i] = i;
    for (int k = 0; k < n; ++k) {
        int p = k;
        double best = std::abs(A(k, k));
        for (int i = k + 1; i < n; ++i)
            if (std::abs(A(i, k)) > best) { best = std::abs(A(i, k)); p = i; }
        if (best == 0.0) return false;
        if (p != k) {
            for (int j = 0; j < n; ++j) std::swap(A(k, j), A(p, j));
            std::swap(piv[k], piv[p]);
        }
        for (int i = k + 1; i < n; ++i) {
            A(i, k) /= A(k, k);
            for (int j = k + 1; j < n; ++j) A(i, j) -= A(i, k) * A(k, j);
        }
    }
    return true;
}

std::vector<cplx> lu_apply(const CMatrix& LU, const std::vector<int>& piv,
                           const std::vector<cplx>& b) {
    int n = LU.n;
    std::vector<cplx> x(n);
    for (int i = 0; i < n; ++i) x[i] = b[piv[i]];
    for (int i = 1; i < n; ++i)
        for (int j = 0; j < i; ++j) x[i] -= LU(i, j) * x[j];
    for (int i = n - 1; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) x[i] -= LU(i, j) * x[j];
        x[i] /= LU(i, i);
    }
    return x;
}

double norm_inf(const CMatrix& A) {
    double r = 0;
    for (int i = 0; i < A.n; ++i) {
        double s = 0;
        for (int j = 0; j < A.m; ++j) s += std::abs(A(i, j));
        r = std::max(r, s);
    }
    return r;
}

}  // namespace

LuResult lu_solve(CMatrix A, std::vector<cplx> b) {
    LuResult out;
    int n = A.n;
    if (n != A.m || (int)b.size() != n) throw std::invalid_argument("lu_solve: shape");
    CMatrix orig = A;
    std::vector<int> piv;
    if (!lu_factor(A, piv)) {
        out.singular = true;
        return out;
    }
    out.x = lu_apply(A, piv, b);
    // condition estimate via explicit inverse (systems here are tiny)
    CMatrix inv(n, n);
    for (int j = 0; j < n; ++j) {
        std::vector<cplx> e(n, cplx(0));
        e[j] = 1.0;
        auto col = lu_apply(A, piv, e);
        for (int i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    out.cond_estimate = norm_inf(orig) * norm_inf(inv);
    return out;
}

std::vector<cplx> lsq_solve(const CMatrix& A, const std::vector<cplx>& b) {
    int n = A.n, m = A.m;
    if ((int)b.size() != n) throw std::invalid_argument("lsq_solve: shape");
    CMatrix N(m, m);
    std::vector<cplx> rhs(m, cplx(0));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            cplx s(0);
            for (int k = 0; k < n; ++k) s += std::conj(A(k, i)) * A(k, j);
            N(i, j) = s;
        }
        for (int k = 0; k < n; ++k) rhs[i] += std::conj(A(k, i)) * b[k];
    }
    auto r = lu_solve(N, rhs);
    if (r.singular) throw std::runtime_error("lsq_solve: rank deficient");
    return r.x;
}

}  // namespace qsc
