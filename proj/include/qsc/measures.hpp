#pragma once

#include <functional>
#include <vector>

#include "qsc/complex_poly.hpp"

namespace qsc {

/// Discrete measure sum_q w_q delta(x - x_q) representing a rescaled
/// psi^2-weighted line integral. All kernel-type quantities are transforms
/// of such measures, so z-derivatives and moments are analytic.
struct CauchyMeasure {
    std::vector<cplx> x;
    std::vector<cplx> w;

    void add(cplx node, cplx weight) {
        x.push_back(node);
        w.push_back(weight);
    }
    size_t size() const { return x.size(); }

    /// sum w/(x - z)
    cplx cauchy(cplx z) const {
        cplx s(0);
        for (size_t q = 0; q < x.size(); ++q) s += w[q] / (x[q] - z);
        return s;
    }
    /// d^m/dz^m of cauchy(z): sum w * m!/(x - z)^{m+1}
    cplx cauchy_d(cplx z, int m) const {
        double fact = 1;
        for (int j = 2; j <= m; ++j) fact *= j;
        cplx s(0);
        for (size_t q = 0; q < x.size(); ++q) {
            cplx d = x[q] - z;
            cplx p = d;
            for (int j = 0; j < m; ++j) p *= d;
            s += w[q] / p;
        }
        return fact * s;
    }
    cplx moment(int k) const {
        cplx s(0);
        for (size_t q = 0; q < x.size(); ++q) {
            cplx p(1);
            for (int j = 0; j < k; ++j) p *= x[q];
            s += w[q] * p;
        }
        return s;
    }
    cplx poly(const ComplexPoly& h) const {
        cplx s(0);
        for (size_t q = 0; q < x.size(); ++q) s += w[q] * h(x[q]);
        return s;
    }
    cplx apply(const std::function<cplx(cplx)>& f) const {
        cplx s(0);
        for (size_t q = 0; q < x.size(); ++q) s += w[q] * f(x[q]);
        return s;
    }
    double min_dist(cplx z) const {
        double d = 1e300;
        for (cplx n : x) d = std::min(d, std::abs(n - z));
        return d;
    }
};

/// Gauss-Legendre nodes/weights on [-1, 1].
const std::vector<double>& gl_nodes(int n);
const std::vector<double>& gl_weights(int n);

}  // namespace qsc
