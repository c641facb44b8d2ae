#include "qsc/curve.hpp"

#include <cmath>

namespace qsc {

ComplexPoly polynomial_sqrt_part(const ComplexPoly& U) {
    int deg = U.degree();
    if (deg < 2 || deg % 2 != 0)
        throw std::invalid_argument("polynomial_sqrt_part: degree must be even and >= 2");
    if (std::abs(U.leading()) == 0.0)
        throw std::invalid_argument("polynomial_sqrt_part: zero leading coefficient");
    int d = deg / 2;
    std::vector<cplx> q(d + 1, cplx(0));
    q[d] = std::sqrt(U.leading());
    for (int j = d - 1; j >= 0; --j) {
        cplx s(0);
        for (int i = j + 1; i <= d; ++i) {
            int k = d + j - i;
            if (k <= d && k > j) s += q[i] * q[k];
        }
        q[j] = (U.coeff(d + j) - s) / (2.0 * q[d]);
    }
    return ComplexPoly(std::move(q));
}

SpectralCurve derive_spectral_data(const ComplexPoly& U, cplx hbar, bool flip) {
    SpectralCurve c;
    c.U = U;
    c.hbar = hbar;
    ComplexPoly Q = polynomial_sqrt_part(U);
    if (flip) Q = Q * cplx(-1.0);
    c.d = Q.degree();
    c.Vprime = Q * cplx(2.0);
    // P = V'^2/4 - U - hbar V''/2
    c.P = Q * Q - U - c.Vprime.derivative() * (hbar * 0.5);
    if (c.P.degree() > c.d - 1)
        throw std::runtime_error("derive_spectral_data: deg P exceeds d-1");
    c.t0 = c.P.coeff(c.d - 1) / c.Vprime.coeff(c.d);
    c.theta0 = std::arg(c.Vprime.leading());
    c.flipped = flip;
    return c;
}

double SpectralCurve::sector_angle(int k) const {
    int n = n_sectors();
    k = ((k % n) + n) % n;
    return (-theta0 + M_PI * k) / double(d + 1);
}

double SpectralCurve::stokes_angle(int k) const {
    int n = n_sectors();
    k = ((k % n) + n) % n;
    return (-theta0 + M_PI * (k + 0.5)) / double(d + 1);
}

cplx SpectralCurve::V(cplx x) const {
    cplx r(0);
    for (int k = Vprime.degree(); k >= 0; --k)
        r = r * x + Vprime.coeff(k) / double(k + 1);
    return r * x;
}

double SpectralCurve::scale() const {
    double lead = std::abs(U.leading());
    double b = 0.0;
    for (int k = 0; k < U.degree(); ++k) {
        double a = std::abs(U.coeff(k)) / lead;
        if (a > 0) b = std::max(b, std::pow(a, 1.0 / double(U.degree() - k)));
    }
    return 1.0 + b;
}

std::vector<cplx> decaying_log_derivative_series(const SpectralCurve& curve, int order) {
    // Fixed point of u = (P + u^2 + hbar u') / V' in powers of 1/x.
    // One order of accuracy is gained per sweep.
    const int M = order;
    const int d = curve.d;
    std::vector<cplx> u(M + 1, cplx(0));  // u[m] multiplies x^{-m}
    for (int sweep = 0; sweep < M + 2; ++sweep) {
        // numerator N(x) = P + u^2 + hbar u' over powers d-1 .. -(M+d)
        const int top = d - 1, bot = -(M + d);
        std::vector<cplx> N(top - bot + 1, cplx(0));
        auto at = [&](int p) -> cplx& { return N[top - p]; };
        for (int k = 0; k <= curve.P.degree(); ++k) at(k) += curve.P.coeff(k);
        for (int m = 1; m <= M; ++m)
            for (int l = 1; l <= M; ++l)
                if (-(m + l) >= bot) at(-(m + l)) += u[m] * u[l];
        for (int m = 1; m <= M; ++m)
            if (-(m + 1) >= bot) at(-(m + 1)) += curve.hbar * (-double(m)) * u[m];
        // long division by V' (degree d): result powers -1 .. -M
        std::vector<cplx> t(M + 1, cplx(0));
        for (int p = -1; p >= -M; --p) {
            cplx s = at(p + d);
            for (int q = -1; q > p; --q) {
                int j = p + d - q;
                if (j >= 0 && j < d) s -= t[-q] * curve.Vprime.coeff(j);
            }
            t[-p] = s / curve.Vprime.coeff(d);
        }
        u = t;
    }
    u.erase(u.begin());  // drop the unused index 0
    return u;
}

}  // namespace qsc
