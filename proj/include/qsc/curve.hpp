#pragma once

#include "qsc/complex_poly.hpp"

namespace qsc {

/// Polynomial part Q of sqrt(U) for deg U = 2d, computed by coefficient
/// matching from the top degree down: deg(U - Q^2) <= d-1. Throws on odd
/// degree or vanishing leading coefficient.
ComplexPoly polynomial_sqrt_part(const ComplexPoly& U);

/// The spectral input and everything derived from it by exact coefficient
/// arithmetic. Immutable after construction; shareable across threads.
struct SpectralCurve {
    ComplexPoly U;       // degree 2d
    cplx hbar{};
    int d = 0;
    ComplexPoly Vprime;  // degree d, = 2 (sqrt U)_+ up to branch sign
    ComplexPoly P;       // degree <= d-1
    cplx t0{};
    double theta0 = 0;   // Arg of the leading time t_{d+1}
    bool flipped = false;

    /// Times t_1..t_{d+1}: t_{k+1} is the x^k coefficient of V'.
    cplx time(int k) const { return Vprime.coeff(k - 1); }
    cplx t_lead() const { return Vprime.leading(); }

    int n_sectors() const { return 2 * d + 2; }
    /// Bisector direction of sector S_k (the "infinity" infty_k).
    double sector_angle(int k) const;
    /// Direction of the Stokes half-line L_k bounding S_k and S_{k+1}.
    double stokes_angle(int k) const;

    cplx V(cplx x) const;         // antiderivative of V', V(0)=0
    double scale() const;         // Cauchy-type bound on the roots of U
};

/// Derive V', P, t0 from U and hbar. `flip` selects the opposite branch of
/// the polynomial square root (V' -> -V'), which rotates the sector labels
/// by one unit; used for solutions decaying along what would otherwise be
/// odd directions.
SpectralCurve derive_spectral_data(const ComplexPoly& U, cplx hbar, bool flip = false);

/// Coefficients c_1..c_order of the large-x series
///   y = -V'/2 + sum_m c_m x^{-m}
/// of the decaying branch of the log-derivative; c_1 = t0.
std::vector<cplx> decaying_log_derivative_series(const SpectralCurve& curve, int order);

}  // namespace qsc
