#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "qsc/curve.hpp"

namespace qsc {

struct OdeOptions {
    double rel_tol = 1e-11;
    double abs_tol = 1e-13;
    double y_cap_factor = 25.0;   // switch to the linear system past this multiple of the local scale
    int max_steps = 400000;
};

/// State of the log-derivative integration: y = hbar psi'/psi, S = hbar log psi.
/// Im S is tracked continuously (winding included), so S/(2 pi i hbar)
/// differences count zeros.
struct PathState {
    cplx x{}, y{}, S{};
};

/// Integrates hbar y' = U - y^2 and S' = y along straight segments in the
/// complex plane. Near zeros of psi (|y| blows up) it switches to the scaled
/// linear system for (psi, hbar psi') and records the zero.
class RiccatiIntegrator {
public:
    RiccatiIntegrator(const SpectralCurve& curve, OdeOptions opt = {});

    /// Advance along the straight segment from st.x to x1. Zeros detected on
    /// the way are appended to *zeros (if non-null), de-duplicated.
    PathState advance(const PathState& st, cplx x1, std::vector<cplx>* zeros = nullptr) const;

    /// Advance visiting the given intermediate points in order; returns the
    /// states at each of them (the path is the polyline st.x -> pts[0] -> ...).
    std::vector<PathState> advance_through(const PathState& st, const std::vector<cplx>& pts,
                                           std::vector<cplx>* zeros = nullptr) const;

    double local_y_cap(cplx x) const;
    const SpectralCurve& curve() const { return *curve_; }

private:
    PathState advance_riccati(PathState st, cplx x1, std::vector<cplx>* zeros, int& budget) const;
    PathState advance_linear(PathState st, cplx x1, double t_end, std::vector<cplx>* zeros,
                             int& budget, bool& reached_end) const;

    const SpectralCurve* curve_;
    OdeOptions opt_;
};

}  // namespace qsc
