#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "qsc/ode.hpp"

namespace qsc {

struct SheetedPoint {
    int sector = 0;  // even index in 0..2d
    cplx x{};
};

struct WkbSeed {
    cplx x, y, S;       // S normalized to 0 at the seed
    double series_gap;  // |order-m minus order-(m-2)| consistency measure
};

/// Seed data on the decaying branch at radius R in sector alpha.
/// Throws if the series has not settled at that radius.
WkbSeed wkb_seed(const SpectralCurve& curve, int alpha, double radius, int order,
                 double tol = 2e-4);

struct SolutionOptions {
    OdeOptions ode;
    int wkb_order = 10;
    double seed_exp_margin = 40.0;  // |Re V|/|hbar| at the seed radius
    double wkb_tol = 2e-4;
};

/// The solution decaying in even sector alpha: log-derivative y and
/// log-amplitude S along lazily built paths from the seed. Point values are
/// cached; the instance is safe for concurrent reads.
class SectorSolution {
public:
    SectorSolution(const SpectralCurve& curve, int alpha, double R_inf, double R_route,
                   SolutionOptions opt = {});

    int sector() const { return alpha_; }
    double seed_radius() const { return R_inf_; }
    double route_radius() const { return R_route_; }
    cplx seed_x() const { return seed_.x; }
    PathState seed_state() const { return {seed_.x, seed_.y, seed_.S}; }
    const SpectralCurve& curve() const { return *curve_; }
    const RiccatiIntegrator& integrator() const { return integ_; }

    /// (y, S) at x, by integration along the canonical route; cached.
    PathState eval(cplx x) const;

    /// States along the polyline seed -> pts[0] -> ... (no caching).
    std::vector<PathState> walk(const std::vector<cplx>& pts, std::vector<cplx>* zeros = nullptr) const;

    /// Zeros of psi_alpha inside |x| <= r, located by recursive argument-
    /// principle boxes. Idempotent for the same radius.
    const std::vector<cplx>& find_zeros(double r);
    const std::vector<cplx>& zeros() const { return zeros_; }

    /// Resolvent omega = V'/2 + y at a point of this sheet.
    cplx resolvent(cplx x) const;

    /// psi^2(xp)/psi^2(x) evaluated in log space.
    struct Ratio {
        cplx value;
        cplx log_value;
        bool overflow = false;
    };
    Ratio psi_squared_ratio(cplx xp, cplx x) const;

    /// Max Richardson-extrapolated Riccati residual |hbar y' + y^2 - U| over
    /// samples along the ray at `angle` between radii r0 < r1, skipping
    /// zero neighborhoods.
    double riccati_residual_on_ray(double angle, double r0, double r1, int n_samples) const;

private:
    PathState waypoint(int j) const;  // state at R_route * e^{i theta_j}

    const SpectralCurve* curve_;
    int alpha_;
    double R_inf_, R_route_;
    SolutionOptions opt_;
    RiccatiIntegrator integ_;
    WkbSeed seed_;
    std::vector<cplx> zeros_;
    double zeros_radius_ = -1;

    static constexpr int kNRoute = 360;
    mutable std::mutex mu_;
    mutable std::map<int, PathState> waypoints_;
    mutable std::map<std::pair<long long, long long>, PathState> cache_;
};

/// One solution per even sector, built in parallel.
std::vector<std::shared_ptr<SectorSolution>> build_sector_solutions(
    const SpectralCurve& curve, double R_inf, double R_route, SolutionOptions opt = {});

}  // namespace qsc
