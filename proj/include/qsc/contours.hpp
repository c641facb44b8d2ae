#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <tuple>

#include "qsc/measures.hpp"
#include "qsc/schrodinger.hpp"

namespace qsc {

struct ContourConfig {
    double radius = 0;            // cut radius r_cut; 0 = auto from zeros and scale
    int nodes_per_segment = 16;   // Gauss-Legendre order for generic quadrature
    double nesting_offset = 0.10; // relative spacing between nested contour shells
    double clearance = 0;         // min distance of contour lines to zeros; 0 = auto
    double quad_tol = 1e-10;
    double corridor_sigma = 32.0; // exponent margin at which corridor tails truncate
    int max_depth = 4;
    double seed_exp_margin = 40.0;
    int wkb_order = 10;
    double ode_rel_tol = 1e-11;
    double diag_clearance = 1e-3; // relative near-diagonal refinement floor
    double corridor_split = 0.035;// angular draw-apart of corridor rays (radians)
    double max_efold = 11.0;      // |dV|/|hbar| bound per quadrature edge
    std::vector<int> coincident;  // cut indices whose sheets are identified
};

using SheetFn = std::function<cplx(int sheet, cplx x)>;

/// One cut of the canonical system: separates the wedge of even infinity 2i
/// from the rest; asymptotic to the two flanking odd directions.
struct Cut {
    int index = 0;      // 1..d
    int sheet_out = 0;  // alpha_+ side (the common outer region)
    int sheet_in = 0;   // alpha_- side (= 2*index)
    int inf_from = 0, inf_to = 0;  // odd sector indices; path runs 2i+1 -> 2i-1
    std::vector<cplx> path;        // oriented polyline incl. truncated rays
    cplx basepoint{};              // midpoint of the circular part
    std::vector<cplx> res_out, res_in;  // zeros assigned to this cycle, per side
};

/// Single-sheet piece of a nested integration contour.
struct CdPiece {
    int sheet_a = 0;
    std::vector<cplx> path;
};

struct BtildePath {
    int index = 0;       // cut index
    int sheet_plus = 0;  // integrand f(sheet_plus) - f(sheet_minus)
    int sheet_minus = 0;
    std::vector<cplx> path;  // oriented from infty_{2i} to infty_0
};

/// Radii shared by the solutions and the contour system.
struct PlannedRadii {
    double R_inf = 0;        // seed radius
    double R_route = 0;      // outer routing ring
    double R_tail_bound = 0; // upper bound on corridor truncation
};
PlannedRadii plan_radii(const SpectralCurve& curve, const ContourConfig& cfg);

class ContourSystem {
public:
    static std::shared_ptr<ContourSystem> build(const SpectralCurve& curve,
                                                std::vector<std::shared_ptr<SectorSolution>> sols,
                                                ContourConfig cfg = {});

    const SpectralCurve& curve() const { return *curve_; }
    const SectorSolution& solution(int sheet) const { return *sols_[sheet / 2]; }
    std::shared_ptr<SectorSolution> solution_ptr(int sheet) const { return sols_[sheet / 2]; }
    const ContourConfig& config() const { return cfg_; }

    int genus() const { return curve_->d - 1; }
    double r_cut() const { return r_cut_; }
    double route_radius() const { return R_route_; }
    double seed_radius() const { return R_inf_; }
    double tail_radius() const { return R_tail_; }
    double clearance() const { return clearance_; }

    const std::vector<Cut>& cuts() const { return cuts_; }
    const BtildePath& btilde(int i) const { return btilde_[i - 1]; }
    std::vector<CdPiece> cd_pieces(int depth) const;
    double shell_radius(int depth) const;

    /// Adaptive composite quadrature along a polyline.
    cplx line_integral(const std::vector<cplx>& path, const std::function<cplx(cplx)>& f) const;

    cplx integrate_atilde(int i, const SheetFn& f, const SheetFn& resfn = nullptr) const;
    cplx integrate_btilde(int i, const SheetFn& f) const;
    cplx integrate_b(int i, const SheetFn& f) const;  // btilde_i - btilde_d
    cplx integrate_cd(const SheetFn& f, int depth) const;

    /// Filling fractions via the Wronskian form with analytic tails.
    std::vector<cplx> filling_fractions() const;

    /// Aggregated cut transform of the psi^2-weighted kernel family:
    ///   contour_{A_i} x^{-xpow} [ (1/(hbar psi^2(x))) int_{infty}^{x} psi^2 F ] dx
    /// with residue-free F only.
    cplx cut_transform_cauchy(int i, cplx z, int deriv = 0, int xpow = 0) const;
    cplx cut_transform_poly(int i, const ComplexPoly& h, int xpow = 0) const;
    cplx cut_transform_moment(int i, int k, int xpow = 0) const;
    cplx cut_transform(int i, const std::function<cplx(cplx)>& F, int xpow = 0) const;
    /// Same with quadrature detail doubled (verification variant).
    const ContourSystem& fine() const;

    /// psi^2-weighted point measure for (sheet, x); weights include the
    /// 1/(hbar psi^2(x)) prefactor, so e.g. Khat(x,z) = measure.cauchy(z).
    std::shared_ptr<const CauchyMeasure> point_measure(int sheet, cplx x,
                                                       std::optional<cplx> avoid = {}) const;

    const std::vector<cplx>& sheet_zeros(int sheet) const { return sols_[sheet / 2]->zeros(); }
    bool z_admissible(cplx z) const;

    bool cut_coincident(int i) const;
    /// Petal index owning x (1..d), or 0 for the common outer region.
    int petal_of(cplx x) const;
    /// Coincidence-aware point data: delegates to the partner solution when
    /// x lies deep in identified foreign territory.
    PathState eval_state(int sheet, cplx x) const;
    cplx sheet_y(int sheet, cplx x) const { return eval_state(sheet, x).y; }
    cplx resolvent(int sheet, cplx x) const {
        return 0.5 * curve_->Vprime(x) + eval_state(sheet, x).y;
    }

private:
    ContourSystem() = default;
    void build_cut_aggregates();
    void build_coincident_agg(int i);
    std::shared_ptr<const CauchyMeasure> composite_measure(int sheet, cplx x) const;

    const SpectralCurve* curve_ = nullptr;
    std::vector<std::shared_ptr<SectorSolution>> sols_;
    ContourConfig cfg_;
    double r_cut_ = 0, R_route_ = 0, R_inf_ = 0, R_tail_ = 0, clearance_ = 0;
    std::vector<double> shell_radii_;
    std::vector<Cut> cuts_;
    std::vector<BtildePath> btilde_;

    struct CutAgg {
        CauchyMeasure out[3], in[3];  // aggregated measures per outer power
        std::vector<cplx> xs, wxs;    // outer nodes/weights along the cut
        std::vector<PathState> st_out, st_in;
    };
    std::vector<CutAgg> agg_;
    std::vector<cplx> kappa_;  // S-matching constants for coincident cuts
    mutable std::shared_ptr<ContourSystem> fine_;  // doubled-resolution twin

    mutable std::mutex mu_;
    mutable std::map<std::tuple<int, long long, long long>,
                     std::shared_ptr<const CauchyMeasure>>
        meas_cache_;
};

}  // namespace qsc
