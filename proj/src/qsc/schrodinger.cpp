#include "qsc/schrodinger.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <stdexcept>

namespace qsc {

namespace {

double wrap_angle(double a) {
    while (a > M_PI) a -= 2 * M_PI;
    while (a < -M_PI) a += 2 * M_PI;
    return a;
}

cplx series_y(const SpectralCurve& curve, const std::vector<cplx>& c, cplx x) {
    cplx u(0), xi = 1.0 / x;
    cplx p = xi;
    for (cplx cm : c) {
        u += cm * p;
        p *= xi;
    }
    return -0.5 * curve.Vprime(x) + u;
}

}  // namespace

WkbSeed wkb_seed(const SpectralCurve& curve, int alpha, double radius, int order, double tol) {
    if (alpha % 2 != 0) throw std::invalid_argument("wkb_seed: sector index must be even");
    if (order < 3) order = 3;
    cplx x = std::polar(radius, curve.sector_angle(alpha));
    auto c_hi = decaying_log_derivative_series(curve, order);
    auto c_lo = decaying_log_derivative_series(curve, order - 2);
    cplx y_hi = series_y(curve, c_hi, x);
    cplx y_lo = series_y(curve, c_lo, x);
    double gap = std::abs(y_hi - y_lo);
    if (gap > tol * (1.0 + std::abs(y_hi)))
        throw std::runtime_error("wkb_seed: series not settled at this radius (increase it)");
    return {x, y_hi, cplx(0), gap};
}

SectorSolution::SectorSolution(const SpectralCurve& curve, int alpha, double R_inf, double R_route,
                               SolutionOptions opt)
    : curve_(&curve),
      alpha_(alpha),
      R_inf_(R_inf),
      R_route_(R_route),
      opt_(opt),
      integ_(curve, opt.ode),
      seed_(wkb_seed(curve, alpha, R_inf, opt.wkb_order, opt.wkb_tol)) {}

PathState SectorSolution::waypoint(int j) const {
    j = ((j % kNRoute) + kNRoute) % kNRoute;
    {
        auto it = waypoints_.find(j);
        if (it != waypoints_.end()) return it->second;
    }
    double phi = curve_->sector_angle(alpha_);
    int j0 = (int)std::lround(phi / (2 * M_PI) * kNRoute);
    j0 = ((j0 % kNRoute) + kNRoute) % kNRoute;
    PathState st;
    if (j == j0) {
        st = integ_.advance(seed_state(), std::polar(R_route_, 2 * M_PI * j0 / kNRoute));
    } else {
        // step from the neighbor on the shorter side toward j0
        int diff = j - j0;
        if (diff > kNRoute / 2) diff -= kNRoute;
        if (diff < -kNRoute / 2) diff += kNRoute;
        int prev = j - (diff > 0 ? 1 : -1);
        PathState p = waypoint(prev);
        st = integ_.advance(p, std::polar(R_route_, 2 * M_PI * j / kNRoute));
    }
    waypoints_[j] = st;
    return st;
}

PathState SectorSolution::eval(cplx x) const {
    std::scoped_lock lk(mu_);
    auto key = std::make_pair((long long)std::llround(x.real() * 1e12),
                              (long long)std::llround(x.imag() * 1e12));
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    double phi = curve_->sector_angle(alpha_);
    double dth = wrap_angle(std::arg(x) - phi);
    PathState st;
    // Whole validity wedge reachable by a straight descent from the seed.
    // The ring route is for foreign territory and is reliable only when this
    // solution is dominant there (non-coincident sheets).
    if (std::abs(dth) < 1.45 * M_PI / (curve_->d + 1) || std::abs(x) < 1e-12) {
        st = integ_.advance(seed_state(), x);
    } else {
        int j = (int)std::lround(std::arg(x) / (2 * M_PI) * kNRoute);
        PathState wp = waypoint(j);
        st = integ_.advance(wp, x);
    }
    cache_[key] = st;
    return st;
}

std::vector<PathState> SectorSolution::walk(const std::vector<cplx>& pts,
                                            std::vector<cplx>* zeros) const {
    return integ_.advance_through(seed_state(), pts, zeros);
}

cplx SectorSolution::resolvent(cplx x) const { return 0.5 * curve_->Vprime(x) + eval(x).y; }

SectorSolution::Ratio SectorSolution::psi_squared_ratio(cplx xp, cplx x) const {
    Ratio r;
    r.log_value = 2.0 * (eval(xp).S - eval(x).S) / curve_->hbar;
    if (std::abs(r.log_value.real()) < 700.0) {
        r.value = std::exp(r.log_value);
    } else {
        r.overflow = true;
        r.value = cplx(0);
    }
    return r;
}

namespace {

struct Box {
    double re0, re1, im0, im1;
    double diag() const { return std::hypot(re1 - re0, im1 - im0); }
    cplx center() const { return {0.5 * (re0 + re1), 0.5 * (im0 + im1)}; }
};

}  // namespace

const std::vector<cplx>& SectorSolution::find_zeros(double r) {
    if (zeros_radius_ >= r) return zeros_;
    zeros_.clear();
    const double scale = curve_->scale();
    // the search stays inside this sheet's validity wedge, where the
    // continued solution keeps its recessive content
    const double phi = curve_->sector_angle(alpha_);
    const double span = M_PI / (curve_->d + 1) * 1.45;
    auto in_domain = [&](cplx x) {
        if (std::abs(x) < 0.02 * scale) return true;
        double a = std::arg(x) - phi;
        while (a > M_PI) a -= 2 * M_PI;
        while (a < -M_PI) a += 2 * M_PI;
        return std::abs(a) <= span;
    };
    auto box_touches_domain = [&](double re0, double re1, double im0, double im1) {
        for (int cx = 0; cx <= 2; ++cx)
            for (int cy = 0; cy <= 2; ++cy)
                if (in_domain(cplx(re0 + 0.5 * cx * (re1 - re0), im0 + 0.5 * cy * (im1 - im0))))
                    return true;
        return false;
    };
    std::vector<cplx>* edge_hits = nullptr;
    auto winding = [&](const Box& b) -> int {
        // start the loop at the corner deepest inside the validity wedge
        std::vector<cplx> corners = {cplx(b.re0, b.im0), cplx(b.re1, b.im0), cplx(b.re1, b.im1),
                                     cplx(b.re0, b.im1)};
        size_t s = 0;
        double best = 1e300;
        for (size_t j = 0; j < corners.size(); ++j) {
            double a = std::arg(corners[j]) - phi;
            while (a > M_PI) a -= 2 * M_PI;
            while (a < -M_PI) a += 2 * M_PI;
            if (std::abs(a) < best) {
                best = std::abs(a);
                s = j;
            }
        }
        PathState s0 = eval(corners[s]);
        PathState cur = s0;
        for (size_t j = 1; j <= 4; ++j) cur = integ_.advance(cur, corners[(s + j) % 4], edge_hits);
        cplx n = (cur.S - s0.S) / (2.0 * M_PI * cplx(0, 1) * curve_->hbar);
        return (int)std::lround(n.real());
    };
    // tile the wedge with modest boxes; slight irrational offsets keep zeros
    // off box edges
    double off = 0.0137042 * scale;
    std::vector<Box> work;
    int N = std::max(3, (int)std::ceil(2.0 * r / (0.45 * scale)));
    for (int ix = 0; ix < N; ++ix)
        for (int iy = 0; iy < N; ++iy) {
            Box b{-r - off + 2.0 * (r + off) * ix / N, -r - off + 2.0 * (r + off) * (ix + 1) / N,
                  -r - 1.3 * off + 2.0 * (r + off) * iy / N,
                  -r - 1.3 * off + 2.0 * (r + off) * (iy + 1) / N};
            if (box_touches_domain(b.re0, b.re1, b.im0, b.im1)) work.push_back(b);
        }
    std::vector<cplx> found;
    // zeros grazed by any box walk are genuine; harvest them as we go
    std::vector<cplx> grazed;
    edge_hits = &grazed;
    auto harvest = [&]() {
        for (cplx h : grazed) {
            if (!in_domain(h) && std::abs(h) > 0.05 * scale) continue;
            bool dup = false;
            for (cplx z : found)
                if (std::abs(z - h) < 1e-7 * scale) dup = true;
            if (!dup) found.push_back(h);
        }
        grazed.clear();
    };
    while (!work.empty()) {
        Box b = work.back();
        work.pop_back();
        if (!box_touches_domain(b.re0, b.re1, b.im0, b.im1)) continue;
        int n = 0;
        try {
            n = winding(b);
        } catch (const std::exception&) {
            n = 1;  // integration trouble usually means a zero close to the edge
        }
        harvest();
        if (n <= 0) continue;
        if (b.diag() < 0.03 * scale) {
            // sweep the diagonals; linear patches record zeros they pass
            std::vector<cplx> hits;
            try {
                PathState c00 = eval(cplx(b.re0, b.im0));
                integ_.advance(c00, cplx(b.re1, b.im1), &hits);
                PathState c01 = eval(cplx(b.re0, b.im1));
                integ_.advance(c01, cplx(b.re1, b.im0), &hits);
                PathState mid = eval(cplx(b.re0, 0.5 * (b.im0 + b.im1)));
                integ_.advance(mid, cplx(b.re1, 0.5 * (b.im0 + b.im1)), &hits);
            } catch (const std::exception&) {
                // a sweep stalled on a zero; whatever was recorded still counts
            }
            bool got = false;
            for (cplx h : hits) {
                if (h.real() >= b.re0 - 1e-9 && h.real() <= b.re1 + 1e-9 &&
                    h.imag() >= b.im0 - 1e-9 && h.imag() <= b.im1 + 1e-9) {
                    bool dup = false;
                    for (cplx z : found)
                        if (std::abs(z - h) < 1e-7 * scale) dup = true;
                    if (!dup) {
                        found.push_back(h);
                        got = true;
                    }
                }
            }
            harvest();
            if (got) continue;
            if (b.diag() < 1e-5 * scale) {
                // last resort: Newton on 1/y from the box center
                try {
                    cplx xx = b.center();
                    PathState st = eval(xx);
                    bool ok = false;
                    for (int it = 0; it < 10; ++it) {
                        if (std::abs(st.y) < 1e-12) break;
                        cplx snew = st.x - curve_->hbar / st.y;
                        st = integ_.advance(st, snew);
                        if (std::abs(snew - st.x) < 1e-12 &&
                            std::abs(st.x - xx) < 4.0 * b.diag()) {
                            ok = true;
                            break;
                        }
                    }
                    if (ok) {
                        bool dup = false;
                        for (cplx z : found)
                            if (std::abs(z - st.x) < 1e-7 * scale) dup = true;
                        if (!dup) found.push_back(st.x);
                    }
                } catch (const std::exception&) {
                }
                continue;
            }
        }
        double rm = 0.5 * (b.re0 + b.re1) + 0.003 * (b.re1 - b.re0);
        double im = 0.5 * (b.im0 + b.im1) + 0.004 * (b.im1 - b.im0);
        work.push_back({b.re0, rm, b.im0, im});
        work.push_back({rm, b.re1, b.im0, im});
        work.push_back({b.re0, rm, im, b.im1});
        work.push_back({rm, b.re1, im, b.im1});
    }
    zeros_ = found;
    zeros_radius_ = r;
    return zeros_;
}

double SectorSolution::riccati_residual_on_ray(double angle, double r0, double r1,
                                               int n_samples) const {
    cplx e = std::polar(1.0, angle);
    double dr = (r1 - r0) / std::max(1, n_samples - 1);
    double h = std::min(0.08 * dr, 0.02);
    std::vector<cplx> pts;
    std::vector<double> radii;
    for (int i = 0; i < n_samples; ++i) {
        double rr = r0 + i * dr;
        radii.push_back(rr);
        for (double o : {-h, -0.5 * h, 0.0, 0.5 * h, h}) pts.push_back((rr + o) * e);
    }
    // walk outward-in so the decaying seed side comes first
    std::sort(pts.begin(), pts.end(), [](cplx a, cplx b) { return std::abs(a) > std::abs(b); });
    auto states = walk(pts);
    auto state_at = [&](cplx x) -> const PathState& {
        for (auto& s : states)
            if (std::abs(s.x - x) < 1e-12 * (1.0 + std::abs(x))) return s;
        throw std::logic_error("sample not found");
    };
    double worst = 0;
    for (int i = 0; i < n_samples; ++i) {
        cplx x = radii[i] * e;
        double patch = 2.5 * std::abs(curve_->hbar) / integ_.local_y_cap(x);
        bool skip = false;
        for (cplx z : zeros_)
            if (std::abs(x - z) < 6.0 * patch) skip = true;
        if (skip) continue;
        cplx yp1 = (state_at(x + h * e).y - state_at(x - h * e).y) / (2 * h * e);
        cplx yp2 = (state_at(x + 0.5 * h * e).y - state_at(x - 0.5 * h * e).y) / (h * e);
        cplx yp = (4.0 * yp2 - yp1) / 3.0;
        cplx y = state_at(x).y;
        worst = std::max(worst, std::abs(curve_->hbar * yp + y * y - curve_->U(x)));
    }
    return worst;
}

std::vector<std::shared_ptr<SectorSolution>> build_sector_solutions(const SpectralCurve& curve,
                                                                    double R_inf, double R_route,
                                                                    SolutionOptions opt) {
    std::vector<std::future<std::shared_ptr<SectorSolution>>> futs;
    for (int a = 0; a <= 2 * curve.d; a += 2) {
        futs.push_back(std::async(std::launch::async, [&, a] {
            return std::make_shared<SectorSolution>(curve, a, R_inf, R_route, opt);
        }));
    }
    std::vector<std::shared_ptr<SectorSolution>> out;
    for (auto& f : futs) out.push_back(f.get());
    return out;
}

}  // namespace qsc
