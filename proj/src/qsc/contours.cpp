#include "qsc/contours.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace qsc {

namespace {

double wrap(double a) {
    while (a > M_PI) a -= 2 * M_PI;
    while (a < -M_PI) a += 2 * M_PI;
    return a;
}

std::vector<cplx> arc_chords(double r, double th0, double th1, double max_step = 0.10) {
    int n = std::max(2, (int)std::ceil(std::abs(th1 - th0) / max_step));
    std::vector<cplx> pts;
    for (int j = 0; j <= n; ++j) pts.push_back(std::polar(r, th0 + (th1 - th0) * j / n));
    return pts;
}

std::vector<cplx> geometric_points(cplx a, cplx b, int n, double ratio = 1.8) {
    std::vector<cplx> pts = {a};
    double step = (ratio - 1) / (std::pow(ratio, n) - 1);
    double acc = 0, cur = step;
    for (int j = 0; j < n; ++j) {
        acc += cur;
        pts.push_back(a + std::min(1.0, acc) * (b - a));
        cur *= ratio;
    }
    pts.back() = b;
    return pts;
}

double dist_point_segment(cplx p, cplx a, cplx b) {
    cplx d = b - a;
    double L2 = std::norm(d);
    if (L2 == 0) return std::abs(p - a);
    double t = std::clamp(((p - a) * std::conj(d)).real() / L2, 0.0, 1.0);
    return std::abs(p - (a + t * d));
}

// Insert points so each edge carries a bounded amount of exponential
// variation of psi^2 (measured by |V(b)-V(a)|/|hbar|) and bounded length.
std::vector<cplx> exp_split(const SpectralCurve& c, const std::vector<cplx>& pts,
                            double max_efold, double max_len) {
    double hb = std::abs(c.hbar);
    std::vector<cplx> out = {pts.front()};
    std::function<void(cplx, cplx, int)> rec = [&](cplx u, cplx v, int depth) {
        double ef = std::abs(c.V(v) - c.V(u)) / hb;
        if ((ef <= max_efold && std::abs(v - u) <= max_len) || depth > 26) {
            out.push_back(v);
            return;
        }
        rec(u, 0.5 * (u + v), depth + 1);
        rec(0.5 * (u + v), v, depth + 1);
    };
    for (size_t j = 0; j + 1 < pts.size(); ++j) rec(pts[j], pts[j + 1], 0);
    return out;
}

struct EdgeSpec {
    cplx a, b;
};

std::vector<EdgeSpec> polyline_edges(const std::vector<cplx>& path) {
    std::vector<EdgeSpec> e;
    for (size_t j = 0; j + 1 < path.size(); ++j)
        if (std::abs(path[j + 1] - path[j]) > 0) e.push_back({path[j], path[j + 1]});
    return e;
}

}  // namespace

PlannedRadii plan_radii(const SpectralCurve& curve, const ContourConfig& cfg) {
    PlannedRadii r;
    double scale = curve.scale();
    double hb = std::abs(curve.hbar);
    double R = 1.2 * scale;
    auto margin_ok = [&](double rr) {
        for (int a = 0; a <= 2 * curve.d; a += 2) {
            cplx x = std::polar(rr, curve.sector_angle(a));
            if (std::abs(curve.V(x).real()) < cfg.seed_exp_margin * hb) return false;
        }
        return true;
    };
    while (!margin_ok(R)) R *= 1.06;
    for (;;) {
        bool ok = true;
        for (int a = 0; a <= 2 * curve.d && ok; a += 2) {
            try {
                wkb_seed(curve, a, R, cfg.wkb_order);
            } catch (const std::exception&) {
                ok = false;
            }
        }
        if (ok) break;
        R *= 1.12;
        if (R > 1e5 * scale) throw std::runtime_error("plan_radii: no settled seed radius");
    }
    double r_cut_hi = cfg.radius > 0 ? cfg.radius : 2.2 * scale;
    double t0log = 2.0 * std::abs((curve.t0 / curve.hbar).real());
    double Rt = r_cut_hi;
    for (int k = 1; k <= 2 * curve.d + 1; k += 2) {
        double th = curve.sector_angle(k);
        double rr = r_cut_hi;
        cplx v0 = curve.V(std::polar(r_cut_hi, th));
        while (std::abs((curve.V(std::polar(rr, th)) - v0).real()) / hb -
                   t0log * std::log(rr / r_cut_hi) <
               cfg.corridor_sigma) {
            rr *= 1.03;
            if (rr > 1e5 * scale) throw std::runtime_error("plan_radii: corridor never decays");
        }
        Rt = std::max(Rt, rr);
    }
    r.R_tail_bound = Rt;
    r.R_route = std::max(1.18 * r_cut_hi, 1.07 * Rt);
    r.R_inf = std::max(R, 1.25 * r.R_route);
    return r;
}

std::shared_ptr<ContourSystem> ContourSystem::build(
    const SpectralCurve& curve, std::vector<std::shared_ptr<SectorSolution>> sols,
    ContourConfig cfg) {
    auto out = std::shared_ptr<ContourSystem>(new ContourSystem());
    ContourSystem& cs = *out;
    cs.curve_ = &curve;
    cs.sols_ = std::move(sols);
    cs.cfg_ = cfg;
    const int d = curve.d;
    cs.R_inf_ = cs.sols_[0]->seed_radius();
    cs.R_route_ = cs.sols_[0]->route_radius();

    double r_search = cs.R_route_ / 1.10;
    std::vector<cplx> all_zeros;
    for (auto& s : cs.sols_) {
        s->find_zeros(r_search);
        for (cplx z : s->zeros()) all_zeros.push_back(z);
    }

    auto skel_score = [&](double r) {
        double dmin = 1e300;
        double inner_max = 0;
        for (cplx z : all_zeros) {
            double dz = std::abs(std::abs(z) - r);
            if (std::abs(z) > 0.8 * r) {
                for (int k = 1; k <= 2 * d + 1; k += 2) {
                    double th = curve.sector_angle(k);
                    dz = std::min(dz, dist_point_segment(z, std::polar(r, th),
                                                         std::polar(cs.R_route_, th)));
                }
            }
            dmin = std::min(dmin, dz);
            if (std::abs(z) < r) inner_max = std::max(inner_max, std::abs(z));
        }
        double gap = r - inner_max;
        return std::min(dmin, 0.5 * gap);
    };
    if (cfg.radius > 0) {
        cs.r_cut_ = cfg.radius;
    } else {
        double lo = 0.45 * r_search, hi = 0.95 * r_search;
        double best = -1, bestr = hi;
        for (int j = 0; j <= 64; ++j) {
            double r = lo + (hi - lo) * j / 64.0;
            double sc = skel_score(r);
            if (sc > best) {
                best = sc;
                bestr = r;
            }
        }
        cs.r_cut_ = bestr;
    }
    double sc = skel_score(cs.r_cut_);
    cs.clearance_ = cfg.clearance > 0 ? cfg.clearance : std::min(0.5 * sc, 0.05 * cs.r_cut_);
    if (sc < cs.clearance_)
        std::cerr << "[contours] warning: zero within clearance of the cut skeleton\n";

    double hb = std::abs(curve.hbar);
    double t0log = 2.0 * std::abs((curve.t0 / curve.hbar).real());
    cs.R_tail_ = cs.r_cut_;
    for (int k = 1; k <= 2 * d + 1; k += 2) {
        double th = curve.sector_angle(k);
        double rr = cs.r_cut_;
        cplx v0 = curve.V(std::polar(cs.r_cut_, th));
        while (std::abs((curve.V(std::polar(rr, th)) - v0).real()) / hb -
                   t0log * std::log(rr / cs.r_cut_) <
               cfg.corridor_sigma) {
            rr *= 1.03;
            if (rr > cs.R_route_) break;
        }
        cs.R_tail_ = std::max(cs.R_tail_, rr);
    }
    cs.R_tail_ = std::min(cs.R_tail_, 0.985 * cs.R_route_);

    const double half = M_PI / (d + 1);
    for (int i = 1; i <= d; ++i) {
        Cut c;
        c.index = i;
        c.sheet_out = 0;
        c.sheet_in = 2 * i;
        c.inf_from = 2 * i + 1;
        c.inf_to = 2 * i - 1;
        double thc = curve.sector_angle(2 * i);
        c.basepoint = std::polar(cs.r_cut_, thc);
        std::vector<cplx> p;
        p.push_back(std::polar(cs.R_tail_, thc + half));
        p.push_back(std::polar(cs.r_cut_, thc + half));
        auto arc = arc_chords(cs.r_cut_, thc + half, thc - half);
        p.insert(p.end(), arc.begin() + 1, arc.end());
        p.push_back(std::polar(cs.R_tail_, thc - half));
        c.path = std::move(p);
        cs.cuts_.push_back(std::move(c));
    }
    auto in_petal = [&](cplx z, int i) {
        double thc = curve.sector_angle(2 * i);
        return std::abs(z) > cs.r_cut_ && std::abs(wrap(std::arg(z) - thc)) < half;
    };
    for (cplx z : cs.sols_[0]->zeros()) {
        bool petal = false;
        for (int i = 1; i <= d; ++i)
            if (in_petal(z, i)) petal = true;
        if (!petal) cs.cuts_[0].res_out.push_back(z);
    }
    for (int i = 1; i <= d; ++i)
        for (cplx z : cs.sols_[i]->zeros())
            if (in_petal(z, i)) cs.cuts_[i - 1].res_in.push_back(z);

    for (int i = 1; i <= d; ++i) {
        BtildePath b;
        b.index = i;
        b.sheet_plus = 0;
        b.sheet_minus = 2 * i;
        double thc = curve.sector_angle(2 * i), th0 = curve.sector_angle(0);
        std::vector<cplx> p = {std::polar(cs.R_inf_, thc), std::polar(cs.R_route_, thc)};
        auto sweep = arc_chords(cs.R_route_, thc, th0);
        p.insert(p.end(), sweep.begin() + 1, sweep.end());
        p.push_back(std::polar(cs.R_inf_, th0));
        b.path = std::move(p);
        cs.btilde_.push_back(std::move(b));
    }

    double inner_max = 0;
    for (cplx z : all_zeros)
        if (std::abs(z) < cs.r_cut_) inner_max = std::max(inner_max, std::abs(z));
    double r_in = std::max(1.04 * inner_max, 0.15 * cs.r_cut_);
    double r_out = 0.96 * cs.r_cut_;
    if (r_out - r_in < 0.05 * cs.r_cut_)
        std::cerr << "[contours] warning: thin contour band between zeros and cut\n";
    int nsh = cfg.max_depth + 1;
    double step = std::min(cfg.nesting_offset * cs.r_cut_, (r_out - r_in) / nsh);
    for (int k = 0; k < nsh; ++k) {
        double lo = r_out - (k + 1) * step, hi = r_out - k * step;
        double best = -1, bestr = hi;
        for (int j = 1; j < 12; ++j) {
            double r = lo + (hi - lo) * j / 12.0;
            double dmin = 1e300;
            for (cplx z : all_zeros) dmin = std::min(dmin, std::abs(std::abs(z) - r));
            if (dmin > best) {
                best = dmin;
                bestr = r;
            }
        }
        cs.shell_radii_.push_back(bestr);
    }

    cs.kappa_.assign(d, cplx(0));
    for (int i = 1; i <= d; ++i) {
        if (!cs.cut_coincident(i)) continue;
        if (!(i == 1 || i == d))
            throw std::runtime_error("contours: coincident cuts supported only adjacent to sheet 0");
        double half2 = M_PI / (d + 1);
        double thc = curve.sector_angle(2 * i);
        double thx = (i == 1) ? thc - half2 : thc + half2;  // corridor shared with sheet 0's wedge
        cplx Xs = std::polar(cs.r_cut_, thx);
        PathState a = cs.sols_[0]->eval(Xs);
        PathState b = cs.sols_[i]->eval(Xs);
        if (std::abs(a.y - b.y) > 1e-6 * (1.0 + std::abs(a.y)))
            std::cerr << "[contours] warning: declared-coincident sheets disagree at the"
                         " matching point by " << std::abs(a.y - b.y) << "\n";
        cs.kappa_[i - 1] = a.S - b.S;
    }
    cs.build_cut_aggregates();
    return out;
}

double ContourSystem::shell_radius(int depth) const {
    if (depth < (int)shell_radii_.size()) return shell_radii_[depth];
    return shell_radii_.back();
}

std::vector<CdPiece> ContourSystem::cd_pieces(int depth) const {
    const int d = curve_->d;
    const double half = M_PI / (d + 1);
    double r = shell_radius(depth);
    double split = cfg_.corridor_split * (1.0 - 0.55 * double(depth) / (cfg_.max_depth + 1));
    std::vector<CdPiece> out;
    for (int a = 0; a <= 2 * d; a += 2) {
        double thc = curve_->sector_angle(a);
        CdPiece arc;
        arc.sheet_a = a;
        arc.path = arc_chords(r, thc - half + split, thc + half - split);
        out.push_back(std::move(arc));
        CdPiece ray_out;
        ray_out.sheet_a = a;
        ray_out.path = geometric_points(std::polar(r, thc + half - split),
                                        std::polar(R_tail_, thc + half - split), 6, 1.7);
        out.push_back(std::move(ray_out));
        CdPiece ray_in;
        ray_in.sheet_a = a;
        ray_in.path = geometric_points(std::polar(r, thc - half + split),
                                       std::polar(R_tail_, thc - half + split), 6, 1.7);
        std::reverse(ray_in.path.begin(), ray_in.path.end());
        out.push_back(std::move(ray_in));
    }
    return out;
}

cplx ContourSystem::line_integral(const std::vector<cplx>& path,
                                  const std::function<cplx(cplx)>& f) const {
    const auto& gx = gl_nodes(cfg_.nodes_per_segment);
    const auto& gw = gl_weights(cfg_.nodes_per_segment);
    auto quad = [&](cplx u, cplx v) {
        cplx s(0), c = 0.5 * (u + v), h = 0.5 * (v - u);
        for (size_t j = 0; j < gx.size(); ++j) s += gw[j] * f(c + gx[j] * h);
        return s * h;
    };
    std::function<cplx(cplx, cplx, cplx, int)> seg = [&](cplx a, cplx b, cplx whole,
                                                         int depth) -> cplx {
        cplx mid = 0.5 * (a + b);
        cplx left = quad(a, mid), right = quad(mid, b);
        if (depth >= 9 || std::abs(left + right - whole) < cfg_.quad_tol * (1.0 + std::abs(left + right)))
            return left + right;
        return seg(a, mid, left, depth + 1) + seg(mid, b, right, depth + 1);
    };
    cplx total(0);
    for (size_t j = 0; j + 1 < path.size(); ++j)
        total += seg(path[j], path[j + 1], quad(path[j], path[j + 1]), 0);
    return total;
}

cplx ContourSystem::integrate_atilde(int i, const SheetFn& f, const SheetFn& resfn) const {
    const Cut& c = cuts_[i - 1];
    cplx v = line_integral(c.path, [&](cplx x) { return f(c.sheet_out, x) - f(c.sheet_in, x); });
    if (resfn) {
        cplx res(0);
        for (cplx s : c.res_out) res += resfn(c.sheet_out, s);
        for (cplx s : c.res_in) res += resfn(c.sheet_in, s);
        v += 2.0 * M_PI * cplx(0, 1) * res;
    }
    return v;
}

cplx ContourSystem::integrate_btilde(int i, const SheetFn& f) const {
    const BtildePath& b = btilde_[i - 1];
    const auto& gx = gl_nodes(cfg_.nodes_per_segment);
    const auto& gw = gl_weights(cfg_.nodes_per_segment);
    cplx total(0);
    for (size_t j = 0; j + 1 < b.path.size(); ++j) {
        cplx a = b.path[j], bb = b.path[j + 1];
        cplx ctr = 0.5 * (a + bb), h = 0.5 * (bb - a);
        cplx s(0);
        for (size_t q = 0; q < gx.size(); ++q) {
            cplx x = ctr + gx[q] * h;
            s += gw[q] * (f(b.sheet_plus, x) - f(b.sheet_minus, x));
        }
        total += s * h;
    }
    return total;
}

cplx ContourSystem::integrate_b(int i, const SheetFn& f) const {
    return integrate_btilde(i, f) - integrate_btilde(curve_->d, f);
}

cplx ContourSystem::integrate_cd(const SheetFn& f, int depth) const {
    cplx total(0);
    for (const auto& piece : cd_pieces(depth))
        total += line_integral(piece.path, [&](cplx x) { return f(piece.sheet_a, x); });
    return total;
}

bool ContourSystem::cut_coincident(int i) const {
    for (int c : cfg_.coincident)
        if (c == i) return true;
    return false;
}

int ContourSystem::petal_of(cplx x) const {
    const double half = M_PI / (curve_->d + 1);
    if (std::abs(x) < 0.55 * r_cut_) return 0;
    for (int i = 1; i <= curve_->d; ++i)
        if (std::abs(wrap(std::arg(x) - curve_->sector_angle(2 * i))) < half) return i;
    return 0;
}

PathState ContourSystem::eval_state(int sheet, cplx x) const {
    int p = petal_of(x);
    if (sheet == 0 && p > 0 && cut_coincident(p)) {
        PathState st = sols_[p]->eval(x);
        st.S += kappa_[p - 1];
        return st;
    }
    if (sheet > 0 && p != sheet / 2 && cut_coincident(sheet / 2)) {
        PathState st = sols_[0]->eval(x);
        st.S -= kappa_[sheet / 2 - 1];
        return st;
    }
    return sols_[sheet / 2]->eval(x);
}

bool ContourSystem::z_admissible(cplx z) const {
    if (std::abs(z) < r_cut_ - clearance_) return true;
    if (std::abs(z) > R_tail_) return false;
    for (int k = 1; k <= 2 * curve_->d + 1; k += 2)
        if (std::abs(wrap(std::arg(z) - curve_->sector_angle(k))) < 2.0 * cfg_.corridor_split)
            return true;
    return false;
}

// ---------------------------------------------------------------------------
// Aggregated cut transforms
// ---------------------------------------------------------------------------

void ContourSystem::build_cut_aggregates() {
    const int d = curve_->d;
    const double half = M_PI / (d + 1);
    const cplx hbar = curve_->hbar;
    const int npo = 8;   // outer nodes per edge
    const int npm = 6;   // partial-edge inner nodes per outer node
    const auto& gox = gl_nodes(npo);
    const auto& gow = gl_weights(npo);
    const auto& gmx = gl_nodes(npm);
    const auto& gmw = gl_weights(npm);
    const double max_len = 0.3 * std::max(curve_->scale(), r_cut_);
    agg_.assign(d, CutAgg{});

    for (int i = 1; i <= d; ++i) {
        if (cut_coincident(i)) {
            build_coincident_agg(i);
            continue;
        }
        CutAgg& A = agg_[i - 1];
        double thc = curve_->sector_angle(2 * i);
        cplx P = cuts_[i - 1].basepoint;

        auto make_half = [&](int dir) {
            std::vector<cplx> pts = arc_chords(r_cut_, thc, thc + dir * half, 0.35);
            auto ray = geometric_points(std::polar(r_cut_, thc + dir * half),
                                        std::polar(R_tail_, thc + dir * half), 5, 1.8);
            pts.insert(pts.end(), ray.begin() + 1, ray.end());
            pts = exp_split(*curve_, pts, cfg_.max_efold, max_len);
            return polyline_edges(pts);
        };
        std::vector<EdgeSpec> halves[2] = {make_half(+1), make_half(-1)};
        const double halfsign[2] = {-1.0, +1.0};  // cut runs from 2i+1 toward 2i-1

        for (int side = 0; side < 2; ++side) {
            const SectorSolution& sol = *sols_[side == 0 ? 0 : i];
            double tha = curve_->sector_angle(sol.sector());
            std::vector<cplx> app = {sol.seed_x(), std::polar(R_route_, tha)};
            if (side == 0) {
                double dth = wrap(thc - tha);
                auto sweep = arc_chords(R_route_, tha, tha + dth, 0.12);
                app.insert(app.end(), sweep.begin() + 1, sweep.end());
                app.push_back(std::polar(R_route_, thc));
            }
            app.push_back(P);
            app = exp_split(*curve_, app, cfg_.max_efold, max_len);
            auto app_edges = polyline_edges(app);
            std::vector<cplx> app_nodes, app_glw;
            for (auto& e : app_edges) {
                cplx c0 = 0.5 * (e.a + e.b), h = 0.5 * (e.b - e.a);
                for (int q = 0; q < npo; ++q) {
                    app_nodes.push_back(c0 + gox[q] * h);
                    app_glw.push_back(gow[q] * h);
                }
            }
            std::vector<cplx> app_chain = app_nodes;
            app_chain.push_back(P);
            auto app_states = sol.walk(app_chain);
            PathState stP = app_states.back();

            struct OuterNode {
                cplx x, wx, y, S;
                int edge = 0;
                std::vector<cplx> mini_x, mini_w, mini_S;
            };
            std::vector<std::vector<OuterNode>> half_outer(2);
            std::vector<std::vector<cplx>> half_in_x(2), half_in_glw(2), half_in_S(2);
            std::vector<std::vector<int>> half_in_edge(2);

            for (int hidx = 0; hidx < 2; ++hidx) {
                auto& edges = halves[hidx];
                std::vector<cplx> visit;
                struct Tag {
                    int kind;  // 0 inner, 1 outer, 2 mini
                    int oidx;
                };
                std::vector<Tag> tags;
                std::vector<OuterNode> outers;
                for (int m = 0; m < (int)edges.size(); ++m) {
                    cplx a = edges[m].a, b = edges[m].b;
                    int base = (int)outers.size();
                    struct Ev {
                        double t;
                        int kind, oidx;
                        cplx w;
                    };
                    std::vector<Ev> evs;
                    for (int q = 0; q < npo; ++q) {
                        double t = 0.5 * (gox[q] + 1.0);
                        evs.push_back({t, 0, -1, gow[q] * 0.5 * (b - a)});
                        evs.push_back({t, 1, base + q, cplx(0)});
                        for (int u = 0; u < npm; ++u) {
                            double tm = t * 0.5 * (gmx[u] + 1.0);
                            evs.push_back({tm, 2, base + q, gmw[u] * 0.5 * t * (b - a)});
                        }
                        OuterNode on;
                        on.x = a + t * (b - a);
                        on.wx = halfsign[hidx] * gow[q] * 0.5 * (b - a);
                        on.edge = m;
                        outers.push_back(on);
                    }
                    std::sort(evs.begin(), evs.end(),
                              [](const Ev& u, const Ev& v) { return u.t < v.t; });
                    for (auto& ev : evs) {
                        visit.push_back(a + ev.t * (b - a));
                        tags.push_back({ev.kind, ev.oidx});
                        if (ev.kind == 0) {
                            half_in_x[hidx].push_back(a + ev.t * (b - a));
                            half_in_glw[hidx].push_back(ev.w);
                            half_in_edge[hidx].push_back(m);
                        } else if (ev.kind == 2) {
                            outers[ev.oidx].mini_x.push_back(a + ev.t * (b - a));
                            outers[ev.oidx].mini_w.push_back(ev.w);
                        }
                    }
                }
                auto sts = sol.integrator().advance_through(stP, visit);
                for (size_t v = 0; v < visit.size(); ++v) {
                    if (tags[v].kind == 0)
                        half_in_S[hidx].push_back(sts[v].S);
                    else if (tags[v].kind == 1) {
                        outers[tags[v].oidx].S = sts[v].S;
                        outers[tags[v].oidx].y = sts[v].y;
                    } else
                        outers[tags[v].oidx].mini_S.push_back(sts[v].S);
                }
                half_outer[hidx] = std::move(outers);
            }

            // oriented node lists for the filling fractions
            {
                std::vector<PathState>& dst = (side == 0) ? A.st_out : A.st_in;
                for (int hidx : {0, 1}) {
                    auto list = half_outer[hidx];
                    if (hidx == 0) std::reverse(list.begin(), list.end());
                    for (auto& on : list) {
                        dst.push_back({on.x, on.y, on.S});
                        if (side == 0) {
                            A.xs.push_back(on.x);
                            A.wxs.push_back(on.wx);
                        }
                    }
                }
            }

            for (int l = 0; l < 3; ++l) {
                CauchyMeasure& M = (side == 0) ? A.out[l] : A.in[l];
                auto xpow = [&](cplx x) {
                    cplx p(1);
                    for (int j = 0; j < l; ++j) p /= x;
                    return p;
                };
                cplx T_P(0);
                for (int hidx = 0; hidx < 2; ++hidx)
                    for (auto& on : half_outer[hidx])
                        T_P += on.wx * xpow(on.x) * std::exp(2.0 * (stP.S - on.S) / hbar);
                for (size_t q = 0; q < app_nodes.size(); ++q) {
                    cplx w = app_glw[q] / hbar *
                             std::exp(2.0 * (app_states[q].S - stP.S) / hbar) * T_P;
                    if (std::abs(w) > 1e-300) M.add(app_states[q].x, w);
                }
                {  // analytic seed tail (two terms, derivative via a pair)
                    PathState s0 = sol.seed_state();
                    cplx rho = std::exp(2.0 * (s0.S - stP.S) / hbar) * T_P;
                    if (std::abs(rho) > 1e-250) {
                        cplx y = s0.y;
                        cplx yp = (curve_->U(s0.x) - y * y) / hbar;
                        M.add(s0.x, rho / (2.0 * y) + rho * hbar * yp / (4.0 * y * y * y));
                        double delta = 1e-4 * R_inf_;
                        cplx e = s0.x / std::abs(s0.x);
                        cplx wd = -rho * hbar / (8.0 * y * y * delta * e);
                        M.add(s0.x + delta * e, wd);
                        M.add(s0.x - delta * e, -wd);
                    }
                }
                for (int hidx = 0; hidx < 2; ++hidx) {
                    auto& outs = half_outer[hidx];
                    int ne = (int)halves[hidx].size();
                    std::vector<cplx> Gb(ne + 1, cplx(0)), Sref(ne + 1, cplx(0));
                    std::vector<char> has(ne + 1, 0);
                    cplx G(0), Sr(0);
                    bool any = false;
                    for (int m = ne; m >= 0; --m) {
                        if (m < ne) {
                            for (int q = (int)outs.size() - 1; q >= 0; --q) {
                                if (outs[q].edge != m) continue;
                                cplx term = outs[q].wx * xpow(outs[q].x);
                                if (!any) {
                                    G = term;
                                    any = true;
                                } else {
                                    G = term + std::exp(2.0 * (outs[q].S - Sr) / hbar) * G;
                                }
                                Sr = outs[q].S;
                            }
                        }
                        Gb[m] = G;
                        Sref[m] = Sr;
                        has[m] = any ? 1 : 0;
                    }
                    for (size_t q = 0; q < half_in_x[hidx].size(); ++q) {
                        int m = half_in_edge[hidx][q];
                        if (m + 1 <= ne && has[m + 1]) {
                            cplx w = half_in_glw[hidx][q] / hbar *
                                     std::exp(2.0 * (half_in_S[hidx][q] - Sref[m + 1]) / hbar) *
                                     Gb[m + 1];
                            if (std::abs(w) > 1e-300) M.add(half_in_x[hidx][q], w);
                        }
                    }
                    for (auto& on : outs) {
                        cplx fac = on.wx * xpow(on.x) / hbar;
                        for (size_t u = 0; u < on.mini_x.size(); ++u) {
                            cplx w = fac * on.mini_w[u] *
                                     std::exp(2.0 * (on.mini_S[u] - on.S) / hbar);
                            if (std::abs(w) > 1e-300) M.add(on.mini_x[u], w);
                        }
                    }
                }
            }
        }
    }
}

cplx ContourSystem::cut_transform_cauchy(int i, cplx z, int deriv, int xpow) const {
    const CutAgg& A = agg_[i - 1];
    return A.out[xpow].cauchy_d(z, deriv) - A.in[xpow].cauchy_d(z, deriv);
}

cplx ContourSystem::cut_transform_poly(int i, const ComplexPoly& h, int xpow) const {
    const CutAgg& A = agg_[i - 1];
    return A.out[xpow].poly(h) - A.in[xpow].poly(h);
}

cplx ContourSystem::cut_transform_moment(int i, int k, int xpow) const {
    const CutAgg& A = agg_[i - 1];
    return A.out[xpow].moment(k) - A.in[xpow].moment(k);
}

cplx ContourSystem::cut_transform(int i, const std::function<cplx(cplx)>& F, int xpow) const {
    const CutAgg& A = agg_[i - 1];
    return A.out[xpow].apply(F) - A.in[xpow].apply(F);
}


namespace {

// oriented GL nodes along a polyline; weights carry the edge vectors
void polyline_gl(const std::vector<cplx>& pts, int n, std::vector<cplx>& nodes,
                 std::vector<cplx>& ws) {
    const auto& gx = gl_nodes(n);
    const auto& gw = gl_weights(n);
    for (size_t j = 0; j + 1 < pts.size(); ++j) {
        cplx a = pts[j], b = pts[j + 1];
        if (std::abs(b - a) == 0) continue;
        for (size_t q = 0; q < gx.size(); ++q) {
            nodes.push_back(0.5 * (a + b) + 0.5 * gx[q] * (b - a));
            ws.push_back(gw[q] * 0.5 * (b - a));
        }
    }
}

}  // namespace

// For a cut with identified sheets, Khat_out - Khat_in on the cut equals
// D(z) / (hbar psi^2(x)) with D one stable line transform from infinity_0 to
// infinity_{2i}; the aggregated measure is D scaled by the cut integral of
// x^{-l} / psi^2.
void ContourSystem::build_coincident_agg(int i) {
    CutAgg& A = agg_[i - 1];
    const int d = curve_->d;
    const double half = M_PI / (d + 1);
    const cplx hbar = curve_->hbar;
    const SectorSolution& s0 = *sols_[0];
    const SectorSolution& si = *sols_[i];
    double th0 = curve_->sector_angle(0);
    double thc = curve_->sector_angle(2 * i);
    double thx0 = (i == 1) ? th0 + half : th0 - half;
    double thxi = (i == 1) ? thc - half : thc + half;
    cplx kap = kappa_[i - 1];
    const double max_len = 0.3 * std::max(curve_->scale(), r_cut_);

    // --- D transform along infinity_0 -> X* -> infinity_{2i}
    struct Part {
        std::vector<cplx> nodes, ws;
        std::vector<PathState> st;
    };
    Part p0, pi;
    {
        std::vector<cplx> pts = {s0.seed_x(), std::polar(r_cut_, th0)};
        auto arc = arc_chords(r_cut_, th0, thx0, 0.25);
        pts.insert(pts.end(), arc.begin() + 1, arc.end());
        pts = exp_split(*curve_, pts, cfg_.max_efold, max_len);
        polyline_gl(pts, 12, p0.nodes, p0.ws);
        p0.st = s0.walk(p0.nodes);
    }
    {
        std::vector<cplx> pts = {si.seed_x(), std::polar(r_cut_, thc)};
        auto arc = arc_chords(r_cut_, thc, thxi, 0.25);
        pts.insert(pts.end(), arc.begin() + 1, arc.end());
        pts = exp_split(*curve_, pts, cfg_.max_efold, max_len);
        polyline_gl(pts, 12, pi.nodes, pi.ws);
        pi.st = si.walk(pi.nodes);
        for (auto& st : pi.st) st.S += kap;   // match to the sheet-0 normalization
        for (auto& w : pi.ws) w = -w;         // traversed toward infinity_{2i}
    }
    // reference maximizing |e^{2S/hbar}|
    auto mfun = [&](cplx S) { return (2.0 * S / hbar).real(); };
    cplx SrefD = p0.st.front().S;
    for (auto& st : p0.st)
        if (mfun(st.S) > mfun(SrefD)) SrefD = st.S;
    for (auto& st : pi.st)
        if (mfun(st.S) > mfun(SrefD)) SrefD = st.S;
    CauchyMeasure D;
    auto add_part = [&](const Part& p) {
        for (size_t q = 0; q < p.nodes.size(); ++q) {
            cplx w = p.ws[q] * std::exp(2.0 * (p.st[q].S - SrefD) / hbar);
            if (std::abs(w) > 1e-300) D.add(p.st[q].x, w);
        }
    };
    add_part(p0);
    add_part(pi);
    // seed tails at both infinities
    auto seed_tail = [&](const SectorSolution& sol, cplx Sshift, double sign) {
        PathState st = sol.seed_state();
        st.S += Sshift;
        cplx rho = std::exp(2.0 * (st.S - SrefD) / hbar);
        if (std::abs(rho) < 1e-250) return;
        cplx y = st.y;
        cplx yp = (curve_->U(st.x) - y * y) / hbar;
        D.add(st.x, sign * (rho * hbar / (2.0 * y) + rho * hbar * hbar * yp / (4.0 * y * y * y)));
        double delta = 1e-4 * R_inf_;
        cplx e = st.x / std::abs(st.x);
        cplx wd = -sign * rho * hbar * hbar / (8.0 * y * y * delta * e);
        D.add(st.x + delta * e, wd);
        D.add(st.x - delta * e, -wd);
    };
    seed_tail(s0, cplx(0), +1.0);  // prefix from infinity_0
    seed_tail(si, kap, -1.0);      // suffix toward infinity_{2i}

    // --- J_l along the oriented cut path, all data from the petal solution
    const auto& path = cuts_[i - 1].path;
    auto pts = exp_split(*curve_, path, cfg_.max_efold, max_len);
    std::vector<cplx> jn, jw;
    polyline_gl(pts, 12, jn, jw);
    auto jst = si.walk(jn);
    for (auto& st : jst) st.S += kap;
    cplx SrefJ = jst.front().S;
    for (auto& st : jst)
        if (mfun(st.S) < mfun(SrefJ)) SrefJ = st.S;
    cplx Jl[3] = {0, 0, 0};
    for (size_t q = 0; q < jn.size(); ++q) {
        cplx base = jw[q] * std::exp(-2.0 * (jst[q].S - SrefJ) / hbar);
        cplx xp(1);
        for (int l = 0; l < 3; ++l) {
            Jl[l] += base * xp;
            xp /= jst[q].x;
        }
    }
    // ray tails of J at both ends
    auto jtail = [&](size_t q, cplx dir, double sign) {
        cplx kapp = 2.0 * jst[q].y * dir / hbar;
        if (kapp.real() <= 0) return;
        cplx g = std::exp(-2.0 * (jst[q].S - SrefJ) / hbar);
        cplx xp(1);
        for (int l = 0; l < 3; ++l) {
            Jl[l] += sign * g * xp / kapp;
            xp /= jst[q].x;
        }
    };
    if (!jn.empty()) {
        jtail(0, jn.front() / std::abs(jn.front()), -1.0);
        jtail(jn.size() - 1, jn.back() / std::abs(jn.back()), +1.0);
    }

    // --- combine: out[l] = D * (J_l e^{2(SrefD - SrefJ)/hbar} / hbar)
    cplx scal = std::exp(2.0 * (SrefD - SrefJ) / hbar) / hbar;
    if (!std::isfinite(std::abs(scal)))
        throw std::runtime_error("coincident cut: normalization overflow");
    for (int l = 0; l < 3; ++l) {
        A.out[l] = D;
        for (auto& w : A.out[l].w) w *= Jl[l] * scal;
        A.in[l] = CauchyMeasure{};
    }
    A.xs.clear();
    A.wxs.clear();
    A.st_out.clear();
    A.st_in.clear();
}

// Point measure crossing into identified foreign territory: the inner
// integral is split at the shared corridor point and each piece walked from
// its own seed.
std::shared_ptr<const CauchyMeasure> ContourSystem::composite_measure(int sheet, cplx x) const {
    const cplx hbar = curve_->hbar;
    int p = petal_of(x);
    int i = (sheet == 0) ? p : sheet / 2;
    const SectorSolution& near = (sheet == 0) ? *sols_[0] : *sols_[i];
    const SectorSolution& far = (sheet == 0) ? *sols_[i] : *sols_[0];
    cplx kap = kappa_[i - 1];
    // far-part S values shifted onto the requested sheet's normalization
    cplx kap_far = (sheet == 0) ? kap : -kap;

    const int d = curve_->d;
    const double half = M_PI / (d + 1);
    double th_near = curve_->sector_angle(near.sector());
    double th_far = curve_->sector_angle(far.sector());
    // shared corridor between the wedges of `near` and `far`
    double thx;
    if (sheet == 0)
        thx = (i == 1) ? th_near + half : th_near - half;
    else
        thx = (i == 1) ? th_far + half : th_far - half;
    cplx Xs = std::polar(r_cut_, thx);
    const double max_len = 0.3 * std::max(curve_->scale(), r_cut_);

    // prefix: seed_near -> hug arc -> Xs
    std::vector<cplx> pre = {near.seed_x(), std::polar(r_cut_, th_near)};
    {
        auto arc = arc_chords(r_cut_, th_near, thx, 0.25);
        pre.insert(pre.end(), arc.begin() + 1, arc.end());
        pre = exp_split(*curve_, pre, cfg_.max_efold, max_len);
    }
    std::vector<cplx> pn, pw;
    polyline_gl(pre, 12, pn, pw);
    auto pst = near.walk(pn);

    // far leg: Xs -> x with endpoint refinement, walked from the far seed
    std::vector<cplx> leg = {Xs};
    double floor_len = cfg_.diag_clearance * curve_->scale() / 3.0;
    {
        double rem = 1.0;
        std::vector<double> ts;
        while (rem * std::abs(x - Xs) > floor_len && ts.size() < 60) {
            rem *= 0.5;
            ts.push_back(1.0 - rem);
        }
        ts.push_back(1.0);
        for (double t : ts) leg.push_back(Xs + t * (x - Xs));
        leg = exp_split(*curve_, leg, cfg_.max_efold, max_len);
    }
    std::vector<cplx> fn, fw;
    polyline_gl(leg, 12, fn, fw);
    std::vector<cplx> chain = fn;
    chain.push_back(x);
    auto fst = far.walk(chain);
    cplx Sx = fst.back().S + kap_far;

    auto M = std::make_shared<CauchyMeasure>();
    for (size_t q = 0; q < pn.size(); ++q) {
        cplx w = pw[q] / hbar * std::exp(2.0 * (pst[q].S - Sx) / hbar);
        if (std::abs(w) > 1e-300) M->add(pst[q].x, w);
    }
    for (size_t q = 0; q < fn.size(); ++q) {
        cplx w = fw[q] / hbar * std::exp(2.0 * (fst[q].S + kap_far - Sx) / hbar);
        if (std::abs(w) > 1e-300) M->add(fst[q].x, w);
    }
    {  // seed tail on the near side
        PathState st = near.seed_state();
        cplx rho = std::exp(2.0 * (st.S - Sx) / hbar);
        if (std::abs(rho) > 1e-250) {
            cplx y = st.y;
            cplx yp = (curve_->U(st.x) - y * y) / hbar;
            M->add(st.x, rho / (2.0 * y) + rho * hbar * yp / (4.0 * y * y * y));
            double delta = 1e-4 * R_inf_;
            cplx e = st.x / std::abs(st.x);
            cplx wd = -rho * hbar / (8.0 * y * y * delta * e);
            M->add(st.x + delta * e, wd);
            M->add(st.x - delta * e, -wd);
        }
    }
    return M;
}

const ContourSystem& ContourSystem::fine() const {
    std::scoped_lock lk(mu_);
    if (!fine_) {
        auto f = std::shared_ptr<ContourSystem>(new ContourSystem());
        f->curve_ = curve_;
        f->sols_ = sols_;
        f->cfg_ = cfg_;
        f->cfg_.max_efold *= 0.55;
        f->r_cut_ = r_cut_;
        f->R_route_ = R_route_;
        f->R_inf_ = R_inf_;
        f->R_tail_ = R_tail_;
        f->clearance_ = clearance_;
        f->shell_radii_ = shell_radii_;
        f->cuts_ = cuts_;
        f->btilde_ = btilde_;
        f->kappa_ = kappa_;
        f->build_cut_aggregates();
        fine_ = f;
    }
    return *fine_;
}

std::vector<cplx> ContourSystem::filling_fractions() const {
    const cplx hbar = curve_->hbar;
    const cplx twopii = 2.0 * M_PI * cplx(0, 1);
    std::vector<cplx> eps;
    for (int i = 1; i <= curve_->d; ++i) {
        const CutAgg& A = agg_[i - 1];
        const Cut& c = cuts_[i - 1];
        if (cut_coincident(i)) {
            // identified sheets: the Wronskian vanishes, only residues remain
            eps.push_back((double)(c.res_out.size() + c.res_in.size()) * hbar);
            continue;
        }
        size_t best = 0;
        double bd = 1e300;
        for (size_t t = 0; t < A.xs.size(); ++t) {
            double dd = std::abs(A.xs[t] - c.basepoint);
            if (dd < bd) {
                bd = dd;
                best = t;
            }
        }
        cplx Sref = A.st_out[best].S + A.st_in[best].S;
        cplx wbar = A.st_out[best].y - A.st_in[best].y;
        cplx integral(0);
        for (size_t t = 0; t < A.xs.size(); ++t) {
            cplx expo = std::exp(-(A.st_out[t].S + A.st_in[t].S - Sref) / hbar);
            integral += A.wxs[t] * wbar * expo;
        }
        auto tail = [&](size_t t, cplx dir) {
            cplx ysum = A.st_out[t].y + A.st_in[t].y;
            cplx kappa = ysum * dir / hbar;
            if (kappa.real() <= 0) return cplx(0);
            cplx g = wbar * std::exp(-(A.st_out[t].S + A.st_in[t].S - Sref) / hbar);
            return g / kappa;
        };
        if (!A.xs.empty()) {
            cplx d0 = A.xs.front() / std::abs(A.xs.front());
            cplx d1 = A.xs.back() / std::abs(A.xs.back());
            integral -= tail(0, d0);
            integral += tail(A.xs.size() - 1, d1);
        }
        cplx res = (double)(c.res_out.size() + c.res_in.size()) * hbar;
        eps.push_back(integral / twopii + res);
    }
    return eps;
}

std::shared_ptr<const CauchyMeasure> ContourSystem::point_measure(int sheet, cplx x,
                                                                  std::optional<cplx> avoid) const {
    long long kx = (long long)std::llround(x.real() * 1e12);
    long long ky = (long long)std::llround(x.imag() * 1e12);
    if (!avoid) {
        std::scoped_lock lk(mu_);
        auto it = meas_cache_.find({sheet, kx, ky});
        if (it != meas_cache_.end()) return it->second;
    }
    {
        int p = petal_of(x);
        bool foreign = (sheet == 0 && p > 0 && cut_coincident(p)) ||
                       (sheet > 0 && p != sheet / 2 && cut_coincident(sheet / 2));
        if (foreign) {
            auto M = composite_measure(sheet, x);
            if (!avoid) {
                std::scoped_lock lk(mu_);
                meas_cache_[{sheet, kx, ky}] = M;
            }
            return M;
        }
    }
    const SectorSolution& sol = *sols_[sheet / 2];
    const cplx hbar = curve_->hbar;
    double tha = curve_->sector_angle(sheet);
    double dth = wrap(std::arg(x) - tha);
    std::vector<cplx> pts = {sol.seed_x()};
    cplx from = sol.seed_x();
    if (std::abs(x) > 1e-12 && std::abs(dth) > 1.05 * M_PI / (curve_->d + 1)) {
        double rsw = std::max(R_route_, 1.03 * std::abs(x));
        pts.push_back(std::polar(rsw, tha));
        auto sweep = arc_chords(rsw, tha, tha + dth, 0.12);
        pts.insert(pts.end(), sweep.begin() + 1, sweep.end());
        from = pts.back();
    }
    // final leg, geometrically refined toward x
    double floor_len = cfg_.diag_clearance * curve_->scale() / 3.0;
    std::vector<double> ts;
    double rem = 1.0;
    while (rem * std::abs(x - from) > floor_len && ts.size() < 60) {
        rem *= 0.5;
        ts.push_back(1.0 - rem);
    }
    ts.push_back(1.0);
    std::vector<cplx> leg;
    for (double t : ts) leg.push_back(from + t * (x - from));
    if (avoid) {
        for (size_t j = 0; j + 1 < leg.size(); ++j) {
            if (dist_point_segment(*avoid, leg[j], leg[j + 1]) < 0.6 * clearance_) {
                cplx dir = (x - from) / std::abs(x - from);
                cplx n = cplx(0, 1) * dir;
                double side = ((leg[j] - *avoid) * std::conj(n)).real() >= 0 ? 1.0 : -1.0;
                cplx bump = 1.2 * clearance_ * side * n;
                leg.insert(leg.begin() + j + 1, 0.5 * (leg[j] + leg[j + 1]) + bump);
                break;
            }
        }
    }
    pts.insert(pts.end(), leg.begin() + 1, leg.end());
    pts = exp_split(*curve_, pts, cfg_.max_efold, 0.5 * std::max(curve_->scale(), r_cut_));

    const auto& gxn = gl_nodes(12);
    const auto& gwn = gl_weights(12);
    std::vector<cplx> nodes, glws, chain;
    for (size_t j = 0; j + 1 < pts.size(); ++j) {
        cplx a = pts[j], b = pts[j + 1];
        if (std::abs(b - a) == 0) continue;
        for (size_t q = 0; q < gxn.size(); ++q) {
            nodes.push_back(0.5 * (a + b) + 0.5 * gxn[q] * (b - a));
            glws.push_back(gwn[q] * 0.5 * (b - a));
            chain.push_back(nodes.back());
        }
    }
    chain.push_back(x);
    auto states = sol.walk(chain);
    cplx Sx = states.back().S;

    auto M = std::make_shared<CauchyMeasure>();
    for (size_t q = 0; q < nodes.size(); ++q) {
        cplx w = glws[q] / hbar * std::exp(2.0 * (states[q].S - Sx) / hbar);
        if (std::abs(w) > 1e-300) M->add(nodes[q], w);
    }
    {
        PathState s0 = sol.seed_state();
        cplx rho = std::exp(2.0 * (s0.S - Sx) / hbar);
        if (std::abs(rho) > 1e-250) {
            cplx y = s0.y;
            cplx yp = (curve_->U(s0.x) - y * y) / hbar;
            M->add(s0.x, rho / (2.0 * y) + rho * hbar * yp / (4.0 * y * y * y));
            double delta = 1e-4 * R_inf_;
            cplx e = s0.x / std::abs(s0.x);
            cplx wd = -rho * hbar / (8.0 * y * y * delta * e);
            M->add(s0.x + delta * e, wd);
            M->add(s0.x - delta * e, -wd);
        }
    }
    if (!avoid) {
        std::scoped_lock lk(mu_);
        meas_cache_[{sheet, kx, ky}] = M;
    }
    return M;
}

}  // namespace qsc
