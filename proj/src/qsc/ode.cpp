#include "qsc/ode.hpp"

#include <cmath>
#include <stdexcept>

namespace qsc {

namespace {

// Dormand–Prince 5(4) tableau.
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247,
                 A64 = 49.0 / 176, A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                 B6 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200,
                 E6 = 22.0 / 525, E7 = -1.0 / 40;

struct Vec2 {
    cplx a, b;
};
inline Vec2 operator+(Vec2 u, Vec2 v) { return {u.a + v.a, u.b + v.b}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.a, s * v.b}; }

// Adaptive Dormand–Prince along tau in [0, L]. stop() runs after each
// accepted step and halts the run when it returns true; hmax() bounds the
// step size. Returns true if tau reached L.
template <typename F, typename Stop, typename Hmax>
bool rk45(F&& f, Vec2& u, double L, double rtol, double atol, int& budget, Stop&& stop,
          Hmax&& hmax, double& tau_out) {
    double tau = 0;
    double h = std::min(L, std::max(L * 1e-4, 1e-10));
    Vec2 k1 = f(tau, u);
    while (tau < L) {
        if (budget-- <= 0) throw std::runtime_error("ode: step budget exhausted");
        h = std::min({h, L - tau, hmax(tau, u)});
        Vec2 k2 = f(tau + A21 * h, u + h * (A21 * k1));
        Vec2 k3 = f(tau + 0.3 * h, u + h * (A31 * k1 + A32 * k2));
        Vec2 k4 = f(tau + 0.8 * h, u + h * (A41 * k1 + A42 * k2 + A43 * k3));
        Vec2 k5 = f(tau + 8.0 / 9 * h, u + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        Vec2 k6 = f(tau + h, u + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        Vec2 u5 = u + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        Vec2 k7 = f(tau + h, u5);
        Vec2 err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        double sc_a = atol + rtol * std::max(std::abs(u.a), std::abs(u5.a));
        double sc_b = atol + rtol * std::max(std::abs(u.b), std::abs(u5.b));
        double en = std::max(std::abs(err.a) / sc_a, std::abs(err.b) / sc_b);
        if (!std::isfinite(en)) en = 1e12;
        if (en <= 1.0) {
            tau += h;
            u = u5;
            k1 = k7;
            if (stop(u, tau)) {
                tau_out = tau;
                return false;
            }
        }
        double fac = (en > 0) ? 0.9 * std::pow(en, -0.2) : 5.0;
        h *= std::min(5.0, std::max(0.2, fac));
        if (h < 1e-16 * (L + 1.0)) throw std::runtime_error("ode: step underflow");
    }
    tau_out = L;
    return true;
}

// Newton refinement of a zero of psi from linear-system data (a, b) at x.
cplx refine_zero(const SpectralCurve& c, cplx x, Vec2 v, cplx s) {
    cplx hbar = c.hbar;
    auto f = [&](cplx xx, Vec2 vv) -> Vec2 { return {vv.b / hbar, c.U(xx) * vv.a / hbar}; };
    for (int it = 0; it < 5; ++it) {
        cplx h = s - x;
        Vec2 k1 = f(x, v);
        Vec2 k2 = f(x + 0.5 * h, v + (0.5) * Vec2{h * k1.a, h * k1.b});
        Vec2 k3 = f(x + 0.5 * h, v + (0.5) * Vec2{h * k2.a, h * k2.b});
        Vec2 k4 = f(x + h, v + Vec2{h * k3.a, h * k3.b});
        v = v + (1.0 / 6.0) * Vec2{h * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a),
                                   h * (k1.b + 2.0 * k2.b + 2.0 * k3.b + k4.b)};
        x = s;
        if (std::abs(v.b) == 0.0) break;
        cplx snew = x - hbar * v.a / v.b;
        bool conv = std::abs(snew - s) < 1e-14 * (1.0 + std::abs(s));
        s = snew;
        if (conv) break;
    }
    return s;
}

void record_zero(std::vector<cplx>* zeros, cplx s, double scale) {
    if (!zeros) return;
    for (cplx z : *zeros)
        if (std::abs(z - s) < 1e-7 * scale) return;
    zeros->push_back(s);
}

}  // namespace

RiccatiIntegrator::RiccatiIntegrator(const SpectralCurve& curve, OdeOptions opt)
    : curve_(&curve), opt_(opt) {}

double RiccatiIntegrator::local_y_cap(cplx x) const {
    return opt_.y_cap_factor * (1.0 + std::abs(curve_->Vprime(x)));
}

PathState RiccatiIntegrator::advance_riccati(PathState st, cplx x1, std::vector<cplx>* zeros,
                                             int& budget) const {
    const cplx hbar = curve_->hbar;
    while (std::abs(st.x - x1) > 1e-15 * (1.0 + std::abs(x1))) {
        double L = std::abs(x1 - st.x);
        cplx e = (x1 - st.x) / L;
        cplx x0 = st.x;
        auto f = [&](double tau, Vec2 u) -> Vec2 {
            cplx x = x0 + tau * e;
            return {e * (curve_->U(x) - u.a * u.a) / hbar, e * u.a};
        };
        Vec2 u{st.y, st.S};
        bool blew = false;
        auto stop = [&](const Vec2& v, double tau) {
            if (std::abs(v.a) > local_y_cap(x0 + tau * e)) {
                blew = true;
                return true;
            }
            return false;
        };
        auto hmax = [&](double, const Vec2&) { return L; };
        double tau_end = 0;
        bool done = rk45(f, u, L, opt_.rel_tol, opt_.abs_tol, budget, stop, hmax, tau_end);
        st.x = x0 + tau_end * e;
        st.y = u.a;
        st.S = u.b;
        if (done && !blew) return st;
        bool reached = false;
        st = advance_linear(st, x1, 0, zeros, budget, reached);
        if (reached) return st;
    }
    return st;
}

// Linear mode: integrate (a, b) = e^{-S_ref/hbar} (psi, hbar psi') through the
// pole of y. log a is accumulated stepwise with the step size capped by the
// local phase-rotation rate, so Im S keeps its winding.
PathState RiccatiIntegrator::advance_linear(PathState st, cplx x1, double, std::vector<cplx>* zeros,
                                            int& budget, bool& reached_end) const {
    const cplx hbar = curve_->hbar;
    const double hb = std::abs(hbar);
    const double scale = curve_->scale();
    double L = std::abs(x1 - st.x);
    cplx e = (x1 - st.x) / L;
    cplx x0 = st.x;
    cplx Sref = st.S;
    cplx logsum = 0;

    Vec2 u{cplx(1.0), st.y};  // (a, b)
    cplx a_prev = u.a;
    bool exited = false;
    auto f = [&](double tau, Vec2 v) -> Vec2 {
        cplx x = x0 + tau * e;
        return {e * v.b / hbar, e * curve_->U(x) * v.a / hbar};
    };
    auto stop = [&](const Vec2& v, double tau) {
        cplx dl = std::log(v.a / a_prev);
        if (std::isfinite(dl.real()) && std::isfinite(dl.imag())) logsum += dl;
        a_prev = v.a;
        cplx x = x0 + tau * e;
        double ycap = local_y_cap(x);
        if (std::abs(v.b) > 0 && std::abs(v.a) * ycap < 1.5 * std::abs(v.b)) {
            cplx s = x - hbar * v.a / v.b;
            if (std::abs(s - x) < 2.5 * hb / ycap)
                record_zero(zeros, refine_zero(*curve_, x, v, s), scale);
        }
        if (std::abs(v.b / v.a) < 0.5 * ycap &&
            (std::abs(v.b) == 0.0 || std::abs(hbar * v.a / v.b) > 1.8 * hb / ycap)) {
            exited = true;
            return true;
        }
        return false;
    };
    auto hmax = [&](double, const Vec2& v) {
        double rot = std::abs(v.b) / (hb * std::max(std::abs(v.a), 1e-300));
        // floor keeps a path grazing a zero from stalling; the principal-log
        // winding may then be off only for sub-floor graze distances
        return std::max(1.0 / (rot + 1.0 / L), 1e-9 * (1.0 + std::abs(x0)));
    };
    double tau_end = 0;
    bool done = rk45(f, u, L, opt_.rel_tol * 10, opt_.abs_tol, budget, stop, hmax, tau_end);
    reached_end = done && !exited;
    PathState out;
    out.x = x0 + tau_end * e;
    out.y = u.b / u.a;
    out.S = Sref + hbar * logsum;
    return out;
}

PathState RiccatiIntegrator::advance(const PathState& st, cplx x1, std::vector<cplx>* zeros) const {
    if (std::abs(st.x - x1) < 1e-15 * (1.0 + std::abs(x1))) return st;
    int budget = opt_.max_steps;
    return advance_riccati(st, x1, zeros, budget);
}

std::vector<PathState> RiccatiIntegrator::advance_through(const PathState& st,
                                                          const std::vector<cplx>& pts,
                                                          std::vector<cplx>* zeros) const {
    std::vector<PathState> out;
    out.reserve(pts.size());
    PathState cur = st;
    for (cplx p : pts) {
        cur = advance(cur, p, zeros);
        out.push_back(cur);
    }
    return out;
}

}  // namespace qsc
