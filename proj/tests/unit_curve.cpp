#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qsc/contours.hpp"
#include "qsc/curve.hpp"
#include "qsc/schrodinger.hpp"

using namespace qsc;

namespace {
ComplexPoly poly(std::initializer_list<cplx> asc) { return ComplexPoly(std::vector<cplx>(asc)); }
}

TEST_CASE("polynomial square-root part by coefficient matching") {
    double hb = 0.3;
    auto Q1 = polynomial_sqrt_part(poly({-hb, 0, 1}));  // x^2 - hbar
    CHECK(Q1.degree() == 1);
    CHECK(std::abs(Q1.coeff(1) - 1.0) < 1e-15);
    CHECK(std::abs(Q1.coeff(0)) < 1e-15);

    auto Q2 = polynomial_sqrt_part(poly({0, 0, 0, 0, 1}));  // x^4
    CHECK(Q2.degree() == 2);
    CHECK(std::abs(Q2.coeff(2) - 1.0) < 1e-15);

    cplx a(0.7, 0.1), b(-0.3, 0.4);
    auto Q3 = polynomial_sqrt_part(poly({b, 0, a, 0, 1}));  // x^4 + a x^2 + b
    CHECK(std::abs(Q3.coeff(2) - 1.0) < 1e-15);
    CHECK(std::abs(Q3.coeff(1)) < 1e-15);
    CHECK(std::abs(Q3.coeff(0) - a * 0.5) < 1e-15);

    CHECK_THROWS(polynomial_sqrt_part(poly({1, 0, 0, 1})));  // odd degree
}

TEST_CASE("spectral data for the quadratic family") {
    double hb = 0.37;
    for (int n = 0; n <= 3; ++n) {
        auto c = derive_spectral_data(poly({(2.0 * n + 1.0) * hb, 0, 1}), hb);
        CHECK(c.d == 1);
        CHECK(std::abs(c.Vprime.coeff(1) - 2.0) < 1e-14);
        CHECK(std::abs(c.P.coeff(0) + (2.0 * n + 2.0) * hb) < 1e-14);
        CHECK(std::abs(c.t0 + (n + 1.0) * hb) < 1e-14);
    }
    auto c0 = derive_spectral_data(poly({-hb, 0, 1}), hb);
    CHECK(c0.P.is_zero());
    CHECK(std::abs(c0.t0) < 1e-15);
    auto c1 = derive_spectral_data(poly({-3.0 * hb, 0, 1}), hb);
    CHECK(std::abs(c1.P.coeff(0) - 2.0 * hb) < 1e-14);
    CHECK(std::abs(c1.t0 - hb) < 1e-14);
    // P depends linearly on U at fixed V'
    auto ca = derive_spectral_data(poly({-hb, 0, 1}), hb);
    auto cb = derive_spectral_data(poly({-5.0 * hb, 0, 1}), hb);
    auto cm = derive_spectral_data(poly({-3.0 * hb, 0, 1}), hb);
    CHECK(std::abs(0.5 * (ca.P.coeff(0) + cb.P.coeff(0)) - cm.P.coeff(0)) < 1e-14);
}

TEST_CASE("wkb seeds") {
    double hb = 1.0;
    auto g = derive_spectral_data(poly({-hb, 0, 1}), hb);
    auto s = wkb_seed(g, 0, 9.0, 8);
    CHECK(std::abs(s.y - (-9.0)) < 1e-12);  // psi = e^{-x^2/2}

    auto g3 = derive_spectral_data(poly({-3.0 * hb, 0, 1}), hb);
    auto s3 = wkb_seed(g3, 0, 10.0, 8);
    CHECK(std::abs(s3.y - (-10.0 + 1.0 / 10.0)) < 1e-12);  // psi = x e^{-x^2/2}

    auto q = derive_spectral_data(poly({1, 0, 1, 0, 1}), cplx(0.1), false);
    auto s4 = wkb_seed(q, 0, 6.0, 4);
    auto s6 = wkb_seed(q, 0, 6.0, 6);
    CHECK(std::abs(s4.y - s6.y) < 1e-4);
    // seed differences are crushed by the inward re-attraction
    RiccatiIntegrator integ(q);
    auto a4 = integ.advance({s4.x, s4.y, s4.S}, cplx(4.0));
    auto a6 = integ.advance({s6.x, s6.y, s6.S}, cplx(4.0));
    CHECK(std::abs(a4.y - a6.y) < 1e-10);
}

TEST_CASE("sector solutions on exact quadratic curves") {
    double hb = 1.0;
    auto g3 = derive_spectral_data(poly({-3.0 * hb, 0, 1}), hb);
    SectorSolution sol(g3, 0, 10.0, 6.0);
    for (cplx x : {cplx(2.0), cplx(1.0, 0.5), cplx(0.3, -0.2)}) {
        auto st = sol.eval(x);
        CHECK(std::abs(st.y - (-x + hb / x)) < 1e-9);
    }
    CHECK(std::abs(sol.resolvent(2.0) - hb / 2.0) < 1e-9);
    sol.find_zeros(3.0);
    REQUIRE(sol.zeros().size() == 1);
    CHECK(std::abs(sol.zeros()[0]) < 1e-7);

    auto g1 = derive_spectral_data(poly({-hb, 0, 1}), hb);
    SectorSolution sol1(g1, 0, 9.0, 6.0);
    CHECK(std::abs(sol1.eval(cplx(0.5, 0.3)).y - (-cplx(0.5, 0.3))) < 1e-10);
    sol1.find_zeros(3.0);
    CHECK(sol1.zeros().empty());
    // psi^2 ratio: e^{(x^2-xp^2)/hbar}
    auto r = sol1.psi_squared_ratio(cplx(0), cplx(1));
    CHECK(std::abs(r.value - std::exp(1.0)) < 1e-9);
    auto rid = sol1.psi_squared_ratio(cplx(0.7, 0.2), cplx(0.7, 0.2));
    CHECK(std::abs(rid.value - 1.0) < 1e-14);
}

TEST_CASE("coincident Hermite-type solution on the flipped branch") {
    double hb = 0.5;
    // U = x^2 + 5 hbar; solutions decay along the imaginary directions
    auto c = derive_spectral_data(poly({5.0 * hb, 0, 1}), hb, true);
    CHECK(std::abs(c.t0 - 2.0 * hb) < 1e-14);  // n = 2 on this branch
    double r0 = std::sqrt(hb / 2.0);
    // each sector solution sees the zero inside its own wedge
    for (int alpha : {0, 2}) {
        SectorSolution sol(c, alpha, 9.0, 5.0);
        sol.find_zeros(3.0);
        bool hit = false;
        for (cplx z : sol.zeros())
            if (std::abs(std::abs(z) - r0) < 1e-7 && std::abs(z.real()) < 1e-7) hit = true;
        CHECK(hit);
    }
}

TEST_CASE("riccati residual scan stays small") {
    auto q = derive_spectral_data(poly({1, 0, 1, 0, 1}), cplx(0.1), false);
    SectorSolution sol(q, 0, 7.0, 4.0);
    sol.find_zeros(3.5);
    double res = sol.riccati_residual_on_ray(0.05, 1.2, 6.5, 24);
    CHECK(res < 1e-8);
}
