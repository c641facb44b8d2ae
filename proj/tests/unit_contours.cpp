#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qsc/contours.hpp"

using namespace qsc;

namespace {

ComplexPoly poly(std::initializer_list<cplx> asc) { return ComplexPoly(std::vector<cplx>(asc)); }

std::shared_ptr<ContourSystem> make_system(const SpectralCurve& c, ContourConfig cfg = {}) {
    auto radii = plan_radii(c, cfg);
    SolutionOptions sopt;
    sopt.ode.rel_tol = cfg.ode_rel_tol;
    sopt.wkb_order = cfg.wkb_order;
    auto sols = build_sector_solutions(c, radii.R_inf, radii.R_route, sopt);
    return ContourSystem::build(c, std::move(sols), cfg);
}

}  // namespace

TEST_CASE("filling fractions of the exact quadratic curves") {
    double hb = 1.0;
    ContourConfig cfg;
    cfg.coincident = {1};
    static auto c3 = derive_spectral_data(poly({-3.0 * hb, 0, 1}), hb);
    auto cs3 = make_system(c3, cfg);
    auto eps3 = cs3->filling_fractions();
    REQUIRE(eps3.size() == 1);
    CHECK(std::abs(eps3[0] - hb) < 1e-10);

    static auto c1 = derive_spectral_data(poly({-hb, 0, 1}), hb);
    auto cs1 = make_system(c1, cfg);
    auto eps1 = cs1->filling_fractions();
    CHECK(std::abs(eps1[0]) < 1e-10);
}

TEST_CASE("quartic filling fractions: symmetry and sum rule") {
    static auto q = derive_spectral_data(poly({1, 0, 1, 0, 1}), cplx(0.1));
    auto cs = make_system(q);
    auto eps = cs->filling_fractions();
    REQUIRE(eps.size() == 2);
    cplx sum = eps[0] + eps[1];
    CAPTURE(eps[0]);
    CAPTURE(eps[1]);
    CHECK(std::abs(sum - q.t0) < 1e-8);
    CHECK(std::abs(eps[0] - q.t0 * 0.5) < 1e-6);
    CHECK(std::abs(eps[1] - q.t0 * 0.5) < 1e-6);
}

TEST_CASE("aggregated cut transform matches direct quadrature") {
    static auto q = derive_spectral_data(poly({1, 0, 1, 0, 1}), cplx(0.1));
    auto cs = make_system(q);
    ComplexPoly h = poly({0.3, 1.0});  // x + 0.3
    for (int i : {1, 2}) {
        cplx agg = cs->cut_transform_poly(i, h, 0);
        cplx direct = cs->integrate_atilde(i, [&](int sheet, cplx x) {
            return cs->point_measure(sheet, x)->poly(h);
        });
        CAPTURE(i);
        CAPTURE(agg);
        CAPTURE(direct);
        CHECK(std::abs(agg - direct) < 1e-7 * (1.0 + std::abs(agg)));
    }
}
