// Tests for near-return detection, the B/A graph families, the intersection
// lattice, and the closing certificate.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pesinkit/closing.hpp"
#include "pesinkit/harness.hpp"

using namespace pesinkit;

namespace {

// torus skew product with constant derivative diag(2,1/2); (1/3, 0) is a
// genuine period-2 point
SystemSpec diag_torus() {
    SystemSpec s;
    s.kind = "diag_torus";
    s.k = 2;
    s.torus = true;
    s.n_branches = 2;
    s.dist_I = [](const CVec&) { return 1.0; };
    s.f = [](const CVec& p) {
        CVec q(2);
        Cplx x = 2.0 * p(0);
        q(0) = x - std::floor(x.real());
        // halving is two-valued on the circle; take the branch local to 0 so
        // representatives just below 1 map just below 1
        Cplx y = 0.5 * (p(1) - std::round(p(1).real()));
        q(1) = y - std::floor(y.real());
        return q;
    };
    s.df = [](const CVec&) {
        CMat J(2, 2);
        J << Cplx(2, 0), Cplx(0, 0), Cplx(0, 0), Cplx(0.5, 0);
        return J;
    };
    s.finv = [](const CVec& p, int branch) {
        CVec q(2);
        q(0) = 0.5 * p(0) + 0.5 * (branch & 1);
        Cplx y = 2.0 * p(1);
        q(1) = y - std::floor(y.real());
        return q;
    };
    return s;
}

ParameterBudget diag_budget() {
    ParameterBudget b;
    b.chi_top = b.chi_u = std::log(2.0);
    b.chi_s = -std::log(2.0);
    b.r0 = 1.0;
    return b;
}

struct DiagCase {
    SystemSpec sys;
    OrbitWindow w;
    PesinChartData charts;
    ParameterBudget budget;
};

DiagCase make_diag_case() {
    DiagCase c;
    c.sys = diag_torus();
    CVec z(2);
    z << Cplx(1.0 / 3.0, 0), Cplx(0, 0);
    c.w = periodic_window(c.sys, z, 2, 60, 60);
    LyapunovSpectrum sp = finite_lyapunov(c.w);
    Splitting split = oseledets_splitting(c.w, sp);
    c.budget = diag_budget();
    c.charts = build_pesin_charts(c.w, split, sp, c.budget.gamma,
                                  PesinConstants{1.0, 2.0, 0.05});
    return c;
}

}  // namespace

TEST_CASE("find_near_returns: exact periodic orbit and eta = 0") {
    SystemSpec cm = load_system("cat_map");
    CVec z(2);
    z << Cplx(0.2, 0), Cplx(0.4, 0);
    OrbitWindow w = periodic_window(cm, z, 2, 20, 20);
    auto hits = find_near_returns(w, 1e-6, 4);
    REQUIRE(!hits.empty());
    CHECK(hits.front().m == 2);  // sorted by m; period 2 is the smallest
    for (const auto& nr : hits) CHECK(nr.m % 2 == 0);
    CHECK(find_near_returns(w, 0.0, 4).empty());

    // non-periodic orbit, tiny eta -> nothing
    CVec seed(2);
    seed << Cplx(0.123456789, 0), Cplx(0.7654321, 0);
    OrbitWindow w2 = generate_orbit(cm, seed, 40, 40, 0);
    CHECK(find_near_returns(w2, 1e-12, 6).empty());
}

TEST_CASE("find_near_returns honors the index filter") {
    SystemSpec cm = load_system("cat_map");
    CVec z(2);
    z << Cplx(0.2, 0), Cplx(0.4, 0);
    OrbitWindow w = periodic_window(cm, z, 2, 20, 20);
    auto filtered = find_near_returns(w, 1e-6, 4, [](int i) { return i >= 0; });
    for (const auto& nr : filtered) CHECK(nr.i >= 0);
    CHECK(filtered.size() < find_near_returns(w, 1e-6, 4).size());
}

TEST_CASE("linear exact return: families stay flat and z is the base point") {
    DiagCase c = make_diag_case();
    ClosingSetup s = make_closing_setup(c.w, c.charts, 0, 2, c.budget);
    CHECK(s.a_m.norm() < 1e-14);

    auto B = build_forward_family(s, 4);
    auto A = build_backward_family(s, 4);
    REQUIRE(B.size() == 5);
    REQUIRE(A.size() == 5);
    for (const auto& g : B) {
        CHECK(g.measured_offset() < 1e-13);
        CHECK(g.measured_lip() < 1e-12);
    }
    for (const auto& g : A) CHECK(g.measured_offset() < 1e-13);

    GraphLattice lat = lattice_points(s, B, A);
    for (const auto& row : lat.z)
        for (const auto& zp : row) CHECK(c.sys.dist(zp, c.w.at(0)) < 1e-12);
}

TEST_CASE("linear exact return: certificate, limits, hyperbolicity") {
    DiagCase c = make_diag_case();
    ClosingCertificate cert = close_orbit(c.w, c.charts, 0, 2, c.budget);
    CHECK(cert.ok);
    INFO(cert.diagnostics);
    CHECK(cert.residual < 1e-12);
    CHECK(c.sys.dist(cert.z, c.w.at(0)) < 1e-12);
    REQUIRE(cert.eig_moduli.size() == 2);
    CHECK(cert.eig_moduli[0] == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(cert.eig_moduli[1] == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(cert.n_expanding == 1);
    CHECK(cert.n_contracting == 1);
    for (size_t t = 0; t < cert.shadow.size(); ++t)
        CHECK(cert.shadow[t] <= cert.shadow_bound[t]);

    ClosingSetup s = make_closing_setup(c.w, c.charts, 0, 2, c.budget);
    auto B = build_forward_family(s, 6);
    auto A = build_backward_family(s, 6);
    LimitGraphs lim = limit_graphs(s, B, A, cert.z);
    CHECK(lim.B_inf.measured_offset() < 1e-13);
    CHECK(lim.A_inf.measured_offset() < 1e-13);

    HyperbolicityReport rep = hyperbolicity_certificate(s, cert.z, lim);
    CHECK(rep.certified);
    const double e2g = std::exp(2 * c.budget.gamma);
    for (double f : rep.unstable_factors) {
        CHECK(f >= e2g);
        CHECK(f == doctest::Approx(2.0).epsilon(1e-6));
    }
    for (double f : rep.stable_factors) {
        CHECK(f <= 1.0 / e2g);
        CHECK(f == doctest::Approx(0.5).epsilon(1e-6));
    }
}

TEST_CASE("cat map near-return closes onto the rational period-2 point") {
    SystemSpec cm = load_system("cat_map");
    CVec seed(2);
    seed << Cplx(0.2 + 1e-5, 0), Cplx(0.4 + 1e-5, 0);
    OrbitWindow w = generate_orbit(cm, seed, 60, 60, 0);
    LyapunovSpectrum sp = finite_lyapunov(w);
    Splitting split = oseledets_splitting(w, sp);

    ParameterBudget b;
    b.gamma = 0.1;
    b.gamma0 = 0.009;
    b.h = 2.4e-3;
    b.chi_top = b.chi_u = sp.chi[0];
    b.chi_s = sp.chi[1];
    b.r0 = 1.0;
    REQUIRE(validate_budget(b).pass);
    PesinChartData charts =
        build_pesin_charts(w, split, sp, b.gamma, PesinConstants{1.0, 2.0, 0.05});

    auto hits = find_near_returns(w, 1e-3, 4, {}, std::exp(sp.chi[0] + 3 * b.gamma));
    bool found = false;
    for (const auto& nr : hits) found = found || (nr.i == 0 && nr.m == 2);
    CHECK(found);

    ClosingCertificate cert = close_orbit(w, charts, 0, 2, b);
    INFO(cert.diagnostics);
    CHECK(cert.ok);
    CHECK(cert.residual <= 1e-10);
    // modular arithmetic oracle: (1/5, 2/5) has period 2
    CVec p(2);
    p << Cplx(0.2, 0), Cplx(0.4, 0);
    CHECK(cm.dist(cert.z, p) < 1e-8);
    CHECK(cert.newton_gap >= 0.0);
    CHECK(cert.newton_gap <= 1e-8);
    const double lam = (3.0 + std::sqrt(5.0)) / 2.0;
    CHECK(cert.eig_moduli[0] == doctest::Approx(lam * lam).epsilon(1e-8));
    CHECK(cert.eig_moduli[1] == doctest::Approx(1.0 / (lam * lam)).epsilon(1e-8));

    SUBCASE("Cauchy decay and lattice relations on the same near-return") {
        ClosingSetup s = make_closing_setup(w, charts, 0, 2, b);
        auto B = build_forward_family(s, 6);
        auto A = build_backward_family(s, 6);
        const double eg = std::exp(-b.gamma);
        for (size_t j = 0; j + 2 < B.size(); ++j) {
            double d0 = graph_distance(B[j], B[j + 1]);
            double d1 = graph_distance(B[j + 1], B[j + 2]);
            if (d0 > 1e-14) CHECK(d1 <= eg * d0 + 1e-10);
        }
        for (size_t l = 0; l + 2 < A.size(); ++l) {
            double d0 = graph_distance(A[l], A[l + 1]);
            double d1 = graph_distance(A[l + 1], A[l + 2]);
            if (d0 > 1e-14) CHECK(d1 <= eg * d0 + 1e-10);
        }
        CHECK(graph_distance(B[0], B[1]) <= 3.0 * b.h * s.r(0));
        // lattice_points verifies f^m(z_{l,j}) = z_{l-1,j+1} internally
        GraphLattice lat = lattice_points(s, B, A);
        // monotone approach of the diagonal points
        for (size_t l = 1; l + 1 < lat.z.size(); ++l) {
            double step = cm.dist(lat.z[l + 1][l], lat.z[l][l - 1]);
            CHECK(step <= 4.0 * b.h * s.r(0) * std::exp(-b.gamma * (l - 1)));
        }
    }
}

TEST_CASE("complex henon saddle: certificate at the fixed point") {
    SystemSpec h = load_system("complex_henon c=-1 b=0.3");
    const double xr = (1.3 + std::sqrt(1.3 * 1.3 + 4.0)) / 2.0;
    CVec p(2);
    p << Cplx(xr, 0), Cplx(xr, 0);
    OrbitWindow w = periodic_window(h, p, 1, 80, 80);
    LyapunovSpectrum sp = finite_lyapunov(w);
    Splitting split = oseledets_splitting(w, sp);
    ParameterBudget b = suggest_budget(sp.chi[0], sp.chi[0], sp.chi[1], 0.05, 1e-3);
    PesinChartData charts = build_pesin_charts(w, split, sp, b.gamma, PesinConstants{});

    ClosingCertificate cert = close_orbit(w, charts, 0, 1, b);
    INFO(cert.diagnostics);
    CHECK(cert.ok);
    CHECK(cert.residual < 1e-12);
    CHECK(h.dist(cert.z, p) < 1e-10);
    // eigenvalue oracle: lambda = x +- sqrt(x^2 - 0.3)
    double disc = std::sqrt(xr * xr - 0.3);
    CHECK(cert.eig_moduli[0] == doctest::Approx(xr + disc).epsilon(1e-9));
    CHECK(cert.eig_moduli[1] == doctest::Approx(xr - disc).epsilon(1e-9));
    CHECK(cert.generations < 50);
}

TEST_CASE("newton_polish: convergence and divergence reporting") {
    SystemSpec h = load_system("complex_henon c=-1 b=0.3");
    const double xr = (1.3 + std::sqrt(1.3 * 1.3 + 4.0)) / 2.0;
    CVec p(2);
    p << Cplx(xr, 0), Cplx(xr, 0);

    NewtonResult exact = newton_polish(h, p, 1);
    CHECK(exact.converged);
    CHECK(exact.iterations == 0);

    CVec near = p;
    near(0) += Cplx(1e-3, 0);
    near(1) -= Cplx(5e-4, 0);
    NewtonResult res = newton_polish(h, near, 1);
    CHECK(res.converged);
    CHECK(res.iterations <= 6);
    CHECK(h.dist(res.z, p) < 1e-12);

    CVec far(2);
    far << Cplx(10, 0), Cplx(10, 0);
    // from far outside the trapping region the m = 6 iterates blow up; the
    // failure must be reported, not fatal
    NewtonResult div = newton_polish(h, far, 6);
    CHECK(!div.converged);
}

TEST_CASE("make_closing_setup rejects bad budgets and bad indices") {
    DiagCase c = make_diag_case();
    ParameterBudget bad = c.budget;
    bad.gamma0 = 0.25;
    CHECK_THROWS_WITH_AS(make_closing_setup(c.w, c.charts, 0, 2, bad),
                         doctest::Contains("budget"), toolkit_error);
    // override runs anyway
    ClosingSetup s = make_closing_setup(c.w, c.charts, 0, 2, bad, true);
    CHECK(s.m == 2);
    CHECK_THROWS_AS(make_closing_setup(c.w, c.charts, 0, 0, c.budget), toolkit_error);
    CHECK_THROWS_AS(make_closing_setup(c.w, c.charts, 59, 5, c.budget), toolkit_error);
}
