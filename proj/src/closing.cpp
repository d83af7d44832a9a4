#include "pesinkit/closing.hpp"

#include <algorithm>
#include <cmath>

namespace pesinkit {

std::vector<NearReturn> find_near_returns(
    const OrbitWindow& w, double eta, int max_m,
    const std::function<bool(int)>& good_index_filter, double history_rate,
    int history_depth) {
    std::vector<NearReturn> out;
    if (eta <= 0.0) return out;
    for (int m = 1; m <= max_m; ++m) {
        for (int i = w.lo(); i + m <= w.hi(); ++i) {
            if (good_index_filter &&
                (!good_index_filter(i) || !good_index_filter(i + m)))
                continue;
            double d = 0.0;
            int depth = std::min({history_depth, i - w.lo(), i + m - w.lo()});
            double weight = 1.0;
            for (int j = 0; j <= depth; ++j) {
                d = std::max(d, weight * w.sys->dist(w.at(i - j), w.at(i + m - j)));
                weight /= history_rate;
            }
            if (d < eta) out.push_back({i, m, d});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const NearReturn& a, const NearReturn& b) {
        return a.m != b.m ? a.m < b.m : a.window_dist < b.window_dist;
    });
    return out;
}

ClosingSetup make_closing_setup(const OrbitWindow& w, const PesinChartData& charts,
                                int i, int m, const ParameterBudget& budget,
                                bool override_budget) {
    if (m <= 0) throw toolkit_error("closing: return time must be positive");
    if (i < w.lo() || i + m > w.hi())
        throw toolkit_error("closing: near-return outside the window");
    if (!override_budget && !validate_budget(budget).pass)
        throw toolkit_error("closing: parameter budget fails validation");

    ClosingSetup s;
    s.w = &w;
    s.charts = &charts;
    s.i0 = i;
    s.m = m;
    s.budget = budget;
    s.maps.reserve(m);
    for (int t = 0; t < m; ++t)
        s.maps.push_back(read_local_map(w, charts, i + t, budget.h));
    s.a_m = w.sys->displacement(w.at(i), w.at(i + m));
    return s;
}

namespace {

// conservative declared bounds for a recentered graph, from the measured
// graph plus the affine perturbation sizes
struct RecenterBounds {
    double lip, beta;
};

RecenterBounds recenter_bounds(const LipGraph& G, const SplitFrame& src,
                               const SplitFrame& dst, const CVec& a,
                               double floor_lip) {
    double defect = opnorm(dst.c_gamma_inv * src.c_gamma - CMat::Identity(2, 2));
    double tn = (dst.c_gamma_inv * a).norm();
    RecenterBounds b;
    b.lip = std::max(floor_lip, G.measured_lip() * (1 + 3 * defect) + 3 * defect);
    b.beta = G.measured_offset() * (1 + 3 * defect) + 1.5 * tn +
             defect * G.alpha + 1e-18;
    return b;
}

LipGraph flat_graph(Orientation o, double alpha) {
    LipGraph g;
    g.orient = o;
    g.alpha = alpha;
    g.beta = 0.0;
    g.lip = 0.0;
    g.coeffs = {Cplx(0, 0)};
    return g;
}

}  // namespace

LipGraph forward_generation(const ClosingSetup& s, const LipGraph& B) {
    const double h = s.budget.h, g0 = s.budget.gamma0, gamma = s.budget.gamma;
    LipGraph G = B;
    for (int t = 0; t < s.m; ++t) {
        TransformResult res;
        try {
            res = push_forward(G, s.maps[t], g0);
        } catch (const toolkit_error& e) {
            throw toolkit_error("forward generation failed at step " +
                                std::to_string(t) + ": " + e.what());
        }
        double target = h * s.r(t + 1) * std::exp(gamma);
        if (res.achieved_domain < target * (1 - 1e-12))
            throw toolkit_error("forward generation: domain shortfall at step " +
                                std::to_string(t));
        G = cutoff(res.graph, target);
        // stage-box containment
        if (G.measured_offset() > std::exp(gamma) * h * s.r(t + 1) * (1 + 1e-9))
            throw toolkit_error("forward generation: stage box violated at step " +
                                std::to_string(t));
    }
    RecenterFrames fr{s.frame(s.m), s.frame(0), s.a_m, h, s.r(0)};
    RecenterBounds rb = recenter_bounds(G, fr.src, fr.dst, fr.a, g0);
    return recenter(G, fr, h * s.r(0), rb.lip, rb.beta);
}

LipGraph backward_generation(const ClosingSetup& s, const LipGraph& A) {
    const double h = s.budget.h, g0 = s.budget.gamma0, gamma = s.budget.gamma;
    // move to the chart at f^m(x), with a margin so the source graph covers it
    RecenterFrames fr{s.frame(0), s.frame(s.m), CVec(-s.a_m), h, s.r(s.m)};
    RecenterBounds rb = recenter_bounds(A, fr.src, fr.dst, fr.a, g0);
    LipGraph G = recenter(A, fr, std::exp(-gamma / 2) * h * s.r(s.m), rb.lip, rb.beta);
    for (int t = s.m - 1; t >= 0; --t) {
        try {
            G = pull_back(G, s.maps[t], gamma, g0, G.measured_offset());
        } catch (const toolkit_error& e) {
            throw toolkit_error("backward generation failed at step " +
                                std::to_string(t) + ": " + e.what());
        }
        G = cutoff(G, std::min(G.alpha, h * s.r(t)));
    }
    if (G.alpha < h * s.r(0) * (1 - 1e-12))
        throw toolkit_error("backward generation: domain shortfall");
    return G;
}

std::vector<LipGraph> build_forward_family(const ClosingSetup& s, int J) {
    std::vector<LipGraph> fam;
    fam.reserve(J + 1);
    fam.push_back(flat_graph(Orientation::horizontal, s.budget.h * s.r(0)));
    for (int j = 0; j < J; ++j) fam.push_back(forward_generation(s, fam.back()));
    return fam;
}

std::vector<LipGraph> build_backward_family(const ClosingSetup& s, int L) {
    std::vector<LipGraph> fam;
    fam.reserve(L + 1);
    fam.push_back(flat_graph(Orientation::vertical, s.budget.h * s.r(0)));
    for (int l = 0; l < L; ++l) fam.push_back(backward_generation(s, fam.back()));
    return fam;
}

namespace {

CVec chart_to_ambient(const ClosingSetup& s, const CVec& p) {
    return s.w->sys->wrap(s.w->at(s.i0) + s.frame(0).c_gamma * p);
}

CVec iterate_f(const SystemSpec& sys, CVec z, int m) {
    for (int t = 0; t < m; ++t) {
        z = sys.f(z);
        if (z.norm() > 1e8) throw toolkit_error("closing: iterate diverges");
    }
    return sys.wrap(z);
}

}  // namespace

GraphLattice lattice_points(const ClosingSetup& s, const std::vector<LipGraph>& B,
                            const std::vector<LipGraph>& A) {
    GraphLattice lat;
    lat.m = s.m;
    lat.B = B;
    lat.A = A;
    const int J = static_cast<int>(B.size()) - 1;
    const int L = static_cast<int>(A.size()) - 1;
    lat.z.assign(L + 1, std::vector<CVec>(J + 1));
    lat.z_chart.assign(L + 1, std::vector<CVec>(J + 1));
    for (int l = 0; l <= L; ++l)
        for (int j = 0; j <= J; ++j) {
            CVec p = intersect_graphs(B[j], A[l]);
            lat.z_chart[l][j] = p;
            lat.z[l][j] = chart_to_ambient(s, p);
        }
    // functional relation f^m(z_{l,j}) = z_{l-1,j+1}
    for (int l = 1; l <= L; ++l)
        for (int j = 0; j + 1 <= J; ++j) {
            CVec img = iterate_f(*s.w->sys, lat.z[l][j], s.m);
            if (s.w->sys->dist(img, lat.z[l - 1][j + 1]) > 1e-8)
                throw toolkit_error("lattice relation violated at (l=" +
                                    std::to_string(l) + ", j=" + std::to_string(j) +
                                    ")");
        }
    return lat;
}

NewtonResult newton_polish(const SystemSpec& sys, const CVec& z0, int m,
                           int max_iter) {
    NewtonResult res;
    res.z = sys.wrap(z0);
    const int k = sys.k;
    for (int it = 0; it < max_iter; ++it) {
        CVec zm = res.z;
        CMat J = CMat::Identity(k, k);
        bool blown = false;
        for (int t = 0; t < m; ++t) {
            J = sys.df(zm) * J;
            zm = sys.f(zm);
            if (zm.norm() > 1e8) {
                blown = true;
                break;
            }
        }
        if (blown) break;
        CVec F = sys.displacement(res.z, sys.wrap(zm));
        res.residual = F.norm();
        res.iterations = it;
        if (res.residual <= 1e-13 * std::max(1.0, res.z.norm())) {
            res.converged = true;
            return res;
        }
        CMat M = J - CMat::Identity(k, k);
        CVec step = M.fullPivLu().solve(F);
        if (!step.allFinite() || step.norm() > 1e6) break;
        res.z = sys.wrap(res.z - step);
    }
    return res;
}

std::vector<double> periodic_eigenvalues(const SystemSpec& sys, const CVec& z,
                                         int m, CMat* vectors) {
    const int k = sys.k;
    CMat P = CMat::Identity(k, k);
    double logscale = 0.0;
    CVec q = z;
    for (int t = 0; t < m; ++t) {
        P = sys.df(q) * P;
        double n = P.norm();
        if (n < 1e-300) throw toolkit_error("closing: derivative product vanishes");
        P /= n;
        logscale += std::log(n);
        q = sys.f(q);
    }
    Eigen::ComplexEigenSolver<CMat> es(P);
    std::vector<double> moduli(k);
    for (int j = 0; j < k; ++j)
        moduli[j] = std::abs(es.eigenvalues()(j)) * std::exp(logscale / 1.0);
    // sort descending for stable reporting
    std::vector<int> idx(k);
    for (int j = 0; j < k; ++j) idx[j] = j;
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return moduli[a] > moduli[b]; });
    std::vector<double> out(k);
    CMat V(k, k);
    for (int j = 0; j < k; ++j) {
        out[j] = moduli[idx[j]];
        V.col(j) = es.eigenvectors().col(idx[j]);
    }
    if (vectors) *vectors = V;
    return out;
}

ClosingCertificate close_orbit(const OrbitWindow& w, const PesinChartData& charts,
                               int i, int m, const ParameterBudget& budget,
                               bool override_budget) {
    ClosingSetup s = make_closing_setup(w, charts, i, m, budget, override_budget);
    const double h = budget.h, gamma = budget.gamma;

    ClosingCertificate cert;
    cert.i0 = i;
    cert.m = m;
    cert.budget = budget;

    std::vector<LipGraph> B{flat_graph(Orientation::horizontal, h * s.r(0))};
    std::vector<LipGraph> A{flat_graph(Orientation::vertical, h * s.r(0))};
    CVec p_prev;
    bool have_prev = false;
    CVec p;
    const int cap = 200;
    int l = 0;
    for (l = 0; l < cap; ++l) {
        A.push_back(backward_generation(s, A.back()));
        if (static_cast<int>(B.size()) < l + 1)
            B.push_back(forward_generation(s, B.back()));
        p = intersect_graphs(B[l], A[l + 1]);
        if (have_prev && (p - p_prev).norm() < 1e-12) break;
        p_prev = p;
        have_prev = true;
    }
    cert.generations = l + 1;
    if (l == cap) {
        cert.diagnostics = "generation cap reached without convergence";
        return cert;
    }

    const SystemSpec& sys = *w.sys;
    cert.z = chart_to_ambient(s, p);
    CVec img = iterate_f(sys, cert.z, m);
    cert.residual = sys.dist(img, cert.z);

    NewtonResult np = newton_polish(sys, cert.z, m);
    cert.newton_gap = np.converged ? sys.dist(np.z, cert.z) : -1.0;

    // shadowing: dist(f^t(x), f^t(z)) against eps * max(e^{-gamma t}, e^{-gamma(m-t)})
    double c_x = 0.0, rmin = 1e300;
    for (int t = 0; t <= m; ++t) {
        c_x = std::max(c_x, opnorm(s.frame(t).c_gamma));
        rmin = std::min(rmin, s.r(t));
    }
    cert.eps = c_x * std::exp(2 * gamma) * 4.0 * h / std::min(budget.r0, rmin);
    CVec zq = cert.z;
    bool shadow_ok = true;
    for (int t = 0; t <= m; ++t) {
        double d = sys.dist(w.at(i + t), zq);
        double bound = cert.eps * std::max(std::exp(-gamma * t),
                                           std::exp(-gamma * (m - t)));
        cert.shadow.push_back(d);
        cert.shadow_bound.push_back(bound);
        shadow_ok = shadow_ok && (d <= bound);
        if (t < m) zq = sys.wrap(sys.f(zq));
    }

    CMat V;
    cert.eig_moduli = periodic_eigenvalues(sys, cert.z, m, &V);
    const double lo = std::exp(-gamma), hi = std::exp(gamma);
    bool band_free = true;
    for (double mod : cert.eig_moduli) {
        if (mod >= hi) ++cert.n_expanding;
        else if (mod <= lo) ++cert.n_contracting;
        else band_free = false;
    }
    cert.Eu = V.leftCols(cert.n_expanding);
    cert.Es = V.rightCols(sys.k - cert.n_expanding);

    cert.ok = true;
    if (cert.residual > 1e-9) {
        cert.ok = false;
        cert.diagnostics += "residual above 1e-9; ";
    }
    if (!(np.converged && cert.newton_gap <= 1e-8)) {
        cert.ok = false;
        cert.diagnostics += "newton cross-check failed; ";
    }
    if (!shadow_ok) {
        cert.ok = false;
        cert.diagnostics += "shadow bound violated; ";
    }
    if (!band_free) {
        cert.ok = false;
        cert.diagnostics += "eigenvalue inside the (e^{-gamma}, e^{gamma}) band; ";
    }
    return cert;
}

LimitGraphs limit_graphs(const ClosingSetup& s, const std::vector<LipGraph>& B,
                         const std::vector<LipGraph>& A, const CVec& z_ambient) {
    if (B.size() < 2 || A.size() < 2)
        throw toolkit_error("limit_graphs: families too short");
    LimitGraphs lim;
    lim.b_gap = graph_distance(B[B.size() - 2], B.back());
    lim.a_gap = graph_distance(A[A.size() - 2], A.back());
    if (lim.b_gap > 1e-11 || lim.a_gap > 1e-11)
        throw toolkit_error("limit_graphs: families not converged");
    lim.B_inf = B.back();
    lim.A_inf = A.back();

    const SystemSpec& sys = *s.w->sys;
    const CVec x = s.w->at(s.i0);
    const CMat& C = s.frame(0).c_gamma;
    const CMat& Ci = s.frame(0).c_gamma_inv;

    // invariance of the stable limit under f^m
    for (int t = 0; t < 16; ++t) {
        double th = 2.0 * M_PI * t / 16.0;
        Cplx y = 0.5 * lim.A_inf.alpha * Cplx(std::cos(th), std::sin(th));
        CVec wv(2);
        wv << lim.A_inf.eval(y), y;
        CVec q = iterate_f(sys, sys.wrap(x + C * wv), s.m);
        CVec u = Ci * sys.displacement(x, q);
        if (std::abs(u(1)) > lim.A_inf.alpha * (1 + 1e-6))
            throw toolkit_error("limit_graphs: f^m image leaves the stable domain");
        if (std::abs(u(0) - lim.A_inf.eval(u(1))) > 1e-8)
            throw toolkit_error("limit_graphs: stable limit not invariant");
    }
    // z lies on both limits
    CVec pz = Ci * sys.displacement(x, z_ambient);
    if (std::abs(lim.B_inf.eval(pz(0)) - pz(1)) > 1e-9 ||
        std::abs(lim.A_inf.eval(pz(1)) - pz(0)) > 1e-9)
        throw toolkit_error("limit_graphs: z not on the limit graphs");
    return lim;
}

HyperbolicityReport hyperbolicity_certificate(const ClosingSetup& s,
                                              const CVec& z_ambient,
                                              const LimitGraphs& lim) {
    HyperbolicityReport rep;
    const SystemSpec& sys = *s.w->sys;
    const double gamma = s.budget.gamma;
    rep.moduli = periodic_eigenvalues(sys, z_ambient, s.m);
    const double lo = std::exp(-gamma), hi = std::exp(gamma);
    rep.certified = true;
    for (double mod : rep.moduli) {
        if (mod >= hi) ++rep.n_expanding;
        else if (mod <= lo) ++rep.n_contracting;
        else rep.certified = false;
    }

    // per-step growth of separations between nearby graph points (chart coords)
    auto factors = [&](const LipGraph& g, bool vertical) {
        double sep = 0.05 * g.alpha;
        Cplx t1(0.3 * g.alpha, 0), t2 = t1 + sep;
        CVec w1(2), w2(2);
        if (vertical) {
            w1 << g.eval(t1), t1;
            w2 << g.eval(t2), t2;
        } else {
            w1 << t1, g.eval(t1);
            w2 << t2, g.eval(t2);
        }
        std::vector<double> out;
        for (int t = 0; t < s.m; ++t) {
            double before = (w1 - w2).norm();
            w1 = s.maps[t].g(w1);
            w2 = s.maps[t].g(w2);
            out.push_back((w1 - w2).norm() / before);
        }
        return out;
    };
    rep.unstable_factors = factors(lim.B_inf, false);
    rep.stable_factors = factors(lim.A_inf, true);
    return rep;
}

}  // namespace pesinkit
