#include "pesinkit/coding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace pesinkit {

namespace {

std::vector<std::vector<CVec>> precompute_orbits(const std::vector<CVec>& pts,
                                                 int m, const SystemSpec& sys) {
    std::vector<std::vector<CVec>> orb(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        orb[i].reserve(m);
        CVec q = sys.wrap(pts[i]);
        for (int p = 0; p < m; ++p) {
            orb[i].push_back(q);
            q = sys.f(q);
            if (q.norm() > 1e8) {
                // divergent candidate: freeze the escape point; it separates
                // from everything bounded
                while (static_cast<int>(orb[i].size()) < m) orb[i].push_back(q);
                break;
            }
            q = sys.wrap(q);
        }
    }
    return orb;
}

double bowen_dist(const std::vector<CVec>& a, const std::vector<CVec>& b,
                  const SystemSpec& sys) {
    double d = 0.0;
    for (size_t p = 0; p < a.size(); ++p)
        d = std::max(d, sys.dist(a[p], b[p]));
    return d;
}

}  // namespace

SeparatedSet bowen_separated(const std::vector<CVec>& candidates, int m,
                             double eps, const SystemSpec& sys) {
    if (m <= 0) throw toolkit_error("bowen_separated: m must be positive");
    auto orb = precompute_orbits(candidates, m, sys);
    SeparatedSet out;
    out.m = m;
    out.eps = eps;
    std::vector<int> accepted;
    for (size_t i = 0; i < candidates.size(); ++i) {
        bool ok = true;
        for (int j : accepted)
            if (bowen_dist(orb[i], orb[j], sys) < eps) {
                ok = false;
                break;
            }
        if (ok) {
            accepted.push_back(static_cast<int>(i));
            out.points.push_back(candidates[i]);
        }
    }
    // certificate: pairwise separation and maximality, re-verified exhaustively
    for (size_t a = 0; a < accepted.size(); ++a)
        for (size_t b = a + 1; b < accepted.size(); ++b)
            if (bowen_dist(orb[accepted[a]], orb[accepted[b]], sys) < eps)
                throw toolkit_error("bowen_separated: separation certificate failed");
    for (size_t i = 0; i < candidates.size(); ++i) {
        bool covered = false;
        for (int j : accepted)
            if (bowen_dist(orb[i], orb[j], sys) < eps || static_cast<int>(i) == j) {
                covered = true;
                break;
            }
        if (!covered)
            throw toolkit_error("bowen_separated: maximality certificate failed");
    }
    return out;
}

EntropyEstimate entropy_estimate(const std::vector<CVec>& samples,
                                 const SystemSpec& sys,
                                 const std::vector<double>& eps_list,
                                 const std::vector<int>& m_list) {
    if (samples.size() < 1000)
        throw toolkit_error("entropy_estimate: need at least 1000 samples");
    if (eps_list.empty() || m_list.size() < 2)
        throw toolkit_error("entropy_estimate: need eps values and >= 2 m values");
    EntropyEstimate est;
    est.eps_list = eps_list;
    est.m_list = m_list;
    for (double eps : eps_list) {
        std::vector<int> counts;
        for (int m : m_list)
            counts.push_back(
                static_cast<int>(bowen_separated(samples, m, eps, sys).points.size()));
        for (size_t j = 1; j < counts.size(); ++j)
            if (counts[j] < counts[j - 1]) {
                est.warnings.push_back("counts not monotone in m at eps=" +
                                       std::to_string(eps));
                break;
            }
        // least-squares slope of log card vs m
        double sm = 0, sy = 0, smm = 0, smy = 0;
        const int nm = static_cast<int>(m_list.size());
        std::vector<double> y(nm);
        for (int j = 0; j < nm; ++j) {
            y[j] = std::log(std::max(1, counts[j]));
            sm += m_list[j];
            sy += y[j];
            smm += double(m_list[j]) * m_list[j];
            smy += m_list[j] * y[j];
        }
        double denom = nm * smm - sm * sm;
        double slope = denom > 0 ? (nm * smy - sm * sy) / denom : 0.0;
        double icept = (sy - slope * sm) / nm;
        double resid = 0.0;
        for (int j = 0; j < nm; ++j)
            resid = std::max(resid, std::abs(y[j] - slope * m_list[j] - icept));
        est.slope_per_eps.push_back(slope);
        est.fit_residual_per_eps.push_back(resid);
        est.counts.push_back(counts);
        est.h += slope / eps_list.size();
    }
    return est;
}

namespace {

// weighted natural-extension distance between window a shifted by sa and
// window b at index 0
double window_dist(const OrbitWindow& a, int sa, const OrbitWindow& b,
                   double rate, int depth) {
    const SystemSpec& sys = *a.sys;
    int dmax = std::min({depth, sa - a.lo(), -b.lo()});
    double d = 0.0, wgt = 1.0;
    for (int j = 0; j <= dmax; ++j) {
        d = std::max(d, wgt * sys.dist(a.at(sa - j), b.at(-j)));
        wgt /= rate;
    }
    return d;
}

}  // namespace

ReturnFamily harvest_returns(const SeparatedSet& separated,
                             const std::vector<OrbitWindow>& windows, double eta,
                             int n_lo, int n_hi, double history_rate,
                             int history_depth) {
    if (windows.size() != separated.points.size())
        throw toolkit_error("harvest_returns: one window per separated point required");
    const int P = static_cast<int>(windows.size());
    int best_q = -1, best_c = -1, best_count = 0;
    for (int q = n_lo; q <= n_hi; ++q) {
        for (int c = 0; c < P; ++c) {
            int count = 0;
            for (int i = 0; i < P; ++i) {
                if (windows[i].hi() < q) continue;
                if (window_dist(windows[i], 0, windows[c], history_rate,
                                history_depth) < eta &&
                    window_dist(windows[i], q, windows[c], history_rate,
                                history_depth) < eta)
                    ++count;
            }
            if (count > best_count) {
                best_count = count;
                best_q = q;
                best_c = c;
            }
        }
    }
    if (best_count == 0)
        throw toolkit_error("harvest_returns: no recurrence at this eta/n range");

    ReturnFamily fam;
    fam.center = windows[best_c];
    fam.n = best_q;
    fam.eta = eta;
    fam.eps = separated.eps;
    const SystemSpec& sys = *windows[best_c].sys;
    std::vector<int> chosen;
    for (int i = 0; i < P; ++i) {
        if (windows[i].hi() < best_q) continue;
        if (window_dist(windows[i], 0, windows[best_c], history_rate,
                        history_depth) >= eta ||
            window_dist(windows[i], best_q, windows[best_c], history_rate,
                        history_depth) >= eta)
            continue;
        // keep members pairwise (n, eps)-separated
        bool sep = true;
        for (int j : chosen) {
            double d = 0.0;
            for (int p = 0; p < best_q; ++p)
                d = std::max(d, sys.dist(windows[i].at(p), windows[j].at(p)));
            if (d < separated.eps) {
                sep = false;
                break;
            }
        }
        if (sep) {
            chosen.push_back(i);
            fam.members.push_back(windows[i]);
        }
    }
    if (fam.members.empty())
        throw toolkit_error("harvest_returns: no recurrence at this eta/n range");
    return fam;
}

// ---------------------------------------------------------------------------
// coding tree construction
// ---------------------------------------------------------------------------

namespace {

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

struct MemberCtx {
    PesinChartData charts;
    std::vector<LocalMapData> maps;  // t = 0..n-1
};

struct Ctx {
    const ReturnFamily* fam = nullptr;
    const SystemSpec* sys = nullptr;
    int n = 0, N = 0;
    ParameterBudget budget;
    PesinChartData center_charts;
    std::vector<MemberCtx> mem;
    double r_min = 0.0, alpha_home = 0.0;
    double chi_hat = 0.0;
    CVec y0;
};

Ctx make_ctx(const ReturnFamily& fam, const ParameterBudget& budget,
             bool override_budget, const PesinConstants& pc) {
    if (fam.members.empty()) throw toolkit_error("coding: empty return family");
    if (fam.n <= 0) throw toolkit_error("coding: return time must be positive");
    if (!override_budget && !validate_budget(budget).pass)
        throw toolkit_error("coding: parameter budget fails validation");
    Ctx c;
    c.fam = &fam;
    c.sys = fam.center.sys;
    c.n = fam.n;
    c.N = fam.N();
    c.budget = budget;
    c.y0 = fam.center.at(0);

    auto charts_of = [&](const OrbitWindow& w) {
        LyapunovSpectrum sp = finite_lyapunov(w);
        Splitting split = oseledets_splitting(w, sp);
        c.chi_hat = std::max(c.chi_hat, sp.chi[0]);
        return build_pesin_charts(w, split, sp, budget.gamma, pc);
    };
    c.center_charts = charts_of(fam.center);
    c.r_min = c.center_charts.radius(0);
    for (const auto& mw : fam.members) {
        if (mw.hi() < c.n)
            throw toolkit_error("coding: member window shorter than the return time");
        MemberCtx m;
        m.charts = charts_of(mw);
        for (int t = 0; t < c.n; ++t)
            m.maps.push_back(read_local_map(mw, m.charts, t, budget.h));
        c.r_min = std::min({c.r_min, m.charts.radius(0), m.charts.radius(c.n)});
        c.mem.push_back(std::move(m));
    }
    c.alpha_home = std::exp(-budget.gamma / 2) * budget.h * c.r_min;
    return c;
}

const SplitFrame& home_frame(const Ctx& c) { return c.center_charts.frame(0); }

// vertical per-symbol operator: home -> member end chart, n pull-backs along
// the member's orbit, member start chart -> home
LipGraph t_vertical(const Ctx& c, int i, const LipGraph& A) {
    const double h = c.budget.h, g0 = c.budget.gamma0, gamma = c.budget.gamma;
    const MemberCtx& m = c.mem[i];
    const OrbitWindow& mw = c.fam->members[i];
    RecenterFrames fr1{home_frame(c), m.charts.frame(c.n),
                       c.sys->displacement(mw.at(c.n), c.y0), h,
                       m.charts.radius(c.n)};
    RecenterBounds rb1 = recenter_bounds(A, fr1.src, fr1.dst, fr1.a, g0);
    LipGraph G = recenter(A, fr1, std::exp(-gamma) * h * c.r_min, rb1.lip,
                          rb1.beta);
    for (int t = c.n - 1; t >= 0; --t) {
        G = pull_back(G, m.maps[t], gamma, g0, G.measured_offset());
        G = cutoff(G, std::min(G.alpha, h * m.charts.radius(t)));
    }
    RecenterFrames fr2{m.charts.frame(0), home_frame(c),
                       c.sys->displacement(c.y0, mw.at(0)), h,
                       c.center_charts.radius(0)};
    RecenterBounds rb2 = recenter_bounds(G, fr2.src, fr2.dst, fr2.a, g0);
    return recenter(G, fr2, c.alpha_home, rb2.lip, rb2.beta);
}

// horizontal per-symbol operator: home -> member start chart, n push-forwards,
// member end chart -> home.  When incl_resid / box_ratio are supplied, each
// step re-verifies (at fresh sample points) that the pushed graph consists of
// images of source-graph points -- the backward abscissa solve is contracting,
// so this is stable -- and that the stage graph stays inside the chart box,
// whose ambient radius is compared against eps/4.
LipGraph t_horizontal(const Ctx& c, int i, const LipGraph& B,
                      double* incl_resid = nullptr,
                      double* box_ratio = nullptr) {
    const double h = c.budget.h, g0 = c.budget.gamma0, gamma = c.budget.gamma;
    const MemberCtx& m = c.mem[i];
    const OrbitWindow& mw = c.fam->members[i];
    const double quarter = c.fam->eps / 4.0;
    auto stage_box = [&](const LipGraph& g, const SplitFrame& frame,
                         double extra) {
        if (!box_ratio) return;
        double reach =
            opnorm(frame.c_gamma) * (g.alpha + g.measured_offset() +
                                     g.measured_lip() * g.alpha) + extra;
        *box_ratio = std::max(*box_ratio, reach / quarter);
    };
    RecenterFrames fr1{home_frame(c), m.charts.frame(0),
                       c.sys->displacement(mw.at(0), c.y0), h,
                       m.charts.radius(0)};
    RecenterBounds rb1 = recenter_bounds(B, fr1.src, fr1.dst, fr1.a, g0);
    LipGraph G = recenter(B, fr1, std::exp(-gamma) * h * c.r_min, rb1.lip,
                          rb1.beta);
    stage_box(G, m.charts.frame(0), 0.0);
    for (int t = 0; t < c.n; ++t) {
        TransformResult res = push_forward(G, m.maps[t], g0);
        double cap = h * m.charts.radius(t + 1) * std::exp(gamma);
        if (res.achieved_domain < h * m.charts.radius(t + 1) * (1 - 1e-12))
            throw toolkit_error("horizontal step: domain shortfall at t=" +
                                std::to_string(t));
        LipGraph Gn = cutoff(res.graph, std::min(res.achieved_domain, cap));
        if (Gn.measured_offset() >
            std::exp(gamma) * h * m.charts.radius(t + 1) * (1 + 1e-9))
            throw toolkit_error("horizontal step: stage box violated at t=" +
                                std::to_string(t));
        if (incl_resid) {
            const LocalMapData& lm = m.maps[t];
            const Cplx probes[5] = {Cplx(0, 0), Cplx(0.55, 0), Cplx(-0.55, 0),
                                    Cplx(0, 0.55), Cplx(0, -0.55)};
            for (const Cplx& p : probes) {
                Cplx s = Gn.alpha * p;
                // backward Newton for g_x(x, G(x)) = s
                Cplx x = s / lm.A(0, 0);
                for (int it = 0; it < 60; ++it) {
                    CVec w(2);
                    w << x, G.eval(x);
                    Cplx F = lm.g(w)(0) - s;
                    if (std::abs(F) <= 1e-14 * std::max(1.0, std::abs(s))) break;
                    CMat D = lm.dg(w);
                    Cplx dv = D(0, 0) + D(0, 1) * G.deriv(x);
                    x = x - F / dv;
                }
                CVec w(2);
                w << x, G.eval(x);
                CVec gw = lm.g(w);
                double r = std::max(std::abs(gw(0) - s),
                                    std::abs(gw(1) - Gn.eval(s)));
                *incl_resid = std::max(*incl_resid, r);
            }
        }
        G = Gn;
        stage_box(G, m.charts.frame(t + 1), 0.0);
    }
    RecenterFrames fr2{m.charts.frame(c.n), home_frame(c),
                       c.sys->displacement(c.y0, mw.at(c.n)), h,
                       c.center_charts.radius(0)};
    RecenterBounds rb2 = recenter_bounds(G, fr2.src, fr2.dst, fr2.a, g0);
    LipGraph out = recenter(G, fr2, c.alpha_home, rb2.lip, rb2.beta);
    stage_box(out, home_frame(c), c.sys->dist(c.y0, mw.at(c.n)));
    return out;
}

std::vector<LipGraph> seed_family(const Ctx& c, Orientation o) {
    const double s =
        0.5 * std::exp(-c.budget.gamma / 2) * c.budget.h * c.r_min;
    std::vector<LipGraph> fam;
    const Cplx offs[5] = {Cplx(0, 0), Cplx(s, 0), Cplx(-s, 0), Cplx(0, s),
                          Cplx(0, -s)};
    for (const Cplx& b : offs) {
        LipGraph g;
        g.orient = o;
        g.alpha = c.alpha_home;
        g.beta = std::abs(b);
        g.lip = 0.0;
        g.coeffs = {b};
        fam.push_back(g);
    }
    return fam;
}

double family_diameter(const std::vector<LipGraph>& fam) {
    double d = 0.0;
    for (size_t a = 0; a < fam.size(); ++a)
        for (size_t b = a + 1; b < fam.size(); ++b)
            d = std::max(d, graph_distance(fam[a], fam[b]));
    return d;
}

// distance between families discounted by their own diameters (a certified
// lower bound for the set gap)
double family_gap(const std::vector<LipGraph>& fa, double da,
                  const std::vector<LipGraph>& fb, double db) {
    double d = graph_distance(fa[0], fb[0]);
    return std::max(0.0, d - da - db);
}

CVec home_to_ambient(const Ctx& c, const LipGraph& g, Cplx t) {
    CVec wv = eval_graph(g, t);
    return c.sys->wrap(c.y0 + home_frame(c).c_gamma * wv);
}

// f^n in ambient coordinates with divergence guard
CVec iterate_n(const SystemSpec& sys, CVec z, int n) {
    for (int t = 0; t < n; ++t) {
        z = sys.f(z);
        if (z.norm() > 1e8) throw toolkit_error("coding: iterate diverges");
        z = sys.wrap(z);
    }
    return z;
}

struct LandingCheck {
    double landing = 0.0;    // residual against the target family
    double proximity = 0.0;  // max dist(f^p ., f^p x_i) normalized by eps/4
};

// forward one-epoch relation for the vertical half: points of A_w map under
// f^n onto the family of the word with the leading symbol removed, tracking
// member w0 along the way
LandingCheck check_vertical_epoch(const Ctx& c, int symbol,
                                  const std::vector<LipGraph>& fam_w,
                                  const std::vector<LipGraph>& fam_suffix) {
    LandingCheck out;
    const OrbitWindow& mw = c.fam->members[symbol];
    const double quarter = c.fam->eps / 4.0;
    const CMat& Ci = home_frame(c).c_gamma_inv;
    const double a = c.alpha_home;
    const Cplx samples[5] = {Cplx(0, 0), Cplx(0.4 * a, 0), Cplx(-0.4 * a, 0),
                             Cplx(0, 0.4 * a), Cplx(0, -0.4 * a)};
    for (const LipGraph& g : fam_w) {
        for (const Cplx& t : samples) {
            CVec z = home_to_ambient(c, g, t);
            for (int p = 0; p < c.n; ++p) {
                out.proximity =
                    std::max(out.proximity, c.sys->dist(z, mw.at(p)) / quarter);
                z = c.sys->wrap(c.sys->f(z));
            }
            CVec u = Ci * c.sys->displacement(c.y0, z);
            if (std::abs(u(1)) > a * (1 + 1e-6)) {
                out.landing = std::max(out.landing, std::abs(u(1)) - a);
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            for (const LipGraph& s : fam_suffix)
                best = std::min(best, std::abs(u(0) - s.eval(u(1))));
            out.landing = std::max(out.landing, best);
        }
    }
    return out;
}

// the horizontal half is certified per step inside t_horizontal: every point
// of B_w is the f^n-image of a point of B_suffix (inclusion residuals), and
// every intermediate graph stays in its chart box, whose ambient reach is
// compared against eps/4; injectivity of f then turns disjointness of the
// suffix families into disjointness of the images, with no f^{-n} ever formed

// builds one half of the tree; words at level l are all digit strings of
// length l, family(word) = T_{word[0]}(family(word.substr(1)))
void build_half(const Ctx& c, int Lw, bool vertical, CodingTree& tree) {
    auto& fams = vertical ? tree.A : tree.B;
    auto& diams = vertical ? tree.diam_A : tree.diam_B;
    auto& max_diam = vertical ? tree.max_diam_A : tree.max_diam_B;
    double& landing_max = vertical ? tree.landing_residual_A : tree.landing_residual_B;
    const int levels = vertical ? Lw + 1 : Lw;

    fams[""] = seed_family(c, vertical ? Orientation::vertical
                                       : Orientation::horizontal);
    diams[""] = family_diameter(fams[""]);
    max_diam.assign(levels + 1, 0.0);
    max_diam[0] = diams[""];

    std::vector<std::string> prev_level{""};
    for (int l = 1; l <= levels; ++l) {
        std::vector<std::string> level;
        for (const std::string& suffix : prev_level) {
            for (int i = 0; i < c.N; ++i) {
                std::string key = std::string(1, char('0' + i)) + suffix;
                std::vector<LipGraph> fam;
                fam.reserve(fams[suffix].size());
                try {
                    for (const LipGraph& g : fams[suffix])
                        fam.push_back(vertical
                                          ? t_vertical(c, i, g)
                                          : t_horizontal(c, i, g, &landing_max,
                                                         &tree.orbit_proximity_max));
                } catch (const toolkit_error& e) {
                    throw toolkit_error(std::string(vertical ? "vertical" : "horizontal") +
                                        " family '" + key + "': " + e.what());
                }
                double d = family_diameter(fam);
                diams[key] = d;
                max_diam[l] = std::max(max_diam[l], d);
                if (vertical) {
                    // one-epoch landing and orbit-proximity certificate
                    LandingCheck lc =
                        check_vertical_epoch(c, i, fam, fams[suffix]);
                    landing_max = std::max(landing_max, lc.landing);
                    tree.orbit_proximity_max =
                        std::max(tree.orbit_proximity_max, lc.proximity);
                }
                // nesting against the word truncated by one (trailing) symbol
                std::string parent = key.substr(0, key.size() - 1);
                auto pit = fams.find(parent);
                if (pit != fams.end()) {
                    double pdiam = diams[parent];
                    for (const LipGraph& g : fam) {
                        double best = std::numeric_limits<double>::infinity();
                        for (const LipGraph& p : pit->second)
                            best = std::min(best, graph_distance(g, p));
                        double defect = std::max(0.0, best - pdiam);
                        tree.nesting_defect = std::max(tree.nesting_defect, defect);
                        if (defect > 1e-9) tree.nested = false;
                    }
                }
                fams[key] = std::move(fam);
                level.push_back(key);
            }
        }
        // per-level gap between families whose words differ in the leading
        // symbol (deeper mismatches are certified through the epoch relation)
        double& gap = vertical ? tree.min_vertical_gap : tree.min_horizontal_gap;
        for (size_t a = 0; a < level.size(); ++a)
            for (size_t b = a + 1; b < level.size(); ++b) {
                if (level[a][0] == level[b][0]) continue;
                double g = family_gap(fams[level[a]], diams[level[a]],
                                      fams[level[b]], diams[level[b]]);
                if (gap < 0 || g < gap) gap = g;
            }
        prev_level = std::move(level);
    }
}

CodingTree build_tree(const ReturnFamily& family, int Lw,
                      const ParameterBudget& budget, bool override_budget,
                      const PesinConstants& pc, bool vertical, bool horizontal) {
    if (Lw < 1) throw toolkit_error("coding: depth must be >= 1");
    Ctx c = make_ctx(family, budget, override_budget, pc);
    CodingTree tree;
    tree.sys = c.sys;
    tree.n = c.n;
    tree.Lw = Lw;
    tree.N = c.N;
    tree.eps_sep = family.eps;
    tree.budget = budget;
    tree.chi_hat = c.chi_hat;
    tree.y0 = c.y0;
    tree.frame_y = home_frame(c);
    tree.r_home = c.r_min;
    tree.alpha_home = c.alpha_home;
    tree.members = family.members;
    for (const MemberCtx& m : c.mem) tree.member_charts.push_back(m.charts);

    if (vertical) build_half(c, Lw, true, tree);
    if (horizontal) build_half(c, Lw, false, tree);

    if (vertical) {
        // (l+1, alpha)-separation under f^n, exhaustive for l <= 3: shift each
        // word pair to its first mismatch and apply the leading-symbol gap
        const int lmax = std::min(Lw, 3);
        const double cinv = opnorm(home_frame(c).c_gamma_inv);
        double min_gap = std::numeric_limits<double>::infinity();
        double min_meas = std::numeric_limits<double>::infinity();
        bool ok = true;
        std::vector<std::string> words{""};
        for (int l = 1; l <= lmax + 1; ++l) {
            std::vector<std::string> next;
            for (const std::string& s : words)
                for (int i = 0; i < c.N; ++i)
                    next.push_back(std::string(1, char('0' + i)) + s);
            // keys here are read leading-symbol-first, matching tree.A
            for (size_t a = 0; a < next.size(); ++a)
                for (size_t b2 = a + 1; b2 < next.size(); ++b2) {
                    const std::string &wa = next[a], &wb = next[b2];
                    size_t j = 0;
                    while (j < wa.size() && wa[j] == wb[j]) ++j;
                    if (j >= wa.size()) continue;
                    std::string sa = wa.substr(j), sb = wb.substr(j);
                    double g = family_gap(tree.A.at(sa), tree.diam_A.at(sa),
                                          tree.A.at(sb), tree.diam_A.at(sb));
                    min_gap = std::min(min_gap, g);
                    if (g <= 2.0 * (j + 1) * tree.landing_residual_A) ok = false;
                    if (j <= 1) {
                        CVec za = home_to_ambient(c, tree.A.at(wa)[0], Cplx(0, 0));
                        CVec zb = home_to_ambient(c, tree.A.at(wb)[0], Cplx(0, 0));
                        za = iterate_n(*c.sys, za, static_cast<int>(j) * c.n);
                        zb = iterate_n(*c.sys, zb, static_cast<int>(j) * c.n);
                        min_meas = std::min(min_meas, c.sys->dist(za, zb));
                    }
                }
            words = std::move(next);
        }
        if (c.N == 1 || !std::isfinite(min_gap)) {
            tree.sep_alpha = 0.0;
            tree.sep_measured_min = 0.0;
            tree.sep_verified = true;  // nothing to separate
        } else {
            tree.sep_alpha = min_gap / cinv;
            tree.sep_measured_min = min_meas;
            tree.sep_verified = ok && min_meas > 0.0;
        }
    }

    const double floor = 1e-12 * std::max(1.0, c.alpha_home);
    bool prox_ok = tree.orbit_proximity_max <= 1.0;
    if (vertical)
        tree.vertical_disjoint =
            c.N == 1 ||  // a one-letter alphabet has nothing to separate
            (prox_ok && tree.min_vertical_gap >
                            std::max(2 * tree.landing_residual_A, floor));
    if (horizontal && c.sys->invertible)
        tree.horizontal_disjoint =
            c.N == 1 ||
            (prox_ok && tree.min_horizontal_gap >
                            std::max(2 * tree.landing_residual_B, floor));
    if (horizontal && !c.sys->invertible) tree.min_horizontal_gap = -1.0;
    return tree;
}

}  // namespace

CodingTree build_vertical_families(const ReturnFamily& family, int Lw,
                                   const ParameterBudget& budget,
                                   bool override_budget,
                                   const PesinConstants& pc) {
    return build_tree(family, Lw, budget, override_budget, pc, true, false);
}

CodingTree build_horizontal_families(const ReturnFamily& family, int Lw,
                                     const ParameterBudget& budget,
                                     bool override_budget,
                                     const PesinConstants& pc) {
    return build_tree(family, Lw, budget, override_budget, pc, false, true);
}

CodingTree build_coding_tree(const ReturnFamily& family, int Lw,
                             const ParameterBudget& budget, bool override_budget,
                             const PesinConstants& pc) {
    return build_tree(family, Lw, budget, override_budget, pc, true, true);
}

CodingPoint coding_point(const CodingTree& tree, const std::vector<int>& word) {
    const int Lw = tree.Lw;
    if (static_cast<int>(word.size()) != 2 * Lw + 1)
        throw toolkit_error("coding_point: word window must have length 2 Lw + 1");
    for (int s : word)
        if (s < 0 || s >= tree.N)
            throw toolkit_error("coding_point: symbol out of range");
    // pull-back families resolve the future (z tracks w0, f^n z tracks w1, ...)
    // and push-forward families resolve the past
    std::string vkey, hkey;
    for (int j = 0; j <= Lw; ++j) vkey += char('0' + word[Lw + j]);
    for (int j = -1; j >= -Lw; --j) hkey += char('0' + word[Lw + j]);
    auto va = tree.A.find(vkey);
    auto hb = tree.B.find(hkey);
    if (va == tree.A.end() || hb == tree.B.end())
        throw toolkit_error("coding_point: tree too shallow for this word");
    CodingPoint cp;
    cp.chart = intersect_graphs(hb->second[0], va->second[0]);
    cp.z = tree.sys->wrap(tree.y0 + tree.frame_y.c_gamma * cp.chart);
    const double g = tree.budget.gamma, g0 = tree.budget.gamma0;
    cp.trunc_bound = 2 * tree.budget.h *
                     std::exp(-2 * g * tree.n * Lw + 2 * g * Lw) /
                     (1 - g0 * g0);
    return cp;
}

SemiconjugacyReport check_semiconjugacy(
    const CodingTree& tree, const std::vector<std::vector<int>>& words) {
    SemiconjugacyReport rep;
    rep.words = static_cast<int>(words.size());
    double scale = 1.0;
    for (const auto& w : words) {
        CodingPoint p = coding_point(tree, w);
        rep.trunc_bound = p.trunc_bound;
        std::vector<int> sw(w.size());
        for (size_t j = 0; j + 1 < w.size(); ++j) sw[j] = w[j + 1];
        sw.back() = w.back();  // unknown future symbol; covered by truncation
        CodingPoint q = coding_point(tree, sw);
        CVec img = p.z;
        for (int t = 0; t < tree.n; ++t) img = tree.sys->wrap(tree.sys->f(img));
        rep.max_residual =
            std::max(rep.max_residual, tree.sys->dist(img, q.z));
        scale = std::max(scale, p.z.norm());
    }
    const double floor = 100.0 * std::numeric_limits<double>::epsilon() *
                         std::exp(tree.chi_hat * tree.n) * scale;
    rep.pass_bound = std::max(10.0 * rep.trunc_bound, floor);
    rep.pass = rep.max_residual <= rep.pass_bound;
    return rep;
}

ContinuityReport coding_continuity(const CodingTree& tree, std::uint64_t seed,
                                   int pairs_per_depth) {
    ContinuityReport rep;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> sym(0, tree.N - 1);
    const int Lw = tree.Lw;
    const double g = tree.budget.gamma, h = tree.budget.h;
    const double cx = std::max(1.0, opnorm(tree.frame_y.c_gamma));
    for (int p = 0; p < Lw; ++p) {
        double bound = (cx / tree.budget.r0) * 8.0 * h *
                       std::exp(-2 * g * tree.n * p + 2 * g * p);
        double measured = 0.0;
        for (int it = 0; it < pairs_per_depth; ++it) {
            std::vector<int> w(2 * Lw + 1), w2(2 * Lw + 1);
            for (int j = -Lw; j <= Lw; ++j) {
                w[Lw + j] = sym(rng);
                w2[Lw + j] = std::abs(j) <= p ? w[Lw + j] : sym(rng);
            }
            // force a mismatch just beyond the agreement depth
            if (p + 1 <= Lw) {
                w2[Lw + p + 1] = (w[Lw + p + 1] + 1) % tree.N;
                if (tree.N > 1) w2[Lw - p - 1] = (w[Lw - p - 1] + 1) % tree.N;
            }
            CodingPoint a = coding_point(tree, w);
            CodingPoint b = coding_point(tree, w2);
            measured = std::max(measured, tree.sys->dist(a.z, b.z));
        }
        rep.depths.push_back(p);
        rep.max_measured.push_back(measured);
        rep.bound.push_back(bound);
        rep.max_ratio = std::max(rep.max_ratio, measured / bound);
    }
    return rep;
}

MeasureReport pushforward_stats(
    const CodingTree& tree,
    const std::vector<std::function<double(const CVec&)>>& test_fns, int n_words,
    const OrbitWindow& reference, std::uint64_t seed) {
    MeasureReport rep;
    rep.words = n_words;
    rep.log_N_over_n = std::log(double(tree.N)) / tree.n;
    const int K = static_cast<int>(test_fns.size());
    rep.fns.resize(K);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> sym(0, tree.N - 1);

    std::vector<double> sum(K, 0.0), dsum(K, 0.0), dsq(K, 0.0);
    std::vector<CVec> coded;
    coded.reserve(n_words);
    for (int w = 0; w < n_words; ++w) {
        std::vector<int> word(2 * tree.Lw + 1);
        for (int& s : word) s = sym(rng);
        CodingPoint cp = coding_point(tree, word);
        coded.push_back(cp.z);
        CVec z = cp.z;
        std::vector<double> phi0(K), phin(K);
        for (int k = 0; k < K; ++k) phi0[k] = test_fns[k](z);
        for (int l = 0; l < tree.n; ++l) {
            for (int k = 0; k < K; ++k) sum[k] += test_fns[k](z);
            z = tree.sys->wrap(tree.sys->f(z));
        }
        for (int k = 0; k < K; ++k) {
            phin[k] = test_fns[k](z);
            double d = (phin[k] - phi0[k]) / tree.n;  // per-word defect
            dsum[k] += d;
            dsq[k] += d * d;
        }
    }
    for (int k = 0; k < K; ++k) {
        rep.fns[k].nu_mean = sum[k] / (double(tree.n) * n_words);
        double dm = dsum[k] / n_words;
        rep.fns[k].invariance_defect = std::abs(dm);
        double var = std::max(0.0, dsq[k] / n_words - dm * dm);
        rep.fns[k].defect_std_err = std::sqrt(var / n_words);
        double rsum = 0.0;
        int rcount = 0;
        for (int i = reference.lo(); i <= reference.hi(); ++i, ++rcount)
            rsum += test_fns[k](reference.at(i));
        rep.fns[k].ref_mean = rsum / rcount;
    }
    if (tree.N > 1) {
        std::vector<int> ms{tree.n, 2 * tree.n, 3 * tree.n};
        EntropyEstimate est = entropy_estimate(
            coded, *tree.sys, std::vector<double>{tree.eps_sep / 2}, ms);
        rep.entropy_coded = est.h;
    }
    return rep;
}

namespace {

// cyclic Newton for x_{t+1} = x_t^2 + c - b x_{t-1}; returns the full cycle
std::vector<Cplx> itinerary_cycle(const SystemSpec& sys,
                                  const std::vector<int>& word) {
    const int n = static_cast<int>(word.size());
    if (n < 1) throw toolkit_error("itinerary must be nonempty");
    CVec zero = CVec::Zero(2);
    const Cplx c = sys.f(zero)(0);
    CVec e1(2);
    e1 << Cplx(0, 0), Cplx(1, 0);
    const Cplx b = c - sys.f(e1)(0);
    // backward sweeps of the degenerate (b = 0) one-dimensional map
    std::vector<Cplx> x(n, Cplx(1, 0));
    for (int sweep = 0; sweep < 100; ++sweep)
        for (int t = n - 1; t >= 0; --t) {
            Cplx v = std::sqrt(x[(t + 1) % n] - c);
            x[t] = word[t] ? v : -v;
        }
    for (int it = 0; it < 60; ++it) {
        CVec F(n);
        CMat J = CMat::Zero(n, n);
        double fn = 0.0;
        for (int t = 0; t < n; ++t) {
            int tp = (t + 1) % n, tm = (t + n - 1) % n;
            F(t) = x[tp] - x[t] * x[t] - c + b * x[tm];
            fn = std::max(fn, std::abs(F(t)));
            J(t, tp) += Cplx(1, 0);
            J(t, t) -= 2.0 * x[t];
            J(t, tm) += b;
        }
        if (fn <= 1e-13) break;
        CVec step = J.fullPivLu().solve(F);
        if (!step.allFinite())
            throw toolkit_error("itinerary: Newton failed to converge");
        for (int t = 0; t < n; ++t) x[t] -= step(t);
        if (it == 59) throw toolkit_error("itinerary: Newton failed to converge");
    }
    for (int t = 0; t < n; ++t)
        if ((x[t].real() > 0) != (word[t] == 1))
            throw toolkit_error("itinerary not realized at epoch " +
                                std::to_string(t));
    return x;
}

}  // namespace

CVec periodic_point_from_itinerary(const SystemSpec& sys,
                                   const std::vector<int>& word) {
    std::vector<Cplx> x = itinerary_cycle(sys, word);
    const int n = static_cast<int>(x.size());
    CVec z(2);
    z << x[0], x[(n - 1) % n];
    return z;
}

OrbitWindow periodic_window_from_itinerary(const SystemSpec& sys,
                                           const std::vector<int>& word,
                                           int forward_m, int backward_l) {
    std::vector<Cplx> x = itinerary_cycle(sys, word);
    const int n = static_cast<int>(x.size());
    OrbitWindow w;
    w.sys = &sys;
    w.L = backward_l;
    w.M = forward_m;
    w.pts.resize(w.length());
    for (int i = -backward_l; i <= forward_m; ++i) {
        int idx = ((i % n) + n) % n;
        int prev = ((i - 1) % n + n) % n;
        CVec p(2);
        p << x[idx], x[prev];
        w.pts[i + backward_l] = p;
    }
    verify_window(w);
    return w;
}

}  // namespace pesinkit
