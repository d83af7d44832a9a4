#include "pesinkit/graphtransform.hpp"

#include <cmath>

namespace pesinkit {

double LocalMapData::a_expand() const { return std::abs(A(0, 0)); }
double LocalMapData::b_contract() const { return std::abs(B(0, 0)); }

LocalMapData make_local_map(Cplx a, Cplx b,
                            std::function<CVec(const CVec&)> remainder,
                            std::function<CMat(const CVec&)> dremainder,
                            double R0) {
    LocalMapData lm;
    lm.A = CMat(1, 1);
    lm.A(0, 0) = a;
    lm.B = CMat(1, 1);
    lm.B(0, 0) = b;
    lm.R0 = R0;
    lm.g = [a, b, remainder](const CVec& w) -> CVec {
        CVec lin(2);
        lin << a * w(0), b * w(1);
        return remainder ? CVec(lin + remainder(w)) : lin;
    };
    lm.dg = [a, b, dremainder](const CVec& w) -> CMat {
        CMat D = CMat::Zero(2, 2);
        D(0, 0) = a;
        D(1, 1) = b;
        if (dremainder) D += dremainder(w);
        return D;
    };
    double delta = 0.0, d2est = 0.0;
    if (dremainder) {
        for (int t = 0; t < 24; ++t) {
            double th = 2.0 * M_PI * t / 24.0;
            double phi = M_PI * ((t % 5) + 1) / 12.0;
            CVec wv(2);
            wv << R0 * std::cos(phi) * Cplx(std::cos(th), std::sin(th)),
                R0 * std::sin(phi) * Cplx(std::cos(2 * th), std::sin(2 * th));
            CMat rem = dremainder(wv);
            delta = std::max(delta, std::max(rem.row(0).norm(), rem.row(1).norm()));
            d2est = std::max(d2est, rem.norm() / std::max(wv.norm(), 1e-300));
        }
    }
    lm.delta_nl = delta;
    lm.d2 = d2est;
    lm.xi = 1.0 - std::abs(b) / std::abs(a);  // may be <= 0; pull_back re-checks
    return lm;
}

const BudgetReport::Item* BudgetReport::find(const std::string& name) const {
    for (const auto& it : items)
        if (it.name == name) return &it;
    return nullptr;
}

BudgetReport validate_budget(const ParameterBudget& p) {
    const double g = p.gamma, g0 = p.gamma0, h = p.h;
    const double delta = 5.0 * h;
    double chi_s = std::isfinite(p.chi_s) ? p.chi_s : -5.0 * g;
    const double eu = std::exp(p.chi_u - g);   // ||A^-1||^-1 lower bound
    const double bs = std::exp(chi_s + g);     // ||B|| upper bound
    const double xi = 1.0 - bs / eu;

    BudgetReport rep;
    auto add = [&rep](const std::string& name, double lhs, double rhs) {
        rep.items.push_back({name, lhs, rhs, lhs < rhs});
    };
    add("4gamma < chi_u - chi_s", 4 * g, p.chi_u - chi_s);
    add("gamma0 < 1/5", g0, 0.2);
    add("gamma0 < e^{gamma/4}-1", g0, std::exp(g / 4) - 1);
    add("gamma0 < 1-e^{-gamma/2}", g0, 1 - std::exp(-g / 2));
    add("gamma0 e^{chi1+gamma}+e^{-4gamma} < e^{-7gamma/2}",
        g0 * std::exp(p.chi_top + g) + std::exp(-4 * g), std::exp(-3.5 * g));
    add("e^{chi_u-gamma} >= e^{4gamma}", std::exp(4 * g), eu + 1e-15);
    add("e^{chi_s+gamma} <= e^{-4gamma}", bs, std::exp(-4 * g) + 1e-15);
    add("10h e^{-chi_u+gamma} < 1", 10 * h / eu, 1.0);
    add("(gamma0 e^{chi_s+gamma}+6h)/(e^{chi_u-gamma}-6h) <= e^{-gamma} gamma0",
        (g0 * bs + 6 * h) / (eu - 6 * h), std::exp(-g) * g0 + 1e-15);
    add("e^{4gamma}-11h > e^{2gamma}", std::exp(2 * g), std::exp(4 * g) - 11 * h);
    add("e^{gamma/2}(e^{-4gamma}+6h) <= e^{-2gamma}",
        std::exp(g / 2) * (std::exp(-4 * g) + 6 * h), std::exp(-2 * g) + 1e-15);
    add("(||B||+2delta)e^{2gamma}+delta <= 1",
        (bs + 2 * delta) * std::exp(2 * g) + delta, 1.0 + 1e-15);
    add("delta(1+gamma0) <= (||A^-1||^-1 - gamma0||B||)/2", delta * (1 + g0),
        (eu - g0 * bs) / 2 + 1e-15);
    add("delta(1+gamma0) <= ||A^-1||^-1 - e^{2gamma}", delta * (1 + g0),
        eu - std::exp(2 * g) + 1e-15);
    add("e^{2gamma} < 3/2", std::exp(2 * g), 1.5);
    add("gamma0(1-xi)+2delta(1+gamma0)||A^-1|| <= 1",
        g0 * (1 - xi) + 2 * delta * (1 + g0) / eu, 1.0 + 1e-15);
    rep.pass = true;
    for (const auto& it : rep.items) rep.pass = rep.pass && it.pass;
    return rep;
}

ParameterBudget suggest_budget(double chi_top, double chi_u, double chi_s,
                               double r0, double eta) {
    if (chi_u <= 0) throw toolkit_error("suggest_budget: chi_u must be positive");
    double g = std::min(0.1, chi_u / 5.5);
    if (std::isfinite(chi_s)) g = std::min(g, (chi_u - chi_s) / 4.5);
    if (!std::isfinite(chi_s)) chi_s = -5.0 * g;
    double g0 = std::min({0.01,
                          0.8 * (std::exp(-3.5 * g) - std::exp(-4 * g)) *
                              std::exp(-chi_top - g),
                          0.8 * (std::exp(g / 4) - 1)});
    const double eu = std::exp(chi_u - g), bs = std::exp(chi_s + g);
    double h = 1e30;
    h = std::min(h, (std::exp(-g) * g0 * eu - g0 * bs) / (6 * (1 + std::exp(-g) * g0)));
    h = std::min(h, (std::exp(4 * g) - std::exp(2 * g)) / 11);
    h = std::min(h, (std::exp(-2 * g) * std::exp(-g / 2) - std::exp(-4 * g)) / 6);
    h = std::min(h, eu / 10);
    h = std::min(h, (1 - bs * std::exp(2 * g)) / (10 * std::exp(2 * g) + 5));
    h = std::min(h, (eu - g0 * bs) / (10 * (1 + g0)));
    h = std::min(h, (eu - std::exp(2 * g)) / (10 * (1 + g0)));
    h *= 0.8;

    ParameterBudget p;
    p.gamma = g;
    p.gamma0 = g0;
    p.h = h;
    p.eta = eta;
    p.chi_top = chi_top;
    p.chi_u = chi_u;
    p.chi_s = chi_s;
    p.r0 = r0;
    auto rep = validate_budget(p);
    if (!rep.pass) {
        std::string bad;
        for (const auto& it : rep.items)
            if (!it.pass) bad += " [" + it.name + "]";
        throw toolkit_error("suggest_budget: no feasible budget;" + bad);
    }
    return p;
}

namespace {

// scalar Newton for g1(X, phi(X)) = target, damped with step halving
Cplx solve_abscissa(const LipGraph& phi, const LocalMapData& lm, Cplx target,
                    Cplx x0) {
    Cplx x = x0;
    auto F = [&](Cplx xx) {
        CVec w(2);
        w << xx, phi.eval(xx);
        return lm.g(w)(0) - target;
    };
    double fn = std::abs(F(x));
    const double tol = 1e-14 * std::max(1.0, std::abs(target));
    for (int it = 0; it < 60; ++it) {
        if (fn <= tol) return x;
        CVec w(2);
        w << x, phi.eval(x);
        CMat D = lm.dg(w);
        Cplx deriv = D(0, 0) + D(0, 1) * phi.deriv(x);
        if (std::abs(deriv) < 1e-300) throw toolkit_error("graph fold");
        Cplx step = F(x) / deriv;
        double lam = 1.0;
        for (int halve = 0; halve < 40; ++halve) {
            Cplx xn = x - lam * step;
            double f2 = std::abs(F(xn));
            if (f2 < fn) {
                x = xn;
                fn = f2;
                break;
            }
            lam *= 0.5;
            if (halve == 39) throw toolkit_error("graph fold");
        }
    }
    if (fn > 1e-10 * std::max(1.0, std::abs(target))) throw toolkit_error("graph fold");
    return x;
}

}  // namespace

TransformResult push_forward(const LipGraph& G, const LocalMapData& lm,
                             double gamma0) {
    if (G.orient != Orientation::horizontal)
        throw toolkit_error("push_forward: needs a horizontal graph");
    const double delta = lm.delta_nl;
    const double a = lm.a_expand(), b = lm.b_contract();
    if (delta * (1 + gamma0) / a >= 1.0)
        throw toolkit_error("push_forward: nonlinearity too large");
    const double beta = G.measured_offset();
    const double alpha_out = (a - delta * (1 + gamma0)) * G.alpha - delta * beta;
    if (alpha_out <= 0) throw toolkit_error("push_forward: empty image domain");
    const double lip_out =
        (b * gamma0 + delta * (1 + gamma0)) / (a - delta * (1 + gamma0));
    const double beta_out = (1 + gamma0) * (b * beta + delta * beta + lm.d2 * beta * beta);

    auto psi = [&](Cplx xprime) {
        Cplx x = solve_abscissa(G, lm, xprime, xprime / lm.A(0, 0));
        CVec w(2);
        w << x, G.eval(x);
        return lm.g(w)(1);
    };
    TransformResult out;
    out.achieved_domain = alpha_out;
    out.graph = fit_graph_fn(psi, Orientation::horizontal, alpha_out, lip_out,
                             beta_out);
    return out;
}

LipGraph pull_back(const LipGraph& phi, const LocalMapData& lm, double gamma,
                   double gamma0, double beta) {
    if (phi.orient != Orientation::vertical)
        throw toolkit_error("pull_back: needs a vertical graph");
    const double delta = lm.delta_nl;
    const double a = lm.a_expand(), b = lm.b_contract();
    const double alpha = phi.alpha;  // output covers alpha e^{2gamma}
    // The four hypotheses of the backward-transform theorem, with measured norms.
    bool ok = true;
    ok = ok && (gamma0 * (1 - lm.xi) + 2 * delta * (1 + gamma0) / a <= 1.0);
    ok = ok && ((gamma0 * b + delta * (1 + gamma0)) / (a - delta * (1 + gamma0)) <=
                std::exp(-gamma) * gamma0 + 1e-15);
    ok = ok && ((b + 2 * delta) * std::exp(2 * gamma) + delta <= 1.0 + 1e-15);
    ok = ok && (delta * (1 + gamma0) <=
                std::min((a - gamma0 * b) / 2, a - std::exp(2 * gamma)) + 1e-15);
    ok = ok && (std::exp(2 * gamma) < 1.5);
    if (!ok) throw toolkit_error("pull_back: hypotheses violated");
    if (!(beta <= alpha * (1 + 1e-12) && alpha <= lm.R0 / 4 + 1e-15))
        throw toolkit_error("pull_back: beta <= alpha <= R0/4 violated");

    const double trap = beta * std::exp(-2 * gamma);
    auto psi = [&](Cplx y) {
        Cplx x(0, 0);
        double scale = std::max(1.0, std::abs(y) + trap);
        for (int it = 0; it < 500; ++it) {
            CVec w(2);
            w << x, y;
            CVec gw = lm.g(w);
            Cplx xn = (phi.eval(gw(1)) - (gw(0) - lm.A(0, 0) * x)) / lm.A(0, 0);
            double dx = std::abs(xn - x);
            x = xn;
            if (std::abs(x) > std::abs(y) + trap + 1e-9 * scale)
                throw toolkit_error("pull_back: hypotheses violated (trapping set)");
            if (dx <= 1e-15 * scale) return x;
        }
        throw toolkit_error("pull_back: fixed point iteration did not converge");
    };

    LipGraph out = fit_graph_fn(psi, Orientation::vertical,
                                alpha * std::exp(2 * gamma),
                                std::exp(-gamma) * gamma0, trap);
    // inclusion: g(graph psi) lies on graph phi
    for (int t = 0; t < 16; ++t) {
        double th = 2.0 * M_PI * t / 16.0;
        Cplx y = out.alpha * Cplx(std::cos(th), std::sin(th));
        CVec w(2);
        w << out.eval(y), y;
        CVec gw = lm.g(w);
        if (std::abs(gw(0) - phi.eval(gw(1))) > 1e-9)
            throw toolkit_error("pull_back: inclusion residual too large");
    }
    return out;
}

LipGraph recenter(const LipGraph& G, const RecenterFrames& fr, double new_alpha,
                  double new_lip, double new_beta) {
    CMat M = fr.dst.c_gamma_inv * fr.src.c_gamma;
    CVec t = fr.dst.c_gamma_inv * fr.a;
    double defect = (M - CMat::Identity(2, 2)).norm();
    if (defect > 0.1) throw toolkit_error("frames too far");
    if (fr.r_dst > 0 && t.norm() > 0.5 * fr.h * fr.r_dst)
        throw toolkit_error("frames too far (translation exceeds chart box)");

    const bool horiz = (G.orient == Orientation::horizontal);
    // image of (s, phi(s)) (or (phi(s), s)) under w -> M w + t, re-expressed as
    // a graph over the destination axis
    auto image = [&](Cplx s) -> CVec {
        CVec w(2);
        if (horiz)
            w << s, G.eval(s);
        else
            w << G.eval(s), s;
        return M * w + t;
    };
    int base = horiz ? 0 : 1, other = horiz ? 1 : 0;
    auto value = [&](Cplx sprime) {
        // solve image(s)[base] = sprime; nearly-identity Newton
        Cplx s = sprime - t(base);
        for (int it = 0; it < 80; ++it) {
            CVec p = image(s);
            Cplx F = p(base) - sprime;
            if (std::abs(F) <= 1e-15 * std::max(1.0, std::abs(sprime))) break;
            Cplx dphi = G.deriv(s);
            Cplx deriv = horiz ? (M(0, 0) + M(0, 1) * dphi)
                               : (M(1, 1) + M(1, 0) * dphi);
            s = s - F / deriv;
        }
        if (std::abs(s) > G.alpha * (1 + 1e-9))
            throw toolkit_error("recenter: output domain not covered by source graph");
        return image(s)(other);
    };
    return fit_graph_fn(value, G.orient, new_alpha, new_lip, new_beta);
}

LipGraph cutoff(const LipGraph& G, double new_radius) {
    if (new_radius > G.alpha * (1 + 1e-12))
        throw toolkit_error("cutoff: radius larger than domain");
    LipGraph out = G;
    double ratio = new_radius / G.alpha;
    double f = 1.0;
    for (auto& c : out.coeffs) {
        c *= f;
        f *= ratio;
    }
    out.alpha = new_radius;
    return out;
}

}  // namespace pesinkit
