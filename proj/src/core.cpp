#include "pesinkit/core.hpp"

#include <cmath>

namespace pesinkit {

double SplitFrame::inverse_defect() const {
    return (c_gamma * c_gamma_inv - CMat::Identity(k(), k())).norm();
}

SplitFrame make_frame(const CMat& c_gamma, int k1) {
    SplitFrame f;
    f.c_gamma = c_gamma;
    f.c_gamma_inv = c_gamma.inverse();
    f.k1 = k1;
    f.k2 = static_cast<int>(c_gamma.rows()) - k1;
    if (f.inverse_defect() > 1e-10)
        throw toolkit_error("frame inversion failed: defect " +
                            std::to_string(f.inverse_defect()));
    return f;
}

Cplx LipGraph::eval(Cplx t) const {
    Cplx u = t / alpha, acc(0, 0);
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * u + *it;
    return acc;
}

Cplx LipGraph::deriv(Cplx t) const {
    Cplx u = t / alpha, acc(0, 0);
    for (size_t j = coeffs.size(); j-- > 1;)
        acc = acc * u + double(j) * coeffs[j];
    return acc / alpha;
}

double LipGraph::measured_offset() const {
    return coeffs.empty() ? 0.0 : std::abs(coeffs[0]);
}

double LipGraph::measured_lip() const {
    // |phi'| is subharmonic, so the boundary grid sees the max
    double m = 0.0;
    for (int i = 0; i < 32; ++i) {
        double th = 2.0 * M_PI * i / 32;
        m = std::max(m, std::abs(deriv(alpha * Cplx(std::cos(th), std::sin(th)))));
    }
    return m;
}

double LipGraph::coeff_decay_ratio() const {
    if (coeffs.empty()) return 0.0;
    double mx = 0.0;
    for (const auto& c : coeffs) mx = std::max(mx, std::abs(c));
    if (mx == 0.0) return 0.0;
    return std::abs(coeffs.back()) / mx;
}

CVec chart_transition(const Chart& x, const Chart& y) {
    if (x.model_id != y.model_id) throw toolkit_error("chart mismatch");
    return y.base - x.base;
}

LipGraph fit_graph(const std::vector<std::pair<Cplx, Cplx>>& samples,
                   Orientation orient, double alpha, double lip_bound,
                   double offset_bound) {
    const int ncoef = kGraphDegree + 1;
    if (static_cast<int>(samples.size()) < ncoef)
        throw toolkit_error("fit_graph: need at least " + std::to_string(ncoef) +
                            " samples");
    const int n = static_cast<int>(samples.size());
    CMat V(n, ncoef);
    CVec rhs(n);
    double vmax = 0.0;
    for (int i = 0; i < n; ++i) {
        Cplx u = samples[i].first / alpha;
        if (std::abs(u) > 1.0 + 1e-12)
            throw toolkit_error("fit_graph: sample outside domain");
        Cplx p(1, 0);
        for (int j = 0; j < ncoef; ++j) { V(i, j) = p; p *= u; }
        rhs(i) = samples[i].second;
        vmax = std::max(vmax, std::abs(rhs(i)));
    }
    CVec c = V.colPivHouseholderQr().solve(rhs);
    double resid = (V * c - rhs).cwiseAbs().maxCoeff();
    if (resid > 1e-9 * std::max(1.0, vmax))
        throw toolkit_error("fit_graph: residual " + std::to_string(resid));

    LipGraph g;
    g.orient = orient;
    g.alpha = alpha;
    g.beta = offset_bound;
    g.lip = lip_bound;
    g.coeffs.assign(c.data(), c.data() + ncoef);

    if (g.measured_offset() > offset_bound + 1e-12)
        throw toolkit_error("offset exceeded: " + std::to_string(g.measured_offset()) +
                            " > " + std::to_string(offset_bound));
    if (g.measured_lip() > lip_bound + 1e-9)
        throw toolkit_error("lip exceeded: " + std::to_string(g.measured_lip()) +
                            " > " + std::to_string(lip_bound));
    // transformed graphs are analytic only on a modest multiple of the fitted
    // domain, so top-coefficient ratios of ~1e-6..1e-5 are legitimate decay at
    // degree 16; flag only clearly unresolved content (ratio near 1e-3 means
    // the radius of analyticity barely exceeds the domain), and only when the
    // tail rises above the numerical noise floor of the chart scale
    double tail = std::abs(g.coeffs.back());
    if (g.coeff_decay_ratio() > 1e-3 && tail > 1e-13 * alpha && tail > 1e-11 * vmax)
        throw toolkit_error("underresolved");
    return g;
}

CVec eval_graph(const LipGraph& g, Cplx t) {
    if (std::abs(t) > g.alpha * (1.0 + 1e-12))
        throw toolkit_error("eval_graph: point outside domain");
    CVec p(2);
    if (g.orient == Orientation::horizontal) {
        p << t, g.eval(t);
    } else {
        p << g.eval(t), t;
    }
    return p;
}

double graph_distance(const LipGraph& a, const LipGraph& b) {
    if (a.orient != b.orient) throw toolkit_error("orientation mismatch");
    double r = std::min(a.alpha, b.alpha);
    double m = std::abs(a.eval(0) - b.eval(0));
    for (int i = 0; i < kBoundarySamples; ++i) {
        double th = 2.0 * M_PI * i / kBoundarySamples;
        Cplx t = r * Cplx(std::cos(th), std::sin(th));
        m = std::max(m, std::abs(a.eval(t) - b.eval(t)));
    }
    return m;
}

CVec intersect_graphs(const LipGraph& h, const LipGraph& v) {
    if (h.orient != Orientation::horizontal || v.orient != Orientation::vertical)
        throw toolkit_error("intersect_graphs: need (horizontal, vertical)");
    if (h.measured_lip() * v.measured_lip() >= 1.0)
        throw toolkit_error("intersect_graphs: lip product >= 1");
    Cplx y = h.eval(0), x(0, 0);
    bool ok = false;
    for (int it = 0; it < 10000; ++it) {
        if (std::abs(y) > v.alpha * (1.0 + 1e-9))
            throw toolkit_error("intersection escapes");
        x = v.eval(y);
        if (std::abs(x) > h.alpha * (1.0 + 1e-9))
            throw toolkit_error("intersection escapes");
        Cplx yn = h.eval(x);
        double dy = std::abs(yn - y);
        y = yn;
        if (dy <= 1e-14 * std::max(1.0, std::abs(y)) || dy <= 1e-15) { ok = true; break; }
    }
    if (!ok) throw toolkit_error("intersect_graphs: no convergence");
    x = v.eval(y);
    CVec p(2);
    p << x, y;
    return p;
}

}  // namespace pesinkit
