#include "pesinkit/cocycle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pesinkit {

void verify_window(OrbitWindow& w) {
    if (!w.sys) throw toolkit_error("window has no system");
    for (int i = w.lo(); i < w.hi(); ++i) {
        double d = w.sys->dist(w.sys->f(w.at(i)), w.at(i + 1));
        if (d > 1e-10)
            throw toolkit_error("window not forward consistent at index " +
                                std::to_string(i) + ": " + std::to_string(d));
    }
    for (int i = w.lo(); i <= w.hi(); ++i)
        if (w.sys->dist_I(w.at(i)) < 1e-6)
            throw toolkit_error("window point within 1e-6 of indeterminacy set");
    w.forward_consistent = true;
}

LyapunovSpectrum finite_lyapunov(const OrbitWindow& w) {
    const int len = w.length();
    if (len < 100) throw toolkit_error("finite_lyapunov: window length < 100");
    const int k = w.sys->k;
    const int burn = std::min(50, (len - 1) / 5);

    CMat Q = CMat::Identity(k, k);
    std::vector<double> sums(k, 0.0);
    int count = 0, singular = 0, steps = 0;
    for (int i = w.lo(); i < w.hi(); ++i, ++steps) {
        CMat M = w.sys->df(w.at(i)) * Q;
        Eigen::HouseholderQR<CMat> qr(M);
        Q = qr.householderQ() * CMat::Identity(k, k);
        CMat R = qr.matrixQR().triangularView<Eigen::Upper>();
        bool sing = false;
        for (int j = 0; j < k; ++j)
            if (std::abs(R(j, j)) < 1e-14) sing = true;
        if (sing) {
            ++singular;
            continue;
        }
        if (steps < burn) continue;
        for (int j = 0; j < k; ++j) sums[j] += std::log(std::abs(R(j, j)));
        ++count;
    }
    if (singular > 0.01 * (len - 1))
        throw toolkit_error("finite_lyapunov: more than 1% singular steps");
    LyapunovSpectrum s;
    s.window_len = len;
    s.singular_steps = singular;
    s.chi.resize(k);
    for (int j = 0; j < k; ++j) s.chi[j] = sums[j] / count;
    std::sort(s.chi.begin(), s.chi.end(), std::greater<double>());
    s.m0 = 0;
    for (double c : s.chi)
        if (c > 1e-12) ++s.m0;
    s.gap = (s.m0 >= 1 && s.m0 <= k - 1) ? s.chi[s.m0 - 1] - s.chi[s.m0] : 0.0;
    return s;
}

namespace {

// rotate each column so its largest component is real positive; QR sign and
// phase conventions otherwise jitter between indices, which would make nearly
// identical frames look far apart to the recentering operator
CMat canonical_phase(CMat m) {
    for (int j = 0; j < m.cols(); ++j) {
        int imax = 0;
        for (int i = 1; i < m.rows(); ++i)
            if (std::abs(m(i, j)) > std::abs(m(imax, j))) imax = i;
        Cplx p = m(imax, j);
        if (std::abs(p) > 0) m.col(j) *= std::conj(p) / std::abs(p);
    }
    return m;
}

CMat orthonormalize(const CMat& m) {
    Eigen::HouseholderQR<CMat> qr(m);
    return canonical_phase(qr.householderQ() * CMat::Identity(m.rows(), m.cols()));
}

CMat random_frame(int k, int cols, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> N(0, 1);
    CMat m(k, cols);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = Cplx(N(rng), N(rng));
    return orthonormalize(m);
}

}  // namespace

Splitting oseledets_splitting(const OrbitWindow& w, const LyapunovSpectrum& s) {
    if (s.gap <= 0) throw toolkit_error("oseledets_splitting: no spectral gap");
    if (w.L < 50 || w.M < 50)
        throw toolkit_error("oseledets_splitting: need L, M >= 50");
    const int k = w.sys->k;
    const int k1 = s.m0, k2 = k - s.m0;
    if (k1 < 1 || k2 < 1)
        throw toolkit_error("oseledets_splitting: not a hyperbolic spectrum");

    Splitting sp;
    sp.L = w.L;
    sp.Eu.resize(w.length());
    sp.Es.resize(w.length());

    CMat F = random_frame(k, k1, 20240601);
    for (int i = w.lo(); i <= w.hi(); ++i) {
        sp.Eu[i + w.L] = F;
        if (i < w.hi()) F = orthonormalize(w.sys->df(w.at(i)) * F);
    }
    CMat G = random_frame(k, k2, 911);
    for (int i = w.hi(); i >= w.lo(); --i) {
        sp.Es[i + w.L] = G;
        if (i > w.lo()) {
            CMat J = w.sys->df(w.at(i - 1));
            G = orthonormalize(J.fullPivLu().solve(G));
        }
    }

    for (int i = w.lo(); i <= w.hi(); ++i) {
        CMat both(k, k);
        both << sp.eu(i), sp.es(i);
        Eigen::JacobiSVD<CMat> svd(both);
        if (svd.singularValues().minCoeff() < 1e-4)
            throw toolkit_error("splitting degenerate at index " + std::to_string(i));
    }
    // invariance residual (angle) of the unstable field
    for (int i = w.lo(); i < w.hi(); ++i) {
        CMat v = orthonormalize(w.sys->df(w.at(i)) * sp.eu(i));
        CMat proj = sp.eu(i + 1) * (sp.eu(i + 1).adjoint() * v);
        if ((v - proj).norm() > 1e-6)
            throw toolkit_error("unstable field not invariant at index " +
                                std::to_string(i));
    }
    return sp;
}

std::vector<SplitFrame> lyapunov_basis(const OrbitWindow& w, const Splitting& sp,
                                       const LyapunovSpectrum& s, double gamma) {
    const int k = w.sys->k;
    if (s.m0 != 1 || k != 2)
        throw toolkit_error("lyapunov_basis: unsupported factor dimension");
    const double chi_u = s.chi[0], chi_s = s.chi[1];
    const int n = w.length();

    // Lyapunov norms: backward-weighted sum for the unstable direction,
    // forward-weighted for the stable one, normalized so that an ideal
    // cocycle (growth exactly e^{chi} per step) yields unit scales.
    std::vector<double> nu(n), ns(n);
    std::vector<double> a(n, 0.0), d(n, 0.0);
    for (int i = w.lo(); i < w.hi(); ++i) {
        a[i + w.L] = (w.sys->df(w.at(i)) * sp.eu(i)).norm();
        d[i + w.L] = (w.sys->df(w.at(i)) * sp.es(i)).norm();
    }
    const double wu = std::exp(2 * (chi_u - gamma));
    const double ws = std::exp(-2 * (chi_s + gamma));
    double Su = 1.0;
    nu[0] = Su;
    for (int i = 1; i < n; ++i) {
        double ai = a[i - 1];
        if (ai < 1e-300) throw toolkit_error("lyapunov_basis: singular step");
        Su = 1.0 + wu * Su / (ai * ai);
        if (Su > 1e24)
            throw toolkit_error("lyapunov_basis: norm overflow; use a shorter window");
        nu[i] = Su;
    }
    double Ss = 1.0;
    ns[n - 1] = Ss;
    for (int i = n - 2; i >= 0; --i) {
        double di = d[i];
        Ss = 1.0 + ws * di * di * Ss;
        if (Ss > 1e24)
            throw toolkit_error("lyapunov_basis: norm overflow; use a shorter window");
        ns[i] = Ss;
    }
    const double norm_u = 1.0 - std::exp(-2 * gamma);
    const double norm_s = norm_u;

    std::vector<SplitFrame> frames;
    frames.reserve(n);
    for (int i = 0; i < n; ++i) {
        double su = std::sqrt(nu[i] * norm_u), ssc = std::sqrt(ns[i] * norm_s);
        CMat C(2, 2);
        C.col(0) = sp.Eu[i].col(0) / su;
        C.col(1) = sp.Es[i].col(0) / ssc;
        frames.push_back(make_frame(C, 1));
    }
    return frames;
}

std::vector<double> pesin_radius(const OrbitWindow& w,
                                 const std::vector<SplitFrame>& frames,
                                 double gamma, const PesinConstants& pc) {
    const int n = w.length();
    std::vector<double> alpha(n);
    for (int i = 0; i < n; ++i) {
        double d = w.sys->dist_I(w.pts[i]);
        double cn = opnorm(frames[i].c_gamma);
        double a = std::max(1.0, cn / (pc.eps1 * std::pow(d, pc.p)));
        double cinv_next = opnorm(frames[std::min(i + 1, n - 1)].c_gamma_inv);
        a = std::max(a, 2.0 * pc.C * cinv_next * cn * cn * std::pow(d, -pc.p));
        alpha[i] = a;
    }
    std::vector<double> r(n);
    for (int i = 0; i < n; ++i) {
        double env = 0.0;
        for (int j = 0; j < n; ++j)
            env = std::max(env, alpha[j] * std::exp(-gamma * std::abs(j - i)));
        r[i] = 1.0 / env;
        if (r[i] < 1e-12) throw toolkit_error("chart collapse near indeterminacy");
    }
    return r;
}

PesinChartData build_pesin_charts(const OrbitWindow& w, const Splitting& sp,
                                  const LyapunovSpectrum& s, double gamma,
                                  const PesinConstants& pc) {
    PesinChartData cd;
    cd.L = w.L;
    cd.gamma = gamma;
    cd.frames = lyapunov_basis(w, sp, s, gamma);
    cd.r = pesin_radius(w, cd.frames, gamma, pc);
    // temperedness is exact for the sup-envelope, but double-check
    for (size_t i = 0; i + 1 < cd.r.size(); ++i) {
        double ratio = cd.r[i + 1] / cd.r[i];
        if (ratio < std::exp(-gamma) - 1e-9 || ratio > std::exp(gamma) + 1e-9)
            throw toolkit_error("pesin radius not tempered");
    }
    return cd;
}

LocalMapData read_local_map(const OrbitWindow& w, const PesinChartData& charts,
                            int i, double h) {
    if (i < w.lo() || i >= w.hi())
        throw toolkit_error("read_local_map: index outside window");
    const SystemSpec* sys = w.sys;
    const SplitFrame& Fi = charts.frame(i);
    const SplitFrame& Fn = charts.frame(i + 1);
    const CVec xi = w.at(i), xn = w.at(i + 1);
    const double ri = charts.radius(i);

    if (sys->dist_I(xi) < opnorm(Fi.c_gamma) * ri)
        throw toolkit_error("chart ball intersects indeterminacy set");

    auto g = [sys, Fi, Fn, xi, xn](const CVec& wv) -> CVec {
        CVec amb = xi + Fi.c_gamma * wv;
        return Fn.c_gamma_inv * sys->displacement(xn, sys->f(amb));
    };
    auto dg = [sys, Fi, Fn, xi](const CVec& wv) -> CMat {
        CVec amb = xi + Fi.c_gamma * wv;
        return Fn.c_gamma_inv * sys->df(amb) * Fi.c_gamma;
    };

    CVec zero = CVec::Zero(2);
    if (g(zero).norm() > 1e-10) throw toolkit_error("local map: g(0) != 0");
    CMat D0 = dg(zero);
    double offdiag = std::max(std::abs(D0(0, 1)), std::abs(D0(1, 0)));
    if (offdiag > 1e-8 * D0.norm())
        throw toolkit_error("local map: Dg(0) not block-diagonal");

    LocalMapData lm;
    lm.A = CMat(1, 1);
    lm.A(0, 0) = D0(0, 0);
    lm.B = CMat(1, 1);
    lm.B(0, 0) = D0(1, 1);
    lm.g = g;
    lm.dg = dg;
    lm.R0 = 5.0 * h * ri;
    lm.d2 = 1.0 / ri;
    lm.k1 = lm.k2 = 1;

    // sampled nonlinearity bound on the R0 ball
    double delta = 0.0;
    for (int t = 0; t < 16; ++t) {
        double th = 2.0 * M_PI * t / 16.0;
        double phi = M_PI * ((t % 4) + 1) / 8.0;
        CVec wv(2);
        wv << lm.R0 * std::cos(phi) * Cplx(std::cos(th), std::sin(th)),
            lm.R0 * std::sin(phi) * Cplx(std::cos(th + 1.0), std::sin(th + 1.0));
        CMat Dw = dg(wv);
        CMat rem = Dw;
        rem(0, 0) -= D0(0, 0);
        rem(1, 1) -= D0(1, 1);
        delta = std::max(delta, std::max(rem.row(0).norm(), rem.row(1).norm()));
    }
    lm.delta_nl = delta;
    double bn = std::abs(lm.B(0, 0)), ainv = 1.0 / std::abs(lm.A(0, 0));
    lm.xi = 1.0 - bn * ainv;
    if (lm.xi <= 0)
        throw toolkit_error("local map: ||B|| >= ||A^-1||^-1");
    return lm;
}

IntegrabilityReport check_integrability(const OrbitWindow& w) {
    IntegrabilityReport rep;
    rep.min_log = 1e300;
    double sum = 0.0;
    for (int i = w.lo(); i <= w.hi(); ++i) {
        double d = w.sys->dist_I(w.at(i));
        if (d <= 0.0) throw toolkit_error("orbit hits indeterminacy set exactly");
        double lg = std::log(d);
        sum += lg;
        rep.min_log = std::min(rep.min_log, lg);
    }
    rep.average = sum / w.length();
    return rep;
}

}  // namespace pesinkit
