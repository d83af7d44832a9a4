#pragma once
// Finite-time surrogates for Oseledets data along an orbit window: Lyapunov
// exponents, invariant splitting, the Lyapunov basis C_gamma, Pesin radii,
// and local maps read off in Lyapunov coordinates.

#include <vector>

#include "pesinkit/core.hpp"
#include "pesinkit/graphtransform.hpp"
#include "pesinkit/harness.hpp"

namespace pesinkit {

// Finite orbit segment x_{-L}, ..., x_0, ..., x_M standing in for a point of
// the natural extension.
struct OrbitWindow {
    const SystemSpec* sys = nullptr;
    std::vector<CVec> pts;  // pts[i + L] is x_i
    int L = 0, M = 0;
    std::vector<int> branches;  // chosen preimage branch per backward step
    bool forward_consistent = false;

    int lo() const { return -L; }
    int hi() const { return M; }
    int length() const { return L + M + 1; }
    const CVec& at(int i) const { return pts[i + L]; }
};

// Checks f(x_i) = x_{i+1} to 1e-10 and distance to I >= 1e-6; throws on
// failure, sets forward_consistent otherwise.
void verify_window(OrbitWindow& w);

struct LyapunovSpectrum {
    std::vector<double> chi;  // sorted descending, nats per iterate
    int m0 = 0;               // count of positive exponents
    double gap = 0.0;         // chi_{m0} - chi_{m0+1}
    int window_len = 0;
    int singular_steps = 0;
};

LyapunovSpectrum finite_lyapunov(const OrbitWindow& w);

struct Splitting {
    int L = 0;
    std::vector<CMat> Eu, Es;  // orthonormal bases per index, k x k1 / k x k2
    const CMat& eu(int i) const { return Eu[i + L]; }
    const CMat& es(int i) const { return Es[i + L]; }
};

Splitting oseledets_splitting(const OrbitWindow& w, const LyapunovSpectrum& s);

// Constants of the Pesin-radius construction; only their existence matters
// analytically, so they are configuration inputs.
struct PesinConstants {
    double eps1 = 0.1;
    double p = 2.0;
    double C = 10.0;
};

std::vector<SplitFrame> lyapunov_basis(const OrbitWindow& w, const Splitting& sp,
                                       const LyapunovSpectrum& s, double gamma);

std::vector<double> pesin_radius(const OrbitWindow& w,
                                 const std::vector<SplitFrame>& frames,
                                 double gamma, const PesinConstants& pc);

// Frames + radii bundled per index, with the temperedness invariant.
struct PesinChartData {
    int L = 0;
    double gamma = 0.1;
    std::vector<SplitFrame> frames;
    std::vector<double> r;
    const SplitFrame& frame(int i) const { return frames[i + L]; }
    double radius(int i) const { return r[i + L]; }
};

PesinChartData build_pesin_charts(const OrbitWindow& w, const Splitting& sp,
                                  const LyapunovSpectrum& s, double gamma,
                                  const PesinConstants& pc);

// Local map g_i = C^-1(i+1) o f_{x_i} o C(i) with its blocks and sampled
// nonlinearity bound on the ball of radius 5 h r_i.
LocalMapData read_local_map(const OrbitWindow& w, const PesinChartData& charts,
                            int i, double h);

struct IntegrabilityReport {
    double average = 0.0;
    double min_log = 0.0;
};

IntegrabilityReport check_integrability(const OrbitWindow& w);

}  // namespace pesinkit
