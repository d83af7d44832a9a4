#pragma once
// Closing-lemma engine: near-return detection, the forward (B_j) and backward
// (A_l) graph families, their intersection lattice, extraction of the periodic
// point with its shadowing and hyperbolicity certificate.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pesinkit/cocycle.hpp"
#include "pesinkit/graphtransform.hpp"

namespace pesinkit {

struct NearReturn {
    int i = 0;       // window index of the return base point
    int m = 0;       // return time
    double window_dist = 0.0;
};

// Scans (i, i+m) pairs inside the window. The distance between orbit
// histories is max_j rate^{-j} * dist(x_{i-j}, x_{i+m-j}) over the stored
// backward history (depth capped), dominating the ambient distance at j=0.
// Histories separate backward at rate e^{-chi_s}, so pass a rate above
// e^{-chi_s + 3 gamma} for the weighted distance to be meaningful.
std::vector<NearReturn> find_near_returns(
    const OrbitWindow& w, double eta, int max_m,
    const std::function<bool(int)>& good_index_filter = {},
    double history_rate = 16.0, int history_depth = 20);

// Chart data, local maps, and the recentering frames for one near-return.
struct ClosingSetup {
    const OrbitWindow* w = nullptr;
    const PesinChartData* charts = nullptr;
    int i0 = 0;
    int m = 0;
    ParameterBudget budget;
    std::vector<LocalMapData> maps;  // g_{i0} ... g_{i0+m-1}
    CVec a_m;                        // x_{i0+m} - x_{i0} in model coordinates

    double r(int t) const { return charts->radius(i0 + t); }
    const SplitFrame& frame(int t) const { return charts->frame(i0 + t); }
};

// Throws on budget failure (unless override) or transform preconditions.
ClosingSetup make_closing_setup(const OrbitWindow& w, const PesinChartData& charts,
                                int i, int m, const ParameterBudget& budget,
                                bool override_budget = false);

// One generation: m push_forwards with cutoffs, then recenter to the start
// chart. build_forward_family iterates from the flat graph B_0 = 0.
LipGraph forward_generation(const ClosingSetup& s, const LipGraph& B);
LipGraph backward_generation(const ClosingSetup& s, const LipGraph& A);
std::vector<LipGraph> build_forward_family(const ClosingSetup& s, int J);
std::vector<LipGraph> build_backward_family(const ClosingSetup& s, int L);

struct GraphLattice {
    int m = 0;
    std::vector<LipGraph> B;              // horizontal family
    std::vector<LipGraph> A;              // vertical family
    std::vector<std::vector<CVec>> z;     // z[l][j], ambient coordinates
    std::vector<std::vector<CVec>> z_chart;  // same points in chart coordinates
};

// Intersects every (A_l, B_j) pair and verifies the functional relation
// ||f^m(z_{l,j}) - z_{l-1,j+1}|| <= 1e-8.
GraphLattice lattice_points(const ClosingSetup& s, const std::vector<LipGraph>& B,
                            const std::vector<LipGraph>& A);

struct NewtonResult {
    CVec z;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
};

// Independent cross-check: Newton on f^m(z) - z = 0.
NewtonResult newton_polish(const SystemSpec& sys, const CVec& z0, int m,
                           int max_iter = 50);

struct ClosingCertificate {
    CVec z;                 // ambient periodic point
    int i0 = 0, m = 0;
    double residual = 0.0;  // ||f^m(z) - z||
    double eps = 0.0;       // shadowing constant
    std::vector<double> shadow;        // dist(f^t(x), f^t(z)), t = 0..m
    std::vector<double> shadow_bound;  // eps * max(e^{-gamma t}, e^{-gamma(m-t)})
    std::vector<double> eig_moduli;    // |eigenvalues of Df^m(z)|
    int n_expanding = 0, n_contracting = 0;
    CMat Eu, Es;            // eigenvector frames at z
    ParameterBudget budget;
    double newton_gap = 0.0;
    int generations = 0;
    bool ok = false;
    std::string diagnostics;
};

ClosingCertificate close_orbit(const OrbitWindow& w, const PesinChartData& charts,
                               int i, int m, const ParameterBudget& budget,
                               bool override_budget = false);

struct LimitGraphs {
    LipGraph B_inf;  // horizontal (unstable) limit
    LipGraph A_inf;  // vertical (stable) limit
    double b_gap = 0.0, a_gap = 0.0;  // last successive family distances
};

// Takes the deepest generations once successive distances are < 1e-11 and
// verifies invariance of A_inf under f^m plus membership of z.
LimitGraphs limit_graphs(const ClosingSetup& s, const std::vector<LipGraph>& B,
                         const std::vector<LipGraph>& A, const CVec& z_ambient);

struct HyperbolicityReport {
    std::vector<double> moduli;
    int n_expanding = 0, n_contracting = 0;
    bool certified = false;
    std::vector<double> stable_factors;    // per-step contraction along A_inf
    std::vector<double> unstable_factors;  // per-step expansion along B_inf
};

HyperbolicityReport hyperbolicity_certificate(const ClosingSetup& s,
                                              const CVec& z_ambient,
                                              const LimitGraphs& lim);

// Eigenvalue moduli of Df^m(z) via a norm-balanced product of one-step
// derivatives (log-scale carried separately).
std::vector<double> periodic_eigenvalues(const SystemSpec& sys, const CVec& z,
                                         int m, CMat* vectors = nullptr);

}  // namespace pesinkit
