#pragma once
// Symbolic coding pipeline: separated-set entropy estimation, recurrence
// harvesting, nested vertical/horizontal graph families indexed by words, the
// coding map S_0 with its semiconjugacy and continuity checks, and
// Monte-Carlo statistics of the coded (pushforward) measure.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pesinkit/closing.hpp"
#include "pesinkit/cocycle.hpp"
#include "pesinkit/graphtransform.hpp"

namespace pesinkit {

struct SeparatedSet {
    std::vector<CVec> points;  // accepted subset, in input order
    int m = 0;
    double eps = 0.0;
};

// Greedy maximal (m, eps)-separated subset in the Bowen metric
// max_{0<=p<m} dist(f^p x, f^p y); pairwise separation of the accepted set and
// maximality of the rejections are re-verified exhaustively.
SeparatedSet bowen_separated(const std::vector<CVec>& candidates, int m,
                             double eps, const SystemSpec& sys);

struct EntropyEstimate {
    double h = 0.0;  // mean slope of log card vs m over the eps list
    std::vector<double> eps_list;
    std::vector<int> m_list;
    std::vector<double> slope_per_eps;
    std::vector<double> fit_residual_per_eps;  // max |log card - linear fit|
    std::vector<std::vector<int>> counts;      // counts[e][j] for eps_list[e], m_list[j]
    std::vector<std::string> warnings;
};

EntropyEstimate entropy_estimate(const std::vector<CVec>& samples,
                                 const SystemSpec& sys,
                                 const std::vector<double>& eps_list,
                                 const std::vector<int>& m_list);

// A family of near-returning orbit windows around a common center: each
// member's window and its n-shift lie within eta of the center window in the
// weighted history metric, and members are pairwise (n, eps)-separated.
struct ReturnFamily {
    OrbitWindow center;
    int n = 0;
    double eta = 0.0;
    double eps = 0.0;  // separation inherited from the harvested set
    std::vector<OrbitWindow> members;

    int N() const { return static_cast<int>(members.size()); }
};

// Pigeonhole harvest: scans q in [n_lo, n_hi] and candidate centers drawn from
// the separated set, picks (n, center) maximizing membership. windows[i] must
// be the orbit window of separated.points[i] (index 0 at the point).
ReturnFamily harvest_returns(const SeparatedSet& separated,
                             const std::vector<OrbitWindow>& windows, double eta,
                             int n_lo, int n_hi, double history_rate = 16.0,
                             int history_depth = 20);

// Nested graph families indexed by words over the member alphabet.
// Vertical (stable-direction) families resolve the future: keys are the digit
// strings w0 w1 ... wl (lengths 1..Lw+1). Horizontal (unstable-direction)
// families resolve the past: keys are w-1 w-2 ... w-l (lengths 1..Lw). The
// empty key holds the seed family of constant graphs.
struct CodingTree {
    const SystemSpec* sys = nullptr;
    int n = 0;
    int Lw = 0;
    int N = 0;
    double eps_sep = 0.0;
    ParameterBudget budget;
    double chi_hat = 0.0;  // max measured top exponent over members

    CVec y0;            // ambient chart center
    SplitFrame frame_y; // home Lyapunov frame
    double r_home = 0.0;
    double alpha_home = 0.0;

    std::map<std::string, std::vector<LipGraph>> A;  // vertical families
    std::map<std::string, std::vector<LipGraph>> B;  // horizontal families
    std::map<std::string, double> diam_A, diam_B;    // per-word family diameter
    std::vector<double> max_diam_A, max_diam_B;      // per generation (index l)

    // nesting: each depth-l graph vs the family of the word truncated by one
    double nesting_defect = 0.0;
    bool nested = true;

    // hierarchical disjointness certificate: per-level minimum cross gap
    // between families whose words differ in the leading symbol, plus the
    // one-epoch landing residual of f^n for the vertical half and per-step
    // image-inclusion residuals for the horizontal half (f^-n is never
    // formed; injectivity of f carries disjointness through the images).
    double min_vertical_gap = -1.0;
    double min_horizontal_gap = -1.0;  // -1 when not checked (non-invertible)
    double landing_residual_A = 0.0;
    double landing_residual_B = 0.0;
    double orbit_proximity_max = 0.0;  // max dist(f^p ., f^p x_i) / (eps/4)
    bool vertical_disjoint = false;
    bool horizontal_disjoint = false;

    // (l+1, alpha)-separation under f^n for points of distinct depth-l
    // vertical families, checked exhaustively for l <= 3: each word pair is
    // shifted to its first mismatch, where the leading-symbol gap applies;
    // sep_alpha is the worst such gap in ambient units and sep_measured_min
    // the worst directly-iterated ambient distance at mismatch epochs 0 and 1
    // (deeper epochs would drown in e^{chi p n} rounding).
    double sep_alpha = 0.0;
    double sep_measured_min = 0.0;
    bool sep_verified = false;

    // member data retained for checks and the coding map
    std::vector<OrbitWindow> members;
    std::vector<PesinChartData> member_charts;
};

CodingTree build_vertical_families(const ReturnFamily& family, int Lw,
                                   const ParameterBudget& budget,
                                   bool override_budget = false,
                                   const PesinConstants& pc = PesinConstants{});
CodingTree build_horizontal_families(const ReturnFamily& family, int Lw,
                                     const ParameterBudget& budget,
                                     bool override_budget = false,
                                     const PesinConstants& pc = PesinConstants{});
// Both halves plus nesting/disjointness/decay bookkeeping.
CodingTree build_coding_tree(const ReturnFamily& family, int Lw,
                             const ParameterBudget& budget,
                             bool override_budget = false,
                             const PesinConstants& pc = PesinConstants{});

struct CodingPoint {
    CVec z;          // ambient
    CVec chart;      // home chart coordinates
    double trunc_bound = 0.0;  // 2h e^{-2 gamma n Lw + 2 gamma Lw} / (1 - gamma0^2)
};

// word has length 2 Lw + 1 with word[Lw + j] = w_j, j = -Lw..Lw.
CodingPoint coding_point(const CodingTree& tree, const std::vector<int>& word);

struct SemiconjugacyReport {
    double max_residual = 0.0;
    double trunc_bound = 0.0;
    double pass_bound = 0.0;  // max(10 x trunc bound, rounding floor)
    int words = 0;
    bool pass = false;
};

SemiconjugacyReport check_semiconjugacy(const CodingTree& tree,
                                        const std::vector<std::vector<int>>& words);

struct ContinuityReport {
    std::vector<int> depths;           // agreement depth p
    std::vector<double> max_measured;  // max ||S0(w) - S0(w')|| at depth p
    std::vector<double> bound;         // (C(X)/r0) 8h e^{-2 gamma n p + 2 gamma p}
    double max_ratio = 0.0;
};

ContinuityReport coding_continuity(const CodingTree& tree, std::uint64_t seed = 1,
                                   int pairs_per_depth = 40);

struct MeasureReport {
    struct PerFunction {
        double nu_mean = 0.0;        // (1/(n W)) sum_w sum_{l<n} phi(f^l S0(w))
        double ref_mean = 0.0;       // Birkhoff average along the reference orbit
        double invariance_defect = 0.0;  // |int phi dnu - int phi o f dnu|
        double defect_std_err = 0.0;     // Monte-Carlo standard error of the defect
    };
    std::vector<PerFunction> fns;
    int words = 0;
    double entropy_coded = 0.0;   // separated-set entropy of the coded points
    double log_N_over_n = 0.0;    // target
};

MeasureReport pushforward_stats(
    const CodingTree& tree,
    const std::vector<std::function<double(const CVec&)>>& test_fns, int n_words,
    const OrbitWindow& reference, std::uint64_t seed);

// Periodic point of a Henon-type map (x, y) -> (x^2 + c - b y, x) with the
// prescribed sign itinerary of Re x (0 -> negative branch, 1 -> positive),
// seeded by backward iteration of the degenerate one-dimensional map and
// refined by Newton on the cyclic system x_{t+1} = x_t^2 + c - b x_{t-1}
// (well-conditioned, unlike Newton on the composed f^n). Throws on failure.
CVec periodic_point_from_itinerary(const SystemSpec& sys,
                                   const std::vector<int>& word);

// Orbit window of the same periodic orbit, built from the full cycle so that
// per-step forward consistency holds at machine precision.
OrbitWindow periodic_window_from_itinerary(const SystemSpec& sys,
                                           const std::vector<int>& word,
                                           int forward_m, int backward_l);

}  // namespace pesinkit
