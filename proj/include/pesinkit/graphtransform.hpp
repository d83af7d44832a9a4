#pragma once
// Forward and backward graph transforms with their quantitative contracts,
// chart recentering, cut-off, and the parameter-budget validator.

#include <functional>
#include <string>
#include <vector>

#include "pesinkit/core.hpp"

namespace pesinkit {

// Local map in Lyapunov coordinates: g(X,Y) = (A X + R(X,Y), B Y + U(X,Y)),
// with R, U vanishing to first order at 0 (up to the splitting residual).
struct LocalMapData {
    CMat A;  // k1 x k1, expanding block of Dg(0)
    CMat B;  // k2 x k2, contracting block
    std::function<CVec(const CVec&)> g;
    std::function<CMat(const CVec&)> dg;
    double R0 = 0.0;        // ball radius on which delta_nl was measured
    double delta_nl = 0.0;  // sampled sup of max(||DR||, ||DU||) on that ball
    double d2 = 0.0;        // second-derivative bound of g (1/r for Pesin charts)
    double xi = 0.0;        // 1 - ||B|| ||A^-1||
    int k1 = 1, k2 = 1;

    double a_expand() const;    // ||A^-1||^-1
    double b_contract() const;  // ||B||
};

// Synthesize a LocalMapData from explicit blocks and remainder (tests).
LocalMapData make_local_map(Cplx a, Cplx b,
                            std::function<CVec(const CVec&)> remainder,
                            std::function<CMat(const CVec&)> dremainder,
                            double R0);

struct ParameterBudget {
    double gamma = 0.1;
    double gamma0 = 0.01;
    double h = 1e-3;
    double eta = 1e-3;
    double delta_measure = 0.1;
    double eps = 0.0;       // shadowing target; 0 = derive from constants
    double chi_top = 0.6;   // chi_1
    double chi_u = 0.6;     // chi_{m0}
    double chi_s = -0.6;    // chi_{m0+1}; substitute -5*gamma when -inf
    double r0 = 0.05;
};

struct BudgetReport {
    struct Item {
        std::string name;
        double lhs = 0, rhs = 0;
        bool pass = false;
        double margin() const { return rhs - lhs; }
    };
    std::vector<Item> items;
    bool pass = false;

    const Item* find(const std::string& name) const;
};

// Evaluates every smallness inequality the transforms rely on, with
// delta := 5h (the analytic nonlinearity bound on the 5hr ball).
BudgetReport validate_budget(const ParameterBudget& p);

// Picks (gamma, gamma0, h) with margins for a measured spectrum; throws if
// no feasible choice exists (e.g. chi_u <= 0).
ParameterBudget suggest_budget(double chi_top, double chi_u, double chi_s,
                               double r0, double eta);

struct TransformResult {
    LipGraph graph;
    double achieved_domain = 0.0;
};

// Image of a horizontal graph under g (implicit solve per target abscissa).
TransformResult push_forward(const LipGraph& G, const LocalMapData& g,
                             double gamma0);

// Vertical graph psi over B(0, alpha e^{2 gamma}) with g(graph psi) inside
// graph phi, obtained as the fixed point of a contraction Lambda_Y.
LipGraph pull_back(const LipGraph& phi, const LocalMapData& g, double gamma,
                   double gamma0, double beta);

// Affine change of chart w -> M w + t with M = C_dst^-1 C_src close to the
// identity; refits the graph in destination coordinates with the declared
// output bounds of the recentering ladder.
struct RecenterFrames {
    SplitFrame src, dst;
    CVec a;         // x_src - x_dst in model coordinates
    double h = 0.0;
    double r_dst = 0.0;  // Pesin radius at destination (smallness scale)
};
LipGraph recenter(const LipGraph& G, const RecenterFrames& fr, double new_alpha,
                  double new_lip, double new_beta);

LipGraph cutoff(const LipGraph& G, double new_radius);

}  // namespace pesinkit
