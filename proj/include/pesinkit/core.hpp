#pragma once
// Complex linear algebra, translation charts, and Lipschitz graphs over a
// disk in one hyperbolic factor. Graphs are holomorphic and represented by
// polynomial coefficients in the scaled variable t/alpha, fitted spectrally
// on the boundary circle; all downstream transforms consume this type.

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pesinkit {

using Cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

struct toolkit_error : std::runtime_error {
    explicit toolkit_error(const std::string& msg) : std::runtime_error(msg) {}
};

// spectral (operator 2-) norm
inline double opnorm(const CMat& m) {
    return Eigen::JacobiSVD<CMat>(m).singularValues()(0);
}

// Translation chart w -> base + w in model coordinates.
struct Chart {
    CVec base;
    double radius = 1.0;
    int model_id = 0;
};

// Lyapunov change of basis: columns of c_gamma span E_u then E_s.
struct SplitFrame {
    CMat c_gamma;
    CMat c_gamma_inv;
    int k1 = 1;
    int k2 = 1;

    int k() const { return k1 + k2; }
    // ||C * C^-1 - I||, should be <= 1e-10 for any frame we hand out
    double inverse_defect() const;
};

SplitFrame make_frame(const CMat& c_gamma, int k1);

enum class Orientation { horizontal, vertical };

// Graph Y = phi(X) (horizontal, over the unstable factor) or X = phi(Y)
// (vertical). Scalar factors only (k1 = k2 = 1); higher factor dimensions
// are rejected where graphs get built.
struct LipGraph {
    Orientation orient = Orientation::horizontal;
    double alpha = 1.0;   // domain radius
    double beta = 0.0;    // declared offset bound, |phi(0)| <= beta
    double lip = 0.0;     // declared Lipschitz bound
    std::vector<Cplx> coeffs;  // phi(t) = sum_j coeffs[j] * (t/alpha)^j

    Cplx eval(Cplx t) const;
    Cplx deriv(Cplx t) const;
    double measured_offset() const;
    double measured_lip() const;      // max |phi'| on a 32-point boundary grid
    double coeff_decay_ratio() const; // |c_last| / max|c_j|
};

inline constexpr int kGraphDegree = 16;
inline constexpr int kBoundarySamples = 64;

// a such that tau_y = tau_x composed with (w -> w + a); both charts must share
// a model chart.
CVec chart_transition(const Chart& x, const Chart& y);

// Least-squares polynomial fit; throws "lip exceeded" / "underresolved" /
// residual failures per the type invariants.
LipGraph fit_graph(const std::vector<std::pair<Cplx, Cplx>>& samples,
                   Orientation orient, double alpha, double lip_bound,
                   double offset_bound);

// Convenience: sample fn on the 64-point boundary circle plus center and fit.
template <class F>
LipGraph fit_graph_fn(F&& fn, Orientation orient, double alpha,
                      double lip_bound, double offset_bound) {
    std::vector<std::pair<Cplx, Cplx>> s;
    s.reserve(kBoundarySamples + 1);
    s.emplace_back(Cplx(0, 0), fn(Cplx(0, 0)));
    for (int i = 0; i < kBoundarySamples; ++i) {
        double th = 2.0 * M_PI * i / kBoundarySamples;
        Cplx t = alpha * Cplx(std::cos(th), std::sin(th));
        s.emplace_back(t, fn(t));
    }
    return fit_graph(s, orient, alpha, lip_bound, offset_bound);
}

// Full point in C^2: (t, phi(t)) for horizontal, (phi(t), t) for vertical.
CVec eval_graph(const LipGraph& g, Cplx t);

// sup-norm estimate over the smaller domain, 64 boundary points plus center.
double graph_distance(const LipGraph& a, const LipGraph& b);

// Unique intersection point (X, Y) of a horizontal and a vertical graph,
// found as the fixed point of Y -> phi_H(phi_V(Y)).
CVec intersect_graphs(const LipGraph& h, const LipGraph& v);

}  // namespace pesinkit
