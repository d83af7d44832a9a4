#include "pesinkit/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "pesinkit/closing.hpp"
#include "pesinkit/cocycle.hpp"
#include "pesinkit/coding.hpp"

namespace pesinkit {

CVec SystemSpec::wrap(const CVec& p) const {
    if (!torus) return p;
    CVec q = p;
    for (int i = 0; i < q.size(); ++i) {
        double re = q(i).real();
        re -= std::floor(re);
        q(i) = Cplx(re, q(i).imag());
    }
    return q;
}

CVec SystemSpec::displacement(const CVec& from, const CVec& to) const {
    CVec d = to - from;
    if (torus) {
        for (int i = 0; i < d.size(); ++i) {
            double re = d(i).real();
            re -= std::round(re);
            d(i) = Cplx(re, d(i).imag());
        }
    }
    return d;
}

double SystemSpec::dist(const CVec& a, const CVec& b) const {
    return displacement(a, b).norm();
}

namespace {

Cplx parse_cplx(const std::string& s) {
    // accepts "0.3", "-1", "-1+0i", "1.5-0.25i"
    if (s.empty()) throw toolkit_error("empty parameter value");
    if (s.back() != 'i') return Cplx(std::stod(s), 0.0);
    std::string body = s.substr(0, s.size() - 1);
    // find the sign separating re and im (not at position 0, not after e/E)
    for (size_t i = body.size(); i-- > 1;) {
        char c = body[i];
        if ((c == '+' || c == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') {
            double re = std::stod(body.substr(0, i));
            std::string im = body.substr(i);
            if (im == "+") return Cplx(re, 1.0);
            if (im == "-") return Cplx(re, -1.0);
            return Cplx(re, std::stod(im));
        }
    }
    return Cplx(0.0, std::stod(body));  // pure imaginary
}

CVec v2(Cplx a, Cplx b) {
    CVec v(2);
    v << a, b;
    return v;
}

void derivative_self_test(const SystemSpec& sys, const std::vector<CVec>& pts) {
    const double step = 1e-6;
    for (const auto& p : pts) {
        CMat J = sys.df(p);
        for (int j = 0; j < sys.k; ++j) {
            CVec e = CVec::Zero(sys.k);
            e(j) = Cplx(step, 0);
            CVec col = (sys.f(p + e) - sys.f(p - e)) / Cplx(2 * step, 0);
            double denom = std::max(1.0, J.col(j).norm());
            if ((col - J.col(j)).norm() / denom > 1e-5)
                throw toolkit_error("system self-test failure: derivative mismatch");
        }
    }
}

}  // namespace

SystemSpec load_system(const std::string& spec_text) {
    std::istringstream is(spec_text);
    std::string kind;
    is >> kind;
    std::map<std::string, Cplx> par;
    std::string tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw toolkit_error("bad system parameter token: " + tok);
        par[tok.substr(0, eq)] = parse_cplx(tok.substr(eq + 1));
    }
    auto getp = [&](const std::string& key, Cplx fallback) {
        auto it = par.find(key);
        return it == par.end() ? fallback : it->second;
    };

    SystemSpec s;
    s.kind = kind;
    s.dist_I = [](const CVec&) { return 1.0; };

    if (kind == "complex_henon") {
        Cplx c = getp("c", Cplx(-1, 0)), b = getp("b", Cplx(0.3, 0));
        if (std::abs(b) < 1e-12) throw toolkit_error("complex_henon: b must be nonzero");
        s.k = 2;
        s.invertible = true;
        s.d2_bound = 2.0;
        s.f = [c, b](const CVec& p) { return v2(p(0) * p(0) + c - b * p(1), p(0)); };
        s.df = [b](const CVec& p) {
            CMat J(2, 2);
            J << 2.0 * p(0), -b, Cplx(1, 0), Cplx(0, 0);
            return J;
        };
        s.finv = [c, b](const CVec& p, int) {
            return v2(p(1), (p(1) * p(1) + c - p(0)) / b);
        };
    } else if (kind == "classical_henon") {
        Cplx a = getp("a", Cplx(1.4, 0)), b = getp("b", Cplx(0.3, 0));
        if (std::abs(b) < 1e-12) throw toolkit_error("classical_henon: b must be nonzero");
        s.k = 2;
        s.invertible = true;
        s.d2_bound = 2.0 * std::abs(a);
        s.f = [a, b](const CVec& p) {
            return v2(Cplx(1, 0) - a * p(0) * p(0) + p(1), b * p(0));
        };
        s.df = [a, b](const CVec& p) {
            CMat J(2, 2);
            J << -2.0 * a * p(0), Cplx(1, 0), b, Cplx(0, 0);
            return J;
        };
        s.finv = [a, b](const CVec& p, int) {
            Cplx x = p(1) / b;
            return v2(x, p(0) - Cplx(1, 0) + a * x * x);
        };
    } else if (kind == "cat_map") {
        s.k = 2;
        s.invertible = true;
        s.torus = true;
        s.d2_bound = 0.0;
        CMat M(2, 2), Mi(2, 2);
        M << Cplx(2, 0), Cplx(1, 0), Cplx(1, 0), Cplx(1, 0);
        Mi << Cplx(1, 0), Cplx(-1, 0), Cplx(-1, 0), Cplx(2, 0);
        s.f = [M](const CVec& p) {
            CVec q = M * p;
            for (int i = 0; i < 2; ++i) {
                double re = q(i).real();
                q(i) = Cplx(re - std::floor(re), q(i).imag());
            }
            return q;
        };
        s.df = [M](const CVec&) { return M; };
        s.finv = [Mi](const CVec& p, int) {
            CVec q = Mi * p;
            for (int i = 0; i < 2; ++i) {
                double re = q(i).real();
                q(i) = Cplx(re - std::floor(re), q(i).imag());
            }
            return q;
        };
    } else if (kind == "doubling") {
        s.k = 1;
        s.invertible = false;
        s.torus = true;
        s.n_branches = 2;
        s.d2_bound = 0.0;
        s.f = [](const CVec& p) {
            CVec q(1);
            double re = 2.0 * p(0).real();
            q(0) = Cplx(re - std::floor(re), 0);
            return q;
        };
        s.df = [](const CVec&) {
            CMat J(1, 1);
            J << Cplx(2, 0);
            return J;
        };
        s.finv = [](const CVec& p, int branch) {
            CVec q(1);
            q(0) = Cplx(p(0).real() / 2.0 + 0.5 * (branch & 1), 0);
            return q;
        };
    } else if (kind == "rotation") {
        double alpha = getp("alpha", Cplx(0.3819660112501051, 0)).real();
        s.k = 1;
        s.invertible = true;
        s.torus = true;
        s.d2_bound = 0.0;
        s.f = [alpha](const CVec& p) {
            CVec q(1);
            double re = p(0).real() + alpha;
            q(0) = Cplx(re - std::floor(re), 0);
            return q;
        };
        s.df = [](const CVec&) {
            CMat J(1, 1);
            J << Cplx(1, 0);
            return J;
        };
        s.finv = [alpha](const CVec& p, int) {
            CVec q(1);
            double re = p(0).real() - alpha;
            q(0) = Cplx(re - std::floor(re), 0);
            return q;
        };
    } else if (kind == "meromorphic_yx") {
        s.k = 2;
        s.invertible = false;
        s.d2_bound = 2.0;  // nominal; true bound blows up near I, handled by dist_I
        s.f = [](const CVec& p) { return v2(p(1), p(1) / p(0)); };
        s.df = [](const CVec& p) {
            CMat J(2, 2);
            J << Cplx(0, 0), Cplx(1, 0), -p(1) / (p(0) * p(0)), Cplx(1, 0) / p(0);
            return J;
        };
        s.dist_I = [](const CVec& p) { return std::min(1.0, std::abs(p(0))); };
    } else {
        throw toolkit_error("unknown system kind: " + kind);
    }

    // self-test away from indeterminacy
    std::mt19937 rng(1234);
    std::uniform_real_distribution<double> U(0.4, 1.2);
    std::vector<CVec> test_pts;
    for (int t = 0; t < 5; ++t) {
        CVec p(s.k);
        for (int i = 0; i < s.k; ++i)
            p(i) = Cplx(U(rng), s.torus ? 0.0 : 0.3 * U(rng));
        test_pts.push_back(p);
    }
    derivative_self_test(s, test_pts);
    return s;
}

OrbitWindow generate_orbit(const SystemSpec& sys, const CVec& seed, int forward_m,
                           int backward_l, int transient, const BranchPolicy& policy) {
    CVec p = sys.wrap(seed);
    if (sys.dist_I(p) < 1e-6) throw toolkit_error("seed on indeterminacy set");
    for (int t = 0; t < transient; ++t) {
        p = sys.f(p);
        if (p.norm() > 1e8) throw toolkit_error("orbit diverges during transient");
        if (sys.dist_I(p) < 1e-6)
            throw toolkit_error("orbit hits indeterminacy neighborhood at transient step " +
                                std::to_string(t));
    }

    OrbitWindow w;
    w.sys = &sys;
    w.L = backward_l;
    w.M = forward_m;
    w.pts.resize(w.length());
    w.pts[backward_l] = p;

    CVec q = p;
    for (int i = 1; i <= forward_m; ++i) {
        q = sys.f(q);
        if (q.norm() > 1e8)
            throw toolkit_error("orbit diverges at forward index " + std::to_string(i));
        if (sys.dist_I(q) < 1e-6)
            throw toolkit_error("orbit hits indeterminacy neighborhood at index " +
                                std::to_string(i));
        w.pts[backward_l + i] = q;
    }
    q = p;
    for (int i = 1; i <= backward_l; ++i) {
        if (!sys.finv)
            throw toolkit_error("system has no inverse/branch for backward steps");
        int br = policy.branch(i - 1);
        q = sys.finv(q, br);
        if (q.norm() > 1e8)
            throw toolkit_error("orbit diverges at backward index " + std::to_string(-i));
        if (sys.dist_I(q) < 1e-6)
            throw toolkit_error("orbit hits indeterminacy neighborhood at index " +
                                std::to_string(-i));
        w.pts[backward_l - i] = q;
        w.branches.push_back(br);
    }
    verify_window(w);
    return w;
}

OrbitWindow periodic_window(const SystemSpec& sys, const CVec& z, int period,
                            int forward_m, int backward_l) {
    std::vector<CVec> cyc(period);
    cyc[0] = sys.wrap(z);
    for (int i = 1; i < period; ++i) cyc[i] = sys.f(cyc[i - 1]);
    OrbitWindow w;
    w.sys = &sys;
    w.L = backward_l;
    w.M = forward_m;
    w.pts.resize(w.length());
    for (int i = -backward_l; i <= forward_m; ++i) {
        int idx = ((i % period) + period) % period;
        w.pts[i + backward_l] = cyc[idx];
    }
    verify_window(w);
    return w;
}

double RunConfig::getd(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stod(it->second);
}
int RunConfig::geti(const std::string& key, int fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stoi(it->second);
}
std::string RunConfig::gets(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw toolkit_error("config line without '=': " + line);
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        while (!val.empty() && val.front() == ' ') val.erase(val.begin());
        c.kv[key] = val;
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw toolkit_error("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

void RecordLine::add(const std::string& key, const std::string& value) {
    fields.emplace_back(key, value);
}
void RecordLine::add(const std::string& key, double value) {
    char buf[40];
    snprintf(buf, sizeof buf, "%.17g", value);
    fields.emplace_back(key, buf);
}
void RecordLine::add(const std::string& key, int value) {
    fields.emplace_back(key, std::to_string(value));
}

std::string RecordLine::serialize() const {
    std::string out = "type=" + type;
    for (const auto& [k, v] : fields) out += " " + k + "=" + v;
    return out;
}

RecordLine RecordLine::parse(const std::string& line) {
    RecordLine r;
    std::istringstream is(line);
    std::string tok;
    bool first = true;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw toolkit_error("bad record token: " + tok);
        std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (first) {
            if (key != "type") throw toolkit_error("record must start with type=");
            r.type = val;
            first = false;
        } else {
            r.fields.emplace_back(key, val);
        }
    }
    if (first) throw toolkit_error("empty record line");
    return r;
}

// ---------------------------------------------------------------------------
// CLI driver
// ---------------------------------------------------------------------------

namespace {

std::string config_hash(const RunConfig& cfg, std::uint64_t seed) {
    // FNV-1a over the canonical config text plus the seed
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](unsigned char c) {
        h ^= c;
        h *= 1099511628211ull;
    };
    for (char c : cfg.canonical()) mix(static_cast<unsigned char>(c));
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
    char buf[20];
    snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string slug(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    return s;
}

struct Sink {
    std::vector<RecordLine> records;
    std::string hash;
    std::uint64_t seed = 0;

    void push(RecordLine r) {
        r.add("cfg", hash);
        r.add("seed", static_cast<int>(seed));
        records.push_back(std::move(r));
    }
    void flush(const std::string& out_path) const {
        std::ostringstream os;
        for (const auto& r : records) os << r.serialize() << "\n";
        if (out_path.empty()) {
            std::cout << os.str();
        } else {
            std::ofstream f(out_path);
            if (!f) throw toolkit_error("cannot open output: " + out_path);
            f << os.str();
        }
    }
};

RecordLine budget_record(const BudgetReport& rep) {
    RecordLine r;
    r.type = "budget";
    r.add("pass", rep.pass ? 1 : 0);
    r.add("items", static_cast<int>(rep.items.size()));
    int fails = 0;
    std::string first;
    double min_margin = std::numeric_limits<double>::infinity();
    for (const auto& it : rep.items) {
        if (!it.pass && first.empty()) first = it.name;
        if (!it.pass) ++fails;
        min_margin = std::min(min_margin, it.margin());
    }
    r.add("failed", fails);
    r.add("min_margin", min_margin);
    if (!first.empty()) r.add("first_fail", slug(first));
    return r;
}

ParameterBudget budget_from_config(const RunConfig& cfg) {
    ParameterBudget p;
    p.gamma = cfg.getd("gamma", p.gamma);
    p.gamma0 = cfg.getd("gamma0", p.gamma0);
    p.h = cfg.getd("h", p.h);
    p.eta = cfg.getd("eta", p.eta);
    p.delta_measure = cfg.getd("delta_measure", p.delta_measure);
    p.eps = cfg.getd("eps", p.eps);
    p.chi_top = cfg.getd("chi_top", p.chi_top);
    p.chi_u = cfg.getd("chi_u", p.chi_u);
    p.chi_s = cfg.getd("chi_s", p.chi_s);
    p.r0 = cfg.getd("r0", p.r0);
    return p;
}

std::vector<int> parse_word(const std::string& s) {
    std::vector<int> w;
    for (char c : s) {
        if (c < '0' || c > '9') throw toolkit_error("bad itinerary digit");
        w.push_back(c - '0');
    }
    if (w.empty()) throw toolkit_error("empty itinerary");
    return w;
}

OrbitWindow cli_orbit(const SystemSpec& sys, const RunConfig& cfg) {
    const int M = cfg.geti("M", 300), L = cfg.geti("L", 60);
    if (cfg.kv.count("itinerary"))
        return periodic_window_from_itinerary(
            sys, parse_word(cfg.gets("itinerary", "")), M, L);
    CVec seed(sys.k);
    seed(0) = parse_cplx(cfg.gets("x0", "0.1"));
    if (sys.k > 1) seed(1) = parse_cplx(cfg.gets("y0", "0.1"));
    return generate_orbit(sys, seed, M, L, cfg.geti("transient", 0));
}

PesinConstants pc_from_config(const RunConfig& cfg) {
    PesinConstants pc;
    pc.eps1 = cfg.getd("pesin_eps1", pc.eps1);
    pc.p = cfg.getd("pesin_p", pc.p);
    pc.C = cfg.getd("pesin_C", pc.C);
    return pc;
}

int cmd_budget(const RunConfig& cfg, Sink& sink) {
    BudgetReport rep = validate_budget(budget_from_config(cfg));
    sink.push(budget_record(rep));
    return rep.pass ? 0 : 2;
}

int cmd_lyap(const RunConfig& cfg, Sink& sink) {
    SystemSpec sys = load_system(cfg.gets("system", "cat_map"));
    OrbitWindow w = cli_orbit(sys, cfg);
    LyapunovSpectrum sp = finite_lyapunov(w);
    RecordLine r;
    r.type = "spectrum";
    r.add("system", slug(sys.kind));
    for (size_t i = 0; i < sp.chi.size(); ++i)
        r.add("chi" + std::to_string(i + 1), sp.chi[i]);
    r.add("m0", sp.m0);
    r.add("gap", sp.gap);
    r.add("window", sp.window_len);
    sink.push(r);
    return 0;
}

int cmd_chart(const RunConfig& cfg, Sink& sink) {
    SystemSpec sys = load_system(cfg.gets("system", "cat_map"));
    OrbitWindow w = cli_orbit(sys, cfg);
    LyapunovSpectrum sp = finite_lyapunov(w);
    Splitting split = oseledets_splitting(w, sp);
    const double gamma = cfg.getd("gamma", 0.1);
    PesinChartData charts =
        build_pesin_charts(w, split, sp, gamma, pc_from_config(cfg));
    double rmin = charts.r[0], rmax = charts.r[0];
    for (double rr : charts.r) {
        rmin = std::min(rmin, rr);
        rmax = std::max(rmax, rr);
    }
    RecordLine r;
    r.type = "chart";
    r.add("system", slug(sys.kind));
    r.add("gamma", gamma);
    r.add("r_at_0", charts.radius(0));
    r.add("r_min", rmin);
    r.add("r_max", rmax);
    r.add("frame_defect", charts.frame(0).inverse_defect());
    sink.push(r);
    return 0;
}

int cmd_close(const RunConfig& cfg, Sink& sink, bool override_budget) {
    SystemSpec sys = load_system(cfg.gets("system", "complex_henon c=-1 b=0.3"));
    OrbitWindow w = cli_orbit(sys, cfg);
    LyapunovSpectrum sp = finite_lyapunov(w);
    Splitting split = oseledets_splitting(w, sp);
    const double eta = cfg.getd("eta", 1e-3);

    ParameterBudget budget;
    if (cfg.kv.count("gamma0") || cfg.kv.count("h")) {
        budget = budget_from_config(cfg);
        budget.chi_top = sp.chi.front();
        budget.chi_u = sp.chi[sp.m0 > 0 ? sp.m0 - 1 : 0];
        budget.chi_s = sp.chi.back();
    } else {
        // probe radii at a provisional gamma, then let the suggester pick
        PesinChartData probe = build_pesin_charts(w, split, sp,
                                                  cfg.getd("gamma", 0.1),
                                                  pc_from_config(cfg));
        double rmin = *std::min_element(probe.r.begin(), probe.r.end());
        budget = suggest_budget(sp.chi.front(), sp.chi[sp.m0 > 0 ? sp.m0 - 1 : 0],
                                sp.chi.back(), rmin, eta);
    }
    BudgetReport rep = validate_budget(budget);
    sink.push(budget_record(rep));
    if (!rep.pass && !override_budget) return 2;
    if (!rep.pass) {
        RecordLine o;
        o.type = "override";
        o.add("budget_pass", 0);
        sink.push(o);
    }

    PesinChartData charts =
        build_pesin_charts(w, split, sp, budget.gamma, pc_from_config(cfg));
    int i0, m;
    if (cfg.kv.count("i0") && cfg.kv.count("m")) {
        i0 = cfg.geti("i0", 0);
        m = cfg.geti("m", 1);
    } else {
        std::vector<NearReturn> nr =
            find_near_returns(w, eta, cfg.geti("max_m", w.hi() / 2));
        if (nr.empty()) throw toolkit_error("no near returns at this eta");
        // prefer the shortest return based nearest the window center, where
        // the finite-window Lyapunov frames are least distorted
        std::sort(nr.begin(), nr.end(), [](const NearReturn& a, const NearReturn& b) {
            if (a.m != b.m) return a.m < b.m;
            return std::abs(a.i) < std::abs(b.i);
        });
        i0 = nr.front().i;
        m = nr.front().m;
    }
    ClosingCertificate cert = close_orbit(w, charts, i0, m, budget, override_budget);
    RecordLine r;
    r.type = "certificate";
    r.add("system", slug(sys.kind));
    r.add("i0", cert.i0);
    r.add("m", cert.m);
    r.add("residual", cert.residual);
    r.add("eps", cert.eps);
    r.add("newton_gap", cert.newton_gap);
    r.add("generations", cert.generations);
    r.add("n_expanding", cert.n_expanding);
    r.add("n_contracting", cert.n_contracting);
    for (size_t i = 0; i < cert.eig_moduli.size(); ++i)
        r.add("eig" + std::to_string(i + 1), cert.eig_moduli[i]);
    r.add("ok", cert.ok ? 1 : 0);
    sink.push(r);
    return cert.ok ? 0 : 3;
}

int cmd_entropy(const RunConfig& cfg, Sink& sink) {
    SystemSpec sys = load_system(cfg.gets("system", "doubling"));
    if (!sys.torus)
        throw toolkit_error(
            "entropy sampling needs a torus system (use the coding pipeline "
            "for dissipative maps)");
    const int n_samples = cfg.geti("samples", 2000);
    std::mt19937_64 rng(sink.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<CVec> samples;
    for (int i = 0; i < n_samples; ++i) {
        CVec p(sys.k);
        for (int j = 0; j < sys.k; ++j) p(j) = Cplx(U(rng), 0);
        samples.push_back(p);
    }
    auto parse_list = [](const std::string& s) {
        std::vector<double> out;
        std::istringstream is(s);
        std::string tok;
        while (std::getline(is, tok, ',')) out.push_back(std::stod(tok));
        return out;
    };
    std::vector<double> eps_list = parse_list(cfg.gets("eps_list", "0.2,0.1"));
    std::vector<int> m_list;
    for (double m : parse_list(cfg.gets("m_list", "1,2,3,4,5,6")))
        m_list.push_back(static_cast<int>(m));
    EntropyEstimate est = entropy_estimate(samples, sys, eps_list, m_list);
    RecordLine r;
    r.type = "entropy";
    r.add("system", slug(sys.kind));
    r.add("h", est.h);
    r.add("samples", n_samples);
    for (size_t e = 0; e < est.slope_per_eps.size(); ++e) {
        r.add("slope_eps" + std::to_string(e), est.slope_per_eps[e]);
        r.add("resid_eps" + std::to_string(e), est.fit_residual_per_eps[e]);
    }
    r.add("warnings", static_cast<int>(est.warnings.size()));
    sink.push(r);
    return 0;
}

int cmd_code(const RunConfig& cfg, Sink& sink, bool override_budget) {
    SystemSpec sys = load_system(cfg.gets("system", "complex_henon c=-4 b=0.1"));
    const int n = cfg.geti("n", 16);
    const int flip = cfg.geti("flip", 11);
    const int Lw = cfg.geti("Lw", 6);
    const double eta = cfg.getd("eta", 1e-2);
    const double eps = cfg.getd("eps", 0.3);
    const double reach = cfg.getd("member_reach", 1e-5);
    const int W = cfg.geti("W", 10000);
    const int M = cfg.geti("M", 70), L = cfg.geti("L", 70);
    if (flip < 0 || flip >= n) throw toolkit_error("flip position out of range");

    std::vector<int> w1(n), w2;
    for (int t = 0; t < n; ++t) w1[t] = t % 2;
    w2 = w1;
    w2[flip] = 1 - w2[flip];
    std::vector<CVec> cands;
    std::vector<OrbitWindow> wins;
    for (int s = 0; s < n; ++s) {
        for (const auto& base : {w1, w2}) {
            std::vector<int> rr(n);
            for (int t = 0; t < n; ++t) rr[t] = base[(t + s) % n];
            cands.push_back(periodic_point_from_itinerary(sys, rr));
            wins.push_back(periodic_window_from_itinerary(sys, rr, M, L));
        }
    }
    SeparatedSet sep = bowen_separated(cands, n, eps, sys);
    std::vector<OrbitWindow> sepwins;
    for (const auto& p : sep.points)
        for (size_t i = 0; i < cands.size(); ++i)
            if ((cands[i] - p).norm() == 0.0) {
                sepwins.push_back(wins[i]);
                break;
            }
    ReturnFamily fam =
        harvest_returns(sep, sepwins, eta, cfg.geti("n_lo", 10), cfg.geti("n_hi", 20));
    ReturnFamily close_fam = fam;
    close_fam.members.clear();
    for (const auto& m : fam.members)
        if (sys.dist(m.at(0), fam.center.at(0)) < reach)
            close_fam.members.push_back(m);
    if (close_fam.members.empty())
        throw toolkit_error("no members within chart reach");

    LyapunovSpectrum sp = finite_lyapunov(fam.center);
    ParameterBudget budget = suggest_budget(
        sp.chi.front(), sp.chi.front(), sp.chi.back(), cfg.getd("r0", 0.08), eta);
    BudgetReport rep = validate_budget(budget);
    sink.push(budget_record(rep));
    if (!rep.pass && !override_budget) return 2;

    PesinConstants pc = pc_from_config(cfg);
    if (!cfg.kv.count("pesin_C")) pc.C = 0.5;  // chart scale suited to coding
    CodingTree tree = build_coding_tree(close_fam, Lw, budget, override_budget, pc);

    std::mt19937_64 rng(sink.seed + 1);
    std::vector<std::vector<int>> words;
    for (int i = 0; i < cfg.geti("semiconj_words", 500); ++i) {
        std::vector<int> ww(2 * Lw + 1);
        for (auto& s : ww) s = static_cast<int>(rng() % tree.N);
        words.push_back(ww);
    }
    SemiconjugacyReport sr = check_semiconjugacy(tree, words);

    RecordLine r;
    r.type = "coding";
    r.add("system", slug(sys.kind));
    r.add("n", tree.n);
    r.add("N_harvest", fam.N());
    r.add("N", tree.N);
    r.add("Lw", tree.Lw);
    r.add("nested", tree.nested ? 1 : 0);
    r.add("nesting_defect", tree.nesting_defect);
    r.add("vertical_disjoint", tree.vertical_disjoint ? 1 : 0);
    r.add("horizontal_disjoint", tree.horizontal_disjoint ? 1 : 0);
    r.add("min_vertical_gap", tree.min_vertical_gap);
    r.add("min_horizontal_gap", tree.min_horizontal_gap);
    r.add("sep_alpha", tree.sep_alpha);
    r.add("sep_verified", tree.sep_verified ? 1 : 0);
    for (size_t l = 0; l < tree.max_diam_A.size(); ++l)
        r.add("diam_A" + std::to_string(l), tree.max_diam_A[l]);
    r.add("semiconj_residual", sr.max_residual);
    r.add("semiconj_bound", sr.pass_bound);
    r.add("semiconj_pass", sr.pass ? 1 : 0);
    sink.push(r);

    std::vector<std::function<double(const CVec&)>> fns = {
        [](const CVec& p) { return p(0).real(); },
        [](const CVec& p) { return p(0).imag(); },
        [](const CVec& p) { return p(1).real(); }};
    const char* names[3] = {"re_x", "im_x", "re_y"};
    MeasureReport mr = pushforward_stats(tree, fns, W, fam.center, sink.seed + 2);
    for (size_t k = 0; k < mr.fns.size(); ++k) {
        RecordLine mrec;
        mrec.type = "measure";
        mrec.add("phi", names[k]);
        mrec.add("nu_mean", mr.fns[k].nu_mean);
        mrec.add("ref_mean", mr.fns[k].ref_mean);
        mrec.add("invariance_defect", mr.fns[k].invariance_defect);
        mrec.add("defect_std_err", mr.fns[k].defect_std_err);
        sink.push(mrec);
    }
    RecordLine erec;
    erec.type = "coded_entropy";
    erec.add("h", mr.entropy_coded);
    erec.add("log_N_over_n", mr.log_N_over_n);
    sink.push(erec);
    if (!sr.pass || !tree.nested || !tree.vertical_disjoint) return 3;
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"numerical closing-lemma and Bernoulli-coding toolkit"};
    app.require_subcommand(1);
    std::string config_path, out_path;
    std::uint64_t seed = 0;
    bool override_budget = false;
    for (const char* name : {"lyap", "chart", "close", "code", "entropy", "budget"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "config file (key=value lines)")
            ->required();
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--out", out_path, "output path (default stdout)");
        sub->add_flag("--override-budget", override_budget,
                      "run even if the budget fails validation (recorded)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message / help
        return 1;
    }
    const std::string sub = app.get_subcommands().front()->get_name();

    Sink sink;
    sink.seed = seed;
    int code = 0;
    try {
        RunConfig cfg = RunConfig::load(config_path);
        sink.hash = config_hash(cfg, seed);
        if (sub == "budget") code = cmd_budget(cfg, sink);
        else if (sub == "lyap") code = cmd_lyap(cfg, sink);
        else if (sub == "chart") code = cmd_chart(cfg, sink);
        else if (sub == "close") code = cmd_close(cfg, sink, override_budget);
        else if (sub == "entropy") code = cmd_entropy(cfg, sink);
        else if (sub == "code") code = cmd_code(cfg, sink, override_budget);
    } catch (const std::exception& e) {
        RecordLine err;
        err.type = "error";
        err.add("what", slug(e.what()));
        sink.push(err);
        code = 3;
    }
    try {
        sink.flush(out_path);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return code;
}

}  // namespace pesinkit
