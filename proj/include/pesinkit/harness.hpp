#pragma once
// Concrete dynamical systems (maps, inverses, indeterminacy sets), orbit
// generation, run configuration, record serialization, and the CLI driver.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pesinkit/core.hpp"

namespace pesinkit {

struct OrbitWindow;  // cocycle.hpp

struct SystemSpec {
    std::string kind;
    int k = 2;
    bool invertible = false;
    bool torus = false;  // coordinates live on (R/Z)^k, distances wrap
    int n_branches = 1;
    double d2_bound = 0.0;  // sup norm of the second derivative (0 for linear)

    std::function<CVec(const CVec&)> f;
    std::function<CMat(const CVec&)> df;
    std::function<CVec(const CVec&, int)> finv;  // branch-indexed preimage
    std::function<double(const CVec&)> dist_I;   // distance to indeterminacy set

    CVec wrap(const CVec& p) const;                          // reduce to fundamental domain
    CVec displacement(const CVec& from, const CVec& to) const;  // to - from, wrapped
    double dist(const CVec& a, const CVec& b) const;
};

// Parse e.g. "complex_henon c=-1 b=0.3" / "cat_map" / "doubling" /
// "rotation alpha=0.377" / "classical_henon a=1.4 b=0.3" / "meromorphic_yx".
// Runs a finite-difference derivative self-test before returning.
SystemSpec load_system(const std::string& spec_text);

// Branch policy for backward steps of non-invertible maps.
struct BranchPolicy {
    std::vector<int> sequence;  // cycled; empty means branch 0 always
    int branch(int step) const {
        if (sequence.empty()) return 0;
        return sequence[step % sequence.size()];
    }
};

OrbitWindow generate_orbit(const SystemSpec& sys, const CVec& seed, int forward_m,
                           int backward_l, int transient = 0,
                           const BranchPolicy& policy = {});

// Builds the window of an exact periodic orbit by wrapping indices mod the
// period; forward consistency then holds up to the orbit residual.
OrbitWindow periodic_window(const SystemSpec& sys, const CVec& z, int period,
                            int forward_m, int backward_l);

struct RunConfig {
    std::map<std::string, std::string> kv;

    double getd(const std::string& key, double fallback) const;
    int geti(const std::string& key, int fallback) const;
    std::string gets(const std::string& key, const std::string& fallback) const;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);
    std::string canonical() const;  // sorted key=value lines, for hashing
};

// One structured record per line: "type=... k1=v1 k2=v2 ...".
struct RecordLine {
    std::string type;
    std::vector<std::pair<std::string, std::string>> fields;

    std::string serialize() const;
    static RecordLine parse(const std::string& line);
    void add(const std::string& key, const std::string& value);
    void add(const std::string& key, double value);
    void add(const std::string& key, int value);
};

// Exit codes: 0 ok, 1 usage, 2 budget failure, 3 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace pesinkit
