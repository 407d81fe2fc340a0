#pragma once

// Circuit representation, the line-oriented text format, gate sets, and the
// per-gate cost model.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

namespace qadapt {

using cplx = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;
using MatX = Eigen::MatrixXcd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error {
    int line;
    ParseError(int line_no, const std::string& what)
        : Error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};

struct GateSpec {
    int arity;
    int num_params;
};

/// Every gate name the library knows. `u` is the only single-qubit gate.
inline const std::map<std::string, GateSpec, std::less<>>& gate_specs() {
    static const std::map<std::string, GateSpec, std::less<>> specs = {
        {"u", {1, 3}},      {"cx", {2, 0}},     {"cz", {2, 0}},     {"swap", {2, 0}},
        {"cz_db", {2, 0}},  {"crot", {2, 1}},   {"swap_d", {2, 0}}, {"swap_c", {2, 0}},
    };
    return specs;
}

inline const GateSpec& gate_spec(std::string_view name) {
    auto it = gate_specs().find(name);
    if (it == gate_specs().end()) throw Error("unknown gate '" + std::string(name) + "'");
    return it->second;
}

struct Gate {
    std::string name;
    std::vector<int> qubits;
    std::vector<double> params;
    int uid = -1;

    bool is_two_qubit() const { return qubits.size() == 2; }
    bool acts_on(int q) const {
        for (int x : qubits)
            if (x == q) return true;
        return false;
    }
    friend bool operator==(const Gate&, const Gate&) = default;
};

/// Builds a gate and checks arity/parameter count against the registry.
inline Gate make_gate(std::string name, std::vector<int> qubits, std::vector<double> params = {},
                      int uid = -1) {
    const GateSpec& spec = gate_spec(name);
    if (static_cast<int>(qubits.size()) != spec.arity)
        throw Error("gate '" + name + "' expects " + std::to_string(spec.arity) + " qubit(s)");
    if (static_cast<int>(params.size()) != spec.num_params)
        throw Error("gate '" + name + "' expects " + std::to_string(spec.num_params) +
                    " parameter(s)");
    if (qubits.size() == 2 && qubits[0] == qubits[1])
        throw Error("gate '" + name + "' uses the same qubit twice");
    for (int q : qubits)
        if (q < 0) throw Error("negative qubit index");
    return Gate{std::move(name), std::move(qubits), std::move(params), uid};
}

inline Gate u_gate(int q, double theta, double phi, double lambda) {
    return make_gate("u", {q}, {theta, phi, lambda});
}

/// Hadamard up to global phase.
inline Gate h_gate(int q) { return u_gate(q, std::numbers::pi / 2, 0.0, std::numbers::pi); }

struct Circuit {
    int num_qubits = 1;
    std::vector<Gate> gates;

    /// Appends a gate, assigning the next free uid.
    Gate& add(Gate g) {
        for (int q : g.qubits)
            if (q >= num_qubits) throw Error("qubit index " + std::to_string(q) + " out of range");
        g.uid = gates.empty() ? 0 : gates.back().uid + 1;
        gates.push_back(std::move(g));
        return gates.back();
    }
    friend bool operator==(const Circuit&, const Circuit&) = default;
};

// ---------------------------------------------------------------- text format

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

template <class T>
bool parse_number(std::string_view tok, T& out) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc() && ptr == tok.data() + tok.size();
}

}  // namespace detail

/// Parses `qubits <Q>` followed by one `<name> <q0> [<q1>] [<param>...]` per line.
inline Circuit parse_circuit(std::string_view text) {
    Circuit c;
    bool have_header = false;
    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        auto toks = detail::split_ws(line);
        if (toks.empty()) {
            if (nl == text.size()) break;
            continue;
        }
        if (!have_header) {
            if (toks[0] != "qubits" || toks.size() != 2)
                throw ParseError(line_no, "expected 'qubits <Q>' header");
            int q = 0;
            if (!detail::parse_number(toks[1], q) || q <= 0)
                throw ParseError(line_no, "qubit count must be a positive integer");
            c.num_qubits = q;
            have_header = true;
            continue;
        }
        auto it = gate_specs().find(toks[0]);
        if (it == gate_specs().end())
            throw ParseError(line_no, "unknown gate '" + std::string(toks[0]) + "'");
        const GateSpec& spec = it->second;
        if (static_cast<int>(toks.size()) != 1 + spec.arity + spec.num_params)
            throw ParseError(line_no, "gate '" + std::string(toks[0]) + "' expects " +
                                          std::to_string(spec.arity) + " qubit(s) and " +
                                          std::to_string(spec.num_params) + " parameter(s)");
        std::vector<int> qubits;
        for (int k = 0; k < spec.arity; ++k) {
            int q = 0;
            if (!detail::parse_number(toks[1 + k], q) || q < 0)
                throw ParseError(line_no, "bad qubit index '" + std::string(toks[1 + k]) + "'");
            if (q >= c.num_qubits)
                throw ParseError(line_no, "qubit index " + std::to_string(q) + " >= " +
                                              std::to_string(c.num_qubits));
            qubits.push_back(q);
        }
        std::vector<double> params;
        for (int k = 0; k < spec.num_params; ++k) {
            double v = 0;
            if (!detail::parse_number(toks[1 + spec.arity + k], v))
                throw ParseError(line_no,
                                 "bad parameter '" + std::string(toks[1 + spec.arity + k]) + "'");
            params.push_back(v);
        }
        try {
            c.add(make_gate(std::string(toks[0]), std::move(qubits), std::move(params)));
        } catch (const Error& e) {
            throw ParseError(line_no, e.what());
        }
        if (nl == text.size()) break;
    }
    if (!have_header) throw ParseError(line_no, "missing 'qubits <Q>' header");
    return c;
}

inline std::string serialize_circuit(const Circuit& c) {
    std::string out = "qubits " + std::to_string(c.num_qubits);
    for (const Gate& g : c.gates) {
        out += '\n';
        out += g.name;
        for (int q : g.qubits) out += ' ' + std::to_string(q);
        for (double p : g.params) out += ' ' + detail::format_double(p);
    }
    return out;
}

inline Circuit read_circuit_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open circuit '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_circuit(ss.str());
}

// ---------------------------------------------------------------- gate sets

struct GateSet {
    std::set<std::string, std::less<>> names;

    bool contains(std::string_view n) const { return names.find(n) != names.end(); }

    static GateSet source() { return GateSet{{"u", "cx", "cz", "swap"}}; }
    static GateSet spin_target() { return GateSet{{"u", "cz", "cz_db", "crot", "swap_d", "swap_c"}}; }
};

/// Uids of gates whose name is not in `gs`, in circuit order.
inline std::vector<int> validate_gateset(const Circuit& c, const GateSet& gs) {
    std::vector<int> bad;
    for (const Gate& g : c.gates)
        if (!gs.contains(g.name)) bad.push_back(g.uid);
    return bad;
}

// ---------------------------------------------------------------- cost model

struct GateCost {
    double duration_ns = 0;
    double fidelity = 1;
    friend bool operator==(const GateCost&, const GateCost&) = default;
};

struct CostModel {
    std::string id;
    std::map<std::string, GateCost, std::less<>> gates;
    double t2_ns = 2900;
    double t1_ns = 2900e3;

    const GateCost& at(std::string_view name) const {
        auto it = gates.find(name);
        if (it == gates.end()) throw Error("no cost entry for gate '" + std::string(name) + "'");
        return it->second;
    }
    double duration(const Gate& g) const { return at(g.name).duration_ns; }
    double log_fidelity(const Gate& g) const { return std::log(at(g.name).fidelity); }

    /// Throws unless every gate of `gs` is costed with sane values.
    void check_covers(const GateSet& gs) const {
        for (const auto& n : gs.names) {
            const GateCost& gc = at(n);
            if (!(gc.duration_ns >= 0)) throw Error("negative duration for '" + n + "'");
            if (!(gc.fidelity > 0 && gc.fidelity <= 1))
                throw Error("fidelity of '" + n + "' outside (0,1]");
        }
        if (!(t2_ns > 0) || !(t1_ns > 0)) throw Error("coherence times must be positive");
    }

    // Spin-qubit gate table: fidelities shared, durations in two variants.
    static CostModel spin_d0() {
        return CostModel{"D0",
                         {{"u", {30, 0.999}},
                          {"cz", {152, 0.999}},
                          {"cz_db", {67, 0.99}},
                          {"crot", {660, 0.994}},
                          {"swap_d", {19, 0.99}},
                          {"swap_c", {89, 0.999}}},
                         2900,
                         2900e3};
    }
    static CostModel spin_d1() {
        return CostModel{"D1",
                         {{"u", {30, 0.999}},
                          {"cz", {151, 0.999}},
                          {"cz_db", {7, 0.99}},
                          {"crot", {660, 0.994}},
                          {"swap_d", {9, 0.99}},
                          {"swap_c", {13, 0.999}}},
                         2900,
                         2900e3};
    }
};

inline CostModel cost_model_from_json(const nlohmann::json& j, std::string id = {}) {
    CostModel cm;
    cm.id = j.value("id", std::move(id));
    if (!j.contains("gates") || !j["gates"].is_object()) throw Error("cost model needs a 'gates' object");
    for (const auto& [name, entry] : j["gates"].items()) {
        gate_spec(name);
        cm.gates[name] = GateCost{entry.at("duration_ns").get<double>(),
                                  entry.at("fidelity").get<double>()};
    }
    cm.t2_ns = j.value("t2_ns", 2900.0);
    if (j.contains("t1_ns"))
        cm.t1_ns = j["t1_ns"].get<double>();
    else
        cm.t1_ns = j.value("t1_factor", 1000.0) * cm.t2_ns;
    cm.check_covers(GateSet::spin_target());
    return cm;
}

inline nlohmann::json cost_model_to_json(const CostModel& cm) {
    nlohmann::json j;
    j["id"] = cm.id;
    for (const auto& [name, gc] : cm.gates)
        j["gates"][name] = {{"duration_ns", gc.duration_ns}, {"fidelity", gc.fidelity}};
    j["t2_ns"] = cm.t2_ns;
    j["t1_factor"] = cm.t1_ns / cm.t2_ns;
    return j;
}

/// Loads a JSON cost model file; `D0` and `D1` select the built-in tables.
inline CostModel load_cost_model(const std::string& path_or_id) {
    if (path_or_id == "D0") return CostModel::spin_d0();
    if (path_or_id == "D1") return CostModel::spin_d1();
    std::ifstream in(path_or_id);
    if (!in) throw Error("cannot open cost model '" + path_or_id + "'");
    try {
        return cost_model_from_json(nlohmann::json::parse(in), path_or_id);
    } catch (const nlohmann::json::exception& e) {
        throw Error("cost model '" + path_or_id + "': " + e.what());
    }
}

// ---------------------------------------------------------------- matrices

inline Mat2 u_matrix(double theta, double phi, double lambda) {
    const double c = std::cos(theta / 2), s = std::sin(theta / 2);
    Mat2 m;
    m << c, -std::polar(1.0, lambda) * s, std::polar(1.0, phi) * s, std::polar(1.0, phi + lambda) * c;
    return m;
}

/// Unitary of `g` with the first listed qubit as the most significant index bit.
inline MatX gate_matrix(const Gate& g) {
    using namespace std::complex_literals;
    const std::string& n = g.name;
    if (n == "u") {
        if (g.params.size() != 3) throw Error("u needs three parameters");
        return u_matrix(g.params[0], g.params[1], g.params[2]);
    }
    Mat4 m = Mat4::Zero();
    if (n == "cx") {
        m(0, 0) = m(1, 1) = 1;
        m(2, 3) = m(3, 2) = 1;
    } else if (n == "cz" || n == "cz_db") {
        m.diagonal() << 1, 1, 1, -1;
    } else if (n == "swap" || n == "swap_d" || n == "swap_c") {
        m(0, 0) = m(1, 2) = m(2, 1) = m(3, 3) = 1;
    } else if (n == "crot") {
        // controlled-Rx(theta)
        if (g.params.size() != 1) throw Error("crot needs one parameter");
        const double c = std::cos(g.params[0] / 2), s = std::sin(g.params[0] / 2);
        m(0, 0) = m(1, 1) = 1;
        m(2, 2) = m(3, 3) = c;
        m(2, 3) = m(3, 2) = -1i * s;
    } else {
        throw Error("no matrix for gate '" + n + "'");
    }
    return m;
}

}  // namespace qadapt
