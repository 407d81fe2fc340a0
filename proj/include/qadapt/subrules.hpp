#pragma once

// Substitution rules (verified template equivalences and per-block KAK
// decomposition), match enumeration, cost deltas and conflicts.

#include "qadapt/preprocess.hpp"

namespace qadapt {

enum class RuleKind { Template, Decomposition };

/// Template rules use role qubits 0 and 1; a match maps the roles onto a
/// block's pair in either orientation.
struct SubstitutionRule {
    std::string id;
    RuleKind kind = RuleKind::Template;
    std::vector<Gate> pattern;
    std::vector<Gate> replacement;
    std::string entangler;  // decomposition rules only
};

/// Checks that pattern and replacement agree up to global phase.
inline void verify_rule(const SubstitutionRule& r) {
    if (r.kind != RuleKind::Template) return;
    if (r.pattern.empty()) throw Error("rule '" + r.id + "' has an empty pattern");
    for (const auto* seq : {&r.pattern, &r.replacement})
        for (const Gate& g : *seq)
            for (int q : g.qubits)
                if (q != 0 && q != 1) throw Error("rule '" + r.id + "' uses a role qubit other than 0/1");
    if (!equal_up_to_global_phase(block_unitary(r.pattern), block_unitary(r.replacement), kEquivalenceTol))
        throw Error("rule '" + r.id + "': pattern and replacement are not equivalent");
}

struct RuleLibrary {
    std::vector<SubstitutionRule> rules;

    void add(SubstitutionRule r) {
        verify_rule(r);
        rules.push_back(std::move(r));
    }

    /// Spin-qubit rule set. Decomposition rules come first so each block's
    /// KAK matches get the lowest ids.
    static RuleLibrary spin(bool use_cz_db = true) {
        using std::numbers::pi;
        RuleLibrary lib;
        lib.add({"kak_cz", RuleKind::Decomposition, {}, {}, "cz"});
        if (use_cz_db) lib.add({"kak_cz_db", RuleKind::Decomposition, {}, {}, "cz_db"});

        const Gate cx01 = make_gate("cx", {0, 1}), cx10 = make_gate("cx", {1, 0});
        // controlled-Rx(pi) is CX with an S^dagger on the control
        lib.add({"cx_crot", RuleKind::Template, {cx01},
                 {make_gate("crot", {0, 1}, {pi}), u_gate(0, 0, 0, pi / 2)}, ""});
        if (use_cz_db) {
            lib.add({"cx_cz_db", RuleKind::Template, {cx01},
                     {h_gate(1), make_gate("cz_db", {0, 1}), h_gate(1)}, ""});
            lib.add({"cz_cz_db", RuleKind::Template, {make_gate("cz", {0, 1})},
                     {make_gate("cz_db", {0, 1})}, ""});
        }
        lib.add({"cx3_swap_d", RuleKind::Template, {cx01, cx10, cx01}, {make_gate("swap_d", {0, 1})}, ""});
        lib.add({"cx3_swap_c", RuleKind::Template, {cx01, cx10, cx01}, {make_gate("swap_c", {0, 1})}, ""});
        lib.add({"swap_swap_d", RuleKind::Template, {make_gate("swap", {0, 1})}, {make_gate("swap_d", {0, 1})}, ""});
        lib.add({"swap_swap_c", RuleKind::Template, {make_gate("swap", {0, 1})}, {make_gate("swap_c", {0, 1})}, ""});
        return lib;
    }

    /// Appends rules from `[{"id":..,"pattern":["cx 0 1",..],"replacement":[..]}]`.
    void add_from_json(const nlohmann::json& j) {
        if (!j.is_array()) throw Error("rule file must be a JSON list");
        auto parse_seq = [](const nlohmann::json& seq) {
            std::string text = "qubits 2";
            for (const auto& s : seq) text += "\n" + s.get<std::string>();
            std::vector<Gate> gates = parse_circuit(text).gates;
            for (Gate& g : gates) g.uid = -1;
            return gates;
        };
        int n = 0;
        for (const auto& entry : j) {
            SubstitutionRule r;
            r.id = entry.value("id", "user_" + std::to_string(n++));
            r.pattern = parse_seq(entry.at("pattern"));
            r.replacement = parse_seq(entry.at("replacement"));
            add(std::move(r));
        }
    }
};

/// One applicable substitution: the window of source gates `uids` in block
/// `block` is replaced by `replacement`.
struct SubstitutionMatch {
    int id = 0;
    int block = 0;
    std::string rule_id;
    std::vector<int> uids;  // ascending
    int window_start = 0;   // position inside the block's gate list
    int window_len = 0;
    std::vector<Gate> replacement;
    double delta_duration_ns = 0;
    double delta_log_fidelity = 0;
};

namespace detail {

inline bool gate_matches(const Gate& pat, const Gate& g, int role0, int role1) {
    if (pat.name != g.name || pat.qubits.size() != g.qubits.size() || pat.params.size() != g.params.size())
        return false;
    for (size_t k = 0; k < pat.qubits.size(); ++k)
        if ((pat.qubits[k] == 0 ? role0 : role1) != g.qubits[k]) return false;
    for (size_t k = 0; k < pat.params.size(); ++k)
        if (std::abs(pat.params[k] - g.params[k]) > kConstructionTol) return false;
    return true;
}

}  // namespace detail

/// Gates of block `b` with the given matches applied and every other gate
/// reference-translated, single-qubit runs merged. Matches must be disjoint.
inline std::vector<Gate> emit_block(const PreprocessedCircuit& pc, const Block& b,
                                    std::span<const SubstitutionMatch* const> chosen,
                                    const EquivalenceLibrary& lib = default_library()) {
    const int n = static_cast<int>(b.gate_uids.size());
    std::vector<const SubstitutionMatch*> at(n, nullptr);
    std::vector<bool> covered(n, false);
    for (const SubstitutionMatch* m : chosen) {
        if (m->block != b.id) throw Error("match " + std::to_string(m->id) + " is not in block " + std::to_string(b.id));
        for (int k = m->window_start; k < m->window_start + m->window_len; ++k) {
            if (covered[k]) throw Error("chosen substitutions overlap in block " + std::to_string(b.id));
            covered[k] = true;
        }
        at[m->window_start] = m;
    }
    std::vector<Gate> raw;
    for (int k = 0; k < n; ++k) {
        if (at[k]) {
            for (const Gate& g : at[k]->replacement) raw.push_back(g);
        } else if (!covered[k]) {
            for (Gate& g : lib.translate(pc.gate(b.gate_uids[k]))) raw.push_back(std::move(g));
        }
    }
    return merge_single_qubit_runs(raw);
}

/// In-context deltas: cost of the block with only `m` applied minus the
/// block's reference cost.
inline std::pair<double, double> substitution_deltas(const PreprocessedCircuit& pc, const SubstitutionMatch& m,
                                                     const CostModel& cm,
                                                     const EquivalenceLibrary& lib = default_library()) {
    const Block& b = pc.blocks.at(m.block);
    const SubstitutionMatch* one[] = {&m};
    BlockCost c = block_cost(emit_block(pc, b, one, lib), cm);
    return {c.duration_ns - b.ref_duration_ns, c.log_fidelity - b.ref_log_fidelity};
}

/// Every occurrence of every rule, block by block; ids follow that order.
inline std::vector<SubstitutionMatch> enumerate_matches(const PreprocessedCircuit& pc, const CostModel& cm,
                                                        const RuleLibrary& rules,
                                                        const EquivalenceLibrary& lib = default_library()) {
    std::vector<SubstitutionMatch> out;
    for (const Block& b : pc.blocks) {
        if (!b.is_two_qubit()) continue;
        const int qa = b.qubits[0], qb = b.qubits[1];
        const std::vector<Gate> src = pc.source_gates(b);
        const int n = static_cast<int>(src.size());
        std::vector<SubstitutionMatch> local;
        for (const SubstitutionRule& r : rules.rules) {
            if (r.kind == RuleKind::Decomposition) {
                SubstitutionMatch m;
                m.block = b.id;
                m.rule_id = r.id;
                m.uids = b.gate_uids;
                m.window_start = 0;
                m.window_len = n;
                m.replacement = kak_decompose(block_unitary(src, qa, qb), r.entangler, qa, qb);
                local.push_back(std::move(m));
                continue;
            }
            const int len = static_cast<int>(r.pattern.size());
            for (int start = 0; start + len <= n; ++start) {
                for (auto [r0, r1] : {std::pair{qa, qb}, std::pair{qb, qa}}) {
                    bool ok = true;
                    for (int k = 0; k < len && ok; ++k) ok = detail::gate_matches(r.pattern[k], src[start + k], r0, r1);
                    if (!ok) continue;
                    SubstitutionMatch m;
                    m.block = b.id;
                    m.rule_id = r.id;
                    m.window_start = start;
                    m.window_len = len;
                    for (int k = 0; k < len; ++k) m.uids.push_back(src[start + k].uid);
                    m.replacement = r.replacement;
                    for (Gate& g : m.replacement)
                        for (int& q : g.qubits) q = (q == 0) ? r0 : r1;
                    bool dup = std::any_of(local.begin(), local.end(), [&](const SubstitutionMatch& o) {
                        return o.rule_id == m.rule_id && o.uids == m.uids;
                    });
                    if (!dup) local.push_back(std::move(m));
                }
            }
        }
        for (SubstitutionMatch& m : local) {
            std::span<const Gate> window(src.data() + m.window_start, m.window_len);
            if (!equal_up_to_global_phase(block_unitary(m.replacement, qa, qb), block_unitary(window, qa, qb),
                                          kEquivalenceTol))
                throw Error("substitution '" + m.rule_id + "' does not preserve the block unitary");
            m.id = static_cast<int>(out.size());
            std::tie(m.delta_duration_ns, m.delta_log_fidelity) = substitution_deltas(pc, m, cm, lib);
            out.push_back(std::move(m));
        }
    }
    return out;
}

/// Unordered pairs (s < s') of matches that substitute a common gate.
inline std::set<std::pair<int, int>> conflict_pairs(std::span<const SubstitutionMatch> matches) {
    std::set<std::pair<int, int>> out;
    for (size_t i = 0; i < matches.size(); ++i)
        for (size_t j = i + 1; j < matches.size(); ++j) {
            const auto& a = matches[i].uids;
            const auto& b = matches[j].uids;
            std::vector<int> common;
            std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
            if (!common.empty())
                out.emplace(std::min(matches[i].id, matches[j].id), std::max(matches[i].id, matches[j].id));
        }
    return out;
}

}  // namespace qadapt
