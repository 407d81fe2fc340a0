#pragma once

// Block partitioning, block dependency graph, reference basis translation and
// block costing.

#include "qadapt/circuit.hpp"
#include "qadapt/linalg.hpp"

#include <functional>

namespace qadapt {

/// Maximal run of gates on one qubit pair (or a lone qubit).
struct Block {
    int id = 0;
    std::vector<int> qubits;  // one qubit, or an ascending pair
    std::vector<int> gate_uids;
    std::vector<Gate> ref_gates;
    double ref_duration_ns = 0;
    double ref_log_fidelity = 0;

    bool is_two_qubit() const { return qubits.size() == 2; }
};

struct DependencyGraph {
    int num_blocks = 0;
    std::vector<std::pair<int, int>> edges;  // (before, after)

    std::vector<std::vector<int>> predecessors() const {
        std::vector<std::vector<int>> p(num_blocks);
        for (auto [from, to] : edges) p[to].push_back(from);
        return p;
    }

    /// Kahn order; throws on a cycle or a dangling vertex.
    std::vector<int> topological_order() const {
        std::vector<int> indeg(num_blocks, 0);
        std::vector<std::vector<int>> succ(num_blocks);
        for (auto [from, to] : edges) {
            if (from < 0 || to < 0 || from >= num_blocks || to >= num_blocks)
                throw Error("dependency edge references unknown block");
            succ[from].push_back(to);
            ++indeg[to];
        }
        std::vector<int> order, stack;
        for (int b = num_blocks - 1; b >= 0; --b)
            if (indeg[b] == 0) stack.push_back(b);
        while (!stack.empty()) {
            int b = stack.back();
            stack.pop_back();
            order.push_back(b);
            for (int s : succ[b])
                if (--indeg[s] == 0) stack.push_back(s);
        }
        if (static_cast<int>(order.size()) != num_blocks) throw Error("dependency graph has a cycle");
        return order;
    }
};

struct Partition {
    std::vector<Block> blocks;
    DependencyGraph graph;
};

/// Partitions gates into blocks. A block on (a, b) closes as soon as a or b
/// interacts with a third qubit; single-qubit gates join the open block on
/// their qubit, or wait for the next block there.
inline Partition partition_blocks(const Circuit& c) {
    Partition out;
    const int nq = c.num_qubits;
    std::vector<int> open(nq, -1), last(nq, -1);
    std::vector<std::vector<int>> buffered(nq);
    std::set<std::pair<int, int>> edge_set;

    auto new_block = [&](std::vector<int> qubits) {
        Block b;
        b.id = static_cast<int>(out.blocks.size());
        for (int q : qubits) {
            if (last[q] >= 0) edge_set.emplace(last[q], b.id);
            last[q] = b.id;
        }
        b.qubits = std::move(qubits);
        out.blocks.push_back(std::move(b));
        return out.blocks.back().id;
    };
    auto close = [&](int blk) {
        if (blk < 0) return;
        for (int q : out.blocks[blk].qubits)
            if (open[q] == blk) open[q] = -1;
    };

    for (const Gate& g : c.gates) {
        if (g.qubits.size() == 1) {
            int q = g.qubits[0];
            if (open[q] >= 0)
                out.blocks[open[q]].gate_uids.push_back(g.uid);
            else
                buffered[q].push_back(g.uid);
            continue;
        }
        const int a = std::min(g.qubits[0], g.qubits[1]);
        const int b = std::max(g.qubits[0], g.qubits[1]);
        if (open[a] >= 0 && open[a] == open[b]) {
            out.blocks[open[a]].gate_uids.push_back(g.uid);
            continue;
        }
        close(open[a]);
        close(open[b]);
        int id = new_block({a, b});
        Block& blk = out.blocks[id];
        std::vector<int> pre;
        pre.insert(pre.end(), buffered[a].begin(), buffered[a].end());
        pre.insert(pre.end(), buffered[b].begin(), buffered[b].end());
        std::sort(pre.begin(), pre.end());
        buffered[a].clear();
        buffered[b].clear();
        blk.gate_uids = std::move(pre);
        blk.gate_uids.push_back(g.uid);
        open[a] = open[b] = id;
    }
    for (int q = 0; q < nq; ++q) {
        if (buffered[q].empty()) continue;
        int id = new_block({q});
        out.blocks[id].gate_uids = std::move(buffered[q]);
    }
    out.graph.num_blocks = static_cast<int>(out.blocks.size());
    out.graph.edges.assign(edge_set.begin(), edge_set.end());
    return out;
}

// ---------------------------------------------------------------- translation

/// Per-gate rewrite rules from the source basis into the target basis.
struct EquivalenceLibrary {
    std::map<std::string, std::function<std::vector<Gate>(const Gate&)>, std::less<>> rules;

    std::vector<Gate> translate(const Gate& g) const {
        auto it = rules.find(g.name);
        if (it == rules.end()) throw Error("no translation for gate '" + g.name + "'");
        return it->second(g);
    }

    /// u and cz pass through; cx becomes H.cz.H on its target; swap becomes
    /// three alternating translated cx.
    static EquivalenceLibrary cz_translation() {
        EquivalenceLibrary lib;
        auto pass = [](const Gate& g) { return std::vector<Gate>{g}; };
        auto cx = [](const Gate& g) {
            const int c = g.qubits[0], t = g.qubits[1];
            return std::vector<Gate>{h_gate(t), make_gate("cz", {c, t}), h_gate(t)};
        };
        lib.rules["u"] = pass;
        for (const char* native : {"cz", "cz_db", "crot", "swap_d", "swap_c"}) lib.rules[native] = pass;
        lib.rules["cx"] = cx;
        lib.rules["swap"] = [cx](const Gate& g) {
            const int a = g.qubits[0], b = g.qubits[1];
            std::vector<Gate> out;
            for (const Gate& step : {make_gate("cx", {a, b}), make_gate("cx", {b, a}), make_gate("cx", {a, b})})
                for (Gate& t : cx(step)) out.push_back(std::move(t));
            return out;
        };
        return lib;
    }
};

inline const EquivalenceLibrary& default_library() {
    static const EquivalenceLibrary lib = EquivalenceLibrary::cz_translation();
    return lib;
}

/// Translates each gate, then merges single-qubit runs.
inline std::vector<Gate> basis_translate_block(std::span<const Gate> gates,
                                               const EquivalenceLibrary& lib = default_library()) {
    std::vector<Gate> raw;
    for (const Gate& g : gates)
        for (Gate& t : lib.translate(g)) raw.push_back(std::move(t));
    return merge_single_qubit_runs(raw);
}

struct BlockCost {
    double duration_ns = 0;
    double log_fidelity = 0;
};

/// Critical path over per-qubit timelines and summed log-fidelity.
inline BlockCost block_cost(std::span<const Gate> gates, const CostModel& cm) {
    std::map<int, double> timeline;
    BlockCost out;
    for (const Gate& g : gates) {
        const GateCost& gc = cm.at(g.name);
        double start = 0;
        for (int q : g.qubits) start = std::max(start, timeline[q]);
        for (int q : g.qubits) timeline[q] = start + gc.duration_ns;
        out.duration_ns = std::max(out.duration_ns, start + gc.duration_ns);
        out.log_fidelity += std::log(gc.fidelity);
    }
    return out;
}

/// A partitioned circuit with every block translated and costed.
struct PreprocessedCircuit {
    Circuit circuit;
    std::vector<Block> blocks;
    DependencyGraph graph;
    std::map<int, size_t> uid_index;

    const Gate& gate(int uid) const { return circuit.gates.at(uid_index.at(uid)); }

    std::vector<Gate> source_gates(const Block& b) const {
        std::vector<Gate> out;
        for (int uid : b.gate_uids) out.push_back(gate(uid));
        return out;
    }
};

inline PreprocessedCircuit preprocess(const Circuit& c, const CostModel& cm,
                                      const EquivalenceLibrary& lib = default_library()) {
    PreprocessedCircuit pc;
    pc.circuit = c;
    for (size_t i = 0; i < c.gates.size(); ++i) pc.uid_index[c.gates[i].uid] = i;
    Partition part = partition_blocks(c);
    pc.graph = std::move(part.graph);
    pc.blocks = std::move(part.blocks);
    for (Block& b : pc.blocks) {
        b.ref_gates = basis_translate_block(pc.source_gates(b), lib);
        BlockCost cost = block_cost(b.ref_gates, cm);
        b.ref_duration_ns = cost.duration_ns;
        b.ref_log_fidelity = cost.log_fidelity;
    }
    return pc;
}

}  // namespace qadapt
