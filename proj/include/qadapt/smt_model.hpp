#pragma once

// The adaptation optimization model: Boolean substitution choices, block
// start times, durations and log-fidelities, an exact internal solver, and
// SMT-LIB2 emission for external optimizing solvers.

#include "qadapt/subrules.hpp"

#include <array>
#include <bit>
#include <limits>

namespace qadapt {

enum class Objective { Fidelity, IdleTime, Combined };

inline std::string to_string(Objective o) {
    switch (o) {
        case Objective::Fidelity: return "fidelity";
        case Objective::IdleTime: return "idle";
        case Objective::Combined: return "combined";
    }
    return "?";
}

inline Objective parse_objective(std::string_view s) {
    if (s == "fidelity" || s == "F") return Objective::Fidelity;
    if (s == "idle" || s == "R") return Objective::IdleTime;
    if (s == "combined" || s == "P") return Objective::Combined;
    throw Error("unknown objective '" + std::string(s) + "'");
}

struct InstanceTooLarge : Error {
    using Error::Error;
};

struct ModelBlock {
    int id = 0;
    double ref_duration_ns = 0;
    double ref_log_fidelity = 0;
    std::vector<int> qubits = {};  // optional; enables the per-qubit bound
};

struct ModelMatch {
    int id = 0;
    int block = 0;
    double delta_duration_ns = 0;
    double delta_log_fidelity = 0;
    int position = 0;  // window start inside the block; only orders the search
};

struct AdaptationModel {
    std::vector<ModelBlock> blocks;
    std::vector<ModelMatch> matches;
    std::set<std::pair<int, int>> conflicts;  // s < s'
    DependencyGraph graph;
    Objective objective = Objective::Fidelity;
    int num_qubits = 1;
    double coherence_ns = 2900;
};

/// Validates and assembles the model. Block and match ids must be 0..n-1.
inline AdaptationModel build_model(std::vector<ModelBlock> blocks, DependencyGraph graph,
                                   std::vector<ModelMatch> matches, std::set<std::pair<int, int>> conflicts,
                                   Objective objective, int num_qubits, double coherence_ns) {
    for (size_t i = 0; i < blocks.size(); ++i)
        if (blocks[i].id != static_cast<int>(i)) throw Error("block ids must be 0..B-1 in order");
    for (size_t i = 0; i < matches.size(); ++i) {
        if (matches[i].id != static_cast<int>(i)) throw Error("match ids must be 0..S-1 in order");
        if (matches[i].block < 0 || matches[i].block >= static_cast<int>(blocks.size()))
            throw Error("match " + std::to_string(i) + " references unknown block");
    }
    for (auto [s, t] : conflicts) {
        if (s < 0 || t < 0 || s >= static_cast<int>(matches.size()) || t >= static_cast<int>(matches.size()))
            throw Error("conflict references unknown match");
        if (s >= t) throw Error("conflict pairs must be ordered (s < s')");
        if (matches[s].block != matches[t].block)
            throw Error("conflicting matches must belong to the same block");
    }
    if (graph.num_blocks != static_cast<int>(blocks.size())) throw Error("graph size differs from block count");
    graph.topological_order();
    if (!(coherence_ns > 0)) throw Error("coherence time must be positive");
    if (num_qubits < 1) throw Error("qubit count must be positive");
    return AdaptationModel{std::move(blocks), std::move(matches), std::move(conflicts), std::move(graph),
                           objective, num_qubits, coherence_ns};
}

inline AdaptationModel build_model(const PreprocessedCircuit& pc, std::span<const SubstitutionMatch> matches,
                                   Objective objective, const CostModel& cm) {
    std::vector<ModelBlock> blocks;
    for (const Block& b : pc.blocks) blocks.push_back({b.id, b.ref_duration_ns, b.ref_log_fidelity, b.qubits});
    std::vector<ModelMatch> mm;
    for (const SubstitutionMatch& m : matches)
        mm.push_back({m.id, m.block, m.delta_duration_ns, m.delta_log_fidelity, m.window_start});
    return build_model(std::move(blocks), pc.graph, std::move(mm), conflict_pairs(matches), objective,
                       pc.circuit.num_qubits, cm.t2_ns);
}

struct Assignment {
    std::vector<int> chosen;  // ascending match ids
    std::vector<double> start_ns;
    std::vector<double> duration_ns;
    std::vector<double> log_fidelity;
    double makespan_ns = 0;
    double objective = 0;
};

struct Schedule {
    std::vector<double> start_ns;
    double makespan_ns = 0;
};

/// Earliest start per block; makespan is the latest block end (0 if none).
inline Schedule schedule_asap(const DependencyGraph& g, std::span<const double> durations) {
    if (static_cast<int>(durations.size()) != g.num_blocks) throw Error("duration count differs from block count");
    Schedule s;
    s.start_ns.assign(g.num_blocks, 0.0);
    const auto preds = g.predecessors();
    for (int b : g.topological_order()) {
        for (int p : preds[b]) s.start_ns[b] = std::max(s.start_ns[b], s.start_ns[p] + durations[p]);
        s.makespan_ns = std::max(s.makespan_ns, s.start_ns[b] + durations[b]);
    }
    return s;
}

inline double objective_from(Objective o, double sum_f, double sum_d, double makespan, int q, double t) {
    const double idle_term = -(q * makespan - sum_d) / t;
    switch (o) {
        case Objective::Fidelity: return sum_f;
        case Objective::IdleTime: return idle_term;
        case Objective::Combined: return sum_f + idle_term;
    }
    return 0;
}

/// Block values and ASAP schedule for a conflict-free choice.
inline Assignment evaluate(const AdaptationModel& m, std::vector<int> chosen) {
    std::sort(chosen.begin(), chosen.end());
    chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
    std::map<int, std::vector<int>> per_block;  // conflicts never cross blocks
    for (int s : chosen) {
        if (s < 0 || s >= static_cast<int>(m.matches.size())) throw Error("unknown match id " + std::to_string(s));
        per_block[m.matches[s].block].push_back(s);
    }
    for (const auto& [b, ids] : per_block)
        for (size_t i = 0; i < ids.size(); ++i)
            for (size_t j = i + 1; j < ids.size(); ++j)
                if (m.conflicts.count({ids[i], ids[j]}))
                    throw Error("conflicting substitutions " + std::to_string(ids[i]) + " and " +
                                std::to_string(ids[j]) + " chosen together");
    Assignment a;
    a.chosen = std::move(chosen);
    a.duration_ns.resize(m.blocks.size());
    a.log_fidelity.resize(m.blocks.size());
    for (const ModelBlock& b : m.blocks) {
        a.duration_ns[b.id] = b.ref_duration_ns;
        a.log_fidelity[b.id] = b.ref_log_fidelity;
    }
    for (int s : a.chosen) {
        const ModelMatch& mm = m.matches[s];
        a.duration_ns[mm.block] += mm.delta_duration_ns;
        a.log_fidelity[mm.block] += mm.delta_log_fidelity;
    }
    Schedule sch = schedule_asap(m.graph, a.duration_ns);
    a.start_ns = std::move(sch.start_ns);
    a.makespan_ns = sch.makespan_ns;
    double sum_f = 0, sum_d = 0;
    for (size_t b = 0; b < m.blocks.size(); ++b) sum_f += a.log_fidelity[b], sum_d += a.duration_ns[b];
    a.objective = objective_from(m.objective, sum_f, sum_d, a.makespan_ns, m.num_qubits, m.coherence_ns);
    return a;
}

inline double objective_value(const AdaptationModel& m, std::vector<int> chosen) {
    return evaluate(m, std::move(chosen)).objective;
}

/// Independent constraint check of an assignment against the model.
inline bool satisfies_model(const AdaptationModel& m, const Assignment& a, double tol = 1e-9) {
    for (size_t i = 0; i < a.chosen.size(); ++i)
        for (size_t j = i + 1; j < a.chosen.size(); ++j)
            if (m.conflicts.count({std::min(a.chosen[i], a.chosen[j]), std::max(a.chosen[i], a.chosen[j])}))
                return false;
    if (a.start_ns.size() != m.blocks.size() || a.duration_ns.size() != m.blocks.size()) return false;
    for (auto [p, b] : m.graph.edges)
        if (a.start_ns[b] < a.start_ns[p] + a.duration_ns[p] - tol) return false;
    for (size_t b = 0; b < m.blocks.size(); ++b) {
        double d = m.blocks[b].ref_duration_ns, f = m.blocks[b].ref_log_fidelity;
        for (int s : a.chosen)
            if (m.matches[s].block == static_cast<int>(b))
                d += m.matches[s].delta_duration_ns, f += m.matches[s].delta_log_fidelity;
        if (std::abs(d - a.duration_ns[b]) > tol || std::abs(f - a.log_fidelity[b]) > tol) return false;
        if (a.start_ns[b] < -tol || a.makespan_ns < a.start_ns[b] + a.duration_ns[b] - tol) return false;
    }
    return true;
}

// ---------------------------------------------------------------- solver

struct SolverOptions {
    long long node_budget = 20'000'000;       // solver states generated
    long long block_subset_budget = 1 << 16;  // live partial subsets per block
    long long frontier_budget = 50'000;       // undominated states per step
    int beam_width = 64;                      // incumbent pass; 0 skips it
    std::vector<std::vector<int>> warm_starts;  // feasible choices seeding the incumbent
    bool best_effort = false;  // on budget exhaustion return the incumbent instead of throwing
};

struct SolverStats {
    long long nodes = 0;
    long long max_frontier = 0;
    bool optimal = true;  // false when best_effort stopped the search early
};

namespace detail {

inline constexpr double kObjectiveTol = 1e-9;

struct BlockOption {
    std::vector<int> ids;  // ascending
    double dd = 0;         // duration delta
    double df = 0;         // log-fidelity delta
};

/// Tie-break order on id sets: fewer ids, then lexicographically smaller.
/// For sets over the same explored matches, adding the same unexplored ids
/// to both never flips the comparison.
inline bool prefer_ids(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

/// True when (obj_a, ids_a) beats (obj_b, ids_b) under the tie-breaking order.
inline bool better_solution(double obj_a, const std::vector<int>& ids_a, double obj_b, const std::vector<int>& ids_b) {
    if (obj_a > obj_b + kObjectiveTol) return true;
    if (obj_a < obj_b - kObjectiveTol) return false;
    return prefer_ids(ids_a, ids_b);
}

inline std::vector<int> merged(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

/// A block's additive share of the objective (gain) and its duration.
/// A folded block lies on every path of the schedule, so its duration adds
/// to the makespan one for one and its options rank by gain - kappa*d
/// alone. ShortestDuration ranks options by duration.
struct BlockValue {
    const AdaptationModel& m;
    std::vector<char> fold = {};
    bool shortest = false;

    double duration(int b, const BlockOption& o) const { return m.blocks[b].ref_duration_ns + o.dd; }
    double gain(int b, const BlockOption& o) const {
        const double f = m.blocks[b].ref_log_fidelity + o.df;
        const double d = duration(b, o) / m.coherence_ns;
        switch (m.objective) {
            case Objective::Fidelity: return f;
            case Objective::IdleTime: return d;
            case Objective::Combined: return f + d;
        }
        return 0;
    }
    bool uses_makespan() const { return m.objective != Objective::Fidelity; }
    bool folded(int b) const { return !fold.empty() && fold[b]; }
    double rank(int b, const BlockOption& o) const {
        if (shortest) return -duration(b, o);
        return gain(b, o) - (uses_makespan() && folded(b) ? m.num_qubits / m.coherence_ns * duration(b, o) : 0.0);
    }
    bool pareto_in_duration(int b) const { return !shortest && uses_makespan() && !folded(b); }
};

/// Blocks comparable with every other block (ancestor or descendant).
inline std::vector<char> universal_blocks(const AdaptationModel& m, const std::vector<int>& order) {
    const int nb = m.graph.num_blocks;
    const size_t words = (static_cast<size_t>(nb) + 63) / 64;
    std::vector<std::vector<uint64_t>> anc(nb, std::vector<uint64_t>(words, 0)), desc = anc;
    const auto preds = m.graph.predecessors();
    for (int b : order)
        for (int p : preds[b]) {
            anc[b][p / 64] |= uint64_t{1} << (p % 64);
            for (size_t w = 0; w < words; ++w) anc[b][w] |= anc[p][w];
        }
    for (int b = 0; b < nb; ++b)
        for (int a = 0; a < nb; ++a)
            if (anc[b][a / 64] >> (a % 64) & 1) desc[a][b / 64] |= uint64_t{1} << (b % 64);
    std::vector<char> out(nb, 0);
    for (int b = 0; b < nb; ++b) {
        int related = 0;
        for (size_t w = 0; w < words; ++w) related += std::popcount(anc[b][w] | desc[b][w]);
        out[b] = related == nb - 1;
    }
    return out;
}

/// Non-dominated conflict-free subsets of each block's matches, in
/// (duration, gain). Matches are added by window position; partial subsets
/// are compared only when they agree on the chosen matches that still
/// conflict with an unexplored one. Past the subset budget, best-effort
/// runs keep the states that are best on a critical path and set
/// `*truncated`; otherwise InstanceTooLarge is thrown.
inline std::vector<std::vector<BlockOption>> block_options(const AdaptationModel& m, const SolverOptions& opt,
                                                           const BlockValue& val, bool* truncated = nullptr) {
    std::vector<std::vector<int>> by_block(m.blocks.size());
    for (const ModelMatch& mm : m.matches) by_block[mm.block].push_back(mm.id);
    std::vector<std::vector<BlockOption>> out(m.blocks.size());
    for (size_t blk = 0; blk < m.blocks.size(); ++blk) {
        const int b = static_cast<int>(blk);
        std::vector<int> ids = by_block[b];
        std::stable_sort(ids.begin(), ids.end(), [&](int x, int y) {
            return m.matches[x].position < m.matches[y].position;
        });
        const size_t n = ids.size();
        auto conflict = [&](int x, int y) { return m.conflicts.count({std::min(x, y), std::max(x, y)}) > 0; };
        std::vector<int> reach(n, -1);  // last position a match conflicts with
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j)
                if (conflict(ids[i], ids[j])) reach[i] = int(j);

        struct Partial {
            BlockOption o;
            std::vector<int> live;  // chosen positions that conflict with an unexplored match
        };
        std::vector<Partial> states{Partial{}};
        for (size_t k = 0; k < n; ++k) {
            const int s = ids[k];
            auto expire = [&](std::vector<int>& live) {
                std::erase_if(live, [&](int t) { return reach[t] <= int(k); });
            };
            std::vector<Partial> next;
            for (const Partial& p : states) {
                const bool ok = std::none_of(p.live.begin(), p.live.end(), [&](int t) { return conflict(ids[t], s); });
                Partial skip = p;
                expire(skip.live);
                next.push_back(std::move(skip));
                if (!ok) continue;
                Partial take = p;
                take.o.ids.insert(std::upper_bound(take.o.ids.begin(), take.o.ids.end(), s), s);
                take.o.dd += m.matches[s].delta_duration_ns;
                take.o.df += m.matches[s].delta_log_fidelity;
                take.live.push_back(int(k));
                expire(take.live);
                next.push_back(std::move(take));
            }
            // Pareto sweep per live set: by duration (ignored for fidelity),
            // then gain, then preferred ids; a state survives only if it
            // gains more than everything before it in its group.
            std::vector<double> gain(next.size());
            for (size_t i = 0; i < next.size(); ++i) gain[i] = val.rank(b, next[i].o);
            std::vector<size_t> idx(next.size());
            std::iota(idx.begin(), idx.end(), size_t{0});
            const bool by_dd = val.pareto_in_duration(b);
            std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) {
                if (next[x].live != next[y].live) return next[x].live < next[y].live;
                if (by_dd && next[x].o.dd != next[y].o.dd) return next[x].o.dd < next[y].o.dd;
                if (gain[x] != gain[y]) return gain[x] > gain[y];
                return prefer_ids(next[x].o.ids, next[y].o.ids);
            });
            std::vector<char> fresh(idx.size(), 1);
            for (size_t r = 1; r < idx.size(); ++r) fresh[r] = next[idx[r - 1]].live != next[idx[r]].live;
            states.clear();
            double best = 0;
            for (size_t r = 0; r < idx.size(); ++r) {
                const size_t i = idx[r];
                if (!fresh[r] && gain[i] <= best) continue;
                best = gain[i];
                states.push_back(std::move(next[i]));
            }
            if (static_cast<long long>(states.size()) > opt.block_subset_budget) {
                if (!opt.best_effort || !truncated)
                    throw InstanceTooLarge("block " + std::to_string(b) + " has too many substitution subsets");
                *truncated = true;
                const double kappa = m.num_qubits / m.coherence_ns;
                auto key = [&](const Partial& p) { return val.rank(b, p.o) - (by_dd ? kappa * p.o.dd : 0.0); };
                std::nth_element(states.begin(), states.begin() + opt.block_subset_budget, states.end(),
                                 [&](const Partial& x, const Partial& y) { return key(x) > key(y); });
                states.resize(static_cast<size_t>(opt.block_subset_budget));
            }
        }
        for (Partial& p : states) out[b].push_back(std::move(p.o));
        std::sort(out[b].begin(), out[b].end(), [&](const BlockOption& x, const BlockOption& y) {
            return val.rank(b, x) > val.rank(b, y);
        });
    }
    return out;
}

}  // namespace detail

/// Exact maximization of the model objective. Conflicts only couple matches
/// of one block, so each block contributes a set of non-dominated options.
/// The fidelity objective separates by block. The idle-time objectives run
/// a dynamic program over blocks in topological order; a state holds the
/// finish times of blocks that still have unvisited successors. States are
/// pruned by dominance and by two upper bounds (a chain bound and a
/// qubit-line bound) against an incumbent from a beam-limited first pass.
inline Assignment solve_exact(const AdaptationModel& m, const SolverOptions& opt = {}, SolverStats* stats = nullptr) {
    using detail::BlockOption;
    using detail::kObjectiveTol;
    const int nb = static_cast<int>(m.blocks.size());
    const int nq = m.num_qubits;
    std::vector<int> order(nb);
    std::iota(order.begin(), order.end(), 0);
    if (std::any_of(m.graph.edges.begin(), m.graph.edges.end(), [](auto e) { return e.first >= e.second; }))
        order = m.graph.topological_order();
    else
        m.graph.topological_order();  // still validates
    // fold blocks that every path crosses, provided no choice makes a
    // duration negative (a shorter block could then end a path early)
    detail::BlockValue val{m};
    if (val.uses_makespan()) {
        auto fold = detail::universal_blocks(m, order);
        if (std::count(fold.begin(), fold.end(), 1) > 0) {
            const detail::BlockValue shortest{m, {}, true};
            const auto opts = detail::block_options(m, opt, shortest);
            bool nonneg = true;
            for (int b = 0; b < nb; ++b)
                for (const BlockOption& o : opts[b]) nonneg = nonneg && shortest.duration(b, o) >= 0;
            if (nonneg) val.fold = std::move(fold);
        }
    }
    bool truncated = false;
    const auto options = detail::block_options(m, opt, val, &truncated);

    std::vector<int> pick(nb, 0);
    for (int b = 0; b < nb; ++b)
        for (size_t j = 1; j < options[b].size(); ++j)
            if (detail::better_solution(val.gain(b, options[b][j]), options[b][j].ids,
                                        val.gain(b, options[b][pick[b]]), options[b][pick[b]].ids))
                pick[b] = static_cast<int>(j);
    auto assemble = [&](const std::vector<int>& p) {
        std::vector<int> ids;
        for (int b = 0; b < nb; ++b) ids = detail::merged(ids, options[b][p[b]].ids);
        return evaluate(m, std::move(ids));
    };
    auto best_of_warm_starts = [&](Assignment best) {
        for (std::vector<int> w : opt.warm_starts) {
            std::sort(w.begin(), w.end());
            Assignment a = evaluate(m, std::move(w));
            if (detail::better_solution(a.objective, a.chosen, best.objective, best.chosen)) best = std::move(a);
        }
        return best;
    };
    if (!val.uses_makespan()) {
        if (stats) stats->nodes = nb, stats->optimal = !truncated;
        return truncated ? best_of_warm_starts(assemble(pick)) : assemble(pick);
    }

    // Incumbent: coordinate ascent from the per-block best gain.
    const auto order_preds = m.graph.predecessors();
    auto quick_objective = [&](const std::vector<int>& p) {
        std::vector<double> end(nb, 0.0);
        double total = 0, makespan = 0;
        for (int b : order) {
            double start = 0;
            for (int q : order_preds[b]) start = std::max(start, end[q]);
            end[b] = start + val.duration(b, options[b][p[b]]);
            makespan = std::max(makespan, end[b]);
            total += val.gain(b, options[b][p[b]]);
        }
        return total - m.num_qubits / m.coherence_ns * makespan;
    };
    double pick_obj = quick_objective(pick);
    for (bool improved = true; improved;) {
        improved = false;
        for (int b = 0; b < nb; ++b)
            for (size_t k = 0; k < options[b].size(); ++k) {
                if (static_cast<int>(k) == pick[b]) continue;
                const int keep = pick[b];
                pick[b] = static_cast<int>(k);
                const double v = quick_objective(pick);
                if (v > pick_obj + kObjectiveTol) {
                    pick_obj = v;
                    improved = true;
                } else {
                    pick[b] = keep;
                }
            }
    }
    Assignment best = best_of_warm_starts(assemble(pick));

    const double inv_t = 1.0 / m.coherence_ns;
    const double kappa = nq * inv_t;
    std::vector<int> pos(nb);
    for (int k = 0; k < nb; ++k) pos[order[k]] = k;
    const auto orig_preds = m.graph.predecessors();
    std::set<std::pair<int, int>> edge_set(m.graph.edges.begin(), m.graph.edges.end());

    // With non-negative durations an edge implied by a longer path never
    // sets a start time; dropping those keeps fewer blocks open.
    std::vector<std::vector<int>> preds = orig_preds;
    bool nonneg = true;
    for (int b = 0; b < nb; ++b)
        for (const BlockOption& o : options[b]) nonneg = nonneg && val.duration(b, o) >= 0;
    if (nonneg) {
        std::vector<std::vector<char>> reach(nb, std::vector<char>(nb, 0));  // reach[a][b]: path a -> b
        for (int k = 0; k < nb; ++k) {
            const int b = order[k];
            for (int p : preds[b]) {
                reach[p][b] = 1;
                for (int a = 0; a < nb; ++a)
                    if (reach[a][p]) reach[a][b] = 1;
            }
        }
        for (int b = 0; b < nb; ++b) {
            std::vector<int> kept;
            for (int p : preds[b])
                if (std::none_of(preds[b].begin(), preds[b].end(), [&](int q) { return q != p && reach[p][q]; }))
                    kept.push_back(p);
            preds[b] = std::move(kept);
        }
    }
    std::vector<std::vector<int>> succ(nb);
    for (int b = 0; b < nb; ++b)
        for (int p : preds[b]) succ[p].push_back(b);
    std::vector<int> last_use(nb, -1);  // last visit position that reads this block's finish
    for (int b = 0; b < nb; ++b)
        for (int s : succ[b]) last_use[b] = std::max(last_use[b], pos[s]);

    // Chain bound: every unvisited block may take its best gain, but blocks
    // on one chain also pay for their length (w = gmax - max(g - kappa d)).
    std::vector<double> tail(nb, 0.0), gmax(nb);
    for (int k = nb - 1; k >= 0; --k) {
        const int b = order[k];
        double hmax = -std::numeric_limits<double>::infinity();
        gmax[b] = -std::numeric_limits<double>::infinity();
        for (const BlockOption& o : options[b]) {
            gmax[b] = std::max(gmax[b], val.gain(b, o));
            hmax = std::max(hmax, val.gain(b, o) - kappa * val.duration(b, o));
        }
        double after = 0;
        for (int s : succ[b]) after = std::max(after, tail[s]);
        tail[b] = gmax[b] - hmax + after;
    }
    std::vector<double> gain_rest(nb + 1, 0.0), tail_rest(nb + 1, 0.0);
    for (int k = nb - 1; k >= 0; --k) {
        gain_rest[k] = gain_rest[k + 1] + gmax[order[k]];
        tail_rest[k] = std::max(tail_rest[k + 1], tail[order[k]]);
    }
    // Line bound: the makespan is at least the mean over qubits of each
    // qubit's last finish plus its remaining busy time. Needs qubit labels
    // with consecutive blocks of a qubit linked by an edge.
    bool line_ok = nq >= 1 && nq <= 32;
    {
        std::vector<int> last(nq, -1);
        for (int k = 0; k < nb && line_ok; ++k) {
            const int b = order[k];
            if (m.blocks[b].qubits.empty()) line_ok = false;
            for (int q : m.blocks[b].qubits) {
                if (q < 0 || q >= nq) {
                    line_ok = false;
                    break;
                }
                if (last[q] >= 0 && !edge_set.count({last[q], b})) line_ok = false;
                last[q] = b;
            }
        }
    }

    // Line bounds: each qubit's blocks form a path, so the makespan is at
    // least the mean, over any set L of qubits, of a qubit's resume time
    // plus its remaining busy time. Unvisited blocks then pay kappa times
    // their share |q_b & L| / |L| of their duration.
    std::vector<unsigned> line_sets;
    if (line_ok) {
        if (nq <= 6)
            for (unsigned L = 1; L < (1u << nq); ++L) line_sets.push_back(L);
        else
            line_sets.push_back((1u << std::min(nq, 31)) - 1);
    }
    std::vector<std::vector<double>> line_rest(line_sets.size(), std::vector<double>(nb + 1, 0.0));
    for (size_t li = 0; li < line_sets.size(); ++li) {
        const unsigned L = line_sets[li];
        const double size = std::popcount(L);
        for (int k = nb - 1; k >= 0; --k) {
            const int b = order[k];
            double share = 0;
            for (int q : m.blocks[b].qubits)
                if (L >> q & 1) share += 1 / size;
            double r = -std::numeric_limits<double>::infinity();
            for (const BlockOption& o : options[b]) r = std::max(r, val.gain(b, o) - kappa * share * val.duration(b, o));
            line_rest[li][k] = line_rest[li][k + 1] + r;
        }
    }

    // next_on[k][q]: first block at visit position >= k touching q (-1: none)
    std::vector<std::vector<int>> next_on(nb + 1, std::vector<int>(line_ok ? nq : 0, -1));
    if (line_ok)
        for (int k = nb - 1; k >= 0; --k) {
            next_on[k] = next_on[k + 1];
            for (int q : m.blocks[order[k]].qubits) next_on[k][q] = order[k];
        }

    struct State {
        std::vector<double> finish;  // aligned with the open list
        std::vector<double> line;    // last finish per qubit (line bound only)
        double closed = 0;           // latest end among blocks no longer open
        double gain = 0;
        double bound = 0;
        std::vector<int> ids;
    };
    long long nodes = 0, max_frontier = 1;

    auto run = [&](int beam) {
        std::vector<int> open;
        std::vector<State> states(1);
        if (line_ok) states[0].line.assign(nq, 0.0);
        for (int k = 0; k < nb; ++k) {
            const int b = order[k];
            std::vector<int> next_open;
            for (int o : open)
                if (last_use[o] > k) next_open.push_back(o);
            if (last_use[b] > k) next_open.push_back(b);
            std::vector<int> where(nb, -1);
            for (size_t i = 0; i < open.size(); ++i) where[open[i]] = int(i);
            std::vector<int> where_next(nb, -1);
            for (size_t i = 0; i < next_open.size(); ++i) where_next[next_open[i]] = int(i);
            std::vector<double> after(next_open.size(), 0.0);
            for (size_t i = 0; i < next_open.size(); ++i)
                for (int s : succ[next_open[i]])
                    if (pos[s] > k) after[i] = std::max(after[i], tail[s]);

            std::vector<State> next;
            for (const State& st : states) {
                double start = 0;
                for (int p : preds[b]) start = std::max(start, st.finish[where[p]]);
                double closing = st.closed;
                for (int q : open)
                    if (last_use[q] <= k) closing = std::max(closing, st.finish[where[q]]);
                for (const BlockOption& o : options[b]) {
                    if (++nodes > opt.node_budget) throw InstanceTooLarge("solver state budget exhausted");
                    State ns;
                    const double end = start + val.duration(b, o);
                    ns.closed = last_use[b] <= k ? std::max(closing, end) : closing;
                    ns.gain = st.gain + val.gain(b, o);
                    double pay = std::max(kappa * ns.closed, tail_rest[k + 1]);
                    ns.finish.reserve(next_open.size());
                    for (size_t i = 0; i < next_open.size(); ++i) {
                        const int q = next_open[i];
                        ns.finish.push_back(q == b ? end : st.finish[where[q]]);
                        pay = std::max(pay, kappa * ns.finish.back() + after[i]);
                    }
                    ns.bound = ns.gain + gain_rest[k + 1] - pay;
                    if (line_ok) {
                        ns.line = st.line;
                        for (int q : m.blocks[b].qubits) ns.line[q] = end;
                        // a qubit cannot resume before its next block's visited predecessors end
                        std::array<double, 32> ready{};
                        for (int q = 0; q < nq; ++q) {
                            ready[q] = ns.line[q];
                            if (const int nx = next_on[k + 1][q]; nx >= 0)
                                for (int p : preds[nx])
                                    if (pos[p] <= k) ready[q] = std::max(ready[q], ns.finish[where_next[p]]);
                        }
                        for (size_t li = 0; li < line_sets.size(); ++li) {
                            double sum = 0;
                            for (int q = 0; q < nq; ++q)
                                if (line_sets[li] >> q & 1) sum += ready[q];
                            ns.bound = std::min(ns.bound, ns.gain + line_rest[li][k + 1] -
                                                              kappa * sum / std::popcount(line_sets[li]));
                        }
                    }
                    if (ns.bound < best.objective - kObjectiveTol) continue;
                    ns.ids = detail::merged(st.ids, o.ids);
                    next.push_back(std::move(ns));
                }
            }
            // Dominance. Later finishes delay the makespan by at most the
            // largest lateness, so a state whose extra gain covers kappa
            // times that lateness is at least as good under every completion.
            // In keys (g, g - kappa*closed, g - kappa*finish_i) that is plain
            // componentwise dominance; margin = smallest key difference.
            if (beam > 0 && next.size() > 8 * size_t(beam)) {
                std::nth_element(next.begin(), next.begin() + 8 * beam, next.end(),
                                 [](const State& x, const State& y) { return x.bound > y.bound; });
                next.resize(8 * beam);
            }
            std::sort(next.begin(), next.end(), [](const State& x, const State& y) { return x.gain > y.gain; });
            const size_t dim = next_open.size() + 2;
            std::vector<double> keys, ck(dim);
            std::vector<size_t> probe;  // order in which kept states are tried
            std::vector<State> kept;
            for (State& c : next) {
                ck[0] = c.gain;
                ck[1] = c.gain - kappa * c.closed;
                for (size_t i = 0; i < c.finish.size(); ++i) ck[i + 2] = c.gain - kappa * c.finish[i];
                bool dominated = false;
                for (size_t p = 0; p < probe.size(); ++p) {
                    const size_t a = probe[p];
                    const double* ak = keys.data() + a * dim;
                    double margin = ak[0] - ck[0];
                    for (size_t i = 1; i < dim && margin >= 0; ++i) margin = std::min(margin, ak[i] - ck[i]);
                    if (margin < 0) continue;
                    if (margin > kObjectiveTol || detail::prefer_ids(kept[a].ids, c.ids)) {
                        dominated = true;
                        std::swap(probe[p], probe[p / 2]);  // strong dominators drift to the front
                        break;
                    }
                }
                if (dominated) continue;
                keys.insert(keys.end(), ck.begin(), ck.end());
                probe.push_back(kept.size());
                kept.push_back(std::move(c));
                if (static_cast<long long>(kept.size()) > opt.frontier_budget)
                    throw InstanceTooLarge("solver frontier budget exhausted");
            }
            if (beam > 0 && static_cast<int>(kept.size()) > beam) {
                std::stable_sort(kept.begin(), kept.end(),
                                 [](const State& x, const State& y) { return x.bound > y.bound; });
                kept.resize(beam);
            }
            states = std::move(kept);
            max_frontier = std::max<long long>(max_frontier, static_cast<long long>(states.size()));
            open = std::move(next_open);
        }
        for (const State& st : states) {
            const double obj = st.gain - kappa * std::max(0.0, st.closed);
            if (detail::better_solution(obj, st.ids, best.objective, best.chosen)) best = evaluate(m, st.ids);
        }
    };
    bool optimal = !truncated;
    try {
        if (opt.beam_width > 0) run(opt.beam_width);
        run(0);
    } catch (const InstanceTooLarge&) {
        if (!opt.best_effort) throw;
        optimal = false;
    }
    if (stats) stats->nodes = nodes, stats->max_frontier = max_frontier, stats->optimal = optimal;
    return best;
}

// ---------------------------------------------------------------- SMT-LIB2

namespace detail {

inline std::string smt_real(double v) {
    char buf[512];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, std::abs(v), std::chars_format::fixed);
    std::string s(buf, end);
    if (s.find('.') == std::string::npos) s += ".0";
    return v < 0 ? "(- " + s + ")" : s;
}

inline std::string smt_sum(const std::vector<std::string>& terms) {
    if (terms.empty()) return "0.0";
    if (terms.size() == 1) return terms[0];
    std::string s = "(+";
    for (const auto& t : terms) s += " " + t;
    return s + ")";
}

}  // namespace detail

/// QF_LRA script with a `maximize` objective; symbols c<s>, e<b>, d<b>, f<b>, Dtot.
inline std::string emit_smtlib(const AdaptationModel& m) {
    using detail::smt_real;
    std::ostringstream o;
    o << "; adaptation model: " << m.blocks.size() << " blocks, " << m.matches.size()
      << " substitutions, objective " << to_string(m.objective) << "\n";
    o << "(set-option :produce-models true)\n(set-logic QF_LRA)\n";
    for (const ModelMatch& s : m.matches) o << "(declare-const c" << s.id << " Bool)\n";
    for (const ModelBlock& b : m.blocks)
        o << "(declare-const e" << b.id << " Real)\n(declare-const d" << b.id << " Real)\n(declare-const f" << b.id
          << " Real)\n";
    o << "(declare-const Dtot Real)\n";
    for (auto [s, t] : m.conflicts) o << "(assert (or (not c" << s << ") (not c" << t << ")))\n";
    for (auto [p, b] : m.graph.edges) o << "(assert (>= e" << b << " (+ e" << p << " d" << p << ")))\n";
    for (const ModelBlock& b : m.blocks) {
        std::vector<std::string> dur = {smt_real(b.ref_duration_ns)}, fid = {smt_real(b.ref_log_fidelity)};
        for (const ModelMatch& s : m.matches) {
            if (s.block != b.id) continue;
            dur.push_back("(ite c" + std::to_string(s.id) + " " + smt_real(s.delta_duration_ns) + " 0.0)");
            fid.push_back("(ite c" + std::to_string(s.id) + " " + smt_real(s.delta_log_fidelity) + " 0.0)");
        }
        o << "(assert (= d" << b.id << " " << detail::smt_sum(dur) << "))\n";
        o << "(assert (= f" << b.id << " " << detail::smt_sum(fid) << "))\n";
        o << "(assert (>= e" << b.id << " 0.0))\n";
        o << "(assert (>= Dtot (+ e" << b.id << " d" << b.id << ")))\n";
    }
    o << "(assert (>= Dtot 0.0))\n";
    std::vector<std::string> fs, ds;
    for (const ModelBlock& b : m.blocks) fs.push_back("f" + std::to_string(b.id)), ds.push_back("d" + std::to_string(b.id));
    const std::string idle = "(- (/ (- (* " + smt_real(m.num_qubits) + " Dtot) " + detail::smt_sum(ds) + ") " +
                             smt_real(m.coherence_ns) + "))";
    std::string obj;
    switch (m.objective) {
        case Objective::Fidelity: obj = detail::smt_sum(fs); break;
        case Objective::IdleTime: obj = idle; break;
        case Objective::Combined: obj = "(+ " + detail::smt_sum(fs) + " " + idle + ")"; break;
    }
    o << "(maximize " << obj << ")\n(check-sat)\n(get-model)\n(get-objectives)\n";
    return o.str();
}

}  // namespace qadapt
