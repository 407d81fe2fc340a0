#include "qadapt/smt_model.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace qadapt;

namespace {

constexpr Objective kAll[] = {Objective::Fidelity, Objective::IdleTime, Objective::Combined};

// Longest path by repeated relaxation, no topological order needed.
double longest_path(const DependencyGraph& g, const std::vector<double>& d) {
    std::vector<double> start(g.num_blocks, 0.0);
    for (int it = 0; it < g.num_blocks; ++it)
        for (auto [p, b] : g.edges) start[b] = std::max(start[b], start[p] + d[p]);
    double m = 0;
    for (int b = 0; b < g.num_blocks; ++b) m = std::max(m, start[b] + d[b]);
    return m;
}

// Exhaustive 2^|S| oracle written straight from the objective definitions.
double brute_force(const AdaptationModel& m) {
    const int n = static_cast<int>(m.matches.size());
    double best = -std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        bool ok = true;
        for (auto [s, t] : m.conflicts)
            if ((mask >> s & 1) && (mask >> t & 1)) ok = false;
        if (!ok) continue;
        std::vector<double> d(m.blocks.size()), f(m.blocks.size());
        for (const auto& b : m.blocks) d[b.id] = b.ref_duration_ns, f[b.id] = b.ref_log_fidelity;
        for (int s = 0; s < n; ++s)
            if (mask >> s & 1) d[m.matches[s].block] += m.matches[s].delta_duration_ns,
                                   f[m.matches[s].block] += m.matches[s].delta_log_fidelity;
        double sf = 0, sd = 0;
        for (size_t b = 0; b < d.size(); ++b) sf += f[b], sd += d[b];
        const double idle = -(m.num_qubits * longest_path(m.graph, d) - sd) / m.coherence_ns;
        const double v = m.objective == Objective::Fidelity ? sf : m.objective == Objective::IdleTime ? idle : sf + idle;
        best = std::max(best, v);
    }
    return best;
}

AdaptationModel random_model(std::mt19937_64& rng, Objective o, int max_matches = 12) {
    std::uniform_int_distribution<int> nb_d(1, 6), ns_d(0, max_matches);
    std::uniform_real_distribution<double> ref(300, 1000), dd(-250, 150), df(-0.02, 0.015), u01(0, 1);
    const int nb = nb_d(rng), ns = ns_d(rng);
    std::vector<ModelBlock> blocks;
    for (int b = 0; b < nb; ++b) blocks.push_back({b, std::round(ref(rng)), std::log(0.9 + 0.09 * u01(rng))});
    DependencyGraph g;
    g.num_blocks = nb;
    for (int a = 0; a < nb; ++a)
        for (int b = a + 1; b < nb; ++b)
            if (u01(rng) < 0.35) g.edges.emplace_back(a, b);
    std::vector<ModelMatch> ms;
    std::uniform_int_distribution<int> blk(0, nb - 1), posd(0, 5);
    for (int s = 0; s < ns; ++s) ms.push_back({s, blk(rng), std::round(dd(rng)), df(rng), posd(rng)});
    std::sort(ms.begin(), ms.end(), [](auto& x, auto& y) { return x.block < y.block; });
    for (int s = 0; s < ns; ++s) ms[s].id = s;
    std::set<std::pair<int, int>> conf;
    for (int s = 0; s < ns; ++s)
        for (int t = s + 1; t < ns; ++t)
            if (ms[s].block == ms[t].block && u01(rng) < 0.4) conf.emplace(s, t);
    return build_model(blocks, g, ms, conf, o, 2 + static_cast<int>(u01(rng) * 3), 2900);
}

AdaptationModel worked_block() {
    std::vector<ModelBlock> blocks{{0, 965, 0}};
    std::vector<ModelMatch> ms{{0, 0, 573 - 965, 0}, {1, 0, 660 - 422, 0}, {2, 0, 19 - 543, 0}, {3, 0, 67 - 543, 0}};
    DependencyGraph g;
    g.num_blocks = 1;
    return build_model(blocks, g, ms, {{0, 1}, {0, 2}, {0, 3}, {2, 3}}, Objective::IdleTime, 2, 2900);
}

}  // namespace

TEST(BuildModel, Validation) {
    DependencyGraph g;
    g.num_blocks = 1;
    std::vector<ModelBlock> one{{0, 100, 0}};
    EXPECT_NO_THROW(build_model(one, g, {}, {}, Objective::Fidelity, 2, 2900));
    EXPECT_THROW(build_model({{1, 100, 0}}, g, {}, {}, Objective::Fidelity, 2, 2900), Error);
    EXPECT_THROW(build_model(one, g, {{0, 3, 1, 0}}, {}, Objective::Fidelity, 2, 2900), Error);
    EXPECT_THROW(build_model(one, g, {{0, 0, 1, 0}, {1, 0, 1, 0}}, {{1, 0}}, Objective::Fidelity, 2, 2900), Error);
    EXPECT_THROW(build_model(one, g, {}, {}, Objective::Fidelity, 2, 0), Error);
    DependencyGraph cyc;
    cyc.num_blocks = 2;
    cyc.edges = {{0, 1}, {1, 0}};
    EXPECT_THROW(build_model({{0, 1, 0}, {1, 1, 0}}, cyc, {}, {}, Objective::Fidelity, 2, 2900), Error);
}

TEST(BuildModel, WorkedExampleEquation) {
    const AdaptationModel m = worked_block();
    const std::string smt = emit_smtlib(m);
    EXPECT_NE(smt.find("(assert (= d0 (+ 965.0 (ite c0 (- 392.0) 0.0) (ite c1 238.0 0.0) (ite c2 (- 524.0) 0.0) "
                       "(ite c3 (- 476.0) 0.0))))"),
              std::string::npos)
        << smt;
    for (const char* clause : {"(assert (or (not c0) (not c1)))", "(assert (or (not c0) (not c2)))",
                               "(assert (or (not c0) (not c3)))", "(assert (or (not c2) (not c3)))"})
        EXPECT_NE(smt.find(clause), std::string::npos) << clause;
    EXPECT_EQ(m.conflicts.size(), 4u);
    // duration-only ranking: swap_d alone gives 441 ns, KAK alone 573 ns
    EXPECT_DOUBLE_EQ(evaluate(m, {2}).duration_ns[0], 441);
    EXPECT_DOUBLE_EQ(evaluate(m, {0}).duration_ns[0], 573);
    EXPECT_EQ(solve_exact(m).chosen, (std::vector<int>{2}));
    EXPECT_THROW(evaluate(m, {0, 2}), Error);
}

TEST(BuildModel, FromCircuitAndConflictCount) {
    const CostModel cm = CostModel::spin_d0();
    const PreprocessedCircuit pc = preprocess(parse_circuit("qubits 2\ncx 0 1"), cm);
    const auto ms = enumerate_matches(pc, cm, RuleLibrary::spin(false));  // kak_cz and cx_crot, one gate
    ASSERT_EQ(ms.size(), 2u);
    const AdaptationModel m = build_model(pc, ms, Objective::Fidelity, cm);
    EXPECT_EQ(m.conflicts.size(), 1u);
    EXPECT_EQ(m.num_qubits, 2);
    EXPECT_EQ(m.coherence_ns, 2900);
    EXPECT_EQ(m.blocks[0].qubits, (std::vector<int>{0, 1}));
    const std::string smt = emit_smtlib(m);
    size_t clauses = 0;
    for (size_t p = smt.find("(assert (or"); p != std::string::npos; p = smt.find("(assert (or", p + 1)) ++clauses;
    EXPECT_EQ(clauses, 1u);
}

TEST(Schedule, Basics) {
    DependencyGraph g;
    g.num_blocks = 1;
    const std::vector<double> d1{100};
    Schedule s = schedule_asap(g, d1);
    EXPECT_EQ(s.start_ns, (std::vector<double>{0}));
    EXPECT_EQ(s.makespan_ns, 100);
    g.num_blocks = 2;
    g.edges = {{0, 1}};
    const std::vector<double> d2{100, 50};
    s = schedule_asap(g, d2);
    EXPECT_EQ(s.start_ns, (std::vector<double>{0, 100}));
    EXPECT_EQ(s.makespan_ns, 150);
    EXPECT_EQ(schedule_asap(DependencyGraph{}, std::vector<double>{}).makespan_ns, 0);
    EXPECT_THROW(schedule_asap(g, d1), Error);
}

TEST(Schedule, RandomDagsMatchLongestPath) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u01(0, 1);
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + t % 15;
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);  // edges need not follow ids
        DependencyGraph g;
        g.num_blocks = n;
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                if (u01(rng) < 0.3) g.edges.emplace_back(perm[a], perm[b]);
        std::vector<double> d(n);
        for (double& x : d) x = std::round(1000 * u01(rng));
        const Schedule s = schedule_asap(g, d);
        EXPECT_DOUBLE_EQ(s.makespan_ns, longest_path(g, d));
        for (auto [p, b] : g.edges) EXPECT_GE(s.start_ns[b], s.start_ns[p] + d[p]);
    }
}

TEST(Objective, Values) {
    DependencyGraph g;
    g.num_blocks = 1;
    const AdaptationModel f = build_model({{0, 100, std::log(0.9)}}, g, {}, {}, Objective::Fidelity, 2, 2900);
    EXPECT_DOUBLE_EQ(objective_value(f, {}), std::log(0.9));
    const AdaptationModel r = build_model({{0, 100, std::log(0.9)}}, g, {}, {}, Objective::IdleTime, 2, 2900);
    EXPECT_DOUBLE_EQ(objective_value(r, {}), -(200.0 - 100.0) / 2900);
    const AdaptationModel p = build_model({{0, 100, std::log(0.9)}}, g, {}, {}, Objective::Combined, 2, 2900);
    EXPECT_DOUBLE_EQ(objective_value(p, {}), std::log(0.9) - 100.0 / 2900);
    EXPECT_THROW(objective_value(f, {0}), Error);
}

TEST(Solver, TrivialCases) {
    DependencyGraph g;
    g.num_blocks = 1;
    for (Objective o : kAll) {
        const AdaptationModel m = build_model({{0, 100, std::log(0.9)}}, g, {}, {}, o, 2, 2900);
        const Assignment a = solve_exact(m);
        EXPECT_TRUE(a.chosen.empty());
        EXPECT_DOUBLE_EQ(a.objective, objective_value(m, {}));
    }
    const AdaptationModel one = build_model({{0, 100, std::log(0.9)}}, g, {{0, 0, 40, 0.01}}, {}, Objective::Fidelity,
                                            2, 2900);
    EXPECT_EQ(solve_exact(one).chosen, (std::vector<int>{0}));
    const AdaptationModel none = build_model({}, DependencyGraph{}, {}, {}, Objective::Combined, 2, 2900);
    EXPECT_EQ(solve_exact(none).objective, 0);
}

TEST(Solver, ExhaustiveOracleSynthetic) {
    std::mt19937_64 rng(32);
    for (int t = 0; t < 300; ++t) {
        const Objective o = kAll[t % 3];
        const AdaptationModel m = random_model(rng, o);
        const Assignment a = solve_exact(m);
        EXPECT_NEAR(a.objective, brute_force(m), 1e-9) << "instance " << t;
        EXPECT_TRUE(satisfies_model(m, a));
        EXPECT_NEAR(objective_value(m, a.chosen), a.objective, 1e-12);
    }
}

TEST(Solver, ExhaustiveOracleCircuits) {
    std::mt19937_64 rng(33);
    std::uniform_int_distribution<int> kind(0, 4), pair(0, 1);
    std::uniform_real_distribution<double> ang(-3, 3);
    int tested = 0;
    for (int t = 0; tested < 150 && t < 2000; ++t) {
        Circuit c;
        c.num_qubits = 3;
        for (int i = 0; i < 6; ++i) {
            const int a = pair(rng);
            switch (kind(rng)) {
                case 0: c.add(u_gate(a, ang(rng), ang(rng), ang(rng))); break;
                case 1: c.add(make_gate("cx", {a, a + 1})); break;
                case 2: c.add(make_gate("cx", {a + 1, a})); break;
                case 3: c.add(make_gate("cz", {a, a + 1})); break;
                default: c.add(make_gate("swap", {a, a + 1})); break;
            }
        }
        const CostModel cm = t % 2 ? CostModel::spin_d1() : CostModel::spin_d0();
        const PreprocessedCircuit pc = preprocess(c, cm);
        const auto ms = enumerate_matches(pc, cm, RuleLibrary::spin(true));
        if (ms.size() > 12) continue;
        ++tested;
        for (Objective o : kAll) {
            const AdaptationModel m = build_model(pc, ms, o, cm);
            EXPECT_NEAR(solve_exact(m).objective, brute_force(m), 1e-9) << "circuit " << t;
        }
    }
    EXPECT_EQ(tested, 150);
}

TEST(Solver, OptionsDoNotChangeTheOptimum) {
    std::mt19937_64 rng(34);
    for (int t = 0; t < 60; ++t) {
        const AdaptationModel m = random_model(rng, kAll[1 + t % 2], 20);
        SolverOptions no_beam;
        no_beam.beam_width = 0;
        SolverOptions tiny_beam;
        tiny_beam.beam_width = 1;
        const Assignment a = solve_exact(m), b = solve_exact(m, no_beam), c = solve_exact(m, tiny_beam);
        EXPECT_NEAR(a.objective, b.objective, 1e-9);
        EXPECT_NEAR(a.objective, c.objective, 1e-9);
        EXPECT_EQ(a.chosen, b.chosen);  // deterministic tie-break
        EXPECT_EQ(a.chosen, c.chosen);
    }
}

TEST(Solver, BudgetAndWarmStarts) {
    std::mt19937_64 rng(35);
    AdaptationModel m = random_model(rng, Objective::IdleTime, 12);
    while (m.matches.size() < 8) m = random_model(rng, Objective::IdleTime, 12);
    SolverOptions tight;
    tight.node_budget = 1;
    tight.beam_width = 0;
    EXPECT_THROW(solve_exact(m, tight), InstanceTooLarge);
    tight.best_effort = true;
    tight.warm_starts = {{}};
    SolverStats st;
    const Assignment a = solve_exact(m, tight, &st);
    EXPECT_FALSE(st.optimal);
    EXPECT_GE(a.objective, objective_value(m, {}) - 1e-12);
    SolverStats full;
    solve_exact(m, {}, &full);
    EXPECT_TRUE(full.optimal);
    EXPECT_GT(full.nodes, 0);
    SolverOptions bad;
    bad.warm_starts = {{0, 0, 99}};
    EXPECT_THROW(solve_exact(m, bad), Error);
}

TEST(Smt, EmptyModel) {
    const AdaptationModel m = build_model({}, DependencyGraph{}, {}, {}, Objective::Fidelity, 1, 2900);
    const std::string s = emit_smtlib(m);
    EXPECT_NE(s.find("(check-sat)"), std::string::npos);
    size_t asserts = 0;
    for (size_t p = s.find("(assert"); p != std::string::npos; p = s.find("(assert", p + 1)) ++asserts;
    EXPECT_EQ(asserts, 1u);
    EXPECT_NE(s.find("(assert (>= Dtot 0.0))"), std::string::npos);
}

TEST(Smt, ObjectiveShapes) {
    const AdaptationModel base = worked_block();
    for (Objective o : kAll) {
        AdaptationModel m = base;
        m.objective = o;
        const std::string s = emit_smtlib(m);
        EXPECT_NE(s.find("(maximize"), std::string::npos);
        EXPECT_EQ(s.find("Dtot) d0) 2900.0))") != std::string::npos, o != Objective::Fidelity) << to_string(o);
        EXPECT_NE(s.find("(declare-const c3 Bool)"), std::string::npos);
        EXPECT_NE(s.find("(assert (>= Dtot (+ e0 d0)))"), std::string::npos);
    }
    EXPECT_EQ(detail::smt_real(-0.5), "(- 0.5)");
    EXPECT_EQ(detail::smt_real(3), "3.0");
    EXPECT_EQ(std::stod(detail::smt_real(1e-7)), 1e-7);
}

TEST(Solver, SinglePathModels) {
    // every block on one path with non-negative durations: the makespan
    // term folds into per-block gains
    std::mt19937_64 rng(36);
    std::uniform_real_distribution<double> ref(300, 1000), dd(-80, 150), df(-0.02, 0.015);
    for (int t = 0; t < 100; ++t) {
        const int nb = 1 + t % 5, ns = t % 12;
        std::vector<ModelBlock> blocks;
        for (int b = 0; b < nb; ++b) blocks.push_back({b, std::round(ref(rng)), -0.01});
        DependencyGraph g;
        g.num_blocks = nb;
        for (int b = 0; b + 1 < nb; ++b) g.edges.emplace_back(b, b + 1);
        if (nb > 2) g.edges.emplace_back(0, 2);
        std::vector<ModelMatch> ms;
        for (int s = 0; s < ns; ++s) ms.push_back({s, s * nb / std::max(ns, 1), std::round(dd(rng)), df(rng), s});
        std::set<std::pair<int, int>> conf;
        for (int s = 0; s + 1 < ns; ++s)
            if (ms[s].block == ms[s + 1].block && s % 2) conf.emplace(s, s + 1);
        for (Objective o : kAll) {
            const AdaptationModel m = build_model(blocks, g, ms, conf, o, 2 + t % 3, 2900);
            EXPECT_NEAR(solve_exact(m).objective, brute_force(m), 1e-9) << t;
        }
    }
}

TEST(Solver, SubsetBudgetTruncation) {
    // one block, twelve independent matches: 4096 subsets, all undominated
    // under idle because gain grows with duration
    std::vector<ModelMatch> ms;
    for (int s = 0; s < 12; ++s) ms.push_back({s, 0, -static_cast<double>(1 << s), 0.001 * (s % 3), s});
    DependencyGraph g;
    g.num_blocks = 2;
    std::vector<ModelBlock> blocks{{0, 9000, 0, {0, 1}}, {1, 5000, 0, {2}}};
    const AdaptationModel m = build_model(blocks, g, ms, {}, Objective::Combined, 3, 2900);
    SolverOptions small;
    small.block_subset_budget = 16;
    EXPECT_THROW(solve_exact(m, small), InstanceTooLarge);
    small.best_effort = true;
    small.warm_starts = {{0, 1, 2}};
    SolverStats st;
    const Assignment a = solve_exact(m, small, &st);
    EXPECT_FALSE(st.optimal);
    EXPECT_TRUE(satisfies_model(m, a));
    EXPECT_GE(a.objective, objective_value(m, {0, 1, 2}) - 1e-12);
    SolverStats full;
    EXPECT_NEAR(solve_exact(m, {}, &full).objective, brute_force(m), 1e-9);
    EXPECT_TRUE(full.optimal);
}
