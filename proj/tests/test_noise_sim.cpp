#include "qadapt/noise_sim.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace qadapt;
using std::numbers::pi;

namespace {

NoiseModel only(const std::string& gate, double p) {
    NoiseModel nm;
    for (const auto& name : {"u", "cz", "cz_db", "crot", "swap_d", "swap_c"}) nm.depolarizing[name] = 0;
    nm.depolarizing[gate] = p;
    return nm;
}

AdaptedBlock block(int id, std::vector<int> qs, std::vector<Gate> gs, double start, double dur) {
    AdaptedBlock b;
    b.id = id;
    b.qubits = std::move(qs);
    b.gates = std::move(gs);
    b.start_ns = start;
    b.duration_ns = dur;
    return b;
}

AdaptedCircuit by_hand(int nq, std::vector<AdaptedBlock> blocks, double makespan) {
    AdaptedCircuit ac;
    ac.circuit.num_qubits = nq;
    ac.graph.num_blocks = static_cast<int>(blocks.size());
    for (const auto& b : blocks)
        for (const Gate& g : b.gates) ac.circuit.add(g);
    ac.blocks = std::move(blocks);
    ac.makespan_ns = makespan;
    return ac;
}

}  // namespace

TEST(NoiseFromCost, Calibration) {
    const NoiseModel nm = noise_from_cost(CostModel::spin_d0());
    EXPECT_DOUBLE_EQ(nm.probability("u"), 2 * (1 - 0.999));
    EXPECT_NEAR(nm.probability("u"), 0.002, 1e-15);
    EXPECT_DOUBLE_EQ(nm.probability("swap_d"), 4 * (1 - 0.99) / 3);
    EXPECT_DOUBLE_EQ(nm.t1_ns, 1000 * 2900);
    EXPECT_DOUBLE_EQ(nm.t2_ns, 2900);
    EXPECT_THROW(nm.probability("cx"), Error);
    CostModel perfect = CostModel::spin_d0();
    perfect.gates["cz"].fidelity = 1;
    EXPECT_EQ(noise_from_cost(perfect).probability("cz"), 0);
    perfect.gates["cz"].fidelity = 0;
    EXPECT_THROW(noise_from_cost(perfect), Error);
    NoiseModel bad;
    bad.depolarizing["u"] = 1.5;
    EXPECT_THROW(bad.validate(), Error);
    bad = {};
    bad.t1_ns = 100;
    bad.t2_ns = 300;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Simulate, NoiselessIdentity) {
    const CostModel cm = CostModel::spin_d0();
    const PreprocessedCircuit pc = preprocess(parse_circuit("qubits 3\nu 0 0 0 0\ncz 1 2"), cm);
    const Distribution p = simulate_distribution(baseline_direct(pc, cm), only("u", 0));
    EXPECT_NEAR(p[0], 1, 1e-12);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1, 1e-12);
}

TEST(Simulate, DepolarizedCzMatchesClosedForm) {
    const double p = 0.037;
    // density matrix: H(x)H then cz, depolarized on both qubits
    DensityMatrix rho(2);
    const Gate h0 = h_gate(0), h1 = h_gate(1), cz = make_gate("cz", {0, 1});
    rho.apply_unitary(gate_matrix(h0), h0.qubits);
    rho.apply_unitary(gate_matrix(h1), h1.qubits);
    rho.apply_unitary(gate_matrix(cz), cz.qubits);
    rho.depolarize(cz.qubits, p);
    Eigen::Vector4cd psi(0.5, 0.5, 0.5, -0.5);
    const MatX expect = (1 - p) * psi * psi.adjoint() + p * MatX::Identity(4, 4) / 4.0;
    EXPECT_LT(max_abs(rho.matrix() - expect), 1e-12);

    // distribution of X on q0 then cz: mass (1-p) + p/4 on "10"
    const AdaptedCircuit ac = by_hand(2, {block(0, {0, 1}, {u_gate(0, pi, 0, pi), cz}, 0, 182)}, 182);
    const Distribution d = simulate_distribution(ac, only("cz", p));
    EXPECT_NEAR(d[0b10], 1 - p + p / 4, 1e-6);
    for (int i : {0b00, 0b01, 0b11}) EXPECT_NEAR(d[i], p / 4, 1e-6);
}

TEST(Simulate, IdleDecayOverT1) {
    const double t1 = 1000;
    NoiseModel nm = only("u", 0);
    nm.t1_ns = t1;
    nm.t2_ns = 2 * t1;  // no pure dephasing
    // q0 excited, then idle for T1 while q1 runs a long block
    const AdaptedCircuit ac = by_hand(
        2, {block(0, {0}, {u_gate(0, pi, 0, pi)}, 0, 30), block(1, {1}, {u_gate(1, 0, 0, 0)}, 0, 30 + t1)}, 30 + t1);
    const Distribution d = simulate_distribution(ac, nm);
    EXPECT_NEAR(d[0b10] + d[0b11], std::exp(-1.0), 1e-6);
    // dephasing leaves populations alone
    nm.t2_ns = 0.3 * t1;
    const Distribution e = simulate_distribution(ac, nm);
    EXPECT_NEAR(e[0b10] + e[0b11], std::exp(-1.0), 1e-6);
    // and kills coherence at the expected rate
    DensityMatrix rho(1);
    const Gate h = h_gate(0);
    rho.apply_unitary(gate_matrix(h), h.qubits);
    rho.relax(0, t1, t1, 0.3 * t1);
    EXPECT_NEAR(std::abs(rho.matrix()(0, 1)), 0.5 * std::exp(-1 / 0.3), 1e-9);
}

TEST(Simulate, ChannelsPreserveTraceAndHermiticity) {
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> ang(-3, 3), u01(0, 1);
    DensityMatrix rho(3);
    for (int t = 0; t < 60; ++t) {
        const int a = t % 3, b = (t + 1) % 3;
        const Gate g = t % 2 ? u_gate(a, ang(rng), ang(rng), ang(rng)) : make_gate("crot", {a, b}, {ang(rng)});
        rho.apply_unitary(gate_matrix(g), g.qubits);
        rho.depolarize(g.qubits, u01(rng) * 0.2);
        rho.relax(b, 500 * u01(rng), 2000, 1500);
        ASSERT_LT(rho.trace_deviation(), 1e-9);
        ASSERT_LT(rho.hermiticity_deviation(), 1e-9);
    }
    const Eigen::SelfAdjointEigenSolver<MatX> es(rho.matrix());
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-9);
}

TEST(Simulate, ZeroNoiseMatchesSourceStatevector) {
    std::mt19937_64 rng(52);
    std::uniform_int_distribution<int> kind(0, 3), qubit(0, 2);
    std::uniform_real_distribution<double> ang(-3, 3);
    const CostModel cm = CostModel::spin_d1();
    for (int t = 0; t < 30; ++t) {
        Circuit c;
        c.num_qubits = 3;
        for (int i = 0; i < 12; ++i) {
            const int a = qubit(rng);
            const int b = (a + 1 + qubit(rng) % 2) % 3;
            switch (kind(rng)) {
                case 0: c.add(u_gate(a, ang(rng), ang(rng), ang(rng))); break;
                case 1: c.add(make_gate("cx", {a, b})); break;
                case 2: c.add(make_gate("cz", {a, b})); break;
                default: c.add(make_gate("swap", {a, b})); break;
            }
        }
        const auto p = AdaptationProblem::make(c, cm, RuleLibrary::spin(true));
        const Distribution src = ideal_distribution(c);
        const AdaptedCircuit ac = adapt_exact(p, Objective::Combined);
        const Distribution out = simulate_distribution(ac, only("u", 0));
        for (size_t i = 0; i < src.size(); ++i) EXPECT_NEAR(out[i], src[i], 1e-9);
        const Distribution sv = ideal_distribution(ac.circuit);
        for (size_t i = 0; i < src.size(); ++i) EXPECT_NEAR(sv[i], src[i], 1e-9);
    }
}

TEST(Simulate, Errors) {
    AdaptedCircuit big;
    big.circuit.num_qubits = 6;
    EXPECT_THROW(simulate_distribution(big, {}), Error);
    const Gate x = u_gate(0, pi, 0, pi);
    const AdaptedCircuit overlap =
        by_hand(1, {block(0, {0}, {x}, 0, 30), block(1, {0}, {x}, 10, 30)}, 40);
    EXPECT_THROW(simulate_distribution(overlap, only("u", 0)), Error);
    EXPECT_THROW(simulate_distribution(by_hand(1, {block(0, {0}, {x}, 0, 30)}, 30), NoiseModel{}), Error);
}

TEST(Hellinger, Cases) {
    const Distribution p{0.2, 0.3, 0.1, 0.4}, q{0.25, 0.25, 0.25, 0.25};
    EXPECT_NEAR(hellinger_fidelity(p, p), 1, 1e-12);
    EXPECT_EQ(hellinger_fidelity({1, 0}, {0, 1}), 0);
    EXPECT_NEAR(hellinger_fidelity({0.5, 0.5}, {1, 0}), 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(hellinger_fidelity(p, q), hellinger_fidelity(q, p));
    EXPECT_LT(hellinger_fidelity(p, q), 1);
    EXPECT_THROW(hellinger_fidelity({-0.1, 1.1}, {0.5, 0.5}), Error);
    EXPECT_THROW(hellinger_fidelity({1}, {0.5, 0.5}), Error);
    EXPECT_NEAR(total_variation(p, q), 0.2, 1e-15);
}

TEST(IdleTime, Accounting) {
    const CostModel cm = CostModel::spin_d0();
    AdaptedCircuit empty;
    empty.circuit.num_qubits = 3;
    EXPECT_EQ(idle_time(empty), 0);
    const AdaptedCircuit one = baseline_direct(preprocess(parse_circuit("qubits 2\ncz 0 1"), cm), cm);
    EXPECT_EQ(idle_time(one), one.makespan_ns);
    // chain (0,1) -> (1,2) -> (0,1): timeline walk
    const AdaptedCircuit ch =
        baseline_direct(preprocess(parse_circuit("qubits 3\ncz 0 1\ncz 1 2\ncz 0 1"), cm), cm);
    ASSERT_EQ(ch.blocks.size(), 3u);
    double t = 0, busy = 0;
    for (const AdaptedBlock& b : ch.blocks) {
        EXPECT_EQ(b.start_ns, t);
        t += b.duration_ns;
        busy += b.duration_ns;
    }
    EXPECT_EQ(ch.makespan_ns, t);
    EXPECT_EQ(idle_time(ch), 3 * t - busy);
    EXPECT_EQ(idle_time(ch), ch.idle_ns);
}

TEST(Json, Distribution) {
    const nlohmann::json j = distribution_to_json({0.5, 0, 0.25, 0.25}, 2, 0);
    EXPECT_EQ(j.size(), 3u);
    EXPECT_EQ(j["00"], 0.5);
    EXPECT_EQ(j["10"], 0.25);
    EXPECT_EQ(bitstring(1, 3), "001");
}
