#pragma once

// Dense density-matrix simulation with per-gate depolarization and idle
// relaxation, plus the distribution metrics used by the benchmarks.
// Basis index convention: qubit 0 is the most significant bit.

#include "qadapt/adapt.hpp"

#include <numeric>

namespace qadapt {

struct NoiseModel {
    std::map<std::string, double, std::less<>> depolarizing;  // per gate name
    double t1_ns = 0;
    double t2_ns = 0;  // both 0: no relaxation

    double probability(std::string_view gate) const {
        auto it = depolarizing.find(gate);
        if (it == depolarizing.end()) throw Error("noise model has no entry for '" + std::string(gate) + "'");
        return it->second;
    }

    void validate() const {
        for (const auto& [name, p] : depolarizing)
            if (!(p >= 0 && p <= 1)) throw Error("depolarizing probability for '" + name + "' outside [0, 1]");
        if (t1_ns < 0 || t2_ns < 0) throw Error("negative relaxation time");
        if ((t1_ns > 0) != (t2_ns > 0)) throw Error("t1 and t2 must both be set or both be zero");
        if (t1_ns > 0 && t2_ns > 2 * t1_ns + 1e-9) throw Error("t2 exceeds 2*t1");
    }

    static NoiseModel noiseless() { return {}; }
};

/// Depolarizing strength matching each gate's average fidelity F:
/// p = d(1-F)/(d-1) with d = 2^arity.
inline NoiseModel noise_from_cost(const CostModel& cm) {
    NoiseModel nm;
    for (const auto& [name, gc] : cm.gates) {
        if (!(gc.fidelity > 0 && gc.fidelity <= 1)) throw Error("fidelity of '" + name + "' outside (0, 1]");
        const double d = std::ldexp(1.0, gate_spec(name).arity);
        nm.depolarizing[name] = d * (1 - gc.fidelity) / (d - 1);
    }
    nm.t1_ns = cm.t1_ns;
    nm.t2_ns = cm.t2_ns;
    nm.validate();
    return nm;
}

class DensityMatrix {
public:
    explicit DensityMatrix(int num_qubits) : q_(num_qubits) {
        if (num_qubits < 0 || num_qubits > 10) throw Error("density matrix size out of range");
        const Eigen::Index n = Eigen::Index{1} << num_qubits;
        rho_ = MatX::Zero(n, n);
        rho_(0, 0) = 1;
    }

    int num_qubits() const { return q_; }
    const MatX& matrix() const { return rho_; }
    Eigen::Index dim() const { return rho_.rows(); }

    /// Bit mask of qubit q in a basis index.
    Eigen::Index mask(int q) const { return Eigen::Index{1} << (q_ - 1 - q); }

    void apply_unitary(const MatX& u, std::span<const int> qubits) {
        const int k = static_cast<int>(qubits.size());
        if (u.rows() != (Eigen::Index{1} << k)) throw Error("unitary size does not match qubit count");
        rho_ = expand(u, qubits) * rho_ * expand(u, qubits).adjoint();
    }

    /// (1-p) rho + p (I/d on `qubits`) (x) Tr_qubits(rho)
    void depolarize(std::span<const int> qubits, double p) {
        if (p == 0) return;
        Eigen::Index m = 0;
        for (int q : qubits) m |= mask(q);
        const int k = static_cast<int>(qubits.size());
        const double d = std::ldexp(1.0, k);
        MatX mixed = MatX::Zero(dim(), dim());
        for (Eigen::Index i = 0; i < dim(); ++i)
            for (Eigen::Index j = 0; j < dim(); ++j) {
                if ((i & m) != (j & m)) continue;
                cplx acc = 0;
                for (int l = 0; l < (1 << k); ++l) {
                    const Eigen::Index s = spread(l, qubits);
                    acc += rho_((i & ~m) | s, (j & ~m) | s);
                }
                mixed(i, j) = acc / d;
            }
        rho_ = (1 - p) * rho_ + p * mixed;
    }

    void apply_kraus(std::span<const Mat2> ops, int q) {
        MatX out = MatX::Zero(dim(), dim());
        const int qs[] = {q};
        for (const Mat2& k : ops) {
            MatX e = expand(k, qs);
            out += e * rho_ * e.adjoint();
        }
        rho_ = std::move(out);
    }

    /// Amplitude damping over t (rate 1/T1) followed by pure dephasing with
    /// 1/Tphi = 1/T2 - 1/(2 T1).
    void relax(int q, double t_ns, double t1_ns, double t2_ns) {
        if (t_ns <= 0 || t1_ns <= 0) return;
        const double gamma = 1 - std::exp(-t_ns / t1_ns);
        Mat2 a0, a1;
        a0 << 1, 0, 0, std::sqrt(1 - gamma);
        a1 << 0, std::sqrt(gamma), 0, 0;
        const Mat2 damp[] = {a0, a1};
        apply_kraus(damp, q);
        const double rate_phi = 1 / t2_ns - 1 / (2 * t1_ns);
        if (rate_phi <= 0) return;
        const double lambda = std::exp(-t_ns * rate_phi);
        Mat2 z0 = Mat2::Identity() * std::sqrt((1 + lambda) / 2), z1;
        z1 << std::sqrt((1 - lambda) / 2), 0, 0, -std::sqrt((1 - lambda) / 2);
        const Mat2 deph[] = {z0, z1};
        apply_kraus(deph, q);
    }

    std::vector<double> probabilities() const {
        std::vector<double> p(dim());
        for (Eigen::Index i = 0; i < dim(); ++i) p[i] = std::max(0.0, rho_(i, i).real());
        return p;
    }

    double trace_deviation() const { return std::abs(rho_.trace() - cplx(1)); }
    double hermiticity_deviation() const { return max_abs(rho_ - rho_.adjoint()); }

private:
    Eigen::Index spread(int local, std::span<const int> qubits) const {
        const int k = static_cast<int>(qubits.size());
        Eigen::Index s = 0;
        for (int t = 0; t < k; ++t)
            if (local >> (k - 1 - t) & 1) s |= mask(qubits[t]);
        return s;
    }

    // Full-register operator for a gate on `qubits` (first listed = MSB of u).
    MatX expand(const MatX& u, std::span<const int> qubits) const {
        const int k = static_cast<int>(qubits.size());
        Eigen::Index m = 0;
        for (int q : qubits) {
            if (q < 0 || q >= q_) throw Error("qubit index out of range");
            m |= mask(q);
        }
        MatX full = MatX::Zero(dim(), dim());
        for (Eigen::Index col = 0; col < dim(); ++col) {
            int lc = 0;
            for (int t = 0; t < k; ++t) lc = (lc << 1) | ((col & mask(qubits[t])) ? 1 : 0);
            for (int lr = 0; lr < (1 << k); ++lr) full((col & ~m) | spread(lr, qubits), col) = u(lr, lc);
        }
        return full;
    }

    int q_;
    MatX rho_;
};

using Distribution = std::vector<double>;  // indexed by basis state

inline constexpr int kMaxSimQubits = 5;

/// Noisy output distribution of an adapted circuit from |0..0>. Blocks run
/// in schedule order; each qubit relaxes over the gaps between its blocks
/// and up to the makespan.
inline Distribution simulate_distribution(const AdaptedCircuit& ac, const NoiseModel& nm) {
    const int nq = ac.circuit.num_qubits;
    if (nq > kMaxSimQubits) throw Error("simulation supports at most " + std::to_string(kMaxSimQubits) + " qubits");
    nm.validate();
    std::vector<const AdaptedBlock*> order;
    for (const AdaptedBlock& b : ac.blocks) order.push_back(&b);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) {
        return a->start_ns != b->start_ns ? a->start_ns < b->start_ns : a->id < b->id;
    });
    DensityMatrix rho(nq);
    std::vector<double> free_at(nq, 0.0);
    constexpr double slack = 1e-6;
    for (const AdaptedBlock* b : order) {
        for (int q : b->qubits) {
            const double gap = b->start_ns - free_at[q];
            if (gap < -slack) throw Error("invalid schedule: block " + std::to_string(b->id) + " overlaps on qubit " +
                                          std::to_string(q));
            if (gap > 0) rho.relax(q, gap, nm.t1_ns, nm.t2_ns);
        }
        for (const Gate& g : b->gates) {
            rho.apply_unitary(gate_matrix(g), g.qubits);
            rho.depolarize(g.qubits, nm.probability(g.name));
        }
        for (int q : b->qubits) free_at[q] = b->start_ns + b->duration_ns;
    }
    for (int q = 0; q < nq; ++q) {
        const double gap = ac.makespan_ns - free_at[q];
        if (gap < -slack) throw Error("invalid schedule: qubit busy past the makespan");
        if (gap > 0) rho.relax(q, gap, nm.t1_ns, nm.t2_ns);
    }
    Distribution p = rho.probabilities();
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(total - 1) > 1e-9) throw Error("simulation lost trace");
    return p;
}

/// Noiseless statevector distribution of any circuit.
inline Distribution ideal_distribution(const Circuit& c) {
    const int nq = c.num_qubits;
    if (nq > 20) throw Error("statevector simulation supports at most 20 qubits");
    const size_t n = size_t{1} << nq;
    std::vector<cplx> psi(n, 0.0);
    psi[0] = 1;
    auto bit = [nq](int q) { return size_t{1} << (nq - 1 - q); };
    for (const Gate& g : c.gates) {
        const MatX u = gate_matrix(g);
        const int k = static_cast<int>(g.qubits.size());
        size_t m = 0;
        for (int q : g.qubits) m |= bit(q);
        std::vector<size_t> offs(size_t{1} << k, 0);
        for (size_t l = 0; l < offs.size(); ++l)
            for (int t = 0; t < k; ++t)
                if (l >> (k - 1 - t) & 1) offs[l] |= bit(g.qubits[t]);
        std::vector<cplx> in(offs.size());
        for (size_t base = 0; base < n; ++base) {
            if (base & m) continue;
            for (size_t l = 0; l < offs.size(); ++l) in[l] = psi[base | offs[l]];
            for (size_t r = 0; r < offs.size(); ++r) {
                cplx acc = 0;
                for (size_t l = 0; l < offs.size(); ++l) acc += u(r, l) * in[l];
                psi[base | offs[r]] = acc;
            }
        }
    }
    Distribution p(n);
    for (size_t i = 0; i < n; ++i) p[i] = std::norm(psi[i]);
    return p;
}

inline void check_distribution(const Distribution& p) {
    for (double v : p)
        if (v < 0 || !std::isfinite(v)) throw Error("distribution has a negative or non-finite entry");
}

inline double hellinger_fidelity(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) throw Error("distributions have different sizes");
    check_distribution(p);
    check_distribution(q);
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += std::sqrt(p[i] * q[i]);
    return s * s;
}

inline double total_variation(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) throw Error("distributions have different sizes");
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return s / 2;
}

inline double idle_time(const AdaptedCircuit& ac) {
    double busy = 0;
    for (const AdaptedBlock& b : ac.blocks) busy += b.duration_ns;
    return ac.circuit.num_qubits * ac.makespan_ns - busy;
}

/// Bitstring of basis state i; character k is qubit k.
inline std::string bitstring(size_t i, int num_qubits) {
    std::string s(num_qubits, '0');
    for (int q = 0; q < num_qubits; ++q)
        if (i >> (num_qubits - 1 - q) & 1) s[q] = '1';
    return s;
}

inline nlohmann::json distribution_to_json(const Distribution& p, int num_qubits, double cutoff = 0) {
    nlohmann::json j = nlohmann::json::object();
    for (size_t i = 0; i < p.size(); ++i)
        if (p[i] > cutoff) j[bitstring(i, num_qubits)] = p[i];
    return j;
}

}  // namespace qadapt
