#pragma once

// Two-qubit linear algebra: gate embedding, phase-insensitive comparison,
// ZYZ synthesis, and KAK synthesis onto a CZ-type entangler.

#include "qadapt/circuit.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <numeric>
#include <optional>
#include <span>

namespace qadapt {

inline constexpr double kConstructionTol = 1e-12;
inline constexpr double kEquivalenceTol = 1e-9;
inline constexpr double kKakTol = 1e-8;
inline constexpr double kDegenerateTol = 1e-10;

inline double max_abs(const MatX& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool is_unitary(const MatX& u, double tol) {
    if (u.rows() != u.cols()) return false;
    return max_abs(u.adjoint() * u - MatX::Identity(u.rows(), u.cols())) <= tol;
}

inline Mat4 swap_matrix() {
    Mat4 s = Mat4::Zero();
    s(0, 0) = s(1, 2) = s(2, 1) = s(3, 3) = 1;
    return s;
}

inline Mat4 kron(const Mat2& a, const Mat2& b) {
    Mat4 m;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) m.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return m;
}

/// Embeds `g` into the 4x4 space of the ordered pair (a, b); a is the MSB.
inline Mat4 embed(const Gate& g, int a, int b) {
    MatX m = gate_matrix(g);
    if (g.qubits.size() == 1) {
        if (g.qubits[0] == a) return kron(m, Mat2::Identity());
        if (g.qubits[0] == b) return kron(Mat2::Identity(), m);
    } else if (g.qubits.size() == 2) {
        if (g.qubits[0] == a && g.qubits[1] == b) return m;
        if (g.qubits[0] == b && g.qubits[1] == a) return swap_matrix() * m * swap_matrix();
    }
    throw Error("gate '" + g.name + "' acts outside qubit pair (" + std::to_string(a) + "," +
                std::to_string(b) + ")");
}

/// Product of the embedded gates in circuit order (last gate leftmost).
inline Mat4 block_unitary(std::span<const Gate> gates, int a = 0, int b = 1) {
    Mat4 u = Mat4::Identity();
    for (const Gate& g : gates) u = embed(g, a, b) * u;
    return u;
}

/// Product of single-qubit gates on `q`.
inline Mat2 line_unitary(std::span<const Gate> gates, int q) {
    Mat2 u = Mat2::Identity();
    for (const Gate& g : gates) {
        if (g.qubits.size() != 1 || g.qubits[0] != q)
            throw Error("gate '" + g.name + "' is not a single-qubit gate on qubit " + std::to_string(q));
        u = gate_matrix(g) * u;
    }
    return u;
}

/// Phase is fixed by aligning the largest-magnitude entry of `v`.
inline bool equal_up_to_global_phase(const MatX& u, const MatX& v, double tol) {
    if (u.rows() != v.rows() || u.cols() != v.cols()) throw Error("dimension mismatch");
    Eigen::Index r = 0, c = 0;
    v.cwiseAbs().maxCoeff(&r, &c);
    if (std::abs(v(r, c)) == 0.0) return max_abs(u) <= tol;
    cplx ratio = u(r, c) / v(r, c);
    if (std::abs(ratio) == 0.0) return false;
    cplx phase = ratio / std::abs(ratio);
    return max_abs(u - phase * v) <= tol;
}

/// Max-norm distance after removing the best aligned global phase.
inline double phase_distance(const MatX& u, const MatX& v) {
    Eigen::Index r = 0, c = 0;
    v.cwiseAbs().maxCoeff(&r, &c);
    cplx ratio = u(r, c) / v(r, c);
    cplx phase = std::abs(ratio) > 0 ? ratio / std::abs(ratio) : cplx(1);
    return max_abs(u - phase * v);
}

// ---------------------------------------------------------------- ZYZ

struct ZyzAngles {
    double theta = 0;
    double phi = 0;
    double lambda = 0;
    double global_phase = 0;
};

/// U = e^{i global_phase} u(theta, phi, lambda).
inline ZyzAngles zyz_angles(const Mat2& u) {
    if (!is_unitary(u, kEquivalenceTol)) throw Error("zyz_angles: matrix is not unitary");
    cplx det = u.determinant();
    Mat2 v = u / std::sqrt(det);
    const cplx a = v(0, 0), b = v(1, 0);
    const double arg_a = std::abs(a) > 1e-14 ? std::arg(a) : 0.0;
    const double arg_b = std::abs(b) > 1e-14 ? std::arg(b) : 0.0;
    ZyzAngles z;
    z.theta = 2 * std::atan2(std::abs(b), std::abs(a));
    z.phi = arg_b - arg_a;
    z.lambda = -arg_a - arg_b;
    Mat2 rec = u_matrix(z.theta, z.phi, z.lambda);
    Eigen::Index r = 0, c = 0;
    rec.cwiseAbs().maxCoeff(&r, &c);
    z.global_phase = std::arg(u(r, c) / rec(r, c));
    return z;
}

inline bool is_identity_up_to_phase(const Mat2& m, double tol = kDegenerateTol) {
    return equal_up_to_global_phase(m, Mat2::Identity(), tol);
}

/// Merges every run of single-qubit gates on a qubit (runs end at a two-qubit
/// gate on that qubit) into one `u`, dropping runs that are the identity.
inline std::vector<Gate> merge_single_qubit_runs(std::span<const Gate> gates) {
    struct Pending {
        size_t slot;
        Mat2 m;
        int count;
    };
    std::vector<std::optional<Gate>> out;
    std::map<int, Pending> pending;
    auto flush = [&](int q) {
        auto it = pending.find(q);
        if (it == pending.end()) return;
        Pending& p = it->second;
        if (is_identity_up_to_phase(p.m)) {
            out[p.slot].reset();
        } else if (p.count > 1) {
            ZyzAngles z = zyz_angles(p.m);
            out[p.slot] = u_gate(q, z.theta, z.phi, z.lambda);
        }
        pending.erase(it);
    };
    for (const Gate& g : gates) {
        if (g.qubits.size() == 1) {
            int q = g.qubits[0];
            auto it = pending.find(q);
            if (it == pending.end()) {
                out.emplace_back(g);
                pending.emplace(q, Pending{out.size() - 1, gate_matrix(g), 1});
            } else {
                it->second.m = gate_matrix(g) * it->second.m;
                ++it->second.count;
            }
        } else {
            for (int q : g.qubits) flush(q);
            out.emplace_back(g);
        }
    }
    while (!pending.empty()) flush(pending.begin()->first);
    std::vector<Gate> result;
    for (auto& g : out)
        if (g) result.push_back(std::move(*g));
    for (Gate& g : result) g.uid = -1;
    return result;
}

// ---------------------------------------------------------------- KAK

namespace detail {

inline const Mat4& magic_basis() {
    using namespace std::complex_literals;
    static const Mat4 b = [] {
        Mat4 m;
        m << 1, 0, 0, 1i, 0, 1i, 1, 0, 0, 1i, -1, 0, 1, 0, 0, -1i;
        return Mat4(m / std::sqrt(2.0));
    }();
    return b;
}

/// U = phase * B K1 diag(delta) P^T B^dagger with K1, P in SO(4).
struct KakCore {
    cplx phase;
    Mat4 ub;                       // B^dagger (U / phase) B
    Eigen::Matrix4d p;             // real orthogonal eigenvectors of ub^T ub
    Eigen::Vector4cd d;            // eigenvalues of ub^T ub
};

inline KakCore kak_core(const Mat4& u) {
    KakCore k;
    cplx det = u.determinant();
    k.phase = std::pow(det, 0.25);
    const Mat4& b = magic_basis();
    k.ub = b.adjoint() * (u / k.phase) * b;
    Mat4 m = k.ub.transpose() * k.ub;
    Eigen::Matrix4d re = m.real(), im = m.imag();
    static constexpr std::array<double, 6> mix = {0.7548776662, 1.3247179573, -0.5698402910,
                                                  2.1478990357, 0.4142135624, -1.7320508076};
    for (double r : mix) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(re + r * im);
        Eigen::Matrix4d p = es.eigenvectors();
        if (p.determinant() < 0) p.col(0) = -p.col(0);
        Mat4 diag = p.transpose().cast<cplx>() * m * p.cast<cplx>();
        Mat4 off = diag;
        off.diagonal().setZero();
        if (max_abs(off) <= 1e-11) {
            k.p = p;
            k.d = diag.diagonal();
            return k;
        }
    }
    throw Error("kak: failed to diagonalize magic-basis form");
}

inline Eigen::Matrix4d orthogonal_factor(const Mat4& ub, const Eigen::Matrix4d& p,
                                         const Eigen::Vector4cd& delta) {
    Mat4 k = ub * p.cast<cplx>() * delta.cwiseInverse().asDiagonal();
    return k.real();
}

/// Splits L = A (x) B.
inline std::pair<Mat2, Mat2> tensor_factor(const Mat4& l) {
    int bi = 0, bj = 0;
    double best = -1;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double n = l.block<2, 2>(2 * i, 2 * j).norm();
            if (n > best) best = n, bi = i, bj = j;
        }
    Mat2 blk = l.block<2, 2>(2 * bi, 2 * bj);
    Mat2 bm = blk / std::sqrt(blk.determinant());
    Mat2 am;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            am(i, j) = (bm.adjoint() * l.block<2, 2>(2 * i, 2 * j)).trace() / 2.0;
    return {am, bm};
}

struct Canonical {
    double a, b, c;
};

/// Interaction coefficients (a, b, c) with exp(i(a XX + b YY + c ZZ)) locally
/// equivalent to the input. Not reduced to the Weyl chamber.
inline Canonical interaction_coefficients(const Eigen::Vector4cd& d) {
    std::array<double, 4> lam;
    for (int k = 0; k < 4; ++k) lam[k] = std::arg(d[k]) / 2;
    double sum = lam[0] + lam[1] + lam[2] + lam[3];
    int m = static_cast<int>(std::lround(sum / std::numbers::pi));
    for (int k = 0; m > 0 && k < 4; ++k, --m) lam[k] -= std::numbers::pi;
    for (int k = 0; m < 0 && k < 4; ++k, ++m) lam[k] += std::numbers::pi;
    return {(lam[0] + lam[2]) / 2, (lam[1] + lam[2]) / 2, (lam[0] + lam[1]) / 2};
}

inline Canonical weyl_reduce(Canonical x) {
    constexpr double q = std::numbers::pi / 2;
    std::array<double, 3> v = {x.a, x.b, x.c};
    for (double& t : v) {
        t -= q * std::round(t / q);
        if (t <= -q / 2 + 1e-15) t += q;
    }
    std::sort(v.begin(), v.end(), [](double l, double r) { return std::abs(l) > std::abs(r); });
    if (v[0] < 0) v[0] = -v[0], v[2] = -v[2];
    if (v[1] < 0) v[1] = -v[1], v[2] = -v[2];
    return {v[0], v[1], v[2]};
}

/// Minimum number of entanglers needed, from Weyl-chamber coordinates.
inline int entangler_count(const Canonical& w, double tol = kDegenerateTol) {
    const double a = w.a, b = w.b, c = std::abs(w.c);
    if (a <= tol && b <= tol && c <= tol) return 0;
    if (std::abs(a - std::numbers::pi / 4) <= tol && b <= tol && c <= tol) return 1;
    if (c <= tol) return 2;
    return 3;
}

inline Gate u_from(const Mat2& m, int q) {
    ZyzAngles z = zyz_angles(m);
    return u_gate(q, z.theta, z.phi, z.lambda);
}

inline Mat2 rx(double t) {
    using namespace std::complex_literals;
    Mat2 m;
    m << std::cos(t / 2), -1i * std::sin(t / 2), -1i * std::sin(t / 2), std::cos(t / 2);
    return m;
}
inline Mat2 ry(double t) {
    Mat2 m;
    m << std::cos(t / 2), -std::sin(t / 2), std::sin(t / 2), std::cos(t / 2);
    return m;
}
inline Mat2 rz(double t) {
    Mat2 m = Mat2::Zero();
    m(0, 0) = std::polar(1.0, -t / 2);
    m(1, 1) = std::polar(1.0, t / 2);
    return m;
}
inline Mat2 hadamard() { return u_matrix(std::numbers::pi / 2, 0, std::numbers::pi); }

/// Entangler skeletons on qubits (0, 1) whose local class covers the given coefficients.
inline std::vector<Gate> kak_template(int k, const Canonical& raw, const Canonical& reduced) {
    const Gate cz = make_gate("cz", {0, 1});
    switch (k) {
        case 0:
            return {};
        case 1:
            return {cz};
        case 2:
            return {cz, u_from(rx(-2 * reduced.a), 0), u_from(rx(-2 * reduced.b), 1), cz};
        default: {
            // CX(1->0) . (Rz(t1) x Ry(t2)) . CX(0->1) . (I x Ry(t3)) . CX(1->0),
            // each CX written as CZ conjugated by Hadamards on its target.
            const double h = std::numbers::pi / 2;
            const double t1 = 2 * raw.c + h, t2 = 2 * raw.a + h, t3 = 2 * raw.b + h;
            return {u_from(hadamard(), 0),
                    cz,
                    u_from(rz(t1) * hadamard(), 0),
                    u_from(hadamard() * ry(t2), 1),
                    cz,
                    u_from(ry(t3) * hadamard(), 1),
                    u_from(hadamard(), 0),
                    cz,
                    u_from(hadamard(), 0)};
        }
    }
}

/// Writes U = phase * L1 V L2 with L1, L2 local, returning gates for
/// L2, then the template, then L1.
inline std::optional<std::vector<Gate>> align_to_template(const Mat4& u, const KakCore& cu,
                                                          std::vector<Gate> tmpl) {
    const Mat4 v = block_unitary(tmpl);
    const KakCore cv = kak_core(v);

    std::array<int, 4> perm = {0, 1, 2, 3}, best_perm = perm;
    double best = 1e300;
    int best_sign = 1;
    do {
        for (int s : {1, -1}) {
            double e = 0;
            for (int k = 0; k < 4; ++k) e = std::max(e, std::abs(cu.d[k] - double(s) * cv.d[perm[k]]));
            if (e < best) best = e, best_perm = perm, best_sign = s;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (best > 1e-6) return std::nullopt;

    using namespace std::complex_literals;
    const cplx sqrt_w = best_sign == 1 ? cplx(1) : cplx(1i);
    Eigen::Vector4cd delta_u, delta_v;
    Eigen::Matrix4d pv;
    for (int k = 0; k < 4; ++k) {
        delta_u[k] = std::sqrt(cu.d[k]);
        delta_v[k] = delta_u[k] / sqrt_w;
        pv.col(k) = cv.p.col(best_perm[k]);
    }
    Eigen::Matrix4d k1u = orthogonal_factor(cu.ub, cu.p, delta_u);
    Eigen::Matrix4d k1v = orthogonal_factor(cv.ub, pv, delta_v);
    Eigen::Matrix4d o1 = k1u * k1v.transpose();
    Eigen::Matrix4d o2 = pv * cu.p.transpose();
    if (o1.determinant() < 0) {
        Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
        f(0, 0) = -1;
        o1 = k1u * f * k1v.transpose();
        o2 = pv * f * cu.p.transpose();
    }
    const Mat4& b = magic_basis();
    Mat4 l1 = b * o1.cast<cplx>() * b.adjoint();
    Mat4 l2 = b * o2.cast<cplx>() * b.adjoint();
    auto [a1, b1] = tensor_factor(l1);
    auto [a2, b2] = tensor_factor(l2);

    std::vector<Gate> out;
    out.push_back(u_from(a2, 0));
    out.push_back(u_from(b2, 1));
    for (Gate& g : tmpl) out.push_back(std::move(g));
    out.push_back(u_from(a1, 0));
    out.push_back(u_from(b1, 1));
    out = merge_single_qubit_runs(out);
    if (phase_distance(block_unitary(out), u) > kKakTol) return std::nullopt;
    return out;
}

inline std::vector<Gate> remap(std::vector<Gate> gates, int a, int b) {
    for (Gate& g : gates)
        for (int& q : g.qubits) q = (q == 0) ? a : b;
    return gates;
}

}  // namespace detail

/// Weyl-chamber interaction coefficients (pi/4 >= a >= b >= |c|).
inline std::array<double, 3> weyl_coordinates(const Mat4& u) {
    auto w = detail::weyl_reduce(detail::interaction_coefficients(detail::kak_core(u).d));
    return {w.a, w.b, w.c};
}

/// Synthesizes `u` with single-qubit `u` gates and at most three `entangler`
/// gates (cz or cz_db), on qubits (a, b) with a as the most significant.
inline std::vector<Gate> kak_decompose(const Mat4& u, const std::string& entangler = "cz", int qa = 0,
                                       int qb = 1) {
    if (entangler != "cz" && entangler != "cz_db")
        throw Error("kak entangler must be cz or cz_db, got '" + entangler + "'");
    if (!is_unitary(u, kEquivalenceTol)) throw Error("kak_decompose: matrix is not unitary");
    const detail::KakCore core = detail::kak_core(u);
    const detail::Canonical raw = detail::interaction_coefficients(core.d);
    const detail::Canonical red = detail::weyl_reduce(raw);
    // coordinates this close to a face change U by less than the reconstruction tolerance
    for (int k = detail::entangler_count(red, 0.1 * kKakTol); k <= 3; ++k) {
        auto out = detail::align_to_template(u, core, detail::kak_template(k, raw, red));
        if (!out) continue;
        for (Gate& g : *out)
            if (g.name == "cz") g.name = entangler;
        return detail::remap(std::move(*out), qa, qb);
    }
    throw Error("kak_decompose: reconstruction failed");
}

inline int count_two_qubit(std::span<const Gate> gates) {
    return static_cast<int>(std::count_if(gates.begin(), gates.end(),
                                          [](const Gate& g) { return g.is_two_qubit(); }));
}

}  // namespace qadapt
