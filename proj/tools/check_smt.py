#!/usr/bin/env python3
"""Solve the emitted SMT-LIB model with z3 and compare against the internal solver."""
import argparse
import json
import math
import os
import random
import subprocess
import sys
import tempfile

import z3


def random_circuit(rng, nq, ngates):
    lines = [f"qubits {nq}"]
    for _ in range(ngates):
        kind = rng.choice(["u", "cx", "cx", "cz", "swap"])
        if kind == "u":
            q = rng.randrange(nq)
            a = [rng.uniform(-math.pi, math.pi) for _ in range(3)]
            lines.append(f"u {q} {a[0]:.6f} {a[1]:.6f} {a[2]:.6f}")
        else:
            a, b = rng.sample(range(nq), 2)
            lines.append(f"{kind} {a} {b}")
    return "\n".join(lines) + "\n"


def bind_objective(script):
    # name the maximized term so its value can be read back from the model
    start = script.index("(maximize ")
    depth = 0
    for i in range(start, len(script)):
        depth += {"(": 1, ")": -1}.get(script[i], 0)
        if depth == 0:
            break
    term = script[start + len("(maximize "):i]
    bound = f"(declare-const objective_value Real)\n(assert (= objective_value {term}))\n(maximize objective_value)"
    return script[:start] + bound + script[i + 1:]


def z3_optimum(script):
    opt = z3.Optimize()
    opt.from_string(bind_objective(script))
    if opt.check() != z3.sat:
        raise RuntimeError("z3 did not return sat")
    model = opt.model()
    val = model.eval(z3.Real("objective_value"), model_completion=True)
    if z3.is_rational_value(val):
        return float(val.numerator_as_long()) / float(val.denominator_as_long())
    return float(val.as_decimal(17).rstrip("?"))


def run(cmd):
    return subprocess.run(cmd, check=True, capture_output=True, text=True).stdout


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("qadapt")
    ap.add_argument("--count", type=int, default=12)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--tol", type=float, default=1e-6)
    ap.add_argument("circuits", nargs="*")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    worst = 0.0
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        files = list(args.circuits)
        for i in range(args.count):
            path = os.path.join(tmp, f"r{i}.qc")
            with open(path, "w") as f:
                f.write(random_circuit(rng, rng.choice([2, 3]), rng.randrange(4, 11)))
            files.append(path)
        summary = os.path.join(tmp, "summary.json")
        for path in files:
            for cost in ["D0", "D1"]:
                for objective in ["fidelity", "idle", "combined"]:
                    base = ["--cost", cost, "--objective", objective]
                    script = run([args.qadapt, "emit-smt", path] + base)
                    run([args.qadapt, "adapt", path, "--out", os.devnull, "--summary", summary] + base)
                    with open(summary) as f:
                        internal = json.load(f)["objective_value"]
                    ref = z3_optimum(script)
                    diff = abs(ref - internal)
                    worst = max(worst, diff)
                    if diff > args.tol * max(1.0, abs(ref)):
                        failures += 1
                        print(f"mismatch {os.path.basename(path)} {cost} {objective}: z3 {ref} internal {internal}")
        print(f"{len(files) * 6} models, max |z3 - internal| = {worst:.3e}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
