"""Regenerate the conic conformance fixtures with reference optima from cvxpy/Clarabel.

usage: python3 generate.py [name=problem.json ...]

Each extra argument adds a fixture from a ccopf-conic/1 dump (for instance one written by the
formulation module). The synthetic fixtures are rebuilt every time.
"""

import json
import os
import sys

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

HERE = os.path.dirname(os.path.abspath(__file__))


def dump_matrix(M):
    M = sp.coo_matrix(M)
    return {"rows": M.shape[0], "cols": M.shape[1],
            "triplets": [[int(r), int(c), float(v)] for r, c, v in zip(M.row, M.col, M.data)]}


def problem_doc(c, A, b, G, h, cones, offset=0.0):
    return {"format": "ccopf-conic/1", "c": list(map(float, c)), "A": dump_matrix(A), "b": list(map(float, b)),
            "G": dump_matrix(G), "h": list(map(float, h)), "cones": cones, "objective_offset": offset}


def load_matrix(j):
    rows, cols = j["rows"], j["cols"]
    M = sp.lil_matrix((rows, cols))
    for r, c, v in j["triplets"]:
        M[r, c] += v
    return M.tocsr()


def reference(doc):
    c = np.array(doc["c"])
    n = len(c)
    A = load_matrix(doc["A"])
    G = load_matrix(doc["G"])
    b = np.array(doc["b"])
    h = np.array(doc["h"])
    x = cp.Variable(n)
    cons = []
    if A.shape[0]:
        cons.append(A @ x == b)
    off = 0
    for k in doc["cones"]:
        d = k["dim"]
        s = h[off:off + d] - G[off:off + d] @ x
        if k["type"] == "nonneg":
            cons.append(s >= 0)
        else:
            cons.append(cp.SOC(s[0], s[1:]))
        off += d
    prob = cp.Problem(cp.Minimize(c @ x + doc.get("objective_offset", 0.0)), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    status = {"optimal": "optimal", "infeasible": "infeasible", "unbounded": "unbounded"}.get(prob.status)
    if status is None:
        raise RuntimeError("reference solve ended with " + prob.status)
    expect = {"status": status}
    if status == "optimal":
        expect["objective"] = float(prob.value)
        expect["x"] = [float(v) for v in x.value]
    return expect


def synthetic():
    out = {}
    one = sp.csr_matrix((0, 1))
    # min x s.t. x >= 1
    out["lp_lower_bound"] = problem_doc([1.0], one, [], [[-1.0]], [-1.0], [{"type": "nonneg", "dim": 1}])
    # min t s.t. |(3, 4)| <= t
    out["soc_norm"] = problem_doc([1.0], one, [], [[-1.0], [0.0], [0.0]], [0.0, 3.0, 4.0], [{"type": "soc", "dim": 3}])
    # x >= 1 and x <= 0
    out["lp_infeasible"] = problem_doc([1.0], one, [], [[-1.0], [1.0]], [-1.0, 0.0], [{"type": "nonneg", "dim": 2}])
    # min -x s.t. x >= 0
    out["lp_unbounded"] = problem_doc([-1.0], one, [], [[-1.0]], [0.0], [{"type": "nonneg", "dim": 1}])
    # A repeated balance row and a variable fixed by an equality, for presolve.
    out["presolve_duplicate_and_fixed"] = problem_doc(
        [1.0, 2.0, 1.0], [[1, 1, 1], [1, 1, 1], [0, 0, 1]], [2.0, 2.0, 0.5], -np.eye(3), [0, 0, 0],
        [{"type": "nonneg", "dim": 3}])

    rng = np.random.default_rng(2024)
    # min 1/2 x'Px + q'x over a box, through the epigraph cone (t + 1/2, t - 1/2, R x).
    n = 4
    R = rng.normal(size=(n, n))
    q = rng.normal(size=n)
    G = np.zeros((2 + n + 2 * n, n + 1))
    h = np.zeros(2 + n + 2 * n)
    G[0, n], h[0] = -1.0, 0.5
    G[1, n], h[1] = -1.0, -0.5
    G[2:2 + n, :n] = -R
    G[2 + n:2 + 2 * n, :n] = np.eye(n)
    h[2 + n:2 + 2 * n] = 0.4
    G[2 + 2 * n:, :n] = -np.eye(n)
    h[2 + 2 * n:] = 0.4
    out["qp_epigraph_box"] = problem_doc(list(q) + [1.0], sp.csr_matrix((0, n + 1)), [], G, h,
                                         [{"type": "soc", "dim": 2 + n}, {"type": "nonneg", "dim": 2 * n}])

    for k in range(3):
        n, m, p = 6, 3, 2
        c = rng.normal(size=n)
        A = rng.normal(size=(p, n))
        x0 = rng.normal(size=n) * 0.3
        b = A @ x0
        blocks, hs, cones = [], [], []
        for _ in range(m):
            Fi = rng.normal(size=(3, n))
            gi = rng.normal(size=3)
            # |F x + g| <= e'x + f with slack at x0
            e = rng.normal(size=n) * 0.1
            f = np.linalg.norm(Fi @ x0 + gi) - e @ x0 + 1.0
            blocks.append(np.vstack([-e, -Fi]))
            hs.append(np.concatenate([[f], gi]))
            cones.append({"type": "soc", "dim": 4})
        # |x| <= 5 keeps it bounded
        blocks.append(np.vstack([np.zeros(n), -np.eye(n)]))
        hs.append(np.concatenate([[5.0], np.zeros(n)]))
        cones.append({"type": "soc", "dim": n + 1})
        out["socp_random_%d" % k] = problem_doc(c, A, b, np.vstack(blocks), np.concatenate(hs), cones)
    return out


def main():
    fixtures = synthetic()
    for arg in sys.argv[1:]:
        name, path = arg.split("=", 1)
        with open(path) as f:
            fixtures[name] = json.load(f)
    for name, doc in fixtures.items():
        expect = reference(doc)
        with open(os.path.join(HERE, name + ".json"), "w") as f:
            json.dump({"name": name, "problem": doc, "expect": expect}, f, indent=1)
            f.write("\n")
        print("wrote", name)


if __name__ == "__main__":
    main()
