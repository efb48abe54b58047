"""Independent reference implementations used as test oracles.

Nothing here touches the tape engine: every oracle works on plain numpy
arrays with explicit loops so that it shares no code with the library.
"""

import math

import numpy as np


def numeric_grad(f, x, eps=1e-5):
    """Central differences of scalar ``f`` at every coordinate of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        hi = x.copy()
        lo = x.copy()
        hi[i] += eps
        lo[i] -= eps
        g[i] = (f(hi) - f(lo)) / (2 * eps)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def quadrant_oracle(positions):
    """Double loop over ordered pairs -> dict relation name -> n x n int matrix."""
    n = len(positions)
    out = {k: np.zeros((n, n), dtype=int) for k in ("top_left", "top_right", "bottom_left", "bottom_right")}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dx = positions[j][0] - positions[i][0]
            dy = positions[j][1] - positions[i][1]
            vert = "top" if dy >= 0 else "bottom"
            horiz = "right" if dx >= 0 else "left"
            out[f"{vert}_{horiz}"][i, j] = 1
    return out


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def lstm_oracle(X, W, U, b):
    """Scalar-loop LSTM.  ``X`` is (T, n, d); W/U/b are dicts keyed by gate
    ``i, f, o, g``.  Returns hidden states (T, n, h)."""
    T, n, d = X.shape
    hdim = U["i"].shape[0]
    H = np.zeros((T, n, hdim))
    for node in range(n):
        h = [0.0] * hdim
        c = [0.0] * hdim
        for t in range(T):
            new_h, new_c = [], []
            for k in range(hdim):
                pre = {}
                for gate in "ifog":
                    s = b[gate][k]
                    for a in range(d):
                        s += X[t, node, a] * W[gate][a, k]
                    for a in range(hdim):
                        s += h[a] * U[gate][a, k]
                    pre[gate] = s
                i, f, o = _sig(pre["i"]), _sig(pre["f"]), _sig(pre["o"])
                g = math.tanh(pre["g"])
                ck = f * c[k] + i * g
                new_c.append(ck)
                new_h.append(o * math.tanh(ck))
            h, c = new_h, new_c
            H[t, node] = h
    return H


def attention_oracle(C, heads):
    """Loop implementation over nodes, heads, query steps.  ``C`` is (T, n, d);
    ``heads`` is a list of (Wq, Wk, Wv).  Returns (T, n, M * d_v)."""
    T, n, _ = C.shape
    outs = []
    for Wq, Wk, Wv in heads:
        dk = Wq.shape[1]
        Z = np.zeros((T, n, Wv.shape[1]))
        for node in range(n):
            q = C[:, node] @ Wq
            k = C[:, node] @ Wk
            v = C[:, node] @ Wv
            for t in range(T):
                scores = [sum(q[t, a] * k[s, a] for a in range(dk)) / math.sqrt(dk) for s in range(T)]
                m = max(scores)
                w = [math.exp(x - m) for x in scores]
                tot = sum(w)
                for s in range(T):
                    Z[t, node] += (w[s] / tot) * v[s]
        outs.append(Z)
    return np.concatenate(outs, axis=-1)


def mrgcn_oracle(positions, H, W_rel, W_self):
    """Per-node loop: average neighbour features per quadrant, project, sum."""
    rel = quadrant_oracle(positions)
    n = len(positions)
    out = np.zeros((n, W_self.shape[1]))
    for i in range(n):
        acc = H[i] @ W_self
        for name, A in rel.items():
            nbrs = [j for j in range(n) if A[i, j]]
            if nbrs:
                mean = sum(H[j] for j in nbrs) / len(nbrs)
                acc = acc + mean @ W_rel[name]
        out[i] = np.maximum(acc, 0.0)
    return out


def random_sequence(rng, n_vehicles=3, n_landmarks=4, T=4, spread=20.0):
    """Random labelled sequence with shuffled node ids."""
    from maneuver_graph.scene_graph import NodeType, SceneSequence

    n = n_vehicles + n_landmarks
    ids = [int(i) for i in rng.permutation(np.arange(100, 100 + 3 * n))[:n]]
    types = np.array([NodeType.VEHICLE] * n_vehicles + [NodeType.LANDMARK] * n_landmarks, dtype=np.int8)
    start = rng.uniform(-spread, spread, size=(n, 2))
    vel = rng.normal(0, 1.0, size=(n, 2))
    pos = np.stack([start + t * vel for t in range(T)])
    labels = {ids[k]: int(rng.integers(0, 6)) for k in range(n_vehicles)}
    return SceneSequence(tuple(ids), types, pos, labels)
