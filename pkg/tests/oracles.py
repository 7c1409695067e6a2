"""Independent reference implementations used to pin expected values.

Everything here is written for clarity, not speed, and deliberately does
not share code with the package: excluded sums and minima are computed
directly per edge (O(d^2) per node), parity-check matrices are expanded
as dense arrays, and ML decoding enumerates the whole codebook. Tests
compare the fast implementations against these.
"""

import numpy as np


# ----------------------------------------------------------------------
# dense QC expansion
# ----------------------------------------------------------------------

def expand_qc(shift_rows, z):
    """Dense H from a grid of circulant shifts (None for an empty block)."""
    mb = len(shift_rows)
    nb = len(shift_rows[0])
    H = np.zeros((mb * z, nb * z), dtype=np.uint8)
    eye = np.eye(z, dtype=np.uint8)
    for r, row in enumerate(shift_rows):
        for c, s in enumerate(row):
            if s is None:
                continue
            H[r * z:(r + 1) * z, c * z:(c + 1) * z] = np.roll(eye, int(s), axis=0)
    return H


def qc_edge_list(shift_rows, z):
    """(cn, vn) pairs in entry-major, offset-minor order."""
    edges = []
    for r, row in enumerate(shift_rows):
        for c, s in enumerate(row):
            if s is None:
                continue
            for j in range(z):
                edges.append((r * z + (j + int(s)) % z, c * z + j))
    return edges


def dense_from_graph(graph):
    H = np.zeros((graph.num_cns, graph.num_vns), dtype=np.uint8)
    H[graph.edge_cn, graph.edge_vn] = 1
    return H


# ----------------------------------------------------------------------
# GF(2) linear algebra and exhaustive ML decoding
# ----------------------------------------------------------------------

def gf2_nullspace(H):
    """Basis of the right nullspace of H over GF(2), shape (k, n)."""
    H = np.array(H, dtype=np.uint8) % 2
    m, n = H.shape
    A = H.copy()
    pivots = []
    r = 0
    for c in range(n):
        rows = np.nonzero(A[r:, c])[0]
        if rows.size == 0:
            continue
        p = r + rows[0]
        A[[r, p]] = A[[p, r]]
        for i in range(m):
            if i != r and A[i, c]:
                A[i] ^= A[r]
        pivots.append(c)
        r += 1
        if r == m:
            break
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(n, dtype=np.uint8)
        v[f] = 1
        for i, c in enumerate(pivots):
            if A[i, f]:
                v[c] = 1
        basis.append(v)
    return np.array(basis, dtype=np.uint8).reshape(len(basis), n)


def all_codewords(H):
    """Every codeword of H as a (2^k, n) array. Keep k small."""
    basis = gf2_nullspace(H)
    k, n = basis.shape
    words = np.zeros((1 << k, n), dtype=np.uint8)
    for idx in range(1 << k):
        acc = np.zeros(n, dtype=np.uint8)
        for b in range(k):
            if (idx >> b) & 1:
                acc ^= basis[b]
        words[idx] = acc
    return words


def ml_decode_bpsk(H, llr):
    """Exhaustive maximum-likelihood word for one LLR vector."""
    words = all_codewords(H)
    # ML under BPSK maximizes sum (1-2c_i) llr_i, i.e. minimizes the
    # total LLR mass on the support of c
    costs = words @ np.asarray(llr, dtype=np.float64)
    return words[int(np.argmin(costs))]


def syndrome_ref(H, bits):
    return (np.asarray(H, dtype=np.int64) @ np.asarray(bits, dtype=np.int64)) % 2


# ----------------------------------------------------------------------
# reference min-sum decoder (single frame, direct excluded ops)
# ----------------------------------------------------------------------

def _sgn(x):
    return -1.0 if x < 0.0 else 1.0


def ref_decode_minsum(graph, llr, chw, cw_sat, cw_unsat, quant, num_iters):
    """Plain per-edge decoder with direct exclusion.

    llr: (n,) raw channel values; chw/cw_sat/cw_unsat: dense (lbar, n) and
    (lbar, E) weight tables; quant: callable applied wherever the package
    quantizes. Returns a dict of per-iteration lists.
    """
    n, E = graph.num_vns, graph.num_edges
    ev, ec = graph.edge_vn, graph.edge_cn
    vn_edges = [sorted(np.nonzero(ev == v)[0]) for v in range(n)]
    cn_edges = [sorted(np.nonzero(ec == c)[0]) for c in range(graph.num_cns)]

    lam = np.array([float(quant(x)) for x in llr])
    cn_out = np.zeros(E)
    hist = {"vn_msgs": [], "cn_msgs": [], "unsat": [], "beliefs": [], "hard": []}

    for l in range(num_iters):
        msg = np.zeros(E)
        for e in range(E):
            v = ev[e]
            ex = 0.0
            for e2 in vn_edges[v]:
                if e2 != e:
                    ex += cn_out[e2]
            msg[e] = float(quant(chw[l, v] * lam[v] + ex))

        unsat = np.zeros(graph.num_cns, dtype=bool)
        for c, edges in enumerate(cn_edges):
            p = 1.0
            for e in edges:
                p *= _sgn(msg[e])
            unsat[c] = p < 0.0

        new_out = np.zeros(E)
        for c, edges in enumerate(cn_edges):
            for e in edges:
                mag = np.inf
                sgn = 1.0
                for e2 in edges:
                    if e2 == e:
                        continue
                    sgn *= _sgn(msg[e2])
                    a = abs(msg[e2])
                    if a < mag:
                        mag = a
                w = cw_unsat[l, e] if unsat[c] else cw_sat[l, e]
                new_out[e] = float(quant((w * sgn) * mag))
        cn_out = new_out

        belief = np.zeros(n)
        for v in range(n):
            acc = 0.0
            for e in vn_edges[v]:
                acc += cn_out[e]
            belief[v] = float(quant(lam[v] + acc))
        hard = (belief < 0).astype(np.uint8)

        hist["vn_msgs"].append(msg)
        hist["cn_msgs"].append(cn_out.copy())
        hist["unsat"].append(unsat)
        hist["beliefs"].append(belief)
        hist["hard"].append(hard)
    return hist


def spc_extrinsic(llrs_others):
    """Exact single-parity-check extrinsic LLR, 2 atanh(prod tanh(x/2))."""
    p = 1.0
    for x in llrs_others:
        p *= np.tanh(0.5 * x)
    p = min(max(p, -0.9999999999999999), 0.9999999999999999)
    return 2.0 * np.arctanh(p)


# ----------------------------------------------------------------------
# finite differences
# ----------------------------------------------------------------------

def fd_grad(f, x, eps=1e-6):
    """Central-difference gradient of a scalar function of a flat array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += eps
        xm.flat[i] -= eps
        g.flat[i] = (f(xp) - f(xm)) / (2 * eps)
    return g
