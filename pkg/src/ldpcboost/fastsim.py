"""Compiled per-frame decoding kernels for Monte-Carlo runs.

These kernels exist purely for speed; they implement exactly the update
rules of decoder.decode() and are locked to it by bit-exactness tests.
Float sums accumulate in the canonical edge order, the two-minimum scan
keeps the first occurrence, and quantization uses the same round-to-even
grid. Min-sum results are bit-identical to the reference path. The
sum-product kernel is not: libm tanh and numpy's vectorized tanh can
round differently, and atanh amplifies that by 1/(1-P^2) when the check
product P saturates, so beliefs may drift by ~1e-4 after a few
iterations even though hard decisions agree.

Frames inside a batch are independent, so results do not depend on the
number of threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from numba import njit, prange, get_num_threads, set_num_threads

from .codes import TannerGraph
from .quantize import Quantizer
from .weights import WeightSet

_MAX_THREADS = get_num_threads()


def set_workers(count: int | None):
    """Pin the number of kernel threads (capped at the launch-time limit)."""
    if count is None:
        return
    set_num_threads(max(1, min(int(count), _MAX_THREADS)))


@njit(cache=True, inline="always")
def _quant(x, qmode, qstep, qmax):
    if qmode == 0:
        return x
    if qmode == 1:
        x = np.rint(x / qstep) * qstep
    if x > qmax:
        x = qmax
    elif x < -qmax:
        x = -qmax
    return x


@njit(cache=True, parallel=True)
def _run_minsum(llr, edge_vn, vn_order, vn_starts, cn_order, cn_starts,
                chw, cw_sat, cw_unsat, qmode, qstep, qmax, lbar, early_stop,
                out_llr, hard, success, iters):
    B, n = llr.shape
    E = edge_vn.shape[0]
    mcn = cn_starts.shape[0] - 1
    for b in prange(B):
        lb = np.empty(n)
        for v in range(n):
            lb[v] = _quant(llr[b, v], qmode, qstep, qmax)
        mhat = np.zeros(E)
        msg = np.empty(E)
        vsum = np.empty(n)
        hd = np.zeros(n, np.uint8)
        ob = np.zeros(n)
        it_used = lbar
        ok_final = False
        for l in range(lbar):
            for v in range(n):
                acc = 0.0
                for k in range(vn_starts[v], vn_starts[v + 1]):
                    acc += mhat[vn_order[k]]
                vsum[v] = acc
            for e in range(E):
                v = edge_vn[e]
                x = chw[l, v] * lb[v] + (vsum[v] - mhat[e])
                msg[e] = _quant(x, qmode, qstep, qmax)
            for c in range(mcn):
                min1 = np.inf
                min2 = np.inf
                a1 = -1
                sg = 1.0
                for k in range(cn_starts[c], cn_starts[c + 1]):
                    e = cn_order[k]
                    val = msg[e]
                    if val < 0.0:
                        sg = -sg
                    av = -val if val < 0.0 else val
                    if av < min1:
                        min2 = min1
                        min1 = av
                        a1 = e
                    elif av < min2:
                        min2 = av
                unsat = sg < 0.0
                for k in range(cn_starts[c], cn_starts[c + 1]):
                    e = cn_order[k]
                    w = cw_unsat[l, e] if unsat else cw_sat[l, e]
                    s_in = -1.0 if msg[e] < 0.0 else 1.0
                    mag = min2 if e == a1 else min1
                    mhat[e] = _quant((w * (sg * s_in)) * mag, qmode, qstep, qmax)
            if early_stop or l == lbar - 1:
                for v in range(n):
                    acc = 0.0
                    for k in range(vn_starts[v], vn_starts[v + 1]):
                        acc += mhat[vn_order[k]]
                    x = _quant(lb[v] + acc, qmode, qstep, qmax)
                    ob[v] = x
                    hd[v] = 1 if x < 0.0 else 0
                ok = True
                for c in range(mcn):
                    p = np.uint8(0)
                    for k in range(cn_starts[c], cn_starts[c + 1]):
                        p ^= hd[edge_vn[cn_order[k]]]
                    if p == 1:
                        ok = False
                        break
                if ok:
                    it_used = l + 1
                    ok_final = True
                    break
        for v in range(n):
            out_llr[b, v] = ob[v]
            hard[b, v] = hd[v]
        success[b] = ok_final
        iters[b] = it_used


@njit(cache=True, parallel=True)
def _run_sumproduct(llr, edge_vn, vn_order, vn_starts, cn_order, cn_starts,
                    chw, cw_sat, cw_unsat, clamp, lbar, early_stop,
                    out_llr, hard, success, iters):
    B, n = llr.shape
    E = edge_vn.shape[0]
    mcn = cn_starts.shape[0] - 1
    dmax = 0
    for c in range(mcn):
        d = cn_starts[c + 1] - cn_starts[c]
        if d > dmax:
            dmax = d
    for b in prange(B):
        lb = llr[b].copy()
        mhat = np.zeros(E)
        msg = np.empty(E)
        vsum = np.empty(n)
        hd = np.zeros(n, np.uint8)
        ob = np.zeros(n)
        t_loc = np.empty(dmax)
        pre = np.empty(dmax)
        suf = np.empty(dmax)
        it_used = lbar
        ok_final = False
        for l in range(lbar):
            for v in range(n):
                acc = 0.0
                for k in range(vn_starts[v], vn_starts[v + 1]):
                    acc += mhat[vn_order[k]]
                vsum[v] = acc
            for e in range(E):
                v = edge_vn[e]
                msg[e] = chw[l, v] * lb[v] + (vsum[v] - mhat[e])
            for c in range(mcn):
                lo, hi = cn_starts[c], cn_starts[c + 1]
                d = hi - lo
                sg = 1.0
                for i in range(d):
                    val = msg[cn_order[lo + i]]
                    if val < 0.0:
                        sg = -sg
                    if val > clamp:
                        val = clamp
                    elif val < -clamp:
                        val = -clamp
                    t_loc[i] = math.tanh(0.5 * val)
                unsat = sg < 0.0
                pre[0] = 1.0
                for i in range(1, d):
                    pre[i] = pre[i - 1] * t_loc[i - 1]
                suf[d - 1] = 1.0
                for i in range(d - 2, -1, -1):
                    suf[i] = suf[i + 1] * t_loc[i + 1]
                for i in range(d):
                    e = cn_order[lo + i]
                    w = cw_unsat[l, e] if unsat else cw_sat[l, e]
                    mhat[e] = w * (2.0 * math.atanh(pre[i] * suf[i]))
            if early_stop or l == lbar - 1:
                for v in range(n):
                    acc = 0.0
                    for k in range(vn_starts[v], vn_starts[v + 1]):
                        acc += mhat[vn_order[k]]
                    x = lb[v] + acc
                    ob[v] = x
                    hd[v] = 1 if x < 0.0 else 0
                ok = True
                for c in range(mcn):
                    p = np.uint8(0)
                    for k in range(cn_starts[c], cn_starts[c + 1]):
                        p ^= hd[edge_vn[cn_order[k]]]
                    if p == 1:
                        ok = False
                        break
                if ok:
                    it_used = l + 1
                    ok_final = True
                    break
        for v in range(n):
            out_llr[b, v] = ob[v]
            hard[b, v] = hd[v]
        success[b] = ok_final
        iters[b] = it_used


@dataclass
class FastResult:
    """Per-frame outputs of a compiled decoding run."""

    output: np.ndarray      # (B, n) final beliefs
    hard: np.ndarray        # (B, n) uint8
    success: np.ndarray     # (B,) zero-syndrome flag
    iterations: np.ndarray  # (B,)

    def frame_errors(self, info_mask: np.ndarray | None = None) -> np.ndarray:
        """True where the decoded word differs from all-zero (masked)."""
        bits = self.hard if info_mask is None else self.hard[:, info_mask]
        return bits.any(axis=1)

    def bit_errors(self, info_mask: np.ndarray | None = None) -> np.ndarray:
        bits = self.hard if info_mask is None else self.hard[:, info_mask]
        return bits.sum(axis=1, dtype=np.int64)


def run_decoder(graph: TannerGraph, llr_batch: np.ndarray, weight_set: WeightSet,
                quantizer: Quantizer | None = None, num_iters: int | None = None,
                early_stop: bool = True, algorithm: str = "minsum",
                materialized=None) -> FastResult:
    """Decode a batch of frames with the compiled kernel.

    Semantics match decoder.decode() exactly (same weights, quantizer and
    early-stop rule); only per-iteration traces are unavailable here.
    """
    q = weight_set.quantizer if quantizer is None else quantizer
    lbar = weight_set.total_iters if num_iters is None else int(num_iters)
    if lbar < 1:
        raise ValueError("need at least one decoding iteration")
    if lbar > weight_set.total_iters:
        raise ValueError(f"asked for {lbar} iterations, weight set has {weight_set.total_iters}")
    llr_batch = np.ascontiguousarray(np.atleast_2d(np.asarray(llr_batch, dtype=np.float64)))
    B = llr_batch.shape[0]
    chw, cw_sat, cw_unsat = (weight_set.materialize(graph, lbar)
                             if materialized is None else materialized)
    out = np.empty((B, graph.num_vns))
    hard = np.empty((B, graph.num_vns), dtype=np.uint8)
    success = np.empty(B, dtype=np.bool_)
    iters = np.empty(B, dtype=np.int32)
    if algorithm == "minsum":
        qmode = {"float": 0, "uniform": 1, "clip": 2}[q.mode]
        _run_minsum(llr_batch, graph.edge_vn, graph.vn_order, graph.vn_starts,
                    graph.cn_order, graph.cn_starts, chw, cw_sat, cw_unsat,
                    qmode, q.step, q.max_magnitude, lbar, early_stop,
                    out, hard, success, iters)
    elif algorithm == "sumproduct":
        if q.mode != "float":
            raise ValueError("sum-product decoding is float only")
        _run_sumproduct(llr_batch, graph.edge_vn, graph.vn_order, graph.vn_starts,
                        graph.cn_order, graph.cn_starts, chw, cw_sat, cw_unsat,
                        30.0, lbar, early_stop, out, hard, success, iters)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return FastResult(output=out, hard=hard, success=success, iterations=iters)
