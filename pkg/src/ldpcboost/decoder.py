"""Weighted min-sum / sum-product decoding with recordable traces.

This is the reference batch implementation used for training and for any
run that needs per-iteration state. It is written so that the compiled
Monte-Carlo kernel in fastsim.py produces bit-identical results: float
sums walk edges in the graph's canonical order, magnitudes come from a
first-occurrence two-minimum scan, and both paths share one quantizer.

Update rules per iteration, for edge (v, c):

  VN:  msg(v->c) = chw_v * llr_v + sum of cn_msg(c'->v) over c' != c
  CN:  cn_msg(c->v) = w * prod of signs(v'->c, v' != v) * min |msg(v'->c)|
  out: belief_v = llr_v + sum of cn_msg(c->v) over all c

where w is the satisfied or unsatisfied check weight of the edge for this
iteration, chosen by the sign product of the incoming messages. In
quantized mode every computed message and belief is re-quantized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codes import TannerGraph
from .quantize import Quantizer
from .weights import WeightSet

_INF = np.float64(np.inf)


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def vn_update(graph: TannerGraph, llr: np.ndarray, cn_msgs: np.ndarray,
              chw_vn: np.ndarray) -> np.ndarray:
    """Weighted variable-node update, before quantization.

    llr: (B, n) channel LLRs, cn_msgs: (B, E) previous CN messages,
    chw_vn: (n,) channel weight per variable node. Returns (B, E).
    """
    llr, s1 = _as_batch(llr)
    cn_msgs, s2 = _as_batch(cn_msgs)
    sums = graph.vn_sums(cn_msgs)
    ev = graph.edge_vn
    out = chw_vn[ev] * llr[:, ev] + (sums[:, ev] - cn_msgs)
    return out[0] if (s1 and s2) else out


def classify_checks(graph: TannerGraph, vn_msgs: np.ndarray) -> np.ndarray:
    """Unsatisfied-check flags from the signs of the incoming VN messages.

    A check node is unsatisfied iff the product of incoming message signs
    is negative, with sign(0) counted as +1. Returns (B, m) bool.
    """
    vn_msgs, squeeze = _as_batch(vn_msgs)
    neg = vn_msgs < 0.0
    padded = neg[:, graph.cn_slots] & graph.cn_slot_mask
    parity = padded.sum(axis=2) & 1
    out = parity.astype(bool)
    return out[0] if squeeze else out


def cn_update_minsum(graph: TannerGraph, vn_msgs: np.ndarray,
                     cw_edge: np.ndarray) -> tuple[np.ndarray, dict]:
    """Min-sum check-node update with per-edge weights, before quantization.

    Returns the outgoing (B, E) messages and the bookkeeping needed for
    backpropagation: two smallest magnitudes and their edges per CN, the
    total sign product, and the incoming sign pattern.
    """
    vn_msgs, squeeze = _as_batch(vn_msgs)
    B = vn_msgs.shape[0]
    neg = vn_msgs < 0.0
    mags = np.abs(vn_msgs)
    padded = np.where(graph.cn_slot_mask, mags[:, graph.cn_slots], _INF)

    a1_slot = np.argmin(padded, axis=2)
    min1 = np.take_along_axis(padded, a1_slot[:, :, None], axis=2)[:, :, 0]
    np.put_along_axis(padded, a1_slot[:, :, None], _INF, axis=2)
    a2_slot = np.argmin(padded, axis=2)
    min2 = np.take_along_axis(padded, a2_slot[:, :, None], axis=2)[:, :, 0]

    neg_count = (neg[:, graph.cn_slots] & graph.cn_slot_mask).sum(axis=2)
    sign_prod = np.where(neg_count & 1, -1.0, 1.0)

    ec = graph.edge_cn
    at_min = graph.edge_cn_slot[None, :] == a1_slot[:, ec]
    mag_out = np.where(at_min, min2[:, ec], min1[:, ec])
    sgn_in = np.where(neg, -1.0, 1.0)
    excl_sign = sign_prod[:, ec] * sgn_in
    out = (cw_edge * excl_sign) * mag_out

    a1_edge = np.take_along_axis(
        np.broadcast_to(graph.cn_slots, (B,) + graph.cn_slots.shape), a1_slot[:, :, None], axis=2)[:, :, 0]
    a2_edge = np.take_along_axis(
        np.broadcast_to(graph.cn_slots, (B,) + graph.cn_slots.shape), a2_slot[:, :, None], axis=2)[:, :, 0]
    aux = {
        "min1": min1, "min2": min2,
        "a1_edge": a1_edge.astype(np.int32), "a2_edge": a2_edge.astype(np.int32),
        "sign_prod": sign_prod, "neg": neg, "mag_out": mag_out, "excl_sign": excl_sign,
    }
    if squeeze:
        return out[0], aux
    return out, aux


def cn_update_sumproduct(graph: TannerGraph, vn_msgs: np.ndarray, cw_edge: np.ndarray,
                         clamp: float = 30.0) -> tuple[np.ndarray, dict]:
    """Sum-product check-node update (float arithmetic only).

    Incoming magnitudes are clamped to +-clamp before the tanh transform,
    excluded products are formed with exclusive prefix/suffix products, so
    there is no division and zeros are handled exactly.
    """
    vn_msgs, squeeze = _as_batch(vn_msgs)
    clamped = np.clip(vn_msgs, -clamp, clamp)
    t = np.tanh(0.5 * clamped)
    padded = np.where(graph.cn_slot_mask, t[:, graph.cn_slots], 1.0)

    ones = np.ones_like(padded[:, :, :1])
    pre = np.concatenate([ones, np.cumprod(padded, axis=2)[:, :, :-1]], axis=2)
    suf = np.concatenate([np.cumprod(padded[:, :, ::-1], axis=2)[:, :, -2::-1], ones], axis=2)
    excl = pre * suf

    B = vn_msgs.shape[0]
    prod_e = excl[np.arange(B)[:, None], graph.edge_cn[None, :], graph.edge_cn_slot[None, :]]
    out = cw_edge * (2.0 * np.arctanh(prod_e))
    aux = {"t": t, "prod": prod_e, "in_range": np.abs(vn_msgs) <= clamp, "clamp": clamp}
    if squeeze:
        return out[0], aux
    return out, aux


def output_llr(graph: TannerGraph, llr: np.ndarray, cn_msgs: np.ndarray) -> np.ndarray:
    """Posterior LLR: channel LLR plus all incoming CN messages, unweighted."""
    llr, s1 = _as_batch(llr)
    cn_msgs, s2 = _as_batch(cn_msgs)
    out = llr + graph.vn_sums(cn_msgs)
    return out[0] if (s1 and s2) else out


@dataclass
class DecodeTrace:
    """Everything decode() computed, batched over frames.

    Per-iteration lists are indexed relative to start_iter. Optional
    fields are None unless the matching record flag was set.
    """

    llr: np.ndarray                       # (B, n) effective channel LLRs
    num_iters: int                        # absolute forward length
    start_iter: int = 0                   # first computed iteration (0-based)
    algorithm: str = "minsum"

    output: np.ndarray | None = None      # (B, n) final (quantized) beliefs
    output_raw: np.ndarray | None = None
    out_mask: np.ndarray | None = None
    hard: np.ndarray | None = None        # (B, n) uint8
    success: np.ndarray | None = None     # (B,) zero-syndrome flag
    iterations: np.ndarray | None = None  # (B,) iterations actually run
    cn_msgs_last: np.ndarray | None = None

    unsat_counts: np.ndarray | None = None      # (B, L) int32
    unsat: list = field(default_factory=list)   # [(B, m) bool]
    vn_msgs: list | None = None                 # quantized VN messages
    vn_raw_mask: list | None = None             # STE masks of the VN stage
    cn_aux: list | None = None
    cn_raw_mask: list | None = None
    cn_msgs: list | None = None                 # quantized CN messages
    beliefs: list | None = None                 # per-iteration beliefs
    outputs: list | None = None                 # per-iteration (B, n) outputs
    out_masks: list | None = None

    @property
    def computed_iters(self) -> int:
        return self.num_iters - self.start_iter

    def min_unsat_iteration(self) -> np.ndarray:
        """Earliest absolute iteration with the fewest unsatisfied checks."""
        return (np.argmin(self.unsat_counts, axis=1) + self.start_iter).astype(np.int64)


def decode(graph: TannerGraph, llr: np.ndarray, weight_set: WeightSet,
           quantizer: Quantizer | None = None, num_iters: int | None = None,
           early_stop: bool = False, algorithm: str = "minsum",
           record_messages: bool = False, record_cn_messages: bool = False,
           record_beliefs: bool = False, record_outputs: bool = False,
           init_cn_msgs: np.ndarray | None = None, start_iter: int = 0,
           materialized=None) -> DecodeTrace:
    """Run the iterative decoder over a batch of frames.

    llr is (n,) or (B, n) of raw channel LLRs; in quantized mode they are
    quantized on entry. num_iters may truncate the weight set but not
    exceed it. init_cn_msgs with start_iter resumes from a cached prefix
    state (the CN messages of iteration start_iter - 1).

    The success flag is the zero-syndrome test of the output hard
    decisions, never a message-level heuristic. With early_stop each frame
    reports the first iteration whose hard decisions satisfy all checks.
    """
    if algorithm not in ("minsum", "sumproduct"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    q = weight_set.quantizer if quantizer is None else quantizer
    if algorithm == "sumproduct" and q.mode != "float":
        raise ValueError("sum-product decoding is float only")
    lbar = weight_set.total_iters if num_iters is None else int(num_iters)
    if lbar < 1:
        raise ValueError("need at least one decoding iteration")
    if lbar > weight_set.total_iters:
        raise ValueError(f"asked for {lbar} iterations, weight set has {weight_set.total_iters}")
    if not 0 <= start_iter < lbar:
        raise ValueError("start_iter out of range")

    llr_b, _ = _as_batch(llr)
    B = llr_b.shape[0]
    n, E = graph.num_vns, graph.num_edges
    llr_q = q(llr_b)
    chw_all, cw_sat_all, cw_unsat_all = (
        weight_set.materialize(graph, lbar) if materialized is None else materialized)

    trace = DecodeTrace(llr=llr_q, num_iters=lbar, start_iter=start_iter, algorithm=algorithm)
    if record_messages:
        trace.vn_msgs, trace.vn_raw_mask = [], []
        trace.cn_aux, trace.cn_raw_mask = [], []
    if record_cn_messages:
        trace.cn_msgs = []
    if record_beliefs:
        trace.beliefs = []
    if record_outputs:
        trace.outputs, trace.out_masks = [], []

    if init_cn_msgs is None:
        cn_q = np.zeros((B, E))
    else:
        cn_q = np.array(init_cn_msgs, dtype=np.float64)
        if cn_q.shape != (B, E):
            raise ValueError("init_cn_msgs shape mismatch")

    unsat_counts = np.zeros((B, lbar - start_iter), dtype=np.int32)
    final_out = np.empty((B, n))
    final_raw = np.empty((B, n))
    final_mask = np.ones((B, n), dtype=bool)
    final_hard = np.zeros((B, n), dtype=np.uint8)
    success = np.zeros(B, dtype=bool)
    iterations = np.full(B, lbar, dtype=np.int32)
    done = np.zeros(B, dtype=bool)

    ec = graph.edge_cn
    for l in range(start_iter, lbar):
        raw_v = vn_update(graph, llr_q, cn_q, chw_all[l])
        vn_q = q(raw_v)
        unsat = classify_checks(graph, vn_q)
        unsat_counts[:, l - start_iter] = unsat.sum(axis=1)

        cw_edge = np.where(unsat[:, ec], cw_unsat_all[l][None, :], cw_sat_all[l][None, :])
        if algorithm == "minsum":
            raw_c, aux = cn_update_minsum(graph, vn_q, cw_edge)
        else:
            raw_c, aux = cn_update_sumproduct(graph, vn_q, cw_edge)
        cn_q = q(raw_c)

        trace.unsat.append(unsat)
        if record_messages:
            trace.vn_msgs.append(vn_q)
            trace.vn_raw_mask.append(q.pass_mask(raw_v))
            trace.cn_aux.append(aux)
            trace.cn_raw_mask.append(q.pass_mask(raw_c))
        if record_cn_messages:
            trace.cn_msgs.append(cn_q)

        need_out = early_stop or record_beliefs or record_outputs or l == lbar - 1
        if need_out:
            out_raw = output_llr(graph, llr_q, cn_q)
            out_q = q(out_raw)
            hard = (out_q < 0).astype(np.uint8)
            if record_beliefs:
                trace.beliefs.append(out_q)
            if record_outputs:
                trace.outputs.append(out_q)
                trace.out_masks.append(q.pass_mask(out_raw))
            if early_stop:
                ok = ~np.any(graph.syndrome(hard), axis=1)
                newly = ok & ~done
                if np.any(newly):
                    final_out[newly] = out_q[newly]
                    final_raw[newly] = out_raw[newly]
                    final_mask[newly] = q.pass_mask(out_raw[newly])
                    final_hard[newly] = hard[newly]
                    success[newly] = True
                    iterations[newly] = l + 1
                    done |= newly
                if done.all():
                    unsat_counts = unsat_counts[:, :l - start_iter + 1]
                    break
            if l == lbar - 1:
                rest = ~done
                final_out[rest] = out_q[rest]
                final_raw[rest] = out_raw[rest]
                final_mask[rest] = q.pass_mask(out_raw[rest])
                final_hard[rest] = hard[rest]
                success[rest] = ~np.any(graph.syndrome(hard[rest]), axis=1)

    trace.output = final_out
    trace.output_raw = final_raw
    trace.out_mask = final_mask
    trace.hard = final_hard
    trace.success = success
    trace.iterations = iterations
    trace.unsat_counts = unsat_counts
    trace.cn_msgs_last = cn_q
    return trace
