"""Hand-rolled reverse-mode gradients through the unrolled decoder.

The decoder forward pass is piecewise linear in its weights, so the
backward pass is a short list of local rules rather than a generic
autodiff graph: the excluded minimum routes its whole subgradient to the
recorded argmin edge, sign products are constants, quantizers act as
straight-through masks, and tied parameters sum their gradients. Adam,
learning-rate decay, weight clipping and the four scheduling variants sit
on top of that.

Throughout, margins are decoder output beliefs under the all-zero
codeword convention: positive means the bit is correct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .codes import TannerGraph
from .decoder import DecodeTrace, decode
from .fastsim import run_decoder
from .weights import ITERATION_INDEXED, Stage, WeightSet

LOSS_KINDS = ("bce", "soft_ber", "fer")
SCHEDULE_KINDS = ("one_shot", "iter_by_iter", "multi_loss", "block_wise")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class LossSpec:
    kind: str = "fer"
    fer_sharpness: float = 10.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "fer" and not self.fer_sharpness > 0:
            raise ValueError("fer_sharpness must be positive")


def loss_and_grad(spec: LossSpec, margins: np.ndarray,
                  info_mask: np.ndarray | None = None):
    """Mean loss over a batch of output margins plus d(loss)/d(margins).

    margins: (B, n). With info_mask only the masked columns contribute.
    The fer surrogate routes its gradient to each frame's earliest
    minimum margin; fer_sharpness=inf gives the hard frame indicator,
    whose gradient is zero everywhere.
    """
    m = np.atleast_2d(np.asarray(margins, dtype=np.float64))
    grad = np.zeros_like(m)
    if info_mask is not None:
        cols = np.flatnonzero(np.asarray(info_mask))
        sub = m[:, cols]
    else:
        cols = None
        sub = m
    B, V = sub.shape

    if spec.kind == "bce":
        val = float(np.logaddexp(0.0, -sub).mean())
        gsub = -_sigmoid(-sub) / (B * V)
    elif spec.kind == "soft_ber":
        s = _sigmoid(-sub)
        val = float(s.mean())
        gsub = -(s * (1.0 - s)) / (B * V)
    else:
        mins = sub.min(axis=1)
        arg = sub.argmin(axis=1)
        k = spec.fer_sharpness
        if math.isinf(k):
            val = float(np.mean(0.5 * (1.0 - np.sign(mins))))
            gsub = np.zeros_like(sub)
        else:
            s = _sigmoid(-k * mins)
            val = float(s.mean())
            gsub = np.zeros_like(sub)
            gsub[np.arange(B), arg] = -k * s * (1.0 - s) / B
    if cols is None:
        grad[:] = gsub
    else:
        grad[:, cols] = gsub
    return val, grad


# ----------------------------------------------------------------------
# reverse pass
# ----------------------------------------------------------------------

def _zeros_like_stage(stage: Stage):
    return [np.zeros_like(a) for a in stage.param_arrays()]


def _scatter_stage_grads(stage: Stage, t: int, graph: TannerGraph, grads,
                         d_chw_vn: np.ndarray, d_cw_edge: np.ndarray,
                         unsat_edge: np.ndarray):
    """Reduce per-node gradient contributions of one iteration into the
    stage's parameter arrays (grads mirrors stage.param_arrays())."""
    mode = stage.mode
    if mode == "spatial":
        grads[0][t] += d_chw_vn.sum()
        grads[1][t] += d_cw_edge.sum()
        return
    if mode == "dynamic":
        grads[0][t] += d_chw_vn.sum()
        grads[1][t] += d_cw_edge[~unsat_edge].sum()
        grads[2][t] += d_cw_edge[unsat_edge].sum()
        return
    vp, ep = graph.vn_proto, graph.edge_proto
    chw_part = np.bincount(vp, weights=d_chw_vn.sum(axis=0),
                           minlength=grads[0].shape[-1])
    if mode == "full":
        grads[0][t] += chw_part
        grads[1][t] += np.bincount(ep, weights=d_cw_edge.sum(axis=0),
                                   minlength=grads[1].shape[-1])
        return
    if mode == "temporal":
        grads[0] += chw_part
        grads[1] += np.bincount(ep, weights=d_cw_edge.sum(axis=0),
                                minlength=grads[1].shape[-1])
        return
    # dynamic_proto
    cp_e = graph.cn_proto[graph.edge_cn]
    grads[0][t] += chw_part
    sat = np.where(unsat_edge, 0.0, d_cw_edge)
    uns = np.where(unsat_edge, d_cw_edge, 0.0)
    grads[1][t] += np.bincount(cp_e, weights=sat.sum(axis=0),
                               minlength=grads[1].shape[-1])
    grads[2][t] += np.bincount(cp_e, weights=uns.sum(axis=0),
                               minlength=grads[2].shape[-1])


def backward(graph: TannerGraph, trace: DecodeTrace, weight_set: WeightSet,
             grad_outputs, grad_start: int | None = None,
             trainable_stages=None):
    """Gradients of a scalar loss w.r.t. every stage parameter.

    trace must come from decode(..., record_messages=True,
    record_cn_messages=True) and, for per-iteration losses,
    record_outputs=True. grad_outputs is a list of (absolute_iteration,
    (B, n) gradient) pairs; the common final-output loss passes
    [(num_iters - 1, g)]. Gradient flow stops below grad_start (the
    frozen prefix); stages outside trainable_stages accumulate zeros.
    """
    if trace.vn_msgs is None or trace.cn_msgs is None:
        raise ValueError("trace lacks recorded messages; decode with "
                         "record_messages=True and record_cn_messages=True")
    if trace.algorithm != "minsum":
        raise ValueError("gradients are defined for the min-sum decoder only")
    start = trace.start_iter if grad_start is None else int(grad_start)
    if start < trace.start_iter:
        raise ValueError("grad_start precedes the recorded window")
    L = trace.num_iters
    ev, ec = graph.edge_vn, graph.edge_cn
    B = trace.llr.shape[0]
    E = graph.num_edges

    materialized = weight_set.materialize(graph, L)
    cw_sat_all, cw_unsat_all = materialized[1], materialized[2]
    if trainable_stages is None:
        trainable_stages = set(range(len(weight_set.stages)))
    else:
        trainable_stages = set(trainable_stages)
    stage_grads = [_zeros_like_stage(s) for s in weight_set.stages]

    by_iter: dict[int, np.ndarray] = {}
    for l, g in grad_outputs:
        l = int(l)
        if not start <= l < L:
            raise ValueError(f"loss iteration {l} outside [{start}, {L})")
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (B, graph.num_vns):
            raise ValueError("output gradient shape mismatch")
        by_iter[l] = by_iter.get(l, 0) + g

    # map absolute iteration -> (stage index, local t)
    stage_of = []
    for si, s in enumerate(weight_set.stages):
        stage_of.extend((si, t) for t in range(s.num_iters))

    g_cnq = np.zeros((B, E))  # gradient on quantized CN messages of iter l
    for l in range(L - 1, start - 1, -1):
        idx = l - trace.start_iter
        if l in by_iter:
            if trace.out_masks is not None and idx < len(trace.out_masks):
                omask = trace.out_masks[idx]
            elif l == L - 1 and trace.out_mask is not None:
                omask = trace.out_mask
            else:
                raise ValueError(f"no recorded output mask for iteration {l}")
            g_belief = by_iter[l] * omask
            g_cnq += g_belief[:, ev]

        aux = trace.cn_aux[idx]
        unsat_edge = trace.unsat[idx][:, ec]
        g_rawc = g_cnq * trace.cn_raw_mask[idx]
        cw_edge = np.where(unsat_edge, cw_unsat_all[l][None, :], cw_sat_all[l][None, :])
        signed_mag = aux["excl_sign"] * aux["mag_out"]
        d_cw_edge = g_rawc * signed_mag
        g_mag = g_rawc * cw_edge * aux["excl_sign"]

        # route the excluded-minimum gradient to its source edge
        vn_q = trace.vn_msgs[idx]
        a1 = aux["a1_edge"][:, ec]
        a2 = aux["a2_edge"][:, ec]
        src = np.where(np.arange(E)[None, :] == a1, a2, a1)
        contrib = g_mag * np.sign(np.take_along_axis(vn_q, src, axis=1))
        flat = np.bincount((src + np.arange(B)[:, None] * E).ravel(),
                           weights=contrib.ravel(), minlength=B * E)
        g_vnq = flat.reshape(B, E)

        g_rawv = g_vnq * trace.vn_raw_mask[idx]
        si, t = stage_of[l]
        if si in trainable_stages:
            d_chw_vn = graph.vn_sums(g_rawv) * trace.llr
            _scatter_stage_grads(weight_set.stages[si], t, graph,
                                 stage_grads[si], d_chw_vn, d_cw_edge,
                                 unsat_edge)
        if l > start:
            g_cnq = graph.vn_sums(g_rawv)[:, ev] - g_rawv
        else:
            g_cnq = np.zeros((B, E))
    return stage_grads


# ----------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moments for one list of parameter arrays."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        st = cls(**kw)
        st.m = [np.zeros_like(p) for p in params]
        st.v = [np.zeros_like(p) for p in params]
        return st

    def step(self, params, grads, lr: float):
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def lr_at_epoch(base_lr: float, epoch: int) -> float:
    """base_lr halved every 20 epochs (0-based epoch index)."""
    return base_lr * 2.0 ** (-(epoch // 20))


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "one_shot"
    delta1: int = 0          # 0 = whole stage, resolved against its length
    delta2: int = 0
    epochs_per_stage: int = 100
    batch_size: int = 500

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.delta1 < 0 or self.delta2 < 0:
            raise ValueError("window sizes cannot be negative")

    def resolve(self, stage_len: int) -> "ScheduleSpec":
        """Pin the window sizes for a concrete stage length."""
        if self.kind == "one_shot" or self.kind == "multi_loss":
            return replace(self, delta1=stage_len, delta2=0)
        if self.kind == "iter_by_iter":
            return replace(self, delta1=1, delta2=0)
        d1 = self.delta1 if self.delta1 > 0 else stage_len
        if d1 + self.delta2 > stage_len:
            raise ValueError(f"window {d1}+{self.delta2} exceeds stage length {stage_len}")
        return replace(self, delta1=d1)

    def windows(self, stage_len: int):
        """(low, high) trainable spans in stage-local iterations."""
        sp = self.resolve(stage_len)
        out = []
        s = 1
        while (s - 1) * sp.delta1 < stage_len:
            low = max(0, (s - 1) * sp.delta1 - sp.delta2)
            high = min(s * sp.delta1, stage_len)
            out.append((low, high))
            s += 1
        return out


@dataclass
class EpochRow:
    """One line of the training metrics CSV."""

    epoch: int
    stage: int
    lr: float
    mean_loss: float
    test_fer: float | None = None

    def csv(self) -> str:
        t = "" if self.test_fer is None else f"{self.test_fer:.8g}"
        return f"{self.epoch},{self.stage},{self.lr:.8g},{self.mean_loss:.10g},{t}"


CSV_HEADER = "epoch,stage,lr,mean_loss,test_fer"


def _trainable_param_mask(stage: Stage, low: int, high: int):
    """Per-array boolean masks of the parameters a window may update."""
    masks = []
    for a in stage.param_arrays():
        m = np.zeros_like(a, dtype=bool)
        if stage.mode == "temporal":
            m[...] = True
        else:
            m[low:high] = True
        masks.append(m)
    return masks


def train(graph: TannerGraph, weight_set: WeightSet, train_llr: np.ndarray,
          schedule: ScheduleSpec, loss_spec: LossSpec, rng: np.random.Generator,
          trainable_stage: int | None = None, test_llr: np.ndarray | None = None,
          base_lr: float = 1e-3, clip: tuple[float, float] | None = (0.0, 2.0),
          info_mask: np.ndarray | None = None, metrics=None) -> list[EpochRow]:
    """Optimize one stage of a weight set in place.

    train_llr: (F, n) channel LLR frames (the all-zero codeword is the
    ground truth). The stage defaults to the last one. Frames are
    shuffled each epoch with rng; everything else is deterministic, so a
    fixed seed gives a bit-identical parameter trajectory. Returns the
    per-epoch metric rows (also appended to `metrics` if given).
    """
    si = len(weight_set.stages) - 1 if trainable_stage is None else trainable_stage
    stage = weight_set.stages[si]
    s0 = weight_set.stage_start(si)
    frozen_before = [s.copy() for i, s in enumerate(weight_set.stages) if i != si]
    F = train_llr.shape[0]
    if F == 0:
        raise ValueError("empty training set")
    q = weight_set.quantizer

    rows: list[EpochRow] = []
    epoch_counter = 0
    for low, high in schedule.windows(stage.num_iters):
        lbar = s0 + high
        grad_start = s0 + low
        # frozen prefix: decode the untouched leading iterations once
        if grad_start > 0:
            prefix = np.empty((F, graph.num_edges))
            for a in range(0, F, 2048):
                b = min(F, a + 2048)
                tr = decode(graph, train_llr[a:b], weight_set,
                            num_iters=grad_start)
                prefix[a:b] = tr.cn_msgs_last
        else:
            prefix = None

        params = stage.param_arrays()
        opt = AdamState.for_params(params)
        pmask = _trainable_param_mask(stage, low, high)
        multi = schedule.kind == "multi_loss"

        for ep in range(schedule.epochs_per_stage):
            lr = lr_at_epoch(base_lr, ep)
            order = rng.permutation(F)
            losses = []
            for a in range(0, F, schedule.batch_size):
                sel = order[a:a + schedule.batch_size]
                llr_b = train_llr[sel]
                init = None if prefix is None else prefix[sel]
                tr = decode(graph, llr_b, weight_set, num_iters=lbar,
                            start_iter=grad_start, init_cn_msgs=init,
                            record_messages=True, record_cn_messages=True,
                            record_outputs=multi)
                if multi:
                    gouts = []
                    total = 0.0
                    for l in range(grad_start, lbar):
                        v, g = loss_and_grad(loss_spec,
                                             tr.outputs[l - grad_start],
                                             info_mask)
                        total += v
                        gouts.append((l, g))
                    losses.append(total)
                else:
                    v, g = loss_and_grad(loss_spec, tr.output, info_mask)
                    losses.append(v)
                    gouts = [(lbar - 1, g)]
                grads = backward(graph, tr, weight_set, gouts,
                                 trainable_stages={si})[si]
                for gr, msk in zip(grads, pmask):
                    gr[~msk] = 0.0
                opt.step(params, grads, lr)
                if clip is not None:
                    for p in params:
                        np.clip(p, clip[0], clip[1], out=p)
            tf = None
            if test_llr is not None and len(test_llr):
                res = run_decoder(graph, test_llr, weight_set, quantizer=q,
                                  early_stop=True)
                tf = float(res.frame_errors(info_mask).mean())
            row = EpochRow(epoch_counter, si, lr, float(np.mean(losses)), tf)
            rows.append(row)
            if metrics is not None:
                metrics.append(row)
            epoch_counter += 1

    # paranoia: the other stages must come out bit-identical
    others = [s for i, s in enumerate(weight_set.stages) if i != si]
    for before, after in zip(frozen_before, others):
        for x, y in zip(before.param_arrays(), after.param_arrays()):
            assert np.array_equal(x, y), "frozen stage drifted during training"
    return rows
