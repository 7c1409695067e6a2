"""Monte-Carlo FER/BER estimation, residual-failure metrics, and the
operation-count complexity model.

Frame-error estimates stop at a fixed number of observed errors (so the
relative accuracy is roughly constant along a waterfall curve) or at a
frame budget, whichever comes first, and carry Wilson score intervals.
Randomness is keyed by (seed, batch index), which makes a curve
reproducible byte for byte regardless of batching or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSpec, sample_llr_batch, spawn_stream
from .codes import TannerGraph
from .fastsim import run_decoder
from .weights import WeightSet

Z_95 = 1.959963984540054  # two-sided 95% normal quantile


def wilson_interval(errors: int, trials: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Well behaved at zero observed errors (lower bound exactly 0) and for
    small counts, unlike the normal approximation. (0, 1) for no trials.
    """
    if trials <= 0:
        return 0.0, 1.0
    p = errors / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials))
    lo = max(0.0, center - half)
    hi = min(1.0, center + half)
    if errors == 0:
        lo = 0.0
    if errors == trials:
        hi = 1.0
    return lo, hi


@dataclass(frozen=True)
class FerPoint:
    """One Monte-Carlo measurement at a single operating point."""

    ebno_db: float
    frames: int
    frame_errors: int
    bit_errors: int
    fer: float
    ber: float
    ci_low: float
    ci_high: float
    budget_exhausted: bool = False


FER_CSV_HEADER = "ebno_db,frames,frame_errors,fer,ber,ci_low,ci_high"


def fer_csv(points) -> str:
    """Canonical CSV rendering of a list of FerPoint rows."""
    lines = [FER_CSV_HEADER]
    for p in points:
        lines.append(f"{p.ebno_db:.10g},{p.frames},{p.frame_errors},"
                     f"{p.fer:.10g},{p.ber:.10g},{p.ci_low:.10g},{p.ci_high:.10g}")
    return "\n".join(lines) + "\n"


def estimate_fer(graph: TannerGraph, weight_set: WeightSet, channel: ChannelSpec,
                 seed: int, stop_errors: int = 100,
                 max_frames: int = 10 ** 9, batch_size: int = 4096,
                 info_mask: np.ndarray | None = None,
                 num_iters: int | None = None,
                 start_worker: int = 0) -> FerPoint:
    """Estimate FER at the channel's operating point.

    Simulates whole batches until at least stop_errors frame errors have
    been seen or max_frames frames are spent; in the latter case the
    point is marked budget_exhausted. A frame counts as an error when any
    (information, if masked) bit is wrong after early-stopped decoding.
    """
    if stop_errors < 1:
        raise ValueError("need a positive error target")
    bits_per_frame = (graph.num_vns if info_mask is None
                      else int(np.count_nonzero(info_mask)))
    frames = 0
    ferr = 0
    berr = 0
    worker = start_worker
    while ferr < stop_errors and frames < max_frames:
        count = int(min(batch_size, max_frames - frames))
        llr = sample_llr_batch(channel, graph, spawn_stream(seed, worker), count)
        res = run_decoder(graph, llr, weight_set, early_stop=True,
                          num_iters=num_iters)
        ferr += int(res.frame_errors(info_mask).sum())
        berr += int(res.bit_errors(info_mask).sum())
        frames += count
        worker += 1
    lo, hi = wilson_interval(ferr, frames)
    return FerPoint(ebno_db=channel.ebno_db, frames=frames, frame_errors=ferr,
                    bit_errors=berr, fer=ferr / frames if frames else 0.0,
                    ber=berr / (frames * bits_per_frame) if frames else 0.0,
                    ci_low=lo, ci_high=hi,
                    budget_exhausted=ferr < stop_errors)


def fer_curve(graph: TannerGraph, weight_set: WeightSet, channel: ChannelSpec,
              ebno_list, seed: int, **kw) -> list[FerPoint]:
    """estimate_fer at each Eb/N0, with disjoint per-point random streams."""
    out = []
    for i, ebno in enumerate(ebno_list):
        out.append(estimate_fer(graph, weight_set, channel.with_ebno(float(ebno)),
                                seed, start_worker=i * 1_000_000, **kw))
    return out


def test_fer(graph: TannerGraph, weight_set: WeightSet, frames: np.ndarray,
             info_mask: np.ndarray | None = None,
             num_iters: int | None = None) -> float:
    """Fraction of stored frames a decoder still fails on."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or len(frames) == 0:
        raise ValueError("need a non-empty (F, n) frame array")
    res = run_decoder(graph, frames, weight_set, early_stop=True,
                      num_iters=num_iters)
    return float(res.frame_errors(info_mask).mean())


@dataclass(frozen=True)
class ErrorHistogram:
    """Residual bit-error statistics over the failures in a frame set."""

    counts: dict            # bit errors per failed frame -> occurrences
    total_frames: int
    failed_frames: int
    boundary: int
    fraction_small: float   # failures with fewer than `boundary` bit errors

    def to_jsonable(self) -> dict:
        return {"counts": {str(k): v for k, v in sorted(self.counts.items())},
                "total_frames": self.total_frames,
                "failed_frames": self.failed_frames,
                "boundary": self.boundary,
                "fraction_small": self.fraction_small}


def error_histogram(graph: TannerGraph, weight_set: WeightSet, frames: np.ndarray,
                    info_mask: np.ndarray | None = None,
                    boundary: int = 11) -> ErrorHistogram:
    """Histogram of residual bit errors among failed frames.

    The small-error mass (strictly below `boundary` wrong bits) is the
    share of failures a short error-targeting post stage can plausibly
    clean up; large-error failures are essentially erasures.
    """
    frames = np.asarray(frames, dtype=np.float64)
    res = run_decoder(graph, frames, weight_set, early_stop=True)
    errs = res.frame_errors(info_mask)
    per_frame = res.bit_errors(info_mask)[errs]
    counts = np.bincount(per_frame) if per_frame.size else np.zeros(1, dtype=np.int64)
    failed = int(errs.sum())
    small = int(counts[:boundary].sum())
    return ErrorHistogram(
        counts={int(k): int(v) for k, v in enumerate(counts) if v > 0},
        total_frames=len(frames), failed_frames=failed, boundary=boundary,
        fraction_small=small / failed if failed else 0.0)


# ----------------------------------------------------------------------
# complexity model
# ----------------------------------------------------------------------

def two_min_comparisons(degree: int) -> int:
    """Comparisons to find the two smallest of `degree` values."""
    if degree < 2:
        return 0
    return degree + int(math.floor(math.log2(degree))) - 2


@dataclass(frozen=True)
class ComplexityReport:
    """Per-iteration operation counts and the memory footprint."""

    decoder_kind: str       # "ms", "wms" or "nms"
    additions: int          # VN update totals and exclusions
    comparisons: int        # CN two-minimum scans
    multiplications: int    # weight and sign applications
    avg_iterations: float
    total_operations: float
    weight_memory: int      # stored weight parameters
    comparisons_by_degree: dict
    avg_comparisons_per_cn: float

    def to_jsonable(self) -> dict:
        return {
            "decoder_kind": self.decoder_kind,
            "additions": self.additions,
            "comparisons": self.comparisons,
            "multiplications": self.multiplications,
            "avg_iterations": self.avg_iterations,
            "total_operations": self.total_operations,
            "weight_memory": self.weight_memory,
            "comparisons_by_degree": {str(k): v for k, v in
                                      sorted(self.comparisons_by_degree.items())},
            "avg_comparisons_per_cn": self.avg_comparisons_per_cn,
        }


def complexity_report(graph: TannerGraph, weight_set: WeightSet,
                      avg_iterations: float) -> ComplexityReport:
    """Operation counts of one decoding run at a measured average depth.

    Additions: every VN forms its total then subtracts once per edge, so
    2E per iteration. Comparisons: each CN runs a two-minimum scan over
    its degree. Multiplications: one sign application per CN message for
    plain min-sum, plus one per message for check weights, plus one per
    VN for channel weights when those are trained. All counts scale
    linearly with the average number of iterations actually run; an
    average of zero iterations costs zero.
    """
    E = graph.num_edges
    n = graph.num_vns
    adds = 2 * E
    degs = np.asarray(graph.cn_degrees)
    comps = int(sum(two_min_comparisons(int(d)) for d in degs))
    kind = weight_set.decoder_kind()
    if kind == "ms":
        mults = E
    elif kind == "wms":
        mults = 2 * E
    else:
        mults = 2 * E + n
    total = (adds + 2 * comps + mults) * float(avg_iterations)
    uniq = {}
    for d in sorted(set(int(x) for x in degs)):
        uniq[d] = two_min_comparisons(d)
    return ComplexityReport(
        decoder_kind=kind, additions=adds, comparisons=comps,
        multiplications=mults, avg_iterations=float(avg_iterations),
        total_operations=total, weight_memory=weight_set.param_count,
        comparisons_by_degree=uniq,
        avg_comparisons_per_cn=comps / len(degs) if len(degs) else 0.0)


def average_iterations(graph: TannerGraph, weight_set: WeightSet,
                       channel: ChannelSpec, seed: int, frames: int = 20000,
                       batch_size: int = 4096) -> float:
    """Mean early-stopped iteration count under the given channel."""
    total = 0
    done = 0
    worker = 0
    while done < frames:
        count = int(min(batch_size, frames - done))
        llr = sample_llr_batch(channel, graph, spawn_stream(seed, worker), count)
        res = run_decoder(graph, llr, weight_set, early_stop=True)
        total += int(res.iterations.sum())
        done += count
        worker += 1
    return total / done if done else 0.0
