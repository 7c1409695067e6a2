"""BPSK channels and reproducible LLR sampling.

All simulations assume the all-zero codeword, transmitted as +1. The
supported channels are AWGN, AWGN with a mean shift on a chosen set of
variable nodes (used to bias sampling toward known failure regions), and
fully interleaved Rayleigh fading with unit second moment and perfect CSI.

LLRs are canonically rounded to float32 precision at the source. Frames
are persisted as float32, and rounding here rather than at save time makes
a stored frame decode exactly like the freshly sampled one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codes import TannerGraph

KINDS = ("awgn", "awgn_shifted", "rayleigh")


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    ebno_db: float
    code_rate: float
    shifted_vns: tuple[int, ...] = ()
    shift_beta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not (0.0 < self.code_rate <= 1.0):
            raise ValueError("code rate must be in (0, 1]")
        if self.kind == "awgn_shifted" and len(self.shifted_vns) == 0:
            raise ValueError("awgn_shifted needs a non-empty shifted VN set")

    @property
    def noise_variance(self) -> float:
        """Per-dimension noise variance for the configured Eb/N0."""
        return 1.0 / (2.0 * self.code_rate * 10.0 ** (self.ebno_db / 10.0))

    def with_ebno(self, ebno_db: float) -> "ChannelSpec":
        return ChannelSpec(self.kind, ebno_db, self.code_rate,
                           self.shifted_vns, self.shift_beta)

    def to_jsonable(self) -> dict:
        d = {"kind": self.kind, "ebno_db": self.ebno_db, "code_rate": self.code_rate}
        if self.kind == "awgn_shifted":
            d["shifted_vns"] = list(self.shifted_vns)
            d["shift_beta"] = self.shift_beta
        return d

    @classmethod
    def from_jsonable(cls, d: dict) -> "ChannelSpec":
        return cls(d["kind"], float(d["ebno_db"]), float(d["code_rate"]),
                   tuple(d.get("shifted_vns", ())), float(d.get("shift_beta", 0.0)))


@dataclass
class LlrFrame:
    """One received frame of channel LLRs plus its reproducibility token."""

    llr: np.ndarray
    channel: ChannelSpec
    seed_tag: int = 0


def spawn_stream(master_seed: int, worker_index: int) -> np.random.Generator:
    """Independent, reproducible random stream for one worker.

    Streams are keyed by (master_seed, worker_index) through a SeedSequence
    spawn key, so any worker's stream can be reconstructed without drawing
    from the others. PCG64 has period 2**128 and cheap jump-ahead.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(worker_index,))
    return np.random.Generator(np.random.PCG64(ss))


def seed_tag(master_seed: int, worker_index: int, trial_index: int) -> int:
    """Pack a (seed, worker, trial) coordinate into a 64-bit token."""
    h = (master_seed * 0x9E3779B97F4A7C15 + worker_index) & 0xFFFFFFFFFFFFFFFF
    h ^= (trial_index + 0x632BE59BD9B4E019) & 0xFFFFFFFFFFFFFFFF
    return (h * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF


def sample_llr_batch(spec: ChannelSpec, graph: TannerGraph,
                     rng: np.random.Generator, count: int) -> np.ndarray:
    """Sample `count` frames of channel LLRs, shape (count, n), float64.

    Values are float32-representable by construction (see module docstring).
    Punctured variable nodes get LLR exactly 0.
    """
    n = graph.num_vns
    s2 = spec.noise_variance
    sigma = np.sqrt(s2)
    scale = 2.0 / s2
    if spec.kind == "rayleigh":
        # unit second moment fading, perfect CSI
        h = np.sqrt(0.5 * (rng.standard_normal((count, n)) ** 2 +
                           rng.standard_normal((count, n)) ** 2))
        y = h + sigma * rng.standard_normal((count, n))
        llr = scale * (h * y)
    else:
        y = 1.0 + sigma * rng.standard_normal((count, n))
        if spec.kind == "awgn_shifted":
            y[:, list(spec.shifted_vns)] -= spec.shift_beta
        llr = scale * y
    if graph.punctured:
        llr[:, list(graph.punctured)] = 0.0
    return llr.astype(np.float32).astype(np.float64)


def sample_frame(spec: ChannelSpec, graph: TannerGraph,
                 rng: np.random.Generator, tag: int = 0) -> LlrFrame:
    """Sample a single received frame."""
    llr = sample_llr_batch(spec, graph, rng, 1)[0]
    return LlrFrame(llr=llr, channel=spec, seed_tag=tag)
