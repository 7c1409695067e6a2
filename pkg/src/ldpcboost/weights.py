"""Trainable decoder weights with five sharing layouts.

Every decoding iteration applies a channel weight per variable node and a
check weight per outgoing check message. The sharing mode fixes how many
free parameters stand behind those per-node values:

  spatial        one channel weight and one check weight per iteration
  full           per proto VN and per proto edge, separately per iteration
  temporal       per proto VN and per proto edge, shared across iterations
  dynamic        per iteration: one channel weight, one check weight for
                 satisfied checks and one for unsatisfied checks
  dynamic_proto  like dynamic but the two check weights are kept per
                 proto CN, and the channel weight per proto VN

A WeightSet is an ordered list of stages (a base stage and one or two
post stages), each with its own length and sharing mode. Weights of 1.0
everywhere reproduce the plain min-sum decoder.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .codes import TannerGraph
from .quantize import Quantizer

SHARING_MODES = ("full", "spatial", "temporal", "dynamic", "dynamic_proto")
ITERATION_INDEXED = ("full", "spatial", "dynamic", "dynamic_proto")


class WeightShapeError(ValueError):
    """Raised when weight arrays do not fit the declared mode or graph."""


def _stage_shapes(mode: str, num_iters: int, dims: tuple[int, int, int]):
    """Expected (chw, cw, ucw) shapes; dims is (M, N, E) of the protograph."""
    m, n, e = dims
    if mode == "spatial":
        return (num_iters,), (num_iters,), None
    if mode == "dynamic":
        return (num_iters,), (num_iters,), (num_iters,)
    if mode == "full":
        return (num_iters, n), (num_iters, e), None
    if mode == "temporal":
        return (n,), (e,), None
    if mode == "dynamic_proto":
        return (num_iters, n), (num_iters, m), (num_iters, m)
    raise WeightShapeError(f"unknown sharing mode {mode!r}")


@dataclass
class Stage:
    """One contiguous block of iterations sharing a weight layout."""

    num_iters: int
    mode: str
    chw: np.ndarray
    cw: np.ndarray
    ucw: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in SHARING_MODES:
            raise WeightShapeError(f"unknown sharing mode {self.mode!r}")
        if self.num_iters < 1:
            raise WeightShapeError("a stage needs at least one iteration")
        self.chw = np.asarray(self.chw, dtype=np.float64)
        self.cw = np.asarray(self.cw, dtype=np.float64)
        if self.ucw is not None:
            self.ucw = np.asarray(self.ucw, dtype=np.float64)
        has_ucw = self.mode in ("dynamic", "dynamic_proto")
        if has_ucw != (self.ucw is not None):
            raise WeightShapeError(f"mode {self.mode} expects ucw={'set' if has_ucw else 'absent'}")

    @classmethod
    def ones(cls, mode: str, num_iters: int, dims: tuple[int, int, int]) -> "Stage":
        sh_chw, sh_cw, sh_ucw = _stage_shapes(mode, num_iters, dims)
        return cls(num_iters, mode,
                   np.ones(sh_chw), np.ones(sh_cw),
                   None if sh_ucw is None else np.ones(sh_ucw))

    def validate_against(self, dims: tuple[int, int, int]):
        sh_chw, sh_cw, sh_ucw = _stage_shapes(self.mode, self.num_iters, dims)
        if self.chw.shape != sh_chw or self.cw.shape != sh_cw:
            raise WeightShapeError(
                f"{self.mode} stage arrays {self.chw.shape}/{self.cw.shape} "
                f"do not match expected {sh_chw}/{sh_cw}")
        if sh_ucw is not None and self.ucw.shape != sh_ucw:
            raise WeightShapeError(f"ucw shape {self.ucw.shape} != {sh_ucw}")

    @property
    def param_count(self) -> int:
        n = self.chw.size + self.cw.size
        if self.ucw is not None:
            n += self.ucw.size
        return n

    def param_arrays(self) -> list[np.ndarray]:
        arrs = [self.chw, self.cw]
        if self.ucw is not None:
            arrs.append(self.ucw)
        return arrs

    def copy(self) -> "Stage":
        return Stage(self.num_iters, self.mode, self.chw.copy(), self.cw.copy(),
                     None if self.ucw is None else self.ucw.copy())

    def iteration_values(self, t: int, graph: TannerGraph):
        """Per-node weight vectors for stage-local iteration t (0-based).

        Returns (chw_vn, cw_sat, cw_unsat) with shapes (n,), (E,), (E,).
        For modes without a separate unsatisfied-check weight the last two
        are the same array.
        """
        vp, ep = graph.vn_proto, graph.edge_proto
        if self.mode == "spatial":
            chw = np.full(graph.num_vns, self.chw[t])
            cw = np.full(graph.num_edges, self.cw[t])
            return chw, cw, cw
        if self.mode == "dynamic":
            chw = np.full(graph.num_vns, self.chw[t])
            cw = np.full(graph.num_edges, self.cw[t])
            ucw = np.full(graph.num_edges, self.ucw[t])
            return chw, cw, ucw
        if self.mode == "full":
            return self.chw[t][vp], self.cw[t][ep], self.cw[t][ep]
        if self.mode == "temporal":
            return self.chw[vp], self.cw[ep], self.cw[ep]
        # dynamic_proto: check weights indexed by the proto CN of each edge
        cp_e = graph.cn_proto[graph.edge_cn]
        return self.chw[t][vp], self.cw[t][cp_e], self.ucw[t][cp_e]

    def to_jsonable(self) -> dict:
        d: dict = {"mode": self.mode, "num_iters": self.num_iters}
        if self.mode == "temporal":
            d["chw"] = self.chw.tolist()
            d["cw"] = self.cw.tolist()
            return d
        iters = []
        for t in range(self.num_iters):
            item = {"chw": self.chw[t].tolist(), "cw": self.cw[t].tolist()}
            if self.ucw is not None:
                item["ucw"] = self.ucw[t].tolist()
            iters.append(item)
        d["iterations"] = iters
        return d

    @classmethod
    def from_jsonable(cls, d: dict) -> "Stage":
        mode = d["mode"]
        num_iters = int(d["num_iters"])
        if mode == "temporal":
            return cls(num_iters, mode, np.array(d["chw"]), np.array(d["cw"]))
        iters = d["iterations"]
        if len(iters) != num_iters:
            raise WeightShapeError("iteration list length mismatch")
        chw = np.array([it["chw"] for it in iters])
        cw = np.array([it["cw"] for it in iters])
        ucw = np.array([it["ucw"] for it in iters]) if "ucw" in iters[0] else None
        return cls(num_iters, mode, chw, cw, ucw)


FORMAT_TAG = "nms-weights-v1"


@dataclass
class WeightSet:
    """Stacked weight stages plus the quantizer they were trained for."""

    code_id: str
    stages: list[Stage]
    quantizer: Quantizer = field(default_factory=Quantizer)

    def __post_init__(self):
        if not self.stages:
            raise WeightShapeError("a weight set needs at least one stage")

    @property
    def total_iters(self) -> int:
        return sum(s.num_iters for s in self.stages)

    @property
    def stage_lengths(self) -> tuple[int, ...]:
        return tuple(s.num_iters for s in self.stages)

    @property
    def sharing_mode(self) -> str:
        """Mode of the last (trained) stage, used for display and files."""
        return self.stages[-1].mode

    @property
    def param_count(self) -> int:
        return sum(s.param_count for s in self.stages)

    def stage_start(self, stage_idx: int) -> int:
        """Absolute 0-based iteration index where a stage begins."""
        return sum(s.num_iters for s in self.stages[:stage_idx])

    def copy(self) -> "WeightSet":
        return WeightSet(self.code_id, [s.copy() for s in self.stages], self.quantizer)

    @classmethod
    def all_ones(cls, graph: TannerGraph, stage_specs, quantizer: Quantizer | None = None) -> "WeightSet":
        """stage_specs: iterable of (num_iters, mode) pairs."""
        dims = graph.proto_dims
        stages = [Stage.ones(mode, ni, dims) for ni, mode in stage_specs]
        return cls(graph.code_id, stages, quantizer or Quantizer())

    @classmethod
    def min_sum(cls, graph: TannerGraph, num_iters: int, quantizer: Quantizer | None = None) -> "WeightSet":
        return cls.all_ones(graph, [(num_iters, "spatial")], quantizer)

    @classmethod
    def weighted_min_sum(cls, graph: TannerGraph, num_iters: int, check_weight: float = 0.75,
                         quantizer: Quantizer | None = None) -> "WeightSet":
        ws = cls.all_ones(graph, [(num_iters, "spatial")], quantizer)
        ws.stages[0].cw[:] = check_weight
        return ws

    def validate_against(self, graph: TannerGraph):
        dims = graph.proto_dims
        for s in self.stages:
            s.validate_against(dims)

    def materialize(self, graph: TannerGraph, num_iters: int | None = None):
        """Expand shared parameters into dense per-iteration weight tables.

        Returns (chw_vn, cw_sat, cw_unsat) with shapes (lbar, n), (lbar, E),
        (lbar, E). Both decoder paths consume these tables, so the sharing
        modes only exist here and in the training gradient scatter.
        """
        self.validate_against(graph)
        lbar = self.total_iters if num_iters is None else num_iters
        if lbar > self.total_iters:
            raise WeightShapeError(
                f"requested {lbar} iterations but the weight set covers {self.total_iters}")
        chw = np.empty((lbar, graph.num_vns))
        cw_sat = np.empty((lbar, graph.num_edges))
        cw_unsat = np.empty((lbar, graph.num_edges))
        l = 0
        for s in self.stages:
            for t in range(s.num_iters):
                if l >= lbar:
                    break
                a, b, c = s.iteration_values(t, graph)
                chw[l], cw_sat[l], cw_unsat[l] = a, b, c
                l += 1
        return chw, cw_sat, cw_unsat

    def is_all_ones(self) -> bool:
        return all(np.all(a == 1.0) for s in self.stages for a in s.param_arrays())

    def decoder_kind(self) -> str:
        """Classify as plain, single-weight, or generally weighted min-sum."""
        if self.is_all_ones():
            return "ms"
        if all(s.mode == "spatial" for s in self.stages):
            chw = np.concatenate([s.chw for s in self.stages])
            cw = np.concatenate([s.cw for s in self.stages])
            if np.all(chw == 1.0) and np.all(cw == cw[0]):
                return "wms"
        return "nms"

    def to_jsonable(self) -> dict:
        d: dict = {
            "format": FORMAT_TAG,
            "code_id": self.code_id,
            "sharing_mode": self.sharing_mode,
            "l1": self.stages[0].num_iters,
            "quantizer": self.quantizer.to_jsonable(),
            "stages": [s.to_jsonable() for s in self.stages],
        }
        if len(self.stages) > 1:
            d["l2"] = self.stages[1].num_iters
        if len(self.stages) > 2:
            d["l2b"] = self.stages[2].num_iters
        return d

    @classmethod
    def from_jsonable(cls, d: dict) -> "WeightSet":
        if d.get("format") != FORMAT_TAG:
            raise WeightShapeError(f"not a weight file (format={d.get('format')!r})")
        stages = [Stage.from_jsonable(sd) for sd in d["stages"]]
        ws = cls(d.get("code_id", ""), stages, Quantizer.from_jsonable(d["quantizer"]))
        declared = [d.get("l1"), d.get("l2"), d.get("l2b")]
        declared = [x for x in declared if x is not None]
        if tuple(declared) != ws.stage_lengths:
            raise WeightShapeError("stage lengths disagree with l1/l2/l2b header")
        return ws

    def dumps(self) -> str:
        return json.dumps(self.to_jsonable(), indent=1, sort_keys=True)

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.dumps())
            f.write("\n")

    @classmethod
    def load(cls, path) -> "WeightSet":
        with open(path) as f:
            return cls.from_jsonable(json.load(f))

    def content_hash(self) -> int:
        """32-bit hash of the canonical serialization."""
        return zlib.crc32(self.dumps().encode()) & 0xFFFFFFFF
