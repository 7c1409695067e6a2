"""Boosted-training pipeline: harvesting uncorrected frames, biased
re-sampling around their error positions, and weight transfer.

A "UC dataset" is a bag of received LLR frames that a fixed base decoder
failed on, stored with enough provenance to re-check that claim later:
the code, the channel, a hash of the base weights, and the measured
failure rate during collection. Post stages are trained on these frames,
which is what makes the second decoding stage specialize on residual
errors instead of re-learning the easy bulk.

On-disk format (UCV1): a little-endian binary file with a fixed 40-byte
header of 32-bit fields

  magic "UCV1" | n | frames | channel kind | ebno | rate | beta
  | base weight hash | flags | train count

followed by the float32 frame matrix, plus a JSON sidecar (same path with
".json" appended) carrying the full provenance. The sidecar is the
authoritative copy of anything that does not fit a 32-bit field; loading
cross-checks the two.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelSpec, sample_llr_batch, spawn_stream
from .codes import TannerGraph
from .decoder import decode
from .fastsim import run_decoder
from .weights import Stage, WeightSet

MAGIC = b"UCV1"
_HEADER = struct.Struct("<4sIIIfffIII")
_KIND_CODES = {"awgn": 0, "awgn_shifted": 1, "rayleigh": 2}
_FLAG_PARTIAL = 1

DEFAULT_FRAME_BUDGET = 10 ** 9
COLLECT_BATCH = 2048


class DatasetError(Exception):
    """Corrupt, inconsistent, or failed-integrity dataset."""


class TransferError(Exception):
    """Weight transfer between incompatible configurations."""


@dataclass
class AugSource:
    """One source failure frame and its decoded error positions."""

    frame_index: int
    error_vns: tuple[int, ...]


@dataclass
class Augmentation:
    """Provenance of a dataset produced by biased re-sampling."""

    beta: float
    shifted_fer: float
    shifted_trials: int
    sources: list[AugSource]
    source_ids: np.ndarray  # (F,) int32 index into sources

    def to_jsonable(self) -> dict:
        return {
            "beta": self.beta,
            "shifted_fer": self.shifted_fer,
            "shifted_trials": self.shifted_trials,
            "sources": [{"frame_index": s.frame_index,
                         "error_vns": list(s.error_vns)} for s in self.sources],
            "source_ids": self.source_ids.tolist(),
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "Augmentation":
        srcs = [AugSource(int(s["frame_index"]), tuple(int(v) for v in s["error_vns"]))
                for s in d["sources"]]
        return cls(float(d["beta"]), float(d["shifted_fer"]), int(d["shifted_trials"]),
                   srcs, np.asarray(d["source_ids"], dtype=np.int32))


@dataclass
class UcDataset:
    """Failure frames plus the provenance needed to re-verify them."""

    code_id: str
    channel: ChannelSpec
    base_hash: int
    frames: np.ndarray              # (F, n) float32
    collection_fer: float
    frames_examined: int
    train_count: int
    partial: bool = False
    augmentation: Augmentation | None = None

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise DatasetError("frames must be a 2-d array")
        if not 0 <= self.train_count <= len(self.frames):
            raise DatasetError("train_count out of range")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def train_frames(self) -> np.ndarray:
        return self.frames[: self.train_count].astype(np.float64)

    @property
    def test_frames(self) -> np.ndarray:
        return self.frames[self.train_count:].astype(np.float64)

    def verify(self, graph: TannerGraph, base_weights: WeightSet) -> float:
        """Fraction of stored frames the base decoder still fails on.

        Raises if the supplied weights do not hash to the recorded base,
        since a match against different weights would be meaningless.
        """
        if base_weights.content_hash() != self.base_hash:
            raise DatasetError("weight set does not match the recorded base hash")
        if len(self) == 0:
            return 1.0
        res = run_decoder(graph, self.frames.astype(np.float64), base_weights,
                          early_stop=True)
        return float(res.frame_errors().mean())

    # -- persistence ---------------------------------------------------

    def sidecar_path(self, path) -> Path:
        return Path(str(path) + ".json")

    def to_sidecar(self) -> dict:
        return {
            "format": MAGIC.decode(),
            "code_id": self.code_id,
            "channel": self.channel.to_jsonable(),
            "base_weights_hash": self.base_hash,
            "collection_fer": self.collection_fer,
            "frames_examined": self.frames_examined,
            "frame_count": len(self),
            "train_count": self.train_count,
            "partial": self.partial,
            "augmentation": None if self.augmentation is None
            else self.augmentation.to_jsonable(),
        }

    def save(self, path) -> Path:
        path = Path(path)
        beta = 0.0 if self.augmentation is None else self.augmentation.beta
        flags = _FLAG_PARTIAL if self.partial else 0
        header = _HEADER.pack(MAGIC, self.frames.shape[1], len(self),
                              _KIND_CODES[self.channel.kind],
                              np.float32(self.channel.ebno_db),
                              np.float32(self.channel.code_rate),
                              np.float32(beta), self.base_hash, flags,
                              self.train_count)
        with open(path, "wb") as f:
            f.write(header)
            f.write(self.frames.astype("<f4").tobytes())
        self.sidecar_path(path).write_text(
            json.dumps(self.to_sidecar(), indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "UcDataset":
        path = Path(path)
        raw = path.read_bytes()
        if len(raw) < _HEADER.size or raw[:4] != MAGIC:
            raise DatasetError(f"{path} is not a UCV1 dataset")
        (_, n, count, kind_code, ebno, rate, beta, base_hash, flags,
         train_count) = _HEADER.unpack_from(raw)
        body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
        if body.size != n * count:
            raise DatasetError(f"{path}: expected {n * count} samples, found {body.size}")
        side_path = Path(str(path) + ".json")
        if not side_path.exists():
            raise DatasetError(f"missing sidecar {side_path}")
        side = json.loads(side_path.read_text())
        channel = ChannelSpec.from_jsonable(side["channel"])
        aug = (None if side.get("augmentation") is None
               else Augmentation.from_jsonable(side["augmentation"]))
        ds = cls(code_id=side["code_id"], channel=channel,
                 base_hash=int(side["base_weights_hash"]),
                 frames=body.reshape(count, n).copy(),
                 collection_fer=float(side["collection_fer"]),
                 frames_examined=int(side["frames_examined"]),
                 train_count=int(train_count), partial=bool(flags & _FLAG_PARTIAL),
                 augmentation=aug)
        # header and sidecar must agree on the compact fields
        if side["frame_count"] != count or side["train_count"] != train_count:
            raise DatasetError(f"{path}: sidecar disagrees with header on frame counts")
        if _KIND_CODES[channel.kind] != kind_code:
            raise DatasetError(f"{path}: sidecar disagrees with header on channel kind")
        if bool(side["partial"]) != ds.partial:
            raise DatasetError(f"{path}: sidecar disagrees with header on partial flag")
        if int(side["base_weights_hash"]) != base_hash:
            raise DatasetError(f"{path}: sidecar disagrees with header on base hash")
        expect_beta = 0.0 if aug is None else aug.beta
        if abs(float(np.float32(expect_beta)) - beta) > 0:
            raise DatasetError(f"{path}: sidecar disagrees with header on beta")
        _ = (ebno, rate)
        return ds


def split_train_count(total: int) -> int:
    """10:1 train/test split; the test part gets the tail frames."""
    if total <= 1:
        return total
    return total - max(1, total // 11)


def collect_failures(graph: TannerGraph, base_weights: WeightSet,
                     channel: ChannelSpec, target: int, seed: int,
                     max_frames: int = DEFAULT_FRAME_BUDGET,
                     batch_size: int = COLLECT_BATCH,
                     start_worker: int = 0) -> UcDataset:
    """Decode fresh frames until `target` failures are stored.

    Batches are keyed by worker index, so results do not depend on how
    the batches would be distributed over processes; frames within the
    dataset are ordered by (worker index, in-batch trial index). If the
    frame budget runs out first the dataset is returned with partial=True
    and however many failures were found; FER bookkeeping always counts
    whole batches so the estimate stays unbiased.
    """
    if target < 1:
        raise ValueError("need a positive failure target")
    kept: list[np.ndarray] = []
    failures = 0
    examined = 0
    worker = start_worker
    while failures < target and examined < max_frames:
        count = int(min(batch_size, max_frames - examined))
        llr = sample_llr_batch(channel, graph, spawn_stream(seed, worker), count)
        res = run_decoder(graph, llr, base_weights, early_stop=True)
        bad = res.frame_errors()
        kept.append(llr[bad].astype(np.float32))
        failures += int(bad.sum())
        examined += count
        worker += 1
    frames = (np.concatenate(kept, axis=0) if kept
              else np.zeros((0, graph.num_vns), dtype=np.float32))[:target]
    fer = failures / examined if examined else 0.0
    return UcDataset(code_id=graph.code_id, channel=channel,
                     base_hash=base_weights.content_hash(), frames=frames,
                     collection_fer=fer, frames_examined=examined,
                     train_count=split_train_count(len(frames)),
                     partial=failures < target)


def error_positions(graph: TannerGraph, base_weights: WeightSet,
                    llr: np.ndarray) -> list[tuple[int, ...]]:
    """Per-frame hard-decision error VNs at the most-converged iteration.

    The decoder runs its full schedule without early stopping; for each
    frame the snapshot taken is the earliest iteration with the fewest
    unsatisfied checks, which is where a trapped failure is closest to
    the correct codeword.
    """
    llr = np.atleast_2d(np.asarray(llr, dtype=np.float64))
    tr = decode(graph, llr, base_weights, record_beliefs=True)
    best = tr.min_unsat_iteration()
    out = []
    for b in range(llr.shape[0]):
        bel = tr.beliefs[best[b]][b]
        out.append(tuple(int(v) for v in np.flatnonzero(bel < 0.0)))
    return out


def augment(graph: TannerGraph, base_weights: WeightSet, source: UcDataset,
            beta: float, per_source: int, seed: int,
            max_frames: int = DEFAULT_FRAME_BUDGET,
            batch_size: int = 256) -> UcDataset:
    """Importance-sampling augmentation of a failure dataset.

    For every stored frame, the base decoder's residual error positions
    define a mean-shifted channel (shift beta toward the noise on exactly
    those VNs); fresh frames are drawn from it until `per_source` new
    failures are found. Failures concentrate near the source frame's
    error region, so they arrive orders of magnitude faster than from the
    plain channel. The aggregate shifted failure rate is recorded; frames
    keep a pointer to their source and its error set.
    """
    if source.base_hash != base_weights.content_hash():
        raise DatasetError("augmentation needs the dataset's own base weights")
    if len(source) == 0:
        raise DatasetError("cannot augment an empty dataset")
    if per_source < 1:
        raise ValueError("need a positive per-source failure count")

    frames: list[np.ndarray] = []
    sources: list[AugSource] = []
    ids: list[int] = []
    failures_total = 0
    examined_total = 0
    worker = 0
    partial = False

    chunk = 512
    for lo in range(0, len(source), chunk):
        sub = source.frames[lo:lo + chunk].astype(np.float64)
        err_sets = error_positions(graph, base_weights, sub)
        for k, errs in enumerate(err_sets):
            frame_index = lo + k
            if not errs:
                raise DatasetError(
                    f"frame {frame_index} shows no bit errors at its most-converged "
                    "iteration; cannot define a shift set")
            sources.append(AugSource(frame_index, errs))
            shifted = ChannelSpec("awgn_shifted", source.channel.ebno_db,
                                  source.channel.code_rate, shifted_vns=errs,
                                  shift_beta=beta)
            got = 0
            while got < per_source:
                if examined_total >= max_frames:
                    partial = True
                    break
                count = int(min(batch_size, max_frames - examined_total))
                llr = sample_llr_batch(shifted, graph, spawn_stream(seed, worker), count)
                res = run_decoder(graph, llr, base_weights, early_stop=True)
                bad = np.flatnonzero(res.frame_errors())[: per_source - got]
                frames.extend(llr[bad].astype(np.float32))
                ids.extend([len(sources) - 1] * len(bad))
                got += len(bad)
                failures_total += int(res.frame_errors().sum())
                examined_total += count
                worker += 1
            if partial:
                break
        if partial:
            break

    mat = (np.stack(frames) if frames
           else np.zeros((0, graph.num_vns), dtype=np.float32))
    aug = Augmentation(beta=float(beta),
                       shifted_fer=failures_total / examined_total if examined_total else 0.0,
                       shifted_trials=examined_total, sources=sources,
                       source_ids=np.asarray(ids, dtype=np.int32))
    return UcDataset(code_id=source.code_id, channel=source.channel,
                     base_hash=source.base_hash, frames=mat,
                     collection_fer=source.collection_fer,
                     frames_examined=source.frames_examined,
                     train_count=split_train_count(len(mat)),
                     partial=partial, augmentation=aug)


# ----------------------------------------------------------------------
# weight transfer
# ----------------------------------------------------------------------

def transfer_init(target: WeightSet, source: WeightSet,
                  target_graph: TannerGraph, source_graph: TannerGraph,
                  target_stage: int = -1, source_stage: int = -1) -> WeightSet:
    """Seed one stage of `target` from a trained stage of `source`.

    Parameters are copied positionally, iteration by iteration; target
    iterations beyond the source stage keep the all-ones initialization.
    Sharing modes must match. Node-resolved modes additionally need the
    relevant protograph dimensions to agree: per-VN/per-edge tables need
    matching proto VN and edge counts, per-VN/per-proto-CN tables need
    matching proto VN and CN counts. Returns a new weight set.
    """
    out = target.copy()
    src = source.stages[source_stage]
    dst = out.stages[target_stage]
    if src.mode != dst.mode:
        raise TransferError(f"sharing mode mismatch: source {src.mode!r}, "
                            f"target {dst.mode!r}")
    sm, sn, se = source_graph.proto_dims
    tm, tn, te = target_graph.proto_dims
    if src.mode in ("full", "temporal") and (sn, se) != (tn, te):
        raise TransferError(
            f"{src.mode} weights are indexed by (proto VNs, proto edges); "
            f"source has ({sn}, {se}), target needs ({tn}, {te})")
    if src.mode == "dynamic_proto" and (sn, sm) != (tn, tm):
        raise TransferError(
            f"dynamic_proto weights are indexed by (proto VNs, proto CNs); "
            f"source has ({sn}, {sm}), target needs ({tn}, {tm})")
    if src.mode == "temporal":
        for d, s in zip(dst.param_arrays(), src.param_arrays()):
            d[...] = s
    else:
        keep = min(src.num_iters, dst.num_iters)
        for d, s in zip(dst.param_arrays(), src.param_arrays()):
            d[:keep] = s[:keep]
            d[keep:] = 1.0
    return out


def extend_with_stage(weight_set: WeightSet, graph: TannerGraph,
                      num_iters: int, mode: str) -> WeightSet:
    """Append a fresh all-ones post stage to an existing weight set."""
    st = Stage.ones(mode, num_iters, graph.proto_dims)
    return WeightSet(weight_set.code_id, [s.copy() for s in weight_set.stages] + [st],
                     weight_set.quantizer)
