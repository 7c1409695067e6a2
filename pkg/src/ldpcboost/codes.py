"""Protograph descriptions and lifted Tanner graphs for QC-LDPC codes.

A protograph is a small M x N matrix of circulant shifts. Lifting by a
factor z replaces every non-null entry with a z x z cyclically shifted
identity block, giving a binary parity-check matrix with n = N*z columns
(variable nodes) and m = M*z rows (check nodes).

Graphs can also be read directly from alist files, in which case there is
no protograph structure and the lift size is 1 (every node is its own
prototype).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CodeModelError(ValueError):
    """Raised for malformed code descriptions (bad grids, alists, shifts)."""


@dataclass(frozen=True)
class Protograph:
    """Shift matrix of a QC-LDPC code before lifting.

    entries are (proto_cn, proto_vn, shift) triples in row-major order,
    one per non-null cell of the grid. Shifts must lie in [0, lift_size).
    """

    num_proto_cns: int
    num_proto_vns: int
    lift_size: int
    entries: tuple[tuple[int, int, int], ...]
    punctured: tuple[int, ...] = ()
    code_id: str = ""

    def __post_init__(self):
        if self.num_proto_cns < 1 or self.num_proto_vns < 1:
            raise CodeModelError("protograph dimensions must be positive")
        if self.lift_size < 1:
            raise CodeModelError("lift size must be >= 1")
        seen = set()
        for cp, vp, s in self.entries:
            if not (0 <= cp < self.num_proto_cns and 0 <= vp < self.num_proto_vns):
                raise CodeModelError(f"entry ({cp},{vp}) outside the {self.num_proto_cns}x{self.num_proto_vns} grid")
            if not (0 <= s < self.lift_size):
                raise CodeModelError(f"shift {s} out of range for lift size {self.lift_size}")
            if (cp, vp) in seen:
                raise CodeModelError(f"duplicate entry at ({cp},{vp})")
            seen.add((cp, vp))
        for v in self.punctured:
            if not (0 <= v < self.num_proto_vns):
                raise CodeModelError(f"punctured proto VN {v} out of range")

    @property
    def num_proto_edges(self) -> int:
        return len(self.entries)

    def lift(self) -> "TannerGraph":
        """Expand each shift entry into z edges of the lifted Tanner graph.

        Edge k*z + j (entry index k, offset j) connects variable node
        vp*z + j to check node cp*z + ((j + shift) mod z).
        """
        z = self.lift_size
        num_edges = self.num_proto_edges * z
        edge_vn = np.empty(num_edges, dtype=np.int32)
        edge_cn = np.empty(num_edges, dtype=np.int32)
        for k, (cp, vp, s) in enumerate(self.entries):
            j = np.arange(z)
            edge_vn[k * z:(k + 1) * z] = vp * z + j
            edge_cn[k * z:(k + 1) * z] = cp * z + (j + s) % z
        punct = []
        for vp in self.punctured:
            punct.extend(range(vp * z, (vp + 1) * z))
        return TannerGraph(
            num_vns=self.num_proto_vns * z,
            num_cns=self.num_proto_cns * z,
            edge_vn=edge_vn,
            edge_cn=edge_cn,
            proto=self,
            punctured=tuple(punct),
            code_id=self.code_id,
        )


@dataclass
class TannerGraph:
    """Bipartite decoding graph with a fixed canonical edge ordering.

    The edge order is part of the contract: float message passing sums
    partial results in ascending neighbour order, so two implementations
    agree bit for bit only if they walk edges the same way. For lifted
    graphs the order is row-major protograph entries then lift offset,
    which sorts each node's incident edges by ascending neighbour index.
    Alist graphs are sorted by (check node, variable node).
    """

    num_vns: int
    num_cns: int
    edge_vn: np.ndarray
    edge_cn: np.ndarray
    proto: Protograph | None = None
    punctured: tuple[int, ...] = ()
    code_id: str = ""

    # derived adjacency, filled in __post_init__
    vn_order: np.ndarray = field(init=False, repr=False)
    vn_starts: np.ndarray = field(init=False, repr=False)
    cn_order: np.ndarray = field(init=False, repr=False)
    cn_starts: np.ndarray = field(init=False, repr=False)
    cn_slots: np.ndarray = field(init=False, repr=False)
    cn_slot_mask: np.ndarray = field(init=False, repr=False)
    edge_cn_slot: np.ndarray = field(init=False, repr=False)
    vn_slots: np.ndarray = field(init=False, repr=False)
    vn_degrees: np.ndarray = field(init=False, repr=False)
    cn_degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.edge_vn = np.asarray(self.edge_vn, dtype=np.int32)
        self.edge_cn = np.asarray(self.edge_cn, dtype=np.int32)
        if self.edge_vn.shape != self.edge_cn.shape or self.edge_vn.ndim != 1:
            raise CodeModelError("edge arrays must be 1-d and equally long")
        if self.num_edges == 0:
            raise CodeModelError("graph has no edges")
        if self.edge_vn.min() < 0 or self.edge_vn.max() >= self.num_vns:
            raise CodeModelError("edge VN index out of range")
        if self.edge_cn.min() < 0 or self.edge_cn.max() >= self.num_cns:
            raise CodeModelError("edge CN index out of range")

        self.vn_degrees = np.bincount(self.edge_vn, minlength=self.num_vns)
        self.cn_degrees = np.bincount(self.edge_cn, minlength=self.num_cns)
        if self.vn_degrees.min() < 1:
            raise CodeModelError("every variable node needs degree >= 1")
        if self.cn_degrees.min() < 2:
            raise CodeModelError("every check node needs degree >= 2")

        self.vn_order = np.argsort(self.edge_vn, kind="stable").astype(np.int32)
        self.vn_starts = np.concatenate(([0], np.cumsum(self.vn_degrees))).astype(np.int32)
        self.cn_order = np.argsort(self.edge_cn, kind="stable").astype(np.int32)
        self.cn_starts = np.concatenate(([0], np.cumsum(self.cn_degrees))).astype(np.int32)

        dmax = int(self.cn_degrees.max())
        self.cn_slots = np.zeros((self.num_cns, dmax), dtype=np.int32)
        self.cn_slot_mask = np.zeros((self.num_cns, dmax), dtype=bool)
        self.edge_cn_slot = np.empty(self.num_edges, dtype=np.int32)
        for c in range(self.num_cns):
            lo, hi = self.cn_starts[c], self.cn_starts[c + 1]
            edges = self.cn_order[lo:hi]
            self.cn_slots[c, :hi - lo] = edges
            self.cn_slot_mask[c, :hi - lo] = True
            self.edge_cn_slot[edges] = np.arange(hi - lo)

        # padded VN slot table; unused slots hold the sentinel index E, which
        # vn_sums() maps to a zero entry
        dvmax = int(self.vn_degrees.max())
        self.vn_slots = np.full((self.num_vns, dvmax), self.num_edges, dtype=np.int32)
        for v in range(self.num_vns):
            lo, hi = self.vn_starts[v], self.vn_starts[v + 1]
            self.vn_slots[v, :hi - lo] = self.vn_order[lo:hi]

    @property
    def num_edges(self) -> int:
        return int(self.edge_vn.shape[0])

    @property
    def design_rate(self) -> float:
        return (self.num_vns - self.num_cns) / self.num_vns

    # prototype maps: identity when there is no protograph
    @property
    def edge_proto(self) -> np.ndarray:
        if self.proto is None:
            return np.arange(self.num_edges, dtype=np.int32)
        return (np.arange(self.num_edges, dtype=np.int32) // self.proto.lift_size).astype(np.int32)

    @property
    def vn_proto(self) -> np.ndarray:
        if self.proto is None:
            return np.arange(self.num_vns, dtype=np.int32)
        return (np.arange(self.num_vns, dtype=np.int32) // self.proto.lift_size).astype(np.int32)

    @property
    def cn_proto(self) -> np.ndarray:
        if self.proto is None:
            return np.arange(self.num_cns, dtype=np.int32)
        return (np.arange(self.num_cns, dtype=np.int32) // self.proto.lift_size).astype(np.int32)

    @property
    def proto_dims(self) -> tuple[int, int, int]:
        """(proto CNs, proto VNs, proto edges), treating alist graphs as z=1."""
        if self.proto is None:
            return self.num_cns, self.num_vns, self.num_edges
        return self.proto.num_proto_cns, self.proto.num_proto_vns, self.proto.num_proto_edges

    def vn_sums(self, edge_values: np.ndarray) -> np.ndarray:
        """Per-VN sum of edge values in canonical order.

        Accepts (E,) or (B, E); returns (n,) or (B, n). The accumulation is
        a zero-initialised left-to-right pass over each VN's edges, which
        pins the float result to the compiled kernel's loop. (reduceat is
        avoided on purpose: its association order is an implementation
        detail of numpy.)
        """
        vals = np.asarray(edge_values)
        padded = np.zeros(vals.shape[:-1] + (self.num_edges + 1,), dtype=vals.dtype)
        padded[..., :self.num_edges] = vals
        acc = np.zeros(vals.shape[:-1] + (self.num_vns,), dtype=vals.dtype)
        for j in range(self.vn_slots.shape[1]):
            acc += padded[..., self.vn_slots[:, j]]
        return acc

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        """Parity of hard decisions at every CN; (m,) or (B, m) uint8."""
        bits = np.asarray(bits)
        msgs = bits[..., self.edge_vn].astype(np.uint8)
        acc = np.bitwise_xor.reduceat(msgs[..., self.cn_order], self.cn_starts[:-1], axis=-1)
        return acc.astype(np.uint8)

    def digest(self) -> str:
        """Stable content hash of the graph structure."""
        h = hashlib.sha256()
        h.update(np.int64([self.num_vns, self.num_cns, self.num_edges]).tobytes())
        h.update(self.edge_vn.astype("<i4").tobytes())
        h.update(self.edge_cn.astype("<i4").tobytes())
        h.update(np.int64(sorted(self.punctured)).tobytes())
        return h.hexdigest()


def parse_base_matrix(source: str | Path, code_id: str | None = None) -> Protograph:
    """Read a shift grid from text.

    Format: first line "M N z", then an optional "punctured: v1 v2 ..."
    line, then M rows of N whitespace separated tokens. A token is either
    an integer shift in [0, z) or "-" for a null cell.

    source may be a path or the raw text itself (anything containing a
    newline is treated as text).
    """
    if isinstance(source, Path) or "\n" not in str(source):
        path = Path(source)
        text = path.read_text()
        if code_id is None:
            code_id = path.stem
    else:
        text = str(source)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CodeModelError("empty base-matrix description")
    header = lines[0].split()
    if len(header) != 3:
        raise CodeModelError(f"header must be 'M N z', got {lines[0]!r}")
    try:
        num_cns, num_vns, z = (int(t) for t in header)
    except ValueError as exc:
        raise CodeModelError(f"bad header {lines[0]!r}") from exc

    body = lines[1:]
    punctured: tuple[int, ...] = ()
    if body and body[0].startswith("punctured:"):
        try:
            punctured = tuple(int(t) for t in body[0].split(":", 1)[1].split())
        except ValueError as exc:
            raise CodeModelError("bad punctured line") from exc
        body = body[1:]
    if len(body) != num_cns:
        raise CodeModelError(f"expected {num_cns} rows, found {len(body)}")

    entries = []
    for i, row in enumerate(body):
        toks = row.split()
        if len(toks) != num_vns:
            raise CodeModelError(f"row {i} has {len(toks)} tokens, expected {num_vns}")
        for j, tok in enumerate(toks):
            if tok == "-":
                continue
            try:
                s = int(tok)
            except ValueError as exc:
                raise CodeModelError(f"bad token {tok!r} in row {i}") from exc
            entries.append((i, j, s))
    return Protograph(
        num_proto_cns=num_cns,
        num_proto_vns=num_vns,
        lift_size=z,
        entries=tuple(entries),
        punctured=punctured,
        code_id=code_id or "",
    )


def parse_alist(source: str | Path, code_id: str | None = None) -> TannerGraph:
    """Read a parity-check matrix in the conventional 1-indexed alist format.

    Layout: "n m", "dv_max dc_max", n column degrees, m row degrees, then
    n column adjacency lines and m row adjacency lines. Zero padding in the
    adjacency lines is tolerated. Both adjacency blocks are cross checked.
    """
    if isinstance(source, Path) or "\n" not in str(source):
        path = Path(source)
        text = path.read_text()
        if code_id is None:
            code_id = path.stem
    else:
        text = str(source)
    toks_by_line = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        n, m = (int(t) for t in toks_by_line[0])
        dv_max, dc_max = (int(t) for t in toks_by_line[1])
        vn_deg = [int(t) for t in toks_by_line[2]]
        cn_deg = [int(t) for t in toks_by_line[3]]
    except (IndexError, ValueError) as exc:
        raise CodeModelError("malformed alist header") from exc
    if len(vn_deg) != n or len(cn_deg) != m:
        raise CodeModelError("degree list length does not match n or m")
    if max(vn_deg, default=0) > dv_max or max(cn_deg, default=0) > dc_max:
        raise CodeModelError("degree exceeds declared maximum")
    if sum(vn_deg) != sum(cn_deg):
        raise CodeModelError("inconsistent degree lists (edge count mismatch)")
    if len(toks_by_line) < 4 + n + m:
        raise CodeModelError("alist truncated")

    col_adj = []
    for v in range(n):
        row_ids = [int(t) for t in toks_by_line[4 + v] if int(t) != 0]
        if len(row_ids) != vn_deg[v]:
            raise CodeModelError(f"column {v} adjacency disagrees with its degree")
        for c in row_ids:
            if not (1 <= c <= m):
                raise CodeModelError(f"column {v} references row {c} out of range")
        col_adj.append(row_ids)
    pairs_from_cols = {(c - 1, v) for v, rows in enumerate(col_adj) for c in rows}

    pairs_from_rows = set()
    for c in range(m):
        col_ids = [int(t) for t in toks_by_line[4 + n + c] if int(t) != 0]
        if len(col_ids) != cn_deg[c]:
            raise CodeModelError(f"row {c} adjacency disagrees with its degree")
        for v in col_ids:
            if not (1 <= v <= n):
                raise CodeModelError(f"row {c} references column {v} out of range")
            pairs_from_rows.add((c, v - 1))
    if pairs_from_cols != pairs_from_rows:
        raise CodeModelError("row and column adjacency blocks disagree")

    pairs = sorted(pairs_from_cols)  # canonical (cn, vn) order
    edge_cn = np.array([p[0] for p in pairs], dtype=np.int32)
    edge_vn = np.array([p[1] for p in pairs], dtype=np.int32)
    return TannerGraph(
        num_vns=n,
        num_cns=m,
        edge_vn=edge_vn,
        edge_cn=edge_cn,
        proto=None,
        code_id=code_id or "",
    )


def bundled_code_path(name: str) -> Path:
    """Path of a code description shipped with the package."""
    p = Path(__file__).parent / "data" / name
    if not p.exists():
        raise FileNotFoundError(f"no bundled code file named {name!r}")
    return p


def load_code(name_or_path: str | Path) -> TannerGraph:
    """Load a Tanner graph from a .bm (base matrix) or .alist file.

    Bare names are resolved against the bundled data directory first.
    """
    p = Path(name_or_path)
    if not p.exists():
        try:
            p = bundled_code_path(str(name_or_path))
        except FileNotFoundError:
            raise CodeModelError(f"code file not found: {name_or_path}")
    if p.suffix == ".alist":
        return parse_alist(p)
    return parse_base_matrix(p).lift()
