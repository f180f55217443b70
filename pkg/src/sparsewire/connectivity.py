"""Dynamic sparse connectivity stored as a padded ragged matrix.

Row ``i`` holds the postsynaptic target indices of presynaptic neuron
``i`` in ``target[i, :row_length[i]]``; rows share one padded capacity so
synapses can be added and removed without reallocation.  Synaptic
variables live in :class:`SynVarMatrix` planes of the same shape and are
kept slot-aligned through every add/remove.

Rows are independently mutable (safe to update distinct rows from
different workers); one row must never be mutated concurrently.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DuplicateEdge, RowFull, SlotOutOfRange
from .rng import CounterRng


class RaggedMatrix:
    """Padded row-major sparse connectivity (structure only, no variables)."""

    __slots__ = ("num_pre", "num_post", "max_row_length", "row_length", "target",
                 "multapse_free", "version")

    def __init__(self, num_pre: int, num_post: int, max_row_length: int,
                 multapse_free: bool = True):
        self.num_pre = num_pre
        self.num_post = num_post
        self.max_row_length = max_row_length
        self.row_length = np.zeros(num_pre, dtype=np.int32)
        self.target = np.zeros((num_pre, max(max_row_length, 1)), dtype=np.int32)
        self.multapse_free = multapse_free
        # bumped on every structural change; consumers (transpose maps)
        # compare against it to detect staleness
        self.version = 0

    def edge_count(self) -> int:
        return int(self.row_length.sum())

    def row_targets(self, i: int) -> np.ndarray:
        """View of the valid targets of row i (do not resize)."""
        return self.target[i, : self.row_length[i]]

    def contains(self, pre: int, post: int) -> bool:
        return bool(np.any(self.target[pre, : self.row_length[pre]] == post))

    def edge_list(self) -> tuple[np.ndarray, np.ndarray]:
        """(pre, post) arrays of all edges, ordered by (pre, slot)."""
        lens = self.row_length.astype(np.int64)
        pre = np.repeat(np.arange(self.num_pre, dtype=np.int64), lens)
        mask = np.arange(self.target.shape[1])[None, :] < lens[:, None]
        post = self.target[mask].astype(np.int64)
        return pre, post

    def slot_mask(self) -> np.ndarray:
        """Boolean (num_pre, capacity) mask of valid slots."""
        return np.arange(self.target.shape[1])[None, :] < self.row_length[:, None]


class SynVarMatrix:
    """Named per-synapse variable planes slot-aligned with a RaggedMatrix."""

    __slots__ = ("matrix", "planes")

    def __init__(self, matrix: RaggedMatrix, names: Iterable[str] = ()):
        self.matrix = matrix
        self.planes: dict[str, np.ndarray] = {}
        for name in names:
            self.add_plane(name)

    def add_plane(self, name: str, dtype=np.float64) -> np.ndarray:
        if name in self.planes:
            raise KeyError(f"plane {name!r} already exists")
        arr = np.zeros((self.matrix.num_pre, self.matrix.target.shape[1]), dtype=dtype)
        self.planes[name] = arr
        return arr

    def plane(self, name: str) -> np.ndarray:
        return self.planes[name]

    def row(self, name: str, i: int) -> np.ndarray:
        """View of plane values for the valid slots of row i."""
        return self.planes[name][i, : self.matrix.row_length[i]]


def add_synapse(m: RaggedMatrix, syn: SynVarMatrix | None, pre: int, post: int,
                values: dict | None = None) -> int:
    """Append a synapse pre -> post; returns its slot index.

    Named variables are set from ``values``; all other planes get zero for
    the new slot.
    """
    length = int(m.row_length[pre])
    if length >= m.max_row_length:
        raise RowFull(f"row {pre} at capacity {m.max_row_length}")
    if m.multapse_free and np.any(m.target[pre, :length] == post):
        raise DuplicateEdge(f"edge ({pre}, {post}) already exists")
    m.target[pre, length] = post
    if syn is not None:
        for name, plane in syn.planes.items():
            plane[pre, length] = 0
        if values:
            for name, v in values.items():
                syn.planes[name][pre, length] = v
    m.row_length[pre] = length + 1
    m.version += 1
    return length


def remove_synapse(m: RaggedMatrix, syn: SynVarMatrix | None, pre: int, slot: int) -> None:
    """Remove one synapse: the last valid slot is moved into its place."""
    length = int(m.row_length[pre])
    if not 0 <= slot < length:
        raise SlotOutOfRange(f"slot {slot} not in [0, {length}) of row {pre}")
    last = length - 1
    if slot != last:
        m.target[pre, slot] = m.target[pre, last]
        if syn is not None:
            for plane in syn.planes.values():
                plane[pre, slot] = plane[pre, last]
    m.row_length[pre] = last
    m.version += 1


def remove_slots(m: RaggedMatrix, syn: SynVarMatrix | None, pre: int,
                 slots) -> None:
    """Remove several slots of one row (descending order internally, so the
    swap-from-the-end moves never disturb a pending slot)."""
    slots = np.asarray(slots, dtype=np.int64)
    for s in np.sort(slots)[::-1]:
        remove_synapse(m, syn, pre, int(s))


def propagate_spikes(m: RaggedMatrix, weights: np.ndarray,
                     spikes, out: np.ndarray) -> None:
    """out[j] += sum of weights of synapses from spiking rows onto j.

    Accumulation order is fixed by (spike order, slot order), so repeated
    calls with identical inputs are bit-exact.
    """
    for i in spikes:
        length = m.row_length[i]
        np.add.at(out, m.target[i, :length], weights[i, :length])


def remap_transpose(m: RaggedMatrix) -> "TransposeMap":
    """Build the postsynaptically indexed inverse view of m."""
    tm = TransposeMap(m)
    tm.rebuild()
    return tm


class TransposeMap:
    """Column-indexed inverse of a RaggedMatrix: for each postsynaptic
    neuron j, the (pre, slot) coordinates of its incoming synapses."""

    __slots__ = ("matrix", "col_length", "source_pre", "source_slot",
                 "max_col_length", "version")

    def __init__(self, matrix: RaggedMatrix):
        self.matrix = matrix
        self.col_length = np.zeros(matrix.num_post, dtype=np.int32)
        self.source_pre = np.zeros((matrix.num_post, 1), dtype=np.int32)
        self.source_slot = np.zeros((matrix.num_post, 1), dtype=np.int32)
        self.max_col_length = 0
        self.version = -1

    def rebuild(self) -> None:
        m = self.matrix
        lens = m.row_length.astype(np.int64)
        pre = np.repeat(np.arange(m.num_pre, dtype=np.int64), lens)
        mask = np.arange(m.target.shape[1])[None, :] < lens[:, None]
        slot = np.broadcast_to(np.arange(m.target.shape[1]), m.target.shape)[mask]
        post = m.target[mask].astype(np.int64)
        counts = np.bincount(post, minlength=m.num_post)
        self.max_col_length = int(counts.max()) if counts.size else 0
        self.col_length = counts.astype(np.int32)
        width = max(self.max_col_length, 1)
        self.source_pre = np.zeros((m.num_post, width), dtype=np.int32)
        self.source_slot = np.zeros((m.num_post, width), dtype=np.int32)
        order = np.lexsort((slot, pre, post))
        post_sorted = post[order]
        within = np.arange(post_sorted.size) - np.concatenate(
            ([0], np.cumsum(counts)))[post_sorted]
        self.source_pre[post_sorted, within] = pre[order]
        self.source_slot[post_sorted, within] = slot[order]
        self.version = m.version

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(pre, slot) arrays of synapses onto postsynaptic neuron j."""
        n = self.col_length[j]
        return self.source_pre[j, :n], self.source_slot[j, :n]

    def columns(self, posts) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated (pre, slot) coordinates for several columns."""
        pres = [self.source_pre[j, : self.col_length[j]] for j in posts]
        slots = [self.source_slot[j, : self.col_length[j]] for j in posts]
        if not pres:
            empty = np.empty(0, dtype=np.int32)
            return empty, empty
        return np.concatenate(pres), np.concatenate(slots)

    def is_stale(self) -> bool:
        return self.version != self.matrix.version


def init_pairwise_bernoulli(num_pre: int, num_post: int,
                            prob_fn: Callable[[int, np.ndarray], np.ndarray],
                            capacity_headroom: float,
                            rng: CounterRng,
                            var_names: Sequence[str] = (),
                            multapse_free: bool = True,
                            ) -> tuple[RaggedMatrix, SynVarMatrix]:
    """Connect each (i, j) pair independently with probability prob_fn(i, j).

    ``prob_fn`` receives a row index and the full array of column indices
    and must return the per-pair probabilities for that row.  Capacity is
    set after sampling to ceil(headroom * max realized row length), capped
    at num_post in multapse-free mode (more slots could never be filled).
    """
    if capacity_headroom < 1.0:
        raise ValueError("capacity_headroom must be >= 1")
    cols = np.arange(num_post, dtype=np.int64)
    rows: list[np.ndarray] = []
    max_len = 0
    for i in range(num_pre):
        p = np.asarray(prob_fn(i, cols), dtype=np.float64)
        u = rng.uniform01_array(num_post)
        hit = np.flatnonzero(u < p)
        rows.append(hit)
        max_len = max(max_len, hit.size)
    capacity = math.ceil(capacity_headroom * max_len)
    if multapse_free:
        capacity = min(capacity, num_post)
    m = RaggedMatrix(num_pre, num_post, capacity, multapse_free=multapse_free)
    for i, hit in enumerate(rows):
        m.row_length[i] = hit.size
        m.target[i, : hit.size] = hit
    m.version += 1
    return m, SynVarMatrix(m, var_names)


# -- test/debug helpers (not simulation paths) --------------------------

def densify(m: RaggedMatrix, weights: np.ndarray | None = None) -> np.ndarray:
    """Dense boolean mask, or dense weight matrix when a plane is given."""
    if weights is None:
        out = np.zeros((m.num_pre, m.num_post), dtype=bool)
    else:
        out = np.zeros((m.num_pre, m.num_post), dtype=weights.dtype)
    for i in range(m.num_pre):
        n = m.row_length[i]
        if weights is None:
            out[i, m.target[i, :n]] = True
        else:
            out[i, m.target[i, :n]] = weights[i, :n]
    return out


def write_snapshot_csv(fh, m: RaggedMatrix, syn: SynVarMatrix | None = None,
                       columns: Sequence[tuple[str, str]] = (("weight", "g"),),
                       ) -> None:
    """Write edges as CSV ``pre,post[,var...]`` sorted by (pre, post)."""
    pre, post = m.edge_list()
    mask = m.slot_mask()
    order = np.lexsort((post, pre))
    header = "pre,post"
    cols: list[np.ndarray] = []
    if syn is not None:
        for label, plane in columns:
            header += "," + label
            cols.append(syn.planes[plane][mask][order])
    fh.write(header + "\n")
    pre = pre[order]
    post = post[order]
    for k in range(pre.size):
        extra = "".join("," + repr(float(c[k])) for c in cols)
        fh.write(f"{pre[k]},{post[k]}{extra}\n")


def write_dense_mask(fh, m: RaggedMatrix) -> None:
    """Debug dump: text grid of 0/1, one row per presynaptic neuron."""
    dense = densify(m)
    for i in range(m.num_pre):
        fh.write("".join("1" if x else "0" for x in dense[i]) + "\n")
