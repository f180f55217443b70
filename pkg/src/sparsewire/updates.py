"""Structural-plasticity rule framework.

A rule runs in two phases: a serial host phase on the coordinating
thread, then a row phase executed once per presynaptic row of the target
matrix.  Row phases may mutate only their own row (connectivity slots,
synaptic variable slots, per-pre element, bitfield row) plus read
per-post variables, so the framework may run them on any number of
workers; every random draw comes from a counter-based stream keyed by
(seed, rule, update index, row), which makes results bit-identical for
any worker count.

Rules are grouped into named update groups and run in registration
order.  After a rule has mutated a matrix for which a transpose map is
registered, the map is rebuilt (unless unchanged, or always when
``always_remap`` is set) and the time booked to the remap timer.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import connectivity as conn
from .connectivity import RaggedMatrix, SynVarMatrix, TransposeMap
from .errors import DuplicateName, UnresolvedReference
from .rng import CounterRng

PHASES = ("neuron_update", "presynaptic_update", "postsynaptic_update",
          "host_update", "row_update", "remap")


class PhaseTimers:
    """Accumulated wall-clock seconds per simulation phase."""

    __slots__ = ("seconds",)

    def __init__(self):
        self.seconds = {p: 0.0 for p in PHASES}

    def add(self, phase: str, dt: float) -> None:
        self.seconds[phase] += dt

    def total(self) -> float:
        return sum(self.seconds.values())

    def write_csv(self, fh) -> None:
        fh.write("phase,seconds\n")
        for p in PHASES:
            fh.write(f"{p},{self.seconds[p]:.9f}\n")
        fh.write(f"total,{self.total():.9f}\n")


@dataclass
class RuleDescriptor:
    """One structural-plasticity rule.

    ``pre_vars``/``post_vars``/``syn_vars`` declare owned variables
    (name, dtype) that the framework allocates zero-initialized; the
    ``*_refs`` tuples name existing arrays/planes that must resolve when
    the rule is registered.  ``active_rows`` is an optional host-side
    hint returning the rows whose row phase is not a no-op this update;
    rows outside the returned set are skipped.  ``continue_after_pass``
    lets a rule request another host+row pass within the same update
    (used for bounded retry loops).
    """

    name: str
    host_phase: Callable | None = None
    row_phase: Callable | None = None
    pre_vars: tuple = ()
    post_vars: tuple = ()
    syn_vars: tuple = ()
    var_refs: tuple = ()
    pre_var_refs: tuple = ()
    post_var_refs: tuple = ()
    active_rows: Callable | None = None
    continue_after_pass: Callable | None = None


class RuleBinding:
    """A registered rule: descriptor + resolved storage on one matrix."""

    __slots__ = ("rule", "rule_id", "matrix_name", "matrix", "syn",
                 "pre_arrays", "post_arrays", "update_count")

    def __init__(self, rule, rule_id, matrix_name, matrix, syn,
                 pre_arrays, post_arrays):
        self.rule = rule
        self.rule_id = rule_id
        self.matrix_name = matrix_name
        self.matrix = matrix
        self.syn = syn
        self.pre_arrays = pre_arrays
        self.post_arrays = post_arrays
        self.update_count = 0


class HostContext:
    """Serial-phase view of the model: full per-pre/per-post arrays and a
    host random stream.  Host code may not mutate connectivity."""

    __slots__ = ("model", "binding", "rng", "pass_index")

    def __init__(self, model, binding, rng, pass_index):
        self.model = model
        self.binding = binding
        self.rng = rng
        self.pass_index = pass_index

    @property
    def num_pre(self) -> int:
        return self.binding.matrix.num_pre

    @property
    def num_post(self) -> int:
        return self.binding.matrix.num_post

    def pre(self, name: str) -> np.ndarray:
        return self.binding.pre_arrays[name]

    def post(self, name: str) -> np.ndarray:
        return self.binding.post_arrays[name]


class RowContext:
    """Row-phase view bound to one presynaptic row.

    All access goes through this object so a test harness can substitute
    an auditing subclass; see ``Model.run_update_group(ctx_cls=...)``.
    """

    __slots__ = ("binding", "row", "rng", "_cursor", "_removed")

    def __init__(self, binding):
        self.binding = binding
        self.row = -1
        self.rng = None
        self._cursor = 0
        self._removed = False

    def bind(self, row: int, rng: CounterRng) -> "RowContext":
        self.row = row
        self.rng = rng
        self._cursor = -1
        return self

    @property
    def id_pre(self) -> int:
        return self.row

    @property
    def num_post(self) -> int:
        return self.binding.matrix.num_post

    @property
    def row_len(self) -> int:
        return int(self.binding.matrix.row_length[self.row])

    def targets(self) -> np.ndarray:
        return self.binding.matrix.row_targets(self.row)

    def syn(self, name: str) -> np.ndarray:
        return self.binding.syn.row(name, self.row)

    def pre(self, name: str):
        return self.binding.pre_arrays[name][self.row]

    def set_pre(self, name: str, value) -> None:
        self.binding.pre_arrays[name][self.row] = value

    def post(self, name: str) -> np.ndarray:
        """Per-post array (read it, do not write from row phases)."""
        return self.binding.post_arrays[name]

    # -- structural mutation (this row only) ----------------------------

    def add_synapse(self, post: int, **values) -> int:
        return conn.add_synapse(self.binding.matrix, self.binding.syn,
                                self.row, post, values)

    def remove_slot(self, slot: int) -> None:
        conn.remove_synapse(self.binding.matrix, self.binding.syn, self.row, slot)

    def remove_slots(self, slots) -> None:
        conn.remove_slots(self.binding.matrix, self.binding.syn, self.row, slots)

    def for_each_synapse(self):
        """Iterate the row's synapses; supports removal mid-iteration.

        Yields this context; read ``ctx.id_post`` / ``ctx.get(name)`` and
        call ``ctx.remove_synapse()`` for the current synapse.  After a
        removal the slot is revisited (it now holds the previous last
        synapse of the row).
        """
        m = self.binding.matrix
        self._cursor = 0
        try:
            while self._cursor < m.row_length[self.row]:
                self._removed = False
                yield self
                if not self._removed:
                    self._cursor += 1
        finally:
            self._cursor = -1

    def _slot(self) -> int:
        if self._cursor < 0:
            raise RuntimeError("only valid inside for_each_synapse")
        return self._cursor

    @property
    def id_post(self) -> int:
        return int(self.binding.matrix.target[self.row, self._slot()])

    def get(self, name: str):
        return self.binding.syn.planes[name][self.row, self._slot()]

    def set(self, name: str, value) -> None:
        self.binding.syn.planes[name][self.row, self._slot()] = value

    def remove_synapse(self) -> None:
        conn.remove_synapse(self.binding.matrix, self.binding.syn,
                            self.row, self._slot())
        self._removed = True


class Model:
    """Registry of matrices, layer arrays, transpose maps and rule groups."""

    def __init__(self, seed: int, workers: int = 1, always_remap: bool = False):
        self.seed = seed
        self.workers = max(1, workers)
        self.always_remap = always_remap
        self.timers = PhaseTimers()
        self.matrices: dict[str, tuple[RaggedMatrix, SynVarMatrix]] = {}
        self.arrays: dict[str, np.ndarray] = {}
        self.groups: dict[str, list[RuleBinding]] = {}
        self.transposes: dict[str, TransposeMap] = {}
        self._rule_names: set[str] = set()
        self._next_rule_id = 0
        self._pool: ThreadPoolExecutor | None = None

    # -- registration ----------------------------------------------------

    def add_matrix(self, name: str, matrix: RaggedMatrix, syn: SynVarMatrix):
        if name in self.matrices:
            raise DuplicateName(f"matrix {name!r} already registered")
        self.matrices[name] = (matrix, syn)
        return matrix, syn

    def add_array(self, name: str, arr: np.ndarray) -> np.ndarray:
        if name in self.arrays:
            raise DuplicateName(f"array {name!r} already registered")
        self.arrays[name] = arr
        return arr

    def register_transpose(self, matrix_name: str) -> TransposeMap:
        matrix, _ = self.matrices[matrix_name]
        tm = self.transposes.get(matrix_name)
        if tm is None:
            tm = TransposeMap(matrix)
            tm.rebuild()
            self.transposes[matrix_name] = tm
        return tm

    def add_rule(self, group: str, matrix_name: str, rule: RuleDescriptor) -> RuleBinding:
        if matrix_name not in self.matrices:
            raise UnresolvedReference(f"matrix {matrix_name!r} not registered")
        if rule.name in self._rule_names:
            raise DuplicateName(f"rule {rule.name!r} already registered")
        matrix, syn = self.matrices[matrix_name]
        pre_arrays: dict[str, np.ndarray] = {}
        post_arrays: dict[str, np.ndarray] = {}
        for name, dtype in rule.pre_vars:
            pre_arrays[name] = np.zeros(matrix.num_pre, dtype=dtype)
        for name, dtype in rule.post_vars:
            post_arrays[name] = np.zeros(matrix.num_post, dtype=dtype)
        for name, dtype in rule.syn_vars:
            syn.add_plane(name, dtype)
        for name in rule.var_refs:
            if name not in syn.planes:
                raise UnresolvedReference(
                    f"rule {rule.name!r}: synaptic plane {name!r} missing on {matrix_name!r}")
        for name in rule.pre_var_refs:
            arr = self.arrays.get(name)
            if arr is None or len(arr) != matrix.num_pre:
                raise UnresolvedReference(
                    f"rule {rule.name!r}: per-pre array {name!r} missing or wrong extent")
            pre_arrays[name] = arr
        for name in rule.post_var_refs:
            arr = self.arrays.get(name)
            if arr is None or len(arr) != matrix.num_post:
                raise UnresolvedReference(
                    f"rule {rule.name!r}: per-post array {name!r} missing or wrong extent")
            post_arrays[name] = arr
        binding = RuleBinding(rule, self._next_rule_id, matrix_name, matrix, syn,
                              pre_arrays, post_arrays)
        self._next_rule_id += 1
        self._rule_names.add(rule.name)
        self.groups.setdefault(group, []).append(binding)
        return binding

    # -- execution ---------------------------------------------------------

    def _run_rows(self, binding: RuleBinding, rows, pass_index: int, ctx_cls) -> None:
        rule = binding.rule
        # one folded base per (rule, update, pass); per-row streams are
        # derived children, so a row's draws depend only on its own key
        base = CounterRng(self.seed, "row", binding.rule_id,
                          binding.update_count, pass_index)
        if self.workers == 1 or len(rows) < 2:
            ctx = ctx_cls(binding)
            for r in rows:
                rule.row_phase(ctx.bind(int(r), CounterRng.from_key(base.child_key(int(r)))))
            return
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.workers)
        chunks = np.array_split(np.asarray(rows), self.workers)

        def run_chunk(chunk):
            ctx = ctx_cls(binding)
            for r in chunk:
                rule.row_phase(ctx.bind(int(r), CounterRng.from_key(base.child_key(int(r)))))

        futures = [self._pool.submit(run_chunk, c) for c in chunks if len(c)]
        for f in futures:
            f.result()

    def run_update_group(self, group: str, ctx_cls=RowContext) -> None:
        """Run every rule of the group, in registration order.

        Per rule: host phase, then the row phase over all (or the declared
        active) rows, repeated while the rule asks for another pass; then
        the transpose remap if the matrix changed and has a registered
        map.  Rule errors propagate and abort the group.
        """
        for binding in self.groups[group]:
            rule = binding.rule
            version_before = binding.matrix.version
            pass_index = 0
            while True:
                hctx = HostContext(self, binding,
                                   CounterRng(self.seed, "host", binding.rule_id,
                                              binding.update_count, pass_index),
                                   pass_index)
                if rule.host_phase is not None:
                    t0 = time.perf_counter()
                    rule.host_phase(hctx)
                    self.timers.add("host_update", time.perf_counter() - t0)
                if rule.row_phase is not None:
                    rows = (rule.active_rows(hctx) if rule.active_rows is not None
                            else range(binding.matrix.num_pre))
                    t0 = time.perf_counter()
                    self._run_rows(binding, rows, pass_index, ctx_cls)
                    self.timers.add("row_update", time.perf_counter() - t0)
                pass_index += 1
                if rule.continue_after_pass is None or not rule.continue_after_pass(hctx):
                    break
                if pass_index > 2 * binding.matrix.num_pre + 16:
                    raise RuntimeError(
                        f"rule {rule.name!r} did not converge after {pass_index} passes")
            binding.update_count += 1
            tm = self.transposes.get(binding.matrix_name)
            if tm is not None and (self.always_remap
                                   or binding.matrix.version != version_before):
                t0 = time.perf_counter()
                tm.rebuild()
                self.timers.add("remap", time.perf_counter() - t0)
