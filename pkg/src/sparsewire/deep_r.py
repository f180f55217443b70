"""Rewiring at constant sparsity driven by weight-sign flips.

Two bitfields accompany the connectivity: one mirrors which synapses
exist (fast duplicate lookup), the other fixes the sign of every
potential connection.  Training pushes weights toward zero with an L1
nudge on the gradients; a synapse whose weight crosses to the wrong side
of zero is removed ("dormant"), and the same number of fresh zero-weight
synapses is created at uniformly random locations, so the total synapse
count never changes.
"""

from __future__ import annotations

import numpy as np

from .bitfield import Bitfield
from .connectivity import RaggedMatrix, SynVarMatrix
from .errors import RowFull
from .rng import CounterRng
from .updates import RuleDescriptor


class DeepR:
    """Rewiring state plus the eliminate/form rule pair for one matrix.

    ``exclude_diagonal`` keeps self-connections out of recurrent weight
    matrices, matching their construction.
    """

    def __init__(self, matrix: RaggedMatrix, syn: SynVarMatrix, name: str,
                 weight_plane: str = "w", grad_plane: str = "grad",
                 l1_strength: float = 0.005, exclude_diagonal: bool = False):
        self.matrix = matrix
        self.syn = syn
        self.name = name
        self.weight_plane = weight_plane
        self.grad_plane = grad_plane
        self.l1_strength = l1_strength
        self.exclude_diagonal = exclude_diagonal
        self.sign_bits = Bitfield(matrix.num_pre, matrix.num_post)
        self.conn_bits = Bitfield(matrix.num_pre, matrix.num_post)
        self.dormant = np.zeros(matrix.num_pre, dtype=np.int64)
        self._unplaced = np.zeros(matrix.num_pre, dtype=np.int64)
        self._activations = np.zeros(matrix.num_pre, dtype=np.int64)
        self._no_progress_passes = 0
        self.last_removed = 0

    # -- initialization ---------------------------------------------------

    def init_bitfields(self, rng: CounterRng) -> None:
        """Randomize all sign bits, then overwrite them to match the sign
        of every existing weight; mirror the edge set into the
        connectivity bits."""
        self.sign_bits.randomize(rng)
        self.conn_bits.clear_all()
        w = self.syn.planes[self.weight_plane]
        for i in range(self.matrix.num_pre):
            tg = self.matrix.row_targets(i)
            if tg.size == 0:
                continue
            self.conn_bits.set_bits(i, tg)
            wrow = w[i, : tg.size]
            self.sign_bits.set_bits(i, tg[wrow > 0])
            self.sign_bits.clear_bits(i, tg[wrow < 0])

    # -- L1 gradient nudge --------------------------------------------------

    def l1_step(self) -> None:
        """Push every live weight toward zero: add +l1 to gradients of
        positive-sign synapses and -l1 to negative-sign ones (descent then
        shrinks the magnitude either way)."""
        if self.l1_strength == 0.0:
            return
        grad = self.syn.planes[self.grad_plane]
        signs = self.sign_bits.test_bits_rows(self.matrix.target)
        nudge = np.where(signs, self.l1_strength, -self.l1_strength)
        grad += nudge * self.matrix.slot_mask()

    # -- eliminate rule -------------------------------------------------------

    def _eliminate_host(self, ctx) -> None:
        self.dormant[:] = 0

    def _eliminate_row(self, ctx) -> None:
        i = ctx.id_pre
        n = ctx.row_len
        if n == 0:
            return
        tg = ctx.targets()
        w = ctx.syn(self.weight_plane)
        positive_bit = self.sign_bits.test_bits(i, tg)
        mismatch = ((w < 0) & positive_bit) | ((w > 0) & ~positive_bit)
        if not mismatch.any():
            return
        slots = np.flatnonzero(mismatch)
        removed_targets = tg[slots].copy()
        ctx.remove_slots(slots)
        self.conn_bits.clear_bits(i, removed_targets)
        self.dormant[i] = slots.size

    def eliminate_rule(self) -> RuleDescriptor:
        return RuleDescriptor(
            name=f"{self.name}_eliminate",
            host_phase=self._eliminate_host,
            row_phase=self._eliminate_row,
        )

    # -- form rule ---------------------------------------------------------

    def _form_host(self, ctx) -> None:
        if ctx.pass_index == 0:
            pending = int(self.dormant.sum())
            self.last_removed = pending
            self._no_progress_passes = 0
        else:
            pending = int(self._unplaced.sum())
        self._activations[:] = 0
        num_pre = self.matrix.num_pre
        for _ in range(pending):
            self._activations[ctx.rng.uniform_int(num_pre)] += 1
        self._unplaced[:] = 0

    def _form_active_rows(self, ctx) -> np.ndarray:
        return np.flatnonzero(self._activations)

    def _form_row(self, ctx) -> None:
        i = ctx.id_pre
        num_post = self.matrix.num_post
        for _ in range(int(self._activations[i])):
            if ctx.row_len >= self.matrix.max_row_length:
                self._unplaced[i] += 1
                continue
            placed = False
            for _ in range(num_post):
                j = ctx.rng.uniform_int(num_post)
                if self.exclude_diagonal and j == i:
                    continue
                if self.conn_bits.test_bit(i, j):
                    continue
                ctx.add_synapse(j, **{self.weight_plane: 0.0})
                self.conn_bits.set_bit(i, j)
                placed = True
                break
            if not placed:
                self._unplaced[i] += 1

    def _form_continue(self, ctx) -> bool:
        unplaced = int(self._unplaced.sum())
        if unplaced == 0:
            return False
        placed_this_pass = int(self._activations.sum()) - unplaced
        if placed_this_pass == 0:
            self._no_progress_passes += 1
            if self._no_progress_passes >= self.matrix.num_pre:
                raise RowFull(
                    f"{self.name}: could not place {unplaced} new synapses "
                    f"after {self._no_progress_passes} stalled passes")
        else:
            self._no_progress_passes = 0
        return True

    def form_rule(self) -> RuleDescriptor:
        return RuleDescriptor(
            name=f"{self.name}_form",
            host_phase=self._form_host,
            row_phase=self._form_row,
            active_rows=self._form_active_rows,
            continue_after_pass=self._form_continue,
        )

    def register(self, model, group: str, matrix_name: str) -> None:
        model.add_rule(group, matrix_name, self.eliminate_rule())
        model.add_rule(group, matrix_name, self.form_rule())

    def rewiring_fraction(self) -> float:
        total = self.matrix.edge_count()
        return self.last_removed / total if total else 0.0
