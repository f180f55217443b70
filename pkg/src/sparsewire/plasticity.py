"""Weight-change rules: trace-based STDP, eligibility-trace credit
assignment for the recurrent classifier, the output delta rule and Adam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .connectivity import RaggedMatrix, SynVarMatrix, TransposeMap
from .errors import StaleTranspose
from .neurons import AlifLayer


# ----------------------------------------------------------------------
# STDP (all-to-all spike pairing with per-neuron traces)
# ----------------------------------------------------------------------

@dataclass
class StdpParams:
    """Conductance STDP constants (mS, ms).

    ``a_plus`` is stored pre-multiplied by g_max; depression strength is
    derived from the potentiation/depression balance ratio.
    """

    g_max: float = 0.2
    w_min: float = 0.0
    w_max: float = 0.2
    a_plus: float = 0.1 * 0.2
    tau_plus: float = 20.0
    tau_minus: float = 64.0
    b_ratio: float = 1.2

    @property
    def a_minus(self) -> float:
        return self.b_ratio * self.a_plus * self.tau_plus / self.tau_minus


class StdpSynapses:
    """Trace STDP on one projection.

    ``x`` is the presynaptic trace (one per row), ``y`` the postsynaptic
    trace (one per column).  Event ordering per step: depression for all
    presynaptic spikes first (using y before this step's increments),
    then x increments, then potentiation for postsynaptic spikes (x may
    already include same-step presynaptic increments), then y increments.
    Weights are clamped to [w_min, w_max] after every event batch.
    """

    def __init__(self, matrix: RaggedMatrix, syn: SynVarMatrix, h: float,
                 params: StdpParams | None = None, weight_plane: str = "g"):
        self.matrix = matrix
        self.syn = syn
        self.params = params or StdpParams()
        self.weight_plane = weight_plane
        self.x = np.zeros(matrix.num_pre, dtype=np.float64)
        self.y = np.zeros(matrix.num_post, dtype=np.float64)
        self._decay_x = math.exp(-h / self.params.tau_plus)
        self._decay_y = math.exp(-h / self.params.tau_minus)

    def decay_step(self) -> None:
        self.x *= self._decay_x
        self.y *= self._decay_y

    def on_pre_spikes(self, pre_indices) -> None:
        """Depress each synapse of the spiking rows, then bump x."""
        p = self.params
        w = self.syn.planes[self.weight_plane]
        tgt = self.matrix.target
        lens = self.matrix.row_length
        y = self.y
        for i in np.asarray(pre_indices).tolist():
            n = lens[i]
            row = w[i, :n]
            row -= p.a_minus * y[tgt[i, :n]]
            np.maximum(row, p.w_min, out=row)
            np.minimum(row, p.w_max, out=row)
        self.x[pre_indices] += 1.0

    def on_post_spikes(self, tmap: TransposeMap, post_indices) -> None:
        """Potentiate incoming synapses of the spiking columns, then bump y."""
        if tmap.is_stale():
            raise StaleTranspose("transpose map older than its matrix")
        p = self.params
        w = self.syn.planes[self.weight_plane]
        pre, slot = tmap.columns(post_indices)
        if pre.size:
            bumped = w[pre, slot] + p.a_plus * self.x[pre]
            np.maximum(bumped, p.w_min, out=bumped)
            np.minimum(bumped, p.w_max, out=bumped)
            w[pre, slot] = bumped
        self.y[post_indices] += 1.0


# ----------------------------------------------------------------------
# Eligibility traces for the recurrent classifier
# ----------------------------------------------------------------------

class EpropSynapses:
    """Per-synapse eligibility state on one projection (unbatched).

    Allocates the ``eps`` (adaptation eligibility), ``ebar`` (filtered
    eligibility) and ``grad`` planes on the projection's variable matrix
    so they stay slot-aligned through structural changes.  ``z_bar`` is
    the filtered presynaptic spike trace.
    """

    def __init__(self, matrix: RaggedMatrix, syn: SynVarMatrix,
                 alpha: float, rho: float, beta: float):
        self.matrix = matrix
        self.syn = syn
        self.alpha = alpha
        self.rho = rho
        self.beta = beta
        for name in ("eps", "ebar", "grad"):
            if name not in syn.planes:
                syn.add_plane(name)
        self.z_bar = np.zeros(matrix.num_pre, dtype=np.float64)

    def reset_traces(self) -> None:
        self.z_bar[:] = 0
        self.syn.planes["eps"][:] = 0
        self.syn.planes["ebar"][:] = 0

    def accumulate_step(self, pre_spike_flags: np.ndarray, post_state: AlifLayer,
                        learning_signal: np.ndarray) -> None:
        """One step of the eligibility recursion plus gradient accumulation.

        The fast component e is computed from the current eligibility,
        then eps advances; invalid padding slots are masked so they stay
        exactly zero.
        """
        m = self.matrix
        self.z_bar = self.alpha * self.z_bar + pre_spike_flags
        psi = post_state.surrogate()
        valid = m.slot_mask()
        psi_slot = psi[m.target] * valid
        eps = self.syn.planes["eps"]
        ebar = self.syn.planes["ebar"]
        grad = self.syn.planes["grad"]
        e = psi_slot * (self.z_bar[:, None] - self.beta * eps)
        ebar *= self.alpha
        ebar += e
        grad += learning_signal[m.target] * ebar * valid
        eps *= self.rho
        eps += e


# ----------------------------------------------------------------------
# Softmax loss, learning signal, output delta rule
# ----------------------------------------------------------------------

def softmax(y: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, numerically stable."""
    shifted = y - y.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(pi: np.ndarray, one_hot: np.ndarray) -> np.ndarray:
    """Per-row cross-entropy -log pi[label]."""
    return -np.log(np.sum(pi * one_hot, axis=-1))


def learning_signal(w_out: np.ndarray, pi_err: np.ndarray) -> np.ndarray:
    """Feedback signal per hidden neuron: (pi - pi*) fed back through the
    transpose of the output weights."""
    return pi_err @ w_out


class DeltaRuleAccumulator:
    """Accumulates output-layer gradients over an example:
    dW[k, j] += (pi_k - pi*_k) * z_bar_j and db[k] += (pi_k - pi*_k)."""

    def __init__(self, num_out: int, num_hidden: int):
        self.d_w = np.zeros((num_out, num_hidden), dtype=np.float64)
        self.d_b = np.zeros(num_out, dtype=np.float64)

    def reset(self) -> None:
        self.d_w[:] = 0
        self.d_b[:] = 0

    def step(self, pi_err: np.ndarray, z_bar: np.ndarray) -> None:
        self.d_w += np.outer(pi_err, z_bar)
        self.d_b += pi_err


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------

class Adam:
    """Adam with bias correction; gradients are zeroed after application.

    Moment buffers are passed in (or allocated) so that, for synaptic
    parameters, they can live as slot-aligned planes of the connectivity
    and follow structural rewiring.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, m: np.ndarray | None = None,
                 v: np.ndarray | None = None, shape=None):
        if m is None:
            m = np.zeros(shape)
        if v is None:
            v = np.zeros(shape)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = m
        self.v = v
        self.t = 0

    def apply(self, params: np.ndarray, grads: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grads
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        grads[...] = 0
