"""Time-stepped neuron and input models.

All layers hold their state in numpy arrays and update in place.  State
arrays may carry a leading batch dimension; the spike-index return
values are only available for unbatched (1-D) layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import GridGeometry
from .rng import CounterRng


@dataclass
class AlifParams:
    """Adaptive LIF constants (dimensionless voltage, dt in ms)."""

    tau_mem: float = 20.0
    tau_adapt: float = 2000.0
    beta: float = 0.0174
    v_thr: float = 0.6
    dt: float = 1.0

    @property
    def alpha(self) -> float:
        return math.exp(-self.dt / self.tau_mem)

    @property
    def rho(self) -> float:
        return math.exp(-self.dt / self.tau_adapt)


class AlifLayer:
    """Adaptive leaky integrate-and-fire with soft reset.

    Per step: v <- alpha*(v - z*v_thr) + rec_input + ext_input using the
    previous step's spike flags z, then a <- rho*a + z, then new flags
    z = H(v - (v_thr + beta*a)).
    """

    def __init__(self, n: int, params: AlifParams | None = None,
                 batch: int | None = None, dtype=np.float64):
        self.n = n
        self.params = params or AlifParams()
        shape = (n,) if batch is None else (batch, n)
        self.v = np.zeros(shape, dtype=dtype)
        self.a = np.zeros(shape, dtype=dtype)
        self.z = np.zeros(shape, dtype=dtype)

    def reset(self) -> None:
        self.v[...] = 0
        self.a[...] = 0
        self.z[...] = 0

    def step(self, rec_input: np.ndarray, ext_input: np.ndarray):
        p = self.params
        self.v = p.alpha * (self.v - self.z * p.v_thr) + rec_input + ext_input
        self.a = p.rho * self.a + self.z
        self.z = (self.v >= p.v_thr + p.beta * self.a).astype(self.v.dtype)
        if self.v.ndim == 1:
            return np.flatnonzero(self.z)
        return None

    def surrogate(self) -> np.ndarray:
        """Triangular pseudo-derivative of the spike threshold."""
        p = self.params
        centered = (self.v - (p.v_thr + p.beta * self.a)) / p.v_thr
        return (0.3 / p.v_thr) * np.maximum(0.0, 1.0 - np.abs(centered))


class ReadoutLayer:
    """Leaky-integrator readout: y <- alpha*y + input + bias."""

    def __init__(self, n: int, alpha: float, batch: int | None = None,
                 dtype=np.float64):
        self.n = n
        self.alpha = alpha
        shape = (n,) if batch is None else (batch, n)
        self.y = np.zeros(shape, dtype=dtype)
        self.b_out = np.zeros(n, dtype=dtype)

    def reset(self) -> None:
        self.y[...] = 0

    def step(self, weighted_input: np.ndarray) -> np.ndarray:
        self.y = self.alpha * self.y + weighted_input + self.b_out
        return self.y


@dataclass
class LifCondParams:
    """Conductance-based LIF constants (mV, ms, nF; conductances in uS)."""

    c_m: float = 20.0          # nF
    tau_m: float = 20.0        # ms
    v_rest: float = -70.0      # mV
    e_exc: float = 0.0         # mV (reversal potential of excitation)
    v_theta: float = -54.0     # mV
    v_reset: float = -70.0     # mV
    tau_ref: float = 5.0       # ms
    tau_s: float = 5.0         # ms
    t_delay: float = 0.1       # ms, one simulation step
    h: float = 0.1             # ms

    @property
    def g_leak(self) -> float:
        # nF / ms = uS, the unit all synaptic conductances are kept in
        return self.c_m / self.tau_m


class LifCondLayer:
    """Conductance-based LIF integrated with the exponential Euler method.

    Each step: g first receives the conductance of spikes delivered this
    step (one-step transmission delay is the caller's bookkeeping), then
    decays by exp(-h/tau_s); the membrane is integrated treating g as
    constant over the step.  A threshold crossing resets V and clamps it
    at V_reset for tau_ref.
    """

    def __init__(self, n: int, params: LifCondParams | None = None):
        self.n = n
        self.params = params or LifCondParams()
        p = self.params
        self.V = np.full(n, p.v_rest, dtype=np.float64)
        self.g = np.zeros(n, dtype=np.float64)
        # step index until which (inclusive) the neuron stays clamped
        self.refractory_until = np.full(n, -1, dtype=np.int64)
        self._decay_s = math.exp(-p.h / p.tau_s)
        self._ref_steps = int(round(p.tau_ref / p.h))

    def step(self, incoming_conductance: np.ndarray, step_index: int) -> np.ndarray:
        p = self.params
        self.g = (self.g + incoming_conductance) * self._decay_s
        active = step_index > self.refractory_until
        r = self.g / p.g_leak
        v_inf = (p.v_rest + r * p.e_exc) / (1.0 + r)
        v_new = v_inf + (self.V - v_inf) * np.exp(-p.h * (1.0 + r) / p.tau_m)
        self.V = np.where(active, v_new, p.v_reset)
        spiking = active & (self.V >= p.v_theta)
        self.V[spiking] = p.v_reset
        self.refractory_until[spiking] = step_index + self._ref_steps
        return np.flatnonzero(spiking)


@dataclass
class PoissonParams:
    f_base: float = 5.0        # Hz
    f_peak: float = 152.8      # Hz
    sigma_stim: float = 2.0    # grid units
    t_stim: float = 20.0       # ms between stimulus-center changes


class PoissonSource:
    """Poisson spike generator with spatially correlated rates.

    Rates follow a Gaussian bump around each stimulus center on the torus;
    with several centers the bumps sum.  Spiking per step is Bernoulli
    with p = 1 - exp(-rate*h), exact for an at-most-one-spike-per-step
    discretization.
    """

    def __init__(self, geometry: GridGeometry, params: PoissonParams | None = None):
        self.geometry = geometry
        self.params = params or PoissonParams()
        self.rates = np.full(geometry.n, self.params.f_base, dtype=np.float64)
        self._p = None
        self._p_h = None

    def set_correlated_rates(self, centers) -> None:
        """centers: iterable of (x, y) points (continuous, torus wrapped)."""
        p = self.params
        bump = np.zeros(self.geometry.n)
        for (cx, cy) in centers:
            d = self.geometry.distance_to_point(cx, cy)
            bump += np.exp(-(d * d) / (2.0 * p.sigma_stim ** 2))
        self.rates = p.f_base + p.f_peak * bump
        self._p = None

    def set_uniform_rate(self, rate_hz: float) -> None:
        self.rates = np.full(self.geometry.n, rate_hz, dtype=np.float64)
        self._p = None

    def poisson_step(self, rng: CounterRng, h: float) -> np.ndarray:
        """Spike indices for one step of h ms."""
        if self._p is None or self._p_h != h:
            self._p = 1.0 - np.exp(-self.rates * h * 1e-3)
            self._p_h = h
        u = rng.uniform01_array(self.geometry.n)
        return np.flatnonzero(u < self._p)
