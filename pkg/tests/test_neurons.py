"""Neuron and input models against closed-form and statistical oracles."""

import math

import numpy as np

from sparsewire.geometry import GridGeometry
from sparsewire.neurons import (AlifLayer, AlifParams, LifCondLayer,
                                LifCondParams, PoissonSource, ReadoutLayer)
from sparsewire.rng import CounterRng

ALPHA = math.exp(-1.0 / 20.0)


class TestAlif:
    def test_free_decay_one_step(self):
        layer = AlifLayer(1)
        layer.v[0] = 1.0
        layer.step(np.zeros(1), np.zeros(1))
        assert layer.v[0] == ALPHA  # e**-0.05 = 0.951229...
        assert abs(layer.v[0] - 0.951229) < 1e-6

    def test_constant_input_converges_to_geometric_sum(self):
        # threshold moved out of reach so the leak fully determines v
        layer = AlifLayer(1, AlifParams(v_thr=1e9))
        drive = np.array([0.01])
        for _ in range(2000):
            layer.step(np.zeros(1), drive)
        assert abs(layer.v[0] - 0.01 / (1 - ALPHA)) < 1e-12

    def test_threshold_crossing_and_soft_reset(self):
        layer = AlifLayer(1)
        spikes = layer.step(np.zeros(1), np.array([0.7]))
        assert spikes.tolist() == [0]
        assert layer.z[0] == 1.0
        layer.step(np.zeros(1), np.zeros(1))
        # previous-step spike subtracts v_thr before the decay
        assert abs(layer.v[0] - ALPHA * (0.7 - 0.6)) < 1e-12

    def test_adaptation_raises_threshold(self):
        layer = AlifLayer(1)
        layer.step(np.zeros(1), np.array([0.7]))  # spike; a becomes 1 next step
        layer.step(np.zeros(1), np.array([0.7]))
        thr = layer.params.v_thr + layer.params.beta * layer.a[0]
        assert layer.a[0] > 0
        assert thr > layer.params.v_thr

    def test_beta_zero_equals_fixed_threshold_lif(self):
        params = AlifParams(beta=0.0)
        layer = AlifLayer(3, params)
        rng = CounterRng(17)
        v_ref = np.zeros(3)
        z_ref = np.zeros(3)
        for _ in range(500):
            drive = rng.uniform01_array(3) * 0.08
            layer.step(np.zeros(3), drive)
            v_ref = params.alpha * (v_ref - z_ref * params.v_thr) + drive
            z_ref = (v_ref >= params.v_thr).astype(float)
            np.testing.assert_allclose(layer.v, v_ref, rtol=0, atol=1e-14)
            np.testing.assert_array_equal(layer.z, z_ref)

    def test_surrogate_peak_at_effective_threshold(self):
        layer = AlifLayer(1)
        layer.a[0] = 2.0
        layer.v[0] = layer.params.v_thr + layer.params.beta * 2.0
        assert abs(layer.surrogate()[0] - 0.5) < 1e-12  # 0.3 / v_thr

    def test_surrogate_zero_far_from_threshold(self):
        layer = AlifLayer(1)
        layer.v[0] = -10.0
        assert layer.surrogate()[0] == 0.0


class TestReadout:
    def test_free_decay(self):
        layer = ReadoutLayer(1, ALPHA)
        layer.y[0] = 1.0
        layer.step(np.zeros(1))
        assert layer.y[0] == ALPHA

    def test_bias_accumulates_to_geometric_limit(self):
        layer = ReadoutLayer(1, ALPHA)
        layer.b_out[0] = 0.3
        for _ in range(2000):
            layer.step(np.zeros(1))
        assert abs(layer.y[0] - 0.3 / (1 - ALPHA)) < 1e-10

    def test_impulse_response(self):
        layer = ReadoutLayer(1, ALPHA)
        layer.step(np.array([2.0]))
        assert layer.y[0] == 2.0
        layer.step(np.zeros(1))
        assert layer.y[0] == 2.0 * ALPHA
        layer.step(np.zeros(1))
        assert abs(layer.y[0] - 2.0 * ALPHA ** 2) < 1e-15


class TestLifCond:
    def test_free_membrane_relaxes_to_rest_without_spikes(self):
        layer = LifCondLayer(1)
        layer.V[0] = -60.0
        for k in range(5000):  # 500 ms = 25 membrane time constants
            spikes = layer.step(np.zeros(1), k)
            assert spikes.size == 0
        assert abs(layer.V[0] - layer.params.v_rest) < 1e-6

    def test_unit_conductance_ratio_fires_repeatedly(self):
        # held at g/g_leak = 1 the fixed point is -35 mV, above threshold
        layer = LifCondLayer(1)
        p = layer.params
        decay = math.exp(-p.h / p.tau_s)
        spike_steps = []
        for k in range(1000):  # 100 ms
            incoming = np.array([p.g_leak / decay - layer.g[0]])
            if layer.step(incoming, k).size:
                spike_steps.append(k)
        assert len(spike_steps) >= 2
        r = 1.0
        v_inf = (p.v_rest + r * p.e_exc) / (1 + r)
        assert v_inf == -35.0
        isis = np.diff(spike_steps)
        assert (isis > round(p.tau_ref / p.h)).all()

    def test_refractory_clamp(self):
        layer = LifCondLayer(1)
        p = layer.params
        ref_steps = int(round(p.tau_ref / p.h))
        strong = np.array([5.0])
        last_spike = None
        for k in range(3000):
            spikes = layer.step(strong if k % 3 == 0 else np.zeros(1), k)
            if spikes.size:
                if last_spike is not None:
                    assert k - last_spike > ref_steps
                last_spike = k
        assert last_spike is not None

    def test_exponential_euler_first_order_convergence(self):
        def trajectory(h, t_end=100.0, g0=0.3):
            params = LifCondParams(h=h, v_theta=1e9)  # no spikes
            layer = LifCondLayer(1, params)
            layer.g[0] = g0
            steps = int(round(t_end / h))
            sample_every = int(round(1.0 / h))
            out = []
            for k in range(steps):
                layer.step(np.zeros(1), k)
                if (k + 1) % sample_every == 0:
                    out.append(layer.V[0])
            return np.array(out)

        ref = trajectory(0.1 / 16)
        err_h = np.abs(trajectory(0.1) - ref).max()
        err_h2 = np.abs(trajectory(0.05) - ref).max()
        assert err_h > 0
        ratio = err_h / err_h2
        assert 1.6 < ratio < 2.6  # halving h halves the error


class TestPoisson:
    def test_rate_zero_never_spikes(self):
        src = PoissonSource(GridGeometry(4))
        src.set_uniform_rate(0.0)
        rng = CounterRng(1)
        for _ in range(1000):
            assert src.poisson_step(rng, 0.1).size == 0

    def test_empirical_rate_matches_bernoulli_probability(self):
        # 10^6 node-steps: a 10x10 grid over 10^4 steps
        src = PoissonSource(GridGeometry(10))
        src.set_uniform_rate(157.8)
        rng = CounterRng(5)
        h = 0.1
        steps = 10 ** 4
        count = sum(src.poisson_step(rng, h).size for _ in range(steps))
        n = steps * 100
        p = 1.0 - math.exp(-157.8 * h * 1e-3)
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(count - n * p) < 3 * sigma

    def test_distinct_streams_uncorrelated(self):
        src = PoissonSource(GridGeometry(10))
        src.set_uniform_rate(157.8)
        rng_a = CounterRng(1, "a")
        rng_b = CounterRng(1, "b")
        steps = 10 ** 4
        a = np.zeros((steps, 100), dtype=bool)
        b = np.zeros((steps, 100), dtype=bool)
        for k in range(steps):
            a[k, src.poisson_step(rng_a, 0.1)] = True
            b[k, src.poisson_step(rng_b, 0.1)] = True
        rho = np.corrcoef(a.ravel(), b.ravel())[0, 1]
        assert abs(rho) < 0.01


class TestCorrelatedRates:
    def test_rate_at_center(self):
        geom = GridGeometry(16)
        src = PoissonSource(geom)
        src.set_correlated_rates([(3.0, 5.0)])  # exactly on the node (3, 5)
        node = 5 * 16 + 3
        assert abs(src.rates[node] - 157.8) < 1e-9

    def test_rate_one_sigma_away(self):
        geom = GridGeometry(16)
        src = PoissonSource(geom)
        p = src.params
        src.set_correlated_rates([(3.0 + p.sigma_stim, 5.0)])
        node = 5 * 16 + 3
        expected = p.f_base + p.f_peak * math.exp(-0.5)
        # the bump of the single center dominates; torus images are tiny
        assert abs(src.rates[node] - expected) < 1e-3

    def test_rates_never_below_base(self):
        geom = GridGeometry(16)
        src = PoissonSource(geom)
        src.set_correlated_rates([(1.5, 2.5), (9.0, 9.0)])
        assert (src.rates >= src.params.f_base).all()
