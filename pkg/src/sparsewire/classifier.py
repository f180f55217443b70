"""Recurrent spiking classifier trained online with eligibility traces,
optionally rewired at constant sparsity after every batch.

The batch dimension is realized as independent model replicas sharing
one set of weights; replica gradients are accumulated in fixed replica
order and averaged before the optimizer step.  Between batches the
connectivity is static, so spike propagation uses a dense copy of the
sparse weights rebuilt once per batch (the ragged structure stays the
single source of truth and is what the rewiring rules mutate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import eprop_accumulate_batch
from .connectivity import init_pairwise_bernoulli
from .deep_r import DeepR
from .neurons import AlifLayer, AlifParams
from .plasticity import Adam, cross_entropy, softmax
from .rng import CounterRng
from .updates import Model


@dataclass
class SyntheticTask:
    """Rate-coded classification task: each class is a fixed random firing
    rate template over the input lines; examples are independent Poisson
    draws from their class template, reproducible from (seed, example)."""

    num_classes: int = 3
    num_inputs: int = 20
    example_steps: int = 200
    seed: int = 0
    rate_lo: float = 5.0
    rate_hi: float = 80.0
    dt: float = 1.0
    num_train: int = 320
    num_test: int = 96
    jitter: float = 0.8

    def __post_init__(self):
        rng = CounterRng(self.seed, "task", "templates")
        rates = self.rate_lo + rng.uniform01_array(
            self.num_classes * self.num_inputs) * (self.rate_hi - self.rate_lo)
        self.rates = rates.reshape(self.num_classes, self.num_inputs)

    def label(self, example: int) -> int:
        return example % self.num_classes

    def example_rates(self, example: int) -> np.ndarray:
        """Class template scaled by per-example lognormal rate jitter."""
        rates = self.rates[self.label(example)]
        if self.jitter:
            noise = CounterRng(self.seed, "task", "jitter",
                               example).normal_array(self.num_inputs)
            rates = rates * np.exp(self.jitter * noise)
        return rates

    def example_spikes(self, example: int) -> np.ndarray:
        p = 1.0 - np.exp(-self.example_rates(example) * self.dt * 1e-3)
        u = CounterRng(self.seed, "task", "example", example).uniform01_array(
            self.example_steps * self.num_inputs)
        return (u.reshape(self.example_steps, self.num_inputs) < p)

    def batch(self, example_ids) -> tuple[np.ndarray, np.ndarray]:
        spikes = np.stack([self.example_spikes(e) for e in example_ids])
        labels = np.array([self.label(e) for e in example_ids])
        return spikes, labels

    def train_ids(self, batch_index: int, batch_size: int) -> list[int]:
        start = batch_index * batch_size
        return [(start + r) % self.num_train for r in range(batch_size)]

    def test_ids(self) -> list[int]:
        return [self.num_train + r for r in range(self.num_test)]


class EpropClassifierTrainer:
    """Builds the sparse recurrent network and trains it batch by batch."""

    def __init__(self, task: SyntheticTask, hidden: int = 128,
                 input_density: float = 0.1, recurrent_density: float = 0.1,
                 deep_r: bool = True, l1_strength: float = 0.005,
                 learning_rate: float = 1e-3, batch_size: int = 32,
                 seed: int = 0, workers: int = 1, dtype=np.float32,
                 input_gain: float = 0.5, recurrent_gain: float = 0.15):
        self.task = task
        self.hidden = hidden
        self.batch_size = batch_size
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.deep_r_enabled = deep_r
        self.params = AlifParams()

        headroom = 2.0 if deep_r else 1.0
        self.net = Model(seed, workers=workers)
        self.m_in, self.s_in = self._make_matrix(
            "in", task.num_inputs, hidden, input_density, headroom,
            input_gain / math.sqrt(max(1.0, input_density * task.num_inputs)),
            exclude_diagonal=False)
        self.m_rec, self.s_rec = self._make_matrix(
            "rec", hidden, hidden, recurrent_density, headroom,
            recurrent_gain / math.sqrt(max(1.0, recurrent_density * hidden)),
            exclude_diagonal=True)

        out_rng = CounterRng(seed, "init", "out")
        self.w_out = out_rng.normal_array(task.num_classes * hidden,
                                          std=1.0 / math.sqrt(hidden)).reshape(
                                              task.num_classes, hidden)
        self.b_out = np.zeros(task.num_classes)
        self.g_w_out = np.zeros_like(self.w_out)
        self.g_b_out = np.zeros_like(self.b_out)

        self.adam_in = Adam(learning_rate, m=self.s_in.planes["adam_m"],
                            v=self.s_in.planes["adam_v"])
        self.adam_rec = Adam(learning_rate, m=self.s_rec.planes["adam_m"],
                             v=self.s_rec.planes["adam_v"])
        self.adam_out = Adam(learning_rate, shape=self.w_out.shape)
        self.adam_b = Adam(learning_rate, shape=self.b_out.shape)

        if deep_r:
            self.deep_r_in = DeepR(self.m_in, self.s_in, "in",
                                   l1_strength=l1_strength)
            self.deep_r_rec = DeepR(self.m_rec, self.s_rec, "rec",
                                    l1_strength=l1_strength,
                                    exclude_diagonal=True)
            self.deep_r_in.init_bitfields(CounterRng(seed, "deep_r", "in"))
            self.deep_r_rec.init_bitfields(CounterRng(seed, "deep_r", "rec"))
            self.deep_r_in.register(self.net, "deep_r", "in")
            self.deep_r_rec.register(self.net, "deep_r", "rec")

        batch = batch_size
        self.alif = AlifLayer(hidden, self.params, batch=batch, dtype=self.dtype)
        self.y = np.zeros((batch, task.num_classes))
        self._alloc_traces()
        self.history: list[dict] = []

    def _make_matrix(self, name, num_pre, num_post, density, headroom, w_std,
                     exclude_diagonal):
        def prob(i, cols):
            p = np.full(cols.size, density)
            if exclude_diagonal:
                p[i] = 0.0
            return p

        rng = CounterRng(self.seed, "init", name)
        m, syn = init_pairwise_bernoulli(num_pre, num_post, prob, headroom, rng,
                                         var_names=("w", "grad", "adam_m", "adam_v"))
        mask = m.slot_mask()
        w = syn.planes["w"]
        draws = rng.normal_array(w.size, std=w_std).reshape(w.shape)
        w[mask] = draws[mask]
        self.net.add_matrix(name, m, syn)
        return m, syn

    def _alloc_traces(self):
        b, h, dt = self.batch_size, self.hidden, self.dtype
        cap_in = self.m_in.target.shape[1]
        cap_rec = self.m_rec.target.shape[1]
        self.zbar = np.zeros((b, h), dtype=dt)
        self.xbar = np.zeros((b, self.task.num_inputs), dtype=dt)
        self.eps_in = np.zeros((b, self.task.num_inputs, cap_in), dtype=dt)
        self.ebar_in = np.zeros_like(self.eps_in)
        self.eps_rec = np.zeros((b, h, cap_rec), dtype=dt)
        self.ebar_rec = np.zeros_like(self.eps_rec)

    def _reset_example_state(self):
        self.alif.reset()
        self.y[...] = 0
        self.zbar[...] = 0
        self.xbar[...] = 0
        self.eps_in[...] = 0
        self.ebar_in[...] = 0
        self.eps_rec[...] = 0
        self.ebar_rec[...] = 0

    def _dense_weights(self, m, syn):
        w = np.zeros((m.num_pre, m.num_post), dtype=self.dtype)
        for i in range(m.num_pre):
            n = m.row_length[i]
            w[i, m.target[i, :n]] = syn.planes["w"][i, :n]
        return w

    def _forward_batch(self, spikes, labels, learn: bool):
        """Run one batch of replicas; accumulate gradients when learning."""
        p = self.params
        dt = self.dtype
        alpha = dt.type(p.alpha)
        beta = dt.type(p.beta)
        rho = dt.type(p.rho)
        one_hot = np.eye(self.task.num_classes)[labels]
        w_in_d = self._dense_weights(self.m_in, self.s_in)
        w_rec_d = self._dense_weights(self.m_rec, self.s_rec)
        grad_in = self.s_in.planes["grad"]
        grad_rec = self.s_rec.planes["grad"]
        self._reset_example_state()
        alif = self.alif
        loss_sum = 0.0
        pi_sum = np.zeros_like(self.y)
        x = spikes.astype(dt)
        for t in range(self.task.example_steps):
            x_t = x[:, t, :]
            z = alif.z
            rec_in = z @ w_rec_d
            ext_in = x_t @ w_in_d
            self.zbar *= alpha
            self.zbar += z
            self.xbar *= alpha
            self.xbar += x_t
            psi = alif.surrogate()
            self.y = p.alpha * self.y + z @ self.w_out.T + self.b_out
            pi = softmax(self.y)
            d = pi - one_hot
            loss_sum += float(cross_entropy(pi, one_hot).sum())
            pi_sum += pi
            if learn:
                self.g_w_out += d.T @ self.zbar
                self.g_b_out += d.sum(axis=0)
                lsig = (d @ self.w_out).astype(dt)
                eprop_accumulate_batch(self.m_in.target, self.m_in.row_length,
                                       self.xbar, psi, lsig, self.eps_in,
                                       self.ebar_in, grad_in, beta, rho, alpha)
                eprop_accumulate_batch(self.m_rec.target, self.m_rec.row_length,
                                       self.zbar, psi, lsig, self.eps_rec,
                                       self.ebar_rec, grad_rec, beta, rho, alpha)
            alif.step(rec_in, ext_in)
        predictions = pi_sum.argmax(axis=1)
        accuracy = float((predictions == labels).mean())
        loss = loss_sum / (self.batch_size * self.task.example_steps)
        return loss, accuracy, predictions

    def train_batch(self, batch_index: int) -> dict:
        ids = self.task.train_ids(batch_index, self.batch_size)
        spikes, labels = self.task.batch(ids)
        loss, accuracy, _ = self._forward_batch(spikes, labels, learn=True)
        if not math.isfinite(loss):
            raise FloatingPointError(f"loss diverged at batch {batch_index}")
        inv_b = 1.0 / self.batch_size
        self.s_in.planes["grad"] *= inv_b
        self.s_rec.planes["grad"] *= inv_b
        self.g_w_out *= inv_b
        self.g_b_out *= inv_b
        if self.deep_r_enabled:
            self.deep_r_in.l1_step()
            self.deep_r_rec.l1_step()
        self.adam_in.apply(self.s_in.planes["w"], self.s_in.planes["grad"])
        self.adam_rec.apply(self.s_rec.planes["w"], self.s_rec.planes["grad"])
        self.adam_out.apply(self.w_out, self.g_w_out)
        self.adam_b.apply(self.b_out, self.g_b_out)
        removed = total = 0
        if self.deep_r_enabled:
            self.net.run_update_group("deep_r")
            removed = self.deep_r_in.last_removed + self.deep_r_rec.last_removed
        total = self.m_in.edge_count() + self.m_rec.edge_count()
        metrics = {"batch": batch_index, "loss": loss, "accuracy": accuracy,
                   "removed": removed, "total": total,
                   "fraction_rewired": removed / total if total else 0.0}
        self.history.append(metrics)
        return metrics

    def evaluate(self, example_ids) -> float:
        """Forward-only accuracy over the given examples."""
        correct = 0
        count = 0
        for start in range(0, len(example_ids), self.batch_size):
            ids = list(example_ids[start : start + self.batch_size])
            real = len(ids)
            if real < self.batch_size:
                ids += [ids[-1]] * (self.batch_size - real)
            spikes, labels = self.task.batch(ids)
            _, _, predictions = self._forward_batch(spikes, labels, learn=False)
            correct += int((predictions[:real] == labels[:real]).sum())
            count += real
        return correct / count if count else 0.0

    def run(self, num_batches: int, stop_at_accuracy: float | None = None) -> list[dict]:
        for b in range(num_batches):
            metrics = self.train_batch(b)
            if stop_at_accuracy is not None and metrics["accuracy"] >= stop_at_accuracy:
                break
        return self.history

    def connectivity_fingerprint(self) -> bytes:
        """Bytes identifying the exact edge sets (order-sensitive)."""
        parts = []
        for m in (self.m_in, self.m_rec):
            parts.append(m.row_length.tobytes())
            parts.append((m.target * m.slot_mask()).tobytes())
        return b"".join(parts)
