"""Topographic-map model: a Poisson source grid driving a conductance-LIF
target grid through feed-forward and lateral plastic connectivity, with
distance-dependent synapse formation and weight-dependent elimination
running alongside STDP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bitfield import Bitfield
from .connectivity import (RaggedMatrix, SynVarMatrix, init_pairwise_bernoulli,
                           propagate_spikes)
from .errors import RowFull
from .geometry import GridGeometry
from .neurons import LifCondLayer, LifCondParams, PoissonParams, PoissonSource
from .plasticity import StdpParams, StdpSynapses
from .rng import CounterRng
from .updates import Model, RuleDescriptor

BASE_SIDE = 16  # nodes per grid edge at scale 1


@dataclass
class RewiringParams:
    """Structural-plasticity constants for one projection."""

    p_form: float
    sigma_form: float
    g_theta: float = 0.1                       # g_max / 2
    p_elim_dep: float = 2.45e-2 * 50
    p_elim_pot: float = 1.36e-4 * 50
    t_rewiring: float = 1.0                    # ms between updates
    n_attempts: int = 10                       # per base tile per update
    g_init: float = 0.2                        # conductance of a new synapse

    @classmethod
    def feedforward(cls) -> "RewiringParams":
        return cls(p_form=0.16, sigma_form=2.5)

    @classmethod
    def lateral(cls) -> "RewiringParams":
        return cls(p_form=1.0, sigma_form=1.0)


def formation_probability(params: RewiringParams, d) -> np.ndarray | float:
    """Gaussian fall-off of the formation probability with distance."""
    return params.p_form * np.exp(-(np.asarray(d, dtype=np.float64) ** 2)
                                  / (2.0 * params.sigma_form ** 2))


def elimination_probability(params: RewiringParams, g_syn) -> np.ndarray | float:
    """Depressed synapses (strictly below the conductance threshold) use the
    high elimination probability, potentiated ones the low one.  Values
    above 1 make removal certain once a synapse is attempted."""
    g = np.asarray(g_syn, dtype=np.float64)
    return np.where(g < params.g_theta, params.p_elim_dep, params.p_elim_pot)


def expected_initial_degree(params: RewiringParams, geometry: GridGeometry) -> float:
    """Exhaustive sum of the formation probability over all torus offsets;
    approaches 2*pi*p_form*sigma_form^2 when the torus is large."""
    d = geometry.toroidal_distance(0, np.arange(geometry.n))
    return float(np.sum(formation_probability(params, d)))


class RewiringRule:
    """One projection's rewiring update.

    The host draws the per-row attempt counts (uniform over presynaptic
    neurons, with replacement).  Each row then marks its attempts as bits
    in its bitfield section, applies the elimination draw to every marked
    existing synapse, the formation draw to every remaining marked empty
    slot, and leaves its bitfield row clear.
    """

    def __init__(self, name: str, matrix: RaggedMatrix, syn: SynVarMatrix,
                 geometry: GridGeometry, params: RewiringParams,
                 total_attempts: int, weight_plane: str = "g",
                 record_events: bool = True):
        self.name = name
        self.matrix = matrix
        self.syn = syn
        self.geometry = geometry
        self.params = params
        self.total_attempts = total_attempts
        self.weight_plane = weight_plane
        self.record_events = record_events
        self.attempt_bits = Bitfield(matrix.num_pre, matrix.num_post)
        self.attempts = np.zeros(matrix.num_pre, dtype=np.int64)
        self._row_events: list = [None] * matrix.num_pre
        self._active: np.ndarray = np.empty(0, dtype=np.int64)
        # per-update accounting: each attempt resolves to exactly one outcome
        self.last_stats: dict[str, int] = {}
        self.elim_events: list[tuple[float, float]] = []   # (time_ms, distance)
        self.form_events: list[tuple[float, float]] = []

    def _host(self, ctx) -> None:
        self.attempts[:] = 0
        num_pre = self.matrix.num_pre
        for _ in range(self.total_attempts):
            self.attempts[ctx.rng.uniform_int(num_pre)] += 1
        self._active = np.flatnonzero(self.attempts)
        for i in self._active:
            self._row_events[i] = None

    def _active_rows(self, ctx) -> np.ndarray:
        return self._active

    def _row_single(self, ctx, i: int) -> None:
        """One attempt: behaves exactly like the bitfield path with k = 1
        (one marked slot resolves to elimination, formation, or no change)
        without touching the bitfield words."""
        params = self.params
        j = ctx.rng.uniform_int(self.matrix.num_post)
        targets = ctx.targets()
        hit = np.flatnonzero(targets == j)
        if hit.size:
            slot = int(hit[0])
            g = ctx.syn(self.weight_plane)[slot]
            p = params.p_elim_dep if g < params.g_theta else params.p_elim_pot
            if ctx.rng.uniform01() < p:
                d = float(self.geometry.toroidal_distance(i, j))
                ctx.remove_slot(slot)
                self._row_events[i] = ([d], [], 1, 0, 0, 0, 0)
            else:
                self._row_events[i] = ([], [], 0, 1, 0, 0, 0)
            return
        d = float(self.geometry.toroidal_distance(i, j))
        if ctx.rng.uniform01() < formation_probability(params, d):
            try:
                ctx.add_synapse(j, **{self.weight_plane: params.g_init})
                self._row_events[i] = ([], [d], 0, 0, 1, 0, 0)
            except RowFull:
                self._row_events[i] = ([], [], 0, 0, 0, 0, 1)
        else:
            self._row_events[i] = ([], [], 0, 0, 0, 1, 0)

    def _row(self, ctx) -> None:
        i = ctx.id_pre
        k = int(self.attempts[i])
        if k == 0:
            return
        if k == 1:
            self._row_single(ctx, i)
            return
        params = self.params
        bf = self.attempt_bits
        bf.set_k_random_bits_in_row(i, k, ctx.rng)

        elim_d: list[float] = []
        form_d: list[float] = []
        removed = kept = formed = form_missed = form_full = 0

        targets = ctx.targets()
        if targets.size:
            selected = np.flatnonzero(bf.test_bits(i, targets))
        else:
            selected = np.empty(0, dtype=np.int64)
        if selected.size:
            cand_targets = targets[selected].copy()
            g = ctx.syn(self.weight_plane)[selected]
            p = elimination_probability(params, g)
            u = ctx.rng.uniform01_array(selected.size)
            hit = u < p
            bf.clear_bits(i, cand_targets)
            removed = int(hit.sum())
            kept = selected.size - removed
            if removed:
                d = self.geometry.toroidal_distance(i, cand_targets[hit])
                elim_d.extend(float(x) for x in d)
                ctx.remove_slots(selected[hit])

        remaining = bf.set_bits_in_row(i)
        if remaining.size:
            d = self.geometry.toroidal_distance(i, remaining)
            p = formation_probability(params, d)
            u = ctx.rng.uniform01_array(remaining.size)
            ok = u < p
            for j, dj, good in zip(remaining, d, ok):
                if not good:
                    form_missed += 1
                    continue
                try:
                    ctx.add_synapse(int(j), **{self.weight_plane: params.g_init})
                    formed += 1
                    form_d.append(float(dj))
                except RowFull:
                    form_full += 1
            bf.clear_row(i)

        self._row_events[i] = (elim_d, form_d,
                               removed, kept, formed, form_missed, form_full)

    def descriptor(self) -> RuleDescriptor:
        return RuleDescriptor(name=self.name, host_phase=self._host,
                              row_phase=self._row, active_rows=self._active_rows)

    def collect(self, time_ms: float) -> None:
        """Merge per-row outcomes of the last update, in row order."""
        stats = {"attempts": int(self.attempts.sum()), "elim_candidates": 0,
                 "form_candidates": 0, "removed": 0, "kept": 0, "formed": 0,
                 "form_missed": 0, "form_full": 0}
        for i in self._active:
            rec = self._row_events[i]
            if rec is None:
                continue
            elim_d, form_d, removed, kept, formed, form_missed, form_full = rec
            stats["removed"] += removed
            stats["kept"] += kept
            stats["formed"] += formed
            stats["form_missed"] += form_missed
            stats["form_full"] += form_full
            stats["elim_candidates"] += removed + kept
            stats["form_candidates"] += formed + form_missed + form_full
            if self.record_events:
                self.elim_events.extend((time_ms, d) for d in elim_d)
                self.form_events.extend((time_ms, d) for d in form_d)
            self._row_events[i] = None
        self.last_stats = stats


def weighted_mean_distance(geometry: GridGeometry, pre: np.ndarray,
                           post: np.ndarray, w: np.ndarray) -> float:
    """Weight-weighted mean toroidal distance of edges from each target's
    ideal source position (the node at the target's own grid location)."""
    d = geometry.toroidal_distance(pre, post)
    total = w.sum()
    return float((w * d).sum() / total) if total > 0 else 0.0


class TopomapRecorder:
    """In-memory analysis trail: degree statistics and displacement profile
    every snapshot interval, full edge lists at the start and end, and all
    rewiring events."""

    def __init__(self, snapshot_every_ms: float = 200.0,
                 record_spikes: bool = False):
        self.snapshot_every_ms = snapshot_every_ms
        self.record_spikes = record_spikes
        self.degrees: list[tuple] = []        # (t, proj, mean_in, std_in, mean_out, std_out)
        self.profile: list[tuple] = []        # (t, proj, dy, conn_prob, mean_weight)
        self.snapshots: dict[tuple[str, str], tuple] = {}
        self.events: dict[tuple[str, str], list[tuple[float, float]]] = {}
        self.spikes: dict[str, list[tuple[float, int]]] = {"source": [],
                                                           "target": []}

    def on_spikes(self, population: str, t_ms: float, ids) -> None:
        if self.record_spikes and len(ids):
            self.spikes[population].extend((t_ms, int(i)) for i in ids)

    def write_spikes_csv(self, fh, population: str) -> None:
        fh.write("time_ms,neuron_id\n")
        for t, i in self.spikes[population]:
            fh.write(f"{t:g},{i}\n")

    def snapshot(self, t_ms: float, model: "TopomapModel", tag: str | None = None,
                 rows: bool = True) -> None:
        for proj in ("ff", "lat"):
            m, syn = model.net.matrices[proj]
            pre, post = m.edge_list()
            w = syn.planes["g"][m.slot_mask()]
            if rows:
                in_deg = np.bincount(post, minlength=m.num_post)
                out_deg = m.row_length
                self.degrees.append((t_ms, proj,
                                     float(in_deg.mean()), float(in_deg.std()),
                                     float(out_deg.mean()), float(out_deg.std())))
                self._profile_rows(t_ms, proj, model.geometry, pre, post, w)
            if tag is not None:
                self.snapshots[(proj, tag)] = (pre.copy(), post.copy(), w.copy())

    def _profile_rows(self, t_ms, proj, geom, pre, post, w):
        half = geom.side // 2
        dx, dy = geom.displacement(pre, post)
        on_axis = dx == 0
        dy_idx = (dy[on_axis] + half).astype(np.int64)
        w_axis = w[on_axis]
        counts = np.bincount(dy_idx, minlength=geom.side)
        weight_sums = np.bincount(dy_idx, weights=w_axis, minlength=geom.side)
        for b in range(geom.side):
            mean_w = weight_sums[b] / counts[b] if counts[b] else 0.0
            self.profile.append((t_ms, proj, b - half,
                                 counts[b] / geom.n, mean_w))

    def take_events(self, model: "TopomapModel") -> None:
        for proj, rule in (("ff", model.ff_rule), ("lat", model.lat_rule)):
            self.events[(proj, "elimination")] = rule.elim_events
            self.events[(proj, "formation")] = rule.form_events

    # -- CSV output ------------------------------------------------------

    def write_degrees_csv(self, fh) -> None:
        fh.write("time_ms,projection,mean_in,std_in,mean_out,std_out\n")
        for t, proj, mi, si, mo, so in self.degrees:
            fh.write(f"{t:g},{proj},{mi:.9g},{si:.9g},{mo:.9g},{so:.9g}\n")

    def write_profile_csv(self, fh) -> None:
        fh.write("time_ms,projection,y_displacement,conn_prob,mean_weight\n")
        for t, proj, dy, cp, mw in self.profile:
            fh.write(f"{t:g},{proj},{dy},{cp:.9g},{mw:.9g}\n")

    def write_events_csv(self, fh, kind: str) -> None:
        """Counts per (time bin, integer distance bin), both projections."""
        fh.write("time_bin_ms,distance_bin,count\n")
        bin_ms = self.snapshot_every_ms
        merged: dict[tuple[float, int], int] = {}
        for (proj, k), events in sorted(self.events.items()):
            if k != kind:
                continue
            for t, d in events:
                key = (math.floor(t / bin_ms) * bin_ms, int(d))
                merged[key] = merged.get(key, 0) + 1
        for (tb, db) in sorted(merged):
            fh.write(f"{tb:g},{db},{merged[(tb, db)]}\n")


@dataclass
class RunRecord:
    steps: int = 0
    rewiring_executions: int = 0
    stimulus_changes: int = 0
    rewires_per_update: list = field(default_factory=list)


class TopomapModel:
    """The assembled two-layer model with both plasticity kinds attached."""

    def __init__(self, scale: int, seed: int, workers: int = 1,
                 always_remap: bool = False, capacity_headroom: float = 4.0,
                 record_events: bool = True):
        scale = max(scale, 1)  # scale 0 is the same geometry as scale 1
        self.scale = scale
        self.seed = seed
        self.h = LifCondParams().h
        self.geometry = GridGeometry(BASE_SIDE * scale)
        n = self.geometry.n
        self.ff_params = RewiringParams.feedforward()
        self.lat_params = RewiringParams.lateral()
        self.stdp_params = StdpParams()

        self.net = Model(seed, workers=workers, always_remap=always_remap)
        ff_m, ff_syn = self._init_projection("ff", self.ff_params,
                                             CounterRng(seed, "init", "ff"),
                                             capacity_headroom)
        lat_m, lat_syn = self._init_projection("lat", self.lat_params,
                                               CounterRng(seed, "init", "lat"),
                                               capacity_headroom)
        self.source = PoissonSource(self.geometry, PoissonParams())
        self.target = LifCondLayer(n)

        self.ff_stdp = StdpSynapses(ff_m, ff_syn, self.h, self.stdp_params)
        self.lat_stdp = StdpSynapses(lat_m, lat_syn, self.h, self.stdp_params)
        self.ff_tmap = self.net.register_transpose("ff")
        self.lat_tmap = self.net.register_transpose("lat")

        attempts = self.ff_params.n_attempts * scale * scale
        self.ff_rule = RewiringRule("ff_rewire", ff_m, ff_syn, self.geometry,
                                    self.ff_params, attempts,
                                    record_events=record_events)
        self.lat_rule = RewiringRule("lat_rewire", lat_m, lat_syn, self.geometry,
                                     self.lat_params, attempts,
                                     record_events=record_events)
        self.net.add_rule("rewiring", "ff", self.ff_rule.descriptor())
        self.net.add_rule("rewiring", "lat", self.lat_rule.descriptor())

        self._poisson_rng = CounterRng(seed, "poisson")
        self._stim_rng = CounterRng(seed, "stimulus")
        self._pending = np.zeros(n, dtype=np.float64)
        self._pending_next = np.zeros(n, dtype=np.float64)
        self.step_index = 0

    def _init_projection(self, name: str, params: RewiringParams,
                         rng: CounterRng, headroom: float):
        geom = self.geometry
        cols = np.arange(geom.n)

        def prob(i, _cols):
            return formation_probability(params, geom.toroidal_distance(i, cols))

        m, syn = init_pairwise_bernoulli(geom.n, geom.n, prob, headroom, rng,
                                         var_names=("g",))
        syn.planes["g"][m.slot_mask()] = params.g_init
        self.net.add_matrix(name, m, syn)
        return m, syn

    # -- stepping ------------------------------------------------------------

    def _draw_centers(self) -> list[tuple[float, float]]:
        base_x = self._stim_rng.uniform01() * BASE_SIDE
        base_y = self._stim_rng.uniform01() * BASE_SIDE
        return [(base_x + a * BASE_SIDE, base_y + b * BASE_SIDE)
                for a in range(self.scale) for b in range(self.scale)]

    def run(self, duration_ms: float, recorder: TopomapRecorder | None = None,
            record: RunRecord | None = None) -> RunRecord:
        import time as _time

        record = record or RunRecord()
        timers = self.net.timers
        h = self.h
        stim_steps = int(round(PoissonParams().t_stim / h))
        rewire_steps = int(round(self.ff_params.t_rewiring / h))
        n_steps = int(round(duration_ms / h))
        snap_steps = (int(round(recorder.snapshot_every_ms / h))
                      if recorder is not None else 0)

        if recorder is not None and self.step_index == 0:
            recorder.snapshot(0.0, self, tag="initial")

        ff_g = self.net.matrices["ff"][1].planes["g"]
        lat_g = self.net.matrices["lat"][1].planes["g"]
        ff_m = self.net.matrices["ff"][0]
        lat_m = self.net.matrices["lat"][0]

        for _ in range(n_steps):
            k = self.step_index
            t0 = _time.perf_counter()
            if k % stim_steps == 0:
                self.source.set_correlated_rates(self._draw_centers())
                record.stimulus_changes += 1
            src_spikes = self.source.poisson_step(self._poisson_rng, h)
            tgt_spikes = self.target.step(self._pending, k)
            timers.add("neuron_update", _time.perf_counter() - t0)
            if recorder is not None and recorder.record_spikes:
                recorder.on_spikes("source", k * h, src_spikes)
                recorder.on_spikes("target", k * h, tgt_spikes)

            t0 = _time.perf_counter()
            nxt = self._pending_next
            nxt[:] = 0.0
            propagate_spikes(ff_m, ff_g, src_spikes, nxt)
            propagate_spikes(lat_m, lat_g, tgt_spikes, nxt)
            self._pending, self._pending_next = nxt, self._pending
            self.ff_stdp.decay_step()
            self.lat_stdp.decay_step()
            if src_spikes.size:
                self.ff_stdp.on_pre_spikes(src_spikes)
            if tgt_spikes.size:
                self.lat_stdp.on_pre_spikes(tgt_spikes)
            timers.add("presynaptic_update", _time.perf_counter() - t0)

            if tgt_spikes.size:
                t0 = _time.perf_counter()
                self.ff_stdp.on_post_spikes(self.ff_tmap, tgt_spikes)
                self.lat_stdp.on_post_spikes(self.lat_tmap, tgt_spikes)
                timers.add("postsynaptic_update", _time.perf_counter() - t0)

            self.step_index += 1
            record.steps += 1
            t_ms = self.step_index * h
            if self.step_index % rewire_steps == 0:
                self.net.run_update_group("rewiring")
                self.ff_rule.collect(t_ms)
                self.lat_rule.collect(t_ms)
                record.rewiring_executions += 1
                record.rewires_per_update.append(
                    self.ff_rule.last_stats["removed"]
                    + self.ff_rule.last_stats["formed"]
                    + self.lat_rule.last_stats["removed"]
                    + self.lat_rule.last_stats["formed"])
            if recorder is not None and snap_steps and self.step_index % snap_steps == 0:
                recorder.snapshot(t_ms, self)

        if recorder is not None:
            just_written = (n_steps == 0
                            or (snap_steps and self.step_index % snap_steps == 0))
            recorder.snapshot(self.step_index * h, self, tag="final",
                              rows=not just_written)
            recorder.take_events(self)
        return record

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Copies of all dynamic state, for determinism comparisons."""
        out: dict[str, np.ndarray] = {}
        for name in ("ff", "lat"):
            m, syn = self.net.matrices[name]
            out[f"{name}.row_length"] = m.row_length.copy()
            out[f"{name}.target"] = (m.target * m.slot_mask()).copy()
            out[f"{name}.g"] = (syn.planes["g"] * m.slot_mask()).copy()
        out["V"] = self.target.V.copy()
        out["g_total"] = self.target.g.copy()
        out["refractory"] = self.target.refractory_until.copy()
        out["rates"] = self.source.rates.copy()
        out["stdp_ff_x"] = self.ff_stdp.x.copy()
        out["stdp_ff_y"] = self.ff_stdp.y.copy()
        out["stdp_lat_x"] = self.lat_stdp.x.copy()
        out["stdp_lat_y"] = self.lat_stdp.y.copy()
        out["pending"] = self._pending.copy()
        return out


def build_model(scale: int, seed: int, **kwargs) -> TopomapModel:
    return TopomapModel(scale, seed, **kwargs)
