"""Slot-loop simulator, replications and parameter sweeps.

A replication draws its channel from a :class:`~jpspf.channel.RateStream`
keyed by ``(seed, rep_index)``, so two policies run with the same seed and
replication index see exactly the same rates slot by slot.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .analysis import analytic_gain, empirical_report, pf_utility
from .channel import RateModel, RateStream, UserPopulation
from .policies import (
    POLICIES,
    PROBING,
    PolicyState,
    SlotDecision,
    jlps_initialize,
    new_state,
    run_slot,
    shadow,
    update_throughput,
)
from .stopping import build_threshold_table, j_max

__all__ = [
    "PolicySpec",
    "ExperimentConfig",
    "SlotRecord",
    "MetricsSeries",
    "SimulationError",
    "run_replication",
    "run_experiment",
    "sweep",
    "sweep_csv",
    "shadow_agreement",
    "paired_agreement",
    "record_slots",
    "analytic_kappa",
]

KAPPA_MODES = ("bootstrap", "analytic", "fixed")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    name: str = "jps_dynamic"
    kappa_mode: str = "analytic"
    kappa: float | None = None
    burn_in_slots: int = 2000
    mc_samples: int = 200_000

    def __post_init__(self):
        if self.name not in POLICIES:
            raise ValueError(f"unknown policy {self.name!r}; choose from {POLICIES}")
        if self.kappa_mode not in KAPPA_MODES:
            raise ValueError(f"kappa_mode must be one of {KAPPA_MODES}")
        if self.kappa_mode == "fixed" and not (self.kappa and self.kappa > 0):
            raise ValueError("fixed kappa_mode needs a positive kappa")
        if self.burn_in_slots < 0:
            raise ValueError("burn_in_slots must be nonnegative")


@dataclass(frozen=True)
class ExperimentConfig:
    K: int = 20
    rates: str | tuple[float, ...] = "index"
    rate_model: RateModel = field(default_factory=RateModel.exponential)
    beta: float = 0.1
    policy: PolicySpec = field(default_factory=PolicySpec)
    n_slots: int = 20_000
    n_replications: int = 10
    seed: int = 1
    burn_in_fraction: float = 0.1
    record_interval: int = 100
    keep_trace: bool = False
    check_invariants: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.n_slots < 1:
            raise ValueError("n_slots must be at least 1")
        if self.n_replications < 1:
            raise ValueError("n_replications must be at least 1")
        if not 0 <= self.burn_in_fraction < 1:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if self.record_interval < 1:
            raise ValueError("record_interval must be at least 1")
        if not isinstance(self.rates, str):
            object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
            if len(self.rates) != self.K:
                raise ValueError("explicit rates must have one entry per user")
        elif self.rates not in ("index", "equal"):
            raise ValueError("rates must be 'index', 'equal' or a list")

    @property
    def pop(self) -> UserPopulation:
        if self.rates == "index":
            return UserPopulation.indexed(self.K, self.rate_model)
        if self.rates == "equal":
            return UserPopulation.equal(self.K, self.rate_model)
        return UserPopulation(self.rates, self.rate_model)

    @property
    def burn_in(self) -> int:
        return int(self.burn_in_fraction * self.n_slots)

    def with_policy(self, name: str, **kw) -> "ExperimentConfig":
        return replace(self, policy=replace(self.policy, name=name, **kw))


@dataclass
class SlotRecord:
    slot: int
    probe_order: tuple[int, ...]
    probed_rates: tuple[float, ...]
    stop_index: int
    selected: int
    delivered_bits: float


@dataclass
class MetricsSeries:
    policy: str
    mean_rates: np.ndarray
    burn_in: int
    record_slots: np.ndarray
    throughput_traj: np.ndarray
    utility_traj: np.ndarray
    selection_counts: np.ndarray
    probe_histogram: np.ndarray
    steady_selection_counts: np.ndarray
    steady_probe_histogram: np.ndarray
    steady_bits: np.ndarray
    n_steady: int
    final_throughputs: np.ndarray
    kappa_used: float | None = None
    trace: list[SlotRecord] | None = None

    @property
    def steady_throughputs(self) -> np.ndarray:
        """Per-user average delivered bits over the post-burn-in slots."""
        return self.steady_bits / max(self.n_steady, 1)

    def equals(self, other: "MetricsSeries") -> bool:
        for name in ("record_slots", "throughput_traj", "utility_traj", "selection_counts",
                     "probe_histogram", "steady_bits", "final_throughputs"):
            if not np.array_equal(getattr(self, name), getattr(other, name)):
                return False
        return self.policy == other.policy and self.n_steady == other.n_steady


def record_slots(n_slots: int, interval: int) -> np.ndarray:
    """Every ``interval``-th slot plus a log-spaced set dense near slot 1."""
    logs = np.unique(np.round(np.logspace(0, math.log10(max(n_slots, 1)), 60)).astype(int))
    grid = np.arange(interval, n_slots + 1, interval)
    out = np.union1d(np.union1d(logs, grid), [n_slots])
    return out[(out >= 1) & (out <= n_slots)]


@lru_cache(maxsize=64)
def analytic_kappa(model: RateModel, beta: float, K: int, mc_samples: int = 200_000,
                   seed: int = 0) -> float:
    rng = np.random.default_rng(np.random.SeedSequence([seed, K, 4]))
    return analytic_gain(model, beta, K, mc_samples, rng)[0]


def _resolve_kappa(cfg: ExperimentConfig) -> float | None:
    spec = cfg.policy
    if spec.name != "jps_static":
        return None
    if spec.kappa_mode == "fixed":
        return float(spec.kappa)
    if spec.kappa_mode == "analytic":
        return analytic_kappa(cfg.rate_model, cfg.beta, cfg.K, spec.mc_samples)
    return None


def _check_slot(d: SlotDecision, R: np.ndarray, T: np.ndarray, kind: str, beta: float,
                jm: int) -> None:
    if kind in PROBING:
        if not 1 <= d.stop_index <= jm:
            raise SimulationError(f"probe count {d.stop_index} outside [1, {jm}]")
        s = np.asarray(d.probed_rates) / T[list(d.probe_order)]
        if s[d.probe_order.index(d.selected)] < s.max():
            raise SimulationError("selected user is not the best probed user")
        if len(set(d.probe_order)) != len(d.probe_order):
            raise SimulationError("a user was probed twice")
        if d.delivered_bits > (1.0 - beta) * R.max() + 1e-12:
            raise SimulationError("delivered more than one probe allows")
    if d.delivered_bits < 0:
        raise SimulationError("negative delivery")


def run_replication(cfg: ExperimentConfig, rep_index: int = 0,
                    kappa: float | None = None) -> MetricsSeries:
    """Run one replication of ``cfg.n_slots`` slots.

    ``kappa`` overrides the static-threshold scale; otherwise it is taken
    from the policy spec (fixed / analytic) or bootstrapped from a dynamic
    burn-in run.
    """
    pop = cfg.pop
    model = cfg.rate_model
    K, beta, N = cfg.K, cfg.beta, cfg.n_slots
    spec = cfg.policy
    jm = j_max(K, beta)
    stream = RateStream(pop, cfg.seed, rep_index)
    burn = cfg.burn_in
    rec = record_slots(N, cfg.record_interval)
    rec_set = set(rec.tolist())

    hist_len = (K if spec.name == "probe_all_pf" else jm) + 1
    sel = np.zeros(K, dtype=np.int64)
    hist = np.zeros(hist_len, dtype=np.int64)
    ssel = np.zeros(K, dtype=np.int64)
    shist = np.zeros(hist_len, dtype=np.int64)
    sbits = np.zeros(K)
    traj = np.full((len(rec), K), np.nan)
    util = np.full(len(rec), np.nan)
    trace = [] if cfg.keep_trace else None
    rec_pos = {n: i for i, n in enumerate(rec.tolist())}

    def account(n, d, T):
        if d.transmits:
            sel[d.selected] += 1
        hist[d.stop_index] += 1
        if n > burn:
            if d.transmits:
                ssel[d.selected] += 1
            shist[d.stop_index] += 1
            sbits[d.selected] += d.delivered_bits
        if trace is not None:
            trace.append(SlotRecord(n, d.probe_order, d.probed_rates, d.stop_index,
                                    d.selected, d.delivered_bits))
        if n in rec_set:
            i = rec_pos[n]
            traj[i] = T
            util[i] = pf_utility(T)

    start = 1
    switch_at = None
    if spec.name == "jlps":
        state, init = jlps_initialize(pop, beta, stream)
        for n, d in init:
            account(n, d, state.throughputs)
        start = len(init) + 1
    elif spec.name == "jps_static":
        k = kappa if kappa is not None else _resolve_kappa(cfg)
        table = build_threshold_table(model, beta, K)
        if k is None:
            # bootstrap: dynamic rule first, switch once kappa is measured
            state = new_state("jps_dynamic", pop, table)
            switch_at = min(spec.burn_in_slots, N)
        else:
            kappa = k
            state = new_state("jps_static", pop, table.with_kappa(k))
    else:
        state = new_state(spec.name, pop)
    state.validate()

    T = state.throughputs
    for n in range(start, N + 1):
        if switch_at is not None and n == switch_at + 1:
            kappa = float(np.mean(T / state.mean_rates))
            state.table = state.table.with_kappa(kappa)
            state.kind = "jps_static"
        R = stream.rates(n)
        try:
            d = run_slot(state, R, model, beta)
            if cfg.check_invariants:
                _check_slot(d, R, T, state.kind, beta, jm)
        except Exception as exc:
            raise SimulationError(f"replication {rep_index}, slot {n}: {exc}") from exc
        update_throughput(state, d, n)
        account(n, d, T)

    return MetricsSeries(
        policy=spec.name, mean_rates=np.asarray(pop.mean_rates), burn_in=burn,
        record_slots=rec, throughput_traj=traj, utility_traj=util,
        selection_counts=sel, probe_histogram=hist,
        steady_selection_counts=ssel, steady_probe_histogram=shist,
        steady_bits=sbits, n_steady=max(N - burn, 0),
        final_throughputs=T.copy(), kappa_used=kappa, trace=trace,
    )


def _run_one(args):
    cfg, rep, kappa = args
    return run_replication(cfg, rep, kappa)


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _mean_std(values) -> dict:
    a = np.asarray(values, dtype=float)
    std = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return {"mean": float(a.mean()), "std": std, "values": a.tolist()}


def aggregate(series: Sequence[MetricsSeries]) -> dict:
    """Per-metric mean/std across replications, folded in replication order."""
    reps = [empirical_report(s) for s in series]
    sel = np.asarray([r.selection_freq for r in reps])
    probes = np.asarray([r.probe_freq for r in reps])
    return {
        "policy": series[0].policy,
        "n_replications": len(series),
        "gain": _mean_std([r.gain for r in reps]),
        "kappa": _mean_std([r.kappa for r in reps]),
        "sum_throughput": _mean_std([r.sum_throughput for r in reps]),
        "utility_final": _mean_std([r.utility_final for r in reps]),
        "selection_freq": sel.mean(axis=0).tolist(),
        "probe_freq": probes.mean(axis=0).tolist(),
        "kappa_used": series[0].kappa_used,
    }


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple[dict, list[MetricsSeries]]:
    """Run every replication and aggregate; output is independent of ``threads``."""
    kappa = _resolve_kappa(cfg)
    series = _map(_run_one, [(cfg, rep, kappa) for rep in range(cfg.n_replications)], threads)
    return aggregate(series), series


def _with_value(cfg: ExperimentConfig, variable: str, value) -> ExperimentConfig:
    if variable == "K":
        if not isinstance(cfg.rates, str):
            raise ValueError("sweeping K needs rates='index' or 'equal'")
        return replace(cfg, K=int(value))
    if variable == "beta":
        return replace(cfg, beta=float(value))
    if variable == "n_slots":
        return replace(cfg, n_slots=int(value))
    raise ValueError(f"cannot sweep {variable!r}")


def sweep(cfg: ExperimentConfig, variable: str, values: Sequence, threads: int = 1) -> list[dict]:
    """One aggregated report per value of ``variable`` (K, beta or n_slots)."""
    if not len(values):
        raise ValueError("sweep needs at least one value")
    cfgs = [_with_value(cfg, variable, v) for v in values]
    jobs = []
    for i, c in enumerate(cfgs):
        kappa = _resolve_kappa(c)
        jobs.extend((c, rep, kappa) for rep in range(c.n_replications))
    series = _map(_run_one, jobs, threads)
    out = []
    pos = 0
    for v, c in zip(values, cfgs):
        agg = aggregate(series[pos: pos + c.n_replications])
        pos += c.n_replications
        agg[variable] = v
        out.append(agg)
    return out


SWEEP_FIELDS = ["variable", "value", "policy", "n_replications", "gain_mean", "gain_std",
                "kappa_mean", "sum_throughput_mean", "sum_throughput_std", "utility_mean"]


def sweep_rows(variable: str, reports: Sequence[dict]) -> list[dict]:
    return [{
        "variable": variable, "value": r[variable], "policy": r["policy"],
        "n_replications": r["n_replications"],
        "gain_mean": r["gain"]["mean"], "gain_std": r["gain"]["std"],
        "kappa_mean": r["kappa"]["mean"],
        "sum_throughput_mean": r["sum_throughput"]["mean"],
        "sum_throughput_std": r["sum_throughput"]["std"],
        "utility_mean": r["utility_final"]["mean"],
    } for r in reports]


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def shadow_agreement(cfg: ExperimentConfig, kappa: float, rep_index: int = 0) -> float:
    """Fraction of post-burn-in slots where the static rule would decide as the dynamic one.

    Runs the dynamic scheduler and, every slot, asks the static-threshold
    rule for its decision on the same throughputs and rates.  A decision
    is the pair (probe count, selected user).
    """
    pop = cfg.pop
    model, beta = cfg.rate_model, cfg.beta
    stream = RateStream(pop, cfg.seed, rep_index)
    table = build_threshold_table(model, beta, cfg.K, kappa)
    state = new_state("jps_dynamic", pop)
    static_view = shadow(state, "jps_static", table)
    same = total = 0
    for n in range(1, cfg.n_slots + 1):
        R = stream.rates(n)
        d = run_slot(state, R, model, beta)
        if n > cfg.burn_in:
            s = run_slot(static_view, R, model, beta)
            total += 1
            same += (s.stop_index, s.selected) == (d.stop_index, d.selected)
        update_throughput(state, d, n)
    return same / total if total else 1.0


def paired_agreement(cfg: ExperimentConfig, kappa: float, rep_index: int = 0) -> float:
    """Per-slot decision agreement of two independent runs on one rate stream."""
    dyn = run_replication(replace(cfg.with_policy("jps_dynamic"), keep_trace=True), rep_index)
    sta = run_replication(replace(cfg.with_policy("jps_static"), keep_trace=True), rep_index,
                          kappa=kappa)
    burn = cfg.burn_in
    pairs = [(a, b) for a, b in zip(dyn.trace, sta.trace) if a.slot > burn]
    if not pairs:
        return 1.0
    same = sum((a.stop_index, a.selected) == (b.stop_index, b.selected) for a, b in pairs)
    return same / len(pairs)


__all__ += ["aggregate", "sweep_rows", "KAPPA_MODES", "PolicyState"]
