"""Steady-state theory: probe-count law, scheduling gains, PF utility.

The scheduling gain of a scheme is its per-user throughput divided by
the probe-free round-robin throughput ``r_k / K``.  For the optimal
stopping scheduler it equals ``kappa * K`` and is evaluated here from the
static thresholds, with the truncated-maximum expectations estimated by
conditional Monte Carlo.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .channel import RateModel, conditional_sample
from .stopping import build_threshold_table

__all__ = [
    "AnalysisError",
    "EmpiricalReport",
    "TheoryReport",
    "probe_count_distribution",
    "analytic_gain",
    "gain_genie",
    "gain_probe_all",
    "pf_utility",
    "empirical_report",
    "theory_report",
    "gain_curves",
    "gain_curves_csv",
    "total_variation",
]

MIN_ACCEPTANCE = 1e-6


class AnalysisError(RuntimeError):
    pass


def _stop_probs(model: RateModel, thresholds: Sequence[float]) -> list[float]:
    """``q_j = P(first j-1 probes all below v_{j-1})`` for ``j = 1..J_max``."""
    jm = len(thresholds) - 1
    q = [1.0]
    for j in range(2, jm + 1):
        q.append(model.cdf_below(thresholds[j - 1]) ** (j - 1))
    return q


def probe_count_distribution(model: RateModel, beta: float, K: int) -> list[float]:
    """Steady-state ``P(J = j)`` for ``j = 1..J_max``; ``p_j = q_j - q_{j+1}``."""
    table = build_threshold_table(model, beta, K)
    q = _stop_probs(model, table.thresholds)
    q.append(0.0)
    return [q[i] - q[i + 1] for i in range(len(q) - 1)]


def analytic_gain(model: RateModel, beta: float, K: int,
                             mc_samples: int = 200_000,
                             rng: np.random.Generator | None = None,
                             ) -> tuple[float, float, float]:
    """``(kappa, kappa*K, stderr)`` of the optimal stopping scheduler.

    Term ``j`` weights ``(1 - j beta) E[M_j | M_j >= v_j]`` by ``p_j``, where
    ``M_j`` is the max of ``j - 1`` draws conditioned below ``v_{j-1}`` and
    one free draw.  The outer conditioning is done by rejection until
    ``mc_samples`` draws are accepted; the ``j = 1`` term is exact.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    table = build_threshold_table(model, beta, K)
    v = table.thresholds
    p = probe_count_distribution(model, beta, K)
    gain = 0.0
    var = 0.0
    for j in range(1, table.j_max + 1):
        if p[j - 1] <= 0.0:
            continue
        weight = p[j - 1] * (1.0 - j * beta)
        if j == 1:
            # single draw: E[X | X >= v] in closed form
            tail = 1.0 - model.cdf_below(v[1])
            gain += weight * (v[1] + model.partial_expectation(v[1]) / tail)
            continue
        accepted = []
        n_acc = n_drawn = 0
        while n_acc < mc_samples:
            m = model.sample(rng, mc_samples)
            if j > 1:
                below = conditional_sample(model, "below", v[j - 1], rng, (mc_samples, j - 1))
                m = np.maximum(m, below.max(axis=1))
            keep = m[m >= v[j]]
            n_drawn += mc_samples
            n_acc += len(keep)
            accepted.append(keep)
            if n_acc / n_drawn < MIN_ACCEPTANCE:
                raise AnalysisError(f"rejection acceptance {n_acc / n_drawn:.2e} too low at j={j}")
        vals = np.concatenate(accepted)
        gain += weight * vals.mean()
        if weight and len(vals) > 1:
            var += weight ** 2 * vals.var(ddof=1) / len(vals)
    return gain / K, gain, math.sqrt(var)


def _harmonic(K: int) -> float:
    return math.fsum(1.0 / k for k in range(1, K + 1))


def gain_genie(model: RateModel, K: int, mc_samples: int = 0,
               rng: np.random.Generator | None = None) -> float:
    """``E[max of K draws of X]`` (exact when ``mc_samples == 0``)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if mc_samples:
        rng = rng if rng is not None else np.random.default_rng(0)
        total = 0.0
        done = 0
        while done < mc_samples:
            n = min(mc_samples - done, max(1, 2_000_000 // K))
            total += model.sample(rng, (n, K)).max(axis=1).sum()
            done += n
        return total / mc_samples
    if model.kind == "exponential":
        return _harmonic(K)
    if model.kind == "uniform":
        return 2.0 * K / (K + 1)
    cum = np.asarray(model._cum)
    prev = np.concatenate(([0.0], cum[:-1]))
    return float(np.dot(model.atoms, cum ** K - prev ** K))


def gain_probe_all(model: RateModel, K: int, beta: float, mc_samples: int = 0,
                   rng: np.random.Generator | None = None) -> float:
    frac = max(1.0 - K * beta, 0.0)
    if frac == 0.0:
        return 0.0
    return frac * gain_genie(model, K, mc_samples, rng)


def pf_utility(throughputs) -> float:
    """Sum of log throughputs."""
    t = np.asarray(throughputs, dtype=float)
    if np.any(t <= 0):
        raise ValueError("PF utility needs positive throughputs")
    return float(np.log(t).sum())


@dataclass
class TheoryReport:
    K: int
    beta: float
    rate_model: dict
    thresholds: list[float]
    probe_probs: list[float]
    kappa: float
    gain_jps: float
    gain_ga: float
    gain_pa: float
    gain_rr: float = 1.0
    mc_std_error: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def probe_probs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "p_j"])
        for j, pj in enumerate(self.probe_probs, start=1):
            w.writerow([j, repr(pj)])
        return buf.getvalue()


def theory_report(model: RateModel, beta: float, K: int, mc_samples: int = 200_000,
                  seed: int = 0) -> TheoryReport:
    rng = np.random.default_rng(np.random.SeedSequence([seed, K, 4]))
    kappa, gain, se = analytic_gain(model, beta, K, mc_samples, rng)
    table = build_threshold_table(model, beta, K)
    return TheoryReport(
        K=K, beta=beta, rate_model=model.to_config(),
        thresholds=list(table.thresholds),
        probe_probs=probe_count_distribution(model, beta, K),
        kappa=kappa, gain_jps=gain,
        gain_ga=gain_genie(model, K), gain_pa=gain_probe_all(model, K, beta),
        mc_std_error=se,
    )


def gain_curves(model: RateModel, beta: float, K_values: Sequence[int],
                mc_samples: int = 200_000, seed: int = 0) -> list[dict]:
    rows = []
    for K in K_values:
        rep = theory_report(model, beta, K, mc_samples, seed)
        rows.append({"K": K, "gain_jps": rep.gain_jps, "gain_ga": rep.gain_ga,
                     "gain_pa": rep.gain_pa, "gain_rr": rep.gain_rr})
    return rows


def gain_curves_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["K", "gain_jps", "gain_ga", "gain_pa", "gain_rr"],
                       lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


@dataclass
class EmpiricalReport:
    gain: float
    kappa: float
    sum_throughput: float
    selection_freq: list[float]
    probe_freq: list[float]
    utility_final: float
    gain_ci: tuple[float, float] = field(default=(math.nan, math.nan))


def empirical_report(traces) -> EmpiricalReport:
    """Steady-state summary of one replication or a list of them.

    Gain for user ``k`` is its post-burn-in throughput over ``r_k / K``,
    averaged over users; ``kappa`` is the mean of ``T_k / r_k``.  With
    several replications the figures are averaged and a normal 95%
    interval on the gain is attached.
    """
    if not isinstance(traces, (list, tuple)):
        traces = [traces]
    gains, kappas, sums, sel, probes, utils = [], [], [], [], [], []
    for tr in traces:
        r = np.asarray(tr.mean_rates)
        K = len(r)
        T = tr.steady_throughputs
        gains.append(float(np.mean(T / (r / K))))
        kappas.append(float(np.mean(T / r)))
        sums.append(float(T.sum()))
        cnt = np.asarray(tr.steady_selection_counts, dtype=float)
        sel.append(cnt / max(cnt.sum(), 1.0))
        h = np.asarray(tr.steady_probe_histogram, dtype=float)
        probes.append(h / max(h.sum(), 1.0))
        utils.append(tr.utility_traj[-1] if len(tr.utility_traj) else math.nan)
    g = np.asarray(gains)
    if len(g) > 1:
        half = 1.96 * g.std(ddof=1) / math.sqrt(len(g))
        ci = (float(g.mean() - half), float(g.mean() + half))
    else:
        ci = (math.nan, math.nan)
    width = max(len(p) for p in probes)
    probes = [np.pad(p, (0, width - len(p))) for p in probes]
    return EmpiricalReport(
        gain=float(g.mean()), kappa=float(np.mean(kappas)), sum_throughput=float(np.mean(sums)),
        selection_freq=np.mean(sel, axis=0).tolist(), probe_freq=np.mean(probes, axis=0).tolist(),
        utility_final=float(np.mean(utils)), gain_ci=ci,
    )


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(len(p), len(q))
    p = np.pad(p, (0, n - len(p)))
    q = np.pad(q, (0, n - len(q)))
    return 0.5 * float(np.abs(p - q).sum())
