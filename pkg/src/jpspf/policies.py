"""Per-slot scheduling policies and the throughput recursion.

Probing policies walk users in descending order of an index (the mean
normalized rate for ``jps_*``, its empirical estimate for ``jlps``),
keep the best normalized rate ``w`` and stop according to their rule.
The selected user is always the best probed one; ties go to the lowest
user index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import RateModel, RateStream, SlotRates, UserPopulation
from .stopping import ThresholdTable, f_j, j_max

__all__ = [
    "POLICIES",
    "PolicyError",
    "Learner",
    "PolicyState",
    "SlotDecision",
    "new_state",
    "probe_order",
    "run_slot",
    "update_throughput",
    "jlps_initialize",
    "jlps_init_slots",
]

POLICIES = ("jps_dynamic", "jps_static", "jlps", "round_robin", "genie_pf", "probe_all_pf")
PROBING = ("jps_dynamic", "jps_static", "jlps")
FLOOR_FACTOR = 1e-9


class PolicyError(RuntimeError):
    pass


class Learner:
    """Archive of probed raw rates per user (the sets ``R_k`` and counts ``M_k``)."""

    def __init__(self, K: int, capacity: int = 64):
        self._buf = [np.empty(capacity) for _ in range(K)]
        self.counts = np.zeros(K, dtype=np.int64)
        self.sums = np.zeros(K)

    def add(self, k: int, x: float) -> None:
        m = self.counts[k]
        buf = self._buf[k]
        if m == len(buf):
            buf = np.resize(buf, 2 * len(buf))
            self._buf[k] = buf
        buf[m] = x
        self.counts[k] = m + 1
        self.sums[k] += x

    def samples(self, k: int) -> np.ndarray:
        return self._buf[k][: self.counts[k]]

    def index(self, T: np.ndarray) -> np.ndarray:
        """Empirical mean normalized rate of every user."""
        return self.sums / self.counts / T

    def lookahead(self, k: int, w: float, Tk: float) -> float:
        """Empirical ``E[max(w, R_k / T_k)]`` over the archive."""
        s = self.samples(k)
        excess = np.maximum(s - w * Tk, 0.0).sum()
        return w + excess / (len(s) * Tk)

    def copy(self) -> "Learner":
        out = Learner.__new__(Learner)
        out._buf = [b.copy() for b in self._buf]
        out.counts = self.counts.copy()
        out.sums = self.sums.copy()
        return out


@dataclass
class PolicyState:
    kind: str
    mean_rates: np.ndarray
    throughputs: np.ndarray
    table: ThresholdTable | None = None
    learner: Learner | None = None
    rr_cursor: int = 0

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise PolicyError(f"unknown policy {self.kind!r}")
        self.mean_rates = np.asarray(self.mean_rates, dtype=float)
        self.throughputs = np.asarray(self.throughputs, dtype=float)
        self.floor = FLOOR_FACTOR * self.mean_rates

    @property
    def K(self) -> int:
        return len(self.mean_rates)

    def validate(self) -> None:
        K = self.K
        if self.throughputs.shape != (K,):
            raise PolicyError("throughput vector has the wrong length")
        if not np.all(self.throughputs > 0):
            raise PolicyError("throughputs must be positive")
        if self.kind == "jps_static" and self.table is None:
            raise PolicyError("jps_static needs a threshold table")
        if self.kind == "jlps":
            if self.learner is None or len(self.learner.counts) != K:
                raise PolicyError("jlps needs a learner with one archive per user")
            if np.any(self.learner.counts < 1):
                raise PolicyError("jlps archives must be initialized")
        if self.kind == "round_robin" and not 0 <= self.rr_cursor < K:
            raise PolicyError("round-robin cursor out of range")


@dataclass
class SlotDecision:
    probe_order: tuple[int, ...]
    probed_rates: tuple[float, ...]
    stop_index: int
    selected: int
    delivered_bits: float
    transmits: bool = True


def new_state(kind: str, pop: UserPopulation, table: ThresholdTable | None = None) -> PolicyState:
    """Fresh state with ``T_k(0) = 1``."""
    st = PolicyState(kind, np.asarray(pop.mean_rates), np.ones(pop.count), table=table)
    if kind == "jlps":
        st.learner = Learner(pop.count)
    return st


def _sort_desc(index: np.ndarray) -> np.ndarray:
    # stable sort on the negated index: ties keep ascending user order
    return np.argsort(-index, kind="stable")


def probe_order(state: PolicyState, pop: UserPopulation | None = None) -> tuple[int, ...]:
    """Users sorted by descending probing index (0-based user ids)."""
    if state.kind == "jlps":
        idx = state.learner.index(state.throughputs)
    else:
        idx = state.mean_rates / state.throughputs
    return tuple(_sort_desc(idx).tolist())


def _argmax_normalized(R: np.ndarray, T: np.ndarray) -> int:
    return int(np.argmax(R / T))


def run_slot(state: PolicyState, slot, model: RateModel, beta: float) -> SlotDecision:
    """Probe, stop and select for one slot.

    ``slot`` is a :class:`SlotRates` or the raw rate vector.  Probing
    policies only read the entries of the users they probe.  ``jlps``
    appends the probed rates to its archive; ``round_robin`` advances its
    cursor.  Throughputs are left untouched (see :func:`update_throughput`).
    """
    R = slot.rates if isinstance(slot, SlotRates) else slot
    kind = state.kind
    K = state.K
    if len(R) != K:
        raise PolicyError(f"slot has {len(R)} rates for {K} users")
    T = state.throughputs

    if kind == "round_robin":
        k = state.rr_cursor
        state.rr_cursor = (k + 1) % K
        return SlotDecision((), (), 0, k, float(R[k]))
    if kind == "genie_pf":
        k = _argmax_normalized(R, T)
        return SlotDecision((), (), 0, k, float(R[k]))
    if kind == "probe_all_pf":
        k = _argmax_normalized(R, T)
        frac = max(1.0 - K * beta, 0.0)
        return SlotDecision(tuple(range(K)), tuple(R.tolist()), K, k,
                            frac * float(R[k]), transmits=frac > 0)

    jm = j_max(K, beta)
    Tl = T.tolist()
    if kind == "jlps":
        learner = state.learner
        order = _sort_desc(learner.index(T)).tolist()
    else:
        sbar = (state.mean_rates / T).tolist()
        order = _sort_desc(np.asarray(sbar)).tolist()
        if kind == "jps_static":
            table = state.table
            if table is None or table.j_max != jm:
                raise PolicyError("threshold table does not match J_max")
            kappa, thr = table.kappa, table.thresholds

    w = 0.0
    best = -1
    probed = []
    j = 0
    while True:
        k = order[j]
        j += 1
        x = float(R[k])
        probed.append(x)
        s = x / Tl[k]
        if best < 0 or s > w or (s == w and k < best):
            w, best = s, k
        if j >= jm:
            break
        nxt = order[j]
        if kind == "jps_dynamic":
            stop = f_j(model, beta, j, sbar[nxt], w) >= 0.0
        elif kind == "jps_static":
            stop = kappa * w >= thr[j]
        else:
            stop = (1.0 - j * beta) * w >= (1.0 - (j + 1) * beta) * learner.lookahead(nxt, w, Tl[nxt])
        if stop:
            break

    if kind == "jlps":
        for k, x in zip(order[:j], probed):
            learner.add(k, x)
    frac = 1.0 - j * beta
    return SlotDecision(tuple(order[:j]), tuple(probed), j, best,
                        max(frac, 0.0) * float(R[best]), transmits=frac > 1e-12)


def update_throughput(state: PolicyState, decision: SlotDecision, n: int) -> PolicyState:
    """``T_k(n) = (n-1)/n * T_k(n-1) + B_k(n)/n`` for every user, then floor."""
    if n < 1:
        raise ValueError("slot index starts at 1")
    T = state.throughputs
    T *= (n - 1) / n
    T[decision.selected] += decision.delivered_bits / n
    np.maximum(T, state.floor, out=T)
    return state


def jlps_init_slots(K: int, beta: float) -> tuple[int, int]:
    """(number of init slots, probes per init slot)."""
    per_slot = min(K, int(math.floor(1.0 / beta + 1e-12)))
    n_init = max(math.ceil(beta * K - 1e-12), -(-K // per_slot))
    return n_init, per_slot


def jlps_initialize(pop: UserPopulation, beta: float, stream: RateStream,
                    ) -> tuple[PolicyState, list[tuple[int, SlotDecision]]]:
    """Probe every user once over the first ``ceil(beta*K)`` slots.

    Each init slot probes the next batch of not-yet-probed users (in index
    order), transmits what is left of the slot to the best of them and
    updates throughputs.  The returned state has every archive holding one
    sample and ``T`` reset to 1 for the main loop; the decisions are
    returned so a simulator can account for the init slots.
    """
    K = pop.count
    j_max(K, beta)
    state = new_state("jlps", pop)
    n_init, per_slot = jlps_init_slots(K, beta)
    decisions = []
    nxt = 0
    for n in range(1, n_init + 1):
        R = stream.rates(n)
        users = list(range(nxt, min(nxt + per_slot, K)))
        nxt += len(users)
        if not users:
            # nothing left to probe; idle slot
            decisions.append((n, SlotDecision((), (), 0, 0, 0.0, transmits=False)))
            update_throughput(state, decisions[-1][1], n)
            continue
        T = state.throughputs
        best = max(users, key=lambda k: (R[k] / T[k], -k))
        for k in users:
            state.learner.add(k, float(R[k]))
        frac = 1.0 - len(users) * beta
        d = SlotDecision(tuple(users), tuple(float(R[k]) for k in users), len(users),
                         best, max(frac, 0.0) * float(R[best]), transmits=frac > 1e-12)
        update_throughput(state, d, n)
        decisions.append((n, d))
    state.throughputs = np.ones(K)
    return state, decisions


def shadow(state: PolicyState, kind: str, table: ThresholdTable | None = None) -> PolicyState:
    """A view of ``state`` that runs a different probing rule on the same throughputs."""
    return replace(state, kind=kind, table=table if table is not None else state.table)
