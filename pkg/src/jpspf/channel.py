"""Channel model: unit-mean rate distributions and per-slot rate generation.

Every user's achievable rate in a slot is ``R_k = r_k * X_k`` where the
``X_k`` are i.i.d. copies of a nonnegative, unit-mean random variable.
The distribution of ``X`` is described by :class:`RateModel`, which also
exposes the functionals the stopping rules need (CDF, partial
expectation, inverse CDF and region-conditioned sampling).

Slot rates are drawn from a counter-based generator (Philox) keyed by
``(seed, stream)`` whose counter is the slot index, so the rates seen in
slot ``n`` do not depend on how many draws a policy made earlier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "RateModel",
    "UserPopulation",
    "SlotRates",
    "RateStream",
    "sample_slot_rates",
    "cdf",
    "partial_expectation",
    "conditional_sample",
]

KINDS = ("exponential", "uniform", "discrete")
_QUAD_TOL = 1e-9


class ZeroProbabilityRegion(ValueError):
    """Raised when conditioning on an event the model gives probability zero."""


@dataclass(frozen=True)
class RateModel:
    """Unit-mean nonnegative distribution of the normalized rate ``X``.

    ``kind`` is one of ``exponential`` (rate 1), ``uniform`` (on [0, 2]) or
    ``discrete`` (``atoms``/``probs`` given explicitly).  The constructors
    :meth:`exponential`, :meth:`uniform`, :meth:`discrete` and
    :meth:`degenerate` are the intended entry points.
    """

    kind: str = "exponential"
    atoms: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    _cum: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown rate model kind {self.kind!r}")
        if self.kind != "discrete":
            return
        atoms = tuple(float(a) for a in self.atoms)
        probs = tuple(float(p) for p in self.probs)
        if not atoms or len(atoms) != len(probs):
            raise ValueError("discrete model needs matching nonempty atoms/probs")
        if any(a < 0 for a in atoms):
            raise ValueError("atoms must be nonnegative")
        if any(p < 0 for p in probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(probs)!r}, expected 1")
        mean = math.fsum(a * p for a, p in zip(atoms, probs))
        if abs(mean - 1.0) > 1e-9:
            raise ValueError(f"discrete model has mean {mean!r}, expected 1")
        # merge duplicates and sort so the CDF is a clean step function
        merged: dict[float, float] = {}
        for a, p in zip(atoms, probs):
            merged[a] = merged.get(a, 0.0) + p
        atoms = tuple(sorted(merged))
        probs = tuple(merged[a] for a in atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cum", tuple(np.cumsum(probs).tolist()))

    # -- constructors -----------------------------------------------------
    @classmethod
    def exponential(cls) -> "RateModel":
        return cls("exponential")

    @classmethod
    def uniform(cls) -> "RateModel":
        return cls("uniform")

    @classmethod
    def discrete(cls, atoms: Sequence[float], probs: Sequence[float]) -> "RateModel":
        return cls("discrete", tuple(atoms), tuple(probs))

    @classmethod
    def degenerate(cls) -> "RateModel":
        """``X == 1`` almost surely."""
        return cls.discrete([1.0], [1.0])

    @classmethod
    def from_config(cls, spec: dict) -> "RateModel":
        """Build from ``{"kind": ..., "params": {...}}``.

        Discrete params are ``{"pairs": [[atom, prob], ...]}``.
        """
        kind = spec.get("kind", "exponential")
        params = spec.get("params") or {}
        if kind == "discrete":
            pairs = params.get("pairs")
            if not pairs:
                raise ValueError("discrete rate model needs params.pairs")
            return cls.discrete([a for a, _ in pairs], [p for _, p in pairs])
        if kind == "degenerate":
            return cls.degenerate()
        return cls(kind)

    def to_config(self) -> dict:
        if self.kind == "discrete":
            return {"kind": "discrete",
                    "params": {"pairs": [[a, p] for a, p in zip(self.atoms, self.probs)]}}
        return {"kind": self.kind, "params": {}}

    @property
    def is_continuous(self) -> bool:
        return self.kind != "discrete"

    # -- distribution functionals -----------------------------------------
    def cdf(self, x: float) -> float:
        """``P(X <= x)``."""
        if x < 0:
            return 0.0
        if self.kind == "exponential":
            return -math.expm1(-x)
        if self.kind == "uniform":
            return min(x / 2.0, 1.0)
        i = np.searchsorted(self.atoms, x, side="right")
        return self._cum[i - 1] if i else 0.0

    def cdf_below(self, x: float) -> float:
        """``P(X < x)``; equals :meth:`cdf` for the continuous families."""
        if self.is_continuous:
            return self.cdf(x)
        i = np.searchsorted(self.atoms, x, side="left")
        return self._cum[i - 1] if i else 0.0

    def partial_expectation(self, v: float) -> float:
        """Expected excess ``E[(X - v)^+]``."""
        if v <= 0:
            # X >= 0 so the excess is E[X] - v
            return 1.0 - v
        if self.kind == "exponential":
            return math.exp(-v)
        if self.kind == "uniform":
            if v >= 2.0:
                return 0.0
            val, _ = integrate.quad(lambda x: 1.0 - self.cdf(x), v, 2.0,
                                    epsabs=_QUAD_TOL, epsrel=0.0)
            return val
        total = 0.0
        for a, p in zip(self.atoms, self.probs):
            if a > v:
                total += p * (a - v)
        return total

    def mean(self) -> float:
        if self.kind == "discrete":
            return math.fsum(a * p for a, p in zip(self.atoms, self.probs))
        return 1.0

    def ppf(self, u):
        """Inverse CDF, vectorized over ``u`` in [0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "exponential":
            return -np.log1p(-u)
        if self.kind == "uniform":
            return 2.0 * u
        idx = np.searchsorted(np.asarray(self._cum), u, side="right")
        idx = np.minimum(idx, len(self.atoms) - 1)
        return np.asarray(self.atoms)[idx]

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))


def cdf(model: RateModel, x: float) -> float:
    return model.cdf(x)


def partial_expectation(model: RateModel, v: float) -> float:
    """``integral_v^inf (x - v) dF(x)`` for ``v >= 0``."""
    if v < 0:
        raise ValueError("partial expectation is defined for v >= 0")
    return model.partial_expectation(v)


def conditional_sample(model: RateModel, region: str, v: float,
                       rng: np.random.Generator, size=None):
    """Draw ``X`` conditioned on ``X < v`` (``"below"``) or ``X >= v`` (``"above"``).

    Uses inverse-CDF sampling restricted to the region's probability band,
    so no draws are wasted.  The split matches the stopping rules: a probe
    below the threshold continues, at-or-above stops.
    """
    lo_p = model.cdf_below(v)
    if region == "below":
        if lo_p <= 0.0:
            raise ZeroProbabilityRegion(f"P(X < {v}) = 0")
        u = rng.random(size) * lo_p
    elif region == "above":
        if lo_p >= 1.0:
            raise ZeroProbabilityRegion(f"P(X >= {v}) = 0")
        u = lo_p + rng.random(size) * (1.0 - lo_p)
    else:
        raise ValueError(f"region must be 'below' or 'above', got {region!r}")
    x = model.ppf(u)
    # inverse-CDF round-off can land a hair outside a continuous region
    if region == "below":
        x = np.minimum(x, np.nextafter(v, -np.inf))
    else:
        x = np.maximum(x, v)
    return float(x) if size is None else x


@dataclass(frozen=True)
class UserPopulation:
    """``K`` users sharing one rate model, user ``k`` with mean rate ``r_k``."""

    mean_rates: tuple[float, ...]
    rate_model: RateModel = field(default_factory=RateModel.exponential)

    def __post_init__(self):
        rates = tuple(float(r) for r in self.mean_rates)
        if not rates:
            raise ValueError("need at least one user")
        if any(not r > 0 for r in rates):
            raise ValueError("mean rates must be strictly positive")
        object.__setattr__(self, "mean_rates", rates)

    @property
    def count(self) -> int:
        return len(self.mean_rates)

    @classmethod
    def indexed(cls, K: int, model: RateModel | None = None) -> "UserPopulation":
        """Mean rate of user ``k`` equal to ``k`` (1-based), as in the experiments."""
        return cls(tuple(range(1, K + 1)), model or RateModel.exponential())

    @classmethod
    def equal(cls, K: int, model: RateModel | None = None) -> "UserPopulation":
        return cls((1.0,) * K, model or RateModel.exponential())


@dataclass(frozen=True)
class SlotRates:
    slot_index: int
    rates: np.ndarray


class RateStream:
    """Reproducible per-slot rate source.

    Uniforms for slot ``n`` come from Philox counter block ``n - 1`` under a
    key derived from ``(seed, stream)``; each slot owns ``ceil(K / 4)``
    counter blocks.  Reading slots in any order or chunking gives the
    same values.
    """

    def __init__(self, pop: UserPopulation, seed: int, stream: int = 0,
                 chunk: int = 4096):
        self.pop = pop
        self.seed = int(seed)
        self.stream = int(stream)
        self._key = np.random.SeedSequence([self.seed, self.stream]).generate_state(2, np.uint64)
        self._blocks = -(-pop.count // 4)
        self._chunk = chunk
        self._start = 0
        self._buf: np.ndarray | None = None
        self._r = np.asarray(pop.mean_rates)

    def uniforms(self, first: int, count: int) -> np.ndarray:
        """Uniform matrix for slots ``first .. first + count - 1`` (1-based)."""
        if first < 1:
            raise ValueError("slot indices start at 1")
        bg = np.random.Philox(key=self._key, counter=(first - 1) * self._blocks)
        u = np.random.Generator(bg).random((count, 4 * self._blocks))
        return u[:, : self.pop.count]

    def block(self, first: int, count: int) -> np.ndarray:
        """Raw rates ``R_k(n)`` for a run of consecutive slots."""
        x = self.pop.rate_model.ppf(self.uniforms(first, count))
        return x * self._r

    def rates(self, n: int) -> np.ndarray:
        if self._buf is None or not (self._start <= n < self._start + len(self._buf)):
            self._start = n
            self._buf = self.block(n, self._chunk)
        return self._buf[n - self._start]

    def slot(self, n: int) -> SlotRates:
        return SlotRates(n, self.rates(n))


def sample_slot_rates(pop: UserPopulation, stream: RateStream, n: int) -> SlotRates:
    """Rates ``R_k(n) = r_k X_k(n)`` for slot ``n`` from a keyed stream."""
    if stream.pop != pop:
        raise ValueError("stream was built for a different population")
    return stream.slot(n)
