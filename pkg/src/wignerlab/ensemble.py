"""Entry laws and Wigner matrix sampling.

Every shipped law is standardized (mean 0, variance 1). Continuous laws
compute their moments by adaptive quadrature of the density; discrete laws
sum over their atoms exactly.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, NumericalError

__all__ = [
    "EntryDistribution",
    "Discrete",
    "Rademacher",
    "Gaussian",
    "SymmetricPareto",
    "Truncated",
    "TruncationPolicy",
    "WignerSample",
    "MATCH_SUPPORT_CONSTANT",
    "distribution_from_config",
    "sample_wigner",
    "truncate_standardize",
    "four_moment_match",
    "moments",
]

# atoms of four_moment_match(A, B) never exceed this constant times B
MATCH_SUPPORT_CONSTANT = (1.0 + math.sqrt(5.0)) / 2.0

_QUAD_TOL = 1e-13
_MIN_VARIANCE = 1e-12


class EntryDistribution(ABC):
    """Law of a single matrix entry ``X_jk``."""

    name: ClassVar[str]

    @property
    def delta(self):
        """Declared moment margin: ``E|X|^(4+delta)`` is finite; None if bounded."""
        return None

    @property
    def support_bound(self) -> float:
        return math.inf

    def moment_exists(self, k: float) -> bool:
        return True

    @abstractmethod
    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        ...

    @abstractmethod
    def moment(self, k: int) -> float:
        """Raw moment ``E X^k``."""

    @abstractmethod
    def params(self) -> dict:
        ...

    def to_config(self) -> dict:
        return {"name": self.name, **self.params()}


@dataclass(frozen=True, eq=False)
class Discrete(EntryDistribution):
    """Finite-support law given by atoms and their probabilities."""

    atoms: tuple
    probs: tuple
    name: ClassVar[str] = "discrete"

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if atoms.ndim != 1 or atoms.shape != probs.shape or atoms.size == 0:
            raise ConfigError("atoms and probs must be equal-length nonempty lists", "atoms")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigError("probs must be nonnegative and sum to 1", "probs")
        if not np.all(np.isfinite(atoms)):
            raise ConfigError("atoms must be finite", "atoms")
        object.__setattr__(self, "atoms", tuple(float(a) for a in atoms))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))

    @property
    def support_bound(self) -> float:
        return max(abs(a) for a in self.atoms)

    def sample(self, rng, size):
        atoms = np.asarray(self.atoms)
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return atoms[np.minimum(idx, atoms.size - 1)]

    def moment(self, k):
        return math.fsum(p * a**k for a, p in zip(self.atoms, self.probs))

    def params(self):
        return {"atoms": list(self.atoms), "probs": list(self.probs)}

    def __eq__(self, other):
        return (
            isinstance(other, Discrete)
            and self.name == other.name
            and self.atoms == other.atoms
            and self.probs == other.probs
        )

    def __hash__(self):
        return hash((self.name, self.atoms, self.probs))


@dataclass(frozen=True, eq=False)
class Rademacher(Discrete):
    """Symmetric random sign, Wigner's original ensemble."""

    atoms: tuple = (-1.0, 1.0)
    probs: tuple = (0.5, 0.5)
    name: ClassVar[str] = "rademacher"

    def sample(self, rng, size):
        return 2.0 * rng.integers(0, 2, size=size).astype(float) - 1.0

    def params(self):
        return {}


class _Continuous(EntryDistribution):
    """Absolutely continuous law; moments by quadrature over smooth pieces."""

    @abstractmethod
    def pdf(self, x):
        ...

    @abstractmethod
    def tail_mass(self, t: float) -> float:
        """``P(|X| > t)``."""

    @abstractmethod
    def _pieces(self):
        """Intervals (possibly infinite) on which the density is smooth."""

    def _integrate(self, g, lo=-math.inf, hi=math.inf):
        total = []
        for a, b in self._pieces():
            a, b = max(a, lo), min(b, hi)
            if a < b:
                val, _ = integrate.quad(
                    lambda x: g(x) * self.pdf(x), a, b,
                    epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=500,
                )
                total.append(val)
        return math.fsum(total)

    def moment(self, k):
        if not self.moment_exists(k):
            raise ValueError(f"moment of order {k} diverges for {self.name}")
        return self._integrate(lambda x: x**k)


@dataclass(frozen=True)
class Gaussian(_Continuous):
    name: ClassVar[str] = "gaussian"

    def pdf(self, x):
        return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)

    def tail_mass(self, t):
        return float(special.erfc(t / math.sqrt(2.0)))

    def _pieces(self):
        return [(-math.inf, 0.0), (0.0, math.inf)]

    def sample(self, rng, size):
        return rng.standard_normal(size)

    def params(self):
        return {}


@dataclass(frozen=True)
class SymmetricPareto(_Continuous):
    """Symmetrized Pareto law, standardized, with tail index ``4 + delta + 0.1``.

    ``E|X|^k`` is finite exactly for ``k < 4 + delta + 0.1``.
    """

    margin: float = 1.0
    name: ClassVar[str] = "pareto"

    def __post_init__(self):
        if not (self.margin > 0 and math.isfinite(self.margin)):
            raise ConfigError("pareto margin (delta) must be a positive number", "delta")

    @property
    def delta(self):
        return self.margin

    @property
    def tail_index(self) -> float:
        return 4.0 + self.margin + 0.1

    @property
    def scale(self) -> float:
        a = self.tail_index
        return math.sqrt((a - 2.0) / a)

    def moment_exists(self, k):
        return k < self.tail_index

    def pdf(self, x):
        a, xm = self.tail_index, self.scale
        ax = abs(x)
        if ax < xm:
            return 0.0
        return 0.5 * a * xm**a / ax ** (a + 1.0)

    def tail_mass(self, t):
        if t < self.scale:
            return 1.0
        return (self.scale / t) ** self.tail_index

    def _pieces(self):
        xm = self.scale
        # finite breakpoints keep quad accurate on the heavy tail
        return [(-math.inf, -8.0 * xm), (-8.0 * xm, -xm), (xm, 8.0 * xm), (8.0 * xm, math.inf)]

    def sample(self, rng, size):
        u = rng.random(size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * self.scale * (1.0 - u) ** (-1.0 / self.tail_index)

    def params(self):
        return {"delta": self.margin}


@dataclass(frozen=True)
class Truncated(_Continuous):
    """Law of ``(X 1[|X| <= T] - mu) / sigma`` for a continuous base law."""

    base: _Continuous
    threshold: float
    name: ClassVar[str] = "truncated"
    shift: float = field(init=False)
    sigma: float = field(init=False)

    def __post_init__(self):
        t = self.threshold
        mu = self.base._integrate(lambda x: x, -t, t)
        var = self.base._integrate(lambda x: x * x, -t, t) - mu * mu
        if var < _MIN_VARIANCE:
            raise NumericalError(f"post-truncation variance {var:.3e} is degenerate")
        object.__setattr__(self, "shift", mu)
        object.__setattr__(self, "sigma", math.sqrt(var))

    @property
    def delta(self):
        return self.base.delta

    @property
    def support_bound(self):
        return (self.threshold + abs(self.shift)) / self.sigma

    def pdf(self, x):
        # density of the continuous part only; the atom sits at -shift/sigma
        y = x * self.sigma + self.shift
        if abs(y) > self.threshold:
            return 0.0
        return self.base.pdf(y) * self.sigma

    def tail_mass(self, t):
        raise NotImplementedError("truncated laws are not re-truncated")

    def _pieces(self):
        return []

    def moment(self, k):
        t, mu, sig = self.threshold, self.shift, self.sigma
        cont = self.base._integrate(lambda x: ((x - mu) / sig) ** k, -t, t)
        atom = (-mu / sig) ** k * self.base.tail_mass(t)
        return cont + atom

    def sample(self, rng, size):
        x = self.base.sample(rng, size)
        y = np.where(np.abs(x) <= self.threshold, x, 0.0)
        return (y - self.shift) / self.sigma

    def params(self):
        return {"base": self.base.to_config(), "threshold": self.threshold}


@dataclass(frozen=True)
class TruncationPolicy:
    """Truncation constants tied to the moment margin ``delta``.

    ``alpha = 2 / (4 + delta)`` is the bounded-entry truncation exponent and
    ``kappa = (1 - 2 alpha) / 2``. ``phi_prime`` sets the delocalization
    threshold ``D n^(1/2 - phi_prime)``.
    """

    delta: float
    D: float = 1.0
    phi_prime: float = 0.125

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError("delta must be positive", "delta")
        if not self.D > 0:
            raise ConfigError("truncation constant D must be positive", "D")
        if not 0.0 < self.phi_prime < 0.25:
            raise ConfigError("phi_prime must satisfy 0 < phi_prime < 1/4", "phi_prime")

    @property
    def alpha(self) -> float:
        return 2.0 / (4.0 + self.delta)

    @property
    def kappa(self) -> float:
        return (1.0 - 2.0 * self.alpha) / 2.0

    def bound_threshold(self, n: int) -> float:
        """Level ``D n^alpha`` of the bounded-entry condition."""
        return self.D * n**self.alpha

    def threshold(self, n: int) -> float:
        """Level ``D n^(1/2 - phi_prime)`` of the delocalization pipeline."""
        return self.D * n ** (0.5 - self.phi_prime)


def truncate_standardize(dist: EntryDistribution, n: int, policy: TruncationPolicy):
    """Cut ``dist`` at ``T = D n^(1/2 - phi')``, recenter and rescale to unit variance.

    Laws already supported inside ``[-T, T]`` come back unchanged. Returns
    ``(law, T)``.
    """
    if not dist.moment_exists(4.0 + policy.delta):
        raise ValueError(
            f"{dist.name} lacks a finite moment of order 4 + delta = {4.0 + policy.delta}"
        )
    t = policy.threshold(n)
    if dist.support_bound <= t:
        return dist, t
    if isinstance(dist, Discrete):
        atoms = np.asarray(dist.atoms)
        probs = np.asarray(dist.probs)
        kept = np.where(np.abs(atoms) <= t, atoms, 0.0)
        mu = float(np.dot(probs, kept))
        var = float(np.dot(probs, (kept - mu) ** 2))
        if var < _MIN_VARIANCE:
            raise NumericalError(f"post-truncation variance {var:.3e} is degenerate")
        vals, inv = np.unique(kept, return_inverse=True)
        merged = np.bincount(inv, weights=probs)
        return Discrete(tuple((vals - mu) / math.sqrt(var)), tuple(merged)), t
    if isinstance(dist, _Continuous):
        return Truncated(dist, t), t
    raise ConfigError(f"cannot truncate distribution {dist.name!r}", "dist")


def four_moment_match(A: float, B: float) -> Discrete:
    """Three-atom law on ``{-s, 0, t}`` with moments ``(0, 1, A, B)``.

    Writing ``w = p t = q s`` the moment equations reduce to
    ``t - s = A``, ``t s = B - A^2``, ``w = 1 / (t + s)``, and the mass at the
    origin is ``1 - 1/(B - A^2)``, nonnegative exactly when ``B >= A^2 + 1``.
    Atoms are bounded by ``MATCH_SUPPORT_CONSTANT * B``.
    """
    A = float(A)
    B = float(B)
    if not (math.isfinite(A) and math.isfinite(B)):
        raise ValueError("A and B must be finite")
    if B < A * A + 1.0:
        raise ValueError(f"four_moment_match requires B >= A^2 + 1, got A={A}, B={B}")
    prod = B - A * A
    root = math.sqrt(A * A + 4.0 * prod)
    t = 0.5 * (A + root)
    s = 0.5 * (root - A)
    w = 1.0 / root
    p, q = w / t, w / s
    zero = max(0.0, 1.0 - p - q)
    atoms, probs = [-s, t], [q, p]
    if zero > 0.0:
        atoms.insert(1, 0.0)
        probs.insert(1, zero)
    total = math.fsum(probs)
    law = Discrete(tuple(atoms), tuple(x / total for x in probs))
    residual = max(
        abs(law.moment(1)), abs(law.moment(2) - 1.0), abs(law.moment(3) - A), abs(law.moment(4) - B)
    )
    if residual > 1e-10 * max(1.0, B):
        raise NumericalError(f"moment matching residual {residual:.3e} for A={A}, B={B}")
    return law


def moments(dist: EntryDistribution, k: int) -> float:
    """Raw moment ``E X^k`` of ``dist``."""
    if k < 1:
        raise ValueError("moment order must be >= 1")
    return dist.moment(k)


_REGISTRY = {
    "rademacher": lambda p: Rademacher(),
    "gaussian": lambda p: Gaussian(),
    "pareto": lambda p: SymmetricPareto(float(p.get("delta", 1.0))),
    "discrete": lambda p: Discrete(tuple(p["atoms"]), tuple(p["probs"])),
    "four_moment": lambda p: four_moment_match(float(p["A"]), float(p["B"])),
}

_ALLOWED = {
    "rademacher": set(),
    "gaussian": set(),
    "pareto": {"delta"},
    "discrete": {"atoms", "probs"},
    "four_moment": {"A", "B"},
}


def distribution_from_config(cfg) -> EntryDistribution:
    """Build a law from ``{"name": ..., **params}`` (or a bare name string)."""
    if isinstance(cfg, str):
        cfg = {"name": cfg}
    if not isinstance(cfg, dict) or "name" not in cfg:
        raise ConfigError("distribution config needs a 'name' key", "ensemble.name")
    name = cfg["name"]
    if name not in _REGISTRY:
        raise ConfigError(
            f"unknown distribution {name!r}; choose from {sorted(_REGISTRY)}", "ensemble.name"
        )
    params = {k: v for k, v in cfg.items() if k != "name"}
    extra = set(params) - _ALLOWED[name]
    if extra:
        key = sorted(extra)[0]
        raise ConfigError(f"unexpected parameter {key!r} for {name}", f"ensemble.{key}")
    try:
        return _REGISTRY[name](params)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for {name}: {exc}", f"ensemble.{name}") from exc


@dataclass(frozen=True, eq=False)
class WignerSample:
    """One realization ``W = X / sqrt(n)`` with its provenance."""

    n: int
    x: np.ndarray
    entries: np.ndarray
    seed: int | None = None
    dist: str = "custom"

    @classmethod
    def from_entries(cls, entries, seed=None, dist="custom"):
        """Wrap an explicit symmetric matrix ``W`` (used for synthetic inputs)."""
        w = np.array(entries, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("entries must be a square matrix")
        n = w.shape[0]
        return cls(n=n, x=w * math.sqrt(n), entries=w, seed=seed, dist=dist)


def _generator(seed: int) -> np.random.Generator:
    # Philox is counter-based: the seed is the key, the entry index the counter
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


def sample_wigner(n: int, dist: EntryDistribution, seed: int, zero_diagonal: bool = False):
    """Draw a Wigner matrix with i.i.d. upper triangle (diagonal included).

    Entries are drawn in row-major order of the upper triangle from a Philox
    stream keyed by ``seed``, so the result is a pure function of
    ``(n, dist, seed)``. ``zero_diagonal`` forces ``X_jj = 0``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if seed is None:
        raise ValueError("a seed token is required for reproducible sampling")
    rng = _generator(seed)
    iu = np.triu_indices(n)
    upper = np.zeros((n, n))
    upper[iu] = dist.sample(rng, iu[0].size)
    if zero_diagonal:
        np.fill_diagonal(upper, 0.0)
    x = upper + np.triu(upper, 1).T
    return WignerSample(n=n, x=x, entries=x / math.sqrt(n), seed=int(seed), dist=dist.name)
