"""Scalar distributions sampled exclusively through their inverse CDF.

Every draw consumes exactly one uniform from the supplied generator, so a
run is bit-reproducible given its seed.  Supported kinds:

- ``atoms``: finite list of (value, weight)
- ``uniform``: uniform on [lo, hi)
- ``exponential``: rate parameterization
- ``dyadic``: the heavy-tail law P(value = 2^k) = (3/4) * 4^(-k), k >= 0,
  with mean 3/2 and infinite second moment
- ``affine``: shift + scale * base for another law (scale != 0), e.g. a
  heavy tail pushed to the negative axis

Numeric JSON fields are written as decimal strings (shortest round-trip
repr) so that save/load is bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

_LN4 = math.log(4.0)


class BadTerm(ValueError):
    """A list entry violates its documented range."""


class Unsupported(ValueError):
    """Operation not defined for this distribution kind."""


@dataclass(frozen=True)
class ScalarDist:
    """A scalar law with a closed-form inverse CDF."""

    kind: str
    values: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    lo: float = 0.0
    hi: float = 1.0
    rate: float = 1.0
    base: "ScalarDist | None" = None
    scale: float = 1.0
    shift: float = 0.0
    # cumulative weights, cached for atomic inverse-CDF lookup
    _cum: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "atoms":
            w = np.asarray(self.weights, dtype=float)
            if len(w) == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise BadTerm("atom weights must be nonnegative and sum to 1")
            object.__setattr__(self, "_cum", np.cumsum(w))
        elif self.kind == "uniform":
            if not self.lo < self.hi:
                raise BadTerm("uniform law needs lo < hi")
        elif self.kind == "exponential":
            if not self.rate > 0:
                raise BadTerm("exponential law needs rate > 0")
        elif self.kind == "affine":
            if self.base is None or self.scale == 0.0:
                raise BadTerm("affine law needs a base law and nonzero scale")
        elif self.kind != "dyadic":
            raise Unsupported(f"unknown scalar law kind {self.kind!r}")

    # -- sampling ---------------------------------------------------------

    def icdf(self, u):
        """Inverse CDF, array-generic; u in [0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "atoms":
            idx = np.searchsorted(self._cum, u, side="left")
            idx = np.minimum(idx, len(self.values) - 1)
            return np.asarray(self.values, dtype=float)[idx]
        if self.kind == "uniform":
            return self.lo + u * (self.hi - self.lo)
        if self.kind == "exponential":
            return -np.log1p(-u) / self.rate
        if self.kind == "affine":
            # negative scale reverses the CDF, so feed the mirrored uniform
            v = u if self.scale > 0 else 1.0 - u
            return self.shift + self.scale * self.base.icdf(v)
        # dyadic: smallest k with 1 - 4^-(k+1) >= u, value 2^k
        k = np.ceil(-np.log1p(-u) / _LN4 - 1.0)
        k = np.maximum(k, 0.0)
        return np.exp2(k)

    def sample(self, rng: np.random.Generator, n: int | None = None):
        """Draw via the inverse CDF; consumes one uniform per sample."""
        u = rng.random() if n is None else rng.random(n)
        return self.icdf(u)

    # -- exact functionals ------------------------------------------------

    @property
    def is_atomic(self) -> bool:
        if self.kind == "affine":
            return self.base.is_atomic
        return self.kind in ("atoms", "dyadic")

    def mean(self) -> float:
        if self.kind == "atoms":
            return float(np.dot(self.values, self.weights))
        if self.kind == "uniform":
            return (self.lo + self.hi) / 2.0
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "affine":
            return self.shift + self.scale * self.base.mean()
        return 1.5  # dyadic: (3/4) sum 2^k 4^-k = (3/4) sum 2^-k

    def second_moment(self) -> float:
        if self.kind == "atoms":
            return float(np.dot(np.square(self.values), self.weights))
        if self.kind == "uniform":
            return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0
        if self.kind == "exponential":
            return 2.0 / self.rate**2
        if self.kind == "affine":
            m2 = self.base.second_moment()
            if math.isinf(m2):
                return math.inf
            return self.shift**2 + 2.0 * self.shift * self.scale * self.base.mean() + self.scale**2 * m2
        return math.inf  # dyadic: every term of sum 4^k 4^-k is 3/4

    def atom_pairs(self) -> list[tuple[float, float]]:
        """Finite (value, weight) list; Unsupported for non-finite-atomic kinds."""
        if self.kind == "affine":
            return [(self.shift + self.scale * v, w) for v, w in self.base.atom_pairs()]
        if self.kind != "atoms":
            raise Unsupported("atom_pairs needs a finite atomic law")
        return list(zip(self.values, self.weights))

    # -- serialization ----------------------------------------------------

    def to_obj(self) -> dict:
        if self.kind == "atoms":
            return {
                "kind": "atoms",
                "values": [repr(float(v)) for v in self.values],
                "weights": [repr(float(w)) for w in self.weights],
            }
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": repr(float(self.lo)), "hi": repr(float(self.hi))}
        if self.kind == "exponential":
            return {"kind": "exponential", "rate": repr(float(self.rate))}
        if self.kind == "affine":
            return {
                "kind": "affine",
                "base": self.base.to_obj(),
                "scale": repr(float(self.scale)),
                "shift": repr(float(self.shift)),
            }
        return {"kind": "dyadic"}

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True)

    @staticmethod
    def from_obj(obj: dict) -> "ScalarDist":
        kind = obj["kind"]
        if kind == "atoms":
            return ScalarDist(
                kind="atoms",
                values=tuple(float(v) for v in obj["values"]),
                weights=tuple(float(w) for w in obj["weights"]),
            )
        if kind == "uniform":
            return ScalarDist(kind="uniform", lo=float(obj["lo"]), hi=float(obj["hi"]))
        if kind == "exponential":
            return ScalarDist(kind="exponential", rate=float(obj["rate"]))
        if kind == "affine":
            return ScalarDist(
                kind="affine",
                base=ScalarDist.from_obj(obj["base"]),
                scale=float(obj["scale"]),
                shift=float(obj["shift"]),
            )
        if kind == "dyadic":
            return ScalarDist(kind="dyadic")
        raise Unsupported(f"unknown scalar law kind {kind!r}")

    @staticmethod
    def from_json(text: str) -> "ScalarDist":
        return ScalarDist.from_obj(json.loads(text))


def atoms(pairs) -> ScalarDist:
    """Finite atomic law from (value, weight) pairs."""
    vals, wts = zip(*pairs)
    return ScalarDist(kind="atoms", values=tuple(map(float, vals)), weights=tuple(map(float, wts)))


def constant(value: float) -> ScalarDist:
    """Point mass."""
    return atoms([(value, 1.0)])


def uniform(lo: float, hi: float) -> ScalarDist:
    return ScalarDist(kind="uniform", lo=lo, hi=hi)


def exponential(rate: float) -> ScalarDist:
    return ScalarDist(kind="exponential", rate=rate)


def dyadic() -> ScalarDist:
    """Heavy-tail law P(2^k) = (3/4) 4^-k: finite mean, infinite second moment."""
    return ScalarDist(kind="dyadic")


def affine(base: ScalarDist, scale: float, shift: float) -> ScalarDist:
    """The law of shift + scale * X for X distributed by base."""
    return ScalarDist(kind="affine", base=base, scale=scale, shift=shift)
