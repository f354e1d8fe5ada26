"""Skyscraper base dynamics: towers with prescribed measures over a renewal
chain.

A tower vector assigns mass ``pi_k`` to a tower of height ``k``; the base
cell of that tower then carries mass ``pi_k / k`` (each tower is a stack of
``k`` equal-measure levels).  The dynamics move a point one level up per
step and resample a fresh tower height, with probability proportional to
``pi_k / k``, when the top is reached.  The stationary law of the resulting
(height, level) chain puts mass ``pi_k / k`` on every level, which is what
makes every prescribed-measure claim directly testable by simulation.

Two height-selection rules feed the cocycle constructions elsewhere in the
package: ``bounded_tower_vector`` turns a strictly decreasing sequence of
target label measures into tower masses (heights 1, 4, 6, 8, ...), and
``lowcost_heights`` picks sparse heights so that per-piece costs spread
thinner than a requested rate.

Masses are finite maps throughout; constructors fold any sub-1e-9 residual
into the last retained entry so the unit-mass invariant holds bit-level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MASS_TOL = 1e-12

# Constructors accept inputs whose mass is off by at most this much and
# fold the residual into the last retained piece.
FOLD_TOL = 1e-9


class BadTowerVector(ValueError):
    """Tower masses violate positivity, unit mass, or the gcd-1 condition."""


class BadHeightForLabels(ValueError):
    """Labels are defined only for heights 1, 4, 6, 8, ..."""


class NeedStrictDecrease(ValueError):
    """The target sequence must be strictly decreasing; refine_weights fixes this."""


@dataclass(frozen=True)
class TowerVector:
    """Sparse map height -> mass with unit total and gcd-1 support."""

    entries: dict[int, float]

    def __post_init__(self):
        clean: dict[int, float] = {}
        for k, w in self.entries.items():
            kk = int(k)
            if kk != k or kk < 1:
                raise BadTowerVector(f"height {k!r} is not a positive integer")
            if not (w >= 0.0) or not math.isfinite(w):
                raise BadTowerVector(f"mass {w!r} at height {kk} out of range")
            if w > 0.0:
                clean[kk] = clean.get(kk, 0.0) + w
        if not clean:
            raise BadTowerVector("no positive masses")
        total = math.fsum(clean.values())
        if abs(total - 1.0) > MASS_TOL:
            raise BadTowerVector(f"masses sum to {total!r}, not 1")
        if math.gcd(*clean.keys()) != 1:
            raise BadTowerVector(f"support {sorted(clean)} has gcd > 1")
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    def support(self) -> list[int]:
        return list(self.entries)

    def mass(self, k: int) -> float:
        return self.entries.get(int(k), 0.0)

    def mean_height(self) -> float:
        return math.fsum(k * w for k, w in self.entries.items())

    def to_obj(self) -> dict:
        return {"heights": {str(k): repr(float(w)) for k, w in self.entries.items()}}

    @classmethod
    def from_obj(cls, obj: dict) -> "TowerVector":
        return cls({int(k): float(w) for k, w in obj["heights"].items()})


@dataclass(frozen=True)
class SkyscraperState:
    """Position in the skyscraper: tower height and level above the base."""

    height: int
    level: int

    def __post_init__(self):
        if self.height < 1 or not (0 <= self.level < self.height):
            raise BadTowerVector(
                f"level {self.level} outside [0, {self.height})"
            )


def kac_base_measures(pi: TowerVector) -> dict[int, float]:
    """Mass of each tower's base cell: mass(k) / k.

    Summing height * base measure over the support recovers 1 exactly,
    since the k levels of tower k split its mass evenly.
    """
    return {k: w / k for k, w in pi.entries.items()}


def _support_arrays(pi: TowerVector) -> tuple[np.ndarray, np.ndarray]:
    ks = np.array(pi.support(), dtype=np.int64)
    ws = np.array([pi.entries[int(k)] for k in ks], dtype=float)
    return ks, ws / ws.sum()


def _return_law(pi: TowerVector) -> tuple[np.ndarray, np.ndarray]:
    # height of the next tower entered from a base cell
    ks, ws = _support_arrays(pi)
    q = ws / ks
    return ks, q / q.sum()


def renewal_start_stationary(pi: TowerVector, seed=0) -> SkyscraperState:
    """Stationary draw: height with probability mass(k), level uniform below it."""
    rng = np.random.default_rng(seed)
    ks, ws = _support_arrays(pi)
    k = int(rng.choice(ks, p=ws))
    return SkyscraperState(k, int(rng.integers(0, k)))


def renewal_step(state: SkyscraperState, pi: TowerVector, rng) -> SkyscraperState:
    """One step up the tower, or into a fresh tower from the top.

    The fresh height is drawn proportional to mass(k)/k, the base-cell law,
    which is exactly what preserves the stationary law of
    renewal_start_stationary.
    """
    if state.level + 1 < state.height:
        return SkyscraperState(state.height, state.level + 1)
    ks, q = _return_law(pi)
    return SkyscraperState(int(rng.choice(ks, p=q)), 0)


def renewal_trajectory(pi: TowerVector, steps: int, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized stationary trajectory: (heights, levels), each of length steps.

    Equivalent in law to renewal_start_stationary followed by repeated
    renewal_step; whole towers are drawn at once and unrolled with repeat /
    arange, so a million steps cost a handful of array operations.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    ks, ws = _support_arrays(pi)
    k0 = int(rng.choice(ks, p=ws))
    i0 = int(rng.integers(0, k0))
    _, q = _return_law(pi)
    mean_return = float(ks @ q)
    hs = [np.full(k0 - i0, k0, dtype=np.int64)]
    ls = [np.arange(i0, k0, dtype=np.int64)]
    total = k0 - i0
    while total < steps:
        m = int((steps - total) / mean_return * 1.2) + 16
        draw = rng.choice(ks, p=q, size=m)
        hs.append(np.repeat(draw, draw))
        csum = np.cumsum(draw)
        ls.append(np.arange(csum[-1], dtype=np.int64) - np.repeat(csum - draw, draw))
        total += int(csum[-1])
    return np.concatenate(hs)[:steps], np.concatenate(ls)[:steps]


_LABEL_HEIGHTS_DOC = "heights must be 1 or even and >= 4"


def _labelable(heights) -> np.ndarray:
    h = np.asarray(heights)
    return (h == 1) | ((h >= 4) & (h % 2 == 0))


def label_of(state: SkyscraperState) -> int:
    """Distance to the nearer end of the tower: min(level, height-1-level).

    Defined for height 1 and even heights >= 4; there each label below the
    midpoint appears exactly twice per tower, and consecutive labels along
    any trajectory differ by at most 1.
    """
    if not _labelable(state.height):
        raise BadHeightForLabels(f"height {state.height}: {_LABEL_HEIGHTS_DOC}")
    return min(state.level, state.height - 1 - state.level)


def trajectory_labels(heights, levels) -> np.ndarray:
    """Labels along a trajectory, with the one-step Lipschitz property asserted."""
    h = np.asarray(heights, dtype=np.int64)
    i = np.asarray(levels, dtype=np.int64)
    if not np.all(_labelable(h)):
        bad = int(h[~_labelable(h)][0])
        raise BadHeightForLabels(f"height {bad}: {_LABEL_HEIGHTS_DOC}")
    lab = np.minimum(i, h - 1 - i)
    assert np.all(np.abs(np.diff(lab)) <= 1), "label moved by more than 1 in one step"
    return lab


def trajectory_csv(heights, levels) -> str:
    """CSV dump of a labeled trajectory: step,height,level,label."""
    lab = trajectory_labels(heights, levels)
    lines = ["step,height,level,label"]
    for t, (h, i, l) in enumerate(zip(heights, levels, lab)):
        lines.append(f"{t},{h},{i},{l}")
    return "\n".join(lines) + "\n"


def _check_p(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise NeedStrictDecrease("need a nonempty 1d sequence")
    if not np.all(p > 0):
        raise NeedStrictDecrease("entries must be positive")
    if not np.all(np.diff(p) < 0):
        raise NeedStrictDecrease("sequence must be strictly decreasing")
    if abs(math.fsum(p) - 1.0) > FOLD_TOL:
        raise NeedStrictDecrease(f"mass {math.fsum(p)!r} too far from 1")
    return p


def bounded_tower_vector(p) -> TowerVector:
    """Tower masses realizing label measures p_0 > p_1 > ... as occupancies.

    Height 1 gets p[0] - p[1]; height 2n+2 gets (n+1) * (p[n] - p[n+1]) for
    n >= 1, with p treated as 0 past the end.  Telescoping makes the total
    mass equal sum(p) = 1, and the two levels per label in each even tower
    make the label-n occupancy come out to exactly p[n] (see
    label_measures).  Any float residual is folded into the last height.
    """
    p = _check_p(p)
    ext = np.append(p, 0.0)
    entries = {1: ext[0] - ext[1]}
    for n in range(1, p.size):
        entries[2 * n + 2] = (n + 1) * (ext[n] - ext[n + 1])
    ks = sorted(entries)
    entries[ks[-1]] += 1.0 - math.fsum(entries.values())
    return TowerVector(entries)


def label_measures(p) -> dict[int, float]:
    """Closed-form label occupancies of bounded_tower_vector(p), by tower.

    Sums mass(k)/k times the per-tower multiplicity of each label (1 for
    the height-1 tower's label 0, else 2); comes out to p[n] for label n,
    which is the point of the construction.
    """
    pi = bounded_tower_vector(p)
    base = kac_base_measures(pi)
    out: dict[int, float] = {}
    for k, mb in base.items():
        if k == 1:
            out[0] = out.get(0, 0.0) + mb
        else:
            for label in range(k // 2):
                out[label] = out.get(label, 0.0) + 2.0 * mb
    return dict(sorted(out.items()))


def refine_weights(p) -> tuple[np.ndarray, np.ndarray]:
    """Split weights into a strictly decreasing sequence, preserving mass.

    Walks the weights in order; a weight that is not strictly below the
    previous output piece is split into the minimal number of pieces that
    can all fit strictly below it, laid out in arithmetic progression so
    the pieces themselves strictly decrease.  Returns (values, owners)
    where owners[j] is the index of the source weight of piece j, so
    mixture components can be replicated consistently.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0 or not np.all(p > 0):
        raise ValueError("need a nonempty sequence of positive weights")
    if abs(math.fsum(p) - 1.0) > FOLD_TOL:
        raise ValueError(f"weights sum to {math.fsum(p)!r}, not 1")
    values: list[float] = []
    owners: list[int] = []
    prev = math.inf
    for idx, w in enumerate(p):
        pieces = int(w / prev) + 1 if math.isfinite(prev) else 1
        mean = w / pieces
        if pieces == 1:
            values.append(w)
        else:
            # top piece stays below prev, bottom stays positive; slack 1/k
            gap = min(prev - mean, mean) / pieces
            offs = gap * ((pieces - 1) / 2.0 - np.arange(pieces))
            values.extend(mean + offs)
        owners.extend([idx] * pieces)
        prev = values[-1]
    return np.asarray(values), np.asarray(owners, dtype=np.int64)


def lowcost_heights(costs, epsilon: float) -> list[int]:
    """Strictly increasing heights with costs[n] / height[n] < epsilon / 2.

    Heights are chosen minimally subject to the strict rate bound and the
    strict increase; if the resulting set has a common factor, the last
    height is bumped upward until the gcd is 1 (bumping can only improve
    the rate bound).  A single piece only works when height 1 does.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 1 or costs.size == 0:
        raise ValueError("need a nonempty 1d cost sequence")
    if not np.all(np.isfinite(costs)) or np.any(costs < 0):
        raise ValueError("costs must be finite and nonnegative")
    if np.any(np.diff(costs) < 0):
        raise ValueError("costs must be nondecreasing")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    heights: list[int] = []
    prev = 0
    for c in costs:
        k = max(prev + 1, int(2.0 * c / epsilon) + 1)
        heights.append(k)
        prev = k
    if math.gcd(*heights) != 1:
        if len(heights) == 1:
            raise ValueError(
                "a single piece admits no gcd-1 height set unless height 1 works"
            )
        while math.gcd(*heights) != 1:
            heights[-1] += 1
    return heights


def p_to_obj(p) -> dict:
    return {"p": [repr(float(x)) for x in np.asarray(p, dtype=float)]}


def p_from_obj(obj) -> np.ndarray:
    return np.array([float(x) for x in obj["p"]], dtype=float)
