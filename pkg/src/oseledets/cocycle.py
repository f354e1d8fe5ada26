"""Matrix distributions, orbit windows, and cocycle product machinery.

An orbit window holds the one-step matrices F(T^i omega) for i in
[offset, offset + n).  Products accumulate with periodic renormalization:
every RENORM_EVERY factors the running matrix is divided by its max-abs
entry, which moves into a separate log accumulator, so window lengths of
10^6 and matrix norms like e^500000 stay representable.

Seed discipline: all randomness flows through numpy SeedSequence children
spawned from the master seed in a fixed documented order, one stream per
logical field, and scalar laws are sampled by inverse CDF only (one
uniform per draw).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import gl2
from .scalars import ScalarDist, Unsupported

RENORM_EVERY = 32


class WindowExhausted(IndexError):
    """Requested product range leaves the stored window."""


@dataclass(frozen=True)
class MatrixDistribution:
    """A law on invertible 2x2 matrices.

    Kinds:

    - ``atoms``: finite list of (matrix, weight)
    - ``triangular``: rows [[a, b], [0, 1]] with scalar laws for a and
      either b directly or log|b| (``log_scale_b=True``); the log form keeps
      heavy-tailed b in the representable range of downstream closed forms
    - ``rotgain``: rotation(angle) @ diag(e^t, e^-t) with scalar laws for
      the rotation angle and the log-gain t
    """

    kind: str
    matrices: tuple = ()          # atoms: tuple of 2x2 tuples
    weights: tuple = ()           # atoms
    a: ScalarDist | None = None   # triangular
    b: ScalarDist | None = None   # triangular: law of b or of log|b|
    log_scale_b: bool = False
    angle: ScalarDist | None = None     # rotgain
    log_gain: ScalarDist | None = None  # rotgain

    def __post_init__(self):
        if self.kind == "atoms":
            if len(self.matrices) == 0 or len(self.matrices) != len(self.weights):
                raise ValueError("atoms need matching matrix and weight lists")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("atom weights must be nonnegative and sum to 1")
            for m in self.matrices:
                if abs(gl2.det2(np.asarray(m, dtype=float))) <= gl2.DET_FLOOR:
                    raise gl2.NotInvertible("atom matrix is singular")
        elif self.kind == "triangular":
            if self.a is None or self.b is None:
                raise ValueError("triangular kind needs scalar laws a and b")
        elif self.kind == "rotgain":
            if self.angle is None or self.log_gain is None:
                raise ValueError("rotgain kind needs angle and log_gain laws")
        else:
            raise Unsupported(f"unknown matrix distribution kind {self.kind!r}")

    # -- sampling ---------------------------------------------------------

    def sample_matrices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n i.i.d. matrices, shape (n, 2, 2).

        Uniform consumption order is field-major: atoms use one stream of n
        uniforms; triangular draws all a then all b; rotgain all angles then
        all gains.
        """
        if self.kind == "atoms":
            w = np.asarray(self.weights, dtype=float)
            idx = np.searchsorted(np.cumsum(w), rng.random(n), side="left")
            idx = np.minimum(idx, len(w) - 1)
            return np.asarray(self.matrices, dtype=float)[idx]
        if self.kind == "triangular":
            a = self.a.sample(rng, n)
            braw = self.b.sample(rng, n)
            b = np.exp(braw) if self.log_scale_b else braw
            out = np.zeros((n, 2, 2))
            out[:, 0, 0] = a
            out[:, 0, 1] = b
            out[:, 1, 1] = 1.0
            return out
        ang = self.angle.sample(rng, n)
        t = self.log_gain.sample(rng, n)
        out = gl2.rotation(ang)
        out[:, :, 0] *= np.exp(t)[:, None]
        out[:, :, 1] *= np.exp(-t)[:, None]
        return out

    # -- serialization ----------------------------------------------------

    def to_obj(self) -> dict:
        if self.kind == "atoms":
            return {
                "kind": "atoms",
                "atoms": [
                    {
                        "m": [[repr(float(v)) for v in row] for row in m],
                        "w": repr(float(w)),
                    }
                    for m, w in zip(self.matrices, self.weights)
                ],
            }
        if self.kind == "triangular":
            key = "log_b" if self.log_scale_b else "b"
            return {"kind": "triangular", "a": self.a.to_obj(), key: self.b.to_obj()}
        return {
            "kind": "rotgain",
            "angle": self.angle.to_obj(),
            "log_gain": self.log_gain.to_obj(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True)

    @staticmethod
    def from_obj(obj: dict) -> "MatrixDistribution":
        kind = obj["kind"]
        if kind == "atoms":
            mats = tuple(
                tuple(tuple(float(v) for v in row) for row in entry["m"])
                for entry in obj["atoms"]
            )
            wts = tuple(float(entry["w"]) for entry in obj["atoms"])
            return MatrixDistribution(kind="atoms", matrices=mats, weights=wts)
        if kind == "triangular":
            log_form = "log_b" in obj
            return MatrixDistribution(
                kind="triangular",
                a=ScalarDist.from_obj(obj["a"]),
                b=ScalarDist.from_obj(obj["log_b" if log_form else "b"]),
                log_scale_b=log_form,
            )
        if kind == "rotgain":
            return MatrixDistribution(
                kind="rotgain",
                angle=ScalarDist.from_obj(obj["angle"]),
                log_gain=ScalarDist.from_obj(obj["log_gain"]),
            )
        raise Unsupported(f"unknown matrix distribution kind {kind!r}")

    @staticmethod
    def from_json(text: str) -> "MatrixDistribution":
        return MatrixDistribution.from_obj(json.loads(text))


def atoms_distribution(pairs) -> MatrixDistribution:
    """Atomic matrix law from (2x2 array-like, weight) pairs."""
    mats = tuple(tuple(tuple(float(v) for v in row) for row in np.asarray(m)) for m, _ in pairs)
    wts = tuple(float(w) for _, w in pairs)
    return MatrixDistribution(kind="atoms", matrices=mats, weights=wts)


def triangular_distribution(a: ScalarDist, b: ScalarDist, log_scale_b: bool = False):
    return MatrixDistribution(kind="triangular", a=a, b=b, log_scale_b=log_scale_b)


def rotgain_distribution(angle: ScalarDist, log_gain: ScalarDist):
    return MatrixDistribution(kind="rotgain", angle=angle, log_gain=log_gain)


# ---------------------------------------------------------------------------
# orbit windows


@dataclass(frozen=True)
class OrbitWindow:
    """One-step matrices along a finite orbit stretch.

    ``matrices[j]`` is F(T^i omega) for i = offset + j.  ``prescribed_f``
    (same length, pairs of line angles) and ``labels`` are optional extras
    attached by constructions that know them.
    """

    offset: int
    matrices: np.ndarray
    prescribed_f: np.ndarray | None = None
    labels: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        object.__setattr__(self, "matrices", m)
        if m.ndim != 3 or m.shape[1:] != (2, 2):
            raise ValueError("matrices must have shape (n, 2, 2)")
        for name in ("prescribed_f", "labels"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != len(m):
                raise ValueError(f"{name} must match the matrix count")

    def __len__(self) -> int:
        return self.matrices.shape[0]

    @property
    def end(self) -> int:
        return self.offset + len(self)

    def slot(self, time: int) -> int:
        """Array index of orbit time ``time``; raises WindowExhausted."""
        j = time - self.offset
        if not 0 <= j < len(self):
            raise WindowExhausted(f"time {time} outside [{self.offset}, {self.end})")
        return j

    def matrix_at(self, time: int) -> np.ndarray:
        return self.matrices[self.slot(time)]


def sample_onestep(
    nu: MatrixDistribution, half_width: int, seed: int
) -> OrbitWindow:
    """I.i.d. window over [-half_width, half_width); deterministic in seed."""
    if half_width < 1:
        raise ValueError("half_width must be at least 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    mats = nu.sample_matrices(rng, 2 * half_width)
    return OrbitWindow(offset=-half_width, matrices=mats, seed=seed)


# ---------------------------------------------------------------------------
# products


class ScaledMat2(NamedTuple):
    """A 2x2 matrix stored as exp(log_scale) * mat."""

    mat: np.ndarray
    log_scale: float


def _renorm(m: np.ndarray, log_scale: float) -> tuple[np.ndarray, float]:
    peak = np.abs(m).max()
    if peak == 0.0 or not np.isfinite(peak):
        raise gl2.NotInvertible("product degenerated during renormalization")
    return m / peak, log_scale + math.log(peak)


def product_scaled(mats: np.ndarray) -> ScaledMat2:
    """Ordered product mats[n-1] @ ... @ mats[0] with renormalization.

    Long ranges use pairwise tree reduction (bit-stable given the input),
    renormalizing per round; short ranges run sequentially with a
    renormalization every RENORM_EVERY factors.
    """
    mats = np.asarray(mats, dtype=float)
    n = mats.shape[0]
    if n == 0:
        return ScaledMat2(np.eye(2), 0.0)
    if n <= 2 * RENORM_EVERY:
        m = np.eye(2)
        log_scale = 0.0
        for i in range(n):
            m = mats[i] @ m
            if (i + 1) % RENORM_EVERY == 0:
                m, log_scale = _renorm(m, log_scale)
        m, log_scale = _renorm(m, log_scale)
        return ScaledMat2(m, log_scale)
    # tree reduction: adjacent pairs multiply in orbit order
    cur = mats
    scales = np.zeros(n)
    while cur.shape[0] > 1:
        k = cur.shape[0]
        half = k // 2
        left = cur[0 : 2 * half : 2]
        right = cur[1 : 2 * half : 2]
        prod = right @ left  # later time acts on the left
        peaks = np.abs(prod).reshape(half, 4).max(axis=1)
        if np.any(peaks == 0.0) or not np.all(np.isfinite(peaks)):
            raise gl2.NotInvertible("product degenerated during renormalization")
        prod /= peaks[:, None, None]
        new_scales = scales[0 : 2 * half : 2] + scales[1 : 2 * half : 2] + np.log(peaks)
        if k % 2:
            prod = np.concatenate([prod, cur[-1:]], axis=0)
            new_scales = np.concatenate([new_scales, scales[-1:]])
        cur, scales = prod, new_scales
    return ScaledMat2(cur[0], float(scales[0]))


def cocycle_product_scaled(
    window: OrbitWindow, from_time: int, n: int
) -> ScaledMat2:
    """Scaled n-step product starting at orbit time ``from_time``.

    n >= 0 gives F(T^(from+n-1)) ... F(T^from); n < 0 gives the inverse of
    the |n|-step product starting at from+n, so that the cocycle identity
    holds for signed times.  F^(0) is the identity.
    """
    if n == 0:
        return ScaledMat2(np.eye(2), 0.0)
    if n > 0:
        lo, hi = from_time, from_time + n
    else:
        lo, hi = from_time + n, from_time
    if lo < window.offset or hi > window.end:
        raise WindowExhausted(
            f"product over [{lo}, {hi}) exceeds window [{window.offset}, {window.end})"
        )
    mats = window.matrices[lo - window.offset : hi - window.offset]
    fwd = product_scaled(mats)
    if n > 0:
        return fwd
    return ScaledMat2(gl2.inv2(fwd.mat), -fwd.log_scale)


def cocycle_product(window: OrbitWindow, from_time: int, n: int) -> np.ndarray:
    """The n-step product as a plain matrix (desk-scale n; may overflow otherwise)."""
    m, log_scale = cocycle_product_scaled(window, from_time, n)
    return math.exp(log_scale) * m


# ---------------------------------------------------------------------------
# moments of log_norm_max


class MomentEstimate(NamedTuple):
    value: float
    stderr: float
    exact: bool


def _log_norm_max_triangular(a: np.ndarray, log_abs_b: np.ndarray) -> np.ndarray:
    """log_norm_max of [[a, b], [0, 1]] from a and log|b|, overflow-safe.

    For log|b| <= 300 the matrix is materialized and svd2 applies; beyond
    that, s1 = |b| to within less than a unit in the last place, so
    log s1 = log|b| and log s2 = log|a| - log|b|.
    """
    shape = np.broadcast(np.asarray(a, dtype=float), np.asarray(log_abs_b, dtype=float)).shape
    a = np.broadcast_to(np.asarray(a, dtype=float), shape)
    lb = np.broadcast_to(np.asarray(log_abs_b, dtype=float), shape)
    out = np.empty(shape)
    big = lb > 300.0
    small = ~big
    if np.any(small):
        mats = np.zeros((int(small.sum()), 2, 2))
        mats[:, 0, 0] = a[small]
        mats[:, 0, 1] = np.exp(lb[small])
        mats[:, 1, 1] = 1.0
        out[small] = gl2.log_norm_max(mats)
    if np.any(big):
        la = np.log(np.abs(a[big]))
        out[big] = np.maximum(lb[big], lb[big] - la)
    return out


def moment(
    nu: MatrixDistribution,
    order: int,
    trials: int = 10_000,
    seed: int = 0,
) -> MomentEstimate:
    """Mean of log_norm_max(g)^order under nu.

    Atomic nu: exact weighted sum, zero standard error.  Otherwise Monte
    Carlo with the stated trial count; a heavy-tailed law shows up as an
    estimate that keeps growing with trials (reported, never raised).
    """
    if order < 1:
        raise ValueError("order must be a positive integer")
    if nu.kind == "atoms":
        vals = gl2.log_norm_max(np.asarray(nu.matrices, dtype=float))
        value = float(np.dot(vals**order, nu.weights))
        return MomentEstimate(value, 0.0, True)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if nu.kind == "triangular":
        a = nu.a.sample(rng, trials)
        braw = nu.b.sample(rng, trials)
        lb = braw if nu.log_scale_b else np.log(np.abs(braw))
        vals = _log_norm_max_triangular(a, lb)
    else:  # rotgain: rotations are isometries, so log_norm_max = |log gain|
        rng.random(trials)  # angle draws, consumed to keep the stream layout fixed
        t = nu.log_gain.sample(rng, trials)
        vals = np.abs(t)
    vals = vals**order
    value = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(trials))
    return MomentEstimate(value, stderr, False)
