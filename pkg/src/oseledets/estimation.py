"""Lyapunov exponents, splitting directions, and gap-angle tail statistics.

The estimators follow the contraction mechanics of long products: the
most-expanded direction of a backward product approximates the slow/fast
splitting's expanding line, the most-contracted forward direction
approximates the contracting line, and both converge at rate
exp(-(top - bottom) * depth).

The heavy-tail side lives here too: the upper-triangular family whose
invariant-series cotangent makes the gap angle explicit, the
lag-discounted supremum with its exact tail oracle, product bounds for
tail certification, and the negative-drift supremum with a
horizon-doubling stabilization verdict.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from . import gl2
from .cocycle import (
    MatrixDistribution,
    OrbitWindow,
    WindowExhausted,
    cocycle_product_scaled,
    triangular_distribution,
)
from .scalars import BadTerm, ScalarDist, Unsupported, constant, dyadic

# row chunk for the big vectorized Monte Carlo loops; fixed so a given seed
# always produces the same stream layout
CHUNK = 2048

# a truncated-mean increment below this fraction of the mean reads as
# converging even when statistically resolved: smooth angle laws keep an
# exactly positive exp(-M) tail forever, and at large sample counts a pure
# noise test would flag that vanishing remainder as growth
REL_GROWTH = 0.05


class SeriesDiverging(ArithmeticError):
    """Prefix products fail to decay, so the series sum is not certified."""


class NeedMoreSamples(ValueError):
    """The input list ended before the result could be certified.

    ``required`` is a sufficient total length given what was seen so far.
    """

    def __init__(self, message: str, required: int):
        super().__init__(message)
        self.required = required


class NoData(ValueError):
    """An empty sample list where at least one sample is required."""


class NonNegativeDrift(ValueError):
    """Drift configuration fails 0 < 2c < E[phi]."""


# ---------------------------------------------------------------------------
# exponents and splitting directions


class LyapunovPair(NamedTuple):
    top: float
    bottom: float


def lyapunov_estimates(window: OrbitWindow) -> LyapunovPair:
    """Exponent estimates from the forward stretch [0, end) of a window.

    top = (1/n) log s1 of the n-step product; bottom uses the exact
    determinant identity log s1 + log s2 = log|det|, so top >= bottom
    always.  Lengths below 1000 trigger a warning: the estimates are then
    dominated by transients.
    """
    n = window.end
    if n < 1:
        raise WindowExhausted(f"window [{window.offset}, {window.end}) has no forward part")
    if n < 1000:
        warnings.warn("fewer than 1000 forward steps; exponent estimates are noisy")
    # top_singular, not svd2: the renormalized product of a long window
    # can be numerically singular (s2 underflows) while s1 stays exact
    scaled = cocycle_product_scaled(window, 0, n)
    log_s1 = scaled.log_scale + math.log(float(gl2.top_singular(scaled.mat)))
    top = log_s1 / n
    mats = window.matrices[window.slot(0) : window.slot(n - 1) + 1]
    log_det_sum = float(np.sum(np.log(np.abs(gl2.det2(mats)))))
    return LyapunovPair(top, log_det_sum / n - top)


def estimate_E2_forward(window: OrbitWindow, depth: int) -> float:
    """Forward-contracted line at time 0: the s2 right-singular line of the
    depth-step product over [0, depth).  Error decays like
    exp(-(top - bottom) * depth)."""
    # singular_lines, not svd2: a deep product is numerically rank-1 and
    # trips svd2's invertibility guard, but its lines stay well-conditioned
    scaled = cocycle_product_scaled(window, 0, depth)
    _, right = gl2.singular_lines(scaled.mat)
    return float(gl2.canon_line(right + math.pi / 2.0))


def estimate_E1_backward(window: OrbitWindow, depth: int) -> float:
    """Backward-expanded line at time 0: the image of the top right-singular
    line of the product over [-depth, 0), i.e. that product's left line."""
    scaled = cocycle_product_scaled(window, -depth, depth)
    left, _ = gl2.singular_lines(scaled.mat)
    return float(left)


def suggested_depth(gap: float, target: float = 1e-8) -> int:
    """Smallest depth with exp(-gap * depth) < target."""
    if not gap > 0:
        raise ValueError("need a positive exponent gap")
    return math.ceil(-math.log(target) / gap) + 1


# ---------------------------------------------------------------------------
# the invariant series of upper-triangular cocycles


def triangular_series(
    a_vals,
    b_vals,
    tol: float,
    b_bound: float | None = None,
    diverge_cap: int = 1000,
) -> float:
    """Sum of b[n] * prod(a[:n]) truncated once certified below tol.

    a_vals[j] and b_vals[j] are the entries one-step-deeper in the past; the
    series value is the cotangent coordinate of the expanding line.  The
    truncation rule: stop at the first n whose running |a|-prefix-product
    times b_bound (max |b| seen if not supplied) drops below tol.  A prefix
    product that stays above 1 for more than diverge_cap indices raises
    SeriesDiverging; running out of terms before certification raises
    NeedMoreSamples with a decay-extrapolated sufficient length.
    """
    a = np.asarray(a_vals, dtype=float)
    b = np.asarray(b_vals, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a_vals and b_vals must be equal-length 1d lists")
    if b.size == 0:
        raise NeedMoreSamples("empty series input", required=1)
    if b_bound is None:
        b_bound = float(np.abs(b).max())
    prefix = np.concatenate([[1.0], np.cumprod(a[:-1])])
    decay = np.abs(prefix) * b_bound
    if int((np.abs(prefix) > 1.0).sum()) > diverge_cap:
        raise SeriesDiverging("prefix products stay above 1 beyond the cap")
    certified = np.nonzero(decay < tol)[0]
    if certified.size == 0:
        # extrapolate from the observed geometric decay rate
        n = a.size
        rate = np.abs(prefix[-1]) ** (1.0 / max(n - 1, 1))
        if rate >= 1.0:
            required = n + diverge_cap
        else:
            extra = math.log(tol / max(decay[-1], 1e-300)) / math.log(rate)
            required = n + max(math.ceil(extra), 1)
        raise NeedMoreSamples(
            f"series not certified below tol={tol} after {n} terms", required=required
        )
    stop = int(certified[0])
    return float(np.dot(prefix[:stop], b[:stop]))


# ---------------------------------------------------------------------------
# gap-angle sampling


def _spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def oseledets_angle_samples(
    nu: MatrixDistribution, trials: int, depth: int, seed: int = 0
) -> np.ndarray:
    """Gap angles between the two splitting lines, one per trial.

    For an i.i.d. product the expanding line at time 0 depends only on the
    past and the contracting line only on the future, so the two are
    independent: each trial builds one backward product (left singular
    line) and one independent forward product (s2 right line) from their
    own streams, and the pair has exactly the stationary joint law.

    Products renormalize by their max-abs entry every step; singular lines
    are scale-free so this is exact.
    """
    rng_b, rng_f = _spawn_rngs(seed, 2)

    def top_lines(rng, which):
        prod = np.tile(np.eye(2), (trials, 1, 1))
        for _ in range(depth):
            step = nu.sample_matrices(rng, trials)
            prod = step @ prod
            prod /= np.abs(prod).reshape(trials, 4).max(axis=1)[:, None, None]
        # singular_lines, not svd2: deep products are numerically rank-1
        # and trip svd2's invertibility guard; the lines stay conditioned
        left, right = gl2.singular_lines(prod)
        return left if which == "left" else gl2.canon_line(right + math.pi / 2.0)

    e1 = top_lines(rng_b, "left")
    e2 = top_lines(rng_f, "s2right")
    return gl2.line_angle(e1, e2)


def triangular_gap_neglog_samples(
    nu: MatrixDistribution, trials: int, depth: int = 512, seed: int = 0
) -> np.ndarray:
    """-log sin(gap angle) samples for positive upper-triangular families.

    The contracting line of [[a, b], [0, 1]] products is the first axis
    exactly, and the expanding line is spanned by (X, 1) where X is the
    invariant series, so -log sin(theta) = log sqrt(1 + X^2).  Everything
    runs in the log domain, which keeps tails like log b = 2^26
    representable where explicit matrices would overflow.  Requires a > 0
    and b > 0 laws.
    """
    if nu.kind != "triangular":
        raise Unsupported("needs a triangular matrix distribution")
    (rng,) = _spawn_rngs(seed, 1)
    out = np.empty(trials)
    done = 0
    while done < trials:
        m = min(CHUNK, trials - done)
        a = np.asarray(nu.a.sample(rng, m * depth), dtype=float).reshape(m, depth)
        braw = np.asarray(nu.b.sample(rng, m * depth), dtype=float).reshape(m, depth)
        if np.any(a <= 0) or (not nu.log_scale_b and np.any(braw <= 0)):
            raise Unsupported("log-domain series needs positive a and b values")
        lb = braw if nu.log_scale_b else np.log(braw)
        la = np.log(a)
        prefix = np.concatenate([np.zeros((m, 1)), np.cumsum(la, axis=1)[:, :-1]], axis=1)
        log_x = logsumexp(prefix + lb, axis=1)
        out[done : done + m] = 0.5 * np.logaddexp(0.0, 2.0 * log_x)
        done += m
    return out


# ---------------------------------------------------------------------------
# angle tail reports


@dataclass(frozen=True)
class AngleTailReport:
    """Truncated means of -log sin(theta) at increasing thresholds.

    ``verdict`` is comparative, never a claim about the untruncated
    integral: "growing" when the increment between the last two truncated
    means clears both the noise floor (two standard errors of the
    per-sample differences) and the scale floor (REL_GROWTH times the last
    mean), "converging" otherwise.  The scale floor keeps laws with thin
    exponential tails from reading as growth once the sample count makes
    their tiny-but-real remainder statistically visible.
    """

    thresholds: tuple[float, ...]
    truncated_means: tuple[float, ...]
    stderrs: tuple[float, ...]
    sample_count: int
    verdict: str

    def to_obj(self) -> dict:
        return {
            "thresholds": [repr(t) for t in self.thresholds],
            "truncated_means": [repr(v) for v in self.truncated_means],
            "stderrs": [repr(v) for v in self.stderrs],
            "sample_count": self.sample_count,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True)

    def to_csv(self) -> str:
        lines = ["threshold,truncated_mean,stderr"]
        for t, v, s in zip(self.thresholds, self.truncated_means, self.stderrs):
            lines.append(f"{t!r},{v!r},{s!r}")
        return "\n".join(lines) + "\n"


def angle_tail_report_neglog(neglog_samples, thresholds) -> AngleTailReport:
    """Build the report from -log sin(theta) values directly.

    This is the entry point for samplers that never materialize the angle
    (tiny gaps underflow a float angle long before their log does).
    """
    v = np.asarray(neglog_samples, dtype=float)
    if v.size == 0:
        raise NoData("no angle samples")
    if np.any(v < 0):
        raise BadTerm("-log sin values must be nonnegative")
    ts = [float(t) for t in thresholds]
    if len(ts) == 0 or any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise BadTerm("thresholds must be positive and strictly increasing")
    means, errs = [], []
    for t in ts:
        clipped = np.minimum(v, t)
        means.append(float(clipped.mean()))
        errs.append(float(clipped.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0)
    if len(ts) >= 2:
        d = np.minimum(v, ts[-1]) - np.minimum(v, ts[-2])
        se = float(d.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        grown = float(d.mean()) > 2.0 * se and float(d.mean()) > REL_GROWTH * means[-1]
        verdict = "growing" if grown else "converging"
    else:
        verdict = "converging"
    return AngleTailReport(tuple(ts), tuple(means), tuple(errs), int(v.size), verdict)


def angle_tail_report(samples, thresholds) -> AngleTailReport:
    """Report on gap-angle samples in (0, pi/2]."""
    th = np.asarray(samples, dtype=float)
    if th.size == 0:
        raise NoData("no angle samples")
    if np.any(th <= 0) or np.any(th > math.pi / 2.0 + 1e-12):
        raise BadTerm("gap angles must lie in (0, pi/2]")
    return angle_tail_report_neglog(-np.log(np.sin(th)), thresholds)


# ---------------------------------------------------------------------------
# product bounds and the lag-discounted supremum


def weierstrass_bounds(a) -> tuple[float, float, float]:
    """(S/(1+S), 1 - prod(1 - a_n), S) for a_n in [0, 1], S = sum a_n.

    The middle value is sandwiched: lower <= value <= min(upper, 1).  The
    upper bound is returned unclipped.
    """
    arr = np.asarray(a, dtype=float)
    if arr.size and (np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr))):
        raise BadTerm("terms must lie in [0, 1]")
    s = float(arr.sum())
    value = float(1.0 - np.prod(1.0 - arr)) if arr.size else 0.0
    return (s / (1.0 + s), value, s)


def lag_discounted_sup(values, upper_bound: float) -> float:
    """sup over n of (values[n] - n), certified by the a-priori bound.

    Reading stops at the first index n with upper_bound - n below the
    running max: no unseen term can beat it.  Values above upper_bound
    break the certificate and raise BadTerm; exhausting the list first
    raises NeedMoreSamples with a sufficient total length.
    """
    best = -math.inf
    n = 0
    values = list(values)
    while True:
        if upper_bound - n < best:
            return best
        if n >= len(values):
            if best == -math.inf:
                raise NeedMoreSamples("need at least one value", required=1)
            raise NeedMoreSamples(
                f"certification needs more than {n} values",
                required=math.floor(upper_bound - best) + 1,
            )
        v = float(values[n])
        if v > upper_bound + 1e-12:
            raise BadTerm(f"value {v} exceeds the stated upper bound {upper_bound}")
        best = max(best, v - n)
        n += 1


def sample_sup_values(psi: ScalarDist, trials: int, seed: int = 0) -> np.ndarray:
    """Monte Carlo draws of the lag-discounted supremum for atomic psi.

    For nonnegative psi bounded by its largest atom B, indices beyond
    floor(B) cannot matter, so each draw is an exact supremum over
    floor(B) + 1 lagged samples.
    """
    pairs = psi.atom_pairs()
    vals = np.array([v for v, _ in pairs])
    if np.any(vals < 0):
        raise BadTerm("psi must be nonnegative")
    bound = float(vals.max())
    width = math.floor(bound) + 1
    (rng,) = _spawn_rngs(seed, 1)
    out = np.empty(trials)
    done = 0
    while done < trials:
        m = min(CHUNK, trials - done)
        draws = np.asarray(psi.sample(rng, m * width), dtype=float).reshape(m, width)
        out[done : done + m] = (draws - np.arange(width)).max(axis=1)
        done += m
    return out


class SupTail(NamedTuple):
    """Exact tail data for the lag-discounted supremum Y of i.i.d. psi.

    ``b[k-1]`` = P(Y >= k) = 1 - prod_{j >= k} (1 - P(psi >= j));
    ``expectation`` is exact for atomic psi (math.inf when the infinite
    flag is set, which happens exactly when psi has infinite second
    moment).
    """

    b: np.ndarray
    expectation: float
    infinite: bool


def _dyadic_tail_log_products(max_terms: int) -> np.ndarray:
    """log prod_{j >= k}(1 - a_j) for the dyadic law, k = 1..max_terms.

    a_j = P(psi >= j) is 1 for j = 1 and 4^-m on the block
    2^(m-1) < j <= 2^m, so the product groups into closed-form block
    counts; blocks beyond machine precision are dropped.
    """
    out = np.empty(max_terms)
    out[0] = -math.inf  # the j = 1 factor is zero
    for k in range(2, max_terms + 1):
        m0 = math.ceil(math.log2(k))
        total = 0.0
        # partial block containing k
        count = 2**m0 - k + 1
        total += count * math.log1p(-(4.0**-m0))
        m = m0 + 1
        while m < 64:
            term = 2 ** (m - 1) * math.log1p(-(4.0**-m))
            total += term
            if abs(term) < 1e-18:
                break
            m += 1
        out[k - 1] = total
    return out


def exact_sup_tail(psi: ScalarDist, max_terms: int = 64) -> SupTail:
    """Exact P(Y >= k) sequence and E[Y] for atomic nonnegative psi.

    Finite atoms: reversed cumulative products give every b_k exactly and
    E[Y] follows by the layer-cake integral (a plain sum when psi is
    integer-valued).  The dyadic law gets closed-form block products and
    the infinite flag.  Non-atomic laws are not supported.
    """
    if not psi.is_atomic:
        raise Unsupported("exact tail oracle needs an atomic law")
    if psi.kind == "dyadic":
        b = -np.expm1(_dyadic_tail_log_products(max_terms))
        return SupTail(b, math.inf, True)
    pairs = psi.atom_pairs()
    vals = np.array([v for v, _ in pairs])
    wts = np.array([w for _, w in pairs])
    if np.any(vals < 0):
        raise BadTerm("psi must be nonnegative")
    bound = float(vals.max())
    j_max = math.ceil(bound)
    a = np.array([wts[vals >= j].sum() for j in range(1, j_max + 1)])
    rev = np.cumprod((1.0 - a)[::-1])[::-1]
    b = 1.0 - rev
    integer_valued = bool(np.all(np.abs(vals - np.round(vals)) < 1e-12))
    if integer_valued:
        expectation = float(b.sum())
    else:
        # layer-cake: P(Y <= t) = prod_n F(t + n), piecewise constant in t
        cuts = {0.0, bound}
        for v in vals:
            for n in range(math.floor(v) + 1):
                t = v - n
                if 0.0 <= t <= bound:
                    cuts.add(float(t))
        grid = np.array(sorted(cuts))
        expectation = 0.0
        for left, right in zip(grid[:-1], grid[1:]):
            mid = 0.5 * (left + right)
            prob_le = 1.0
            n = 0
            while mid + n < bound:
                prob_le *= wts[vals <= mid + n].sum()
                n += 1
            expectation += (right - left) * (1.0 - prob_le)
    if max_terms > b.size:
        b = np.concatenate([b, np.zeros(max_terms - b.size)])
    return SupTail(b[:max_terms], expectation, False)


# ---------------------------------------------------------------------------
# the heavy-tail family


def counterexample_psi() -> ScalarDist:
    """The dyadic law: finite mean 3/2, infinite second moment."""
    return dyadic()


def build_counterexample_cocycle(psi: ScalarDist | None = None) -> MatrixDistribution:
    """Triangular family [[1/e, e^psi], [0, 1]].

    The exponents are (0, -1); the series cotangent dominates the
    lag-discounted supremum of psi, so an infinite-second-moment psi makes
    -log sin(gap angle) non-integrable while the first moment stays
    finite.
    """
    if psi is None:
        psi = counterexample_psi()
    if psi.mean() == math.inf:
        raise BadTerm("psi needs a finite mean")
    try:
        if min(v for v, _ in psi.atom_pairs()) < 0:
            raise BadTerm("psi must be nonnegative")
    except Unsupported:
        pass  # infinite-support or continuous laws vouch for themselves
    return triangular_distribution(constant(math.exp(-1.0)), psi, log_scale_b=True)


# ---------------------------------------------------------------------------
# negative-drift supremum


class DriftReport(NamedTuple):
    value: float
    stderr: float
    half_value: float
    half_stderr: float
    stabilized: bool
    drift_c: float
    horizon: int
    trials: int


def _sup_walk_batch(phi: ScalarDist, c: float, horizon: int, trials: int, rng) -> np.ndarray:
    sups = np.empty(trials)
    done = 0
    rows = max(1, min(CHUNK, (4 << 20) // max(horizon, 1)))
    while done < trials:
        m = min(rows, trials - done)
        steps = 2.0 * c - np.asarray(phi.sample(rng, m * horizon), dtype=float).reshape(
            m, horizon
        )
        walk = np.cumsum(steps, axis=1)
        sups[done : done + m] = np.maximum(walk.max(axis=1), 0.0)
        done += m
    return sups


def negative_drift_supremum(
    phi: ScalarDist,
    drift_c: float | None = None,
    horizon: int = 10_000,
    trials: int = 2_000,
    seed: int = 0,
) -> DriftReport:
    """Monte Carlo E[sup of the walk 2c n - sum(phi)] with a stabilization check.

    The walk starts at 0 and drifts down when 2c < E[phi]; drift_c defaults
    to E[phi]/3.  Two independent batches run at horizon/2 and horizon;
    "stabilized" means their means agree within 3 joint standard errors.
    A square-integrable phi stabilizes; a phi with a heavy enough negative
    tail keeps growing with the horizon and fails the check.
    """
    mean_phi = phi.mean()
    if not mean_phi > 0:
        raise NonNegativeDrift("phi needs a positive mean")
    c = mean_phi / 3.0 if drift_c is None else float(drift_c)
    if not 0 < 2.0 * c < mean_phi:
        raise NonNegativeDrift("need 0 < 2c < E[phi] for a negative drift")
    if horizon < 2 or trials < 2:
        raise ValueError("horizon and trials must be at least 2")
    rng_half, rng_full = _spawn_rngs(seed, 2)
    half = _sup_walk_batch(phi, c, horizon // 2, trials, rng_half)
    full = _sup_walk_batch(phi, c, horizon, trials, rng_full)
    hv, hs = float(half.mean()), float(half.std(ddof=1) / math.sqrt(trials))
    fv, fs = float(full.mean()), float(full.std(ddof=1) / math.sqrt(trials))
    stabilized = abs(fv - hv) <= 3.0 * math.hypot(fs, hs)
    return DriftReport(fv, fs, hv, hs, stabilized, c, horizon, trials)


# ---------------------------------------------------------------------------
# merging concurrent replicas


def pool_mean_se(means, stderrs, counts) -> tuple[float, float, int]:
    """Combine per-batch (mean, stderr, n) into pooled (mean, stderr, n).

    Associative and order-independent up to floating roundoff: batch
    standard errors are unwound into within-batch sum of squares, shifted
    by the between-batch spread, and repacked.
    """
    ms = np.asarray(means, dtype=float)
    ss = np.asarray(stderrs, dtype=float)
    ns = np.asarray(counts, dtype=float)
    if not (ms.size == ss.size == ns.size) or ms.size == 0 or np.any(ns < 2):
        raise ValueError("need parallel lists with batch sizes >= 2")
    total = ns.sum()
    mean = float(np.dot(ns, ms) / total)
    within = np.dot(ss**2 * ns, ns - 1.0)
    between = np.dot(ns, (ms - mean) ** 2)
    var = (within + between) / (total - 1.0)
    return mean, float(math.sqrt(var / total)), int(total)
