"""Cocycles with prescribed Oseledets data over renewal skyscrapers.

Splittings are coordinatized by (alpha, theta): alpha is the line angle of
the expanding direction x1 in [0, pi) and theta in (0, pi/2] is the gap
angle, so the contracting direction is the line at alpha + theta.  A target
joint law for the splitting process is a mixture of uniform laws on
rectangles in these coordinates (EtaSpec), finitely many pieces plus an
optional certified geometric tail.

The builders here draw a stationary skyscraper trajectory, attach a
splitting to every step, and emit one-step matrices that map each splitting
onto the next one with prescribed log-gains (r1, r2), so the window's
Lyapunov exponents and Oseledets directions are known in advance and every
estimator in the package can be checked against ground truth.

Two scheduling regimes control how expensive the splitting's moves are:

* bounded: the mixture rectangles are sliced and chained (march_chain) so
  that the symmetric gap-ratio cost |log sin(theta'/2) - log sin(theta/2)|
  of every single step stays below a hard budget b.  Feasible exactly when
  the mixture has no budget-splitting gap (budget_fit_check).
* lowcost: each mixture piece is parked on its own tall tower; moves
  between pieces may be expensive, but tower heights grow with the
  certified per-piece cost caps so the mean step cost drops below any
  requested epsilon.  Works for every valid mixture.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import gl2, skyscraper
from .cocycle import OrbitWindow
from .estimation import (
    NoData,
    estimate_E1_backward,
    estimate_E2_forward,
    lyapunov_estimates,
)

# mixture weights must sum to 1 this tightly; also the chain partition tol
MASS_TOL = 1e-12

# a declarative tail is expanded until its remaining mass drops below this
TAIL_RESIDUAL = 1e-12

# chain slices keep their log-sin-gap span at or below this fraction of the
# budget, so consecutive sub-cells of one slice fit the budget outright and
# connectors only have to absorb the crossing gaps
SLICE_SPAN_FRACTION = 0.45

# hard per-step tolerance: the cocycle must carry each prescribed line to
# its successor at least this accurately
COVARIANCE_TOL = 1e-9

# an estimated direction agrees with the prescribed one below this angle
AGREEMENT_TOL = 1e-3


class BadEtaSpec(ValueError):
    """Mixture weights or rectangle bounds violate the domain invariants."""


class UnboundedGap(ValueError):
    """The mixture splits into parts no budget-priced path can join.

    ``witness`` is the offending bipartition: a pair of tuples of piece
    indices with every crossing cost at or above the budget.
    """

    def __init__(self, message: str, witness):
        super().__init__(message)
        self.witness = witness


# ---------------------------------------------------------------------------
# gap-angle <-> log-sin-gap coordinates


def _u_of_theta(theta):
    """Log half-gap sine; strictly increasing on (0, pi]."""
    return np.log(np.sin(np.asarray(theta, dtype=float) / 2.0))


def _theta_of_u(u):
    return 2.0 * np.arcsin(np.minimum(np.exp(np.asarray(u, dtype=float)), 1.0))


# ---------------------------------------------------------------------------
# mixture description


@dataclass(frozen=True)
class Cell:
    """Closed rectangle [alpha_lo, alpha_hi] x [theta_lo, theta_hi] carrying
    the uniform law; degenerate edges collapse the law to an atom.

    alpha is a line angle in [0, pi] (pi identified with 0; put atoms at 0,
    not pi) and theta a gap angle, so theta_lo > 0 keeps the closure away
    from collinear splittings.
    """

    alpha_lo: float
    alpha_hi: float
    theta_lo: float
    theta_hi: float

    def __post_init__(self):
        vals = {}
        for name in ("alpha_lo", "alpha_hi", "theta_lo", "theta_hi"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise BadEtaSpec(f"{name} must be finite")
            vals[name] = v
            object.__setattr__(self, name, v)
        if not 0.0 <= vals["alpha_lo"] <= vals["alpha_hi"] <= math.pi:
            raise BadEtaSpec("need 0 <= alpha_lo <= alpha_hi <= pi")
        if not 0.0 < vals["theta_lo"] <= vals["theta_hi"] <= math.pi / 2.0:
            raise BadEtaSpec("need 0 < theta_lo <= theta_hi <= pi/2")

    @property
    def is_atom(self) -> bool:
        return self.alpha_lo == self.alpha_hi and self.theta_lo == self.theta_hi

    @property
    def u_lo(self) -> float:
        return float(_u_of_theta(self.theta_lo))

    @property
    def u_hi(self) -> float:
        return float(_u_of_theta(self.theta_hi))

    def sample(self, rng, n: int) -> tuple[np.ndarray, np.ndarray]:
        """n independent (alpha, theta) draws from the cell's law."""
        alpha = rng.uniform(self.alpha_lo, self.alpha_hi, size=n)
        theta = rng.uniform(self.theta_lo, self.theta_hi, size=n)
        return alpha, theta

    def contains(self, alpha, theta, tol: float = 1e-12) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return (
            (alpha >= self.alpha_lo - tol)
            & (alpha <= self.alpha_hi + tol)
            & (theta >= self.theta_lo - tol)
            & (theta <= self.theta_hi + tol)
        )

    def to_obj(self) -> dict:
        return {
            "alpha": [repr(self.alpha_lo), repr(self.alpha_hi)],
            "theta": [repr(self.theta_lo), repr(self.theta_hi)],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Cell":
        a = [float(x) for x in obj["alpha"]]
        t = [float(x) for x in obj["theta"]]
        return cls(a[0], a[1], t[0], t[1])


def uniform_cell(alpha_lo, alpha_hi, theta_lo, theta_hi) -> Cell:
    return Cell(alpha_lo, alpha_hi, theta_lo, theta_hi)


def atom_cell(alpha, theta) -> Cell:
    return Cell(alpha, alpha, theta, theta)


@dataclass(frozen=True)
class TailRule:
    """Geometric continuation of a mixture: extra piece j = 0, 1, 2, ... has
    weight first_weight * weight_ratio**j and the base cell with both theta
    edges scaled by theta_ratio**j.  Total extra mass is closed-form, which
    is what certifies the truncation residual."""

    first_weight: float
    weight_ratio: float
    cell: Cell
    theta_ratio: float = 1.0

    def __post_init__(self):
        for name in ("first_weight", "weight_ratio", "theta_ratio"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0.0 < self.first_weight:
            raise BadEtaSpec("tail first_weight must be positive")
        if not 0.0 < self.weight_ratio < 1.0:
            raise BadEtaSpec("tail weight_ratio must lie in (0, 1)")
        if not 0.0 < self.theta_ratio <= 1.0:
            raise BadEtaSpec("tail theta_ratio must lie in (0, 1]")

    @property
    def total_mass(self) -> float:
        return self.first_weight / (1.0 - self.weight_ratio)

    def expand(self, residual: float = TAIL_RESIDUAL) -> list[tuple[float, Cell]]:
        """Truncate once the undistributed mass certifiably drops below
        ``residual``; that remainder is folded into the last retained piece
        so the expansion carries exactly total_mass."""
        out: list[tuple[float, Cell]] = []
        w = self.first_weight
        scale = 1.0
        remaining = self.total_mass
        while True:
            remaining -= w
            cell = Cell(
                self.cell.alpha_lo,
                self.cell.alpha_hi,
                self.cell.theta_lo * scale,
                self.cell.theta_hi * scale,
            )
            if remaining < residual:
                out.append((w + remaining, cell))
                return out
            out.append((w, cell))
            w *= self.weight_ratio
            scale *= self.theta_ratio

    def to_obj(self) -> dict:
        return {
            "first_weight": repr(self.first_weight),
            "weight_ratio": repr(self.weight_ratio),
            "theta_ratio": repr(self.theta_ratio),
            "cell": self.cell.to_obj(),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "TailRule":
        return cls(
            float(obj["first_weight"]),
            float(obj["weight_ratio"]),
            Cell.from_obj(obj["cell"]),
            float(obj.get("theta_ratio", 1.0)),
        )


@dataclass(frozen=True)
class EtaSpec:
    """Mixture of uniform rectangle laws: pieces (weight, Cell), plus an
    optional TailRule; all weights (tail included) must sum to 1."""

    pieces: tuple
    tail_rule: TailRule | None = None

    def __post_init__(self):
        norm = []
        for entry in self.pieces:
            w, cell = entry
            w = float(w)
            if not math.isfinite(w) or w < 0.0:
                raise BadEtaSpec(f"piece weight {w!r} must be finite and >= 0")
            if not isinstance(cell, Cell):
                cell = Cell.from_obj(cell) if isinstance(cell, dict) else Cell(*cell)
            norm.append((w, cell))
        object.__setattr__(self, "pieces", tuple(norm))
        total = math.fsum(w for w, _ in self.pieces)
        if self.tail_rule is not None:
            total += self.tail_rule.total_mass
        if abs(total - 1.0) > MASS_TOL:
            raise BadEtaSpec(f"mixture mass {total!r} is not 1")
        if total <= 0.0:
            raise BadEtaSpec("mixture needs positive mass")

    def to_obj(self) -> dict:
        obj = {
            "pieces": [
                {"weight": repr(w), "cell": cell.to_obj()} for w, cell in self.pieces
            ]
        }
        if self.tail_rule is not None:
            obj["tail_rule"] = self.tail_rule.to_obj()
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    @classmethod
    def from_obj(cls, obj: dict) -> "EtaSpec":
        pieces = [
            (float(p["weight"]), Cell.from_obj(p["cell"])) for p in obj["pieces"]
        ]
        tail = obj.get("tail_rule")
        return cls(tuple(pieces), TailRule.from_obj(tail) if tail else None)

    @classmethod
    def from_json(cls, text: str) -> "EtaSpec":
        return cls.from_obj(json.loads(text))


class Piece(NamedTuple):
    """One mixture component plus the cumulative union of cell closures up
    to and including it (compactum = cells 0..n)."""

    weight: float
    cell: Cell
    compactum: tuple


def decompose_eta(eta: EtaSpec) -> list[Piece]:
    """Flatten the mixture into ordered pieces with cumulative compacta.

    The declarative tail is expanded (truncated at a certified residual
    below 1e-12, folded into its last piece); zero-mass pieces are dropped
    with a warning.  Order is exactly: explicit pieces, then tail pieces.
    """
    flat: list[tuple[float, Cell]] = list(eta.pieces)
    if eta.tail_rule is not None:
        flat.extend(eta.tail_rule.expand())
    kept: list[tuple[float, Cell]] = []
    for idx, (w, cell) in enumerate(flat):
        if w <= 0.0:
            warnings.warn(f"dropping zero-mass mixture piece {idx}")
            continue
        kept.append((w, cell))
    if not kept:
        raise BadEtaSpec("mixture has no positive-mass piece")
    out: list[Piece] = []
    cells: list[Cell] = []
    for w, cell in kept:
        cells.append(cell)
        out.append(Piece(w, cell, tuple(cells)))
    return out


# ---------------------------------------------------------------------------
# budget feasibility


def _interval_gap(lo1: float, hi1: float, lo2: float, hi2: float) -> float:
    return max(lo1 - hi2, lo2 - hi1, 0.0)


def _graph_adjacency(intervals, b: float) -> list[list[int]]:
    # edge when the gap-ratio cost between the u-intervals can dip below b
    n = len(intervals)
    adj: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        lo1, hi1 = intervals[i]
        for j in range(i + 1, n):
            if _interval_gap(lo1, hi1, *intervals[j]) < b:
                adj[i].append(j)
                adj[j].append(i)
    return adj


def _components(adj: list[list[int]]) -> list[list[int]]:
    seen = [False] * len(adj)
    comps: list[list[int]] = []
    for start in range(len(adj)):
        if seen[start]:
            continue
        seen[start] = True
        comp, queue = [start], [start]
        while queue:
            v = queue.pop()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


class BudgetFit(NamedTuple):
    fits: bool
    witness: tuple | None


def budget_fit_check(eta: EtaSpec, b: float) -> BudgetFit:
    """Can every positive-mass bipartition of the mixture be crossed below
    cost b?

    The symmetric step cost depends only on the gap angle, so the min cost
    between two rectangles is exactly the gap between their log-sin-gap
    intervals.  The mixture fits iff the graph with edges "interval gap
    below b" is connected; otherwise the witness is a separating
    bipartition of piece indices.
    """
    if not b > 0.0:
        raise ValueError("budget must be positive")
    pieces = decompose_eta(eta)
    comps = _components(
        _graph_adjacency([(p.cell.u_lo, p.cell.u_hi) for p in pieces], b)
    )
    if len(comps) == 1:
        return BudgetFit(True, None)
    rest = sorted(i for comp in comps[1:] for i in comp)
    return BudgetFit(False, (tuple(comps[0]), tuple(rest)))


# ---------------------------------------------------------------------------
# the chain of sub-cells for the bounded regime


class SubCell(NamedTuple):
    """A chain entry: a rectangle with the uniform law, its mixture mass,
    and the index of the piece it was carved from."""

    cell: Cell
    mass: float
    piece: int


class _Slice(NamedTuple):
    piece: int
    alpha_lo: float
    alpha_hi: float
    theta_lo: float
    theta_hi: float
    mass: float


def _dfs_walk(adj: list[list[int]]) -> list[int]:
    """Depth-first closed tour from node 0; consecutive entries are always
    graph edges (tree edges, each crossed down once and up once)."""
    walk = [0]
    visited = {0}
    stack: list[tuple[int, object]] = [(0, iter(adj[0]))]
    while stack:
        v, nbrs = stack[-1]
        nxt = None
        for w in nbrs:
            if w not in visited:
                nxt = w
                break
        if nxt is None:
            stack.pop()
            if stack:
                walk.append(stack[-1][0])
        else:
            visited.add(nxt)
            walk.append(nxt)
            stack.append((nxt, iter(adj[nxt])))
    return walk


def _connector(u_here: tuple, u_other: tuple, b: float) -> tuple[str, float]:
    """Connector placement for a crossing: which end of this slice's
    u-interval faces the other slice, and how wide the connector may be."""
    best = None
    for side, p in (("lo", u_here[0]), ("hi", u_here[1])):
        for q in u_other:
            d = abs(p - q)
            if best is None or d < best[1]:
                best = (side, d)
    side, d = best
    width = u_here[1] - u_here[0]
    # /8 leaves room for two stacked connectors on each side of the crossing
    delta = min((b - d) / 8.0, width / 4.0)
    return side, delta


def march_chain(pieces: list[Piece], b: float) -> list[SubCell]:
    """Chain the mixture into sub-rectangles with every consecutive pair's
    worst-case gap-ratio cost strictly below b.

    Cells are sliced in theta until each slice's log-sin-gap span is at
    most SLICE_SPAN_FRACTION * b; the slice graph (edge = interval gap
    below b) is toured depth-first; every visit claims its own alpha strip
    of the slice, carved into an entry connector, a bulk, and an exit
    connector hugging the crossing anchors.  Consecutive entries then
    either share a slice (span already within budget) or are connectors
    whose combined span stays below b by construction; both facts are
    re-checked exactly before returning.

    Masses follow the uniform law, so the chain is a partition of the
    mixture (per-piece totals preserved; rectangles overlap only when a
    degenerate alpha edge makes strips coincide) and sums to 1.
    """
    if not pieces:
        raise ValueError("need at least one piece")
    if not b > 0.0:
        raise ValueError("budget must be positive")
    cells = [p.cell for p in pieces]
    weights = [p.weight for p in pieces]
    comps = _components(
        _graph_adjacency([(c.u_lo, c.u_hi) for c in cells], b)
    )
    if len(comps) > 1:
        rest = sorted(i for comp in comps[1:] for i in comp)
        raise UnboundedGap(
            f"mixture does not fit budget {b!r}: pieces {tuple(comps[0])} are "
            f"separated from {tuple(rest)}",
            (tuple(comps[0]), tuple(rest)),
        )

    slices: list[_Slice] = []
    for n, cell in enumerate(cells):
        span = cell.u_hi - cell.u_lo
        m = max(1, math.ceil(span / (SLICE_SPAN_FRACTION * b)))
        cuts_u = cell.u_lo + span * np.arange(1, m) / m
        bounds = np.concatenate(
            [[cell.theta_lo], _theta_of_u(cuts_u), [cell.theta_hi]]
        )
        t_width = cell.theta_hi - cell.theta_lo
        for j in range(m):
            t0, t1 = float(bounds[j]), float(bounds[j + 1])
            frac = (t1 - t0) / t_width if t_width > 0.0 else 1.0
            slices.append(
                _Slice(n, cell.alpha_lo, cell.alpha_hi, t0, t1, weights[n] * frac)
            )

    su = [(float(_u_of_theta(s.theta_lo)), float(_u_of_theta(s.theta_hi))) for s in slices]
    walk = _dfs_walk(_graph_adjacency(su, b))
    assert len(set(walk)) == len(slices), "slice graph lost connectivity"

    # per-visit crossing connectors, then per-slice alpha strips
    visits = []
    for pos, v in enumerate(walk):
        entry = _connector(su[v], su[walk[pos - 1]], b) if pos > 0 else None
        exit_ = _connector(su[v], su[walk[pos + 1]], b) if pos + 1 < len(walk) else None
        visits.append((v, entry, exit_))
    counts = np.bincount(walk, minlength=len(slices))
    strips: list[list[tuple[float, float, float]]] = []
    for v, s in enumerate(slices):
        m_v = int(counts[v])
        if s.alpha_hi > s.alpha_lo:
            edges = np.linspace(s.alpha_lo, s.alpha_hi, m_v + 1)
            a_width = s.alpha_hi - s.alpha_lo
            strips.append(
                [
                    (float(edges[j]), float(edges[j + 1]),
                     s.mass * float(edges[j + 1] - edges[j]) / a_width)
                    for j in range(m_v)
                ]
            )
        else:
            # degenerate alpha: the visits share the rectangle, split by mass
            strips.append([(s.alpha_lo, s.alpha_hi, s.mass / m_v)] * m_v)

    chain: list[SubCell] = []
    seen = [0] * len(slices)
    for v, entry, exit_ in visits:
        s = slices[v]
        a0, a1, strip_mass = strips[v][seen[v]]
        seen[v] += 1
        u_lo, u_hi = su[v]
        width = u_hi - u_lo
        if width <= 0.0 or (entry is None and exit_ is None):
            bands = [(s.theta_lo, s.theta_hi, strip_mass)]
        else:
            lo_used = hi_used = 0.0
            entry_seg = exit_seg = None
            for seg_is_entry, conn in ((True, entry), (False, exit_)):
                if conn is None:
                    continue
                side, delta = conn
                assert delta > 0.0, "crossing connector has no width"
                if side == "lo":
                    seg = (u_lo + lo_used, u_lo + lo_used + delta)
                    lo_used += delta
                else:
                    seg = (u_hi - hi_used - delta, u_hi - hi_used)
                    hi_used += delta
                if seg_is_entry:
                    entry_seg = seg
                else:
                    exit_seg = seg
            bulk_seg = (u_lo + lo_used, u_hi - hi_used)
            # keep the slice's own theta endpoints exact so band widths
            # telescope to the slice width
            def to_theta(uv: float) -> float:
                if uv <= u_lo:
                    return s.theta_lo
                if uv >= u_hi:
                    return s.theta_hi
                return float(_theta_of_u(uv))

            t_width = s.theta_hi - s.theta_lo
            bands = []
            for seg in (entry_seg, bulk_seg, exit_seg):
                if seg is None:
                    continue
                ta, tb = to_theta(seg[0]), to_theta(seg[1])
                bands.append((ta, tb, strip_mass * (tb - ta) / t_width))
        for ta, tb, mass in bands:
            assert mass > 0.0, "chain band lost its mass to rounding"
            chain.append(SubCell(Cell(a0, a1, ta, tb), mass, s.piece))

    # exact re-verification of the two contracts
    spans = [(c.cell.u_lo, c.cell.u_hi) for c in chain]
    for (lo1, hi1), (lo2, hi2) in zip(spans, spans[1:]):
        assert max(hi1, hi2) - min(lo1, lo2) < b, "consecutive chain cells exceed the budget"
    total = math.fsum(c.mass for c in chain)
    assert abs(total - math.fsum(weights)) <= MASS_TOL, "chain masses drifted"
    return chain


# ---------------------------------------------------------------------------
# prescribed log-gains


@dataclass(frozen=True)
class PsiPair:
    """Log-gain pair psi_j = c_j * beta.

    beta is a continuous bump equal to 1 on every mixture cell, ramping
    linearly to 0 over a gap-angle collar of width theta_lo / 2 below and
    above each cell, so its support stays away from collinear splittings.
    Because beta is 1 across the mixture's support, the mixture integral of
    psi_j is exactly c_j.
    """

    c1: float
    c2: float
    cells: tuple

    def beta(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape)
        for cell in self.cells:
            collar = cell.theta_lo / 2.0
            rise = (theta - collar) / collar
            fall = (cell.theta_hi + collar - theta) / collar
            out = np.maximum(out, np.clip(np.minimum(rise, fall), 0.0, 1.0))
        return out

    def at(self, alpha, theta):
        b = self.beta(theta)
        return self.c1 * b, self.c2 * b

    def __call__(self, alpha, theta):
        return self.at(alpha, theta)


def build_psi_pair(eta: EtaSpec, r1: float, r2: float) -> PsiPair:
    """Continuous bounded-support log-gains with exact mixture averages
    (r1, r2); needs r1 >= r2."""
    if not r1 >= r2:
        raise ValueError("need r1 >= r2")
    return _psi_from_pieces(decompose_eta(eta), r1, r2)


def _psi_from_pieces(pieces: list[Piece], r1: float, r2: float) -> PsiPair:
    # beta is 1 on every cell, so the integral is the total weight
    integral = math.fsum(p.weight for p in pieces)
    return PsiPair(
        c1=float(r1) / integral,
        c2=float(r2) / integral,
        cells=tuple(p.cell for p in pieces),
    )


def assemble_F(
    f_now: gl2.SplittingPair, f_next: gl2.SplittingPair, psi_pair: PsiPair
) -> np.ndarray:
    """One-step matrix carrying the splitting f_now onto f_next.

    Composes the eigen-matrix of f_now with log-eigenvalues psi1(f_now),
    psi2(f_now) and the unit-frame interpolation from f_now's canonical
    lift to f_next's, so each prescribed line maps to its successor and the
    restriction to f_now.x1 has log-norm exactly psi1(f_now).
    """
    p1, p2 = psi_pair.at(f_now[0], gl2.gap_angle(f_now))
    psi_mat = gl2.eigen_matrix(f_now, float(p1), float(p2))
    phi = gl2.interp_matrix(gl2.canonical_lift(f_now), gl2.canonical_lift(f_next))
    return phi @ psi_mat


# ---------------------------------------------------------------------------
# travel costs (batched)


def _general_cost_from_gaps(theta, theta_prime, r1: float, r2: float) -> np.ndarray:
    """Worst-lift log max(norm, inverse norm) of the one-step matrix moving
    gap theta to gap theta_prime with log-gains (r1, r2).

    The 16 unit-lift combinations collapse to two essential sign patterns
    (a global sign flip preserves norms), and rotating both splittings so
    x1 sits at angle 0 changes nothing, so the cost depends only on the two
    gap angles.
    """
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    u = gl2._unit_columns(np.zeros_like(theta), theta)
    v = gl2._unit_columns(np.zeros_like(theta_prime), theta_prime)
    u_inv = gl2.inv2(u)
    log_det = np.log(np.sin(theta_prime)) - np.log(np.sin(theta)) + r1 + r2
    best = None
    for sign in (1.0, -1.0):
        d = np.array([[math.exp(r1), 0.0], [0.0, sign * math.exp(r2)]])
        m = v @ (d @ u_inv)
        log_s1 = np.log(gl2.top_singular(m))
        # log ||m^-1|| = log s1 - log |det m|, stable even when s2 underflows
        val = np.maximum(log_s1, log_s1 - log_det)
        best = val if best is None else np.maximum(best, val)
    return best


def _pair_cost_cap(cell_x: Cell, cell_y: Cell, r1: float, r2: float) -> float:
    """Certified upper bound for the worst-lift cost from any splitting in
    cell_x to any in cell_y; exact when both cells are atoms.

    The bound: ||M|| <= e^r1 * cos(theta'/2) / sin(theta/2) and
    ||M^-1|| <= e^-r2 * cos(theta/2) / sin(theta'/2), both maximized at the
    cells' lower theta edges.
    """
    if cell_x.is_atom and cell_y.is_atom:
        same = (
            cell_x.alpha_lo == cell_y.alpha_lo
            and cell_x.theta_lo == cell_y.theta_lo
        )
        if same:
            return 0.0  # identical splittings travel for free
        return float(
            _general_cost_from_gaps(cell_x.theta_lo, cell_y.theta_lo, r1, r2)
        )
    lsin_x = math.log(math.sin(cell_x.theta_lo / 2.0))
    lcos_x = math.log(math.cos(cell_x.theta_lo / 2.0))
    lsin_y = math.log(math.sin(cell_y.theta_lo / 2.0))
    lcos_y = math.log(math.cos(cell_y.theta_lo / 2.0))
    return max(r1 + lcos_y - lsin_x, -r2 + lcos_x - lsin_y)


def piece_cost_caps(pieces: list[Piece], r1: float, r2: float) -> np.ndarray:
    """Nondecreasing caps C_n for the worst travel cost within the union of
    cells 0..n; the lowcost height schedule divides epsilon by these."""
    cells = [p.cell for p in pieces]
    caps = []
    best = 0.0
    for n in range(len(cells)):
        for i in range(n + 1):
            best = max(best, _pair_cost_cap(cells[i], cells[n], r1, r2))
            if i < n:
                best = max(best, _pair_cost_cap(cells[n], cells[i], r1, r2))
        caps.append(best)
    return np.asarray(caps)


def step_costs(window: OrbitWindow, mode: str, r1: float, r2: float) -> np.ndarray:
    """Per-transition travel cost along the window's prescribed splittings.

    One entry per consecutive stored pair (length len(window) - 1).  The
    bounded regime prices every step by the symmetric gap-ratio cost; the
    lowcost regime prices only actual splitting changes, by the worst-lift
    gauge cost, since an unchanged splitting travels for free.
    """
    if window.prescribed_f is None:
        raise ValueError("window carries no prescribed splittings")
    x1 = window.prescribed_f[:, 0]
    x2 = window.prescribed_f[:, 1]
    theta = gl2.line_angle(x1, x2)
    if mode == "bounded":
        return np.abs(np.diff(_u_of_theta(theta)))
    if mode == "lowcost":
        changed = (np.diff(x1) != 0.0) | (np.diff(theta) != 0.0)
        out = np.zeros(len(x1) - 1)
        if changed.any():
            out[changed] = _general_cost_from_gaps(
                theta[:-1][changed], theta[1:][changed], r1, r2
            )
        return out
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# simulation


def simulate_flexible(
    eta: EtaSpec,
    r1: float,
    r2: float,
    mode: str,
    steps: int,
    seed: int = 0,
    *,
    budget: float | None = None,
    epsilon: float | None = None,
) -> OrbitWindow:
    """Window of one-step matrices whose Oseledets data is prescribed.

    A stationary skyscraper trajectory schedules which mixture component
    the splitting f occupies at each time; matrices are the batched
    equivalent of assemble_F, so f is carried exactly onto its shift with
    log-gains (r1, r2) and the exponents/directions are known in advance.

    mode "bounded" (keyword budget): chain the mixture by march_chain,
    refine the chain masses into label occupancies, and draw f fresh each
    step from the chain element owning the current tower label; adjacent
    labels own adjacent chain elements, so every per-step gap-ratio cost is
    below the budget (asserted, hard).  mode "lowcost" (keyword epsilon):
    park piece n on a tower of height k_n chosen so the certified cap C_n
    satisfies 2 C_n / k_n < epsilon, and hold f constant up each tower;
    travel is paid only at tower changes, so the mean step cost is below
    epsilon (statistical).

    prescribed_f[i] is (x1, x2) line angles at time offset + i; labels[i]
    is the tower label (bounded) or the piece index (lowcost); the window
    is centered so both causal direction estimates have room.
    """
    if not r1 >= r2:
        raise ValueError("need r1 >= r2")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    pieces = decompose_eta(eta)
    psi = _psi_from_pieces(pieces, r1, r2)
    rng = np.random.default_rng(seed)

    if mode == "bounded":
        if budget is None or not budget > 0.0:
            raise ValueError("bounded mode needs a positive budget")
        chain = march_chain(pieces, budget)
        values, owners = skyscraper.refine_weights([c.mass for c in chain])
        pi = skyscraper.bounded_tower_vector(values)
        heights, levels = skyscraper.renewal_trajectory(pi, steps + 1, rng)
        labels_all = skyscraper.trajectory_labels(heights, levels)
        cell_idx = owners[labels_all]
        alpha = np.empty(steps + 1)
        theta = np.empty(steps + 1)
        for j, sub in enumerate(chain):
            mask = cell_idx == j
            hits = int(mask.sum())
            if hits:
                a, t = sub.cell.sample(rng, hits)
                alpha[mask] = a
                theta[mask] = t
        labels = labels_all[:steps]
    elif mode == "lowcost":
        if epsilon is None or not epsilon > 0.0:
            raise ValueError("lowcost mode needs a positive epsilon")
        caps = piece_cost_caps(pieces, r1, r2)
        ks = skyscraper.lowcost_heights(caps, epsilon)
        pi = skyscraper.TowerVector(
            {k: p.weight for k, p in zip(ks, pieces)}
        )
        heights, levels = skyscraper.renewal_trajectory(pi, steps + 1, rng)
        piece_idx = np.searchsorted(np.asarray(ks), heights)
        # segments of constant f: from each tower base to the next
        seg = np.cumsum(levels == 0)
        seg_piece = np.empty(int(seg[-1]) + 1, dtype=np.int64)
        seg_piece[seg] = piece_idx  # constant within a segment
        seg_alpha = np.empty(seg_piece.size)
        seg_theta = np.empty(seg_piece.size)
        for n, piece in enumerate(pieces):
            mask = seg_piece == n
            hits = int(mask.sum())
            if hits:
                a, t = piece.cell.sample(rng, hits)
                seg_alpha[mask] = a
                seg_theta[mask] = t
        alpha = seg_alpha[seg]
        theta = seg_theta[seg]
        labels = piece_idx[:steps]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    # canonical-lift frames: theta <= pi/2 makes (alpha, alpha + theta) the
    # lift outright, no flip needed
    frames = gl2._unit_columns(alpha, alpha + theta)
    p1, p2 = psi.at(alpha[:-1], theta[:-1])
    gains = np.zeros((steps, 2, 2))
    gains[:, 0, 0] = np.exp(p1)
    gains[:, 1, 1] = np.exp(p2)
    mats = frames[1:] @ (gains @ gl2.inv2(frames[:-1]))

    # hard contracts: the cocycle carries each prescribed line to its
    # successor, and the bounded regime never exceeds its budget
    for angles in (alpha, alpha + theta):
        miss = gl2.line_angle(
            gl2.projective_action(mats, angles[:-1]), angles[1:]
        )
        assert np.all(miss < COVARIANCE_TOL), "prescribed line not carried"
    if mode == "bounded":
        moves = np.abs(np.diff(_u_of_theta(theta)))
        assert np.all(moves < budget), "budget exceeded along the window"

    prescribed = np.stack(
        [gl2.canon_line(alpha[:steps]), gl2.canon_line(alpha[:steps] + theta[:steps])],
        axis=1,
    )
    return OrbitWindow(
        offset=-(steps // 2),
        matrices=mats,
        prescribed_f=prescribed,
        labels=np.asarray(labels, dtype=np.int64),
        seed=seed if isinstance(seed, (int, np.integer)) else None,
    )


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class ConstructionReport:
    """Verification summary for a prescribed-splitting window.

    lambda_hat: exponent estimates (top, bottom).  tv_distance: total
    variation between empirical piece frequencies and the mixture weights.
    ks_theta: Kolmogorov-Smirnov distance between the empirical gap-angle
    law and the mixture's closed-form marginal.  max_cost / mean_cost: step
    travel cost stats.  agreement_fraction: fraction of sampled times where
    both estimated directions match the prescribed ones within 1e-3 rad.
    Per-step arrays (step_cost, step_label, step_theta; one entry per
    stored transition) feed to_csv and stay out of to_obj.
    """

    lambda_hat: tuple
    tv_distance: float
    ks_theta: float
    max_cost: float
    mean_cost: float
    agreement_fraction: float
    steps: int
    offset: int
    mode: str
    rates: tuple
    seed: int | None
    step_cost: np.ndarray = field(repr=False)
    step_label: np.ndarray = field(repr=False)
    step_theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("tv_distance", "ks_theta", "max_cost"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.agreement_fraction <= 1.0:
            raise ValueError("agreement_fraction must lie in [0, 1]")
        if not 0.0 <= self.tv_distance <= 1.0:
            raise ValueError("tv_distance must lie in [0, 1]")
        if not 0.0 <= self.ks_theta <= 1.0:
            raise ValueError("ks_theta must lie in [0, 1]")

    def to_obj(self) -> dict:
        return {
            "lambda_hat": [repr(float(v)) for v in self.lambda_hat],
            "tv_distance": repr(float(self.tv_distance)),
            "ks_theta": repr(float(self.ks_theta)),
            "max_cost": repr(float(self.max_cost)),
            "mean_cost": repr(float(self.mean_cost)),
            "agreement_fraction": repr(float(self.agreement_fraction)),
            "steps": int(self.steps),
            "offset": int(self.offset),
            "mode": self.mode,
            "rates": [repr(float(v)) for v in self.rates],
            "seed": None if self.seed is None else int(self.seed),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """One row per stored transition: absolute step, its travel cost,
        the label at the step's source, and the source gap angle."""
        lines = ["step,cost,label,theta"]
        for j in range(len(self.step_cost)):
            lines.append(
                f"{self.offset + j},{float(self.step_cost[j])!r},"
                f"{int(self.step_label[j])},{float(self.step_theta[j])!r}"
            )
        return "\n".join(lines) + "\n"


def _theta_marginal_cdf(pieces: list[Piece], ts: np.ndarray, strict: bool) -> np.ndarray:
    """Mixture gap-angle CDF: P(theta < t) when strict else P(theta <= t).

    Atom comparisons get a 1e-12 cushion: the gap angles are recomputed
    from stored line angles, which can land one ulp off the atom.
    """
    total = np.zeros_like(ts, dtype=float)
    for w, cell, _ in pieces:
        t0, t1 = cell.theta_lo, cell.theta_hi
        if t1 == t0:
            total += w * ((ts > t0 + 1e-12) if strict else (ts >= t0 - 1e-12))
        else:
            total += w * np.clip((ts - t0) / (t1 - t0), 0.0, 1.0)
    return total


def verify_flexible(
    window: OrbitWindow, eta: EtaSpec, r1: float, r2: float, mode: str = "bounded"
) -> ConstructionReport:
    """Close the loop: re-estimate everything the construction prescribed.

    Exponents via lyapunov_estimates; the splitting's empirical law against
    the mixture (total variation over the piece partition, KS on the
    gap-angle marginal); step cost stats for the given mode; and direction
    agreement at 100 evenly spread interior times, estimating E1 backward
    and E2 forward with depth ceil(20 / (r1 - r2)) * 10 and comparing both
    to the prescribed splitting within 1e-3 rad.
    """
    if window.prescribed_f is None:
        raise ValueError("window carries no prescribed splittings")
    if not r1 > r2:
        raise ValueError("need r1 > r2 for a direction-estimate depth")
    n = len(window)
    depth = math.ceil(20.0 / (r1 - r2)) * 10
    if n < 2 * depth + 10:
        raise NoData(f"window of {n} steps is too short for depth {depth}")
    pieces = decompose_eta(eta)

    lam = lyapunov_estimates(window)

    x1 = window.prescribed_f[:, 0]
    x2 = window.prescribed_f[:, 1]
    theta = gl2.line_angle(x1, x2)
    unassigned = np.ones(n, dtype=bool)
    freqs = np.empty(len(pieces))
    for idx, piece in enumerate(pieces):
        hit = unassigned & piece.cell.contains(x1, theta)
        freqs[idx] = hit.sum() / n
        unassigned &= ~hit
    assert not unassigned.any(), "a prescribed splitting fell outside every cell"
    weights = np.asarray([p.weight for p in pieces])
    tv = 0.5 * float(np.abs(freqs - weights).sum())

    ts = np.sort(theta)
    ranks = np.arange(n, dtype=float)
    d_plus = np.max((ranks + 1.0) / n - _theta_marginal_cdf(pieces, ts, strict=False))
    d_minus = np.max(_theta_marginal_cdf(pieces, ts, strict=True) - ranks / n)
    ks = max(float(d_plus), float(d_minus), 0.0)

    lo = window.offset + depth
    hi = window.end - depth
    times = np.unique(np.round(np.linspace(lo, hi, num=100)).astype(int))
    agree = 0
    for t in times:
        shifted = OrbitWindow(offset=window.offset - int(t), matrices=window.matrices)
        e1 = estimate_E1_backward(shifted, depth)
        e2 = estimate_E2_forward(shifted, depth)
        slot = window.slot(int(t))
        ok = (
            float(gl2.line_angle(e1, x1[slot])) < AGREEMENT_TOL
            and float(gl2.line_angle(e2, x2[slot])) < AGREEMENT_TOL
        )
        agree += bool(ok)

    cost = step_costs(window, mode, r1, r2)
    labels = (
        window.labels[: n - 1]
        if window.labels is not None
        else np.full(n - 1, -1, dtype=np.int64)
    )
    return ConstructionReport(
        lambda_hat=(float(lam.top), float(lam.bottom)),
        tv_distance=tv,
        ks_theta=ks,
        max_cost=float(cost.max()) if cost.size else 0.0,
        mean_cost=float(cost.mean()) if cost.size else 0.0,
        agreement_fraction=agree / len(times),
        steps=n,
        offset=window.offset,
        mode=mode,
        rates=(float(r1), float(r2)),
        seed=window.seed,
        step_cost=cost,
        step_label=np.asarray(labels, dtype=np.int64),
        step_theta=theta[: n - 1],
    )
