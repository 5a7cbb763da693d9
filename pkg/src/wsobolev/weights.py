"""Weight catalog and diagnostic estimators.

The catalog weight is w(x) = exp(-beta*|x|^q - W(x) - V(x)) with q > 1 and
W, V built from a small term algebra (constants, powers of |x|, quadratic
forms, cosines).  The module evaluates w, its p-th root, and the logarithmic
drift grad(w)/w in closed form, fits the growth and dilation constants that
certify the weight's admissibility hypotheses, and estimates doubling and
Muckenhoupt characteristics of arbitrary positive grid weights by ball
quadrature.

Balls are axis-aligned boxes: in one dimension these are the usual
intervals, and in two dimensions the box shape keeps doubled-ball ratios
exact for flat weights (a Euclidean disk cannot be integrated to 1e-9 with
node quadrature).  Ball centers and radii snap to the node lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import Grid, GridFunction, segment_weights

__all__ = [
    "ConstantTerm",
    "PowerAbsTerm",
    "QuadraticTerm",
    "CosineTerm",
    "PotentialExpr",
    "WeightSpec",
    "eval_weight",
    "eval_weight_root",
    "eval_log_drift",
    "weight_on_grid",
    "root_on_grid",
    "drift_on_grid",
    "DilationFit",
    "FitLattice",
    "fit_dilation_bound",
    "AdmissibilityReport",
    "check_admissibility",
    "Ball",
    "DoublingReport",
    "estimate_doubling",
    "MuckenhouptReport",
    "estimate_muckenhoupt",
    "RegReport",
    "check_reciprocal_integrability",
]

_TINY = np.finfo(float).tiny
_LOG_TINY = math.log(_TINY)


# ---------------------------------------------------------------------------
# potential term algebra
# ---------------------------------------------------------------------------


def _radii(pts: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(pts * pts, axis=-1))


@dataclass(frozen=True)
class ConstantTerm:
    c: float

    def value(self, pts: np.ndarray) -> np.ndarray:
        return np.full(pts.shape[:-1], float(self.c))

    def grad(self, pts: np.ndarray) -> np.ndarray:
        return np.zeros(pts.shape)

    def to_json(self) -> dict:
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True)
class PowerAbsTerm:
    """c * |x|^s with s >= 1; the gradient is taken to vanish at the origin."""

    c: float
    s: float

    def __post_init__(self) -> None:
        if self.s < 1.0:
            raise ValueError(f"power term needs s >= 1, got {self.s}")

    def value(self, pts: np.ndarray) -> np.ndarray:
        return self.c * _radii(pts) ** self.s

    def grad(self, pts: np.ndarray) -> np.ndarray:
        r = _radii(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(r > 0.0, self.c * self.s * r ** (self.s - 2.0), 0.0)
        return scale[..., None] * pts

    def to_json(self) -> dict:
        return {"kind": "power_abs", "c": self.c, "s": self.s}


@dataclass(frozen=True)
class QuadraticTerm:
    c: float

    def value(self, pts: np.ndarray) -> np.ndarray:
        return self.c * np.sum(pts * pts, axis=-1)

    def grad(self, pts: np.ndarray) -> np.ndarray:
        return 2.0 * self.c * pts

    def to_json(self) -> dict:
        return {"kind": "quadratic_form", "c": self.c}


@dataclass(frozen=True)
class CosineTerm:
    """c * cos(<k, x>) for a wave vector k matching the dimension."""

    c: float
    k: tuple[float, ...]

    def value(self, pts: np.ndarray) -> np.ndarray:
        kv = np.asarray(self.k, dtype=float)
        return self.c * np.cos(np.tensordot(pts, kv, axes=([-1], [0])))

    def grad(self, pts: np.ndarray) -> np.ndarray:
        kv = np.asarray(self.k, dtype=float)
        phase = np.tensordot(pts, kv, axes=([-1], [0]))
        return (-self.c * np.sin(phase))[..., None] * kv

    def to_json(self) -> dict:
        return {"kind": "cosine", "c": self.c, "k": list(self.k)}


Term = ConstantTerm | PowerAbsTerm | QuadraticTerm | CosineTerm


@dataclass(frozen=True)
class PotentialExpr:
    """Sum of catalog terms; evaluates values and gradients in closed form."""

    terms: tuple[Term, ...] = ()

    def value(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros(pts.shape[:-1])
        for t in self.terms:
            out = out + t.value(pts)
        return out

    def grad(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros(pts.shape)
        for t in self.terms:
            out = out + t.grad(pts)
        return out

    def grad_norm(self, pts: np.ndarray) -> np.ndarray:
        return _radii(self.grad(pts))

    def is_zero(self) -> bool:
        return len(self.terms) == 0

    def __neg__(self) -> "PotentialExpr":
        flipped = []
        for t in self.terms:
            if isinstance(t, CosineTerm):
                flipped.append(CosineTerm(-t.c, t.k))
            elif isinstance(t, PowerAbsTerm):
                flipped.append(PowerAbsTerm(-t.c, t.s))
            elif isinstance(t, QuadraticTerm):
                flipped.append(QuadraticTerm(-t.c))
            else:
                flipped.append(ConstantTerm(-t.c))
        return PotentialExpr(tuple(flipped))

    def to_json(self) -> list[dict]:
        return [t.to_json() for t in self.terms]

    @staticmethod
    def from_json(items: Sequence[dict], dim: int) -> "PotentialExpr":
        terms: list[Term] = []
        for i, item in enumerate(items):
            kind = item.get("kind")
            if kind == "constant":
                terms.append(ConstantTerm(float(item["c"])))
            elif kind == "power_abs":
                terms.append(PowerAbsTerm(float(item["c"]), float(item["s"])))
            elif kind == "quadratic_form":
                terms.append(QuadraticTerm(float(item["c"])))
            elif kind == "cosine":
                k = tuple(float(v) for v in item["k"])
                if len(k) != dim:
                    raise ValueError(
                        f"term {i}: cosine wave vector has {len(k)} components, expected {dim}"
                    )
                terms.append(CosineTerm(float(item["c"]), k))
            else:
                raise ValueError(f"term {i}: unknown kind {kind!r}")
        return PotentialExpr(tuple(terms))


# ---------------------------------------------------------------------------
# weight spec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSpec:
    """Parameters of the catalog weight exp(-beta*|x|^q - W - V)."""

    beta: float
    q: float
    dim: int
    W: PotentialExpr = field(default_factory=PotentialExpr)
    V: PotentialExpr = field(default_factory=PotentialExpr)

    def __post_init__(self) -> None:
        if self.q <= 1.0:
            raise ValueError(f"q must exceed 1, got {self.q}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")

    def exponent(self, pts: np.ndarray) -> np.ndarray:
        """log w(x) = -beta*|x|^q - W(x) - V(x)."""
        r = _radii(pts)
        return -self.beta * r**self.q - self.W.value(pts) - self.V.value(pts)

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "q": self.q,
            "dim": self.dim,
            "W": self.W.to_json(),
            "V": self.V.to_json(),
        }

    @staticmethod
    def from_json(d: dict) -> "WeightSpec":
        dim = int(d.get("dim", 1))
        return WeightSpec(
            beta=float(d["beta"]),
            q=float(d["q"]),
            dim=dim,
            W=PotentialExpr.from_json(d.get("W", []), dim),
            V=PotentialExpr.from_json(d.get("V", []), dim),
        )


def _clamped_exp(exponent: np.ndarray, return_underflow: bool):
    under = exponent < _LOG_TINY
    vals = np.exp(np.maximum(exponent, _LOG_TINY))
    if return_underflow:
        return vals, under
    return vals


def eval_weight(spec: WeightSpec, pts: np.ndarray, return_underflow: bool = False):
    """Weight values at points of shape (..., dim).

    Exponents below the representable range clamp to the smallest positive
    float; pass return_underflow=True to also get the mask of clamped nodes.
    """
    pts = np.asarray(pts, dtype=float)
    return _clamped_exp(spec.exponent(pts), return_underflow)


def eval_weight_root(spec: WeightSpec, pts: np.ndarray, p: float, return_underflow: bool = False):
    """p-th root of the weight, computed as exp(log(w)/p) for accuracy."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    pts = np.asarray(pts, dtype=float)
    return _clamped_exp(spec.exponent(pts) / p, return_underflow)


def eval_log_drift(spec: WeightSpec, pts: np.ndarray) -> np.ndarray:
    """Closed-form grad(w)/w = -beta*q*|x|^(q-1)*x/|x| - grad W - grad V.

    The radial factor is taken to vanish at the origin (the sign convention
    sign(0) = 0); for q > 1 this is also the continuous extension.
    """
    pts = np.asarray(pts, dtype=float)
    r = _radii(pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0.0, -self_drift_coef(spec) * r ** (spec.q - 2.0), 0.0)
    radial = scale[..., None] * pts
    return radial - spec.W.grad(pts) - spec.V.grad(pts)


def self_drift_coef(spec: WeightSpec) -> float:
    return spec.beta * spec.q


def weight_on_grid(spec: WeightSpec, grid: Grid) -> GridFunction:
    if spec.dim != grid.dim:
        raise ValueError("weight and grid dimensions differ")
    return GridFunction(grid, eval_weight(spec, grid.points()))


def root_on_grid(spec: WeightSpec, grid: Grid, p: float) -> GridFunction:
    if spec.dim != grid.dim:
        raise ValueError("weight and grid dimensions differ")
    return GridFunction(grid, eval_weight_root(spec, grid.points(), p))


def drift_on_grid(spec: WeightSpec, grid: Grid) -> list[GridFunction]:
    if spec.dim != grid.dim:
        raise ValueError("weight and grid dimensions differ")
    drift = eval_log_drift(spec, grid.points())
    return [GridFunction(grid, drift[..., a]) for a in range(grid.dim)]


# ---------------------------------------------------------------------------
# admissibility diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitLattice:
    """Search lattices for the growth and dilation fits."""

    delta_step: float = 0.01
    delta_max: float = 10.0
    c1_step: float = 0.05
    c1_max: float = 8.0
    c2_cap: float = 1e6


def _sample_lattice(dim: int, half_width: float, n_samples: int) -> np.ndarray:
    if dim == 1:
        ax = np.linspace(-half_width, half_width, n_samples)
        return ax[:, None]
    m = int(math.ceil(math.sqrt(n_samples)))
    if m % 2 == 0:
        m += 1  # keep the origin in the lattice
    ax = np.linspace(-half_width, half_width, m)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


@dataclass(frozen=True)
class DilationFit:
    """Constants (c1, c2) with F(2x) <= c1*F(x) + c2 on the sample box."""

    ok: bool
    c1: float
    c2: float

    def to_json(self) -> dict:
        return {"ok": self.ok, "c1": self.c1, "c2": self.c2}


def fit_dilation_bound(
    expr: PotentialExpr,
    dim: int,
    half_width: float,
    n_samples: int = 2001,
    lattice: FitLattice = FitLattice(),
) -> DilationFit:
    """Fit the doubled-argument growth bound F(2x) <= c1*F(x) + c2.

    c1 runs over the lattice {1, 1+step, ...}; for each c1 the matching
    offset is the max sample residual of F(2x) - c1*F(x).  The smallest c1
    whose offset stays below the configured cap wins; the fit fails when no
    lattice point does.
    """
    pts = _sample_lattice(dim, half_width, n_samples)
    fx = expr.value(pts)
    f2x = expr.value(2.0 * pts)
    c1s = np.arange(1.0, lattice.c1_max + 0.5 * lattice.c1_step, lattice.c1_step)
    fallback = None
    for c1 in c1s:
        c2 = float(np.max(f2x - c1 * fx))
        if c2 <= lattice.c2_cap:
            return DilationFit(ok=True, c1=float(c1), c2=c2)
        if fallback is None or c2 < fallback[1]:
            fallback = (float(c1), c2)
    return DilationFit(ok=False, c1=fallback[0], c2=fallback[1])


@dataclass(frozen=True)
class AdmissibilityReport:
    """Fitted constants behind the weight's admissibility hypotheses."""

    beta: float
    q: float
    dim: int
    delta: float
    gamma: float
    grad_bound_ok: bool
    drift_budget: float  # beta*q, the strict upper bound for delta
    osc_V: float
    dilation_W: DilationFit
    dilation_V: DilationFit
    reg_ok: bool
    diff_ok: bool
    admissible: bool
    sample_half_width: float
    n_samples: int

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "q": self.q,
            "dim": self.dim,
            "delta": self.delta,
            "gamma": self.gamma,
            "grad_bound_ok": self.grad_bound_ok,
            "drift_budget": self.drift_budget,
            "osc_V": self.osc_V,
            "dilation_W": self.dilation_W.to_json(),
            "dilation_V": self.dilation_V.to_json(),
            "reg_ok": self.reg_ok,
            "diff_ok": self.diff_ok,
            "admissible": self.admissible,
            "sample_half_width": self.sample_half_width,
            "n_samples": self.n_samples,
        }


def fit_growth_constants(
    expr: PotentialExpr,
    q: float,
    dim: int,
    half_width: float,
    n_samples: int = 2001,
    lattice: FitLattice = FitLattice(),
) -> tuple[float, float]:
    """Fit (delta, gamma) with |grad F(x)| <= delta*|x|^(q-1) + gamma.

    delta runs over {0, step, 2*step, ...}; gamma is the max sample residual
    clipped at zero.  Among lattice points attaining the minimal gamma the
    smallest delta wins.
    """
    pts = _sample_lattice(dim, half_width, n_samples)
    gnorm = expr.grad_norm(pts)
    rq = _radii(pts) ** (q - 1.0)
    deltas = np.arange(0.0, lattice.delta_max + 0.5 * lattice.delta_step, lattice.delta_step)
    gammas = np.maximum(gnorm[None, :] - deltas[:, None] * rq[None, :], 0.0).max(axis=1)
    gmin = gammas.min()
    pick = int(np.argmax(gammas <= gmin + 1e-12 * (1.0 + gmin)))
    return float(deltas[pick]), float(gammas[pick])


def check_admissibility(
    spec: WeightSpec,
    half_width: float,
    n_samples: int = 2001,
    lattice: FitLattice = FitLattice(),
) -> AdmissibilityReport:
    """Fit every admissibility hypothesis of a catalog weight on a sample box.

    Requires beta > 0.  The smooth strictly positive catalog makes the
    regularity and differentiability hypotheses structural; they are recorded
    as booleans rather than re-derived.
    """
    if spec.beta <= 0.0:
        raise ValueError("admissibility requires beta > 0")
    delta, gamma = fit_growth_constants(spec.W, spec.q, spec.dim, half_width, n_samples, lattice)
    budget = self_drift_coef(spec)
    pts = _sample_lattice(spec.dim, half_width, n_samples)
    vvals = spec.V.value(pts)
    osc_v = float(vvals.max() - vvals.min())
    dil_w = fit_dilation_bound(-spec.W, spec.dim, half_width, n_samples, lattice)
    dil_v = fit_dilation_bound(-spec.V, spec.dim, half_width, n_samples, lattice)
    grad_ok = delta < budget
    admissible = bool(grad_ok and math.isfinite(osc_v) and dil_w.ok and dil_v.ok)
    return AdmissibilityReport(
        beta=spec.beta,
        q=spec.q,
        dim=spec.dim,
        delta=delta,
        gamma=gamma,
        grad_bound_ok=grad_ok,
        drift_budget=budget,
        osc_V=osc_v,
        dilation_W=dil_w,
        dilation_V=dil_v,
        reg_ok=True,
        diff_ok=True,
        admissible=admissible,
        sample_half_width=half_width,
        n_samples=n_samples,
    )


# ---------------------------------------------------------------------------
# ball quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    """Axis-aligned box ball: center (grid-aligned) and radius."""

    center: tuple[float, ...]
    radius: float

    @staticmethod
    def of(center, radius: float) -> "Ball":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return Ball(tuple(float(v) for v in c), float(radius))


def _ball_slices(grid: Grid, ball: Ball) -> list[tuple[int, int]] | None:
    """Per-axis node index ranges of the ball, or None if it escapes the box."""
    if len(ball.center) != grid.dim:
        raise ValueError("ball center dimension mismatch")
    if ball.radius <= 0:
        raise ValueError("ball radius must be positive")
    h = grid.spacing
    out = []
    for c in ball.center:
        lo = (c - ball.radius + grid.half_width) / h
        hi = (c + ball.radius + grid.half_width) / h
        ilo, ihi = int(round(lo)), int(round(hi))
        if ilo < 0 or ihi > grid.nodes_per_axis - 1 or ihi - ilo < 2:
            return None
        out.append((ilo, ihi))
    return out


def _segment_integral_1d(vals: np.ndarray, h: float) -> float:
    return float(np.sum(segment_weights(len(vals), h) * vals))


def _ball_integral(field: GridFunction, slices: list[tuple[int, int]]) -> float:
    h = field.grid.spacing
    if field.grid.dim == 1:
        (lo, hi) = slices[0]
        return _segment_integral_1d(field.values[lo : hi + 1], h)
    (lx, hx), (ly, hy) = slices
    wx = segment_weights(hx - lx + 1, h)
    wy = segment_weights(hy - ly + 1, h)
    return float(wx @ field.values[lx : hx + 1, ly : hy + 1] @ wy)


@dataclass(frozen=True)
class BallEntry:
    center: tuple[float, ...]
    radius: float
    value: float | None
    note: str = ""

    def to_json(self) -> dict:
        return {
            "center": list(self.center),
            "radius": self.radius,
            "value": self.value,
            "note": self.note,
        }


def _entries_csv(entries: Sequence[BallEntry]) -> str:
    lines = ["ball_center,ball_radius,value"]
    for e in entries:
        center = ";".join(f"{c:.12g}" for c in e.center)
        value = "" if e.value is None else f"{e.value:.12g}"
        lines.append(f"{center},{e.radius:.12g},{value}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DoublingReport:
    entries: tuple[BallEntry, ...]
    constant: float | None  # max ratio over balls whose double fits the box

    def to_json(self) -> dict:
        return {"entries": [e.to_json() for e in self.entries], "constant": self.constant}

    def to_csv(self) -> str:
        return _entries_csv(self.entries)


def estimate_doubling(field: GridFunction, balls: Sequence[Ball]) -> DoublingReport:
    """Mass ratios of concentric doubled balls, integral(2B)/integral(B).

    Balls whose doubling escapes the box are reported with a warning note
    instead of a number; the returned constant is the max over valid balls.
    """
    entries: list[BallEntry] = []
    best: float | None = None
    for ball in balls:
        inner = _ball_slices(field.grid, ball)
        outer = _ball_slices(field.grid, Ball(ball.center, 2.0 * ball.radius))
        if inner is None or outer is None:
            entries.append(
                BallEntry(ball.center, ball.radius, None, "doubled ball escapes the grid box")
            )
            continue
        denom = _ball_integral(field, inner)
        if denom <= 0.0:
            entries.append(BallEntry(ball.center, ball.radius, None, "ball carries no mass"))
            continue
        ratio = _ball_integral(field, outer) / denom
        entries.append(BallEntry(ball.center, ball.radius, ratio))
        best = ratio if best is None else max(best, ratio)
    return DoublingReport(tuple(entries), best)


# --- Muckenhoupt -----------------------------------------------------------


def _power_fit_integral(
    w: np.ndarray, idx0: int, lo: int, hi: int, h: float, s: float, halo: int
) -> tuple[float, float]:
    """Integrals of w^s over [x0 - halo*h, x0] and [x0, x0 + halo*h] by local
    power-law extrapolation around a zero node; exact for pure power data."""
    out = []
    for sgn in (-1, +1):
        i1 = idx0 + sgn * (halo // 2)
        i2 = idx0 + sgn * halo
        if i2 < lo or i2 > hi:
            raise ValueError(f"zero weight node {idx0} too close to the ball edge")
        w1, w2 = w[i1], w[i2]
        if w1 <= 0.0 or w2 <= 0.0:
            raise ValueError(f"weight vanishes on several nodes near node {idx0}")
        alpha = math.log(w2 / w1) / math.log(2.0)
        if alpha * s <= -1.0:
            raise ValueError(
                f"weight power near node {idx0} is not integrable at exponent {s:g}"
            )
        dist = halo * h
        amp = w2 / dist**alpha
        out.append(amp**s * dist ** (alpha * s + 1.0) / (alpha * s + 1.0))
    return out[0], out[1]


def _ball_integral_power(field: GridFunction, slices, s: float, zero_tol: float) -> float:
    """Integral of w^s over a ball; w may vanish at isolated interior nodes,
    which are handled by power-law extrapolation (1d only)."""
    g = field.grid
    h = g.spacing
    if g.dim == 1:
        (lo, hi) = slices[0]
        w = field.values
        seg = w[lo : hi + 1]
        if np.any(seg < 0.0):
            bad = lo + int(np.argmax(seg < 0.0))
            raise ValueError(f"negative weight at node {bad} (x={g.axis()[bad]:g})")
        zeros = np.flatnonzero(seg <= zero_tol)
        with np.errstate(divide="ignore"):
            integrand = np.where(seg > zero_tol, seg, 1.0) ** s
        if zeros.size == 0:
            return _segment_integral_1d(integrand, h)
        if zeros.size > 1:
            bad = lo + int(zeros[1])
            raise ValueError(f"weight vanishes at several nodes, e.g. node {bad}")
        idx0 = lo + int(zeros[0])
        halo = 4
        left, right = _power_fit_integral(w, idx0, lo, hi, h, s, halo)
        total = left + right
        if idx0 - halo > lo:
            total += _segment_integral_1d(w[lo : idx0 - halo + 1] ** s, h)
        if idx0 + halo < hi:
            total += _segment_integral_1d(w[idx0 + halo : hi + 1] ** s, h)
        return total
    (lx, hx), (ly, hy) = slices
    block = field.values[lx : hx + 1, ly : hy + 1]
    if np.any(block < 0.0):
        i, j = np.argwhere(block < 0.0)[0]
        raise ValueError(f"negative weight at node ({lx + i}, {ly + j})")
    if np.any(block <= zero_tol):
        i, j = np.argwhere(block <= zero_tol)[0]
        raise ValueError(f"weight vanishes at node ({lx + i}, {ly + j}) inside a ball")
    wx = segment_weights(hx - lx + 1, h)
    wy = segment_weights(hy - ly + 1, h)
    return float(wx @ block**s @ wy)


@dataclass(frozen=True)
class MuckenhouptReport:
    p: float
    entries: tuple[BallEntry, ...]
    constant: float | None

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "entries": [e.to_json() for e in self.entries],
            "constant": self.constant,
        }

    def to_csv(self) -> str:
        return _entries_csv(self.entries)


def estimate_muckenhoupt(
    field: GridFunction,
    p: float,
    balls: Sequence[Ball],
    zero_tol: float = 1e-300,
) -> MuckenhouptReport:
    """Per-ball Muckenhoupt products (avg_B w) * (avg_B w^(-1/(p-1)))^(p-1).

    Jensen's inequality forces every product to be >= 1.  Negative weight
    nodes raise; isolated zero nodes are integrated by local power-law
    extrapolation when the reciprocal stays integrable, and raise otherwise.
    """
    if p <= 1.0:
        raise ValueError(f"p must exceed 1, got {p}")
    s = -1.0 / (p - 1.0)
    entries: list[BallEntry] = []
    best: float | None = None
    for ball in balls:
        slices = _ball_slices(field.grid, ball)
        if slices is None:
            entries.append(BallEntry(ball.center, ball.radius, None, "ball escapes the grid box"))
            continue
        # Average over the node-snapped segment actually integrated, not the
        # nominal (2r)^dim box, so constant weights score exactly 1 for any ball.
        h = field.grid.spacing
        vol = 1.0
        for lo, hi in slices:
            vol *= (hi - lo) * h
        avg_w = _ball_integral_power(field, slices, 1.0, zero_tol) / vol
        avg_rec = _ball_integral_power(field, slices, s, zero_tol) / vol
        value = avg_w * avg_rec ** (p - 1.0)
        entries.append(BallEntry(ball.center, ball.radius, value))
        best = value if best is None else max(best, value)
    return MuckenhouptReport(p, tuple(entries), best)


# --- local integrability of the reciprocal root ----------------------------


@dataclass(frozen=True)
class RegReport:
    ok: bool
    p: float
    worst_cell: tuple[float, ...] | None
    fine: float | None
    coarse: float | None
    ratio: float | None

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "p": self.p,
            "worst_cell": list(self.worst_cell) if self.worst_cell else None,
            "fine": self.fine,
            "coarse": self.coarse,
            "ratio": self.ratio,
        }


def _unit_cell_bounds(grid: Grid) -> list[tuple[int, int]]:
    """Index ranges of unit-scale subcells, aligned to even node offsets."""
    h = grid.spacing
    m = max(2, 2 * int(round(0.5 / h)))  # nodes per unit cell, even cell count
    n = grid.nodes_per_axis
    bounds = []
    lo = 0
    while lo < n - 1:
        hi = min(lo + m, n - 1)
        if n - 1 - hi < m // 2:
            hi = n - 1
        bounds.append((lo, hi))
        lo = hi
    return bounds


def check_reciprocal_integrability(
    field: GridFunction, p: float, divergence_factor: float = 10.0
) -> RegReport:
    """Check local integrability of w^(-1/(p-1)) cell by cell (boundedness of
    1/w for p = 1).

    Each unit-scale subcell's quadrature at full resolution is compared with
    the half-resolution value; growth beyond the divergence factor, or a
    nonpositive node, marks the cell as divergent.
    """
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    g = field.grid
    w = field.values
    if np.any(w < 0.0):
        raise ValueError("weight field must be nonnegative")
    h = g.spacing
    bounds = _unit_cell_bounds(g)
    axis = g.axis()

    def cell_result(vals: np.ndarray) -> tuple[bool, float, float]:
        if np.any(vals <= 0.0):
            return False, math.inf, math.inf
        if p == 1.0:
            rec = 1.0 / vals
            fine = float(rec.max())
            coarse = float(rec[::2].max())
        else:
            rec = vals ** (-1.0 / (p - 1.0))
            fine = float(np.trapezoid(rec, dx=h)) if rec.ndim == 1 else 0.0
            coarse = float(np.trapezoid(rec[::2], dx=2 * h)) if rec.ndim == 1 else 0.0
        return True, fine, coarse

    worst = None
    if g.dim == 1:
        cells = [((lo, hi),) for lo, hi in bounds]
    else:
        cells = [((lx, hx), (ly, hy)) for lx, hx in bounds for ly, hy in bounds]

    for cell in cells:
        if g.dim == 1:
            (lo, hi) = cell[0]
            vals = w[lo : hi + 1]
            pos, fine, coarse = cell_result(vals)
            origin = (float(axis[lo]),)
        else:
            (lx, hx), (ly, hy) = cell
            block = w[lx : hx + 1, ly : hy + 1]
            if np.any(block <= 0.0):
                pos, fine, coarse = False, math.inf, math.inf
            elif p == 1.0:
                rec = 1.0 / block
                pos, fine, coarse = True, float(rec.max()), float(rec[::2, ::2].max())
            else:
                rec = block ** (-1.0 / (p - 1.0))
                fine = float(np.trapezoid(np.trapezoid(rec, dx=h, axis=1), dx=h))
                coarse = float(
                    np.trapezoid(np.trapezoid(rec[::2, ::2], dx=2 * h, axis=1), dx=2 * h)
                )
                pos = True
            origin = (float(axis[lx]), float(axis[ly]))
        if not pos:
            return RegReport(False, p, origin, None, None, None)
        ratio = fine / coarse if coarse > 0 else math.inf
        if worst is None or ratio > worst[1]:
            worst = (origin, ratio, fine, coarse)
        if ratio > divergence_factor:
            return RegReport(False, p, origin, fine, coarse, ratio)
    origin, ratio, fine, coarse = worst
    return RegReport(True, p, origin, fine, coarse, ratio)
