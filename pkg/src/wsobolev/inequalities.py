"""Explicit constant chain and quadrature verification of the inequalities.

The chain starts from the radial bound (|x|^(q-1) moment against the pure
exponential weight), perturbs it by the W and V potentials, and ends in a
certified Poincaré constant for the full catalog weight.  Every constant is
an explicit formula in (beta, q, p, d) and the fitted growth numbers; the
verify_* functions then test each inequality on grid functions, judging the
margin against an a-posteriori quadrature error estimate.

The certified Poincaré constant is astronomically conservative (it carries
an exp(2*osc) factor over a large ball), so the empirical best constant is
reported next to it wherever both make sense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import GridFunction, discrete_gradient, gradient_magnitude, quadrature_with_error
from .weights import (
    Ball,
    WeightSpec,
    _ball_slices,
    _segment_integral_1d,
    eval_weight,
    fit_growth_constants,
    weight_on_grid,
)
from .grid import segment_weights

__all__ = [
    "ConstantChain",
    "InequalityReport",
    "constants_xq",
    "constants_potential",
    "oscillation_over_ball",
    "poincare_bound",
    "build_constant_chain",
    "verify_xq",
    "verify_potential",
    "verify_poincare",
    "empirical_poincare_ratio",
    "estimate_sobolev_constant",
    "estimate_local_poincare",
    "batch_report_csv",
]


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def constants_xq(beta_coeff: float, q: float, d: int, eps: float) -> tuple[float, float]:
    """Minimal admissible constants (C, D) of the radial moment bound
    int |f||x|^(q-1) dmu <= C int |grad f| dmu + D int |f| dmu
    for mu = exp(-beta*|x|^q) dx."""
    if beta_coeff <= 0.0:
        raise ValueError("beta must be positive")
    if q <= 1.0:
        raise ValueError("q must exceed 1")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    C = 1.0 / (beta_coeff * q)
    D = (1.0 + eps) ** (q - 1.0) + (1.0 / eps + d - 1.0) * C
    return C, D


def constants_potential(
    p: float,
    q: float,
    beta_coeff: float,
    delta: float,
    gamma: float,
    osc_V: float,
    d: int,
    eps0: float | None = None,
    eps1: float = 1.0,
    scale_gamma_by_C: bool = False,
) -> tuple[float, float]:
    """Minimal (C', D') for the potential-perturbed moment bound against
    nu = exp(-beta*|x|^q - W - V) dx, given the fitted growth numbers
    |grad W| <= delta*|x|^(q-1) + gamma and osc_V = sup V - inf V.

    Requires delta < beta*q.  scale_gamma_by_C replaces the additive gamma
    by C*gamma — the constant the perturbation argument actually propagates;
    both conventions are circulating, so the chain reports the two values.
    """
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    C = 1.0 / (beta_coeff * q)
    if delta >= 1.0 / C:
        raise ValueError(
            f"delta = {delta:g} must stay below beta*q = {1.0 / C:g}; the constant blows up"
        )
    if eps0 is None:
        eps0 = 1.0 / p
    if eps0 <= 0.0 or eps1 <= 0.0:
        raise ValueError("eps0 and eps1 must be positive")
    lead = 1.0 / (1.0 - C * delta)
    amp = math.exp(2.0 * osc_V)
    c_prime = lead * eps0 * p * C * amp
    gamma_term = C * gamma if scale_gamma_by_C else gamma
    d_prime = lead * amp * (
        (1.0 + eps1) ** (q - 1.0)
        + (1.0 / eps1 + d - 1.0) * C
        + (eps0 * p) ** (-q / p) * C * p / q
        + gamma_term
    )
    return c_prime, d_prime


def _ball_lattice(dim: int, radius: float, n_target: int = 10_000) -> np.ndarray:
    """Sample lattice of the closed Euclidean ball B(0, radius), always
    containing the origin and the axis extremes."""
    if dim == 1:
        m = n_target + 1 if n_target % 2 == 0 else n_target
        return np.linspace(-radius, radius, m)[:, None]
    m = int(math.ceil(math.sqrt(n_target)))
    if m % 2 == 0:
        m += 1
    ax = np.linspace(-radius, radius, m)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    keep = np.sqrt(np.sum(pts * pts, axis=-1)) <= radius + 1e-12
    return pts[keep]


def oscillation_over_ball(spec: WeightSpec, radius: float, n_samples: int = 10_000) -> float:
    """Oscillation of log(weight) over the ball B(0, radius).

    The radial part's extremes sit at the origin and on the axis boundary,
    both of which the sample lattice contains, so for pure radial weights the
    value is exact; W and V contributions are resolved by the dense lattice.
    """
    pts = _ball_lattice(spec.dim, radius, n_samples)
    vals = spec.exponent(pts)
    return float(vals.max() - vals.min())


def poincare_bound(
    spec: WeightSpec,
    p: float,
    c_prime: float,
    d_prime: float,
    L: float,
    C4: float,
) -> tuple[float, float]:
    """Certified Poincaré constant c (and the oscillation a_L behind it).

    a_L is the oscillation of log(weight) over B(0, L^(p-1)); the constant is
    c = 2^q (e^(2 a_L) C4 L^(p(p-1)) + C'/L) / (1 - D'/L), valid for L > D'.
    """
    if L <= d_prime:
        raise ValueError(f"L = {L:g} must exceed D' = {d_prime:g}")
    if C4 <= 0.0:
        raise ValueError("C4 must be positive")
    q = spec.q
    a_L = oscillation_over_ball(spec, L ** (p - 1.0))
    c = (
        2.0**q
        * (math.exp(2.0 * a_L) * C4 * L ** (p * (p - 1.0)) + c_prime / L)
        / (1.0 - d_prime / L)
    )
    return c, a_L


@dataclass(frozen=True)
class ConstantChain:
    """Certified constants with every input that produced them."""

    p: float
    q: float
    beta_coeff: float
    d: int
    delta: float
    gamma: float
    osc_V: float
    eps: float
    eps0: float
    eps1: float
    C: float
    D: float
    C_prime: float
    D_prime: float
    D_prime_gamma_scaled: float
    a_L: float
    L: float
    C4: float
    c: float

    def to_json(self) -> dict:
        return {
            "inputs": {
                "p": self.p,
                "q": self.q,
                "beta": self.beta_coeff,
                "d": self.d,
                "delta": self.delta,
                "gamma": self.gamma,
                "osc_V": self.osc_V,
                "eps": self.eps,
                "eps0": self.eps0,
                "eps1": self.eps1,
                "L": self.L,
                "C4": self.C4,
            },
            "C": self.C,
            "D": self.D,
            "C_prime": self.C_prime,
            "D_prime": self.D_prime,
            "D_prime_gamma_scaled": self.D_prime_gamma_scaled,
            "a_L": self.a_L,
            "c": self.c,
        }


def build_constant_chain(
    spec: WeightSpec,
    p: float,
    L: float,
    C4: float,
    fit_half_width: float,
    eps: float = 1.0,
    eps0: float | None = None,
    eps1: float = 1.0,
    n_samples: int = 2001,
) -> ConstantChain:
    """Fit the growth constants of the weight on a sample box and evaluate
    the whole constant chain down to the certified Poincaré constant."""
    if eps0 is None:
        eps0 = 1.0 / p
    delta, gamma = fit_growth_constants(spec.W, spec.q, spec.dim, fit_half_width, n_samples)
    pts_v = _ball_lattice(spec.dim, fit_half_width, n_samples)
    v_vals = spec.V.value(pts_v)
    osc_v = float(v_vals.max() - v_vals.min())
    C, D = constants_xq(spec.beta, spec.q, spec.dim, eps)
    c_prime, d_prime = constants_potential(
        p, spec.q, spec.beta, delta, gamma, osc_v, spec.dim, eps0, eps1
    )
    _, d_prime_scaled = constants_potential(
        p, spec.q, spec.beta, delta, gamma, osc_v, spec.dim, eps0, eps1, scale_gamma_by_C=True
    )
    c, a_L = poincare_bound(spec, p, c_prime, d_prime, L, C4)
    return ConstantChain(
        p=p,
        q=spec.q,
        beta_coeff=spec.beta,
        d=spec.dim,
        delta=delta,
        gamma=gamma,
        osc_V=osc_v,
        eps=eps,
        eps0=eps0,
        eps1=eps1,
        C=C,
        D=D,
        C_prime=c_prime,
        D_prime=d_prime,
        D_prime_gamma_scaled=d_prime_scaled,
        a_L=a_L,
        L=L,
        C4=C4,
        c=c,
    )


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    margin: float
    quadrature_error_estimate: float
    holds: bool

    @staticmethod
    def of(lhs: float, rhs: float, quad_error: float) -> "InequalityReport":
        margin = rhs - lhs
        return InequalityReport(lhs, rhs, margin, quad_error, margin >= -quad_error)

    def to_json(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "quadrature_error_estimate": self.quadrature_error_estimate,
            "holds": self.holds,
        }


def batch_report_csv(rows: Sequence[tuple[str, InequalityReport]]) -> str:
    lines = ["corpus_id,lhs,rhs,margin,holds"]
    for name, rep in rows:
        lines.append(
            f"{name},{rep.lhs:.12g},{rep.rhs:.12g},{rep.margin:.12g},{str(rep.holds).lower()}"
        )
    return "\n".join(lines) + "\n"


def _radial_moment_field(grid, q: float) -> np.ndarray:
    return grid.node_radii() ** (q - 1.0)


def verify_xq(
    f: GridFunction,
    grads: Sequence[GridFunction],
    beta_coeff: float,
    q: float,
    C: float,
    D: float,
) -> InequalityReport:
    """Check the radial moment bound against mu = exp(-beta*|x|^q) dx."""
    grid = f.grid
    mu = GridFunction(grid, eval_weight(WeightSpec(beta_coeff, q, grid.dim), grid.points()))
    absf = np.abs(f.values)
    mag = gradient_magnitude(grads)
    lhs, e_lhs = quadrature_with_error(
        GridFunction(grid, absf * _radial_moment_field(grid, q)), mu
    )
    t1, e1 = quadrature_with_error(GridFunction(grid, mag), mu)
    t2, e2 = quadrature_with_error(GridFunction(grid, absf), mu)
    rhs = C * t1 + D * t2
    return InequalityReport.of(lhs, rhs, e_lhs + C * e1 + D * e2)


def verify_potential(
    f: GridFunction,
    grads: Sequence[GridFunction],
    spec: WeightSpec,
    p: float,
    c_prime: float,
    d_prime: float,
) -> InequalityReport:
    """Check the p-th power moment bound against the full catalog weight."""
    grid = f.grid
    nu = weight_on_grid(spec, grid)
    absfp = np.abs(f.values) ** p
    magp = gradient_magnitude(grads) ** p
    lhs, e_lhs = quadrature_with_error(
        GridFunction(grid, absfp * _radial_moment_field(grid, spec.q)), nu
    )
    t1, e1 = quadrature_with_error(GridFunction(grid, magp), nu)
    t2, e2 = quadrature_with_error(GridFunction(grid, absfp), nu)
    rhs = c_prime * t1 + d_prime * t2
    return InequalityReport.of(lhs, rhs, e_lhs + c_prime * e1 + d_prime * e2)


def verify_poincare(
    f: GridFunction,
    grads: Sequence[GridFunction],
    spec: WeightSpec,
    p: float,
    c: float,
) -> InequalityReport:
    """Check the Poincaré inequality (weighted mean subtracted) with a given
    constant c."""
    grid = f.grid
    nu = weight_on_grid(spec, grid)
    mass, e_mass = quadrature_with_error(GridFunction(grid, np.ones(grid.shape)), nu)
    if mass <= 0.0:
        raise ValueError("weight carries no mass on the grid")
    mean, _ = quadrature_with_error(f, nu)
    mean /= mass
    lhs, e_lhs = quadrature_with_error(
        GridFunction(grid, np.abs(f.values - mean) ** p), nu
    )
    t1, e1 = quadrature_with_error(GridFunction(grid, gradient_magnitude(grads) ** p), nu)
    rhs = c * t1
    return InequalityReport.of(lhs, rhs, e_lhs + c * e1 + e_mass)


def empirical_poincare_ratio(
    f: GridFunction,
    grads: Sequence[GridFunction],
    spec: WeightSpec,
    p: float,
) -> float:
    """Ratio int|f - mean|^p dnu / int|grad f|^p dnu — the constant this f
    actually requires (best-possible c is the sup over f)."""
    grid = f.grid
    nu = weight_on_grid(spec, grid)
    mass, _ = quadrature_with_error(GridFunction(grid, np.ones(grid.shape)), nu)
    mean, _ = quadrature_with_error(f, nu)
    mean /= mass
    lhs, _ = quadrature_with_error(GridFunction(grid, np.abs(f.values - mean) ** p), nu)
    denom, _ = quadrature_with_error(GridFunction(grid, gradient_magnitude(grads) ** p), nu)
    if denom <= 0.0:
        raise ValueError("f has zero gradient norm")
    return lhs / denom


# ---------------------------------------------------------------------------
# empirical ball estimators
# ---------------------------------------------------------------------------


def _ball_quadrature(field_vals: np.ndarray, grid, slices) -> float:
    h = grid.spacing
    if grid.dim == 1:
        (lo, hi) = slices[0]
        return _segment_integral_1d(field_vals[lo : hi + 1], h)
    (lx, hx), (ly, hy) = slices
    wx = segment_weights(hx - lx + 1, h)
    wy = segment_weights(hy - ly + 1, h)
    return float(wx @ field_vals[lx : hx + 1, ly : hy + 1] @ wy)


def _require_supported_in_ball(f: GridFunction, ball: Ball, index: int) -> None:
    grid = f.grid
    pts = grid.points()
    center = np.asarray(ball.center)
    outside = np.max(np.abs(pts - center), axis=-1) > ball.radius + 1e-12
    if np.any(f.values[outside] != 0.0):
        raise ValueError(f"corpus function {index} does not vanish outside the ball")


@dataclass(frozen=True)
class SobolevEstimate:
    kappa: float
    p: float
    ball: Ball
    ratios: tuple[float, ...]
    constant: float | None

    def to_json(self) -> dict:
        return {
            "kappa": self.kappa,
            "p": self.p,
            "ball": {"center": list(self.ball.center), "radius": self.ball.radius},
            "ratios": list(self.ratios),
            "constant": self.constant,
        }


def estimate_sobolev_constant(
    corpus: Sequence[GridFunction],
    weight: GridFunction,
    p: float,
    kappa: float,
    ball: Ball,
) -> SobolevEstimate:
    """Empirical minimal constant in the ball Sobolev inequality: max over
    the corpus of the (kappa*p)-average of |f| over the (p)-average of the
    gradient, both weighted and normalized by the ball's weight mass, with
    the ball diameter scaling the gradient side."""
    if kappa <= 1.0:
        raise ValueError("kappa must exceed 1")
    grid = weight.grid
    slices = _ball_slices(grid, ball)
    if slices is None:
        raise ValueError("ball escapes the grid box")
    wmass = _ball_quadrature(weight.values, grid, slices)
    if wmass <= 0.0:
        raise ValueError("weight carries no mass on the ball")
    diam = 2.0 * ball.radius
    ratios = []
    best: float | None = None
    for i, f in enumerate(corpus):
        f._check_same_grid(weight)
        _require_supported_in_ball(f, ball, i)
        mag = gradient_magnitude(discrete_gradient(f))
        num = _ball_quadrature(np.abs(f.values) ** (kappa * p) * weight.values, grid, slices)
        den = _ball_quadrature(mag**p * weight.values, grid, slices)
        if den <= 0.0:
            continue
        ratio = (num / wmass) ** (1.0 / (kappa * p)) / (diam * (den / wmass) ** (1.0 / p))
        ratios.append(ratio)
        best = ratio if best is None else max(best, ratio)
    return SobolevEstimate(kappa, p, ball, tuple(ratios), best)


def estimate_local_poincare(
    corpus: Sequence[GridFunction],
    weight: GridFunction,
    p: float,
    balls: Sequence[Ball],
) -> dict:
    """Empirical local Poincaré constant: per ball, the max over the corpus
    of int_B |f - f_B|^p w over (diam B)^p int_B |grad f|^p w, with f_B the
    weighted ball mean.  A convenience for choosing the C4 input."""
    grid = weight.grid
    out = []
    overall: float | None = None
    for ball in balls:
        slices = _ball_slices(grid, ball)
        if slices is None:
            out.append({"center": list(ball.center), "radius": ball.radius, "value": None})
            continue
        wmass = _ball_quadrature(weight.values, grid, slices)
        best: float | None = None
        for f in corpus:
            f._check_same_grid(weight)
            fmean = _ball_quadrature(f.values * weight.values, grid, slices) / wmass
            num = _ball_quadrature(np.abs(f.values - fmean) ** p * weight.values, grid, slices)
            mag = gradient_magnitude(discrete_gradient(f))
            den = _ball_quadrature(mag**p * weight.values, grid, slices)
            if den <= 0.0:
                continue
            val = num / ((2.0 * ball.radius) ** p * den)
            best = val if best is None else max(best, val)
        out.append({"center": list(ball.center), "radius": ball.radius, "value": best})
        if best is not None:
            overall = best if overall is None else max(overall, best)
    return {"p": p, "balls": out, "constant": overall}
