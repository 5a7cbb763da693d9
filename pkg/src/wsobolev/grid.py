"""Tensor grids, quadrature, discrete calculus, and smoothing kernels.

Everything downstream works on uniform tensor grids over a symmetric box
[-R, R]^d with d in {1, 2}.  Functions are represented by their node
values; fields are extended by zero outside the box wherever an operation
(convolution, shifted sampling) has to look past the boundary.  The node
count per axis is kept odd so that the origin is always a node and
composite Simpson weights apply without special cases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Grid",
    "GridFunction",
    "Mollifier",
    "build_grid",
    "sample_field",
    "discrete_gradient",
    "quadrature",
    "quadrature_with_error",
    "segment_weights",
    "mollify",
    "maximal_function",
    "difference_quotient",
    "truncate",
    "bump_profile",
    "save_grid_function_csv",
    "save_grid_function_binary",
    "load_grid_function_binary",
]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [-R, R]^dim with an odd node count per axis."""

    dim: int
    half_width: float
    nodes_per_axis: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.half_width <= 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        n = self.nodes_per_axis
        if n < 3:
            raise ValueError(f"nodes_per_axis must be >= 3, got {n}")
        if n % 2 == 0:
            raise ValueError(f"nodes_per_axis must be odd, got {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.nodes_per_axis - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis; symmetric, with 0.0 an exact node."""
        return np.linspace(-self.half_width, self.half_width, self.nodes_per_axis)

    def mesh(self) -> tuple[np.ndarray, ...]:
        ax = self.axis()
        if self.dim == 1:
            return (ax,)
        return tuple(np.meshgrid(ax, ax, indexing="ij"))

    def points(self) -> np.ndarray:
        """All nodes as an array of shape grid.shape + (dim,)."""
        return np.stack(self.mesh(), axis=-1)

    def node_radii(self) -> np.ndarray:
        pts = self.points()
        return np.sqrt(np.sum(pts * pts, axis=-1))

    def refine(self) -> "Grid":
        """Grid with halved spacing; existing nodes are preserved."""
        return Grid(self.dim, self.half_width, 2 * self.nodes_per_axis - 1)

    def index_of(self, coord: float) -> int:
        """Index of the node closest to a coordinate along one axis."""
        idx = int(round((coord + self.half_width) / self.spacing))
        if idx < 0 or idx >= self.nodes_per_axis:
            raise ValueError(f"coordinate {coord} outside the grid box")
        return idx


def build_grid(dim: int, half_width: float, nodes_per_axis: int) -> Grid:
    return Grid(dim, half_width, nodes_per_axis)


@dataclass
class GridFunction:
    """Real node values on a grid, with an optional known support radius.

    When compact_support_radius is set the values must vanish at every node
    with Euclidean norm beyond that radius; the constructor enforces it.
    """

    grid: Grid
    values: np.ndarray
    compact_support_radius: float | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )
        r = self.compact_support_radius
        if r is not None:
            outside = self.grid.node_radii() > r
            if np.any(self.values[outside] != 0.0):
                raise ValueError(
                    f"values do not vanish outside radius {r}"
                )

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy(), self.compact_support_radius)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _combined_radius(self, other: "GridFunction") -> float | None:
        a, b = self.compact_support_radius, other.compact_support_radius
        if a is None or b is None:
            return None
        return max(a, b)

    def _check_same_grid(self, other: "GridFunction") -> None:
        if self.grid != other.grid:
            raise ValueError("grid mismatch")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check_same_grid(other)
        return GridFunction(self.grid, self.values + other.values, self._combined_radius(other))

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check_same_grid(other)
        return GridFunction(self.grid, self.values - other.values, self._combined_radius(other))

    def __mul__(self, scalar: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * float(scalar), self.compact_support_radius)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values, self.compact_support_radius)


def sample_field(
    grid: Grid,
    f,
    compact_support_radius: float | None = None,
) -> GridFunction:
    """Evaluate a field at the grid nodes.

    Accepts a callable taking the coordinate arrays (one per axis), an object
    exposing eval-on-points semantics via a `weight_on_grid`-compatible
    `exponent` method (weight specs are handled in the weights module), or a
    plain array of node values.
    """
    if callable(f):
        vals = np.asarray(f(*grid.mesh()), dtype=float)
        vals = np.broadcast_to(vals, grid.shape).copy()
    elif hasattr(f, "exponent"):
        floor = np.log(np.finfo(float).tiny)
        vals = np.exp(np.maximum(np.asarray(f.exponent(grid.points()), dtype=float), floor))
    else:
        vals = np.asarray(f, dtype=float)
    return GridFunction(grid, vals, compact_support_radius)


# ---------------------------------------------------------------------------
# discrete gradient
# ---------------------------------------------------------------------------


def discrete_gradient(f: GridFunction) -> list[GridFunction]:
    """Axis derivatives: central differences inside, 2nd-order one-sided at
    the boundary (the np.gradient edge_order=2 stencil)."""
    h = f.grid.spacing
    if f.grid.dim == 1:
        comps = [np.gradient(f.values, h, edge_order=2)]
    else:
        comps = list(np.gradient(f.values, h, edge_order=2))
    return [GridFunction(f.grid, c) for c in comps]


def gradient_magnitude(grads: Sequence[GridFunction]) -> np.ndarray:
    sq = sum(g.values * g.values for g in grads)
    return np.sqrt(sq)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def simpson_weights(n: int, h: float) -> np.ndarray:
    if n < 3 or n % 2 == 0:
        raise ValueError(f"composite Simpson needs an odd node count >= 3, got {n}")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def segment_weights(n: int, h: float) -> np.ndarray:
    """Quadrature weights for n consecutive nodes: Simpson when the cell
    count is even, otherwise Simpson on all but the last cell plus a
    trapezoid correction there."""
    if n < 2:
        raise ValueError("segment needs at least two nodes")
    if n == 2:
        return np.array([h / 2.0, h / 2.0])
    if (n - 1) % 2 == 0:
        return simpson_weights(n, h)
    w = np.zeros(n)
    w[:-1] = simpson_weights(n - 1, h)
    w[-2] += h / 2.0
    w[-1] += h / 2.0
    return w


def _box_weights(grid: Grid) -> np.ndarray:
    w1 = simpson_weights(grid.nodes_per_axis, grid.spacing)
    if grid.dim == 1:
        return w1
    return np.outer(w1, w1)


def quadrature(f: GridFunction, weight: GridFunction | None = None) -> float:
    """Composite Simpson integral of f (optionally times a weight field)."""
    vals = f.values
    if weight is not None:
        f._check_same_grid(weight)
        vals = vals * weight.values
    return float(np.sum(_box_weights(f.grid) * vals))


def _coarse_quadrature(grid: Grid, vals: np.ndarray) -> float | None:
    """Simpson on every other node, when that subgrid is itself Simpson-able."""
    n = grid.nodes_per_axis
    if (n - 1) % 4 != 0:
        return None
    m = (n + 1) // 2
    w1 = simpson_weights(m, 2.0 * grid.spacing)
    if grid.dim == 1:
        return float(np.sum(w1 * vals[::2]))
    return float(np.sum(np.outer(w1, w1) * vals[::2, ::2]))


def quadrature_with_error(f: GridFunction, weight: GridFunction | None = None) -> tuple[float, float]:
    """Simpson integral plus an a-posteriori error estimate.

    The estimate is |Simpson(h) - Simpson(2h)| when the coarse subgrid
    exists, otherwise |Simpson - trapezoid| on the full grid.
    """
    vals = f.values
    if weight is not None:
        f._check_same_grid(weight)
        vals = vals * weight.values
    fine = float(np.sum(_box_weights(f.grid) * vals))
    coarse = _coarse_quadrature(f.grid, vals)
    if coarse is None:
        h = f.grid.spacing
        tw1 = np.full(f.grid.nodes_per_axis, h)
        tw1[0] = tw1[-1] = h / 2.0
        tw = tw1 if f.grid.dim == 1 else np.outer(tw1, tw1)
        coarse = float(np.sum(tw * vals))
    return fine, abs(fine - coarse)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------


def bump_profile(u: np.ndarray) -> np.ndarray:
    """The standard radial bump exp(-1/(1-u^2)) on |u|<1, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


@dataclass(frozen=True)
class Mollifier:
    """Discrete smoothing kernel built from the standard radial bump.

    Taps live on grid offsets inside the closed ball of radius eps and are
    normalized so that the discrete convolution sum has unit mass; convolving
    a constant therefore reproduces it exactly, and sup norms contract.
    """

    eps: float
    spacing: float
    dim: int
    taps: np.ndarray  # shape (2K+1,) in 1d, (2K+1, 2K+1) in 2d

    @staticmethod
    def build(grid: Grid, eps: float) -> "Mollifier":
        h = grid.spacing
        if eps < h:
            raise ValueError(f"eps {eps} below grid spacing {h}: kernel not resolvable")
        K = int(np.floor(eps / h + 1e-12))
        offsets = np.arange(-K, K + 1) * h
        if grid.dim == 1:
            raw = bump_profile(offsets / eps)
        else:
            ox, oy = np.meshgrid(offsets, offsets, indexing="ij")
            raw = bump_profile(np.sqrt(ox * ox + oy * oy) / eps)
        total = raw.sum()
        if total <= 0.0:
            raise ValueError("empty mollifier kernel")
        return Mollifier(eps=eps, spacing=h, dim=grid.dim, taps=raw / total)

    @property
    def mass(self) -> float:
        """Discrete kernel mass in the convolution's own sum; 1 by construction."""
        return float(self.taps.sum())

    def kernel_on_grid(self, grid: Grid) -> GridFunction:
        """The kernel placed at the origin as a grid function (density norm:
        node value = tap / h^dim)."""
        if grid.spacing != self.spacing or grid.dim != self.dim:
            raise ValueError("grid does not match the kernel's spacing")
        K = (self.taps.shape[0] - 1) // 2
        c = (grid.nodes_per_axis - 1) // 2
        if K > c:
            raise ValueError("kernel wider than the grid")
        vals = np.zeros(grid.shape)
        sl = slice(c - K, c + K + 1)
        if grid.dim == 1:
            vals[sl] = self.taps / self.spacing
        else:
            vals[sl, sl] = self.taps / self.spacing**2
        return GridFunction(grid, vals, compact_support_radius=self.eps * np.sqrt(grid.dim))


def mollify(f: GridFunction, eps: float) -> GridFunction:
    """Discrete convolution with the standard bump kernel at scale eps.

    The input is extended by zero outside the box; the support radius grows
    by at most eps and the sup norm does not increase.
    """
    kernel = Mollifier.build(f.grid, eps)
    taps = kernel.taps
    K = (taps.shape[0] - 1) // 2
    if f.grid.dim == 1:
        out = np.convolve(f.values, taps, mode="same") if K > 0 else f.values.copy()
    else:
        n = f.grid.nodes_per_axis
        padded = np.pad(f.values, K)
        out = np.zeros_like(f.values)
        for i in range(2 * K + 1):
            for j in range(2 * K + 1):
                t = taps[i, j]
                if t == 0.0:
                    continue
                out += t * padded[i : i + n, j : j + n]
    csr = f.compact_support_radius
    if csr is not None:
        csr = min(csr + eps, f.grid.half_width * np.sqrt(f.grid.dim))
    return GridFunction(f.grid, out, csr)


# ---------------------------------------------------------------------------
# maximal function
# ---------------------------------------------------------------------------


def maximal_function(f: GridFunction) -> GridFunction:
    """Centered maximal function over the radius lattice {h, 2h, ..., R}.

    Ball averages are plain node means over the window clipped to the box
    (in 2d the windows are axis-aligned boxes), so constants are reproduced
    exactly and sublinearity holds node-wise.
    """
    a = np.abs(f.values)
    n = f.grid.nodes_per_axis
    kmax = (n - 1) // 2  # radius lattice stops at the box half-width
    idx = np.arange(n)
    if f.grid.dim == 1:
        P = np.concatenate([[0.0], np.cumsum(a)])
        best = np.zeros(n)
        for k in range(1, kmax + 1):
            lo = np.maximum(idx - k, 0)
            hi = np.minimum(idx + k, n - 1)
            avg = (P[hi + 1] - P[lo]) / (hi - lo + 1)
            np.maximum(best, avg, out=best)
        return GridFunction(f.grid, best)
    S = np.zeros((n + 1, n + 1))
    S[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    best = np.zeros((n, n))
    for k in range(1, kmax + 1):
        lo = np.maximum(idx - k, 0)
        hi = np.minimum(idx + k, n - 1)
        cnt = hi - lo + 1
        box = (
            S[np.ix_(hi + 1, hi + 1)]
            - S[np.ix_(lo, hi + 1)]
            - S[np.ix_(hi + 1, lo)]
            + S[np.ix_(lo, lo)]
        )
        avg = box / np.outer(cnt, cnt)
        np.maximum(best, avg, out=best)
    return GridFunction(f.grid, best)


# ---------------------------------------------------------------------------
# shifted sampling and difference quotients
# ---------------------------------------------------------------------------


def _sample_shifted(f: GridFunction, delta: np.ndarray) -> np.ndarray:
    """Linear interpolation of f at (node - delta), zero outside the box."""
    g = f.grid
    ax = g.axis()
    if g.dim == 1:
        xq = ax - delta[0]
        return np.interp(xq, ax, f.values, left=0.0, right=0.0)
    h, R, n = g.spacing, g.half_width, g.nodes_per_axis
    X, Y = g.mesh()
    out_vals = np.zeros(g.shape)
    gx = (X - delta[0] + R) / h
    gy = (Y - delta[1] + R) / h
    inside = (gx >= 0) & (gx <= n - 1) & (gy >= 0) & (gy <= n - 1)
    gx = np.clip(gx, 0, n - 1)
    gy = np.clip(gy, 0, n - 1)
    i0 = np.clip(np.floor(gx).astype(int), 0, n - 2)
    j0 = np.clip(np.floor(gy).astype(int), 0, n - 2)
    fx = gx - i0
    fy = gy - j0
    v = f.values
    interp = (
        v[i0, j0] * (1 - fx) * (1 - fy)
        + v[i0 + 1, j0] * fx * (1 - fy)
        + v[i0, j0 + 1] * (1 - fx) * fy
        + v[i0 + 1, j0 + 1] * fx * fy
    )
    out_vals[inside] = interp[inside]
    return out_vals


def difference_quotient(f: GridFunction, z, eps: float) -> GridFunction:
    """(f(x - eps*z) - f(x)) / eps with linear off-node interpolation.

    z must lie in the closed unit ball; f is treated as zero outside the box.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (f.grid.dim,):
        raise ValueError(f"direction must have {f.grid.dim} components")
    if np.linalg.norm(z) > 1.0 + 1e-12:
        raise ValueError("direction must lie in the closed unit ball")
    shifted = _sample_shifted(f, eps * z)
    csr = f.compact_support_radius
    if csr is not None:
        csr = min(csr + eps, f.grid.half_width * np.sqrt(f.grid.dim))
    return GridFunction(f.grid, (shifted - f.values) / eps, csr)


def truncate(f: GridFunction, level: float) -> GridFunction:
    """Clamp node values to [-level, level]."""
    if level <= 0:
        raise ValueError("truncation level must be positive")
    return GridFunction(
        f.grid, np.clip(f.values, -level, level), f.compact_support_radius
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_grid_function_csv(f: GridFunction, path: str | Path) -> None:
    g = f.grid
    with open(path, "w", newline="") as fh:
        if g.dim == 1:
            fh.write("x,value\n")
            for x, v in zip(g.axis(), f.values):
                fh.write(f"{x:.12g},{v:.12g}\n")
        else:
            fh.write("x,y,value\n")
            ax = g.axis()
            for i, x in enumerate(ax):
                for j, y in enumerate(ax):
                    fh.write(f"{x:.12g},{y:.12g},{f.values[i, j]:.12g}\n")


def save_grid_function_binary(f: GridFunction, path: str | Path) -> None:
    """Row-major float64 dump prefixed with a one-line JSON header."""
    header = {
        "dim": f.grid.dim,
        "n": f.grid.nodes_per_axis,
        "R": f.grid.half_width,
    }
    if f.compact_support_radius is not None:
        header["support_radius"] = f.compact_support_radius
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_grid_function_binary(path: str | Path) -> GridFunction:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        grid = Grid(int(header["dim"]), float(header["R"]), int(header["n"]))
        raw = fh.read()
    vals = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).copy()
    return GridFunction(grid, vals, header.get("support_radius"))
