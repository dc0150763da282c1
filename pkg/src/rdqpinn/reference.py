"""Ground-truth solver: method of lines + adaptive Dormand-Prince RK5(4).

The spatial operator is the second-order central-difference Laplacian with
periodic wraparound on a uniform grid (1D or 2D); the coupled fields are
integrated jointly as one flat state vector. Steps are shortened to land on
snapshot times exactly, so snapshots are never interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IntegrationError
from .physics import InitialCondition, RDParams

# Dormand-Prince RK5(4)7M tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])

MAX_GROWTH = 5.0
MIN_SHRINK = 0.2
SAFETY = 0.9


def rk45_step(f, state: np.ndarray, t: float, h: float
              ) -> tuple[np.ndarray, np.ndarray]:
    """One embedded 5(4) step: returns (5th-order state, error estimate)."""
    if h <= 0:
        raise ConfigurationError("step size must be positive")
    k = []
    for i in range(7):
        y_i = state if i == 0 else state + h * sum(
            a * k_j for a, k_j in zip(_A[i], k))
        k_i = np.asarray(f(t + _C[i] * h, y_i), dtype=np.float64)
        if not np.all(np.isfinite(k_i)):
            raise IntegrationError(
                f"non-finite derivative at t={t + _C[i] * h:.6g}, "
                f"|state|={np.linalg.norm(y_i):.6g}")
        k.append(k_i)
    y5 = state + h * sum(b * k_i for b, k_i in zip(_B5, k))
    y4 = state + h * sum(b * k_i for b, k_i in zip(_B4, k))
    return y5, y5 - y4


def error_norm(err: np.ndarray, y: np.ndarray, rtol: float, atol: float
               ) -> float:
    """RMS of componentwise error over atol + rtol*|y|."""
    scale = atol + rtol * np.abs(y)
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def adapt_step(err_norm_value: float, h: float) -> tuple[bool, float]:
    """Accept if the scaled error norm is <= 1; propose the next step size."""
    if h <= 0:
        raise ConfigurationError("step size must be positive")
    if err_norm_value == 0.0:
        return True, h * MAX_GROWTH
    factor = SAFETY * err_norm_value ** (-0.2)
    factor = min(MAX_GROWTH, max(MIN_SHRINK, factor))
    return err_norm_value <= 1.0, h * factor


def integrate(f, y0: np.ndarray, t0: float, t_end: float, rtol: float,
              atol: float, h0: float | None = None, h_min: float = 1e-14,
              stats: dict | None = None) -> np.ndarray:
    """Integrate y' = f(t, y) from t0 to t_end, landing on t_end exactly."""
    y = np.asarray(y0, dtype=np.float64).copy()
    t = t0
    if t_end <= t0:
        return y
    h = (t_end - t0) / 100.0 if h0 is None else h0
    while t < t_end:
        h = min(h, t_end - t)
        if h < h_min:
            raise IntegrationError(f"step underflow (h={h:.3g}) at t={t:.6g}")
        y_new, err = rk45_step(f, y, t, h)
        norm = error_norm(err, y, rtol, atol)
        accept, h_next = adapt_step(norm, h)
        if stats is not None:
            stats["steps"] = stats.get("steps", 0) + 1
            if not accept:
                stats["rejected"] = stats.get("rejected", 0) + 1
        if accept:
            t += h
            y = y_new
        h = h_next
    return y


@dataclass
class GridSolution:
    """Fields on a periodic uniform grid at a sequence of snapshot times."""

    x: np.ndarray
    times: np.ndarray
    c_a: np.ndarray              # (T, nx) or (T, nx, ny)
    c_s: np.ndarray
    y: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return 1 if self.y is None else 2

    def grid_points(self, t: float) -> np.ndarray:
        """Space-time coordinates of every node at time t, flattened."""
        if self.dim == 1:
            return np.stack([self.x, np.full(self.x.size, t)], axis=1)
        xm, ym = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([xm.ravel(), ym.ravel(),
                         np.full(xm.size, t)], axis=1)


def periodic_laplacian(field: np.ndarray, steps: tuple[float, ...]) -> np.ndarray:
    """Central second difference with wraparound on every axis."""
    out = np.zeros_like(field)
    for axis, dx in enumerate(steps):
        out += (np.roll(field, -1, axis=axis) - 2.0 * field
                + np.roll(field, 1, axis=axis)) / dx**2
    return out


def make_grid(bounds, n_nodes) -> tuple[list[np.ndarray], tuple[float, ...]]:
    """Periodic grid axes: n nodes from lo, excluding the duplicated hi face."""
    axes, steps = [], []
    for (lo, hi), n in zip(bounds, n_nodes):
        n = int(n)
        if n < 8:
            raise ConfigurationError("reference grid needs >= 8 nodes per axis")
        dx = (hi - lo) / n
        axes.append(lo + dx * np.arange(n))
        steps.append(dx)
    return axes, tuple(steps)


def solve_reference(bounds, n_nodes, beta: RDParams, ic: InitialCondition,
                    snapshot_times, rtol: float = 1e-8, atol: float = 1e-10,
                    sources=None) -> GridSolution:
    """Integrate the RD system and record the fields at the snapshot times."""
    bounds = [tuple(map(float, b)) for b in bounds]
    if isinstance(n_nodes, int):
        n_nodes = (n_nodes,) * len(bounds)
    axes, steps = make_grid(bounds, n_nodes)
    shape = tuple(len(ax) for ax in axes)
    if len(bounds) == 1:
        pts = axes[0][:, None]
    else:
        xm, ym = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([xm.ravel(), ym.ravel()], axis=1)
    c_a0, c_s0 = ic.values(pts, beta)
    c_a0 = c_a0.reshape(shape)
    c_s0 = c_s0.reshape(shape)
    n_field = c_a0.size

    def rhs(t, y):
        a = y[:n_field].reshape(shape)
        s = y[n_field:].reshape(shape)
        reaction = beta.kappa1 * a * a * s
        da = beta.d_a * periodic_laplacian(a, steps) + reaction - beta.kappa2 * a
        ds = beta.d_s * periodic_laplacian(s, steps) - reaction + beta.kappa3
        if sources is not None:
            q_a, q_s = sources
            if q_a is not None:
                da = da + q_a(pts, t).reshape(shape)
            if q_s is not None:
                ds = ds + q_s(pts, t).reshape(shape)
        return np.concatenate([da.ravel(), ds.ravel()])

    times = np.asarray(sorted(float(t) for t in snapshot_times))
    if times[0] < 0:
        raise ConfigurationError("snapshot times must be >= 0")
    stats: dict = {"steps": 0, "rejected": 0}
    y = np.concatenate([c_a0.ravel(), c_s0.ravel()])
    snaps_a, snaps_s = [], []
    t_now = 0.0
    for t_snap in times:
        if t_snap > t_now:
            y = integrate(rhs, y, t_now, t_snap, rtol, atol, stats=stats)
            t_now = t_snap
        snaps_a.append(y[:n_field].reshape(shape).copy())
        snaps_s.append(y[n_field:].reshape(shape).copy())
    meta = {"beta": beta, "ic_kind": ic.kind, "rtol": rtol, "atol": atol,
            "solver": "dormand-prince-rk45", **stats}
    return GridSolution(
        x=axes[0], times=times, c_a=np.stack(snaps_a), c_s=np.stack(snaps_s),
        y=axes[1] if len(axes) == 2 else None, metadata=meta)
