"""Two-species reaction-diffusion residuals, collocation, and the loss.

The governing system couples an autocatalytic activator A and a substrate S:

    dc_A/dt = D_A lap(c_A) + k1 c_A^2 c_S - k2 c_A + q_A
    dc_S/dt = D_S lap(c_S) - k1 c_A^2 c_S + k3 + q_S

Residuals are the left-minus-right form; the homogeneous steady state
c_A* = k3/k2, c_S* = k2^2/(k1 k3) zeroes both reaction terms and is used as a
conservation oracle throughout the tests.

The loss sums squared residuals over interior collocation points, squared
periodic mismatches over paired boundary points, and squared initial-condition
errors, combined with per-segment weights. Sums are the default reduction; a
mean reduction is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class RDParams:
    """Physical parameters: diffusivities and reaction rates.

    Physical runs use strictly positive values (enforced at the config
    layer); zero rates are permitted here so degenerate oracles exist
    (pure diffusion, mass balance with frozen reactions).
    """

    d_a: float = 1e-5
    d_s: float = 2e-3
    kappa1: float = 1.0
    kappa2: float = 1.0
    kappa3: float = 1e-3

    def __post_init__(self):
        for name in ("d_a", "d_s", "kappa1", "kappa2", "kappa3"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")

    def validate_physical(self) -> "RDParams":
        for name in ("d_a", "d_s", "kappa1", "kappa2", "kappa3"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0 for physical runs")
        return self

    def steady_state(self) -> tuple[float, float]:
        if min(self.kappa1, self.kappa2, self.kappa3) <= 0:
            raise ConfigurationError(
                "homogeneous steady state needs strictly positive rates")
        c_a = self.kappa3 / self.kappa2
        return c_a, self.kappa2 / (self.kappa1 * c_a)


@dataclass
class InitialCondition:
    """Smooth initial fields; evaluated per spatial point.

    Kinds: "double_bump" (1D activator baseline + two Gaussians),
    "gaussian" (2D activator bump at the origin), "steady_state"
    (homogeneous, taken from the RD parameters), "random" (smooth random
    Fourier perturbation of the baseline), and "custom" (callables).
    """

    kind: str
    baseline: float = 0.1
    amplitude: float = 0.5
    width: float = 0.15
    centers: tuple = (-0.4, 0.4)
    substrate: float = 1.0
    seed: int = 0
    custom_a: "object" = None
    custom_s: "object" = None

    KINDS = ("double_bump", "gaussian", "steady_state", "random", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown initial condition kind {self.kind!r}")
        if self.kind == "custom" and (self.custom_a is None or self.custom_s is None):
            raise ConfigurationError("custom initial condition needs both callables")

    def values(self, xs: np.ndarray, beta: RDParams
               ) -> tuple[np.ndarray, np.ndarray]:
        """(c_A, c_S) at spatial points xs of shape (P, d_spatial)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        p = len(xs)
        if self.kind == "steady_state":
            c_a, c_s = beta.steady_state()
            return np.full(p, c_a), np.full(p, c_s)
        if self.kind == "custom":
            return (np.asarray(self.custom_a(xs), dtype=np.float64),
                    np.asarray(self.custom_s(xs), dtype=np.float64))
        if self.kind == "double_bump":
            x = xs[:, 0]
            c_a = np.full(p, self.baseline)
            for c in self.centers:
                c_a = c_a + self.amplitude * np.exp(
                    -((x - c) ** 2) / (2.0 * self.width**2))
            return c_a, np.full(p, self.substrate)
        if self.kind == "gaussian":
            r2 = (xs**2).sum(axis=1)
            c_a = self.baseline + self.amplitude * np.exp(-r2 / (2.0 * self.width**2))
            return c_a, np.full(p, self.substrate)
        # random: baseline plus a few smooth periodic modes, seeded
        rng = np.random.default_rng(self.seed)
        c_a = np.full(p, self.baseline)
        for _ in range(3):
            k = rng.integers(1, 4, size=xs.shape[1])
            phase = rng.uniform(0, 2 * np.pi)
            amp = self.amplitude * rng.uniform(0.2, 1.0)
            c_a = c_a + amp * np.cos(np.pi * xs @ k + phase)
        return np.clip(c_a, 0.01, None), np.full(p, self.substrate)


@dataclass
class BoundaryPair:
    """Periodic face pair: rows of ``lo`` and ``hi`` match at equal times."""

    lo: np.ndarray  # (Nb, C) full space-time coords on the low face
    hi: np.ndarray  # (Nb, C) partner points on the high face

    def __post_init__(self):
        if self.lo.shape != self.hi.shape:
            raise ConfigurationError("boundary pair shape mismatch")


@dataclass
class CollocationSet:
    """Interior, paired-boundary, and initial point sets with loss weights."""

    interior: np.ndarray               # (P, C) with time last
    boundary: list[BoundaryPair] = field(default_factory=list)
    initial: np.ndarray | None = None  # (Ni, C) with t = 0
    lambda_bc: tuple[float, ...] = ()
    lambda_ic: float = 1.0

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=np.float64)
        if self.interior.ndim != 2 or len(self.interior) == 0:
            raise ConfigurationError("interior collocation set must be nonempty")
        if not self.lambda_bc:
            self.lambda_bc = (1.0,) * len(self.boundary)
        if len(self.lambda_bc) != len(self.boundary):
            raise ConfigurationError("one BC weight per boundary segment")
        if any(w < 0 for w in self.lambda_bc) or self.lambda_ic < 0:
            raise ConfigurationError("loss weights must be >= 0")


@dataclass
class LossBreakdown:
    """Loss components; ``total`` is exactly l_pde + sum(w*l_bc) + w_ic*l_ic."""

    l_pde: float
    l_bc: tuple[float, ...]
    l_ic: float
    total: float
    l_a: float
    l_s: float


def residuals(fields: dict, beta: RDParams, sources=(None, None)
              ) -> tuple[np.ndarray, np.ndarray]:
    """PDE residuals from field values and derivatives.

    ``fields`` holds arrays c_a, c_s, dt_a, dt_s, lap_a, lap_s; sources are
    optional arrays aligned with them.
    """
    c_a, c_s = fields["c_a"], fields["c_s"]
    q_a = 0.0 if sources[0] is None else sources[0]
    q_s = 0.0 if sources[1] is None else sources[1]
    reaction = beta.kappa1 * c_a**2 * c_s
    r_a = fields["dt_a"] - beta.d_a * fields["lap_a"] - reaction \
        + beta.kappa2 * c_a - q_a
    r_s = fields["dt_s"] - beta.d_s * fields["lap_s"] + reaction \
        - beta.kappa3 - q_s
    return r_a, r_s


@dataclass
class ResidualSensitivities:
    """Algebraic partials of the residuals plus linear-channel coefficients.

    The reaction partials differentiate only the pointwise reaction terms;
    the time-derivative channel carries coefficient 1 and the Laplacian
    channel -D_i for species i, so callers can assemble the full chain.
    """

    dra_dca: np.ndarray
    dra_dcs: np.ndarray
    drs_dca: np.ndarray
    drs_dcs: np.ndarray
    dt_coeff: tuple[float, float] = (1.0, 1.0)
    lap_coeff: tuple[float, float] = (0.0, 0.0)


def residual_sensitivities(c_a: np.ndarray, c_s: np.ndarray, beta: RDParams
                           ) -> ResidualSensitivities:
    c_a = np.asarray(c_a, dtype=np.float64)
    c_s = np.asarray(c_s, dtype=np.float64)
    cross = 2.0 * beta.kappa1 * c_a * c_s
    sq = beta.kappa1 * c_a**2
    return ResidualSensitivities(
        dra_dca=-cross + beta.kappa2,
        dra_dcs=-sq,
        drs_dca=cross,
        drs_dcs=sq,
        dt_coeff=(1.0, 1.0),
        lap_coeff=(-beta.d_a, -beta.d_s),
    )


def pde_cotangents(fields: dict, beta: RDParams, sources=(None, None),
                   weight: float = 1.0):
    """Per-point channel weights of d(L_PDE)/d(model output channels).

    With L_PDE = weight * sum(R_A^2 + R_S^2), returns arrays (w_val, w_t,
    w_lap) of shape (P, 2) such that dL/d(theta) = sum_p sum_m
    w_val[p,m] d c_m/d theta + w_t[p,m] d(dc_m/dt)/d theta
    + w_lap[p,m] d(lap c_m)/d theta. Also returns the residuals.
    """
    r_a, r_s = residuals(fields, beta, sources)
    sens = residual_sensitivities(fields["c_a"], fields["c_s"], beta)
    u_a = 2.0 * weight * r_a
    u_s = 2.0 * weight * r_s
    w_val = np.stack([u_a * sens.dra_dca + u_s * sens.drs_dca,
                      u_a * sens.dra_dcs + u_s * sens.drs_dcs], axis=1)
    w_t = np.stack([u_a, u_s], axis=1)
    w_lap = np.stack([-beta.d_a * u_a, -beta.d_s * u_s], axis=1)
    return (r_a, r_s), w_val, w_t, w_lap


def _evaluate_sources(sources, points):
    if sources is None:
        return (None, None)
    q_a, q_s = sources
    if callable(q_a):
        q_a = q_a(points)
    if callable(q_s):
        q_s = q_s(points)
    return (q_a, q_s)


def total_loss(model, colloc: CollocationSet, beta: RDParams,
               ic: InitialCondition | None, sources=None,
               reduction: str = "sum") -> LossBreakdown:
    """Physics-informed loss. ``model`` must provide predict() and pde_terms().

    ``reduction`` "sum" matches the defining equations; "mean" divides each
    component by its point count.
    """
    if reduction not in ("sum", "mean"):
        raise ConfigurationError(f"unknown reduction {reduction!r}")

    terms = model.pde_terms(colloc.interior)
    q = _evaluate_sources(sources, colloc.interior)
    r_a, r_s = residuals(terms, beta, q)
    scale = 1.0 / len(r_a) if reduction == "mean" else 1.0
    pde_a = float(np.sum(r_a**2)) * scale
    pde_s = float(np.sum(r_s**2)) * scale

    bc, bc_a, bc_s = [], [], []
    for pair in colloc.boundary:
        lo_a, lo_s = model.predict(pair.lo)
        hi_a, hi_s = model.predict(pair.hi)
        s = 1.0 / len(lo_a) if reduction == "mean" else 1.0
        seg_a = float(np.sum((lo_a - hi_a) ** 2)) * s
        seg_s = float(np.sum((lo_s - hi_s) ** 2)) * s
        bc_a.append(seg_a)
        bc_s.append(seg_s)
        bc.append(seg_a + seg_s)

    ic_a = ic_s = 0.0
    if colloc.initial is not None and len(colloc.initial):
        if ic is None:
            raise ConfigurationError("initial points given but no initial condition")
        pred_a, pred_s = model.predict(colloc.initial)
        tgt_a, tgt_s = ic.values(colloc.initial[:, :-1], beta)
        s = 1.0 / len(pred_a) if reduction == "mean" else 1.0
        ic_a = float(np.sum((pred_a - tgt_a) ** 2)) * s
        ic_s = float(np.sum((pred_s - tgt_s) ** 2)) * s

    l_pde = pde_a + pde_s
    l_ic = ic_a + ic_s
    total = l_pde + sum(w * seg for w, seg in zip(colloc.lambda_bc, bc)) \
        + colloc.lambda_ic * l_ic
    l_a = pde_a + sum(w * s_ for w, s_ in zip(colloc.lambda_bc, bc_a)) \
        + colloc.lambda_ic * ic_a
    l_s = pde_s + sum(w * s_ for w, s_ in zip(colloc.lambda_bc, bc_s)) \
        + colloc.lambda_ic * ic_s
    return LossBreakdown(l_pde, tuple(bc), l_ic, total, l_a, l_s)


# ---------------------------------------------------------------------------
# Collocation sampling
# ---------------------------------------------------------------------------


def _lhs(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Latin hypercube in [0,1)^d: one sample per stratum per dimension."""
    out = np.empty((n, d))
    for j in range(d):
        out[:, j] = (rng.permutation(n) + rng.uniform(size=n)) / n
    return out


def sample_collocation(bounds, t_max: float, counts: dict, seed: int = 0,
                       mode: str = "grid", lambda_bc=None,
                       lambda_ic: float = 1.0) -> CollocationSet:
    """Deterministic collocation over a periodic box cross (0, t_max].

    ``bounds`` is a list of (lo, hi) per spatial dimension. ``counts`` holds
    "interior" (per-axis grid shape, time last), "boundary" (per face pair:
    times in 1D, transverse-by-time grid size in 2D), and "initial" (spatial
    grid size). Boundary points are paired across periodic faces at identical
    times; interior time samples lie in (0, t_max].
    """
    if mode not in ("grid", "lhs"):
        raise ConfigurationError(f"unknown sampling mode {mode!r}")
    dim = len(bounds)
    if dim not in (1, 2):
        raise ConfigurationError("only 1D and 2D domains are supported")
    shape = tuple(int(n) for n in counts["interior"])
    n_b = int(counts["boundary"])
    n_i = int(counts["initial"])
    if min(shape) < 1 or n_b < 1 or n_i < 1:
        raise ConfigurationError("collocation counts must be positive")
    rng = np.random.default_rng(seed)

    if mode == "grid":
        axes = [lo + (hi - lo) * (np.arange(n) + 0.5) / n
                for (lo, hi), n in zip(bounds, shape[:-1])]
        t_ax = t_max * (np.arange(shape[-1]) + 1.0) / shape[-1]
        mesh = np.meshgrid(*axes, t_ax, indexing="ij")
        interior = np.stack([m.ravel() for m in mesh], axis=1)
    else:
        u = _lhs(rng, int(np.prod(shape)), dim + 1)
        cols = [lo + (hi - lo) * u[:, i] for i, (lo, hi) in enumerate(bounds)]
        eps = np.finfo(float).tiny
        cols.append(t_max * np.clip(u[:, dim], eps, 1.0))
        interior = np.stack(cols, axis=1)

    boundary = []
    if mode == "grid":
        t_b = t_max * (np.arange(n_b) + 1.0) / n_b
    else:
        t_b = t_max * np.sort(rng.uniform(size=n_b))
    for axis, (lo, hi) in enumerate(bounds):
        if dim == 1:
            lo_pts = np.stack([np.full(n_b, lo), t_b], axis=1)
            hi_pts = np.stack([np.full(n_b, hi), t_b], axis=1)
        else:
            other = 1 - axis
            o_lo, o_hi = bounds[other]
            if mode == "grid":
                o_ax = o_lo + (o_hi - o_lo) * (np.arange(n_b) + 0.5) / n_b
            else:
                o_ax = o_lo + (o_hi - o_lo) * rng.uniform(size=n_b)
            om, tm = np.meshgrid(o_ax, t_b, indexing="ij")
            cols_lo = [None, None]
            cols_hi = [None, None]
            cols_lo[axis] = np.full(om.size, lo)
            cols_hi[axis] = np.full(om.size, hi)
            cols_lo[other] = om.ravel()
            cols_hi[other] = om.ravel()
            lo_pts = np.stack(cols_lo + [tm.ravel()], axis=1)
            hi_pts = np.stack(cols_hi + [tm.ravel()], axis=1)
        boundary.append(BoundaryPair(lo_pts, hi_pts))

    if dim == 1:
        (lo, hi), = bounds
        x0 = lo + (hi - lo) * (np.arange(n_i) + 0.5) / n_i
        initial = np.stack([x0, np.zeros(n_i)], axis=1)
    else:
        axes0 = [lo + (hi - lo) * (np.arange(n_i) + 0.5) / n_i
                 for lo, hi in bounds]
        xm, ym = np.meshgrid(*axes0, indexing="ij")
        initial = np.stack([xm.ravel(), ym.ravel(),
                            np.zeros(xm.size)], axis=1)

    if lambda_bc is None:
        lambda_bc = (1.0,) * len(boundary)
    return CollocationSet(interior, boundary, initial,
                          tuple(float(w) for w in lambda_bc), float(lambda_ic))
