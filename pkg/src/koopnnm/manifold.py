"""Evaluation and checks of the parametrized invariant manifold.

On the real slice ``xi2 = conj(xi1)`` the manifold is

    psi(u, v) = Re sum v_{k1,k2} xi^k1 conj(xi)^k2,     xi = u + i v.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import (
    IntegratorConfig,
    default_horizon,
    integrate,
    nmse,
    spectral_trajectory,
    uniform_times,
)
from .exceptions import (
    ContractError,
    DivergentExpansionError,
    InternalConsistencyError,
    NotOnManifoldError,
    StiffnessError,
)
from .koopman import KoopmanModeTable
from .polyfield import PolynomialVectorField, eval_field

logger = logging.getLogger(__name__)

REALNESS_TOL = 1e-10
DOMINANCE_LIMIT = 10.0
BLOWUP_FACTOR = 100.0


@dataclass(frozen=True)
class ManifoldPoint:
    xi: complex
    uv: Tuple[float, float]
    state: np.ndarray


@dataclass(frozen=True)
class ManifoldMesh:
    """Polar samples ``xi = r exp(i theta)``, r-major order.

    ``uv`` is ``(P, 2)``, ``states`` is ``(P, n)``, ``pde_residual`` is
    ``(P,)`` with ``P = n_r * n_theta``.
    """

    radius: float
    grid: Tuple[int, int]
    uv: np.ndarray
    states: np.ndarray
    pde_residual: np.ndarray

    @property
    def xi(self):
        return self.uv[:, 0] + 1j * self.uv[:, 1]


def _powers(z, top):
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(z.shape + (top + 1,), dtype=complex)
    out[..., 0] = 1.0
    for k in range(1, top + 1):
        out[..., k] = out[..., k - 1] * z
    return out


_CHUNK = 2048


def _chunked(fn, xi1, xi2):
    xi1 = np.atleast_1d(np.asarray(xi1, dtype=complex))
    xi2 = np.atleast_1d(np.asarray(xi2, dtype=complex))
    if xi1.size <= _CHUNK:
        return fn(xi1, xi2)
    parts = [fn(xi1[i:i + _CHUNK], xi2[i:i + _CHUNK]) for i in range(0, xi1.size, _CHUNK)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)


def psi_complex(table: KoopmanModeTable, xi1, xi2):
    """``Psi(xi1, xi2)`` for independent complex arguments; shape ``(P, n)``."""
    K1, K2, V = table.stacked()

    def run(a, b):
        p1 = _powers(a, table.max_order)
        p2 = _powers(b, table.max_order)
        return (p1[:, K1] * p2[:, K2]) @ V

    return _chunked(run, xi1, xi2)


def psi_partials(table: KoopmanModeTable, xi1, xi2):
    """``(dPsi/dxi1, dPsi/dxi2)`` by termwise differentiation."""
    K1, K2, V = table.stacked()
    K1m, K2m = np.maximum(K1 - 1, 0), np.maximum(K2 - 1, 0)

    def run(a, b):
        p1 = _powers(a, table.max_order)
        p2 = _powers(b, table.max_order)
        d1 = (K1 * p1[:, K1m] * p2[:, K2]) @ V
        d2 = (K2 * p1[:, K1] * p2[:, K2m]) @ V
        return d1, d2

    return _chunked(run, xi1, xi2)


def _slice_args(table, xi):
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    return xi, (xi if table.is_real_mode else np.conj(xi))


def eval_states(table: KoopmanModeTable, xi) -> np.ndarray:
    """Vectorized ``psi`` on the real slice; shape ``(P, n)``.

    Raises InternalConsistencyError if the complex sum is not real.
    """
    xi1, xi2 = _slice_args(table, xi)
    z = psi_complex(table, xi1, xi2)
    state = z.real
    bound = REALNESS_TOL * (1.0 + np.linalg.norm(state, axis=1))
    resid = np.linalg.norm(z.imag, axis=1)
    bad = resid > bound
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InternalConsistencyError(
            f"imaginary residue {resid[i]:.3g} at xi={xi1[i]:.6g} exceeds {bound[i]:.3g}"
        )
    return state


def eval_psi(table: KoopmanModeTable, xi) -> ManifoldPoint:
    """Manifold point for a single ``xi`` (``xi2 = conj(xi)``)."""
    xi = complex(xi)
    state = eval_states(table, xi)[0]
    return ManifoldPoint(xi, (xi.real, xi.imag), state)


def psi_uv_jacobian(table: KoopmanModeTable, u, v):
    """``(psi_u, psi_v)`` on the real slice, each of shape ``(P, n)``."""
    xi1, xi2 = _slice_args(table, np.asarray(u) + 1j * np.asarray(v))
    d1, d2 = psi_partials(table, xi1, xi2)
    if table.is_real_mode:
        return (d1 + d2).real, np.zeros_like(d1.real)
    return (d1 + d2).real, (1j * (d1 - d2)).real


def pde_residual(
    field: PolynomialVectorField, table: KoopmanModeTable, xi, form: str = "complex"
):
    """Invariance-equation residual ``|f(psi) - dPsi . (lambda xi)|``.

    ``form="complex"`` uses ``dPsi/dxi1 lam xi + dPsi/dxi2 conj(lam xi)``;
    ``form="real"`` uses ``psi_u (s u - w v) + psi_v (w u + s v)`` with
    ``lam = s + i w``.  Returns a float for scalar ``xi`` and an array
    otherwise.
    """
    scalar = np.ndim(xi) == 0
    xi1, xi2 = _slice_args(table, xi)
    lam1, lam2 = table.lambdas
    if table.is_real_mode:
        xi1 = xi1.real.astype(complex)
        xi2 = xi1
    state = psi_complex(table, xi1, xi2).real
    lhs = eval_field(field, state)
    if form == "complex":
        d1, d2 = psi_partials(table, xi1, xi2)
        if table.is_real_mode:
            rhs = (d1[:, :] * (lam1 * xi1)[:, None]).real
        else:
            rhs = (d1 * (lam1 * xi1)[:, None] + d2 * (lam2 * xi2)[:, None]).real
    elif form == "real":
        u, v = xi1.real, xi1.imag
        s, w = lam1.real, lam1.imag
        pu, pv = psi_uv_jacobian(table, u, v)
        if table.is_real_mode:
            d1, _ = psi_partials(table, xi1, xi2)
            rhs = (d1 * (lam1 * xi1)[:, None]).real
        else:
            rhs = pu * (s * u - w * v)[:, None] + pv * (w * u + s * v)[:, None]
    else:
        raise ContractError(f"unknown residual form {form!r}")
    res = np.linalg.norm(lhs - rhs, axis=1)
    return float(res[0]) if scalar else res


def polar_grid(radius: float, n_r: int, n_theta: int) -> np.ndarray:
    r = np.linspace(0.0, radius, n_r)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    return (r[:, None] * np.exp(1j * theta)[None, :]).ravel()


def sample_mesh(
    table: KoopmanModeTable,
    field: PolynomialVectorField,
    radius: float,
    n_r: int,
    n_theta: int,
) -> ManifoldMesh:
    """Evaluate ``psi`` and the PDE residual on a polar grid."""
    if not radius >= 0 or n_r < 2 or n_theta < 4:
        raise ContractError("need radius >= 0, n_r >= 2, n_theta >= 4")
    xi = polar_grid(float(radius), int(n_r), int(n_theta))
    states = eval_states(table, xi)
    resid = pde_residual(field, table, xi)
    uv = np.column_stack([xi.real, xi.imag])
    return ManifoldMesh(float(radius), (int(n_r), int(n_theta)), uv, states, resid)


@dataclass(frozen=True)
class FoldReport:
    """Pairs of mesh points far apart in ``(u, v)`` whose projections nearly coincide."""

    coords: Tuple[int, int]
    pairs: np.ndarray
    max_uv_separation: float

    @property
    def folded(self) -> bool:
        return len(self.pairs) > 0


def detect_fold(
    mesh: ManifoldMesh,
    coords: Tuple[int, int] = (0, 2),
    separation: float = 0.1,
    closeness: float = 1e-3,
) -> FoldReport:
    """Nearest-neighbour scan for non-injectivity of a 2-D projection.

    A pair ``(p, q)`` is reported when ``|uv_p - uv_q| > separation * R``
    while the projected states differ by less than ``closeness * R``,
    ``R`` being the mesh radius.  The ``r = 0`` ring (all points at the
    origin) is skipped.
    """
    R = mesh.radius
    if R <= 0:
        return FoldReport(tuple(coords), np.zeros((0, 2), dtype=int), 0.0)
    keep = np.flatnonzero(np.hypot(mesh.uv[:, 0], mesh.uv[:, 1]) > 0)
    proj = mesh.states[keep][:, list(coords)]
    tree = cKDTree(proj)
    cand = tree.query_pairs(closeness * R, output_type="ndarray")
    if len(cand) == 0:
        return FoldReport(tuple(coords), np.zeros((0, 2), dtype=int), 0.0)
    duv = np.linalg.norm(mesh.uv[keep[cand[:, 0]]] - mesh.uv[keep[cand[:, 1]]], axis=1)
    sel = duv > separation * R
    pairs = keep[cand[sel]]
    order = np.lexsort((pairs[:, 1], pairs[:, 0])) if len(pairs) else []
    return FoldReport(
        tuple(coords), pairs[order], float(duv[sel].max()) if sel.any() else 0.0
    )


def _gauss_newton(table, x, uv, max_iter):
    u, v = uv
    res = eval_states(table, u + 1j * v)[0] - x
    cost = float(res @ res)
    for _ in range(max_iter):
        pu, pv = psi_uv_jacobian(table, u, v)
        J = np.column_stack([pu[0], pv[0]])
        step = np.linalg.lstsq(J, -res, rcond=None)[0]
        t = 1.0
        while t > 1e-6:
            un, vn = u + t * step[0], v + t * step[1]
            with np.errstate(over="ignore", invalid="ignore"):
                try:
                    rn = eval_states(table, un + 1j * vn)[0] - x
                except InternalConsistencyError:
                    rn = None
            if rn is not None and np.all(np.isfinite(rn)) and float(rn @ rn) < cost:
                break
            t /= 2
        else:
            break
        stalled = cost - float(rn @ rn) <= 1e-15 * cost
        u, v, res, cost = un, vn, rn, float(rn @ rn)
        if t * np.linalg.norm(step) < 1e-12 or stalled:
            break
    return (u, v), np.sqrt(cost)


def invert_point(
    table: KoopmanModeTable,
    x_target,
    guess: Optional[Tuple[float, float]] = None,
    rel_tol: float = 1e-6,
    max_iter: int = 100,
    seed_radius: Optional[float] = None,
    n_seeds: int = 8,
):
    """Least-squares ``(u, v)`` with ``psi(u, v)`` closest to ``x_target``.

    Without a ``guess`` the iteration starts from the mesh points nearest
    to the target on a coarse polar mesh.  Returns ``((u, v), residual)``.

    Raises
    ------
    NotOnManifoldError
        if the best residual exceeds ``rel_tol * |x_target|``.
    """
    x = np.asarray(x_target, dtype=float)
    if x.shape != (table.dimension,):
        raise ContractError(f"target has shape {x.shape}, expected ({table.dimension},)")
    xnorm = float(np.linalg.norm(x))
    if xnorm == 0.0:
        return (0.0, 0.0), 0.0
    if guess is not None:
        seeds = [tuple(float(g) for g in guess)]
    else:
        if seed_radius is None:
            # the linear part alone maps radius r to amplitude >= r * s_min
            pu, pv = psi_uv_jacobian(table, 0.0, 0.0)
            s_min = np.linalg.svd(np.column_stack([pu[0], pv[0]]), compute_uv=False)[-1]
            seed_radius = 2.0 * xnorm / s_min
        xi = polar_grid(seed_radius, 41, 72)[72 - 1:]
        with np.errstate(over="ignore", invalid="ignore"):
            z = psi_complex(table, *_slice_args(table, xi)).real
        d = np.linalg.norm(z - x, axis=1)
        d[~np.isfinite(d)] = np.inf
        idx = np.argsort(d, kind="stable")[:n_seeds]
        seeds = [(xi[i].real, xi[i].imag) for i in idx]
    best = None
    for s in seeds:
        uv, r = _gauss_newton(table, x, s, max_iter)
        if best is None or r < best[1]:
            best = (uv, r)
        if r <= rel_tol * xnorm * 1e-3:
            break
    uv, r = (float(best[0][0]), float(best[0][1])), float(best[1])
    if r > rel_tol * xnorm:
        raise NotOnManifoldError(
            f"closest manifold point misses the target by {r:.3g} "
            f"(> {rel_tol:g} * |x| = {rel_tol * xnorm:.3g}) at (u, v) = ({uv[0]:.6g}, {uv[1]:.6g})",
            uv=uv, residual=r,
        )
    return uv, r


def ray_nmse(
    table: KoopmanModeTable,
    field: PolynomialVectorField,
    xi: complex,
    times,
    cfg: IntegratorConfig,
) -> float:
    """NMSE of the spectral trajectory from ``xi`` against integration from ``psi(xi)``.

    Returns ``inf`` without integrating when the launch point is dominated
    by the nonlinear orders (``|psi| > DOMINANCE_LIMIT * |linear part|``):
    the series has clearly diverged there and integrating from a huge state
    of a polynomial field is needlessly slow.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            x0 = eval_psi(table, xi).state
        except InternalConsistencyError:
            return np.inf
        if not np.all(np.isfinite(x0)):
            return np.inf
        lin = eval_states(table.truncated(1), xi)[0]
        if np.linalg.norm(x0) > DOMINANCE_LIMIT * np.linalg.norm(lin):
            return np.inf
        est = spectral_trajectory(table, xi, times)
        bound = BLOWUP_FACTOR * max(1.0, float(np.max(np.abs(est.states))))
        try:
            ref = integrate(field, x0, times, cfg, max_norm=bound)
        except StiffnessError:
            return np.inf
        if not (np.all(np.isfinite(est.states)) and np.all(np.isfinite(ref.states))):
            return np.inf
        return nmse(est, ref)


def validation_nmse(table, field, radius, cfg, horizon=None, samples=1000, n_rays=8):
    """NMSE of each of ``n_rays`` equispaced rays launched at ``radius``."""
    horizon = default_horizon(table) if horizon is None else horizon
    times = uniform_times(horizon, samples)
    thetas = 2 * np.pi * np.arange(n_rays) / n_rays
    if table.is_real_mode:
        thetas = np.array([0.0, np.pi])
    return np.array(
        [ray_nmse(table, field, radius * np.exp(1j * th), times, cfg) for th in thetas]
    )


def validity_radius(
    table: KoopmanModeTable,
    field: PolynomialVectorField,
    cfg: IntegratorConfig = IntegratorConfig(),
    nmse_threshold: float = 1.0,
    horizon: Optional[float] = None,
    samples: int = 1000,
    r_min: float = 1e-3,
    r_cap: float = 10.0,
    rel_width: float = 1e-3,
    n_rays: int = 8,
) -> float:
    """Largest ``|xi|`` whose validation rays all stay below ``nmse_threshold``.

    Bisection between ``r_min`` and ``r_cap``; the cap is returned when it
    already passes.
    """
    if not nmse_threshold > 0:
        raise ContractError("nmse_threshold must be positive")

    def ok(r):
        worst = validation_nmse(table, field, r, cfg, horizon, samples, n_rays).max()
        logger.debug("radius %.6g: max NMSE %.4g", r, worst)
        return worst < nmse_threshold

    if not ok(r_min):
        raise DivergentExpansionError(
            f"NMSE threshold {nmse_threshold}% exceeded already at |xi| = {r_min:g}"
        )
    if ok(r_cap):
        return float(r_cap)
    lo, hi = r_min, r_cap
    while (hi - lo) > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return float(lo)
