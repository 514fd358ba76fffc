"""Reference integration, spectral-expansion trajectories and the NMSE metric."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import ContractError, DegenerateReferenceError, StiffnessError
from .koopman import KoopmanModeTable
from .polyfield import PolynomialVectorField, eval_field


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states)
        if times.ndim != 1 or states.ndim != 2 or states.shape[0] != times.size:
            raise ContractError(
                f"times {times.shape} and states {states.shape} do not match"
            )
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ContractError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __add__(self, other):
        if not np.array_equal(self.times, other.times):
            raise ContractError("time grids differ")
        return Trajectory(self.times, self.states + other.states)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.max_step > 0):
            raise ContractError("integrator tolerances and max_step must be positive")

    def refined(self, factor: float = 10.0) -> "IntegratorConfig":
        return IntegratorConfig(self.rel_tol / factor, self.abs_tol / factor, self.max_step)


def uniform_times(horizon: float, samples: int) -> np.ndarray:
    if not horizon > 0 or samples < 2:
        raise ContractError("horizon must be positive and samples >= 2")
    return np.linspace(0.0, float(horizon), int(samples))


def integrate(
    field: PolynomialVectorField,
    x0,
    times,
    cfg: IntegratorConfig = IntegratorConfig(),
    max_norm: float = np.inf,
) -> Trajectory:
    """Dormand-Prince 5(4) integration sampled on ``times`` via dense output.

    With a finite ``max_norm`` the run stops as soon as ``|x|`` exceeds it
    and :class:`StiffnessError` is raised.
    """
    times = np.asarray(times, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (field.dimension,):
        raise ContractError(f"x0 has shape {x0.shape}, expected ({field.dimension},)")
    if times.ndim != 1 or times.size < 1 or times[0] != 0:
        raise ContractError("times must be a 1-D array starting at 0")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ContractError("times must be strictly increasing")
    if times.size == 1 or not np.any(x0):
        return Trajectory(times, np.tile(x0, (times.size, 1)))

    events = None
    if np.isfinite(max_norm):

        def escape(t, x):
            return max_norm - np.linalg.norm(x)

        escape.terminal = True
        events = [escape]
    sol = solve_ivp(
        lambda t, x: eval_field(field, x),
        (0.0, times[-1]),
        x0,
        method="RK45",
        t_eval=times,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
        events=events,
    )
    if sol.status == 1:
        raise StiffnessError(f"|x| exceeded {max_norm:.3g} at t={sol.t[-1]:.6g}")
    if sol.status != 0:
        raise StiffnessError(f"integration failed at t={sol.t[-1]:.6g}: {sol.message}")
    return Trajectory(times, sol.y.T.copy())


def _exponents(table: KoopmanModeTable, orders=None):
    K1, K2, V = table.stacked()
    if orders is not None:
        keep = np.isin(K1 + K2, list(orders))
        K1, K2, V = K1[keep], K2[keep], V[keep]
    lam1, lam2 = table.lambdas
    return K1, K2, V, K1 * lam1 + K2 * lam2


def _series_states(table, xi0, times, orders=None):
    K1, K2, V, rates = _exponents(table, orders)
    xi0 = complex(xi0)
    xi2 = xi0 if table.is_real_mode else np.conj(xi0)
    top = table.max_order
    p1 = xi0 ** np.arange(top + 1)
    p2 = xi2 ** np.arange(top + 1)
    amps = (p1[K1] * p2[K2])[:, None] * V
    # per-sample exponentials; no recurrent multiplication over long horizons
    E = np.exp(np.outer(np.asarray(times, dtype=float), rates))
    return E @ amps


def spectral_trajectory(table: KoopmanModeTable, xi0, times) -> Trajectory:
    """``x(t) = Re sum v_k xi0^k1 conj(xi0)^k2 exp((k1 lam + k2 conj(lam)) t)``."""
    times = np.asarray(times, dtype=float)
    return Trajectory(times, _series_states(table, xi0, times).real)


def nmse(estimate: Trajectory, reference: Trajectory) -> float:
    """Normalized mean-square error in percent.

    ``100 / ((K+1) var) * sum_k |x_hat(k) - x(k)|^2`` with ``var`` the
    variance of all reference samples pooled over components.
    """
    if estimate.states.shape != reference.states.shape or not np.array_equal(
        estimate.times, reference.times
    ):
        raise ContractError("estimate and reference must share the time grid and shape")
    var = float(np.var(reference.states))
    if var == 0.0:
        raise DegenerateReferenceError("reference trajectory has zero variance")
    err = np.sum(np.abs(estimate.states - reference.states) ** 2)
    return float(100.0 * err / (reference.states.shape[0] * var))


def order_decomposition(
    table: KoopmanModeTable, xi0, times, orders: Sequence[int]
) -> List[Tuple[int, Trajectory]]:
    """Contribution of each homogeneous order ``k1 + k2 = h`` to the trajectory."""
    times = np.asarray(times, dtype=float)
    out = []
    for h in orders:
        h = int(h)
        if not 1 <= h <= table.max_order:
            raise ContractError(f"order {h} outside [1, {table.max_order}]")
        out.append((h, Trajectory(times, _series_states(table, xi0, times, [h]).real)))
    return out


def default_horizon(table: KoopmanModeTable, periods: float = 10.0) -> float:
    """``periods`` damped periods ``2 pi / Im(lambda)``; ``10/|lambda|`` if real."""
    w = abs(table.lam.imag)
    if w == 0:
        return periods / abs(table.lam)
    return periods * 2 * np.pi / w
