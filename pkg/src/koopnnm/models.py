"""Benchmark systems and an analytic family of invariant manifolds."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ContractError
from .polyfield import PolynomialVectorField


@dataclass(frozen=True)
class TwoDofParams:
    """Two masses, each grounded by a spring and a damper, coupled by a
    spring ``k_b`` and a damper ``c``; a cubic spring acts on mass 1."""

    m1: float = 1.0
    m2: float = 1.0
    c: float = 0.05
    k_a: float = 1.0
    k_b: float = 4.3
    k_nl: float = 0.5

    def __post_init__(self):
        if self.m1 <= 0 or self.m2 <= 0:
            raise ContractError("masses must be positive")
        if self.k_a <= 0:
            raise ContractError("k_a must be positive")
        if self.c < 0 or self.k_nl < 0:
            raise ContractError("c and k_nl must be non-negative")


def build_2dof_cubic(p: TwoDofParams = TwoDofParams()) -> PolynomialVectorField:
    """First-order form on the state ``(x1, x2, y1, y2)``, ``y = dx/dt``."""
    terms = [(0, (0, 0, 1, 0), 1.0), (1, (0, 0, 0, 1), 1.0)]
    for row, m, me, other in ((2, p.m1, 0, 1), (3, p.m2, 1, 0)):
        pos = [0, 0, 0, 0]
        pos[me] = 1
        neigh = [0, 0, 0, 0]
        neigh[other] = 1
        vel = [0, 0, 0, 0]
        vel[2 + me] = 1
        nvel = [0, 0, 0, 0]
        nvel[2 + other] = 1
        terms += [
            (row, pos, -(p.k_a + p.k_b) / m),
            (row, neigh, p.k_b / m),
            (row, vel, -2 * p.c / m),
            (row, nvel, p.c / m),
        ]
    if p.k_nl:
        terms.append((2, (3, 0, 0, 0), -p.k_nl / p.m1))
    return PolynomialVectorField.from_terms(4, terms)


def build_chain(
    masses: Sequence[float],
    springs: Sequence[float],
    dampers: Sequence[float],
    cubic: Sequence[float] = None,
) -> PolynomialVectorField:
    """Fixed-fixed chain of ``N`` masses and ``N + 1`` spring/damper links.

    Link ``i`` joins mass ``i - 1`` and mass ``i`` (mass ``-1`` and mass
    ``N`` are the walls).  ``cubic[i]`` adds a force ``cubic[i] * d**3`` on
    link ``i``, ``d`` being its elongation.  The state is positions
    followed by velocities.
    """
    N = len(masses)
    if N < 1:
        raise ContractError("at least one mass required")
    if len(springs) != N + 1 or len(dampers) != N + 1:
        raise ContractError(f"need {N + 1} springs and dampers for {N} masses")
    cubic = [0.0] * (N + 1) if cubic is None else list(cubic)
    if len(cubic) != N + 1:
        raise ContractError(f"need {N + 1} cubic coefficients")
    if any(m <= 0 for m in masses):
        raise ContractError("masses must be positive")
    n = 2 * N

    def unit(j):
        e = [0] * n
        e[j] = 1
        return tuple(e)

    terms = [(i, unit(N + i), 1.0) for i in range(N)]
    for link in range(N + 1):
        # elongation d = x_link - x_(link-1); tension T = k d + c d' + k3 d**3
        # pulls the left end by +T and the right end by -T
        ends = [(j, s) for j, s in ((link - 1, -1.0), (link, 1.0)) if 0 <= j < N]
        for mass, s_m in ends:
            row = N + mass
            g = -s_m / masses[mass]
            for j, s in ends:
                terms.append((row, unit(j), g * springs[link] * s))
                terms.append((row, unit(N + j), g * dampers[link] * s))
            if cubic[link]:
                for (a, sa), (b, sb), (c_, sc) in itertools.product(ends, repeat=3):
                    e = [0] * n
                    e[a] += 1
                    e[b] += 1
                    e[c_] += 1
                    terms.append((row, tuple(e), g * cubic[link] * sa * sb * sc))
    return PolynomialVectorField.from_terms(n, terms)


def build_1d_quadratic(a: float = 1.0, b: float = 1.0) -> PolynomialVectorField:
    """Scalar field ``dx/dt = -a x + b x**2``."""
    return PolynomialVectorField.from_terms(1, [(0, (1,), -a), (0, (2,), b)])


@dataclass(frozen=True)
class AppendixBFamily:
    """Invariant surfaces of a block-diagonal damped linear system.

    The system is ``diag(R1, R2)`` with ``R_i = [[-s_i, w_i], [-w_i, -s_i]]``.
    Requires ``sigma2 > sigma1 > 0``.
    """

    sigma1: float
    sigma2: float
    omega1: float
    omega2: float
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        if not self.sigma1 > 0:
            raise ContractError("sigma1 must be positive")
        if not self.sigma2 > self.sigma1:
            raise ContractError("sigma2 > sigma1 required")

    @property
    def matrix(self) -> np.ndarray:
        s1, s2, w1, w2 = self.sigma1, self.sigma2, self.omega1, self.omega2
        return np.array(
            [
                [-s1, w1, 0, 0],
                [-w1, -s1, 0, 0],
                [0, 0, -s2, w2],
                [0, 0, -w2, -s2],
            ]
        )

    def field(self) -> PolynomialVectorField:
        return PolynomialVectorField.from_matrix(self.matrix)

    def _polar(self, u, v):
        rho = u * u + v * v
        amp = rho ** (self.sigma2 / (2 * self.sigma1))
        ang = np.log(rho) * self.omega2 / (2 * self.sigma1)
        return rho, amp, ang

    def derivatives(self, u, v):
        """``(f_u, f_v)`` at ``(u, v) != (0, 0)``."""
        s1, s2, w2 = self.sigma1, self.sigma2, self.omega2
        rho, amp, ang = self._polar(u, v)
        c, s = np.cos(ang), np.sin(ang)
        c1, c2 = self.c1, self.c2
        base = rho ** (s2 / (2 * s1) - 1) / s1
        g3 = c * (c1 * s2 - c2 * w2) - s * (c2 * s2 + c1 * w2)
        g4 = c * (c2 * s2 + c1 * w2) + s * (c1 * s2 - c2 * w2)
        fu = np.array([1.0, 0.0, u * base * g3, u * base * g4])
        fv = np.array([0.0, 1.0, v * base * g3, v * base * g4])
        return fu, fv

    @classmethod
    def through_point(cls, sigma1, sigma2, omega1, omega2, x0):
        """Family member whose surface contains ``x0`` (needs ``x0[:2] != 0``)."""
        x0 = np.asarray(x0, dtype=float)
        rho_inv = 1.0 / (x0[0] ** 2 + x0[1] ** 2)
        amp = rho_inv ** (sigma2 / (2 * sigma1))
        ang = omega2 * np.log(rho_inv) / (2 * sigma1)
        c, s = np.cos(ang), np.sin(ang)
        c1 = x0[2] * amp * c - x0[3] * amp * s
        c2 = x0[2] * amp * s + x0[3] * amp * c
        return cls(sigma1, sigma2, omega1, omega2, float(c1), float(c2))


def appendix_b_point(fam: AppendixBFamily, u: float, v: float) -> np.ndarray:
    """Point ``f(u, v)`` of the family surface; the origin at ``(0, 0)``."""
    if u == 0 and v == 0:
        return np.zeros(4)
    _, amp, ang = fam._polar(u, v)
    c, s = np.cos(ang), np.sin(ang)
    return np.array(
        [u, v, amp * (c * fam.c1 - s * fam.c2), amp * (s * fam.c1 + c * fam.c2)]
    )


def appendix_b_invariance_residual(fam: AppendixBFamily, u: float, v: float) -> float:
    """``|A f - (-s1 u + w1 v) f_u - (-w1 u - s1 v) f_v|``."""
    if u == 0 and v == 0:
        raise ContractError("residual undefined at (0, 0)")
    f = appendix_b_point(fam, u, v)
    fu, fv = fam.derivatives(u, v)
    s1, w1 = fam.sigma1, fam.omega1
    r = fam.matrix @ f - (-s1 * u + w1 * v) * fu - (-w1 * u - s1 * v) * fv
    return float(np.linalg.norm(r))
