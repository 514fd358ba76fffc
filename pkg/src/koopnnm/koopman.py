"""Koopman modes of the identity observable on a two-index lattice.

For a chosen eigenvalue pair ``(lambda, conj(lambda))`` the state is
expanded as

    x = sum_{k1 + k2 >= 1} v_{k1,k2} s1^k1 s2^k2

where ``s1, s2`` are the Koopman eigenfunctions of the pair.  Matching
powers of ``(s1, s2)`` in ``f(x) = sum v_k s^k (k . lambda)`` gives, for
every ``k`` with ``|k| >= 2``,

    (k . lambda I - A) v_k = b_k

with ``b_k`` the ``s^k`` coefficient of the nonlinear part of ``f``
composed with the series truncated below order ``|k|``.  The system is
solved in the eigenbasis, where it is diagonal.

Bivariate series are stored by homogeneous order: slice ``h`` of a series
is an array of length ``h + 1`` whose entry ``i`` is the coefficient of
``s1^(h - i) s2^i``, matching the ``k1``-descending enumeration of
:func:`~koopnnm.polyfield.enumerate_pair_indices`.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .exceptions import ContractError, ResonanceError
from .polyfield import PolynomialVectorField, enumerate_pair_indices, jacobian_at_origin
from .spectral import SpectralDecomposition, check_resonance, default_resonance_tol

logger = logging.getLogger(__name__)

EIGENBASIS_COND_LIMIT = 1e6
MAX_ORDER = 100


class NearResonanceWarning(UserWarning):
    pass


@dataclass
class KoopmanModeTable:
    """Identity-observable Koopman modes ``v_{k1,k2}`` up to ``max_order``.

    Attributes
    ----------
    pair : tuple of int
        Eigen-indices of the pair; ``pair[0]`` has ``Im lambda > 0``.  For a
        single real eigenvalue both entries are equal and only ``k2 = 0``
        modes exist.
    lam : complex
        Eigenvalue of ``pair[0]``.
    order_slices : list of ndarray
        ``order_slices[h]`` has shape ``(h + 1, n)``; row ``i`` is
        ``v_{h-i, i}``.  Entry 0 is an empty placeholder.
    gauge : ndarray
        Scaling applied to the pair's eigenvectors relative to the default
        gauge of :func:`~koopnnm.spectral.decompose`.
    warnings : list of str
        Near-resonance notes.
    """

    pair: Tuple[int, int]
    lam: complex
    order_slices: List[np.ndarray]
    max_order: int
    gauge: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.order_slices[1].shape[1]

    @property
    def is_real_mode(self) -> bool:
        return self.pair[0] == self.pair[1]

    @property
    def lambdas(self) -> Tuple[complex, complex]:
        """Eigenvalues attached to ``s1`` and ``s2``."""
        if self.is_real_mode:
            return self.lam, self.lam
        return self.lam, np.conj(self.lam)

    @property
    def modes(self) -> Dict[Tuple[int, int], np.ndarray]:
        """Mapping ``(k1, k2) -> v_{k1,k2}`` in enumeration order."""
        out = {}
        for h in range(1, self.max_order + 1):
            for i, row in enumerate(self.order_slices[h]):
                if self.is_real_mode and i > 0:
                    continue
                out[(h - i, i)] = row
        return out

    def indices(self):
        if self.is_real_mode:
            return [(h, 0) for h in range(1, self.max_order + 1)]
        return enumerate_pair_indices(self.max_order)

    def __getitem__(self, k):
        k1, k2 = k
        h = k1 + k2
        if h < 1 or h > self.max_order or (self.is_real_mode and k2):
            raise KeyError(k)
        return self.order_slices[h][k2]

    def truncated(self, order: int) -> "KoopmanModeTable":
        """The same table cut at a lower order."""
        if not 1 <= order <= self.max_order:
            raise ContractError(f"order must be in [1, {self.max_order}]")
        return KoopmanModeTable(
            self.pair, self.lam, self.order_slices[: order + 1], order,
            self.gauge, list(self.warnings),
        )

    def stacked(self):
        """``(K1, K2, V)``: exponent arrays and an ``(M, n)`` mode matrix."""
        K1, K2, rows = [], [], []
        for h in range(1, self.max_order + 1):
            sl = self.order_slices[h]
            m = 1 if self.is_real_mode else h + 1
            K1.extend(range(h, h - m, -1))
            K2.extend(range(m))
            rows.append(sl[:m])
        return np.array(K1), np.array(K2), np.concatenate(rows, axis=0)


class _ProductTree:
    """Order-by-order slices of the products ``prod_i Psi_i^{j_i}``.

    Every nonlinear monomial is written as a sorted factor list, e.g.
    ``x0**2 * x2`` -> ``(0, 0, 2)``; prefixes are shared between monomials.
    The order-``h`` slice of a node of length ``d >= 2`` only involves
    slices of order ``< h`` of its parent and of ``Psi``, so the whole tree
    can be advanced before the order-``h`` modes are known.
    """

    def __init__(self, factor_lists, psi):
        self.psi = psi  # psi[i][h] -> slice of coordinate i
        nodes = set()
        for fl in factor_lists:
            for d in range(2, len(fl) + 1):
                nodes.add(fl[:d])
        # parents before children
        self.nodes = sorted(nodes, key=lambda t: (len(t), t))
        self.slices = {node: [None] for node in self.nodes}

    def series(self, node):
        if len(node) == 1:
            return self.psi[node[0]]
        return self.slices[node]

    def advance(self, h):
        for node in self.nodes:
            d = len(node)
            parent = self.series(node[:-1])
            last = self.psi[node[-1]]
            acc = np.zeros(h + 1, dtype=complex)
            if h >= d:
                for a in range(d - 1, h):
                    acc += np.convolve(parent[a], last[h - a])
            self.slices[node].append(acc)


def _factor_list(exponents):
    out = []
    for i, e in enumerate(exponents):
        out.extend([i] * e)
    return tuple(out)


def _check_pair(dec: SpectralDecomposition, pair):
    if isinstance(pair, (int, np.integer)):
        pair = (int(pair), int(pair))
    pair = tuple(int(p) for p in pair)
    if len(pair) != 2:
        raise ContractError(f"pair must hold two eigen-indices, got {pair}")
    a, b = pair
    n = dec.dimension
    if not (0 <= a < n and 0 <= b < n):
        raise ContractError(f"pair {pair} out of range for dimension {n}")
    lam = dec.eigenvalues
    if a == b:
        if lam[a].imag != 0:
            raise ContractError(
                f"single-index lattice needs a real eigenvalue, lambda_{a} = {lam[a]:.6g}"
            )
        return pair
    if tuple(sorted(pair)) not in {tuple(sorted(p)) for p in dec.conjugate_pairs}:
        raise ContractError(f"{pair} is not a listed conjugate pair")
    if lam[a].imag < 0:
        pair = (b, a)
    return pair


def _resonance_gate(dec, pair, max_order, tol, notes):
    if max_order < 2:
        return
    a, b = pair
    report = check_resonance(dec, max_order, tol=1e3 * tol, pair=(a, b))
    for k, j, gap in report.combinations:
        k1, k2 = k[a], (k[b] if a != b else 0)
        if gap < tol:
            raise ResonanceError(
                f"resonance: {k1}*lambda_{a} + {k2}*lambda_{b} = lambda_{j} "
                f"(gap {gap:.3g} < tol {tol:.3g}) at k=({k1},{k2}); "
                f"lambda_{j} = {dec.eigenvalues[j]:.6g}",
                index=(k1, k2), eigenvalue_index=j, gap=gap,
            )
        msg = (
            f"near resonance at k=({k1},{k2}) with lambda_{j}: gap {gap:.3g}"
        )
        notes.append(msg)
        warnings.warn(msg, NearResonanceWarning, stacklevel=3)


def _solve_order(dec, lam1, lam2, A, B, h, solver):
    """Solve ``(r_k I - A) v_k = b_k`` for all rows of ``B`` (order ``h``)."""
    m = B.shape[0]
    i = np.arange(m)
    r = (h - i) * lam1 + i * lam2
    if solver == "dense":
        n = A.shape[0]
        return np.stack([np.linalg.solve(r[q] * np.eye(n) - A, B[q]) for q in range(m)])
    C = B @ dec.left_eigenvectors.T  # eigen-coordinates of b
    Y = C / (r[:, None] - dec.eigenvalues[None, :])
    return Y @ dec.right_eigenvectors.T


def compute_identity_modes(
    field: PolynomialVectorField,
    dec: SpectralDecomposition,
    pair,
    max_order: int,
    resonance_tol: Optional[float] = None,
    solver: str = "auto",
) -> KoopmanModeTable:
    """Run the mode recurrence for one eigenvalue pair.

    Parameters
    ----------
    field : PolynomialVectorField
    dec : SpectralDecomposition
        Decomposition of ``jacobian_at_origin(field)``.
    pair : (int, int) or int
        A listed conjugate pair, or the index of a real eigenvalue.
    max_order : int
        Truncation order, at most 100.
    resonance_tol : float, optional
        Defaults to ``1e-8 * max|lambda|``.  Gaps below it raise
        :class:`ResonanceError`; gaps below ``1e3 * tol`` only warn.
    solver : {"auto", "eigenbasis", "dense"}
        ``"auto"`` uses the diagonal eigenbasis solve unless the eigenvector
        matrix has condition number above 1e6.
    """
    max_order = int(max_order)
    if not 1 <= max_order <= MAX_ORDER:
        raise ContractError(f"max_order must be in [1, {MAX_ORDER}], got {max_order}")
    if field.dimension != dec.dimension:
        raise ContractError("field and decomposition dimensions differ")
    if solver not in ("auto", "eigenbasis", "dense"):
        raise ContractError(f"unknown solver {solver!r}")
    pair = _check_pair(dec, pair)
    tol = default_resonance_tol(dec) if resonance_tol is None else float(resonance_tol)
    notes: List[str] = []
    _resonance_gate(dec, pair, max_order, tol, notes)

    A = jacobian_at_origin(field)
    if solver == "auto":
        cond = np.linalg.cond(dec.right_eigenvectors)
        solver = "dense" if cond > EIGENBASIS_COND_LIMIT else "eigenbasis"
        logger.debug("eigenvector condition %.3g -> %s solve", cond, solver)

    n = field.dimension
    a, b = pair
    real_mode = a == b
    lam1 = dec.eigenvalues[a]
    lam2 = lam1 if real_mode else dec.eigenvalues[b]

    first = np.zeros((2, n), dtype=complex)
    first[0] = dec.right_eigenvectors[:, a]
    if not real_mode:
        first[1] = dec.right_eigenvectors[:, b]
    slices = [np.zeros((0, n), dtype=complex), first]
    psi = [[None, first[:, i]] for i in range(n)]

    nonlinear = field.nonlinear_terms()
    factor_lists = sorted({_factor_list(t.index) for _, t in nonlinear})
    tree = _ProductTree(factor_lists, psi)
    tree.advance(1)
    # (component, coefficient, node) per nonlinear term
    rhs_terms = [(l, t.coefficient, _factor_list(t.index)) for l, t in nonlinear]

    for h in range(2, max_order + 1):
        tree.advance(h)
        B = np.zeros((h + 1, n), dtype=complex)
        for l, coef, node in rhs_terms:
            B[:, l] += coef * tree.series(node)[h]
        if real_mode:
            V = np.zeros((h + 1, n), dtype=complex)
            V[:1] = _solve_order(dec, lam1, lam2, A, B[:1], h, solver)
            V = V.real.astype(complex)
        elif np.all(np.isreal(field._coef)):
            # real field: v_{k2,k1} = conj(v_{k1,k2}); solve k1 >= k2, mirror the rest
            half = h // 2 + 1
            V = np.empty((h + 1, n), dtype=complex)
            V[:half] = _solve_order(dec, lam1, lam2, A, B[:half], h, solver)
            V[half:] = np.conj(V[: h + 1 - half][::-1])
            if h % 2 == 0:
                mid = h // 2
                V[mid] = V[mid].real
        else:
            V = _solve_order(dec, lam1, lam2, A, B, h, solver)
        slices.append(V)
        for i in range(n):
            psi[i].append(V[:, i])

    gauge = dec.scaling[[a, b]].copy()
    return KoopmanModeTable(pair, complex(lam1), slices, max_order, gauge, notes)


def assemble_rhs(field: PolynomialVectorField, table: KoopmanModeTable, k) -> np.ndarray:
    """Right-hand side ``b_k`` of the order-``|k|`` linear system.

    Only modes of total order below ``|k|`` are read from ``table``; the
    linear part of ``f`` is excluded (it is the ``A`` on the left-hand
    side).
    """
    k1, k2 = (int(x) for x in k)
    h = k1 + k2
    if k1 < 0 or k2 < 0 or h < 1:
        raise ContractError(f"invalid index {k}")
    if table.max_order < h - 1:
        raise ContractError(
            f"modes of order < {h} required, table stops at {table.max_order}"
        )
    n = field.dimension
    b = np.zeros(n, dtype=complex)
    if h < 2:
        return b
    psi = [[None] + [table.order_slices[g][:, i] for g in range(1, h)] for i in range(n)]
    # truncated series: slice h of Psi is unknown, it never enters b_k
    for i in range(n):
        psi[i].append(np.zeros(h + 1, dtype=complex))
    nonlinear = field.nonlinear_terms()
    tree = _ProductTree(sorted({_factor_list(t.index) for _, t in nonlinear}), psi)
    for g in range(1, h + 1):
        tree.advance(g)
    for l, t in nonlinear:
        b[l] += t.coefficient * tree.series(_factor_list(t.index))[h][k2]
    return b
