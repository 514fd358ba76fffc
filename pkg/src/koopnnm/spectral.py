"""Eigendecomposition of the Jacobian with biorthogonal left/right vectors.

Gauge convention: a right eigenvector has unit 2-norm and its entry of
largest modulus is real positive; left eigenvectors are the rows of the
inverse of the right-eigenvector matrix, so ``W @ V = I``.  The member of a
conjugate pair with negative imaginary part is never computed on its own,
it is the entrywise conjugate of its partner.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import (
    ContractError,
    DefectiveJacobianError,
    UnstableEquilibriumError,
)
from .polyfield import MultiIndex

COND_LIMIT = 1e8
_PAIR_TOL = 1e-10


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues with right (columns) and left (rows) eigenvectors."""

    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    left_eigenvectors: np.ndarray
    conjugate_pairs: Tuple[Tuple[int, int], ...]
    scaling: np.ndarray = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)

    def pair_by_frequency_rank(self, rank: int) -> Tuple[int, int]:
        """Conjugate pair with the ``rank``-th smallest ``|Im lambda|``."""
        pairs = sorted(
            self.conjugate_pairs, key=lambda p: (abs(self.eigenvalues[p[0]].imag), p)
        )
        if not pairs:
            raise ContractError("spectrum has no complex conjugate pair")
        if not 0 <= rank < len(pairs):
            raise ContractError(
                f"frequency rank {rank} out of range, {len(pairs)} pair(s) available"
            )
        return pairs[rank]

    def pair_containing(self, index: int) -> Tuple[int, int]:
        for p in self.conjugate_pairs:
            if index in p:
                return p if index == p[0] else (p[1], p[0])
        raise ContractError(f"eigenvalue {index} is not part of a conjugate pair")

    def rescaled(self, index: int, c: complex) -> "SpectralDecomposition":
        """Multiply ``v_index`` by ``c`` (its conjugate partner by ``conj(c)``).

        Left eigenvectors are divided accordingly so biorthogonality holds.
        """
        V = self.right_eigenvectors.copy()
        W = self.left_eigenvectors.copy()
        scaling = self.scaling.copy()
        targets = [(index, c)]
        for p in self.conjugate_pairs:
            if index in p:
                other = p[1] if index == p[0] else p[0]
                targets.append((other, np.conj(c)))
        for j, cj in targets:
            V[:, j] *= cj
            W[j, :] /= cj
            scaling[j] *= cj
        return SpectralDecomposition(
            self.eigenvalues.copy(), V, W, self.conjugate_pairs, scaling
        )


@dataclass(frozen=True)
class ResonanceReport:
    """Combinations ``k . lambda`` closer than a tolerance to some ``lambda_j``.

    ``combinations`` holds ``(MultiIndex, j, gap)`` sorted by gap;
    ``min_gap`` is the smallest gap over everything scanned, listed or not.
    """

    combinations: List[Tuple[MultiIndex, int, float]]
    min_gap: float

    def __bool__(self):
        return bool(self.combinations)

    def __len__(self):
        return len(self.combinations)


def _gauge(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    mod = np.abs(v)
    # first entry within round-off of the max keeps near-ties deterministic
    i = int(np.flatnonzero(mod >= mod.max() * (1 - 1e-8))[0])
    v = v * (np.conj(v[i]) / mod[i])
    v[i] = abs(v[i])
    return v


def decompose(A) -> SpectralDecomposition:
    """Eigendecomposition of a real matrix with a fixed eigenvector gauge.

    Eigenvalues are sorted by descending real part, then ascending
    ``|Im|``, with the positive-imaginary member of a pair first.

    Raises
    ------
    UnstableEquilibriumError
        if any eigenvalue has ``Re >= 0``.
    DefectiveJacobianError
        if the eigenvector matrix has condition number above 1e8.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"square matrix required, got shape {A.shape}")
    n = A.shape[0]
    vals, vecs = np.linalg.eig(A)

    if np.any(vals.real >= 0):
        bad = ", ".join(f"{v:.6g}" for v in vals[vals.real >= 0])
        raise UnstableEquilibriumError(f"eigenvalue(s) with Re >= 0: {bad}")

    scale = max(1.0, float(np.max(np.abs(vals))))
    upper = [i for i in range(n) if vals[i].imag > _PAIR_TOL * scale]
    lower = [i for i in range(n) if vals[i].imag < -_PAIR_TOL * scale]
    real = [i for i in range(n) if i not in upper and i not in lower]

    # units: ("pair", i_upper, i_lower) or ("real", i)
    units = []
    unmatched = set(lower)
    for i in upper:
        j = min(unmatched, key=lambda j: abs(vals[j] - np.conj(vals[i])), default=None)
        if j is None or abs(vals[j] - np.conj(vals[i])) > 1e-8 * scale:
            raise DefectiveJacobianError(
                f"eigenvalue {vals[i]:.6g} has no conjugate partner"
            )
        unmatched.discard(j)
        units.append((vals[i].real, abs(vals[i].imag), "pair", i))
    for i in real:
        units.append((vals[i].real, 0.0, "real", i))
    units.sort(key=lambda u: (-u[0], u[1], u[3]))

    lam = np.empty(n, dtype=complex)
    V = np.empty((n, n), dtype=complex)
    pairs = []
    pos = 0
    for re, im, kind, i in units:
        if kind == "pair":
            lam_i = complex(re, im)
            v = _gauge(vecs[:, i])
            lam[pos], lam[pos + 1] = lam_i, np.conj(lam_i)
            V[:, pos], V[:, pos + 1] = v, np.conj(v)
            pairs.append((pos, pos + 1))
            pos += 2
        else:
            lam[pos] = re
            V[:, pos] = _gauge(vecs[:, i].real.astype(complex)).real
            pos += 1

    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DefectiveJacobianError(
            f"eigenvector matrix condition number {cond:.3g} exceeds {COND_LIMIT:.0e}"
        )
    W = np.linalg.inv(V)
    for a, b in pairs:
        W[b, :] = np.conj(W[a, :])
    for j in range(n):
        if lam[j].imag == 0 and all(j not in p for p in pairs):
            W[j, :] = W[j, :].real
    return SpectralDecomposition(lam, V, W, tuple(pairs), np.ones(n, dtype=complex))


def eigenfunction_linear(dec: SpectralDecomposition, k: int, x) -> complex:
    """``s_k(x) = w_k^* x``, the exact Koopman eigenfunction of ``A x``."""
    if not 0 <= k < dec.dimension:
        raise ContractError(f"eigen-index {k} out of range")
    return dec.left_eigenvectors[k] @ np.asarray(x)


def default_resonance_tol(dec: SpectralDecomposition) -> float:
    return 1e-8 * float(np.max(np.abs(dec.eigenvalues)))


def _lattice(max_order: int, lo: int = 2):
    k1, k2 = [], []
    for h in range(lo, max_order + 1):
        for a in range(h, -1, -1):
            k1.append(a)
            k2.append(h - a)
    return np.array(k1), np.array(k2)


def check_resonance(
    dec: SpectralDecomposition,
    max_order: int,
    tol: Optional[float] = None,
    pair: Optional[Tuple[int, int]] = None,
) -> ResonanceReport:
    """Scan ``|k . lambda - lambda_j|`` over two-index lattices.

    Parameters
    ----------
    dec : SpectralDecomposition
    max_order : int
        Largest ``|k|`` scanned (the scan starts at ``|k| = 2``).
    tol : float, optional
        Report threshold; defaults to ``1e-8 * max|lambda|``.
    pair : (int, int), optional
        Restrict to the lattice spanned by these two eigenvalues, as used by
        the mode recurrence.  By default every pair of eigen-indices is
        scanned.
    """
    max_order = int(max_order)
    if max_order < 2:
        raise ContractError(f"max_order must be >= 2, got {max_order}")
    if tol is None:
        tol = default_resonance_tol(dec)
    if not tol > 0:
        raise ContractError(f"tol must be positive, got {tol}")
    n = dec.dimension
    lam = dec.eigenvalues
    if pair is not None:
        supports = [tuple(pair)]
    elif n == 1:
        supports = [(0, 0)]
    else:
        supports = [(a, b) for a in range(n) for b in range(a + 1, n)]

    k1, k2 = _lattice(max_order)
    found = {}
    min_gap = np.inf
    for a, b in supports:
        if a == b:
            mask = k2 == 0
            kk1, kk2 = k1[mask], k2[mask]
        else:
            kk1, kk2 = k1, k2
        combos = kk1 * lam[a] + kk2 * lam[b]
        gaps = np.abs(combos[:, None] - lam[None, :])
        min_gap = min(min_gap, float(gaps.min()))
        for r, j in zip(*np.nonzero(gaps < tol)):
            e = [0] * n
            e[a] += int(kk1[r])
            e[b] += int(kk2[r])
            key = (tuple(e), int(j))
            found[key] = float(gaps[r, j])
    entries = sorted(
        ((MultiIndex(e), j, g) for (e, j), g in found.items()),
        key=lambda t: (t[2], tuple(t[0]), t[1]),
    )
    return ResonanceReport(entries, min_gap)


def modal_table(dec: SpectralDecomposition):
    """Rows ``(index, re, im, freq_rad_s, damping_ratio)``.

    The natural frequency is ``|lambda|`` in rad/s and the damping ratio is
    ``-Re(lambda) / |lambda|``.
    """
    rows = []
    for i, lam in enumerate(dec.eigenvalues):
        w = abs(lam)
        rows.append((i, lam.real, lam.imag, w, -lam.real / w))
    return rows
