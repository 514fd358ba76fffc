"""Exact polynomial vector fields and multi-index helpers.

A field ``f: R^n -> R^n`` is stored as a sparse sum of monomials per
component.  Coefficients are the normalized Taylor coefficients, i.e. the
coefficient of ``x**k`` already contains the ``1/k!`` factor, so looking one
up never involves a factorial.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import ContractError

MAX_DIMENSION = 32
MAX_DEGREE = 16
_INT64_MAX = 2**63 - 1


class MultiIndex(tuple):
    """Exponent tuple ``k = (k_1, ..., k_n)`` with non-negative entries."""

    def __new__(cls, exponents: Iterable[int]):
        exps = tuple(int(e) for e in exponents)
        if any(e < 0 for e in exps):
            raise ContractError(f"negative exponent in multi-index {exps}")
        return super().__new__(cls, exps)

    def order(self) -> int:
        """Total degree ``|k|``."""
        return sum(self)

    def factorial(self) -> int:
        """``k! = prod k_i!``; raises OverflowError beyond signed 64-bit."""
        out = 1
        for e in self:
            out *= math.factorial(e)
            if out > _INT64_MAX:
                raise OverflowError(f"{self}! exceeds 64-bit range")
        return out

    def dot(self, values) -> complex:
        """``k . values``, e.g. ``k . lambda``."""
        values = np.asarray(values)
        if values.shape != (len(self),):
            raise ContractError(
                f"dot: expected {len(self)} values, got shape {values.shape}"
            )
        return complex(np.dot(np.asarray(self, dtype=float), values))

    def __repr__(self):
        return f"MultiIndex({tuple(self)})"


@dataclass(frozen=True)
class MonomialTerm:
    coefficient: float
    index: MultiIndex

    def __post_init__(self):
        if self.coefficient == 0:
            raise ContractError("zero monomial terms are not stored")


class PolynomialVectorField:
    """Polynomial right-hand side ``dx/dt = f(x)`` with ``f(0) = 0``.

    Parameters
    ----------
    dimension : int
        State dimension ``n`` (at most 32).
    components : sequence of mappings
        ``components[l]`` maps exponent tuples to coefficients of component
        ``l``.  Zero coefficients are dropped.

    Notes
    -----
    Components are indexed from 0.  Terms are kept in lexicographic order of
    their exponents so that every evaluation sums in the same order.
    """

    def __init__(self, dimension: int, components: Sequence[Mapping[tuple, float]]):
        dimension = int(dimension)
        if not 1 <= dimension <= MAX_DIMENSION:
            raise ContractError(
                f"dimension must be in [1, {MAX_DIMENSION}], got {dimension}"
            )
        if len(components) != dimension:
            raise ContractError(
                f"expected {dimension} components, got {len(components)}"
            )
        comps = []
        max_degree = 0
        for l, comp in enumerate(components):
            terms = []
            for exps, coef in sorted(
                ((MultiIndex(e), c) for e, c in comp.items()), key=lambda t: tuple(t[0])
            ):
                if len(exps) != dimension:
                    raise ContractError(
                        f"component {l}: exponent {tuple(exps)} has wrong length"
                    )
                if exps.order() == 0:
                    if coef != 0:
                        raise ContractError(
                            f"component {l}: constant term {coef} breaks f(0) = 0"
                        )
                    continue
                if exps.order() > MAX_DEGREE:
                    raise ContractError(
                        f"component {l}: degree {exps.order()} exceeds {MAX_DEGREE}"
                    )
                coef = float(coef)
                if coef == 0.0:
                    continue
                terms.append(MonomialTerm(coef, exps))
                max_degree = max(max_degree, exps.order())
            comps.append(tuple(terms))
        self.dimension = dimension
        self.components = tuple(comps)
        self.max_degree = max_degree

        # dense form used by eval: unique exponents x coefficient matrix
        exps = sorted({tuple(t.index) for comp in self.components for t in comp})
        self._exponents = np.array(exps, dtype=int).reshape(len(exps), dimension)
        row = {e: i for i, e in enumerate(exps)}
        coef = np.zeros((len(exps), dimension))
        for l, comp in enumerate(self.components):
            for t in comp:
                coef[row[tuple(t.index)], l] = t.coefficient
        self._coef = coef

    @classmethod
    def from_terms(cls, dimension, terms):
        """Build from ``(component, exponents, coefficient)`` triples.

        Repeated (component, exponents) pairs are summed.
        """
        comps = [dict() for _ in range(int(dimension))]
        for l, exps, c in terms:
            key = tuple(int(e) for e in exps)
            comps[l][key] = comps[l].get(key, 0.0) + float(c)
        return cls(dimension, comps)

    @classmethod
    def from_matrix(cls, A):
        """Linear field ``f(x) = A x``."""
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ContractError(f"square matrix required, got shape {A.shape}")
        n = A.shape[0]
        terms = []
        for l in range(n):
            for j in range(n):
                if A[l, j] != 0:
                    e = [0] * n
                    e[j] = 1
                    terms.append((l, e, A[l, j]))
        return cls.from_terms(n, terms)

    def terms(self):
        """Iterate ``(component, MonomialTerm)`` in deterministic order."""
        for l, comp in enumerate(self.components):
            for t in comp:
                yield l, t

    def nonlinear_terms(self):
        """Terms of degree >= 2 as ``(component, MonomialTerm)``."""
        return [(l, t) for l, t in self.terms() if t.index.order() >= 2]

    def is_linear(self) -> bool:
        return self.max_degree <= 1

    def __add__(self, other):
        if not isinstance(other, PolynomialVectorField):
            return NotImplemented
        if other.dimension != self.dimension:
            raise ContractError("cannot add fields of different dimension")
        triples = [(l, t.index, t.coefficient) for l, t in self.terms()]
        triples += [(l, t.index, t.coefficient) for l, t in other.terms()]
        return PolynomialVectorField.from_terms(self.dimension, triples)

    def __call__(self, x):
        return eval_field(self, x)

    def __repr__(self):
        nterms = sum(len(c) for c in self.components)
        return (
            f"PolynomialVectorField(dimension={self.dimension}, "
            f"terms={nterms}, max_degree={self.max_degree})"
        )


def eval_field(field: PolynomialVectorField, x):
    """Evaluate ``f(x)``.

    ``x`` may be a single n-vector or a stack of shape ``(..., n)``; real or
    complex.
    """
    x = np.asarray(x)
    if x.shape[-1:] != (field.dimension,):
        raise ContractError(
            f"state has shape {x.shape}, field dimension is {field.dimension}"
        )
    if field._exponents.shape[0] == 0:
        return np.zeros_like(x, dtype=np.result_type(x, float))
    monomials = np.prod(x[..., None, :] ** field._exponents, axis=-1)
    return monomials @ field._coef


def jacobian_at_origin(field: PolynomialVectorField) -> np.ndarray:
    """Matrix of degree-1 coefficients: entry ``(l, j)`` multiplies ``x_j``."""
    n = field.dimension
    A = np.zeros((n, n))
    for l, t in field.terms():
        if t.index.order() == 1:
            A[l, t.index.index(1)] = t.coefficient
    return A


def taylor_coefficient(field: PolynomialVectorField, component: int, k) -> float:
    """``(1/k!) d^k f_l(0)``, i.e. the stored coefficient of ``x**k``."""
    if not 0 <= component < field.dimension:
        raise ContractError(
            f"component {component} out of range [0, {field.dimension})"
        )
    k = tuple(MultiIndex(k))
    for t in field.components[component]:
        if tuple(t.index) == k:
            return t.coefficient
    return 0.0


def enumerate_pair_indices(max_order: int):
    """All ``(k1, k2)`` with ``1 <= k1 + k2 <= max_order``.

    Sorted by total order, then by ``k1`` descending::

        >>> enumerate_pair_indices(2)
        [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    """
    max_order = int(max_order)
    if max_order < 1:
        raise ContractError(f"max_order must be >= 1, got {max_order}")
    return [(k1, h - k1) for h in range(1, max_order + 1) for k1 in range(h, -1, -1)]
