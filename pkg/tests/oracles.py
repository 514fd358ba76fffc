"""Independent reference computations used only by the tests.

Nothing here imports the recurrence or the series evaluators.
"""
import itertools

import numpy as np


def poly_mul(p, q, max_order):
    """Product of bivariate polynomials stored as {(k1, k2): complex}."""
    out = {}
    for (a1, a2), ca in p.items():
        for (b1, b2), cb in q.items():
            k = (a1 + b1, a2 + b2)
            if k[0] + k[1] <= max_order:
                out[k] = out.get(k, 0) + ca * cb
    return out


def poly_pow(p, e, max_order):
    out = {(0, 0): 1.0 + 0j}
    for _ in range(e):
        out = poly_mul(out, p, max_order)
    return out


def compose_field(terms, n, psi, max_order):
    """Coefficients of f(Psi(xi1, xi2)) up to ``max_order``.

    ``terms`` is a list of (component, exponent tuple, coefficient);
    ``psi`` maps (k1, k2) to complex n-vectors.
    """
    coords = [{k: v[i] for k, v in psi.items()} for i in range(n)]
    out = [dict() for _ in range(n)]
    for l, exps, c in terms:
        prod = {(0, 0): 1.0 + 0j}
        for i, e in enumerate(exps):
            if e:
                prod = poly_mul(prod, poly_pow(coords[i], e, max_order), max_order)
        for k, val in prod.items():
            out[l][k] = out[l].get(k, 0) + c * val
    return out


def invariance_defect(terms, n, psi, lam1, lam2, max_order):
    """max |[f(Psi)]_k - (k1 lam1 + k2 lam2) v_k| over 1 <= |k| <= max_order."""
    fpsi = compose_field(terms, n, psi, max_order)
    worst = 0.0
    for h in range(1, max_order + 1):
        for k1 in range(h + 1):
            k = (k1, h - k1)
            lhs = np.array([fpsi[l].get(k, 0) for l in range(n)])
            rhs = psi.get(k, np.zeros(n)) * (k[0] * lam1 + k[1] * lam2)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def brute_force_modes(terms, n, A, lam1, lam2, v10, v01, max_order):
    """Mode table by naive composition: solve order by order with dense LU,
    reading b_k off a full polynomial composition of the lower orders."""
    A = np.asarray(A)
    psi = {(1, 0): np.asarray(v10, dtype=complex), (0, 1): np.asarray(v01, dtype=complex)}
    nonlinear = [t for t in terms if sum(t[1]) >= 2]
    for h in range(2, max_order + 1):
        comp = compose_field(nonlinear, n, psi, h)
        for k1 in range(h, -1, -1):
            k = (k1, h - k1)
            b = np.array([comp[l].get(k, 0) for l in range(n)], dtype=complex)
            r = k[0] * lam1 + k[1] * lam2
            psi[k] = np.linalg.solve(r * np.eye(n) - A, b)
    return psi


def eval_poly(psi, xi1, xi2):
    return sum(v * xi1 ** k[0] * xi2 ** k[1] for k, v in psi.items())


def exhaustive_resonances(lams, max_order, tol):
    """All (k, j) with 2 <= |k| <= max_order, k supported on two indices."""
    n = len(lams)
    hits = set()
    for a, b in itertools.combinations(range(n), 2):
        for k1 in range(max_order + 1):
            for k2 in range(max_order + 1 - k1):
                if k1 + k2 < 2:
                    continue
                z = k1 * lams[a] + k2 * lams[b]
                for j in range(n):
                    if abs(z - lams[j]) < tol:
                        e = [0] * n
                        e[a] += k1
                        e[b] += k2
                        hits.add((tuple(e), j))
    return hits


def nmse_loop(est, ref):
    """Plain-Python NMSE: 100 / ((K+1) var) * sum |est - ref|^2."""
    flat = [x for row in ref for x in row]
    mean = sum(flat) / len(flat)
    var = sum((x - mean) ** 2 for x in flat) / len(flat)
    err = 0.0
    for e_row, r_row in zip(est, ref):
        err += sum((a - b) ** 2 for a, b in zip(e_row, r_row))
    return 100.0 * err / (len(ref) * var)
