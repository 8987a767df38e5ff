"""Exact Frechet derivatives of operator polynomials, with oracles.

For a filter p and a commuting family S, the partial derivative of the
realized operator with respect to generator i is a bounded linear map on
operators.  Because coefficient tables have finite support, the closed form
is an exact finite sum: each power k_i >= 1 contributes the symmetrized
product sum(S_i^l xi S_i^(k_i-1-l), l = 0..k_i-1) right-multiplied by the
aggregate A_{k_i} of the remaining generators' powers.

A central-difference oracle and a power-iteration norm estimator accompany
the closed form so it never has to be trusted on faith.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polynomials import PolynomialFilter, generator_powers
from .signal_models import ShiftFamily, operator_norm

__all__ = [
    "frechet_apply",
    "partial_realized",
    "slot_leading_operator",
    "frechet_fd_oracle",
    "frechet_norm",
    "FdOracleResult",
    "FrechetNormResult",
]

_NOISE_FLOOR = 1e-13


def _check_args(p: PolynomialFilter, shifts: ShiftFamily, i: int, xi: np.ndarray) -> np.ndarray:
    if p.num_generators != shifts.num_generators:
        raise ValueError(
            f"filter has {p.num_generators} generators, family has {shifts.num_generators}"
        )
    if not 0 <= i < shifts.num_generators:
        raise ValueError(f"generator index {i} out of range [0, {shifts.num_generators})")
    xi = np.asarray(xi, dtype=complex)
    n = shifts.dimension
    if xi.shape != (n, n):
        raise ValueError(f"direction must be a {n}x{n} operator")
    return xi


def _aggregates(p: PolynomialFilter, shifts: ShiftFamily, i: int) -> dict[int, np.ndarray]:
    """A_{k} = sum over terms with k_i = k of h * prod_{j != i} S_j^{k_j}.

    The remaining generators' powers are multiplied in ascending j; the
    family commutes, so the order is a pure determinism convention.
    """
    n = shifts.dimension
    powers = generator_powers(
        shifts, [p.max_exponent(j) for j in range(p.num_generators)]
    )
    out: dict[int, np.ndarray] = {}
    for k, h in p.coefficients.items():
        term = None
        for j, e in enumerate(k):
            if j == i or e == 0:
                continue
            term = powers[j][e] if term is None else term @ powers[j][e]
        if term is None:
            term = np.eye(n, dtype=complex)
        acc = out.get(k[i])
        out[k[i]] = h * term if acc is None else acc + h * term
    return out


def _derivative_terms(
    p: PolynomialFilter, shifts: ShiftFamily, i: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """The derivative as a sum of left/right factor pairs: xi -> sum P xi Q."""
    si_powers = generator_powers(
        shifts, [p.max_exponent(j) for j in range(p.num_generators)]
    )[i]
    agg = _aggregates(p, shifts, i)
    terms = []
    for k, a_k in agg.items():
        if k == 0:
            continue
        for ell in range(k):
            terms.append((si_powers[ell], si_powers[k - 1 - ell] @ a_k))
    return terms


def frechet_apply(
    p: PolynomialFilter, shifts: ShiftFamily, i: int, xi: np.ndarray
) -> np.ndarray:
    """Apply the partial Frechet derivative in generator i to a direction xi."""
    xi = _check_args(p, shifts, i, xi)
    n = shifts.dimension
    out = np.zeros((n, n), dtype=complex)
    for left, right in _derivative_terms(p, shifts, i):
        out += left @ xi @ right
    return out


def partial_realized(
    p: PolynomialFilter, shifts: ShiftFamily, i: int, xi: np.ndarray
) -> np.ndarray:
    """Partial derivative of the ascending-order realization.

    Differentiates slot i of the map evaluated exactly as eval_operator
    does (generator powers in ascending index order), keeping the other
    generators' factors in place around the symmetrized sum.  Coincides
    with frechet_apply for one generator and whenever xi commutes with the
    family; used as the first-order reference in remainder sweeps.
    """
    xi = _check_args(p, shifts, i, xi)
    n = shifts.dimension
    powers = generator_powers(
        shifts, [p.max_exponent(j) for j in range(p.num_generators)]
    )
    out = np.zeros((n, n), dtype=complex)
    for k, h in p.coefficients.items():
        ki = k[i]
        if ki == 0:
            continue
        prefix = np.eye(n, dtype=complex)
        for j in range(i):
            if k[j]:
                prefix = prefix @ powers[j][k[j]]
        suffix = np.eye(n, dtype=complex)
        for j in range(i + 1, p.num_generators):
            if k[j]:
                suffix = suffix @ powers[j][k[j]]
        sandwich = np.zeros((n, n), dtype=complex)
        for ell in range(ki):
            sandwich += powers[i][ell] @ xi @ powers[i][ki - 1 - ell]
        out += h * (prefix @ sandwich @ suffix)
    return out


def slot_leading_operator(
    p: PolynomialFilter, shifts: ShiftFamily, i: int, slot_matrix: np.ndarray
) -> np.ndarray:
    """Realize p with generator i's powers leading and slot i replaced.

    Evaluates sum_k slot_matrix^k A_k, the realization whose exact
    derivative in slot i is the closed form of frechet_apply.  On the
    unperturbed commuting family it equals eval_operator.
    """
    slot_matrix = _check_args(p, shifts, i, slot_matrix)
    n = shifts.dimension
    agg = _aggregates(p, shifts, i)
    out = np.zeros((n, n), dtype=complex)
    power = np.eye(n, dtype=complex)
    for k in range(max(agg) + 1 if agg else 0):
        if k in agg:
            out += power @ agg[k]
        power = power @ slot_matrix
    return out


@dataclass(frozen=True)
class FdOracleResult:
    estimate: np.ndarray
    slope: float | None
    remainders: tuple


def frechet_fd_oracle(
    p: PolynomialFilter,
    shifts: ShiftFamily,
    i: int,
    xi: np.ndarray,
    epsilons,
) -> FdOracleResult:
    """Central-difference estimate of the partial derivative at xi.

    Uses the slot-leading realization (the function whose derivative the
    closed form computes) and Richardson-extrapolates the two finest steps.
    ``slope`` is the log-log slope of the first-order remainder against
    epsilon (2 for genuinely quadratic remainders; None when the remainder
    sits at the rounding floor, e.g. for linear filters).
    """
    xi = _check_args(p, shifts, i, xi)
    eps = [float(e) for e in epsilons]
    if len(eps) < 3 or any(e <= 0 for e in eps) or any(
        a <= b for a, b in zip(eps[1:], eps)
    ):
        raise ValueError("epsilons must be >= 3 strictly decreasing positive values")
    s_i = shifts.shifts[i]
    base = slot_leading_operator(p, shifts, i, s_i)

    diffs = []
    for e in eps:
        plus = slot_leading_operator(p, shifts, i, s_i + e * xi)
        minus = slot_leading_operator(p, shifts, i, s_i - e * xi)
        diffs.append((plus - minus) / (2.0 * e))
    e1, e2 = eps[-2], eps[-1]
    d1, d2 = diffs[-2], diffs[-1]
    estimate = (e1**2 * d2 - e2**2 * d1) / (e1**2 - e2**2)

    remainders = []
    for e in eps:
        plus = slot_leading_operator(p, shifts, i, s_i + e * xi)
        remainders.append(operator_norm(plus - base - e * estimate))
    floor = _NOISE_FLOOR * max(1.0, operator_norm(base))
    usable = [(e, r) for e, r in zip(eps, remainders) if r > floor]
    slope = None
    if len(usable) >= 2:
        le = np.log([e for e, _ in usable])
        lr = np.log([r for _, r in usable])
        slope = float(np.polyfit(le, lr, 1)[0])
    return FdOracleResult(estimate=estimate, slope=slope, remainders=tuple(remainders))


@dataclass(frozen=True)
class FrechetNormResult:
    value: float
    residual: float
    converged: bool
    iterations: int


def frechet_norm(
    p: PolynomialFilter,
    shifts: ShiftFamily,
    i: int,
    tol: float = 1e-8,
    max_iterations: int = 500,
    seed: int = 0,
) -> FrechetNormResult:
    """Largest singular value of the lifted derivative map.

    Power iteration on the composition of the map with its adjoint over the
    n^2-dimensional space of operators (Frobenius inner product).  Returns
    the estimate together with the final eigen-residual; ``converged`` is
    False if the iteration cap was reached first.
    """
    n = shifts.dimension
    terms = _derivative_terms(p, shifts, i)
    if not terms:
        return FrechetNormResult(value=0.0, residual=0.0, converged=True, iterations=0)

    adj_terms = [(left.conj().T, right.conj().T) for left, right in terms]

    def apply_map(x, pairs):
        out = np.zeros((n, n), dtype=complex)
        for left, right in pairs:
            out += left @ x @ right
        return out

    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    x /= np.linalg.norm(x)
    lam_prev = 0.0
    lam = 0.0
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        y = apply_map(apply_map(x, terms), adj_terms)
        lam = float(np.real(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return FrechetNormResult(value=0.0, residual=0.0, converged=True, iterations=iterations)
        x = y / ny
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            break
        lam_prev = lam
    residual = float(np.linalg.norm(apply_map(apply_map(x, terms), adj_terms) - lam * x))
    converged = iterations < max_iterations or abs(lam - lam_prev) <= tol * max(1.0, abs(lam))
    return FrechetNormResult(
        value=float(np.sqrt(max(lam, 0.0))),
        residual=residual,
        converged=converged,
        iterations=iterations,
    )
