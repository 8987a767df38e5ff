"""Polynomial filters: coefficient tables, scalar and operator realizations.

A filter is a finite coefficient table over multi-indices in the generators.
The same table can be evaluated as a scalar function of m complex variables
(the spectral symbol) or realized as an operator polynomial in the shifts of
a :class:`~algnn.signal_models.ShiftFamily`.
"""

from __future__ import annotations

import json
import numbers
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .signal_models import COMMUTATION_TOL, ModelError, ShiftFamily

__all__ = [
    "PolynomialFilter",
    "LipschitzEstimate",
    "eval_scalar",
    "eval_operator",
    "scalar_gradient",
    "estimate_lipschitz",
    "generator_powers",
]


@dataclass(frozen=True, eq=False)
class PolynomialFilter:
    """Filter coefficients h_{k_1...k_m} with finite support.

    ``coefficients`` maps multi-indices (tuples of m non-negative ints) to
    real scalars.  Zero-valued terms are dropped on construction; an empty
    table is the explicit zero filter.
    """

    num_generators: int
    coefficients: dict

    def __post_init__(self):
        if self.num_generators < 1:
            raise ValueError("need at least one generator")
        cleaned = {}
        for key, value in self.coefficients.items():
            k = tuple(int(e) for e in (key if isinstance(key, tuple) else (key,)))
            if len(k) != self.num_generators:
                raise ValueError(
                    f"multi-index {k} has {len(k)} components, expected {self.num_generators}"
                )
            if any(e < 0 for e in k):
                raise ValueError(f"multi-index {k} has negative exponents")
            if not isinstance(value, numbers.Real):
                raise ValueError("coefficients must be real scalars")
            h = float(value)
            if h != 0.0:
                cleaned[k] = cleaned.get(k, 0.0) + h
        object.__setattr__(self, "coefficients", cleaned)

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_taps(cls, taps: Sequence[float]) -> "PolynomialFilter":
        """Single-generator filter from taps (h_0, h_1, ...)."""
        return cls(1, {(k,): float(h) for k, h in enumerate(taps)})

    @classmethod
    def zero(cls, num_generators: int = 1) -> "PolynomialFilter":
        return cls(num_generators, {})

    @classmethod
    def monomial(cls, exponents: Sequence[int], coefficient: float = 1.0) -> "PolynomialFilter":
        return cls(len(tuple(exponents)), {tuple(exponents): coefficient})

    # -- basic structure ----------------------------------------------------

    @property
    def degree(self) -> int:
        """Maximum total degree; -1 for the zero filter."""
        if not self.coefficients:
            return -1
        return max(sum(k) for k in self.coefficients)

    def is_zero(self) -> bool:
        return not self.coefficients

    def max_exponent(self, i: int) -> int:
        if not self.coefficients:
            return 0
        return max(k[i] for k in self.coefficients)

    def derivative(self, i: int = 0) -> "PolynomialFilter":
        """Partial derivative with respect to generator i, as a filter."""
        if not 0 <= i < self.num_generators:
            raise ValueError("generator index out of range")
        terms = {}
        for k, h in self.coefficients.items():
            if k[i] == 0:
                continue
            kd = list(k)
            kd[i] -= 1
            kd = tuple(kd)
            terms[kd] = terms.get(kd, 0.0) + h * k[i]
        return PolynomialFilter(self.num_generators, terms)

    # -- algebra ------------------------------------------------------------

    def __add__(self, other: "PolynomialFilter") -> "PolynomialFilter":
        if self.num_generators != other.num_generators:
            raise ValueError("generator counts differ")
        terms = dict(self.coefficients)
        for k, h in other.coefficients.items():
            terms[k] = terms.get(k, 0.0) + h
        return PolynomialFilter(self.num_generators, terms)

    def __sub__(self, other: "PolynomialFilter") -> "PolynomialFilter":
        return self + (-1.0) * other

    def __rmul__(self, scalar: float) -> "PolynomialFilter":
        return PolynomialFilter(
            self.num_generators, {k: scalar * h for k, h in self.coefficients.items()}
        )

    def __mul__(self, other):
        if isinstance(other, numbers.Real):
            return self.__rmul__(other)
        if self.num_generators != other.num_generators:
            raise ValueError("generator counts differ")
        terms = {}
        for ka, ha in self.coefficients.items():
            for kb, hb in other.coefficients.items():
                k = tuple(a + b for a, b in zip(ka, kb))
                terms[k] = terms.get(k, 0.0) + ha * hb
        return PolynomialFilter(self.num_generators, terms)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        terms = [
            {"k": list(k), "h": h}
            for k, h in sorted(self.coefficients.items())
        ]
        return {"m": self.num_generators, "terms": terms}

    @classmethod
    def from_json(cls, doc: Mapping) -> "PolynomialFilter":
        m = int(doc["m"])
        return cls(m, {tuple(t["k"]): float(t["h"]) for t in doc["terms"]})

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "PolynomialFilter":
        return cls.from_json(json.loads(text))


@dataclass(frozen=True)
class LipschitzEstimate:
    """Grid estimates of the Lipschitz and Lipschitz-integral constants.

    Both values are maxima over sampled points, hence lower bounds of the
    true suprema over the closed polydisk of radius ``domain_radius``,
    refined by ``grid_resolution``.
    """

    l0: float
    l1: float
    domain_radius: float
    grid_resolution: int

    def __post_init__(self):
        if self.l0 < 0 or self.l1 < 0:
            raise ValueError("Lipschitz estimates must be non-negative")
        if self.domain_radius <= 0:
            raise ValueError("domain radius must be positive")


def eval_scalar(p: PolynomialFilter, lam) -> complex:
    """Evaluate the filter's scalar symbol at a point of C^m."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if lam.shape != (p.num_generators,):
        raise ValueError(
            f"expected {p.num_generators} spectral variables, got shape {lam.shape}"
        )
    total = 0.0 + 0.0j
    for k, h in p.coefficients.items():
        term = h
        for i, e in enumerate(k):
            if e:
                term = term * lam[i] ** e
        total += term
    return complex(total)


def scalar_gradient(p: PolynomialFilter, lam) -> np.ndarray:
    """Gradient (d p / d lambda_1, ..., d p / d lambda_m) at a point."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if lam.shape != (p.num_generators,):
        raise ValueError(
            f"expected {p.num_generators} spectral variables, got shape {lam.shape}"
        )
    return np.array(
        [eval_scalar(p.derivative(i), lam) for i in range(p.num_generators)],
        dtype=complex,
    )


def generator_powers(shifts: ShiftFamily, max_exponents: Sequence[int]) -> list:
    """Precomputed powers [S_i^0 .. S_i^{max_i}] for each generator."""
    out = []
    for s, kmax in zip(shifts.shifts, max_exponents):
        powers = [np.eye(shifts.dimension, dtype=complex)]
        for _ in range(kmax):
            powers.append(powers[-1] @ s)
        out.append(powers)
    return out


def eval_operator(p: PolynomialFilter, shifts: ShiftFamily) -> np.ndarray:
    """Realize the filter as an operator polynomial in the shifts.

    Products are evaluated with generator powers in ascending index order.
    For proper (non-custom) models the family must commute, making the order
    irrelevant; custom-tagged families (e.g. perturbed shifts) are accepted
    as-is and evaluated under the fixed ordering convention.
    """
    if p.num_generators != shifts.num_generators:
        raise ValueError(
            f"filter has {p.num_generators} generators, family has {shifts.num_generators}"
        )
    if shifts.model_tag != "custom" and shifts.commutation_defect > COMMUTATION_TOL:
        raise ModelError(
            f"shift family does not commute (defect {shifts.commutation_defect:.3e})"
        )
    n = shifts.dimension
    out = np.zeros((n, n), dtype=complex)
    if p.is_zero():
        return out
    powers = generator_powers(
        shifts, [p.max_exponent(i) for i in range(p.num_generators)]
    )
    for k, h in p.coefficients.items():
        term = None
        for i, e in enumerate(k):
            if e == 0:
                continue
            term = powers[i][e] if term is None else term @ powers[i][e]
        if term is None:
            out += h * np.eye(n, dtype=complex)
        else:
            out += h * term
    return out


def _axis_samples(radius: float, resolution: int) -> np.ndarray:
    # Polar grid on the closed disk: `resolution` radii (up to and including
    # the boundary, where the sup of any analytic component lives) times
    # `resolution` angles, plus the origin.
    radii = radius * (np.arange(1, resolution + 1) / resolution)
    angles = 2.0 * np.pi * np.arange(resolution) / resolution
    pts = (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
    return np.concatenate([[0.0 + 0.0j], pts])


def estimate_lipschitz(
    p: PolynomialFilter,
    domain_radius: float,
    grid_resolution: int = 32,
    include_points: Iterable | None = None,
) -> LipschitzEstimate:
    """Estimate L0 and L1 by a grid maximum over the closed polydisk.

    l0 is the largest gradient 2-norm over the sampled points; l1 the
    largest |lambda_i * dp/dlambda_i| over points and coordinates.  Optional
    ``include_points`` (an iterable of m-tuples inside the domain) anchors
    the grid at known spectral locations so the estimate certifies them.
    """
    if domain_radius <= 0:
        raise ValueError("domain_radius must be positive")
    if grid_resolution < 8:
        raise ValueError("grid_resolution must be at least 8")
    m = p.num_generators
    axis = _axis_samples(domain_radius, grid_resolution)
    grids = np.meshgrid(*([axis] * m), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)  # (N, m)
    if include_points is not None:
        extra = np.atleast_2d(np.asarray(list(include_points), dtype=complex))
        if extra.size:
            if extra.shape[1] != m:
                raise ValueError("anchor points must have one coordinate per generator")
            pts = np.vstack([pts, extra])

    grad = np.zeros(pts.shape, dtype=complex)
    for i in range(m):
        di = p.derivative(i)
        vals = np.zeros(pts.shape[0], dtype=complex)
        for k, h in di.coefficients.items():
            term = np.full(pts.shape[0], h, dtype=complex)
            for j, e in enumerate(k):
                if e:
                    term = term * pts[:, j] ** e
            vals += term
        grad[:, i] = vals

    grad_norm = np.sqrt(np.sum(np.abs(grad) ** 2, axis=1))
    l0 = float(grad_norm.max()) if grad_norm.size else 0.0
    weighted = np.abs(pts * grad)
    l1 = float(weighted.max()) if weighted.size else 0.0
    return LipschitzEstimate(
        l0=l0, l1=l1, domain_radius=float(domain_radius), grid_resolution=int(grid_resolution)
    )
