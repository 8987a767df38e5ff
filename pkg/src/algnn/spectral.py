"""Fourier decomposition of shift families via joint eigendecomposition.

Every normal commuting family on a finite-dimensional space is unitarily
diagonalizable in a common basis.  That basis is the concrete form of the
Fourier decomposition used here: each one-dimensional eigenspace carries a
tuple of joint eigenvalues (one per generator), the analysis map is the
inner product against the eigenvectors, and filtering acts by pointwise
multiplication with the filter's scalar symbol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .polynomials import PolynomialFilter, eval_scalar
from .signal_models import NORMALITY_TOL, ShiftFamily, SpectralError, operator_norm

__all__ = [
    "SpectralDecomposition",
    "decompose",
    "fourier",
    "inverse_fourier",
    "spectral_apply",
    "normal_eig",
]

_EIGENPAIR_TOL = 1e-8
_UNITARY_TOL = 1e-10
_MAX_ATTEMPTS = 5


def normal_eig(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a normal matrix with orthonormal eigenvectors.

    Returns (eigenvalues, eigenvector matrix) in lexicographic order of
    (real, imaginary) parts.  Hermitian inputs take the fast symmetric path.
    """
    a = np.asarray(matrix, dtype=complex)
    if np.max(np.abs(a - a.conj().T)) <= 1e-13 * max(1.0, operator_norm(a)):
        vals, vecs = np.linalg.eigh(a)
        vals = vals.astype(complex)
    else:
        # Complex Schur of a normal matrix is diagonal, so Z is a unitary
        # eigenbasis even with repeated eigenvalues.
        t, z = scipy.linalg.schur(a, output="complex")
        vals, vecs = np.diag(t).copy(), z
    order = np.lexsort((vals.imag, vals.real))
    return vals[order], vecs[:, order]


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Joint eigenpairs of a shift family.

    ``eigenvalues`` has shape (n, m): row i holds the eigenvalue of each
    generator on eigenvector i.  ``eigenvectors`` is unitary with
    eigenvectors as columns, ordered lexicographically by the (real,
    imaginary) parts of the first generator's eigenvalue.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    model_ref: str

    @property
    def dimension(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def num_generators(self) -> int:
        return self.eigenvalues.shape[1]

    def eigenvalue_tuples(self) -> list[tuple]:
        return [tuple(row) for row in self.eigenvalues]

    def to_json(self) -> dict:
        return {
            "lambda": [[[z.real, z.imag] for z in row] for row in self.eigenvalues],
            "U": [[[z.real, z.imag] for z in row] for row in self.eigenvectors],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _validate_basis(shifts: ShiftFamily, vecs: np.ndarray) -> np.ndarray | None:
    """Rayleigh eigenvalues for every generator, or None if not a joint basis."""
    n, m = shifts.dimension, shifts.num_generators
    lam = np.zeros((n, m), dtype=complex)
    for j, s in enumerate(shifts.shifts):
        sv = s @ vecs
        lam_j = np.einsum("ij,ij->j", vecs.conj(), sv)
        resid = sv - vecs * lam_j[None, :]
        scale = max(1.0, operator_norm(s))
        if np.max(np.sqrt(np.sum(np.abs(resid) ** 2, axis=0))) > _EIGENPAIR_TOL * scale:
            return None
        lam[:, j] = lam_j
    return lam


def decompose(shifts: ShiftFamily, seed: int = 0) -> SpectralDecomposition:
    """Joint eigendecomposition of a normal commuting family.

    Single-generator families are diagonalized directly.  Multi-generator
    families are resolved by diagonalizing a random real linear combination
    of the shifts and refining per-generator eigenvalues as Rayleigh
    quotients; collisions in the combination trigger a retry with a fresh
    combination (up to 5 attempts).
    """
    if shifts.normality_defect > NORMALITY_TOL:
        raise SpectralError(
            f"family is not normal (defect {shifts.normality_defect:.3e} > {NORMALITY_TOL})"
        )
    if not shifts.is_commuting:
        raise SpectralError(
            f"family does not commute (defect {shifts.commutation_defect:.3e})"
        )
    m = shifts.num_generators
    if m == 1:
        vals, vecs = normal_eig(shifts.shifts[0])
        lam = vals[:, None]
    else:
        rng = np.random.default_rng(seed)
        lam = vecs = None
        for _ in range(_MAX_ATTEMPTS):
            coeffs = rng.standard_normal(m)
            combo = sum(c * s for c, s in zip(coeffs, shifts.shifts))
            _, candidate = normal_eig(combo)
            lam = _validate_basis(shifts, candidate)
            if lam is not None:
                vecs = candidate
                break
        if lam is None:
            raise SpectralError(
                "simultaneous diagonalization failed after "
                f"{_MAX_ATTEMPTS} random combinations"
            )
        keys = []
        for j in reversed(range(m)):
            keys.extend([lam[:, j].imag, lam[:, j].real])
        order = np.lexsort(keys)
        lam, vecs = lam[order, :], vecs[:, order]

    gram = vecs.conj().T @ vecs
    if np.max(np.abs(gram - np.eye(shifts.dimension))) > _UNITARY_TOL:
        raise SpectralError("eigenvector matrix failed the unitarity check")
    final = _validate_basis(shifts, vecs)
    if final is None:
        raise SpectralError("eigenpair residuals exceed tolerance")
    return SpectralDecomposition(
        eigenvalues=final,
        eigenvectors=vecs,
        model_ref=f"{shifts.model_tag}:{shifts.dimension}",
    )


def fourier(decomp: SpectralDecomposition, x: np.ndarray) -> np.ndarray:
    """Analysis coefficients <u_i, x> of a signal in the joint eigenbasis."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (decomp.dimension,):
        raise ValueError(f"signal must have length {decomp.dimension}")
    return decomp.eigenvectors.conj().T @ x


def inverse_fourier(decomp: SpectralDecomposition, xhat: np.ndarray) -> np.ndarray:
    xhat = np.asarray(xhat, dtype=complex)
    if xhat.shape != (decomp.dimension,):
        raise ValueError(f"coefficient vector must have length {decomp.dimension}")
    return decomp.eigenvectors @ xhat


def spectral_apply(
    decomp: SpectralDecomposition, p: PolynomialFilter, x: np.ndarray
) -> np.ndarray:
    """Apply a filter through the spectral path.

    Multiplies each Fourier coefficient by the filter's symbol at the
    corresponding joint eigenvalue; equals the operator realization applied
    to x for normal families.
    """
    if p.num_generators != decomp.num_generators:
        raise ValueError(
            f"filter has {p.num_generators} generators, decomposition has "
            f"{decomp.num_generators}"
        )
    xhat = fourier(decomp, x)
    symbol = np.array(
        [eval_scalar(p, lam) for lam in decomp.eigenvalues], dtype=complex
    )
    return inverse_fourier(decomp, symbol * xhat)
