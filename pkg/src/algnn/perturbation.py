"""Shift-operator perturbations and the commutation factor.

The perturbation of a shift is T(S) = T0 + T1 S, an absolute plus a relative
term, with T0 and T1 compact normal and of operator norm below one.  For a
normal shift the splitting S T_r = T_cr S + S P_r isolates the part of T_r
that commutes with S; the commutation factor delta = max_r ||P_r|| / ||T_r||
measures eigenbasis misalignment and enters every stability constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .signal_models import (
    NORMALITY_TOL,
    ModelError,
    ShiftFamily,
    _complex_matrix_from_json,
    _complex_matrix_to_json,
    operator_norm,
)
from .spectral import SpectralDecomposition, decompose, normal_eig

__all__ = [
    "PerturbationModel",
    "CommutationAnalysis",
    "perturb",
    "random_perturbation",
    "commutation_analysis",
    "delta_upper_bound",
]


@dataclass(frozen=True, eq=False)
class PerturbationModel:
    """Per-generator pairs (T0_i, T1_i) of normal operators with norm < 1."""

    per_generator: tuple  # tuple of (T0, T1) ndarray pairs
    mode: str = "custom"
    norm0: float | None = None
    norm1: float | None = None
    seed: int | None = None

    @classmethod
    def from_pairs(cls, pairs, mode: str = "custom", norm0=None, norm1=None, seed=None):
        cleaned = []
        for t0, t1 in pairs:
            t0 = np.asarray(t0, dtype=complex)
            t1 = np.asarray(t1, dtype=complex)
            for name, t in (("T0", t0), ("T1", t1)):
                if t.ndim != 2 or t.shape[0] != t.shape[1]:
                    raise ValueError(f"{name} must be square")
                nt = operator_norm(t)
                if nt >= 1.0:
                    raise ModelError(f"{name} must have operator norm < 1, got {nt:.6f}")
                defect = operator_norm(t @ t.conj().T - t.conj().T @ t)
                if defect > NORMALITY_TOL * max(1.0, nt**2):
                    raise ModelError(f"{name} is not normal (defect {defect:.3e})")
            if t0.shape != t1.shape:
                raise ValueError("T0 and T1 must share a dimension")
            cleaned.append((t0, t1))
        if not cleaned:
            raise ValueError("perturbation model needs at least one generator entry")
        return cls(per_generator=tuple(cleaned), mode=mode, norm0=norm0, norm1=norm1, seed=seed)

    @property
    def num_generators(self) -> int:
        return len(self.per_generator)

    @property
    def dimension(self) -> int:
        return self.per_generator[0][0].shape[0]

    def applied_to(self, shifts: ShiftFamily) -> list[np.ndarray]:
        """The realized perturbations T(S_i) = T0_i + T1_i S_i."""
        _check_compatible(shifts, self)
        return [t0 + t1 @ s for (t0, t1), s in zip(self.per_generator, shifts.shifts)]

    def scaled(self, factor: float) -> "PerturbationModel":
        """Model with both terms scaled; factor must keep norms below one."""
        return PerturbationModel.from_pairs(
            [(factor * t0, factor * t1) for t0, t1 in self.per_generator],
            mode=self.mode,
            norm0=None if self.norm0 is None else factor * self.norm0,
            norm1=None if self.norm1 is None else factor * self.norm1,
            seed=self.seed,
        )

    def to_json(self) -> dict:
        return {
            "pairs": [
                {"t0": _complex_matrix_to_json(t0), "t1": _complex_matrix_to_json(t1)}
                for t0, t1 in self.per_generator
            ],
            "norm0": self.norm0,
            "norm1": self.norm1,
            "mode": self.mode,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PerturbationModel":
        pairs = [
            (_complex_matrix_from_json(e["t0"]), _complex_matrix_from_json(e["t1"]))
            for e in doc["pairs"]
        ]
        return cls.from_pairs(
            pairs,
            mode=doc.get("mode", "custom"),
            norm0=doc.get("norm0"),
            norm1=doc.get("norm1"),
            seed=doc.get("seed"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "PerturbationModel":
        return cls.from_json(json.loads(text))


@dataclass(frozen=True, eq=False)
class CommutationAnalysis:
    """Commutation splitting of every (generator, r) perturbation term.

    ``t_cr[i]`` and ``p_r[i]`` hold the (r=0, r=1) operators for generator
    i.  ``delta`` is the largest ||P_r|| / ||T_r|| over terms with nonzero
    T_r; ``delta_bound`` the eigenvector-overlap upper bound on it.
    ``singular`` flags generators whose shift is rank-deficient, where P_r
    is the minimum-norm least-squares solution.
    """

    t_cr: tuple
    p_r: tuple
    delta: float
    delta_bound: float
    per_term_delta: tuple = field(default=())
    singular: tuple = field(default=())
    pairing: str = "by_magnitude"


def _check_compatible(shifts: ShiftFamily, model: PerturbationModel) -> None:
    if model.num_generators != shifts.num_generators:
        raise ValueError(
            f"model covers {model.num_generators} generators, family has "
            f"{shifts.num_generators}"
        )
    if model.dimension != shifts.dimension:
        raise ValueError(
            f"model dimension {model.dimension} != family dimension {shifts.dimension}"
        )


def perturb(shifts: ShiftFamily, model: PerturbationModel) -> ShiftFamily:
    """The perturbed family S~_i = S_i + T0_i + T1_i S_i.

    The result is tagged "custom": it is generally neither normal nor
    commuting, and filters realized on it need not come from a homomorphism.
    """
    _check_compatible(shifts, model)
    perturbed = [
        s + t0 + t1 @ s for s, (t0, t1) in zip(shifts.shifts, model.per_generator)
    ]
    return ShiftFamily.from_matrices(perturbed, model_tag="custom")


def _magnitude_order(values: np.ndarray) -> np.ndarray:
    # Descending magnitude; stable so ties keep the incoming (lexicographic)
    # order, which keeps construction and analysis consistent on unitary
    # spectra where every magnitude ties.  Magnitudes are quantized at 1e-9
    # relative so that rounding noise cannot split a genuine tie.
    mag = np.abs(np.asarray(values))
    scale = float(mag.max()) if mag.size and mag.max() > 0 else 1.0
    quantized = np.round(mag / scale * 1e9)
    return np.argsort(-quantized, kind="stable")


def random_perturbation(
    shifts: ShiftFamily,
    norm0: float,
    norm1: float,
    mode: str = "generic",
    seed: int = 0,
) -> PerturbationModel:
    """Draw a normal perturbation model with exact prescribed norms.

    mode="commuting" places random eigenvalues on the family's own joint
    eigenvectors, aligned by magnitude rank against the first generator's
    spectrum, so the commutation factor vanishes (exactly for single
    generators and for families whose generators share a magnitude ranking,
    e.g. unitary shifts).  mode="generic" draws random Hermitian matrices.
    The returned T_r satisfy ||T_r|| == norm_r up to rounding unless the
    requested norm is zero.
    """
    if not (0.0 <= norm0 < 1.0 and 0.0 <= norm1 < 1.0):
        raise ValueError("perturbation norms must lie in [0, 1)")
    if mode not in ("commuting", "generic"):
        raise ValueError(f"unknown mode {mode!r}")
    n, m = shifts.dimension, shifts.num_generators
    rng = np.random.default_rng(seed)

    if mode == "commuting":
        decomp = decompose(shifts)
        vecs = decomp.eigenvectors
        rank = _magnitude_order(decomp.eigenvalues[:, 0])

        def draw(target: float) -> np.ndarray:
            if target == 0.0:
                return np.zeros((n, n), dtype=complex)
            mu = rng.uniform(-1.0, 1.0, size=n)
            mu *= target / np.max(np.abs(mu))
            mu_sorted = mu[_magnitude_order(mu)]
            diag = np.zeros(n)
            diag[rank] = mu_sorted
            return (vecs * diag[None, :]) @ vecs.conj().T

    else:

        def draw(target: float) -> np.ndarray:
            if target == 0.0:
                return np.zeros((n, n), dtype=complex)
            a = rng.standard_normal((n, n))
            h = (a + a.T) / 2.0
            h *= target / operator_norm(h)
            return h.astype(complex)

    pairs = [(draw(norm0), draw(norm1)) for _ in range(m)]
    return PerturbationModel.from_pairs(
        pairs, mode=mode, norm0=norm0, norm1=norm1, seed=seed
    )


def _paired_perturbation_eig(
    lam_i: np.ndarray, t: np.ndarray, pairing: str
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues/vectors of T reordered to partner the shift eigenvalues.

    ``lam_i`` is the i-th generator's eigenvalue list in the joint basis
    order; position j of the returned (mu, v) is the partner of joint
    eigenvector j.
    """
    mu, v = normal_eig(t)
    if pairing == "by_magnitude":
        su, tu = _magnitude_order(lam_i), _magnitude_order(mu)
        inv = np.empty_like(su)
        inv[su] = np.arange(len(su))
        return mu[tu][inv], v[:, tu][:, inv]
    if pairing == "by_index":
        return mu, v
    raise ValueError(f"unknown pairing {pairing!r}")


def commutation_analysis(
    shifts: ShiftFamily,
    model: PerturbationModel,
    pairing: str = "by_magnitude",
    decomp: SpectralDecomposition | None = None,
) -> CommutationAnalysis:
    """Compute T_cr, P_r and the commutation factor for every term.

    T_cr carries the eigenvalues of T_r on the family's joint eigenvectors,
    paired against generator i's spectrum by descending-magnitude rank by
    default (pairing="by_index" pairs lexicographically sorted systems
    instead).  P_r solves S_i P_r = S_i T_r - T_cr S_i; for singular shifts
    the minimum-norm least-squares solution is used and the generator is
    flagged.
    """
    _check_compatible(shifts, model)
    if decomp is None:
        decomp = decompose(shifts)
    u = decomp.eigenvectors
    n = shifts.dimension
    t_cr_all, p_r_all, deltas, singular = [], [], [], []
    for i, (s, (t0, t1)) in enumerate(zip(shifts.shifts, model.per_generator)):
        lam_i = decomp.eigenvalues[:, i]
        rank = int(np.sum(np.abs(lam_i) > 1e-12 * max(1.0, float(np.max(np.abs(lam_i))))))
        singular.append(rank < n)
        s_pinv = np.linalg.pinv(s)
        row_tc, row_pr, row_delta = [], [], []
        for t in (t0, t1):
            norm_t = operator_norm(t)
            if norm_t == 0.0:
                row_tc.append(np.zeros((n, n), dtype=complex))
                row_pr.append(np.zeros((n, n), dtype=complex))
                row_delta.append(0.0)
                continue
            mu, _ = _paired_perturbation_eig(lam_i, t, pairing)
            t_c = (u * mu[None, :]) @ u.conj().T
            p_r = s_pinv @ (s @ t - t_c @ s)
            row_tc.append(t_c)
            row_pr.append(p_r)
            row_delta.append(operator_norm(p_r) / norm_t)
        t_cr_all.append(tuple(row_tc))
        p_r_all.append(tuple(row_pr))
        deltas.append(tuple(row_delta))

    flat = [d for row in deltas for d in row]
    delta = max(flat) if flat else 0.0
    bound = delta_upper_bound(shifts, model, pairing=pairing, decomp=decomp)
    return CommutationAnalysis(
        t_cr=tuple(t_cr_all),
        p_r=tuple(p_r_all),
        delta=float(delta),
        delta_bound=float(bound),
        per_term_delta=tuple(deltas),
        singular=tuple(singular),
        pairing=pairing,
    )


def delta_upper_bound(
    shifts: ShiftFamily,
    model: PerturbationModel,
    pairing: str = "by_magnitude",
    decomp: SpectralDecomposition | None = None,
) -> float:
    """Eigenvector-overlap upper bound on the commutation factor.

    Evaluates, for each term, the double sum over shift eigenvectors u_a
    and perturbation eigenvectors v_b of
    |lambda_a / lambda_max| * ||T_{u_a} T_{v_b} - T_{u_a} T_{u_b}||
    with T_w the rank-one projector onto w, and returns the maximum over
    terms with nonzero T_r.
    """
    _check_compatible(shifts, model)
    if decomp is None:
        decomp = decompose(shifts)
    u = decomp.eigenvectors
    best = 0.0
    for i, (t0, t1) in enumerate(model.per_generator):
        lam_i = decomp.eigenvalues[:, i]
        lam_max = float(np.max(np.abs(lam_i)))
        for t in (t0, t1):
            if operator_norm(t) == 0.0:
                continue
            if lam_max == 0.0:
                raise ModelError("delta bound undefined for a zero shift")
            _, v = _paired_perturbation_eig(lam_i, t, pairing)
            overlaps = u.conj().T @ v  # (a, b) -> <u_a, v_b>
            weights = np.abs(lam_i) / lam_max
            total = 0.0
            for a in range(len(lam_i)):
                # ||T_{u_a} T_{v_b} - T_{u_a} T_{u_b}||
                #   = || conj(<u_a, v_b>) v_b - delta_ab u_b ||
                diff = v * overlaps[a, :].conj()[None, :]
                diff[:, a] -= u[:, a]
                total += weights[a] * float(
                    np.sum(np.sqrt(np.sum(np.abs(diff) ** 2, axis=0)))
                )
            best = max(best, total)
    return best
