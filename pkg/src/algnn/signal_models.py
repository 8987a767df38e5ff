"""Shift-operator realizations of algebraic signal models.

A signal model is realized here by a :class:`ShiftFamily`: one or more
commuting operators on a finite-dimensional space, one per generator of the
filter algebra.  Constructors are provided for the standard model zoo:
cyclic (classic DSP), graph, discretized graphon, finite abelian group
algebras, and two-dimensional grids with commuting row/column shifts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "SpectralError",
    "ShiftFamily",
    "COMMUTATION_TOL",
    "NORMALITY_TOL",
    "cyclic_shift",
    "graph_shift",
    "graphon_shift",
    "abelian_group_shifts",
    "grid2d_shifts",
    "load_edge_list",
]

# Relative commutator tolerance for accepting a family, and the normality
# defect ceiling required by spectral-path operations.
COMMUTATION_TOL = 1e-10
NORMALITY_TOL = 1e-10


class ModelError(ValueError):
    """A matrix family violates the structural assumptions of its model."""


class SpectralError(ModelError):
    """Spectral machinery was invoked on a family that does not support it."""


def operator_norm(a: np.ndarray) -> float:
    """Largest singular value (the operator 2-norm used throughout)."""
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True, eq=False)
class ShiftFamily:
    """A family of commuting shift operators on a common space.

    Immutable after construction; all operations elsewhere treat it as
    read-only, so instances can be shared freely across workers.
    """

    dimension: int
    shifts: tuple  # tuple of (n, n) complex ndarrays
    model_tag: str = "custom"
    normality_defect: float = field(default=0.0)
    commutation_defect: float = field(default=0.0)

    @classmethod
    def from_matrices(cls, matrices: Sequence[np.ndarray], model_tag: str = "custom") -> "ShiftFamily":
        mats = tuple(np.asarray(m, dtype=complex) for m in matrices)
        if not mats:
            raise ValueError("a shift family needs at least one operator")
        n = mats[0].shape[0]
        for m in mats:
            if m.ndim != 2 or m.shape != (n, n):
                raise ValueError("all shifts must be square of common dimension")
        normality = max(operator_norm(m @ m.conj().T - m.conj().T @ m) for m in mats)
        commutation = 0.0
        for i in range(len(mats)):
            for j in range(i + 1, len(mats)):
                ni, nj = operator_norm(mats[i]), operator_norm(mats[j])
                if ni == 0.0 or nj == 0.0:
                    continue
                commutation = max(
                    commutation,
                    operator_norm(mats[i] @ mats[j] - mats[j] @ mats[i]) / (ni * nj),
                )
        return cls(
            dimension=n,
            shifts=mats,
            model_tag=model_tag,
            normality_defect=normality,
            commutation_defect=commutation,
        )

    @property
    def num_generators(self) -> int:
        return len(self.shifts)

    @property
    def is_normal(self) -> bool:
        return self.normality_defect <= NORMALITY_TOL

    @property
    def is_commuting(self) -> bool:
        return self.commutation_defect <= COMMUTATION_TOL

    def norms(self) -> list[float]:
        return [operator_norm(s) for s in self.shifts]

    def to_json(self) -> dict:
        return {
            "model": self.model_tag,
            "n": self.dimension,
            "shifts": [_complex_matrix_to_json(s) for s in self.shifts],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ShiftFamily":
        mats = [_complex_matrix_from_json(s) for s in doc["shifts"]]
        fam = cls.from_matrices(mats, model_tag=doc.get("model", "custom"))
        if fam.dimension != doc["n"]:
            raise ValueError("declared dimension does not match shift matrices")
        return fam

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "ShiftFamily":
        return cls.from_json(json.loads(text))


def _complex_matrix_to_json(m: np.ndarray) -> list:
    # Row-major, each entry as an [re, im] pair.
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _complex_matrix_from_json(rows: list) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def _cyclic_matrix(n: int) -> np.ndarray:
    # (Cx)_j = x_{(j-1) mod n}: ones on the first subdiagonal, wrapping.
    c = np.zeros((n, n), dtype=complex)
    for j in range(n):
        c[j, (j - 1) % n] = 1.0
    return c


def cyclic_shift(n: int) -> ShiftFamily:
    """Cyclic shift on n points; the generator of circular convolution."""
    if n < 2:
        raise ValueError("cyclic model needs n >= 2")
    return ShiftFamily.from_matrices([_cyclic_matrix(n)], model_tag="cyclic")


def graph_shift(matrix: np.ndarray, variant: str = "adjacency") -> ShiftFamily:
    """Graph shift from a symmetric matrix.

    With ``variant="adjacency"`` the matrix is used as-is; with
    ``variant="laplacian"`` the input is interpreted as an adjacency matrix
    and the combinatorial Laplacian D - A is built from it.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("graph matrix must be square")
    if np.max(np.abs(a - a.T)) > 1e-12:
        raise ModelError("graph matrix must be symmetric (within 1e-12)")
    if variant == "adjacency":
        s = a
    elif variant == "laplacian":
        s = np.diag(a.sum(axis=1)) - a
    else:
        raise ValueError(f"unknown graph variant {variant!r}")
    return ShiftFamily.from_matrices([s.astype(complex)], model_tag="graph")


def graphon_shift(kernel: Callable[[float, float], float], n: int) -> ShiftFamily:
    """Midpoint discretization of a graphon integral operator.

    The n-point quadrature of (Sx)(u) = integral of W(u, v) x(v) dv uses
    midpoints u_j = (j - 1/2)/n with the 1/n weight folded into the matrix,
    so downstream operations see a plain symmetric matrix.
    """
    if n < 2:
        raise ValueError("graphon discretization needs n >= 2")
    u = (np.arange(n) + 0.5) / n
    w = np.array([[kernel(ui, vj) for vj in u] for ui in u], dtype=float)
    if np.min(w) < -1e-12 or np.max(w) > 1.0 + 1e-12:
        raise ModelError("graphon kernel must take values in [0, 1]")
    if np.max(np.abs(w - w.T)) > 1e-12:
        raise ModelError("graphon kernel must be symmetric")
    s = (w / n).astype(complex)
    return ShiftFamily.from_matrices([s], model_tag="graphon")


def abelian_group_shifts(orders: Sequence[int]) -> ShiftFamily:
    """Shift family for the group algebra of Z_{n_1} x ... x Z_{n_m}.

    One Kronecker-structured cyclic permutation per factor; polynomial
    filters in these shifts realize group convolution on the product group.
    """
    orders = list(orders)
    if not orders:
        raise ValueError("at least one cyclic factor required")
    if any(nj < 2 for nj in orders):
        raise ValueError("each cyclic factor needs order >= 2")
    mats = []
    for j, nj in enumerate(orders):
        factors = [np.eye(nk, dtype=complex) for nk in orders]
        factors[j] = _cyclic_matrix(nj)
        m = factors[0]
        for f in factors[1:]:
            m = np.kron(m, f)
        mats.append(m)
    return ShiftFamily.from_matrices(mats, model_tag="abelian_group")


def grid2d_shifts(rows: int, cols: int, periodic: bool = True) -> ShiftFamily:
    """Two commuting shifts on a rows x cols grid (row-shift, column-shift).

    Periodic grids use circulant factors (row-circulant (x) I, I (x)
    col-circulant); non-periodic grids use symmetric path-graph adjacency
    factors, which are normal and still commute.
    """
    if rows < 2 or cols < 2:
        raise ValueError("grid needs rows, cols >= 2")
    if periodic:
        fr, fc = _cyclic_matrix(rows), _cyclic_matrix(cols)
        tag = "grid2d"
    else:
        fr, fc = _path_adjacency(rows), _path_adjacency(cols)
        tag = "grid2d"
    s1 = np.kron(fr, np.eye(cols, dtype=complex))
    s2 = np.kron(np.eye(rows, dtype=complex), fc)
    return ShiftFamily.from_matrices([s1, s2], model_tag=tag)


def _path_adjacency(n: int) -> np.ndarray:
    a = np.zeros((n, n), dtype=complex)
    idx = np.arange(n - 1)
    a[idx, idx + 1] = 1.0
    a[idx + 1, idx] = 1.0
    return a


def load_edge_list(path: str, num_nodes: int | None = None, variant: str = "adjacency") -> ShiftFamily:
    """Build a graph shift from a text edge list: one "u v [weight]" per line.

    Nodes are 0-indexed; missing weights default to 1.0; edges are
    symmetrized.  Blank lines and lines starting with '#' are skipped.
    """
    edges = []
    max_node = -1
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'u v [weight]'")
            u, v = int(parts[0]), int(parts[1])
            wt = float(parts[2]) if len(parts) == 3 else 1.0
            if u < 0 or v < 0:
                raise ValueError(f"{path}:{lineno}: node ids must be non-negative")
            edges.append((u, v, wt))
            max_node = max(max_node, u, v)
    n = num_nodes if num_nodes is not None else max_node + 1
    if n < 2:
        raise ValueError("edge list defines fewer than 2 nodes")
    a = np.zeros((n, n), dtype=float)
    for u, v, wt in edges:
        if u >= n or v >= n:
            raise ValueError(f"edge ({u}, {v}) exceeds declared node count {n}")
        a[u, v] = wt
        a[v, u] = wt
    return graph_shift(a, variant=variant)
