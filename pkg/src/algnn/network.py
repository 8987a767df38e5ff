"""Stacked algebraic neural networks and their stability checks.

A network is a stack of layers, each an algebraic signal model: a shift
family, a bank of polynomial filters mapping input features to output
features, a pointwise nonlinearity with unit Lipschitz constant and zero
fixed point, and a norm-nonincreasing pooling map into the next layer's
space.  Perturbing the network perturbs each layer's shifts; the filter
coefficients are re-realized on the perturbed shifts unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .frechet import frechet_apply
from .perturbation import PerturbationModel, commutation_analysis, perturb
from .polynomials import PolynomialFilter, eval_operator, eval_scalar
from .signal_models import ShiftFamily, cyclic_shift, operator_norm
from .spectral import decompose
from .stability import (
    INAPPLICABLE,
    MARGIN_RTOL,
    PASS,
    SWEEP_SCALES,
    VIOLATION,
    StabilityTrial,
    certify_filter,
    spectrum_enclosure_radius,
)

__all__ = [
    "Pooling",
    "Layer",
    "AlgNNSpec",
    "LayerConstants",
    "NONLINEARITIES",
    "forward",
    "layer_constants",
    "layer_stability_check",
    "network_stability_check",
    "demo_network",
    "load_network",
]


def _relu(z: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(z):
        return np.maximum(z.real, 0.0) + 1j * np.maximum(z.imag, 0.0)
    return np.maximum(z, 0.0)


def _abs(z: np.ndarray) -> np.ndarray:
    return np.abs(z)


def _tanh(z: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(z):
        return np.tanh(z.real) + 1j * np.tanh(z.imag)
    return np.tanh(z)


def _identity(z: np.ndarray) -> np.ndarray:
    return z


# Every entry is 1-Lipschitz with 0 as a fixed point; complex inputs are
# handled componentwise on real and imaginary parts (modulus for abs).
NONLINEARITIES = {
    "relu": _relu,
    "abs": _abs,
    "tanh": _tanh,
    "identity": _identity,
}
ETA_LIPSCHITZ = {name: 1.0 for name in NONLINEARITIES}


@dataclass(frozen=True)
class Pooling:
    """Pooling spec: identity, decimation by a factor, or spectral truncation.

    Spectral pooling projects onto the k smallest-|lambda| eigenvectors of
    the layer's shift (``order="largest"`` flips the selection) and
    re-expresses the coefficients on the first k eigenvectors of the next
    layer's shift.
    """

    kind: str = "identity"
    k: int | None = None
    order: str = "smallest"

    def __post_init__(self):
        if self.kind not in ("identity", "decimation", "spectral"):
            raise ValueError(f"unknown pooling kind {self.kind!r}")
        if self.kind in ("decimation", "spectral") and (self.k is None or self.k < 1):
            raise ValueError(f"{self.kind} pooling needs a positive k")
        if self.order not in ("smallest", "largest"):
            raise ValueError("pooling order must be 'smallest' or 'largest'")

    def to_json(self) -> dict:
        return {"kind": self.kind, "k": self.k, "order": self.order}

    @classmethod
    def from_json(cls, doc: dict) -> "Pooling":
        return cls(
            kind=doc.get("kind", "identity"),
            k=doc.get("k"),
            order=doc.get("order", "smallest"),
        )


@dataclass(frozen=True, eq=False)
class Layer:
    """One layer: shift family, filter bank, nonlinearity, pooling.

    ``bank[g][f]`` filters input feature g into output feature f; all
    filters act on this layer's shifts.
    """

    shifts: ShiftFamily
    bank: tuple  # bank[g][f] -> PolynomialFilter
    eta: str = "identity"
    pooling: Pooling = field(default_factory=Pooling)

    def __post_init__(self):
        if self.eta not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.eta!r}")
        if not self.bank or not all(len(row) == len(self.bank[0]) for row in self.bank):
            raise ValueError("filter bank must be a non-empty rectangular table")
        for row in self.bank:
            for p in row:
                if p.num_generators != self.shifts.num_generators:
                    raise ValueError("bank filter generator count mismatch")
        object.__setattr__(self, "bank", tuple(tuple(row) for row in self.bank))

    @property
    def features_in(self) -> int:
        return len(self.bank)

    @property
    def features_out(self) -> int:
        return len(self.bank[0])


def _eig_selection(family: ShiftFamily, k: int, order: str) -> np.ndarray:
    decomp = decompose(family)
    mags = np.abs(decomp.eigenvalues[:, 0])
    idx = np.argsort(mags if order == "smallest" else -mags, kind="stable")[:k]
    return decomp.eigenvectors[:, np.sort(idx)]


def _pooling_matrix(layer: Layer, next_shifts: ShiftFamily | None) -> np.ndarray:
    n = layer.shifts.dimension
    pool = layer.pooling
    if pool.kind == "identity":
        return np.eye(n, dtype=complex)
    if pool.kind == "decimation":
        keep = np.arange(0, n, pool.k)
        return np.eye(n, dtype=complex)[keep, :]
    # spectral
    phi_this = _eig_selection(layer.shifts, pool.k, pool.order)
    if next_shifts is None:
        phi_next = phi_this
    else:
        phi_next = _eig_selection(next_shifts, pool.k, pool.order)
    return phi_next @ phi_this.conj().T


@dataclass(frozen=True, eq=False)
class AlgNNSpec:
    """A validated layered network with resolved pooling maps."""

    layers: tuple
    pool_matrices: tuple = field(default=())

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        object.__setattr__(self, "layers", layers)
        mats = []
        for ell, layer in enumerate(layers):
            nxt = layers[ell + 1].shifts if ell + 1 < len(layers) else None
            pm = _pooling_matrix(layer, nxt)
            norm = operator_norm(pm)
            if norm > 1.0 + 1e-10:
                raise ValueError(f"layer {ell} pooling is norm-increasing ({norm:.6f})")
            if nxt is not None and pm.shape[0] != nxt.dimension:
                raise ValueError(
                    f"layer {ell} pooling output dim {pm.shape[0]} != next layer dim "
                    f"{nxt.dimension}"
                )
            mats.append(pm)
        object.__setattr__(self, "pool_matrices", tuple(mats))
        for ell in range(1, len(layers)):
            if layers[ell].features_in != layers[ell - 1].features_out:
                raise ValueError(f"feature count mismatch between layers {ell-1} and {ell}")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def feature_counts(self) -> tuple:
        return (self.layers[0].features_in,) + tuple(
            layer.features_out for layer in self.layers
        )

    def to_json(self) -> dict:
        return {
            "layers": [
                {
                    "model": layer.shifts.to_json(),
                    "filters": [[p.to_json() for p in row] for row in layer.bank],
                    "eta": layer.eta,
                    "pooling": layer.pooling.to_json(),
                }
                for layer in self.layers
            ]
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def load_network(doc) -> AlgNNSpec:
    """Build a network from its JSON document (dict, JSON text, or path)."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError:
            with open(doc) as fh:
                doc = json.load(fh)
    layers = []
    for entry in doc["layers"]:
        layers.append(
            Layer(
                shifts=ShiftFamily.from_json(entry["model"]),
                bank=tuple(
                    tuple(PolynomialFilter.from_json(p) for p in row)
                    for row in entry["filters"]
                ),
                eta=entry.get("eta", "identity"),
                pooling=Pooling.from_json(entry.get("pooling", {})),
            )
        )
    return AlgNNSpec(layers=tuple(layers))


def _layer_apply(
    net: AlgNNSpec, ell: int, x: np.ndarray, family: ShiftFamily
) -> np.ndarray:
    """One layer's map on a (features_in, n) array: filters, eta, pooling."""
    layer = net.layers[ell]
    eta = NONLINEARITIES[layer.eta]
    pool = net.pool_matrices[ell]
    f_out = layer.features_out
    ops = [
        [eval_operator(layer.bank[g][f], family) for f in range(f_out)]
        for g in range(layer.features_in)
    ]
    out = []
    for f in range(f_out):
        y = np.zeros(layer.shifts.dimension, dtype=complex)
        for g in range(layer.features_in):
            y = y + ops[g][f] @ x[g]
        out.append(pool @ np.asarray(eta(y), dtype=complex))
    return np.stack(out, axis=0)


def forward(
    net: AlgNNSpec, x: np.ndarray, families: list[ShiftFamily] | None = None
) -> np.ndarray:
    """Run the network on (F_0, n_0) input features.

    ``families`` optionally substitutes a shift family per layer (same
    coefficients realized on different shifts), which is how the perturbed
    network is evaluated.
    """
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    if x.shape != (net.layers[0].features_in, net.layers[0].shifts.dimension):
        raise ValueError(
            f"input must be (features, n) = "
            f"({net.layers[0].features_in}, {net.layers[0].shifts.dimension})"
        )
    for ell in range(net.num_layers):
        fam = families[ell] if families is not None else net.layers[ell].shifts
        fam = fam if fam is not None else net.layers[ell].shifts
        x = _layer_apply(net, ell, x, fam)
    return x


@dataclass(frozen=True)
class LayerConstants:
    """Certified per-layer constants entering the network bound."""

    c: float  # Lipschitz constant of the layer map sigma = pooling o eta
    b: float  # filter-bank norm bound
    delta_l: float  # per-layer stability increment
    l0: float
    l1: float
    delta: float
    sup_t: float
    sup_dt: float


def layer_constants(
    net: AlgNNSpec,
    ell: int,
    model: PerturbationModel | None = None,
    grid_resolution: int = 24,
) -> LayerConstants:
    """Compute (C, B, Delta) for one layer, certifying over both spectra.

    C is the nonlinearity constant times the pooling norm (both at most
    one by construction).  B is the largest filter symbol magnitude over
    the layer's spectrum, maximized with the realized operator norm on the
    perturbed shifts when a perturbation is given.  Delta is the layer's
    first-order stability increment; zero for an unperturbed layer.
    """
    layer = net.layers[ell]
    c = ETA_LIPSCHITZ[layer.eta] * operator_norm(net.pool_matrices[ell])
    decomp = decompose(layer.shifts)
    b = 0.0
    for row in layer.bank:
        for p in row:
            b = max(
                b,
                max(abs(eval_scalar(p, lam)) for lam in decomp.eigenvalues),
            )
    if model is None:
        return LayerConstants(
            c=float(c), b=float(b), delta_l=0.0, l0=0.0, l1=0.0,
            delta=0.0, sup_t=0.0, sup_dt=0.0,
        )
    perturbed = perturb(layer.shifts, model)
    for row in layer.bank:
        for p in row:
            b = max(b, operator_norm(eval_operator(p, perturbed)))
    l0 = l1 = 0.0
    for row in layer.bank:
        for p in row:
            est = certify_filter(p, layer.shifts, perturbed, grid_resolution)
            l0, l1 = max(l0, est.l0), max(l1, est.l1)
    analysis = commutation_analysis(layer.shifts, model)
    ts = model.applied_to(layer.shifts)
    sup_t = max(operator_norm(t) for t in ts)
    sup_dt = max(operator_norm(t1) for _, t1 in model.per_generator)
    delta_l = (1.0 + analysis.delta) * (l0 * sup_t + l1 * sup_dt)
    return LayerConstants(
        c=float(c), b=float(b), delta_l=float(delta_l), l0=float(l0),
        l1=float(l1), delta=float(analysis.delta), sup_t=float(sup_t),
        sup_dt=float(sup_dt),
    )


def _frobenius(x: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(x).ravel()))


def _scaled_models(models, s: float):
    return [m.scaled(s) if m is not None else None for m in models]


def _norm_check_args(net, models):
    if len(models) != net.num_layers:
        raise ValueError("need one perturbation entry (or None) per layer")
    return list(models)


def layer_stability_check(
    net: AlgNNSpec,
    ell: int,
    models,
    x_prev: np.ndarray,
    grid_resolution: int = 24,
) -> StabilityTrial:
    """Single-layer stability: perturbed vs unperturbed layer map on x_prev.

    The bound is C_l (1 + delta_l)(L0 sup ||T(S_l)|| + L1 sup ||D_T(S_l)||)
    times ||x_prev||, with a sqrt(F_in F_out) feature factor for
    multi-feature layers, plus the swept quadratic remainder.
    """
    models = _norm_check_args(net, models)
    layer = net.layers[ell]
    model = models[ell]
    x_prev = np.atleast_2d(np.asarray(x_prev, dtype=complex))
    theorem = "theorem5"
    if layer.shifts.num_generators != 1:
        return _net_inapplicable(theorem, net, models, "layer checks are single-generator")
    if model is None:
        model = PerturbationModel.from_pairs(
            [
                (np.zeros((layer.shifts.dimension,) * 2), np.zeros((layer.shifts.dimension,) * 2))
            ]
        )
    consts = layer_constants(net, ell, model, grid_resolution)
    feature_factor = float(np.sqrt(layer.features_in * layer.features_out))
    xnorm = _frobenius(x_prev)
    linear = consts.c * consts.delta_l * feature_factor * xnorm

    base_out = _layer_apply(net, ell, x_prev, layer.shifts)

    def lhs_at(scale: float) -> float:
        fam = perturb(layer.shifts, model if scale == 1.0 else model.scaled(scale))
        return _frobenius(_layer_apply(net, ell, x_prev, fam) - base_out)

    lhs = lhs_at(1.0)
    residuals, scales = [lhs - linear], [1.0]
    for s in SWEEP_SCALES:
        residuals.append(lhs_at(s) - s * linear)
        scales.append(s)
    envelope = max(max(0.0, r) / s**2 for r, s in zip(residuals, scales))
    slope = _positive_slope(residuals[1:], scales[1:], xnorm)
    rhs = linear + envelope
    margin = rhs - lhs
    status = PASS if margin >= -MARGIN_RTOL * max(abs(rhs), 1e-300) else VIOLATION
    return StabilityTrial(
        theorem=theorem,
        filter=layer.bank[0][0],
        shifts=layer.shifts,
        perturbation=model,
        measured_lhs=lhs,
        bound_rhs=rhs,
        margin=margin,
        status=status,
        signal=x_prev,
        remainder_slope=slope,
        delta=consts.delta,
        details={
            "linear_bound": linear,
            "layer": ell,
            "constants": consts,
            "feature_factor": feature_factor,
            "remainder_envelope": envelope,
        },
    )


def _positive_slope(residuals, scales, scale_ref) -> float | None:
    floor = 1e-13 * max(1.0, scale_ref)
    usable = [(s, r) for s, r in zip(scales, residuals) if r > floor]
    if len(usable) < 2:
        return None
    ls = np.log([s for s, _ in usable])
    lr = np.log([r for _, r in usable])
    return float(np.polyfit(ls, lr, 1)[0])


def _net_inapplicable(theorem, net, models, reason) -> StabilityTrial:
    layer = net.layers[0]
    model = models[0] if models and models[0] is not None else None
    if model is None:
        n = layer.shifts.dimension
        model = PerturbationModel.from_pairs([(np.zeros((n, n)), np.zeros((n, n)))])
    return StabilityTrial(
        theorem=theorem,
        filter=layer.bank[0][0],
        shifts=layer.shifts,
        perturbation=model,
        measured_lhs=float("nan"),
        bound_rhs=float("nan"),
        margin=float("nan"),
        status=INAPPLICABLE,
        details={"reason": reason},
    )


def network_bound_terms(
    net: AlgNNSpec, models, grid_resolution: int = 24
) -> tuple[list[float], list[LayerConstants]]:
    """Per-layer terms of the network stability sum (empty products = 1)."""
    models = _norm_check_args(net, models)
    consts = [
        layer_constants(net, ell, models[ell], grid_resolution)
        for ell in range(net.num_layers)
    ]
    feats = net.feature_counts  # F_0 .. F_L
    L = net.num_layers
    terms = []
    for ell in range(1, L + 1):
        delta_l = consts[ell - 1].delta_l
        prod_c = float(np.prod([consts[r - 1].c for r in range(ell, L + 1)]))
        prod_b = float(np.prod([consts[r - 1].b for r in range(ell + 1, L + 1)]))
        prod_f = float(np.prod([feats[r] for r in range(ell, L)]))
        prod_cfb = float(
            np.prod([consts[r - 1].c * feats[r] * consts[r - 1].b for r in range(1, ell)])
        )
        terms.append(delta_l * prod_c * prod_b * prod_f * prod_cfb)
    return terms, consts


def network_stability_check(
    net: AlgNNSpec,
    models,
    x: np.ndarray,
    grid_resolution: int = 24,
) -> StabilityTrial:
    """Whole-network stability: perturbed vs unperturbed forward pass.

    The bound follows the multi-feature chain: sqrt(F_0 F_L) times the sum
    over layers of Delta_l scaled by the downstream Lipschitz/bank factors
    and the feature counts, with empty products equal to one, plus the
    swept quadratic remainder.  The single-feature statement variant
    (feature factors dropped) is recorded in the details for comparison.
    """
    models = _norm_check_args(net, models)
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    theorem = "theorem6"
    if any(layer.shifts.num_generators != 1 for layer in net.layers):
        return _net_inapplicable(theorem, net, models, "network checks are single-generator")
    terms, consts = network_bound_terms(net, models, grid_resolution)
    feats = net.feature_counts
    xnorm = _frobenius(x)
    linear = float(np.sqrt(feats[0] * feats[-1])) * sum(terms) * xnorm
    statement_variant = sum(
        t / float(np.prod([feats[r] for r in range(ell, net.num_layers)]))
        / float(np.prod([feats[r] for r in range(1, ell)]))
        for ell, t in enumerate(terms, start=1)
    ) * xnorm

    base_out = forward(net, x)

    def lhs_at(scale: float) -> float:
        fams = []
        for ell in range(net.num_layers):
            m = models[ell]
            if m is None:
                fams.append(net.layers[ell].shifts)
            else:
                fams.append(
                    perturb(net.layers[ell].shifts, m if scale == 1.0 else m.scaled(scale))
                )
        return _frobenius(forward(net, x, fams) - base_out)

    lhs = lhs_at(1.0)
    residuals, scales = [lhs - linear], [1.0]
    for s in SWEEP_SCALES:
        residuals.append(lhs_at(s) - s * linear)
        scales.append(s)
    envelope = max(max(0.0, r) / s**2 for r, s in zip(residuals, scales))
    slope = _positive_slope(residuals[1:], scales[1:], xnorm)
    rhs = linear + envelope
    margin = rhs - lhs
    status = PASS if margin >= -MARGIN_RTOL * max(abs(rhs), 1e-300) else VIOLATION
    first_model = next((m for m in models if m is not None), None)
    if first_model is None:
        n = net.layers[0].shifts.dimension
        first_model = PerturbationModel.from_pairs([(np.zeros((n, n)), np.zeros((n, n)))])
    return StabilityTrial(
        theorem=theorem,
        filter=net.layers[0].bank[0][0],
        shifts=net.layers[0].shifts,
        perturbation=first_model,
        measured_lhs=lhs,
        bound_rhs=rhs,
        margin=margin,
        status=status,
        signal=x,
        remainder_slope=slope,
        delta=max((c.delta for c in consts), default=0.0),
        details={
            "linear_bound": linear,
            "terms": terms,
            "statement_variant_bound": statement_variant,
            "constants": consts,
            "remainder_envelope": envelope,
        },
    )


def demo_network(
    dims=(16, 8, 4),
    features=(1, 2, 2, 1),
    eta: str = "relu",
    degree: int = 3,
    seed: int = 0,
) -> AlgNNSpec:
    """Cyclic demo network with spectral pooling between layers.

    Layer shifts are cyclic of the given dimensions; banks are random
    filters with taps normalized to unit absolute sum (so every filter has
    spectral bound at most one on the unit circle).
    """
    if len(features) != len(dims) + 1:
        raise ValueError("need len(dims) + 1 feature counts")
    rng = np.random.default_rng(seed)
    layers = []
    for ell, n in enumerate(dims):
        f_in, f_out = features[ell], features[ell + 1]
        bank = []
        for _ in range(f_in):
            row = []
            for _ in range(f_out):
                taps = rng.standard_normal(degree + 1)
                taps /= np.sum(np.abs(taps))
                row.append(PolynomialFilter.from_taps(taps))
            bank.append(tuple(row))
        if ell + 1 < len(dims):
            pooling = Pooling(kind="spectral", k=dims[ell + 1])
        else:
            pooling = Pooling(kind="identity")
        layers.append(
            Layer(shifts=cyclic_shift(n), bank=tuple(bank), eta=eta, pooling=pooling)
        )
    return AlgNNSpec(layers=tuple(layers))
