"""Experiment runner: declarative configs in, trial reports out.

A single JSON config declares a signal model, a filter set (explicit or a
random recipe), a perturbation grid, and the checks to run.  The runner
executes every trial deterministically (seeds derive from the base seed and
the trial index), writes a CSV of per-trial results, a JSON summary, and
plot-ready two-column text files, and encodes the scientific outcome in its
exit status: 0 all applicable trials pass, 1 usage or config error, 2 bound
violation (with --strict, inapplicable trials also count as violations).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import network as net_mod
from .perturbation import perturb, random_perturbation
from .polynomials import PolynomialFilter, estimate_lipschitz
from .signal_models import (
    ShiftFamily,
    abelian_group_shifts,
    cyclic_shift,
    graph_shift,
    graphon_shift,
    grid2d_shifts,
    load_edge_list,
)
from .stability import (
    INAPPLICABLE,
    PASS,
    VIOLATION,
    certify_filter,
    check_corollary,
    check_theorem1,
    check_theorem2,
    proof_decomposition_check,
)

__all__ = ["ExperimentConfig", "validate_config", "run_experiment", "main"]

CHECK_NAMES = (
    "theorem1",
    "theorem2",
    "corollary",
    "proof_decomposition",
    "layer",
    "network",
)
FORMATS = ("csv", "json", "plotdata")
MODEL_KINDS = ("cyclic", "graph", "graphon", "abelian_group", "grid2d", "file")
GRAPHON_PROFILES = ("constant", "product", "cosine")

CSV_COLUMNS = (
    "trial_id",
    "model_tag",
    "n",
    "m",
    "degree",
    "norm0",
    "norm1",
    "delta",
    "L0",
    "L1",
    "theorem",
    "lhs",
    "rhs",
    "margin",
    "slope",
    "status",
)

# Headroom applied to recipe-declared Lipschitz bounds over the worst-grid
# estimate, so per-trial anchored estimates stay certified.
_DECLARE_HEADROOM = 1.05


@dataclass
class ExperimentConfig:
    model: dict
    filters: object  # list of filter docs, or {"recipe": {...}}
    perturbation_grid: dict
    checks: list
    output: dict
    network: dict = field(default_factory=dict)

    @classmethod
    def from_doc(cls, doc: dict) -> "ExperimentConfig":
        return cls(
            model=doc.get("model", {}),
            filters=doc.get("filters", []),
            perturbation_grid=doc.get("perturbation_grid", {}),
            checks=list(doc.get("checks", [])),
            output=doc.get("output", {}),
            network=doc.get("network", {}),
        )


def _load_doc(path: str):
    """Parse a config file; returns (doc, diagnostics)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        return None, [f"{path}: unreadable: {exc}"]
    try:
        return json.loads(text), []
    except json.JSONDecodeError as exc:
        return None, [f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"]


def _model_generator_count(model: dict) -> int:
    kind = model.get("kind")
    if kind == "grid2d":
        return 2
    if kind == "abelian_group":
        return len(model.get("orders", []) or [1])
    return 1


def validate_config(doc: dict) -> list[str]:
    """Structural and range validation; returns every problem found."""
    problems = []
    if not isinstance(doc, dict):
        return ["config root must be a JSON object"]
    cfg = ExperimentConfig.from_doc(doc)

    kind = cfg.model.get("kind")
    if kind not in MODEL_KINDS:
        problems.append(f"model.kind: expected one of {MODEL_KINDS}, got {kind!r}")
    elif kind == "cyclic" and int(cfg.model.get("n", 0)) < 2:
        problems.append("model.n: cyclic model needs n >= 2")
    elif kind == "graphon":
        if cfg.model.get("profile", "product") not in GRAPHON_PROFILES:
            problems.append(
                f"model.profile: expected one of {GRAPHON_PROFILES}, "
                f"got {cfg.model.get('profile')!r}"
            )
        if int(cfg.model.get("n", 0)) < 2:
            problems.append("model.n: graphon discretization needs n >= 2")
    elif kind == "graph":
        if "edge_list" not in cfg.model and "adjacency" not in cfg.model:
            problems.append("model: graph needs 'edge_list' path or inline 'adjacency'")
    elif kind == "grid2d":
        if int(cfg.model.get("rows", 0)) < 2 or int(cfg.model.get("cols", 0)) < 2:
            problems.append("model: grid2d needs rows, cols >= 2")
    elif kind == "abelian_group":
        orders = cfg.model.get("orders", [])
        if not orders or any(int(o) < 2 for o in orders):
            problems.append("model.orders: need a list of cyclic orders, each >= 2")
    elif kind == "file" and not cfg.model.get("path"):
        problems.append("model.path: file model needs a path")

    m_expected = _model_generator_count(cfg.model)
    if isinstance(cfg.filters, dict):
        recipe = cfg.filters.get("recipe")
        if not isinstance(recipe, dict):
            problems.append("filters: object form must carry a 'recipe'")
        else:
            if int(recipe.get("degree", 0)) < 1:
                problems.append("filters.recipe.degree: need degree >= 1")
            if int(recipe.get("count", 0)) < 1:
                problems.append("filters.recipe.count: need count >= 1")
            if float(recipe.get("lipschitz_target", 1.0)) <= 0:
                problems.append("filters.recipe.lipschitz_target: must be positive")
    elif isinstance(cfg.filters, list):
        if not cfg.filters:
            problems.append("filters: empty list")
        for idx, fdoc in enumerate(cfg.filters):
            try:
                p = PolynomialFilter.from_json(fdoc)
                if p.num_generators != m_expected:
                    problems.append(
                        f"filters[{idx}]: has {p.num_generators} generators, "
                        f"model needs {m_expected}"
                    )
            except Exception as exc:
                problems.append(f"filters[{idx}]: invalid filter document ({exc})")
            for key in ("declared_l0", "declared_l1"):
                if key in fdoc and float(fdoc[key]) <= 0:
                    problems.append(f"filters[{idx}].{key}: must be positive")
    else:
        problems.append("filters: must be a list of filter documents or a recipe object")

    grid = cfg.perturbation_grid
    for key in ("norm0", "norm1"):
        values = grid.get(key, [])
        if not isinstance(values, list) or not values:
            problems.append(f"perturbation_grid.{key}: need a non-empty list")
        else:
            for v in values:
                if not (0.0 <= float(v) < 1.0):
                    problems.append(
                        f"perturbation_grid.{key}: value {v} violates the "
                        "requirement ||T_r|| < 1 (norms must lie in [0, 1))"
                    )
    if grid.get("mode", "generic") not in ("generic", "commuting"):
        problems.append("perturbation_grid.mode: expected 'generic' or 'commuting'")
    if int(grid.get("trials", 0)) < 1:
        problems.append("perturbation_grid.trials: need trials >= 1")

    if not cfg.checks:
        problems.append("checks: need a non-empty list")
    for name in cfg.checks:
        if name not in CHECK_NAMES:
            problems.append(f"checks: unknown check {name!r}; allowed: {CHECK_NAMES}")

    if cfg.network:
        dims = cfg.network.get("dims", [16, 8, 4])
        feats = cfg.network.get("features", [1, 2, 2, 1])
        if len(feats) != len(dims) + 1:
            problems.append("network.features: need len(dims) + 1 entries")
        if any(int(d) < 2 for d in dims):
            problems.append("network.dims: layer dimensions must be >= 2")
        if cfg.network.get("eta", "relu") not in net_mod.NONLINEARITIES:
            problems.append(
                f"network.eta: unknown nonlinearity {cfg.network.get('eta')!r}"
            )

    out = cfg.output
    if not out.get("dir"):
        problems.append("output.dir: required")
    for fmt in out.get("formats", ["csv", "json"]):
        if fmt not in FORMATS:
            problems.append(f"output.formats: unknown format {fmt!r}; allowed: {FORMATS}")
    return problems


def _build_model(model: dict) -> ShiftFamily:
    kind = model["kind"]
    if kind == "cyclic":
        return cyclic_shift(int(model["n"]))
    if kind == "graph":
        if "edge_list" in model:
            return load_edge_list(
                model["edge_list"],
                num_nodes=model.get("num_nodes"),
                variant=model.get("variant", "adjacency"),
            )
        return graph_shift(
            np.asarray(model["adjacency"], dtype=float),
            variant=model.get("variant", "adjacency"),
        )
    if kind == "graphon":
        profile = model.get("profile", "product")
        if profile == "constant":
            c = float(model.get("value", 0.5))
            kernel = lambda u, v: c
        elif profile == "product":
            kernel = lambda u, v: u * v
        else:  # cosine
            kernel = lambda u, v: 0.5 * (1.0 + math.cos(math.pi * (u - v)))
        return graphon_shift(kernel, int(model["n"]))
    if kind == "abelian_group":
        return abelian_group_shifts([int(o) for o in model["orders"]])
    if kind == "grid2d":
        return grid2d_shifts(
            int(model["rows"]), int(model["cols"]), bool(model.get("periodic", True))
        )
    if kind == "file":
        with open(model["path"]) as fh:
            return ShiftFamily.from_json(json.load(fh))
    raise ValueError(f"unknown model kind {kind!r}")


def _random_filter(rng: np.random.Generator, degree: int, m: int) -> PolynomialFilter:
    if m == 1:
        taps = rng.standard_normal(degree + 1)
        return PolynomialFilter.from_taps(taps)
    terms = {}
    for _ in range(3 * (degree + 1)):
        k = tuple(int(e) for e in rng.integers(0, degree + 1, size=m))
        if 0 < sum(k) <= degree:
            terms[k] = float(rng.standard_normal())
    terms[(0,) * m] = float(rng.standard_normal())
    return PolynomialFilter(m, terms)


def _build_filters(cfg: ExperimentConfig, fam: ShiftFamily) -> list[dict]:
    """Resolve the filter set to a list of {filter, declared_l0, declared_l1}."""
    grid = cfg.perturbation_grid
    worst = max(max(float(v) for v in grid["norm0"]), max(float(v) for v in grid["norm1"]))
    top = max(fam.norms())
    worst_radius = 1.05 * max(top, top * (1.0 + worst) + worst)
    out = []
    if isinstance(cfg.filters, dict):
        recipe = cfg.filters["recipe"]
        rng = np.random.default_rng(int(recipe.get("seed", 0)))
        target = float(recipe.get("lipschitz_target", 1.0))
        for _ in range(int(recipe["count"])):
            p = _random_filter(rng, int(recipe["degree"]), fam.num_generators)
            est = estimate_lipschitz(p, worst_radius, 32)
            if est.l0 > 0:
                p = (target / est.l0) * p
            est = estimate_lipschitz(p, worst_radius, 32)
            out.append(
                {
                    "filter": p,
                    "declared_l0": est.l0 * _DECLARE_HEADROOM,
                    "declared_l1": est.l1 * _DECLARE_HEADROOM,
                }
            )
        return out
    for fdoc in cfg.filters:
        out.append(
            {
                "filter": PolynomialFilter.from_json(fdoc),
                "declared_l0": fdoc.get("declared_l0"),
                "declared_l1": fdoc.get("declared_l1"),
            }
        )
    return out


@dataclass
class TrialSpec:
    trial_id: int
    check: str
    filter_idx: int
    norm0: float
    norm1: float
    seed: int
    layer: int = 0


def _enumerate_trials(cfg: ExperimentConfig, num_filters: int, num_layers: int) -> list[TrialSpec]:
    grid = cfg.perturbation_grid
    base_seed = int(grid.get("base_seed", 0))
    trials = int(grid["trials"])
    specs = []
    tid = 0
    for check in cfg.checks:
        if check in ("layer", "network"):
            for n0 in grid["norm0"]:
                for n1 in grid["norm1"]:
                    for t in range(trials):
                        specs.append(
                            TrialSpec(
                                trial_id=tid,
                                check=check,
                                filter_idx=0,
                                norm0=float(n0),
                                norm1=float(n1),
                                seed=base_seed + tid,
                                layer=t % num_layers,
                            )
                        )
                        tid += 1
            continue
        for f_idx in range(num_filters):
            for n0 in grid["norm0"]:
                for n1 in grid["norm1"]:
                    for t in range(trials):
                        specs.append(
                            TrialSpec(
                                trial_id=tid,
                                check=check,
                                filter_idx=f_idx,
                                norm0=float(n0),
                                norm1=float(n1),
                                seed=base_seed + tid,
                            )
                        )
                        tid += 1
    return specs


def _certified(entry: dict, est) -> bool:
    tol = 1.0 + 1e-9
    if entry["declared_l0"] is not None and est.l0 > float(entry["declared_l0"]) * tol:
        return False
    if entry["declared_l1"] is not None and est.l1 > float(entry["declared_l1"]) * tol:
        return False
    return True


def _nan_row(spec: TrialSpec, fam: ShiftFamily, degree, theorem, status, **over):
    row = {
        "trial_id": spec.trial_id,
        "model_tag": fam.model_tag,
        "n": fam.dimension,
        "m": fam.num_generators,
        "degree": degree,
        "norm0": spec.norm0,
        "norm1": spec.norm1,
        "delta": math.nan,
        "L0": math.nan,
        "L1": math.nan,
        "theorem": theorem,
        "lhs": math.nan,
        "rhs": math.nan,
        "margin": math.nan,
        "slope": None,
        "status": status,
    }
    row.update(over)
    return row


def _run_trial(spec: TrialSpec, cfg: ExperimentConfig, fam, filters, network) -> dict:
    grid = cfg.perturbation_grid
    mode = grid.get("mode", "generic")
    rng = np.random.default_rng(spec.seed)

    if spec.check in ("layer", "network"):
        layer_fams = [layer.shifts for layer in network.layers]
        models = [
            random_perturbation(lf, spec.norm0, spec.norm1, mode, seed=spec.seed + 7 * i)
            for i, lf in enumerate(layer_fams)
        ]
        x = rng.standard_normal((network.layers[0].features_in, layer_fams[0].dimension))
        if spec.check == "layer":
            x_prev = rng.standard_normal(
                (network.layers[spec.layer].features_in, layer_fams[spec.layer].dimension)
            )
            trial = net_mod.layer_stability_check(network, spec.layer, models, x_prev)
        else:
            trial = net_mod.network_stability_check(network, models, x)
        degree = max(
            p.degree for row in network.layers[0].bank for p in row
        )
        return _trial_row(spec, network.layers[0].shifts, degree, trial)

    entry = filters[spec.filter_idx]
    p = entry["filter"]
    model = random_perturbation(fam, spec.norm0, spec.norm1, mode, seed=spec.seed)

    if spec.check == "theorem1":
        x = rng.standard_normal(fam.dimension)
        trial = check_theorem1(p, fam, model, x)
        return _trial_row(spec, fam, p.degree, trial)

    if spec.check == "proof_decomposition":
        if fam.num_generators != 1 or not fam.is_normal:
            return _nan_row(
                spec, fam, p.degree, "proof_decomposition", INAPPLICABLE
            )
        report = proof_decomposition_check(p, fam, model)
        mandatory = [
            c for c in report.claims if c.name != "modified_derivative_norm"
        ]
        worst = min(mandatory, key=lambda c: c.slack)
        status = PASS if all(c.passed for c in mandatory) else VIOLATION
        return _nan_row(
            spec, fam, p.degree, "proof_decomposition", status,
            lhs=worst.measured, rhs=worst.bound, margin=worst.slack,
        )

    from .perturbation import perturb

    est = certify_filter(p, fam, perturb(fam, model))
    if spec.check in ("theorem2", "corollary") and not _certified(entry, est):
        theorem = {
            "theorem2": "theorem2" if fam.num_generators == 1 else "theorem4",
            "corollary": "corollary1" if fam.num_generators == 1 else "corollary2",
        }[spec.check]
        return _nan_row(
            spec, fam, p.degree, theorem, INAPPLICABLE,
            L0=est.l0, L1=est.l1,
        )
    if spec.check == "theorem2":
        trial = check_theorem2(p, fam, model, est)
    else:
        x = rng.standard_normal(fam.dimension)
        trial = check_corollary(p, fam, model, x, est)
    return _trial_row(spec, fam, p.degree, trial)


def _trial_row(spec: TrialSpec, fam: ShiftFamily, degree: int, trial) -> dict:
    return {
        "trial_id": spec.trial_id,
        "model_tag": fam.model_tag,
        "n": fam.dimension,
        "m": fam.num_generators,
        "degree": degree,
        "norm0": spec.norm0,
        "norm1": spec.norm1,
        "delta": math.nan if trial.delta is None else trial.delta,
        "L0": math.nan if trial.lipschitz is None else trial.lipschitz.l0,
        "L1": math.nan if trial.lipschitz is None else trial.lipschitz.l1,
        "theorem": trial.theorem,
        "lhs": trial.measured_lhs,
        "rhs": trial.bound_rhs,
        "margin": trial.margin,
        "slope": trial.remainder_slope,
        "status": trial.status,
    }


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_csv(path: str, rows: list[dict]) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_format_value(row[c]) for c in CSV_COLUMNS))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _summarize(rows: list[dict]) -> dict:
    per_theorem: dict = {}
    margins, slopes = [], []
    for row in rows:
        rec = per_theorem.setdefault(
            row["theorem"], {"pass": 0, "violation": 0, "inapplicable": 0}
        )
        rec[row["status"]] += 1
        if row["status"] != INAPPLICABLE and not math.isnan(row["margin"]):
            margins.append(row["margin"])
        if row["slope"] is not None:
            slopes.append(row["slope"])
    summary = {
        "trials": len(rows),
        "per_theorem": per_theorem,
        "violations": sum(rec["violation"] for rec in per_theorem.values()),
        "inapplicable": sum(rec["inapplicable"] for rec in per_theorem.values()),
        "min_margin": min(margins) if margins else None,
        "slope": {
            "count": len(slopes),
            "min": min(slopes) if slopes else None,
            "max": max(slopes) if slopes else None,
            "mean": (sum(slopes) / len(slopes)) if slopes else None,
        },
    }
    return summary


def _write_plotdata(outdir: str, rows: list[dict]) -> None:
    plotdir = os.path.join(outdir, "plotdata")
    os.makedirs(plotdir, exist_ok=True)
    manifest = []
    by_check: dict = {}
    for row in rows:
        if row["status"] == INAPPLICABLE:
            continue
        by_check.setdefault(row["theorem"], {}).setdefault(
            max(row["norm0"], row["norm1"]), []
        ).append(row)
    for theorem, cells in sorted(by_check.items()):
        curves = {"measured": [], "bound": [], "slope": []}
        for xval in sorted(cells):
            cell_rows = cells[xval]
            curves["measured"].append((xval, np.mean([r["lhs"] for r in cell_rows])))
            curves["bound"].append((xval, np.mean([r["rhs"] for r in cell_rows])))
            cs = [r["slope"] for r in cell_rows if r["slope"] is not None]
            if cs:
                curves["slope"].append((xval, float(np.mean(cs))))
        entry = {"check": theorem, "files": {}}
        for name, pts in curves.items():
            if not pts:
                continue
            fname = f"{theorem}_{name}.txt"
            with open(os.path.join(plotdir, fname), "w", newline="") as fh:
                for xv, yv in pts:
                    fh.write(f"{_format_value(float(xv))} {_format_value(float(yv))}\n")
            entry["files"][name] = fname
        manifest.append(entry)
    with open(os.path.join(plotdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(
    doc: dict, out_override=None, seed_override=None, jobs: int = 1, strict: bool = False
) -> int:
    """Execute a validated config document; returns the exit status."""
    problems = validate_config(doc)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    cfg = ExperimentConfig.from_doc(doc)
    if seed_override is not None:
        cfg.perturbation_grid = dict(cfg.perturbation_grid, base_seed=int(seed_override))
    outdir = out_override or cfg.output["dir"]
    os.makedirs(outdir, exist_ok=True)

    fam = _build_model(cfg.model)
    filters = _build_filters(cfg, fam)
    network = None
    if any(c in ("layer", "network") for c in cfg.checks):
        nw = cfg.network or {}
        network = net_mod.demo_network(
            dims=tuple(nw.get("dims", (16, 8, 4))),
            features=tuple(nw.get("features", (1, 2, 2, 1))),
            eta=nw.get("eta", "relu"),
            degree=int(nw.get("degree", 3)),
            seed=int(nw.get("seed", 0)),
        )
    specs = _enumerate_trials(
        cfg, len(filters), network.num_layers if network is not None else 1
    )

    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(
                pool.map(
                    _run_trial,
                    specs,
                    [cfg] * len(specs),
                    [fam] * len(specs),
                    [filters] * len(specs),
                    [network] * len(specs),
                    chunksize=max(1, len(specs) // (4 * jobs) or 1),
                )
            )
    else:
        rows = [_run_trial(s, cfg, fam, filters, network) for s in specs]
    rows.sort(key=lambda r: r["trial_id"])

    formats = cfg.output.get("formats", ["csv", "json"])
    if "csv" in formats:
        _write_csv(os.path.join(outdir, "trials.csv"), rows)
    summary = _summarize(rows)
    if "json" in formats:
        with open(os.path.join(outdir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if "plotdata" in formats:
        _write_plotdata(outdir, rows)

    failures = summary["violations"]
    if strict:
        failures += summary["inapplicable"]
    if failures:
        print(
            f"{failures} failing trial(s); see {os.path.join(outdir, 'trials.csv')}",
            file=sys.stderr,
        )
        return 2
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="algnn",
        description="Run or validate declarative stability experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="override the output directory")
    p_run.add_argument("--seed", type=int, help="override the base seed")
    p_run.add_argument("--jobs", type=int, default=1, help="worker pool size")
    p_run.add_argument(
        "--strict",
        action="store_true",
        help="treat inapplicable trials as failures",
    )
    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    doc, problems = _load_doc(args.config)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    if args.command == "validate":
        problems = validate_config(doc)
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        if not problems:
            print("config ok")
        return 1 if problems else 0
    return run_experiment(
        doc,
        out_override=args.out,
        seed_override=args.seed,
        jobs=args.jobs,
        strict=args.strict,
    )


if __name__ == "__main__":
    sys.exit(main())
