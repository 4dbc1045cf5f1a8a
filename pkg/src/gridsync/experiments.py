"""Config-driven experiment runs, parameter sweeps and result manifests.

A config is one YAML (or JSON) document::

    kind: toy-mse
    seed: 1
    params: {d: 2, L: 64, sigma2: 1.0}
    sweep: {L: [16, 32, 64]}     # optional, at most two axes

Every run writes ``results.csv`` (or ``results.jsonl``) and ``manifest.json``
to the output directory.  Rows carry the config hash, the code version and
the seed actually used; the wall-clock timestamp lives only in the manifest
so that result files are byte-identical across re-runs.

Seeds.  Sweep cells use ``derive_seed(master, cell)`` where ``cell`` is the
mapping of swept parameter names to values, so a cell's rows depend only on
its own coordinates.  Inside a run, instance ``i`` uses
``derive_seed(seed, "instance", i)``.  Parallel work is mapped over cells or
instances and collected in index order, so the worker count never changes
the output bytes.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import yaml

from . import __version__
from .bounds import (
    channel_floor_decomposition,
    nonrecovery_bound,
    percolation_probe,
    psi_quadratic_check,
    spin_wave_profile,
    toy_mse,
    toy_mse_empirical,
)
from .channels import (
    ChannelSpec,
    DensitySpec,
    OrthGaussian,
    TruthMode,
    Z2Flip,
    channel_from_dict,
    generate_instance,
    lambda_for_channel,
    verify_unbiasedness,
)
from .gibbs import phase_scan
from .grid import build_grid
from .groups import Variant, aligned
from .io import file_sha256, save_instance, write_table
from .multiscale import BlockSchedule, build_block_tree, recover_pairs, sample_pairs, schedule_preset, synchronize
from .paths import (
    EstimatorParams,
    eit_diagnostic,
    estimate_axis,
    estimate_diagonal,
    estimate_pair,
    measure_from_name,
)

SEED_MAX = 2**64


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the violated constraint."""


def derive_seed(master: int, *parts) -> int:
    """64-bit seed from the master seed and a JSON-serializable key."""
    key = json.dumps([int(master), list(parts)], sort_keys=True, separators=(",", ":"))
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


# -- config ------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)
    seed: Optional[int] = None
    workers: int = 1
    out: str = "results"
    format: str = "csv"
    sweep: dict = field(default_factory=dict)
    max_cells: int = 64

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "params": dict(self.params), "seed": self.seed, "workers": self.workers,
            "out": self.out, "format": self.format, "sweep": {k: list(v) for k, v in self.sweep.items()},
            "max_cells": self.max_cells,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config document must be a mapping")
        unknown = set(d) - {"kind", "params", "seed", "workers", "out", "format", "sweep", "max_cells"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("config needs an experiment 'kind'")
        params = d.get("params") or {}
        sweep = d.get("sweep") or {}
        if not isinstance(params, dict):
            raise ConfigError("'params' must be a mapping")
        if not isinstance(sweep, dict):
            raise ConfigError("'sweep' must be a mapping of parameter name to a list of values")
        return cls(
            kind=str(d["kind"]), params=dict(params), seed=d.get("seed"),
            workers=d.get("workers", 1), out=str(d.get("out", "results")), format=str(d.get("format", "csv")),
            sweep={str(k): (list(v) if isinstance(v, (list, tuple)) else [v]) for k, v in sweep.items()},
            max_cells=d.get("max_cells", 64),
        )

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        return cls.from_dict(doc or {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_yaml(text)


# -- runners -------------------------------------------------------------------

@dataclass
class Runner:
    fn: Callable
    defaults: dict
    stochastic: Callable[[dict], bool] = lambda p: True


def _as_list(x) -> list:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _channel(p: dict, default_p: float) -> ChannelSpec:
    if p.get("channel") is not None and p.get("p") is not None:
        raise ConfigError("give either 'channel' or the Z2 shortcut 'p', not both")
    if p.get("channel") is None:
        return Z2Flip(float(default_p if p.get("p") is None else p["p"]))
    ch = p["channel"]
    if not isinstance(ch, dict):
        raise ConfigError("'channel' must be a mapping with a 'kind' field")
    try:
        return channel_from_dict(ch)
    except KeyError as exc:
        raise ConfigError(f"channel {ch.get('kind')!r} is missing field {exc}") from None


def _pmap(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _alignment(variant: Variant, a, raw, b) -> float:
    z = aligned(variant, a, raw, b)
    if variant is Variant.U1:
        return float(np.real(z))
    z = np.asarray(z, dtype=float)
    return float(np.trace(z) / z.shape[0]) if z.ndim == 2 else float(z)


def run_generate(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    channel = _channel(p, 0.1)
    g = build_grid(int(p["d"]), p["extents"], p["boundary"])
    inst = generate_instance(g, channel, TruthMode(p["truth_mode"]), seed=seed)
    path = save_instance(inst, ctx.out / "instances" / f"instance{ctx.tag}.gsi")
    variant = inst.variant
    tails, heads = inst.truth[g.edge_tail], inst.truth[g.edge_head]
    obs = inst.obs
    if variant is Variant.Z2:
        align = (tails * obs * heads).astype(float)
    elif variant is Variant.U1:
        align = np.cos(tails + obs - heads)
    else:
        align = np.einsum("eij,ejk,elk->eil", tails, obs, heads).trace(axis1=1, axis2=2) / inst.m
    row = {
        "n_vertices": g.n_vertices, "n_edges": g.n_edges, "variant": variant.value,
        "mean_alignment": float(align.mean()) if align.size else float("nan"),
        "agreement": float(np.mean(align > 1 - 1e-9)) if align.size else float("nan"),
        "instance_file": str(path.relative_to(ctx.out)), "instance_sha256": file_sha256(path),
    }
    return [row], {}


def _path_instance(i: int, p: dict, seed: int) -> dict:
    channel = _channel(p, 0.025)
    g = build_grid(int(p["d"]), p["L"], "free")
    inst = generate_instance(g, channel, TruthMode.HAAR, seed=derive_seed(seed, "instance", i))
    kw = {"spread": float(p["spread"])} if p["measure"] == "hierarchical" else {}
    measure = measure_from_name(p["measure"], **kw)
    rng = np.random.default_rng(derive_seed(seed, "paths", i))
    lam = None if p["lam"] is None else float(p["lam"])
    n = int(p["n"])
    if p["mode"] == "diagonal":
        rep = estimate_diagonal(inst, n, int(p["n_paths"]), measure, lam, rng)
    elif p["mode"] == "axis":
        params = EstimatorParams(int(p["n_paths"]), measure, lam)
        rep = estimate_axis(inst, int(p["axis"]), n, params, rng=rng)
    else:
        params = EstimatorParams(int(p["n_paths"]), measure, lam)
        rep = estimate_pair(inst, p["x"], p["y"], params, rng=rng)
    a = inst.truth[g.vertex_index(rep.start)]
    b = inst.truth[g.vertex_index(rep.end)]
    return {
        "alignment": _alignment(inst.variant, a, rep.raw, b),
        "misalignment": rep.misalignment,
        "success": float(rep.success),
        "bound_ok": float(rep.product_bound_ok),
        "lambda": rep.lambda_used,
    }


def _mean_se(x) -> Tuple[float, float]:
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(x.mean()), se


def run_path_estimate(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    if p["mode"] not in ("diagonal", "axis", "pair"):
        raise ConfigError(f"mode must be 'diagonal', 'axis' or 'pair', got {p['mode']!r}")
    if p["mode"] == "pair" and (p["x"] is None or p["y"] is None):
        raise ConfigError("mode 'pair' needs vertex coordinates 'x' and 'y'")
    if int(p["n_instances"]) < 1:
        raise ConfigError(f"n_instances must be >= 1, got {p['n_instances']}")
    _channel(p, 0.025)  # validate before spawning workers
    res = _pmap(partial(_path_instance, p=p, seed=seed), list(range(int(p["n_instances"]))), ctx.workers)
    al, al_se = _mean_se([r["alignment"] for r in res])
    mis, mis_se = _mean_se([r["misalignment"] for r in res])
    row = {
        "mode": p["mode"], "n": int(p["n"]), "n_paths": int(p["n_paths"]), "measure": p["measure"],
        "lambda": res[0]["lambda"], "n_instances": len(res),
        "mean_alignment": al, "alignment_stderr": al_se,
        "mean_misalignment": mis, "misalignment_stderr": mis_se,
        "success_rate": float(np.mean([r["success"] for r in res])),
        "bound_ok_rate": float(np.mean([r["bound_ok"] for r in res])),
    }
    return [row], {}


def _schedule(p: dict) -> BlockSchedule:
    """Explicit ``sides`` or a preset name ("desk" or "asymptotic")."""
    sides = p["sides"]
    if isinstance(sides, str):
        try:
            base = schedule_preset(sides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return BlockSchedule(base.sides, alpha=float(p["alpha"]), b_max=base.b_max)
    return BlockSchedule(tuple(int(s) for s in sides), alpha=float(p["alpha"]))


def _multiscale_instance(i: int, p: dict, seed: int) -> dict:
    g = build_grid(2, int(p["L"]), "free")
    inst = generate_instance(g, Z2Flip(float(p["p"])), TruthMode.HAAR, seed=derive_seed(seed, "instance", i))
    schedule = _schedule(p)
    tree = synchronize(inst, build_block_tree(g, schedule))
    rng = np.random.default_rng(derive_seed(seed, "pairs", i))
    out = {"bands": [], "diagnostics": [dict(st.diagnostics) for st in tree.state]}
    for lo, hi in p["bands"]:
        pairs = sample_pairs(g, int(lo), int(hi), int(p["n_pairs"]), rng)
        out["bands"].append(recover_pairs(inst, tree, pairs).success_rate)
    return out


def run_multiscale(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    if int(p["n_instances"]) < 1 or int(p["n_pairs"]) < 1:
        raise ConfigError("n_instances and n_pairs must be >= 1")
    bands = p["bands"]
    if not isinstance(bands, list) or not all(isinstance(b, (list, tuple)) and len(b) == 2 for b in bands):
        raise ConfigError("bands must be a list of [lo, hi] distance pairs")
    Z2Flip(float(p["p"]))
    sched = _schedule(p)
    build_block_tree(build_grid(2, int(p["L"]), "free"), sched)
    for lo, hi in bands:
        if not 1 <= int(lo) <= int(hi) <= 2 * (int(p["L"]) - 1):
            raise ConfigError(f"distance band {[lo, hi]} does not fit a grid of side {p['L']}")
    res = _pmap(partial(_multiscale_instance, p=p, seed=seed), list(range(int(p["n_instances"]))), ctx.workers)
    rows = []
    for j, (lo, hi) in enumerate(bands):
        m, se = _mean_se([r["bands"][j] for r in res])
        rows.append({
            "p": float(p["p"]), "L": int(p["L"]), "band_lo": int(lo), "band_hi": int(hi),
            "n_instances": len(res), "n_pairs": int(p["n_pairs"]), "success_rate": m, "stderr": se,
        })
    n_lv = len(res[0]["diagnostics"])
    summary = {
        "excluded_fraction": [float(np.mean([r["diagnostics"][k]["excluded_fraction"] for r in res])) for k in range(n_lv)],
        "H_failures": [int(np.sum([r["diagnostics"][k]["H_failures"] for r in res])) for k in range(n_lv)],
    }
    return rows, summary


def run_gibbs(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    scan = phase_scan(
        [float(x) for x in _as_list(p["p"])], [int(x) for x in _as_list(p["sizes"])], d=int(p["d"]),
        n_disorder=int(p["n_disorder"]), sweeps=p["sweeps"], burn_in=p["burn_in"],
        stride=p["stride"], seed=seed, n_boot=int(p["n_boot"]), init=str(p["init"]),
        n_temps=int(p["n_temps"]), beta_min=float(p["beta_min"]), engine=str(p["engine"]),
    )
    summary = {"crossing": scan.crossing, "crossing_ci": list(scan.crossing_ci), "pairwise_crossings": scan.pairwise_crossings}
    return scan.rows(), summary


def run_toy_mse(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    r = toy_mse(int(p["L"]), int(p["d"]), float(p["sigma2"]))
    row = {"d": r.d, "L": r.L, "sigma2": r.sigma2, "mse": r.mse, "eigen_sum": r.eigen_sum,
           "mse_per_volume": r.per_volume, "mse_per_log": r.per_log}
    if int(p["n_trials"]) > 0:
        est, se = toy_mse_empirical(r.L, r.d, r.sigma2, int(p["n_trials"]), seed=seed)
        row.update({"mse_empirical": est, "mse_empirical_stderr": se})
    return [row], {}


def run_percolation(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    if p.get("channel") is not None or p.get("p") is not None:
        p_open = channel_floor_decomposition(_channel(p, 0.0)).p_open
    else:
        p_open = float(p["p_open"])
    rep = percolation_probe(int(p["d"]), p_open, p["extents"], [int(r) for r in _as_list(p["distances"])],
                            int(p["n_trials"]), seed=seed)
    return rep.rows(), {"p_c": rep.p_c}


def _density(p: dict) -> Optional[DensitySpec]:
    den = p.get("density")
    if den is None:
        return None
    if not isinstance(den, dict) or "family" not in den or "param" not in den:
        raise ConfigError("density must be a mapping with 'family' and 'param'")
    return DensitySpec(str(den["family"]), float(den["param"]))


def run_spinwave(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    den = _density(p)
    kappa = psi_quadratic_check(den).kappa_hat if den is not None else None
    rows = []
    for L in _as_list(p["L"]):
        sw = spin_wave_profile(int(L))
        row = {"L": sw.L, "energy": sw.energy, "scaled_energy": sw.scaled_energy, "h_u": sw.h_u, "h_v": sw.h_v}
        if den is not None:
            row.update({"kappa_hat": kappa, "bound": nonrecovery_bound(sw.L, den, kappa_hat=kappa).bound})
        rows.append(row)
    return rows, ({"kappa_hat": kappa} if kappa is not None else {})


def run_eit_diag(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    kw = {"spread": float(p["spread"])} if p["measure"] == "hierarchical" else {}
    measure = measure_from_name(str(p["measure"]), **kw)
    rep = eit_diagnostic(measure, int(p["n"]), int(p["n_pairs"]), np.random.default_rng(seed), k_max=int(p["k_max"]))
    rows = [{"measure": rep.measure, "n": rep.n, **r} for r in rep.rows()]
    moments = {}
    for lam in _as_list(p["lam"]):
        m, se = rep.moment(float(lam))
        moments[repr(float(lam))] = {"moment": m, "stderr": se}
    summary = {"beta_hat": rep.beta_hat, "geometric": rep.geometric, "fit_range": list(rep.fit_range),
               "lambda_moments": moments}
    return rows, summary


def run_lambda_calib(p: dict, seed: int, ctx: "RunContext") -> Tuple[List[dict], dict]:
    rows = []
    for s in _as_list(p["sigma"]):
        ch = OrthGaussian(int(p["m"]), float(s), bool(p["project"]))
        est = lambda_for_channel(ch, n_samples=int(p["n_samples"]), seed=seed)
        row = {"m": ch.m, "sigma": ch.sigma, "lambda_hat": est.value, "stderr": est.stderr, "method": est.method}
        if p["check_unbiased"]:
            rep = verify_unbiasedness(ch, int(p["n_samples"]), seed=seed)
            row.update({"mean_trace": rep.lambda_hat, "offdiag_max": rep.offdiag_max})
        rows.append(row)
    return rows, {}


RUNNERS: Dict[str, Runner] = {
    "generate": Runner(run_generate, {"d": 2, "extents": 16, "boundary": "free", "channel": None, "p": None,
                                      "truth_mode": "haar"}),
    "path-estimate": Runner(run_path_estimate, {
        "d": 3, "L": 17, "channel": None, "p": None, "n": 8, "n_paths": 256, "n_instances": 20,
        "measure": "uniform", "spread": 0.3, "lam": None, "mode": "diagonal", "axis": 0, "x": None, "y": None}),
    "multiscale": Runner(run_multiscale, {
        "L": 256, "p": 0.02, "sides": [1, 8, 64], "alpha": 0.9, "n_instances": 50, "n_pairs": 200,
        "bands": [[1, 8], [64, 128]]}),
    "gibbs": Runner(run_gibbs, {
        "d": 2, "p": [0.05, 0.1, 0.15], "sizes": [16, 32], "n_disorder": 8, "sweeps": 400, "burn_in": 100,
        "stride": 2, "n_boot": 200, "init": "truth", "n_temps": 1, "beta_min": 0.3, "engine": "multispin"}),
    "toy-mse": Runner(run_toy_mse, {"d": 1, "L": 2, "sigma2": 1.0, "n_trials": 0},
                      stochastic=lambda p: int(p.get("n_trials") or 0) > 0),
    "percolation": Runner(run_percolation, {"d": 2, "p_open": 0.45, "channel": None, "p": None, "extents": 128,
                                            "distances": [8, 16, 32, 64], "n_trials": 100}),
    "spinwave": Runner(run_spinwave, {"L": [16, 32, 64, 128], "density": {"family": "von_mises", "param": 2.0}},
                       stochastic=lambda p: False),
    "eit-diag": Runner(run_eit_diag, {"measure": "uniform", "spread": 0.3, "n": 8, "n_pairs": 20000, "k_max": 20,
                                      "lam": [0.95]}),
    "lambda-calib": Runner(run_lambda_calib, {"m": 3, "sigma": [0.0, 0.5, 1.0], "n_samples": 100000,
                                              "project": True, "check_unbiased": True}),
}

# CLI subcommand name -> experiment kind
SUBCOMMANDS = {
    "generate": "generate",
    "estimate-path": "path-estimate",
    "estimate-multiscale": "multiscale",
    "gibbs": "gibbs",
    "toy-mse": "toy-mse",
    "percolation": "percolation",
    "spinwave": "spinwave",
    "eit-diag": "eit-diag",
    "lambda-calib": "lambda-calib",
}


# -- orchestration -----------------------------------------------------------

@dataclass
class RunContext:
    out: Path
    workers: int = 1
    tag: str = ""


@dataclass
class RunResult:
    status: int
    rows: List[dict]
    manifest: dict
    results_path: Path
    manifest_path: Path


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(config: ExperimentConfig) -> dict:
    """Check the config and return the full parameter set (defaults filled in)."""
    if config.kind not in RUNNERS:
        raise ConfigError(f"unknown experiment kind {config.kind!r}; expected one of {sorted(RUNNERS)}")
    runner = RUNNERS[config.kind]
    unknown = set(config.params) - set(runner.defaults)
    if unknown:
        raise ConfigError(f"{config.kind}: unknown parameters {sorted(unknown)}; allowed: {sorted(runner.defaults)}")
    params = {**runner.defaults, **config.params}
    if not isinstance(config.workers, int) or isinstance(config.workers, bool) or config.workers < 1:
        raise ConfigError(f"workers must be an integer >= 1, got {config.workers!r}")
    if config.format not in ("csv", "jsonl"):
        raise ConfigError(f"format must be 'csv' or 'jsonl', got {config.format!r}")
    if not isinstance(config.max_cells, int) or config.max_cells < 1:
        raise ConfigError(f"max_cells must be an integer >= 1, got {config.max_cells!r}")
    if config.seed is not None:
        if not isinstance(config.seed, int) or isinstance(config.seed, bool) or not 0 <= config.seed < SEED_MAX:
            raise ConfigError(f"seed must be an integer in [0, 2^64), got {config.seed!r}")
    try:
        own = runner.stochastic(params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{config.kind}: invalid parameter value ({exc})") from None
    stochastic = own or any(
        k == "n_trials" and any(_is_number(v) and v > 0 for v in vals) for k, vals in config.sweep.items()
    )
    if stochastic and config.seed is None:
        raise ConfigError(f"{config.kind}: a seed is required for stochastic experiments")
    if len(config.sweep) > 2:
        raise ConfigError(f"at most two sweep axes are supported, got {len(config.sweep)}")
    for k, vals in config.sweep.items():
        if k not in runner.defaults:
            raise ConfigError(f"{config.kind}: cannot sweep unknown parameter {k!r}")
        if not vals or not all(_is_number(v) for v in vals):
            raise ConfigError(f"sweep axis {k!r} needs a non-empty list of numbers, got {vals!r}")
    n_cells = int(np.prod([len(v) for v in config.sweep.values()])) if config.sweep else 1
    if n_cells > config.max_cells:
        raise ConfigError(f"sweep has {n_cells} cells, exceeding the cell budget max_cells={config.max_cells}")
    return params


def config_hash(config: ExperimentConfig) -> str:
    """Hash of everything that determines the results (not the output location or worker count)."""
    doc = {"kind": config.kind, "params": {**RUNNERS[config.kind].defaults, **config.params},
           "seed": config.seed, "sweep": config.sweep}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def _run_cell(cell: Tuple[int, dict], config: ExperimentConfig, params: dict, out: Path, workers: int):
    idx, coords = cell
    seed = config.seed if not coords else derive_seed(config.seed or 0, coords)
    p = {**params, **coords}
    tag = "" if not coords else f"_cell{idx}"
    try:
        rows, summary = RUNNERS[config.kind].fn(p, seed, RunContext(out=out, workers=workers, tag=tag))
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, OverflowError) as exc:
        raise ConfigError(f"{config.kind}: {exc}") from None
    return seed, [{**coords, **r} for r in rows], summary


def run(config: ExperimentConfig) -> RunResult:
    """Execute a config (with or without sweep axes) and write results plus a manifest."""
    params = validate(config)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(config)
    axes = list(config.sweep)
    cells = [dict(zip(axes, vals)) for vals in itertools.product(*(config.sweep[a] for a in axes))] if axes else [{}]
    # parallelize across cells when there are several, otherwise inside the cell
    inner = config.workers if len(cells) == 1 else 1
    fn = partial(_run_cell, config=config, params=params, out=out, workers=inner)
    results = _pmap(fn, list(enumerate(cells)), config.workers if len(cells) > 1 else 1)
    rows = []
    summaries = []
    for (seed, cell_rows, summary), coords in zip(results, cells):
        for r in cell_rows:
            rows.append({"config_hash": h, "code_version": __version__, "seed": seed, **r})
        summaries.append({"cell": coords, "seed": seed, **summary})
    results_path = write_table(rows, out / f"results.{config.format}", config.format)
    manifest = {
        "config": config.to_dict(),
        "config_hash": h,
        "code_version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "results": {"file": results_path.name, "sha256": file_sha256(results_path), "n_rows": len(rows)},
        "cells": summaries,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(status=0, rows=rows, manifest=manifest, results_path=results_path, manifest_path=manifest_path)


def sweep(config: ExperimentConfig) -> RunResult:
    """Cartesian sweep over ``config.sweep``; with no axes this is exactly :func:`run`."""
    return run(config)
