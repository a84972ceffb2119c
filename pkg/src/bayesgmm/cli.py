"""Command-line front end.

Subcommands: ``fit``, ``sweep``, ``oracle``, ``lemma1``, ``simulate`` and
``replay``. Every run writes ``manifest.json`` next to its outputs; ``replay``
re-executes a manifest into a fresh directory and checks that every output
file is byte-identical.

Exit codes: 0 success, 1 runtime or numerical error, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    DatasetParseError,
    SyntheticSpec,
    bundled_path,
    eq3_spec,
    load_allocations,
    load_dataset,
    sample_mixture,
    save_allocations,
    save_dataset,
    save_histogram,
    save_samples,
)
from .diagnostics import (
    allocation_tv,
    count_posterior_summary,
    empty_component_fraction,
    histogram,
    mode_symmetry_score,
    pooled_mu,
    window_mass,
)
from .model import (
    Dataset,
    DegenerateComponentError,
    InfeasibleError,
    ModelSpec,
    ModifiedJeffreys,
    StandardNIG,
    StandardRG,
)
from .oracle import (
    EnumerationTooLarge,
    Lemma1SweepConfig,
    QuadratureError,
    balanced_split,
    lemma1_ratio_sweep,
    oracle_enumerate,
    single_split,
)
from .samplers import ChainConfig, ConfigurationError, NumericalStabilityError, run_chain

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

MODELS = ("standard-nig", "standard-rg", "modified-jeffreys")
SAMPLER_NAMES = {"gibbs": "da_gibbs", "collapsed": "collapsed_gibbs", "mh": "metropolis_hastings"}
MANIFEST = "manifest.json"

# Experimental settings from the original study. A preset only fills flags
# that were not given explicitly.
PRESETS = {
    "synthetic-nig": dict(data="@eq3", model="standard-nig", k=2, sampler="gibbs",
                          burnin=10_000, samples=100_000, thin=10,
                          values=[0.1, 0.05, 0.01], vary="tied"),
    "synthetic-rg": dict(data="@eq3", model="standard-rg", k=2, sampler="gibbs",
                         burnin=10_000, samples=100_000, thin=10,
                         alpha=2.0, g=0.2, h_ratio=10.0,
                         values=[0.1, 0.01, 0.001], vary="kappa"),
    "synthetic-jeffreys": dict(data="@eq3", model="modified-jeffreys", k=2, sampler="mh",
                               burnin=10_000, samples=100_000, thin=10),
    "galaxy-nig": dict(data="@galaxy", center=True, model="standard-nig", k=4,
                       sampler="collapsed", alpha=0.01, beta=0.01, kappa=0.01,
                       burnin=10_000, samples=500_000, thin=10),
    "galaxy-jeffreys": dict(data="@galaxy", center=True, model="modified-jeffreys", k=4,
                            sampler="collapsed", burnin=10_000, samples=500_000, thin=10),
}

# Non-hyperparameter fallbacks used when neither a flag nor a preset gives a value.
FALLBACKS = dict(center=False, k=2, sampler="collapsed", burnin=10_000, samples=100_000,
                 thin=10, seed=0, sigma_min=0.01, bins=50, hist_range="data",
                 save_allocations=False, window=[-0.5, 0.5], jobs=1, vary="tied")

PARAM_FIELDS = ("alpha", "beta", "kappa", "g", "h")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_values(values) -> str:
    text = "".join(f"{float(v)!r}\n" for v in values)
    return hashlib.sha256(text.encode("ascii")).hexdigest()


def resolve_data(ref: str, center: bool):
    """Load ``ref`` and return (dataset, input record for the manifest).

    ``@galaxy`` is the bundled galaxy velocities; ``@eq3`` and ``@eq3:SEED``
    draw the two-component synthetic set; anything else is a file path.
    """
    if ref.startswith("@eq3"):
        seed = None
        if ref != "@eq3":
            try:
                seed = int(ref.split(":", 1)[1])
            except (IndexError, ValueError):
                raise UsageError(f"bad synthetic data reference {ref!r}; use @eq3 or @eq3:SEED")
        spec = eq3_spec() if seed is None else eq3_spec(seed=seed)
        data, _ = sample_mixture(spec)
        record = {"data": ref, "sha256": _sha256_values(data.values)}
    else:
        if ref.startswith("@"):
            try:
                path = bundled_path(ref[1:])
            except FileNotFoundError as exc:
                raise UsageError(str(exc))
        else:
            path = Path(ref).resolve()
        if not path.is_file():
            raise UsageError(f"data file not found: {path}")
        data = load_dataset(path)
        record = {"data": ref if ref.startswith("@") else str(path), "sha256": _sha256_file(path)}
    record["center"] = bool(center)
    record["offset"] = 0.0
    if center:
        record["offset"] = float(data.values.mean())
        data = data.centered()
    return data, record


def _merged(args, fields):
    """Flag value, else preset value, else fallback; missing keys map to None."""
    preset = {}
    if getattr(args, "preset", None):
        preset = PRESETS[args.preset]
    out = {}
    for f in fields:
        v = getattr(args, f, None)
        if v is None:
            v = preset.get(f)
        if v is None:
            v = FALLBACKS.get(f)
        out[f] = v
    return out


def _float_list(v):
    return None if v is None else [float(x) for x in v]


def build_spec(cfg: dict) -> ModelSpec:
    model, k = cfg["model"], cfg["k"]

    def need(*names):
        missing = [n for n in names if cfg.get(n) is None]
        if missing:
            flags = ", ".join("--" + n.replace("_", "-") for n in missing)
            raise UsageError(f"model {model} needs {flags} (no silent defaults; see --preset)")

    try:
        if model == "standard-nig":
            need("alpha", "beta", "kappa")
            prior = StandardNIG(cfg["alpha"], cfg["beta"], cfg["kappa"])
        elif model == "standard-rg":
            need("alpha", "g", "h", "kappa")
            prior = StandardRG(cfg["alpha"], cfg["g"], cfg["h"], cfg["kappa"])
        elif model == "modified-jeffreys":
            prior = ModifiedJeffreys()
        else:
            raise UsageError(f"unknown model {model!r}")
        return ModelSpec(k, prior, delta=cfg.get("delta"), min_count=cfg.get("min_count"))
    except ValueError as exc:
        raise UsageError(str(exc))


def _check_pairing(model: str, sampler: str):
    if model == "standard-rg" and sampler == "collapsed":
        raise UsageError("the hierarchical (RG) model cannot be implemented with the collapsed "
                         "sampler: its parameters do not integrate out in closed form")
    if model == "modified-jeffreys" and sampler == "gibbs":
        raise UsageError("the data-augmentation Gibbs sampler needs a proper prior; "
                         "use --sampler collapsed or mh for modified-jeffreys")
    if model != "modified-jeffreys" and sampler == "mh":
        raise UsageError("the Metropolis-Hastings sampler is implemented for modified-jeffreys")


def _write_report(path, items: dict):
    with open(path, "w", encoding="ascii") as fh:
        for key, value in items.items():
            if isinstance(value, float):
                value = repr(value)
            fh.write(f"{key} = {value}\n")


def _write_manifest(out: Path, command: str, config: dict, inputs: dict, outputs: list):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": config.get("seed"),
        "input": inputs,
        "outputs": {name: _sha256_file(out / name) for name in sorted(outputs)},
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out / MANIFEST).write_text(text, encoding="ascii")
    return manifest


def _prepare_out(path) -> Path:
    if path is None:
        raise UsageError("--out DIR is required")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

FIT_FIELDS = ("data", "center", "model", "k", "sampler", "alpha", "beta", "kappa", "g", "h",
              "delta", "min_count", "burnin", "samples", "thin", "seed", "mu_step",
              "sigma_step", "mu_min", "mu_max", "sigma_min", "bins", "hist_range",
              "save_allocations")


def fit_config(args) -> dict:
    cfg = _merged(args, FIT_FIELDS)
    if cfg["data"] is None:
        raise UsageError("--data is required (a path, @galaxy or @eq3)")
    if cfg["model"] is None:
        raise UsageError("--model is required")
    cfg["delta"] = _float_list(cfg["delta"])
    return cfg


def _chain_config(cfg: dict, data: Dataset) -> ChainConfig:
    try:
        chain = ChainConfig(
            sampler=SAMPLER_NAMES[cfg["sampler"]], burn_in=cfg["burnin"],
            post_burn_in=cfg["samples"], thin=cfg["thin"], seed=cfg["seed"],
            mu_step=cfg["mu_step"], sigma_step=cfg["sigma_step"], mu_min=cfg["mu_min"],
            mu_max=cfg["mu_max"], sigma_min=cfg["sigma_min"],
            keep_allocations=bool(cfg["save_allocations"]))
    except ConfigurationError as exc:
        raise UsageError(str(exc))
    if chain.n_saved < 1:
        raise UsageError("--samples must be at least --thin so that one state is saved")
    return chain


def execute_fit(cfg: dict, out: Path):
    """Run one fit; returns (resolved config, input record, output names, summary, samples)."""
    _check_pairing(cfg["model"], cfg["sampler"])
    spec = build_spec(cfg)
    if cfg["hist_range"] not in ("data", "full"):
        raise UsageError("--hist-range must be 'data' or 'full'")
    data, inputs = resolve_data(cfg["data"], cfg["center"])
    chain = _chain_config(cfg, data)
    if chain.sampler == "metropolis_hastings":
        chain = chain.resolved(data)
        cfg = dict(cfg, mu_step=chain.mu_step, sigma_step=chain.sigma_step,
                   mu_min=chain.mu_min, mu_max=chain.mu_max)
    try:
        samples = run_chain(data, spec, chain)
    except (ConfigurationError, InfeasibleError) as exc:
        raise UsageError(str(exc))

    outputs = ["samples.csv", "report.txt"]
    save_samples(samples, out / "samples.csv")
    k = spec.k
    x = data.values
    hrange = (float(x.min()), float(x.max())) if cfg["hist_range"] == "data" else None
    summary = {
        "model": cfg["model"],
        "sampler": cfg["sampler"],
        "k": k,
        "n_data": data.n,
        "data_offset": inputs["offset"],
        "states": samples.n_states,
        "empty_component_fraction": empty_component_fraction(samples),
    }
    if samples.acceptance_rate is not None:
        summary["acceptance_rate"] = float(samples.acceptance_rate)
    for i in range(k):
        for j in range(i + 1, k):
            summary[f"mode_symmetry_mu_{i + 1}_{j + 1}"] = mode_symmetry_score(
                samples, i, j, cfg["bins"])
    for i in range(k):
        draws = samples.mu_draws[:, i]
        name = f"hist_mu_{i + 1}.csv"
        inside = draws if hrange is None else draws[(draws >= hrange[0]) & (draws <= hrange[1])]
        if inside.size:
            save_histogram(histogram(inside, cfg["bins"], range=hrange), out / name)
            outputs.append(name)
        summary[f"mu_{i + 1}_outside_hist_range"] = 1.0 - inside.size / draws.size
        name = f"hist_n_{i + 1}.csv"
        save_histogram(count_posterior_summary(samples, i), out / name)
        outputs.append(name)
    if cfg["save_allocations"] and samples.allocations is not None:
        save_allocations(samples, out / "allocations.csv")
        outputs.append("allocations.csv")
    summary["samples_digest"] = samples.digest()
    _write_report(out / "report.txt", summary)
    return cfg, inputs, outputs, summary, samples


def cmd_fit(args) -> int:
    cfg = fit_config(args)
    out = _prepare_out(args.out)
    cfg, inputs, outputs, summary, _ = execute_fit(cfg, out)
    _write_manifest(out, "fit", cfg, inputs, outputs)
    print(f"empty_component_fraction = {summary['empty_component_fraction']!r}")
    print(f"wrote {len(outputs)} files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

SWEEP_FIELDS = FIT_FIELDS + ("values", "vary", "h_ratio", "window", "jobs")


def sweep_config(args) -> dict:
    cfg = _merged(args, SWEEP_FIELDS)
    if cfg["data"] is None or cfg["model"] is None:
        raise UsageError("--data and --model are required")
    if cfg["model"] == "modified-jeffreys":
        raise UsageError("sweep varies standard-model hyperparameters; "
                         "use standard-nig or standard-rg")
    if not cfg["values"]:
        raise UsageError("the sweep grid is empty; give --values")
    cfg["values"] = _float_list(cfg["values"])
    cfg["delta"] = _float_list(cfg["delta"])
    cfg["window"] = _float_list(cfg["window"])
    allowed = ("tied", "alpha", "beta", "kappa") if cfg["model"] == "standard-nig" else (
        "alpha", "g", "h", "kappa")
    if cfg["vary"] not in allowed:
        raise UsageError(f"--vary must be one of {allowed} for {cfg['model']}")
    if cfg["h_ratio"] is not None and cfg["model"] != "standard-rg":
        raise UsageError("--h-ratio applies to standard-rg only")
    return cfg


def point_seeds(master: int, n: int) -> list[int]:
    """Child seeds for grid points: SeedSequence(master).spawn(n), one 64-bit word each."""
    children = np.random.SeedSequence(master).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _point_config(cfg: dict, value: float, seed: int) -> dict:
    point = {f: cfg[f] for f in FIT_FIELDS}
    point["seed"] = seed
    if cfg["vary"] == "tied":
        point.update(alpha=value, beta=value, kappa=value)
    else:
        point[cfg["vary"]] = value
    if cfg["h_ratio"] is not None:
        point["h"] = cfg["h_ratio"] * point["kappa"] if point.get("kappa") else None
    return point


def _run_point(point: dict, out: str, window):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    point, inputs, outputs, summary, samples = execute_fit(point, out)
    _write_manifest(out, "fit", point, inputs, outputs)
    central = window_mass(pooled_mu(samples), window[0], window[1])
    return summary["empty_component_fraction"], central, inputs


def execute_sweep(cfg: dict, out: Path):
    seeds = point_seeds(cfg["seed"], len(cfg["values"]))
    points = [_point_config(cfg, v, s) for v, s in zip(cfg["values"], seeds)]
    for p in points:
        _check_pairing(p["model"], p["sampler"])
        build_spec(p)
    dirs = [str(out / f"point_{i:03d}") for i in range(len(points))]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            futures = [pool.submit(_run_point, p, d, cfg["window"]) for p, d in zip(points, dirs)]
            results = [f.result() for f in futures]
    else:
        results = [_run_point(p, d, cfg["window"]) for p, d in zip(points, dirs)]

    lo, hi = cfg["window"]
    header = ["index", "alpha", "beta", "kappa", "g", "h", "seed",
              "empty_component_fraction", f"mu_mass_in_[{lo!r},{hi!r}]"]
    lines = [",".join(header)]
    for i, (p, (frac, central, _)) in enumerate(zip(points, results)):
        row = [str(i)] + ["" if p[f] is None else repr(float(p[f])) for f in PARAM_FIELDS]
        row += [str(p["seed"]), repr(frac), repr(central)]
        lines.append(",".join(row))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    outputs = ["sweep.csv"] + [f"point_{i:03d}/{MANIFEST}" for i in range(len(points))]
    return results[0][2], outputs, [r[0] for r in results]


def cmd_sweep(args) -> int:
    cfg = sweep_config(args)
    out = _prepare_out(args.out)
    inputs, outputs, fracs = execute_sweep(cfg, out)
    _write_manifest(out, "sweep", cfg, inputs, outputs)
    for v, f in zip(cfg["values"], fracs):
        print(f"{cfg['vary']} = {v!r}: empty_component_fraction = {f!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

ORACLE_FIELDS = ("data", "center", "model", "k", "alpha", "beta", "kappa", "g", "h",
                 "delta", "min_count", "chain")


def oracle_config(args) -> dict:
    cfg = _merged(args, ORACLE_FIELDS)
    if cfg["data"] is None or cfg["model"] is None:
        raise UsageError("--data and --model are required")
    if cfg["model"] == "standard-rg":
        raise UsageError("enumeration needs a closed-form component marginal; "
                         "standard-rg has none")
    cfg["delta"] = _float_list(cfg["delta"])
    if cfg["chain"] is not None:
        cfg["chain"] = str(Path(cfg["chain"]).resolve())
    return cfg


def execute_oracle(cfg: dict, out: Path):
    spec = build_spec(cfg)
    data, inputs = resolve_data(cfg["data"], cfg["center"])
    try:
        post = oracle_enumerate(data, spec)
    except (EnumerationTooLarge, InfeasibleError) as exc:
        raise UsageError(str(exc))
    n = data.n
    lines = [",".join([f"g_{j}" for j in range(1, n + 1)] + ["log_weight", "probability"])]
    for g, lw, p in zip(post.allocations, post.log_weights, post.normalized):
        lines.append(",".join([str(int(v) + 1) for v in g] + [repr(float(lw)), repr(float(p))]))
    (out / "oracle.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    outputs = ["oracle.csv"]
    tv = None
    if cfg["chain"] is not None:
        chain_path = Path(cfg["chain"])
        if not chain_path.is_file():
            raise UsageError(f"chain allocations file not found: {chain_path}")
        allocs = load_allocations(chain_path)
        if allocs.shape[1] != n:
            raise UsageError(f"chain has {allocs.shape[1]} points, data has {n}")
        tv = allocation_tv(post.as_dict(), allocs)
        inputs = dict(inputs, chain_sha256=_sha256_file(chain_path))
        _write_report(out / "report.txt", {"allocations": len(post.normalized),
                                           "chain_states": allocs.shape[0],
                                           "tv": f"{tv:.4f}"})
        outputs.append("report.txt")
    return inputs, outputs, len(post.normalized), tv


def cmd_oracle(args) -> int:
    cfg = oracle_config(args)
    out = _prepare_out(args.out)
    inputs, outputs, size, tv = execute_oracle(cfg, out)
    _write_manifest(out, "oracle", cfg, inputs, outputs)
    print(f"allocations = {size}")
    if tv is not None:
        print(f"tv = {tv:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# lemma1
# ---------------------------------------------------------------------------

LEMMA1_FIELDS = ("data", "center", "c1", "c2", "kappa_grid", "split")
DEFAULT_KAPPA_GRID = [10.0 ** -e for e in range(1, 9)]


def lemma1_config(args) -> dict:
    cfg = {f: getattr(args, f, None) for f in LEMMA1_FIELDS}
    if cfg["data"] is None:
        raise UsageError("--data is required")
    for name in ("c1", "c2"):
        if cfg[name] is None:
            raise UsageError(f"--{name} is required")
        if not cfg[name] > 0:
            raise UsageError(f"--{name} must be positive")
    cfg["kappa_grid"] = _float_list(cfg["kappa_grid"]) or list(DEFAULT_KAPPA_GRID)
    cfg["center"] = bool(cfg["center"])
    cfg["split"] = cfg["split"] or "single"
    return cfg


def execute_lemma1(cfg: dict, out: Path):
    data, inputs = resolve_data(cfg["data"], cfg["center"])
    gp, gpp = single_split(data.n) if cfg["split"] == "single" else balanced_split(data)
    try:
        sweep_cfg = Lemma1SweepConfig(cfg["c1"], cfg["c2"], tuple(cfg["kappa_grid"]), gp, gpp)
    except ValueError as exc:
        raise UsageError(str(exc))
    table = lemma1_ratio_sweep(data, sweep_cfg)
    lines = ["kappa,log_ratio,slope"]
    for kap, r, s in zip(table.kappa, table.log_ratio, table.slope):
        lines.append(f"{float(kap)!r},{float(r)!r},{'' if np.isnan(s) else repr(float(s))}")
    (out / "lemma1.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    return inputs, ["lemma1.csv"], table


def cmd_lemma1(args) -> int:
    cfg = lemma1_config(args)
    out = _prepare_out(args.out)
    inputs, outputs, table = execute_lemma1(cfg, out)
    _write_manifest(out, "lemma1", cfg, inputs, outputs)
    print(f"terminal slope = {float(table.slope[-1])!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def simulate_config(args) -> dict:
    base = eq3_spec()
    cfg = {
        "weights": _float_list(args.weights) or list(base.weights),
        "means": _float_list(args.means) or list(base.means),
        "variances": _float_list(args.variances) or list(base.variances),
        "n": args.n if args.n is not None else base.n,
        "seed": args.seed if args.seed is not None else base.seed,
    }
    try:
        SyntheticSpec(tuple(cfg["weights"]), tuple(cfg["means"]), tuple(cfg["variances"]),
                      cfg["n"], cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc))
    return cfg


def execute_simulate(cfg: dict, out: Path):
    spec = SyntheticSpec(tuple(cfg["weights"]), tuple(cfg["means"]), tuple(cfg["variances"]),
                         cfg["n"], cfg["seed"])
    data, labels = sample_mixture(spec)
    save_dataset(data, out / "data.txt", comment=f"synthetic mixture, n = {spec.n}, "
                                                 f"seed = {spec.seed}")
    (out / "labels.txt").write_text("".join(f"{int(v) + 1}\n" for v in labels), encoding="ascii")
    return {}, ["data.txt", "labels.txt"]


def cmd_simulate(args) -> int:
    cfg = simulate_config(args)
    out = _prepare_out(args.out)
    inputs, outputs = execute_simulate(cfg, out)
    _write_manifest(out, "simulate", cfg, inputs, outputs)
    print(f"wrote {out / 'data.txt'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

EXECUTORS = {
    "fit": lambda cfg, out: execute_fit(cfg, out)[:3],
    "sweep": lambda cfg, out: (cfg,) + execute_sweep(cfg, out)[:2],
    "oracle": lambda cfg, out: (cfg,) + execute_oracle(cfg, out)[:2],
    "lemma1": lambda cfg, out: (cfg,) + execute_lemma1(cfg, out)[:2],
    "simulate": lambda cfg, out: (cfg,) + execute_simulate(cfg, out),
}


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        path = path / MANIFEST
    try:
        manifest = json.loads(path.read_text(encoding="ascii"))
        command, config = manifest["command"], manifest["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}")
    if command not in EXECUTORS:
        raise UsageError(f"manifest has unknown command {command!r}")
    out = _prepare_out(args.out)
    if out.resolve() == path.parent.resolve():
        raise UsageError("replay needs a fresh --out directory")
    config, inputs, outputs = EXECUTORS[command](config, out)
    if inputs.get("sha256") != manifest["input"].get("sha256"):
        print("error: input data differ from the manifest", file=sys.stderr)
        return EXIT_RUNTIME
    replayed = _write_manifest(out, command, config, inputs, outputs)
    bad = [name for name, digest in manifest["outputs"].items()
           if replayed["outputs"].get(name) != digest]
    if bad or (out / MANIFEST).read_bytes() != path.read_bytes():
        print("error: replay differs in " + ", ".join(bad or [MANIFEST]), file=sys.stderr)
        return EXIT_RUNTIME
    print(f"replay identical: {len(outputs)} outputs")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_data_flags(p):
    p.add_argument("--data", help="data file, @galaxy (bundled) or @eq3[:SEED] (synthetic)")
    p.add_argument("--center", action=argparse.BooleanOptionalAction, default=None,
                   help="subtract the sample mean before fitting")
    p.add_argument("--out", help="output directory")


def _add_model_flags(p, with_sampler=True):
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="fill unset flags with a documented experimental setting")
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--k", type=int, help="number of components")
    for name in PARAM_FIELDS:
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--delta", type=float, nargs="+",
                   help="allocation prior weights (one value or K values; default 1)")
    p.add_argument("--min-count", dest="min_count", type=int,
                   help="minimum component size for modified-jeffreys (default 2)")
    if not with_sampler:
        return
    p.add_argument("--sampler", choices=sorted(SAMPLER_NAMES))
    p.add_argument("--burnin", type=int)
    p.add_argument("--samples", type=int, help="post-burn-in iterations")
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mu-step", dest="mu_step", type=float)
    p.add_argument("--sigma-step", dest="sigma_step", type=float)
    p.add_argument("--mu-min", dest="mu_min", type=float)
    p.add_argument("--mu-max", dest="mu_max", type=float)
    p.add_argument("--sigma-min", dest="sigma_min", type=float)
    p.add_argument("--bins", type=int, help="histogram bins for mu (default 50)")
    p.add_argument("--hist-range", dest="hist_range", choices=("data", "full"),
                   help="mu histograms over the data range (default) or all draws")
    p.add_argument("--save-allocations", dest="save_allocations",
                   action=argparse.BooleanOptionalAction, default=None,
                   help="also write allocations.csv")


def _preset_help() -> str:
    lines = ["presets:"]
    for name, values in PRESETS.items():
        body = ", ".join(f"{k}={v}" for k, v in values.items())
        lines.append(f"  {name}: {body}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayesgmm", description="Bayesian Gaussian mixture fitting and diagnostics.",
        epilog=_preset_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run one chain and write samples, histograms and a report",
                       epilog=_preset_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_data_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="fit over a hyperparameter grid",
                       epilog=_preset_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--values", type=float, nargs="+", help="grid values")
    p.add_argument("--vary", help="parameter to vary: tied (alpha=beta=kappa), alpha, beta, "
                                  "kappa, g or h")
    p.add_argument("--h-ratio", dest="h_ratio", type=float,
                   help="standard-rg: set h = ratio * kappa at every grid point")
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"),
                   help="window for the pooled mu mass column (default -0.5 0.5)")
    p.add_argument("--jobs", type=int, help="grid points run in parallel (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="enumerate the exact allocation posterior")
    _add_data_flags(p)
    _add_model_flags(p, with_sampler=False)
    p.add_argument("--chain", help="allocations.csv from fit --save-allocations to compare")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("lemma1", help="posterior-ratio sweep as kappa decreases")
    _add_data_flags(p)
    p.add_argument("--c1", type=float, help="alpha = c1 * kappa")
    p.add_argument("--c2", type=float, help="beta = c2 * kappa")
    p.add_argument("--kappa-grid", dest="kappa_grid", type=float, nargs="+",
                   help="strictly decreasing kappa values (default 1e-1 ... 1e-8)")
    p.add_argument("--split", choices=("single", "balanced"),
                   help="'single': one point in its own component (default); "
                        "'balanced': split at the median")
    p.set_defaults(func=cmd_lemma1)

    p = sub.add_parser("simulate", help="draw a synthetic mixture data set")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--weights", type=float, nargs="+")
    p.add_argument("--means", type=float, nargs="+")
    p.add_argument("--variances", type=float, nargs="+")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="re-run a manifest and verify identical outputs")
    p.add_argument("manifest", help="manifest.json or the directory holding it")
    p.add_argument("--out", help="fresh output directory")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetParseError, DegenerateComponentError, NumericalStabilityError,
            QuadratureError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
