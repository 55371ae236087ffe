"""Command-line front end: config-driven experiments, validation, benchmarks.

``fastconv run <config.json>`` executes one experiment described by a
schema-validated JSON config and writes CSV artifacts plus a run manifest
that embeds every resolved parameter (re-running the manifest reproduces the
outputs byte for byte).  ``fastconv validate`` drives the acceptance suite;
``fastconv bench`` times the propagation kernel against its n m log m cost
model.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import importlib.metadata
import importlib.resources
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import csvio, mc, models, pricing, validation
from .engine import NonMonotoneRemapError, TimeGrid, build_grid, propagate
from .joint import (
    GeometricAverageRecursion,
    IntegratedSquareRecursion,
    UGrid,
    joint_propagate,
    marginal_u,
    marginal_z,
)
from .models import DomainError, Measure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_OUTPUT_ROOT_ENV = "FASTCONV_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Config file rejected before any computation."""


def _schema() -> dict:
    text = importlib.resources.files("fastconv").joinpath("configs/schema.json").read_text()
    return json.loads(text)


def load_config(path: str | Path) -> dict:
    """Read and schema-validate a config file (or a manifest wrapping one)."""
    import jsonschema

    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "config" in raw and "experiment" not in raw:
        raw = raw["config"]  # a manifest: re-run its embedded config
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    _check_experiment_fields(raw)
    return raw


_REQUIRED_BY_EXPERIMENT = {
    "density": ("model", "measure", "grid", "time"),
    "joint-density": ("model", "measure", "grid", "time", "functional"),
    "price": ("model", "grid", "time", "contract"),
    "surface": ("model", "grid", "contract"),
    "validate": (),
    "bench": (),
}


def _check_experiment_fields(cfg: dict) -> None:
    kind = cfg["experiment"]
    for key in _REQUIRED_BY_EXPERIMENT[kind]:
        if key not in cfg:
            raise ConfigError(f"experiment {kind!r} requires the {key!r} block")
    if kind in ("joint-density", "surface") or cfg.get("contract", {}).get("style", "").startswith(
        ("geometric", "vanilla-vnb")
    ):
        grid = cfg.get("grid", {})
        if "u_min" not in grid or "m_u" not in grid:
            raise ConfigError(f"experiment {kind!r} requires u_min and m_u in the grid block")


def build_model(block: dict):
    family = block["family"]
    if family == "quadratic":
        e = block["e"]
        if e["kind"] == "constant":
            e_fn = models.ConstantLevel(e["value"])
        elif e["kind"] == "exp-decay":
            e_fn = models.ExpDecayLevel(e["floor"], e["amplitude"], e["rate"])
        else:
            e_fn = models.ExpGrowthLevel(e["coeff"], e["rate"])
        return models.QuadraticParams(
            a=block["a"], b=block["b"], c=block["c"], d=block["d"],
            e_fn=e_fn, x0=block.get("x0", 0.0), clock=block.get("clock", "unit"),
        )
    if family == "piecewise":
        return models.PiecewiseParams(
            sigma=block["sigma"], epsilon=block["epsilon"],
            smooth_k=block.get("smooth_k"), mu=block.get("mu", 0.0), r=block.get("r", 0.0),
        )
    return models.VnbParams(
        alpha=block["alpha"], sigma=block["sigma"], t0=block["t0"], T=block["T"],
        r=block.get("r", 0.0), mu=block.get("mu", 0.0), omega0=block.get("omega0", 0.0),
    )


def _out_dir(cfg: dict) -> Path:
    root = Path(os.environ.get(_OUTPUT_ROOT_ENV, "."))
    out = Path(cfg.get("output_dir", "fastconv-out"))
    return out if out.is_absolute() else root / out


def _write_manifest(out: Path, cfg: dict, mass_deficits: dict, outputs: list[str]) -> None:
    try:
        version = importlib.metadata.version("fastconv")
    except importlib.metadata.PackageNotFoundError:
        version = "unknown"
    manifest = {
        "package": "fastconv",
        "version": version,
        "config": cfg,
        "mass_deficits": mass_deficits,
        "outputs": sorted(outputs),
    }
    (out / "run-manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _timegrid(cfg_time: dict) -> TimeGrid:
    return TimeGrid(dtau=cfg_time["dtau"], n=cfg_time["n"])


def _run_density(cfg: dict, out: Path) -> None:
    model = build_model(cfg["model"])
    measure = Measure(cfg["measure"])
    grid = build_grid(cfg["grid"]["z_min"], cfg["grid"]["m"])
    timegrid = _timegrid(cfg["time"])
    snapshots = cfg["time"].get("snapshots", [timegrid.tau_end])
    densities = propagate(model, measure, grid, timegrid, snapshots)
    outputs, deficits = [], {}
    for tau, P in zip(snapshots, densities):
        name = f"density_tau{tau:g}.csv"
        csvio.write_density_csv(out / name, P, grid.nodes)
        outputs.append(name)
        deficits[f"tau={tau:g}"] = P.mass_deficit
    _write_manifest(out, cfg, deficits, outputs)


def _build_recursion(cfg: dict, model):
    kind = cfg["functional"]
    if kind == "geometric-average":
        return GeometricAverageRecursion(model=model, t0=cfg.get("functional_t0", 0.0))
    return IntegratedSquareRecursion(model=model)


def _run_joint(cfg: dict, out: Path) -> None:
    model = build_model(cfg["model"])
    measure = Measure(cfg["measure"])
    zgrid = build_grid(cfg["grid"]["z_min"], cfg["grid"]["m"])
    ugrid = UGrid(cfg["grid"]["u_min"], cfg["grid"]["m_u"])
    timegrid = _timegrid(cfg["time"])
    J = joint_propagate(model, measure, _build_recursion(cfg, model), zgrid, ugrid, timegrid)
    csvio.write_joint_csv(out / "joint.csv", J, ugrid.nodes, zgrid.nodes)
    csvio.write_density_csv(out / "marginal_z.csv", marginal_z(J), zgrid.nodes, label="z")
    csvio.write_density_csv(out / "marginal_u.csv", marginal_u(J), ugrid.nodes, label="u")
    _write_manifest(
        out, cfg, {"final": J.mass_deficit}, ["joint.csv", "marginal_z.csv", "marginal_u.csv"]
    )


def _mc_estimate_for_contract(cfg: dict, contract: pricing.OptionContract, model, timegrid):
    block = cfg["mc"]
    functional = "none"
    if contract.style == "geometric-asian-piecewise":
        functional = "geometric-average"
    elif contract.style == "vanilla-vnb":
        functional = "integrated-omega-squared"
    config = mc.McConfig(
        model=model,
        measure=Measure.RISK_NEUTRAL,
        n_paths=block["n_paths"],
        n_steps=timegrid.n,
        dtau=timegrid.dtau,
        seed=block["seed"],
        functional=functional,
        antithetic=block.get("antithetic", False),
        t0=contract.t0,
    )
    samples = mc.simulate(config)
    disc = math.exp(-contract.rate * (contract.T - contract.t0))
    sign = 1.0 if contract.kind == "call" else -1.0
    if contract.style == "vanilla-piecewise":
        values = contract.spot * np.exp(samples.terminal)
    elif contract.style == "geometric-asian-piecewise":
        q = 2.0 * (math.sqrt(contract.T) - math.sqrt(contract.t0)) / (contract.T - contract.t0)
        values = contract.spot * np.exp(q * samples.functional)
    else:
        det = contract.rate * (contract.T - contract.t0) - 0.5 * model.sigma**2 * model.det_exponent_integral()
        log_s = det + model.sigma * (samples.terminal - model.omega0) \
            - 0.5 * model.c_quad * model.sigma**2 * samples.functional
        values = contract.spot * np.exp(log_s)
    return mc.estimate_payoff(values, lambda s: np.maximum(sign * (s - contract.strike), 0.0), disc)


def _build_contract(block: dict, strike: float, maturity: float, rate: float) -> pricing.OptionContract:
    return pricing.OptionContract(
        spot=block["spot"],
        strike=strike,
        rate=rate,
        t0=block.get("t0", 0.0),
        T=maturity,
        kind=block.get("kind", "call"),
        style=block["style"],
    )


def _run_price(cfg: dict, out: Path) -> None:
    model = build_model(cfg["model"])
    block = cfg["contract"]
    rate = block.get("rate", getattr(model, "r", 0.0))
    contract = _build_contract(block, block["strike"], block["maturity"], rate)
    zgrid = build_grid(cfg["grid"]["z_min"], cfg["grid"]["m"])
    timegrid = _timegrid(cfg["time"])
    if contract.style == "vanilla-piecewise":
        result = pricing.price_vanilla_piecewise(contract, model, zgrid, timegrid)
    else:
        ugrid = UGrid(cfg["grid"]["u_min"], cfg["grid"]["m_u"])
        if contract.style == "geometric-asian-piecewise":
            result = pricing.price_asian(contract, model, zgrid, ugrid, timegrid)
        else:
            result = pricing.price_vnb(contract, model, zgrid, ugrid, timegrid)
    csvio.write_price_csv(
        out / "price.csv",
        [(contract.style, contract.strike, contract.T, result.price, result.mass_deficit)],
    )
    outputs = ["price.csv"]
    if "mc" in cfg:
        est = _mc_estimate_for_contract(cfg, contract, model, timegrid)
        csvio.write_estimates_csv(out / "mc_estimates.csv", [(contract.style, est)])
        outputs.append("mc_estimates.csv")
    _write_manifest(out, cfg, {"final": result.mass_deficit}, outputs)


def _run_surface(cfg: dict, out: Path) -> None:
    model = build_model(cfg["model"])
    if not isinstance(model, models.VnbParams):
        raise ConfigError("surface experiments use the vnb family")
    block = cfg["contract"]
    zgrid = build_grid(cfg["grid"]["z_min"], cfg["grid"]["m"])
    ugrid = UGrid(cfg["grid"]["u_min"], cfg["grid"]["m_u"])
    surface = pricing.build_surface(
        model,
        block["spot"],
        block["strikes"],
        block["maturities"],
        zgrid,
        ugrid,
        dtau=cfg.get("time", {}).get("dtau", 1e-3),
    )
    csvio.write_surface_csv(out / "surface.csv", surface)
    _write_manifest(out, cfg, {}, ["surface.csv"])


def _run_validate(cfg: dict, out: Path) -> int:
    results = validation.run_all(cfg.get("criteria"))
    report = [r.as_dict() for r in results]
    out.mkdir(parents=True, exist_ok=True)
    (out / "validation_report.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def _run_bench(cfg: dict, out: Path) -> None:
    sizes = cfg.get("sizes", [2048, 4096, 8192])
    steps = cfg.get("steps", 1000)
    rows = bench(sizes, steps, compare_mc=cfg.get("compare_mc", False), log=print)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", encoding="utf-8") as fh:
        fh.write("m,median_seconds,ratio,mlogm_ratio\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def bench(sizes, steps: int = 1000, repeats: int = 5, compare_mc: bool = False, log=print):
    """Median propagate wall time per grid size, with m log m model ratios."""
    for m in sizes:
        if m & (m - 1):
            raise ConfigError("bench sizes must be powers of two")
    model = models.quadratic(**validation.STATIONARY_PARAMS)
    rows = []
    prev = None
    validation._propagation_seconds(sizes[0], 32, 1)  # warmup
    for m in sizes:
        sec = validation._propagation_seconds(m, steps, repeats)
        ratio = sec / prev if prev else float("nan")
        prev = sec
        rows.append((m, sec, ratio, 2.0 * math.log2(2 * m) / math.log2(m)))
        if log:
            log(f"m={m:>6}  median {sec:8.3f}s  ratio {ratio:5.2f}")
    if compare_mc and log:
        grid = build_grid(validation.Z_MIN, sizes[-1])
        start = time.perf_counter()
        propagate(model, Measure.OBJECTIVE, grid, TimeGrid(1e-3, steps))
        t_fca = time.perf_counter() - start
        cfg = mc.McConfig(model=model, measure=Measure.OBJECTIVE, n_paths=1_000_000,
                          n_steps=steps, dtau=1e-3, seed=0)
        start = time.perf_counter()
        mc.simulate(cfg)
        t_mc = time.perf_counter() - start
        log(f"FCA {t_fca:.2f}s vs MC(N=1e6) {t_mc:.2f}s  (ratio {t_mc / t_fca:.1f}x, hardware-dependent)")
    return rows


_RUNNERS = {
    "density": _run_density,
    "joint-density": _run_joint,
    "price": _run_price,
    "surface": _run_surface,
}


def run(config_path: str, seed_override: int | None = None) -> int:
    """Execute one experiment config; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        if seed_override is not None and "mc" in cfg:
            cfg = {**cfg, "mc": {**cfg["mc"], "seed": seed_override}}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(cfg)
    kind = cfg["experiment"]
    try:
        out.mkdir(parents=True, exist_ok=True)
        if kind == "validate":
            return _run_validate(cfg, out)
        if kind == "bench":
            _run_bench(cfg, out)
            return EXIT_OK
        _RUNNERS[kind](cfg, out)
        return EXIT_OK
    except (DomainError, NonMonotoneRemapError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


def bundled_config_path(name: str) -> Path:
    """Filesystem path of a bundled experiment config (without .json)."""
    res = importlib.resources.files("fastconv").joinpath(f"configs/{name}.json")
    with importlib.resources.as_file(res) as p:
        return Path(p)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fastconv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a config JSON (or a run manifest)")
    p_run.add_argument("--seed", type=int, default=None, help="override the MC seed")

    p_val = sub.add_parser("validate", help="run the acceptance suite")
    p_val.add_argument("--criteria", default=None,
                       help="comma-separated subset, e.g. 1,2,8,10 (default: all)")
    p_val.add_argument("--out", default="fastconv-validate", help="report directory")

    p_bench = sub.add_parser("bench", help="time the propagation kernel")
    p_bench.add_argument("--sizes", default="2048,4096,8192")
    p_bench.add_argument("--steps", type=int, default=1000)
    p_bench.add_argument("--compare-mc", action="store_true")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, seed_override=args.seed)
    if args.command == "validate":
        criteria = args.criteria.split(",") if args.criteria else None
        cfg = {"experiment": "validate", "output_dir": args.out}
        if criteria:
            cfg["criteria"] = criteria
        return _run_validate(cfg, _out_dir(cfg))
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
        bench(sizes, steps=args.steps, compare_mc=args.compare_mc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
