"""Command-line front end: scenario configs, orchestration, reproducible outputs.

A run is described by a JSON scenario file:

    {"command": "pf-check", "parameters": {...}, "seed": 7, "output_dir": "out"}

Commands: integrals, pf-check, series-fit, melnikov-zeros, simulate,
convergence, cyclicity-sweep.  Parsing is strict — unknown top-level or
parameter keys are rejected (exit 2) rather than ignored, so a typo cannot
silently change a run.  Numerical failures exit 3 with partial outputs
retained.  Every run writes manifest.json recording the scenario hash, tool
version, the fitted-constants provenance, the seed, and wall time; every
numeric table starts with a seed-stamped comment and a header row.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    ArcSpec,
    EscapedRegion,
    IntegratorConfig,
    StepFailure,
    TimeCap,
    arc_sampler_general,
    arc_sampler_no_first_order,
    cyclicity_sweep,
    integrate,
    melnikov_convergence,
)
from .geometry import energy, oval_geometry
from .integrals import QuadratureConfig, ToleranceNotMet, integral_triple
from .melnikov import MelnikovSpec, count_zeros, mk
from .series import (
    FittedConstants,
    IllConditionedFit,
    OutOfTrustRegion,
    default_constants,
    fit_constants,
    load_constants,
    pf_residuals,
    save_constants,
)

COMMANDS = (
    "integrals",
    "pf-check",
    "series-fit",
    "melnikov-zeros",
    "simulate",
    "convergence",
    "cyclicity-sweep",
)

_ALLOWED_PARAMS = {
    "integrals": {"h_min", "h_max", "n", "h_grid"},
    "pf-check": {"h_min", "h_max", "n", "threshold"},
    "series-fit": {"h_min", "h_max", "n", "degree"},
    "melnikov-zeros": {"k", "lam1k", "lam4k", "lam2", "lam3", "interval", "grid_n", "backend"},
    "simulate": {"x0", "y0", "h0", "lam", "t_end", "n_points"},
    "convergence": {"coeff_table", "order", "h_probe", "eps_seq"},
    "cyclicity-sweep": {"family", "eps", "h_window", "n_samples", "grid_n", "refine_tol"},
}

_NUMERICAL = (ToleranceNotMet, IllConditionedFit, TimeCap, EscapedRegion, StepFailure)


class ConfigError(ValueError):
    """Scenario file or flags unusable; exit status 2."""


class NumericalFailure(RuntimeError):
    """A computation missed its accuracy contract; exit status 3."""


class MissingInput(ConfigError):
    """emit_plot_data was pointed at inputs that do not exist."""


@dataclass(frozen=True)
class Scenario:
    command: str
    parameters: dict
    seed: int
    output_dir: Path


@dataclass(frozen=True)
class RunManifest:
    scenario_sha256: str
    tool_version: str
    constants: dict | None  # kappa/a1/a2/b2 + source file hash, or None if unused
    wall_time_s: float
    seed: int
    command: str
    status: str

    def to_json_dict(self) -> dict:
        return {
            "scenario_sha256": self.scenario_sha256,
            "tool_version": self.tool_version,
            "constants": self.constants,
            "wall_time_s": self.wall_time_s,
            "seed": self.seed,
            "command": self.command,
            "status": self.status,
        }


# --------------------------------------------------------------------------
# Scenario parsing
# --------------------------------------------------------------------------


def parse_scenario(doc: dict, seed_override=None, out_override=None) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = set(doc) - {"command", "parameters", "seed", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    command = doc.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {command!r}")
    params = doc.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("parameters must be an object")
    bad = set(params) - _ALLOWED_PARAMS[command]
    if bad:
        raise ConfigError(f"unknown parameters for {command}: {sorted(bad)}")
    seed = seed_override if seed_override is not None else doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    out = out_override if out_override is not None else doc.get("output_dir", "out")
    return Scenario(command=command, parameters=dict(params), seed=seed, output_dir=Path(out))


def _scenario_hash(s: Scenario) -> str:
    doc = {
        "command": s.command,
        "parameters": s.parameters,
        "seed": s.seed,
        "output_dir": str(s.output_dir),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------


def _write_csv(path: Path, header, rows, seed: int, command: str) -> None:
    with open(path, "w") as f:
        f.write(f"# command={command} seed={seed}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _write_json(path: Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def emit_plot_data(kind: str, inputs: dict, out_dir) -> Path:
    """Plot-ready whitespace-separated columns; no plotting in-process.

    kinds: 'integrals' (h I0 I2 I4p from 'samples'), 'melnikov' (h M from
    'h'/'values'), 'displacement' (h scaled predicted from 'rows' at the
    smallest eps), 'sweep-histogram' (count samples from 'histogram').
    """
    out_dir = Path(out_dir)
    path = out_dir / f"plot_{kind.replace('-', '_')}.txt"
    if kind == "integrals":
        samples = inputs.get("samples")
        if not samples:
            raise MissingInput("integrals plot needs 'samples'")
        lines = [f"{t.h:.17g} {t.I0:.17g} {t.I2:.17g} {t.I4p:.17g}" for t in samples]
    elif kind == "melnikov":
        hs, vals = inputs.get("h"), inputs.get("values")
        if hs is None or vals is None:
            raise MissingInput("melnikov plot needs 'h' and 'values'")
        lines = [f"{h:.17g} {v:.17g}" for h, v in zip(hs, vals)]
    elif kind == "displacement":
        rows = inputs.get("rows")
        if not rows:
            raise MissingInput("displacement plot needs 'rows'")
        eps_min = min(r.eps for r in rows)
        lines = [
            f"{r.h:.17g} {r.scaled_displacement:.17g} {r.m_k:.17g}"
            for r in rows
            if r.eps == eps_min
        ]
    elif kind == "sweep-histogram":
        hist = inputs.get("histogram")
        if hist is None:
            raise MissingInput("sweep-histogram plot needs 'histogram'")
        lines = [f"{count} {hist[count]}" for count in sorted(hist)]
    else:
        raise ConfigError(f"unknown plot kind {kind!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


# --------------------------------------------------------------------------
# Command handlers
# --------------------------------------------------------------------------


def _h_grid(params: dict, default_min=1e-4, default_max=3.0, default_n=50):
    if "h_grid" in params:
        return [float(h) for h in params["h_grid"]]
    return list(
        np.geomspace(
            float(params.get("h_min", default_min)),
            float(params.get("h_max", default_max)),
            int(params.get("n", default_n)),
        )
    )


def _run_integrals(s: Scenario, ctx: dict) -> None:
    cfg = QuadratureConfig()
    samples = [integral_triple(h, cfg) for h in _h_grid(s.parameters)]
    _write_csv(
        s.output_dir / "integrals.csv",
        ("h", "I0", "I1", "I2", "I0p", "I2p", "I4p", "I0pp", "err_max"),
        [
            (t.h, t.I0, t.I1, t.I2, t.I0p, t.I2p, t.I4p, t.I0pp, max(t.err.values()))
            for t in samples
        ],
        s.seed,
        s.command,
    )
    emit_plot_data("integrals", {"samples": samples}, s.output_dir)


def _run_pf_check(s: Scenario, ctx: dict) -> None:
    cfg = QuadratureConfig()
    threshold = float(s.parameters.get("threshold", 1e-7))
    rows = []
    worst = 0.0
    for h in _h_grid(s.parameters):
        r = pf_residuals(integral_triple(h, cfg))
        rows.append((h, r.r1, r.r2, r.r3, r.r4))
        worst = max(worst, r.r1, r.r2, r.r3, r.r4)
    _write_csv(s.output_dir / "pf_residuals.csv", ("h", "r1", "r2", "r3", "r4"), rows, s.seed, s.command)
    if worst >= threshold:
        raise NumericalFailure(f"max relative residual {worst:.3e} >= {threshold:g}")


def _run_series_fit(s: Scenario, ctx: dict) -> None:
    cfg = QuadratureConfig()
    hs = _h_grid(s.parameters, default_min=0.01, default_max=0.15, default_n=24)
    consts = fit_constants(
        [(h, integral_triple(h, cfg)) for h in hs],
        degree=int(s.parameters.get("degree", 8)),
    )
    save_constants(consts, s.output_dir / "constants.json")
    _write_json(
        s.output_dir / "fit_report.json",
        {
            "a1": consts.a1,
            "a2": consts.a2,
            "b2": consts.b2,
            "kappa": consts.kappa,
            "residual": consts.residual,
            "window": list(consts.window),
            "n_samples": len(hs),
            "seed": s.seed,
        },
    )


def _run_melnikov_zeros(s: Scenario, ctx: dict) -> None:
    p = s.parameters
    spec = MelnikovSpec(
        k=int(p.get("k", 1)),
        lam1k=float(p.get("lam1k", 0.0)),
        lam4k=float(p.get("lam4k", 0.0)),
        lam2=tuple(float(v) for v in p.get("lam2", ())),
        lam3=tuple(float(v) for v in p.get("lam3", ())),
    )
    interval = tuple(float(v) for v in p.get("interval", (1e-3, 0.3)))
    grid_n = int(p.get("grid_n", 160))
    backend = p.get("backend", "quadrature")
    consts = ctx["consts"]()
    f = lambda h: mk(h, spec, backend=backend, consts=consts)  # noqa: E731
    zc = count_zeros(f, interval, grid_n=grid_n)
    doc = zc.to_json_dict()
    doc.update(
        {
            "seed": s.seed,
            "spec": {
                "k": spec.k,
                "lam1k": spec.lam1k,
                "lam4k": spec.lam4k,
                "lam2": list(spec.lam2),
                "lam3": list(spec.lam3),
            },
            "backend": backend,
        }
    )
    _write_json(s.output_dir / "zero_count.json", doc)
    hs = np.geomspace(interval[0], interval[1], grid_n)
    emit_plot_data("melnikov", {"h": hs, "values": [f(h) for h in hs]}, s.output_dir)


def _run_simulate(s: Scenario, ctx: dict) -> None:
    p = s.parameters
    if "h0" in p:
        p0 = (oval_geometry(float(p["h0"])).x_plus, 0.0)
    else:
        p0 = (float(p.get("x0", 2.0)), float(p.get("y0", 0.0)))
    lam = tuple(float(v) for v in p.get("lam", (0.0, 0.0, 0.0, 0.0)))
    if len(lam) != 4:
        raise ConfigError("lam must have four entries")
    t_end = float(p.get("t_end", 20.0))
    traj = integrate(p0, lam, t_end, IntegratorConfig())
    ts = np.linspace(0.0, t_end, int(p.get("n_points", 2001)))
    states = traj.interpolant(ts)
    rows = [
        (float(t), float(x), float(y), energy((x, y)))
        for t, x, y in zip(ts, states[0], states[1])
    ]
    _write_csv(s.output_dir / "trajectory.csv", ("t", "x", "y", "H"), rows, s.seed, s.command)


def _run_convergence(s: Scenario, ctx: dict) -> None:
    p = s.parameters
    table = p.get("coeff_table", {"lam1": [0.0, 1.0]})
    arc = ArcSpec(
        coeff_table={k: tuple(float(c) for c in v) for k, v in table.items()},
        order=int(p.get("order", 2)),
    )
    rows = melnikov_convergence(
        arc,
        [float(h) for h in p.get("h_probe", (0.1, 0.2, 0.4))],
        [float(e) for e in p.get("eps_seq", (1e-2, 3e-3, 1e-3, 3e-4, 1e-4))],
        IntegratorConfig(),
    )
    _write_csv(
        s.output_dir / "convergence.csv",
        ("eps", "h", "scaled_displacement", "m_k", "ratio"),
        rows,
        s.seed,
        s.command,
    )
    emit_plot_data("displacement", {"rows": rows}, s.output_dir)


_FAMILIES = {"general": arc_sampler_general, "no-first-order": arc_sampler_no_first_order}


def _run_cyclicity_sweep(s: Scenario, ctx: dict) -> None:
    p = s.parameters
    family = p.get("family", "general")
    if family not in _FAMILIES:
        raise ConfigError(f"family must be one of {sorted(_FAMILIES)}")
    result = cyclicity_sweep(
        _FAMILIES[family],
        eps=float(p.get("eps", 1e-3)),
        h_window=tuple(float(v) for v in p.get("h_window", (1e-3, 0.2))),
        n_samples=int(p.get("n_samples", 200)),
        cfg=IntegratorConfig(),
        seed=s.seed,
        grid_n=int(p.get("grid_n", 24)),
        refine_tol=float(p.get("refine_tol", 1e-4)),
        threads=ctx["threads"],
    )
    with open(s.output_dir / "sweep.jsonl", "w") as f:
        for sample in result.samples:
            f.write(
                json.dumps(
                    {
                        "index": sample.index,
                        "arc": {k: list(v) for k, v in sample.arc.coeff_table.items()},
                        "eps": result.eps,
                        "count": sample.count,
                        "bound": sample.bound,
                        "anomaly": sample.anomaly,
                        "failed": sample.failed,
                        "seed": result.seed,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    _write_json(
        s.output_dir / "sweep_summary.json",
        {
            "family": family,
            "eps": result.eps,
            "h_window": list(result.h_window),
            "histogram": {str(k): v for k, v in sorted(result.histogram.items())},
            "max_count": result.max_count,
            "n_anomalies": len(result.anomalies),
            "n_failed": sum(1 for x in result.samples if x.failed),
            "seed": result.seed,
        },
    )
    emit_plot_data("sweep-histogram", {"histogram": result.histogram}, s.output_dir)


_HANDLERS = {
    "integrals": _run_integrals,
    "pf-check": _run_pf_check,
    "series-fit": _run_series_fit,
    "melnikov-zeros": _run_melnikov_zeros,
    "simulate": _run_simulate,
    "convergence": _run_convergence,
    "cyclicity-sweep": _run_cyclicity_sweep,
}

_NEEDS_CONSTANTS = {"melnikov-zeros", "convergence"}


# --------------------------------------------------------------------------
# Orchestration
# --------------------------------------------------------------------------


def run(scenario: Scenario, threads: int = 1, constants_path=None) -> int:
    """Execute a scenario; returns the process exit status (0, 2, or 3)."""
    t_start = time.monotonic()
    scenario.output_dir.mkdir(parents=True, exist_ok=True)

    consts_holder: dict = {}

    def resolve_consts() -> FittedConstants:
        if "value" not in consts_holder:
            if constants_path is not None:
                path = Path(constants_path)
                if not path.exists():
                    raise ConfigError(f"constants file not found: {path}")
                consts_holder["value"] = load_constants(path)
                consts_holder["hash"] = hashlib.sha256(path.read_bytes()).hexdigest()
            else:
                consts_holder["value"] = default_constants()
                consts_holder["hash"] = None
        return consts_holder["value"]

    status = 0
    error = None
    try:
        if scenario.command in _NEEDS_CONSTANTS:
            resolve_consts()  # fail early if the file is missing
        _HANDLERS[scenario.command](scenario, {"consts": resolve_consts, "threads": threads})
    except (ConfigError, OutOfTrustRegion) as exc:
        status, error = 2, str(exc)
    except (NumericalFailure, *_NUMERICAL) as exc:
        status, error = 3, str(exc)

    consts = consts_holder.get("value")
    manifest = RunManifest(
        scenario_sha256=_scenario_hash(scenario),
        tool_version=__version__,
        constants=None
        if consts is None
        else {
            "kappa": consts.kappa,
            "a1": consts.a1,
            "a2": consts.a2,
            "b2": consts.b2,
            "file_sha256": consts_holder.get("hash"),
        },
        wall_time_s=time.monotonic() - t_start,
        seed=scenario.seed,
        command=scenario.command,
        status="ok" if status == 0 else f"error: {error}",
    )
    _write_json(scenario.output_dir / "manifest.json", manifest.to_json_dict())
    if error is not None:
        print(f"{scenario.command}: {error}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="eightloop",
        description="Limit-cycle laboratory for the perturbed figure-eight oscillator.",
    )
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--out", default=None, help="override the scenario output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    parser.add_argument("--constants", default=None, help="fitted-constants JSON to use")
    args = parser.parse_args(argv)
    try:
        doc = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        print(f"config not found: {args.config}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        scenario = parse_scenario(doc, seed_override=args.seed, out_override=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(scenario, threads=args.threads, constants_path=args.constants)


if __name__ == "__main__":
    sys.exit(main())
