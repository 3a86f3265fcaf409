"""Batch experiment runner.

One subcommand per experiment; configuration comes from an optional
JSON file plus flag overrides (flags win).  Each run writes
<out>/<experiment>.csv and <out>/<experiment>.json.  All numeric CSV
fields are printed with 17 significant digits in lowercase scientific
notation so that reruns are byte-identical for any thread count.

Exit codes: 0 ok, 2 configuration error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .anomalous import (
    compact_eigenfunctions,
    gamma1_eigenfunction,
    gamma2_eigenfunction,
)
from .coupling import s2w_identity_check, weak_disorder_bound_check
from .disorder import spec_from_descriptor
from .dynamics import laplace_moment_check, moment_Mp, pmoment_probe
from .fracmoment import (
    DecayMetric,
    EnsembleSpec,
    kernel_identity_residual,
    mc_chi_green,
    mc_map,
    wegner_count,
)
from .lattice import (
    LatticeBox,
    is_doubly_insulated,
    mask_from_descriptor,
    relative_density,
)
from .operators import assemble, trimmed_restriction
from .spectral import (
    green,
    resolvent_identity_residual,
    schur_green,
)

EXPERIMENTS = (
    "verify",
    "localize",
    "wegner",
    "anomalous",
    "dynamics",
    "couple",
    "lattice-info",
)

_CONFIG_KEYS = {
    "box",
    "gamma",
    "disorder",
    "v0",
    "g",
    "s",
    "eta",
    "energy",
    "epsilon",
    "p",
    "times",
    "samples",
    "seed",
    "threads",
    "out",
}

_DEFAULTS = {
    "box": "1..5,1..5",
    "gamma": "gamma1:2,2",
    "disorder": "uniform:0,1",
    "v0": None,
    "g": 5.0,
    "s": 1.0 / 3.0,
    "eta": 0.1,
    "energy": 4.0,
    "epsilon": [0.1],
    "p": 2.0,
    "times": [0.5, 1.0, 2.0, 4.0],
    "samples": 100,
    "seed": 0,
    "threads": None,
    "out": "trimlab-out",
}


class ConfigError(ValueError):
    pass


def _parse_box(text: str) -> LatticeBox:
    try:
        lo, hi = [], []
        for part in text.split(","):
            a, b = part.split("..")
            lo.append(int(a))
            hi.append(int(b))
        return LatticeBox(tuple(lo), tuple(hi))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"malformed box descriptor {text!r}: {exc}") from exc


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return f"{float(value):.16e}"


def _load_config(args: argparse.Namespace) -> dict:
    config = dict(_DEFAULTS)
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        unknown = set(loaded) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    overrides = {
        "seed": args.seed,
        "threads": args.threads,
        "out": args.out,
        "g": args.g,
        "s": args.s,
        "eta": args.eta,
        "energy": args.energy,
        "samples": args.samples,
        "box": args.box,
        "gamma": args.gamma,
    }
    if args.epsilon is not None:
        try:
            overrides["epsilon"] = [float(v) for v in args.epsilon.split(",")]
        except ValueError as exc:
            raise ConfigError(f"malformed epsilon list: {exc}") from exc
    else:
        overrides["epsilon"] = None
    config.update({k: v for k, v in overrides.items() if v is not None})
    if config["threads"] is None:
        env = os.environ.get("TRIMLAB_THREADS")
        config["threads"] = int(env) if env else (os.cpu_count() or 1)
    if isinstance(config["epsilon"], (int, float)):
        config["epsilon"] = [float(config["epsilon"])]
    return config


def _resolved(config: dict):
    """Validate the config into the objects the experiments consume."""
    try:
        box = _parse_box(config["box"])
        mask = mask_from_descriptor(config["gamma"])
        dist = spec_from_descriptor(config["disorder"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for key in ("g", "s", "eta", "energy", "p"):
        try:
            config[key] = float(config[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {key!r} must be a number") from exc
    for key in ("samples", "seed", "threads"):
        try:
            config[key] = int(config[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {key!r} must be an integer") from exc
    if config["samples"] < 1:
        raise ConfigError("samples must be >= 1")
    if not all(isinstance(e, (int, float)) and e > 0 for e in config["epsilon"]):
        raise ConfigError("epsilon values must be positive numbers")
    ens = EnsembleSpec(
        box,
        mask,
        dist,
        config["g"],
        v0=config["v0"],
        master_seed=config["seed"],
        samples=config["samples"],
    )
    return ens, DecayMetric(config["eta"])


# ---------------------------------------------------------------------------
# Experiments: each returns (header, rows) for the CSV
# ---------------------------------------------------------------------------


def _run_verify(config: dict):
    ens, _ = _resolved(config)
    rng = np.random.default_rng(config["seed"])
    tol = 1e-10
    rows = []

    def record(check, residual):
        rows.append([check, residual, tol, residual <= tol])

    box, mask = ens.box, ens.mask
    sites = tuple(box.sites())
    for trial in range(5):
        v = ens.potential(trial)
        ham = assemble(box, mask, ens.v0, ens.g, v)
        z = complex(rng.normal(), 0.3 + rng.random())
        n_x = max(1, len(sites) // 2)
        x_sites = list(sites[:n_x])
        xs, schur = schur_green(ham, x_sites, z)
        g = green(ham, z).entries
        idx = [box.index(s_) for s_ in xs]
        record(
            f"schur[{trial}]",
            float(np.max(np.abs(schur - g[np.ix_(idx, idx)]))),
        )
        for case in ("in-out", "out-in", "out-out"):
            record(
                f"resolvent-{case}[{trial}]",
                resolvent_identity_residual(ham, x_sites, z, case),
            )
        if any(s_ not in mask for s_ in sites):
            record(
                f"kernel[{trial}]", kernel_identity_residual(ens, z, trial)
            )
        h0 = ens.deterministic_part()
        u_real = rng.normal(size=len(sites))
        u_cplx = u_real + 1j * rng.random(len(sites))
        for tag, u in (("real", u_real), ("complex", u_cplx)):
            res = s2w_identity_check(h0, u, z)
            record(f"hedgehog-{tag}-base[{trial}]", res["residual0"])
            record(f"hedgehog-{tag}-pendant[{trial}]", res["residual1"])
    return ["check", "residual", "tolerance", "pass"], rows


def _run_localize(config: dict):
    ens, rho = _resolved(config)
    rows = []
    for eps in config["epsilon"]:
        z = complex(config["energy"], eps)
        rep = mc_chi_green(ens, z, config["s"], rho, config["threads"])
        rows.append(
            [
                ens.box.size,
                config["s"],
                config["eta"],
                eps,
                rep.value,
                rep.stderr,
                rep.samples,
            ]
        )
    return [
        "box_size",
        "s",
        "eta",
        "epsilon",
        "chi_estimate",
        "stderr",
        "samples",
    ], rows


def _run_wegner(config: dict):
    ens, _ = _resolved(config)
    rows = []
    for eps in config["epsilon"]:
        rep = wegner_count(
            ens, config["energy"], eps, threads=config["threads"]
        )
        rows.append(
            [
                eps,
                rep["p_excess"],
                rep["mult"],
                rep["gap"],
                rep["mass_bound_checked"],
                rep["mass_bound_holds"],
                rep["samples"],
            ]
        )
    return [
        "epsilon",
        "p_excess",
        "mult",
        "gap",
        "mass_checks",
        "mass_bound_holds",
        "samples",
    ], rows


def _run_anomalous(config: dict):
    ens, _ = _resolved(config)
    mask = ens.mask
    rows = []
    h0 = ens.deterministic_part()
    try:
        rep = compact_eigenfunctions(h0, mask, config["energy"])
        rows.append(
            [
                "compact",
                config["energy"],
                rep.full_mult,
                rep.supported_dim,
                rep.assumption3,
            ]
        )
    except ValueError:
        rows.append(["compact", config["energy"], 0, 0, False])
    comp = [s_ for s_ in ens.box.sites() if s_ not in mask]
    if comp:
        spectrum = np.linalg.eigvalsh(trimmed_restriction(h0).matrix)
        for lam in sorted(set(np.round(spectrum, 10))):
            mult = int(np.sum(np.abs(spectrum - lam) < 1e-9))
            rows.append(["trimmed-spectrum", float(lam), mult, 0, True])
    desc = mask.descriptor()
    window = LatticeBox(
        tuple(c - 10 for c in ens.box.lo), tuple(c + 10 for c in ens.box.hi)
    )
    if desc.startswith("gamma1:"):
        k, m = (int(v) for v in desc.split(":")[1].split(","))
        fn = gamma1_eigenfunction(k, m, 1, 1)
        rows.append(
            ["gamma1-eigenfunction", fn.lam, 0, 0, fn.window_residual(window) <= 1e-10]
        )
    if desc.startswith("gamma2:"):
        fn = gamma2_eigenfunction(int(desc.split(":")[1]))
        rows.append(
            ["gamma2-eigenfunction", fn.lam, 0, 0, fn.window_residual(window) <= 1e-10]
        )
    return ["check", "energy", "full_mult", "supported_dim", "pass"], rows


def _run_dynamics(config: dict):
    ens, _ = _resolved(config)
    center = tuple(
        (a + b) // 2 for a, b in zip(ens.box.lo, ens.box.hi)
    )
    rows = []
    p = config["p"]
    for t in config["times"]:
        values, _ = mc_map(
            lambda i: moment_Mp(ens.realization(i), center, float(t), p),
            ens,
            config["threads"],
        )
        arr = np.array(values)
        se = (
            float(np.std(arr, ddof=1) / np.sqrt(len(arr)))
            if len(arr) > 1
            else 0.0
        )
        rows.append([float(t), p, float(np.mean(arr)), se])
    chk = laplace_moment_check(
        ens,
        config["energy"],
        config["epsilon"][0],
        p,
        center,
        config["threads"],
    )
    rows.append([-1.0, p, chk["margin"], 1.0 if chk["holds"] else 0.0])
    probe = pmoment_probe(
        ens,
        config["energy"],
        sorted(config["epsilon"], reverse=True),
        p,
        center,
        config["threads"],
    )
    for r in probe["rows"]:
        rows.append([-2.0, p, r["S"], r["stderr"]])
    return ["t", "p", "Mp", "stderr"], rows


def _run_couple(config: dict):
    ens, rho = _resolved(config)
    rng = np.random.default_rng(config["seed"])
    rows = []
    h0 = ens.deterministic_part()
    z = complex(config["energy"], max(config["epsilon"][0], 1e-6))
    for tag, u in (
        ("real", rng.normal(size=ens.box.size)),
        ("complex", rng.normal(size=ens.box.size) + 1j * rng.random(ens.box.size)),
    ):
        res = s2w_identity_check(h0, u, z)
        rows.append([f"s2w-{tag}-base", res["residual0"], 0.0, res["residual0"] <= 1e-10])
        rows.append([f"s2w-{tag}-pendant", res["residual1"], 0.0, res["residual1"] <= 1e-10])
    from .disorder import estimate_decoupling_constants

    c_mu = estimate_decoupling_constants(
        ens.dist, config["s"], 200, config["seed"]
    )["C_s"]
    try:
        rep = weak_disorder_bound_check(
            ens,
            config["energy"],
            config["epsilon"][0],
            config["s"],
            rho,
            c_mu,
            config["threads"],
        )
    except ValueError as exc:
        rows.append(["weak-bound", 0.0, 0.0, False])
        rows.append([f"weak-bound-error:{exc}", 0.0, 0.0, False])
        return ["check", "value", "bound", "pass"], rows
    if rep["applicable"]:
        rows.append(["weak-bound", rep["lhs"], rep["bound"], rep["holds"]])
        audit = rep["audit"]
        rows.append(
            [
                "weak-bound-audit-pendant",
                audit["pendant_chi"],
                audit["pendant_bound"],
                audit["pendant_holds"],
            ]
        )
        rows.append(
            [
                "weak-bound-audit-star",
                rep["lhs"],
                audit["star_rhs"],
                audit["star_holds"],
            ]
        )
    else:
        rows.append(["weak-bound-inapplicable", rep["chi0"], 0.0, True])
    return ["check", "value", "bound", "pass"], rows


def _run_lattice_info(config: dict):
    ens, _ = _resolved(config)
    mask = ens.mask
    center = tuple(
        (a + b) // 2 for a, b in zip(ens.box.lo, ens.box.hi)
    )
    rows = []
    for radius in (2, 5, 10, 20):
        frac = relative_density(mask, radius, center)
        rows.append(
            ["density", radius, float(frac), f"{frac.numerator}/{frac.denominator}"]
        )
    rep = is_doubly_insulated(mask, ens.box)
    rows.append(
        ["insulated", ens.box.size, 1.0 if rep.insulated else 0.0, str(rep.n_components)]
    )
    return ["check", "scale", "value", "detail"], rows


_RUNNERS = {
    "verify": _run_verify,
    "localize": _run_localize,
    "wegner": _run_wegner,
    "anomalous": _run_anomalous,
    "dynamics": _run_dynamics,
    "couple": _run_couple,
    "lattice-info": _run_lattice_info,
}


def run(experiment: str, config: dict) -> dict:
    """Dispatch one experiment; returns the in-memory result record."""
    start = time.monotonic()
    header, rows = _RUNNERS[experiment](config)
    return {
        "experiment": experiment,
        "config": {k: config[k] for k in sorted(config)},
        "header": header,
        "rows": rows,
        "provenance": {
            "version": __version__,
            "seed": config["seed"],
            "wall_time_s": time.monotonic() - start,
        },
    }


def emit(record: dict, out_dir: str) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{record['experiment']}.csv"
    json_path = out / f"{record['experiment']}.json"
    lines = [",".join(record["header"])]
    for row in record["rows"]:
        lines.append(",".join(_fmt(v) for v in row))
    csv_path.write_text("\n".join(lines) + "\n")
    json_path.write_text(
        json.dumps(
            {
                **record,
                "rows": [
                    [v if isinstance(v, (str, bool)) else float(v) for v in row]
                    for row in record["rows"]
                ],
            },
            indent=2,
            default=str,
        )
        + "\n"
    )
    return csv_path, json_path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trimlab",
        description="numerical laboratory for trimmed random lattice operators",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--g", type=float, default=None)
        p.add_argument("--s", type=float, default=None)
        p.add_argument("--eta", type=float, default=None)
        p.add_argument("--energy", type=float, default=None)
        p.add_argument("--epsilon", default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--box", default=None)
        p.add_argument("--gamma", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        _resolved(dict(config))  # validate before dispatch
    except ConfigError as exc:
        print(f"trimlab: config error: {exc}", file=sys.stderr)
        return 2
    try:
        record = run(args.experiment, config)
        csv_path, _ = emit(record, config["out"])
    except Exception as exc:  # numeric or I/O failure after validation
        print(f"trimlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(csv_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
