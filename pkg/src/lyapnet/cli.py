"""Command-line entry point.

Every subcommand reads one JSON config and writes JSON/CSV into ``--out``.
Exit codes: 0 success, 1 error, 2 verification gate failed, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import comparison
from .experiments import (
    ExperimentConfig,
    TransformConfig,
    scaling_sweep,
    transform_recovery,
    write_records_csv,
)
from .network import build_network, load_checkpoint, save_checkpoint
from .sampling import Box
from .small_gain import GridSpec, QuadraticV, SubsystemISSData, check_small_gain, compose_lyapunov, normalize_to_W1
from .systems import system_from_config
from .training import TrainingConfig, fit_to_reference, train
from .verification import QuadraticCandidate, QuadraticMargin, sup_error, verify_integral, verify_pointwise

log = logging.getLogger("lyapnet")

EX_OK, EX_ERROR, EX_GATE, EX_USAGE = 0, 1, 2, 64

COMMANDS = ("smallgain-check", "compose-eval", "train", "fit", "verify", "scale", "transform-test")

USAGE = """usage: lyapnet <command> [config.json] [--config PATH] [--out DIR] [--seed N]
               [--threads K] [--fail-on-violation-rate P] [--wall-clock]

commands:
  smallgain-check   check the small-gain inequality on a grid
  compose-eval      evaluate the composed (and normalized) Lyapunov function
  train             residual (collocation) training of a network
  fit               supervised fit of a network to the normalized composed V
  verify            pointwise / integral decrease checks, sup error
  scale             minimal-width sweep and log-log fit of N against n
  transform-test    transform-layer representation and recovery study
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser(cmd: str) -> argparse.ArgumentParser:
    p = _Parser(prog=f"lyapnet {cmd}", add_help=False)
    p.add_argument("config_pos", nargs="?")
    p.add_argument("--config")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--fail-on-violation-rate", type=float)
    p.add_argument("--wall-clock", action="store_true", help="fill the wall_ms CSV column")
    return p


# --------------------------------------------------------------------------
# config helpers


def _seed(cfg: dict, section: dict | None = None) -> int:
    if section and "seed" in section:
        return int(section["seed"])
    return int(cfg.get("seed", 0))


def _iss_from_config(cfg: dict):
    """Explicit subsystem list, or the benchmark's own ISS data."""
    if "subsystems" in cfg:
        spec = []
        for i, sd in enumerate(cfg["subsystems"]):
            dim = int(sd.get("dim", 1))
            P = np.asarray(sd["P"], dtype=float) if "P" in sd else np.eye(dim)
            spec.append(
                SubsystemISSData(
                    index=i,
                    dim=dim,
                    V=QuadraticV(P),
                    alpha=comparison.from_json(sd["alpha"]),
                    eta=comparison.from_json(sd["eta"]),
                    gains={int(j): comparison.from_json(g) for j, g in sd.get("gains", {}).items()},
                )
            )
        return None, spec
    return system_from_config(_system_cfg(cfg))


def _system_cfg(cfg: dict) -> dict:
    sysd = dict(cfg["system"])
    sysd.setdefault("seed", cfg.get("seed", 0))
    return sysd


def _box(cfg: dict, n: int) -> Box:
    b = cfg.get("box", {})
    if "lower" in b:
        return Box(tuple(b["lower"]), tuple(b["upper"]))
    return Box.cube(n, float(b.get("C", 1.0)))


def _reference(cfg: dict):
    sys, spec = system_from_config(_system_cfg(cfg))
    V = compose_lyapunov(spec, tol=float(cfg.get("quad_tol", comparison.DEFAULT_TOL)))
    V = normalize_to_W1(V, _box(cfg, sys.n).as_arrays(), seed=_seed(cfg))
    if sys.T is not None:
        V = type(V)(V.terms, V.partition, V.mu, sys.T)
    return sys, spec, V


def _network(cfg: dict, sys, spec):
    nd = dict(cfg.get("network", {}))
    arch = nd.pop("arch", "sublayer")
    seed = _seed(cfg, nd)
    nd.pop("seed", None)
    act = nd.pop("activation", "softplus")
    M = int(nd.pop("M", 20))
    if arch == "sublayer":
        return build_network(arch, partition=[s.dim for s in spec], M=M, activation=act, seed=seed)
    if arch == "transform":
        d_max = int(nd.pop("d_max", max(s.dim for s in spec)))
        return build_network(arch, n=sys.n, d_max=d_max, M=M, activation=act, seed=seed)
    return build_network(arch, n=sys.n, width=M, activation=act, seed=seed)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_smallgain(cfg, out: Path, args) -> int:
    _, spec = _iss_from_config(cfg)
    grid = GridSpec(**cfg.get("grid", {}))
    cert = check_small_gain(spec, grid)
    _write_json(out / "certificate.json", {"config": cfg, "certificate": cert.to_dict()})
    print(json.dumps(cert.to_dict()))
    return EX_OK if cert.passed else EX_GATE


def cmd_compose(cfg, out: Path, args) -> int:
    sys, spec, Vn = _reference(cfg)
    if "points" in cfg:
        X = np.asarray(cfg["points"], dtype=float).reshape(-1, sys.n)
    else:
        X = _box(cfg, sys.n).uniform(int(cfg.get("samples", 100)), np.random.default_rng(_seed(cfg)))
    raw = Vn.value(X) / Vn.mu
    with open(out / "compose.csv", "w") as fh:
        fh.write(",".join([f"x{i + 1}" for i in range(sys.n)] + ["V", "V_normalized"]) + "\n")
        for x, v in zip(X, raw):
            fh.write(",".join(repr(float(t)) for t in [*x, v, Vn.mu * v]) + "\n")
    _write_json(out / "compose.json", {"config": cfg, "mu": Vn.mu, "points": len(X)})
    return EX_OK


def cmd_train(cfg, out: Path, args) -> int:
    sys, spec = system_from_config(_system_cfg(cfg))
    net = _network(cfg, sys, spec)
    td = dict(cfg.get("training", {}))
    td["seed"] = _seed(cfg, td)
    report = train(net, sys, TrainingConfig.from_dict(td))
    report.write_curve(out / "loss_curve.csv")
    bin_path, _ = save_checkpoint(net, out / "checkpoint")
    report.checkpoint = str(bin_path)
    _write_json(out / "train_report.json", {"config": cfg, "report": report.to_dict()})
    return EX_OK


def cmd_fit(cfg, out: Path, args) -> int:
    sys, spec, Vn = _reference(cfg)
    net = _network(cfg, sys, spec)
    fd = cfg.get("fit", {})
    rep = fit_to_reference(
        net,
        Vn,
        _box(cfg, sys.n),
        samples=int(fd.get("samples", 2000)),
        steps=int(fd.get("steps", 500)),
        seed=_seed(cfg, fd),
        method=fd.get("method", "lsq"),
    )
    save_checkpoint(net, out / "checkpoint")
    with open(out / "fit.csv", "w") as fh:
        fh.write("sup_err,rms_err,train_rms\n")
        fh.write(f"{rep.sup!r},{rep.rms!r},{rep.train_rms!r}\n")
    _write_json(out / "fit_report.json", {"config": cfg, "report": rep.to_dict()})
    return EX_OK


def _candidate(cfg, vd, base_dir: Path):
    cand = vd.get("candidate", {"kind": "composed"})
    kind = cand.get("kind")
    if kind == "checkpoint":
        path = Path(cand["path"])
        return load_checkpoint(path if path.is_absolute() else base_dir / path)
    if kind == "quadratic":
        return QuadraticCandidate(float(cand.get("scale", 1.0)))
    if kind == "composed":
        return _reference(cfg)[2]
    raise ValueError(f"unknown candidate kind {kind!r}")


def cmd_verify(cfg, out: Path, args) -> int:
    sys, _ = system_from_config(_system_cfg(cfg))
    vd = cfg.get("verify", {})
    W = _candidate(cfg, vd, Path(args.config_dir))
    box = _box(cfg, sys.n)
    seed = _seed(cfg, vd)
    samples = int(vd.get("samples", 10_000))
    h = QuadraticMargin(float(vd.get("kappa", 0.0)))
    tol = float(vd.get("tol", 0.0))
    mode = vd.get("mode", "pointwise")
    if mode == "pointwise":
        report = verify_pointwise(W, sys, box, samples, h, tol, float(vd.get("r0", 1e-3)), seed).to_dict()
        rate = report["violation_rate"]
    elif mode == "integral":
        report = verify_integral(
            W, sys, box, samples, float(vd.get("horizon", 1.0)), float(vd.get("step", 1e-3)), h, tol, seed
        ).to_dict()
        rate = report["violation_rate"]
    elif mode == "sup_error":
        report = sup_error(W, _reference(cfg)[2], box, samples, seed).to_dict()
        rate = None
    else:
        raise ValueError(f"unknown verification mode {mode!r}")
    report["mode"] = mode
    _write_json(out / "verify_report.json", {"config": cfg, "report": report})
    with open(out / "verify.csv", "w") as fh:
        fh.write("mode,samples,violation_rate,worst\n")
        worst = report.get("worst_margin", report.get("sup"))
        fh.write(f"{mode},{report['samples']},{'' if rate is None else repr(rate)},{worst!r}\n")
    gate = args.fail_on_violation_rate
    if gate is not None and rate is not None and rate > gate:
        log.error("violation rate %.4g exceeds gate %.4g", rate, gate)
        return EX_GATE
    return EX_OK


def cmd_scale(cfg, out: Path, args) -> int:
    ed = dict(cfg.get("experiment", cfg))
    ed.pop("seed", None)
    if args.seed is not None:
        ed["data_seed"] = args.seed
    ecfg = ExperimentConfig.from_dict(ed)
    records, fit = scaling_sweep(ecfg, threads=args.threads)
    write_records_csv(records, out / "records.csv", wall_clock=args.wall_clock)
    _write_json(
        out / "scaling.json",
        {"config": asdict(ecfg), "fit": fit, "records": [r.to_dict() for r in records]},
    )
    print(json.dumps(fit))
    return EX_OK


def cmd_transform(cfg, out: Path, args) -> int:
    td = dict(cfg.get("transform", cfg))
    td.pop("system", None)
    if args.seed is not None:
        td["seed"] = args.seed
    report = transform_recovery(TransformConfig.from_dict(td))
    _write_json(out / "transform_report.json", report)
    with open(out / "transform.csv", "w") as fh:
        fh.write("representation_max_abs_diff,assigned_sup_error_gap,trained_sup_error,max_trained_angle\n")
        fh.write(
            f"{report['representation_max_abs_diff']!r},{report['assigned_sup_error_gap']!r},"
            f"{report['trained_sup_error']!r},{max(report['trained_alignment_angles'])!r}\n"
        )
    return EX_OK


HANDLERS = {
    "smallgain-check": cmd_smallgain,
    "compose-eval": cmd_compose,
    "train": cmd_train,
    "fit": cmd_fit,
    "verify": cmd_verify,
    "scale": cmd_scale,
    "transform-test": cmd_transform,
}


def run_cli(argv: list[str]) -> int:
    if not argv or argv[0] not in HANDLERS:
        sys.stderr.write(USAGE)
        return EX_USAGE
    cmd = argv[0]
    try:
        args = _parser(cmd).parse_args(argv[1:])
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n{USAGE}")
        return EX_USAGE
    path = args.config or args.config_pos
    if path is None:
        sys.stderr.write(f"error: {cmd} needs a config file\n{USAGE}")
        return EX_USAGE
    try:
        cfg = json.loads(Path(path).read_text())
        if args.seed is not None:
            cfg["seed"] = args.seed
        args.config_dir = str(Path(path).resolve().parent)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[cmd](cfg, out, args)
    except Exception as exc:  # noqa: BLE001
        log.error("%s failed: %s", cmd, exc)
        sys.stderr.write(f"error: {exc}\n")
        return EX_ERROR


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
