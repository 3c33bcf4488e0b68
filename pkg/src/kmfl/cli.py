"""Command-line entry points.

Every subcommand reads one structured config file (YAML; JSON works too
since it is a YAML subset), writes its CSV outputs plus a ``manifest.json``
(config echo, seed, package version, output list) into the output
directory, and exits 0 on success, 1 on a validation failure, 2 on a
configuration error.

Config schema (sections used depend on the subcommand)::

    seed: 1234                 # root seed; --seed overrides
    out_dir: runs/example      # --out overrides
    functional:
      kind: two_layer_net      # or curie_weiss
      L: 500.0                 # truncation threshold (two_layer_net)
      dataset: {kind: synthetic, K: 500, d_in: 16, seed: 7}
      #        {kind: mnist, images: ..., labels: ..., class_a: 4,
      #         class_b: 6, max_k: 10000}
      # kappa: 1.0, eps: 0.5, dimension: 1        (curie_weiss)
    dynamics: {alpha: 1.0, gamma: 0.1, sigma: 0.0141421356, lambda: 1.0e-4,
               dt: 0.02, T: 30.0}
    init: {m0x_std: 0.1, m0v_std: 0.5}
    record_every: 10
    simulate: {observers: [loss, kinetic]}
    sweep: {N: [32, 64, 128], R: 3, tail_window: null, workers: 1}
    compare: {N: 64}
    oracle: {kappa: 1.0, eps: 0.5, dimension: 1, N: [1024], checkpoints: 10,
             mean_tol: 5.0, cov_tol: 10.0, subsample: 512,
             init_mean_x: 1.0, init_mean_v: 0.0, ode_dt: null}
    coupling: {N: 1000, horizon: 1.0, dt: 0.001, sigma: 1.0, record_every: 10,
               drift_a: {kind: linear, slope: 1.0, offset: 0.0},
               drift_b: {kind: linear, slope: 1.0, offset: 0.5},
               M_m: 0.0, M_z: 1.0, delta: 0.5, init_std: 1.0, dimension: 1}
    mnist: {images: path, labels: path, class_a: 4, class_b: 6,
            max_k: 10000, out_csv: dataset.csv}
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import harness
from .datasets import dataset_to_csv, filter_binary_classes, load_mnist_pair
from .errors import ConfigError, KmflError
from .gaussian import GaussianMoments
from .harness import (
    ExperimentConfig,
    InitSpec,
    build_functional,
    dynamics_from_mapping,
    fit_inverse_n,
    run_momentum_comparison,
    run_oracle_validation,
    run_poc_sweep,
    run_synchronous_coupling,
    standard_observers,
    write_manifest,
    write_sweep_outputs,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {p} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {p} must contain a mapping at the top level")
    # a manifest echoes its config under the "config" key; accept it directly
    if "config" in raw and "command" in raw:
        raw = raw["config"]
    return raw


def _common(cfg: dict, args) -> tuple[int, Path]:
    seed = int(args.seed) if args.seed is not None else int(cfg.get("seed", 0))
    out_dir = args.out if args.out is not None else cfg.get("out_dir")
    if out_dir is None:
        raise ConfigError("no output directory: set out_dir in the config or pass --out")
    return seed, Path(out_dir)


def _experiment_config(cfg: dict, seed: int, n_list, repetitions: int, section: dict) -> ExperimentConfig:
    if "functional" not in cfg:
        raise ConfigError("config is missing the functional section")
    if "dynamics" not in cfg:
        raise ConfigError("config is missing the dynamics section")
    init_cfg = cfg.get("init", {})
    return ExperimentConfig(
        functional_spec=cfg["functional"],
        dynamics=dynamics_from_mapping(cfg["dynamics"], seed),
        init=InitSpec(
            m0x_std=float(init_cfg.get("m0x_std", 0.1)),
            m0v_std=float(init_cfg.get("m0v_std", 0.5)),
        ),
        n_list=tuple(n_list),
        repetitions=repetitions,
        record_every=int(section.get("record_every", cfg.get("record_every", 1))),
        tail_window=section.get("tail_window"),
        workers=int(section.get("workers", 1)),
    )


def cmd_simulate(cfg: dict, args) -> int:
    seed, out = _common(cfg, args)
    section = cfg.get("simulate", {})
    n = int(section.get("N", cfg.get("N", 64)))
    config = _experiment_config(cfg, seed, [n], 1, section)
    functional = build_functional(config.functional_spec)
    observers = standard_observers(functional, section.get("observers", ["loss", "kinetic"]))
    init_seed = harness.derive_seed(seed, "simulate", 0, 0, 0)
    state = harness.sample_initial_state(n, functional.dim, config.init, init_seed)
    params = config.dynamics
    from .dynamics import simulate as run_sim

    series, _ = run_sim(state, params, functional, observers, config.record_every)
    series.to_csv(out / "series.csv")
    write_manifest(out, "simulate", seed, cfg, ["series.csv"])
    return EXIT_OK


def cmd_poc_sweep(cfg: dict, args) -> int:
    seed, out = _common(cfg, args)
    section = cfg.get("sweep", {})
    if "N" not in section:
        raise ConfigError("sweep section must list N values")
    config = _experiment_config(cfg, seed, section["N"], int(section.get("R", 1)), section)
    result = run_poc_sweep(config)
    fit = fit_inverse_n(result.tails)
    outputs = write_sweep_outputs(result, fit, out)
    write_manifest(out, "poc-sweep", seed, cfg, outputs)
    return EXIT_OK


def cmd_compare_momentum(cfg: dict, args) -> int:
    seed, out = _common(cfg, args)
    section = cfg.get("compare", {})
    n = int(section.get("N", 256))
    config = _experiment_config(cfg, seed, [n], 1, section)
    kinetic, overdamped = run_momentum_comparison(config)
    kinetic.to_csv(out / "kinetic.csv")
    overdamped.to_csv(out / "overdamped.csv")
    write_manifest(out, "compare-momentum", seed, cfg, ["kinetic.csv", "overdamped.csv"])
    return EXIT_OK


def cmd_validate_oracle(cfg: dict, args) -> int:
    seed, out = _common(cfg, args)
    section = cfg.get("oracle", {})
    if "dynamics" not in cfg:
        raise ConfigError("config is missing the dynamics section")
    params = dynamics_from_mapping(cfg["dynamics"], seed)
    kappa = float(section.get("kappa", 1.0))
    eps = float(section.get("eps", 0.0))
    dim = int(section.get("dimension", 1))
    init_cfg = cfg.get("init", {})
    m0x = float(init_cfg.get("m0x_std", 0.1))
    m0v = float(init_cfg.get("m0v_std", 1.0))
    mean = np.concatenate(
        [
            np.full(dim, float(section.get("init_mean_x", 0.0))),
            np.full(dim, float(section.get("init_mean_v", 0.0))),
        ]
    )
    cov = np.diag(np.concatenate([np.full(dim, m0x**2), np.full(dim, m0v**2)]))
    init = GaussianMoments(mean, cov)
    report = run_oracle_validation(
        kappa=kappa,
        eps=eps,
        params=params,
        n_list=[int(n) for n in section.get("N", [1024])],
        horizon=params.horizon,
        init=init,
        n_checkpoints=int(section.get("checkpoints", 10)),
        subsample=section.get("subsample"),
        mean_tol_scale=float(section.get("mean_tol", 5.0)),
        cov_tol_scale=float(section.get("cov_tol", 10.0)),
        ode_dt=section.get("ode_dt"),
    )
    lines = ["N,time,max_mean_dev,max_cov_dev,mean_tol,cov_tol,passed"]
    for n, cps in sorted(report.checkpoints.items()):
        for cp in cps:
            lines.append(
                f"{n},{cp.time!r},{float(cp.mean_dev.max())!r},{float(cp.cov_dev.max())!r},"
                f"{cp.mean_tol!r},{cp.cov_tol!r},{int(cp.passed)}"
            )
    (out / "oracle_checkpoints.csv").parent.mkdir(parents=True, exist_ok=True)
    (out / "oracle_checkpoints.csv").write_text("\n".join(lines) + "\n")
    w2_lines = ["N,w2_squared"] + [f"{n},{report.w2[n]!r}" for n in sorted(report.w2)]
    (out / "oracle_w2.csv").write_text("\n".join(w2_lines) + "\n")
    write_manifest(out, "validate-oracle", seed, cfg, ["oracle_checkpoints.csv", "oracle_w2.csv"])
    if not report.passed:
        print("oracle validation FAILED tolerance", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_coupling_check(cfg: dict, args) -> int:
    seed, out = _common(cfg, args)
    section = cfg.get("coupling", {})
    report = run_synchronous_coupling(
        drift_a=section.get("drift_a", {"kind": "linear"}),
        drift_b=section.get("drift_b", {"kind": "linear"}),
        m_m=float(section.get("M_m", 0.0)),
        m_z=float(section.get("M_z", 1.0)),
        delta=float(section.get("delta", 0.0)),
        n=int(section.get("N", 1000)),
        horizon=float(section.get("horizon", 1.0)),
        dt=float(section.get("dt", 1e-3)),
        sigma=float(section.get("sigma", 1.0)),
        seed=seed,
        record_every=int(section.get("record_every", 1)),
        init_std=float(section.get("init_std", 1.0)),
        dim=int(section.get("dimension", 1)),
    )
    report.to_series().to_csv(out / "coupling.csv")
    write_manifest(out, "coupling-check", seed, cfg, ["coupling.csv"])
    if not report.passed:
        print("coupling cost exceeded the bound", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_parse_mnist(cfg: dict, args) -> int:
    seed, out = _common(cfg, args)
    section = cfg.get("mnist", {})
    for key in ("images", "labels"):
        if key not in section:
            raise ConfigError(f"mnist section is missing {key!r}")
    for key in ("images", "labels"):
        if not Path(section[key]).exists():
            raise ConfigError(f"mnist file not found: {section[key]}")
    images, labels = load_mnist_pair(section["images"], section["labels"])
    ds = filter_binary_classes(
        images,
        labels,
        class_a=int(section.get("class_a", 4)),
        class_b=int(section.get("class_b", 6)),
        max_k=section.get("max_k"),
        seed=seed,
    )
    name = section.get("out_csv", "dataset.csv")
    dataset_to_csv(ds, out / name)
    write_manifest(out, "parse-mnist", seed, cfg, [name])
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "poc-sweep": cmd_poc_sweep,
    "compare-momentum": cmd_compare_momentum,
    "validate-oracle": cmd_validate_oracle,
    "coupling-check": cmd_coupling_check,
    "parse-mnist": cmd_parse_mnist,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kmfl",
        description="Kinetic mean-field Langevin experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the YAML config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", default=None, type=int, help="root seed (overrides config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KmflError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
