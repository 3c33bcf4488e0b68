"""Experiment orchestration: configs, derived seeds, runners, persistence.

Every experiment is driven by one YAML (or JSON) config file; the schema
uses the hyperparameter names of the training table (``N``, ``dt``, ``T``,
``m0x_std``, ``m0v_std``, ``L``, ``lambda``, ``alpha``, ``gamma``,
``sigma``).  ``m0x_std``/``m0v_std`` are standard deviations; a table entry
written as a normal law N(0, v) corresponds to std sqrt(v).

Per-cell seeds are derived from the root seed through a SeedSequence keyed
by (experiment id, N index, run index, stream), so no two cells or streams
share noise and reruns reproduce every CSV bitwise.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .datasets import Dataset, filter_binary_classes, load_mnist_pair, synthetic_dataset
from .dynamics import (
    DynamicsParams,
    NoiseStream,
    ParticleState,
    simulate,
    simulate_overdamped,
    step_underdamped,
)
from .errors import ConfigError, ParameterError
from .functionals import CurieWeissQuadratic, MeanFieldFunctional, TwoLayerNetFunctional
from .gaussian import GaussianMoments, propagate_trajectory, sample as gaussian_sample
from .measures import EmpiricalMeasure, w2_exact
from .series import ObservableSeries

EXPERIMENT_IDS = {
    "simulate": 1,
    "poc_sweep": 2,
    "compare_momentum": 3,
    "oracle_validation": 4,
    "coupling": 5,
}

# streams within a cell
_INIT_STREAM = 0
_NOISE_STREAM = 1
_AUX_STREAM = 2


def derive_seed(root: int, experiment: str, n_index: int, run_index: int, stream: int) -> int:
    """64-bit seed for one (experiment, N, run, stream) cell; injective by
    construction of SeedSequence entropy pools."""
    exp_id = EXPERIMENT_IDS[experiment]
    ss = np.random.SeedSequence([int(root), exp_id, int(n_index), int(run_index), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class InitSpec:
    m0x_std: float = 0.1
    m0v_std: float = 0.5

    def __post_init__(self):
        if self.m0x_std < 0 or self.m0v_std < 0:
            raise ConfigError("init standard deviations must be nonnegative")


@dataclass(frozen=True)
class ExperimentConfig:
    functional_spec: Mapping
    dynamics: DynamicsParams
    init: InitSpec
    n_list: tuple[int, ...]
    repetitions: int
    record_every: int = 1
    tail_window: int | None = None  # records; None -> last 10% of records
    out_dir: Path | None = None
    workers: int = 1

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_list)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
            raise ConfigError(f"N list must be strictly increasing and positive, got {list(ns)}")
        object.__setattr__(self, "n_list", ns)
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be >= 1, got {self.record_every}")
        if self.tail_window is not None and self.tail_window < 1:
            raise ConfigError(f"tail_window must be >= 1, got {self.tail_window}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")


def build_dataset(spec: Mapping) -> Dataset:
    kind = spec.get("kind")
    if kind == "synthetic":
        return synthetic_dataset(
            k=int(spec.get("K", 500)),
            d_in=int(spec.get("d_in", 16)),
            rule=spec.get("rule", "linear"),
            seed=int(spec.get("seed", 0)),
        )
    if kind == "mnist":
        for key in ("images", "labels"):
            if key not in spec:
                raise ConfigError(f"mnist dataset spec is missing {key!r}")
        images, labels = load_mnist_pair(spec["images"], spec["labels"])
        return filter_binary_classes(
            images,
            labels,
            class_a=int(spec.get("class_a", 4)),
            class_b=int(spec.get("class_b", 6)),
            max_k=spec.get("max_k"),
            seed=int(spec.get("seed", 0)),
        )
    raise ConfigError(f"unknown dataset kind {kind!r} (expected synthetic or mnist)")


def build_functional(spec: Mapping) -> MeanFieldFunctional:
    kind = spec.get("kind")
    if kind == "curie_weiss":
        return CurieWeissQuadratic(
            kappa=float(spec.get("kappa", 1.0)),
            eps=float(spec.get("eps", 0.0)),
            dim=int(spec.get("dimension", 1)),
        )
    if kind == "two_layer_net":
        ds = build_dataset(spec.get("dataset", {}))
        return TwoLayerNetFunctional(ds.features, ds.labels, threshold=float(spec.get("L", 500.0)))
    raise ConfigError(f"unknown functional kind {kind!r} (expected curie_weiss or two_layer_net)")


def dynamics_from_mapping(section: Mapping, seed: int) -> DynamicsParams:
    try:
        return DynamicsParams(
            alpha=float(section.get("alpha", 1.0)),
            gamma=float(section.get("gamma", 1.0)),
            sigma=float(section.get("sigma", math.sqrt(2.0))),
            lam=float(section.get("lambda", 0.0)),
            dt=float(section["dt"]),
            horizon=float(section["T"]),
            seed=seed,
        )
    except KeyError as exc:
        raise ConfigError(f"dynamics section is missing {exc.args[0]!r}") from None
    except ParameterError as exc:
        raise ConfigError(f"invalid dynamics parameters: {exc}") from None


# ---------------------------------------------------------------------------
# observers

def observable_loss(functional) :
    return lambda state: functional.value(state.positions)


def observable_kinetic(state: ParticleState) -> float:
    return 0.5 * float(np.mean(np.einsum("ij,ij->i", state.velocities, state.velocities)))


def observable_x_msq(state: ParticleState) -> float:
    return float(np.mean(np.einsum("ij,ij->i", state.positions, state.positions)))


def observable_v_msq(state: ParticleState) -> float:
    return float(np.mean(np.einsum("ij,ij->i", state.velocities, state.velocities)))


def standard_observers(functional, names: Sequence[str]):
    registry = {
        "loss": observable_loss(functional),
        "kinetic": observable_kinetic,
        "x_msq": observable_x_msq,
        "v_msq": observable_v_msq,
    }
    try:
        return {name: registry[name] for name in names}
    except KeyError as exc:
        raise ConfigError(
            f"unknown observer {exc.args[0]!r}; available: {sorted(registry)}"
        ) from None


def sample_initial_state(n: int, dim: int, init: InitSpec, seed: int) -> ParticleState:
    rng = np.random.default_rng(seed)
    x = init.m0x_std * rng.standard_normal((n, dim))
    v = init.m0v_std * rng.standard_normal((n, dim))
    return ParticleState(x, v)


# ---------------------------------------------------------------------------
# N-sweep and the 1/N fit


@dataclass(frozen=True)
class FitResult:
    c_const: float
    c_slope: float
    residual: float

    def __post_init__(self):
        if self.residual < 0:
            raise ParameterError("residual must be nonnegative")


def fit_inverse_n(tail_averages: Mapping[int, Sequence[float]]) -> FitResult:
    """Least squares of per-N mean tail values against 1/N: y = C' + C/N."""
    if not tail_averages:
        raise ParameterError("tail_averages is empty")
    ns = np.array(sorted(tail_averages), dtype=np.float64)
    ys = np.array([float(np.mean(tail_averages[int(n)])) for n in ns])
    design = np.column_stack([np.ones_like(ns), 1.0 / ns])
    coef, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    resid = ys - design @ coef
    return FitResult(c_const=float(coef[0]), c_slope=float(coef[1]), residual=float(resid @ resid))


@dataclass(frozen=True)
class PocSweepResult:
    cells: dict
    tails: dict
    record_times: np.ndarray
    tail_window: int

    def tail_stats(self):
        """(N, mean, std) rows across runs, ordered by N."""
        rows = []
        for n in sorted(self.tails):
            vals = np.asarray(self.tails[n])
            rows.append((n, float(vals.mean()), float(vals.std(ddof=0))))
        return rows


def _tail_window(config: ExperimentConfig, n_records: int) -> int:
    if config.tail_window is not None:
        return min(config.tail_window, n_records)
    return max(1, n_records // 10)


def run_poc_sweep(
    config: ExperimentConfig,
    functional: MeanFieldFunctional | None = None,
) -> PocSweepResult:
    """Simulate every (N, run) cell, recording loss and kinetic observables.

    The tail average of loss + kinetic over the final window is collected
    per run; series are persisted by :func:`write_sweep_outputs`.
    """
    functional = functional if functional is not None else build_functional(config.functional_spec)
    root = config.dynamics.seed

    def run_cell(args):
        n_index, n, run = args
        init_seed = derive_seed(root, "poc_sweep", n_index, run, _INIT_STREAM)
        noise_seed = derive_seed(root, "poc_sweep", n_index, run, _NOISE_STREAM)
        state = sample_initial_state(n, functional.dim, config.init, init_seed)
        params = DynamicsParams(
            alpha=config.dynamics.alpha,
            gamma=config.dynamics.gamma,
            sigma=config.dynamics.sigma,
            lam=config.dynamics.lam,
            dt=config.dynamics.dt,
            horizon=config.dynamics.horizon,
            seed=noise_seed,
        )
        observers = standard_observers(functional, ["loss", "kinetic"])
        try:
            series, _ = simulate(state, params, functional, observers, config.record_every)
        except Exception as exc:
            raise RuntimeError(f"cell (N={n}, run={run}) failed: {exc}") from exc
        return (n, run), series

    jobs = [
        (n_index, n, run)
        for n_index, n in enumerate(config.n_list)
        for run in range(config.repetitions)
    ]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run_cell, jobs))
    else:
        results = [run_cell(job) for job in jobs]

    cells = dict(results)
    any_series = next(iter(cells.values()))
    window = _tail_window(config, len(any_series))
    tails: dict[int, list[float]] = {n: [] for n in config.n_list}
    for (n, _run), series in sorted(cells.items()):
        total = series.column("loss") + series.column("kinetic")
        tails[n].append(float(total[-window:].mean()))
    return PocSweepResult(
        cells=cells, tails=tails, record_times=any_series.times, tail_window=window
    )


def write_sweep_outputs(result: PocSweepResult, fit: FitResult, out_dir: str | Path) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for (n, run), series in sorted(result.cells.items()):
        name = f"series_N{n}_run{run}.csv"
        series.to_csv(out / name)
        written.append(name)
    with open(out / "tail_fit.csv", "w", newline="\n") as fh:
        fh.write("N,mean,std,c_const,c_slope\n")
        for n, mean, std in result.tail_stats():
            fh.write(f"{n},{mean!r},{std!r},{fit.c_const!r},{fit.c_slope!r}\n")
    written.append("tail_fit.csv")
    return written


# ---------------------------------------------------------------------------
# momentum vs no momentum


def run_momentum_comparison(
    config: ExperimentConfig,
    functional: MeanFieldFunctional | None = None,
) -> tuple[ObservableSeries, ObservableSeries]:
    """Kinetic and first-order runs from identical initial positions.

    The kinetic run additionally draws velocities; noise seeds of the two
    runs are independent.  Both series record the loss observable.
    """
    functional = functional if functional is not None else build_functional(config.functional_spec)
    root = config.dynamics.seed
    n = config.n_list[0]
    init_seed = derive_seed(root, "compare_momentum", 0, 0, _INIT_STREAM)
    state = sample_initial_state(n, functional.dim, config.init, init_seed)

    kinetic_params = DynamicsParams(
        alpha=config.dynamics.alpha,
        gamma=config.dynamics.gamma,
        sigma=config.dynamics.sigma,
        lam=config.dynamics.lam,
        dt=config.dynamics.dt,
        horizon=config.dynamics.horizon,
        seed=derive_seed(root, "compare_momentum", 0, 0, _NOISE_STREAM),
    )
    overdamped_params = DynamicsParams(
        alpha=config.dynamics.alpha,
        gamma=config.dynamics.gamma,
        sigma=config.dynamics.sigma,
        lam=config.dynamics.lam,
        dt=config.dynamics.dt,
        horizon=config.dynamics.horizon,
        seed=derive_seed(root, "compare_momentum", 0, 1, _NOISE_STREAM),
    )
    observers = standard_observers(functional, ["loss"])
    kinetic_series, _ = simulate(state, kinetic_params, functional, observers, config.record_every)
    overdamped_series, _ = simulate_overdamped(
        state.positions, overdamped_params, functional, observers, config.record_every
    )
    return kinetic_series, overdamped_series


# ---------------------------------------------------------------------------
# particle system vs Gaussian oracle


@dataclass(frozen=True)
class OracleCheckpoint:
    time: float
    mean_dev: np.ndarray       # |empirical - oracle| per phase coordinate
    cov_dev: np.ndarray        # entrywise absolute deviation
    mean_tol: float
    cov_tol: float

    @property
    def passed(self) -> bool:
        return bool((self.mean_dev <= self.mean_tol).all() and (self.cov_dev <= self.cov_tol).all())


@dataclass(frozen=True)
class OracleValidationReport:
    kappa: float
    eps: float
    checkpoints: dict = field(default_factory=dict)   # N -> list[OracleCheckpoint]
    w2: dict = field(default_factory=dict)            # N -> squared distance at horizon

    @property
    def passed(self) -> bool:
        return all(cp.passed for cps in self.checkpoints.values() for cp in cps)

    def max_mean_dev(self) -> float:
        return max(float(cp.mean_dev.max()) for cps in self.checkpoints.values() for cp in cps)

    def max_cov_dev(self) -> float:
        return max(float(cp.cov_dev.max()) for cps in self.checkpoints.values() for cp in cps)


def run_oracle_validation(
    kappa: float,
    eps: float,
    params: DynamicsParams,
    n_list: Sequence[int],
    horizon: float,
    init: GaussianMoments,
    n_checkpoints: int = 10,
    subsample: int | None = None,
    mean_tol_scale: float = 5.0,
    cov_tol_scale: float = 10.0,
    ode_dt: float | None = None,
) -> OracleValidationReport:
    """Quadratic-functional particle runs against the closed-form moments.

    Tolerances are CLT-style: ``mean_tol_scale/sqrt(N)`` per phase-space
    coordinate for the mean and ``cov_tol_scale/sqrt(N)`` per covariance
    entry.  The squared Wasserstein distance is measured at the horizon
    between a subsample of the cloud (capped by the exact-assignment guard)
    and an equal-size i.i.d. sample of the oracle Gaussian.
    """
    # the moment ODEs cover the unit-coefficient dynamics only; a general
    # (alpha, gamma, sigma) run must be mapped onto it via normalize_params
    if (
        abs(params.alpha - 1.0) > 1e-12
        or abs(params.gamma - 1.0) > 1e-12
        or abs(params.sigma - math.sqrt(2.0)) > 1e-12
        or params.lam != 0.0
    ):
        raise ConfigError(
            "oracle validation requires the normalized dynamics "
            "alpha=1, gamma=1, sigma=sqrt(2), lambda=0; got "
            f"alpha={params.alpha}, gamma={params.gamma}, "
            f"sigma={params.sigma}, lambda={params.lam}"
        )
    dim = init.dim
    functional = CurieWeissQuadratic(kappa=kappa, eps=eps, dim=dim)
    ode_dt = ode_dt if ode_dt is not None else params.dt / 10.0
    steps_total = max(1, round(horizon / params.dt))
    checkpoint_steps = sorted(
        {max(1, round(steps_total * (j + 1) / n_checkpoints)) for j in range(n_checkpoints)}
    )
    # oracle moments at the exact discrete checkpoint times
    times = [s * params.dt for s in checkpoint_steps]
    oracle = propagate_trajectory(init, kappa, eps, times, ode_dt)

    report_checkpoints: dict[int, list[OracleCheckpoint]] = {}
    report_w2: dict[int, float] = {}
    for n_index, n in enumerate(n_list):
        init_seed = derive_seed(params.seed, "oracle_validation", n_index, 0, _INIT_STREAM)
        noise_seed = derive_seed(params.seed, "oracle_validation", n_index, 0, _NOISE_STREAM)
        cloud_seed = derive_seed(params.seed, "oracle_validation", n_index, 0, _AUX_STREAM)
        z0 = gaussian_sample(init, n, init_seed)
        state = ParticleState(z0[:, :dim], z0[:, dim:])
        run_params = DynamicsParams(
            alpha=params.alpha, gamma=params.gamma, sigma=params.sigma, lam=params.lam,
            dt=params.dt, horizon=horizon, seed=noise_seed,
        )
        noise = NoiseStream(run_params.seed)
        mean_tol = mean_tol_scale / math.sqrt(n)
        cov_tol = cov_tol_scale / math.sqrt(n)

        cps: list[OracleCheckpoint] = []
        check_iter = iter(zip(checkpoint_steps, oracle))
        next_check = next(check_iter, None)
        for k in range(steps_total):
            state = step_underdamped(state, run_params, functional, noise, step=k)
            if next_check is not None and (k + 1) == next_check[0]:
                step_idx, moments = next_check
                cloud = np.hstack([state.positions, state.velocities])
                emp_mean = cloud.mean(axis=0)
                emp_cov = np.cov(cloud.T, bias=True).reshape(2 * dim, 2 * dim)
                cps.append(
                    OracleCheckpoint(
                        time=(k + 1) * params.dt,
                        mean_dev=np.abs(emp_mean - moments.mean),
                        cov_dev=np.abs(emp_cov - moments.cov),
                        mean_tol=mean_tol,
                        cov_tol=cov_tol,
                    )
                )
                next_check = next(check_iter, None)

        m = subsample if subsample is not None else min(n, 512)
        m = min(m, n, 512)
        rng = np.random.default_rng(cloud_seed)
        idx = rng.choice(n, size=m, replace=False)
        cloud = np.hstack([state.positions, state.velocities])[idx]
        ref = gaussian_sample(oracle[-1], m, cloud_seed + 1)
        report_w2[n] = w2_exact(EmpiricalMeasure(cloud), EmpiricalMeasure(ref))
        report_checkpoints[n] = cps
    return OracleValidationReport(
        kappa=kappa, eps=eps, checkpoints=report_checkpoints, w2=report_w2
    )


# ---------------------------------------------------------------------------
# synchronous coupling


_DRIFT_KINDS = ("linear", "toward_mean")


def _build_drift(spec: Mapping):
    kind = spec.get("kind", "linear")
    if kind == "linear":
        slope = float(spec.get("slope", 1.0))
        offset = float(spec.get("offset", 0.0))
        return lambda points: offset - slope * points
    if kind == "toward_mean":
        slope = float(spec.get("slope", 1.0))
        couple = float(spec.get("couple", 0.0))
        return lambda points: -slope * points + couple * points.mean(axis=0)
    raise ConfigError(f"unknown drift kind {kind!r}; expected one of {_DRIFT_KINDS}")


@dataclass(frozen=True)
class CouplingReport:
    times: np.ndarray
    cost: np.ndarray     # E|Z - Z'|^2 under the synchronous coupling
    bound: np.ndarray    # Gronwall right-hand side

    @property
    def passed(self) -> bool:
        return bool((self.cost <= self.bound).all())

    def to_series(self) -> ObservableSeries:
        return ObservableSeries(self.times, {"cost": self.cost, "bound": self.bound})


def run_synchronous_coupling(
    drift_a: Mapping,
    drift_b: Mapping,
    m_m: float,
    m_z: float,
    delta: float,
    n: int,
    horizon: float,
    dt: float,
    sigma: float,
    seed: int,
    record_every: int = 1,
    init_a: np.ndarray | None = None,
    init_b: np.ndarray | None = None,
    init_std: float = 1.0,
    dim: int = 1,
) -> CouplingReport:
    """Two diffusions driven by the same Brownian increments.

    Records the coupling cost E|Z - Z'|^2 (an upper bound for the squared
    Wasserstein distance between the laws, which is what it is compared to)
    against exp((2*m_m + 2*m_z) t + 1) * W2^2(initial laws) plus the
    delta-forcing integral term.  In one dimension the initial clouds are
    coupled by sorting, which realizes the optimal initial coupling.
    """
    beta_a = _build_drift(drift_a)
    beta_b = _build_drift(drift_b)
    rng = np.random.default_rng(derive_seed(seed, "coupling", 0, 0, _INIT_STREAM))
    za = np.asarray(init_a, dtype=np.float64) if init_a is not None else init_std * rng.standard_normal((n, dim))
    zb = np.asarray(init_b, dtype=np.float64) if init_b is not None else za.copy()
    if za.ndim == 1:
        za = za[:, None]
    if zb.ndim == 1:
        zb = zb[:, None]
    if za.shape != zb.shape:
        raise ParameterError(f"initial clouds differ in shape: {za.shape} vs {zb.shape}")
    if za.shape[1] == 1:
        za = np.sort(za, axis=0)
        zb = np.sort(zb, axis=0)

    w2_init = w2_exact(EmpiricalMeasure(za), EmpiricalMeasure(zb))
    rate = 2.0 * (m_m + m_z)

    def bound_at(t: float) -> float:
        if t == 0.0:
            forcing = 0.0
        elif rate > 0.0:
            forcing = math.e**2 * t * delta**2 * (math.expm1(rate * t)) / rate
        else:
            forcing = math.e**2 * t * delta**2 * t
        return math.exp(rate * t + 1.0) * w2_init + forcing

    noise = NoiseStream(derive_seed(seed, "coupling", 0, 0, _NOISE_STREAM))
    n_steps = max(1, math.ceil(horizon / dt - 1e-9))
    sq = math.sqrt(dt)

    def cost(a, b) -> float:
        gap = a - b
        return float(np.mean(np.einsum("ij,ij->i", gap, gap)))

    times = [0.0]
    costs = [cost(za, zb)]
    bounds = [bound_at(0.0)]
    for k in range(n_steps):
        xi = noise.normals(k, za.shape[0], za.shape[1])
        za = za + beta_a(za) * dt + sigma * sq * xi
        zb = zb + beta_b(zb) * dt + sigma * sq * xi
        if (k + 1) % record_every == 0:
            t = (k + 1) * dt
            times.append(t)
            costs.append(cost(za, zb))
            bounds.append(bound_at(t))
    return CouplingReport(np.array(times), np.array(costs), np.array(bounds))


# ---------------------------------------------------------------------------
# manifest


def write_manifest(out_dir: str | Path, command: str, seed: int, config: Mapping, outputs: Sequence[str]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "seed": int(seed),
        "version": __version__,
        "config": config,
        "outputs": list(outputs),
    }
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)
