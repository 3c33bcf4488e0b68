"""Kinetic particle system: state, stochastic integrators, seeded noise.

The N-particle system evolves positions X and velocities V in R^d under

    dX^i = alpha * V^i dt
    dV^i = -gamma * V^i dt - drift(mu_X, X^i) dt - lambda * X^i dt + sigma dW^i

where ``drift`` is the intrinsic derivative of a mean-field energy evaluated
at the empirical measure of the positions.  The default discretization
updates the velocity first and moves the position with the *new* velocity
(semi-implicit Euler); a plain Euler-Maruyama variant is available for
comparison via ``scheme="euler"``.

Noise is counter-based: the draw for (seed, step, particle, coordinate) is a
pure function of that tuple, so chunked or concurrent force evaluation can
never perturb reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

from .errors import (
    DimensionMismatchError,
    NonFiniteError,
    NonPositiveParameterError,
    ParameterError,
)
from .series import ObservableSeries

_SCHEMES = ("semi_implicit", "euler")


def _as_matrix(arr, name: str) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatchError(f"{name} must be a non-empty N x d array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ParticleState:
    """Positions and velocities of N particles plus the simulation clock."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        x = _as_matrix(self.positions, "positions")
        v = _as_matrix(self.velocities, "velocities")
        if x.shape != v.shape:
            raise DimensionMismatchError(
                f"positions {x.shape} and velocities {v.shape} must have the same shape"
            )
        if not (np.isfinite(x).all() and np.isfinite(v).all()):
            raise NonFiniteError("particle state contains non-finite entries")
        if not (self.time >= 0.0 and math.isfinite(self.time)):
            raise ParameterError(f"time must be finite and nonnegative, got {self.time}")
        x = x.copy() if not x.flags.owndata else x
        v = v.copy() if not v.flags.owndata else v
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class DynamicsParams:
    """Coefficients of the dynamics and of its discretization.

    ``gamma * dt < 1`` is enforced at construction so the explicit velocity
    update can never flip sign.  ``gamma = 0`` (no friction) is accepted; it
    is the conservative limit used by the energy-consistency checks.
    """

    alpha: float = 1.0
    gamma: float = 1.0
    sigma: float = math.sqrt(2.0)
    lam: float = 0.0
    dt: float = 0.01
    horizon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma >= 0:
            raise ParameterError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.sigma >= 0:
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be nonnegative, got {self.lam}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if not self.horizon > 0:
            raise ParameterError(f"horizon must be positive, got {self.horizon}")
        if self.dt > self.horizon:
            raise ParameterError(f"dt={self.dt} exceeds horizon={self.horizon}")
        if not self.gamma * self.dt < 1.0:
            raise ParameterError(
                f"stability guard violated: gamma*dt = {self.gamma * self.dt} >= 1"
            )
        if not (0 <= int(self.seed) < 2**64):
            raise ParameterError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    @property
    def n_steps(self) -> int:
        # small slack so horizon/dt that is an exact multiple up to fp noise
        # does not gain a step
        return max(1, math.ceil(self.horizon / self.dt - 1e-9))


class NoiseStream:
    """Counter-based standard-normal source.

    Draw ``(step, particle, coordinate)`` -> N(0,1) is implemented as the
    inverse normal CDF of a Philox word: the word index within a step block
    is ``particle * width + coordinate`` and each step owns a disjoint
    128-bit counter range, so any chunking of the block yields identical
    values.
    """

    def __init__(self, seed: int):
        if not (0 <= int(seed) < 2**64):
            raise ParameterError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self._key = np.zeros(2, dtype=np.uint64)
        self._key[0] = np.uint64(self.seed)

    def _raw(self, step: int, n_words: int, offset: int = 0) -> np.ndarray:
        if step < 0:
            raise ParameterError(f"step must be nonnegative, got {step}")
        counter = np.zeros(4, dtype=np.uint64)
        counter[0] = np.uint64(offset // 4)
        counter[2] = np.uint64(step)
        bg = Philox(key=self._key, counter=counter)
        lane = offset % 4
        words = bg.random_raw(lane + n_words)
        return words[lane:]

    def normals(self, step: int, n: int, width: int) -> np.ndarray:
        """Full (n, width) block of draws for one step."""
        words = self._raw(step, n * width)
        u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return ndtri(u).reshape(n, width)

    def normal_at(self, step: int, particle: int, coord: int, width: int) -> float:
        """Single draw; equals ``normals(step, n, width)[particle, coord]``."""
        j = particle * width + coord
        word = self._raw(step, 1, offset=j)[0]
        u = (float(word >> np.uint64(11)) + 0.5) * 2.0**-53
        return float(ndtri(u))


class NormalizedScales(tuple):
    """Result of :func:`normalize_params`; a named 4-tuple of scale factors."""

    __slots__ = ()

    def __new__(cls, space, velocity, time, functional):
        return super().__new__(cls, (space, velocity, time, functional))

    space = property(lambda self: self[0])
    velocity = property(lambda self: self[1])
    time = property(lambda self: self[2])
    functional = property(lambda self: self[3])


def normalize_params(alpha: float, gamma: float, sigma: float) -> NormalizedScales:
    """Change of variables mapping (alpha, gamma, sigma)-dynamics to the
    unit-coefficient dynamics (alpha=1, gamma=1, sigma=sqrt(2)).

    Returns scales ``(space, velocity, time, functional)`` with

    * ``x' = space * x``,  ``v' = velocity * v``;
    * one unit of normalized time equals ``time = 1/gamma`` original time
      units, i.e. ``t' = gamma * t`` and a step ``dt`` maps to
      ``dt' = gamma * dt``;
    * the normalized drift field is ``functional`` times the original one at
      corresponding points: ``drift'(m', space*x) = functional * drift(m, x)``
      where ``m'`` is the pushforward of ``m`` under ``x -> space*x``.

    Under these scales a trajectory of the original dynamics driven by the
    Brownian path ``W`` maps onto a trajectory of the normalized dynamics
    driven by ``W'(t') = sqrt(gamma) * W(t)``; in the discretized schemes the
    per-step standard-normal draws are literally shared.
    """
    for name, val in (("alpha", alpha), ("gamma", gamma), ("sigma", sigma)):
        if not val > 0:
            raise NonPositiveParameterError(f"{name} must be strictly positive, got {val}")
    space = math.sqrt(2.0 * gamma**3) / (alpha * sigma)
    velocity = math.sqrt(2.0 * gamma) / sigma
    time = 1.0 / gamma
    functional = math.sqrt(2.0 / (gamma * sigma**2))
    return NormalizedScales(space, velocity, time, functional)


def _check_functional_dim(functional, d: int) -> None:
    fdim = getattr(functional, "dim", None)
    if fdim is not None and fdim != d:
        raise DimensionMismatchError(
            f"functional dimension {fdim} does not match particle dimension {d}"
        )


def _step_index(state_time: float, dt: float, step: int | None) -> int:
    if step is not None:
        return step
    return int(round(state_time / dt))


def step_underdamped(
    state: ParticleState,
    params: DynamicsParams,
    functional,
    noise: NoiseStream,
    step: int | None = None,
    scheme: str = "semi_implicit",
) -> ParticleState:
    """One discrete step of the kinetic dynamics.

    Velocity update: ``v <- (1 - gamma*dt) v - drift*dt - lambda*x*dt
    + sigma*sqrt(dt)*xi``; the position then moves by ``alpha * v_new * dt``
    (or ``alpha * v_old * dt`` under ``scheme="euler"``).  The drift is
    evaluated once against the pre-step empirical measure for all particles.

    ``step`` indexes the noise block; when omitted it is inferred from the
    state clock, which is exact as long as the trajectory started at t=0 and
    used this ``dt`` throughout.
    """
    if scheme not in _SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}; expected one of {_SCHEMES}")
    _check_functional_dim(functional, state.dim)
    k = _step_index(state.time, params.dt, step)
    x, v, dt = state.positions, state.velocities, params.dt

    g = functional.drift_all(x)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != x.shape:
        raise DimensionMismatchError(f"drift shape {g.shape} does not match state {x.shape}")

    v_new = (1.0 - params.gamma * dt) * v - (g + params.lam * x) * dt
    if params.sigma > 0.0:
        v_new = v_new + params.sigma * math.sqrt(dt) * noise.normals(k, state.n, state.dim)
    x_new = x + params.alpha * dt * (v_new if scheme == "semi_implicit" else v)

    if not (np.isfinite(x_new).all() and np.isfinite(v_new).all()):
        raise NonFiniteError(f"non-finite state after step {k} (step size too large?)", step=k)
    return ParticleState(x_new, v_new, state.time + dt)


def step_overdamped(
    positions: np.ndarray,
    params: DynamicsParams,
    functional,
    noise: NoiseStream,
    step: int,
) -> np.ndarray:
    """One discrete step of the first-order comparison dynamics.

    ``x <- x - (drift + lambda*x)*dt + sigma*sqrt(dt)*xi`` with the same
    sigma and lambda as the kinetic run.
    """
    x = _as_matrix(positions, "positions")
    _check_functional_dim(functional, x.shape[1])
    dt = params.dt
    g = np.asarray(functional.drift_all(x), dtype=np.float64)
    if g.shape != x.shape:
        raise DimensionMismatchError(f"drift shape {g.shape} does not match positions {x.shape}")
    x_new = x - (g + params.lam * x) * dt
    if params.sigma > 0.0:
        x_new = x_new + params.sigma * math.sqrt(dt) * noise.normals(step, *x.shape)
    if not np.isfinite(x_new).all():
        raise NonFiniteError(f"non-finite positions after step {step}", step=step)
    return x_new


Observer = Callable[[ParticleState], float]


def simulate(
    initial: ParticleState,
    params: DynamicsParams,
    functional,
    observers: Mapping[str, Observer],
    record_every: int = 1,
    scheme: str = "semi_implicit",
) -> tuple[ObservableSeries, ParticleState]:
    """Run ceil(horizon/dt) kinetic steps, sampling observers.

    Observers are evaluated at t=0 and after every ``record_every``-th step.
    Returns the recorded series together with the final state.
    """
    if record_every < 1:
        raise ParameterError(f"record_every must be >= 1, got {record_every}")
    noise = NoiseStream(params.seed)
    state = initial
    times = [state.time]
    records = {name: [fn(state)] for name, fn in observers.items()}
    for k in range(params.n_steps):
        state = step_underdamped(state, params, functional, noise, step=k, scheme=scheme)
        if (k + 1) % record_every == 0:
            times.append(initial.time + (k + 1) * params.dt)
            for name, fn in observers.items():
                records[name].append(fn(state))
    series = ObservableSeries(np.array(times), {n: np.array(v) for n, v in records.items()})
    return series, state


def simulate_overdamped(
    initial_positions: np.ndarray,
    params: DynamicsParams,
    functional,
    observers: Mapping[str, Observer],
    record_every: int = 1,
) -> tuple[ObservableSeries, np.ndarray]:
    """First-order counterpart of :func:`simulate`.

    Observers receive a ParticleState with zero velocities so the same
    observer registry works for both dynamics.
    """
    if record_every < 1:
        raise ParameterError(f"record_every must be >= 1, got {record_every}")
    x = _as_matrix(initial_positions, "positions")
    noise = NoiseStream(params.seed)

    def wrap(x, t):
        return ParticleState(x, np.zeros_like(x), t)

    times = [0.0]
    records = {name: [fn(wrap(x, 0.0))] for name, fn in observers.items()}
    for k in range(params.n_steps):
        x = step_overdamped(x, params, functional, noise, step=k)
        if (k + 1) % record_every == 0:
            t = (k + 1) * params.dt
            times.append(t)
            state = wrap(x, t)
            for name, fn in observers.items():
                records[name].append(fn(state))
    series = ObservableSeries(np.array(times), {n: np.array(v) for n, v in records.items()})
    return series, x
