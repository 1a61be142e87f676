"""HDV ground truth (free-flow and Helly car-following) and observer models.

The driver recursions advance once per *driver update*.  By default a
driver update happens every observer sample; ``driver_substeps = S`` makes
drivers update every S samples.  Between updates the velocity ramps
linearly from v(k) to v(k+1) (acceleration held), positions are integrated
every sample, and the reaction delay τ, counted in samples, spans
ceil(τ / S) driver updates.  At update instants the velocity equals the
recursion value exactly; S = 1 is the plain per-sample recursion.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag


class Mode(str, enum.Enum):
    FREE_FLOW = "free_flow"
    CAR_FOLLOWING = "car_following"


@dataclass(frozen=True)
class HdvParams:
    lambda_gain: float = 0.3
    reaction_delay: int = 10
    alpha1: float = 0.5
    alpha2: float = 0.125
    beta1: float = 4.0
    beta2: float = 0.05
    noise_std: float = 0.0
    distance_threshold: float = 50.0
    # (start_step, velocity) breakpoints, sorted by step
    desired_velocity_profile: tuple[tuple[int, float], ...] = ((0, 25.0),)

    def __post_init__(self):
        if self.reaction_delay < 0:
            raise ValueError("reaction_delay must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.distance_threshold <= 0:
            raise ValueError("distance_threshold must be > 0")
        if not self.desired_velocity_profile:
            raise ValueError("desired velocity profile is empty")
        steps = [s for s, _ in self.desired_velocity_profile]
        if steps != sorted(steps):
            raise ValueError("desired velocity breakpoints must be sorted")

    def desired_velocity(self, step: int) -> float:
        v = self.desired_velocity_profile[0][1]
        for start, value in self.desired_velocity_profile:
            if step >= start:
                v = value
            else:
                break
        return v


def delayed(history: Sequence[float], tau: int) -> float:
    """history[-1] is the value at k; returns the value at k - tau, padded with history[0]."""
    if tau + 1 > len(history):
        return history[0]
    return history[-1 - tau]


def step_free_flow(v_hist: Sequence[float], params: HdvParams, k: int, rng=None,
                   tau: int | None = None, desired: float | None = None) -> float:
    """v(k+1) = v(k) + λ (v_d(k) - v(k-τ)) + ε(k)."""
    tau = params.reaction_delay if tau is None else tau
    vd = params.desired_velocity(k) if desired is None else desired
    eps = rng.normal(0.0, params.noise_std) if rng is not None and params.noise_std > 0 else 0.0
    return v_hist[-1] + params.lambda_gain * (vd - delayed(v_hist, tau)) + eps


def step_helly(v_hist: Sequence[float], x_hist: Sequence[float],
               front_v_hist: Sequence[float], front_x_hist: Sequence[float],
               params: HdvParams, k: int, rng=None, tau: int | None = None) -> float:
    """v(k+1) = v(k) + α1 δv(k-τ) + α2 (δx(k-τ) - D(k)),  D(k) = β1 + β2 v(k-τ)."""
    tau = params.reaction_delay if tau is None else tau
    v_lag = delayed(v_hist, tau)
    dv = delayed(front_v_hist, tau) - v_lag
    dx = delayed(front_x_hist, tau) - delayed(x_hist, tau)
    desired_gap = params.beta1 + params.beta2 * v_lag
    return v_hist[-1] + params.alpha1 * dv + params.alpha2 * (dx - desired_gap)


def select_mode(position: float, front_position: float | None, params: HdvParams) -> Mode:
    if front_position is None or front_position - position >= params.distance_threshold:
        return Mode.FREE_FLOW
    return Mode.CAR_FOLLOWING


@dataclass(frozen=True)
class Hdv:
    params: HdvParams
    position: float
    velocity: float
    front: int | None = None  # index of the vehicle ahead


@dataclass
class GroundTruth:
    sample_time: float
    positions: np.ndarray    # (steps + 1, N)
    velocities: np.ndarray   # (steps + 1, N)
    modes: list[list[Mode]]  # (steps + 1, N), mode in force at each sample
    warnings: list[str] = field(default_factory=list)

    @property
    def hdv_count(self) -> int:
        return self.positions.shape[1]

    def state(self, step: int, kind: str = "ncv") -> np.ndarray:
        """Global HDV state at a sample in the observer model's layout."""
        p, v = self.positions[step], self.velocities[step]
        if kind == "ncv":
            return np.column_stack([p, v]).ravel()
        if kind == "nca":
            prev = self.velocities[step - 1] if step > 0 else v
            acc = (v - prev) / self.sample_time
            zeros = np.zeros_like(p)
            return np.column_stack([acc, zeros, v, zeros, p, zeros]).ravel()
        raise ValueError(f"unknown model kind {kind!r}")

    def to_csv(self) -> str:
        rows = ["step,hdv,mode,position_m,velocity_mps"]
        for k in range(self.positions.shape[0]):
            for h in range(self.hdv_count):
                rows.append(f"{k},{h + 1},{self.modes[k][h].value},"
                            f"{self.positions[k, h]!r},{self.velocities[k, h]!r}")
        return "\n".join(rows) + "\n"


def simulate_ground_truth(hdvs: Sequence[Hdv], sample_time: float, horizon: int,
                          seed: int | np.random.Generator | None = 0,
                          driver_substeps: int = 1) -> GroundTruth:
    if driver_substeps < 1:
        raise ValueError("driver_substeps must be >= 1")
    for i, h in enumerate(hdvs):
        if h.front is not None and not 0 <= h.front < len(hdvs) or h.front == i:
            raise ValueError(f"HDV {i} has an invalid front vehicle {h.front}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = len(hdvs)
    s = driver_substeps
    taus = [math.ceil(h.params.reaction_delay / s) for h in hdvs]
    # driver-update histories
    v_hist = [[h.velocity] for h in hdvs]
    x_hist = [[h.position] for h in hdvs]
    positions = np.empty((horizon + 1, n))
    velocities = np.empty((horizon + 1, n))
    positions[0] = [h.position for h in hdvs]
    modes: list[list[Mode]] = []
    warnings: list[str] = []
    current_modes = [Mode.FREE_FLOW] * n
    next_v = [h.velocity for h in hdvs]

    for t in range(horizon + 1):
        if t % s == 0:
            k = t // s
            if k > 0:
                for i in range(n):
                    v_hist[i].append(next_v[i])
                    x_hist[i].append(positions[t, i])
            current_modes = []
            for i, h in enumerate(hdvs):
                front_pos = x_hist[h.front][-1] if h.front is not None else None
                mode = select_mode(x_hist[i][-1], front_pos, h.params)
                current_modes.append(mode)
                if front_pos is not None and front_pos - x_hist[i][-1] < 0:
                    warnings.append(f"step {t}: HDV {i + 1} has passed HDV {h.front + 1} (negative gap)")
            for i, h in enumerate(hdvs):
                if current_modes[i] is Mode.FREE_FLOW:
                    next_v[i] = step_free_flow(v_hist[i], h.params, k, rng, tau=taus[i],
                                               desired=h.params.desired_velocity(t))
                else:
                    f = h.front
                    next_v[i] = step_helly(v_hist[i], x_hist[i], v_hist[f], x_hist[f],
                                           h.params, k, tau=taus[i])
        frac = (t % s) / s
        velocities[t] = [vh[-1] + frac * (nv - vh[-1]) for vh, nv in zip(v_hist, next_v)]
        modes.append(list(current_modes))
        if t < horizon:
            positions[t + 1] = positions[t] + sample_time * velocities[t]
    return GroundTruth(sample_time, positions, velocities, modes, warnings)


STATE_NAMES = {
    "ncv": ("p", "v"),
    "nca": ("ax", "ay", "vx", "vy", "px", "py"),
}


@dataclass(frozen=True)
class ModelMatrices:
    kind: str
    block: np.ndarray
    hdv_count: int
    sample_time: float

    @property
    def state_dim_per_hdv(self) -> int:
        return self.block.shape[0]

    @property
    def state_dim(self) -> int:
        return self.hdv_count * self.state_dim_per_hdv

    @property
    def global_a(self) -> np.ndarray:
        return block_diag(*([self.block] * self.hdv_count))

    def state_names(self) -> list[str]:
        return [f"hdv{h + 1}.{c}" for h in range(self.hdv_count) for c in STATE_NAMES[self.kind]]

    def state_index(self, hdv: int, component: str) -> int:
        comps = STATE_NAMES[self.kind]
        if component not in comps:
            raise ValueError(f"component {component!r} not in {self.kind} state {comps}")
        return hdv * len(comps) + comps.index(component)


def ncv_block(t: float) -> np.ndarray:
    return np.array([[1.0, t], [0.0, 1.0]])


def nca_block(t: float) -> np.ndarray:
    """2-D nearly-constant-acceleration block, state (ax, ay, vx, vy, px, py)."""
    a = np.eye(6)
    a[2, 0] = a[3, 1] = t
    a[4, 2] = a[5, 3] = t
    a[4, 0] = a[5, 1] = t * t / 2
    return a


def build_observer_model(kind: str, hdv_count: int, sample_time: float) -> ModelMatrices:
    if hdv_count < 1:
        raise ValueError("need at least one HDV")
    if sample_time < 0:
        raise ValueError("sample_time must be >= 0")
    if kind == "ncv":
        block = ncv_block(sample_time)
    elif kind == "nca":
        block = nca_block(sample_time)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return ModelMatrices(kind, block, hdv_count, sample_time)
