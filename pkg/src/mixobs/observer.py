"""Consensus-based distributed observer, centralized Kalman benchmark, metrics.

Each CAV i runs, per sample,

    prediction  x̂ⁱ(k|k-1) = Σ_{j∈N_i} w_ij A x̂ʲ(k-1|k-1)
    update      x̂ⁱ(k|k)   = x̂ⁱ(k|k-1) + K_i Σ_{j∈N_i} C_jᵀ (y_j - C_j x̂ⁱ(k|k-1))

so the stacked error obeys e_k = (I - K D_C)(W ⊗ A) e_{k-1} + noise terms.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import graph as g_
from .graph import DirectedGraph
from .matrices import (ObserverGain, assemble_ahat, build_dc, build_row_stochastic,
                       neighborhoods, selection_rows, spectral_radius)
from .structural import SensorPlacement
from .synthesis import SynthesisConfig, synthesize_gain


class DivergenceError(RuntimeError):
    pass


class ObservabilityLost(RuntimeError):
    pass


class FaultKind(str, enum.Enum):
    REMOVE_LINK = "remove_link"
    REMOVE_NODE = "remove_node"


@dataclass(frozen=True)
class FaultEvent:
    """A scheduled isolation; CAV ids refer to the pre-fault (original) labels."""

    step: int
    kind: FaultKind
    target: tuple[int, ...]  # (i, j) for a link, (i,) for a node
    redesign_gain: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", FaultKind(self.kind))
        want = 2 if self.kind is FaultKind.REMOVE_LINK else 1
        if len(self.target) != want:
            raise ValueError(f"{self.kind.value} needs {want} CAV id(s), got {self.target}")

    def describe(self) -> str:
        ids = " ".join(str(t + 1) for t in self.target)
        return f"{self.kind.value} {ids}"


@dataclass
class ObserverState:
    estimates: np.ndarray  # (n, d)
    step: int = 0

    def __post_init__(self):
        self.estimates = np.atleast_2d(np.asarray(self.estimates, dtype=float))
        if not np.all(np.isfinite(self.estimates)):
            raise DivergenceError("divergence: non-finite estimate")


def observer_step(state: ObserverState, w: np.ndarray, a_global: np.ndarray, gain: ObserverGain,
                  placement: SensorPlacement, measurements: Sequence) -> ObserverState:
    """One consensus prediction plus neighbourhood innovation for every CAV.

    ``measurements[j]`` is CAV j's output vector, or ``None`` for CAVs
    without sensors.  CAVs whose neighbourhood holds no sensor only predict.
    """
    x = state.estimates
    n, d = x.shape
    if w.shape != (n, n) or a_global.shape != (d, d):
        raise ValueError("W / A do not match the estimate array")
    if len(gain.blocks) != n or gain.block_dim != d:
        raise ValueError("gain does not match the estimate array")
    if placement.cav_count != n or placement.state_dim != d:
        raise ValueError("placement does not match the estimate array")
    if len(measurements) != n:
        raise ValueError(f"expected {n} measurement slots, got {len(measurements)}")
    for j, idx in enumerate(placement.measured):
        y = measurements[j]
        if idx and (y is None or len(y) != len(idx)):
            raise ValueError(f"CAV {j} should report {len(idx)} measurement(s)")
        if not idx and y is not None and len(y):
            raise ValueError(f"CAV {j} has no sensors but reported a measurement")

    pred = w @ (x @ a_global.T)
    out = pred.copy()
    for i in range(n):
        innov = np.zeros(d)
        used = False
        for j in np.flatnonzero(w[i]):
            idx = placement.measured[j]
            if idx:
                innov[list(idx)] += np.asarray(measurements[j]) - pred[i, list(idx)]
                used = True
        if used:
            out[i] += gain.blocks[i] @ innov
    if not np.all(np.isfinite(out)):
        raise DivergenceError("divergence: non-finite estimate")
    return ObserverState(out, state.step + 1)


@dataclass
class SimulationTrace:
    role: str                      # "distributed" | "centralized"
    kind: str                      # observer model kind
    entity_ids: list[int]          # original CAV ids (0-based); [-1] for central
    truth: np.ndarray              # (steps + 1, d)
    estimates: np.ndarray          # (steps + 1, entities, d); NaN once removed
    hdv_count: int
    events: list[str] = field(default_factory=list)
    spectral_radii: list[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.truth.shape[0] - 1

    @property
    def errors(self) -> np.ndarray:
        return self.truth[:, None, :] - self.estimates

    def component_indices(self) -> tuple[list[int], list[int]]:
        m = self.truth.shape[1] // self.hdv_count
        pos, vel = POSITION_COMPONENTS[self.kind], VELOCITY_COMPONENTS[self.kind]
        return ([h * m + c for h in range(self.hdv_count) for c in pos],
                [h * m + c for h in range(self.hdv_count) for c in vel])

    def to_csv(self) -> str:
        m = self.truth.shape[1] // self.hdv_count
        p0, v0 = POSITION_COMPONENTS[self.kind][0], VELOCITY_COMPONENTS[self.kind][0]
        role = "cav_estimate" if self.role == "distributed" else "central_estimate"
        rows = ["step,entity,role,hdv,position,velocity,sq_error"]
        err = self.errors
        for k in range(self.truth.shape[0]):
            for h in range(self.hdv_count):
                rows.append(f"{k},truth,truth,{h + 1},{self.truth[k, h * m + p0]!r},"
                            f"{self.truth[k, h * m + v0]!r},")
            for e, ent in enumerate(self.entity_ids):
                name = f"cav{ent + 1}" if ent >= 0 else "central"
                for h in range(self.hdv_count):
                    est = self.estimates[k, e]
                    if np.isnan(est[0]):
                        continue
                    sq = float(err[k, e, h * m + p0] ** 2 + err[k, e, h * m + v0] ** 2)
                    rows.append(f"{k},{name},{role},{h + 1},{est[h * m + p0]!r},"
                                f"{est[h * m + v0]!r},{sq!r}")
        return "\n".join(rows) + "\n"


POSITION_COMPONENTS = {"ncv": (0,), "nca": (4, 5)}
VELOCITY_COMPONENTS = {"ncv": (1,), "nca": (2, 3)}


def _check_network(graph: DirectedGraph):
    if not g_.is_strongly_connected(graph):
        raise ObservabilityLost("observability lost; redundancy level exceeded "
                                "(CAV network is no longer strongly connected)")


def distributed_observer(truth: np.ndarray, a_global: np.ndarray, graph: DirectedGraph,
                         placement: SensorPlacement, gain: ObserverGain, *,
                         meas_noise: np.ndarray | None = None,
                         faults: Sequence[FaultEvent] = (), undirected: bool = False,
                         synthesis: SynthesisConfig | None = None,
                         init: np.ndarray | None = None, kind: str = "ncv",
                         hdv_count: int | None = None) -> SimulationTrace:
    """Run the observer over a precomputed truth sequence.

    ``meas_noise`` has shape (steps + 1, total measurements) with columns in
    CAV order, so paired runs can share one noise realization.
    """
    steps = truth.shape[0] - 1
    d = truth.shape[1]
    n0 = graph.node_count
    _check_network(graph)
    active = list(range(n0))
    w = build_row_stochastic(graph)
    offsets = np.cumsum([0] + [len(m) for m in placement.measured])
    x0 = np.zeros(d) if init is None else np.asarray(init, dtype=float)
    state = ObserverState(np.tile(x0, (n0, 1)))
    estimates = np.full((steps + 1, n0, d), np.nan)
    estimates[0] = state.estimates
    cur_graph, cur_place, cur_gain = graph, placement, gain
    dc = build_dc(cur_place.measured, neighborhoods(cur_graph), d)
    radii = [spectral_radius(assemble_ahat(w, a_global, cur_gain, dc))]
    events = []
    pending = sorted(faults, key=lambda f: f.step)

    for k in range(1, steps + 1):
        due = [f for f in pending if f.step == k]
        if due:
            before = list(active)
            for f in due:
                cur_graph, active = _apply_fault(cur_graph, active, f, undirected)
                events.append(f"step {k}: {f.describe()}")
            _check_network(cur_graph)
            keep = [before.index(c) for c in active]
            cur_place = SensorPlacement(d, tuple(placement.measured[c] for c in active))
            w = build_row_stochastic(cur_graph)
            dc = build_dc(cur_place.measured, neighborhoods(cur_graph), d)
            state = ObserverState(state.estimates[keep], state.step)
            if any(f.redesign_gain for f in due):
                res = synthesize_gain(w, a_global, dc, synthesis)
                cur_gain = res.gain
                events.append(f"step {k}: gain redesigned ({res.method}), "
                              f"rho={res.achieved_spectral_radius:.6f}")
            else:
                cur_gain = ObserverGain(tuple(cur_gain.blocks[i] for i in keep))
            radii.append(spectral_radius(assemble_ahat(w, a_global, cur_gain, dc)))
            pending = [f for f in pending if f.step != k]

        ys = []
        for c in active:
            idx = placement.measured[c]
            if idx:
                y = truth[k, list(idx)].copy()
                if meas_noise is not None:
                    y += meas_noise[k, offsets[c]:offsets[c + 1]]
                ys.append(y)
            else:
                ys.append(None)
        state = observer_step(state, w, a_global, cur_gain, cur_place, ys)
        estimates[k, active] = state.estimates

    return SimulationTrace("distributed", kind, list(range(n0)), truth, estimates,
                           hdv_count or 1, events, radii)


def _apply_fault(graph: DirectedGraph, active: list[int], fault: FaultEvent, undirected: bool):
    label = {c: i for i, c in enumerate(active)}
    try:
        if fault.kind is FaultKind.REMOVE_NODE:
            (c,) = fault.target
            new_graph = g_.survives_removal(graph, removed_nodes=[label[c]])
            return new_graph, [a for a in active if a != c]
        i, j = (label[t] for t in fault.target)
    except KeyError:
        raise ValueError(f"fault {fault.describe()} references a CAV already removed") from None
    links = [(i, j), (j, i)] if undirected else [(i, j)]
    links = [l for l in links if l in graph.links] if undirected else links
    return g_.survives_removal(graph, removed_links=links), active


def centralized_kalman(truth: np.ndarray, a_global: np.ndarray, placement: SensorPlacement, *,
                       process_noise: float, measurement_noise: float,
                       meas_noise: np.ndarray | None = None, removed_at: dict[int, int] | None = None,
                       init: np.ndarray | None = None, initial_covariance: float = 100.0,
                       kind: str = "ncv", hdv_count: int | None = None) -> SimulationTrace:
    """Standard Kalman filter on the stacked outputs of every (surviving) CAV.

    ``removed_at`` maps CAV id -> step from which its sensors are dropped.
    """
    steps, d = truth.shape[0] - 1, truth.shape[1]
    removed_at = removed_at or {}
    offsets = np.cumsum([0] + [len(m) for m in placement.measured])
    qn = process_noise * np.eye(d)
    x = np.zeros(d) if init is None else np.asarray(init, dtype=float).copy()
    p = initial_covariance * np.eye(d)
    estimates = np.empty((steps + 1, 1, d))
    estimates[0, 0] = x
    for k in range(1, steps + 1):
        x = a_global @ x
        p = a_global @ p @ a_global.T + qn
        idx, cols = [], []
        for c, meas in enumerate(placement.measured):
            if meas and removed_at.get(c, steps + 1) > k:
                idx.extend(meas)
                cols.extend(range(offsets[c], offsets[c + 1]))
        if idx:
            c_mat = selection_rows(idx, d)
            y = truth[k, idx].copy()
            if meas_noise is not None:
                y += meas_noise[k, cols]
            s = c_mat @ p @ c_mat.T + measurement_noise * np.eye(len(idx))
            gain = np.linalg.solve(s, c_mat @ p).T
            x = x + gain @ (y - c_mat @ x)
            ikc = np.eye(d) - gain @ c_mat
            p = ikc @ p @ ikc.T + measurement_noise * gain @ gain.T
        estimates[k, 0] = x
    return SimulationTrace("centralized", kind, [-1], truth, estimates, hdv_count or 1)


@dataclass
class Metrics:
    msee_position: dict[str, float]
    msee_velocity: dict[str, float]
    aggregate_position: float
    aggregate_velocity: float
    position_series: np.ndarray      # mean over entities & HDVs, per step
    velocity_series: np.ndarray
    disagreement: np.ndarray
    steady_from: int

    def as_key_values(self, prefix: str = "") -> str:
        lines = [f"{prefix}steady_from={self.steady_from}",
                 f"{prefix}msee_position={self.aggregate_position!r}",
                 f"{prefix}msee_velocity={self.aggregate_velocity!r}",
                 f"{prefix}max_disagreement_steady={float(np.max(self.disagreement[self.steady_from:])) if self.disagreement.size else 0.0!r}"]
        for name in self.msee_position:
            lines.append(f"{prefix}msee_position.{name}={self.msee_position[name]!r}")
            lines.append(f"{prefix}msee_velocity.{name}={self.msee_velocity[name]!r}")
        return "\n".join(lines) + "\n"


def compute_metrics(trace: SimulationTrace, steady_from: int | None = None) -> Metrics:
    """MSEE over steps >= ``steady_from`` (default: second half of the run)."""
    steady_from = trace.steps // 2 if steady_from is None else steady_from
    pos, vel = trace.component_indices()
    sq = trace.errors ** 2
    with np.errstate(invalid="ignore"), _quiet():
        pos_series_e = np.nanmean(sq[:, :, pos], axis=2)   # (steps+1, entities)
        vel_series_e = np.nanmean(sq[:, :, vel], axis=2)
        window = slice(steady_from, None)
        names = [f"cav{e + 1}" if e >= 0 else "central" for e in trace.entity_ids]
        msee_p = {n: float(np.nanmean(pos_series_e[window, i])) for i, n in enumerate(names)}
        msee_v = {n: float(np.nanmean(vel_series_e[window, i])) for i, n in enumerate(names)}
        pos_series = np.nanmean(pos_series_e, axis=1)
        vel_series = np.nanmean(vel_series_e, axis=1)
    return Metrics(msee_p, msee_v, float(np.mean(pos_series[window])), float(np.mean(vel_series[window])),
                   pos_series, vel_series, disagreement(trace.estimates), steady_from)


def disagreement(estimates: np.ndarray) -> np.ndarray:
    """Max pairwise distance between (non-removed) estimate vectors per step."""
    out = np.zeros(estimates.shape[0])
    for k, row in enumerate(estimates):
        live = row[~np.isnan(row[:, 0])]
        best = 0.0
        for a, b in itertools.combinations(range(len(live)), 2):
            best = max(best, float(np.linalg.norm(live[a] - live[b])))
        out[k] = best
    return out


class _quiet:
    def __enter__(self):
        import warnings
        self._cm = warnings.catch_warnings()
        self._cm.__enter__()
        warnings.simplefilter("ignore", RuntimeWarning)

    def __exit__(self, *exc):
        return self._cm.__exit__(*exc)


# -- scenario-level runners ------------------------------------------------------

@dataclass
class ScenarioRun:
    truth: "object"            # traffic.GroundTruth
    meas_noise: np.ndarray     # (steps + 1, total measurements)
    trace: SimulationTrace


def _truth_and_noise(scenario, horizon: int, seed: int):
    from .traffic import simulate_ground_truth

    gt = simulate_ground_truth(scenario.hdv_objects(), scenario.sample_time, horizon,
                               np.random.default_rng([seed, 0]), scenario.driver_substeps)
    states = np.array([gt.state(k, scenario.model_kind) for k in range(horizon + 1)])
    total = sum(len(m) for m in scenario.placement().measured)
    noise = np.random.default_rng([seed, 1]).normal(0.0, scenario.measurement_noise,
                                                    (horizon + 1, total))
    return gt, states, noise


def run_distributed(scenario, horizon: int | None = None, seed: int | None = None,
                    gain: ObserverGain | None = None, method: str | None = None) -> ScenarioRun:
    """Ground truth, shared measurement noise and the distributed observer for a scenario.

    Truth uses the stream ``[seed, 0]`` and measurement noise ``[seed, 1]``,
    so ``run_centralized_kalman`` with the same seed sees identical data.
    """
    from .structural import distributed_structural_observability

    horizon = scenario.horizon if horizon is None else horizon
    seed = scenario.seed if seed is None else seed
    model, graph, placement = scenario.model(), scenario.graph(), scenario.placement()
    verdict = distributed_structural_observability(model.global_a, graph, placement)
    if not verdict.observable:
        raise ObservabilityLost("scenario is not distributed-observable; "
                                "run the analyze command for diagnostics")
    cfg = scenario.synthesis_config(method)
    w = build_row_stochastic(graph)
    dc = build_dc(placement.measured, neighborhoods(graph), model.state_dim)
    if gain is None:
        gain = synthesize_gain(w, model.global_a, dc, cfg).gain
    elif len(gain.blocks) != graph.node_count or gain.block_dim != model.state_dim:
        raise ValueError(f"gain has {len(gain.blocks)} blocks of size {gain.block_dim}, scenario needs "
                         f"{graph.node_count} of size {model.state_dim}")
    gt, states, noise = _truth_and_noise(scenario, horizon, seed)
    faults = [f for f in scenario.faults if f.step <= horizon]
    trace = distributed_observer(states, model.global_a, graph, placement, gain,
                                 meas_noise=noise, faults=faults, undirected=scenario.undirected,
                                 synthesis=cfg, kind=scenario.model_kind,
                                 hdv_count=scenario.hdv_count)
    trace.events = list(gt.warnings) + trace.events
    return ScenarioRun(gt, noise, trace)


def run_centralized_kalman(scenario, horizon: int | None = None, seed: int | None = None) -> ScenarioRun:
    """Centralized KF over the same truth and noise realization as ``run_distributed``."""
    horizon = scenario.horizon if horizon is None else horizon
    seed = scenario.seed if seed is None else seed
    model = scenario.model()
    removed = {f.target[0]: f.step for f in scenario.faults
               if f.kind is FaultKind.REMOVE_NODE and f.step <= horizon}
    gt, states, noise = _truth_and_noise(scenario, horizon, seed)
    trace = centralized_kalman(states, model.global_a, scenario.placement(),
                               process_noise=scenario.process_noise_std ** 2,
                               measurement_noise=scenario.measurement_noise ** 2,
                               meas_noise=noise, removed_at=removed,
                               initial_covariance=scenario.initial_covariance,
                               kind=scenario.model_kind, hdv_count=scenario.hdv_count)
    return ScenarioRun(gt, noise, trace)
