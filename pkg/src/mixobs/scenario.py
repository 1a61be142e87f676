"""Line-oriented scenario files.

Grammar (``#`` starts a comment; ids in scenario files are 1-based)::

    [scenario]   name, seed, horizon
    [observer]   model (ncv|nca), sample_time, measurement_noise (std),
                 process_noise_std (KF, σ_p), initial_covariance
    [traffic]    driver_substeps
    [hdv K]      position, velocity, front (id|none), lambda, tau, alpha1,
                 alpha2, beta1, beta2, noise_std, distance_threshold,
                 desired_velocity = t0:v0 t1:v1 ...   (seconds : m/s)
    [network]    cavs, directed (true|false), topology = name(args) | link = i j  (repeatable)
    [sensors]    cavN = hdvK.component ...   (components: p v | ax ay vx vy px py)
    [faults]     fault = STEP remove_link I J [keep_gain] | fault = STEP remove_node I [keep_gain]
    [synthesis]  method (ccl|spectral_descent), margin, max_iter
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import graph as g_
from .graph import DirectedGraph, GraphError
from .observer import FaultEvent, FaultKind
from .structural import SensorPlacement
from .synthesis import SynthesisConfig
from .traffic import STATE_NAMES, Hdv, HdvParams, ModelMatrices, build_observer_model


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class HdvSpec:
    position: float
    velocity: float
    front: int | None
    lambda_gain: float
    reaction_delay: int
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float
    distance_threshold: float
    desired_velocity: tuple[tuple[float, float], ...]
    noise_std: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str
    hdvs: tuple[HdvSpec, ...]
    cav_count: int
    sensors: tuple[tuple[tuple[int, str], ...], ...]  # per CAV: (hdv, component)
    topology: str | None = None
    links: tuple[tuple[int, int], ...] = ()
    directed: bool = False
    model_kind: str = "ncv"
    sample_time: float = 0.1
    measurement_noise: float = 0.1
    process_noise_std: float = 0.1
    initial_covariance: float = 100.0
    driver_substeps: int = 1
    faults: tuple[FaultEvent, ...] = ()
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    horizon: int = 600
    seed: int = 0

    # -- derived objects -------------------------------------------------

    @property
    def hdv_count(self) -> int:
        return len(self.hdvs)

    @property
    def undirected(self) -> bool:
        return not self.directed

    def model(self) -> ModelMatrices:
        return build_observer_model(self.model_kind, self.hdv_count, self.sample_time)

    def graph(self) -> DirectedGraph:
        """CAV network with self-loops, 0-based."""
        if self.topology:
            base = g_.build_named(self.topology)
        elif self.directed:
            base = DirectedGraph.from_links(self.cav_count, self.links)
        else:
            base = DirectedGraph.undirected(self.cav_count, self.links)
        return base.with_self_loops()

    def placement(self) -> SensorPlacement:
        model = self.model()
        return SensorPlacement(model.state_dim, tuple(
            tuple(model.state_index(h, c) for h, c in cav) for cav in self.sensors))

    def hdv_objects(self) -> list[Hdv]:
        out = []
        for h in self.hdvs:
            profile = tuple((round(t / self.sample_time), v) for t, v in h.desired_velocity)
            params = HdvParams(h.lambda_gain, h.reaction_delay, h.alpha1, h.alpha2, h.beta1,
                               h.beta2, h.noise_std, h.distance_threshold, profile)
            out.append(Hdv(params, h.position, h.velocity, h.front))
        return out

    def post_fault(self) -> tuple[DirectedGraph, SensorPlacement, list[int]]:
        """Network, placement and surviving CAV ids after every scheduled fault."""
        from .observer import _apply_fault

        graph, active = self.graph(), list(range(self.cav_count))
        for f in sorted(self.faults, key=lambda f: f.step):
            graph, active = _apply_fault(graph, active, f, self.undirected)
        placement = self.placement()
        return graph, SensorPlacement(placement.state_dim, tuple(placement.measured[c] for c in active)), active

    def synthesis_config(self, method: str | None = None) -> SynthesisConfig:
        return self.synthesis if method is None else replace(self.synthesis, method=method)


# -- parsing ----------------------------------------------------------------

_SKIP = object()  # keys inside an unknown section are already covered by its error
_SECTION = re.compile(r"^\[\s*([a-z_]+)(?:\s+(\d+))?\s*\]$")
_SENSOR = re.compile(r"^hdv(\d+)\.([a-z]+)$")

HDV_KEYS = {
    "position": ("position", float), "velocity": ("velocity", float),
    "lambda": ("lambda_gain", float), "tau": ("reaction_delay", int),
    "alpha1": ("alpha1", float), "alpha2": ("alpha2", float),
    "beta1": ("beta1", float), "beta2": ("beta2", float),
    "noise_std": ("noise_std", float), "distance_threshold": ("distance_threshold", float),
}
SCALAR_KEYS = {
    "scenario": {"name": ("name", str), "seed": ("seed", int), "horizon": ("horizon", int)},
    "observer": {"model": ("model_kind", str), "sample_time": ("sample_time", float),
                 "measurement_noise": ("measurement_noise", float),
                 "process_noise_std": ("process_noise_std", float),
                 "initial_covariance": ("initial_covariance", float)},
    "traffic": {"driver_substeps": ("driver_substeps", int)},
    "network": {"cavs": ("cav_count", int), "directed": ("directed", "bool"),
                "topology": ("topology", str)},
    "synthesis": {"method": ("method", str), "margin": ("margin", float),
                  "max_iter": ("max_iter", int)},
}


def _convert(value: str, kind):
    if kind == "bool":
        if value.lower() in ("true", "yes", "1"):
            return True
        if value.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true/false, got {value!r}")
    return kind(value)


def parse_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario_text(path.read_text(), source=str(path))


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    errors: list[str] = []
    top: dict = {}
    synth: dict = {}
    hdvs: dict[int, dict] = {}
    hdv_lines: dict[int, int] = {}
    links: list[tuple[int, int]] = []
    sensors: dict[int, list[tuple[int, str]]] = {}
    faults: list[tuple[int, FaultEvent]] = []
    section = None
    number = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        m = _SECTION.match(line)
        if m:
            section, number = m.group(1), m.group(2)
            if section == "hdv":
                if number is None:
                    errors.append(f"{where}: syntax error: [hdv] needs an id, e.g. [hdv 1]")
                    section = _SKIP
                    continue
                number = int(number)
                if number in hdvs:
                    errors.append(f"{where}: duplicate section [hdv {number}]")
                hdvs[number] = {}
                hdv_lines[number] = lineno
            elif section not in SCALAR_KEYS and section not in ("sensors", "faults"):
                errors.append(f"{where}: syntax error: unknown section [{section}]")
                section = _SKIP
            continue
        if "=" not in line:
            errors.append(f"{where}: syntax error: expected 'key = value'")
            continue
        key, _, value = (s.strip() for s in line.partition("="))
        if section is _SKIP:
            continue
        if section is None:
            errors.append(f"{where}: syntax error: '{key}' outside a section")
            continue
        try:
            if section == "hdv":
                entry = hdvs[number]
                if key == "front":
                    entry["front"] = None if value.lower() == "none" else int(value) - 1
                elif key == "desired_velocity":
                    pairs = []
                    for tok in value.split():
                        t, _, v = tok.partition(":")
                        pairs.append((float(t), float(v)))
                    entry["desired_velocity"] = tuple(pairs)
                elif key in HDV_KEYS:
                    attr, kind = HDV_KEYS[key]
                    entry[attr] = _convert(value, kind)
                else:
                    errors.append(f"{where}: hdv {number}: unknown key '{key}'")
            elif section == "network" and key == "link":
                i, j = value.split()
                links.append((int(i) - 1, int(j) - 1))
            elif section == "sensors":
                m = re.match(r"^cav\s*(\d+)$", key)
                if not m:
                    errors.append(f"{where}: sensors: expected 'cavN = ...', got '{key}'")
                    continue
                cav = int(m.group(1)) - 1
                items = []
                for tok in value.split():
                    sm = _SENSOR.match(tok)
                    if not sm:
                        raise ValueError(f"bad sensor token {tok!r} (want hdvK.component)")
                    items.append((int(sm.group(1)) - 1, sm.group(2)))
                sensors[cav] = items
            elif section == "faults":
                if key != "fault":
                    errors.append(f"{where}: faults: unknown key '{key}'")
                    continue
                faults.append((lineno, _parse_fault(value)))
            else:
                table = SCALAR_KEYS[section]
                if key not in table:
                    errors.append(f"{where}: {section}: unknown key '{key}'")
                    continue
                attr, kind = table[key]
                (synth if section == "synthesis" else top)[attr] = _convert(value, kind)
        except (ValueError, TypeError) as exc:
            errors.append(f"{where}: syntax error in '{key}': {exc}")

    if errors:
        raise ScenarioError(errors)
    return _assemble(top, synth, hdvs, hdv_lines, links, sensors, faults)


def _parse_fault(value: str) -> FaultEvent:
    parts = value.split()
    if len(parts) < 3:
        raise ValueError("fault needs 'STEP kind ids...'")
    step, kind = int(parts[0]), FaultKind(parts[1])
    want = 2 if kind is FaultKind.REMOVE_LINK else 1
    ids = tuple(int(p) - 1 for p in parts[2:2 + want])
    rest = parts[2 + want:]
    if len(ids) != want or rest not in ([], ["redesign"], ["keep_gain"]):
        raise ValueError(f"malformed fault {value!r}")
    return FaultEvent(step, kind, ids, redesign_gain=rest != ["keep_gain"])


def _assemble(top, synth, hdvs, hdv_lines, links, sensors, faults) -> Scenario:
    errors: list[str] = []
    required_hdv = [f.name for f in fields(HdvSpec) if f.name not in ("noise_std", "front")]
    ids = sorted(hdvs)
    if ids != list(range(1, len(ids) + 1)):
        errors.append(f"hdv: ids must be 1..N without gaps, got {ids}")
    specs = []
    for hid in ids:
        entry = hdvs[hid]
        missing = [k for k in required_hdv if k not in entry]
        if missing:
            errors.append(f"hdv.{hid}: missing field(s) {', '.join(missing)}")
            continue
        front = entry.get("front")
        if front is not None and not (0 <= front < len(ids)) or front == hid - 1:
            errors.append(f"hdv.{hid}.front: vehicle {front + 1 if front is not None else front} does not exist")
        try:
            specs.append(HdvSpec(front=front, **{k: v for k, v in entry.items() if k != "front"}))
        except TypeError as exc:
            errors.append(f"hdv.{hid}: {exc}")

    cav_count = top.get("cav_count")
    if cav_count is None:
        errors.append("network.cavs: required")
        cav_count = 0
    topology = top.get("topology")
    if topology and links:
        errors.append("network: give either 'topology' or 'link' lines, not both")
    if not topology and not links:
        errors.append("network: no topology or links given")
    if topology:
        try:
            name, args = g_.parse_named(topology)
            if args[0] != cav_count:
                errors.append(f"network.topology: {topology} has {args[0]} nodes but cavs = {cav_count}")
            g_.build_named(topology)
        except GraphError as exc:
            errors.append(f"network.topology: {exc}")
    for i, j in links:
        if not (0 <= i < cav_count and 0 <= j < cav_count):
            errors.append(f"network.link {i + 1} {j + 1}: CAV does not exist")
    if len(set(links)) != len(links):
        errors.append("network.link: duplicate link")

    kind = top.get("model_kind", "ncv")
    if kind not in STATE_NAMES:
        errors.append(f"observer.model: unknown model {kind!r}")
        kind = "ncv"
    sensor_rows = []
    for cav in sorted(sensors):
        if not 0 <= cav < cav_count:
            errors.append(f"sensors.cav{cav + 1}: CAV does not exist")
    for cav in range(cav_count):
        row = sensors.get(cav, [])
        for hdv, comp in row:
            if not 0 <= hdv < len(ids):
                errors.append(f"sensors.cav{cav + 1}: hdv{hdv + 1} does not exist")
            if comp not in STATE_NAMES[kind]:
                errors.append(f"sensors.cav{cav + 1}: component '{comp}' not in {kind} state")
        sensor_rows.append(tuple(row))

    for lineno, f in faults:
        for t in f.target:
            if not 0 <= t < cav_count:
                errors.append(f"faults (line {lineno}): CAV {t + 1} does not exist")
        if f.kind is FaultKind.REMOVE_LINK and cav_count:
            i, j = f.target
            pairs = set(links) if links else set()
            if topology and not errors:
                pairs = set(g_.build_named(topology).links)
            if not topology and not top.get("directed", False):
                pairs |= {(b, a) for a, b in pairs}
            if (i, j) not in pairs:
                errors.append(f"faults (line {lineno}): link {i + 1} {j + 1} not in the network")

    try:
        synthesis = SynthesisConfig(**synth)
    except ValueError as exc:
        errors.append(f"synthesis.method: {exc}")
        synthesis = SynthesisConfig()

    if errors:
        raise ScenarioError(errors)
    scn = Scenario(
        name=top.get("name", "scenario"),
        hdvs=tuple(specs),
        cav_count=cav_count,
        sensors=tuple(sensor_rows),
        topology=topology,
        links=tuple(links),
        directed=top.get("directed", False),
        model_kind=kind,
        sample_time=top.get("sample_time", 0.1),
        measurement_noise=top.get("measurement_noise", 0.1),
        process_noise_std=top.get("process_noise_std", 0.1),
        initial_covariance=top.get("initial_covariance", 100.0),
        driver_substeps=top.get("driver_substeps", 1),
        faults=tuple(f for _, f in faults),
        synthesis=synthesis,
        horizon=top.get("horizon", 600),
        seed=top.get("seed", 0),
    )
    _semantic_checks(scn)
    return scn


def _semantic_checks(scn: Scenario) -> None:
    errors = []
    if scn.sample_time <= 0:
        errors.append("observer.sample_time: must be > 0")
    if scn.measurement_noise < 0 or scn.process_noise_std < 0:
        errors.append("observer: noise levels must be >= 0")
    if scn.driver_substeps < 1:
        errors.append("traffic.driver_substeps: must be >= 1")
    if scn.horizon < 1:
        errors.append("scenario.horizon: must be >= 1")
    for i, h in enumerate(scn.hdvs):
        if h.reaction_delay < 0:
            errors.append(f"hdv.{i + 1}.tau: must be >= 0")
        if h.distance_threshold <= 0:
            errors.append(f"hdv.{i + 1}.distance_threshold: must be > 0")
        if not h.desired_velocity:
            errors.append(f"hdv.{i + 1}.desired_velocity: empty")
    for f in scn.faults:
        if not 0 < f.step <= scn.horizon:
            errors.append(f"faults: step {f.step} outside 1..{scn.horizon}")
    if errors:
        raise ScenarioError(errors)


# -- serialization ------------------------------------------------------------

def _num(x) -> str:
    return repr(x) if isinstance(x, float) else str(x)


def serialize_scenario(scn: Scenario) -> str:
    out = ["[scenario]", f"name = {scn.name}", f"seed = {scn.seed}", f"horizon = {scn.horizon}", ""]
    out += ["[observer]", f"model = {scn.model_kind}", f"sample_time = {_num(scn.sample_time)}",
            f"measurement_noise = {_num(scn.measurement_noise)}",
            f"process_noise_std = {_num(scn.process_noise_std)}",
            f"initial_covariance = {_num(scn.initial_covariance)}", ""]
    out += ["[traffic]", f"driver_substeps = {scn.driver_substeps}", ""]
    rev = {attr: key for key, (attr, _) in HDV_KEYS.items()}
    for i, h in enumerate(scn.hdvs, 1):
        out.append(f"[hdv {i}]")
        out.append(f"front = {'none' if h.front is None else h.front + 1}")
        for f in fields(HdvSpec):
            if f.name in rev:
                out.append(f"{rev[f.name]} = {_num(getattr(h, f.name))}")
        out.append("desired_velocity = " + " ".join(f"{_num(t)}:{_num(v)}" for t, v in h.desired_velocity))
        out.append("")
    out += ["[network]", f"cavs = {scn.cav_count}", f"directed = {str(scn.directed).lower()}"]
    if scn.topology:
        out.append(f"topology = {scn.topology}")
    out += [f"link = {i + 1} {j + 1}" for i, j in scn.links]
    out += ["", "[sensors]"]
    for c, row in enumerate(scn.sensors, 1):
        out.append(f"cav{c} = " + " ".join(f"hdv{h + 1}.{comp}" for h, comp in row))
    if scn.faults:
        out += ["", "[faults]"]
        for f in scn.faults:
            suffix = "redesign" if f.redesign_gain else "keep_gain"
            out.append(f"fault = {f.step} {f.kind.value} " + " ".join(str(t + 1) for t in f.target) + f" {suffix}")
    s = scn.synthesis
    out += ["", "[synthesis]", f"method = {s.method}", f"margin = {_num(s.margin)}", f"max_iter = {s.max_iter}"]
    return "\n".join(out) + "\n"


BUNDLED = Path(__file__).parent / "scenarios"


def bundled(name: str) -> Path:
    """Path of a bundled scenario (``fig1``, ``fig1_linkfail``, ``fig9``, ``fig9_nodefail``)."""
    path = BUNDLED / (name if name.endswith(".scn") else name + ".scn")
    if not path.exists():
        raise FileNotFoundError(f"no bundled scenario {name!r}")
    return path


def load_bundled(name: str) -> Scenario:
    return parse_scenario(bundled(name))
