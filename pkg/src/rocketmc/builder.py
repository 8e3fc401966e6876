"""Assembles game models from telemetry ensembles.

Every trajectory is resampled to the configured time precision, scored
against the reference, and turned into a sequence of state keys. Counting
consecutive pairs and normalizing rows frequentistically yields the
stochastic transition function. Three variants share one pipeline:

* variant B: states keyed by (layer, classification, flags), perfect
  information, stochastic rows;
* variant A: variant B's support re-attributed to explicit Environment
  branch actions, every row a point distribution;
* variant C: states keyed additionally by the quantized sensor signature,
  with observation classes merging states whose signatures coincide.

The assembled graph is layered: transitions go from layer i to i+1 and
terminal states carry probability-one self-loops.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import ICGS, Distribution
from .trajectory import (
    Classification,
    DeviationWeights,
    QuantizationSpec,
    Thresholds,
    Trajectory,
    classify,
    deviation,
    quantize,
    resample,
)

ROCKET = "Rocket"
ENVIRONMENT = "Environment"
CONTINUE = "continue"
DISENGAGE = "disengage"
TICK = "tick"  # the single Environment action in stochastic variants

PROPS = frozenset({"GoodState", "BadState", "Disengaged", "Finish"})

#: classification marker for synthesized engine-cut sink states
CUT = "Disengaged"


class BuildError(ValueError):
    pass


@dataclass(frozen=True)
class StateKey:
    """Identity of an aggregated state: layer, signature and flags."""

    time_index: int
    classification: str
    quant: tuple[int, ...] | None
    disengaged: bool
    finish: bool

    def __post_init__(self):
        if self.finish and self.time_index < 0:
            raise BuildError("finish state with negative layer")

    def state_id(self) -> str:
        parts = [f"t{self.time_index:04d}", self.classification]
        if self.quant is not None:
            parts.append("q" + ",".join(str(v) for v in self.quant))
        if self.disengaged:
            parts.append("D")
        if self.finish:
            parts.append("F")
        return "|".join(parts)

    @classmethod
    def parse_id(cls, state_id: str) -> "StateKey | None":
        parts = state_id.split("|")
        if len(parts) < 2 or not parts[0].startswith("t"):
            return None
        try:
            time_index = int(parts[0][1:])
        except ValueError:
            return None
        classification = parts[1]
        quant = None
        flags = parts[2:]
        if flags and flags[0].startswith("q"):
            try:
                quant = tuple(int(v) for v in flags[0][1:].split(","))
            except ValueError:
                return None
            flags = flags[1:]
        return cls(
            time_index=time_index,
            classification=classification,
            quant=quant,
            disengaged="D" in flags,
            finish="F" in flags,
        )


def _sortable(key: StateKey):
    return (key.time_index, key.classification, key.quant or (), key.disengaged, key.finish)


@dataclass
class CountTable:
    """Raw transition counts N(source, action, target)."""

    counts: dict[tuple[StateKey, str, StateKey], int] = field(default_factory=dict)

    def add(self, src: StateKey, action: str, dst: StateKey, n: int = 1) -> None:
        if n < 0:
            raise BuildError("negative count")
        if action not in (CONTINUE, DISENGAGE):
            raise BuildError(f"unknown action {action!r}")
        key = (src, action, dst)
        self.counts[key] = self.counts.get(key, 0) + n

    def merge(self, other: "CountTable") -> "CountTable":
        merged = CountTable(dict(self.counts))
        for (src, action, dst), n in other.counts.items():
            merged.add(src, action, dst, n)
        return merged

    def rows(self) -> dict[tuple[StateKey, str], dict[StateKey, int]]:
        out: dict[tuple[StateKey, str], dict[StateKey, int]] = {}
        for (src, action, dst), n in self.counts.items():
            out.setdefault((src, action), {})[dst] = n
        return out


@dataclass(frozen=True)
class BuildConfig:
    k: float
    variant: str
    horizon: float
    weights: DeviationWeights = DeviationWeights()
    thresholds: Thresholds = Thresholds()
    quantization: QuantizationSpec = QuantizationSpec()
    always_allow_disengage: bool = False

    def __post_init__(self):
        if self.k <= 0:
            raise BuildError(f"time precision must be positive, got {self.k}")
        if self.variant not in ("A", "B", "C"):
            raise BuildError(f"variant must be A, B or C, got {self.variant!r}")
        steps = self.horizon / self.k
        if self.horizon <= 0 or abs(steps - round(steps)) > 1e-9:
            raise BuildError(f"horizon {self.horizon} is not a positive multiple of k={self.k}")

    @property
    def horizon_index(self) -> int:
        return round(self.horizon / self.k)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "variant": self.variant,
            "horizon": self.horizon,
            "weights": {"pos": self.weights.pos, "vel": self.weights.vel, "att": self.weights.att},
            "thresholds": {"good": self.thresholds.good, "bad": self.thresholds.bad},
            "quantization": {
                "vel": self.quantization.vel,
                "angle": self.quantization.angle_deg,
                "alt": self.quantization.alt,
                "latlon": self.quantization.latlon,
            },
            "always_allow_disengage": self.always_allow_disengage,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BuildConfig":
        weights = doc.get("weights", {})
        thresholds = doc.get("thresholds", {})
        quantization = doc.get("quantization", {})
        return cls(
            k=float(doc["k"]),
            variant=str(doc.get("variant", "B")),
            horizon=float(doc["horizon"]),
            weights=DeviationWeights(
                pos=float(weights.get("pos", 1.0)),
                vel=float(weights.get("vel", 20.0)),
                att=float(weights.get("att", 500.0)),
            ),
            thresholds=Thresholds(
                good=float(thresholds.get("good", 500.0)),
                bad=float(thresholds.get("bad", 2000.0)),
            ),
            quantization=QuantizationSpec(
                vel=float(quantization.get("vel", 1.0)),
                angle_deg=float(quantization.get("angle", 1.0)),
                alt=float(quantization.get("alt", 1.0)),
                latlon=float(quantization.get("latlon", 1e-5)),
            ),
            always_allow_disengage=bool(doc.get("always_allow_disengage", False)),
        )

    @classmethod
    def from_file(cls, path) -> "BuildConfig":
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix.lower() == ".toml":
            try:
                import tomllib  # py311+
            except ModuleNotFoundError:
                import tomli as tomllib
            doc = tomllib.loads(raw.decode("utf-8"))
        else:
            doc = json.loads(raw.decode("utf-8"))
        return cls.from_dict(doc)


# -- counting --------------------------------------------------------------------


def _key_sequence(traj: Trajectory, ref: Trajectory, cfg: BuildConfig) -> list[StateKey]:
    horizon_index = cfg.horizon_index
    if len(traj) <= horizon_index or len(ref) <= horizon_index:
        raise BuildError(
            f"trajectory covers {len(traj) - 1} steps, horizon needs {horizon_index}"
        )
    keys = []
    for i in range(horizon_index + 1):
        sample = traj.sample(i)
        score = deviation(sample, ref.sample(i), cfg.weights)
        cls = classify(score, cfg.thresholds)
        quant = quantize(sample, cfg.quantization) if cfg.variant == "C" else None
        keys.append(
            StateKey(
                time_index=i,
                classification=cls.value,
                quant=quant,
                disengaged=traj.disengaged_at(float(traj.t[i])),
                finish=(i == horizon_index),
            )
        )
    return keys


def build_counts(
    trajs: Sequence[Trajectory], ref: Trajectory, cfg: BuildConfig
) -> tuple[set[StateKey], CountTable, StateKey]:
    """Turn trajectories into layered state sequences and count transitions.

    The action on a step is ``disengage`` exactly where the sticky flag
    first rises, ``continue`` otherwise. All trajectories must agree on
    the launch-time state, which becomes the initial key.
    """
    if not trajs:
        raise BuildError("no trajectories")
    ref_grid = resample(ref, cfg.k)
    counts = CountTable()
    states: set[StateKey] = set()
    initial: StateKey | None = None
    for traj in trajs:
        grid = resample(traj, cfg.k)
        keys = _key_sequence(grid, ref_grid, cfg)
        if initial is None:
            initial = keys[0]
        elif keys[0] != initial:
            raise BuildError(
                "non-unique initial state: "
                f"{keys[0].state_id()} differs from {initial.state_id()}"
            )
        states.update(keys)
        for i in range(len(keys) - 1):
            was = grid.disengaged_at(float(grid.t[i]))
            now = grid.disengaged_at(float(grid.t[i + 1]))
            action = DISENGAGE if (not was and now) else CONTINUE
            counts.add(keys[i], action, keys[i + 1])
    assert initial is not None
    return states, counts, initial


# -- estimation --------------------------------------------------------------------


def estimate(counts: CountTable) -> dict[tuple[StateKey, str], dict[StateKey, Fraction]]:
    """Frequentist transition probabilities as exact rationals.

    Each observed (state, action) row is normalized by its total count;
    rows therefore sum to exactly one.
    """
    out: dict[tuple[StateKey, str], dict[StateKey, Fraction]] = {}
    for (src, action), row in counts.rows().items():
        total = sum(row.values())
        if total <= 0:
            raise BuildError(f"no data for ({src.state_id()}, {action})")
        out[(src, action)] = {
            dst: Fraction(n, total) for dst, n in sorted(row.items(), key=lambda kv: _sortable(kv[0])) if n
        }
    return out


# -- assembly ----------------------------------------------------------------------


def _sink_for(layer: int) -> StateKey:
    return StateKey(time_index=layer, classification=CUT, quant=None, disengaged=True, finish=False)


def _labels_for(key: StateKey) -> frozenset[str]:
    labels = set()
    if key.classification == Classification.GOOD.value:
        labels.add("GoodState")
    elif key.classification == Classification.BAD.value:
        labels.add("BadState")
    if key.disengaged:
        labels.add("Disengaged")
    if key.finish:
        labels.add("Finish")
    return frozenset(labels)


def _obs_signature(key: StateKey) -> str:
    """Observation class of a state under integer sensor readouts."""
    parts = []
    if key.quant is not None:
        parts.append("q" + ",".join(str(v) for v in key.quant))
    else:
        parts.append(key.classification)
    if key.disengaged:
        parts.append("D")
    if key.finish:
        parts.append("F")
    return "|".join(parts)


def assemble(
    states: Iterable[StateKey],
    probs: Mapping[tuple[StateKey, str], Mapping[StateKey, Fraction]],
    cfg: BuildConfig,
    initial: StateKey,
) -> ICGS:
    """Assemble the game structure for the configured variant.

    The Rocket owns continue/disengage; availability is data-driven unless
    ``always_allow_disengage`` synthesizes absorbing engine-cut branches.
    In stochastic variants the Environment has the single action ``tick``;
    in variant A it owns one branch action per successor. Terminal states
    (the finish layer and synthesized sinks) self-loop under all actions.
    """
    keys = set(states)
    horizon_index = cfg.horizon_index

    rocket_legal: dict[StateKey, list[str]] = {}
    rows: dict[tuple[StateKey, str], dict[StateKey, Fraction]] = {}

    data_actions: dict[StateKey, set[str]] = {}
    for (src, action) in probs:
        data_actions.setdefault(src, set()).add(action)

    def terminal(key: StateKey) -> bool:
        return key.finish or key.classification == CUT

    pending = deque(sorted(keys, key=_sortable))
    seen = set(pending)
    while pending:
        key = pending.popleft()
        if terminal(key):
            rocket_legal[key] = [CONTINUE]
            rows[(key, CONTINUE)] = {key: Fraction(1)}
            continue
        actions = sorted(data_actions.get(key, set()), key=[CONTINUE, DISENGAGE].index)
        if not actions:
            raise BuildError(f"state {key.state_id()} has no outgoing data")
        if cfg.always_allow_disengage and DISENGAGE not in actions:
            actions.append(DISENGAGE)
        rocket_legal[key] = actions
        for action in actions:
            if (key, action) in probs:
                rows[(key, action)] = dict(probs[(key, action)])
            else:  # synthesized engine cut into an absorbing sink
                sink = _sink_for(key.time_index + 1)
                rows[(key, action)] = {sink: Fraction(1)}
                if sink not in seen:
                    seen.add(sink)
                    keys.add(sink)
                    pending.append(sink)

    ordered = sorted(keys, key=_sortable)
    ids = {key: key.state_id() for key in ordered}
    state_ids = tuple(ids[key] for key in ordered)

    labels = {ids[key]: _labels_for(key) for key in ordered}

    # observation classes; variants A and B have perfect information
    if cfg.variant == "C":
        obs_rocket = {ids[key]: _obs_signature(key) for key in ordered}
        repairs: list[str] = []
        by_class: dict[str, list[StateKey]] = {}
        for key in ordered:
            by_class.setdefault(obs_rocket[ids[key]], []).append(key)
        for cls_id in sorted(by_class):
            members = by_class[cls_id]
            variants = {tuple(rocket_legal[key]) for key in members}
            if len(variants) <= 1:
                continue
            common = set.intersection(*(set(v) for v in variants))
            if common:
                dropped = False
                for key in members:
                    removed = [a for a in rocket_legal[key] if a not in common]
                    for action in removed:
                        del rows[(key, action)]
                        dropped = True
                    rocket_legal[key] = [a for a in rocket_legal[key] if a in common]
                if dropped:
                    repairs.append(f"class {cls_id}: legality intersected to {sorted(common)}")
            else:
                # split the class minimally by available-action set
                groups = sorted({tuple(rocket_legal[key]) for key in members})
                for key in members:
                    suffix = groups.index(tuple(rocket_legal[key]))
                    obs_rocket[ids[key]] = f"{cls_id}#{suffix}"
                repairs.append(f"class {cls_id}: split by action sets {groups}")
    else:
        obs_rocket = {sid: sid for sid in state_ids}
        repairs = []

    obs_env = {sid: sid for sid in state_ids}

    legal: dict[tuple[str, str], frozenset[str]] = {}
    trans: dict[tuple[str, tuple[str, ...]], Distribution] = {}

    if cfg.variant in ("B", "C"):
        actions = (CONTINUE, DISENGAGE, TICK)
        for key in ordered:
            sid = ids[key]
            legal[(sid, ROCKET)] = frozenset(rocket_legal[key])
            legal[(sid, ENVIRONMENT)] = frozenset([TICK])
            for action in rocket_legal[key]:
                dist = {ids[dst]: p for dst, p in rows[(key, action)].items()}
                trans[(sid, (action, TICK))] = Distribution(dist)
    else:  # variant A: Environment owns branch selection over row supports
        branch_count: dict[StateKey, int] = {}
        supports: dict[tuple[StateKey, str], list[StateKey]] = {}
        for key in ordered:
            width = 1
            for action in rocket_legal[key]:
                support = sorted(rows[(key, action)], key=_sortable)
                supports[(key, action)] = support
                width = max(width, len(support))
            branch_count[key] = width
        max_width = max(branch_count.values())
        branches = tuple(f"branch{j}" for j in range(max_width))
        actions = (CONTINUE, DISENGAGE) + branches
        for key in ordered:
            sid = ids[key]
            legal[(sid, ROCKET)] = frozenset(rocket_legal[key])
            legal[(sid, ENVIRONMENT)] = frozenset(branches[: branch_count[key]])
            for action in rocket_legal[key]:
                support = supports[(key, action)]
                for j in range(branch_count[key]):
                    target = support[j % len(support)]
                    trans[(sid, (action, branches[j]))] = Distribution.point(ids[target])

    meta = {
        "variant": cfg.variant,
        "k": cfg.k,
        "horizon": cfg.horizon,
        "always_allow_disengage": cfg.always_allow_disengage,
    }
    if repairs:
        meta["uniformity_repairs"] = repairs

    return ICGS(
        agents=(ROCKET, ENVIRONMENT),
        actions=actions,
        states=state_ids,
        initial=ids[initial],
        legal=legal,
        trans=trans,
        labels=labels,
        obs={ROCKET: obs_rocket, ENVIRONMENT: obs_env},
        props=PROPS,
        meta=meta,
    )


def build_model(trajs: Sequence[Trajectory], ref: Trajectory, cfg: BuildConfig) -> ICGS:
    """Full pipeline: count, estimate, assemble."""
    states, counts, initial = build_counts(trajs, ref, cfg)
    probs = estimate(counts)
    return assemble(states, probs, cfg, initial)


# -- DOT export ---------------------------------------------------------------------


def _gv_quote(s: str) -> str:
    return '"' + s.replace('"', '\\"') + '"'


def _node_label(state_id: str) -> str:
    key = StateKey.parse_id(state_id)
    if key is None:
        return state_id
    lines = [f"t={key.time_index}", key.classification]
    flags = []
    if key.disengaged:
        flags.append("Disengaged")
    if key.finish:
        flags.append("Finish")
    if flags:
        lines.append(",".join(flags))
    return "\\n".join(lines)


def export_dot(model: ICGS, probabilities: bool | None = None, name: str = "model") -> str:
    """Render a byte-stable DOT diagram of the layered transition graph.

    Probability annotations default to the variant convention: omitted for
    projected (variant A) models, shown as exact rationals otherwise.
    """
    if probabilities is None:
        probabilities = model.meta.get("variant") != "A"
    first_agent = model.agents[0] if model.agents else None

    lines = [f"digraph {name} {{", "  rankdir=TB;", '  node [shape=box];']
    for sid in model.states:
        shape = ' peripheries=2' if sid == model.initial else ""
        lines.append(f"  {_gv_quote(sid)} [label={_gv_quote(_node_label(sid))}{shape}];")
    edges = set()
    for sid in model.states:
        for move in model.joint_actions(sid):
            if (sid, move) not in model.trans:
                continue
            # single-action agents carry no information on the label
            visible = [
                a
                for agent, a in zip(model.agents, move)
                if len(model.legal_actions(sid, agent)) > 1 or agent == first_agent
            ]
            action_label = ",".join(visible) if visible else ",".join(move)
            if model.meta.get("variant") == "A":
                action_label = move[0]
            for dst, p in model.trans[(sid, move)].items():
                label = f"{action_label} / {p}" if probabilities else action_label
                edges.add((sid, dst, label))
    for src, dst, label in sorted(edges):
        lines.append(f"  {_gv_quote(src)} -> {_gv_quote(dst)} [label={_gv_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
