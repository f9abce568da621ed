"""Trajectories, predicate schemas, robustness precomputation and the
synthetic reach-avoid environment."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InputError, ParseError
from .wstl import Feature, Literal, PredicateSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    label: int
    id: str

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] < 2:
            raise InputError(f"trajectory {self.id!r}: need an (H+1, n) state array with H >= 1")
        if self.label not in (1, -1):
            raise InputError(f"trajectory {self.id!r}: label must be 1 or -1, got {self.label!r}")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def to_json(self) -> dict:
        return {"id": self.id, "label": self.label, "states": self.states.tolist()}


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass
class Schema:
    """State layout plus the predicate vocabulary."""

    state_dim: int
    slices: dict[str, tuple[int, int]]
    predicates: list[PredicateSpec]
    bounds_from_data: bool = False

    def to_json(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "slices": {k: list(v) for k, v in self.slices.items()},
            "bounds_from_data": self.bounds_from_data,
            "predicates": [p.to_json() for p in self.predicates],
        }

    def predicate(self, pid: str) -> PredicateSpec:
        for p in self.predicates:
            if p.id == pid:
                return p
        raise KeyError(pid)


def _resolve_feature(obj: dict, slices: dict[str, tuple[int, int]]) -> Feature:
    kind = obj.get("kind")
    if "args" in obj:
        return Feature(kind, tuple(obj["args"]))
    if kind in ("distance", "proximity"):
        a, b = obj["between"]
        try:
            sa, sb = slices[a], slices[b]
        except KeyError as e:
            raise ConfigError(f"unknown state slice {e.args[0]!r}") from None
        if sa[1] - sa[0] != sb[1] - sb[0]:
            raise ConfigError(f"slices {a!r} and {b!r} differ in size")
        return Feature(kind, (*sa, *sb))
    if kind == "coordinate":
        index = obj["index"]
        if isinstance(index, str):
            name, _, offset = index.partition(".")
            index = slices[name][0] + int(offset or 0)
        return Feature(kind, (int(index),))
    raise ConfigError(f"unknown feature map {kind!r}")


def schema_from_json(obj: dict, data: Sequence[Trajectory] | None = None) -> Schema:
    slices = {k: (int(v[0]), int(v[1])) for k, v in obj.get("slices", {}).items()}
    from_data = bool(obj.get("bounds_from_data", False))
    preds = []
    for p in obj["predicates"]:
        feature = _resolve_feature(p["feature"], slices)
        if from_data and ("sup" not in p or "inf" not in p):
            if not data:
                raise ConfigError(f"predicate {p['id']!r}: bounds_from_data needs a dataset")
            inf_f, sup_f = data_bounds(feature, data)
        else:
            inf_f, sup_f = float(p["inf"]), float(p["sup"])
        preds.append(PredicateSpec(str(p["id"]), feature, float(p["c"]), sup_f, inf_f))
    ids = [p.id for p in preds]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate predicate ids in schema")
    return Schema(int(obj["state_dim"]), slices, preds, from_data)


def load_schema(path, data: Sequence[Trajectory] | None = None) -> Schema:
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"schema file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"schema {path}: {e}") from None
    return schema_from_json(obj, data)


def save_schema(path, schema: Schema) -> None:
    Path(path).write_text(json.dumps(schema.to_json(), indent=2) + "\n")


def data_bounds(feature: Feature, data: Sequence[Trajectory], margin: float = 0.05) -> tuple[float, float]:
    """Feature range over a dataset, widened by ``margin`` of its span on each side."""
    values = np.concatenate([feature(t.states) for t in data])
    lo, hi = float(values.min()), float(values.max())
    pad = margin * max(hi - lo, 1e-12)
    return lo - pad, hi + pad


def literals_for(predicates: Sequence[PredicateSpec]) -> list[Literal]:
    """Positive literals followed by their negations, in declared order."""
    return [Literal(p) for p in predicates] + [Literal(p, True) for p in predicates]


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------

def load_dataset(path, schema: Schema | None = None) -> list[Trajectory]:
    """Read a JSON Lines trajectory file, sorted by id."""
    out = []
    dim = schema.state_dim if schema is not None else None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                states = np.asarray(rec["states"], dtype=float)
                label = rec["label"]
                tid = str(rec["id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"malformed record ({e})", lineno) from None
            if label not in (1, -1) or isinstance(label, bool):
                raise ParseError(f"unknown label {label!r}", lineno)
            if states.ndim != 2:
                raise ParseError("states must be a list of equal-length vectors", lineno)
            if dim is None:
                dim = states.shape[1]
            elif states.shape[1] != dim:
                raise ParseError(f"state dimension {states.shape[1]} != {dim}", lineno)
            try:
                out.append(Trajectory(states, int(label), tid))
            except InputError as e:
                raise ParseError(str(e), lineno) from None
    out.sort(key=lambda t: t.id)
    return out


def save_dataset(path, data: Iterable[Trajectory]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in data:
            fh.write(json.dumps(t.to_json(), separators=(",", ":")) + "\n")


def export_csv(path, data: Iterable[Trajectory]) -> None:
    data = list(data)
    dim = data[0].dim if data else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "t"] + [f"s{i}" for i in range(dim)])
        for traj in data:
            for t, s in enumerate(traj.states):
                writer.writerow([traj.id, traj.label, t] + [repr(float(x)) for x in s])


# ---------------------------------------------------------------------------
# Robustness precomputation
# ---------------------------------------------------------------------------

def precompute_robustness(data: Sequence[Trajectory], literals: Sequence[Literal]) -> np.ndarray:
    """Robustness tensor of shape ``(trajectory, literal, timestep)``.

    Trajectories shorter than the longest one are padded with NaN.
    """
    if not data:
        return np.zeros((0, len(literals), 0))
    t_max = max(t.states.shape[0] for t in data)
    out = np.full((len(data), len(literals), t_max), np.nan)
    signals: dict[str, np.ndarray] = {}
    preds = {lit.predicate.id: lit.predicate for lit in literals}
    for b, traj in enumerate(data):
        for pid, pred in preds.items():
            raw = pred.feature(traj.states)
            bad = np.flatnonzero(~np.isfinite(raw))
            if bad.size:
                raise InputError(
                    f"predicate {pid!r}: non-finite feature value in trajectory {traj.id!r} at timestep {bad[0]}"
                )
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                signals[pid] = pred.normalize(raw)
            for w in caught:
                warnings.warn(f"trajectory {traj.id!r}: {w.message}", w.category, stacklevel=2)
        n = traj.states.shape[0]
        for k, lit in enumerate(literals):
            sig = signals[lit.predicate.id]
            out[b, k, :n] = -sig if lit.negated else sig
    return out


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

@dataclass
class DatasetSplit:
    train: list[Trajectory]
    test: list[Trajectory]
    split_fraction: float
    seed: int


def stratified_split(data: Sequence[Trajectory], fraction: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Per-label shuffled split; each class contributes ``round(fraction * n)`` to train."""
    if not data:
        raise InputError("cannot split an empty dataset")
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in (1, -1):
        members = [t for t in data if t.label == label]
        if not members:
            warnings.warn(f"no trajectories with label {label}", RuntimeWarning, stacklevel=2)
            continue
        order = rng.permutation(len(members))
        k = int(math.floor(fraction * len(members) + 0.5))
        train += [members[i] for i in order[:k]]
        test += [members[i] for i in order[k:]]
    train.sort(key=lambda t: t.id)
    test.sort(key=lambda t: t.id)
    return DatasetSplit(train, test, fraction, seed)


# ---------------------------------------------------------------------------
# Synthetic reach-avoid environment
# ---------------------------------------------------------------------------

@dataclass
class ReachAvoidConfig:
    half_width: float = 1.0
    goal: tuple[float, float] = (0.6, 0.6)
    goal_radius: float = 0.1
    hazard: tuple[float, float] = (-0.2, -0.1)
    hazard_radius: float = 0.45
    step: float = 0.1
    horizon: int = 50
    n_positive: int = 500
    n_negative: int = 500
    seed: int = 0
    heading_noise: float = 0.15
    start_clearance: float = 0.5

    def check(self) -> None:
        hw = self.half_width
        if hw <= 0 or self.step <= 0 or self.horizon < 1:
            raise ConfigError("half_width, step and horizon must be positive")
        if self.goal_radius <= 0 or self.hazard_radius <= 0:
            raise ConfigError("region radii must be positive")
        for name, (x, y), r in (("goal", self.goal, self.goal_radius), ("hazard", self.hazard, self.hazard_radius)):
            if abs(x) + r > hw or abs(y) + r > hw:
                raise ConfigError(f"{name} region does not fit inside the arena")
        gap = math.dist(self.goal, self.hazard)
        if gap <= self.goal_radius + self.hazard_radius:
            raise ConfigError("goal and hazard regions overlap")
        if self.n_positive < 0 or self.n_negative < 0:
            raise ConfigError("class counts must be non-negative")


def reach_avoid_schema(cfg: ReachAvoidConfig = ReachAvoidConfig(), irrelevant: bool = True) -> Schema:
    """Predicates for the reach-avoid arena.

    ``goal`` and ``hazard`` hold when the agent is within the region radius.
    With ``irrelevant`` an extra ``gh`` predicate on the (fixed) goal-hazard
    distance is added; it is true on every state of every trajectory.
    """
    diag = 2.0 * math.sqrt(2.0) * cfg.half_width
    slices = {"agent": (0, 2), "goal": (2, 4), "hazard": (4, 6)}
    preds = [
        PredicateSpec("goal", Feature("proximity", (0, 2, 2, 4)), -cfg.goal_radius, 0.0, -diag),
        PredicateSpec("hazard", Feature("proximity", (0, 2, 4, 6)), -cfg.hazard_radius, 0.0, -diag),
    ]
    if irrelevant:
        gap = math.dist(cfg.goal, cfg.hazard)
        preds.append(PredicateSpec("gh", Feature("distance", (2, 4, 4, 6)), 0.5 * gap, diag, 0.0))
    return Schema(6, slices, preds)


def _sample_start(rng, cfg: ReachAvoidConfig) -> np.ndarray:
    hw = cfg.half_width
    while True:
        p = rng.uniform(-hw, hw, size=2)
        if (math.dist(p, cfg.hazard) > cfg.hazard_radius + cfg.step
                and math.dist(p, cfg.goal) > max(cfg.start_clearance, cfg.goal_radius)):
            return p


def _steer(p, cfg: ReachAvoidConfig, rng) -> np.ndarray:
    goal = np.asarray(cfg.goal)
    hz = np.asarray(cfg.hazard)
    to_goal = goal - p
    d = float(np.linalg.norm(to_goal))
    if d <= cfg.step:
        return goal.copy()
    heading = to_goal / d
    rel = p - hz
    dh = float(np.linalg.norm(rel))
    buffer = cfg.hazard_radius + 2.5 * cfg.step
    if dh < buffer:
        radial = rel / dh
        tangent = np.array([-radial[1], radial[0]])
        if tangent @ heading < 0:
            tangent = -tangent
        inward = heading @ radial
        if inward < 0:
            heading = heading - inward * radial + 0.6 * tangent
        # closer than the buffer: push outward in proportion to the intrusion
        heading = heading + (buffer - dh) / (2.5 * cfg.step) * radial
        heading = heading / np.linalg.norm(heading)
    angle = rng.normal(0.0, cfg.heading_noise)
    c, s = math.cos(angle), math.sin(angle)
    heading = np.array([c * heading[0] - s * heading[1], s * heading[0] + c * heading[1]])
    return np.clip(p + cfg.step * heading, -cfg.half_width, cfg.half_width)


def _rollout_positive(rng, cfg: ReachAvoidConfig) -> np.ndarray | None:
    p = _sample_start(rng, cfg)
    path = [p]
    for _ in range(cfg.horizon):
        p = _steer(p, cfg, rng)
        path.append(p)
    path = np.asarray(path)
    if math.dist(path[-1], cfg.goal) > cfg.goal_radius:
        return None
    if np.min(np.linalg.norm(path - np.asarray(cfg.hazard), axis=1)) <= cfg.hazard_radius:
        return None
    return path


def _rollout_negative(rng, cfg: ReachAvoidConfig) -> np.ndarray:
    p = _sample_start(rng, cfg)
    steps = rng.uniform(-cfg.step, cfg.step, size=(cfg.horizon, 2))
    path = [p]
    for delta in steps:
        p = np.clip(p + delta, -cfg.half_width, cfg.half_width)
        path.append(p)
    return np.asarray(path)


def _with_objects(path: np.ndarray, cfg: ReachAvoidConfig) -> np.ndarray:
    objs = np.tile(np.r_[cfg.goal, cfg.hazard], (path.shape[0], 1))
    return np.hstack([path, objs])


def generate_reach_avoid(cfg: ReachAvoidConfig = ReachAvoidConfig()) -> tuple[list[Trajectory], dict]:
    """Labeled reach-avoid rollouts plus a manifest of what was generated.

    Positives come from a scripted walker that heads for the goal, bends
    around the hazard and stops at the goal centre; rollouts that fail either
    condition are redrawn, so every positive ends inside the goal.  Negatives
    are uniform random-walk steps clipped to the arena.
    """
    cfg.check()
    rng = np.random.default_rng(cfg.seed)
    data: list[Trajectory] = []
    rejected = 0
    width = len(str(max(cfg.n_positive, cfg.n_negative, 1) - 1))
    for i in range(cfg.n_positive):
        while True:
            path = _rollout_positive(rng, cfg)
            if path is not None:
                break
            rejected += 1
            if rejected > 100 * max(cfg.n_positive, 1):
                raise ConfigError("walker cannot reach the goal within the horizon for this geometry")
        data.append(Trajectory(_with_objects(path, cfg), 1, f"pos-{i:0{width}d}"))
    neg_goal = neg_hazard = 0
    for i in range(cfg.n_negative):
        path = _rollout_negative(rng, cfg)
        neg_goal += bool(np.any(np.linalg.norm(path - np.asarray(cfg.goal), axis=1) <= cfg.goal_radius))
        neg_hazard += bool(np.any(np.linalg.norm(path - np.asarray(cfg.hazard), axis=1) <= cfg.hazard_radius))
        data.append(Trajectory(_with_objects(path, cfg), -1, f"neg-{i:0{width}d}"))
    manifest = {
        "generator": "reach_avoid",
        "params": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()},
        "counts": {"positive": cfg.n_positive, "negative": cfg.n_negative},
        "positive_rejections": rejected,
        "negative_goal_fraction": neg_goal / cfg.n_negative if cfg.n_negative else 0.0,
        "negative_hazard_fraction": neg_hazard / cfg.n_negative if cfg.n_negative else 0.0,
    }
    log.info("generated %d+%d reach-avoid trajectories", cfg.n_positive, cfg.n_negative)
    return data, manifest
