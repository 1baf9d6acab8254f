"""Experiment configuration files (JSON)."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from ..controller import ControlConfig
from ..ddpg import LearnerConfig
from ..network import BehaviorParams, Network
from .scenarios import SCENARIOS, get_scenario

CONFIG_FORMAT = "tollrl.experiment/1"
OUTPUT_ROOT_ENV = "TOLLRL_OUTPUT_ROOT"


def _pick(cls, doc: dict, what: str):
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError(f"unknown {what} fields {sorted(unknown)}")
    return cls(**doc)


@dataclass
class ExperimentConfig:
    scenario: str = "parallel"
    behavior: dict = field(default_factory=dict)     # overrides of the scenario's BehaviorParams
    control: ControlConfig = field(default_factory=ControlConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    methods: list = field(default_factory=lambda: ["dp_ddpg"])
    seed: int = 0
    out_dir: str = "runs"

    def validate(self, base_dir: str = ".") -> None:
        if self.scenario not in SCENARIOS:
            path = os.path.join(base_dir, self.scenario)
            if not os.path.exists(path):
                raise FileNotFoundError(f"scenario file {self.scenario!r} not found")
        unknown = set(self.behavior) - {f.name for f in fields(BehaviorParams)}
        if unknown:
            raise ValueError(f"unknown behavior fields {sorted(unknown)}")
        from ..baselines import METHODS
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
        self.control.validate()

    def to_dict(self) -> dict:
        learner = asdict(self.learner)
        learner["hidden"] = list(learner["hidden"])
        return {"format": CONFIG_FORMAT, "scenario": self.scenario, "behavior": dict(self.behavior),
                "control": asdict(self.control), "learner": learner,
                "methods": list(self.methods), "seed": self.seed, "out_dir": self.out_dir}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if doc.get("format") != CONFIG_FORMAT:
            raise ValueError(f"unsupported config format {doc.get('format')!r}")
        learner = dict(doc.get("learner", {}))
        if "hidden" in learner:
            learner["hidden"] = tuple(learner["hidden"])
        return cls(scenario=doc.get("scenario", "parallel"), behavior=dict(doc.get("behavior", {})),
                   control=_pick(ControlConfig, doc.get("control", {}), "control"),
                   learner=_pick(LearnerConfig, learner, "learner"),
                   methods=list(doc.get("methods", ["dp_ddpg"])), seed=int(doc.get("seed", 0)),
                   out_dir=doc.get("out_dir", "runs"))

    def build_network(self, base_dir: str = ".") -> Network:
        ref = self.scenario if self.scenario in SCENARIOS else os.path.join(base_dir, self.scenario)
        net = get_scenario(ref)
        return net.with_params(**self.behavior) if self.behavior else net

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        cfg = ExperimentConfig.from_dict(json.load(fh))
    cfg.validate(os.path.dirname(os.path.abspath(path)))
    return cfg


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def resolve_out_dir(out: str) -> str:
    """Relative output paths are placed under ``$TOLLRL_OUTPUT_ROOT`` when it is set."""
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(out):
        return os.path.join(root, out)
    return out
