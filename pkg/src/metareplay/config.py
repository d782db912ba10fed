"""Run configuration: strict parsing, validation, and experiment assembly.

Configs are JSON with nested sections. Unknown keys are rejected so a typo'd
hyperparameter can never silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .episodes import ReplaySchedule
from .learners import META_METHODS, METHODS, LearnerConfig
from .model import Classifier, ModelConfig
from .numerics import InputError, LossMode
from .stream import FeaturizerConfig, Suite, load_text_task, make_synthetic_suite

_REQUIRED = object()

# section -> key -> default (_REQUIRED means the key must be present)
_SCHEMA = {
    "method": _REQUIRED,
    "suite": {
        "kind": "BALANCED",
        "num_tasks": 5,
        "classes_per_task": 2,
        "examples_per_class": 1000,
        "test_per_class": 250,
        "input_dim": 10,
        "seed": 7,
        "separation": 4.0,
    },
    "dataset": {
        "train_files": _REQUIRED,
        "test_files": _REQUIRED,
        "featurizer": {"dim": 2048, "truncate": None, "l2_normalize": True},
    },
    "model": {
        "encoder_dims": [32],
        "architecture": None,  # derived from the method when omitted
        "nm_hidden_dim": 32,
        "loss_mode": "MULTICLASS_CE",
    },
    "schedule": {
        "batch_size": 16,
        "support_size": 5,
        "replay_interval": 1920,
        "replay_rate": 0.01,
    },
    "learning": {"inner_lr": 0.008, "outer_lr": 0.025, "epochs": 1},
    "memory": {"p_write": 1.0},
    "ablations": {"no_replay": False, "no_meta_test_finetune": False},
    "orders": None,  # list of task-order permutations; default: one identity order
    "seeds": [0, 1, 2],
    "combined_test": False,
    "record_alignment": False,
    "save_checkpoints": False,
}

_ARCH_FOR_METHOD = {
    "OML_ER": "OML",
    "ANML_ER": "ANML",
    "MAML_ER": "MAML",
    "SEQ": "OML",
    "REPLAY": "OML",
    "AGEM": "OML",
    "MTL": "OML",
}


def _apply_schema(raw: dict, schema: dict, path: str = "") -> dict:
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise InputError(f"unknown config key: {path}{key}")
        spec = schema[key]
        if isinstance(spec, dict) and isinstance(value, dict):
            out[key] = _apply_schema(value, spec, f"{path}{key}.")
        else:
            out[key] = value
    for key, spec in schema.items():
        if key in out:
            if isinstance(spec, dict) and not isinstance(out[key], dict):
                raise InputError(f"config key {path}{key} must be a mapping")
            continue
        if spec is _REQUIRED:
            raise InputError(f"missing required config key: {path}{key}")
        if isinstance(spec, dict):
            # Fill an absent section with its defaults, unless it contains
            # required keys (suite/dataset presence carries meaning).
            if not _has_required(spec):
                out[key] = _apply_schema({}, spec, f"{path}{key}.")
            continue
        out[key] = spec
    return out


def _has_required(schema: dict) -> bool:
    return any(v is _REQUIRED or (isinstance(v, dict) and _has_required(v))
               for v in schema.values())


@dataclass
class RunConfig:
    """Validated experiment configuration."""

    method: str
    model: ModelConfig
    learner: LearnerConfig
    orders: list
    seeds: list
    suite_spec: dict | None
    dataset_spec: dict | None
    combined_test: bool
    save_checkpoints: bool
    raw: dict

    @property
    def num_tasks(self) -> int:
        if self.suite_spec is not None:
            return self.suite_spec["num_tasks"]
        return len(self.dataset_spec["train_files"])


def parse_config(raw: dict) -> RunConfig:
    cfg = _apply_schema(raw, _SCHEMA)
    method = cfg["method"]
    if method not in METHODS:
        raise InputError(f"unknown method {method!r} (choose from {METHODS})")

    has_suite = "suite" in raw
    has_dataset = "dataset" in raw
    if has_suite == has_dataset:
        raise InputError("config needs exactly one of 'suite' or 'dataset'")
    suite_spec = _apply_schema(raw.get("suite", {}), _SCHEMA["suite"]) if has_suite else None
    dataset_spec = None
    if has_dataset:
        dataset_spec = _apply_schema(raw["dataset"], _SCHEMA["dataset"])
        dataset_spec["featurizer"] = _apply_schema(
            dataset_spec.get("featurizer", {}), _SCHEMA["dataset"]["featurizer"])
        if len(dataset_spec["train_files"]) != len(dataset_spec["test_files"]):
            raise InputError("train_files and test_files must pair up per task")

    schedule = ReplaySchedule(
        batch_size=cfg["schedule"]["batch_size"],
        support_size=cfg["schedule"]["support_size"],
        replay_interval=cfg["schedule"]["replay_interval"],
        replay_rate=cfg["schedule"]["replay_rate"],
    )
    epochs = cfg["learning"]["epochs"]
    if method != "MTL" and epochs != 1:
        raise InputError("continual methods force epochs=1 (single pass)")
    learner = LearnerConfig(
        method=method,
        schedule=schedule,
        inner_lr=cfg["learning"]["inner_lr"],
        outer_lr=cfg["learning"]["outer_lr"],
        p_write=cfg["memory"]["p_write"],
        no_replay=cfg["ablations"]["no_replay"],
        no_meta_test_finetune=cfg["ablations"]["no_meta_test_finetune"],
        epochs=epochs,
        record_alignment=cfg["record_alignment"],
    )

    if suite_spec is not None:
        input_dim = suite_spec["input_dim"]
        num_classes = suite_spec["num_tasks"] * suite_spec["classes_per_task"]
        num_tasks = suite_spec["num_tasks"]
    else:
        input_dim = dataset_spec["featurizer"]["dim"]
        num_classes = None  # determined after loading
        num_tasks = len(dataset_spec["train_files"])

    arch = cfg["model"]["architecture"] or _ARCH_FOR_METHOD[method]
    model = ModelConfig(
        input_dim=input_dim,
        encoder_dims=tuple(cfg["model"]["encoder_dims"]),
        num_classes=num_classes if num_classes is not None else 2,
        architecture=arch,
        nm_hidden_dim=cfg["model"]["nm_hidden_dim"],
        loss_mode=LossMode[cfg["model"]["loss_mode"]],
    )

    orders = cfg["orders"] or [list(range(num_tasks))]
    for order in orders:
        if sorted(order) != list(range(num_tasks)):
            raise InputError(f"order {order} is not a permutation of {num_tasks} tasks")

    return RunConfig(
        method=method,
        model=model,
        learner=learner,
        orders=[list(o) for o in orders],
        seeds=list(cfg["seeds"]),
        suite_spec=suite_spec,
        dataset_spec=dataset_spec,
        combined_test=cfg["combined_test"],
        save_checkpoints=cfg["save_checkpoints"],
        raw=raw,
    )


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(raw)


def build_suite(run_config: RunConfig) -> Suite:
    """Materialize the task suite (synthetic or from dataset files)."""
    if run_config.suite_spec is not None:
        s = run_config.suite_spec
        return make_synthetic_suite(
            kind=s["kind"],
            num_tasks=s["num_tasks"],
            classes_per_task=s["classes_per_task"],
            examples_per_class=s["examples_per_class"],
            input_dim=s["input_dim"],
            seed=s["seed"],
            test_per_class=s["test_per_class"],
            separation=s["separation"],
        )
    d = run_config.dataset_spec
    feat = FeaturizerConfig(
        dim=d["featurizer"]["dim"],
        truncate=d["featurizer"]["truncate"],
        l2_normalize=d["featurizer"]["l2_normalize"],
    )
    train = [load_text_task(p, i, feat) for i, p in enumerate(d["train_files"])]
    test = [load_text_task(p, i, feat) for i, p in enumerate(d["test_files"])]
    return Suite(train, test, meta={"dataset": d})


def build_model(run_config: RunConfig, suite: Suite) -> Classifier:
    config = run_config.model
    if run_config.dataset_spec is not None and config.loss_mode == LossMode.MULTICLASS_CE:
        config = ModelConfig(
            input_dim=config.input_dim,
            encoder_dims=config.encoder_dims,
            num_classes=suite.num_classes,
            architecture=config.architecture,
            nm_hidden_dim=config.nm_hidden_dim,
            loss_mode=config.loss_mode,
        )
    return Classifier(config)
