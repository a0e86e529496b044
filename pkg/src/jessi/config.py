"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment. Relative paths resolve against
the directory holding the config file. Unknown keys are errors.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .encoders import BISRU, CNN_MAXPOOL, BranchConfig, ModelConfig
from .text import DOMAIN_SOURCE, DOMAIN_TARGET, SynthSpec
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(x) for x in s.replace(",", " ").split())


def _opt_float(s: str):
    return None if s.strip().lower() in ("none", "off", "") else float(s)


# key -> (target, field, parser); target "train" or "model" or "branch" or "run"
TRAIN_KEYS = {
    "batchSize": ("train", "batch_size", int),
    "domainBatchSize": ("train", "domain_batch_size", int),
    "maxEpochs": ("train", "max_epochs", int),
    "patience": ("train", "patience", int),
    "folds": ("train", "folds", int),
    "topK": ("train", "top_k", int),
    "lambdaGamma": ("train", "lambda_gamma", float),
    "earlyStopTrial": ("train", "early_stop_trial", str),
    "minFrequency": ("train", "min_frequency", int),
    "seed": ("train", "seed", int),
    "precision": ("train", "precision", str),
    "dropoutRate": ("model", "dropout", float),
    "maxNorm": ("model", "max_norm", _opt_float),
    "dimG": ("model", "dim_g", int),
    "dimC": ("model", "dim_c", int),
    "filterSizes": ("model", "filter_sizes", _ints),
    "filterChannels": ("model", "filter_channels", int),
    "attentionWidth": ("model", "attention_width", int),
    "sruHidden": ("model", "sru_hidden", int),
    "sruLayers": ("model", "sru_layers", int),
    "dModel": ("model", "d_model", int),
    "nLayers": ("model", "n_layers", int),
    "nHeads": ("model", "n_heads", int),
    "dFf": ("model", "d_ff", int),
    "maxLen": ("model", "max_len", int),
    "mlpHidden": ("model", "mlp_hidden", int),
    "trainableEmbeddings": ("model", "trainable_embeddings", _bool),
    "domainAdversarial": ("model", "domain_adversarial", _bool),
    "bertSentenceEncoder": ("branch", "bert_sentence_encoder", str),
    "includeCnnBranch": ("branch", "include_cnn_branch", _bool),
    "includeBertBranch": ("branch", "include_bert_branch", _bool),
}

RUN_KEYS = {
    "subtask": str,
    "train": str, "trialA": str, "trialB": str, "test": str,
    "embeddingsG": str, "embeddingsC": str, "bertWeights": str, "outputDir": str,
    "runs": int,
    "synthTrain": int, "synthTrial": int, "synthTest": int, "synthPositiveRate": float,
}

PATH_KEYS = ("train", "trialA", "trialB", "test", "embeddingsG", "embeddingsC", "bertWeights")

PRESETS = {
    "A": dict(bert_sentence_encoder=CNN_MAXPOOL, domain_adversarial=False, early_stop_trial=DOMAIN_SOURCE),
    "B": dict(bert_sentence_encoder=BISRU, domain_adversarial=True, early_stop_trial=DOMAIN_TARGET),
}


@dataclass
class RunConfig:
    train_config: TrainConfig
    subtask: str = "A"
    paths: dict = field(default_factory=dict)
    output_dir: Path | None = None
    runs: int = 10
    synth: SynthSpec = field(default_factory=SynthSpec)
    source: Path | None = None

    def path(self, key: str) -> Path | None:
        return self.paths.get(key)

    def require(self, *keys: str) -> None:
        """Fail unless every named input path is configured and readable."""
        for key in keys:
            p = self.paths.get(key)
            if p is None:
                raise ConfigError(f"config key {key!r} is required for this command")
        self.check_paths()

    def check_paths(self) -> None:
        for key, p in self.paths.items():
            if not p.is_file():
                raise ConfigError(f"{key}: file not found: {p}")
            if not os.access(p, os.R_OK):
                raise ConfigError(f"{key}: file not readable: {p}")


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in TRAIN_KEYS and key not in RUN_KEYS:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        out[key] = value
    return out


def build_config(values: dict[str, str], base_dir: Path | None = None, source: str = "<config>") -> RunConfig:
    base_dir = Path(base_dir or ".")
    subtask = values.get("subtask", "A").strip().upper()
    if subtask not in PRESETS:
        raise ConfigError(f"{source}: subtask must be A or B, got {subtask!r}")
    preset = PRESETS[subtask]
    sections: dict[str, dict] = {
        "train": {"early_stop_trial": preset["early_stop_trial"]},
        "model": {"domain_adversarial": preset["domain_adversarial"]},
        "branch": {"bert_sentence_encoder": preset["bert_sentence_encoder"]},
    }
    run: dict = {}
    for key, value in values.items():
        try:
            if key in TRAIN_KEYS:
                target, name, parse = TRAIN_KEYS[key]
                sections[target][name] = parse(value)
            elif key != "subtask":
                run[key] = RUN_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None

    try:
        branches = BranchConfig(**sections["branch"]).validate()
        model = ModelConfig(branches=branches, **sections["model"])
        tc = TrainConfig(model=model, **sections["train"]).validate()
        synth = SynthSpec(
            n_train=run.get("synthTrain", SynthSpec.n_train),
            n_trial=run.get("synthTrial", SynthSpec.n_trial),
            n_test=run.get("synthTest", SynthSpec.n_test),
            positive_rate=run.get("synthPositiveRate", SynthSpec.positive_rate),
        )
        synth.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None

    runs = run.get("runs", 10)
    if runs < 2:
        raise ConfigError(f"{source}: runs must be at least 2, got {runs}")
    paths = {k: (base_dir / run[k]).resolve() for k in PATH_KEYS if k in run}
    tc = replace(tc, embeddings_g=_str(paths.get("embeddingsG")), embeddings_c=_str(paths.get("embeddingsC")),
                 bert_weights=_str(paths.get("bertWeights")))
    out_dir = (base_dir / run["outputDir"]).resolve() if "outputDir" in run else None
    return RunConfig(tc, subtask, paths, out_dir, runs, synth)


def _str(p):
    return None if p is None else str(p)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    cfg = build_config(parse_lines(text, str(path)), path.parent, str(path))
    cfg.source = path
    return cfg
