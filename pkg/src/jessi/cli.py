"""Command-line entry point.

    jessi <synth|train|eval|stability|ablate> --config PATH [--out DIR] [--runs N] [--seed N]

Exit status: 0 on success, 2 for configuration or input validation errors,
3 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .evaluation import (
    EvalData,
    ablation_csv,
    ablation_variants,
    accuracy_by_length,
    length_csv,
    prf1,
    prf_csv,
    run_ablation,
    run_stability,
    stability_csv,
    stability_variants,
    to_json,
)
from .model import load_model, save_model
from .tensor import RngStream
from .text import (
    DOMAIN_SOURCE,
    DOMAIN_TARGET,
    DatasetParseError,
    EmbeddingFormatError,
    encode,
    load_dataset,
    synth_generate,
    tokenize,
    write_dataset,
)
from .training import Ensemble, ensemble_predict, ensemble_select, kfold_train, prepare_resources

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
MANIFEST = "ensemble.json"

log = logging.getLogger("jessi")


class RunError(RuntimeError):
    pass


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _output_dir(cfg: RunConfig | None, out: str | None, fallback: Path | None = None) -> Path:
    target = Path(out).resolve() if out else (cfg.output_dir if cfg else None) or fallback
    if target is None:
        raise ConfigError("no output directory: set outputDir or pass --out")
    if target.exists() and not target.is_dir():
        raise ConfigError(f"output path is not a directory: {target}")
    return target


def _make_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc.strerror or exc}") from None
    probe = path / ".jessi-write-test"
    try:
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory is not writable: {path}: {exc.strerror or exc}") from None


def _apply_seed(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is not None:
        cfg.train_config = replace(cfg.train_config, seed=seed)
    return cfg


def _test_domain(subtask: str) -> str:
    return DOMAIN_SOURCE if subtask == "A" else DOMAIN_TARGET


def _load_inputs(cfg: RunConfig, need_test: bool = False) -> EvalData:
    """Read every configured dataset up front so bad input fails before training."""
    tc = cfg.train_config
    needed = ["train", "trialA" if tc.early_stop_trial == DOMAIN_SOURCE else "trialB"]
    if tc.model.domain_adversarial:
        needed += ["trialA", "trialB"]
    if need_test:
        needed.append("test")
    cfg.require(*dict.fromkeys(needed))
    train = load_dataset(cfg.path("train"), DOMAIN_SOURCE, labeled=True)
    trials = {}
    for key, dom in (("trialA", DOMAIN_SOURCE), ("trialB", DOMAIN_TARGET)):
        if cfg.path(key):
            trials[dom] = load_dataset(cfg.path(key), dom, labeled=True)
    test = []
    if need_test:
        test = load_dataset(cfg.path("test"), _test_domain(cfg.subtask), labeled=True)
    return EvalData(train, trials, test)


def _check_embeddings(cfg: RunConfig, data: EvalData) -> None:
    # parse the embedding files now so format errors count as input errors
    if cfg.train_config.model.branches.include_cnn_branch:
        prepare_resources(cfg.train_config, data.train, data.trials)


# ----------------------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig, out: str | None) -> int:
    out_dir = _output_dir(cfg, out)
    _make_dir(out_dir)
    corpus = synth_generate(cfg.synth, RngStream(cfg.train_config.seed).child("synth"))
    for name, examples in corpus.splits().items():
        write_dataset(out_dir / f"{name}.csv", examples)
        n_pos = sum(ex.label for ex in examples)
        print(f"{name}: {len(examples)} sentences, {n_pos} suggestions")
    return EXIT_OK


def cmd_train(cfg: RunConfig, out: str | None) -> int:
    data = _load_inputs(cfg)
    _check_embeddings(cfg, data)
    out_dir = _output_dir(cfg, out)
    _make_dir(out_dir)
    tc = cfg.train_config
    resources = prepare_resources(tc, data.train, data.trials)
    models = kfold_train(tc, data.train, data.trials, resources)
    scores = [tm.best_f1 for tm in models]
    ensemble = ensemble_select(list(range(len(models))), scores, tc.top_k)
    for k, tm in enumerate(models):
        record = tm.record()
        save_model(out_dir / f"fold_{k:02d}.ckpt", tm.model, tm.vocab,
                   {"fold": k, "subtask": cfg.subtask, "seed": tc.seed})
        _write(out_dir / f"fold_{k:02d}.json", to_json(record))
        print(f"fold {k}: epochs={record['epochs']} bestF1={tm.best_f1:.4f}")
    manifest = {
        "subtask": cfg.subtask,
        "seed": tc.seed,
        "folds": tc.folds,
        "topK": tc.top_k,
        "selection": "trial F1, ties to the lower fold index",
        "candidates": [{"fold": k, "score": s} for k, s in enumerate(scores)],
        "members": [{"fold": k, "checkpoint": f"fold_{k:02d}.ckpt", "score": scores[k]}
                    for k in ensemble.members],
    }
    _write(out_dir / MANIFEST, to_json(manifest))
    print(f"ensemble folds: {', '.join(str(k) for k in ensemble.members)}")
    return EXIT_OK


def load_ensemble(manifest_path: Path) -> tuple[Ensemble, dict]:
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        entries = manifest["members"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"unreadable ensemble manifest {manifest_path}: {exc}") from None
    members, scores, vocabs = [], [], []
    for entry in entries:
        ckpt = manifest_path.parent / entry["checkpoint"]
        if not ckpt.is_file():
            raise RunError(f"missing member checkpoint: {ckpt}")
        model, vocab, _ = load_model(ckpt)
        members.append(model)
        vocabs.append(vocab)
        scores.append(entry["score"])
    return Ensemble(members, scores, [e["fold"] for e in entries]), {"vocabs": vocabs, **manifest}


def cmd_eval(cfg: RunConfig | None, manifest: str | None, data_path: str | None, out: str | None) -> int:
    if manifest is None:
        if cfg is None or cfg.output_dir is None:
            raise ConfigError("eval needs --manifest or a config with outputDir")
        manifest_path = cfg.output_dir / MANIFEST
    else:
        manifest_path = Path(manifest).resolve()
    if not manifest_path.is_file():
        raise ConfigError(f"manifest not found: {manifest_path}")
    if data_path is None:
        if cfg is None or cfg.path("test") is None:
            raise ConfigError("eval needs --data or a config with a test path")
        data = cfg.path("test")
    else:
        data = Path(data_path).resolve()
    if not data.is_file():
        raise ConfigError(f"data file not found: {data}")
    out_dir = _output_dir(cfg, out, fallback=manifest_path.parent)
    _make_dir(out_dir)

    ensemble, info = load_ensemble(manifest_path)
    examples = load_dataset(data, _test_domain(info.get("subtask", "A")), labeled=True)
    gold = np.array([ex.label for ex in examples])
    # each member encodes with its own vocabulary
    votes = []
    for model, vocab in zip(ensemble.members, info["vocabs"]):
        votes.append(model.predict(encode(examples, vocab, model.cfg.max_len)))
    pred = ensemble_predict(Ensemble([_Fixed(v) for v in votes], ensemble.scores, ensemble.indices), examples)
    p, r, f1 = prf1(pred, gold)
    lengths = [tokenize(ex.sentence).n for ex in examples]
    report = accuracy_by_length(pred, gold, lengths, 10)
    _write(out_dir / "eval_report.json", to_json({"P": p, "R": r, "F1": f1, "n": len(examples),
                                                   "members": ensemble.indices}))
    _write(out_dir / "eval_report.csv", prf_csv(p, r, f1, len(examples)))
    _write(out_dir / "length_report.json", to_json(report.as_dict()))
    _write(out_dir / "length_report.csv", length_csv(report))
    print(f"P={p:.4f} R={r:.4f}")
    print(f"F1={f1:.4f}")
    return EXIT_OK


class _Fixed:
    """A voter that replays precomputed predictions."""

    def __init__(self, votes):
        self.votes = votes

    def predict(self, examples):
        return self.votes


def cmd_stability(cfg: RunConfig, out: str | None, runs: int | None) -> int:
    runs = cfg.runs if runs is None else runs
    if runs < 2:
        raise ConfigError(f"stability needs at least 2 runs, got {runs}")
    data = _load_inputs(cfg)
    _check_embeddings(cfg, data)
    out_dir = _output_dir(cfg, out)
    _make_dir(out_dir)
    data.test = data.trials[cfg.train_config.early_stop_trial]
    rows = run_stability(stability_variants(cfg.subtask), cfg.train_config, data, runs)
    _write(out_dir / "stability.json", to_json({"runs": runs, "subtask": cfg.subtask,
                                                 "rows": [r.as_dict() for r in rows]}))
    _write(out_dir / "stability.csv", stability_csv(rows))
    sys.stdout.write(stability_csv(rows))
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, out: str | None) -> int:
    data = _load_inputs(cfg, need_test=True)
    _check_embeddings(cfg, data)
    out_dir = _output_dir(cfg, out)
    _make_dir(out_dir)
    rows = run_ablation(ablation_variants(cfg.subtask), cfg.train_config, data)
    _write(out_dir / "ablation.json", to_json({"subtask": cfg.subtask, "rows": [r.as_dict() for r in rows]}))
    _write(out_dir / "ablation.csv", ablation_csv(rows))
    sys.stdout.write(ablation_csv(rows))
    return EXIT_RUNTIME if any(r.error for r in rows) else EXIT_OK


# ----------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jessi", description="Suggestion-mining models: train, ensemble, evaluate.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("synth", "write a synthetic two-domain corpus"),
                            ("train", "k-fold training plus the top-k ensemble manifest"),
                            ("eval", "score an ensemble on a labeled CSV"),
                            ("stability", "min/max/mean/std of F1 over repeated seeds"),
                            ("ablate", "ablation table for the configured subtask")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=name != "eval", help="key=value run configuration")
        p.add_argument("--out", help="output directory (overrides outputDir)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        if name == "stability":
            p.add_argument("--runs", type=int, help="seeds per variant (default: config runs)")
        if name == "eval":
            p.add_argument("--manifest", help="ensemble manifest written by train")
            p.add_argument("--data", help="labeled CSV to score")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None:
            _apply_seed(cfg, args.seed)
        if args.command == "synth":
            return cmd_synth(cfg, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.out)
        if args.command == "eval":
            return cmd_eval(cfg, args.manifest, args.data, args.out)
        if args.command == "stability":
            return cmd_stability(cfg, args.out, args.runs)
        return cmd_ablate(cfg, args.out)
    except (ConfigError, DatasetParseError, EmbeddingFormatError) as exc:
        print(f"jessi: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("run failed", exc_info=True)
        print(f"jessi: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
