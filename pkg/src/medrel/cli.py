"""Command-line entry point: ``medrel {train,predict,rules,hybrid,eval,sweep}``.

Settings are resolved as command-line flags > ``--config`` file > defaults.
The config file holds flat ``key = value`` lines using the long flag names.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus as corpus_mod
from .corpus import AnnotationError, generate_candidates, load_corpus_dir, split_documents, write_relations
from .features import FeatureExtractor, load_lexicons, save_top_pos
from .hybrid import merge_predictions
from .metrics import EvalReport, evaluate
from .network import ModelFormatError, TrainConfig, TrainingError, load_model, save_model
from .pipeline import FittedSystem, fit, gold_labels, network_predictions, relabel, rule_predictions
from .rules import ParseGraphError, PatternError, VerbLexicon, load_parses, load_patterns, load_verb_lexicon

log = logging.getLogger("medrel")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_PATH = 3
EXIT_DATA = 4
EXIT_MODEL = 5
EXIT_RULES = 6
EXIT_TRAINING = 7

BUILTIN = "builtin"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    corpus: str | None = None
    model: str | None = None
    patterns: str | None = None
    verbs: str | None = None
    lexicons: str | None = None
    parses: str | None = None
    output: str | None = None
    predictions: str | None = None
    embeddings: str | None = None
    axis: str | None = None
    values: list = field(default_factory=list)
    test_fraction: float = 0.1
    average: str = "micro"
    keep_rule_trap: bool = False


# flag name -> (TrainConfig field or None for RunConfig, type)
_TRAIN_KEYS = {
    "seed": ("seed", int),
    "epochs": ("epochs", int),
    "neg_samples": ("neg_samples", int),
    "embedding_size": ("d_w", int),
    "hidden": ("lstm_hidden", int),
    "batch_size": ("batch_size", int),
    "learning_rate": ("learning_rate", float),
    "class_weights": ("class_weights", None),
}
_RUN_KEYS = {
    "corpus": str,
    "model": str,
    "patterns": str,
    "verbs": str,
    "lexicons": str,
    "parses": str,
    "output": str,
    "predictions": str,
    "embeddings": str,
    "axis": str,
    "values": None,
    "test_fraction": float,
    "average": str,
    "keep_rule_trap": None,
}


def _parse_bool(s) -> bool:
    if isinstance(s, bool):
        return s
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def _parse_values(s) -> list:
    if isinstance(s, list):
        return s
    try:
        return [int(v) for v in str(s).replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"sweep values must be integers: {s!r}") from None


def read_config_file(path: str | Path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        k = k.replace("-", "_")
        if k not in _TRAIN_KEYS and k not in _RUN_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {k!r}")
        out[k] = v
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    settings: dict = {}
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise FileNotFoundError(f"config file not found: {cfg_path}")
        settings.update(read_config_file(cfg_path))
    for k in list(_TRAIN_KEYS) + list(_RUN_KEYS):
        v = getattr(args, k, None)
        if v is not None:
            settings[k] = v

    train_kwargs = {}
    run = RunConfig()
    for k, v in settings.items():
        if k in _TRAIN_KEYS:
            name, typ = _TRAIN_KEYS[k]
            train_kwargs[name] = _parse_bool(v) if typ is None else typ(v)
        elif k == "values":
            run.values = _parse_values(v)
        elif k == "keep_rule_trap":
            run.keep_rule_trap = _parse_bool(v)
        else:
            setattr(run, k, _RUN_KEYS[k](v))
    try:
        run.train = TrainConfig(**train_kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return run


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _require(run: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(run, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _features_path(model_path: str | Path) -> Path:
    return Path(f"{model_path}.features.json")


def _lexicons(run: RunConfig):
    return load_lexicons(None if run.lexicons in (None, BUILTIN) else run.lexicons)


def _rule_artifacts(run: RunConfig):
    """Patterns and verb lexicon from the given files; None when neither is set."""
    if run.patterns is None and run.verbs is None:
        return None
    patterns = []
    if run.patterns is not None:
        patterns = load_patterns(None if run.patterns == BUILTIN else run.patterns)
    lex = VerbLexicon({})
    if run.verbs is not None:
        lex = load_verb_lexicon(None if run.verbs == BUILTIN else run.verbs)
    return patterns, lex


def _load_system(run: RunConfig) -> FittedSystem:
    model = load_model(run.model)
    feats = _features_path(run.model)
    if not feats.exists():
        raise ModelFormatError(f"feature file missing next to model: {feats}")
    return FittedSystem(model, FeatureExtractor.load(feats, _lexicons(run)), [])


def _print_report(report: EvalReport, out) -> None:
    print(report.to_table(), file=out)
    print(file=out)
    for line in report.to_lines():
        print(line, file=out)


def cmd_train(run: RunConfig, out=None) -> FittedSystem:
    """Fit features and the network on a corpus; save model, sidecars and log."""
    out = sys.stdout if out is None else out
    _require(run, "corpus", "model")
    corpus = load_corpus_dir(run.corpus)
    system = fit(corpus, run.train, _lexicons(run), run.embeddings)
    save_model(system.model, run.model)
    system.extractor.save(_features_path(run.model))
    save_top_pos(system.extractor.top_pos, f"{run.model}.toppos.txt")
    lines = [
        f"seed={run.train.seed}",
        f"config_hash={config_hash(run.train)}",
        f"config={json.dumps(dataclasses.asdict(run.train), sort_keys=True)}",
        f"corpus={json.dumps(corpus.counts(), sort_keys=True)}",
    ] + [f"epoch {i + 1} loss {v!r}" for i, v in enumerate(system.losses)]
    Path(f"{run.model}.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines), file=out)
    return system


def cmd_predict(run: RunConfig, out=None) -> dict:
    """Label every candidate pair with a saved model; write .rel files."""
    out = sys.stdout if out is None else out
    _require(run, "corpus", "model", "output")
    system = _load_system(run)
    corpus = load_corpus_dir(run.corpus)
    cands = generate_candidates(corpus)
    pred = network_predictions(system.model, system.extractor, cands)
    paths = write_relations(relabel(cands, pred), run.output)
    print(f"wrote {len(paths)} relation file(s) to {run.output}", file=out)
    return pred


def cmd_rules(run: RunConfig, out=None) -> dict:
    """Label candidate pairs with patterns and verb lexicon only."""
    out = sys.stdout if out is None else out
    _require(run, "corpus", "output")
    artifacts = _rule_artifacts(run)
    if artifacts is None:
        raise UsageError("rules needs --patterns and/or --verbs (use 'builtin' for the bundled files)")
    corpus = load_corpus_dir(run.corpus)
    parses = load_parses(run.parses, corpus) if run.parses else None
    cands = generate_candidates(corpus)
    pred = rule_predictions(cands, *artifacts, parses)
    paths = write_relations(relabel(cands, pred), run.output)
    print(f"wrote {len(paths)} relation file(s) to {run.output}", file=out)
    return pred


def cmd_hybrid(run: RunConfig, out=None) -> EvalReport:
    """Merge network and rule labels, then score against gold."""
    out = sys.stdout if out is None else out
    _require(run, "corpus", "model")
    system = _load_system(run)
    corpus = load_corpus_dir(run.corpus)
    cands = generate_candidates(corpus)
    nn = network_predictions(system.model, system.extractor, cands)
    artifacts = _rule_artifacts(run)
    rules = {}
    if artifacts is not None:
        parses = load_parses(run.parses, corpus) if run.parses else None
        rules = rule_predictions(cands, *artifacts, parses)
    exclude = () if run.keep_rule_trap else (corpus_mod.RelationLabel.TrAP,)
    merged = merge_predictions(nn, rules, exclude)
    if run.output:
        write_relations(relabel(cands, merged), run.output)
    report = evaluate(gold_labels(cands), merged, run.average)
    _print_report(report, out)
    return report


def cmd_eval(run: RunConfig, out=None) -> EvalReport:
    """Score a directory of predicted .rel files against gold."""
    out = sys.stdout if out is None else out
    _require(run, "corpus", "predictions")
    corpus = load_corpus_dir(run.corpus)
    pred_dir = Path(run.predictions)
    if not pred_dir.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_dir}")
    cands = generate_candidates(corpus)
    gold = gold_labels(cands)
    pred = corpus_mod.read_relation_keys(pred_dir, corpus)
    report = evaluate(gold, pred, run.average)
    _print_report(report, out)
    return report


SWEEP_AXES = {"neg_samples": "neg_samples", "embedding_size": "d_w"}


def cmd_sweep(run: RunConfig, out=None) -> list[tuple[int, EvalReport]]:
    """Train and evaluate once per value on a seeded document split.

    Row *i* trains with seed ``base + i``; the split always uses the base seed.
    """
    out = sys.stdout if out is None else out
    _require(run, "corpus", "axis")
    if run.axis not in SWEEP_AXES:
        raise UsageError(f"--axis must be one of {sorted(SWEEP_AXES)}")
    if not run.values:
        raise UsageError("--values must list at least one value")
    corpus = load_corpus_dir(run.corpus)
    train_c, test_c = split_documents(corpus, run.test_fraction, run.train.seed)
    test_cands = generate_candidates(test_c)
    gold = gold_labels(test_cands)
    rows = []
    header = f"{run.axis:>14}" + "".join(f"{lab.value + '.F':>9}" for lab in corpus_mod.POSITIVE_LABELS)
    header += f"{'P':>8}{'R':>8}{'F':>8}"
    lines = [header]
    for i, value in enumerate(run.values):
        cfg = dataclasses.replace(run.train, seed=run.train.seed + i, **{SWEEP_AXES[run.axis]: value})
        system = fit(train_c, cfg, _lexicons(run), run.embeddings)
        report = evaluate(gold, network_predictions(system.model, system.extractor, test_cands), run.average)
        rows.append((value, report))
        p, r, f = report.total_prf
        lines.append(
            f"{value:>14}"
            + "".join(f"{m.f:9.2f}" for m in report.per_class.values())
            + f"{p:8.2f}{r:8.2f}{f:8.2f}"
        )
    table = "\n".join(lines)
    print(table, file=out)
    if run.output:
        Path(run.output).write_text(table + "\n", encoding="utf-8")
    return rows


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "rules": cmd_rules,
    "hybrid": cmd_hybrid,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--corpus", help="corpus directory (flat or txt/concept/rel layout)")
    common.add_argument("--model", help="model file")
    common.add_argument("--patterns", help=f"phrase pattern file, or '{BUILTIN}'")
    common.add_argument("--verbs", help=f"verb lexicon file, or '{BUILTIN}'")
    common.add_argument("--lexicons", help="assertion lexicon directory")
    common.add_argument("--parses", help="directory of .dep parse files")
    common.add_argument("--output", help="output directory (or file for sweep)")
    common.add_argument("--predictions", help="directory of predicted .rel files")
    common.add_argument("--embeddings", help="pretrained word vectors, 'word v1 .. vd' per line")
    common.add_argument("--seed", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--neg-samples", dest="neg_samples", type=int)
    common.add_argument("--embedding-size", dest="embedding_size", type=int)
    common.add_argument("--hidden", type=int)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("--learning-rate", dest="learning_rate", type=float)
    common.add_argument(
        "--no-class-weights", dest="class_weights", action="store_const", const=False, default=None
    )
    common.add_argument("--average", choices=("micro", "macro"))
    common.add_argument(
        "--keep-rule-trap", dest="keep_rule_trap", action="store_const", const=True, default=None,
        help="let rule TrAP predictions override the network",
    )
    common.add_argument("--axis", choices=sorted(SWEEP_AXES))
    common.add_argument("--values", help="comma-separated sweep values")
    common.add_argument("--test-fraction", dest="test_fraction", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="medrel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or "").split("\n")[0] or None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        run = resolve_config(args)
        COMMANDS[args.command](run)
    except UsageError as exc:
        print(f"medrel: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"medrel: path error: {exc}", file=sys.stderr)
        return EXIT_PATH
    except ModelFormatError as exc:
        print(f"medrel: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (PatternError, ParseGraphError) as exc:
        print(f"medrel: rule error: {exc}", file=sys.stderr)
        return EXIT_RULES
    except AnnotationError as exc:
        print(f"medrel: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"medrel: training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
