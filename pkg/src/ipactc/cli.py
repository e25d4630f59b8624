"""Operator command-line surface.

Subcommands compose the library into the usual workflows: phone-set
construction, synthetic data generation, training, cross-lingual
adaptation, decoding, scoring, and the named trend experiments.

Exit codes: 0 success, 1 usage error, 2 data/model error.  Every command
that writes files also writes a reproducibility manifest (full arguments,
seed, input hashes) next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from . import adaptation as adapt
from . import corpus
from . import experiments as exp
from . import network as net
from . import phoneset as ps
from .adaptation import Strategy
from .ctc import CtcInstance, ctc_log_likelihood
from .decode import (
    greedy_decode,
    label_error_rate,
    read_decode_output,
    write_decode_output,
    write_score_report,
)
from .numerics import Rng, derive_seed
from .training import TrainConfig, run_training


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for child in sorted(p.rglob("*")):
                if child.is_file():
                    out[str(child)] = _sha256(child)
        elif p.is_file():
            out[str(p)] = _sha256(p)
    return out


def _write_run_manifest(path, args: argparse.Namespace, inputs) -> None:
    record = {
        "tool": "ipactc",
        "version": __version__,
        "command": args.command,
        "arguments": {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")
        },
        "input_sha256": _hash_inputs(inputs),
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(record, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_phoneset_merge(args) -> int:
    maps = []
    for path in args.maps:
        loaded = ps.load_phone_set(path)
        for lang in loaded.languages:
            maps.append(ps.LanguagePhoneMap(lang, loaded.language_symbols(lang)))
    universal = ps.merge_phone_sets(maps)
    ps.save_phone_set(args.out, universal)
    _write_run_manifest(str(args.out) + ".run.json", args, args.maps)
    print(f"merged {len(maps)} language maps into {universal.num_symbols} symbols")
    return 0


def _cmd_phoneset_coverage(args) -> int:
    universal = ps.load_phone_set(args.set)
    target_set = ps.load_phone_set(args.target)
    languages = [args.target_lang] if args.target_lang else list(target_set.languages)
    for lang in languages:
        target = ps.LanguagePhoneMap(lang, target_set.language_symbols(lang))
        report = ps.coverage(universal, target)
        print(
            f"{lang}: covered {report.covered_count}/{len(target.phones)}; "
            f"unseen: {' '.join(report.unseen) if report.unseen else '-'}"
        )
    return 0


def _load_world_spec(path) -> tuple[list[corpus.SyntheticLanguageSpec], int, tuple[float, float]]:
    with open(path, encoding="utf-8") as f:
        spec = json.load(f)
    feature_dim = int(spec.get("feature_dim", 8))
    split = tuple(spec.get("split_fractions", (0.6, 0.2)))
    maps = [
        ps.LanguagePhoneMap(entry["language_id"], tuple(entry["phones"]))
        for entry in spec["languages"]
    ]
    langs = []
    for entry, m in zip(spec["languages"], maps):
        known = {f.name for f in fields(corpus.SyntheticLanguageSpec)}
        extra = set(entry) - known - {"phones"}
        if extra:
            raise _UsageError(f"unknown world-spec keys {sorted(extra)}")
        kwargs = {k: v for k, v in entry.items() if k not in ("language_id", "phones")}
        for key in ("phones_per_utterance", "frames_per_phone"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        langs.append(
            corpus.SyntheticLanguageSpec(language_id=m.language_id, phones=m, **kwargs)
        )
    return langs, feature_dim, split


def _cmd_data_gen(args) -> int:
    specs, feature_dim, split_fractions = _load_world_spec(args.spec)
    universal = ps.merge_phone_sets([s.phones for s in specs])
    bank = corpus.build_prototype_bank(
        universal, feature_dim, Rng(derive_seed(args.seed, "bank"))
    )
    dataset = corpus.Dataset()
    for spec in specs:
        utts = corpus.generate_language(
            spec, bank, universal, Rng(derive_seed(args.seed, "gen", spec.language_id))
        )
        utts = corpus.normalize_per_speaker(utts)
        part = corpus.split_by_speaker(
            utts,
            Rng(derive_seed(args.seed, "split", spec.language_id)),
            fractions=split_fractions,
        )
        dataset.train += part.train
        dataset.val += part.val
        dataset.test += part.test
    corpus.save_dataset(args.out, dataset, universal)
    _write_run_manifest(Path(args.out) / "run_manifest.json", args, [args.spec])
    print(
        f"wrote {len(dataset.train)}/{len(dataset.val)}/{len(dataset.test)} "
        f"train/val/test utterances to {args.out}"
    )
    return 0


_TRAIN_FLAGS = (
    ("learning_rate", float),
    ("momentum", float),
    ("batch_size", int),
    ("max_epochs", int),
    ("patience", int),
    ("dropout_rate", float),
    ("clip_norm", float),
    ("threads", int),
)


def _train_config_from_args(args, seed: int, **overrides) -> TrainConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            file_values = json.load(f)
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise _UsageError(f"unknown config keys {sorted(unknown)}")
        values.update(file_values)
    for name, _ in _TRAIN_FLAGS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if getattr(args, "lhuc", False):
        values["lhuc_enabled"] = True
    values["seed"] = seed
    values.update(overrides)
    return TrainConfig(**values)


def _select_languages(dataset: corpus.Dataset, langs) -> corpus.Dataset:
    if not langs:
        return dataset
    keep = set(langs)
    return corpus.Dataset(
        train=[u for u in dataset.train if u.language_id in keep],
        val=[u for u in dataset.val if u.language_id in keep],
        test=[u for u in dataset.test if u.language_id in keep],
    )


def _merged_subset(universal: ps.UniversalPhoneSet, langs) -> ps.UniversalPhoneSet:
    maps = [ps.LanguagePhoneMap(l, universal.language_symbols(l)) for l in langs]
    return ps.merge_phone_sets(maps)


def _cmd_train(args) -> int:
    dataset, data_set = corpus.load_dataset(args.data)
    langs = args.langs.split(",") if args.langs else list(data_set.languages)
    dataset = _select_languages(dataset, langs)
    if not dataset.train or not dataset.val:
        raise ValueError(f"no train/val utterances for languages {langs}")
    model_set = _merged_subset(data_set, langs)
    train = corpus.reencode_utterances(dataset.train, data_set, model_set)
    val = corpus.reencode_utterances(dataset.val, data_set, model_set)
    config = _train_config_from_args(args, args.seed)
    feature_dim = train[0].features.shape[1]
    model = net.init_model(
        net.ModelConfig(feature_dim, args.hidden, args.layers),
        model_set.num_symbols,
        model_set.version,
        Rng(derive_seed(args.seed, "init")),
        languages=tuple(langs) if config.lhuc_enabled else (),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    best, reports = run_training(model, train, val, config, log_path=out / "train.log")
    elapsed = time.time() - t0
    net.save_checkpoint(out / "model.ckpt", best, model_set, args.seed)
    _write_run_manifest(out / "run_manifest.json", args,
                        [args.data] + ([args.config] if args.config else []))
    best_val = min(r.mean_val_loss for r in reports) if reports else float("nan")
    print(
        f"trained {len(reports)} epochs in {elapsed:.1f}s; "
        f"best val loss {best_val:.4f}; checkpoint at {out / 'model.ckpt'}"
    )
    return 0


def _cmd_adapt(args) -> int:
    source_model, source_set, _ = net.load_checkpoint(args.source)
    dataset, data_set = corpus.load_dataset(args.data)
    lang = args.target_lang
    if lang not in data_set.languages:
        raise ValueError(f"language {lang!r} not present in {args.data}")
    dataset = _select_languages(dataset, [lang])
    if not dataset.train or not dataset.val:
        raise ValueError(f"no train/val utterances for language {lang!r}")
    target_map = ps.LanguagePhoneMap(lang, data_set.language_symbols(lang))
    strategy = Strategy(args.strategy)
    surgery_rng = Rng(derive_seed(args.seed, "surgery"))
    if strategy is Strategy.EXTEND_ALL:
        target_set, index_map = ps.extend(source_set, target_map)
        adapted = adapt.extend_output_layer(
            source_model, source_set, target_set, index_map, surgery_rng,
            provenance=_sha256(args.source),
        )
    else:
        target_set = ps.merge_phone_sets([target_map])
        adapted = adapt.replace_output_layer(
            source_model, target_set, strategy is Strategy.REPLACE_FROZEN, surgery_rng,
            provenance=_sha256(args.source),
        )
    train = corpus.reencode_utterances(dataset.train, data_set, target_set)
    if args.fraction < 1.0:
        train = corpus.subset_utterances(
            train, args.fraction, Rng(derive_seed(args.seed, "subset"))
        )
    val = corpus.reencode_utterances(dataset.val, data_set, target_set)
    config = _train_config_from_args(
        args, args.seed, freeze_mask=adapted.plan.freeze_mask
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    best, reports = run_training(
        adapted.model, train, val, config, log_path=out / "train.log"
    )
    elapsed = time.time() - t0
    net.save_checkpoint(out / "model.ckpt", best, target_set, args.seed)
    adapt.write_adaptation_manifest(
        out / "model.ckpt.adapt.json",
        adapted,
        source_checkpoint_hash=adapted.provenance,
        source_version=source_set.version,
        target_version=target_set.version,
    )
    _write_run_manifest(out / "run_manifest.json", args,
                        [args.source, args.data] + ([args.config] if args.config else []))
    print(
        f"adapted ({strategy.value}) for {len(reports)} epochs in {elapsed:.1f}s; "
        f"checkpoint at {out / 'model.ckpt'}"
    )
    return 0


def _cmd_decode(args) -> int:
    model, model_set, _ = net.load_checkpoint(args.model)
    dataset, data_set = corpus.load_dataset(args.data)
    utts = dataset.split(args.split)
    if args.langs:
        keep = set(args.langs.split(","))
        utts = [u for u in utts if u.language_id in keep]
    items = []
    for u in utts:
        language = u.language_id if args.lhuc and u.language_id in model.lhuc else None
        allowed = model_set.per_language.get(u.language_id) if args.restrict else None
        fwd = net.network_forward(u.features, model, language_id=language)
        hyp = greedy_decode(fwd.log_probs, allowed_indices=allowed)
        items.append((u.utt_id, [model_set.symbols[i] for i in hyp]))
    write_decode_output(args.out, items)
    _write_run_manifest(str(args.out) + ".run.json", args, [args.model, args.data])
    print(f"decoded {len(items)} utterances to {args.out}")
    return 0


def _cmd_score(args) -> int:
    dataset, data_set = corpus.load_dataset(args.data)
    refs = {
        u.utt_id: ([data_set.symbols[i] for i in u.labels], u.language_id)
        for u in dataset.split(args.split)
    }
    hyps = read_decode_output(args.hyp)
    missing = sorted(set(hyps) - set(refs))
    if missing:
        raise ValueError(f"hypotheses for unknown utterances: {missing[:5]}")
    by_lang: dict[str, list] = {}
    pooled = []
    for utt_id, hyp in hyps.items():
        ref, lang = refs[utt_id]
        by_lang.setdefault(lang, []).append((ref, hyp))
        pooled.append((ref, hyp))
    if not pooled:
        raise ValueError("no scored utterances")
    per_language = {lang: label_error_rate(pairs) for lang, pairs in by_lang.items()}
    overall = label_error_rate(pooled)
    write_score_report(args.out, per_language, overall)
    _write_run_manifest(str(args.out) + ".run.json", args, [args.data, args.hyp])
    for lang in sorted(per_language):
        print(f"{lang}\tLER {per_language[lang]:.2f}")
    print(f"overall\tLER {overall:.2f}")
    return 0


def _cmd_experiment(args) -> int:
    if args.quick:
        profile = exp.QUICK_PROFILE
    else:
        profile = exp.ExperimentProfile(
            seeds=tuple(derive_seed(args.seed, "experiment-seed", i) for i in range(3))
        )
    if args.threads:
        profile = replace(profile, threads=args.threads)
    t0 = time.time()
    report = exp.run_experiment(args.name, profile)
    tsv_path, verdict_path = exp.write_report(report, args.out)
    _write_run_manifest(Path(args.out) / f"{report.name}.run.json", args, [])
    print(f"{report.name}: {'PASS' if report.passed else 'FAIL'} "
          f"({time.time() - t0:.0f}s); results in {tsv_path} and {verdict_path}")
    return 0 if report.passed else 2


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="ipactc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ipactc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phoneset-merge", help="merge language phone files into one set")
    p.add_argument("--maps", nargs="+", required=True, help="phone-set files to merge")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_phoneset_merge)

    p = sub.add_parser("phoneset-coverage", help="report phone coverage of a target")
    p.add_argument("--set", required=True, help="universal phone-set file")
    p.add_argument("--target", required=True, help="phone-set file of the target")
    p.add_argument("--target-lang", help="only this language from the target file")
    p.set_defaults(func=_cmd_phoneset_coverage)

    p = sub.add_parser("data-gen", help="generate a synthetic multilingual dataset")
    p.add_argument("--spec", required=True, help="world spec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_data_gen)

    def add_train_flags(p):
        p.add_argument("--config", help="JSON file with training config keys")
        for name, typ in _TRAIN_FLAGS:
            p.add_argument(f"--{name.replace('_', '-')}", type=typ, dest=name)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--langs", help="comma-separated language subset")
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lhuc", action="store_true", help="language-adaptive LHUC training")
    add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("adapt", help="adapt a trained model to a target language")
    p.add_argument("--strategy", required=True,
                   choices=[s.value for s in Strategy])
    p.add_argument("--source", required=True, help="source checkpoint")
    p.add_argument("--target-lang", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--fraction", type=float, default=1.0,
                   help="fraction of the target train split to use")
    add_train_flags(p)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("decode", help="greedy-decode a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--langs", help="comma-separated language subset")
    p.add_argument("--lhuc", action="store_true", help="route LHUC by utterance language")
    p.add_argument("--restrict", action="store_true",
                   help="restrict decoding to each utterance's language inventory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("score", help="score a decode output against references")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--hyp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("experiment", help="run a named trend experiment")
    p.add_argument("--name", required=True, choices=list(exp.EXPERIMENT_NAMES))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--quick", action="store_true",
                   help="smoke-test profile: one seed, small data, few epochs")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # data/model errors
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
