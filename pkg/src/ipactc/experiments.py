"""Named synthetic trend experiments.

Each experiment builds a seeded synthetic multilingual world, trains the
relevant systems, and reports label error rates (LER) plus a directional
trend verdict.  The reports measure synthetic-data LER trends only; the
absolute numbers carry no meaning outside this toolkit.

The world has five languages drawn over one shared prototype bank with
engineered inventory overlaps:

  lang1/lang2/lang3   the multilingual seed languages
  lang4               adaptation target, mostly covered by the seed set
  lang5               second target sharing two phones only with lang4,
                      so a seed model extended through lang4 covers more
                      of it than the plain three-language seed

Experiment presets (also exposed by the CLI):

  table1-trend     monolingual vs multilingual vs multilingual+LHUC
  fig2-curve       adaptation strategies across training-data fractions
  table2-coverage  adapting from seeds with different phone coverage
  table3-dropout   dropout during adaptation and from-scratch training
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median

from . import adaptation as adapt
from . import corpus
from . import phoneset as ps
from .adaptation import Strategy
from .decode import greedy_decode, label_error_rate
from .network import Model, ModelConfig, init_model, network_forward
from .numerics import Rng, derive_seed
from .training import TrainConfig, run_training

EXPERIMENT_NAMES = ("table1-trend", "fig2-curve", "table2-coverage", "table3-dropout")

LANG_PHONES: dict[str, tuple[str, ...]] = {
    "lang1": ("a", "e", "i", "o", "u", "p", "t", "k", "m", "n", "s", "l"),
    "lang2": ("a", "e", "i", "o", "p", "t", "k", "m", "n", "s", "r", "d"),
    "lang3": ("a", "e", "i", "u", "t", "k", "n", "s", "l", "f", "b", "g"),
    "lang4": ("a", "e", "i", "o", "u", "t", "k", "m", "s", "l", "r", "f", "ʃ", "ʒ"),
    "lang5": ("a", "e", "i", "o", "t", "k", "n", "s", "ʃ", "ʒ", "θ", "ð"),
}
SEED_LANGS = ("lang1", "lang2", "lang3")


@dataclass(frozen=True)
class ExperimentProfile:
    """Desk-scale sizes; every run finishes in seconds to minutes."""

    seeds: tuple[int, ...] = (11, 23, 47)
    feature_dim: int = 8
    hidden_size: int = 12
    num_layers: int = 1
    utterances_per_language: int = 200
    target_utterances: int = 300
    speaker_count: int = 10
    phones_per_utterance: tuple[int, int] = (3, 7)
    frames_per_phone: tuple[int, int] = (2, 5)
    accent_offset_scale: float = 1.8
    noise_std: float = 0.5
    speaker_offset_scale: float = 0.3
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 8
    max_epochs: int = 25
    patience: int = 4
    adapt_max_epochs: int = 40
    adapt_patience: int = 6
    dropout_rate: float = 0.2
    threads: int = 1


QUICK_PROFILE = ExperimentProfile(
    seeds=(11,),
    utterances_per_language=60,
    target_utterances=80,
    speaker_count=6,
    max_epochs=6,
    patience=2,
    adapt_max_epochs=8,
    adapt_patience=2,
)


@dataclass
class World:
    profile: ExperimentProfile
    seed: int
    maps: dict[str, ps.LanguagePhoneMap]
    universal_all: ps.UniversalPhoneSet
    bank: corpus.PhonePrototypeBank
    datasets: dict[str, corpus.Dataset]


def build_world(profile: ExperimentProfile, seed: int) -> World:
    """Deterministic five-language world for one experiment seed."""
    maps = {lang: ps.LanguagePhoneMap(lang, phones) for lang, phones in LANG_PHONES.items()}
    universal_all = ps.merge_phone_sets(list(maps.values()))
    bank = corpus.build_prototype_bank(
        universal_all, profile.feature_dim, Rng(derive_seed(seed, "bank"))
    )
    datasets = {}
    for lang in LANG_PHONES:
        count = (
            profile.target_utterances
            if lang in ("lang4", "lang5")
            else profile.utterances_per_language
        )
        spec = corpus.SyntheticLanguageSpec(
            language_id=lang,
            phones=maps[lang],
            utterance_count=count,
            phones_per_utterance=profile.phones_per_utterance,
            frames_per_phone=profile.frames_per_phone,
            accent_offset_scale=profile.accent_offset_scale,
            noise_std=profile.noise_std,
            speaker_count=profile.speaker_count,
            speaker_offset_scale=profile.speaker_offset_scale,
        )
        utts = corpus.generate_language(
            spec, bank, universal_all, Rng(derive_seed(seed, "gen", lang))
        )
        utts = corpus.normalize_per_speaker(utts)
        datasets[lang] = corpus.split_by_speaker(
            utts, Rng(derive_seed(seed, "split", lang)), fractions=(0.6, 0.2)
        )
    return World(
        profile=profile,
        seed=seed,
        maps=maps,
        universal_all=universal_all,
        bank=bank,
        datasets=datasets,
    )


reencode = corpus.reencode_utterances


def _model_config(profile: ExperimentProfile) -> ModelConfig:
    return ModelConfig(
        feature_dim=profile.feature_dim,
        hidden_size=profile.hidden_size,
        num_layers=profile.num_layers,
    )


def _train_config(profile, seed_key, *, lhuc=False, dropout=0.0, freeze_mask=None,
                  adapt=False) -> TrainConfig:
    return TrainConfig(
        learning_rate=profile.learning_rate,
        momentum=profile.momentum,
        batch_size=profile.batch_size,
        max_epochs=profile.adapt_max_epochs if adapt else profile.max_epochs,
        patience=profile.adapt_patience if adapt else profile.patience,
        dropout_rate=dropout,
        lhuc_enabled=lhuc,
        seed=seed_key,
        freeze_mask=freeze_mask,
        threads=profile.threads,
    )


def train_multilingual(
    world: World, langs: tuple[str, ...], lhuc: bool, seed: int, dropout: float = 0.0
) -> tuple[Model, ps.UniversalPhoneSet]:
    """Joint model over several languages; optional language-adaptive LHUC."""
    p = world.profile
    uni = ps.merge_phone_sets([world.maps[l] for l in langs])
    train, val = [], []
    for lang in langs:
        ds = world.datasets[lang]
        train += reencode(ds.train, world.universal_all, uni)
        val += reencode(ds.val, world.universal_all, uni)
    model = init_model(
        _model_config(p),
        uni.num_symbols,
        uni.version,
        Rng(derive_seed(seed, "init-multi", *langs, int(lhuc))),
        languages=langs if lhuc else (),
    )
    cfg = _train_config(
        p, derive_seed(seed, "train-multi", *langs, int(lhuc)), lhuc=lhuc, dropout=dropout
    )
    best, _ = run_training(model, train, val, cfg)
    return best, uni


def train_scratch(
    world: World, lang: str, seed: int, fraction: float = 1.0, dropout: float = 0.0
) -> tuple[Model, ps.UniversalPhoneSet]:
    """Monolingual model trained from scratch on a fraction of the data."""
    p = world.profile
    uni = ps.merge_phone_sets([world.maps[lang]])
    ds = world.datasets[lang]
    train = reencode(ds.train, world.universal_all, uni)
    # one subset stream per (seed, lang): fractions nest
    train = corpus.subset_utterances(train, fraction, Rng(derive_seed(seed, "subset", lang)))
    val = reencode(ds.val, world.universal_all, uni)
    model = init_model(
        _model_config(p), uni.num_symbols, uni.version, Rng(derive_seed(seed, "init-mono", lang))
    )
    cfg = _train_config(
        p,
        derive_seed(seed, "train-mono", lang, f"f{fraction}", f"d{dropout}"),
        dropout=dropout,
        adapt=True,
    )
    best, _ = run_training(model, train, val, cfg)
    return best, uni


def adapt_from(
    source_model: Model,
    source_set: ps.UniversalPhoneSet,
    world: World,
    lang: str,
    strategy: Strategy,
    seed: int,
    fraction: float = 1.0,
    dropout: float = 0.0,
) -> tuple[Model, ps.UniversalPhoneSet]:
    """Adapt a trained model to a target language and fine-tune it."""
    p = world.profile
    surgery_rng = Rng(derive_seed(seed, "surgery", lang, strategy.value))
    if strategy is Strategy.EXTEND_ALL:
        ext_set, index_map = ps.extend(source_set, world.maps[lang])
        adapted = adapt.extend_output_layer(
            source_model, source_set, ext_set, index_map, surgery_rng
        )
        uni = ext_set
    else:
        uni = ps.merge_phone_sets([world.maps[lang]])
        adapted = adapt.replace_output_layer(
            source_model, uni, strategy is Strategy.REPLACE_FROZEN, surgery_rng
        )
    ds = world.datasets[lang]
    train = reencode(ds.train, world.universal_all, uni)
    train = corpus.subset_utterances(train, fraction, Rng(derive_seed(seed, "subset", lang)))
    val = reencode(ds.val, world.universal_all, uni)
    cfg = _train_config(
        p,
        derive_seed(seed, "train-adapt", lang, strategy.value, f"f{fraction}", f"d{dropout}"),
        dropout=dropout,
        freeze_mask=adapted.plan.freeze_mask,
        adapt=True,
    )
    best, _ = run_training(adapted.model, train, val, cfg)
    return best, uni


def test_ler(
    model: Model, model_set: ps.UniversalPhoneSet, world: World, lang: str,
    lhuc: bool = False,
) -> float:
    """Greedy-decode LER on the language's test split, compared as symbols.

    Decoding is restricted to the language's inventory when the model's
    phone set registers it, mirroring language-specific decoding graphs.
    """
    allowed = model_set.per_language.get(lang)
    pairs = []
    for u in world.datasets[lang].test:
        fwd = network_forward(u.features, model, language_id=lang if lhuc else None)
        hyp_idx = greedy_decode(fwd.log_probs, allowed_indices=allowed)
        hyp = [model_set.symbols[i] for i in hyp_idx]
        ref = [world.universal_all.symbols[i] for i in u.labels]
        pairs.append((ref, hyp))
    return label_error_rate(pairs)


# ---------------------------------------------------------------------------
# experiment runners


@dataclass
class ExperimentReport:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    checks: list[tuple[str, bool]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks)

    def medians(self, key_cols: tuple[str, ...], value_col: str = "ler") -> dict:
        """Median of value_col over seeds, grouped by the key columns."""
        ki = [self.columns.index(c) for c in key_cols]
        vi = self.columns.index(value_col)
        groups: dict[tuple, list[float]] = {}
        for row in self.rows:
            if row[self.columns.index("seed")] == "median":
                continue
            groups.setdefault(tuple(row[i] for i in ki), []).append(row[vi])
        return {k: median(v) for k, v in groups.items()}

    def append_median_rows(self, key_cols: tuple[str, ...]) -> dict:
        med = self.medians(key_cols)
        ki = {c: self.columns.index(c) for c in key_cols}
        si = self.columns.index("seed")
        vi = self.columns.index("ler")
        for key, value in med.items():
            row = [""] * len(self.columns)
            for c, part in zip(key_cols, key):
                row[ki[c]] = part
            row[si] = "median"
            row[vi] = value
            self.rows.append(row)
        return med


def run_table1(profile: ExperimentProfile, include_mono: bool = True) -> ExperimentReport:
    """Monolingual vs plain multilingual vs multilingual with LHUC."""
    report = ExperimentReport("table1-trend", ["system", "language", "seed", "ler"])
    for seed in profile.seeds:
        world = build_world(profile, seed)
        multi, multi_set = train_multilingual(world, SEED_LANGS, lhuc=False, seed=seed)
        adapted, adapted_set = train_multilingual(world, SEED_LANGS, lhuc=True, seed=seed)
        for lang in SEED_LANGS:
            if include_mono:
                mono, mono_set = train_scratch(world, lang, seed)
                report.rows.append(["mono", lang, seed, test_ler(mono, mono_set, world, lang)])
            report.rows.append(["multi", lang, seed, test_ler(multi, multi_set, world, lang)])
            report.rows.append(
                ["multi+lhuc", lang, seed, test_ler(adapted, adapted_set, world, lang, lhuc=True)]
            )
    med = report.append_median_rows(("system", "language"))
    wins = sum(
        1 for lang in SEED_LANGS if med[("multi+lhuc", lang)] <= med[("multi", lang)]
    )
    report.checks.append(
        (f"LHUC median LER <= plain multilingual on {wins}/3 languages (need >= 2)", wins >= 2)
    )
    return report


def run_fig2(
    profile: ExperimentProfile, fractions: tuple[float, ...] = (0.01, 0.05, 0.25)
) -> ExperimentReport:
    """Adaptation strategies vs from-scratch across training-data fractions."""
    report = ExperimentReport("fig2-curve", ["system", "fraction", "seed", "ler"])
    strategies = (Strategy.REPLACE_FROZEN, Strategy.REPLACE_ALL, Strategy.EXTEND_ALL)
    for seed in profile.seeds:
        world = build_world(profile, seed)
        ml3, ml3_set = train_multilingual(world, SEED_LANGS, lhuc=False, seed=seed)
        for fraction in fractions:
            scratch, scratch_set = train_scratch(world, "lang4", seed, fraction=fraction)
            report.rows.append(
                ["scratch", fraction, seed, test_ler(scratch, scratch_set, world, "lang4")]
            )
            for strat in strategies:
                model, uni = adapt_from(
                    ml3, ml3_set, world, "lang4", strat, seed, fraction=fraction
                )
                report.rows.append(
                    [strat.value, fraction, seed, test_ler(model, uni, world, "lang4")]
                )
    med = report.append_median_rows(("system", "fraction"))
    low = [f for f in fractions if f <= 0.05]
    for f in low:
        ok = all(med[(s.value, f)] < med[("scratch", f)] for s in strategies)
        report.checks.append((f"every adaptation beats scratch at fraction {f}", ok))
    for f in fractions:
        ok = med[(Strategy.REPLACE_ALL.value, f)] <= med[(Strategy.REPLACE_FROZEN.value, f)]
        report.checks.append((f"replace-all <= replace-frozen at fraction {f}", ok))
    f0 = min(fractions)
    report.checks.append(
        (
            f"extend-all <= replace-all at fraction {f0}",
            med[(Strategy.EXTEND_ALL.value, f0)] <= med[(Strategy.REPLACE_ALL.value, f0)],
        )
    )
    return report


def run_table2(
    profile: ExperimentProfile, fractions: tuple[float, ...] = (0.01, 0.05)
) -> ExperimentReport:
    """Adapting lang5 from a 3-language seed vs a 4-language seed."""
    report = ExperimentReport(
        "table2-coverage", ["seed_model", "covered_phones", "fraction", "seed", "ler"]
    )
    coverage_counts = {}
    for seed in profile.seeds:
        world = build_world(profile, seed)
        ml3, ml3_set = train_multilingual(world, SEED_LANGS, lhuc=False, seed=seed)
        ml4, ml4_set = adapt_from(
            ml3, ml3_set, world, "lang4", Strategy.EXTEND_ALL, seed, fraction=1.0
        )
        coverage_counts["ml3"] = ps.coverage(ml3_set, world.maps["lang5"]).covered_count
        coverage_counts["ml4"] = ps.coverage(ml4_set, world.maps["lang5"]).covered_count
        for fraction in fractions:
            for tag, (m, s) in (("ml3", (ml3, ml3_set)), ("ml4", (ml4, ml4_set))):
                model, uni = adapt_from(
                    m, s, world, "lang5", Strategy.EXTEND_ALL, seed, fraction=fraction
                )
                report.rows.append(
                    [tag, coverage_counts[tag], fraction, seed, test_ler(model, uni, world, "lang5")]
                )
    med = report.append_median_rows(("seed_model", "fraction"))
    report.checks.append(
        (
            f"ml4 covers more lang5 phones than ml3 "
            f"({coverage_counts['ml4']} > {coverage_counts['ml3']})",
            coverage_counts["ml4"] > coverage_counts["ml3"],
        )
    )
    for f in fractions:
        ok = med[("ml4", f)] <= med[("ml3", f)]
        report.checks.append((f"higher-coverage seed LER <= lower at fraction {f}", ok))
    return report


def run_table3(profile: ExperimentProfile, fraction: float = 0.05) -> ExperimentReport:
    """Dropout during adaptation and during from-scratch training."""
    report = ExperimentReport("table3-dropout", ["system", "dropout", "seed", "ler"])
    rate = profile.dropout_rate
    for seed in profile.seeds:
        world = build_world(profile, seed)
        ml3, ml3_set = train_multilingual(world, SEED_LANGS, lhuc=False, seed=seed)
        for dropout in (0.0, rate):
            scratch, scratch_set = train_scratch(
                world, "lang4", seed, fraction=fraction, dropout=dropout
            )
            report.rows.append(
                ["scratch", dropout, seed, test_ler(scratch, scratch_set, world, "lang4")]
            )
            model, uni = adapt_from(
                ml3, ml3_set, world, "lang4", Strategy.EXTEND_ALL, seed,
                fraction=fraction, dropout=dropout,
            )
            report.rows.append(["adapt", dropout, seed, test_ler(model, uni, world, "lang4")])
    med = report.append_median_rows(("system", "dropout"))
    report.checks.append(
        ("adapt + dropout <= adapt", med[("adapt", rate)] <= med[("adapt", 0.0)])
    )
    report.checks.append(
        ("scratch + dropout <= scratch", med[("scratch", rate)] <= med[("scratch", 0.0)])
    )
    return report


def run_experiment(name: str, profile: ExperimentProfile) -> ExperimentReport:
    if name == "table1-trend":
        return run_table1(profile)
    if name == "fig2-curve":
        return run_fig2(profile, fractions=(0.01, 0.05, 0.25, 1.0))
    if name == "table2-coverage":
        return run_table2(profile)
    if name == "table3-dropout":
        return run_table3(profile)
    raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENT_NAMES}")


def write_report(report: ExperimentReport, out_dir) -> tuple[Path, Path]:
    """TSV results table plus a plain-text trend verdict; deterministic bytes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv_path = out_dir / f"{report.name}.tsv"
    with open(tsv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(report.columns) + "\n")
        for row in report.rows:
            cells = [f"{c:.4f}" if isinstance(c, float) else str(c) for c in row]
            f.write("\t".join(cells) + "\n")
    verdict_path = out_dir / f"{report.name}.verdict.txt"
    with open(verdict_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(
            "# synthetic-data label error rate trends; absolute values are "
            "not comparable to any external system\n"
        )
        for desc, ok in report.checks:
            f.write(f"{'PASS' if ok else 'FAIL'}\t{desc}\n")
        f.write(f"{'PASS' if report.passed else 'FAIL'}\toverall\n")
    return tsv_path, verdict_path
