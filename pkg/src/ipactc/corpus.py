"""Synthetic multilingual corpora and the feature pipeline.

Every IPA symbol gets one global prototype vector, so a phone shared by two
languages has the same clean acoustics everywhere; each language then
shifts each of its phones by a fixed per-(language, phone) accent offset,
each speaker adds a fixed offset, and frames get iid gaussian noise.  The
accent offsets are drawn per phone rather than as a single per-language
shift: a constant shift would be removed exactly by per-speaker mean
normalization, while phone-specific accents survive it and create the
cross-language variation that language-adaptive training exploits.

Generated phone strings never repeat a phone back to back, so any
utterance with one frame per phone is already a feasible CTC alignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import phoneset as ps
from .numerics import Rng

MIN_PROTOTYPE_DISTANCE = 1.0
PROTOTYPE_SCALE = 1.5


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    features: np.ndarray  # T x F
    labels: tuple[int, ...]
    language_id: str
    speaker_id: str

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError(f"features must be T x F with T >= 1, got {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"non-finite features in utterance {self.utt_id}")
        if not self.labels:
            raise ValueError(f"utterance {self.utt_id} has no labels")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", tuple(int(y) for y in self.labels))

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class Dataset:
    train: list[Utterance] = field(default_factory=list)
    val: list[Utterance] = field(default_factory=list)
    test: list[Utterance] = field(default_factory=list)

    def split(self, name: str) -> list[Utterance]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    @property
    def splits(self) -> dict[str, list[Utterance]]:
        return {"train": self.train, "val": self.val, "test": self.test}

    def speakers_disjoint(self) -> bool:
        sets = [
            {u.speaker_id for u in part} for part in (self.train, self.val, self.test)
        ]
        return (
            not (sets[0] & sets[1]) and not (sets[0] & sets[2]) and not (sets[1] & sets[2])
        )


@dataclass(frozen=True)
class SyntheticLanguageSpec:
    language_id: str
    phones: ps.LanguagePhoneMap
    utterance_count: int
    phones_per_utterance: tuple[int, int] = (3, 7)
    frames_per_phone: tuple[int, int] = (2, 5)
    accent_offset_scale: float = 0.0
    noise_std: float = 0.3
    speaker_count: int = 6
    speaker_offset_scale: float = 0.3

    def __post_init__(self):
        if self.language_id != self.phones.language_id:
            raise ValueError("spec language_id does not match its phone map")
        for lo, hi in (self.phones_per_utterance, self.frames_per_phone):
            if lo < 1 or hi < lo:
                raise ValueError(f"bad range ({lo}, {hi})")
        if self.noise_std < 0 or self.utterance_count < 1 or self.speaker_count < 1:
            raise ValueError("bad synthetic language spec")


class PhonePrototypeBank:
    """symbol -> prototype mean vector; one shared entry per universal symbol."""

    def __init__(self, prototypes: dict[str, np.ndarray], feature_dim: int):
        self.prototypes = prototypes
        self.feature_dim = feature_dim

    def __getitem__(self, symbol: str) -> np.ndarray:
        return self.prototypes[symbol]

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.prototypes

    def min_pairwise_distance(self) -> float:
        vecs = list(self.prototypes.values())
        best = math.inf
        for i in range(len(vecs)):
            for j in range(i + 1, len(vecs)):
                best = min(best, float(np.linalg.norm(vecs[i] - vecs[j])))
        return best


def build_prototype_bank(
    universal: ps.UniversalPhoneSet, feature_dim: int, rng: Rng
) -> PhonePrototypeBank:
    """Gaussian prototypes, resampled until pairwise distances stay >= 1."""
    if feature_dim < 2:
        raise ValueError("feature_dim must be at least 2")
    prototypes: dict[str, np.ndarray] = {}
    for symbol in universal.symbols[1:]:
        for attempt in range(1000):
            cand = rng.gaussian(0.0, PROTOTYPE_SCALE, n=feature_dim)
            if all(
                np.linalg.norm(cand - other) >= MIN_PROTOTYPE_DISTANCE
                for other in prototypes.values()
            ):
                prototypes[symbol] = cand
                break
        else:
            raise GenerationError(
                f"could not place prototype for {symbol!r} after 1000 attempts"
            )
    return PhonePrototypeBank(prototypes, feature_dim)


def generate_language(
    spec: SyntheticLanguageSpec,
    bank: PhonePrototypeBank,
    universal: ps.UniversalPhoneSet,
    rng: Rng,
) -> list[Utterance]:
    """Utterances for one language; deterministic given (spec, bank, rng)."""
    for p in spec.phones.phones:
        if p not in bank:
            raise ps.UnknownSymbolError(f"no prototype for phone {p!r}")
    F = bank.feature_dim
    inventory = spec.phones.phones
    accents = {
        p: rng.gaussian(0.0, 1.0, n=F) * spec.accent_offset_scale for p in inventory
    }
    speakers = [f"{spec.language_id}_spk{j}" for j in range(spec.speaker_count)]
    speaker_offsets = {
        s: rng.gaussian(0.0, 1.0, n=F) * spec.speaker_offset_scale for s in speakers
    }
    utterances = []
    for u in range(spec.utterance_count):
        speaker = speakers[u % spec.speaker_count]
        n_phones = rng.int_range(*spec.phones_per_utterance)
        phones: list[str] = []
        for _ in range(n_phones):
            while True:
                p = inventory[rng.integers(len(inventory))]
                if not phones or p != phones[-1] or len(inventory) == 1:
                    break
            phones.append(p)
        rows = []
        for p in phones:
            center = bank[p] + accents[p] + speaker_offsets[speaker]
            for _ in range(rng.int_range(*spec.frames_per_phone)):
                rows.append(center + rng.gaussian(0.0, 1.0, n=F) * spec.noise_std)
        utterances.append(
            Utterance(
                utt_id=f"{spec.language_id}-{u:05d}",
                features=np.array(rows),
                labels=ps.encode_labels(universal, spec.language_id, phones),
                language_id=spec.language_id,
                speaker_id=speaker,
            )
        )
    return utterances


def normalize_per_speaker(utterances: list[Utterance]) -> list[Utterance]:
    """Mean subtraction and variance normalization over each speaker's frames."""
    by_speaker: dict[str, list[Utterance]] = {}
    for u in utterances:
        by_speaker.setdefault(u.speaker_id, []).append(u)
    stats = {}
    for speaker, utts in by_speaker.items():
        frames = np.concatenate([u.features for u in utts], axis=0)
        mean = frames.mean(axis=0)
        std = np.maximum(frames.std(axis=0), 1e-8)
        stats[speaker] = (mean, std)
    out = []
    for u in utterances:
        mean, std = stats[u.speaker_id]
        out.append(
            Utterance(
                utt_id=u.utt_id,
                features=(u.features - mean) / std,
                labels=u.labels,
                language_id=u.language_id,
                speaker_id=u.speaker_id,
            )
        )
    return out


def split_by_speaker(
    utterances: list[Utterance],
    rng: Rng,
    fractions: tuple[float, float] = (0.7, 0.15),
) -> Dataset:
    """Assign whole speakers to train/val/test so the splits never share one."""
    speakers = sorted({u.speaker_id for u in utterances})
    if len(speakers) < 3:
        raise ValueError("need at least 3 speakers for disjoint train/val/test")
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    n_train = max(1, round(fractions[0] * len(order)))
    n_val = max(1, round(fractions[1] * len(order)))
    if n_train + n_val >= len(order):
        n_train = len(order) - 2
        n_val = 1
    assign = {}
    for j, s in enumerate(order):
        assign[s] = "train" if j < n_train else ("val" if j < n_train + n_val else "test")
    ds = Dataset()
    for u in utterances:
        ds.split(assign[u.speaker_id]).append(u)
    return ds


def subset_utterances(
    utterances: list[Utterance], fraction: float, rng: Rng
) -> list[Utterance]:
    """Speaker-stratified subset of ceil(fraction * N) utterances.

    Implemented as a prefix of a fixed speaker-interleaved permutation, so
    subsets of the same list under the same seed are nested:
    subset(0.1) is contained in subset(0.5).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    k = math.ceil(fraction * len(utterances))
    by_speaker: dict[str, list[int]] = {}
    for idx, u in enumerate(utterances):
        by_speaker.setdefault(u.speaker_id, []).append(idx)
    speakers = sorted(by_speaker)
    speaker_order = [speakers[i] for i in rng.permutation(len(speakers))]
    queues = {}
    for s in speakers:  # permute each speaker's utterances, fixed iteration order
        idxs = by_speaker[s]
        queues[s] = [idxs[i] for i in rng.permutation(len(idxs))]
    interleaved: list[int] = []
    while any(queues[s] for s in speaker_order):
        for s in speaker_order:
            if queues[s]:
                interleaved.append(queues[s].pop(0))
    return [utterances[i] for i in interleaved[:k]]


def reencode_utterances(
    utterances: list[Utterance], from_set, to_set
) -> list[Utterance]:
    """Re-map label indices into another phone set's index space via symbols."""
    out = []
    for u in utterances:
        symbols = [from_set.symbols[i] for i in u.labels]
        out.append(
            Utterance(
                utt_id=u.utt_id,
                features=u.features,
                labels=ps.encode_labels(to_set, u.language_id, symbols),
                language_id=u.language_id,
                speaker_id=u.speaker_id,
            )
        )
    return out


# ---------------------------------------------------------------------------
# on-disk format: per split, a binary feature container plus a text manifest


def _check_token(token: str, what: str) -> str:
    if not token or any(ch.isspace() for ch in token):
        raise ValueError(f"{what} {token!r} must be non-empty and whitespace-free")
    return token


def save_split(directory, name: str, utterances: list[Utterance], universal) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bin_path = directory / f"{name}.bin"
    manifest_path = directory / f"{name}.manifest"
    with open(bin_path, "wb") as fbin, open(
        manifest_path, "w", encoding="utf-8", newline="\n"
    ) as fman:
        for u in utterances:
            offset = fbin.tell()
            T, F = u.features.shape
            header = (
                f"utt {_check_token(u.utt_id, 'utterance id')} "
                f"{_check_token(u.language_id, 'language')} "
                f"{_check_token(u.speaker_id, 'speaker')} {T} {F}\n"
            )
            fbin.write(header.encode("utf-8"))
            fbin.write(np.ascontiguousarray(u.features, dtype="<f8").tobytes())
            symbols = " ".join(universal.symbols[i] for i in u.labels)
            fman.write(
                f"{u.utt_id}\t{offset}\t{u.language_id}\t{u.speaker_id}\t{symbols}\n"
            )


def load_split(directory, name: str, universal) -> list[Utterance]:
    directory = Path(directory)
    utterances = []
    with open(directory / f"{name}.manifest", encoding="utf-8") as fman, open(
        directory / f"{name}.bin", "rb"
    ) as fbin:
        for line in fman:
            line = line.rstrip("\n")
            if not line:
                continue
            utt_id, offset, language, speaker, label_text = line.split("\t")
            fbin.seek(int(offset))
            header = fbin.readline().decode("utf-8").split()
            if header[:2] != ["utt", utt_id]:
                raise ValueError(f"{name}.bin: header mismatch for {utt_id}")
            T, F = int(header[4]), int(header[5])
            raw = fbin.read(8 * T * F)
            features = np.frombuffer(raw, dtype="<f8").reshape(T, F).copy()
            utterances.append(
                Utterance(
                    utt_id=utt_id,
                    features=features,
                    labels=ps.encode_labels(universal, language, label_text.split()),
                    language_id=language,
                    speaker_id=speaker,
                )
            )
    return utterances


def save_dataset(directory, dataset: Dataset, universal) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ps.save_phone_set(directory / "phones.txt", universal)
    for name, utts in dataset.splits.items():
        save_split(directory, name, utts, universal)


def load_dataset(directory):
    """Returns (dataset, universal_phone_set)."""
    directory = Path(directory)
    universal = ps.load_phone_set(directory / "phones.txt")
    ds = Dataset(
        train=load_split(directory, "train", universal),
        val=load_split(directory, "val", universal),
        test=load_split(directory, "test", universal),
    )
    return ds, universal
