"""Cross-lingual adaptation surgery on a trained multilingual model.

Three strategies:

  replace-frozen  new random output layer for the target phone set; hidden
                  layers copied and frozen, only the output layer trains.
  replace-all     same surgery, nothing frozen.
  extend-all      output layer grown to an extended phone set; rows of
                  already-covered symbols are copied bitwise, rows of new
                  symbols are randomly initialized, everything trains.

Source LHUC vectors are discarded by default; pass init_lhuc_language to
give the target language a fresh r = 0 vector instead.  The source model is
never mutated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import network as net
from . import phoneset as ps
from .numerics import Rng


class StaleModelError(ValueError):
    """Model/phone-set version mismatch."""


class Strategy(Enum):
    REPLACE_FROZEN = "replace-frozen"
    REPLACE_ALL = "replace-all"
    EXTEND_ALL = "extend-all"


@dataclass(frozen=True)
class AdaptationPlan:
    strategy: Strategy
    freeze_mask: dict[str, bool]  # True = tensor is not updated
    output_index_map: dict[int, int] | None = None


@dataclass
class AdaptedModel:
    model: net.Model
    plan: AdaptationPlan
    provenance: str


def _copy_layers(source: net.Model) -> list[net.BlstmLayer]:
    return [
        net.BlstmLayer(
            fwd=net.LstmCellParams(l.fwd.W.copy(), l.fwd.R.copy(), l.fwd.b.copy()),
            bwd=net.LstmCellParams(l.bwd.W.copy(), l.bwd.R.copy(), l.bwd.b.copy()),
        )
        for l in source.layers
    ]


def _freeze_mask(model: net.Model, freeze_hidden: bool) -> dict[str, bool]:
    mask = {}
    for name, _ in net.named_tensors(model):
        mask[name] = freeze_hidden and name.startswith("layer")
    return mask


def replace_output_layer(
    source: net.Model,
    target_set: ps.UniversalPhoneSet,
    freeze_hidden: bool,
    rng: Rng,
    init_lhuc_language: str | None = None,
    provenance: str = "<memory>",
) -> AdaptedModel:
    """New random softmax layer sized to the target set; hidden layers copied."""
    if target_set.num_symbols < 2:
        raise ValueError("target phone set needs at least one phone besides blank")
    output_w, output_b = net.init_output_layer(
        target_set.num_symbols, 2 * source.config.hidden_size, rng
    )
    model = net.Model(
        config=source.config,
        layers=_copy_layers(source),
        output_w=output_w,
        output_b=output_b,
        lhuc={},
        phoneset_version=target_set.version,
    )
    if init_lhuc_language is not None:
        net.add_language(model, init_lhuc_language)
    plan = AdaptationPlan(
        strategy=Strategy.REPLACE_FROZEN if freeze_hidden else Strategy.REPLACE_ALL,
        freeze_mask=_freeze_mask(model, freeze_hidden),
    )
    return AdaptedModel(model=model, plan=plan, provenance=provenance)


def extend_output_layer(
    source: net.Model,
    source_set: ps.UniversalPhoneSet,
    extended_set: ps.UniversalPhoneSet,
    index_map: dict[int, int],
    rng: Rng,
    init_lhuc_language: str | None = None,
    provenance: str = "<memory>",
) -> AdaptedModel:
    """Grow the output layer to the extended set, reusing trained rows.

    Rows for pre-existing symbols (including blank) are copied bitwise via
    index_map; rows for the appended symbols are freshly initialized.  All
    parameters remain trainable.
    """
    if source.phoneset_version != source_set.version:
        raise StaleModelError(
            f"model was built for phone-set version {source.phoneset_version}, "
            f"got source set version {source_set.version}"
        )
    if extended_set.symbols[: source_set.num_symbols] != source_set.symbols:
        raise ValueError("extended set does not extend the source set")
    v_new = extended_set.num_symbols
    hidden2 = 2 * source.config.hidden_size
    fresh_w, fresh_b = net.init_output_layer(v_new, hidden2, rng)
    output_w = fresh_w
    output_b = fresh_b
    for old, new in index_map.items():
        output_w[new] = source.output_w[old]
        output_b[new] = source.output_b[old]
    model = net.Model(
        config=source.config,
        layers=_copy_layers(source),
        output_w=output_w,
        output_b=output_b,
        lhuc={},
        phoneset_version=extended_set.version,
    )
    if init_lhuc_language is not None:
        net.add_language(model, init_lhuc_language)
    plan = AdaptationPlan(
        strategy=Strategy.EXTEND_ALL,
        freeze_mask=_freeze_mask(model, freeze_hidden=False),
        output_index_map=dict(index_map),
    )
    return AdaptedModel(model=model, plan=plan, provenance=provenance)


def apply_freeze(
    gradients: dict[str, np.ndarray], freeze_mask: dict[str, bool]
) -> dict[str, np.ndarray]:
    """Zero the gradients of frozen tensors; others pass through untouched."""
    out = {}
    for name, g in gradients.items():
        if name not in freeze_mask:
            raise net.ShapeError(f"freeze mask does not cover tensor {name!r}")
        out[name] = np.zeros_like(g) if freeze_mask[name] else g
    return out


def write_adaptation_manifest(
    path,
    adapted: AdaptedModel,
    source_checkpoint_hash: str,
    source_version: int,
    target_version: int,
) -> None:
    """Provenance record emitted next to the adapted checkpoint."""
    manifest = {
        "strategy": adapted.plan.strategy.value,
        "source_checkpoint_sha256": source_checkpoint_hash,
        "source_phoneset_version": source_version,
        "target_phoneset_version": target_version,
        "output_index_map": (
            {str(k): v for k, v in adapted.plan.output_index_map.items()}
            if adapted.plan.output_index_map is not None
            else None
        ),
        "provenance": adapted.provenance,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
