"""Stacked bidirectional LSTM acoustic model with LHUC and sequence dropout.

Layer step, per direction, gate order i, f, o, candidate g:

    z   = W x_t + R h_{t-1} + b
    c_t = f * c_{t-1} + m * i * tanh(z_g)      (m: recurrent mask, ones if off)
    h_t = o * tanh(c_t)

Per layer the two directions' outputs are concatenated (T x 2H), then scaled
per unit by the language's LHUC amplitude 2*sigmoid(r), then (training with
the forward-dropout mode) multiplied by a 0/1 unit mask with survivors
rescaled by 1/keep_prob.  Masks are sampled once per utterance and reused at
every frame.  Recurrent dropout masks only the candidate increment inside
the cell and applies no compensation scaling.

The backward pass is exact reverse-mode differentiation of this forward
pass, written out by hand; finite differences over every parameter pin it
down in the tests.

The output projection uses numerics.affine_rows, so extending the softmax
layer with new symbol rows leaves logits of existing symbols bitwise
unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import phoneset as ps
from .numerics import Rng, affine_rows, log_softmax, sigmoid

WEIGHT_INIT_SCALE = 0.1
FORGET_BIAS_INIT = 1.0


class ShapeError(ValueError):
    pass


class EmptyUtteranceError(ValueError):
    pass


class UnknownLanguageError(LookupError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class LstmCellParams:
    """Gate weights stacked [i; f; o; g]: W (4H x F), R (4H x H), b (4H,)."""

    W: np.ndarray
    R: np.ndarray
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.R.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class BlstmLayer:
    fwd: LstmCellParams
    bwd: LstmCellParams


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    hidden_size: int
    num_layers: int

    def __post_init__(self):
        if self.feature_dim < 1 or self.hidden_size < 1 or self.num_layers < 1:
            raise ValueError(f"bad model config {self}")


@dataclass
class Model:
    config: ModelConfig
    layers: list[BlstmLayer]
    output_w: np.ndarray  # (V, 2H)
    output_b: np.ndarray  # (V,)
    lhuc: dict[str, list[np.ndarray]]  # language -> per-layer (2H,) r vectors
    phoneset_version: int

    @property
    def num_symbols(self) -> int:
        return self.output_w.shape[0]

    @property
    def lhuc_languages(self) -> tuple[str, ...]:
        return tuple(sorted(self.lhuc))


def _init_cell(hidden: int, input_dim: int, rng: Rng) -> LstmCellParams:
    def draw(shape):
        n = int(np.prod(shape))
        return ((rng.uniform(n) * 2.0 - 1.0) * WEIGHT_INIT_SCALE).reshape(shape)

    W = draw((4 * hidden, input_dim))
    R = draw((4 * hidden, hidden))
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = FORGET_BIAS_INIT
    return LstmCellParams(W=W, R=R, b=b)


def init_output_layer(num_symbols: int, hidden2: int, rng: Rng):
    n = num_symbols * hidden2
    w = ((rng.uniform(n) * 2.0 - 1.0) * WEIGHT_INIT_SCALE).reshape(num_symbols, hidden2)
    return w, np.zeros(num_symbols)


def init_model(
    config: ModelConfig,
    num_symbols: int,
    phoneset_version: int,
    rng: Rng,
    languages: tuple[str, ...] = (),
) -> Model:
    """Fresh model; uniform [-0.1, 0.1] weights, forget bias +1, LHUC r = 0."""
    if num_symbols < 2:
        raise ValueError("need at least blank plus one phone")
    layers = []
    fin = config.feature_dim
    for _ in range(config.num_layers):
        layers.append(
            BlstmLayer(
                fwd=_init_cell(config.hidden_size, fin, rng),
                bwd=_init_cell(config.hidden_size, fin, rng),
            )
        )
        fin = 2 * config.hidden_size
    output_w, output_b = init_output_layer(num_symbols, 2 * config.hidden_size, rng)
    model = Model(
        config=config,
        layers=layers,
        output_w=output_w,
        output_b=output_b,
        lhuc={},
        phoneset_version=phoneset_version,
    )
    for lang in languages:
        add_language(model, lang)
    return model


def add_language(model: Model, language_id: str) -> None:
    """Register a language's LHUC vectors at r = 0 (amplitude 1)."""
    if language_id in model.lhuc:
        return
    model.lhuc[language_id] = [
        np.zeros(2 * model.config.hidden_size) for _ in range(model.config.num_layers)
    ]


def named_tensors(model: Model):
    """Deterministically ordered (name, array) pairs over every parameter."""
    for k, layer in enumerate(model.layers):
        for dname, cell in (("fwd", layer.fwd), ("bwd", layer.bwd)):
            yield f"layer{k}.{dname}.W", cell.W
            yield f"layer{k}.{dname}.R", cell.R
            yield f"layer{k}.{dname}.b", cell.b
    yield "output.W", model.output_w
    yield "output.b", model.output_b
    for lang in sorted(model.lhuc):
        for k, r in enumerate(model.lhuc[lang]):
            yield f"lhuc.{lang}.layer{k}", r


def tensor_map(model: Model) -> dict[str, np.ndarray]:
    return dict(named_tensors(model))


def clone_model(model: Model) -> Model:
    return Model(
        config=model.config,
        layers=[
            BlstmLayer(
                fwd=LstmCellParams(l.fwd.W.copy(), l.fwd.R.copy(), l.fwd.b.copy()),
                bwd=LstmCellParams(l.bwd.W.copy(), l.bwd.R.copy(), l.bwd.b.copy()),
            )
            for l in model.layers
        ],
        output_w=model.output_w.copy(),
        output_b=model.output_b.copy(),
        lhuc={lang: [r.copy() for r in rs] for lang, rs in model.lhuc.items()},
        phoneset_version=model.phoneset_version,
    )


def models_equal(a: Model, b: Model) -> bool:
    if a.config != b.config or a.phoneset_version != b.phoneset_version:
        return False
    ta, tb = tensor_map(a), tensor_map(b)
    if ta.keys() != tb.keys():
        return False
    return all(np.array_equal(ta[k], tb[k]) for k in ta)


# ---------------------------------------------------------------------------
# dropout plans


class DropoutMode(Enum):
    NONE = "none"
    FORWARD = "forward"
    RECURRENT = "recurrent"


@dataclass(frozen=True)
class DropoutPlan:
    """Minibatch-level dropout choice; masks are filled in per utterance."""

    mode: DropoutMode
    rate: float
    masks: tuple[np.ndarray, ...] | None = None

    @property
    def keep_prob(self) -> float:
        return 1.0 - self.rate


def sample_dropout_plan(rate: float, rng: Rng) -> DropoutPlan:
    """Pick forward or recurrent dropout with equal probability."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    mode = DropoutMode.FORWARD if rng.coin() else DropoutMode.RECURRENT
    return DropoutPlan(mode=mode, rate=rate)


def sample_utterance_masks(plan: DropoutPlan, model: Model, rng: Rng) -> DropoutPlan:
    """Per-layer unit masks for one utterance, constant across its frames."""
    if plan.mode is DropoutMode.NONE:
        return plan
    width = 2 * model.config.hidden_size
    masks = tuple(
        rng.bernoulli_mask(width, plan.keep_prob) for _ in range(model.config.num_layers)
    )
    return replace(plan, masks=masks)


# ---------------------------------------------------------------------------
# forward


def lstm_cell_step(x_t, state_prev: LstmState, params: LstmCellParams, recurrent_mask=None):
    """One LSTM step; returns the new state and the intermediates."""
    H = params.hidden_size
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (params.input_size,):
        raise ShapeError(f"expected input of shape ({params.input_size},), got {x_t.shape}")
    if recurrent_mask is not None and np.shape(recurrent_mask) != (H,):
        raise ShapeError(f"recurrent mask must have shape ({H},)")
    z = params.W @ x_t + params.R @ state_prev.h + params.b
    sig = sigmoid(z[: 3 * H])
    i, f, o = sig[:H], sig[H : 2 * H], sig[2 * H :]
    g = np.tanh(z[3 * H :])
    inc = i * g
    if recurrent_mask is not None:
        inc = recurrent_mask * inc
    c = f * state_prev.c + inc
    tc = np.tanh(c)
    h = o * tc
    cache = {"i": i, "f": f, "o": o, "g": g, "c": c, "tanh_c": tc}
    return LstmState(h=h, c=c), cache


@dataclass
class _DirectionCache:
    x: np.ndarray  # T x Fin, in this direction's processing order
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    rec_mask: np.ndarray | None


def _run_direction(x: np.ndarray, params: LstmCellParams, rec_mask) -> _DirectionCache:
    T = x.shape[0]
    H = params.hidden_size
    zs = x @ params.W.T + params.b  # input contribution for all steps at once
    arrs = {k: np.empty((T, H)) for k in ("i", "f", "o", "g", "c", "tanh_c", "h")}
    h = np.zeros(H)
    c = np.zeros(H)
    for t in range(T):
        z = zs[t] + params.R @ h
        sig = sigmoid(z[: 3 * H])
        i, f, o = sig[:H], sig[H : 2 * H], sig[2 * H :]
        g = np.tanh(z[3 * H :])
        inc = i * g
        if rec_mask is not None:
            inc = rec_mask * inc
        c = f * c + inc
        tc = np.tanh(c)
        h = o * tc
        arrs["i"][t] = i
        arrs["f"][t] = f
        arrs["o"][t] = o
        arrs["g"][t] = g
        arrs["c"][t] = c
        arrs["tanh_c"][t] = tc
        arrs["h"][t] = h
    return _DirectionCache(x=x, rec_mask=rec_mask, **arrs)


@dataclass
class _LayerCache:
    fwd: _DirectionCache
    bwd: _DirectionCache  # reversed time order
    concat: np.ndarray  # T x 2H, before LHUC
    amp: np.ndarray | None  # LHUC amplitudes actually applied
    ff_scale: np.ndarray | None  # mask / keep_prob actually applied


@dataclass
class ForwardCache:
    model: Model
    language_id: str | None
    layers: list[_LayerCache]
    last_hidden: np.ndarray


@dataclass
class ForwardResult:
    logits: np.ndarray
    log_probs: np.ndarray
    cache: ForwardCache


def apply_lhuc(hidden: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Scale unit i by the amplitude 2*sigmoid(r_i)."""
    if hidden.ndim != 2 or np.shape(r) != (hidden.shape[1],):
        raise ShapeError(f"LHUC vector shape {np.shape(r)} does not match {hidden.shape}")
    return hidden * lhuc_amplitude(r)


def lhuc_amplitude(r: np.ndarray) -> np.ndarray:
    return 2.0 * sigmoid(np.asarray(r, dtype=np.float64))


def network_forward(
    features: np.ndarray,
    model: Model,
    language_id: str | None = None,
    plan: DropoutPlan | None = None,
) -> ForwardResult:
    """Run the full acoustic model on one utterance.

    plan=None is evaluation mode: deterministic, no masks.  When the model
    carries LHUC vectors and language_id is given, that language's
    amplitudes are applied at every layer; language_id=None skips LHUC.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be T x F, got shape {x.shape}")
    if x.shape[0] == 0:
        raise EmptyUtteranceError("cannot run the network on an empty utterance")
    if x.shape[1] != model.config.feature_dim:
        raise ShapeError(
            f"feature dim {x.shape[1]} does not match model {model.config.feature_dim}"
        )
    lhuc_rs = None
    if model.lhuc and language_id is not None:
        if language_id not in model.lhuc:
            raise UnknownLanguageError(f"no LHUC vectors for language {language_id!r}")
        lhuc_rs = model.lhuc[language_id]

    H = model.config.hidden_size
    mode = plan.mode if plan is not None else DropoutMode.NONE
    if mode is not DropoutMode.NONE and plan.masks is None:
        raise ValueError("training forward requires per-utterance masks; "
                         "call sample_utterance_masks first")

    layer_caches = []
    for k, layer in enumerate(model.layers):
        rec_f = rec_b = None
        if mode is DropoutMode.RECURRENT:
            rec_f = plan.masks[k][:H]
            rec_b = plan.masks[k][H:]
        cache_f = _run_direction(x, layer.fwd, rec_f)
        cache_b = _run_direction(x[::-1], layer.bwd, rec_b)
        concat = np.concatenate([cache_f.h, cache_b.h[::-1]], axis=1)
        out = concat
        amp = None
        if lhuc_rs is not None:
            amp = lhuc_amplitude(lhuc_rs[k])
            out = out * amp
        ff_scale = None
        if mode is DropoutMode.FORWARD:
            ff_scale = plan.masks[k] / plan.keep_prob
            out = out * ff_scale
        layer_caches.append(
            _LayerCache(fwd=cache_f, bwd=cache_b, concat=concat, amp=amp, ff_scale=ff_scale)
        )
        x = out

    logits = affine_rows(x, model.output_w, model.output_b)
    cache = ForwardCache(
        model=model, language_id=language_id, layers=layer_caches, last_hidden=x
    )
    return ForwardResult(logits=logits, log_probs=log_softmax(logits), cache=cache)


# ---------------------------------------------------------------------------
# backward


def _direction_backward(cache: _DirectionCache, params: LstmCellParams, dh_seq):
    T, H = cache.h.shape
    dW = np.zeros_like(params.W)
    dR = np.zeros_like(params.R)
    db = np.zeros_like(params.b)
    dx = np.zeros_like(cache.x)
    dh_carry = np.zeros(H)
    dc = np.zeros(H)
    zeros = np.zeros(H)
    m = cache.rec_mask
    for t in range(T - 1, -1, -1):
        dh = dh_seq[t] + dh_carry
        i, f, o, g = cache.i[t], cache.f[t], cache.o[t], cache.g[t]
        tc = cache.tanh_c[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        c_prev = cache.c[t - 1] if t > 0 else zeros
        h_prev = cache.h[t - 1] if t > 0 else zeros
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        if m is not None:
            di = di * m
            dg = dg * m
        dz = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)]
        )
        dW += np.outer(dz, cache.x[t])
        dR += np.outer(dz, h_prev)
        db += dz
        dx[t] = params.W.T @ dz
        dh_carry = params.R.T @ dz
        dc = dc * f
    return dW, dR, db, dx


def network_backward(cache: ForwardCache, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of the scalar loss whose logit gradient is grad_logits.

    Returns a name -> array dict covering the output layer, every BLSTM
    tensor, and (if LHUC was applied in the forward pass) the utterance
    language's LHUC vectors.  Tensors of other languages receive no entry,
    i.e. an exactly-zero gradient.
    """
    model = cache.model
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_logits.shape != (cache.last_hidden.shape[0], model.num_symbols):
        raise ShapeError(
            f"grad_logits shape {grad_logits.shape} does not match forward cache"
        )
    H = model.config.hidden_size
    grads: dict[str, np.ndarray] = {
        "output.W": grad_logits.T @ cache.last_hidden,
        "output.b": grad_logits.sum(axis=0),
    }
    d_hidden = grad_logits @ model.output_w  # T x 2H
    for k in range(len(model.layers) - 1, -1, -1):
        lc = cache.layers[k]
        d_out = d_hidden
        if lc.ff_scale is not None:
            d_out = d_out * lc.ff_scale
        if lc.amp is not None:
            # d amplitude, then through the 2*sigmoid reparameterization:
            # amp = 2 s  =>  d amp / d r = 2 s (1 - s) = amp (1 - amp / 2)
            damp = np.sum(d_out * lc.concat, axis=0)
            grads[f"lhuc.{cache.language_id}.layer{k}"] = damp * lc.amp * (1.0 - lc.amp / 2.0)
            d_pre = d_out * lc.amp
        else:
            d_pre = d_out
        dW_f, dR_f, db_f, dx_f = _direction_backward(lc.fwd, model.layers[k].fwd, d_pre[:, :H])
        dW_b, dR_b, db_b, dx_b = _direction_backward(
            lc.bwd, model.layers[k].bwd, d_pre[::-1, H:]
        )
        grads[f"layer{k}.fwd.W"] = dW_f
        grads[f"layer{k}.fwd.R"] = dR_f
        grads[f"layer{k}.fwd.b"] = db_f
        grads[f"layer{k}.bwd.W"] = dW_b
        grads[f"layer{k}.bwd.R"] = dR_b
        grads[f"layer{k}.bwd.b"] = db_b
        d_hidden = dx_f + dx_b[::-1]
    return grads


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"IPACTC-CKPT-v1\n"


def save_checkpoint(path, model: Model, universal: ps.UniversalPhoneSet, seed: int) -> None:
    """Deterministic binary container: JSON header + raw little-endian tensors."""
    if model.phoneset_version != universal.version:
        raise CheckpointError(
            f"model phone-set version {model.phoneset_version} does not match "
            f"the set being embedded ({universal.version})"
        )
    if model.num_symbols != universal.num_symbols:
        raise CheckpointError("output layer size does not match the phone set")
    tensors = dict(named_tensors(model))
    names = sorted(tensors)
    import io

    buf = io.StringIO()
    _write_phoneset_text(buf, universal)
    header = {
        "config": {
            "feature_dim": model.config.feature_dim,
            "hidden_size": model.config.hidden_size,
            "num_layers": model.config.num_layers,
        },
        "phoneset": buf.getvalue(),
        "phoneset_version": model.phoneset_version,
        "seed": int(seed),
        "tensors": [[n, list(tensors[n].shape)] for n in names],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(len(head).to_bytes(8, "little"))
        f.write(head)
        for n in names:
            f.write(np.ascontiguousarray(tensors[n], dtype="<f8").tobytes())


def _write_phoneset_text(buf, universal: ps.UniversalPhoneSet) -> None:
    buf.write(f"version {universal.version}\n")
    for s in universal.symbols:
        buf.write(f"symbol {s}\n")
    for lang, idx in universal.per_language.items():
        phones = " ".join(universal.symbols[i] for i in idx if i != 0)
        buf.write(f"lang {lang} {phones}\n")


def _parse_phoneset_text(text: str) -> ps.UniversalPhoneSet:
    lines = [ln for ln in text.split("\n") if ln.strip()]
    version = int(lines[0].split(" ", 1)[1])
    symbols: list[str] = []
    per_language: dict[str, tuple[int, ...]] = {}
    for ln in lines[1:]:
        kind, _, rest = ln.partition(" ")
        if kind == "symbol":
            symbols.append(rest)
        else:
            lang, _, phones = rest.partition(" ")
            index = {s: i for i, s in enumerate(symbols)}
            per_language[lang] = tuple([0] + [index[p] for p in phones.split()])
    return ps.UniversalPhoneSet(tuple(symbols), per_language, version=version)


def load_checkpoint(path):
    """Returns (model, universal_phone_set, creation_seed)."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        head_len = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(head_len).decode("utf-8"))
        tensors = {}
        for name, shape in header["tensors"]:
            n = int(np.prod(shape)) if shape else 1
            raw = f.read(8 * n)
            if len(raw) != 8 * n:
                raise CheckpointError(f"{path}: truncated tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    universal = _parse_phoneset_text(header["phoneset"])
    if universal.version != header["phoneset_version"]:
        raise CheckpointError(
            f"{path}: embedded phone set version {universal.version} does not match "
            f"recorded model version {header['phoneset_version']}"
        )
    cfg = ModelConfig(**header["config"])
    layers = []
    for k in range(cfg.num_layers):
        layers.append(
            BlstmLayer(
                fwd=LstmCellParams(
                    W=tensors[f"layer{k}.fwd.W"],
                    R=tensors[f"layer{k}.fwd.R"],
                    b=tensors[f"layer{k}.fwd.b"],
                ),
                bwd=LstmCellParams(
                    W=tensors[f"layer{k}.bwd.W"],
                    R=tensors[f"layer{k}.bwd.R"],
                    b=tensors[f"layer{k}.bwd.b"],
                ),
            )
        )
    lhuc: dict[str, list[np.ndarray]] = {}
    for name in tensors:
        if name.startswith("lhuc."):
            lang, layer_part = name[len("lhuc.") :].rsplit(".layer", 1)
            lhuc.setdefault(lang, [None] * cfg.num_layers)[int(layer_part)] = tensors[name]
    for lang, rs in lhuc.items():
        if any(r is None for r in rs):
            raise CheckpointError(f"{path}: incomplete LHUC vectors for {lang!r}")
    model = Model(
        config=cfg,
        layers=layers,
        output_w=tensors["output.W"],
        output_b=tensors["output.b"],
        lhuc=lhuc,
        phoneset_version=header["phoneset_version"],
    )
    if model.num_symbols != universal.num_symbols:
        raise CheckpointError(f"{path}: output layer does not match embedded phone set")
    return model, universal, header["seed"]
