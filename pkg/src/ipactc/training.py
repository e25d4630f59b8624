"""Minibatch SGD-with-momentum training over the network + CTC composition.

One minibatch: draw the dropout mode for the whole batch, then per
utterance draw masks, run forward (LHUC routed by the utterance's
language), take the CTC gradient, backpropagate, average the parameter
gradients over the batch, apply the freeze mask, and take one optimizer
step.  Utterances whose label sequence cannot be aligned in their frame
count are skipped and counted.

Masks are drawn serially in utterance order before any parallel dispatch
and gradients are reduced in utterance order, so results are identical for
any worker count.  Frozen tensors are skipped by the optimizer entirely,
which keeps them bitwise constant over any number of steps.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import adaptation as adapt
from . import ctc
from . import network as net
from .corpus import Utterance
from .numerics import Rng


class DivergedTrainingError(RuntimeError):
    pass


class EmptyBatchError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0004
    momentum: float = 0.9
    batch_size: int = 8
    max_epochs: int = 50
    patience: int = 5
    dropout_rate: float = 0.0
    lhuc_enabled: bool = False
    seed: int = 0
    freeze_mask: dict[str, bool] | None = None
    clip_norm: float | None = None
    threads: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("bad training config")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class TrainState:
    model: net.Model
    velocity: dict[str, np.ndarray]
    rng: Rng
    epoch: int = 0
    best_val_loss: float = float("inf")
    epochs_since_best: int = 0

    @classmethod
    def create(cls, model: net.Model, config: TrainConfig) -> "TrainState":
        model = net.clone_model(model)
        velocity = {name: np.zeros_like(t) for name, t in net.named_tensors(model)}
        return cls(model=model, velocity=velocity, rng=Rng(config.seed))


@dataclass
class EpochReport:
    epoch: int
    mean_train_loss: float
    mean_val_loss: float
    utterances_seen: int
    infeasible_skipped: int


def sgd_momentum_step(
    state: TrainState, gradients: dict[str, np.ndarray], config: TrainConfig
) -> None:
    """v <- momentum * v - lr * g;  theta <- theta + v, per tensor.

    Frozen tensors are skipped outright rather than nudged by zero, so their
    bits never change.
    """
    tensors = net.tensor_map(state.model)
    freeze = config.freeze_mask or {}
    for name, g in gradients.items():
        if name not in tensors:
            raise net.ShapeError(f"gradient for unknown tensor {name!r}")
        if not np.all(np.isfinite(g)):
            raise DivergedTrainingError(f"non-finite gradient in tensor {name!r}")
        if freeze.get(name, False):
            continue
        v = state.velocity[name]
        v *= config.momentum
        v -= config.learning_rate * g
        tensors[name] += v


def utterance_loss_and_grads(
    model: net.Model,
    utt: Utterance,
    plan: net.DropoutPlan | None,
    lhuc_enabled: bool,
):
    """(loss, gradient dict) for one utterance, or None when infeasible."""
    language = utt.language_id if lhuc_enabled else None
    fwd = net.network_forward(utt.features, model, language_id=language, plan=plan)
    instance = ctc.CtcInstance(log_probs=fwd.log_probs, labels=utt.labels)
    try:
        result = ctc.ctc_grad(instance)
    except ctc.InfeasibleAlignmentError:
        return None
    grads = net.network_backward(fwd.cache, result.grad_logits)
    return -result.log_likelihood, grads


def _clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> None:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads.values():
            g *= scale


def train_minibatch(
    state: TrainState, batch: list[Utterance], config: TrainConfig
) -> float:
    """One optimizer step over a minibatch; returns the mean batch loss."""
    if not batch:
        raise EmptyBatchError("empty minibatch")
    plan = net.sample_dropout_plan(config.dropout_rate, state.rng)
    jobs = [
        (utt, net.sample_utterance_masks(plan, state.model, state.rng)) for utt in batch
    ]

    def run(job):
        utt, utt_plan = job
        return utterance_loss_and_grads(state.model, utt, utt_plan, config.lhuc_enabled)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    total: dict[str, np.ndarray] = {
        name: np.zeros_like(t) for name, t in net.named_tensors(state.model)
    }
    losses = []
    for res in results:  # fixed reduction order: utterance order
        if res is None:
            continue
        loss, grads = res
        losses.append(loss)
        for name, g in grads.items():
            total[name] += g
    if not losses:
        raise EmptyBatchError("every utterance in the minibatch was infeasible")
    inv = 1.0 / len(losses)
    for g in total.values():
        g *= inv
    if config.clip_norm is not None:
        _clip_gradients(total, config.clip_norm)
    if config.freeze_mask is not None:
        total = adapt.apply_freeze(total, config.freeze_mask)
    sgd_momentum_step(state, total, config)
    return float(np.mean(losses))


def evaluate_mean_loss(
    model: net.Model, utterances: list[Utterance], lhuc_enabled: bool = False
) -> tuple[float, int]:
    """Mean CTC loss in evaluation mode; returns (mean loss, skipped count)."""
    if not utterances:
        raise ValueError("cannot evaluate on an empty dataset")
    losses = []
    skipped = 0
    for utt in utterances:
        language = utt.language_id if lhuc_enabled else None
        fwd = net.network_forward(utt.features, model, language_id=language, plan=None)
        loglik = ctc.ctc_log_likelihood(
            ctc.CtcInstance(log_probs=fwd.log_probs, labels=utt.labels)
        )
        if loglik == -np.inf:
            skipped += 1
            continue
        losses.append(-loglik)
    if not losses:
        return float("inf"), skipped
    return float(np.mean(losses)), skipped


def run_training(
    model: net.Model,
    train_set: list[Utterance],
    val_set: list[Utterance],
    config: TrainConfig,
    log_path=None,
    checkpoint_hook=None,
) -> tuple[net.Model, list[EpochReport]]:
    """Epoch loop with validation-loss early stopping; returns the best model.

    checkpoint_hook(model, epoch) is called on every improvement epoch.
    The epoch log line is deterministic (no wall time); elapsed seconds go
    to the hook-free console path only via the caller.
    """
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be non-empty")
    state = TrainState.create(model, config)
    best_model = net.clone_model(state.model)
    reports: list[EpochReport] = []
    log_file = open(log_path, "w", encoding="utf-8", newline="\n") if log_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = state.rng.permutation(len(train_set))
            shuffled = [train_set[i] for i in order]
            seen = 0
            skipped_before = _count_infeasible(shuffled)
            loss_sum = 0.0
            loss_count = 0
            for start in range(0, len(shuffled), config.batch_size):
                batch = shuffled[start : start + config.batch_size]
                batch_loss = train_minibatch(state, batch, config)
                n_ok = sum(1 for u in batch if u.num_frames >= ctc.min_frames(u.labels))
                loss_sum += batch_loss * n_ok
                loss_count += n_ok
                seen += len(batch)
            mean_train = loss_sum / max(loss_count, 1)
            mean_val, val_skipped = evaluate_mean_loss(
                state.model, val_set, config.lhuc_enabled
            )
            state.epoch = epoch
            report = EpochReport(
                epoch=epoch,
                mean_train_loss=mean_train,
                mean_val_loss=mean_val,
                utterances_seen=seen,
                infeasible_skipped=skipped_before + val_skipped,
            )
            reports.append(report)
            if log_file:
                log_file.write(
                    f"{epoch}\t{mean_train!r}\t{mean_val!r}\t{report.infeasible_skipped}\n"
                )
                log_file.flush()
            if mean_val < state.best_val_loss:
                state.best_val_loss = mean_val
                state.epochs_since_best = 0
                best_model = net.clone_model(state.model)
                if checkpoint_hook is not None:
                    checkpoint_hook(best_model, epoch)
            else:
                state.epochs_since_best += 1
                if state.epochs_since_best >= config.patience:
                    break
    finally:
        if log_file:
            log_file.close()
    return best_model, reports


def _count_infeasible(utterances: list[Utterance]) -> int:
    return sum(1 for u in utterances if u.num_frames < ctc.min_frames(u.labels))
