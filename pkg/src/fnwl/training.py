"""Adam optimisation, dataset splitting and the mini-batch training loop.

Reproducibility contract: given the same seed, configuration and data, a
run produces bit-identical weights. Randomness is confined to two
generators - ``build_model`` consumes ``numpy.random.default_rng(seed)``
for initial weights, and ``train`` creates its own
``default_rng(cfg.seed)`` whose only draws are one shuffle permutation per
epoch. Wall-clock entries in the log are measurements, not computation,
and are the one field that varies between otherwise identical runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericError
from .model import (
    ModelConfig,
    ModelWeights,
    backward,
    forward_train,
    predict_in_batches,
)
from .nn.ops import softmax_cross_entropy
from .windows import WindowDataset

LOG_HEADER = "epoch,train_loss,train_acc,test_acc,seconds"


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 1000
    batch_size: int = 64
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shuffle: bool = True
    clip_norm: float | None = None  # optional global-norm guard, off by default

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(
                f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        return self


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter shapes."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> None:
    """One Adam update, in place:

        m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)

    with the usual 1/(1-b^t) bias corrections. Raises ``NumericError``
    naming the parameter if a gradient is non-finite.
    """
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {g.shape} != parameter shape {p.shape} for {name}"
            )
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * np.square(g)
        p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.square(g).sum()) for g in grads.values())))
    if total > max_norm and total > 0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def split_dataset(
    d: WindowDataset, test_fraction: float, seed: int, mode: str = "random"
) -> tuple[WindowDataset, WindowDataset]:
    """Disjoint, exhaustive train/test split, deterministic per seed.

    ``by_subject`` keeps every window of a subject on one side and needs at
    least two distinct subjects.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test fraction must be in (0, 1), got {test_fraction}")
    n = len(d)
    if n < 2:
        raise ValueError(f"cannot split {n} windows")
    rng = np.random.default_rng(seed)
    target = min(max(int(round(n * test_fraction)), 1), n - 1)
    if mode == "random":
        perm = rng.permutation(n)
        test_idx = np.sort(perm[:target])
        train_idx = np.sort(perm[target:])
    elif mode == "by_subject":
        if d.subject_ids is None:
            raise ValueError("by_subject split needs subject ids, dataset has none")
        subjects = np.unique(d.subject_ids)
        if len(subjects) < 2:
            raise ValueError(
                f"by_subject split needs at least 2 subjects, got {len(subjects)}"
            )
        order = rng.permutation(len(subjects))
        test_mask = np.zeros(n, dtype=bool)
        taken = 0
        n_test_subjects = 0
        for sidx in order:
            # stop at the target, always leaving one subject for training
            if taken >= target or n_test_subjects == len(subjects) - 1:
                break
            sel = d.subject_ids == subjects[sidx]
            test_mask |= sel
            taken += int(sel.sum())
            n_test_subjects += 1
        test_idx = np.flatnonzero(test_mask)
        train_idx = np.flatnonzero(~test_mask)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return d.subset(train_idx), d.subset(test_idx)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    seconds: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def to_csv_text(self) -> str:
        lines = [LOG_HEADER]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.train_loss!r},{r.train_acc!r},{r.test_acc!r},{r.seconds!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text())

    @classmethod
    def read_csv(cls, path) -> "TrainLog":
        lines = Path(path).read_text().strip().splitlines()
        if not lines or lines[0] != LOG_HEADER:
            raise ValueError(f"unrecognised training log header in {path}")
        records = []
        for line in lines[1:]:
            e, tl, ta, va, s = line.split(",")
            records.append(EpochRecord(int(e), float(tl), float(ta), float(va), float(s)))
        return cls(records=records)


def _accuracy(
    weights: ModelWeights, cfg: ModelConfig, x: np.ndarray, y: np.ndarray,
    batch_size: int,
) -> float:
    if len(y) == 0:
        return float("nan")
    logits = predict_in_batches(weights, cfg, x, batch_size)
    return float((logits.argmax(axis=1) == y).mean())


def train(
    weights: ModelWeights,
    model_cfg: ModelConfig,
    train_set: WindowDataset,
    test_set: WindowDataset | None,
    cfg: TrainConfig,
    clock=time.perf_counter,
) -> tuple[ModelWeights, TrainLog]:
    """Mini-batch Adam training; mutates and returns ``weights``.

    Per epoch: a seeded shuffle fixes the batch order, every batch runs
    forward / cross-entropy / backward / ``adam_step`` (the final partial
    batch included), and one log record is appended. Train accuracy uses
    each batch's pre-update predictions; test accuracy is evaluated after
    the epoch. Zero epochs returns the untouched weights and an empty log.
    """
    cfg.validate()
    if len(train_set) == 0:
        raise ValueError("training split is empty")
    x_train = train_set.windows
    y_train = train_set.labels
    params = dict(weights.named_tensors())
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        t0 = clock()
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb = x_train[batch]
            yb = y_train[batch]
            logits, cache = forward_train(weights, model_cfg, xb)
            loss, dlogits = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            grads = backward(weights, model_cfg, cache, dlogits)
            if cfg.clip_norm is not None:
                clip_gradients(grads, cfg.clip_norm)
            adam_step(params, grads, state, cfg)
            loss_sum += loss * len(batch)
            correct += int((logits.argmax(axis=1) == yb).sum())
        test_acc = (
            _accuracy(weights, model_cfg, test_set.windows, test_set.labels,
                      cfg.batch_size)
            if test_set is not None and len(test_set)
            else float("nan")
        )
        log.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n,
                train_acc=correct / n,
                test_acc=test_acc,
                seconds=clock() - t0,
            )
        )
    return weights, log
