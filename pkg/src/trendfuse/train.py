"""Training loop, binary cross-entropy loss, metrics, and the ablation harness.

The forward pass per sample batch: the text feature runs through the
embedding/convolution path; the per-day [normalized price, prior bit]
pairs unroll through the configured recurrent cell; the per-step states
are attention-pooled with the final state as query; the pooled state and
the text context meet in the convex fusion gate; a fully connected head
emits the upward-move probability. The feedforward baseline instead maps
the flattened inputs straight to a logit.

Batches run in chronological order with no shuffling, so a fixed
(config, data, seed) triple reproduces bit-identical parameters, loss
traces, and reports.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fusion, models, numerics as nm
from .errors import ConfigError, ContractError, DivergenceError
from .ingest import FusedSample
from .models import ModelSpec
from .numerics import ParameterStore, Tensor


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    model: ModelSpec = field(default_factory=ModelSpec)
    prior_effect: bool = True
    window: int = 6
    feature_len: int = 16
    embed_width: int = 16
    kernel_len: int = 3

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.window < 2:
            raise ConfigError(f"window must be >= 2, got {self.window}")
        if self.feature_len < 1:
            raise ConfigError(f"feature_len must be >= 1, got {self.feature_len}")
        if not 1 <= self.kernel_len <= self.embed_width:
            raise ConfigError(f"kernel_len must be in [1, embed_width={self.embed_width}], "
                              f"got {self.kernel_len}")


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    loss_trace: list[float] = field(default_factory=list)
    predictions: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "loss_trace": self.loss_trace,
            "predictions": self.predictions,
            "metrics_at": "final_epoch",
        }


def bce_loss(p: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy; probabilities clamped to [1e-7, 1 - 1e-7]."""
    y = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    if p.shape != y.shape:
        raise ContractError(f"{p.shape} probabilities for {y.shape} targets")
    if np.any((p.data < 0) | (p.data > 1)):
        raise ContractError("probabilities must lie in [0, 1]")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ContractError("targets must be 0 or 1")
    p_pos = nm.clip_min(p, 1e-7)
    p_neg = nm.clip_min(nm.sub(1.0, p), 1e-7)
    per = nm.add(nm.mul(Tensor(y), nm.log(p_pos)),
                 nm.mul(Tensor(1.0 - y), nm.log(p_neg)))
    return nm.neg(nm.mean_(per))


def init_pipeline_params(config: TrainConfig) -> ParameterStore:
    """Parameters for the full forward pass, drawn in a fixed seeded order."""
    rng = np.random.default_rng(config.seed)
    store = ParameterStore()
    spec = config.model
    conv_len = fusion.conv_output_len(config.embed_width, config.kernel_len)
    history = config.window - 1
    fusion.add_text_path_params(store, rng, config.feature_len,
                                config.embed_width, config.kernel_len)
    if spec.kind == "feedforward":
        flat_width = 2 * history + conv_len
        models.add_model_params(store, spec, flat_width, rng)
    else:
        fusion.add_fuse_gate_params(store, rng, conv_len, spec.output_width)
        models.add_model_params(store, spec, 2, rng)
        models.add_head_params(store, spec.output_width, rng)
    return store


def batch_arrays(samples: Sequence[FusedSample],
                 prior_effect: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples into (priors, prices, texts, targets) row matrices.

    With the prior effect disabled the prior block is zero-masked, keeping
    every input width identical across ablation arms.
    """
    priors = np.stack([s.prior for s in samples])
    if not prior_effect:
        priors = np.zeros_like(priors)
    prices = np.stack([s.price_window for s in samples])
    texts = np.stack([s.text_feature for s in samples])
    targets = np.array([s.target for s in samples], dtype=np.float64)
    return priors, prices, texts, targets


def forward_batch(store: ParameterStore, config: TrainConfig, priors: np.ndarray,
                  prices: np.ndarray, texts: np.ndarray) -> Tensor:
    """Probability column for a batch of stacked sample arrays."""
    text_params = store.view("text")
    embedded = fusion.embed(Tensor(texts), text_params)
    context = fusion.conv_text(embedded, text_params)
    if config.model.kind == "feedforward":
        flat = nm.concat([Tensor(prices), Tensor(priors), context], axis=1)
        return nm.sigmoid(models.feedforward_net(flat, store.view("cell")))
    steps = [nm.concat([Tensor(prices[:, t:t + 1]), Tensor(priors[:, t:t + 1])], axis=1)
             for t in range(prices.shape[1])]
    step_feats, final = models.unroll(config.model, store.view("cell"), steps)
    _, pooled = fusion.attention_over_features(final, step_feats)
    fused = fusion.fuse(pooled, context, text_params)
    p, _ = models.output_head(fused, store.view("head"))
    return p


def train_model(samples: Sequence[FusedSample],
                config: TrainConfig) -> tuple[ParameterStore, list[float]]:
    """Adam-train the configured predictor; returns params and per-epoch loss."""
    if not samples:
        raise ContractError("training set is empty")
    store = init_pipeline_params(config)
    state = nm.adam_state(store, lr=config.lr)
    n = len(samples)
    trace: list[float] = []
    for epoch in range(config.epochs):
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = samples[start:start + config.batch_size]
            priors, prices, texts, targets = batch_arrays(batch, config.prior_effect)
            p = forward_batch(store, config, priors, prices, texts)
            loss = bce_loss(p, targets)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}")
            store.zero_grad()
            nm.backward(loss)
            nm.adam_step(store, store.grads(), state)
            total += value * len(batch)
        trace.append(total / n)
    return store, trace


def confusion_report(labels, targets) -> EvalReport:
    """EvalReport metrics from predicted and actual binary labels.

    Precision and recall fall back to 0 when their denominator is 0, and
    F1 to 0 when precision + recall is 0, so reports stay well-formed.
    """
    labels = np.asarray(labels, dtype=int).reshape(-1)
    targets = np.asarray(targets, dtype=int).reshape(-1)
    if labels.shape != targets.shape:
        raise ContractError(f"{labels.shape} labels for {targets.shape} targets")
    tp = int(np.sum((labels == 1) & (targets == 1)))
    fp = int(np.sum((labels == 1) & (targets == 0)))
    tn = int(np.sum((labels == 0) & (targets == 0)))
    fn = int(np.sum((labels == 0) & (targets == 1)))
    accuracy = (tp + tn) / len(labels)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalReport(accuracy=accuracy, precision=precision, recall=recall, f1=f1,
                      tp=tp, fp=fp, tn=tn, fn=fn)


def evaluate(store: ParameterStore, config: TrainConfig,
             samples: Sequence[FusedSample],
             loss_trace: list[float] | None = None) -> EvalReport:
    """Confusion counts and derived metrics over a held-out sample set."""
    if not samples:
        raise ContractError("evaluation set is empty")
    priors, prices, texts, targets = batch_arrays(samples, config.prior_effect)
    p = forward_batch(store, config, priors, prices, texts)
    probs = p.data.reshape(-1)
    labels = (probs >= 0.5).astype(int)
    report = confusion_report(labels, targets)
    report.loss_trace = list(loss_trace or [])
    report.predictions = [
        {"date": s.date.isoformat(), "probability": float(pr),
         "label": int(lb), "target": int(tg)}
        for s, pr, lb, tg in zip(samples, probs, labels, targets.astype(int))
    ]
    return report


def train_and_evaluate(train_samples: Sequence[FusedSample],
                       test_samples: Sequence[FusedSample],
                       config: TrainConfig) -> tuple[ParameterStore, EvalReport]:
    store, trace = train_model(train_samples, config)
    return store, evaluate(store, config, test_samples, loss_trace=trace)


def ablate_prior_effect(train_samples: Sequence[FusedSample],
                        test_samples: Sequence[FusedSample],
                        config: TrainConfig,
                        arm_flags: tuple[bool, bool] = (True, False),
                        ) -> tuple[EvalReport, EvalReport, dict[str, float]]:
    """Train twice from the same seed, toggling only the prior-history input.

    The disabled arm feeds a zero vector of the same length, so both arms
    share identical architectures and parameter shapes. Returns the two
    reports plus the F1/recall deltas (enabled minus disabled).
    """
    cfg_with = dataclasses.replace(config, prior_effect=arm_flags[0])
    cfg_without = dataclasses.replace(config, prior_effect=arm_flags[1])
    _, report_with = train_and_evaluate(train_samples, test_samples, cfg_with)
    _, report_without = train_and_evaluate(train_samples, test_samples, cfg_without)
    deltas = {"f1_delta": report_with.f1 - report_without.f1,
              "recall_delta": report_with.recall - report_without.recall}
    return report_with, report_without, deltas
