"""Negative-sampling training loop with Adam and early stopping.

Each clicked candidate becomes one training instance holding that
positive plus K non-clicked candidates drawn from the same impression
(with replacement only when the impression has fewer than K negatives).
The instance's K+1 scores feed a softmax; the loss is the negative log
probability of the positive.  Validation AUC drives early stopping and
best-checkpoint retention.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import (ImpressionLog, ImpressionRecord, load_word_vectors,
                     parse_behaviors_file, parse_news_file, split_log_by_time)
from .features import impression_features
from .metrics import config_fingerprint, evaluate
from .model import MODES, AvoidanceAwareRanker, ModelConfig, VocabSizes
from .stats import build_timeline


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    news_path: str = ""
    behaviors_path: str | None = None
    train_behaviors_path: str | None = None
    val_behaviors_path: str | None = None
    test_behaviors_path: str | None = None
    word_vectors_path: str | None = None
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    bucket_width: int = 3600
    learning_rate: float = 1e-3
    negatives: int = 4
    max_epochs: int = 10
    patience: int = 3
    batch_size: int = 32
    max_steps: int | None = None
    seed: int = 0
    mode: str = "full"
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.negatives < 1:
            raise ValueError("negatives must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def to_dict(self):
        d = dict(self.__dict__)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        model = d.pop("model", {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if isinstance(model, dict):
            model = ModelConfig.from_dict(model)
        return cls(model=model, **d)

    @classmethod
    def from_json_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Corpus:
    catalog: object
    vocab: object
    train: ImpressionLog
    validation: ImpressionLog
    test: ImpressionLog
    word_init: np.ndarray | None = None

    def all_records(self):
        records = list(self.train) + list(self.validation) + list(self.test)
        records.sort(key=lambda r: r.time)
        return ImpressionLog(records)


def load_corpus(config: TrainConfig) -> Corpus:
    """Parse catalog and behaviors per the config's split settings."""
    catalog, vocab = parse_news_file(config.news_path, config.model.max_title_len)
    if config.train_behaviors_path:
        train = parse_behaviors_file(config.train_behaviors_path)
        val = (parse_behaviors_file(config.val_behaviors_path)
               if config.val_behaviors_path else ImpressionLog([]))
        test = (parse_behaviors_file(config.test_behaviors_path)
                if config.test_behaviors_path else ImpressionLog([]))
    elif config.behaviors_path:
        log = parse_behaviors_file(config.behaviors_path)
        train, val, test = split_log_by_time(log, config.val_fraction, config.test_fraction)
    else:
        raise ValueError("config needs behaviors_path or train_behaviors_path")
    word_init = None
    if config.word_vectors_path:
        word_init = load_word_vectors(config.word_vectors_path, vocab,
                                      config.model.d_word, seed=config.seed)
    return Corpus(catalog, vocab, train, val, test, word_init)


@dataclass
class TrainingInstance:
    history: list[str]
    positive: str
    negatives: list[str]
    time: int
    order: list[int]  # shuffled candidate positions; 0 marks the positive


def sample_negatives(impression: ImpressionRecord, k: int,
                     rng: np.random.Generator) -> list[TrainingInstance]:
    """One instance per clicked candidate, sharing the impression's negative pool.

    Pools smaller than K are sampled with replacement; impressions with no
    negatives yield no instances (the caller counts the skips).
    """
    positives = [news_id for news_id, label in impression.shown if label == 1]
    pool = [news_id for news_id, label in impression.shown if label == 0]
    instances = []
    for pos in positives:
        if not pool:
            continue
        if len(pool) >= k:
            negs = [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]
        else:
            negs = [pool[i] for i in rng.integers(0, len(pool), size=k)]
        order = [int(i) for i in rng.permutation(k + 1)]
        instances.append(TrainingInstance(
            history=list(impression.history), positive=pos, negatives=negs,
            time=impression.time, order=order))
    return instances


def build_training_instances(log: ImpressionLog, k: int, rng) -> tuple[list[TrainingInstance], int]:
    """All instances of a log plus the count of skipped zero-negative positives."""
    instances = []
    skipped = 0
    for record in log:
        n_pos = sum(label for _, label in record.shown)
        got = sample_negatives(record, k, rng)
        skipped += n_pos - len(got)
        instances.extend(got)
    return instances, skipped


def instance_loss(pos_score: ad.Tensor, neg_scores) -> tuple[ad.Tensor, ad.Tensor]:
    """Softmax probability of the positive among K+1 scores, and its -log.

    The loss is computed as logsumexp(scores) - positive, which stays
    finite for any finite scores even when the probability itself
    underflows to zero.
    """
    stacked = ad.concat([pos_score] + list(neg_scores), axis=1)
    probs = ad.softmax(stacked, axis=1)
    p = ad.slice_(probs, cols=slice(0, 1))
    shift = float(stacked.data.max())
    z = ad.sum_(ad.exp(ad.add_scalar(stacked, -shift)))
    logsumexp = ad.add_scalar(ad.log(z), shift)
    return p, ad.add(logsumexp, ad.scale(pos_score, -1.0))


class Adam:
    """Adaptive-moment optimizer with bias correction."""

    def __init__(self, params: dict[str, ad.Tensor], lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(p.data.dtype, copy=False)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            p.data = p.data - p.data.dtype.type(self.lr) * update.astype(p.data.dtype)

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_auc: float
    wall_seconds: float


@dataclass
class TrainResult:
    model: AvoidanceAwareRanker
    best_state: dict[str, np.ndarray]
    best_val_auc: float
    history: list[EpochStats]
    n_instances: int
    n_skipped_instances: int

    def write_log_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("epoch,train_loss,val_auc,wall_seconds\n")
            for row in self.history:
                fh.write(f"{row.epoch},{row.train_loss!r},{row.val_auc!r},"
                         f"{row.wall_seconds:.3f}\n")


def _instance_score_inputs(instance, catalog, timeline, grid_d):
    candidate_ids = [instance.positive] + instance.negatives
    if any(cid not in catalog for cid in candidate_ids):
        return None
    history = [catalog.get(h) for h in instance.history]
    history = [a for a in history if a is not None]
    feats = impression_features(
        timeline, instance.time,
        [a.news_id for a in history] + candidate_ids, grid_d, catalog)
    ordered = [candidate_ids[i] for i in instance.order]
    pos_slot = instance.order.index(0)
    candidates = [catalog.get(cid) for cid in ordered]
    return history, candidates, feats, pos_slot


def train(config: TrainConfig, corpus: Corpus, timeline) -> TrainResult:
    """Optimize a fresh model on the corpus' training split.

    Returns the model loaded with its best-validation parameters along
    with the per-epoch log.  Aborts with TrainingDiverged on a non-finite
    loss.  With ``config.max_steps`` set, exactly that many optimizer
    steps run and early stopping is skipped (small-scale experiments).
    """
    rng = np.random.default_rng(config.seed)
    sizes = VocabSizes.from_corpus(corpus.catalog, corpus.vocab)
    model = AvoidanceAwareRanker(config.model, sizes, seed=config.seed,
                                 word_init=corpus.word_init)
    instances, skipped = build_training_instances(corpus.train, config.negatives, rng)
    if not instances:
        raise ValueError("no training instances; is the training split empty?")

    optimizer = Adam(model.trainable_parameters(), lr=config.learning_rate)
    grid_d = config.model.grid_d
    best_val = -math.inf
    best_state = model.state_dict()
    epochs_since_best = 0
    history = []
    step = 0
    done = False

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(instances))
        loss_sum = 0.0
        loss_count = 0
        for start in range(0, len(order), config.batch_size):
            batch = [instances[i] for i in order[start:start + config.batch_size]]
            optimizer.zero_grads()
            batch_scored = 0
            for instance in batch:
                prepared = _instance_score_inputs(instance, corpus.catalog, timeline, grid_d)
                if prepared is None:
                    continue
                hist, candidates, feats, pos_slot = prepared
                with ad.ComputationRecord() as record:
                    scores = model.score_impression(hist, candidates, feats,
                                                    mode=config.mode)
                    pos = scores[pos_slot]
                    negs = scores[:pos_slot] + scores[pos_slot + 1:]
                    _, loss = instance_loss(pos, negs)
                loss_value = float(loss.data.reshape(()))
                if not math.isfinite(loss_value):
                    raise TrainingDiverged(
                        f"non-finite loss at step {step}, lr={config.learning_rate}, "
                        f"last op {record.last_op()!r}")
                record.backward(loss)
                loss_sum += loss_value
                loss_count += 1
                batch_scored += 1
            if batch_scored == 0:
                continue
            if batch_scored > 1:
                for p in optimizer.params.values():
                    if p.grad is not None:
                        p.grad /= batch_scored
            optimizer.step()
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break

        val_auc = math.nan
        if len(corpus.validation):
            report = evaluate(model, corpus.validation, timeline, corpus.catalog,
                              mode=config.mode, config_dict=config.to_dict())
            val_auc = report.metrics["auc"]
        train_loss = loss_sum / loss_count if loss_count else math.nan
        history.append(EpochStats(epoch=epoch, train_loss=train_loss, val_auc=val_auc,
                                  wall_seconds=time.perf_counter() - t0))

        if config.max_steps is None and not math.isnan(val_auc):
            if val_auc > best_val:
                best_val = val_auc
                best_state = model.state_dict()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= config.patience:
                    break
        else:
            best_state = model.state_dict()
            best_val = val_auc
        if done:
            break

    model.load_state_dict(best_state)
    return TrainResult(model=model, best_state=best_state,
                       best_val_auc=best_val, history=history,
                       n_instances=len(instances), n_skipped_instances=skipped)


def checkpoint_meta(config: TrainConfig, result: TrainResult) -> dict:
    return {
        "config_fingerprint": config_fingerprint(config.to_dict()),
        "mode": config.mode,
        "seed": config.seed,
        "best_val_auc": None if math.isnan(result.best_val_auc)
        or math.isinf(result.best_val_auc) else result.best_val_auc,
        "model": config.model.to_dict(),
    }
