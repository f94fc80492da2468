"""
Pool-based active learning on a toy heteroscedastic regression task.

A one-hidden-layer tanh trunk feeds two linear heads: the predictor and the
loss-prediction head. The loss head is trained with the pairwise objectives
from rank_loss and drives acquisition; random acquisition is the baseline.
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

import rank_loss
from errors import BatchSizeError, DomainError, EmptyLabeledSetError
from rank_loss import KL, HingeConfig
from sim_config import STRATEGIES, ModelConfig, TaskConfig, TrainingConfig
from tables import OutputTable

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["cycle", "strategy", "batch_mean_true_loss", "batch_std_true_loss",
                  "holdout_mse", "pool_corr"]
SUMMARY_METRICS = ["batch_mean_true_loss", "holdout_mse", "pool_corr", "pool_spearman"]


@dataclass(frozen=True)
class ToyTask:
    """Inputs uniform on [low, high]^d; targets target_fn(x) + noise_profile(x) * N(0, 1)"""

    input_dim: int
    target_fn: Callable[[np.ndarray], np.ndarray]
    noise_profile: Callable[[np.ndarray], np.ndarray]
    low: float = -1.0
    high: float = 1.0

    def sample_inputs(self, rng, count):
        return rng.uniform(self.low, self.high, size=(count, self.input_dim))

    def sample_targets(self, inputs, rng):
        return self.target_fn(inputs) + self.noise_profile(inputs) * rng.standard_normal(len(inputs))


def build_task(task_config=None):
    cfg = task_config or TaskConfig()
    if cfg.target == "sin":
        def target(x):
            return np.sin(cfg.frequency * x[:, 0])
    elif cfg.target == "linear":
        def target(x):
            return cfg.slope * x.sum(axis=1)
    elif cfg.target == "constant":
        def target(x):
            return np.full(len(x), cfg.constant)
    else:
        raise DomainError(f"unknown task target {cfg.target!r}")

    def noise(x):
        return np.where(x[:, 0] >= cfg.noise_boundary, cfg.noise_high, cfg.noise_low)

    return ToyTask(input_dim=cfg.input_dim, target_fn=target, noise_profile=noise)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    task_loss: float
    rank_loss: float


@dataclass
class TwoHeadModel:
    W1: np.ndarray
    b1: np.ndarray
    v: np.ndarray
    c: float
    u: Optional[np.ndarray] = None  # loss head; None for a predictor-only model
    history: list = field(default_factory=list)

    @classmethod
    def initialize(cls, input_dim, model_config, seed, loss_head=True):
        """Random trunk, zero predictor head; the loss head has its own stream"""
        trunk_rng = np.random.default_rng([seed, 0])
        hidden = model_config.hidden
        W1 = trunk_rng.normal(0.0, model_config.init_scale / math.sqrt(input_dim), size=(hidden, input_dim))
        b1 = trunk_rng.normal(0.0, 1.0, size=hidden)
        u = None
        if loss_head:
            u = np.random.default_rng([seed, 1]).normal(0.0, 1.0 / math.sqrt(hidden), size=hidden)
        return cls(W1=W1, b1=b1, v=np.zeros(hidden), c=0.0, u=u)

    def features(self, inputs):
        return np.tanh(inputs @ self.W1.T + self.b1)

    def predict(self, inputs):
        return self.features(inputs) @ self.v + self.c

    def predicted_loss(self, inputs):
        if self.u is None:
            raise DomainError("model has no loss-prediction head")
        return self.features(inputs) @ self.u

    def apply(self, grads, training):
        self.W1 = self.W1 - training.step * grads["W1"]
        self.b1 = self.b1 - training.step * grads["b1"]
        self.v = self.v - training.step * grads["v"]
        self.c = self.c - training.step * grads["c"]
        if self.u is not None and "u" in grads:
            self.u = self.u - training.loss_step * grads["u"]


@dataclass(frozen=True)
class MinibatchResult:
    task_loss: float
    rank_loss: float
    grads: dict
    rank_weight: float = 1.0

    @property
    def total(self):
        return self.task_loss + self.rank_weight * self.rank_loss


def _adjacent_pairs(count):
    first = np.arange(0, 2 * (count // 2), 2)
    return first, first + 1


def minibatch_gradients(model, inputs, targets, true_losses, objective, training):
    """
    Gradients of mean squared error plus rank_weight times the mean pair loss

    Rows 0-1, 2-3, ... of the minibatch form the pairs. true_losses are
    constants. The loss-head gradient reaches the trunk only through
    training.backflow.
    """
    pre = inputs @ model.W1.T + model.b1
    feats = np.tanh(pre)
    residual = feats @ model.v + model.c - targets
    d_pred = 2.0 * residual / len(targets)
    grads = {"v": feats.T @ d_pred, "c": float(np.sum(d_pred))}
    d_feats = np.outer(d_pred, model.v)

    rank_value = 0.0
    first, second = _adjacent_pairs(len(targets))
    if model.u is not None:
        grads["u"] = np.zeros_like(model.u)
    if objective is not None and model.u is not None and first.size:
        pairs = rank_loss.pair_gradient_batch(true_losses[first], true_losses[second],
                                              feats[first], feats[second], model.u, objective)
        rank_value = float(np.mean(pairs.loss_value))
        grads["u"] = training.rank_weight * pairs.grad_w.mean(axis=0)
        if training.backflow > 0.0:
            d_rank = np.zeros_like(feats)
            d_rank[first] = pairs.grad_theta_i
            d_rank[second] = pairs.grad_theta_j
            d_feats = d_feats + (training.backflow * training.rank_weight / first.size) * d_rank

    d_pre = d_feats * (1.0 - feats * feats)
    grads["W1"] = d_pre.T @ inputs
    grads["b1"] = d_pre.sum(axis=0)
    task_value = float(np.mean(residual * residual))
    return MinibatchResult(task_loss=task_value, rank_loss=rank_value, grads=grads,
                           rank_weight=training.rank_weight)


def ranking_objective(model, inputs, true_losses, objective):
    """Mean pair loss of the loss head over adjacent rows"""
    first, second = _adjacent_pairs(len(true_losses))
    feats = model.features(inputs)
    pairs = rank_loss.pair_gradient_batch(true_losses[first], true_losses[second],
                                          feats[first], feats[second], model.u, objective)
    return float(np.mean(pairs.loss_value))


def true_losses(model, inputs, targets):
    return (model.predict(inputs) - targets) ** 2


def train_cycle(model, pool, objective, training, seed):
    """
    Plain minibatch gradient descent on the labeled set; returns a new model

    True losses are recomputed with the current predictor at the start of
    every epoch and held fixed within it.
    """
    if not pool.labeled_ids:
        raise EmptyLabeledSetError("cannot train on an empty labeled set")
    _, inputs, targets = pool.labeled_arrays()
    trained = copy.deepcopy(model)
    trained.history = []
    rng = np.random.default_rng(seed)
    count = len(targets)

    for epoch in range(training.epochs):
        losses = true_losses(trained, inputs, targets)
        order = rng.permutation(count)
        task_total = rank_total = 0.0
        batches = 0
        for start in range(0, count, training.minibatch):
            index = order[start:start + training.minibatch]
            result = minibatch_gradients(trained, inputs[index], targets[index], losses[index], objective, training)
            trained.apply(result.grads, training)
            task_total += result.task_loss
            rank_total += result.rank_loss
            batches += 1
        trained.history.append(EpochRecord(epoch=epoch, task_loss=task_total / batches,
                                           rank_loss=rank_total / batches))

    if trained.history:
        last = trained.history[-1]
        logger.debug(f"Trained {training.epochs} epochs on {count} labels: "
                     f"task {last.task_loss:.4g}, rank {last.rank_loss:.4g}")
    return trained


@dataclass
class Pool:
    """Candidate inputs by id, the labeled/unlabeled split, and a holdout set

    Targets of unlabeled ids are hidden in oracle_targets and only revealed
    through label().
    """

    inputs: np.ndarray
    oracle_targets: np.ndarray
    labeled_ids: list
    unlabeled_ids: list
    holdout_inputs: np.ndarray
    holdout_targets: np.ndarray

    @property
    def labeled(self):
        return [(i, self.inputs[i], float(self.oracle_targets[i])) for i in self.labeled_ids]

    @property
    def unlabeled(self):
        return [(i, self.inputs[i]) for i in self.unlabeled_ids]

    @property
    def holdout(self):
        offset = len(self.inputs)
        return [(offset + n, x, float(y)) for n, (x, y) in enumerate(zip(self.holdout_inputs, self.holdout_targets))]

    def labeled_arrays(self):
        ids = np.asarray(self.labeled_ids, dtype=int)
        return ids, self.inputs[ids], self.oracle_targets[ids]

    def unlabeled_arrays(self):
        ids = np.asarray(self.unlabeled_ids, dtype=int)
        return ids, self.inputs[ids]

    def reveal(self, ids):
        """Oracle targets of ids; used for scoring an acquired batch"""
        return self.oracle_targets[np.asarray(ids, dtype=int)]

    def label(self, ids):
        ids = [int(i) for i in ids]
        if len(set(ids)) != len(ids):
            raise DomainError("acquired ids contain duplicates")
        waiting = set(self.unlabeled_ids)
        missing = [i for i in ids if i not in waiting]
        if missing:
            raise DomainError(f"ids {missing[:5]} are not in the unlabeled set")
        chosen = set(ids)
        self.unlabeled_ids = [i for i in self.unlabeled_ids if i not in chosen]
        self.labeled_ids = self.labeled_ids + ids


def make_pool(task, pool_size, holdout_size, init_labeled, seed):
    if init_labeled > pool_size:
        raise BatchSizeError(f"initial labeled size {init_labeled} exceeds pool size {pool_size}")
    rng = np.random.default_rng([seed, 2])
    inputs = task.sample_inputs(rng, pool_size)
    targets = task.sample_targets(inputs, rng)
    holdout_inputs = task.sample_inputs(rng, holdout_size)
    holdout_targets = task.sample_targets(holdout_inputs, rng)
    chosen = sorted(int(i) for i in rng.choice(pool_size, size=init_labeled, replace=False))
    chosen_set = set(chosen)
    return Pool(inputs=inputs, oracle_targets=targets,
                labeled_ids=chosen, unlabeled_ids=[i for i in range(pool_size) if i not in chosen_set],
                holdout_inputs=holdout_inputs, holdout_targets=holdout_targets)


def acquire(model, pool, strategy, batch, seed):
    """
    Pick batch unlabeled ids

    random draws without replacement; hinge_ll and llpp take the largest
    predicted losses, breaking ties by smaller id.
    """
    ids, inputs = pool.unlabeled_arrays()
    if batch < 1 or batch > len(ids):
        raise BatchSizeError(f"batch {batch} is outside 1..{len(ids)} unlabeled samples")
    if strategy == "random":
        rng = np.random.default_rng(seed)
        return [int(i) for i in rng.choice(ids, size=batch, replace=False)]
    if strategy in ("hinge_ll", "llpp"):
        scores = model.predicted_loss(inputs)
        order = np.lexsort((ids, -scores))
        return [int(i) for i in ids[order[:batch]]]
    raise DomainError(f"unknown strategy {strategy!r}")


def strategy_objective(strategy, training):
    if strategy == "random":
        return None
    if strategy == "hinge_ll":
        return HingeConfig(training.hinge_margin)
    if strategy == "llpp":
        return KL
    raise DomainError(f"unknown strategy {strategy!r}")


def _correlation(a, b, method):
    if len(a) < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    if method == "spearman":
        return float(stats.spearmanr(a, b)[0])
    return float(stats.pearsonr(a, b)[0])


@dataclass(frozen=True)
class SimRecord:
    cycle: int
    strategy: str
    batch_mean_true_loss: float
    batch_std_true_loss: float
    holdout_mse: float
    pool_corr: float
    pool_spearman: float = 0.0

    def row(self):
        return [getattr(self, name) for name in REPORT_COLUMNS]


@dataclass
class SimReport:
    seed: int
    records: list = field(default_factory=list)

    def to_table(self):
        table = OutputTable(list(REPORT_COLUMNS))
        for record in self.records:
            table.add_row(record.row())
        return table

    def record(self, cycle, strategy):
        for record in self.records:
            if record.cycle == cycle and record.strategy == strategy:
                return record
        raise KeyError((cycle, strategy))


def _stream_seed(seed, cycle):
    return int(np.random.SeedSequence([seed, cycle]).generate_state(1)[0])


def _score(cycle, strategy, batch_losses, model, pool):
    holdout_mse = float(np.mean(true_losses(model, pool.holdout_inputs, pool.holdout_targets)))
    ids, inputs = pool.unlabeled_arrays()
    corr = spearman = 0.0
    if model.u is not None and ids.size:
        predicted = model.predicted_loss(inputs)
        actual = true_losses(model, inputs, pool.reveal(ids))
        corr = _correlation(predicted, actual, "pearson")
        spearman = _correlation(predicted, actual, "spearman")
    return SimRecord(cycle=cycle, strategy=strategy,
                     batch_mean_true_loss=float(np.mean(batch_losses)),
                     batch_std_true_loss=float(np.std(batch_losses)),
                     holdout_mse=holdout_mse, pool_corr=corr, pool_spearman=spearman)


def run_simulation(task, strategies, cycles, init_labeled, batch, seed,
                   model_config=None, training=None, pool_size=1000, holdout_size=500):
    """
    Run every strategy from the same initial split and seeds

    Cycle 0 scores the base model on its initial labeled set. Cycle c >= 1
    scores the batch acquired by the previous model, under that model, then
    the holdout MSE and pool correlation of the model retrained with it.
    """
    model_config = model_config or ModelConfig()
    training = training or TrainingConfig()
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise DomainError(f"unknown strategy {strategy!r}")
    base_pool = make_pool(task, pool_size, holdout_size, init_labeled, seed)
    report = SimReport(seed=seed)

    for strategy in strategies:
        objective = strategy_objective(strategy, training)
        pool = copy.deepcopy(base_pool)
        # random never ranks, so it carries no loss head and reports zero pool correlation
        model = TwoHeadModel.initialize(task.input_dim, model_config, seed, loss_head=objective is not None)
        model = train_cycle(model, pool, objective, training, _stream_seed(seed, 0))
        _, inputs, targets = pool.labeled_arrays()
        report.records.append(_score(0, strategy, true_losses(model, inputs, targets), model, pool))

        for cycle in range(1, cycles + 1):
            if not pool.unlabeled_ids:
                logger.warning(f"{strategy}: pool exhausted before cycle {cycle}")
                break
            size = min(batch, len(pool.unlabeled_ids))
            chosen = acquire(model, pool, strategy, size, _stream_seed(seed, cycle))
            batch_losses = true_losses(model, pool.inputs[chosen], pool.reveal(chosen))
            pool.label(chosen)
            model = train_cycle(model, pool, objective, training, _stream_seed(seed, cycle))
            record = _score(cycle, strategy, batch_losses, model, pool)
            report.records.append(record)
            logger.info(f"seed {seed} {strategy} cycle {cycle}: batch loss {record.batch_mean_true_loss:.4g}, "
                        f"holdout MSE {record.holdout_mse:.4g}, pool corr {record.pool_corr:.3f}")
    return report


def run_from_config(sim, seed=None):
    seed = sim.seed if seed is None else seed
    return run_simulation(build_task(sim.task), sim.strategies, sim.cycles, sim.init_labeled, sim.batch, seed,
                          model_config=sim.model, training=sim.training,
                          pool_size=sim.pool_size, holdout_size=sim.holdout_size)


def run_repeats(sim, seeds):
    return [run_from_config(sim, seed) for seed in seeds]


def summarize_reports(reports):
    """Mean and standard deviation of every metric across seeds, per (cycle, strategy)"""
    columns = ["cycle", "strategy", "seeds"]
    for metric in SUMMARY_METRICS:
        columns += [f"{metric}_mean", f"{metric}_std"]
    table = OutputTable(columns)
    keys = []
    for record in reports[0].records if reports else []:
        keys.append((record.cycle, record.strategy))
    for cycle, strategy in keys:
        found = []
        for report in reports:
            try:
                found.append(report.record(cycle, strategy))
            except KeyError:
                continue
        row = [cycle, strategy, len(found)]
        for metric in SUMMARY_METRICS:
            values = np.array([getattr(record, metric) for record in found])
            row += [float(np.mean(values)), float(np.std(values))]
        table.add_row(row)
    return table


def loss_histogram(model, pool):
    """True losses of the current predictor over the labeled set"""
    _, inputs, targets = pool.labeled_arrays()
    return true_losses(model, inputs, targets)
