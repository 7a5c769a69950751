"""Mini-batch training with Adam, evaluation metrics and the ablation driver."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import LABELS, EmbeddingTable, Example, build_random_table
from .model import HyperParams, ModelState, total_loss
from .optim import AdamState, adam_step
from .tensor import add_n, backward, scale


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.001
    seed: int = 0
    hyperparams: HyperParams = field(default_factory=HyperParams)
    dev_metric: str = "accuracy"
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.dev_metric not in ("accuracy", "macro_f1"):
            raise ValueError("dev_metric must be 'accuracy' or 'macro_f1'")


@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    per_class: dict[str, dict[str, float]]
    loss_div: float
    loss_const: float
    loss_pred: float
    loss_total: float


def compute_metrics(golds: list[int], preds: list[int], losses=None) -> Metrics:
    """Accuracy plus unweighted mean of per-class F1 over the three polarities.

    A class absent from both gold and predictions contributes F1 = 0.
    """
    if len(golds) != len(preds) or not golds:
        raise ValueError("need equal, non-empty gold/prediction lists")
    per_class = {}
    f1_sum = 0.0
    for idx, name in enumerate(LABELS):
        tp = sum(1 for g, p in zip(golds, preds) if g == idx and p == idx)
        fp = sum(1 for g, p in zip(golds, preds) if g != idx and p == idx)
        fn = sum(1 for g, p in zip(golds, preds) if g == idx and p != idx)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[name] = {"precision": precision, "recall": recall, "f1": f1}
        f1_sum += f1
    accuracy = sum(1 for g, p in zip(golds, preds) if g == p) / len(golds)
    loss_means = losses or {"div": 0.0, "const": 0.0, "pred": 0.0, "total": 0.0}
    return Metrics(
        accuracy=accuracy,
        macro_f1=f1_sum / len(LABELS),
        per_class=per_class,
        loss_div=loss_means["div"],
        loss_const=loss_means["const"],
        loss_pred=loss_means["pred"],
        loss_total=loss_means["total"],
    )


def evaluate(model: ModelState, data: list[Example], hp: HyperParams | None = None) -> Metrics:
    """Pure function of (model, data): argmax predictions plus mean loss terms."""
    if not data:
        raise ValueError("cannot evaluate on an empty dataset")
    hp = hp if hp is not None else model.hp
    golds, preds = [], []
    sums = {"div": 0.0, "const": 0.0, "pred": 0.0, "total": 0.0}
    for ex in data:
        _, trace = total_loss(ex, model, hp)
        golds.append(ex.label_index)
        preds.append(int(np.argmax(trace.class_probs.data)))
        sums["div"] += trace.losses.div
        sums["const"] += trace.losses.const
        sums["pred"] += trace.losses.pred
        sums["total"] += trace.losses.total
    means = {k: v / len(data) for k, v in sums.items()}
    return compute_metrics(golds, preds, means)


def _log_entry(epoch: int, split: str, metrics: Metrics) -> dict:
    return {
        "epoch": epoch,
        "split": split,
        "accuracy": metrics.accuracy,
        "macro_f1": metrics.macro_f1,
        "loss_div": metrics.loss_div,
        "loss_const": metrics.loss_const,
        "loss_pred": metrics.loss_pred,
        "loss_total": metrics.loss_total,
    }


def init_model_state(table: EmbeddingTable, hp: HyperParams, seed) -> ModelState:
    """Seeded uniform [-0.1, 0.1] weights; biases start at zero."""
    return ModelState.initialize(table, hp, np.random.default_rng(seed))


def train(
    train_set: list[Example],
    dev_set: list[Example] | None = None,
    config: TrainConfig | None = None,
    table: EmbeddingTable | None = None,
    initial_state: ModelState | None = None,
):
    """Train with Adam on shuffled mini-batches; batch loss is the mean.

    Returns ``(model, log)``. With a dev set the returned model is the one
    from the epoch with the best dev metric (earliest epoch wins ties);
    otherwise it is the final-epoch model. The log holds one dict per epoch
    and split, including an epoch-0 entry for the untrained state.
    """
    if not train_set:
        raise ValueError("training set is empty")
    config = config or TrainConfig()
    hp = config.hyperparams
    seeds = np.random.SeedSequence(config.seed).spawn(3)

    if initial_state is not None:
        model = initial_state
    else:
        if table is None:
            table = build_random_table(train_set, dim=hp.hidden, seed=seeds[0])
        model = init_model_state(table, hp, seeds[1])

    adam = AdamState(learning_rate=config.learning_rate)
    shuffle_rng = np.random.default_rng(seeds[2])
    # Epoch 0 records the untrained state; later train entries are running
    # means over that epoch's own forward passes.
    log = [_log_entry(0, "train", evaluate(model, train_set, hp))]
    if dev_set:
        log.append(_log_entry(0, "dev", evaluate(model, dev_set, hp)))

    best_model = None
    best_score = -1.0
    order = np.arange(len(train_set))
    for epoch in range(1, config.epochs + 1):
        if config.shuffle:
            shuffle_rng.shuffle(order)
        golds, preds = [], []
        sums = {"div": 0.0, "const": 0.0, "pred": 0.0, "total": 0.0}
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            model.zero_grads()
            losses = []
            for i in batch:
                ex = train_set[i]
                loss, trace = total_loss(ex, model, hp)
                losses.append(loss)
                golds.append(ex.label_index)
                preds.append(int(np.argmax(trace.class_probs.data)))
                sums["div"] += trace.losses.div
                sums["const"] += trace.losses.const
                sums["pred"] += trace.losses.pred
                sums["total"] += trace.losses.total
            mean_loss = scale(add_n(losses), 1.0 / len(losses))
            backward(mean_loss)
            adam_step(model.parameters(), adam)
        means = {k: v / len(order) for k, v in sums.items()}
        log.append(_log_entry(epoch, "train", compute_metrics(golds, preds, means)))
        if dev_set:
            dev_metrics = evaluate(model, dev_set, hp)
            log.append(_log_entry(epoch, "dev", dev_metrics))
            score = getattr(dev_metrics, config.dev_metric)
            if score > best_score:
                best_score = score
                best_model = model.clone()

    if dev_set and best_model is not None:
        return best_model, log
    return model, log


# ---------------------------------------------------------------------------
# ablation driver

ABLATION_VARIANTS: dict[str, dict] = {
    "full": {},
    "-Div": {"div_on": False},
    "-Con": {"con_on": False},
    "-Div-Con": {"div_on": False, "con_on": False},
    "-Gate": {"gate_on": False},
    "-Gate-Con": {"gate_on": False, "con_on": False},
    "GateDiv": {"gatediv_baseline": True},
}


@dataclass
class AblationResult:
    variant: str
    metrics: Metrics
    log: list[dict]


def run_ablations(
    train_set: list[Example],
    dev_set: list[Example],
    config: TrainConfig,
    table: EmbeddingTable | None = None,
    variants: list[str] | None = None,
) -> dict[str, AblationResult]:
    """Train each variant from identical seeded initial parameters.

    Gate-dependent weights are initialized for every variant (state-size
    parity) even where a variant never uses them.
    """
    if not train_set or not dev_set:
        raise ValueError("ablations need non-empty train and dev sets")
    names = list(ABLATION_VARIANTS) if variants is None else list(variants)
    for name in names:
        if name not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant {name!r}")

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    if table is None:
        table = build_random_table(train_set, dim=config.hyperparams.hidden, seed=seeds[0])
    base = init_model_state(table, config.hyperparams, seeds[1])

    results: dict[str, AblationResult] = {}
    for name in names:
        hp_variant = replace(config.hyperparams, **ABLATION_VARIANTS[name])
        state = base.clone()
        state.hp = hp_variant
        config_variant = replace(config, hyperparams=hp_variant)
        model, log = train(train_set, dev_set, config_variant, initial_state=state)
        results[name] = AblationResult(
            variant=name, metrics=evaluate(model, dev_set, hp_variant), log=log
        )
    return results
