"""Forward computation and training losses for the gated tree-GCN classifier.

Pipeline per example: embed tokens, pool a sentence vector, run mean-over-
neighbors graph convolutions over the dependency tree, regulate each layer's
hidden vectors with a sigmoid gate computed from the aspect embedding, then
score the sentence three ways:

* a diversity penalty that keeps per-layer gates from collapsing onto each
  other (dot products of pooled own-gate vs cross-gate regulated vectors),
* a consistency penalty pulling the model's token-importance distribution
  toward the tree-distance-based one (forward KL, tree side constant),
* the classification loss itself (negative log-likelihood of the gold
  polarity).

Total objective: ``div + alpha * const + beta * pred``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .data import LABELS, DependencyTree, EmbeddingTable, Example, build_tree, embed_example, syntax_scores
from .tensor import (
    DimensionError,
    Tensor,
    add,
    add_n,
    clamp_min,
    concat,
    dot,
    gather_rows,
    log,
    matmul,
    matvec,
    maxpool_rows,
    mean_rows,
    mul,
    relu,
    scale,
    segment_mean_rows,
    sigmoid,
    softmax,
    sqrt,
    sum_all,
    tanh,
    transpose,
)

N_CLASSES = len(LABELS)
PROB_FLOOR = 1e-12


class CheckpointError(ValueError):
    """A checkpoint file is malformed or inconsistent with its consumer."""


@dataclass
class HyperParams:
    """Model-shape knobs, loss trade-offs and ablation switches."""

    hidden: int = 200
    layers: int = 2
    alpha: float = 1.0
    beta: float = 1.0
    include_self_loop: bool = True
    gate_on: bool = True
    div_on: bool = True
    con_on: bool = True
    gatediv_baseline: bool = False
    normalize_div: bool = False

    def __post_init__(self):
        if self.hidden <= 0:
            raise ValueError("hidden must be positive")
        if self.layers < 1:
            raise ValueError("need at least one graph convolution layer")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss trade-off weights must be non-negative")


@dataclass
class LossTerms:
    div: float
    const: float
    pred: float
    total: float


@dataclass
class ForwardTrace:
    """Every intermediate of one example's forward pass, for tests and dumps."""

    embeddings: Tensor | None = None          # (n, d)
    aspect_vec: Tensor | None = None          # (d,)
    sentence_vec: Tensor | None = None        # (hidden,)
    hidden_layers: list[Tensor] = field(default_factory=list)      # each (n, hidden)
    gates: list[Tensor] = field(default_factory=list)              # each (hidden,)
    regulated: list[Tensor] = field(default_factory=list)          # each (n, hidden)
    pooled_regulated: list[Tensor] = field(default_factory=list)   # each (hidden,)
    pooled_cross: dict[tuple[int, int], Tensor] = field(default_factory=dict)
    overall: Tensor | None = None             # (2*hidden,)
    syn: np.ndarray | None = None             # (n,) constant target
    mod: Tensor | None = None                 # (n,)
    class_probs: Tensor | None = None         # (3,)
    losses: LossTerms | None = None


# ---------------------------------------------------------------------------
# parameters


class ModelState:
    """All learnable tensors plus the embedding table they index into."""

    def __init__(self, table: EmbeddingTable, hp: HyperParams, tensors: dict[str, Tensor]):
        self.table = table
        self.hp = hp
        self.w_sent = tensors["w_sent"]
        self.b_sent = tensors["b_sent"]
        self.w_gcn = [tensors[f"w_gcn_{l}"] for l in range(hp.layers)]
        self.b_gcn = [tensors[f"b_gcn_{l}"] for l in range(hp.layers)]
        self.w_gate = [tensors[f"w_gate_{l}"] for l in range(hp.layers)]
        self.b_gate = [tensors[f"b_gate_{l}"] for l in range(hp.layers)]
        self.w_score_overall = tensors["w_score_overall"]
        self.b_score_overall = tensors["b_score_overall"]
        self.w_score_token = tensors["w_score_token"]
        self.b_score_token = tensors["b_score_token"]
        self.w_cls_hidden = tensors["w_cls_hidden"]
        self.b_cls_hidden = tensors["b_cls_hidden"]
        self.w_cls_out = tensors["w_cls_out"]
        self.b_cls_out = tensors["b_cls_out"]

    @classmethod
    def initialize(
        cls,
        table: EmbeddingTable,
        hp: HyperParams,
        rng: np.random.Generator,
        weight_scale: float = 0.1,
        bias_scale: float = 0.0,
    ) -> "ModelState":
        """Seeded uniform init; zero bias_scale keeps fresh gates at exactly 0.5."""
        d = table.dim
        h = hp.hidden

        def weight(rows, cols):
            return Tensor(rng.uniform(-weight_scale, weight_scale, size=(rows, cols)), trainable=True)

        def bias(size):
            if bias_scale == 0.0:
                return Tensor(np.zeros(size), trainable=True)
            return Tensor(rng.uniform(-bias_scale, bias_scale, size=size), trainable=True)

        tensors: dict[str, Tensor] = {}
        tensors["w_sent"] = weight(h, d)
        tensors["b_sent"] = bias(h)
        for l in range(hp.layers):
            tensors[f"w_gcn_{l}"] = weight(h, d if l == 0 else h)
            tensors[f"b_gcn_{l}"] = bias(h)
        for l in range(hp.layers):
            tensors[f"w_gate_{l}"] = weight(h, d)
            tensors[f"b_gate_{l}"] = bias(h)
        tensors["w_score_overall"] = weight(h, 2 * h)
        tensors["b_score_overall"] = bias(h)
        tensors["w_score_token"] = weight(h, h)
        tensors["b_score_token"] = bias(h)
        tensors["w_cls_hidden"] = weight(h, 2 * h)
        tensors["b_cls_hidden"] = bias(h)
        tensors["w_cls_out"] = weight(N_CLASSES, h)
        tensors["b_cls_out"] = bias(N_CLASSES)
        return cls(table, hp, tensors)

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = [("w_sent", self.w_sent), ("b_sent", self.b_sent)]
        for l in range(self.hp.layers):
            out.append((f"w_gcn_{l}", self.w_gcn[l]))
            out.append((f"b_gcn_{l}", self.b_gcn[l]))
        for l in range(self.hp.layers):
            out.append((f"w_gate_{l}", self.w_gate[l]))
            out.append((f"b_gate_{l}", self.b_gate[l]))
        out.extend(
            [
                ("w_score_overall", self.w_score_overall),
                ("b_score_overall", self.b_score_overall),
                ("w_score_token", self.w_score_token),
                ("b_score_token", self.b_score_token),
                ("w_cls_hidden", self.w_cls_hidden),
                ("b_cls_hidden", self.b_cls_hidden),
                ("w_cls_out", self.w_cls_out),
                ("b_cls_out", self.b_cls_out),
            ]
        )
        return out

    def parameters(self) -> list[tuple[str, Tensor]]:
        """Trainable tensors in a fixed order (embeddings first, if trainable)."""
        params = []
        if self.table.vectors.trainable:
            params.append(("embeddings", self.table.vectors))
        params.extend(self.named_tensors())
        return params

    def zero_grads(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()

    def clone(self) -> "ModelState":
        """Deep copy of all tensors (including the embedding table)."""
        table = EmbeddingTable(
            vocabulary=dict(self.table.vocabulary),
            vectors=Tensor(self.table.vectors.data.copy(), trainable=self.table.vectors.trainable),
            dim=self.table.dim,
            unk_index=self.table.unk_index,
        )
        tensors = {
            name: Tensor(t.data.copy(), trainable=t.trainable) for name, t in self.named_tensors()
        }
        return ModelState(table, replace(self.hp), tensors)


# ---------------------------------------------------------------------------
# forward building blocks


def encode(ex: Example, table: EmbeddingTable, params: ModelState):
    """Token embeddings, mean aspect-span vector and pooled sentence vector."""
    E = embed_example(ex, table)
    span = list(range(ex.aspect_from, ex.aspect_to))
    aspect_vec = mean_rows(gather_rows(E, span))
    sentence_vec = tanh(add(matvec(params.w_sent, maxpool_rows(E)), params.b_sent))
    return E, aspect_vec, sentence_vec


def gcn_layer(h_prev: Tensor, tree: DependencyTree, w: Tensor, b: Tensor) -> Tensor:
    """Mean over each token's tree neighborhood, then affine map and ReLU."""
    if h_prev.shape[0] != tree.n:
        raise DimensionError(f"hidden rows {h_prev.shape[0]} != tree size {tree.n}")
    agg = segment_mean_rows(h_prev, tree.neighbor_sets)
    return relu(add(matmul(agg, transpose(w)), b))


def compute_gate(aspect_vec: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-layer sigmoid gate computed from the aspect representation."""
    return sigmoid(add(matvec(w, aspect_vec), b))


def regulate(hidden: Tensor, gate: Tensor) -> Tensor:
    """Multiply every row of a layer's hidden vectors by the gate."""
    return mul(hidden, gate)


def _pair_similarity(a: Tensor, b: Tensor, normalize: bool) -> Tensor:
    if not normalize:
        return dot(a, b)
    norms = mul(sqrt(sum_all(mul(a, a))), sqrt(sum_all(mul(b, b))))
    return mul(dot(a, b), _reciprocal(clamp_min(norms, PROB_FLOOR)))


def _reciprocal(t: Tensor) -> Tensor:
    from .tensor import _record

    if np.any(t.data <= 0):
        raise ValueError("reciprocal requires positive entries")
    out = 1.0 / t.data
    return _record(out, "reciprocal", (t,), lambda g: (-g * out * out,))


def diversity_loss(trace: ForwardTrace, normalize: bool = False) -> Tensor:
    """Mean over ordered layer pairs of pooled own-gate vs cross-gate products.

    With a single layer there are no pairs and the loss is zero.
    """
    n_layers = len(trace.pooled_regulated)
    if n_layers < 2:
        return Tensor(np.zeros(()))
    terms = []
    for l in range(n_layers):
        for lp in range(n_layers):
            if lp == l:
                continue
            terms.append(_pair_similarity(trace.pooled_regulated[l], trace.pooled_cross[(l, lp)], normalize))
    return scale(add_n(terms), 1.0 / (n_layers * (n_layers - 1)))


def gatediv_baseline_loss(gates: list[Tensor], normalize: bool = False) -> Tensor:
    """Diversity measured directly between the gate vectors themselves."""
    n_layers = len(gates)
    if n_layers < 2:
        return Tensor(np.zeros(()))
    terms = []
    for l in range(n_layers):
        for lp in range(n_layers):
            if lp == l:
                continue
            terms.append(_pair_similarity(gates[l], gates[lp], normalize))
    return scale(add_n(terms), 1.0 / (n_layers * (n_layers - 1)))


def model_scores(trace: ForwardTrace, params: ModelState) -> Tensor:
    """Model-side token importances: softmax of transformed-vector dot products."""
    overall_sig = sigmoid(add(matvec(params.w_score_overall, trace.overall), params.b_score_overall))
    token_sig = sigmoid(
        add(matmul(trace.regulated[-1], transpose(params.w_score_token)), params.b_score_token)
    )
    raw = matvec(token_sig, overall_sig)
    return softmax(raw)


def consistency_loss(syn, mod: Tensor) -> Tensor:
    """Forward KL divergence from the model scores to the tree-based scores.

    The tree-based distribution is a constant target: gradients flow only
    into ``mod``. Model probabilities are floored at 1e-12 before the log so
    saturated softmax outputs cannot produce infinities.
    """
    syn_values = np.asarray(syn.data if isinstance(syn, Tensor) else syn, dtype=np.float64)
    if syn_values.shape != mod.shape:
        raise DimensionError(f"score lengths differ: {syn_values.shape} vs {mod.shape}")
    safe_syn = np.maximum(syn_values, PROB_FLOOR)
    entropy_term = float(np.sum(syn_values * np.log(safe_syn)))
    cross_term = dot(Tensor(syn_values), log(clamp_min(mod, PROB_FLOOR)))
    return add(Tensor(np.asarray(entropy_term)), scale(cross_term, -1.0))


def predict(overall: Tensor, params: ModelState) -> Tensor:
    """Class probabilities from the overall representation vector."""
    hidden = relu(add(matvec(params.w_cls_hidden, overall), params.b_cls_hidden))
    logits = add(matvec(params.w_cls_out, hidden), params.b_cls_out)
    return softmax(logits)


def prediction_loss(class_probs: Tensor, gold_index: int) -> Tensor:
    onehot = np.zeros(N_CLASSES)
    onehot[gold_index] = 1.0
    picked = dot(class_probs, Tensor(onehot))
    return scale(log(clamp_min(picked, PROB_FLOOR)), -1.0)


# ---------------------------------------------------------------------------
# full objective


def total_loss(ex: Example, params: ModelState, hp: HyperParams | None = None):
    """Run the full pipeline on one example.

    Returns ``(loss, trace)`` where ``loss`` is a scalar tensor ready for
    ``backward`` and ``trace`` records every intermediate. Ablation switches:
    ``gate_on=False`` replaces gates with constant ones (which also disables
    the diversity term), ``div_on``/``con_on`` drop their terms, and
    ``gatediv_baseline`` swaps the diversity term for gate-vector products.
    """
    hp = hp if hp is not None else params.hp
    trace = ForwardTrace()
    tree = build_tree(ex, include_self_loop=hp.include_self_loop)

    E, aspect_vec, sentence_vec = encode(ex, params.table, params)
    trace.embeddings, trace.aspect_vec, trace.sentence_vec = E, aspect_vec, sentence_vec

    h = E
    for l in range(hp.layers):
        h = gcn_layer(h, tree, params.w_gcn[l], params.b_gcn[l])
        trace.hidden_layers.append(h)

    if hp.gate_on:
        trace.gates = [
            compute_gate(aspect_vec, params.w_gate[l], params.b_gate[l]) for l in range(hp.layers)
        ]
    else:
        trace.gates = [Tensor(np.ones(hp.hidden)) for _ in range(hp.layers)]

    trace.regulated = [regulate(h, g) for h, g in zip(trace.hidden_layers, trace.gates)]
    trace.pooled_regulated = [maxpool_rows(r) for r in trace.regulated]

    div_active = hp.div_on and hp.gate_on and hp.layers >= 2
    if div_active and not hp.gatediv_baseline:
        for l in range(hp.layers):
            for lp in range(hp.layers):
                if lp != l:
                    cross = regulate(trace.hidden_layers[l], trace.gates[lp])
                    trace.pooled_cross[(l, lp)] = maxpool_rows(cross)

    trace.overall = concat(sentence_vec, trace.pooled_regulated[-1])
    trace.syn = syntax_scores(tree)
    trace.mod = model_scores(trace, params)
    trace.class_probs = predict(trace.overall, params)

    if div_active:
        if hp.gatediv_baseline:
            l_div = gatediv_baseline_loss(trace.gates, normalize=hp.normalize_div)
        else:
            l_div = diversity_loss(trace, normalize=hp.normalize_div)
    else:
        l_div = Tensor(np.zeros(()))

    l_const = consistency_loss(trace.syn, trace.mod) if hp.con_on else Tensor(np.zeros(()))
    l_pred = prediction_loss(trace.class_probs, ex.label_index)

    loss = add(add(l_div, scale(l_const, hp.alpha)), scale(l_pred, hp.beta))
    trace.losses = LossTerms(
        div=l_div.item(), const=l_const.item(), pred=l_pred.item(), total=loss.item()
    )
    return loss, trace


# ---------------------------------------------------------------------------
# checkpointing

_CHECKPOINT_FORMAT = "absa-gcn-checkpoint"


def save_checkpoint(path, params: ModelState) -> None:
    """Write hyperparameters, vocabulary and all tensors as one JSON file."""
    vocab_rows = [None] * len(params.table.vocabulary)
    for word, idx in params.table.vocabulary.items():
        vocab_rows[idx] = word
    payload = {
        "format": _CHECKPOINT_FORMAT,
        "version": 1,
        "hyperparams": {
            "hidden": params.hp.hidden,
            "layers": params.hp.layers,
            "alpha": params.hp.alpha,
            "beta": params.hp.beta,
            "include_self_loop": params.hp.include_self_loop,
            "gate_on": params.hp.gate_on,
            "div_on": params.hp.div_on,
            "con_on": params.hp.con_on,
            "gatediv_baseline": params.hp.gatediv_baseline,
            "normalize_div": params.hp.normalize_div,
        },
        "embedding_dim": params.table.dim,
        "unk_index": params.table.unk_index,
        "embeddings_trainable": params.table.vectors.trainable,
        "vocabulary": vocab_rows,
        "embeddings": {
            "shape": list(params.table.vectors.shape),
            "values": params.table.vectors.data.ravel().tolist(),
        },
        "parameters": {
            name: {"shape": list(t.shape), "values": t.data.ravel().tolist()}
            for name, t in params.named_tensors()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def _tensor_from_payload(name: str, entry, trainable: bool) -> Tensor:
    try:
        shape = tuple(entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64).reshape(shape)
    except (TypeError, KeyError, ValueError) as err:
        raise CheckpointError(f"bad tensor {name!r}: {err}") from None
    return Tensor(values, trainable=trainable)


def load_checkpoint(path) -> ModelState:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as err:
            raise CheckpointError(f"not a checkpoint file: {err.msg}") from None
    if not isinstance(payload, dict) or payload.get("format") != _CHECKPOINT_FORMAT:
        raise CheckpointError("not a checkpoint file")
    try:
        hp = HyperParams(**payload["hyperparams"])
        vocab_rows = payload["vocabulary"]
        table = EmbeddingTable(
            vocabulary={word: idx for idx, word in enumerate(vocab_rows)},
            vectors=_tensor_from_payload(
                "embeddings", payload["embeddings"], payload["embeddings_trainable"]
            ),
            dim=payload["embedding_dim"],
            unk_index=payload["unk_index"],
        )
        tensors = {
            name: _tensor_from_payload(name, entry, trainable=True)
            for name, entry in payload["parameters"].items()
        }
        state = ModelState(table, hp, tensors)
    except CheckpointError:
        raise
    except (TypeError, KeyError, ValueError) as err:
        raise CheckpointError(f"incomplete checkpoint: {err}") from None
    if table.vectors.shape[0] != len(vocab_rows) + 1:
        raise CheckpointError("embedding rows do not match vocabulary size")
    return state
