"""Corpus loading, dependency-tree utilities and word-embedding tables.

The corpus wire format is UTF-8 JSON Lines, one object per line::

    {"tokens": ["great", "food"], "heads": [1, -1],
     "aspect_from": 1, "aspect_to": 2, "label": "positive"}

``heads[i]`` is the 0-based parent of token ``i`` and exactly one token
carries ``-1`` as the root. ``aspect_from``/``aspect_to`` delimit a
half-open token span. A malformed line aborts the whole load with its line
number; silently dropping lines would corrupt dataset-count checks.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, gather_rows, softmax

LABELS = ("positive", "neutral", "negative")


class LoadError(ValueError):
    """A corpus, embedding or conversion input failed validation."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Example:
    """One labeled sentence with its dependency parse and aspect span."""

    tokens: tuple[str, ...]
    heads: tuple[int, ...]
    aspect_from: int
    aspect_to: int
    label: str

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        heads = tuple(self.heads)
        for h in heads:
            if isinstance(h, bool) or not isinstance(h, (int, np.integer)):
                raise ValueError(f"heads must be integers, got {h!r}")
        object.__setattr__(self, "heads", tuple(int(h) for h in heads))
        _check_example(self.tokens, self.heads, self.aspect_from, self.aspect_to, self.label)

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def label_index(self) -> int:
        return LABELS.index(self.label)


def _check_example(tokens, heads, aspect_from, aspect_to, label) -> None:
    if len(tokens) == 0:
        raise ValueError("tokens must be non-empty")
    if any(not isinstance(t, str) for t in tokens):
        raise ValueError("tokens must all be strings")
    n = len(tokens)
    if len(heads) != n:
        raise ValueError(f"heads has length {len(heads)}, expected {n}")
    roots = [i for i, h in enumerate(heads) if h == -1]
    if len(roots) != 1:
        raise ValueError("no root" if not roots else f"multiple roots at {roots}")
    for i, h in enumerate(heads):
        if h != -1 and not 0 <= h < n:
            raise ValueError(f"head {h} of token {i} out of range")
        if h == i:
            raise ValueError(f"token {i} is its own head")
    # Every token must reach the root without revisiting anything.
    for i in range(n):
        j, steps = i, 0
        while heads[j] != -1:
            j = heads[j]
            steps += 1
            if steps > n:
                raise ValueError(f"cycle reachable from token {i}")
    if not (isinstance(aspect_from, int) and isinstance(aspect_to, int)):
        raise ValueError("aspect span bounds must be integers")
    if not 0 <= aspect_from < aspect_to <= n:
        raise ValueError(f"aspect span [{aspect_from}, {aspect_to}) invalid for {n} tokens")
    if label not in LABELS:
        raise ValueError(f"label {label!r} not one of {LABELS}")


_REQUIRED_FIELDS = ("tokens", "heads", "aspect_from", "aspect_to", "label")


def parse_corpus(path) -> list[Example]:
    """Load a JSON Lines corpus, failing on the first malformed line."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise LoadError("empty line", line=lineno)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise LoadError(f"malformed JSON: {err.msg}", line=lineno) from None
            if not isinstance(obj, dict):
                raise LoadError("expected a JSON object", line=lineno)
            for name in _REQUIRED_FIELDS:
                if name not in obj:
                    raise LoadError(f"missing field {name!r}", line=lineno)
            try:
                examples.append(
                    Example(
                        tokens=obj["tokens"],
                        heads=obj["heads"],
                        aspect_from=obj["aspect_from"],
                        aspect_to=obj["aspect_to"],
                        label=obj["label"],
                    )
                )
            except (TypeError, ValueError) as err:
                raise LoadError(str(err), line=lineno) from None
    return examples


def write_corpus(examples, path) -> None:
    """Write examples in the JSON Lines corpus format."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "tokens": list(ex.tokens),
                        "heads": list(ex.heads),
                        "aspect_from": ex.aspect_from,
                        "aspect_to": ex.aspect_to,
                        "label": ex.label,
                    }
                )
            )
            fh.write("\n")


# ---------------------------------------------------------------------------
# dependency trees


@dataclass(frozen=True)
class DependencyTree:
    """Undirected adjacency derived from parent links, plus aspect distances.

    ``neighbor_sets[i]`` is sorted and contains ``i`` itself when self-loops
    are enabled; ``path_len_to_aspect[i]`` is the minimum tree distance from
    token ``i`` to any aspect token (0 inside the span).
    """

    n: int
    neighbor_sets: tuple[tuple[int, ...], ...]
    path_len_to_aspect: tuple[int, ...]


def build_tree(ex: Example, include_self_loop: bool = True) -> DependencyTree:
    n = ex.n
    adjacency: list[set[int]] = [set() for _ in range(n)]
    for i, h in enumerate(ex.heads):
        if h == -1:
            continue
        adjacency[i].add(h)
        adjacency[h].add(i)

    neighbor_sets = []
    for i in range(n):
        nb = set(adjacency[i])
        # An isolated token keeps itself so mean aggregation stays defined.
        if include_self_loop or not nb:
            nb.add(i)
        neighbor_sets.append(tuple(sorted(nb)))

    # Multi-source BFS seeded with every aspect token at distance 0.
    dist = [-1] * n
    queue = deque()
    for i in range(ex.aspect_from, ex.aspect_to):
        dist[i] = 0
        queue.append(i)
    while queue:
        i = queue.popleft()
        for j in adjacency[i]:
            if dist[j] == -1:
                dist[j] = dist[i] + 1
                queue.append(j)

    return DependencyTree(n=n, neighbor_sets=tuple(neighbor_sets), path_len_to_aspect=tuple(dist))


def syntax_scores(tree: DependencyTree) -> np.ndarray:
    """Importance of each token from the tree alone: softmax of negated distance.

    The result is a probability vector whose maximum sits on the aspect span.
    """
    raw = -np.asarray(tree.path_len_to_aspect, dtype=np.float64)
    return softmax(Tensor(raw)).data


# ---------------------------------------------------------------------------
# embeddings


@dataclass
class EmbeddingTable:
    """Word-vector lookup with an unknown-word row.

    Lookups try the exact token first, then a case-insensitive match, then
    fall back to the unknown row.
    """

    vocabulary: dict[str, int]
    vectors: Tensor
    dim: int
    unk_index: int
    _lowercase: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for word, idx in self.vocabulary.items():
            self._lowercase.setdefault(word.lower(), idx)

    def row_index(self, token: str) -> int:
        idx = self.vocabulary.get(token)
        if idx is not None:
            return idx
        return self._lowercase.get(token.lower(), self.unk_index)


def load_embeddings(path, trainable: bool = True) -> EmbeddingTable:
    """Read a text embedding file: one ``word v1 ... vd`` per line.

    Vocabulary order follows the file; an unknown-word row equal to the
    component-wise mean of all loaded vectors is appended at the end.
    """
    words: dict[str, int] = {}
    rows: list[list[float]] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if len(parts) < 2:
                raise LoadError("expected 'word v1 ... vd'", line=lineno)
            word = parts[0]
            if word in words:
                raise LoadError(f"duplicate word {word!r}", line=lineno)
            try:
                vec = [float(v) for v in parts[1:]]
            except ValueError:
                raise LoadError("non-numeric vector entry", line=lineno) from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise LoadError(f"dimension {len(vec)} != {dim}", line=lineno)
            words[word] = len(rows)
            rows.append(vec)
    if not rows:
        raise LoadError("no vectors")
    matrix = np.asarray(rows, dtype=np.float64)
    matrix = np.vstack([matrix, matrix.mean(axis=0)])
    return EmbeddingTable(
        vocabulary=words,
        vectors=Tensor(matrix, trainable=trainable),
        dim=dim,
        unk_index=len(rows),
    )


def build_random_table(examples, dim: int, seed, trainable: bool = True) -> EmbeddingTable:
    """Seeded uniform [-0.1, 0.1] table over the corpus vocabulary.

    Vocabulary order is first occurrence across the examples, which keeps the
    table deterministic for a fixed corpus and seed.
    """
    if dim <= 0:
        raise ValueError("embedding dimension must be positive")
    words: dict[str, int] = {}
    for ex in examples:
        for tok in ex.tokens:
            if tok not in words:
                words[tok] = len(words)
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.1, 0.1, size=(len(words) + 1, dim))
    return EmbeddingTable(
        vocabulary=words,
        vectors=Tensor(matrix, trainable=trainable),
        dim=dim,
        unk_index=len(words),
    )


def embed_example(ex: Example, table: EmbeddingTable) -> Tensor:
    """Row i of the result is the vector for ``ex.tokens[i]``."""
    indices = [table.row_index(tok) for tok in ex.tokens]
    return gather_rows(table.vectors, indices)


# ---------------------------------------------------------------------------
# CoNLL-U conversion

_CONLLU_COLUMNS = 10
_ID, _FORM, _HEAD = 0, 1, 6


def read_conllu_sentences(path) -> list[tuple[list[str], list[int]]]:
    """Parse CoNLL-U into (tokens, heads) pairs with 0-based heads, -1 root.

    Comment lines, multiword ranges (``1-2``) and empty nodes (``1.1``) are
    skipped; every remaining line must carry the full 10 columns.
    """
    sentences: list[tuple[list[str], list[int]]] = []
    tokens: list[str] = []
    heads: list[int] = []

    def flush():
        if tokens:
            sentences.append((list(tokens), list(heads)))
            tokens.clear()
            heads.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line:
                flush()
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != _CONLLU_COLUMNS:
                raise LoadError(f"expected {_CONLLU_COLUMNS} columns, got {len(cols)}", line=lineno)
            if "-" in cols[_ID] or "." in cols[_ID]:
                continue
            try:
                head = int(cols[_HEAD])
            except ValueError:
                raise LoadError(f"non-integer HEAD {cols[_HEAD]!r}", line=lineno) from None
            tokens.append(cols[_FORM])
            heads.append(head - 1 if head > 0 else -1)
    flush()
    return sentences


def convert_conllu(conllu_path, aspects_path) -> list[Example]:
    """Pair CoNLL-U sentences with a sidecar aspect file into Examples.

    The sidecar is a JSON array of ``{"sentence_index", "from", "to",
    "label"}`` objects; one sentence may carry several aspects.
    """
    sentences = read_conllu_sentences(conllu_path)
    with open(aspects_path, encoding="utf-8") as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as err:
            raise LoadError(f"malformed aspect JSON: {err.msg}") from None
    if not isinstance(entries, list):
        raise LoadError("aspect sidecar must be a JSON array")
    examples = []
    for pos, entry in enumerate(entries):
        try:
            sent_idx = entry["sentence_index"]
            span_from = entry["from"]
            span_to = entry["to"]
            label = entry["label"]
        except (TypeError, KeyError) as err:
            raise LoadError(f"aspect entry {pos}: missing field {err}") from None
        if not isinstance(sent_idx, int) or not 0 <= sent_idx < len(sentences):
            raise LoadError(f"aspect entry {pos}: sentence_index {sent_idx!r} out of range")
        tokens, heads = sentences[sent_idx]
        try:
            examples.append(
                Example(tokens=tokens, heads=heads, aspect_from=span_from, aspect_to=span_to, label=label)
            )
        except (TypeError, ValueError) as err:
            raise LoadError(f"aspect entry {pos}: {err}") from None
    return examples
