"""Shared independent oracles: plain-numpy forward pass and graph helpers.

Everything here deliberately avoids the package's tensor machinery so the
tests compare two unrelated computation routes.
"""

import numpy as np


def softmax_np(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def sigmoid_np(x):
    return 1.0 / (1.0 + np.exp(-x))


def dense_adjacency(ex, include_self_loop=True):
    """Row-normalized undirected adjacency with optional self-loops."""
    n = ex.n
    A = np.zeros((n, n))
    for i, h in enumerate(ex.heads):
        if h != -1:
            A[i, h] = A[h, i] = 1.0
    if include_self_loop:
        A += np.eye(n)
    else:
        for i in range(n):
            if A[i].sum() == 0.0:
                A[i, i] = 1.0
    return A / A.sum(axis=1, keepdims=True)


def floyd_warshall_distances(ex):
    """All-pairs shortest paths, reduced to min distance into the aspect span."""
    n = ex.n
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for i, h in enumerate(ex.heads):
        if h != -1:
            dist[i, h] = dist[h, i] = 1.0
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i, k] + dist[k, j] < dist[i, j]:
                    dist[i, j] = dist[i, k] + dist[k, j]
    return dist[:, ex.aspect_from : ex.aspect_to].min(axis=1)


def oracle_losses(ex, state, hp):
    """Plain-numpy reimplementation of the model's whole forward pass."""
    vectors = state.table.vectors.data
    E = vectors[[state.table.row_index(t) for t in ex.tokens]]
    aspect = E[ex.aspect_from : ex.aspect_to].mean(axis=0)
    sentence = np.tanh(state.w_sent.data @ E.max(axis=0) + state.b_sent.data)

    A = dense_adjacency(ex, hp.include_self_loop)
    hidden = []
    H = E
    for l in range(hp.layers):
        H = np.maximum(0.0, A @ H @ state.w_gcn[l].data.T + state.b_gcn[l].data)
        hidden.append(H)

    if hp.gate_on:
        gates = [sigmoid_np(state.w_gate[l].data @ aspect + state.b_gate[l].data) for l in range(hp.layers)]
    else:
        gates = [np.ones(hp.hidden) for _ in range(hp.layers)]
    regulated = [h * g for h, g in zip(hidden, gates)]
    pooled = [r.max(axis=0) for r in regulated]

    L = hp.layers
    div = 0.0
    if hp.div_on and hp.gate_on and L >= 2:
        pairs = [(l, lp) for l in range(L) for lp in range(L) if lp != l]
        if hp.gatediv_baseline:
            div = sum(float(gates[l] @ gates[lp]) for l, lp in pairs) / (L * (L - 1))
        else:
            div = sum(
                float(pooled[l] @ (hidden[l] * gates[lp]).max(axis=0)) for l, lp in pairs
            ) / (L * (L - 1))

    overall = np.concatenate([sentence, pooled[-1]])
    syn = softmax_np(-floyd_warshall_distances(ex))
    overall_sig = sigmoid_np(state.w_score_overall.data @ overall + state.b_score_overall.data)
    token_sig = sigmoid_np(regulated[-1] @ state.w_score_token.data.T + state.b_score_token.data)
    mod = softmax_np(token_sig @ overall_sig)
    const = 0.0
    if hp.con_on:
        const = float(
            np.sum(syn * (np.log(np.maximum(syn, 1e-12)) - np.log(np.maximum(mod, 1e-12))))
        )

    cls_hidden = np.maximum(0.0, state.w_cls_hidden.data @ overall + state.b_cls_hidden.data)
    probs = softmax_np(state.w_cls_out.data @ cls_hidden + state.b_cls_out.data)
    pred = -float(np.log(max(probs[ex.label_index], 1e-12)))
    total = div + hp.alpha * const + hp.beta * pred
    return {
        "div": div,
        "const": const,
        "pred": pred,
        "total": total,
        "probs": probs,
        "mod": mod,
        "syn": syn,
    }
