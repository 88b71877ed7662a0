"""Label-aware document representation via hybrid attention.

Pipeline per document: token embeddings (d x n) run through a Bi-LSTM
giving forward/backward context matrices H_f, H_b (r x n each) stacked
into H (2r x n).  Two attention routes score every word against every
label: a content route tanh(W_s1 H) scored by per-label rows of W_s2, and
an interaction route matching (H_f + H_b) against projected label vectors
Q = W_q L.  Each route yields per-label context vectors (columns of a
2r x k' matrix); a learned gate mixes the two convexly per label, and a
small feed-forward head turns each mixed column into a probability.

Ablation variants: "sa" (content route only), "ia" (interaction route
only), "sa+ia" (fixed 50/50 mix), "laha" (learned gate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import numeric as nm
from .errors import ShapeError, ValidationError
from .numeric import Node

VARIANTS = ("sa", "ia", "sa+ia", "laha")


@dataclass
class ModelConfig:
    k: int
    max_len: int
    d: int = 300
    r: int = 256
    d_a: int = 256

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ValidationError(f"{f.name} must be a positive integer")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ModelParams:
    """Every trainable matrix, in canonical (checkpoint) order."""

    embedding: np.ndarray      # vocab x d
    lstm_wx_f: np.ndarray      # 4r x d   gate order: input, forget, cell, output
    lstm_wh_f: np.ndarray      # 4r x r
    lstm_b_f: np.ndarray       # 4r x 1
    lstm_wx_b: np.ndarray
    lstm_wh_b: np.ndarray
    lstm_b_b: np.ndarray
    w_s1: np.ndarray           # d_a x 2r
    w_s2: np.ndarray           # k x d_a
    w_q: np.ndarray            # r x r
    fuse1_w: np.ndarray        # 1 x 2r
    fuse1_b: np.ndarray        # 1 x 1
    fuse2_w: np.ndarray        # 1 x 2r
    fuse2_b: np.ndarray        # 1 x 1
    w_f: np.ndarray            # r x 2r
    w_o: np.ndarray            # 1 x r
    b_o: np.ndarray            # 1 x 1

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def names() -> list[str]:
        return [f.name for f in fields(ModelParams)]


def expected_shapes(cfg: ModelConfig, vocab_size: int) -> dict[str, tuple[int, int]]:
    r, d, d_a, k = cfg.r, cfg.d, cfg.d_a, cfg.k
    return {
        "embedding": (vocab_size, d),
        "lstm_wx_f": (4 * r, d), "lstm_wh_f": (4 * r, r), "lstm_b_f": (4 * r, 1),
        "lstm_wx_b": (4 * r, d), "lstm_wh_b": (4 * r, r), "lstm_b_b": (4 * r, 1),
        "w_s1": (d_a, 2 * r), "w_s2": (k, d_a), "w_q": (r, r),
        "fuse1_w": (1, 2 * r), "fuse1_b": (1, 1),
        "fuse2_w": (1, 2 * r), "fuse2_b": (1, 1),
        "w_f": (r, 2 * r), "w_o": (1, r), "b_o": (1, 1),
    }


def _xavier(rng, shape: tuple[int, int], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: ModelConfig, embedding: np.ndarray, seed: int) -> ModelParams:
    """Xavier-uniform weights, zero biases, seeded; embedding table given."""
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.ndim != 2 or embedding.shape[1] != cfg.d:
        raise ShapeError(
            f"embedding table must be (vocab, {cfg.d}), got {embedding.shape}"
        )
    rng = np.random.default_rng(seed)
    r, d, d_a, k = cfg.r, cfg.d, cfg.d_a, cfg.k

    def lstm_direction():
        wx = _xavier(rng, (4 * r, d), d, r)
        wh = _xavier(rng, (4 * r, r), r, r)
        b = np.zeros((4 * r, 1))
        return wx, wh, b

    wx_f, wh_f, b_f = lstm_direction()
    wx_b, wh_b, b_b = lstm_direction()
    return ModelParams(
        embedding=embedding.copy(),
        lstm_wx_f=wx_f, lstm_wh_f=wh_f, lstm_b_f=b_f,
        lstm_wx_b=wx_b, lstm_wh_b=wh_b, lstm_b_b=b_b,
        w_s1=_xavier(rng, (d_a, 2 * r), 2 * r, d_a),
        w_s2=_xavier(rng, (k, d_a), d_a, k),
        w_q=_xavier(rng, (r, r), r, r),
        fuse1_w=_xavier(rng, (1, 2 * r), 2 * r, 1),
        fuse1_b=np.zeros((1, 1)),
        fuse2_w=_xavier(rng, (1, 2 * r), 2 * r, 1),
        fuse2_b=np.zeros((1, 1)),
        w_f=_xavier(rng, (r, 2 * r), 2 * r, r),
        w_o=_xavier(rng, (1, r), r, 1),
        b_o=np.zeros((1, 1)),
    )


def wrap_params(params: ModelParams) -> dict[str, Node]:
    """Leaf nodes sharing the parameter buffers (grads land on the nodes)."""
    return {name: Node(arr) for name, arr in params.arrays().items()}


@dataclass
class ForwardTrace:
    """Intermediate tensors of one document pass (nodes keep the graph alive)."""

    h_fwd: Node
    h_bwd: Node
    h: Node
    attn_self: Node | None
    attn_inter: Node | None
    ctx_self: Node | None
    ctx_inter: Node | None
    ctx: Node
    alpha: Node
    beta: Node
    y_hat: Node
    subset: list[int]
    variant: str
    mask: np.ndarray

    def scores(self) -> np.ndarray:
        """Per-label probabilities as a flat vector aligned with subset."""
        return self.y_hat.value.ravel().copy()

    def fused_attention(self) -> np.ndarray:
        """n x k' convex mix of the two attention matrices (variant-aware)."""
        alpha = self.alpha.value
        beta = self.beta.value
        out = np.zeros((self.h.cols, len(self.subset)))
        if self.attn_self is not None:
            out += self.attn_self.value * alpha
        if self.attn_inter is not None:
            out += self.attn_inter.value * beta
        return out


def bilstm_forward(embedded: Node, wx_f, wh_f, b_f, wx_b, wh_b, b_b):
    """Run both LSTM directions over embedded tokens (d x n).

    Returns (H_f, H_b, H): r x n forward states, r x n backward states
    (column t = state after reading token t from the right), and their
    2r x n vertical stack.  Initial hidden and cell states are zero.
    """
    n = embedded.cols
    r = wh_f.rows // 4
    fwd_cols = _lstm_direction(embedded, range(n), wx_f, wh_f, b_f, r)
    bwd_cols = _lstm_direction(embedded, range(n - 1, -1, -1), wx_b, wh_b, b_b, r)
    h_fwd = nm.hconcat(fwd_cols)
    h_bwd = nm.hconcat(bwd_cols[::-1])
    return h_fwd, h_bwd, nm.vconcat([h_fwd, h_bwd])


def _lstm_direction(embedded: Node, order, wx, wh, b, r: int) -> list[Node]:
    h = Node(np.zeros((r, 1)))
    c = Node(np.zeros((r, 1)))
    out = []
    for t in order:
        e_t = nm.slice_cols(embedded, t, t + 1)
        z = nm.add_colvec(nm.add(nm.matmul(wx, e_t), nm.matmul(wh, h)), b)
        gates_sig = nm.activate(nm.slice_rows(z, 0, 2 * r), "sigmoid")
        gate_in = nm.slice_rows(gates_sig, 0, r)
        gate_forget = nm.slice_rows(gates_sig, r, 2 * r)
        gate_cell = nm.activate(nm.slice_rows(z, 2 * r, 3 * r), "tanh")
        gate_out = nm.activate(nm.slice_rows(z, 3 * r, 4 * r), "sigmoid")
        c = nm.add(nm.mul(gate_forget, c), nm.mul(gate_in, gate_cell))
        h = nm.mul(gate_out, nm.activate(c, "tanh"))
        out.append(h)
    return out


def self_attention(h: Node, w_s1, w_s2, subset: Sequence[int], mask) -> tuple[Node, Node]:
    """Content attention: rows of W_s2 score tanh(W_s1 H) per label.

    Returns (A_s, C_s): n x k' column-stochastic attention over unmasked
    words and the 2r x k' per-label context matrix H @ A_s.
    """
    subset = _valid_subset(subset, w_s2.rows)
    t = nm.activate(nm.matmul(w_s1, h), "tanh")
    scores = nm.matmul(nm.take_rows(w_s2, subset), t)          # k' x n
    attn = nm.softmax_columns(nm.transpose(scores), mask)      # n x k'
    return attn, nm.matmul(h, attn)


def interaction_attention(
    h_fwd: Node, h_bwd: Node, label_vectors: np.ndarray, w_q,
    subset: Sequence[int], mask,
) -> tuple[Node, Node]:
    """Structure attention: words match projected label vectors.

    Queries are Q = W_q L restricted to the subset; the matching score for
    word t and label j is (H_f + H_b)[:, t] . Q[:, j], i.e. the block form
    [H_f^T H_b^T][Q; Q] collapsed.  Softmax over words gives A_i; context
    is [H_f; H_b] @ A_i.
    """
    label_vectors = np.asarray(label_vectors, dtype=np.float64)
    if label_vectors.ndim != 2 or label_vectors.shape[0] != w_q.cols:
        raise ShapeError(
            f"label embedding must be ({w_q.cols}, k), got {label_vectors.shape}"
        )
    subset = _valid_subset(subset, label_vectors.shape[1])
    queries = nm.matmul(w_q, Node(label_vectors[:, subset]))   # r x k'
    summed = nm.add(h_fwd, h_bwd)                              # r x n
    match = nm.matmul(nm.transpose(summed), queries)           # n x k'
    attn = nm.softmax_columns(match, mask)
    h = nm.vconcat([h_fwd, h_bwd])
    return attn, nm.matmul(h, attn)


def fuse(ctx_self: Node, ctx_inter: Node, f1_w, f1_b, f2_w, f2_b):
    """Adaptive convex mix of the two context matrices, per label.

    Raw gate values a_j = sigmoid(F1(C_s[:, j])), b_j = sigmoid(F2(C_i[:, j]))
    normalize to alpha_j = a_j / (a_j + b_j), beta_j = 1 - alpha_j; the mixed
    column is alpha_j * C_s[:, j] + beta_j * C_i[:, j].  Sigmoid positivity
    keeps the normalization well-defined.
    """
    if ctx_self.value.shape != ctx_inter.value.shape:
        raise ShapeError(
            f"fuse: context shapes {ctx_self.value.shape} and "
            f"{ctx_inter.value.shape} differ"
        )
    raw_a = nm.activate(nm.add_colvec(nm.matmul(f1_w, ctx_self), f1_b), "sigmoid")
    raw_b = nm.activate(nm.add_colvec(nm.matmul(f2_w, ctx_inter), f2_b), "sigmoid")
    alpha = nm.div(raw_a, nm.add(raw_a, raw_b))
    beta = nm.const_minus(1.0, alpha)
    mixed = nm.add(nm.scale_cols(ctx_self, alpha), nm.scale_cols(ctx_inter, beta))
    return mixed, alpha, beta


def predict(ctx: Node, w_f, w_o, b_o) -> Node:
    """Probabilities per label: sigmoid(W_o relu(W_f C) + b), a 1 x k' row."""
    hidden = nm.activate(nm.matmul(w_f, ctx), "relu")
    return nm.activate(nm.add_colvec(nm.matmul(w_o, hidden), b_o), "sigmoid")


def forward(
    token_ids: np.ndarray,
    mask: np.ndarray,
    param_nodes: dict[str, Node],
    label_vectors: np.ndarray | None,
    subset: Sequence[int],
    variant: str = "laha",
) -> ForwardTrace:
    """Full pass over one encoded document for the labels in `subset`."""
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    subset = list(subset)
    k = param_nodes["w_s2"].rows
    _valid_subset(subset, k)
    if label_vectors is not None and label_vectors.shape[1] != k:
        raise ShapeError(
            f"label embedding has {label_vectors.shape[1]} columns, expected {k}"
        )

    embedded = nm.transpose(nm.take_rows(param_nodes["embedding"], token_ids))
    h_fwd, h_bwd, h = bilstm_forward(
        embedded,
        param_nodes["lstm_wx_f"], param_nodes["lstm_wh_f"], param_nodes["lstm_b_f"],
        param_nodes["lstm_wx_b"], param_nodes["lstm_wh_b"], param_nodes["lstm_b_b"],
    )

    attn_self = ctx_self = attn_inter = ctx_inter = None
    if variant != "ia":
        attn_self, ctx_self = self_attention(
            h, param_nodes["w_s1"], param_nodes["w_s2"], subset, mask
        )
    if variant != "sa":
        if label_vectors is None:
            raise ValidationError(f"variant {variant!r} needs a label embedding")
        attn_inter, ctx_inter = interaction_attention(
            h_fwd, h_bwd, label_vectors, param_nodes["w_q"], subset, mask
        )

    k_sub = len(subset)
    if variant == "sa":
        ctx = ctx_self
        alpha, beta = Node(np.ones((1, k_sub))), Node(np.zeros((1, k_sub)))
    elif variant == "ia":
        ctx = ctx_inter
        alpha, beta = Node(np.zeros((1, k_sub))), Node(np.ones((1, k_sub)))
    elif variant == "sa+ia":
        ctx = nm.add(nm.scale(ctx_self, 0.5), nm.scale(ctx_inter, 0.5))
        alpha, beta = Node(np.full((1, k_sub), 0.5)), Node(np.full((1, k_sub), 0.5))
    else:
        ctx, alpha, beta = fuse(
            ctx_self, ctx_inter,
            param_nodes["fuse1_w"], param_nodes["fuse1_b"],
            param_nodes["fuse2_w"], param_nodes["fuse2_b"],
        )

    y_hat = predict(ctx, param_nodes["w_f"], param_nodes["w_o"], param_nodes["b_o"])
    return ForwardTrace(
        h_fwd=h_fwd, h_bwd=h_bwd, h=h,
        attn_self=attn_self, attn_inter=attn_inter,
        ctx_self=ctx_self, ctx_inter=ctx_inter, ctx=ctx,
        alpha=alpha, beta=beta, y_hat=y_hat,
        subset=subset, variant=variant, mask=np.asarray(mask).astype(bool),
    )


def export_attention(
    trace: ForwardTrace, tokens: Sequence[str], label_names: Sequence[str],
    doc_id: str = "",
) -> dict:
    """Per-label (token, fused weight) lists, heaviest token first.

    Weights are the variant-aware convex mix of the two attention columns,
    so each label's weights over the real tokens sum to 1.
    """
    if len(label_names) != len(trace.subset):
        raise ShapeError(
            f"{len(label_names)} label names for {len(trace.subset)} subset labels"
        )
    fused = trace.fused_attention()
    n_real = int(trace.mask.sum())
    shown = list(tokens)[:n_real]
    report = {"doc_id": doc_id, "labels": []}
    for j, name in enumerate(label_names):
        weighted = sorted(
            ((tok, float(fused[t, j])) for t, tok in enumerate(shown)),
            key=lambda tw: -tw[1],
        )
        report["labels"].append({"label": name, "tokens": [[t, w] for t, w in weighted]})
    return report


def _valid_subset(subset: Sequence[int], k: int) -> list[int]:
    subset = list(subset)
    if not subset:
        raise ValidationError("label subset must be nonempty")
    for label in subset:
        if not (0 <= label < k):
            raise ValidationError(f"label {label} outside range [0,{k})")
    return subset
