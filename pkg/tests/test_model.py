import math

import numpy as np
import pytest

from laha import numeric as nm
from laha.errors import ShapeError, ValidationError
from laha.model import (
    ForwardTrace,
    ModelConfig,
    ModelParams,
    bilstm_forward,
    export_attention,
    forward,
    fuse,
    init_params,
    interaction_attention,
    predict,
    self_attention,
    wrap_params,
)
from laha.numeric import Node


def _cfg(k=4, max_len=4, d=5, r=3, d_a=3):
    return ModelConfig(k=k, max_len=max_len, d=d, r=r, d_a=d_a)


def _params(cfg, vocab_size=9, seed=0):
    rng = np.random.default_rng(seed + 1000)
    emb = rng.uniform(-0.3, 0.3, size=(vocab_size, cfg.d))
    emb[0] = 0.0
    return init_params(cfg, emb, seed)


def _label_vectors(cfg, seed=0):
    return np.random.default_rng(seed + 2000).normal(size=(cfg.r, cfg.k))


def test_config_rejects_nonpositive():
    with pytest.raises(ValidationError):
        ModelConfig(k=0, max_len=4)


def test_bilstm_zero_weights_zero_states():
    cfg = _cfg()
    r, d, n = cfg.r, cfg.d, 4
    zeros = lambda *s: Node(np.zeros(s))
    emb = Node(np.random.default_rng(0).normal(size=(d, n)))
    h_fwd, h_bwd, h = bilstm_forward(
        emb,
        zeros(4 * r, d), zeros(4 * r, r), zeros(4 * r, 1),
        zeros(4 * r, d), zeros(4 * r, r), zeros(4 * r, 1),
    )
    np.testing.assert_array_equal(h.value, np.zeros((2 * r, n)))


def test_bilstm_output_shape():
    cfg = _cfg()
    params = _params(cfg)
    pn = wrap_params(params)
    n = 6
    emb = Node(np.random.default_rng(1).normal(size=(cfg.d, n)))
    _, _, h = bilstm_forward(
        emb, pn["lstm_wx_f"], pn["lstm_wh_f"], pn["lstm_b_f"],
        pn["lstm_wx_b"], pn["lstm_wh_b"], pn["lstm_b_b"],
    )
    assert h.value.shape == (2 * cfg.r, n)


def test_lstm_single_step_scalar_oracle():
    # r = 1, d = 1, one token: with zero initial state the update is
    # c = sigmoid(wi*e + bi) * tanh(wg*e + bg); h = sigmoid(wo*e + bo) * tanh(c)
    e, wi, wf, wg, wo = 0.7, 0.3, -0.4, 0.9, 0.2
    bi, bf, bg, bo = 0.1, 0.2, -0.3, 0.05
    sig = lambda x: 1.0 / (1.0 + math.exp(-x))
    c_hand = sig(wi * e + bi) * math.tanh(wg * e + bg)
    h_hand = sig(wo * e + bo) * math.tanh(c_hand)

    wx = Node(np.array([[wi], [wf], [wg], [wo]]))
    wh = Node(np.zeros((4, 1)))
    b = Node(np.array([[bi], [bf], [bg], [bo]]))
    emb = Node(np.array([[e]]))
    h_fwd, _, _ = bilstm_forward(emb, wx, wh, b, wx, wh, b)
    assert h_fwd.value[0, 0] == pytest.approx(h_hand, abs=1e-12)


def test_self_attention_single_word():
    cfg = _cfg()
    pn = wrap_params(_params(cfg))
    h = Node(np.random.default_rng(2).normal(size=(2 * cfg.r, 1)))
    attn, ctx = self_attention(h, pn["w_s1"], pn["w_s2"], [0, 2], np.array([True]))
    np.testing.assert_array_equal(attn.value, np.ones((1, 2)))
    np.testing.assert_allclose(ctx.value, np.column_stack([h.value[:, 0]] * 2))


def test_self_attention_zero_scores_uniform():
    cfg = _cfg()
    pn = wrap_params(_params(cfg))
    n = 5
    h = Node(np.random.default_rng(3).normal(size=(2 * cfg.r, n)))
    w_s2 = Node(np.zeros((cfg.k, cfg.d_a)))
    mask = np.array([True, True, True, True, False])
    attn, ctx = self_attention(h, pn["w_s1"], w_s2, [1], mask)
    np.testing.assert_allclose(attn.value[:4, 0], np.full(4, 0.25), atol=1e-15)
    assert attn.value[4, 0] == 0.0
    np.testing.assert_allclose(
        ctx.value[:, 0], h.value[:, :4].mean(axis=1), atol=1e-12
    )


def test_self_attention_columns_normalized():
    cfg = _cfg()
    pn = wrap_params(_params(cfg))
    h = Node(np.random.default_rng(4).normal(size=(2 * cfg.r, 6)))
    attn, _ = self_attention(h, pn["w_s1"], pn["w_s2"], [0, 1, 3], np.ones(6, bool))
    np.testing.assert_allclose(attn.value.sum(axis=0), np.ones(3), atol=1e-9)


def test_self_attention_empty_subset():
    cfg = _cfg()
    pn = wrap_params(_params(cfg))
    h = Node(np.ones((2 * cfg.r, 2)))
    with pytest.raises(ValidationError):
        self_attention(h, pn["w_s1"], pn["w_s2"], [], np.ones(2, bool))


def test_interaction_attention_identity_oracle():
    # H_f = H_b = I (r = n), W_q = I, label vector = e_1: the match scores
    # are (I + I)^T e_1 = 2 e_1, so attention = softmax([2, 0, 0])
    n = 3
    eye = Node(np.eye(n))
    w_q = Node(np.eye(n))
    label_vectors = np.zeros((n, 2))
    label_vectors[0, 0] = 1.0
    attn, _ = interaction_attention(eye, eye, label_vectors, w_q, [0], np.ones(n, bool))
    e = np.exp(np.array([2.0, 0.0, 0.0]))
    np.testing.assert_allclose(attn.value[:, 0], e / e.sum(), atol=1e-12)


def test_interaction_attention_single_word():
    cfg = _cfg()
    pn = wrap_params(_params(cfg))
    rng = np.random.default_rng(5)
    h_fwd = Node(rng.normal(size=(cfg.r, 1)))
    h_bwd = Node(rng.normal(size=(cfg.r, 1)))
    lv = _label_vectors(cfg)
    attn, ctx = interaction_attention(h_fwd, h_bwd, lv, pn["w_q"], [0, 1, 2], [True])
    h1 = np.concatenate([h_fwd.value[:, 0], h_bwd.value[:, 0]])
    for j in range(3):
        np.testing.assert_allclose(ctx.value[:, j], h1, atol=1e-12)


def test_interaction_attention_columns_normalized():
    cfg = _cfg()
    pn = wrap_params(_params(cfg))
    rng = np.random.default_rng(6)
    n = 5
    h_fwd = Node(rng.normal(size=(cfg.r, n)))
    h_bwd = Node(rng.normal(size=(cfg.r, n)))
    mask = np.array([True, True, False, True, True])
    attn, _ = interaction_attention(
        h_fwd, h_bwd, _label_vectors(cfg), pn["w_q"], [0, 3], mask
    )
    np.testing.assert_allclose(attn.value.sum(axis=0), np.ones(2), atol=1e-9)
    assert (attn.value[2, :] == 0.0).all()


def test_interaction_attention_bad_label_matrix():
    cfg = _cfg()
    pn = wrap_params(_params(cfg))
    h = Node(np.ones((cfg.r, 2)))
    with pytest.raises(ShapeError):
        interaction_attention(h, h, np.ones((cfg.r + 1, cfg.k)), pn["w_q"], [0], [1, 1])


def test_block_identity_of_interaction_scores():
    # [H_f^T H_b^T][Q; Q] == (H_f + H_b)^T Q
    rng = np.random.default_rng(7)
    for _ in range(50):
        r, n, kp = rng.integers(1, 6), rng.integers(1, 7), rng.integers(1, 5)
        hf = rng.normal(size=(r, n))
        hb = rng.normal(size=(r, n))
        q = rng.normal(size=(r, kp))
        literal = np.hstack([hf.T, hb.T]) @ np.vstack([q, q])
        collapsed = (hf + hb).T @ q
        np.testing.assert_allclose(literal, collapsed, atol=1e-12)


def test_fuse_symmetric_inputs_give_half_half():
    rng = np.random.default_rng(8)
    ctx = Node(rng.normal(size=(6, 3)))
    w = Node(rng.normal(size=(1, 6)))
    b = Node(np.array([[0.2]]))
    mixed, alpha, beta = fuse(ctx, Node(ctx.value.copy()), w, b, w, b)
    np.testing.assert_allclose(alpha.value, np.full((1, 3), 0.5), atol=1e-15)
    np.testing.assert_allclose(mixed.value, ctx.value, atol=1e-15)


def test_fuse_hand_normalization():
    # raw gates 0.6 and 0.2 normalize to 0.75 / 0.25
    logit = lambda p: math.log(p / (1 - p))
    ctx_a = Node(np.zeros((4, 2)))
    ctx_b = Node(np.zeros((4, 2)))
    w = Node(np.zeros((1, 4)))
    _, alpha, beta = fuse(
        ctx_a, ctx_b, w, Node(np.array([[logit(0.6)]])), w, Node(np.array([[logit(0.2)]]))
    )
    np.testing.assert_allclose(alpha.value, np.full((1, 2), 0.75), atol=1e-12)
    np.testing.assert_allclose(beta.value, np.full((1, 2), 0.25), atol=1e-12)


def test_fuse_weights_sum_to_one_exactly():
    rng = np.random.default_rng(9)
    for _ in range(100):
        ctx_a = Node(rng.normal(size=(4, 5)))
        ctx_b = Node(rng.normal(size=(4, 5)))
        w1 = Node(rng.normal(size=(1, 4)))
        w2 = Node(rng.normal(size=(1, 4)))
        b1 = Node(rng.normal(size=(1, 1)))
        b2 = Node(rng.normal(size=(1, 1)))
        _, alpha, beta = fuse(ctx_a, ctx_b, w1, b1, w2, b2)
        assert (alpha.value + beta.value == 1.0).all()


def test_fuse_shape_mismatch():
    w = Node(np.zeros((1, 4)))
    b = Node(np.zeros((1, 1)))
    with pytest.raises(ShapeError):
        fuse(Node(np.zeros((4, 2))), Node(np.zeros((4, 3))), w, b, w, b)


def test_predict_zero_head_gives_half():
    ctx = Node(np.random.default_rng(10).normal(size=(6, 5)))
    y = predict(ctx, Node(np.ones((3, 6))), Node(np.zeros((1, 3))), Node(np.zeros((1, 1))))
    np.testing.assert_allclose(y.value, np.full((1, 5), 0.5), atol=1e-15)


def test_predict_monotone_in_logit():
    rng = np.random.default_rng(11)
    ctx = Node(rng.normal(size=(4, 3)))
    w_f = Node(rng.normal(size=(2, 4)))
    w_o = Node(rng.normal(size=(1, 2)))
    y_lo = predict(ctx, w_f, w_o, Node(np.array([[0.0]])))
    y_hi = predict(ctx, w_f, w_o, Node(np.array([[0.5]])))
    assert (y_hi.value > y_lo.value).all()
    assert ((y_lo.value > 0) & (y_lo.value < 1)).all()


def _forward(cfg, params, lv, variant, subset=None, seed=12):
    rng = np.random.default_rng(seed)
    n_real = 3
    ids = np.zeros(cfg.max_len, dtype=np.int64)
    ids[:n_real] = rng.integers(2, params.embedding.shape[0], size=n_real)
    mask = np.arange(cfg.max_len) < n_real
    subset = list(range(cfg.k)) if subset is None else subset
    return forward(ids, mask, wrap_params(params), lv, subset, variant)


def test_forward_variant_field_population():
    cfg = _cfg()
    params = _params(cfg)
    lv = _label_vectors(cfg)
    t_sa = _forward(cfg, params, None, "sa")
    assert t_sa.attn_inter is None and t_sa.ctx_inter is None
    assert t_sa.attn_self is not None
    assert (t_sa.alpha.value == 1.0).all() and (t_sa.beta.value == 0.0).all()

    t_ia = _forward(cfg, params, lv, "ia")
    assert t_ia.attn_self is None
    assert t_ia.attn_inter is not None

    t_mix = _forward(cfg, params, lv, "sa+ia")
    assert (t_mix.alpha.value == 0.5).all()
    np.testing.assert_allclose(
        t_mix.ctx.value,
        0.5 * t_mix.ctx_self.value + 0.5 * t_mix.ctx_inter.value,
        atol=1e-15,
    )

    t_full = _forward(cfg, params, lv, "laha")
    assert t_full.attn_self is not None and t_full.attn_inter is not None
    assert (t_full.alpha.value + t_full.beta.value == 1.0).all()


def test_forward_requires_embedding_for_interaction():
    cfg = _cfg()
    params = _params(cfg)
    with pytest.raises(ValidationError):
        _forward(cfg, params, None, "ia")


def test_forward_unknown_variant():
    cfg = _cfg()
    params = _params(cfg)
    with pytest.raises(ValidationError):
        _forward(cfg, params, None, "hybrid")


def test_forward_deterministic():
    cfg = _cfg()
    params = _params(cfg)
    lv = _label_vectors(cfg)
    t1 = _forward(cfg, params, lv, "laha")
    t2 = _forward(cfg, params, lv, "laha")
    np.testing.assert_array_equal(t1.y_hat.value, t2.y_hat.value)
    np.testing.assert_array_equal(t1.ctx.value, t2.ctx.value)


def test_forward_full_subset_scores_every_label():
    cfg = _cfg()
    params = _params(cfg)
    trace = _forward(cfg, params, _label_vectors(cfg), "laha")
    scores = trace.scores()
    assert scores.shape == (cfg.k,)
    assert ((scores > 0) & (scores < 1)).all()


def test_forward_label_equivariance():
    cfg = _cfg()
    params = _params(cfg)
    lv = _label_vectors(cfg)
    sub = [0, 1, 2, 3]
    perm = [2, 0, 3, 1]
    t_base = _forward(cfg, params, lv, "laha", subset=sub)
    t_perm = _forward(cfg, params, lv, "laha", subset=[sub[i] for i in perm])
    np.testing.assert_allclose(
        t_perm.scores(), t_base.scores()[perm], atol=1e-12
    )


def test_forward_convexity_of_mixed_context():
    cfg = _cfg()
    params = _params(cfg)
    trace = _forward(cfg, params, _label_vectors(cfg), "laha")
    recombined = (
        trace.ctx_self.value * trace.alpha.value
        + trace.ctx_inter.value * trace.beta.value
    )
    assert np.abs(trace.ctx.value - recombined).max() <= 1e-12


def test_export_attention_single_token():
    cfg = _cfg(max_len=1)
    params = _params(cfg)
    trace = forward(
        np.array([2]), np.array([True]), wrap_params(params),
        _label_vectors(cfg), [0, 1], "laha",
    )
    report = export_attention(trace, ["word"], ["zero", "one"], doc_id="d0")
    assert report["doc_id"] == "d0"
    for entry in report["labels"]:
        assert entry["tokens"] == [["word", 1.0]]


def test_export_attention_weights_sum_to_one_and_sorted():
    cfg = _cfg()
    params = _params(cfg)
    trace = _forward(cfg, params, _label_vectors(cfg), "laha")
    tokens = ["alpha", "beta", "gamma"]
    report = export_attention(trace, tokens, [str(i) for i in range(cfg.k)])
    fused = trace.fused_attention()
    for j, entry in enumerate(report["labels"]):
        weights = [w for _, w in entry["tokens"]]
        assert sum(weights) == pytest.approx(1.0, abs=1e-9)
        assert weights == sorted(weights, reverse=True)
        top_token = entry["tokens"][0][0]
        assert top_token == tokens[int(np.argmax(fused[:3, j]))]


def test_params_canonical_order_stable():
    assert ModelParams.names()[0] == "embedding"
    assert len(ModelParams.names()) == 17
