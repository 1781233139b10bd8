"""Transformer components vs hand computations and an independent reimplementation."""

import numpy as np
import pytest

from emogest import model as m
from emogest import quat
from emogest.autodiff import ShapeError, Tensor
from emogest.skeleton import default_skeleton
from emogest.textembed import EmbeddingStore, embed_sentence

TOY = dict(d_model=8, n_blocks=2, n_heads=2, d_word=12, t_sen=4, t_ges=6, window=3, n_joints=2)


def toy_cfg(**overrides):
    return m.ModelConfig(**{**TOY, **overrides})


# --- independent straightforward reimplementation (the oracle) ---------------


def ref_attention(q, k, v, scale, mask=None):
    logits = q @ k.T / scale
    if mask is not None:
        logits = np.where(mask, -np.inf, logits)
    w = np.exp(logits - logits.max(axis=-1, keepdims=True))
    w = w / w.sum(axis=-1, keepdims=True)
    return w @ v


def ref_multi_head(x_q, x_kv, params, prefix, cfg, mask=None):
    heads = []
    for h in range(cfg.n_heads):
        q = x_q @ params[f"{prefix}.{h}.wq"].data
        k = x_kv @ params[f"{prefix}.{h}.wk"].data
        v = x_kv @ params[f"{prefix}.{h}.wv"].data
        scale = float(cfg.d_head) if cfg.attention_scale == "k" else float(np.sqrt(cfg.d_head))
        heads.append(ref_attention(q, k, v, scale, mask))
    return np.concatenate(heads, axis=-1) @ params[f"{prefix}.concat"].data


# --- attention ----------------------------------------------------------------


def test_attention_zero_logits_is_row_uniform_average():
    v = np.random.default_rng(0).standard_normal((4, 5))
    out = m.attention(Tensor(np.zeros((3, 2))), Tensor(np.zeros((4, 2))), Tensor(v))
    assert np.allclose(out.data, np.broadcast_to(v.mean(axis=0), (3, 5)))


def test_attention_single_key_returns_value():
    rng = np.random.default_rng(1)
    q = rng.standard_normal((5, 3))
    k = rng.standard_normal((1, 3))
    v = rng.standard_normal((1, 4))
    out = m.attention(Tensor(q), Tensor(k), Tensor(v))
    assert np.allclose(out.data, np.broadcast_to(v, (5, 4)))


def test_attention_2x2_hand_computed():
    q = np.array([[1.0, 0.0], [0.0, 1.0]])
    k = np.array([[2.0, 0.0], [0.0, 2.0]])
    v = np.array([[1.0, 10.0], [3.0, 30.0]])
    # divisor is the key dimension k=2
    logits = q @ k.T / 2.0
    e = np.exp(logits)
    w = e / e.sum(axis=-1, keepdims=True)
    expected = w @ v
    out = m.attention(Tensor(q), Tensor(k), Tensor(v), scale="k")
    assert np.abs(out.data - expected).max() < 1e-12


def test_attention_scale_switch():
    rng = np.random.default_rng(2)
    q, k, v = (rng.standard_normal((3, 4)) for _ in range(3))
    out_k = m.attention(Tensor(q), Tensor(k), Tensor(v), scale="k").data
    out_sqrt = m.attention(Tensor(q), Tensor(k), Tensor(v), scale="sqrt_k").data
    assert np.allclose(out_k, ref_attention(q, k, v, 4.0))
    assert np.allclose(out_sqrt, ref_attention(q, k, v, 2.0))
    assert not np.allclose(out_k, out_sqrt)


def test_multi_head_single_head_reduces_to_attention_plus_projection():
    cfg = toy_cfg(n_heads=1)
    params = m.init_params(cfg, seed=3)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((5, cfg.d_model))
    out = m.multi_head(Tensor(x), Tensor(x), params, "enc.0.attn", cfg)
    q = x @ params["enc.0.attn.0.wq"].data
    k = x @ params["enc.0.attn.0.wk"].data
    v = x @ params["enc.0.attn.0.wv"].data
    expected = ref_attention(q, k, v, float(cfg.d_head)) @ params["enc.0.attn.concat"].data
    assert np.abs(out.data - expected).max() < 1e-12


def test_multi_head_matches_reference_reimplementation():
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=5)
    rng = np.random.default_rng(6)
    x_q = rng.standard_normal((5, cfg.d_model))
    x_kv = rng.standard_normal((7, cfg.d_model))
    ours = m.multi_head(Tensor(x_q), Tensor(x_kv), params, "dec.0.cross", cfg).data
    theirs = ref_multi_head(x_q, x_kv, params, "dec.0.cross", cfg)
    assert np.abs(ours - theirs).max() <= 1e-10


def test_multi_head_causal_mask_blocks_future():
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=7)
    rng = np.random.default_rng(8)
    x = rng.standard_normal((6, cfg.d_model))
    mask = m.causal_mask(6)
    base = m.multi_head(Tensor(x), Tensor(x), params, "dec.0.self", cfg, mask=mask).data
    x2 = x.copy()
    x2[4:] += rng.standard_normal((2, cfg.d_model))  # perturb positions > 3
    pert = m.multi_head(Tensor(x2), Tensor(x2), params, "dec.0.self", cfg, mask=mask).data
    assert np.array_equal(base[:4], pert[:4])  # bitwise unchanged


# --- positional encoding -------------------------------------------------------


def test_positional_encoding_position_zero():
    pe = m.positional_encoding(4, 8)
    assert np.array_equal(pe[0, 0::2], np.zeros(4))
    assert np.array_equal(pe[0, 1::2], np.ones(4))


def test_positional_encoding_spot_values():
    pe = m.positional_encoding(50, 16)
    for t, i in [(3, 0), (7, 2), (49, 6)]:
        assert np.isclose(pe[t, 2 * i], np.sin(t / 10000 ** (2 * i / 16)))
        assert np.isclose(pe[t, 2 * i + 1], np.cos(t / 10000 ** (2 * i / 16)))


def test_positional_encoding_rows_distinct_up_to_512():
    pe = m.positional_encoding(512, 16)
    assert len({tuple(row) for row in pe.round(12)}) == 512


# --- encoder / decoder ---------------------------------------------------------


def test_encode_output_shape():
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=9)
    sent = np.random.default_rng(10).standard_normal((cfg.t_sen, cfg.d_word))
    out = m.encode(sent, np.zeros(9), params, cfg)
    assert out.shape == (cfg.t_sen, cfg.d_model)
    batched = m.encode(np.stack([sent, sent]), np.zeros((2, 9)), params, cfg)
    assert batched.shape == (2, cfg.t_sen, cfg.d_model)


def test_encode_emotion_component_changes_output():
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=11)
    sent = np.random.default_rng(12).standard_normal((cfg.t_sen, cfg.d_word))
    a = np.array([1, 0, 0.2, 0.3, 0.4, 1, 0, 1, 0], dtype=float)
    b = a.copy()
    b[2:5] = [0.9, 0.8, 0.7]
    out_a = m.encode(sent, a, params, cfg).data
    out_b = m.encode(sent, b, params, cfg).data
    assert np.abs(out_a - out_b).max() > 1e-6


def test_decode_depends_on_all_encoded_positions():
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=13)
    rng = np.random.default_rng(14)
    hist = rng.standard_normal((3, cfg.pose_dim))
    enc = rng.standard_normal((cfg.t_sen, cfg.d_model))
    base = m.decode_step(hist, Tensor(enc), params, cfg).data
    for pos in range(cfg.t_sen):
        enc2 = enc.copy()
        enc2[pos] += 1.0
        assert not np.allclose(m.decode_step(hist, Tensor(enc2), params, cfg).data, base)


def test_decode_step_causality_and_determinism():
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=15)
    rng = np.random.default_rng(16)
    hist = rng.standard_normal((4, cfg.pose_dim))
    enc = rng.standard_normal((cfg.t_sen, cfg.d_model))
    a = m.decode_step(hist, Tensor(enc), params, cfg).data
    b = m.decode_step(hist, Tensor(enc), params, cfg).data
    assert np.array_equal(a, b)  # pure function
    early = hist.copy()
    early[0] += 1.0
    assert not np.allclose(m.decode_step(early, Tensor(enc), params, cfg).data, a)


def test_decode_full_sequence_causality_bitwise():
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=17)
    rng = np.random.default_rng(18)
    hist = rng.standard_normal((cfg.t_ges, cfg.pose_dim))
    enc = rng.standard_normal((cfg.t_sen, cfg.d_model))
    base = m.decode(hist, Tensor(enc), params, cfg).data
    pert = hist.copy()
    pert[4:] += rng.standard_normal((cfg.t_ges - 4, cfg.pose_dim))
    out = m.decode(pert, Tensor(enc), params, cfg).data
    assert np.array_equal(out[:4], base[:4])


# --- generation -----------------------------------------------------------------


@pytest.fixture(scope="module")
def gen_setup():
    sk = default_skeleton()
    cfg = m.ModelConfig(d_model=16, n_blocks=1, n_heads=2, d_word=16, t_sen=6, t_ges=40, window=5)
    params = m.init_params(cfg, seed=19, rest_pose=sk.sos_pose)
    store = EmbeddingStore(dim=16)
    emb = embed_sentence(["hello", "world"], store, cfg.t_sen)
    attrs = np.array([1, 0, 0.5, 0.5, 0.5, 0, 1, 0, 1], dtype=float)
    return sk, cfg, params, emb, attrs


def test_generate_unit_norm_and_bounded(gen_setup):
    sk, cfg, params, emb, attrs = gen_setup
    seq, latencies = m.generate(emb, attrs, params, cfg, sk, t_ges=20)
    assert seq.n_frames <= 20
    assert len(latencies) == seq.n_frames
    norms = np.linalg.norm(seq.rotations, axis=-1)
    assert np.abs(norms - 1.0).max() < 1e-6


def test_generate_deterministic(gen_setup):
    sk, cfg, params, emb, attrs = gen_setup
    a, _ = m.generate(emb, attrs, params, cfg, sk, t_ges=15)
    b, _ = m.generate(emb, attrs, params, cfg, sk, t_ges=15)
    assert np.array_equal(a.rotations, b.rotations)


def test_generate_stops_on_sustained_eos():
    # parameters rigged so the decoder always emits the EoS pose: head
    # weights zero and bias at the EoS rest pose
    sk = default_skeleton()
    cfg = m.ModelConfig(d_model=16, n_blocks=1, n_heads=2, d_word=16, t_sen=6, t_ges=200, window=5)
    params = m.init_params(cfg, seed=20, rest_pose=sk.eos_pose)
    params["head.w"].data[:] = 0.0
    store = EmbeddingStore(dim=16)
    emb = embed_sentence(["rest"], store, cfg.t_sen)
    seq, _ = m.generate(emb, np.zeros(9), params, cfg, sk)
    assert seq.n_frames == m.EOS_STOP_RUN  # stops right after 12 EoS-near frames
    assert quat.geodesic(seq.rotations[-1], sk.eos_pose).max() <= m.EOS_STOP_GEODESIC


# --- parameter counting -----------------------------------------------------------


def test_count_parameters_toy_hand_sum():
    cfg = toy_cfg(n_blocks=1)
    params = m.init_params(cfg, seed=21)
    d, dk, j = 8, 4, 2
    hand = 0
    hand += 12 * d + d  # word projection
    hand += 4 * j * d + d  # pose projection
    hand += (2 * 3 * d * dk + d * d) + 2 * (d * d + d)  # one encoder block
    hand += 2 * ((2 * 3 * d * dk) + d * d) + 2 * (d * d + d)  # one decoder block
    hand += (d + 9) * d + d + d * d + d  # fusion
    hand += d * 4 * j + 4 * j  # head
    assert m.count_parameters(params) == hand
    assert m.analytic_parameter_count(cfg) == hand


def test_parameter_count_formula_tracks_d_model():
    small = m.analytic_parameter_count(toy_cfg())
    big = m.analytic_parameter_count(toy_cfg(d_model=16))
    assert big > small
    assert m.count_parameters(m.init_params(toy_cfg(d_model=16), seed=22)) == big


def test_parameter_count_full_size_config():
    cfg = m.ModelConfig()
    assert m.analytic_parameter_count(cfg) == 1461092


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        m.ModelConfig(d_model=7, n_heads=2)
    with pytest.raises(ValueError, match="window"):
        m.ModelConfig(window=500, t_ges=100)


def test_decode_shape_mismatch_raises():
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=23)
    bad_hist = np.zeros((3, cfg.pose_dim + 1))
    enc = Tensor(np.zeros((cfg.t_sen, cfg.d_model)))
    with pytest.raises(ShapeError):
        m.decode(bad_hist, enc, params, cfg)


# --- golden fixtures (recorded once, after the reference-implementation check) ---


def test_encode_and_decode_step_match_recorded_goldens():
    import pathlib

    data = np.load(pathlib.Path(__file__).parent / "data" / "golden_model.npz")
    cfg = toy_cfg()
    params = m.init_params(cfg, seed=1234)
    encoded = m.encode(data["sent"], data["attrs"], params, cfg)
    assert np.abs(encoded.data - data["encoded"]).max() <= 1e-10
    step = m.decode_step(data["hist"], encoded, params, cfg)
    assert np.abs(step.data - data["step"]).max() <= 1e-10
    zero_enc = m.encode(np.zeros((cfg.t_sen, cfg.d_word)), np.zeros(9), params, cfg)
    assert np.abs(zero_enc.data - data["zero_enc"]).max() <= 1e-10


def test_layer_norm_flag_changes_but_preserves_shapes():
    cfg = toy_cfg(use_layer_norm=True)
    params = m.init_params(cfg, seed=30)
    sent = np.random.default_rng(31).standard_normal((cfg.t_sen, cfg.d_word))
    out = m.encode(sent, np.zeros(9), params, cfg)
    assert out.shape == (cfg.t_sen, cfg.d_model)
    plain = m.encode(sent, np.zeros(9), m.init_params(toy_cfg(), seed=30), toy_cfg())
    assert not np.allclose(out.data, plain.data)
