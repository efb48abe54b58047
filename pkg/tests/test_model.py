import numpy as np
import pytest
from sklearn.base import clone

from helpers import attention_oracle, lstm_oracle, mrgcn_oracle, random_sequence
from maneuver_graph.autodiff import DimensionError, Tensor
from maneuver_graph.model import (
    VARIANTS,
    ManeuverClassifier,
    ModelConfig,
    baseline_features,
    classify,
    forward,
    init_params,
    lstm,
    lstm_step,
    mrgcn_layer,
    multi_head_attention,
    param_shapes,
    spatial_encode,
    vehicle_targets,
)
from maneuver_graph.model.layers import first_layer_inputs
from maneuver_graph.scene_graph import RELATIONS, NodeType, SceneSequence, build_scene_graph, degree_normalize
from maneuver_graph.traffic_sim import generate_sequences, preset

SMALL = dict(embed_dim=8, mrgcn_dims=(8, 4), n_heads=2)


def small_config(variant="G+L+MA", **kw):
    return ModelConfig(variant=variant, **{**SMALL, "n_max": 8, **kw})


def layer_params(rng, d_in, d_out, prefix=""):
    p = {f"{prefix}W_r.{r.key}": rng.normal(size=(d_in, d_out)) for r in RELATIONS}
    p[f"{prefix}W_s"] = rng.normal(size=(d_in, d_out))
    return p


# ------------------------------------------------------------------ MR-GCN
def test_mrgcn_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for n in (1, 3, 7):
        pos = rng.uniform(-10, 10, size=(n, 2))
        H = rng.normal(size=(n, 5))
        raw = layer_params(rng, 5, 3)
        g = build_scene_graph(pos, [0] * n)
        out = mrgcn_layer(g, Tensor(H), {k: Tensor(v) for k, v in raw.items()}).data
        W_rel = {k.split(".")[-1]: v for k, v in raw.items() if k.startswith("W_r")}
        np.testing.assert_allclose(out, mrgcn_oracle(pos.tolist(), H, W_rel, raw["W_s"]), rtol=1e-9, atol=1e-12)


def test_mrgcn_single_node_is_self_loop_only():
    rng = np.random.default_rng(1)
    raw = layer_params(rng, 3, 2)
    H = rng.normal(size=(1, 3))
    out = mrgcn_layer(build_scene_graph([[0.0, 0.0]], [0]), Tensor(H), {k: Tensor(v) for k, v in raw.items()})
    np.testing.assert_allclose(out.data, np.maximum(H @ raw["W_s"], 0))


def test_mrgcn_zero_features_give_zero():
    rng = np.random.default_rng(2)
    g = build_scene_graph(rng.normal(size=(4, 2)), [0] * 4)
    raw = layer_params(rng, 3, 2)
    out = mrgcn_layer(g, Tensor(np.zeros((4, 3))), {k: Tensor(v) for k, v in raw.items()})
    assert not out.data.any()


def test_mrgcn_rejects_bad_shapes():
    rng = np.random.default_rng(3)
    g = build_scene_graph(rng.normal(size=(4, 2)), [0] * 4)
    params = {k: Tensor(v) for k, v in layer_params(rng, 3, 2).items()}
    with pytest.raises(DimensionError):
        mrgcn_layer(g, Tensor(np.zeros((5, 3))), params)
    with pytest.raises(DimensionError):
        mrgcn_layer(g, Tensor(np.zeros((4, 2))), params)


def test_vehicle_rows_match_full_layer():
    rng = np.random.default_rng(4)
    pos = rng.normal(size=(2, 6, 2)) * 5  # batch of two frames treated as sequences
    adj = np.stack([degree_normalize(build_scene_graph(p, [0] * 6).adjacency) for p in pos])
    H = Tensor(rng.normal(size=(2, 6, 3)))
    params = {k: Tensor(v) for k, v in layer_params(rng, 3, 2).items()}
    rows = np.array([[0, 4], [5, 1]])
    full = mrgcn_layer(adj, H, params).data
    picked = mrgcn_layer(adj, H, params, rows=rows).data
    np.testing.assert_allclose(picked, np.stack([full[b, rows[b]] for b in range(2)]), rtol=1e-12)


def _spatial(pos, types, params, n_layers=2):
    g = build_scene_graph(pos, types)
    onehot = np.eye(2)[np.asarray(types)]
    return spatial_encode(degree_normalize(g.adjacency), onehot, params, n_layers).data


def test_spatial_encode_factorised_first_layer():
    # the factorised first layer must equal a plain layer applied to X E_o
    cfg = small_config()
    params = init_params(cfg)
    rng = np.random.default_rng(5)
    pos = rng.normal(size=(5, 2))
    types = [0, 1, 0, 1, 1]
    h0 = params["embed.E_o"].data[types]
    direct = mrgcn_layer(build_scene_graph(pos, types), Tensor(h0), params, "mrgcn.0.").data
    np.testing.assert_allclose(_spatial(pos, types, params, 1), direct, rtol=1e-12, atol=1e-15)


def test_spatial_encode_coincident_nodes():
    # coincident vehicles each see the other top-right, so their encodings agree
    params = init_params(small_config())
    out = _spatial([[0.0, 0.0], [0.0, 0.0]], [0, 0], params)
    np.testing.assert_array_equal(out[0], out[1])


def test_spatial_encode_landmark_only_scene():
    params = init_params(small_config())
    out = _spatial(np.random.default_rng(6).normal(size=(3, 2)), [1, 1, 1], params)
    assert out.shape == (3, 4) and np.isfinite(out).all()


def test_first_layer_inputs_layout():
    adj = degree_normalize(build_scene_graph([[0, 0], [1, 1]], [0, 1]).adjacency)
    X = np.eye(2)
    inp = first_layer_inputs(adj, X)
    assert inp.shape == (2, 10)
    np.testing.assert_array_equal(inp[:, 8:], X)
    np.testing.assert_array_equal(inp[0, 2:4], [0, 1])  # node 1 is top-right of node 0


# -------------------------------------------------------------------- LSTM
def lstm_params(rng, d, h):
    raw = {}
    for g in "ifog":
        raw[f"lstm.W_{g}"] = rng.normal(size=(d, h)) * 0.5
        raw[f"lstm.U_{g}"] = rng.normal(size=(h, h)) * 0.5
        raw[f"lstm.b_{g}"] = rng.normal(size=h) * 0.1
    return raw


def test_lstm_matches_scalar_oracle():
    rng = np.random.default_rng(7)
    raw = lstm_params(rng, 3, 4)
    X = rng.normal(size=(5, 2, 3))
    out = lstm(Tensor(X[None]), {k: Tensor(v) for k, v in raw.items()}).data[0]
    W = {g: raw[f"lstm.W_{g}"] for g in "ifog"}
    U = {g: raw[f"lstm.U_{g}"] for g in "ifog"}
    b = {g: raw[f"lstm.b_{g}"] for g in "ifog"}
    np.testing.assert_allclose(out, lstm_oracle(X, W, U, b), rtol=1e-10, atol=1e-13)


def test_lstm_step_zero_weights():
    raw = {k: np.zeros_like(v) for k, v in lstm_params(np.random.default_rng(8), 3, 2).items()}
    params = {k: Tensor(v) for k, v in raw.items()}
    h, (h2, c) = lstm_step(Tensor(np.ones((1, 3))), None, params)
    # all gates 0.5, candidate 0 -> cell 0, hidden 0
    assert not h.data.any() and not c.data.any()
    params["lstm.b_g"] = Tensor(np.ones(2))
    h, (_, c) = lstm_step(Tensor(np.zeros((1, 3))), None, params)
    np.testing.assert_allclose(c.data, 0.5 * np.tanh(1.0))
    np.testing.assert_allclose(h.data, 0.5 * np.tanh(0.5 * np.tanh(1.0)))


def test_lstm_step_chain_equals_lstm():
    rng = np.random.default_rng(9)
    params = {k: Tensor(v) for k, v in lstm_params(rng, 3, 4).items()}
    X = rng.normal(size=(1, 4, 2, 3))
    full = lstm(Tensor(X), params).data
    state = None
    for t in range(4):
        h, state = lstm_step(Tensor(X[0, t]), state, params)
        np.testing.assert_allclose(h.data, full[0, t], rtol=1e-12)


# --------------------------------------------------------------- attention
def attn_params(rng, d, dk, dv, M):
    raw = {}
    for m in range(M):
        raw[f"attn.{m}.W_q"] = rng.normal(size=(d, dk))
        raw[f"attn.{m}.W_k"] = rng.normal(size=(d, dk))
        raw[f"attn.{m}.W_v"] = rng.normal(size=(d, dv))
    return raw


def test_attention_matches_loop_oracle():
    rng = np.random.default_rng(10)
    raw = attn_params(rng, 4, 2, 3, 2)
    C = rng.normal(size=(4, 2, 4))
    out, w = multi_head_attention(Tensor(C[None]), {k: Tensor(v) for k, v in raw.items()}, 2, return_weights=True)
    heads = [(raw[f"attn.{m}.W_q"], raw[f"attn.{m}.W_k"], raw[f"attn.{m}.W_v"]) for m in range(2)]
    np.testing.assert_allclose(out.data[0], attention_oracle(C, heads), rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-12)


def test_attention_single_frame_is_value_projection():
    rng = np.random.default_rng(11)
    raw = attn_params(rng, 3, 2, 2, 1)
    C = rng.normal(size=(1, 1, 2, 3))
    out = multi_head_attention(Tensor(C), {k: Tensor(v) for k, v in raw.items()}, 1).data
    np.testing.assert_allclose(out, C @ raw["attn.0.W_v"], rtol=1e-12)


def test_attention_zero_query_averages_values():
    rng = np.random.default_rng(12)
    raw = attn_params(rng, 3, 2, 2, 1)
    raw["attn.0.W_q"] = np.zeros((3, 2))
    C = rng.normal(size=(1, 5, 1, 3))
    out = multi_head_attention(Tensor(C), {k: Tensor(v) for k, v in raw.items()}, 1).data
    mean_v = (C @ raw["attn.0.W_v"]).mean(axis=1, keepdims=True)
    np.testing.assert_allclose(out, np.broadcast_to(mean_v, out.shape), rtol=1e-12)


# -------------------------------------------------------------- classifier
def test_classify_hand_example():
    Z = Tensor(np.array([[[[1.0, 2.0]], [[3.0, -2.0]]]]))  # (B=1, T=2, n=1, d=2)
    W = np.zeros((2, 6))
    W[0, 0], W[1, 1], W[0, 5] = 1.0, 1.0, -1.0
    b = np.arange(6, dtype=float)
    out = classify(Z, {"head.W_l": Tensor(W), "head.b_l": Tensor(b)}).data
    # mean over time = (2, 0)
    np.testing.assert_allclose(out[0, 0], [2.0, 1.0, 2.0, 3.0, 4.0, 3.0], atol=1e-12)


# --------------------------------------------------------------- full model
@pytest.mark.parametrize("variant", VARIANTS)
def test_forward_is_deterministic_and_permutation_equivariant(variant):
    cfg = small_config(variant)
    params = init_params(cfg)
    rng = np.random.default_rng(13)
    seq = random_sequence(rng, n_vehicles=3, n_landmarks=3, T=cfg.T)
    ref = forward(seq, cfg, params)
    assert set(ref) == set(seq.vehicle_ids)
    again = forward(seq, cfg, params)
    for k in ref:
        assert ref[k].tobytes() == again[k].tobytes()
    for _ in range(5):
        perm = rng.permutation(seq.n)
        out = forward(seq.permuted(perm), cfg, params)
        for k in ref:
            assert ref[k].tobytes() == out[k].tobytes()


def test_single_head_equals_sa_bitwise():
    seq = random_sequence(np.random.default_rng(14), T=6)
    ma = small_config("G+L+MA", n_heads=1)
    sa = small_config("G+L+SA")
    assert param_shapes(ma) == param_shapes(sa)
    a = forward(seq, ma, init_params(ma))
    b = forward(seq, sa, init_params(sa))
    for k in a:
        assert a[k].tobytes() == b[k].tobytes()


def test_landmarks_receive_no_logits():
    seq = random_sequence(np.random.default_rng(15), n_vehicles=2, n_landmarks=5)
    out = forward(seq, small_config(), init_params(small_config()))
    assert sorted(out) == sorted(seq.vehicle_ids)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(variant="G+X")
    with pytest.raises(ValueError):
        ModelConfig(mrgcn_dims=())
    assert ModelConfig(variant="G+SA").heads == 1
    assert ModelConfig.from_dict(ModelConfig().to_dict()) == ModelConfig()


def test_init_params_seeded_per_name():
    a = init_params(small_config("G+L+MA"))
    b = init_params(small_config("G+L"))
    for k in set(a) & set(b) - {"head.W_l"}:
        np.testing.assert_array_equal(a[k].data, b[k].data)
    c = init_params(small_config("G+L+MA"), seed=1)
    assert not np.array_equal(a["mrgcn.0.W_s"].data, c["mrgcn.0.W_s"].data)


# -------------------------------------------------------- positional baseline
def test_baseline_features_example():
    seq = SceneSequence((5, 2), [NodeType.VEHICLE, NodeType.LANDMARK], [[[0.0, 0.0], [3.0, 4.0]]], {5: 0})
    feats = baseline_features(seq, n_max=3)
    assert feats.shape == (1, 1, 8)
    np.testing.assert_allclose(feats[0, 0, :4], [5.0, np.arctan2(4.0, 3.0), 0.0, 1.0])
    assert not feats[0, 0, 4:].any()


def test_baseline_features_exclude_self():
    seq = random_sequence(np.random.default_rng(16), n_vehicles=3, n_landmarks=2, T=3)
    feats = baseline_features(seq, n_max=5)
    assert feats.shape == (3, 3, 16)
    assert (feats[..., 0::4] > 0).all()  # no zero-distance self slot


# --------------------------------------------------------------- estimator
@pytest.fixture(scope="module")
def tiny_data():
    seqs, _ = generate_sequences(24, preset("apollo"), seed=3)
    return seqs


def test_get_params_and_clone():
    est = ManeuverClassifier(variant="G+L", epochs=3, embed_dim=8)
    params = est.get_params()
    assert params["variant"] == "G+L" and params["epochs"] == 3
    c = clone(est)
    assert c.get_params() == params and c is not est


def test_zero_epochs_keeps_initial_parameters(tiny_data):
    est = ManeuverClassifier(epochs=0, **SMALL).fit(tiny_data)
    init = init_params(est.config_)
    for k, v in est.params_.items():
        np.testing.assert_array_equal(v.data, init[k].data)


def test_first_epoch_lowers_loss(tiny_data):
    est = ManeuverClassifier(epochs=1, **SMALL).fit(tiny_data)
    assert est.history_["loss"][0] < est.history_["initial_loss"]


def test_predict_shapes_and_save_load(tiny_data, tmp_path):
    est = ManeuverClassifier(epochs=1, **SMALL).fit(tiny_data[:16], X_val=tiny_data[16:])
    truth = vehicle_targets(tiny_data)
    proba = est.predict_proba(tiny_data)
    assert proba.shape == (truth.size, 6)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    path = tmp_path / "m.json"
    est.save(str(path))
    again = ManeuverClassifier.load(str(path))
    np.testing.assert_array_equal(again.decision_function(tiny_data), est.decision_function(tiny_data))
    assert 0.0 <= again.score(tiny_data) <= 1.0


def test_baseline_estimator_runs(tiny_data):
    est = ManeuverClassifier(variant="L+MA", epochs=1).fit(tiny_data)
    assert est.config_.n_max == max(s.n for s in tiny_data)
    assert est.predict(tiny_data).shape == vehicle_targets(tiny_data).shape
