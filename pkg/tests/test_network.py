import math

import numpy as np
import pytest

from deepmotion.dataset import StepLabel
from deepmotion.encoding import entropy, gaussian_direction_label
from deepmotion.network import (AdadeltaState, HiddenState, NetworkConfig, NonFiniteError,
                                Prediction, adadelta_step, forward, gradients, init_params, loss,
                                train)
from deepmotion.network.model import check_params, loss_and_gradients
from deepmotion.network.train import _windows, build_sequences
from deepmotion.synthetic import make_crowd

TOY = dict(conv_layers=2, filters=4, lstm_units=4, dense_units=4)


def _state(rng, cfg):
    return rng.uniform(0.1, 1.0, size=(cfg.rows, 2))


def _sequence(rng, cfg, n=3):
    return [(_state(rng, cfg), StepLabel(float(rng.uniform(0, 2)), float(rng.uniform(0, 360))))
            for _ in range(n)]


def test_config_shapes():
    cfg = NetworkConfig()
    assert cfg.rows == 721 and cfg.n_features == 721 * 16 + 361
    assert NetworkConfig.conv_only().conv_layers == 13
    p = init_params(cfg, 0)
    assert p["conv0.weight"].shape == (3, 1, 8)
    assert p["conv1.weight"].shape == (3, 9, 8)
    assert p["dir.out.weight"].shape == (64, 360)
    check_params(p, cfg)
    with pytest.raises(ValueError):
        NetworkConfig(variant="gru")
    with pytest.raises(ValueError):
        NetworkConfig(dropout_rate=1.0)


@pytest.mark.parametrize("variant", ["lstm", "conv"])
@pytest.mark.parametrize("mode", ["train", "eval"])
def test_forward_contract(variant, mode):
    cfg = NetworkConfig(variant=variant, **TOY)
    rng = np.random.default_rng(1)
    params = init_params(cfg, 2)
    hidden = HiddenState.zeros(cfg)
    for _ in range(3):
        pred, hidden = forward(params, _state(rng, cfg), hidden, mode, config=cfg,
                               rng=np.random.default_rng(0))
        assert pred.direction.shape == (360,)
        assert abs(pred.direction.sum() - 1.0) < 1e-6
        assert pred.speed >= 0


def test_zero_weights_give_uniform_direction():
    cfg = NetworkConfig(**TOY)
    params = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
    params["bn.running_var"] = np.ones(cfg.n_features)
    pred, _ = forward(params, np.random.default_rng(0).uniform(size=(cfg.rows, 2)), config=cfg)
    np.testing.assert_array_equal(pred.direction, np.full(360, 1 / 360))


def test_carried_hidden_state_changes_prediction():
    cfg = NetworkConfig(**TOY)
    params = init_params(cfg, 3)
    state = _state(np.random.default_rng(4), cfg)
    first, hidden = forward(params, state, HiddenState.zeros(cfg), config=cfg)
    second, _ = forward(params, state, hidden, config=cfg)
    assert not np.array_equal(first.direction, second.direction)
    assert first.speed != second.speed


def test_eval_forward_is_deterministic():
    cfg = NetworkConfig(**TOY)
    params = init_params(cfg, 5)
    state = _state(np.random.default_rng(6), cfg)
    a, _ = forward(params, state, config=cfg)
    b, _ = forward(params, state, config=cfg)
    np.testing.assert_array_equal(a.direction, b.direction)


def test_loss_examples():
    label = StepLabel(1.0, 90.0)
    d = gaussian_direction_label(90.0, 5.0)
    assert loss(Prediction(d, 1.0), label, 5.0) == pytest.approx(entropy(d), abs=1e-9)
    # the label is the minimizer over predicted distributions
    other = gaussian_direction_label(91.0, 5.0)
    assert loss(Prediction(other, 1.0), label, 5.0) > loss(Prediction(d, 1.0), label, 5.0)
    one_hot = gaussian_direction_label(90.0, 0.0)
    assert loss(Prediction(one_hot, 0.5), label, 0.0) == pytest.approx(0.25, abs=1e-11)
    assert loss(Prediction(one_hot, 1.0), label, 0.0) == pytest.approx(-math.log(1 + 1e-12), abs=1e-15)


def test_gradients_are_deterministic_and_linear():
    cfg = NetworkConfig(dropout_rate=0.0, **TOY)
    rng = np.random.default_rng(7)
    params = init_params(cfg, 8)
    seq = _sequence(rng, cfg)
    g1 = gradients(params, seq, cfg, seed=3)
    g2 = gradients(params, seq, cfg, seed=3)
    g_scaled = gradients(params, seq, cfg, seed=3, scale=2.0)
    assert set(g1) == {k for k in params if not k.startswith("bn.running")}
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])
        np.testing.assert_allclose(g_scaled[k], 2 * g1[k], rtol=0, atol=1e-10)


def test_gradients_need_a_step():
    cfg = NetworkConfig(**TOY)
    with pytest.raises(ValueError):
        gradients(init_params(cfg, 0), [], cfg)


def test_non_finite_input_names_layer():
    cfg = NetworkConfig(**TOY)
    state = np.ones((cfg.rows, 2))
    state[3, 0] = np.nan
    with pytest.raises(NonFiniteError, match="layer conv0"):
        forward(init_params(cfg, 0), state, config=cfg)


def test_non_finite_gradient_names_parameter():
    cfg = NetworkConfig(dropout_rate=0.0, **TOY)
    params = init_params(cfg, 0)
    params["speed.out.bias"] = np.array([800.0])  # finite forward, speed ~ 800
    states = np.full((1, 1, cfg.rows, 2), 0.5)
    with pytest.raises(NonFiniteError, match="parameter"), np.errstate(all="ignore"):
        loss_and_gradients(params, cfg, states, np.array([[1e308]]),
                           gaussian_direction_label(0, 5)[None, None])


def test_adadelta_fixed_point():
    p = {"w": np.array([1.0, -2.0])}
    new, state = adadelta_step(p, {"w": np.zeros(2)}, None, l2_weight=0.0)
    np.testing.assert_array_equal(new["w"], p["w"])
    assert state.steps == 1


def test_adadelta_first_step_closed_form():
    g = 0.3
    new, _ = adadelta_step({"w": np.array([1.0])}, {"w": np.array([g])}, None, l2_weight=0.0)
    expected = math.sqrt(1e-6) / math.sqrt(0.05 * g * g + 1e-6) * g
    assert 1.0 - new["w"][0] == pytest.approx(expected, rel=1e-12)


def test_adadelta_l2_and_determinism():
    p = {"w": np.array([2.0])}
    a, sa = adadelta_step(p, {"w": np.array([0.0])}, None, l2_weight=0.001)
    b, sb = adadelta_step(p, {"w": np.array([0.0])}, None, l2_weight=0.001)
    assert a["w"][0] < 2.0
    assert a["w"][0] == b["w"][0] and sa.square_avg["w"][0] == sb.square_avg["w"][0]
    assert p["w"][0] == 2.0  # inputs untouched
    with pytest.raises(ValueError):
        adadelta_step(p, {"w": np.zeros(3)}, AdadeltaState())


def test_windows_merge_single_trailing_step():
    assert _windows(45, 20) == [(0, 20), (20, 40), (40, 45)]
    assert _windows(41, 20) == [(0, 20), (20, 41)]
    assert _windows(40, 20) == [(0, 20), (20, 40)]
    assert _windows(1, 20) == [(0, 1)]


@pytest.fixture(scope="module")
def tiny_scene():
    return make_crowd(4, seed=5, steps=(5, 7), obstacles=True)


def test_training_sequences_exclude_own_agent(tiny_scene):
    seqs = build_sequences(tiny_scene, bins=360)
    assert len(seqs) == 4
    for s in seqs:
        track = tiny_scene.agent(s.human_id)
        assert s.states.shape == (len(track) - 1, 721, 2)
        np.testing.assert_array_equal(s.states[0, :, 0], s.states[0, :, 1])
        # target direction block matches the track's goal
        assert s.states[0, 720, 0] == pytest.approx(np.hypot(*(track.end - track.positions[0])))


def test_train_zero_epochs_is_identity(tiny_scene):
    cfg = NetworkConfig(**TOY)
    res = train(tiny_scene, cfg, 0, seed=9)
    init_seq = np.random.SeedSequence(9).spawn(3)[0]
    expected = init_params(cfg, np.random.default_rng(init_seq))
    assert res.log == []
    assert set(res.params) == set(expected)
    for k in res.params:
        np.testing.assert_array_equal(res.params[k], expected[k])
    given = init_params(cfg, 1)
    out = train(tiny_scene, cfg, 0, seed=9, params=given).params
    for k in given:
        np.testing.assert_array_equal(out[k], given[k])


def test_train_same_seed_same_log(tiny_scene):
    cfg = NetworkConfig(**TOY)
    a = train(tiny_scene, cfg, 2, seed=4, batch_size=2)
    b = train(tiny_scene, cfg, 2, seed=4, batch_size=2)
    strip = [(e.epoch, e.mean_loss, e.mean_speed_loss, e.mean_direction_loss) for e in a.log]
    assert strip == [(e.epoch, e.mean_loss, e.mean_speed_loss, e.mean_direction_loss) for e in b.log]
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    c = train(tiny_scene, cfg, 2, seed=5, batch_size=2)
    assert c.log[0].mean_loss != a.log[0].mean_loss


def test_train_updates_running_moments(tiny_scene):
    cfg = NetworkConfig(**TOY)
    res = train(tiny_scene, cfg, 1, seed=0)
    assert not np.allclose(res.params["bn.running_mean"], 0)


def test_train_rejects_empty():
    from deepmotion.dataset import TrajectoryDataset

    with pytest.raises(ValueError):
        train(TrajectoryDataset([]), NetworkConfig(**TOY), 1)
