import json

import numpy as np
import pytest

from iin.errors import NumericError
from iin.nn import (
    NadamState, backward, encode_context, init_params, load_checkpoint, loss_and_grads,
    nadam_update, output_head, predict, save_checkpoint,
)
from iin.nn.checkpoint import from_dict, to_dict
from iin.nn.model import dropout_masks, glorot_limit

import oracles
from nn_helpers import gradcheck_case, open_gates, oracle_encode, perturb, relative_error


def small(kind="standard", hidden=4, seed=0, **kw):
    rng = np.random.default_rng(seed + 1000)
    model = perturb(init_params(hidden=hidden, cell_kind=kind, seed=seed, time_span=8.0, **kw), rng)
    return open_gates(model, rng) if kind == "phased" else model


class TestEncode:
    @pytest.mark.parametrize("seed", range(12))
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        kind = ["standard", "phased"][seed % 2]
        model = small(kind, hidden=int(rng.integers(1, 9)), seed=seed)
        w = int(rng.integers(1, 6))
        left, right = rng.normal(size=w), rng.normal(size=w)
        lt = rt = None
        if kind == "phased":
            ts = np.arange(2 * w + 1.0) + rng.uniform(0, 10)
            lt, rt = ts[:w], ts[w + 1:]
        hf, hb = encode_context(model, left, right, lt, rt)
        of, ob = oracle_encode(model, left, right, lt, rt)
        assert np.abs(hf - of).max() < 1e-12 and np.abs(hb - ob).max() < 1e-12

    def test_batch_equals_single(self):
        rng = np.random.default_rng(5)
        model = small()
        L, R = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        hf, hb = encode_context(model, L, R)
        for b in range(6):
            sf, sb = encode_context(model, L[b], R[b])
            np.testing.assert_allclose(hf[b], sf, rtol=0, atol=1e-14)
            np.testing.assert_allclose(hb[b], sb, rtol=0, atol=1e-14)

    def test_zero_model(self):
        model = init_params(hidden=3, seed=0)
        for v in model.tensors.values():
            v[...] = 0
        hf, hb = encode_context(model, [1.0, 2.0], [3.0, 4.0])
        assert not hf.any() and not hb.any()

    def test_left_order_matters(self):
        model = small(seed=3)
        left = np.array([0.1, -1.2, 0.7])
        a, _ = encode_context(model, left, np.zeros(3))
        b, _ = encode_context(model, left[::-1], np.zeros(3))
        assert np.abs(a - b).max() > 1e-6

    def test_phased_needs_times(self):
        with pytest.raises(ValueError):
            encode_context(small("phased"), [1.0], [1.0])


class TestHead:
    def test_zero_weights_give_bias(self):
        model = init_params(hidden=50, seed=0)
        model.tensors["head.W"][...] = 0
        model.tensors["head.b"][...] = 1.5
        assert output_head(model, np.ones(50), np.ones(50)) == 1.5

    def test_eval_ignores_mask(self):
        model = init_params(hidden=5, seed=0)
        h = np.random.default_rng(0).normal(size=5)
        assert output_head(model, h, h, np.zeros(10)) == output_head(model, h, h)

    def test_unit_weights(self):
        model = init_params(hidden=50, seed=0)
        model.tensors["head.W"][...] = 1.0
        model.tensors["head.b"][...] = 0.25
        out = output_head(model, np.full(50, 0.01), np.full(50, 0.01))
        assert out == pytest.approx(100 * 0.01 + 0.25, abs=1e-14)

    def test_inverted_dropout_preserves_expectation(self):
        rng = np.random.default_rng(7)
        model = init_params(hidden=50, seed=2)
        model.tensors["head.b"][...] = 0.1
        hf, hb = rng.uniform(0.1, 1, 50), rng.uniform(0.1, 1, 50)
        masks = dropout_masks(model, 100_000, rng)
        outs = output_head(model, np.tile(hf, (100_000, 1)), np.tile(hb, (100_000, 1)), masks, training=True)
        ref = output_head(model, hf, hb)
        assert abs(outs.mean() - ref) < 0.01 * abs(ref)


class TestBackward:
    @pytest.mark.parametrize("kind", ["standard", "phased"])
    def test_finite_differences(self, kind):
        model = small(kind, seed=4)
        pairs, resid = gradcheck_case(model, np.random.default_rng(9))
        assert resid > 1e-3
        worst = max(relative_error(a, n) for a, n in pairs.values())
        assert worst < 1e-4

    def test_finite_differences_with_dropout(self):
        model = small(seed=6)
        pairs, _ = gradcheck_case(model, np.random.default_rng(2), dropout=True)
        assert max(relative_error(a, n) for a, n in pairs.values()) < 1e-4

    def test_every_parameter_has_a_gradient(self):
        model = small("phased")
        g = backward(model, np.ones((2, 3)), np.ones((2, 3)), [0.0, 1.0],
                     left_t=np.ones((2, 3)) * [1, 2, 3], right_t=np.ones((2, 3)) * [5, 6, 7])
        assert set(g) == set(model.tensors)
        assert all(g[k].shape == model.tensors[k].shape for k in g)

    def test_duplicated_batch_same_gradient(self):
        rng = np.random.default_rng(1)
        model = small()
        L, R, y = rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), rng.normal(size=4)
        g1 = backward(model, L, R, y)
        g2 = backward(model, np.vstack([L, L]), np.vstack([R, R]), np.concatenate([y, y]))
        for k in g1:
            np.testing.assert_allclose(g1[k], g2[k], rtol=1e-12, atol=1e-15)

    def test_zero_residual_kink(self):
        model = init_params(hidden=3, seed=0)
        for v in model.tensors.values():
            v[...] = 0
        loss, g = loss_and_grads(model, np.zeros((5, 2)), np.zeros((5, 2)), np.zeros(5))
        assert loss == 0 and g["head.b"][0] == 0
        assert all(not v.any() for v in g.values())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_gradient_names_parameter(self):
        model = small()
        model.tensors["head.W"][0, 0] = np.inf
        with pytest.raises(NumericError, match="parameter 'fwd.0.W_x'"):
            loss_and_grads(model, np.ones((1, 3)), np.ones((1, 3)), [0.0])


class TestNadam:
    def test_zero_gradient(self):
        p = {"a": np.array([1.0, -2.0])}
        st = NadamState()
        nadam_update(st, p, {"a": np.zeros(2)})
        np.testing.assert_array_equal(p["a"], [1.0, -2.0])
        assert st.step == 1

    def test_quadratic_matches_scalar_reference(self):
        p = {"x": np.array([1.0])}
        st = NadamState()
        nadam_update(st, p, {"x": p["x"].copy()})
        ref = oracles.nadam_scalar(1.0, [lambda th: th])
        assert abs(p["x"][0] - ref) < 1e-12

    def test_many_steps_match_reference(self):
        p = {"x": np.array([3.0])}
        st = NadamState(lr=0.05)
        for _ in range(25):
            nadam_update(st, p, {"x": np.sin(p["x"]) + p["x"]})
        ref = oracles.nadam_scalar(3.0, [lambda th: np.sin(th) + th] * 25, lr=0.05)
        assert abs(p["x"][0] - ref) < 1e-12

    def test_two_steps_differ_from_doubled_lr(self):
        a = {"x": np.array([1.0])}
        st = NadamState()
        nadam_update(st, a, {"x": a["x"].copy()})
        nadam_update(st, a, {"x": a["x"].copy()})
        b = {"x": np.array([1.0])}
        nadam_update(NadamState(lr=0.004), b, {"x": b["x"].copy()})
        ref = oracles.nadam_scalar(1.0, [lambda th: th] * 2)
        assert abs(a["x"][0] - ref) < 1e-12
        assert a["x"][0] != b["x"][0]


class TestInit:
    def test_recurrent_blocks_orthogonal(self):
        m = init_params(seed=0)
        for name, arr in m.tensors.items():
            if name.endswith("W_h"):
                for k in range(4):
                    q = arr[:, k * 50:(k + 1) * 50]
                    assert np.abs(q.T @ q - np.eye(50)).max() < 1e-10

    def test_glorot_limit(self):
        lim = glorot_limit(50, 50)
        assert lim == pytest.approx(0.2449489742783178, abs=1e-15)
        m = init_params(seed=0)
        for d in ("fwd", "bwd"):
            assert np.abs(m.tensors[f"{d}.1.W_x"]).max() < lim
            assert np.abs(m.tensors[f"{d}.0.W_x"]).max() < glorot_limit(1, 50)

    def test_zero_biases_and_peepholes(self):
        m = init_params(seed=0)
        for name, arr in m.tensors.items():
            if name.endswith((".b", ".w_c")):
                assert not arr.any()

    def test_shapes_and_registry(self):
        m = init_params(seed=0)
        assert m.tensors["head.W"].shape == (100, 1)
        assert m.tensors["fwd.1.W_h"].shape == (50, 200)
        assert len(m.tensors) == 2 * 2 * 4 + 2

    def test_phased_gate_parameters(self):
        m = init_params(hidden=20, cell_kind="phased", seed=0, time_span=24.0)
        for d in ("fwd", "bwd"):
            tau, s = m.tensors[f"{d}.0.tau"], m.tensors[f"{d}.0.s"]
            assert ((tau >= 1) & (tau <= 24)).all()
            assert ((s >= 0) & (s < tau)).all()
            assert (m.tensors[f"{d}.0.r_on"] == 0.05).all()

    def test_same_seed_identical(self):
        a, b = init_params(seed=5), init_params(seed=5)
        assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)
        c = init_params(seed=6)
        assert not np.array_equal(a.tensors["head.W"], c.tensors["head.W"])


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["standard", "phased"])
    def test_round_trip_exact(self, tmp_path, kind):
        m = small(kind, seed=8)
        m.tensors["head.b"][0] = 0.1 + 0.2
        save_checkpoint(m, tmp_path / "m.json", {"w": 3})
        back = load_checkpoint(tmp_path / "m.json")
        assert back.cell_kind == kind and back.hidden == m.hidden
        assert all(np.array_equal(back.tensors[k], m.tensors[k]) for k in m.tensors)
        d = json.loads((tmp_path / "m.json").read_text())
        assert d["format_version"] == 1 and d["hyperparameters"]["w"] == 3

    def test_rejects_unknown_format(self):
        d = to_dict(small())
        d["format_version"] = 99
        with pytest.raises(Exception):
            from_dict(d)

    def test_predictions_survive_round_trip(self):
        m = small(seed=2)
        back = from_dict(json.loads(json.dumps(to_dict(m))))
        L = np.random.default_rng(0).normal(size=(3, 3))
        np.testing.assert_array_equal(predict(m, L, L), predict(back, L, L))
