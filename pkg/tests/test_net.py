import numpy as np
import pytest

from conftest import fd_param_gradient, rel_error, tiny_params
from selcontrast.errors import (
    ConfigError,
    DegenerateEmbeddingError,
    InputError,
    TrainingDivergenceError,
)
from selcontrast.losses import LOG_EPS
from selcontrast.net import (
    AffineLayer,
    ModelParams,
    OptimizerState,
    backward,
    classifier_l2_norm,
    forward,
    init_params,
    load_checkpoint,
    normalize_embedding,
    normalize_rows,
    save_checkpoint,
    sgd_step,
    softmax,
)


def zero_params(d=3, hidden=(4,), k=4):
    layers = [AffineLayer(np.zeros((a, b)), np.zeros(b))
              for a, b in zip([d, *hidden][:-1], [d, *hidden][1:])]
    return ModelParams(embedding=layers,
                       classifier=AffineLayer(np.zeros((hidden[-1], k)),
                                              np.zeros(k)))


def pass_through_params(k=2):
    # identity embedding + identity classifier for non-negative inputs
    return ModelParams(embedding=[AffineLayer(np.eye(k), np.zeros(k))],
                       classifier=AffineLayer(np.eye(k), np.zeros(k)))


class TestForward:
    def test_zero_weights_give_uniform_probs(self):
        params = zero_params(k=4)
        rec = forward(params, np.array([[1.0, -2.0, 0.5]]))
        assert np.array_equal(rec.probs, np.full((1, 4), 0.25))

    def test_hand_computed_softmax(self):
        params = pass_through_params()
        rec = forward(params, np.array([[np.log(2.0), 0.0]]))
        np.testing.assert_allclose(rec.probs[0], [2.0 / 3.0, 1.0 / 3.0],
                                   rtol=1e-12)

    def test_shift_invariance(self, rng):
        logits = rng.standard_normal((8, 5))
        shifted = softmax(logits + 1000.0)
        np.testing.assert_allclose(shifted, softmax(logits), atol=1e-12)
        assert np.array_equal(shifted.argmax(axis=1),
                              softmax(logits).argmax(axis=1))

    def test_rows_sum_to_one(self, rng):
        logits = rng.standard_normal((50, 7)) * 100.0
        probs = softmax(logits)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_dimension_mismatch(self, rng):
        params = tiny_params(rng)
        with pytest.raises(ConfigError):
            forward(params, np.zeros((2, 7)))

    def test_non_finite_input(self, rng):
        params = tiny_params(rng)
        with pytest.raises(InputError):
            forward(params, np.array([[np.nan, 0.0, 1.0]]))

    def test_embedding_cached(self, rng):
        params = tiny_params(rng, d=4, hidden=(6, 3), k=2)
        x = rng.standard_normal((5, 4))
        rec = forward(params, x)
        assert rec.embedding.shape == (5, 3)
        assert (rec.embedding >= 0.0).all()  # post-ReLU


class TestNormalize:
    def test_hand_value(self):
        np.testing.assert_array_equal(
            normalize_embedding(np.array([3.0, 4.0])), [0.6, 0.8])

    def test_unit_vector_unchanged(self):
        v = np.array([0.6, 0.8])
        np.testing.assert_allclose(normalize_embedding(v), v, atol=1e-15)

    def test_zero_norm_raises(self):
        with pytest.raises(DegenerateEmbeddingError):
            normalize_embedding(np.zeros(3))

    def test_tiny_inputs_stay_unit(self, rng):
        for scale in (1e-30, 1e-12, 1e3):
            v = rng.standard_normal(6) * scale
            assert abs(np.linalg.norm(normalize_embedding(v)) - 1.0) <= 1e-12

    def test_rows_variant_raises_on_dead_row(self):
        m = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(DegenerateEmbeddingError):
            normalize_rows(m)


class TestBackward:
    def test_zero_injections_give_zero_grads(self, rng):
        params = tiny_params(rng)
        x = rng.standard_normal((4, 3))
        rec = forward(params, x)
        grads = backward(params, rec, np.zeros_like(rec.logits),
                         np.zeros((4, params.embedding_dim)))
        for g in grads.arrays():
            assert np.array_equal(g, np.zeros_like(g))

    def test_cross_entropy_gradient_matches_fd(self, rng):
        params = tiny_params(rng)
        x = rng.standard_normal((3, 3))
        y = np.array([0, 2, 1])

        def loss_fn(p):
            probs = forward(p, x).probs
            return float(-np.log(
                np.maximum(probs[np.arange(3), y], LOG_EPS)).mean())

        rec = forward(params, x)
        grad_logits = rec.probs.copy()
        grad_logits[np.arange(3), y] -= 1.0
        grads = backward(params, rec, grad_logits / 3.0,
                         np.zeros((3, params.embedding_dim)))
        fd = fd_param_gradient(loss_fn, params)
        for got, want in zip(grads.arrays(), fd):
            assert rel_error(got, want) < 1e-6

    def test_embedding_injection_matches_fd(self, rng):
        # quadratic probe loss injected at the embedding output only
        params = tiny_params(rng, d=4, hidden=(6, 5), k=3)
        x = rng.standard_normal((4, 4))
        target = rng.standard_normal((4, 5))

        def loss_fn(p):
            emb = forward(p, x).embedding
            return float(0.5 * ((emb - target) ** 2).sum())

        rec = forward(params, x)
        grads = backward(params, rec, np.zeros_like(rec.logits),
                         rec.embedding - target)
        fd = fd_param_gradient(loss_fn, params)
        for got, want in zip(grads.arrays(), fd):
            assert rel_error(got, want) < 1e-6

    def test_embedding_injection_leaves_classifier_untouched(self, rng):
        params = tiny_params(rng)
        x = rng.standard_normal((2, 3))
        rec = forward(params, x)
        grads = backward(params, rec, np.zeros_like(rec.logits),
                         np.ones((2, params.embedding_dim)))
        assert np.array_equal(grads.classifier.w,
                              np.zeros_like(grads.classifier.w))
        assert np.array_equal(grads.classifier.b,
                              np.zeros_like(grads.classifier.b))

    def test_shape_mismatch(self, rng):
        params = tiny_params(rng)
        rec = forward(params, rng.standard_normal((2, 3)))
        with pytest.raises(ConfigError):
            backward(params, rec, np.zeros((2, 99)),
                     np.zeros((2, params.embedding_dim)))

    def test_combined_equals_sum_of_passes(self, rng):
        params = tiny_params(rng, d=4, hidden=(5, 4), k=3)
        x = rng.standard_normal((6, 4))
        rec = forward(params, x)
        gl = rng.standard_normal(rec.logits.shape)
        ge = rng.standard_normal((6, params.embedding_dim))
        both = backward(params, rec, gl, ge)
        only_l = backward(params, rec, gl, np.zeros_like(ge))
        only_e = backward(params, rec, np.zeros_like(gl), ge)
        for g, a, b in zip(both.arrays(), only_l.arrays(), only_e.arrays()):
            assert rel_error(g, a + b) < 1e-12


class TestSgd:
    def test_zero_gradient_is_fixed_point(self, rng):
        params = tiny_params(rng)
        before = [a.copy() for a in params.arrays()]
        state = OptimizerState.for_params(params, lr=0.1, momentum=0.0,
                                          weight_decay=0.0)
        rec = forward(params, rng.standard_normal((2, 3)))
        grads = backward(params, rec, np.zeros_like(rec.logits),
                         np.zeros((2, params.embedding_dim)))
        sgd_step(params, state, grads)
        for a, b in zip(params.arrays(), before):
            assert np.array_equal(a, b)

    def test_hand_computed_step(self):
        params = ModelParams(
            embedding=[AffineLayer(np.array([[1.0]]), np.zeros(1))],
            classifier=AffineLayer(np.array([[0.0]]), np.zeros(1)))
        state = OptimizerState.for_params(params, lr=0.1, momentum=0.0,
                                          weight_decay=0.0)
        grads = OptimizerState.for_params(params, lr=0.1, momentum=0.0,
                                          weight_decay=0.0).buffers
        grads.embedding[0].w[0, 0] = 0.5
        sgd_step(params, state, grads)
        assert params.embedding[0].w[0, 0] == pytest.approx(0.95, abs=0.0)

    def test_momentum_limit_step(self):
        # repeated identical gradient: step size converges to lr*g/(1-mu)
        params = ModelParams(
            embedding=[AffineLayer(np.array([[0.0]]), np.zeros(1))],
            classifier=AffineLayer(np.array([[0.0]]), np.zeros(1)))
        state = OptimizerState.for_params(params, lr=0.01, momentum=0.9,
                                          weight_decay=0.0)
        grads = OptimizerState.for_params(params, lr=0.01, momentum=0.9,
                                          weight_decay=0.0).buffers
        grads.embedding[0].w[0, 0] = 2.0
        prev = params.embedding[0].w[0, 0]
        for _ in range(400):
            before = params.embedding[0].w[0, 0]
            sgd_step(params, state, grads)
            prev = before - params.embedding[0].w[0, 0]
        assert prev == pytest.approx(0.01 * 2.0 / (1.0 - 0.9), rel=1e-9)

    def test_weight_decay_before_momentum(self):
        params = ModelParams(
            embedding=[AffineLayer(np.array([[2.0]]), np.zeros(1))],
            classifier=AffineLayer(np.array([[0.0]]), np.zeros(1)))
        state = OptimizerState.for_params(params, lr=1.0, momentum=0.5,
                                          weight_decay=0.1)
        grads = OptimizerState.for_params(params, lr=1.0, momentum=0.5,
                                          weight_decay=0.1).buffers
        # buf = 0.5*0 + (0 + 0.1*2) = 0.2 -> w = 2 - 0.2 = 1.8
        sgd_step(params, state, grads)
        assert params.embedding[0].w[0, 0] == pytest.approx(1.8, abs=1e-15)

    def test_deterministic(self, rng):
        seeds = np.random.default_rng(1)
        results = []
        for _ in range(2):
            r = np.random.default_rng(9)
            params = tiny_params(r)
            state = OptimizerState.for_params(params, lr=0.05, momentum=0.9,
                                              weight_decay=1e-3)
            rec = forward(params, r.standard_normal((4, 3)))
            grads = backward(params, rec,
                             r.standard_normal(rec.logits.shape),
                             r.standard_normal((4, params.embedding_dim)))
            sgd_step(params, state, grads)
            results.append([a.copy() for a in params.arrays()])
        for a, b in zip(*results):
            assert np.array_equal(a, b)

    def test_non_finite_gradient_raises(self, rng):
        params = tiny_params(rng)
        state = OptimizerState.for_params(params, lr=0.1, momentum=0.0,
                                          weight_decay=0.0)
        grads = OptimizerState.for_params(params, lr=0.1, momentum=0.0,
                                          weight_decay=0.0).buffers
        grads.embedding[0].w[0, 0] = np.nan
        with pytest.raises(TrainingDivergenceError):
            sgd_step(params, state, grads)


class TestClassifierNorm:
    def test_zero_classifier(self):
        assert classifier_l2_norm(zero_params()) == 0.0

    def test_ones_weight(self):
        params = zero_params(hidden=(2,), k=2)
        params.classifier.w[:] = 1.0
        assert classifier_l2_norm(params) == pytest.approx(2.0, abs=0.0)

    def test_weight_and_bias(self):
        params = ModelParams(
            embedding=[AffineLayer(np.zeros((1, 1)), np.zeros(1))],
            classifier=AffineLayer(np.array([[3.0]]), np.array([4.0])))
        assert classifier_l2_norm(params) == pytest.approx(5.0, abs=0.0)


class TestCheckpoint:
    def test_round_trip(self, rng, tmp_path):
        params = tiny_params(rng, d=5, hidden=(7, 4), k=3)
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, seed=42, head="ce", n_classes=3,
                        epoch=9)
        loaded, meta = load_checkpoint(path)
        for a, b in zip(params.arrays(), loaded.arrays()):
            assert np.array_equal(a, b)
        assert meta == {"seed": 42, "head": "ce", "n_classes": 3, "epoch": 9}

    def test_init_is_seeded(self):
        a = init_params(4, (6, 3), 2, np.random.default_rng(7))
        b = init_params(4, (6, 3), 2, np.random.default_rng(7))
        for x, y in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)

    def test_requires_hidden_layer(self):
        with pytest.raises(ConfigError):
            init_params(4, (), 2, np.random.default_rng(0))
