import numpy as np
import pytest

from tdcn.arch import Architecture, InvalidArchitecture, LayerSpec, parse_layers
from tdcn.data import synth_patterns
from tdcn.nn import (Network, TrainConfig, TrainingDiverged, TrainingEvaluator, WeightFileError,
                     check_network, evaluate, softmax, softmax_cross_entropy, train)
from tdcn.nn.gradcheck import relative_error
from tdcn.nn.layers import AvgPool, BatchNorm, Conv2D, Dense, Dropout, MaxPool


def net_for(text, shape, k, seed=0):
    return Network(Architecture(shape, k, tuple(parse_layers(text))), seed)


class TestLayers:
    def test_avgpool_constant(self):
        x = np.full((1, 4, 4, 2), 0.3)
        assert np.allclose(AvgPool(2).forward(x), 0.3)

    def test_maxpool_window(self):
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 2, 2, 1)
        assert MaxPool(2).forward(x).item() == 4.0

    def test_pool_floor_crop(self):
        x = np.arange(25.0).reshape(1, 5, 5, 1)
        out = MaxPool(2).forward(x)
        assert out.shape == (1, 2, 2, 1) and out[0, :, :, 0].tolist() == [[6, 8], [16, 18]]
        # the cropped border gets no gradient
        layer = MaxPool(2)
        layer.forward(x)
        g = layer.backward(np.ones_like(out))
        assert g[0, 4, :, 0].sum() == 0 and g.sum() == 4

    def test_conv_identity_kernel(self):
        layer = Conv2D(1, 1, 3, np.random.default_rng(0), relu=False)
        layer.params["W"][:] = 0
        layer.params["W"][1, 1, 0, 0] = 1
        x = np.random.default_rng(1).standard_normal((2, 5, 6, 1))
        assert np.allclose(layer.forward(x), x)

    def test_dropout_inference_identity(self):
        layer = Dropout(0.5)
        x = np.random.default_rng(0).standard_normal((3, 7))
        assert np.array_equal(layer.forward(x, train=False), x)
        g = np.ones_like(x)
        assert np.array_equal(layer.backward(g), g)

    def test_dropout_inverted_scaling(self):
        layer = Dropout(0.25)
        out = layer.forward(np.ones((2000, 50)), train=True, rng=np.random.default_rng(0))
        assert set(np.unique(out)) <= {0.0, 1 / 0.75}
        assert abs(out.mean() - 1.0) < 0.02

    def test_dense_scalar_chain_rule(self):
        layer = Dense(1, 1, np.random.default_rng(0), relu=False)
        x = np.array([[1.7]])
        layer.forward(x)
        layer.backward(np.array([[0.4]]))
        assert layer.grads["W"].item() == pytest.approx(1.7 * 0.4)

    def test_batchnorm_train_normalizes(self):
        bn = BatchNorm(3)
        x = np.random.default_rng(0).normal(5, 2, (64, 3))
        out = bn.forward(x, train=True)
        assert np.allclose(out.mean(axis=0), 0, atol=1e-12)
        assert np.allclose(out.std(axis=0), 1, atol=1e-6)
        # running statistics move toward the batch moments
        assert np.all(bn.buffers["mean"] > 0)


class TestLoss:
    def test_uniform(self):
        loss, _ = softmax_cross_entropy(np.zeros((4, 5)), [0, 1, 2, 3])
        assert loss == pytest.approx(np.log(5))

    def test_saturated(self):
        logits = np.zeros((1, 3))
        logits[0, 1] = 30
        assert softmax_cross_entropy(logits, [1])[0] < 1e-12

    def test_closed_form(self):
        assert softmax_cross_entropy(np.array([[1.0, 2.0]]), [1])[0] == pytest.approx(np.log1p(np.exp(-1)))

    def test_gradient(self):
        logits = np.array([[1.0, 2.0], [0.0, 0.0]])
        _, g = softmax_cross_entropy(logits, [1, 0])
        expect = (softmax(logits) - np.eye(2)[[1, 0]]) / 2
        assert np.allclose(g, expect)

    def test_non_finite(self):
        with pytest.raises(FloatingPointError):
            softmax_cross_entropy(np.array([[np.nan, 0.0]]), [0])


class TestNetwork:
    def test_whole_network_gradcheck(self):
        net = net_for("C2D(3,3)|BN|MP(2)|C2D(2,3)|AP(2)|F|DE(5)|DO(0.5)|DE(3)|BN", (8, 8, 2), 3, seed=1)
        x = np.random.default_rng(2).standard_normal((4, 8, 8, 2))
        errors = check_network(net, x, [0, 1, 2, 1], train=True, seed=3)
        assert max(errors.values()) < 1e-5

    def test_relative_error(self):
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
        assert relative_error(np.array([1.0, 0.0]), np.array([1.0, 1e-3])) == pytest.approx(1e-3)
        # round-off on a gradient that should be zero is not an error
        assert relative_error(np.array([1e-17]), np.array([3e-12])) < 1e-3

    def test_invalid_architecture_rejected(self):
        with pytest.raises(InvalidArchitecture):
            net_for("F|C2D(2,3)|DE(2)", (4, 4, 1), 2)

    def test_predict_rows_sum_to_one(self):
        net = net_for("C2D(4,3)|F|DE(3)", (6, 6, 3), 3)
        x = np.random.default_rng(0).random((5, 6, 6, 3))
        p = net.predict_proba(np.concatenate([x, x[:1]]))
        assert np.allclose(p.sum(axis=1), 1)
        # BLAS may block rows differently, so equal up to round-off
        assert np.allclose(p[0], p[-1], rtol=0, atol=1e-15)

    def test_symmetric_zero_net(self):
        net = net_for("F|DE(2)", (2, 2, 1), 2)
        for _, _, arr in net.parameters():
            arr[...] = 0
        assert np.array_equal(net.predict_proba(np.random.default_rng(0).random((3, 2, 2, 1))),
                              np.full((3, 2), 0.5))

    def test_weight_round_trip(self, tmp_path):
        net = net_for("C2D(4,3)|BN|MP(2)|F|DE(6)|DO(0.5)|DE(2)", (8, 8, 3), 2, seed=4)
        x = np.random.default_rng(0).random((6, 8, 8, 3))
        net.forward(x, train=True, rng=np.random.default_rng(0))  # move BN running stats
        net.save(tmp_path / "w.bin")
        back = Network.load(tmp_path / "w.bin")
        assert back.arch == net.arch
        assert np.array_equal(back.predict_proba(x), net.predict_proba(x))

    def test_weight_file_errors(self, tmp_path):
        with pytest.raises(WeightFileError):
            Network.from_bytes(b"nope")
        blob = net_for("F|DE(2)", (2, 2, 1), 2).to_bytes()
        with pytest.raises(WeightFileError):
            Network.from_bytes(blob[:-3])


def blobs(n=100, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.normal(0, 0.3, (n, 2, 2, 1)) + np.where(y == 1, 1.0, -1.0)[:, None, None, None]
    return x, y


class TestTraining:
    def test_separable_blobs(self):
        arch = Architecture((2, 2, 1), 2, (LayerSpec.flatten(), LayerSpec.dense(2)))
        net, report = train(arch, blobs(200), blobs(100, 1), TrainConfig(epochs=50, seed=0))
        assert report.accuracy >= 0.95

    def test_one_epoch(self):
        arch = Architecture((2, 2, 1), 2, (LayerSpec.flatten(), LayerSpec.dense(2)))
        _, report = train(arch, blobs(), blobs(50, 1), TrainConfig(epochs=1))
        assert report.epochs == 1

    def test_zero_epochs_forbidden(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_deterministic(self):
        arch = Architecture((8, 8, 3), 2, tuple(parse_layers("C2D(4,3)|BN|MP(2)|F|DE(8)|DO(0.5)|DE(2)")))
        data = synth_patterns(20, side=8, seed=0)
        pair = data.as_pair()
        a = train(arch, pair, pair, TrainConfig(epochs=2, seed=5))[1]
        b = train(arch, pair, pair, TrainConfig(epochs=2, seed=5))[1]
        assert (a.accuracy, a.auc, a.kappa) == (b.accuracy, b.auc, b.kappa)

    def test_patience_stops_early(self):
        arch = Architecture((2, 2, 1), 2, (LayerSpec.flatten(), LayerSpec.dense(2)))
        x, y = blobs()
        _, report = train(arch, (x, y), (x, y), TrainConfig(epochs=40, learning_rate=0.1, patience=2))
        assert report.epochs < 40

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reported(self):
        arch = Architecture((2, 2, 1), 2, (LayerSpec.flatten(), LayerSpec.dense(2)))
        x, y = blobs()
        with pytest.raises(TrainingDiverged):
            train(arch, (x, y), (x, y), TrainConfig(epochs=3, learning_rate=1e308))

    def test_shape_mismatch(self):
        arch = Architecture((3, 3, 1), 2, (LayerSpec.flatten(), LayerSpec.dense(2)))
        with pytest.raises(ValueError, match="expects"):
            train(arch, blobs(), blobs(), TrainConfig(epochs=1))

    def test_evaluator_and_evaluate(self):
        arch = Architecture((2, 2, 1), 2, (LayerSpec.flatten(), LayerSpec.dense(2)))
        ev = TrainingEvaluator(blobs(), blobs(60, 1), TrainConfig(), fold=3)
        net, report = ev.fit(arch, epochs=5, seed=1)
        assert report.fold == 3 and report.params == 10
        assert evaluate(net, *blobs(60, 1))["accuracy"] == report.accuracy
