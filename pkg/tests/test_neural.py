import numpy as np
import pytest

from iganet.errors import ContractError, DivergenceError, StorageError
from iganet.neural import (
    Batch,
    MlpSpec,
    adam_init,
    adam_step,
    forward,
    forward_batch,
    init,
    item_losses,
    load_model,
    loss_and_gradient,
    parameters_vector,
    save_model,
    sigmoid,
    standardization,
    with_parameters_vector,
)
from iganet.training import TRAIN, generate_dataset


@pytest.fixture
def toy_batch(rng):
    size, d, k = 3, 5, 4
    inputs = rng.standard_normal((size, d))
    matrices = rng.standard_normal((size, k, k)) + 1j * rng.standard_normal((size, k, k))
    rhs = rng.standard_normal((size, k)) + 1j * rng.standard_normal((size, k))
    return Batch(inputs, matrices, rhs)


@pytest.fixture
def toy_model(toy_batch):
    spec = MlpSpec(toy_batch.inputs.shape[1], 2 * toy_batch.rhs.shape[1], (6, 7))
    return init(spec, seed=0, inputs=toy_batch.inputs)


class TestModel:
    def test_sizes(self) -> None:
        spec = MlpSpec.for_problem(600, 48)
        assert spec.sizes == (600, 50, 50, 96)
        model = init(spec, seed=1)
        assert model.sizes == spec.sizes
        assert model.num_dofs == 48
        assert [w.shape for w in model.weights] == [(600, 50), (50, 50), (50, 96)]

    def test_init_is_seeded(self) -> None:
        spec = MlpSpec(3, 4, (5,))
        np.testing.assert_array_equal(parameters_vector(init(spec, 7)), parameters_vector(init(spec, 7)))
        assert not np.allclose(parameters_vector(init(spec, 7)), parameters_vector(init(spec, 8)))

    def test_sigmoid_stays_finite(self) -> None:
        values = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(values, [0.0, 0.5, 1.0])

    def test_standardization_of_constant_feature(self) -> None:
        mean, scale = standardization(np.array([[1.0, 2.0], [1.0, 4.0]]))
        np.testing.assert_allclose(mean, [1.0, 3.0])
        np.testing.assert_allclose(scale, [1.0, 1.0])

    def test_forward_matches_batch(self, toy_model, toy_batch) -> None:
        batch = forward_batch(toy_model, toy_batch.inputs)
        assert batch.shape == (3, 4) and np.iscomplexobj(batch)
        np.testing.assert_allclose(forward(toy_model, toy_batch.inputs[1]), batch[1])

    def test_zero_network_gives_zero_current(self) -> None:
        model = init(MlpSpec(3, 8, (5,)), seed=0)
        zero = with_parameters_vector(model, np.zeros_like(parameters_vector(model)))
        np.testing.assert_array_equal(forward(zero, np.array([0.3, -1.0, 2.0])), np.zeros(4))

    def test_sphere_does_not_saturate_at_init(self) -> None:
        dataset = generate_dataset(100, seed=0)
        inputs = np.stack([dataset.params(i) for i in dataset.ids(TRAIN)])
        model = init(MlpSpec.for_problem(inputs.shape[1], 48), seed=0, inputs=inputs)
        sphere = next(e for e in dataset.entries if e.is_sphere)
        a = (dataset.params(sphere.id) - model.input_mean) / model.input_scale
        for w, b in zip(model.weights[:-1], model.biases[:-1]):
            z = a @ w + b
            assert np.abs(z).max() <= 4.0
            a = sigmoid(z)
        assert np.abs(a @ model.weights[-1] + model.biases[-1]).max() < 10.0

    def test_input_length(self, toy_model) -> None:
        with pytest.raises(ContractError, match="input length"):
            forward(toy_model, np.zeros(4))


class TestGradient:
    def test_matches_finite_differences(self, toy_model, toy_batch) -> None:
        loss, grads = loss_and_gradient(toy_model, toy_batch)
        analytic = np.concatenate([g.ravel() for g in grads])
        theta = parameters_vector(toy_model)
        h = 1e-6
        numeric = np.empty_like(theta)
        for i in range(theta.size):
            step = np.zeros_like(theta)
            step[i] = h
            plus, _ = loss_and_gradient(with_parameters_vector(toy_model, theta + step), toy_batch)
            minus, _ = loss_and_gradient(with_parameters_vector(toy_model, theta - step), toy_batch)
            numeric[i] = (plus - minus) / (2 * h)
        assert np.linalg.norm(analytic - numeric) <= 1e-5 * np.linalg.norm(analytic)
        assert loss == pytest.approx(item_losses(toy_model, toy_batch).mean())

    def test_zero_network_closed_form(self) -> None:
        k = 4
        model = init(MlpSpec(2, 2 * k, (3,)), seed=0)
        zero = with_parameters_vector(model, np.zeros_like(parameters_vector(model)))
        rhs = np.zeros((1, k), dtype=complex)
        rhs[0, 0] = -1.0
        batch = Batch(np.ones((1, 2)), np.eye(k, dtype=complex)[None], rhs)
        loss, grads = loss_and_gradient(zero, batch)
        assert loss == pytest.approx(1.0 / k, rel=1e-15)
        # dL/dRe j_1 = -2/K; hidden sigmoids sit at 1/2
        expected_bias = np.zeros(2 * k)
        expected_bias[0] = -2.0 / k
        np.testing.assert_allclose(grads[3], expected_bias, atol=1e-15)
        np.testing.assert_allclose(grads[2], np.outer(np.full(3, 0.5), expected_bias), atol=1e-15)
        np.testing.assert_array_equal(grads[0], 0.0)
        np.testing.assert_array_equal(grads[1], 0.0)

    def test_non_finite_loss(self, toy_model, toy_batch) -> None:
        matrices = toy_batch.matrices.copy()
        matrices[0, 0, 0] = np.nan
        with pytest.raises(DivergenceError):
            loss_and_gradient(toy_model, toy_batch._replace(matrices=matrices))

    def test_batch_shape_checked(self, toy_model, toy_batch) -> None:
        with pytest.raises(ContractError, match="batch shapes"):
            loss_and_gradient(toy_model, toy_batch._replace(rhs=toy_batch.rhs[:, :3]))


class TestAdam:
    def test_first_step_moves_by_learning_rate(self, toy_model, toy_batch) -> None:
        _, grads = loss_and_gradient(toy_model, toy_batch)
        state = adam_init(toy_model, lr=1e-2)
        updated, state = adam_step(toy_model, state, grads)
        assert state.step == 1
        moved = parameters_vector(updated) - parameters_vector(toy_model)
        flat = np.concatenate([g.ravel() for g in grads])
        active = np.abs(flat) > 1e-4
        np.testing.assert_allclose(moved[active], -1e-2 * np.sign(flat[active]), rtol=1e-3)

    def test_reduces_loss(self, toy_model, toy_batch) -> None:
        model, state = toy_model, adam_init(toy_model, lr=1e-2)
        start, _ = loss_and_gradient(model, toy_batch)
        for _ in range(300):
            _, grads = loss_and_gradient(model, toy_batch)
            model, state = adam_step(model, state, grads)
        end, _ = loss_and_gradient(model, toy_batch)
        assert end < 0.5 * start

    def test_gradient_shape_checked(self, toy_model) -> None:
        with pytest.raises(ContractError, match="gradient"):
            adam_step(toy_model, adam_init(toy_model), [np.zeros(1)])


class TestModelFile:
    def test_save_and_load(self, tmp_path, toy_model) -> None:
        path = save_model(toy_model, tmp_path / "m.mlp")
        loaded = load_model(path)
        assert loaded.sizes == toy_model.sizes
        np.testing.assert_array_equal(parameters_vector(loaded), parameters_vector(toy_model))
        np.testing.assert_array_equal(loaded.input_mean, toy_model.input_mean)
        np.testing.assert_array_equal(loaded.input_scale, toy_model.input_scale)

    def test_truncated(self, tmp_path, toy_model) -> None:
        path = save_model(toy_model, tmp_path / "m.mlp")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(StorageError, match="values"):
            load_model(path)

    def test_bad_magic(self, tmp_path) -> None:
        path = tmp_path / "m.mlp"
        path.write_bytes(b"XXXXXXXX" + bytes(64))
        with pytest.raises(StorageError, match="not a model file"):
            load_model(path)

    def test_parameter_vector_length(self, toy_model) -> None:
        with pytest.raises(ContractError, match="parameters"):
            with_parameters_vector(toy_model, np.zeros(3))
