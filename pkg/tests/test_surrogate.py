import numpy as np
import pytest

from vinesim import spam, surrogate as S
from vinesim.units import PSI

G = spam.SpamGeometry()
PR = (0.5 * PSI, 2.5 * PSI)


@pytest.fixture(scope="module")
def data():
    return S.generate_dataset(G, PR, 8000, seed=3)


@pytest.fixture(scope="module")
def model(data):
    return S.train(S.SurrogateSpec(), data, seed=0, epochs=600)


def test_dataset_deterministic():
    a = S.generate_dataset(G, PR, 1000, seed=7)
    b = S.generate_dataset(G, PR, 1000, seed=7)
    c = S.generate_dataset(G, PR, 1000, seed=8)
    assert a.to_bytes() == b.to_bytes()
    assert a.to_bytes() != c.to_bytes()


def test_dataset_size_guard():
    with pytest.raises(ValueError):
        S.generate_dataset(G, PR, 100, seed=0)
    assert len(S.generate_dataset(G, PR, 100, seed=0, min_rows=1)) == 100
    with pytest.raises(ValueError):
        S.generate_dataset(G, (2.0, 1.0), 1000, seed=0)


def test_rows_satisfy_model(data):
    P, eps = data.inputs.T
    ft, m = data.outputs.T
    r = spam.solve_batch(G, m)
    r1, r2 = spam.residuals(G, m, r["phi"], r["l_a"], eps)
    assert np.max(np.abs(r1)) <= 1e-8 and np.max(np.abs(r2)) <= 1e-8
    np.testing.assert_allclose(ft, P * r["f_per_p"], rtol=1e-12, atol=0)


def test_full_contraction_rows_map_to_zero_force(data):
    full = data.outputs[:, 1] == 0.5
    assert full.sum() > 10
    assert np.all(data.outputs[full, 0] == 0.0)
    assert data.out_min[0] == 0.0
    assert np.all(data.y[full, 0] == 0.0)


def test_dataset_file_round_trip(tmp_path, data):
    p = tmp_path / "d.bin"
    data.save(p)
    back = S.Dataset.load(p)
    assert np.array_equal(back.inputs, data.inputs)
    assert np.array_equal(back.outputs, data.outputs)
    assert back.geometry == data.geometry and back.seed == data.seed
    raw = p.read_bytes()
    with pytest.raises(S.FormatError):
        S.Dataset.from_bytes(raw[:-8])
    with pytest.raises(S.FormatError):
        S.Dataset.from_bytes(b"garbage!" + raw[8:])


def test_architecture_fixed():
    with pytest.raises(ValueError):
        S.SurrogateSpec(hidden_dim=64)
    with pytest.raises(ValueError):
        S.SurrogateSpec(activation="tanh")


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    params = S._he_init(rng)
    x, y = rng.random((40, 2)), rng.random((40, 2))
    _, grads = S._loss_grad(params, x, y)
    h = 1e-6
    for p, g in zip(params, grads):
        for idx in list(np.ndindex(p.shape))[:6]:
            old = p[idx]
            p[idx] = old + h
            lp = S._mse(params, x, y)
            p[idx] = old - h
            lm = S._mse(params, x, y)
            p[idx] = old
            assert g[idx] == pytest.approx((lp - lm) / (2 * h), rel=1e-5, abs=1e-9)


def test_constant_outputs_fit_quickly():
    x = np.random.default_rng(1).random((4000, 2))
    d = S.Dataset.from_raw(x, np.tile([3.0, 0.2], (4000, 1)))
    m = S.train(S.SurrogateSpec(), d, seed=0, epochs=100)
    assert m.history["val_mse"] < 1e-4
    assert m.history["val_mse"] < 1e-3 * m.history["val_curve"][0]


def test_training_deterministic(data):
    small = S.Dataset.from_raw(data.inputs[:2000], data.outputs[:2000], G)
    a = S.train(S.SurrogateSpec(), small, seed=5, epochs=20, mse_bound=None)
    b = S.train(S.SurrogateSpec(), small, seed=5, epochs=20, mse_bound=None)
    for k in ("W1", "b1", "W2", "b2"):
        assert np.array_equal(getattr(a, k), getattr(b, k))
    assert a.history["train_rows"] == 1800 and a.history["val_rows"] == 200


def test_training_bound_raises(data):
    small = S.Dataset.from_raw(data.inputs[:2000], data.outputs[:2000], G)
    with pytest.raises(S.TrainingError):
        S.train(S.SurrogateSpec(), small, seed=0, epochs=1, mse_bound=1e-9)
    with pytest.raises(ValueError):
        S.train(S.SurrogateSpec(), small, seed=0, epochs=0)


def test_model_file_round_trip(tmp_path, model):
    p = tmp_path / "m.bin"
    model.save(p)
    back = S.SurrogateModel.load(p)
    x = np.array([[PSI, 0.1], [2 * PSI, 0.3]])
    assert np.array_equal(S.infer_batch(back, x), S.infer_batch(model, x))
    with pytest.raises(S.FormatError):
        S.SurrogateModel.from_bytes(p.read_bytes() + b"x")


def test_batching_is_a_no_op(model):
    rng = np.random.default_rng(2)
    x = np.column_stack([rng.uniform(*PR, 10_000), rng.uniform(0, 0.5, 10_000)])
    full = S.infer_batch(model, x, B=10_000)
    ones = np.concatenate([S.infer_batch(model, x[i:i + 1], B=1) for i in range(0, 10_000, 97)])
    assert np.array_equal(ones, full[::97])
    assert np.array_equal(S.infer_batch(model, x, B=333), full)


def test_clamping_reported(model):
    out, n = S.infer_batch(model, [[10 * PSI, 0.1], [PSI, 0.1]], return_clamped=True)
    assert n == 1 and out.shape == (2, 2)


def test_error_within_training_residual_band(model):
    # ground truth from inverting the actuator model on a held-out grid
    Pg, eg = np.meshgrid(np.linspace(*PR, 12), np.linspace(0.02, 0.95 * spam.max_strain(G), 12))
    x = np.column_stack([Pg.ravel(), eg.ravel()])
    r = spam.invert_strain(G, x[:, 1])
    truth = np.column_stack([x[:, 0] * r["f_per_p"], r["m"]])
    assert S.numeric_solve(G, *x[7]) == pytest.approx(tuple(truth[7]), rel=1e-9)
    pred = S.infer_batch(model, x)
    span = model.out_max - model.out_min
    err = np.abs(pred - truth)[:, 0] / span[0]
    sigma = model.history["train_resid_std"][0]
    assert np.max(err) <= 3 * sigma


def test_force_monotone_in_strain(model):
    P = np.linspace(*PR, 50)
    eps = np.linspace(0, model.in_max[1], 50)
    Pg, eg = np.meshgrid(P, eps, indexing="ij")
    ft = S.infer_batch(model, np.column_stack([Pg.ravel(), eg.ravel()]))[:, 0].reshape(50, 50)
    ftn = (ft - model.out_min[0]) / (model.out_max[0] - model.out_min[0])
    assert np.max(np.diff(ftn, axis=1)) <= 1e-3
