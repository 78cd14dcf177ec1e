import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rarecast import reservoir as R
from rarecast import dynsys
from rarecast.updating import UpdateSchedule


def planted_series(model, W_star, n, u0):
    """Closed loop of ``model`` with readout ``W_star``, started from r = 0."""
    U = np.empty((n, W_star.shape[0]))
    U[0] = u0
    r = np.zeros(model.params.n_reservoir)
    for t in range(n - 1):
        r = np.tanh(model.A @ r + model.W_in @ U[t])
        U[t + 1] = W_star @ R.readout_features(r)
    return U


def small_model(seed=3, n=40, k=2, **kw):
    p = dict(n_reservoir=n, n_in=k, sigma=0.5, rho=0.9, eta=1e-12, density=0.2, seed=seed)
    p.update(kw)
    return R.build(R.ReservoirParams(**p))


def test_planted_readout_is_recovered():
    # a readout fitted to Lorenz gives a rich closed loop; its own output is an
    # exactly linear function of the features, so a near-unregularised refit
    # must reproduce it
    s = dynsys.ode_system("lorenz")
    lor = dynsys.integrate_ode(s, dynsys.default_initial_state(s), 6000)
    params = R.ReservoirParams(60, 3, sigma=0.1, rho=1.2, eta=1e-6, density=0.3, seed=3)
    src = R.build(params)
    R.train(src, lor, washout=200)
    W_star = src.W_out.copy()
    U = planted_series(src, W_star, 4000, lor.data[0])

    m = R.build(R.ReservoirParams(60, 3, sigma=0.1, rho=1.2, eta=1e-12, density=0.3, seed=3))
    rep = R.train(m, U, washout=100)
    assert rep.residual_rms.max() < 1e-8
    assert np.max(np.abs(m.W_out - W_star)) < 1e-5 * np.abs(W_star).max()


def test_readout_features():
    assert np.allclose(R.readout_features([0.5, 0.5, 0.5, 0.5]), [0.5, 0.25, 0.5, 0.25])
    assert np.all(R.readout_features(np.zeros(6)) == 0)
    g = R.readout_features(np.full(8, -0.999))
    assert np.all(g[1::2] > 0)


@pytest.mark.parametrize("n,seed", [(300, 0), (1500, 4)])
def test_spectral_radius_matches_dense_eig(n, seed):
    m = R.build(R.ReservoirParams(n, 3, sigma=1.0, rho=0.1, eta=1e-4, degree=3, seed=seed))
    lam = np.max(np.abs(np.linalg.eigvals(m.A.toarray())))
    assert abs(lam - 0.1) / 0.1 < 1e-6


def test_edge_count_within_binomial_band():
    p = R.ReservoirParams(600, 3, sigma=0.1, rho=1.0, eta=1e-5, density=0.2, seed=7)
    m = R.build(p)
    n2 = 600**2
    mean, sd = 0.2 * n2, np.sqrt(n2 * 0.2 * 0.8)
    assert abs(m.A.nnz - mean) < 3 * sd


def test_zero_sigma_gives_zero_input_weights():
    m = R.build(R.ReservoirParams(50, 3, sigma=0.0, rho=0.5, eta=1e-5, density=0.2))
    assert not m.W_in.any()


def test_per_node_input_layout():
    m = R.build(R.ReservoirParams(64, 4, sigma=1.0, rho=0.1, eta=1e-4, degree=3,
                                  input_coupling="per_node"))
    nz = m.W_in != 0
    assert np.all(nz.sum(axis=1) == 1)
    assert np.all(nz.sum(axis=0) == 16)
    assert np.all(np.argmax(nz, axis=1) == np.arange(64) // 16)


def test_params_validation():
    with pytest.raises(ValueError):
        R.ReservoirParams(10, 3, sigma=1.0, rho=0.1, eta=1e-4)
    with pytest.raises(ValueError):
        R.ReservoirParams(10, 3, sigma=1.0, rho=0.1, eta=1e-4, degree=3, density=0.1)
    with pytest.raises(ValueError):
        R.ReservoirParams(2, 3, sigma=1.0, rho=0.1, eta=1e-4, degree=1)
    with pytest.raises(ValueError):
        R.ReservoirParams(10, 3, sigma=1.0, rho=0.1, eta=0.0, degree=3)


def test_drive():
    m = small_model()
    assert np.all(R.drive(m, np.zeros(2)) == 0)
    m.r = np.random.default_rng(0).uniform(-1, 1, 40)
    a = R.drive(m, np.array([50.0, -50.0])).copy()
    assert np.all(np.abs(a) <= 1)
    m.r = np.zeros(40)
    b1 = R.drive(m, np.array([0.3, 0.1])).copy()
    m.r = np.zeros(40)
    assert np.array_equal(b1, R.drive(m, np.array([0.3, 0.1])))
    with pytest.raises(ValueError):
        R.drive(m, np.zeros(3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 100.0))
def test_teacher_states_bounded(seed, amp):
    m = small_model(seed=seed % 1000, n=30)
    U = np.random.default_rng(seed).uniform(-amp, amp, size=(60, 2))
    for feats, _ in R._teacher_blocks(m, U, 0):
        states = feats[:, 0::2]
        assert np.all(np.abs(states) <= 1)


@pytest.fixture(scope="module")
def lorenz_data():
    s = dynsys.ode_system("lorenz")
    return dynsys.integrate_ode(s, dynsys.default_initial_state(s), 8000)


def test_ridge_shrinkage(lorenz_data):
    norms = []
    for eta in (1e-4, 1e6):
        m = R.build(R.ReservoirParams(100, 3, sigma=0.1, rho=1.0, eta=eta, density=0.1, seed=2))
        R.train(m, lorenz_data.segment(0, 4000), washout=200)
        norms.append(np.linalg.norm(m.W_out))
    assert norms[1] < norms[0]


def test_ridge_optimality_probe(lorenz_data):
    m = R.build(R.ReservoirParams(40, 3, sigma=0.1, rho=1.0, eta=1e-3, density=0.2, seed=5))
    R.train(m, lorenz_data.segment(0, 3000), washout=200)
    G, U = R.collect_features(m, lorenz_data.segment(0, 3000), 200)

    def objective(W):
        return np.sum((U - G @ W.T) ** 2) + m.params.eta * np.sum(W * W)

    base = objective(m.W_out)
    rng = np.random.default_rng(0)
    for _ in range(40):
        i, j = rng.integers(3), rng.integers(40)
        for d in (1e-4, -1e-4):
            W = m.W_out.copy()
            W[i, j] += d
            assert objective(W) >= base


def test_training_is_deterministic(lorenz_data):
    outs = []
    for _ in range(2):
        m = R.build(R.ReservoirParams(80, 3, sigma=0.1, rho=1.2, eta=1e-5, density=0.3, seed=9))
        R.train(m, lorenz_data.segment(0, 3000), washout=100)
        outs.append(m.W_out)
    assert np.array_equal(outs[0], outs[1])


def test_train_report(lorenz_data):
    m = R.build(R.ReservoirParams(80, 3, sigma=0.1, rho=1.2, eta=1e-5, density=0.3, seed=9))
    rep = R.train(m, lorenz_data.segment(0, 3000), washout=100)
    assert rep.residual_rms.shape == (3,) and np.isfinite(rep.residual_rms).all()
    assert rep.condition_estimate > 1
    with pytest.raises(ValueError):
        R.train(m, lorenz_data.segment(0, 50), washout=100)


@pytest.fixture(scope="module")
def trained(lorenz_data):
    m = R.build(R.ReservoirParams(120, 3, sigma=0.1, rho=1.2, eta=1e-5, density=0.3, seed=4))
    R.train(m, lorenz_data.segment(0, 5000), washout=200)
    return m


def test_snapshot_round_trip(tmp_path, trained):
    R.save_model(trained, tmp_path / "m.bin")
    back = R.load_model(tmp_path / "m.bin")
    assert back.params == trained.params
    assert np.array_equal(back.W_in, trained.W_in)
    assert np.array_equal(back.W_out, trained.W_out)
    assert (back.A != trained.A).nnz == 0
    assert back.meta == trained.meta


def test_closed_loop_schedule_identities(lorenz_data, trained):
    w, truth = lorenz_data.segment(5500, 5600), lorenz_data.segment(5600, 5900)
    free = R.predict_closed_loop(trained, w, 300)
    off = R.predict_closed_loop(trained, w, 300, UpdateSchedule.regular(10, 1, 0.0), truth)
    assert np.array_equal(free.data, off.data)
    sch = UpdateSchedule.regular(7, 2, 1.0, sites=[1])
    pred, fed = R.predict_closed_loop(trained, w, 300, sch, truth, return_inputs=True)
    act = sch.mask_table(300, 3)
    assert np.array_equal(fed[act], truth.data[act])
    assert np.array_equal(fed[~act], pred.data[~act])
    with pytest.raises(ValueError):
        R.predict_closed_loop(trained, w, 300, sch, None)


def test_closed_loop_first_step_follows_teacher(lorenz_data, trained):
    # the first closed-loop output is the one-step teacher-forced prediction
    w = lorenz_data.segment(5500, 5600)
    pred = R.predict_closed_loop(trained, w, 1)
    r = np.zeros(120)
    for u in w.data:
        r = np.tanh(trained.A @ r + trained.W_in @ u)
    assert np.allclose(pred.data[0], trained.W_out @ R.readout_features(r))
    assert np.linalg.norm(pred.data[0] - lorenz_data.data[5600]) < 0.1


def test_untrained_model_cannot_predict():
    m = small_model()
    with pytest.raises(RuntimeError):
        R.predict_closed_loop(m, np.zeros((5, 2)), 3)
