import numpy as np
import pytest
from scipy.integrate import solve_ivp

from rarecast import dynsys
from rarecast.dynsys import Etdrk4, IntegrationBlowUp, TrajectoryBuffer


def lorenz_rhs(t, s):
    x, y, z = s
    return [10.0 * (y - x), x * (28.0 - z) - y, x * y - 8.0 / 3.0 * z]


def reference(x0, t_end):
    sol = solve_ivp(lorenz_rhs, (0.0, t_end), x0, method="DOP853", rtol=1e-13, atol=1e-13)
    return sol.y[:, -1]


X0 = np.array([1.0, 1.0, 1.0])


def test_lorenz_matches_high_accuracy_reference():
    sys_ = dynsys.ode_system("lorenz", dt=0.01)
    traj = dynsys.integrate_ode(sys_, X0, 101, discard=0)
    assert np.allclose(traj.data[0], X0)
    # 5 RK4 substeps of 0.002 against an adaptive 8th-order solve over t = 1
    assert np.max(np.abs(traj.data[-1] - reference(X0, 1.0))) < 1e-6


def test_rk4_order_is_four():
    # sup-norm error on a common time grid; a single end point can sit on an
    # accidental cancellation of the leading error term
    ts = np.linspace(0.0, 2.0, 21)
    ref = solve_ivp(lorenz_rhs, (0.0, 2.0), X0, method="DOP853", rtol=1e-13, atol=1e-13,
                    t_eval=ts).y.T
    errs = []
    for h in (0.02, 0.01, 0.005):
        s = dynsys.OdeSystem("lorenz", h, substeps=1)
        traj = dynsys.integrate_ode(s, X0, int(round(2.0 / h)) + 1, discard=0).data
        errs.append(np.abs(traj[:: int(round(0.1 / h))] - ref).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 3.7) & (orders < 4.3)), orders


def test_food_web_stays_positive():
    s = dynsys.ode_system("food_web")
    traj = dynsys.integrate_ode(s, dynsys.default_initial_state(s, 3), 20000)
    assert (traj.data > 0).all()


@pytest.mark.parametrize("name", ["rossler", "lorenz", "hindmarsh_rose", "food_web"])
def test_jacobian_matches_finite_differences(name):
    s = dynsys.ode_system(name)
    x = dynsys.integrate_ode(s, dynsys.default_initial_state(s, 1), 1, discard=500).data[0]
    J = s.jacobian(x)
    eps = 1e-6
    fd = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = eps
        fd[:, j] = (s.rhs(x + e) - s.rhs(x - e)) / (2 * eps)
    assert np.allclose(J, fd, atol=1e-5 * max(1.0, np.abs(fd).max()))


def test_aliases_and_default_steps():
    assert dynsys.ode_system("Rössler").name == "rossler"
    assert dynsys.ode_system("hr").dt == 0.1
    assert dynsys.ode_system("foodweb").name == "food_web"
    with pytest.raises(ValueError):
        dynsys.ode_system("duffing")


def test_blowup_reports_step():
    s = dynsys.OdeSystem("lorenz", 1.0, substeps=1)
    with pytest.raises(IntegrationBlowUp) as info:
        dynsys.integrate_ode(s, X0, 100, discard=0)
    assert info.value.step > 0


def test_etdrk4_exact_for_constant_forcing():
    # v' = L v + f has solution e^{Lt} v0 + (e^{Lt} - 1)/L f, which ETDRK4 reproduces exactly
    s = dynsys.kse(M=64, nonlinear=False)
    lin = s.stepper().lin
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(lin.size) + 1j * rng.standard_normal(lin.size)
    f = rng.standard_normal(lin.size) + 1j * rng.standard_normal(lin.size)
    h, n = 0.25, 40
    st = Etdrk4(lin, lambda v: f, h)
    v = v0.copy()
    for _ in range(n):
        v = st.step(v)
    t = h * n
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(lin == 0, t, np.expm1(lin * t) / lin)
    exact = np.exp(lin * t) * v0 + phi * f
    assert np.max(np.abs(v - exact)) < 1e-8 * max(1.0, np.abs(exact).max())


def test_kse_linear_propagator():
    s = dynsys.kse(M=64, nonlinear=False)
    x = s.x
    y0 = np.cos(2 * np.pi * x / s.L) + 0.3 * np.sin(4 * np.pi * x / s.L)
    traj = dynsys.integrate_kse(s, y0, 21, discard=0)
    k = 2 * np.pi / s.L
    t = 20 * s.dt
    g1, g2 = np.exp((k**2 - k**4) * t), np.exp((4 * k**2 - 16 * k**4) * t)
    exact = g1 * np.cos(k * x) + 0.3 * g2 * np.sin(2 * k * x)
    assert np.max(np.abs(traj.data[-1] - exact)) < 1e-8


def test_cgle_plane_wave():
    # a = sqrt(1 - q^2), omega = alpha q^2 + beta a^2 solves the full equation;
    # the nonlinear term makes the scheme fourth order rather than exact
    errs = []
    for dt in (0.07, 0.035):
        s = dynsys.cgle(dt=dt)
        q = 2 * np.pi / s.L
        a = np.sqrt(1 - q**2)
        omega = s.alpha * q**2 + s.beta * a**2
        n = int(round(0.7 / dt))
        traj = dynsys.integrate_cgle(s, a * np.exp(1j * q * s.x), n + 1, discard=0)
        exact = a * np.exp(1j * (q * s.x - omega * 0.7))
        got = traj.data[-1, 0::2] + 1j * traj.data[-1, 1::2]
        errs.append(np.max(np.abs(got - exact)))
        assert np.allclose(np.abs(got), a, atol=1e-9)
    assert errs[0] < 1e-5
    assert 3.5 < np.log2(errs[0] / errs[1]) < 4.5


@pytest.mark.parametrize("factory", [dynsys.kse, dynsys.cgle])
def test_zero_is_a_fixed_point(factory):
    s = factory()
    traj = dynsys.integrate(s, np.zeros(s.M, dtype=complex if s.name == "cgle" else float), 50, discard=0)
    assert np.all(traj.data == 0)


def test_pde_grid_must_be_power_of_two():
    with pytest.raises(ValueError, match="power of two"):
        dynsys.kse(M=60)


def test_channel_layout():
    assert dynsys.kse().n_channels == 64
    c = dynsys.cgle()
    assert c.n_channels == 64 and c.channel_names[:2] == ("re0", "im0")


def test_trajectory_io_round_trip(tmp_path):
    s = dynsys.ode_system("rossler")
    traj = dynsys.integrate_ode(s, dynsys.default_initial_state(s), 50, discard=10)
    traj.save(tmp_path / "t.csv", "csv")
    traj.save(tmp_path / "t.bin", "bin")
    a = TrajectoryBuffer.load(tmp_path / "t.csv", s.dt)
    b = TrajectoryBuffer.load(tmp_path / "t.bin")
    assert np.array_equal(a.data, traj.data) and np.array_equal(b.data, traj.data)
    assert b.dt == s.dt and b.channel_names == ("x", "y", "z")


def test_trajectory_rejects_nan():
    with pytest.raises(ValueError):
        TrajectoryBuffer(np.array([[0.0, np.nan]]), 0.1)


def test_integration_is_deterministic():
    s = dynsys.kse()
    y0 = dynsys.default_initial_state(s, 5)
    a = dynsys.integrate(s, y0, 20, discard=10)
    b = dynsys.integrate(s, y0, 20, discard=10)
    assert np.array_equal(a.data, b.data)
