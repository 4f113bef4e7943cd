import math

import numpy as np
import pytest

from nullwave.grid import FieldState, Grid, make_initial_data
from nullwave.harness.config import RunConfig
from nullwave.harness.experiments import riccati_oracle, simulate, summarize
from nullwave.solver import (NearSingularError, StepControl, advance, assemble_rhs,
                             extrapolate_blowup, next_dt, rk4_step, run, solve_block, step)
from nullwave.systems import get_system


def _pointwise(rng, n=1, m=7, scale=0.2):
    return rng.uniform(-scale, scale, size=(5, n, m))


def test_zero_system_is_transport():
    u, p, q, px, qx = _pointwise(np.random.default_rng(0))
    pt, qt = solve_block(get_system("zero"), u, p, q, px, qx)
    np.testing.assert_array_equal(pt, px)
    np.testing.assert_array_equal(qt, -qx)


def test_semi_null_by_hand():
    u, p, q, px, qx = (np.array([[v]]) for v in (0.05, 0.2, -0.1, 0.3, 0.7))
    pt, qt = solve_block(get_system("semi_null"), u, p, q, px, qx)
    assert pt[0, 0] == pytest.approx(0.3 + 0.2 * -0.1, rel=1e-15)
    assert qt[0, 0] == pytest.approx(-0.7 + 0.2 * -0.1, rel=1e-15)
    assert pt[0, 0] - px[0, 0] == pytest.approx(qt[0, 0] + qx[0, 0], rel=1e-14)


def test_quasi_null_at_rest_point():
    u, p, q = np.array([[0.1]]), np.zeros((1, 1)), np.zeros((1, 1))
    px, qx = np.array([[0.4]]), np.array([[-0.25]])
    pt, qt = solve_block(get_system("quasi_null"), u, p, q, px, qx)
    assert pt[0, 0] == pytest.approx(0.4, rel=1e-14)
    assert qt[0, 0] == pytest.approx(0.25, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2])
def test_block_solve_matches_dense(n):
    rng = np.random.default_rng(3)
    u, p, q, px, qx = _pointwise(rng, n=n, m=5)
    sys_ = get_system("quasi_null", n)
    pt, qt = solve_block(sys_, u, p, q, px, qx)
    I = np.eye(n)
    for k in range(5):
        A1, A2, A3 = (sys_.matrix(w, u[:, k:k + 1], p[:, k:k + 1], q[:, k:k + 1])[..., 0]
                      for w in ("A1", "A2", "A3"))
        F = p[:, k] * q[:, k]
        M = np.block([[I - A1 - A2, -A3], [-A2, I - A1 - A3]])
        rhs = np.concatenate([(I - A1 + A2) @ px[:, k] - A3 @ qx[:, k] + F,
                              A2 @ px[:, k] - (I - A1 + A3) @ qx[:, k] + F])
        sol = np.linalg.solve(M, rhs)
        np.testing.assert_allclose(pt[:, k], sol[:n], rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(qt[:, k], sol[n:], rtol=1e-12, atol=1e-15)


def test_near_singular_detected():
    sys_ = get_system("quasi_null")
    u = np.array([[0.0, 1.0, 0.0]])
    z = np.zeros((1, 3))
    with pytest.raises(NearSingularError) as info:
        solve_block(sys_, u, z, z, z, z)
    assert info.value.index == 1


def test_near_singular_terminates_as_blowup():
    g = Grid.symmetric(10, 0.1, 4)
    u = np.zeros((1, g.nx))
    u[0, g.nx // 2] = 1.0
    z = np.zeros((1, g.nx))
    res = run(get_system("quasi_null"), FieldState(0.0, u, z, z.copy()), StepControl(t_max=1.0), g)
    assert res.termination == "blowup"
    assert res.blowup_time_estimate == 0.0


def test_rhs_caches_and_u_t():
    g = Grid.symmetric(12, 0.1, 4)
    st, _ = make_initial_data("gaussian", 0.05, 0.5, g)
    ut, pt, qt = assemble_rhs(st, get_system("semi_null"), g)
    np.testing.assert_array_equal(ut, 0.5 * (st.p + st.q))
    assert st.pt is pt and st.qt is qt
    assert pt[0, -1] == 0.0 and qt[0, 0] == 0.0


def test_zero_state_stays_zero():
    g = Grid.symmetric(5, 0.1, 4)
    z = np.zeros((1, g.nx))
    out = step(FieldState(0.0, z, z.copy(), z.copy()), get_system("quasi_null"), g, 0.05)
    assert out.t == 0.05
    assert not np.any(out.u) and not np.any(out.p) and not np.any(out.q)


def test_rk4_exponential_order():
    f = lambda t, y: (y[0],)  # noqa: E731
    errs = []
    for dt in (0.1, 0.05):
        (y,) = rk4_step(f, (np.array([1.0]),), 0.0, dt)
        errs.append(abs(y[0] - math.exp(dt)))
    assert errs[0] == pytest.approx(0.1 ** 5 / 120, rel=0.05)
    assert errs[0] / errs[1] == pytest.approx(32, rel=0.05)


def test_left_pulse_translates():
    errs = []
    for dx in (0.05, 0.025):
        g = Grid.symmetric(20, dx, 4)
        st, _ = make_initial_data("traveling_left", 0.05, 0.5, g)
        T, shift = 5.0, int(round(5.0 / dx))
        out = advance(st, get_system("zero"), g, T, 0.5 * dx)
        assert out.t == T
        assert np.max(np.abs(out.q)) == 0.0
        errs.append(np.max(np.abs(out.p[0, :-shift] - st.p[0, shift:])) / np.max(np.abs(st.p)))
    assert errs[0] <= 1e-3
    assert errs[0] / errs[1] >= 12  # fourth order: nominal 16


def test_time_reversal():
    g = Grid.symmetric(25, 0.05, 4)
    st, _ = make_initial_data("gaussian", 0.05, 0.5, g, width=3.0)
    sys_ = get_system("zero")
    fwd = st.copy()
    for _ in range(40):
        fwd = step(fwd, sys_, g, 0.025)
    back = fwd
    for _ in range(40):
        back = step(back, sys_, g, -0.025)
    scale = np.max(np.abs(st.p))
    for a, b in ((back.u, st.u), (back.p, st.p), (back.q, st.q)):
        assert np.max(np.abs(a - b)) <= 1e-10 * max(scale, 1.0)


def test_linear_run_energy_conserved():
    cfg = RunConfig.load("configs/linear.toml")
    res, _ = simulate(cfg)
    assert res.termination == "completed"
    assert res.blowup_time_estimate is None
    assert summarize(res, cfg)["E1_drift"] <= 5e-3
    ts = [r.t for r in res.series]
    assert all(b > a for a, b in zip(ts, ts[1:]))
    assert ts[0] == 0.0 and ts[-1] == pytest.approx(cfg.control.t_max)


def _riccati_run(eps, **ctrl):
    g0 = Grid.symmetric(20, 0.05, 4)
    probe, _ = make_initial_data("gaussian", eps, 0.5, g0)
    oracle = riccati_oracle(probe)
    half = 1.3 * oracle + 20
    g = Grid.symmetric(half, 0.05, 4)
    st, _ = make_initial_data("gaussian", eps, 0.5, g, t_max=1.3 * oracle)
    c = StepControl(t_max=1.3 * oracle, report_every=50, **ctrl)
    return run(get_system("riccati"), st, c, g, epsilon=eps), oracle


def test_riccati_blows_up_near_oracle():
    res, oracle = _riccati_run(1.0)
    assert res.termination == "blowup"
    assert res.blowup_time_estimate == pytest.approx(oracle, rel=0.02)
    assert res.t_end < 1.3 * oracle


def test_blowup_monotone_in_epsilon():
    times = [_riccati_run(eps)[0].blowup_time_estimate for eps in (0.5, 1.0, 2.0, 4.0)]
    assert all(b <= a for a, b in zip(times, times[1:]))


def test_dt_floor_terminates():
    res, oracle = _riccati_run(2.0, dt_min=0.02, blowup_threshold=1e12)
    assert res.termination == "cfl_floor"
    assert res.rejected_steps >= 1
    assert res.blowup_time_estimate == pytest.approx(oracle, rel=0.05)


def test_nonfinite_initial_data():
    g = Grid.symmetric(5, 0.1, 4)
    z = np.zeros((1, g.nx))
    p = z.copy()
    p[0, 3] = np.nan
    res = run(get_system("zero"), FieldState(0.0, z, p, z.copy()), StepControl(t_max=1.0), g)
    assert res.termination == "nonfinite"
    assert res.blowup_time_estimate is None


def test_run_matches_advance_bitwise():
    g = Grid.symmetric(15, 0.1, 4)
    st, _ = make_initial_data("gaussian", 0.05, 0.5, g, t_max=1.33)
    sys_ = get_system("semi_null")
    res = run(sys_, st, StepControl(t_max=1.33, report_every=3), g, snapshot_times=[0.6])
    ref = advance(st, sys_, g, 0.6, 0.05)
    ref = advance(ref, sys_, g, 1.33, 0.05)
    assert res.final_state.t == 1.33
    np.testing.assert_array_equal(res.final_state.p, ref.p)
    np.testing.assert_array_equal(res.snapshots[0.6].q, advance(st, sys_, g, 0.6, 0.05).q)


@pytest.mark.parametrize("name", ["semi_null", "quasi_null", "semi_reducible"])
def test_left_traveling_wave_keeps_q_zero(name):
    g = Grid.symmetric(20, 0.05, 4)
    st, _ = make_initial_data("traveling_left", 0.05, 0.5, g, t_max=5.0)
    res = run(get_system(name), st, StepControl(t_max=5.0), g)
    assert res.termination == "completed"
    assert np.max(np.abs(res.final_state.q)) <= 1e-3 * np.max(np.abs(st.p))


def test_dissipation_damps_grid_mode():
    g = Grid.symmetric(5, 0.1, 4)
    zig = 1e-3 * (-1.0) ** np.arange(g.nx)[None]
    z = np.zeros((1, g.nx))
    st = FieldState(0.0, z, zig.copy(), zig.copy())
    plain = step(st.copy(), get_system("zero"), g, 0.05)
    damped = step(st.copy(), get_system("zero"), g, 0.05, dissipation=0.01)
    mid = slice(10, -10)
    assert np.max(np.abs(damped.p[:, mid])) < np.max(np.abs(plain.p[:, mid]))


def test_next_dt_lands():
    assert next_dt(0.0, 0.1, 1.0) == (0.1, False)
    dt, land = next_dt(0.95, 0.1, 1.0)
    assert land and dt == pytest.approx(0.05)


def test_extrapolation_exact_for_riccati_law():
    T = 7.0
    hist = [(t, 1.0 / (T - t)) for t in np.linspace(0, 6.9, 200)]
    assert extrapolate_blowup(hist) == pytest.approx(T, rel=1e-10)
    assert extrapolate_blowup(hist, cap=5.0, floor=0.5) == pytest.approx(T, rel=1e-10)
    assert extrapolate_blowup([]) is None
    assert extrapolate_blowup([(0.0, 1.0), (1.0, 1.0)]) == 1.0


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(cfl=1.5)
    with pytest.raises(ValueError):
        StepControl(dissipation=0.1)
    with pytest.raises(ValueError):
        StepControl(fit_gain=60.0)
