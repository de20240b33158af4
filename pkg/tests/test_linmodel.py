import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import two_bus_feeder
from pcdsse.linmodel import (
    evaluate,
    injection_from_u,
    linearize,
    u_from_injection,
    v_to_z,
    z_to_v,
)
from pcdsse.netmodel import PowerFlowError, build_network, pf_residual, solve_power_flow
from pcdsse.sensing import synthesize_profile


def load_state(net, scale=0.08, seed=0):
    prof = synthesize_profile(net, 1, 6.0, scale=scale, seed=seed)
    return prof.u(0, net.n_wye)


def test_zero_state_gives_zero_load_voltage(net4, net12, rng):
    for net in (net4, net12):
        v = net.w * (1 + 0.05 * rng.standard_normal(net.n_phases))
        model = linearize(net, v)
        z = evaluate(model, np.zeros(net.n_states))
        assert np.max(np.abs(z - np.concatenate([net.w.real, net.w.imag]))) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_exact_at_solved_anchor(net12, seed):
    u = load_state(net12, seed=seed)
    inj = injection_from_u(net12, u)
    v = solve_power_flow(net12, inj, tol=1e-10)
    assert np.max(np.abs(pf_residual(net12, v, inj))) <= 1e-10
    z = evaluate(linearize(net12, v), u)
    assert np.max(np.abs(z - v_to_z(v))) <= 1e-8


def test_second_order_error_decay(net12):
    u = load_state(net12, scale=0.2)
    model = linearize(net12, net12.w)
    errs = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        v = solve_power_flow(net12, injection_from_u(net12, eps * u), tol=1e-12)
        errs.append(np.linalg.norm(evaluate(model, eps * u) - v_to_z(v)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 4) <= 1.0), ratios


def test_two_bus_sensitivities():
    net = build_network(two_bus_feeder(0.1))
    np.testing.assert_allclose(net.Y_LL, [[10.0]])
    model = linearize(net, net.w)
    np.testing.assert_allclose(net.w, [1.0])
    np.testing.assert_allclose(model.M_Y, [[0.1, 0.0], [0.0, -0.1]], atol=1e-15)
    assert model.M_delta.shape == (2, 0)


def test_matches_fixed_point_sweep(net4, rng):
    # the linear model is one fixed-point sweep started from the anchor
    u = load_state(net4)
    v_a = net4.w * (1 + 0.01 * rng.standard_normal(net4.n_phases))
    inj = injection_from_u(net4, u)
    rhs = np.zeros(net4.n_phases, dtype=complex)
    rhs[net4.wye_idx] = np.conj(inj.s_Y) / np.conj(v_a[net4.wye_idx])
    rhs += net4.H.T @ (np.conj(inj.s_delta) / np.conj(net4.H @ v_a))
    sweep = net4.w + np.linalg.solve(net4.Y_LL, rhs)
    np.testing.assert_allclose(evaluate(linearize(net4, v_a), u), v_to_z(sweep), atol=1e-12)


def test_model_is_linear_in_state(net4, rng):
    model = linearize(net4, net4.w)
    u1, u2 = rng.standard_normal((2, net4.n_states))
    lhs = evaluate(model, 2 * u1 - u2) - model.m
    rhs = 2 * (evaluate(model, u1) - model.m) - (evaluate(model, u2) - model.m)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    np.testing.assert_allclose(model.M @ u1 + model.m, evaluate(model, u1), atol=1e-12)


def test_bad_anchor_and_state(net4):
    v = net4.w.copy()
    v[net4.wye_idx[0]] = 0
    with pytest.raises(PowerFlowError):
        linearize(net4, v)
    with pytest.raises(ValueError):
        linearize(net4, net4.w[:3])
    with pytest.raises(ValueError):
        evaluate(linearize(net4, net4.w), np.zeros(3))


@settings(max_examples=50)
@given(arrays(np.float64, 10, elements=st.floats(-1e3, 1e3)))
def test_rectangular_roundtrip(z):
    np.testing.assert_array_equal(v_to_z(z_to_v(z)), z)


def test_injection_roundtrip(net4, rng):
    u = rng.standard_normal(net4.n_states)
    np.testing.assert_array_equal(u_from_injection(injection_from_u(net4, u)), u)
    with pytest.raises(ValueError):
        injection_from_u(net4, u[:-1])
