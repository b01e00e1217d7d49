import numpy as np
import pytest

from slaglab.gluing import (
    NeckPotential,
    ScheduleError,
    cutoff,
    default_pair,
    distance_to_planes,
    glue_sweep,
    interpolate,
    lagrangian_defect,
    loglog_slope,
    neck_potential,
    potential_residual,
    residual_report,
    rho_inverse_l2,
    schedule,
    smoothstep,
    weighted_norm,
)
from slaglab.lawlor import NeckParameters


@pytest.fixture(scope="module")
def model():
    return interpolate(default_pair(3), sched=schedule(0.1))


@pytest.fixture(scope="module")
def neck():
    return NeckParameters.from_angles(np.full(3, np.pi / 3), branch=-1)


# --- schedule --------------------------------------------------------------


def test_schedule_formula():
    sc = schedule(0.1, c_delta=1.0, c_eps=1.0, r0=0.1, ball=0.5)
    assert sc.delta == pytest.approx(0.1)
    assert sc.eps == pytest.approx(0.1 ** (4 / 3))


def test_schedule_power_laws():
    a, b = schedule(0.1), schedule(0.05)
    assert b.delta == pytest.approx(a.delta / 2)
    assert b.eps == pytest.approx(a.eps * 2 ** (-4 / 3))


def test_schedule_rejects_large_alpha():
    sc = schedule(0.1)
    with pytest.raises(ScheduleError):
        schedule(1.01 * sc.max_alpha)
    with pytest.raises(ScheduleError):
        schedule(0.1, c_eps=1.0)


# --- potential -------------------------------------------------------------


def test_potential_matches_neck(neck):
    q = np.random.default_rng(0).standard_normal((40, 3))
    q *= (3.0 + 5 * np.random.default_rng(1).random(40))[:, None] / np.linalg.norm(q, axis=1, keepdims=True)
    assert potential_residual(neck, q) <= 1e-8


def test_potential_flattens_far_out(neck):
    pot = NeckPotential(neck)
    x = np.array([[1.0, 2.0, -1.0]]) / np.sqrt(6)
    hs = [np.abs(pot.evaluate(r * x)[2]).max() for r in (5.0, 20.0, 80.0)]
    assert hs[0] > hs[1] > hs[2]
    assert hs[-1] < 1e-3


def test_potential_dilation(neck):
    pot = NeckPotential(neck)
    q = np.array([[3.0, 1.0, -2.0], [0.5, 4.0, 1.0]])
    eps = 0.01
    u1, p1, h1 = neck_potential(neck.with_scale(1.0), q, potential=pot)
    ue, pe, he = neck_potential(neck.with_scale(eps), eps * q, potential=pot)
    assert np.allclose(ue, eps**2 * u1, rtol=1e-12)
    assert np.allclose(pe, eps * p1, rtol=1e-12)
    assert np.allclose(he, h1, rtol=1e-12)


def test_upper_sheet_sign(neck):
    q = np.array([[3.0, 1.0, -2.0]])
    lo = neck_potential(neck, q, "lower")
    up = neck_potential(neck, q, "upper")
    assert all(np.allclose(a, -b) for a, b in zip(lo, up))
    with pytest.raises(ValueError):
        neck_potential(neck, q, "middle")


def test_potential_needs_n3():
    with pytest.raises(ValueError):
        NeckPotential(NeckParameters.from_lambda([1.0, 1.0]))


# --- cutoff ----------------------------------------------------------------


def test_smoothstep_flat_ends():
    for k in (2, 4):
        p = smoothstep(k)
        assert p(0.0) == pytest.approx(0.0) and p(1.0) == pytest.approx(1.0)
        for j in range(1, k + 1):
            assert p.deriv(j)(0.0) == pytest.approx(0.0, abs=1e-9)
            assert p.deriv(j)(1.0) == pytest.approx(0.0, abs=1e-9)


def test_cutoff_support_and_bounds():
    delta = 0.02
    r = np.linspace(0, 2 * delta, 4001)
    chi, d1, d2 = cutoff(r, delta)
    assert np.all(chi[r <= delta / 2] == 1.0) and np.all(chi[r >= delta] == 0.0)
    assert np.abs(d1).max() * delta < 10 and np.abs(d2).max() * delta**2 < 100


# --- model -----------------------------------------------------------------


def test_regions_partition(model):
    sm = model.samples
    tags = set(sm.region.tolist())
    assert tags == {"M1'", "M2'", "N'", "T1", "T2"}
    assert sum((sm.region == t).sum() for t in tags) == len(sm)


def test_exactly_lagrangian(model):
    assert lagrangian_defect(model) <= 1e-8


def test_plane_regions_unchanged(model):
    sm = model.samples
    base_r = np.nan_to_num(np.linalg.norm(sm.base, axis=1))
    out = (sm.sheet > 0) & (base_r >= model.schedule.delta)
    assert out.any()
    assert np.all(sm.theta[out] == 0.0) and np.all(sm.H[out] == 0.0)


def test_neck_region_special_lagrangian(model):
    sm = model.samples
    base_r = np.linalg.norm(sm.base, axis=1)
    core = (sm.sheet == 0) | (base_r < model.schedule.delta / 2)
    assert np.abs(np.sin(sm.theta[core])).max() <= 1e-6


def test_annulus_angle_nonzero(model):
    rep = residual_report(model, holder=False)
    assert 0 < rep["sup_sin"] <= 0.1
    assert rep["sup_sin_outside"] == 0.0


def test_weights(model):
    sm, sc = model.samples, model.schedule
    assert np.all(sm.rho[sm.region == "N'"] == sc.eps * sc.R)
    assert np.all(sm.rho[sm.radius >= sc.ball] == sc.R)
    # the linear ramp gives rho <= C |x| with C = R / (ball - eps r0) + 1
    ann = (sm.sheet > 0) & (sm.radius <= sc.ball)
    assert np.all(sm.rho[ann] <= (sc.R / (sc.ball - sc.eps * sc.r0) + 1) * sm.radius[ann])


def test_weighted_norm_basic():
    rho = np.linspace(0.1, 1, 5)
    assert weighted_norm(np.full(5, -2.5), rho).sup == 2.5
    pos = np.linspace(0, 1, 5)[:, None]
    g, h = np.ones((5, 1)), np.ones((5, 1))
    a = weighted_norm(np.ones(5), rho, 2, grad=g, hess=h)
    b = weighted_norm(np.ones(5), 2 * rho, 2, grad=g, hess=h)
    assert b.grad == 2 * a.grad
    with pytest.raises(ValueError):
        weighted_norm(np.ones(5), rho, 1, positions=pos)


def test_small_sweep_converges():
    rows, slopes = glue_sweep([0.1, 0.05], holder=False)
    assert rows[1]["distance"] < rows[0]["distance"]
    assert 0.8 <= slopes["sup_sin"] <= 1.2
    assert rows[1]["rho_inv_l2"] <= 2 * rows[0]["rho_inv_l2"]


def test_single_point_has_no_slope():
    with pytest.raises(ValueError):
        loglog_slope([0.1], [1.0])


def test_distance_and_rho_l2_finite(model):
    assert 0 < distance_to_planes(model) < model.schedule.delta
    assert np.isfinite(rho_inverse_l2(model))
