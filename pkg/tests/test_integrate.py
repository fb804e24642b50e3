import math

import numpy as np
import pytest

from superburst.core import ConfigError
from superburst.integrate import IntegrationError, IntegratorConfig, Kicks, integrate


def decay(t, y):
    return -2.0 * y


OBS = {"power": lambda y: float(y[0])}


@pytest.mark.parametrize("method", ["fixed_rk4", "adaptive_rk45"])
def test_exponential_decay(method):
    cfg = IntegratorConfig((0.0, 1.0), method=method, fixed_step=1e-3, output_dt=0.1, rel_tol=1e-10, abs_tol=1e-12)
    tr = integrate(decay, np.array([1.0]), cfg, OBS)
    np.testing.assert_allclose(tr.observables["power"], np.exp(-2 * tr.t), rtol=1e-9)
    assert tr.t.size == 11
    assert tr.final_state[0] == pytest.approx(math.exp(-2.0), rel=1e-9)


def test_rk4_fourth_order():
    errs = []
    for h in (0.1, 0.05):
        cfg = IntegratorConfig((0.0, 1.0), method="fixed_rk4", fixed_step=h, output_dt=0.5)
        y = integrate(lambda t, y: np.array([y[1], -y[0]]), np.array([0.0, 1.0]), cfg, {}).final_state
        errs.append(abs(y[0] - math.sin(1.0)))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.3)


@pytest.mark.parametrize("method", ["fixed_rk4", "adaptive_rk45"])
def test_deterministic(method):
    cfg = IntegratorConfig((0.0, 3.0), method=method, fixed_step=1e-3, output_dt=0.01)
    f = lambda t, y: np.array([y[1], -math.sin(y[0]) - 0.1 * y[1]])
    a = integrate(f, np.array([1.0, 0.0]), cfg, OBS)
    b = integrate(f, np.array([1.0, 0.0]), cfg, OBS)
    np.testing.assert_array_equal(a.observables["power"], b.observables["power"])


def test_kicks_apply_at_times():
    cfg = IntegratorConfig((0.0, 1.0), method="fixed_rk4", fixed_step=1e-3, output_dt=0.25)
    kicks = Kicks([0.5], lambda k, y: y + 1.0)
    tr = integrate(lambda t, y: np.zeros_like(y), np.array([0.0]), cfg, OBS, kicks=kicks)
    # a sample that coincides with a kick records the pre-kick state
    np.testing.assert_allclose(tr.observables["power"], [0, 0, 0, 1, 1])


def test_keep_states_and_trace():
    cfg = IntegratorConfig((0.0, 1.0), output_dt=0.5)
    tr = integrate(decay, np.array([1.0]), cfg, OBS, keep_states=True)
    assert tr.states.shape == (3, 1)
    assert tr.trace.dt == 0.5
    np.testing.assert_array_equal(tr.trace.power, tr.observables["power"])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_reports_failure_time():
    cfg = IntegratorConfig((0.0, 10.0), method="fixed_rk4", fixed_step=0.1, output_dt=0.1)
    with pytest.raises(IntegrationError) as exc:
        integrate(lambda t, y: y * y, np.array([1.0]), cfg, OBS)
    assert 0.0 < exc.value.t_fail < 10.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(t_span=(1.0, 0.0)),
        dict(t_span=(0.0, 1.0), method="euler"),
        dict(t_span=(0.0, 1.0), rel_tol=0.0),
        dict(t_span=(0.0, 1.0), output_dt=-1.0),
    ],
)
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        IntegratorConfig(**kwargs)
