import json
import math

import numpy as np
import pytest

import recmm


def test_links():
    g = recmm.Link.box_cox(0.5)
    assert g(3.0) == pytest.approx(2.0)
    assert recmm.Link.parse("boxcox:1").is_identity
    value, d1, d2 = recmm.Link.logarithmic(1.0).derivatives(math.e - 1)
    assert value == pytest.approx(1.0)
    assert d1 == pytest.approx(1 / math.e)
    with pytest.raises(ValueError):
        recmm.Link.parse("cox:1")


def test_gompertz_anchor():
    assert round(recmm.gompertz_cum(1.8, 0.2, 2.5), 3) == 0.708


def test_simulate_fit_predict():
    ds = recmm.simulate("scenario_bc_1", n=150, seed=2)
    assert len(ds) == 150
    assert ds.dim == 2
    again = recmm.Dataset.from_csv(ds.to_csv(), ds.tau)
    assert again.to_csv() == ds.to_csv()

    fit = recmm.fit(ds, "boxcox:1")
    assert fit.converged
    assert fit.beta.shape == (2,)
    assert np.all(fit.se > 0)
    assert fit.covariance.shape == (2 + len(fit.jump_times),) * 2
    assert np.allclose(recmm.ghosh_lin(ds), fit.beta, atol=1e-4)
    assert json.loads(fit.to_json())["version"] == recmm.__version__

    curve = recmm.predict(fit, [(0.0, [1.0, 0.0])], [1.0, 2.5, 5.0], log_band=True)
    assert np.all(np.diff(curve["mean"]) >= 0)
    assert np.all(np.asarray(curve["lo"]) <= np.asarray(curve["mean"]))

    bare = recmm.fit(ds, "log:1", variance=False)
    assert bare.se is None
    with pytest.raises(ValueError):
        recmm.predict(fit, [(0.0, [1.0])], [1.0])


def test_nonparametric_estimators():
    ds = recmm.simulate("scenario_log_05", n=100, seed=3)
    na = recmm.nelson_aalen_pseudo(ds)
    aj = recmm.aalen_johansen(ds)
    assert na["time"] == ds.grid
    assert np.all(np.diff(na["value"]) >= 0)
    assert len(aj["time"]) > 0
    gc = recmm.censoring_survival(ds)
    assert all(0 < v <= 1 for v in gc["value"])


def test_mc_study():
    rows = recmm.mc_study("scenario_bc_1", n=60, reps=2, seed=4)
    assert [r["param"] for r in rows] == ["beta1", "beta2", "A(tau/4)", "A(tau/2)", "A(tau)"]
    assert all(r["reps"] == 2 for r in rows)


def test_errors():
    with pytest.raises(ValueError):
        recmm.simulate("scenario_x")
    with pytest.raises(ValueError):
        recmm.Dataset.from_csv("id,start,stop\n1,0,1\n", 2.0)
    with pytest.raises(OSError):
        recmm.Dataset.read_csv("/nonexistent.csv", 2.0)
