import json
import math

import pytest

from nambd.errors import EmptyExperiment, InvalidConfig
from nambd.experiment import (AnalyticBeta, ConfigurationVerdict, ExperimentSpec, FixedValue,
                              coverage, evaluate, load_spec, run_experiment, spec_from_dict,
                              summarize)
from nambd.model import (AdaptiveStep, DetectorKind, EndState, FixedStep, RngKind,
                         SimulatorConfig, make_geometry)
from nambd.rates import BetaEstimate, ScreenedCoulomb, estimate_beta

R, E = EndState.REACTED, EndState.ESCAPED
EVENT_MT = SimulatorConfig(RngKind.MERSENNE_TWISTER, DetectorKind.EVENT_TRIGGERED, FixedStep(0.1))
EVENT_LCG = SimulatorConfig(RngKind.BASELINE_LCG, DetectorKind.EVENT_TRIGGERED, FixedStep(0.1))
STEPPED = SimulatorConfig(RngKind.MERSENNE_TWISTER, DetectorKind.TIME_STEPPED, FixedStep(0.1))
ADAPTIVE = SimulatorConfig(RngKind.MERSENNE_TWISTER, DetectorKind.TIME_STEPPED,
                           AdaptiveStep(0.1, 0.01, 0.1))


def est(beta_hat, n=100):
    k = round(beta_hat * n)
    return BetaEstimate(beta_hat, math.sqrt(beta_hat * (1 - beta_hat) / n), n, tuple([R] * k + [E] * (n - k)))


def test_evaluate_examples():
    assert evaluate(est(0.13), 0.111, 0.05)
    assert not evaluate(est(0.18), 0.111, 0.05)
    assert evaluate(est(0.161), 0.111, 0.05)  # inclusive boundary
    assert evaluate(est(0.061), 0.111, 0.05)
    assert not evaluate(est(0.1611), 0.111, 0.05)


def test_spec_validation():
    g = [make_geometry(10, 50, 100, 1)]
    ok = dict(reference=AnalyticBeta(), e=0.05, c=0.99, model_grid=g, engine_matrix=[EVENT_MT])
    ExperimentSpec(**ok)
    for bad in (dict(e=0.0), dict(e=1.0), dict(c=1.0), dict(model_grid=[]), dict(engine_matrix=[]),
                dict(pilot_n=1), dict(max_n=10, pilot_n=50), dict(master_seed=-1)):
        with pytest.raises(InvalidConfig):
            ExperimentSpec(**{**ok, **bad})
    with pytest.raises(InvalidConfig):
        FixedValue(1.5)


def small_spec(engines=(EVENT_MT,), D=(4.0,), seed=1, **kw):
    return ExperimentSpec(AnalyticBeta(), 0.05, 0.99, [make_geometry(10, 50, 100, d) for d in D],
                          list(engines), master_seed=seed, **kw)


def test_reference_experiment_is_valid():
    spec = small_spec(engines=(EVENT_MT,), D=(2.0,), seed=11)
    (v,) = run_experiment(spec)
    assert v.valid and v.estimate.n >= v.n_required >= 2
    assert abs(v.estimate.beta_hat - 0.111) <= 0.05
    assert v.estimate.n == v.n_required  # pilot (50) < required, no cap
    assert len(v.runs) == v.estimate.n


def test_pilot_then_extend_reuses_pilot_replications():
    spec = small_spec(seed=3)
    (full,) = run_experiment(spec)
    pilot_only = small_spec(seed=3, pilot_n=50, max_n=50)
    (p,) = run_experiment(pilot_only)
    assert p.capped and p.estimate.n == 50
    assert list(full.runs.outcome[:50]) == list(p.runs.outcome)


def test_determinism_across_threads():
    spec = small_spec(engines=(EVENT_MT, EVENT_LCG, STEPPED), D=(8.0, 16.0), seed=5)
    a = summarize(run_experiment(spec, threads=1)).to_json()
    b = summarize(run_experiment(spec, threads=4)).to_json()
    assert a == b


def test_cells_are_seeded_independently():
    spec = small_spec(engines=(EVENT_MT, EVENT_MT), seed=9)
    v0, v1 = run_experiment(spec)
    assert list(v0.runs.outcome) != list(v1.runs.outcome)


def test_high_D_stepped_cell_is_invalid():
    spec = small_spec(engines=(STEPPED,), D=(1024.0,), seed=2)
    (v,) = run_experiment(spec)
    assert not v.valid
    assert v.estimate.beta_hat < v.beta_ref - 0.05


def test_rng_swap_agrees():
    spec = ExperimentSpec(AnalyticBeta(), 0.05, 0.99, [make_geometry(10, 50, 100, 4.0)],
                          [EVENT_MT, EVENT_LCG], master_seed=77, pilot_n=2000, max_n=2000)
    a, b = run_experiment(spec)
    assert a.valid and b.valid
    se = math.hypot(a.estimate.std_error, b.estimate.std_error)
    assert abs(a.estimate.beta_hat - b.estimate.beta_hat) < 3 * se


def test_step_limit_flagged_not_raised():
    capped = SimulatorConfig(max_steps=5)
    spec = small_spec(engines=(capped, EVENT_MT), seed=4)
    v_capped, v_ok = run_experiment(spec)
    assert v_capped.step_limit_hits > 0 and not v_capped.valid and v_capped.flagged
    assert "StepLimitExceeded" in v_capped.error
    assert v_ok.valid


def test_fixed_reference():
    spec = ExperimentSpec(FixedValue(0.9), 0.05, 0.99, [make_geometry(10, 50, 100, 4.0)],
                          [EVENT_MT], master_seed=1)
    (v,) = run_experiment(spec)
    assert v.beta_ref == 0.9 and not v.valid


def test_pmf_grid_point_runs():
    from nambd.experiment import GridPoint
    g = GridPoint(make_geometry(10, 50, 100, 8.0), ScreenedCoulomb(-20.0, 0.1))
    spec = ExperimentSpec(AnalyticBeta(), 0.2, 0.9, [g], [EVENT_MT], master_seed=1)
    (v,) = run_experiment(spec)
    assert v.estimate is not None and v.estimate.n >= 2
    assert spec_from_dict(spec.to_dict()) == spec


def fake_verdict(cell, D, engine, beta):
    e = estimate_beta([R] * beta + [E] * (100 - beta))
    return ConfigurationVerdict(cell, make_geometry(10, 50, 100, D), engine, 1 / 9, e, 262,
                                evaluate(e, 1 / 9, 0.05), 0.0)


def test_summarize_one_cell():
    rep = summarize([fake_verdict(0, 1.0, EVENT_MT, 11)])
    assert len(rep.rows) == 1
    row = rep.rows[0]
    assert all(row[k] is not None for k in row if k != "error")
    assert row["ci_half_width"] == pytest.approx(2.5758293035489 * row["std_error"])
    assert rep.to_csv().count("\n") == 2


def test_summarize_grid_shape_and_grouping():
    engines = [EVENT_MT, EVENT_LCG, STEPPED, ADAPTIVE]
    Ds = [16.0, 32.0, 64.0, 128.0, 256.0]
    verdicts = [fake_verdict(i * 4 + j, D, eng, 10 + j)
                for i, D in enumerate(Ds) for j, eng in enumerate(engines)]
    rep = summarize(verdicts)
    assert len(rep.rows) == 20
    labels = [r["engine"] for r in rep.rows]
    assert labels == [e.label() for e in engines for _ in Ds]
    for eng in engines:
        s = rep.series[eng.label()]
        assert s["D"] == Ds and len(s["beta_hat"]) == 5 and s["beta_ref"] == [1 / 9] * 5
    json.loads(rep.to_json())


def test_summarize_empty():
    with pytest.raises(EmptyExperiment):
        summarize([])


def test_coverage_helper():
    assert coverage([0.111, 0.161, 0.2], 0.111, 0.05) == pytest.approx(2 / 3)
    with pytest.raises(EmptyExperiment):
        coverage([], 0.1, 0.05)


def test_spec_files(tmp_path):
    data = {"reference": "analytic", "e": 0.05, "c": 0.99, "seed": 3,
            "grid": [{"a": 10, "b": 50, "q": 100, "D": [1, 2]}, {"model": "bundled:nam", "D": 4}],
            "engines": [{"rng": "BaselineLcg", "detector": "TimeStepped",
                         "stepsize": {"kind": "Adaptive", "dt_max": 0.1, "dt_min": 0.01}}]}
    pj = tmp_path / "s.json"
    pj.write_text(json.dumps(data))
    spec = load_spec(pj)
    assert [g.geometry.D for g in spec.model_grid] == [1, 2, 4]
    assert spec.model_grid[2].source == "bundled:nam"
    assert spec.engine_matrix[0].stepsize == AdaptiveStep(0.1, 0.01, 0.1)
    import yaml
    py = tmp_path / "s.yaml"
    py.write_text(yaml.safe_dump(data))
    assert load_spec(py) == spec
    assert spec_from_dict(spec.to_dict()) == spec
    for bad in ({**data, "bogus": 1}, {k: v for k, v in data.items() if k != "e"},
                {**data, "grid": [{"a": 10, "b": 50, "D": 1}]}, {**data, "reference": "x"}):
        pj.write_text(json.dumps(bad))
        with pytest.raises(InvalidConfig):
            load_spec(pj)
