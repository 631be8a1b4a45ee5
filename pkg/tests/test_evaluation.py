import dataclasses
import json

import numpy as np
import pytest

from gssref._validation import InvalidInputError
from gssref.evaluation import (
    BatchReport,
    SceneResult,
    compute_ielr,
    emit_report,
    load_report,
    run_comparison,
)
from gssref.scene import IELR_CAP_DB, generate_scene


@pytest.fixture(scope="module")
def scenes():
    return [generate_scene(s, duration=3.0, scene_id=f"s{s}") for s in (2, 3)]


@pytest.fixture(scope="module")
def report(scenes):
    return run_comparison(scenes, alphas=(0.0, 0.5, 1.0))


def fake_result(scene_id, chosen, osnr, ielr):
    return SceneResult(scene_id, chosen, osnr, ielr, [0.0, 0.0], [0.0, 0.0], [0.0, 0.0])


def test_compute_ielr_matches_energy_ratio(scenes):
    t = scenes[0]
    for m in range(t.n_mics):
        e = np.sum(t.x_early[m] ** 2)
        l = np.sum(t.x_late[m] ** 2)
        assert compute_ielr(t, m) == pytest.approx(10 * np.log10(e / l), abs=1e-9)
    with pytest.raises(InvalidInputError):
        compute_ielr(t, t.n_mics)


def test_compute_ielr_is_capped_without_reverberation():
    t = generate_scene(4, duration=2.0, t60_range=(0.0, 0.0))
    assert compute_ielr(t, 0) == IELR_CAP_DB


def test_scene_records_are_consistent(scenes, report):
    assert report.n_scenes == 2 and not report.failures
    for truth, res in zip(scenes, report.scenes):
        for m in report.methods:
            k = res.chosen[m]
            assert res.ielr_db[m] == truth.true_ielr_db[k]
            assert res.osnr_db[m] == res.snr_db_per_mic[k]
        assert res.chosen["snr"] == int(np.argmax(res.snr_db_per_mic))
        assert res.chosen["lp"] == int(np.argmin(res.log_lp_per_mic))


def test_means_recompute_from_records(report):
    doc = json.loads(emit_report(report, "json"))
    for m in doc["methods"]:
        for stat in ("osnr_db", "ielr_db"):
            mean = np.mean([s[stat][m] for s in doc["scenes"]])
            assert doc["means"][m][stat] == pytest.approx(mean, abs=1e-12)


def test_agreement_matrix_symmetric_unit_diagonal(report):
    a = report.agreement
    np.testing.assert_array_equal(a, a.T)
    np.testing.assert_array_equal(np.diag(a), 1.0)
    assert np.all((a >= 0) & (a <= 1))


def test_identical_choices_give_all_ones_agreement():
    rows = [fake_result(f"s{i}", {"snr": 1, "lp": 1, "comb": 1}, {"snr": 0, "lp": 0, "comb": 0},
                        {"snr": 0, "lp": 0, "comb": 0}) for i in range(3)]
    report = BatchReport(["snr", "lp", "comb"], 0.5, rows)
    np.testing.assert_array_equal(report.agreement, np.ones((3, 3)))


def test_sweep_endpoints_equal_single_criterion_rows(report):
    rows = {r["alpha"]: r for r in report.sweep_table}
    means = report.means
    for alpha, method in ((0.0, "snr"), (1.0, "lp")):
        assert rows[alpha]["ielr_db"] == means[method]["ielr_db"]
        assert rows[alpha]["osnr_db"] == means[method]["osnr_db"]
    assert rows[0.5]["ielr_db"] == means["comb"]["ielr_db"]


def test_reports_are_deterministic(scenes, report):
    again = run_comparison(scenes, alphas=(0.0, 0.5, 1.0))
    for fmt in ("json", "csv", "sweep-csv"):
        assert emit_report(report, fmt) == emit_report(again, fmt)


def test_parallel_matches_serial(scenes, report):
    par = run_comparison(list(reversed(scenes)), alphas=(0.0, 0.5, 1.0), n_jobs=2)
    assert emit_report(par, "json") == emit_report(report, "json")


def test_json_round_trips_through_schema(report):
    text = emit_report(report, "json")
    doc = load_report(text)
    assert doc["schema_version"] == "1.0"
    assert json.dumps(doc, indent=2, sort_keys=True) + "\n" == text


def test_schema_rejects_broken_documents(report):
    doc = json.loads(emit_report(report, "json"))
    del doc["means"]
    with pytest.raises(InvalidInputError):
        load_report(json.dumps(doc))
    with pytest.raises(InvalidInputError):
        load_report("{not json")


def test_csv_layout(report):
    lines = emit_report(report, "csv").splitlines()
    assert lines[0] == "method,alpha,oSNR_db,iELR_db,n_scenes"
    assert [l.split(",")[0] for l in lines[1:]] == ["snr", "lp", "comb"]
    assert lines[3].split(",")[1] == "0.5"


def test_unsupported_format_and_empty_methods(report):
    with pytest.raises(InvalidInputError):
        emit_report(report, "xml")
    with pytest.raises(InvalidInputError):
        emit_report(dataclasses.replace(report, methods=[]), "json")
    with pytest.raises(InvalidInputError):
        run_comparison([], methods=[])
    with pytest.raises(InvalidInputError):
        run_comparison([], methods=["best"])


def test_failed_scenes_are_flagged_and_excluded(scenes):
    silent = dataclasses.replace(scenes[0], scene_id="dead", segments=[])
    report = run_comparison([silent, scenes[1]])
    assert report.n_scenes == 1
    assert [f["scene_id"] for f in report.failures] == ["dead"]
    assert "NoActivityError" in report.failures[0]["error"]
    doc = load_report(emit_report(report, "json"))
    assert doc["n_scenes"] == 1 and len(doc["failures"]) == 1


def test_empty_batch_raises():
    with pytest.raises(InvalidInputError):
        run_comparison([])
