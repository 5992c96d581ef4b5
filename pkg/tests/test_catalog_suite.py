import json

import numpy as np
import pytest

from sweeplab.catalog import catalog, catalog_entry
from sweeplab.desing import build_map
from sweeplab.dynamics import catching_up, orbit_from_sequence
from sweeplab.emit import EmitError, emit, render
from sweeplab.process import process_from_dict
from sweeplab.suite import CHECK_IDS, SuiteConfig, config_hash, run_suite
from sweeplab.talweg import sample_talweg

CONVERGENT_NAMES = ["shrinking_disk", "expanding_disk", "moving_ball", "sublevel_quadratic", "two_intervals"]


@pytest.fixture(scope="module")
def reports():
    return {e.name: run_suite(e) for e in catalog()}


def test_catalog_contents():
    names = [e.name for e in catalog()]
    assert set(names) >= {"shrinking_disk", "expanding_disk", "moving_ball", "sublevel_quadratic",
                          "oscillatory_interval", "two_intervals"}
    q = catalog_entry("sublevel_quadratic")
    assert q.window == (-0.25, 0.0) and q.verdict == "convergent"
    osc = catalog_entry("oscillatory_interval")
    assert osc.counterexample and osc.verdict == "divergent-at-a" and osc.window[0] == 0.0
    assert "sigma-zero" in catalog_entry("expanding_disk").tags
    with pytest.raises(KeyError):
        catalog_entry("missing")


def test_every_check_once(reports):
    for r in reports.values():
        assert [c.id for c in r.checks] == list(CHECK_IDS)


@pytest.mark.parametrize("name", CONVERGENT_NAMES)
def test_convergent_entries_pass(reports, name):
    r = reports[name]
    assert r.verdict == "pass"
    assert all(c.status == "pass" for c in r.checks), [(c.id, c.status, c.detail) for c in r.checks]


def test_suite_examples(reports):
    assert reports["shrinking_disk"].check("A.a").measured == pytest.approx(1.0, abs=1e-9)
    assert abs(reports["sublevel_quadratic"].check("A.d").measured - 0.5) <= 1e-3
    osc = reports["oscillatory_interval"]
    assert osc.verdict == "pass"
    for cid in ("A.a", "A.b", "A.c", "A.d", "B.e", "B.f"):
        assert osc.check(cid).status == "expected-fail"
    bf = osc.check("B.f")
    assert bf.measured > bf.bound
    assert osc.diagnostics["talweg"]["verdict"] == "divergent-at-a"


def test_expected_fail_only_when_tagged():
    e = catalog_entry("oscillatory_interval")
    untagged = process_from_dict(e.spec)
    r = run_suite(untagged, *e.window, SuiteConfig(suite="theoremA"))
    assert not any(c.status == "expected-fail" for c in r.checks)
    assert r.verdict == "fail" and r.first_failure in ("A.a", "A.b", "A.c", "A.d")


def test_suite_selection():
    r = run_suite(catalog_entry("shrinking_disk"), config=SuiteConfig(suite="lemmas"))
    status = {c.id: c.status for c in r.checks}
    assert all(status[c] == "not-applicable" for c in ("A.a", "A.b", "A.c", "A.d", "B.e", "B.f"))
    assert all(status[c] == "pass" for c in ("L.velocity", "L.excess", "L.moduli-order", "L.criterion"))
    with pytest.raises(ValueError):
        SuiteConfig(suite="everything")


def test_report_json_schema_and_determinism(reports):
    r = reports["sublevel_quadratic"]
    text = render(r, "json")
    data = json.loads(text)
    assert set(data) == {"process", "window", "checks", "diagnostics", "provenance"}
    assert data["provenance"]["seed"] == 0 and len(data["provenance"]["config_hash"]) == 64
    again = run_suite(catalog_entry("sublevel_quadratic"))
    assert render(again, "json") == text


def test_config_hash_tracks_config():
    S = catalog_entry("shrinking_disk").build()
    h0 = config_hash(SuiteConfig(), S, (0.0, 0.5))
    assert h0 == config_hash(SuiteConfig(), S, (0.0, 0.5))
    assert h0 != config_hash(SuiteConfig(seed=1), S, (0.0, 0.5))


def test_csv_schemas(tmp_path):
    S = catalog_entry("shrinking_disk").build()
    tab = sample_talweg(S, 0.0, 0.5, 9)
    text = emit(tab, tmp_path / "t.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "t,phi_up,phi_sym,critical" and len(lines) == 10
    assert lines[2].split(",")[0] == f"{0.0625:.17g}"
    dmap = build_map(S, 0.0, 0.5)
    lines = render(dmap).splitlines()
    assert lines[0] == "r,psi,psi_prime" and len(lines) == 258
    seq = catching_up(S, 0.0, 0.5, 10, [1.0, 0.0])
    assert render(seq).splitlines()[0] == "t,x1,x2,step_displacement"
    orbit = orbit_from_sequence(seq)
    assert render(orbit, process=S).splitlines()[0] == "t,x1,x2,speed_est,asym_modulus"
    with pytest.raises(ValueError):
        render(orbit)


def test_svg_polyline():
    S = catalog_entry("sublevel_quadratic").build()
    svg = render(sample_talweg(S, -0.25, 0.0, 9), "svg-polyline")
    assert svg.startswith("<svg") and svg.count("<polyline") == 1 and svg.count("<line") == 2
    assert "inf" not in svg.split("points=")[1]


def test_emit_reports_path_on_io_error(tmp_path):
    S = catalog_entry("shrinking_disk").build()
    target = tmp_path / "missing" / "t.csv"
    with pytest.raises(EmitError, match=str(target)):
        emit(sample_talweg(S, 0.0, 0.5, 5), target)


def test_inverse_square_grid_resolves_oscillation():
    from sweeplab.catalog import inverse_square_grid
    g = inverse_square_grid(0.05, 0.3, 16)
    u = 1 / g ** 2
    assert g[0] == 0.05 and g[-1] == 0.3 and np.all(np.diff(g) > 0)
    assert np.max(-np.diff(u)) <= 2 * np.pi / 16 + 1e-9
