"""Scenario document validation and the bundled examples."""

import json
from importlib import resources

import pytest

from haloflow import ScenarioError, load_scenario, parse_grid, parse_scenario
from haloflow.scenario import AlltoallJob, HaloJob, TimestepJob


def bundled(name):
    return resources.files("haloflow").joinpath("scenarios", name)


def minimal(**overrides):
    doc = {
        "schema": 1,
        "topology": {"preset": "dgx1v"},
        "workload": {"kind": "alltoall", "ranks": 4, "msg_bytes": 100},
    }
    doc.update(overrides)
    return doc


class TestBundledScenarios:
    def test_demo_parses_with_all_sections(self):
        scn = parse_scenario(json.loads(bundled("demo.json").read_text()))
        assert isinstance(scn.workload, AlltoallJob)
        assert scn.sweep is not None and len(scn.sweep.points) == 3
        assert scn.roofline is not None and len(scn.roofline.kernels) == 5
        assert scn.energy is not None and len(scn.energy.configurations) == 4
        assert scn.seed == 1234

    def test_halo_scenario(self):
        scn = parse_scenario(json.loads(bundled("halo.json").read_text()))
        assert isinstance(scn.workload, HaloJob)
        assert scn.workload.grid == "quad160x160"
        assert scn.workload.bytes_per_element == 56000


class TestGridShorthand:
    def test_forms(self):
        assert parse_grid("ring8").n == 8
        assert parse_grid("quad4x6").n == 24
        g = parse_grid("random32d4s9")
        assert g.n == 32 and g.max_degree <= 4

    def test_rejects_unknown_shapes(self):
        for bad in ("tri9", "quad4", "random32", "ring", ""):
            with pytest.raises(ScenarioError):
                parse_grid(bad)


class TestValidationPaths:
    def test_unknown_top_level_key(self):
        with pytest.raises(ScenarioError) as err:
            parse_scenario(minimal(extra=1))
        assert err.value.path == "extra"

    def test_unknown_nested_key_carries_dotted_path(self):
        doc = minimal()
        doc["workload"]["bogus"] = True
        with pytest.raises(ScenarioError) as err:
            parse_scenario(doc)
        assert err.value.path == "workload.bogus"

    def test_indexed_path_for_list_entries(self):
        doc = minimal(
            sweep={
                "total_bytes": 1.0,
                "compute_seconds_total": 0.0,
                "points": [
                    {"name": "a", "topology": {"preset": "dgx2"}, "ranks": 4},
                    {"name": "b", "topology": {"preset": "dgx2"}, "ranks": 0},
                ],
            }
        )
        with pytest.raises(ScenarioError) as err:
            parse_scenario(doc)
        assert err.value.path == "sweep.points[1].ranks"

    def test_wrong_type_reported_at_field(self):
        doc = minimal()
        doc["workload"]["ranks"] = "four"
        with pytest.raises(ScenarioError) as err:
            parse_scenario(doc)
        assert err.value.path == "workload.ranks"

    def test_boolean_is_not_a_number(self):
        doc = minimal()
        doc["workload"]["msg_bytes"] = True
        with pytest.raises(ScenarioError) as err:
            parse_scenario(doc)
        assert err.value.path == "workload.msg_bytes"

    def test_missing_required_key(self):
        doc = minimal()
        del doc["workload"]["ranks"]
        with pytest.raises(ScenarioError, match="ranks"):
            parse_scenario(doc)

    def test_schema_version_checked(self):
        with pytest.raises(ScenarioError) as err:
            parse_scenario(minimal(schema=2))
        assert err.value.path == "schema"

    def test_bad_enum_lists_choices(self):
        doc = minimal()
        doc["workload"] = {"kind": "halo", "grid": "ring8", "ranks": 2,
                          "steps": 1, "mode": "sideways"}
        with pytest.raises(ScenarioError, match="mask_array"):
            parse_scenario(doc)

    def test_unknown_workload_kind(self):
        doc = minimal()
        doc["workload"] = {"kind": "gossip"}
        with pytest.raises(ScenarioError) as err:
            parse_scenario(doc)
        assert err.value.path == "workload.kind"


class TestWorkloads:
    def test_timestep_parses_flows(self):
        doc = minimal()
        doc["workload"] = {
            "kind": "timestep",
            "compute_seconds": [0.5, 0.25],
            "flows": [{"src": 0, "dst": 1, "bytes": 1000}],
        }
        scn = parse_scenario(doc)
        assert isinstance(scn.workload, TimestepJob)
        assert scn.workload.flows[0].bytes == 1000
        assert scn.workload.barrier is True

    def test_halo_defaults(self):
        doc = minimal()
        doc["workload"] = {"kind": "halo", "grid": "ring8", "ranks": 2, "steps": 3}
        scn = parse_scenario(doc)
        assert scn.workload.mode.value == "none"
        assert scn.workload.bytes_per_element == 8.0

    def test_energy_fit_and_envelope_are_exclusive(self):
        doc = minimal(
            energy={
                "fit": [[0.5, 100.0], [1.0, 200.0]],
                "p_idle": 10.0,
                "configurations": [
                    {"name": "x", "step_seconds": 0.1, "busy_fraction": 0.5}
                ],
            }
        )
        with pytest.raises(ScenarioError) as err:
            parse_scenario(doc)
        assert err.value.path == "energy.fit"


class TestLoading:
    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "scn.json"
        path.write_text(json.dumps(minimal()))
        scn = load_scenario(path)
        assert scn.workload.ranks == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError):
            load_scenario(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioError, match="invalid JSON"):
            load_scenario(path)
