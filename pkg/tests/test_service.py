import json
import math
import threading
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from processlens.datastore import RunStore
from processlens.prompts import Phase
from processlens.service import create_app

from helpers import FaultyGateway, mock_gateway

MINI = Path("corpus/mini")
RENTAL_XML = (MINI / "equipment-rental.bpmn").read_bytes()
API = "/api/v1"

ADHOC_XML = b"""<?xml version="1.0" encoding="UTF-8"?>
<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL">
  <process id="adhoc" name="Ad hoc process">
    <task id="a1" name="Draft offer"/>
  </process>
</definitions>
"""


def make_client(tmp_path, **kwargs):
    store = RunStore(tmp_path / "store")
    kwargs.setdefault("gateway", mock_gateway())
    kwargs.setdefault("token", "")
    app = create_app(store=store, **kwargs)
    return TestClient(app), store


def upload_rental(client):
    response = client.post(f"{API}/processes", content=RENTAL_XML)
    assert response.status_code == 201, response.text
    return response.json()


def start_run(client, process_id="equipment-rental", **extra):
    response = client.post(f"{API}/runs", json={"process_id": process_id, **extra})
    assert response.status_code == 201, response.text
    return response.json()


def error_code(response):
    return response.json()["error"]["code"]


class TestProcesses:
    def test_upload_and_list(self, tmp_path):
        client, _ = make_client(tmp_path)
        payload = upload_rental(client)
        assert payload["process_id"] == "equipment-rental"
        assert payload["name"] == "Equipment rental handling"
        assert payload["activity_count"] == 5

        listing = client.get(f"{API}/processes").json()["processes"]
        assert [p["process_id"] for p in listing] == ["equipment-rental"]

    def test_upload_survives_restart(self, tmp_path):
        client, store = make_client(tmp_path)
        upload_rental(client)
        reopened = TestClient(create_app(store=store, gateway=mock_gateway(), token=""))
        listing = reopened.get(f"{API}/processes").json()["processes"]
        assert [p["process_id"] for p in listing] == ["equipment-rental"]

    def test_duplicate_upload_conflicts(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        response = client.post(f"{API}/processes", content=RENTAL_XML)
        assert response.status_code == 409
        assert error_code(response) == "PROCESS_EXISTS"

    def test_invalid_xml_rejected(self, tmp_path):
        client, _ = make_client(tmp_path)
        response = client.post(f"{API}/processes", content=b"<definitions>")
        assert response.status_code == 400
        assert error_code(response) == "BPMN_INVALID"

    def test_empty_body_rejected(self, tmp_path):
        client, _ = make_client(tmp_path)
        response = client.post(f"{API}/processes", content=b"")
        assert response.status_code == 400
        assert error_code(response) == "EMPTY_BODY"


class TestRuns:
    def test_mock_run_happy_path(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        run = start_run(client, provider="mock")
        assert set(run["statuses"].values()) == {"Ok"}
        assert len(run["steps"]) == 12
        assert len(run["classifications"]) == 12
        assert run["revision"] == 1 and run["parent_run"] is None

        fetched = client.get(f"{API}/runs/{run['run_id']}").json()
        assert fetched["steps"] == run["steps"]
        by_activity = {a["activity_id"]: a for a in fetched["activities"]}
        assert by_activity["t5"]["activity_name"] == "Wait for equipment return then file paperwork"
        assert [s["label"] for s in by_activity["t5"]["steps"]] == ["NVA", "NVA"]
        assert fetched["distribution"]["NVA"]["count"] == 2

    def test_run_listing_and_filter(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        run = start_run(client)
        listing = client.get(f"{API}/runs").json()["runs"]
        assert [m["run_id"] for m in listing] == [run["run_id"]]
        empty = client.get(f"{API}/runs", params={"process_id": "other"}).json()["runs"]
        assert empty == []

    def test_unknown_process(self, tmp_path):
        client, _ = make_client(tmp_path)
        response = client.post(f"{API}/runs", json={"process_id": "ghost"})
        assert response.status_code == 404
        assert error_code(response) == "PROCESS_NOT_FOUND"

    def test_bad_config_code(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        response = client.post(
            f"{API}/runs",
            json={"process_id": "equipment-rental", "vaa_config": "no-such-preset"},
        )
        assert response.status_code == 400
        assert error_code(response) == "CONFIG_INVALID"

    def test_bad_provider_code(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        response = client.post(
            f"{API}/runs", json={"process_id": "equipment-rental", "provider": "carrier-pigeon"}
        )
        assert response.status_code == 400
        assert error_code(response) == "PROVIDER_INVALID"

    def test_missing_body_field_is_validation_error(self, tmp_path):
        client, _ = make_client(tmp_path)
        response = client.post(f"{API}/runs", json={})
        assert response.status_code == 422
        assert error_code(response) == "VALIDATION_ERROR"

    def test_unknown_run_and_route_codes(self, tmp_path):
        client, _ = make_client(tmp_path)
        response = client.get(f"{API}/runs/r-missing")
        assert response.status_code == 404
        assert error_code(response) == "RUN_NOT_FOUND"
        response = client.get(f"{API}/nonsense")
        assert response.status_code == 404
        assert error_code(response) == "NOT_FOUND"

    def test_optimal_config_round_trip(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        run = start_run(client, breakdown_config="optimal", vaa_config="optimal")
        assert run["breakdown_config"]["label"] == "optimal"
        assert all(c["justification"] for c in run["classifications"])


class TestReviewMutations:
    def test_label_override_creates_child_revision(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        parent = start_run(client)
        target = parent["classifications"][0]
        assert target["label"] == "VA"

        response = client.patch(
            f"{API}/runs/{parent['run_id']}/classifications/{target['step_id']}",
            json={"label": "NVA", "note": "actually rework"},
        )
        assert response.status_code == 200, response.text
        child = response.json()
        assert child["revision"] == parent["revision"] + 1
        assert child["parent_run"] == parent["run_id"]
        assert child["review_note"] == "actually rework"

        changed = [
            (a["step_id"], a["label"], b["label"])
            for a, b in zip(parent["classifications"], child["classifications"])
            if a["label"] != b["label"]
        ]
        assert changed == [(target["step_id"], "VA", "NVA")]
        assert child["steps"] == parent["steps"]

        # the parent is immutable and now points at its child
        fetched = client.get(f"{API}/runs/{parent['run_id']}").json()
        assert fetched["classifications"] == parent["classifications"]
        assert fetched["child_run"] == child["run_id"]

    def test_step_edit_keeps_label(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        parent = start_run(client)
        step = parent["steps"][3]
        response = client.patch(
            f"{API}/runs/{parent['run_id']}/steps/{step['step_id']}",
            json={"text": "Hand the request to the clerk", "note": "clearer wording"},
        )
        assert response.status_code == 200
        child = response.json()
        texts = {s["step_id"]: s["text"] for s in child["steps"]}
        assert texts[step["step_id"]] == "Hand the request to the clerk"
        assert child["classifications"] == parent["classifications"]
        others = [s for s in child["steps"] if s["step_id"] != step["step_id"]]
        assert others == [s for s in parent["steps"] if s["step_id"] != step["step_id"]]

    def test_reanalyze_touches_only_one_activity(self, tmp_path):
        armed = {"on": False}
        gateway = FaultyGateway(
            mock_gateway(),
            lambda p: armed["on"]
            and p.phase is Phase.BREAKDOWN
            and "Select suitable equipment" in p.user_text,
        )
        client, _ = make_client(tmp_path, gateway=gateway)
        upload_rental(client)
        parent = start_run(client)

        armed["on"] = True
        response = client.post(f"{API}/runs/{parent['run_id']}/activities/t2/reanalyze")
        assert response.status_code == 200, response.text
        child = response.json()
        assert child["revision"] == 2
        assert child["statuses"]["t2"] == "BreakdownFailed"
        assert [s for s in child["steps"] if s["activity_id"] == "t2"] == []
        keep = lambda steps: [s for s in steps if s["activity_id"] != "t2"]
        assert keep(child["steps"]) == keep(parent["steps"])
        assert {s["step_id"] for s in child["steps"]} == {
            c["step_id"] for c in child["classifications"]
        }

    def test_reanalyze_unknown_activity(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        parent = start_run(client)
        response = client.post(f"{API}/runs/{parent['run_id']}/activities/t99/reanalyze")
        assert response.status_code == 404
        assert error_code(response) == "ACTIVITY_NOT_FOUND"

    def test_second_mutation_of_same_parent_conflicts(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        parent = start_run(client)
        first = parent["classifications"][0]["step_id"]
        second = parent["classifications"][1]["step_id"]

        ok = client.patch(
            f"{API}/runs/{parent['run_id']}/classifications/{first}",
            json={"label": "NVA"},
        )
        assert ok.status_code == 200
        conflict = client.patch(
            f"{API}/runs/{parent['run_id']}/classifications/{second}",
            json={"label": "NVA"},
        )
        assert conflict.status_code == 409
        assert error_code(conflict) == "RUN_CONFLICT"
        assert ok.json()["run_id"] in conflict.json()["error"]["message"]

        # the child is the new head and accepts edits
        retry = client.patch(
            f"{API}/runs/{ok.json()['run_id']}/classifications/{second}",
            json={"label": "NVA"},
        )
        assert retry.status_code == 200
        assert retry.json()["revision"] == 3

    def test_conflict_survives_restart(self, tmp_path):
        client, store = make_client(tmp_path)
        upload_rental(client)
        parent = start_run(client)
        step_id = parent["classifications"][0]["step_id"]
        assert (
            client.patch(
                f"{API}/runs/{parent['run_id']}/classifications/{step_id}",
                json={"label": "BVA"},
            ).status_code
            == 200
        )
        reopened = TestClient(create_app(store=store, gateway=mock_gateway(), token=""))
        response = reopened.patch(
            f"{API}/runs/{parent['run_id']}/classifications/{step_id}",
            json={"label": "NVA"},
        )
        assert response.status_code == 409

    def test_concurrent_mutations_exactly_one_wins(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        parent = start_run(client)
        ids = [c["step_id"] for c in parent["classifications"][:2]]
        codes = []
        barrier = threading.Barrier(2)

        def mutate(step_id):
            barrier.wait()
            response = client.patch(
                f"{API}/runs/{parent['run_id']}/classifications/{step_id}",
                json={"label": "NVA"},
            )
            codes.append(response.status_code)

        threads = [threading.Thread(target=mutate, args=(sid,)) for sid in ids]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(codes) == [200, 409]

    def test_mutation_error_codes(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        parent = start_run(client)
        run_id = parent["run_id"]
        step_id = parent["steps"][0]["step_id"]

        bad_label = client.patch(
            f"{API}/runs/{run_id}/classifications/{step_id}", json={"label": "WASTE"}
        )
        assert (bad_label.status_code, error_code(bad_label)) == (400, "LABEL_INVALID")

        missing = client.patch(
            f"{API}/runs/{run_id}/classifications/nope", json={"label": "VA"}
        )
        assert (missing.status_code, error_code(missing)) == (404, "CLASSIFICATION_NOT_FOUND")

        no_step = client.patch(f"{API}/runs/{run_id}/steps/nope", json={"text": "x"})
        assert (no_step.status_code, error_code(no_step)) == (404, "STEP_NOT_FOUND")

        blank = client.patch(
            f"{API}/runs/{run_id}/steps/{step_id}", json={"text": "   "}
        )
        assert (blank.status_code, error_code(blank)) == (400, "STEP_TEXT_EMPTY")
        # none of the failed mutations consumed the parent
        assert client.get(f"{API}/runs/{run_id}").json()["child_run"] is None


class TestExportAndMetrics:
    def test_export_json_matches_run_payload(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        run = start_run(client)
        response = client.get(f"{API}/runs/{run['run_id']}/export")
        assert response.status_code == 200
        exported = json.loads(response.text)
        assert exported["run_id"] == run["run_id"]
        assert exported["steps"] == run["steps"]
        assert "created_at" not in exported

    def test_export_csv_and_bad_format(self, tmp_path):
        client, _ = make_client(tmp_path)
        upload_rental(client)
        run = start_run(client)
        response = client.get(f"{API}/runs/{run['run_id']}/export", params={"format": "csv"})
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/csv")
        assert response.text.splitlines()[0] == "activity_id,ordinal,step_text,label,justification"
        bad = client.get(f"{API}/runs/{run['run_id']}/export", params={"format": "xml"})
        assert (bad.status_code, error_code(bad)) == (400, "FORMAT_INVALID")

    def test_metrics_against_gold(self, tmp_path):
        client, _ = make_client(tmp_path, corpus=str(MINI))
        upload_rental(client)
        run = start_run(client)
        response = client.get(f"{API}/runs/{run['run_id']}/metrics")
        assert response.status_code == 200, response.text
        metrics = response.json()
        assert metrics["scored_steps"] == 11
        assert metrics["unmatched_steps"] == 1
        assert metrics["ambiguous_steps"] == 0
        assert metrics["confusion"]["counts"] == [[4, 1, 0], [0, 4, 0], [0, 0, 2]]
        assert math.isclose(metrics["f1"]["macro"], 25 / 27, abs_tol=1e-9)
        assert metrics["f1"]["per_class"]["NVA"]["f1"] == 1.0
        assert metrics["alignment"]["counts"] == {
            "ExactMatch": 9,
            "FunctionalEquivalence": 1,
            "GranularityDifference": 1,
            "NoMatch": 1,
        }
        assert metrics["alignment"]["total_ground_truth"] == 13

    def test_metrics_without_gold(self, tmp_path):
        client, _ = make_client(tmp_path, corpus=str(MINI))
        response = client.post(f"{API}/processes", content=ADHOC_XML)
        assert response.status_code == 201
        run = start_run(client, process_id="adhoc")
        missing = client.get(f"{API}/runs/{run['run_id']}/metrics")
        assert (missing.status_code, error_code(missing)) == (404, "GOLD_NOT_FOUND")


class TestAuthAndStatic:
    def test_token_required_when_configured(self, tmp_path):
        client, _ = make_client(tmp_path, token="s3cret")
        denied = client.get(f"{API}/processes")
        assert (denied.status_code, error_code(denied)) == (401, "AUTH_REQUIRED")
        wrong = client.get(f"{API}/processes", headers={"Authorization": "Bearer nope"})
        assert (wrong.status_code, error_code(wrong)) == (401, "AUTH_INVALID")
        ok = client.get(f"{API}/processes", headers={"Authorization": "Bearer s3cret"})
        assert ok.status_code == 200

    def test_token_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PROCESSLENS_TOKEN", "hunter2")
        store = RunStore(tmp_path / "store")
        client = TestClient(create_app(store=store, gateway=mock_gateway()))
        assert client.get(f"{API}/processes").status_code == 401
        ok = client.get(f"{API}/processes", headers={"Authorization": "Bearer hunter2"})
        assert ok.status_code == 200

    def test_placeholder_page_without_ui_build(self, tmp_path):
        client, _ = make_client(tmp_path, token="s3cret")
        # static assets stay reachable; only the API needs the token
        response = client.get("/")
        assert response.status_code == 200
        assert "processlens" in response.text

    def test_static_dir_mounted_when_present(self, tmp_path):
        ui = tmp_path / "dist"
        ui.mkdir()
        (ui / "index.html").write_text("<html><body>review ui</body></html>")
        client, _ = make_client(tmp_path, static_dir=ui)
        response = client.get("/")
        assert response.status_code == 200
        assert "review ui" in response.text


class TestRunPersistence:
    def test_runs_readable_after_restart(self, tmp_path):
        client, store = make_client(tmp_path)
        upload_rental(client)
        run = start_run(client)
        reopened = TestClient(create_app(store=store, gateway=mock_gateway(), token=""))
        fetched = reopened.get(f"{API}/runs/{run['run_id']}")
        assert fetched.status_code == 200
        assert fetched.json()["steps"] == run["steps"]
        # activity names come from the persisted BPMN, not the run
        names = {a["activity_id"]: a["activity_name"] for a in fetched.json()["activities"]}
        assert names["t2"] == "Select suitable equipment"
