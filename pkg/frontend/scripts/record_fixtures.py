"""Record API fixtures for the review UI test suite.

Boots the analysis service in-process (no sockets), drives the documented
endpoints with the deterministic mock provider, and saves the raw JSON
responses under frontend/fixtures/. The vitest suite replays these files
through a stubbed fetch, so it needs neither a live service nor the Python
package; only re-recording does.

Run from the repository root after installing the package:

    python3 frontend/scripts/record_fixtures.py

Re-recording rewrites created_at timestamps; everything else is stable.
"""

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from processlens.datastore import RunStore, load_corpus
from processlens.gateway import build_gateway
from processlens.service import create_app

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
REPO = Path(__file__).resolve().parent.parent.parent
CORPUS = REPO / "corpus" / "mini"


def save(name: str, payload) -> None:
    path = FIXTURES / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path.relative_to(REPO)}")


def first_step_with_label(run: dict, label: str) -> str:
    for entry in run["classifications"]:
        if entry["label"] == label:
            return entry["step_id"]
    raise SystemExit(f"no step labeled {label} in run {run['run_id']}")


def main() -> int:
    FIXTURES.mkdir(exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        app = create_app(
            store=RunStore(Path(tmp) / "runs"),
            gateway=build_gateway("mock"),
            corpus=load_corpus(CORPUS),
            token="",
        )
        client = TestClient(app)

        xml = (CORPUS / "equipment-rental.bpmn").read_bytes()
        response = client.post(
            "/api/v1/processes",
            content=xml,
            params={"domain_tag": "industrial services"},
            headers={"content-type": "application/xml"},
        )
        response.raise_for_status()
        save("processes.json", client.get("/api/v1/processes").json())

        parent = client.post(
            "/api/v1/runs", json={"process_id": "equipment-rental"}
        ).json()

        # The documented review flow: one BVA label overridden to NVA makes
        # revision 2, then a re-analysis of one activity makes revision 3.
        step_id = first_step_with_label(parent, "BVA")
        child = client.patch(
            f"/api/v1/runs/{parent['run_id']}/classifications/{step_id}",
            json={"label": "NVA", "note": "pure rework, adds no value"},
        ).json()
        save("run-child-label.json", child)

        grandchild = client.post(
            f"/api/v1/runs/{child['run_id']}/activities/t2/reanalyze",
            json={"note": "double-check equipment selection"},
        ).json()
        save("run-child-reanalyze.json", grandchild)

        # Re-fetched after the mutation so child_run is populated.
        save("run-parent.json", client.get(f"/api/v1/runs/{parent['run_id']}").json())
        save("runs-list.json", client.get("/api/v1/runs").json())
        save("metrics.json", client.get(f"/api/v1/runs/{parent['run_id']}/metrics").json())

        conflict = client.patch(
            f"/api/v1/runs/{parent['run_id']}/classifications/{step_id}",
            json={"label": "VA", "note": ""},
        )
        assert conflict.status_code == 409, conflict.text
        save("error-conflict.json", conflict.json())

        bad_label = client.patch(
            f"/api/v1/runs/{grandchild['run_id']}/classifications/{step_id}",
            json={"label": "waste", "note": ""},
        )
        assert bad_label.status_code == 400, bad_label.text
        save("error-label.json", bad_label.json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
