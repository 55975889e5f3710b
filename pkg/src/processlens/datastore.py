"""Ground-truth corpus loading, dev/test splits, and the run store.

The corpus is a directory with an index file naming each process's BPMN
and annotation files. Annotations are cross-validated against the parsed
models at load time so an id or name drift fails loudly, not as a silent
zero-score.

Runs are stored one directory each. results.json is written first and the
manifest is renamed into place last, so a run is either completely present
(manifest exists) or invisible; a crash mid-save never exposes a partial
run.
"""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass
from pathlib import Path

from .bpmn import ProcessModel, extract_activities, parse_bpmn_file
from .errors import (
    AnnotationMismatch,
    DatasetError,
    IndexMissing,
    ManifestIdUnknown,
    RunNotFound,
    StoreError,
)
from .pipeline import AnalysisRun, ValueLabel, config_label, run_from_json, run_to_json


@dataclass(frozen=True)
class GoldActivity:
    activity_id: str
    activity_name: str
    steps: tuple[str, ...]
    labels: tuple[ValueLabel, ...]


@dataclass(frozen=True)
class GroundTruthProcess:
    process_id: str
    domain_tag: str
    bpmn_path: str
    model: ProcessModel
    activities: tuple[GoldActivity, ...]

    def activity(self, activity_id: str) -> GoldActivity:
        for a in self.activities:
            if a.activity_id == activity_id:
                return a
        raise AnnotationMismatch(f"{self.process_id} has no gold activity {activity_id!r}")


@dataclass(frozen=True)
class DatasetSplit:
    dev_ids: frozenset[str]
    test_ids: frozenset[str]


def _require(condition: bool, process_id: str, message: str) -> None:
    if not condition:
        raise AnnotationMismatch(f"{process_id}: {message}")


def load_corpus(directory: str | Path) -> list[GroundTruthProcess]:
    """Load every indexed process, validating annotations against the BPMN."""
    directory = Path(directory)
    index_path = directory / "index.json"
    if not index_path.exists():
        raise IndexMissing(f"no index.json in {directory}")
    with open(index_path, "r", encoding="utf-8") as fh:
        index = json.load(fh)

    corpus: list[GroundTruthProcess] = []
    for entry in index.get("processes", []):
        process_id = entry["process_id"]
        domain_tag = entry.get("domain_tag", "")
        bpmn_path = directory / entry["bpmn_file"]
        model = parse_bpmn_file(bpmn_path, domain_tag=domain_tag)
        _require(model.process_id == process_id, process_id,
                 f"BPMN declares process id {model.process_id!r}")
        by_id = {n.node_id: n for n in extract_activities(model)}

        with open(directory / entry["annotation_file"], "r", encoding="utf-8") as fh:
            annotation = json.load(fh)
        _require(annotation.get("process_id") == process_id, process_id,
                 "annotation file names a different process")
        activities = []
        for item in annotation.get("activities", []):
            aid = item["activity_id"]
            if aid not in by_id:
                raise AnnotationMismatch(
                    f"{process_id}: annotation references unknown activity {aid!r}"
                )
            _require(item["activity_name"] == by_id[aid].name, process_id,
                     f"activity {aid!r} name differs from the BPMN")
            steps = tuple(item["steps"])
            labels = tuple(ValueLabel(l) for l in item["labels"])
            _require(len(steps) == len(labels), process_id,
                     f"activity {aid!r} has {len(steps)} steps but {len(labels)} labels")
            _require(len(steps) > 0, process_id, f"activity {aid!r} has no gold steps")
            activities.append(GoldActivity(aid, item["activity_name"], steps, labels))
        expected = entry.get("activity_count")
        if expected is not None:
            _require(expected == len(activities), process_id,
                     f"index says {expected} activities, annotation has {len(activities)}")
        corpus.append(
            GroundTruthProcess(
                process_id=process_id,
                domain_tag=domain_tag,
                bpmn_path=str(bpmn_path),
                model=model,
                activities=tuple(activities),
            )
        )
    return corpus


def split_corpus(
    corpus,
    *,
    manifest: dict | str | Path | None = None,
    seed: int | None = None,
    dev_fraction: float = 0.66,
) -> DatasetSplit:
    """Fixed split from a manifest, or a seed-deterministic random split."""
    ids = [p.process_id for p in corpus]
    if not ids:
        raise DatasetError("cannot split an empty corpus")
    if manifest is not None:
        if not isinstance(manifest, dict):
            with open(manifest, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
        dev = list(manifest.get("dev", []))
        test = list(manifest.get("test", []))
        known = set(ids)
        for pid in dev + test:
            if pid not in known:
                raise ManifestIdUnknown(f"split manifest names unknown process {pid!r}")
        overlap = set(dev) & set(test)
        if overlap:
            raise DatasetError(f"processes in both dev and test: {sorted(overlap)}")
        uncovered = known - set(dev) - set(test)
        if uncovered:
            raise DatasetError(f"split manifest misses processes: {sorted(uncovered)}")
        return DatasetSplit(frozenset(dev), frozenset(test))
    rng = random.Random(seed)
    shuffled = list(ids)
    rng.shuffle(shuffled)
    # floor of n*fraction; the epsilon keeps exact products like 50*0.66
    # from landing a hair below the integer.
    dev_count = math.floor(len(ids) * dev_fraction + 1e-9)
    return DatasetSplit(frozenset(shuffled[:dev_count]), frozenset(shuffled[dev_count:]))


class RunStore:
    """Directory-per-run persistence with a manifest-last commit point."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.runs_dir = self.root / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)

    def _run_dir(self, run_id: str) -> Path:
        if not run_id or "/" in run_id or run_id.startswith("."):
            raise StoreError(f"invalid run id {run_id!r}")
        return self.runs_dir / run_id

    @staticmethod
    def _manifest_of(run: AnalysisRun) -> dict:
        return {
            "run_id": run.run_id,
            "process_id": run.process_id,
            "revision": run.revision,
            "parent_run": run.parent_run,
            "created_at": run.created_at,
            "breakdown_label": config_label(run.breakdown_config),
            "vaa_label": config_label(run.vaa_config),
            "provider_label": run.provider_label,
            "activities_ok": sum(1 for s in run.statuses.values() if s.value == "Ok"),
            "activities_total": len(run.statuses),
        }

    def _commit(self, tmp_path: Path, final_path: Path) -> None:
        os.replace(tmp_path, final_path)

    def save_run(self, run: AnalysisRun) -> Path:
        run_dir = self._run_dir(run.run_id)
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
            results = dict(run_to_json(run))
            results["created_at"] = run.created_at
            with open(run_dir / "results.json", "w", encoding="utf-8") as fh:
                json.dump(results, fh, indent=2, sort_keys=True)
                fh.write("\n")
            tmp = run_dir / "manifest.json.tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(self._manifest_of(run), fh, indent=2, sort_keys=True)
                fh.write("\n")
            self._commit(tmp, run_dir / "manifest.json")
        except OSError as exc:
            raise StoreError(f"could not save run {run.run_id}: {exc}") from exc
        return run_dir

    def load_run(self, run_id: str) -> AnalysisRun:
        run_dir = self._run_dir(run_id)
        if not (run_dir / "manifest.json").exists():
            raise RunNotFound(f"no run {run_id!r} in {self.runs_dir}")
        try:
            with open(run_dir / "results.json", "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise StoreError(f"run {run_id!r} is unreadable: {exc}") from exc
        return run_from_json(data)

    def list_runs(
        self,
        *,
        process_id: str | None = None,
        config_label: str | None = None,
        parent_run: str | None = None,
    ) -> list[dict]:
        """Manifests of committed runs, oldest first. Uncommitted run
        directories (no manifest) are invisible by design."""
        manifests = []
        for entry in sorted(self.runs_dir.iterdir()) if self.runs_dir.exists() else []:
            manifest_path = entry / "manifest.json"
            if not entry.is_dir() or not manifest_path.exists():
                continue
            try:
                with open(manifest_path, "r", encoding="utf-8") as fh:
                    manifest = json.load(fh)
            except (OSError, json.JSONDecodeError):
                continue
            if process_id is not None and manifest.get("process_id") != process_id:
                continue
            if config_label is not None and config_label not in (
                manifest.get("breakdown_label"),
                manifest.get("vaa_label"),
            ):
                continue
            if parent_run is not None and manifest.get("parent_run") != parent_run:
                continue
            manifests.append(manifest)
        # Timestamps have second granularity, so a parent and the child
        # revision edited right after it often tie; revision keeps chains
        # in order within the tie.
        manifests.sort(
            key=lambda m: (m.get("created_at", ""), m.get("revision", 0), m.get("run_id", ""))
        )
        return manifests
