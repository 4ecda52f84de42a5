import csv
import hashlib
import json
import logging
from pathlib import Path

from anaconda.trace import write_trace_csv, write_trace_json
from estimator.estimate_store import write_event_log


log = logging.getLogger("Harness_Log")

RUN_HEADER = ("round", "regret", "cum_regret", "episode", "frame_depth")


def canonical_json(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(payload):
    """SHA-256 of the canonical (sorted, compact) JSON form of a config."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def write_json(payload, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    return path


def write_run_csv(record, path):
    """round, regret, cum_regret, episode, frame_depth for every round of one run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace = record.trace
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RUN_HEADER)
        for i in range(record.regret.size):
            writer.writerow((i + 1, repr(float(record.regret[i])), repr(float(record.cumulative[i])),
                             int(trace.episode[i]), int(trace.frame_depth[i])))
    return path


def write_run_artifacts(record, directory):
    """
    Writes the run CSV, trace CSV and trace JSON of one record, plus the duel event log of
    policies that keep an estimate store. Returns the written paths.
    """
    directory = Path(directory)
    stem = f"{record.policy}_seed{record.seed}"
    run_path = write_run_csv(record, directory / "runs" / f"{stem}.csv")
    trace_path = directory / "traces" / f"{stem}_trace.csv"
    sidecar_path = directory / "traces" / f"{stem}_trace.json"
    write_trace_csv(record.trace, trace_path)
    write_trace_json(record.trace, sidecar_path)
    paths = [run_path, trace_path, sidecar_path]
    if record.store is not None:
        events_path = directory / "traces" / f"{stem}_events.csv"
        write_event_log(record.store, events_path)
        paths.append(events_path)
    return paths


def write_manifest(directory, schema_version, config_payload, files):
    """manifest.json listing every artefact relative to `directory`, the schema version and config hash."""
    directory = Path(directory)
    relative = sorted({Path(f).resolve().relative_to(directory.resolve()).as_posix() for f in files})
    manifest = {"schema_version": schema_version,
                "config_sha256": config_hash(config_payload),
                "files": relative}
    path = write_json(manifest, directory / "manifest.json")
    log.info(f"Manifest written to {path} ({len(relative)} files)")
    return path
