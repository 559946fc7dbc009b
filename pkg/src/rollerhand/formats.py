"""On-disk formats: trajectory JSONL, demo sets, weights JSON, CSV reports, manifests.

Floats are written with ``repr`` so every value reads back bit-exactly, and
key order is fixed so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import tempfile
from dataclasses import dataclass

import numpy as np

from . import __version__
from .controller import TargetSpec, Trajectory
from .learner import DemoSet, PolicyNet

TRAJ_FORMAT = "rollerhand-trajectory/1"
WEIGHTS_FORMAT = "rollerhand-weights/1"
REPORT_COLUMNS = ("suite", "case_axis", "angle_deg", "policy", "trial", "final_e_omega",
                  "steps", "reason")


class FormatError(ValueError):
    def __init__(self, message, path=None, line=None, offset=None):
        self.path, self.line, self.offset = path, line, offset
        parts = [str(path) if path is not None else "<data>"]
        if line is not None:
            parts.append(f"line {line}")
        if offset is not None:
            parts.append(f"byte offset {offset}")
        super().__init__(f"{', '.join(parts)}: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=True)


def atomic_write(path, data) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# trajectories


def _floats(v) -> list:
    return [float(x) for x in np.asarray(v, dtype=float).reshape(-1)]


def trajectory_lines(traj: Trajectory, kind: str | None = None) -> list[str]:
    head = {"type": "header", "format": TRAJ_FORMAT, "spec": traj.spec.to_dict(),
            "seed": int(traj.seed), "policy": traj.policy}
    if kind is not None:
        head["kind"] = kind
    out = [_dump(head)]
    for k, (s, a) in enumerate(traj.pairs()):
        out.append(_dump({
            "step": k, "state": _floats(s), "action": _floats(a),
            "e_omega": float(traj.e_omega[k]), "residuals": _floats(traj.residuals[k]),
            "dropped": bool(traj.dropped[k]),
        }))
    out.append(_dump({"type": "end", "reason": traj.reason,
                      "final_e_omega": float(traj.final_e_omega), "steps": len(traj)}))
    return out


def dumps_trajectories(trajs, kinds=None) -> str:
    lines = []
    for i, t in enumerate(trajs):
        lines += trajectory_lines(t, None if kinds is None else kinds[i])
    return "".join(l + "\n" for l in lines)


def write_trajectories(path, trajs) -> None:
    atomic_write(path, dumps_trajectories(trajs))


def _records(data: bytes, path):
    """Yield (line_no, byte_offset, obj) for every line, rejecting truncation."""
    offset = 0
    for no, raw in enumerate(data.splitlines(keepends=True), start=1):
        if not raw.endswith(b"\n"):
            raise FormatError("truncated record (no trailing newline)", path, no, offset)
        text = raw.strip()
        if text:
            try:
                obj = json.loads(text)
            except (json.JSONDecodeError, UnicodeDecodeError) as e:
                raise FormatError(f"corrupt record: {e}", path, no, offset) from None
            if not isinstance(obj, dict):
                raise FormatError("record is not an object", path, no, offset)
            yield no, offset, obj
        offset += len(raw)


def _vector(obj, key, n, path, no, off):
    v = obj.get(key)
    if not isinstance(v, list) or len(v) != n or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise FormatError(f"field {key!r} must be {n} numbers", path, no, off)
    return np.array(v, dtype=float)


def parse_trajectories(data: bytes, path=None) -> list[tuple[Trajectory, str | None]]:
    """Parse concatenated trajectory records; returns (trajectory, kind) pairs."""
    out = []
    cur, kind = None, None
    for no, off, obj in _records(data, path):
        typ = obj.get("type")
        if typ == "demoset":
            continue
        if typ == "header":
            if cur is not None:
                raise FormatError("header before previous record ended", path, no, off)
            try:
                spec = TargetSpec.from_dict(obj["spec"])
                seed = int(obj["seed"])
            except (KeyError, TypeError, ValueError) as e:
                raise FormatError(f"bad header: {e}", path, no, off) from None
            cur = Trajectory(spec=spec, seed=seed, policy=str(obj.get("policy", "")))
            kind = obj.get("kind")
        elif typ == "end":
            if cur is None:
                raise FormatError("end line without header", path, no, off)
            cur.reason = str(obj.get("reason", ""))
            cur.final_e_omega = float(obj.get("final_e_omega", math.nan))
            if obj.get("steps", len(cur)) != len(cur):
                raise FormatError(f"end line says {obj.get('steps')} steps, read {len(cur)}",
                                  path, no, off)
            out.append((cur, kind))
            cur = None
        else:
            if cur is None:
                raise FormatError("step line without header", path, no, off)
            if obj.get("step") != len(cur):
                raise FormatError(f"expected step {len(cur)}, got {obj.get('step')!r}",
                                  path, no, off)
            cur.states.append(_vector(obj, "state", 35, path, no, off))
            cur.actions.append(_vector(obj, "action", 9, path, no, off))
            e = obj.get("e_omega")
            if isinstance(e, bool) or not isinstance(e, (int, float)):
                raise FormatError("field 'e_omega' must be a number", path, no, off)
            cur.e_omega.append(float(e))
            cur.residuals.append(tuple(float(x) for x in _vector(obj, "residuals", 3, path, no, off)))
            cur.dropped.append(bool(obj.get("dropped", False)))
    if cur is not None:
        raise FormatError("record ends without an end line", path, None, len(data))
    return out


def read_trajectories(path) -> list[Trajectory]:
    return [t for t, _ in parse_trajectories(read_bytes(path), path)]


def read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None


# ---------------------------------------------------------------------------
# demo sets: a header line, then demos and aggregated rollouts in order


def dumps_demoset(demos: DemoSet) -> str:
    head = _dump({"type": "demoset", "format": TRAJ_FORMAT,
                  "node_tol_pos": demos.node_tol_pos, "node_tol_ang": demos.node_tol_ang,
                  "demos": len(demos.trajectories), "aggregated": len(demos.aggregated)})
    body = dumps_trajectories(
        demos.trajectories + demos.aggregated,
        ["demo"] * len(demos.trajectories) + ["aggregated"] * len(demos.aggregated))
    return head + "\n" + body


def write_demoset(path, demos: DemoSet) -> None:
    atomic_write(path, dumps_demoset(demos))


def parse_demoset(data: bytes, path=None) -> DemoSet:
    demos = DemoSet()
    first = next(_records(data, path), None)
    if first is not None and first[2].get("type") == "demoset":
        demos.node_tol_pos = float(first[2].get("node_tol_pos", 1.0))
        demos.node_tol_ang = float(first[2].get("node_tol_ang", 1.0))
    for t, kind in parse_trajectories(data, path):
        if kind == "aggregated":
            demos.aggregated.append(t)
        else:
            demos.add(t)
    return demos


def read_demoset(paths) -> DemoSet:
    """Load one or more demo files (plain trajectory files count as demos)."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    out = None
    for p in paths:
        d = parse_demoset(read_bytes(p), p)
        if out is None:
            out = d
        else:
            out.extend(d.trajectories)
            out.aggregated.extend(d.aggregated)
    return out if out is not None else DemoSet()


# ---------------------------------------------------------------------------
# weights


def weights_dict(net: PolicyNet) -> dict:
    return {
        "format": WEIGHTS_FORMAT,
        "arch": net.arch,
        "leaky_slope": float(net.leaky_slope),
        "input_scaling": {"offset": _floats(net.input_offset), "scale": _floats(net.input_scale)},
        "output_scaling": {"offset": _floats(net.output_offset),
                           "scale": _floats(net.output_scale)},
        "action_mode": net.action_mode,
        "seed": int(net.metadata.get("seed", 0)),
        "layers": [{"weight": [[float(x) for x in row] for row in w], "bias": _floats(b)}
                   for w, b in zip(net.weights, net.biases)],
        "metadata": net.metadata,
    }


def dumps_weights(net: PolicyNet) -> str:
    return _dump(weights_dict(net)) + "\n"


def write_weights(path, net: PolicyNet) -> None:
    atomic_write(path, dumps_weights(net))


def parse_weights(data: bytes, path=None) -> PolicyNet:
    try:
        d = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError(f"corrupt weights: {e}", path, getattr(e, "lineno", None),
                          getattr(e, "pos", None)) from None
    try:
        if d.get("format") != WEIGHTS_FORMAT:
            raise ValueError(f"unknown format {d.get('format')!r}")
        weights = [np.array(l["weight"], dtype=float) for l in d["layers"]]
        biases = [np.array(l["bias"], dtype=float) for l in d["layers"]]
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("layer shapes do not match")
        net = PolicyNet(
            weights, biases, float(d["leaky_slope"]),
            np.array(d["input_scaling"]["offset"], dtype=float),
            np.array(d["input_scaling"]["scale"], dtype=float),
            np.array(d["output_scaling"]["offset"], dtype=float),
            np.array(d["output_scaling"]["scale"], dtype=float),
            d.get("action_mode", "delta"), d.get("metadata", {}),
        )
        if net.arch != list(d["arch"]):
            raise ValueError(f"arch {d['arch']} does not match layers {net.arch}")
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad weights: {e}", path) from None
    return net


def read_weights(path) -> PolicyNet:
    return parse_weights(read_bytes(path), path)


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ReportRow:
    suite: str
    case_axis: tuple
    angle_deg: float
    policy: str
    trial: int
    final_e_omega: float
    steps: int
    reason: str


def report_rows(results) -> list[ReportRow]:
    rows = []
    for res in results:
        for r in res.records:
            case = res.suite.cases[r.case]
            rows.append(ReportRow(res.suite.name, tuple(float(x) for x in case.axis),
                                  math.degrees(case.angle), res.policy, r.trial,
                                  float(r.final_e_omega), int(r.steps), r.reason))
    return rows


def dumps_report(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r.suite, " ".join(repr(x) for x in r.case_axis), repr(r.angle_deg),
                    r.policy, r.trial, repr(r.final_e_omega), r.steps, r.reason])
    return buf.getvalue()


def parse_report(text: str, path=None) -> list[ReportRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != REPORT_COLUMNS:
        raise FormatError(f"expected columns {','.join(REPORT_COLUMNS)}", path, 1)
    rows = []
    for no, rec in enumerate(reader, start=2):
        try:
            suite, axis, ang, pol, trial, e, steps, reason = rec
            rows.append(ReportRow(suite, tuple(float(x) for x in axis.split()), float(ang),
                                  pol, int(trial), float(e), int(steps), reason))
        except ValueError as exc:
            raise FormatError(f"bad report row: {exc}", path, no) from None
    return rows


def summary_lines(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("suite", "policy", "n", "mean_e_omega", "std_e_omega", "drops"))
    for res in results:
        w.writerow((res.suite.name, res.policy, len(res.records), repr(res.mean),
                    repr(res.std), res.drop_count))
    return buf.getvalue()


# ---------------------------------------------------------------------------
# manifests


def file_sha256(path) -> str:
    return hashlib.sha256(read_bytes(path)).hexdigest()


def manifest_dict(command: str, config_hash: str, seed: int, out_dir, files) -> dict:
    entries = []
    for p in files:
        full = os.path.join(out_dir, p)
        if not os.path.isfile(full):
            raise FileNotFoundError(f"manifest lists missing file {full}")
        entries.append({"path": p, "sha256": file_sha256(full)})
    run_id = hashlib.sha256(f"{command}:{config_hash}:{seed}".encode()).hexdigest()[:16]
    return {
        "run_id": run_id, "command": command, "config_hash": config_hash, "seed": int(seed),
        "files": entries,
        "versions": {"rollerhand": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }


def write_manifest(out_dir, command, config_hash, seed, files) -> str:
    m = manifest_dict(command, config_hash, seed, out_dir, files)
    path = os.path.join(out_dir, "manifest.json")
    atomic_write(path, json.dumps(m, indent=2) + "\n")
    return path
