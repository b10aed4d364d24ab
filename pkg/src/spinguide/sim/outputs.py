"""Deterministic CSV, JSON and SVG emission plus the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

TRAJECTORY_HEADER = ["t", "q1", "q2", "q3", "theta1", "theta2", "theta3", "rho", "s1", "s2", "s3"]
OBSERVABLE_HEADER = ["t", "norm", "x1", "x2", "x3", "s1", "s2", "s3"]


def _plain(obj):
    """Convert numpy and complex values into JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> Path:
    path.write_text(dumps(obj))
    return path


def write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    return path


def write_trajectory_csv(path: Path, traj) -> Path:
    """One row per recorded step with the fixed trajectory header."""
    return write_rows(path, TRAJECTORY_HEADER, traj.table())


def write_observables_csv(path: Path, obs: list) -> Path:
    rows = [[o["time"], o["norm"], *o["mean_position"], *o["mean_spin"]] for o in obs]
    return write_rows(path, OBSERVABLE_HEADER, rows)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "spinguide"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save_svg(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


def plot_trajectory_svg(path: Path, traj) -> Path:
    """Trajectory components against time."""
    plt = _pyplot()
    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for j in range(3):
        axes[0].plot(traj.times, traj.q[:, j], label=f"q{j + 1}")
        axes[1].plot(traj.times, traj.theta[:, j], label=f"theta{j + 1}")
    axes[0].set_ylabel("position")
    axes[1].set_ylabel("Euler angle")
    axes[1].set_xlabel("t")
    for ax in axes:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    out = _save_svg(fig, path)
    plt.close(fig)
    return out


def plot_convergence_svg(path: Path, sizes, series: dict, xlabel: str = "grid step") -> Path:
    """Residual against resolution on log-log axes with fitted slopes in the legend."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    sizes = np.asarray(sizes, float)
    for name, res in series.items():
        res = np.asarray(res, float)
        slope = np.polyfit(np.log(sizes), np.log(res), 1)[0]
        ax.loglog(sizes, res, "o-", label=f"{name} (slope {slope:.2f})")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("residual")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    out = _save_svg(fig, path)
    plt.close(fig)
    return out


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_hash(manifest: dict) -> str:
    """Hash of the manifest content excluding the runtime section and the hash itself."""
    body = {k: v for k, v in manifest.items() if k not in ("runtime", "wall_clock", "manifest_hash")}
    return hashlib.sha256(json.dumps(_plain(body), sort_keys=True).encode()).hexdigest()


def check_outputs(manifest: dict, root: Path) -> list:
    """Return problems: missing files, digest mismatches or unparsable outputs."""
    problems = []
    for mode, files in manifest.get("outputs", {}).items():
        for rel in files:
            path = root / rel
            if not path.exists():
                problems.append(f"{mode}: missing {rel}")
                continue
            if manifest.get("digests", {}).get(rel) not in (None, file_digest(path)):
                problems.append(f"{mode}: digest mismatch for {rel}")
            try:
                if path.suffix == ".json":
                    json.loads(path.read_text())
                elif path.suffix == ".csv":
                    with path.open() as fh:
                        rows = list(csv.reader(fh))
                    if not rows:
                        raise ValueError("empty csv")
                    [float(v) for row in rows[1:] for v in row]
                elif path.suffix == ".svg":
                    if "<svg" not in path.read_text():
                        raise ValueError("not an svg document")
            except (ValueError, json.JSONDecodeError) as exc:
                problems.append(f"{mode}: cannot parse {rel} ({exc})")
    return problems
