"""Meta-learning task datasets built from simulated time series.

Each simulated run is one task.  For evaluation, the chronological prefix of
a run becomes the labeled context and the remainder becomes the target set;
target inputs carry the speed obtained by integrating the commanded
acceleration forward from the last context observation, never the measured
future speed.  For training, context and target subsets are drawn at random
positions so the model learns to condition on arbitrary snippets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError, TooShortSeriesError
from .scenarios import TimeSeries, load_timeseries, save_timeseries


@dataclass
class TaskDataset:
    """Context/target split of one task; x rows are [delta, v, a_long]."""

    context_x: np.ndarray
    context_y: np.ndarray
    target_x: np.ndarray
    target_y: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class MetaDataset:
    """A pool of task time series with train/validation tags."""

    tasks: list[TimeSeries]
    split: list[str]

    def __post_init__(self):
        if len(self.tasks) < 1 or len(self.tasks) != len(self.split):
            raise ManifestError("dataset must contain tasks with one split tag each")
        if not set(self.split) <= {"train", "val"}:
            raise ManifestError("split tags must be 'train' or 'val'")

    @property
    def K(self) -> int:
        return len(self.tasks)

    def indices(self, tag: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == tag]


def series_inputs(ts: TimeSeries) -> np.ndarray:
    """Measured input rows [delta, v, a_long] of a series."""
    return np.column_stack([ts.delta, ts.v, ts.a_long])


def build_target_inputs(ts: TimeSeries, from_index: int) -> np.ndarray:
    """Target inputs from ``from_index`` on, with the speed channel synthesized.

    The speed is forward Euler-integrated from the last context measurement
    using the commanded acceleration; the measured future speed is never
    consulted.  Integrated speed is clamped at zero like the vehicle's.
    """
    n = len(ts)
    if not 1 <= from_index < n:
        raise IndexError(f"from_index {from_index} out of range for series of length {n}")
    dt = ts.dt
    m = n - from_index
    v_hat = np.empty(m)
    v = float(ts.v[from_index - 1]) + dt * float(ts.a_long[from_index - 1])
    for k in range(m):
        v_hat[k] = max(v, 0.0)
        v = v_hat[k] + dt * float(ts.a_long[from_index + k])
    return np.column_stack([ts.delta[from_index:], v_hat, ts.a_long[from_index:]])


def build_eval_task(ts: TimeSeries, context_fraction: float) -> TaskDataset:
    """Chronological split: prefix context, remainder targets with held truth."""
    if not 0.0 < context_fraction < 1.0:
        raise ValueError("context_fraction must lie in (0, 1)")
    n = len(ts)
    if n < 10:
        raise TooShortSeriesError(f"series of length {n} cannot be split")
    n_ctx = math.ceil(context_fraction * n)
    x = series_inputs(ts)
    return TaskDataset(context_x=x[:n_ctx], context_y=ts.psi_dot[:n_ctx].copy(),
                       target_x=build_target_inputs(ts, n_ctx),
                       target_y=ts.psi_dot[n_ctx:].copy(),
                       meta=dict(ts.meta, n_context=n_ctx))


def sample_training_task(meta: MetaDataset, rng: np.random.Generator, *,
                         context_range: tuple[int, int] = (3, 100),
                         target_count: int = 64) -> TaskDataset:
    """Random task with disjoint random context and target index sets."""
    pool = meta.indices("train")
    if not pool:
        raise ManifestError("dataset has no training tasks")
    ts = meta.tasks[pool[rng.integers(len(pool))]]
    n = len(ts)
    n_lo, n_hi = context_range
    n_hi = min(n_hi, n // 2)
    n_ctx = int(rng.integers(n_lo, n_hi + 1)) if n_hi > n_lo else n_lo
    perm = rng.permutation(n)
    ctx_idx = perm[:n_ctx]
    tgt_idx = perm[n_ctx:n_ctx + min(target_count, n - n_ctx)]
    x = series_inputs(ts)
    return TaskDataset(context_x=x[ctx_idx], context_y=ts.psi_dot[ctx_idx],
                       target_x=x[tgt_idx], target_y=ts.psi_dot[tgt_idx],
                       meta=dict(ts.meta))


def assign_validation(series: list[TimeSeries]) -> list[str]:
    """Tag one instance per scenario kind as validation, the rest as training.

    Instances of a kind share the scenario id prefix before ``+``; the held
    instance rotates deterministically with the kind index.
    """
    by_base: dict[str, list[int]] = {}
    for i, ts in enumerate(series):
        base = str(ts.meta.get("scenario", i)).split("+")[0]
        by_base.setdefault(base, []).append(i)
    split = ["train"] * len(series)
    for k, (base, members) in enumerate(sorted(by_base.items())):
        if len(members) > 1:
            split[members[k % len(members)]] = "val"
    return split


def build_meta(series: list[TimeSeries], split: list[str] | None = None) -> MetaDataset:
    return MetaDataset(series, assign_validation(series) if split is None else split)


# ---------------------------------------------------------------------------
# persistence: a line-oriented manifest plus one CSV per task

MANIFEST_NAME = "manifest.txt"


def save_meta(meta: MetaDataset, root: str | Path) -> Path:
    root = Path(root)
    (root / "tasks").mkdir(parents=True, exist_ok=True)
    lines = []
    for ts, tag in zip(meta.tasks, meta.split):
        ident = str(ts.meta.get("scenario", "task"))
        rel = f"tasks/{ident}.csv"
        save_timeseries(ts, root / rel)
        lines.append(
            f"task {ident} {rel} mu={ts.meta.get('mu')} vehicle={ts.meta.get('vehicle')} "
            f"mass_extra={ts.meta.get('mass_extra', 0.0)} split={tag}")
    manifest = root / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def load_meta(root: str | Path) -> MetaDataset:
    root = Path(root)
    manifest = root / MANIFEST_NAME if root.is_dir() else root
    root = manifest.parent
    if not manifest.exists():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    tasks: list[TimeSeries] = []
    split: list[str] = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 7 or parts[0] != "task":
            raise ManifestError(f"{manifest}:{lineno}: malformed manifest line")
        ident, rel = parts[1], parts[2]
        kv = {}
        for token in parts[3:]:
            if "=" not in token:
                raise ManifestError(f"{manifest}:{lineno}: malformed field {token!r}")
            key, _, val = token.partition("=")
            kv[key] = val
        if kv.get("split") not in ("train", "val"):
            raise ManifestError(f"{manifest}:{lineno}: bad split {kv.get('split')!r}")
        csv_path = root / rel
        if not csv_path.exists():
            raise FileNotFoundError(f"{manifest}:{lineno}: missing task file {csv_path}")
        ts = load_timeseries(csv_path)
        ts.meta.setdefault("scenario", ident)
        ts.meta["mu"] = float(kv["mu"])
        ts.meta["vehicle"] = kv["vehicle"]
        ts.meta["mass_extra"] = float(kv["mass_extra"])
        tasks.append(ts)
        split.append(kv["split"])
    return MetaDataset(tasks, split)
