"""From raw FDTD record pairs to network-ready vectors, and the on-disk dataset.

A dataset directory looks like::

    dataset/
      config.json            # simulation settings used for every case
      manifest.csv           # id,type,spec,split
      <type>/<case-id>.wpb   # one case file per wall
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import _container
from .errors import ConfigError, InvalidArgument, ParseError
from .fdtd import (DEFAULT_DT, DEFAULT_STEPS, F0, FieldRecord, GridSpec, MediumGrid,
                   ReceiverArray, SourceSpec, run_fdtd)
from .walls import (WALL_KINDS, TargetSpec, DielectricProfile, case_ids, enumerate_dataset,
                    parse_wall, rasterize_medium, rasterize_profile)

log = logging.getLogger(__name__)

DOWNSAMPLE_FACTOR = 20
DOWNSAMPLE_KEEP = 52
TIME_LATENT = 2600
FREQ_LATENT = 100
CASE_MAGIC = "WPB1"
CASE_VERSION = 1


@dataclass(frozen=True, eq=False)
class CalibratedRecord:
    """Scattered field (wall minus free space), ``scattered[k, n]`` at ``t0 + n*dt``."""

    scattered: np.ndarray
    dt: float
    t0: float

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.scattered.shape[1])

    @property
    def receiver_count(self):
        return self.scattered.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CalibratedRecord):
            return NotImplemented
        return (self.dt == other.dt and self.t0 == other.t0
                and np.array_equal(self.scattered, other.scattered))


def calibrate(wall: FieldRecord, freespace: FieldRecord) -> CalibratedRecord:
    if wall.samples.shape != freespace.samples.shape:
        raise InvalidArgument(f"record shapes differ: {wall.samples.shape} vs {freespace.samples.shape}")
    if wall.dt != freespace.dt or wall.t0 != freespace.t0:
        raise InvalidArgument("records have different time axes")
    return CalibratedRecord(wall.samples - freespace.samples, wall.dt, wall.t0)


def downsample(rec: CalibratedRecord, factor=DOWNSAMPLE_FACTOR, keep=DOWNSAMPLE_KEEP) -> np.ndarray:
    """Every ``factor``-th sample from index 0, first ``keep`` per receiver, receiver-major."""
    if factor < 1 or keep < 1:
        raise InvalidArgument("factor and keep must be >= 1")
    n = rec.scattered.shape[1]
    if factor * keep > n:
        raise InvalidArgument(f"{n} samples cannot give {keep} samples at factor {factor}")
    return np.ascontiguousarray(rec.scattered[:, ::factor][:, :keep]).ravel()


def phasors(samples, times, f0=F0, fraction=0.5):
    """Complex amplitude ``a - ib`` of the LS fit ``a cos(wt) + b sin(wt)`` per row.

    Only the final ``fraction`` of the record enters the fit.
    """
    samples = np.atleast_2d(samples)
    n = samples.shape[1]
    period = 1.0 / f0
    span = times[-1] - times[0] if n > 1 else 0.0
    if span < 10 * period:
        raise InvalidArgument(f"record spans {span:g} s, need at least 10 periods of {f0:g} Hz")
    start = n - int(math.floor(n * fraction))
    t = times[start:]
    w = 2 * math.pi * f0
    basis = np.stack([np.cos(w * t), np.sin(w * t)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, samples[:, start:].T, rcond=None)
    return coef[0] - 1j * coef[1]


def extract_phasor(rec: CalibratedRecord, f0=F0) -> np.ndarray:
    """Real parts of every receiver's phasor, then the imaginary parts."""
    p = phasors(rec.scattered, rec.times, f0)
    return np.concatenate([p.real, p.imag])


def make_latent(length, seed) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(int(length))


def time_subset(vec, receivers, n_receivers, keep=DOWNSAMPLE_KEEP):
    """Rows of a receiver-major time vector for the chosen receiver indices."""
    return np.asarray(vec).reshape(n_receivers, keep)[list(receivers)].ravel()


def freq_subset(vec, receivers, n_receivers):
    vec = np.asarray(vec)
    idx = list(receivers)
    return np.concatenate([vec[:n_receivers][idx], vec[n_receivers:][idx]])


def split_dataset(samples, train_frac=0.9, seed=0, key=None):
    """Seeded split stratified by ``key(sample)`` (default: the wall type).

    The training share is ``floor(n * train_frac)``; per-stratum validation
    counts are apportioned by largest remainder. Both lists keep input order.
    """
    samples = list(samples)
    if not samples:
        raise InvalidArgument("cannot split an empty sample list")
    if not 0 < train_frac < 1:
        raise InvalidArgument(f"train_frac must lie in (0, 1), got {train_frac}")
    if key is None:
        key = lambda s: getattr(s, "kind", None) or getattr(getattr(s, "spec", None), "kind", "")
    n = len(samples)
    n_val = n - int(math.floor(n * train_frac + 1e-9))
    groups = {}
    for i, s in enumerate(samples):
        groups.setdefault(key(s), []).append(i)
    names = sorted(groups)
    quotas = {g: len(groups[g]) * n_val / n for g in names}
    alloc = {g: int(math.floor(quotas[g])) for g in names}
    rest = n_val - sum(alloc.values())
    for g in sorted(names, key=lambda g: (-(quotas[g] - alloc[g]), names.index(g)))[:rest]:
        alloc[g] += 1
    rng = np.random.default_rng(seed)
    val_idx = set()
    for g in names:
        idx = np.array(groups[g])
        rng.shuffle(idx)
        val_idx.update(int(i) for i in idx[:alloc[g]])
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


# --- cases -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainingSample:
    input: np.ndarray
    target: DielectricProfile
    spec: object
    id: str


@dataclass(frozen=True, eq=False)
class Case:
    """Everything derived from one simulated wall."""

    id: str
    spec: object
    record: CalibratedRecord
    time_input: np.ndarray
    freq_input: np.ndarray
    target: DielectricProfile
    freespace_phasor: np.ndarray  # free-space incident phasors, same layout as freq_input
    receivers: ReceiverArray
    meta: dict = field(default_factory=dict)

    @property
    def n_receivers(self):
        return len(self.receivers)

    def sample(self, domain):
        if domain == "time":
            vec = self.time_input
        elif domain == "freq":
            vec = self.freq_input
        else:
            raise InvalidArgument(f"domain must be 'time' or 'freq', got {domain!r}")
        return TrainingSample(vec, self.target, self.spec, self.id)

    def __eq__(self, other):
        if not isinstance(other, Case):
            return NotImplemented
        return (self.id == other.id and self.spec == other.spec and self.record == other.record
                and np.array_equal(self.time_input, other.time_input)
                and np.array_equal(self.freq_input, other.freq_input)
                and self.target == other.target
                and np.array_equal(self.freespace_phasor, other.freespace_phasor)
                and self.receivers == other.receivers and self.meta == other.meta)


def _fmt_receivers(rx: ReceiverArray):
    return ";".join(f"{x!r}:{y!r}" for x, y in rx.positions)


def _parse_receivers(text):
    try:
        return ReceiverArray(tuple(tuple(float(v) for v in p.split(":")) for p in text.split(";")))
    except ValueError:
        raise ParseError(f"malformed receiver list {text!r}") from None


def write_case(path, case: Case):
    header = [("id", case.id), ("spec", case.spec.to_line()), ("dt", repr(case.record.dt)),
              ("t0", repr(case.record.t0)), ("receivers", _fmt_receivers(case.receivers))]
    header += [(f"meta.{k}", v) for k, v in sorted(case.meta.items())]
    arrays = [("scattered", case.record.scattered), ("time_input", case.time_input),
              ("freq_input", case.freq_input), ("target", case.target.values),
              ("freespace_phasor", case.freespace_phasor)]
    _container.write(path, CASE_MAGIC, CASE_VERSION, header, arrays)


def read_case(path) -> Case:
    header, arrays = _container.read(path, CASE_MAGIC, CASE_VERSION)
    h = _container.header_dict(header, ("id", "spec", "dt", "t0", "receivers"))
    missing = {"scattered", "time_input", "freq_input", "target", "freespace_phasor"} - set(arrays)
    if missing:
        raise ParseError(f"case file lacks arrays {sorted(missing)}")
    try:
        dt, t0 = float(h["dt"]), float(h["t0"])
    except ValueError:
        raise ParseError("non-numeric dt/t0") from None
    meta = {k[5:]: v for k, v in header if k.startswith("meta.")}
    return Case(id=h["id"], spec=parse_wall(h["spec"]),
                record=CalibratedRecord(arrays["scattered"], dt, t0),
                time_input=arrays["time_input"], freq_input=arrays["freq_input"],
                target=DielectricProfile(arrays["target"]),
                freespace_phasor=arrays["freespace_phasor"],
                receivers=_parse_receivers(h["receivers"]), meta=meta)


# --- simulation ------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Scene settings shared by every case of one dataset."""

    dx: float | None = None
    dt: float = DEFAULT_DT
    steps: int = DEFAULT_STEPS
    n_receivers: int = 10
    standoff: float = 0.2
    source_x: float = 0.0
    source_y: float = 0.5
    frequency: float = F0

    def grid(self):
        return GridSpec.default(dx=self.dx, dt=self.dt)

    def source(self):
        return SourceSpec(position=(self.source_x, self.source_y), frequency=self.frequency)

    def receivers(self):
        return ReceiverArray.default(n=self.n_receivers, standoff=self.standoff)


def simulate_freespace(config: SimConfig) -> FieldRecord:
    grid = config.grid()
    return run_fdtd(grid, MediumGrid.free_space(grid), config.source(), config.receivers(), config.steps)


def build_case(case_id, spec, config: SimConfig, freespace: FieldRecord, target: TargetSpec | None = None,
               meta=None) -> Case:
    grid = config.grid()
    medium = rasterize_medium(spec, grid, target)
    wall = run_fdtd(grid, medium, config.source(), config.receivers(), config.steps)
    rec = calibrate(wall, freespace)
    fs_ph = phasors(freespace.samples, freespace.times, config.frequency)
    meta = dict(meta or {})
    if target is not None:
        meta["target"] = f"{target.center[0]!r}:{target.center[1]!r}:{target.width!r}:{target.height!r}:{target.eps_r!r}"
    return Case(id=case_id, spec=spec, record=rec, time_input=downsample(rec),
                freq_input=extract_phasor(rec, config.frequency), target=rasterize_profile(spec),
                freespace_phasor=np.concatenate([fs_ph.real, fs_ph.imag]),
                receivers=config.receivers(), meta=meta)


def _case_path(root, case_id):
    return os.path.join(root, case_id.split("-")[0], f"{case_id}.wpb")


def _simulate_and_write(args):
    root, case_id, spec, target, config, fs_samples, meta = args
    grid = config.grid()
    free = FieldRecord(fs_samples, grid.dt, grid.dt)
    case = build_case(case_id, spec, config, free, target, meta)
    path = _case_path(root, case_id)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    write_case(path, case)
    return case_id


def _readable(path):
    try:
        read_case(path)
    except (OSError, ParseError):
        return False
    return True


def select_limit(items, limit):
    """``limit`` items spread evenly over ``items`` (all when ``limit`` is None)."""
    if limit is None or limit >= len(items):
        return list(items)
    if limit < 1:
        raise ConfigError("limit must be >= 1")
    idx = sorted(set(np.linspace(0, len(items) - 1, limit).round().astype(int).tolist()))
    return [items[i] for i in idx]


def generate_dataset(out, kinds=WALL_KINDS, config: SimConfig = SimConfig(), seed=0, jobs=1,
                     limit=None, specs=None, ids=None, targets=None, train_frac=0.9, progress=None,
                     resume=False):
    """Simulate and persist a dataset directory; returns the manifest rows.

    ``specs``/``ids``/``targets`` override the enumerated wall list (sweeps use
    this for lossy walls and behind-wall targets). With ``resume``, case files
    that already exist and parse are kept.
    """
    unknown = set(kinds) - set(WALL_KINDS)
    if unknown:
        raise ConfigError(f"unknown wall types {sorted(unknown)}")
    if specs is None:
        specs = enumerate_dataset(kinds=kinds)
        ids = case_ids(specs)
    elif ids is None:
        ids = case_ids(specs)
    targets = list(targets) if targets is not None else [None] * len(specs)
    chosen = select_limit(list(zip(ids, specs, targets)), limit)
    if not chosen:
        raise ConfigError("no cases selected")
    os.makedirs(out, exist_ok=True)
    free = simulate_freespace(config)
    jobs_args = [(out, cid, spec, tgt, config, free.samples, None) for cid, spec, tgt in chosen
                 if not (resume and _readable(_case_path(out, cid)))]
    done = 0
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for _ in pool.map(_simulate_and_write, jobs_args):
                done += 1
                if progress:
                    progress(done, len(jobs_args))
    else:
        for a in jobs_args:
            _simulate_and_write(a)
            done += 1
            if progress:
                progress(done, len(jobs_args))
    entries = [(cid, spec) for cid, spec, _ in chosen]
    train, _ = split_dataset(entries, train_frac, seed, key=lambda e: e[1].kind)
    train_ids = {cid for cid, _ in train}
    rows = [(cid, spec.kind, spec.to_line(), "train" if cid in train_ids else "val") for cid, spec in entries]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "type", "spec", "split"])
    w.writerows(rows)
    with open(os.path.join(out, "manifest.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump({"sim": asdict(config), "seed": seed, "train_frac": train_frac,
                   "kinds": list(kinds), "limit": limit}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rows


class Dataset:
    """Read-side view of a dataset directory."""

    def __init__(self, root):
        self.root = root
        path = os.path.join(root, "manifest.csv")
        try:
            with open(path, encoding="utf-8", newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise ParseError(f"cannot read manifest {path}: {exc}") from None
        if not rows or rows[0] != ["id", "type", "spec", "split"]:
            raise ParseError("manifest header must be id,type,spec,split", line=1)
        self.rows = []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 4 or row[3] not in ("train", "val"):
                raise ParseError(f"malformed manifest row {row!r}", line=lineno)
            self.rows.append(tuple(row))
        cfg_path = os.path.join(root, "config.json")
        self.config = {}
        if os.path.exists(cfg_path):
            with open(cfg_path, encoding="utf-8") as fh:
                self.config = json.load(fh)
        self._cache = {}

    @property
    def sim_config(self):
        return SimConfig(**self.config.get("sim", {}))

    def ids(self, split=None):
        return [r[0] for r in self.rows if split is None or r[3] == split]

    def case(self, case_id) -> Case:
        if case_id not in self._cache:
            self._cache[case_id] = read_case(_case_path(self.root, case_id))
        return self._cache[case_id]

    def cases(self, split=None):
        return [self.case(i) for i in self.ids(split)]


# --- sklearn-style feature transformers ------------------------------------

class TimeFeatures(TransformerMixin, BaseEstimator):
    """Stack of scattered records ``(n, N, T)`` to downsampled time vectors."""

    def __init__(self, factor=DOWNSAMPLE_FACTOR, keep=DOWNSAMPLE_KEEP):
        self.factor = factor
        self.keep = keep

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.stack([downsample(CalibratedRecord(x, 1.0, 0.0), self.factor, self.keep) for x in X])


class FreqFeatures(TransformerMixin, BaseEstimator):
    """Stack of scattered records ``(n, N, T)`` to [Re | Im] phasor vectors."""

    def __init__(self, dt=DEFAULT_DT, t0=DEFAULT_DT, f0=F0):
        self.dt = dt
        self.t0 = t0
        self.f0 = f0

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.stack([extract_phasor(CalibratedRecord(x, self.dt, self.t0), self.f0) for x in X])
