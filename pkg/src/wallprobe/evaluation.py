"""Benchmarks, robustness sweeps, measurement import and profile export."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import classical, gan
from .errors import ConfigError, GeometryError, InvalidArgument, ParseError
from .metrics import nmse, nmse_rows
from .pipeline import (DOWNSAMPLE_KEEP, Dataset, SimConfig, build_case, freq_subset, generate_dataset,
                       simulate_freespace, time_subset)
from .walls import (PROFILE_SHAPE, PROFILE_X, PROFILE_Y, WALL_KINDS, AirGap, DielectricProfile, TargetSpec,
                    parse_wall, rasterize_profile)

__all__ = ["nmse", "NmseReport", "run_benchmark", "sweep_receivers", "sweep_standoff", "sweep_lossy",
           "eval_with_target", "sweep_architecture", "import_measurement", "export_profile",
           "read_profile_csv", "nested_receivers", "SweepTable"]

CLASSICAL = ("bp", "bam", "bim")
STANDOFFS = (0.1, 0.2, 0.3)
SIGMAS = (0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
RECEIVER_COUNTS = (2, 4, 6, 8, 10)
# mirror pairs added as the count grows; the first pair is the two end receivers
RECEIVER_PAIRS = ((0, 9), (3, 6), (1, 8), (2, 7), (4, 5))


def _method_key(name):
    name = str(name).lower()
    if name in CLASSICAL:
        return name
    return gan.cli_name(gan.get_variant(name))


# --- reports ---------------------------------------------------------------

@dataclass
class NmseReport:
    rows: list = field(default_factory=list)  # (method, case id, wall type, nmse)
    timings: dict = field(default_factory=dict)  # method -> {"train_min": .., "test_s": ..}

    def add(self, method, case_id, kind, value):
        self.rows.append((method, case_id, kind, float(value)))

    @property
    def methods(self):
        seen = []
        for m, *_ in self.rows:
            if m not in seen:
                seen.append(m)
        return seen

    def values(self, method, kind=None):
        return [v for m, _, k, v in self.rows if m == method and (kind is None or k == kind)]

    def aggregate(self, method, kind=None):
        vals = self.values(method, kind)
        return float(np.mean(vals)) if vals else math.nan

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "case", "type", "nmse"])
        for m, c, k, v in self.rows:
            w.writerow([m, c, k, repr(v)])
        for m in self.methods:
            w.writerow([m, "*", "*", repr(self.aggregate(m))])
        return buf.getvalue()

    def to_text(self):
        kinds = [k for k in WALL_KINDS if any(r[2] == k for r in self.rows)]
        head = ["method", "mean"] + kinds + ["cases"]
        lines = [head]
        for m in self.methods:
            lines.append([m, f"{self.aggregate(m):.4f}"] + [f"{self.aggregate(m, k):.4f}" for k in kinds]
                         + [str(len(self.values(m)))])
        widths = [max(len(r[i]) for r in lines) for i in range(len(head))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in lines) + "\n"

    def timing_text(self):
        out = ["method  train_min  test_s"]
        for m, t in self.timings.items():
            out.append(f"{m}  {t.get('train_min', math.nan):.3f}  {t.get('test_s', math.nan):.4f}")
        return "\n".join(out) + "\n"

    def write(self, path):
        """``path`` gets the CSV; ``path``.txt the aligned table. Timings go to a separate file."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(path + ".txt", "w", encoding="utf-8") as fh:
            fh.write(self.to_text())
        if self.timings:
            with open(path + ".timing.txt", "w", encoding="utf-8") as fh:
                fh.write(self.timing_text())


@dataclass
class SweepTable:
    kind: str
    axis: str
    rows: list = field(default_factory=list)  # (axis value, method, nmse)
    notes: dict = field(default_factory=dict)

    def add(self, value, method, v):
        self.rows.append((value, method, float(v)))

    def value(self, axis_value, method):
        for a, m, v in self.rows:
            if a == axis_value and m == method:
                return v
        raise KeyError((axis_value, method))

    def methods(self):
        return sorted({m for _, m, _ in self.rows})

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.axis, "method", "nmse"])
        for a, m, v in self.rows:
            w.writerow([a, m, repr(v)])
        return buf.getvalue()

    def to_text(self):
        lines = [f"{self.kind} sweep", f"{self.axis:>12}  {'method':<10}  nmse"]
        lines += [f"{str(a):>12}  {m:<10}  {v:.4f}" for a, m, v in self.rows]
        for k, v in self.notes.items():
            lines.append(f"{k}: {v}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(path + ".txt", "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


# --- evaluation core -------------------------------------------------------

def case_vectors(cases, domain, receivers=None):
    """(X, Y) stacks from pipeline cases; ``receivers`` picks a subset of receiver indices."""
    X, Y = [], []
    for c in cases:
        vec = c.time_input if domain == "time" else c.freq_input
        if receivers is not None:
            n = c.n_receivers
            vec = time_subset(vec, receivers, n) if domain == "time" else freq_subset(vec, receivers, n)
        X.append(np.asarray(vec, dtype=float))
        Y.append(c.target.values)
    return np.stack(X), np.stack(Y)


def neural_nmse(bundle, cases, latent_seed=0, receivers=None):
    X, Y = case_vectors(cases, bundle.variant.domain, receivers)
    t0 = time.perf_counter()
    pred = gan.predict_arrays(bundle, X, latent_seed)
    dt = time.perf_counter() - t0
    return nmse_rows(Y, pred), dt


def classical_nmse(method, cases, ops=None, **kw):
    vals = []
    t0 = time.perf_counter()
    for c in cases:
        est = classical.invert_case(c, method, ops=ops, **kw).to_profile()
        vals.append(nmse(c.target, est))
    return np.array(vals), time.perf_counter() - t0


def _model_path(models_dir, method):
    return os.path.join(models_dir, f"{method}.wpm")


def train_model(dataset: Dataset, variant, config: gan.TrainConfig, receivers=None, arch=None, progress=None,
                val_split="val"):
    v = gan.get_variant(variant)
    X, Y = case_vectors(dataset.cases("train"), v.domain, receivers)
    Xv, Yv = case_vectors(dataset.cases(val_split), v.domain, receivers) if dataset.ids(val_split) else (None, None)
    return gan.train_arrays(v, X, Y, Xv, Yv, config, progress, arch)


def load_or_train(dataset, method, models_dir=None, train_config=None, progress=None):
    """Bundle for ``method`` from ``models_dir`` or, when a config is given, trained and saved there."""
    path = _model_path(models_dir, method) if models_dir else None
    if path and os.path.exists(path):
        return gan.ModelBundle.load(path), None
    if train_config is None:
        raise ConfigError(f"no trained model for {method!r}" + (f" in {models_dir}" if models_dir else ""))
    bundle, log = train_model(dataset, method, train_config, progress=progress)
    if path:
        os.makedirs(models_dir, exist_ok=True)
        bundle.save(path)
        log.to_csv(path + ".log.csv")
    return bundle, log


def run_benchmark(dataset, methods, models_dir=None, seeds=(0,), train_config=None, split="val", report=None,
                  progress=None, classical_kw=None) -> NmseReport:
    """Aggregate NMSE per method over the validation split.

    Neural methods load ``<models_dir>/<method>.wpm``; when it is missing and a
    ``train_config`` is given they are trained (and saved) first. ``seeds[0]``
    is the inference latent seed.
    """
    ds = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    if not methods:
        raise ConfigError("no methods requested")
    keys = [_method_key(m) for m in methods]
    cases = ds.cases(split)
    if not cases:
        raise ConfigError(f"dataset has no {split!r} cases")
    rep = NmseReport()
    for key in keys:
        if key in CLASSICAL:
            vals, dt = classical_nmse(key, cases, **(classical_kw or {}))
            train_min = 0.0
        else:
            t0 = time.perf_counter()
            bundle, log = load_or_train(ds, key, models_dir, train_config, progress)
            train_min = (log.seconds / 60.0) if log is not None and log.seconds is not None else math.nan
            vals, dt = neural_nmse(bundle, cases, latent_seed=seeds[0])
        for c, v in zip(cases, vals):
            rep.add(key, c.id, c.spec.kind, v)
        rep.timings[key] = {"train_min": train_min, "test_s": dt}
    if report:
        rep.write(report)
    return rep


# --- sweeps ----------------------------------------------------------------

def nested_receivers(count, n=10):
    """Receiver indices for ``count`` receivers: mirror pairs, nested across counts."""
    count = int(count)
    if n != 10:
        raise InvalidArgument("nested receiver subsets are defined for the 10-receiver array")
    if count > n:
        raise InvalidArgument(f"count {count} exceeds the {n} available receivers")
    if count < 2 or count % 2:
        raise InvalidArgument(f"receiver count must be an even number in [2, {n}], got {count}")
    chosen = [i for pair in RECEIVER_PAIRS[:count // 2] for i in pair]
    return sorted(chosen)


def sweep_receivers(dataset, counts=RECEIVER_COUNTS, variant="ANNf", config=None, latent_seed=0, progress=None):
    ds = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    for c in counts:
        nested_receivers(c)
    cfg = config or gan.TrainConfig()
    v = gan.get_variant(variant)
    table = SweepTable("receivers", "count")
    board = []
    for c in counts:
        rx = nested_receivers(c)
        bundle, _ = train_model(ds, v, cfg, receivers=rx, progress=progress)
        vals, _ = neural_nmse(bundle, ds.cases("val"), latent_seed, receivers=rx)
        table.add(c, v.tag, float(np.mean(vals)))
        board.append(",".join(str(i + 1) for i in rx))
    table.notes["receivers"] = " | ".join(board)
    return table


def _subset_specs(ds: Dataset, split, limit=None):
    ids = ds.ids(split)
    specs = [parse_wall(r[2]) for r in ds.rows if r[0] in set(ids)]
    return ids, specs


def sweep_standoff(dataset, values=STANDOFFS, variant="CNNt", config=None, work_dir=None, limit=None,
                   latent_seed=0, jobs=1, progress=None):
    """Regenerates the dataset's walls at each standoff, retrains, evaluates."""
    ds = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    base = ds.sim_config
    for s in values:
        if not s > 0:
            raise GeometryError(f"standoff {s} m places receivers at or inside the wall face")
    cfg = config or gan.TrainConfig()
    table = SweepTable("standoff", "standoff_m")
    ids = [r[0] for r in ds.rows]
    specs = [parse_wall(r[2]) for r in ds.rows]
    for s in values:
        sim = replace(base, standoff=float(s))
        sim.receivers()  # geometry check before any simulation
        if math.isclose(s, base.standoff):
            sub = ds
        else:
            root = os.path.join(work_dir or ds.root + "-standoff", f"standoff-{s:g}")
            if not os.path.exists(os.path.join(root, "manifest.csv")):
                generate_dataset(root, config=sim, specs=specs, ids=ids, seed=ds.config.get("seed", 0),
                                 jobs=jobs, train_frac=ds.config.get("train_frac", 0.9), resume=True)
            sub = Dataset(root)
        bundle, _ = train_model(sub, variant, cfg, progress=progress)
        vals, _ = neural_nmse(bundle, sub.cases("val"), latent_seed)
        table.add(s, gan.get_variant(variant).tag, float(np.mean(vals)))
    vals = [v for _, _, v in table.rows]
    table.notes["spread"] = repr(max(vals) - min(vals))
    return table


def _simulate_cases(specs, ids, sim: SimConfig, targets=None):
    free = simulate_freespace(sim)
    targets = targets or [None] * len(specs)
    return [build_case(cid, spec, sim, free, tgt) for cid, spec, tgt in zip(ids, specs, targets)]


def sweep_lossy(bundles, walls, sigmas=SIGMAS, sim: SimConfig | None = None, latent_seed=0, cache_dir=None):
    """NMSE of lossless-trained bundles on air-gap walls given conductivity ``sigma``.

    ``walls`` are lossless air-gap specs; truth is their (real) eps profile.
    """
    for s in sigmas:
        if s < 0:
            raise InvalidArgument(f"conductivity must be >= 0, got {s}")
    if not walls:
        raise ConfigError("no air-gap walls given")
    sim = sim or SimConfig()
    table = SweepTable("lossy", "sigma_S_per_m")
    for s in sigmas:
        lossy = [replace(w, sigma=float(s)) for w in walls]
        ids = [f"lossy-{i:04d}" for i in range(len(lossy))]
        cases = _load_or_sim(cache_dir, f"sigma-{s:g}", lossy, ids, sim)
        for name, bundle in bundles.items():
            X, _ = case_vectors(cases, bundle.variant.domain)
            Y = np.stack([rasterize_profile(w).values for w in walls])
            pred = gan.predict_arrays(bundle, X, latent_seed)
            table.add(s, name, float(np.mean(nmse_rows(Y, pred))))
    return table


def _load_or_sim(cache_dir, tag, specs, ids, sim, targets=None):
    if cache_dir is None:
        return _simulate_cases(specs, ids, sim, targets)
    root = os.path.join(cache_dir, tag)
    if not os.path.exists(os.path.join(root, "manifest.csv")):
        generate_dataset(root, config=sim, specs=specs, ids=ids, targets=targets, resume=True)
    ds = Dataset(root)
    by_id = {c.id: c for c in ds.cases()}
    return [by_id[i] for i in ids]


def target_grid(wall, widths=(0.2, 0.3, 0.4, 0.5, 0.6), offsets=(0.3, 0.4, 0.5, 0.6, 0.7), height=0.3,
                eps_r=4.0, x=0.0):
    back = wall.bounds()[3]
    return [TargetSpec((x, back + off), w, height, eps_r) for w in widths for off in offsets]


def eval_with_target(bundles, wall=None, targets=None, sim: SimConfig | None = None, latent_seed=0,
                     cache_dir=None):
    """Mean NMSE per bundle with behind-wall targets, plus the target-free reference."""
    wall = wall or AirGap(4.0, 0.3, 2)
    targets = target_grid(wall) if targets is None else list(targets)
    sim = sim or SimConfig()
    ids = [f"target-{i:02d}" for i in range(len(targets))]
    cases = _load_or_sim(cache_dir, "with-target", [wall] * len(targets), ids, sim, targets)
    clean = _load_or_sim(cache_dir, "no-target", [wall], ["target-none"], sim)
    truth = rasterize_profile(wall).values
    table = SweepTable("target", "setting")
    for name, bundle in bundles.items():
        X, _ = case_vectors(cases, bundle.variant.domain)
        pred = gan.predict_arrays(bundle, X, latent_seed)
        with_t = float(np.mean(nmse_rows(np.broadcast_to(truth, pred.shape), pred)))
        Xc, _ = case_vectors(clean, bundle.variant.domain)
        without = float(nmse_rows(truth[None], gan.predict_arrays(bundle, Xc, latent_seed))[0])
        table.add("target", name, with_t)
        table.add("none", name, without)
    table.notes["cases"] = str(len(targets))
    return table


def hidden_rule(n_in, n_out, hidden):
    """Total hidden nodes between the output and input layer sizes (either order)."""
    total = sum(hidden)
    lo, hi = sorted((n_in, n_out))
    return lo <= total <= hi


# dense layouts explored for the frequency-domain dense GAN
ANNF_GRID = [((128, 256), (64, 32)), ((128, 256), (128, 64)), ((128, 256), (256, 128)), ((128, 256), (512, 256)),
             ((64, 128), (64, 32)), ((64, 128), (128, 64)), ((64, 128), (256, 128)),
             ((256, 512), (512, 256)), ((64, 128, 512), (512, 256))]


def architecture_grid(spec):
    """Expand a grid description into a list of run descriptions.

    ``spec`` keys: ``variant``; optional lists ``dropout``, ``lr``, ``batch``,
    ``arch`` (each an arch override dict, or the string "annf-table").
    """
    if not isinstance(spec, dict) or "variant" not in spec:
        raise ConfigError("architecture grid needs a 'variant' key")
    allowed = {"variant", "dropout", "lr", "batch", "arch", "epochs", "seed"}
    bad = set(spec) - allowed
    if bad:
        raise ConfigError(f"unknown grid keys {sorted(bad)}")
    v = gan.get_variant(spec["variant"])
    arch = spec.get("arch", [None])
    if arch == "annf-table":
        arch = [{"g_hidden": g, "d_hidden": d} for g, d in ANNF_GRID]
    if not isinstance(arch, list):
        raise ConfigError("'arch' must be a list or 'annf-table'")
    runs = []
    try:
        for a in arch:
            for d in spec.get("dropout", [0.2]):
                for lr in spec.get("lr", [2e-4]):
                    for b in spec.get("batch", [16]):
                        runs.append({"variant": v.tag, "arch": a, "dropout": float(d), "lr": float(lr),
                                     "batch": int(b)})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed grid: {exc}") from None
    for r in runs:
        a = r["arch"] or {}
        if "g_hidden" in a and not hidden_rule(v.input_len, gan.N_PIXELS, a["g_hidden"]):
            r["hidden_rule"] = False
        else:
            r["hidden_rule"] = True
    return runs


def sweep_architecture(dataset, grid, epochs=50, seed=0, latent_seed=0, progress=None):
    ds = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    runs = architecture_grid(grid)
    epochs = int(grid.get("epochs", epochs))
    table = SweepTable("architecture", "config")
    for r in runs:
        cfg = gan.TrainConfig(epochs=epochs, batch=r["batch"], lr=r["lr"], dropout=r["dropout"],
                              seed=int(grid.get("seed", seed)))
        bundle, _ = train_model(ds, r["variant"], cfg, arch=r["arch"], progress=progress)
        vals, _ = neural_nmse(bundle, ds.cases("val"), latent_seed)
        label = json.dumps({k: r[k] for k in ("arch", "dropout", "lr", "batch")}, sort_keys=True)
        table.add(label, r["variant"], float(np.mean(vals)))
    return table


# --- measurement import / profile export -----------------------------------

def import_measurement(path, n_receivers=10):
    """Read ``receiver_index, re, im`` rows into a [real block, imag block] vector.

    Rows may come in any order; indices are 1-based. A header line is allowed.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    rows = [(i, r) for i, r in enumerate(rows, start=1) if r and any(x.strip() for x in r)]
    if rows and rows[0][1] and rows[0][1][0].strip().lower() in ("receiver_index", "receiver", "index"):
        rows = rows[1:]
    if len(rows) != n_receivers:
        raise ParseError(f"expected {n_receivers} measurement rows, found {len(rows)}",
                         line=rows[-1][0] if rows else None)
    re_ = np.full(n_receivers, np.nan)
    im_ = np.full(n_receivers, np.nan)
    for lineno, r in rows:
        if len(r) != 3:
            raise ParseError(f"row needs 3 fields (receiver_index, re, im), got {len(r)}", line=lineno)
        try:
            k = int(r[0])
            a, b = float(r[1]), float(r[2])
        except ValueError:
            raise ParseError(f"non-numeric field in {r!r}", line=lineno) from None
        if not (1 <= k <= n_receivers):
            raise ParseError(f"receiver index {k} outside 1..{n_receivers}", line=lineno)
        if not np.isnan(re_[k - 1]):
            raise ParseError(f"receiver {k} listed twice", line=lineno)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ParseError("non-finite value", line=lineno)
        re_[k - 1], im_[k - 1] = a, b
    return np.concatenate([re_, im_])


def export_profile(profile, prefix, eps_range=(1.0, 8.0)):
    """Write ``prefix.csv`` (17 significant digits) and ``prefix.pgm`` (binary 8-bit)."""
    vals = np.asarray(getattr(profile, "values", profile), dtype=float)
    if vals.ndim != 2:
        raise InvalidArgument(f"profile must be 2D, got shape {vals.shape}")
    with open(prefix + ".csv", "w", encoding="utf-8", newline="") as fh:
        for row in vals:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    lo, hi = eps_range
    scaled = np.clip((vals - lo) / (hi - lo), 0.0, 1.0) * 255.0
    pix = np.rint(scaled).astype(np.uint8)
    h, w = pix.shape
    with open(prefix + ".pgm", "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
    return prefix + ".csv", prefix + ".pgm"


def read_profile_csv(path, extent=(PROFILE_X, PROFILE_Y), shape=PROFILE_SHAPE) -> DielectricProfile:
    """Inverse of the CSV half of :func:`export_profile`; ``shape=None`` accepts any grid."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    # every row is newline-terminated, so a missing final newline means a cut file
    if not text.endswith("\n"):
        raise ParseError("profile CSV is truncated (no final newline)", offset=len(text))
    lines = text.splitlines()
    rows = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise ParseError("non-numeric profile entry", line=i) from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParseError("profile CSV must be a non-empty rectangular grid")
    if shape is not None and (len(rows), len(rows[0])) != tuple(shape):
        raise ParseError(f"profile CSV holds a {len(rows)}x{len(rows[0])} grid, expected {shape[0]}x{shape[1]}")
    return DielectricProfile(np.array(rows), extent[0], extent[1])


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    # four header tokens, then exactly one whitespace byte before the pixels
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", offset=pos)
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ParseError("not a binary P5 image", offset=0)
    try:
        w, h, mx = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError("bad PGM header") from None
    data = raw[pos + 1:]
    if mx != 255 or len(data) != w * h:
        raise ParseError(f"PGM payload holds {len(data)} bytes, expected {w * h}", offset=pos + 1)
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)
