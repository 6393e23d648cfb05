"""``wallprobe`` command line.

Exit codes: 0 success, 2 bad arguments or config, 3 numeric divergence,
4 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import ConfigError, ParseError, WallprobeError

log = logging.getLogger("wallprobe")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _load_vector(path):
    """Field vector from a case file (``.wpb``) or a text file of numbers."""
    from .pipeline import read_case

    if path.endswith(".wpb"):
        return read_case(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    vals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.replace(",", " ").split():
            try:
                vals.append(float(tok))
            except ValueError:
                raise ParseError(f"non-numeric value {tok!r}", line=lineno) from None
    if not vals:
        raise ParseError(f"{path} holds no numbers")
    return np.array(vals)


def cmd_gen_dataset(args):
    from .pipeline import SimConfig, generate_dataset

    kinds = tuple(k.strip() for k in args.types.split(",") if k.strip())
    cfg = SimConfig(dx=args.grid_dx, standoff=args.standoff)
    rows = generate_dataset(args.out, kinds=kinds, config=cfg, seed=args.seed, jobs=args.jobs, limit=args.limit,
                            resume=args.resume,
                            progress=lambda d, n: log.info("simulated %d/%d", d, n))
    print(f"wrote {len(rows)} cases to {args.out}")


def _train_config(args):
    from .gan import TrainConfig

    return TrainConfig(epochs=args.epochs, batch=args.batch, lr=args.lr, dropout=args.dropout, seed=args.seed,
                       latent_seed=args.seed + 1, dropout_seed=args.seed + 2, rec_weight=args.rec_weight,
                       g_loss=args.g_loss, dtype=args.dtype)


def cmd_train(args):
    from .evaluation import train_model
    from .pipeline import Dataset

    ds = Dataset(args.dataset)
    cfg = _train_config(args)

    def progress(epoch, tl):
        log.info("epoch %d d_loss %.4f g_loss %.4f val_nmse %.4f", epoch, tl.d_loss[-1], tl.g_loss[-1],
                 tl.val_nmse[-1])

    bundle, tl = train_model(ds, args.model, cfg, progress=progress)
    bundle.save(args.out)
    tl.to_csv(args.out + ".log.csv")
    print(f"saved {args.out}; final val NMSE {tl.val_nmse[-1]:.4f}; {tl.seconds / 60:.1f} min")


def cmd_invert(args):
    from .evaluation import export_profile
    from .gan import ModelBundle, infer
    from .pipeline import Case

    bundle = ModelBundle.load(args.model)
    src = _load_vector(args.input)
    vec = src.sample(bundle.variant.domain).input if isinstance(src, Case) else src
    prof = infer(bundle, vec, latent_seed=args.latent_seed)
    export_profile(prof, args.out)
    print(f"wrote {args.out}.csv and {args.out}.pgm")


def cmd_classical(args):
    from .classical import invert_case
    from .evaluation import export_profile
    from .pipeline import Case

    src = _load_vector(args.input)
    if not isinstance(src, Case):
        raise ParseError("classical inversion needs a case file (.wpb) holding free-space phasors")
    grid = invert_case(src, args.method, tikhonov_lambda=args.lam, max_iters=args.max_iters)
    export_profile(grid.to_profile(), args.out)
    if grid.info.get("warning"):
        log.warning(grid.info["warning"])
    print(f"wrote {args.out}.csv and {args.out}.pgm")


def cmd_eval(args):
    from .evaluation import run_benchmark

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rep = run_benchmark(args.dataset, methods, models_dir=args.models, report=args.report)
    sys.stdout.write(rep.to_text())


def _read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON in {path}: {exc.msg}", line=exc.lineno, offset=exc.pos) from None


def _cfg_from(conf):
    from .gan import TrainConfig

    keys = ("epochs", "batch", "lr", "dropout", "seed", "rec_weight", "g_loss", "dtype")
    kw = {k: conf[k] for k in keys if k in conf}
    try:
        return TrainConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def cmd_sweep(args):
    from . import evaluation as ev
    from .gan import ModelBundle
    from .pipeline import Dataset
    from .walls import parse_wall

    conf = _read_config(args.config)
    if not isinstance(conf, dict):
        raise ConfigError("sweep config must be a JSON object")
    kind = args.kind
    cfg = _cfg_from(conf)
    if kind in ("receivers", "standoff", "arch", "hyper") and "dataset" not in conf:
        raise ConfigError(f"{kind} sweep needs 'dataset' in the config")
    if kind == "receivers":
        table = ev.sweep_receivers(conf["dataset"], conf.get("counts", ev.RECEIVER_COUNTS),
                                   conf.get("variant", "ANNf"), cfg)
    elif kind == "standoff":
        table = ev.sweep_standoff(conf["dataset"], conf.get("values", ev.STANDOFFS), conf.get("variant", "CNNt"),
                                  cfg, work_dir=conf.get("work_dir"), jobs=int(conf.get("jobs", 1)))
    elif kind in ("lossy", "target"):
        models = conf.get("models")
        if not isinstance(models, dict) or not models:
            raise ConfigError(f"{kind} sweep needs a 'models' mapping of name to bundle path")
        bundles = {name: ModelBundle.load(p) for name, p in models.items()}
        if kind == "lossy":
            if "dataset" in conf:
                ds = Dataset(conf["dataset"])
                walls = [parse_wall(r[2]) for r in ds.rows if r[1] == "airgap" and r[3] == "val"]
            else:
                walls = [parse_wall(w) for w in conf.get("walls", [])]
            table = ev.sweep_lossy(bundles, walls, conf.get("sigmas", ev.SIGMAS), cache_dir=conf.get("work_dir"))
        else:
            wall = parse_wall(conf["wall"]) if "wall" in conf else None
            table = ev.eval_with_target(bundles, wall, cache_dir=conf.get("work_dir"))
    else:
        grid = conf.get("grid")
        if not isinstance(grid, dict):
            raise ConfigError(f"{kind} sweep needs a 'grid' object")
        table = ev.sweep_architecture(conf["dataset"], grid, epochs=int(conf.get("epochs", 50)))
    table.write(args.report)
    sys.stdout.write(table.to_text())


def cmd_import_vna(args):
    from .evaluation import export_profile, import_measurement
    from .gan import ModelBundle, infer

    bundle = ModelBundle.load(args.model)
    if bundle.variant.domain != "freq":
        raise ConfigError(f"measurement import needs a frequency-domain model, got {bundle.variant.tag}")
    vec = import_measurement(args.csv, bundle.variant.field_len // 2)
    prof = infer(bundle, vec, latent_seed=args.latent_seed)
    export_profile(prof, args.out)
    print(f"wrote {args.out}.csv and {args.out}.pgm")


def build_parser():
    p = argparse.ArgumentParser(prog="wallprobe", description="Wall dielectric profile inversion toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="simulate the wall dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--types", default="homo,ylayer,xlayer,airgap")
    g.add_argument("--grid-dx", type=float, default=None)
    g.add_argument("--standoff", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--limit", type=int, default=None, help="simulate an even subset of this many cases")
    g.add_argument("--resume", action="store_true", help="keep readable case files already on disk")
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="train a network on a dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--model", required=True,
                   choices=["gan-annf", "gan-annt", "gan-cnnf", "gan-cnnt", "fcnn-f", "fcnn-t", "cnn-t"])
    t.add_argument("--epochs", type=int, default=1000)
    t.add_argument("--batch", type=int, default=16)
    t.add_argument("--lr", type=float, default=2e-4)
    t.add_argument("--dropout", type=float, default=0.2)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--rec-weight", type=float, default=10.0)
    t.add_argument("--g-loss", choices=["nonsat", "minimax"], default="nonsat")
    t.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("invert", help="run a trained model on one input")
    i.add_argument("--model", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--latent-seed", type=int, default=0)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_invert)

    c = sub.add_parser("classical", help="BP/BAM/BIM inversion of one case")
    c.add_argument("--method", required=True, choices=["bp", "bam", "bim"])
    c.add_argument("--input", required=True)
    c.add_argument("--lambda", dest="lam", type=float, default=None)
    c.add_argument("--max-iters", type=int, default=20)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_classical)

    e = sub.add_parser("eval", help="benchmark methods on the validation split")
    e.add_argument("--dataset", required=True)
    e.add_argument("--methods", required=True)
    e.add_argument("--models", default=None)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="robustness and design sweeps")
    s.add_argument("--kind", required=True, choices=["receivers", "standoff", "lossy", "target", "arch", "hyper"])
    s.add_argument("--config", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("import-vna", help="invert a measured phasor CSV")
    v.add_argument("--csv", required=True)
    v.add_argument("--model", required=True)
    v.add_argument("--latent-seed", type=int, default=0)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_import_vna)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except WallprobeError as exc:
        print(f"wallprobe: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"wallprobe: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
