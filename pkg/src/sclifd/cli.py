"""Command-line entry point: ``sclifd run | ablate | synth``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
The ``SCLIFD_OUTPUT_DIR`` environment variable overrides the configured
output directory; an explicit ``--output-dir`` flag overrides both.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from sclifd.config import RunConfig, load_config
from sclifd.dataio import BlobConfig, synth_blobs, write_csv
from sclifd.errors import ConfigError, SclifdError
from sclifd.nn import save_encoder
from sclifd.session import CLASSIFIERS, SELECTORS, run_experiment

log = logging.getLogger("sclifd")

OUTPUT_ENV = "SCLIFD_OUTPUT_DIR"

# (use_scl, adaherding, cosine) for each ablation row
ABLATIONS = {
    "iCaRL": (False, False, False),
    "iCaRL-SCL": (True, False, False),
    "iCaRL-AdaHerding": (False, True, False),
    "iCaRL-COS": (False, False, True),
    "iCaRL-SCL-AdaHerding": (True, True, False),
    "SCLIFD": (True, True, True),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_run_flags(p):
    p.add_argument("--config", help="JSON config file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--csv", help="CSV dataset with a 'label' column")
    src.add_argument("--blobs", action="store_true", help="use synthetic Gaussian blobs")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--class-order", type=_int_list)
    p.add_argument("--shot", type=int)
    p.add_argument("--normal-train", type=int)
    p.add_argument("--fault-train", type=int)
    p.add_argument("--test-per-class", type=int)
    p.add_argument("--standardize", action="store_true", default=None)
    p.add_argument("--hidden", type=_int_list, help="hidden layer sizes, e.g. 20")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    scl = p.add_mutually_exclusive_group()
    scl.add_argument("--no-scl", dest="use_scl", action="store_false", default=None)
    scl.add_argument("--scl", dest="use_scl", action="store_true", default=None)
    p.add_argument("--K", "--capacity", dest="capacity", type=int)
    p.add_argument("--selector", choices=SELECTORS)
    p.add_argument("--n-neighbors", type=int)
    p.add_argument("--classifier", choices=CLASSIFIERS)
    p.add_argument("-v", "--verbose", action="store_true")


FLAG_PATHS = {
    "csv": "data.csv",
    "class_order": "data.class_order",
    "shot": "data.shot",
    "normal_train": "data.normal_train",
    "fault_train": "data.fault_train",
    "test_per_class": "data.test_per_class",
    "standardize": "data.standardize",
    "hidden": "model.hidden",
    "embed_dim": "model.embed_dim",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "lr": "train.lr",
    "weight_decay": "train.weight_decay",
    "tau": "loss.tau",
    "lam": "loss.lam",
    "use_scl": "loss.use_scl",
    "capacity": "memory.capacity",
    "selector": "memory.selector",
    "n_neighbors": "memory.n_neighbors",
    "classifier": "classifier",
    "seed": "seed",
}


def build_parser():
    parser = _Parser(prog="sclifd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one incremental experiment")
    _add_run_flags(run)
    ablate = sub.add_parser("ablate", help="run the six-way component ablation grid")
    _add_run_flags(ablate)
    ablate.add_argument("--jobs", type=int, default=1)
    synth = sub.add_parser("synth", help="write a Gaussian-blob CSV")
    synth.add_argument("--out", required=True)
    synth.add_argument("--num-classes", type=int, default=6)
    synth.add_argument("--d", type=int, default=10)
    synth.add_argument("--separation", type=float, default=6.0)
    synth.add_argument("--within-std", type=float, default=1.0)
    synth.add_argument("--samples-per-class", type=int, default=300)
    synth.add_argument("--seed", type=int, default=0)
    return parser


def parse_config(args, environ=None) -> RunConfig:
    """File (or defaults), then the output-dir env var, then explicit flags."""
    environ = os.environ if environ is None else environ
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if environ.get(OUTPUT_ENV):
        overrides["output_dir"] = environ[OUTPUT_ENV]
    for name, dotted in FLAG_PATHS.items():
        value = getattr(args, name, None)
        if value is not None:
            overrides[dotted] = value
    if getattr(args, "blobs", False) and cfg.data.blobs is None:
        overrides["data.blobs"] = {}
    if args.csv is not None:
        overrides["data.blobs"] = None
    elif getattr(args, "blobs", False):
        overrides["data.csv"] = None
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if overrides:
        cfg = cfg.with_overrides(overrides)
    if cfg.data.csv is None and cfg.data.blobs is None:
        raise ConfigError("no dataset: give --csv PATH, --blobs, or a data section", "data")
    return cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _confusion_csv(report) -> str:
    lines = ["true\\pred," + ",".join(str(c) for c in report.classes)]
    for c, row in zip(report.classes, report.confusion):
        lines.append(f"{c}," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_outputs(out_dir, reports, manifest, params) -> dict:
    """Write reports, confusion CSVs, the final encoder and the manifest.

    Returns the ``{file name: sha256}`` map recorded in the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}

    def emit(name, text):
        atomic_write(out / name, text)
        files[name] = _sha256(out / name)

    emit("reports.json", json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
    for r in reports:
        emit(f"confusion_s{r.session}.csv", _confusion_csv(r))
    fd, tmp = tempfile.mkstemp(dir=out, suffix=".tmp")
    os.close(fd)
    try:
        save_encoder(params, tmp)
        os.replace(tmp, out / "encoder.json")
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    files["encoder.json"] = _sha256(out / "encoder.json")
    manifest = {**manifest, "files": files}
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return files


def execute(cfg: RunConfig) -> list[dict]:
    reports, manifest, state = run_experiment(cfg)
    write_outputs(cfg.output_dir, reports, manifest, state.params)
    return [r.to_dict() for r in reports]


def ablation_configs(cfg: RunConfig) -> dict[str, RunConfig]:
    out = {}
    for name, (scl, ada, cos) in ABLATIONS.items():
        out[name] = cfg.with_overrides({
            "loss.use_scl": scl,
            "memory.selector": "adaherding" if ada else "herding",
            "classifier": "cos" if cos else "nme",
            "output_dir": str(Path(cfg.output_dir) / name),
        })
    return out


def _run(args) -> int:
    cfg = parse_config(args)
    reports = execute(cfg)
    for r in reports:
        print(f"session {r['session']}: classes={r['classes']} accuracy={r['accuracy']:.4f}")
    print(f"outputs written to {cfg.output_dir}")
    return 0


def _ablate(args) -> int:
    cfg = parse_config(args)
    grid = ablation_configs(cfg)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = dict(zip(grid, pool.map(execute, grid.values())))
    else:
        results = {name: execute(c) for name, c in grid.items()}
    summary = {
        name: {
            "use_scl": ABLATIONS[name][0],
            "adaherding": ABLATIONS[name][1],
            "cosine": ABLATIONS[name][2],
            "accuracy": [r["accuracy"] for r in reps],
        }
        for name, reps in results.items()
    }
    atomic_write(Path(cfg.output_dir) / "ablation.json", json.dumps(summary, indent=2) + "\n")
    width = max(len(n) for n in summary)
    for name, row in summary.items():
        accs = " ".join(f"{a * 100:6.2f}" for a in row["accuracy"])
        print(f"{name:<{width}}  {accs}")
    return 0


def _synth(args) -> int:
    try:
        bcfg = BlobConfig(args.num_classes, args.d, args.separation, args.within_std,
                          args.samples_per_class, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ds = synth_blobs(bcfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out.parent, suffix=".tmp")
    os.close(fd)
    try:
        write_csv(ds, tmp)
        os.replace(tmp, out)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    print(f"wrote {len(ds)} samples ({args.num_classes} classes, d={args.d}) to {out}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return {"run": _run, "ablate": _ablate, "synth": _synth}[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SclifdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
