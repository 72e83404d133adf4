"""Command-line entry point.

Subcommands: train, eval, compare, grad-check, export-schedule,
export-model, inspect-checkpoint.  Exit codes: 0 success, 1 config
validation error, 2 runtime/numeric failure.

Output lands under --out when given, else under $PEA_OUT (default
./runs).  Every artifact-producing run writes a manifest.json with the
resolved config, its SHA-256, the seeds used, the kernel backend and
the produced paths, so a run can be replayed byte-exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

import numpy as np

from . import __version__, activations, config as config_mod, gradcheck, kernels
from . import experiment, models, persistence, presets, schedule, training as train_mod
from .errors import ConfigError, PeaError


def _out_root() -> str:
    return os.environ.get("PEA_OUT", "runs")


def _apply_set(doc: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key.path=value, got {assignment!r}")
    key, _, raw = assignment.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def _load_doc(args) -> tuple[dict, str]:
    if getattr(args, "preset", None):
        doc, name = presets.get_preset(args.preset), args.preset
    elif getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}") from None
        name = os.path.splitext(os.path.basename(args.config))[0]
    else:
        raise ConfigError("provide --config PATH or --preset NAME")
    for assignment in getattr(args, "set", None) or ():
        _apply_set(doc, assignment)
    if getattr(args, "seed", None) is not None:
        doc.setdefault("train", {})["seed"] = args.seed
    return doc, name


def _write_manifest(out_dir: str, doc: dict | None, seeds, artifacts: dict) -> None:
    manifest = {
        "argv": sys.argv[1:],
        "package_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "kernel_backend": kernels.BACKEND,
        "config": doc,
        "config_sha256": config_mod.config_digest(doc) if doc is not None else None,
        "seeds": seeds,
        "artifacts": artifacts,
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    doc, name = _load_doc(args)
    exp = config_mod.parse_config(doc)
    out_dir = args.out or os.path.join(_out_root(), name)
    summary = experiment.run_experiment(
        exp, args.runs, out_dir, distinct_seeds=not args.same_seed
    )
    seeds = [r["seed"] for r in summary["runs"]]
    artifacts = {
        "metrics_csv": os.path.join(out_dir, "metrics.csv"),
        "summary": os.path.join(out_dir, "summary.json"),
        "runs": [
            {k: r[k] for k in ("best_checkpoint", "last_checkpoint", "collapsed_export")
             if k in r}
            for r in summary["runs"]
        ],
    }
    _write_manifest(out_dir, doc, seeds, artifacts)
    print(f"{name}: {args.runs} run(s), seeds {seeds}")
    print(f"  best val acc  {summary['best_val_acc_mean']:.4f} "
          f"+/- {summary['best_val_acc_std']:.4f}")
    print(f"  final val acc {summary['final_val_acc_mean']:.4f} "
          f"+/- {summary['final_val_acc_std']:.4f}")
    for r in summary["runs"]:
        if "collapsed_export" in r:
            print(f"  collapsed export: {r['collapsed_export']}")
    print(f"  artifacts under {out_dir}")
    return 0


def cmd_eval(args) -> int:
    doc, _ = _load_doc(args)
    exp = config_mod.parse_config(doc)
    _, val_ds = experiment.load_datasets(exp.data)
    if args.checkpoint:
        model = persistence.restore_model(persistence.load_checkpoint(args.checkpoint))
        source = args.checkpoint
    elif args.model:
        model = persistence.load_exported(args.model)
        source = args.model
    else:
        raise ConfigError("provide --checkpoint or --model")
    metrics = train_mod.evaluate(model, val_ds,
                                 label_smoothing=exp.train.label_smoothing)
    print(json.dumps({"source": source, "val": metrics}, indent=2))
    return 0


def cmd_compare(args) -> int:
    def load(ref, label):
        if os.path.exists(ref):
            with open(ref) as fh:
                doc = json.load(fh)
        else:
            doc = presets.get_preset(ref)
        for assignment in args.set or ():
            _apply_set(doc, assignment)
        return doc, config_mod.parse_config(doc)

    doc_a, exp_a = load(args.config_a, "a")
    doc_b, exp_b = load(args.config_b, "b")
    out_dir = args.out or os.path.join(_out_root(), "compare")
    report = experiment.compare(exp_a, exp_b, args.runs, out_dir)
    _write_manifest(out_dir, {"a": doc_a, "b": doc_b},
                    list(range(exp_a.train.seed, exp_a.train.seed + args.runs)),
                    {"report": os.path.join(out_dir, "compare.json")})
    print(f"A ({args.config_a}): {report['a']['best_val_acc_mean']:.4f} "
          f"+/- {report['a']['best_val_acc_std']:.4f}")
    print(f"B ({args.config_b}): {report['b']['best_val_acc_mean']:.4f} "
          f"+/- {report['b']['best_val_acc_std']:.4f}")
    print(f"mean delta (B-A): {report['mean_delta']:+.4f}  "
          f"pooled std: {report['pooled_std']:.4f}")
    if report["inconclusive"]:
        print("verdict: INCONCLUSIVE (|mean delta| < 2 * pooled std)")
    else:
        print("verdict: difference exceeds 2 * pooled std")
    return 0


_TINY_SPECS = {
    "mlp": dict(architecture="mlp", num_classes=3, image_size=8, hidden=(16,)),
    "small_cnn": dict(architecture="small_cnn", num_classes=3, image_size=8,
                      channels=(4, 4, 4)),
    "tiny_resnet": dict(architecture="tiny_resnet", num_classes=3, image_size=8,
                        channels=(4, 4, 4)),
    "tiny_depthwise": dict(architecture="tiny_depthwise", num_classes=3, image_size=8,
                           channels=(4, 4, 4, 4, 4)),
}

_ALL_KINDS = ("relu", "relu6", "gelu", "swish", "silu", "mish", "elu")


def cmd_grad_check(args) -> int:
    kinds = [args.activation] if args.activation else list(_ALL_KINDS)
    archs = [args.arch] if args.arch else list(_TINY_SPECS)
    abs_tol = args.tolerance
    rows = []
    ok = True

    for name in kinds:
        rep = gradcheck.check_activation(activations.ActivationKind(name), abs_tol=abs_tol)
        rows.append((f"activation/{name}", rep["max_abs_err"], rep["ok"]))
        ok &= rep["ok"]

    sota = next((k for k in kinds if k != "relu"), "gelu")
    for arch in archs:
        for kind in kinds:
            spec = models.ModelSpec(
                activation=models.ActivationSlot(
                    "plain", kind=activations.ActivationKind(kind)),
                **_TINY_SPECS[arch],
            )
            rep = gradcheck.check_model(spec, abs_tol=abs_tol)
            worst = max(r["max_abs_err"] for r in rep["params"].values())
            rows.append((f"{arch}/plain-{kind}", worst, rep["ok"]))
            ok &= rep["ok"]
        for mode in ("weighted", "stochastic"):
            spec = models.ModelSpec(
                activation=models.ActivationSlot(
                    "ensemble", mode=mode, sota=activations.ActivationKind(sota)),
                **_TINY_SPECS[arch],
            )
            rep = gradcheck.check_model(spec, alpha=0.5, abs_tol=abs_tol)
            worst = max(r["max_abs_err"] for r in rep["params"].values())
            rows.append((f"{arch}/ensemble-{mode}-{sota}", worst, rep["ok"]))
            ok &= rep["ok"]

    width = max(len(r[0]) for r in rows)
    print(f"{'check':<{width}}  {'max abs err':>12}  status")
    for label, err, good in rows:
        print(f"{label:<{width}}  {err:>12.3e}  {'ok' if good else 'FAIL'}")
    if not ok:
        print("gradient check FAILED", file=sys.stderr)
        return 2
    return 0


def cmd_export_schedule(args) -> int:
    s = schedule.PhaseSchedule(
        t_init_end=args.init_end,
        t_trans_end=args.trans_end,
        total_epochs=args.epochs,
        granularity=args.granularity,
    )
    if args.out:
        with open(args.out, "w") as fh:
            schedule.write_schedule_csv(s, fh)
        out_dir = os.path.dirname(os.path.abspath(args.out))
        _write_manifest(out_dir, s.describe(), None, {"schedule_csv": args.out})
        print(f"wrote {args.out}")
    else:
        schedule.write_schedule_csv(s, sys.stdout)
    return 0


def cmd_export_model(args) -> int:
    model = persistence.restore_model(persistence.load_checkpoint(args.checkpoint))
    persistence.export_collapsed(model, args.out)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    _write_manifest(out_dir, None, None,
                    {"checkpoint": args.checkpoint, "exported_model": args.out})
    print(f"wrote {args.out}")
    return 0


def cmd_inspect_checkpoint(args) -> int:
    ckpt = persistence.load_checkpoint(args.path)
    meta = dict(ckpt.meta)
    meta.pop("rng", None)  # stream states are bulky and not human-interesting
    blobs = {name: list(arr.shape) for name, arr in ckpt.blobs.items()}
    print(json.dumps({"meta": meta, "blobs": blobs}, indent=2))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pea",
        description="Train networks with progressively annealed ReLU/smooth "
                    "activation ensembles and export pure-ReLU models.",
    )
    ap.add_argument("--version", action="version", version=f"pea {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_config_opts(p, with_seed=True):
        p.add_argument("--config", "-c", help="experiment config JSON path")
        p.add_argument("--preset", "-p", help="named preset (see pea.presets)")
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override a config field (JSON-parsed value)")
        if with_seed:
            p.add_argument("--seed", type=int, help="override train.seed")

    p = sub.add_parser("train", help="run a (multi-seed) training experiment")
    add_config_opts(p)
    p.add_argument("--runs", type=int, default=1, help="number of seeded runs")
    p.add_argument("--same-seed", action="store_true",
                   help="repeat the identical seed instead of seed+0..n-1")
    p.add_argument("--out", help="output directory (default $PEA_OUT/<name>)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or exported model")
    add_config_opts(p, with_seed=False)
    p.add_argument("--checkpoint", help="training checkpoint path")
    p.add_argument("--model", help="exported collapsed model path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="A/B two configurations over matched seeds")
    p.add_argument("config_a", help="config path or preset name")
    p.add_argument("config_b", help="config path or preset name")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                   help="override applied to both configs")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--arch", choices=sorted(_TINY_SPECS))
    p.add_argument("--activation", choices=_ALL_KINDS)
    p.add_argument("--tolerance", type=float, default=gradcheck.ABS_TOL,
                   help="absolute tolerance (relative stays 1e-2)")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("export-schedule", help="emit the alpha schedule as CSV")
    p.add_argument("--init-end", type=float, default=5)
    p.add_argument("--trans-end", type=float, default=115)
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--granularity", choices=(schedule.PER_EPOCH, schedule.PER_STEP),
                   default=schedule.PER_EPOCH)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_export_schedule)

    p = sub.add_parser("export-model", help="collapse a checkpoint to a pure-ReLU model file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_model)

    p = sub.add_parser("inspect-checkpoint", help="print checkpoint header and blob shapes")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect_checkpoint)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except PeaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception:  # noqa: BLE001 - report, then fail with runtime code
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
