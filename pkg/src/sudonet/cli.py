"""Command-line entry point: ``sudonet <task|sweep|render> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import activations as act
from . import experiments as ex
from . import network as nw
from . import report

TASK_COMMANDS = ("parabola", "checkerboard", "regression", "memorize", "autoencode", "mnist")


class UsageError(ValueError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--jobs", type=int, default=1, help="parallel training runs")
    p.add_argument("--board", type=int, default=4, help="checkerboard cells per side")
    p.add_argument("--image", help="grayscale PGM for the memorize task")
    p.add_argument("--mnist-images", help="MNIST training images (IDX, optionally .gz)")
    p.add_argument("--mnist-labels", help="MNIST training labels")
    p.add_argument("--mnist-test-images", help="MNIST test images")
    p.add_argument("--mnist-test-labels", help="MNIST test labels")
    p.add_argument("--corpus", help="directory of PGM images for autoencode")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sudonet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in TASK_COMMANDS:
        p = sub.add_parser(name, help=f"train one {name} cell")
        p.add_argument("--activation", default="tanh", help="tanh | relu | sudo | r-sudo (or sudo-L)")
        p.add_argument("--levels", type=int, help="discretization levels L (>= 2) for sudo / r-sudo")
        p.add_argument("--depth", type=int, default=1 if name == "parabola" else 2, help="hidden layers")
        p.add_argument(
            "--width", type=int, default=2 if name == "parabola" else 1 if name == "autoencode" else 50,
            help="units per hidden layer (network scale for autoencode)",
        )
        p.add_argument("--lr", type=float, action="append",
                       help="learning rate; repeatable (default: 1e-3, 1e-4, 1e-5 with best kept)")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, help="minibatch size (0 = full batch)")
        p.add_argument("--optimizer", choices=("sgd", "adam"))
        p.add_argument("--seed", type=int, default=0, help="seed base")
        p.add_argument("--replicates", type=int, default=1)
        p.add_argument("--resolution", type=int, default=500, help="decision surface size")
        if name == "parabola":
            p.add_argument("--every", type=int, default=100, help="epochs between fit-curve dumps")
        _common(p)

    p = sub.add_parser("sweep", help="run a grid of cells from key = value settings")
    p.add_argument("settings", nargs="+", help="config files and/or key=value overrides, applied in order")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--jobs", type=int, help="parallel training runs (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("render", help="render a saved model")
    p.add_argument("--model", required=True, help="model file written by a task command")
    p.add_argument("--kind", choices=("surface", "reconstruction"), default="surface")
    p.add_argument("--resolution", type=int, default=500)
    p.add_argument("--size", default="150x150", help="reconstruction HEIGHTxWIDTH")
    p.add_argument("--out", default="out")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


# --- config files ---------------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(" ", "").split(",") if x)


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(" ", "").split(",") if x)


def _bool(v: str) -> bool:
    return v.strip().lower() in ("1", "true", "yes", "on")


SWEEP_KEYS = {
    "table", "task", "activations", "depths", "widths", "lrs", "replicates", "epochs",
    "optimizer", "batch_size", "seed", "board", "image", "mnist_images", "mnist_labels",
    "mnist_test_images", "mnist_test_labels", "corpus", "out", "jobs", "rectified",
}


def sweep_from_settings(settings: dict[str, str]) -> tuple[ex.SweepSpec, str, int]:
    unknown = set(settings) - SWEEP_KEYS
    if unknown:
        raise UsageError(f"unknown sweep keys: {', '.join(sorted(unknown))}")
    s = settings
    options = ex.TaskOptions(
        board=int(s.get("board", 4)),
        image=s.get("image"),
        mnist_images=s.get("mnist_images"),
        mnist_labels=s.get("mnist_labels"),
        mnist_test_images=s.get("mnist_test_images"),
        mnist_test_labels=s.get("mnist_test_labels"),
        corpus=s.get("corpus"),
    )
    overrides = dict(
        replicates=int(s["replicates"]) if "replicates" in s else None,
        epochs=int(s["epochs"]) if "epochs" in s else None,
        optimizer=s.get("optimizer"),
        batch_size=int(s["batch_size"]) if "batch_size" in s else None,
        seed_base=int(s.get("seed", 0)),
        options=options,
        depths=_ints(s["depths"]) if "depths" in s else None,
        widths=_ints(s["widths"]) if "widths" in s else None,
        learning_rates=_floats(s["lrs"]) if "lrs" in s else None,
    )
    if "activations" in s:
        overrides["activations"] = tuple(
            act.ActivationKind.parse(a) for a in s["activations"].replace(" ", "").split(",") if a
        )
    rectified = _bool(s.get("rectified", "false"))
    if "table" in s:
        spec = ex.table_sweep(s["table"], rectified, **overrides)
    else:
        if "task" not in s:
            raise UsageError("sweep needs table=<name> or task=<name>")
        kw = {k: v for k, v in overrides.items() if v is not None}
        kw.setdefault("activations", tuple(ex.default_activations(rectified)))
        for need in ("depths", "widths"):
            if need not in kw:
                raise UsageError(f"sweep over task={s['task']} needs {need}=...")
        spec = ex.SweepSpec(task=s["task"], **kw)
    out = s.get("out", f"out/{s.get('table', s.get('task'))}")
    return spec, out, int(s.get("jobs", 1))


def load_settings(items: list[str]) -> dict[str, str]:
    settings: dict[str, str] = {}
    for item in items:
        path = Path(item)
        if "=" in item and not path.exists():
            key, value = item.split("=", 1)
            settings[key.strip().replace("-", "_")] = value.strip()
        elif path.is_file():
            settings.update(parse_config_text(path.read_text()))
        else:
            raise FileNotFoundError(f"config file not found: {item}")
    return settings


# --- commands -------------------------------------------------------------------

def _task_options(args) -> ex.TaskOptions:
    return ex.TaskOptions(
        board=args.board,
        image=args.image,
        mnist_images=args.mnist_images,
        mnist_labels=args.mnist_labels,
        mnist_test_images=args.mnist_test_images,
        mnist_test_labels=args.mnist_test_labels,
        corpus=args.corpus,
    )


def _check_inputs(args) -> None:
    for flag in ("image", "mnist_images", "mnist_labels", "mnist_test_images", "mnist_test_labels", "corpus"):
        value = getattr(args, flag, None)
        if value and not Path(value).exists():
            raise FileNotFoundError(f"--{flag.replace('_', '-')}: no such file or directory: {value}")


def cmd_task(args) -> int:
    try:
        activation = act.ActivationKind.parse(args.activation, args.levels)
    except act.ConfigError as exc:
        raise UsageError(str(exc)) from None
    _check_inputs(args)
    if args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "parabola":
        return _cmd_parabola(args, activation, out)

    spec = ex.SweepSpec(
        task=args.command,
        activations=(activation,),
        depths=(args.depth,),
        widths=(args.width,),
        learning_rates=tuple(args.lr) if args.lr else ex.LEARNING_RATES,
        replicates=args.replicates,
        epochs=args.epochs,
        optimizer=args.optimizer,
        batch_size=args.batch_size,
        seed_base=args.seed,
        options=_task_options(args),
    )
    depth = ex.AUTOENCODE_DEPTH if args.command == "autoencode" else args.depth
    run_log = ex.RunLog(out / "runs.csv")
    task = spec.task_def
    runs, best_net, best_value = [], None, None
    for lr in spec.learning_rates:
        for r in range(spec.replicates):
            record, net = ex.run_one(spec, activation, depth, args.width, lr, r)
            run_log.append(record)
            runs.append(record)
            if net is not None and (best_value is None or task.better(record.metric_value, best_value)):
                best_net, best_value = net, record.metric_value
    means, lr, metric = ex.aggregate(task, runs)
    nw.save(best_net, out / "model.sudn")
    _task_artifacts(args, spec, best_net, out)
    print(f"{args.command} {activation.name} depth={depth} width={args.width} "
          f"lr={lr:g} {task.metric_name}={metric:.6g} (mean of {spec.replicates})")
    return 0


def _task_artifacts(args, spec: ex.SweepSpec, net: nw.Network, out: Path) -> None:
    if args.command == "checkerboard":
        report.write_ppm(out / "surface.ppm", report.render_decision_surface(net, args.resolution))
    elif args.command == "memorize":
        train_ds, _ = ex.load_task_data(spec.task, spec.options)
        shape = train_ds.meta["image_shape"]
        report.write_pgm(out / "reconstruction.pgm", report.render_reconstruction(net, shape))
        report.emit_histogram_csv(ex.collect_activation_histogram(net, train_ds, 8), out / "histogram.csv")


def _cmd_parabola(args, activation, out: Path) -> int:
    lrs = args.lr or [1e-3]
    epochs = args.epochs or ex.TASKS["parabola"].epochs
    run_log = ex.RunLog(out / "runs.csv")
    key = ex.cell_key("parabola", activation, 1, args.width)
    for lr in lrs:
        for r in range(args.replicates):
            seed = ex.run_seed(args.seed, key, r)
            run = ex.run_parabola_demo(args.width, activation, epochs, args.every, lr, seed,
                                       args.optimizer or "sgd")
            final = nw.loss_sse(run.dumps[max(run.dumps)], run.target)
            run_log.append(ex.RunRecord("parabola", activation.name, activation.levels, 1, args.width,
                                        lr, r, seed, epochs, "sse", final, 0.0))
            suffix = f"_lr{lr:g}_r{r}" if len(lrs) * args.replicates > 1 else ""
            report.emit_fit_curve_csv(run.x, run.target, run.dumps, out / f"fit_curve{suffix}.csv")
            nw.save(run.net, out / f"model{suffix}.sudn")
            print(f"parabola {activation.name} units={args.width} lr={lr:g} rep={r} sse={final:.6g}")
    return 0


def cmd_sweep(args) -> int:
    settings = load_settings(args.settings)
    spec, out, jobs = sweep_from_settings(settings)
    out = args.out or out
    jobs = args.jobs or jobs
    results = ex.run_task(spec, out, jobs)
    for r in results:
        print(f"{r.activation.name:>12} depth={r.depth} width={r.width} lr={r.selected_lr:g} "
              f"{spec.task_def.metric_name}={r.metric:.6g}")
    return 0


def cmd_render(args) -> int:
    net = nw.load(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if net.spec.input_dim != 2 or net.spec.output_dim != 1:
        raise UsageError("render needs a model with 2 inputs and 1 output")
    if args.kind == "surface":
        path = out / "surface.ppm"
        report.write_ppm(path, report.render_decision_surface(net, args.resolution))
    else:
        try:
            h, w = (int(v) for v in args.size.lower().split("x"))
        except ValueError:
            raise UsageError(f"--size must look like 150x150, got {args.size!r}") from None
        path = out / "reconstruction.pgm"
        report.write_pgm(path, report.render_reconstruction(net, (h, w)))
    print(path)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in TASK_COMMANDS:
            return cmd_task(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_render(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError, ex.CellFailed) as exc:
        print(f"sudonet: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
