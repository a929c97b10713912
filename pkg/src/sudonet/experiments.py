"""Training loop, task definitions, and the learning-rate/replicate sweep harness.

A *cell* is one (task, activation, depth, width) grid point. Each cell trains
``replicates`` networks at every candidate learning rate, picks the learning
rate with the best replicate-mean metric, and reports that mean.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
import threading
import time
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import activations as act
from . import datasets as ds
from . import network as nw
from . import optim
from .activations import ActivationKind
from .datasets import Dataset

log = logging.getLogger(__name__)

LEVELS = (2, 4, 8, 16, 32, 64, 128, 256)
LEARNING_RATES = (1e-3, 1e-4, 1e-5)


class TrainingDiverged(RuntimeError):
    pass


class CellFailed(RuntimeError):
    pass


# --- training -------------------------------------------------------------

@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int | None = None  # None trains full-batch
    seed: int = 0


def train(
    net: nw.Network,
    data: Dataset,
    config: TrainConfig,
    on_epoch: Callable[[int, nw.Network], None] | None = None,
) -> list[float]:
    """Train ``net`` in place and return the summed training loss of each epoch.

    Minibatch order is drawn from a generator seeded with ``config.seed``.
    ``on_epoch(epoch, net)`` is called after every epoch, numbered from 1.
    """
    opt = optim.make(config.optimizer, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    params = net.params()
    n = len(data)
    bs = config.batch_size or n
    x_all = np.asarray(data.inputs, dtype=np.float64)
    y_all = np.asarray(data.targets, dtype=np.float64)
    # validate once so the per-batch passes can skip it
    nw.forward(net, x_all[:1])
    if not np.isfinite(x_all).all():
        raise act.InputError("training inputs contain non-finite values")
    history = []
    for epoch in range(1, config.epochs + 1):
        if bs < n:
            order = rng.permutation(n)
            x_ep, y_ep = x_all[order], y_all[order]
        else:
            x_ep, y_ep = x_all, y_all
        total = 0.0
        for start in range(0, n, bs):
            value, grads = nw.loss_and_grad(
                net, x_ep[start : start + bs], y_ep[start : start + bs], checked=False
            )
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.step(params, grads.flat())
            total += value
        history.append(total)
        if on_epoch is not None:
            on_epoch(epoch, net)
    return history


# --- tasks -------------------------------------------------------------------

@dataclass(frozen=True)
class TaskOptions:
    board: int = 4
    n_train: int = 5000
    data_seed: int = 0
    image: str | None = None
    mnist_images: str | None = None
    mnist_labels: str | None = None
    mnist_test_images: str | None = None
    mnist_test_labels: str | None = None
    corpus: str | None = None
    corpus_test_fraction: float = 0.2


@dataclass(frozen=True)
class Task:
    name: str
    metric_name: str
    higher_is_better: bool
    epochs: int
    batch_size: int | None
    optimizer: str
    load: Callable[[TaskOptions], tuple[Dataset, Dataset]]
    build: Callable[[ActivationKind, int, int], nw.NetworkSpec]
    evaluate: Callable[[nw.Network, Dataset], float]

    def better(self, a: float, b: float) -> bool:
        return a > b if self.higher_is_better else a < b


def sign_accuracy(net: nw.Network, data: Dataset) -> float:
    """Fraction of rows where sign(output) matches the +/-1 target (0 counts as -1)."""
    pred = np.where(net.predict(data.inputs) > 0.0, 1.0, -1.0)
    return float(np.mean(pred == data.targets))


def argmax_accuracy(net: nw.Network, data: Dataset) -> float:
    out = net.predict(data.inputs)
    return float(np.mean(out.argmax(axis=1) == data.targets.argmax(axis=1)))


def sse_metric(net: nw.Network, data: Dataset) -> float:
    return nw.loss_sse(net.predict(data.inputs), data.targets)


def _require(value: str | None, flag: str) -> str:
    if not value:
        raise FileNotFoundError(f"this task needs {flag}")
    return value


def _load_checkerboard(o: TaskOptions):
    return (
        ds.gen_checkerboard(o.n_train, o.board, o.data_seed),
        ds.gen_checkerboard_testgrid(o.board),
    )


def _load_parabola(o: TaskOptions):
    d = ds.gen_parabola(200)
    return d, d


def _load_regression(o: TaskOptions):
    return ds.gen_sincos(100), ds.gen_sincos(101)


def _load_memorize(o: TaskOptions):
    from . import netpbm

    d = ds.gen_memorization(netpbm.read(_require(o.image, "--image")))
    return d, d


def _load_mnist(o: TaskOptions):
    train = ds.load_mnist(_require(o.mnist_images, "--mnist-images"), _require(o.mnist_labels, "--mnist-labels"))
    test = ds.load_mnist(
        _require(o.mnist_test_images, "--mnist-test-images"),
        _require(o.mnist_test_labels, "--mnist-test-labels"),
    )
    return train, test


def _load_autoencode(o: TaskOptions):
    corpus = ds.load_image_dir(_require(o.corpus, "--corpus"), 32)
    return ds.split(corpus, o.corpus_test_fraction, o.data_seed)


AUTOENCODER_HIDDEN = (50, 50, 40, 20, 40, 50, 50)


def autoencoder_spec(activation: ActivationKind, scale: int, pixels: int = 1024) -> nw.NetworkSpec:
    return nw.mlp(pixels, [h * scale for h in AUTOENCODER_HIDDEN], activation, pixels, act.TANH)


TASKS: dict[str, Task] = {
    "parabola": Task(
        "parabola", "sse", False, 2000, None, "sgd", _load_parabola,
        lambda a, d, w: nw.mlp(1, [w] * d, a, 1), sse_metric,
    ),
    "checkerboard": Task(
        "checkerboard", "accuracy", True, 600, 64, "adam", _load_checkerboard,
        lambda a, d, w: nw.mlp(2, [w] * d, a, 1, act.TANH), sign_accuracy,
    ),
    "regression": Task(
        "regression", "sse", False, 400, 16, "adam", _load_regression,
        lambda a, d, w: nw.mlp(2, [w] * d, a, 1), sse_metric,
    ),
    "memorize": Task(
        "memorize", "sse", False, 500, 256, "adam", _load_memorize,
        lambda a, d, w: nw.mlp(2, [w] * d, a, 1, act.TANH), sse_metric,
    ),
    "autoencode": Task(
        # width is the network scale; depth is fixed by the architecture
        "autoencode", "sse", False, 200, 64, "adam", _load_autoencode,
        lambda a, d, w: autoencoder_spec(a, w), sse_metric,
    ),
    "mnist": Task(
        "mnist", "accuracy", True, 30, 64, "adam", _load_mnist,
        lambda a, d, w: nw.mlp(784, [w] * d, a, 10, act.SOFTMAX), argmax_accuracy,
    ),
}

AUTOENCODE_DEPTH = len(AUTOENCODER_HIDDEN)


@functools.lru_cache(maxsize=8)
def load_task_data(task: str, options: TaskOptions) -> tuple[Dataset, Dataset]:
    return TASKS[task].load(options)


# --- sweeps ------------------------------------------------------------------

def default_activations(rectified: bool = False) -> list[ActivationKind]:
    make = act.rsudo if rectified else act.sudo
    return [act.TANH, act.RELU, *(make(L) for L in LEVELS)]


@dataclass(frozen=True)
class SweepSpec:
    task: str
    activations: tuple[ActivationKind, ...]
    depths: tuple[int, ...]
    widths: tuple[int, ...]
    learning_rates: tuple[float, ...] = LEARNING_RATES
    replicates: int = 3
    epochs: int | None = None
    optimizer: str | None = None
    batch_size: int | None = None
    seed_base: int = 0
    options: TaskOptions = field(default_factory=TaskOptions)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        for name in ("activations", "depths", "widths", "learning_rates"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"sweep needs at least one entry in {name}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @property
    def task_def(self) -> Task:
        return TASKS[self.task]

    def train_config(self, lr: float, seed: int) -> TrainConfig:
        t = self.task_def
        return TrainConfig(
            optimizer=self.optimizer or t.optimizer,
            learning_rate=lr,
            epochs=self.epochs if self.epochs is not None else t.epochs,
            batch_size=self.batch_size if self.batch_size is not None else t.batch_size,
            seed=seed,
        )


def cell_key(task: str, activation: ActivationKind, depth: int, width: int) -> str:
    return f"{task}|{activation.name}|{depth}|{width}"


def run_seed(seed_base: int, key: str, replicate: int) -> int:
    """Seed for one replicate; a stable hash of the cell key keeps cells independent."""
    return seed_base + zlib.crc32(key.encode()) + replicate


LOG_COLUMNS = (
    "task", "activation", "levels", "depth", "width", "lr", "replicate",
    "seed", "epochs", "metric_name", "metric_value", "wall_seconds",
)


@dataclass
class RunRecord:
    task: str
    activation: str
    levels: int
    depth: int
    width: int
    lr: float
    replicate: int
    seed: int
    epochs: int
    metric_name: str
    metric_value: float  # nan marks a failed (diverged) run
    wall_seconds: float

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.metric_value)


@dataclass
class ExperimentResult:
    task: str
    activation: ActivationKind
    depth: int
    width: int
    runs: list[RunRecord]
    lr_means: dict[float, float]
    selected_lr: float
    metric: float


def run_one(
    spec: SweepSpec, activation: ActivationKind, depth: int, width: int, lr: float, replicate: int
) -> tuple[RunRecord, nw.Network | None]:
    task = spec.task_def
    train_ds, eval_ds = load_task_data(spec.task, spec.options)
    seed = run_seed(spec.seed_base, cell_key(spec.task, activation, depth, width), replicate)
    config = spec.train_config(lr, seed)
    start = time.perf_counter()
    net = nw.init(task.build(activation, depth, width), seed)
    try:
        train(net, train_ds, config)
        value = task.evaluate(net, eval_ds)
        if not math.isfinite(value):
            raise TrainingDiverged("non-finite evaluation metric")
    except (TrainingDiverged, act.InputError, FloatingPointError) as exc:
        log.warning("run %s lr=%g rep=%d failed: %s", cell_key(spec.task, activation, depth, width), lr, replicate, exc)
        value, net = float("nan"), None
    record = RunRecord(
        spec.task, activation.name, activation.levels, depth, width, lr, replicate, seed,
        config.epochs, task.metric_name, value, time.perf_counter() - start,
    )
    return record, net


def _run_job(args):
    record, _ = run_one(*args)
    return record


def aggregate(task: Task, runs: Sequence[RunRecord]) -> tuple[dict[float, float], float, float]:
    """Replicate means per learning rate, the selected rate, and its mean.

    Failed runs are excluded; a learning rate with no successful run is skipped.
    Ties keep the earlier (larger) learning rate.
    """
    by_lr: dict[float, list[float]] = {}
    for r in runs:
        by_lr.setdefault(r.lr, [])
        if not r.failed:
            by_lr[r.lr].append(r.metric_value)
    means = {lr: float(np.mean(v)) for lr, v in by_lr.items() if v}
    if not means:
        raise CellFailed("every run in the cell failed")
    best = None
    for lr, m in means.items():
        if best is None or task.better(m, means[best]):
            best = lr
    return means, best, means[best]


def _make_result(spec: SweepSpec, activation, depth, width, runs) -> ExperimentResult:
    means, best, metric = aggregate(spec.task_def, runs)
    return ExperimentResult(spec.task, activation, depth, width, list(runs), means, best, metric)


class RunLog:
    """Append-only CSV of per-run records; writes are serialized with a lock."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with self.path.open("w", newline="") as f:
                csv.writer(f).writerow(LOG_COLUMNS)

    def append(self, record: RunRecord) -> None:
        row = [getattr(record, c) for c in LOG_COLUMNS]
        with self._lock, self.path.open("a", newline="") as f:
            csv.writer(f).writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_log(path: str | Path) -> list[RunRecord]:
    types = {f.name: f.type for f in fields(RunRecord)}
    out = []
    with Path(path).open(newline="") as f:
        for row in csv.DictReader(f):
            kw = {}
            for k, v in row.items():
                t = types[k]
                kw[k] = int(v) if t == "int" else float(v) if t == "float" else v
            out.append(RunRecord(**kw))
    return out


def recount(path: str | Path) -> dict[tuple[str, str, int, int], tuple[float, float]]:
    """Recompute (selected lr, cell metric) for every cell from a persisted run log."""
    cells: dict[tuple[str, str, int, int], list[RunRecord]] = {}
    for r in read_log(path):
        cells.setdefault((r.task, r.activation, r.depth, r.width), []).append(r)
    out = {}
    for key, runs in cells.items():
        _, best, metric = aggregate(TASKS[key[0]], runs)
        out[key] = (best, metric)
    return out


def _jobs_for(spec: SweepSpec, activation, depth, width):
    for lr in spec.learning_rates:
        for r in range(spec.replicates):
            yield (spec, activation, depth, width, lr, r)


def run_cell(
    spec: SweepSpec, activation: ActivationKind, depth: int, width: int, run_log: RunLog | None = None
) -> ExperimentResult:
    runs = []
    for job in _jobs_for(spec, activation, depth, width):
        record = _run_job(job)
        if run_log is not None:
            run_log.append(record)
        runs.append(record)
    return _make_result(spec, activation, depth, width, runs)


def cells(spec: SweepSpec) -> list[tuple[ActivationKind, int, int]]:
    depths = (AUTOENCODE_DEPTH,) if spec.task == "autoencode" else spec.depths
    return [(a, d, w) for d in depths for a in spec.activations for w in spec.widths]


def run_task(spec: SweepSpec, out_dir: str | Path | None = None, jobs: int = 1) -> list[ExperimentResult]:
    """Run every cell of the sweep; write ``runs.csv`` and per-depth tables under ``out_dir``."""
    grid = cells(spec)
    if spec.task == "autoencode" and (act.TANH, AUTOENCODE_DEPTH, 1) not in grid:
        grid.append((act.TANH, AUTOENCODE_DEPTH, 1))  # baseline for relative SSE
    run_log = RunLog(Path(out_dir) / "runs.csv") if out_dir is not None else None
    all_jobs = [job for c in grid for job in _jobs_for(spec, *c)]
    by_cell: dict[tuple, list[RunRecord]] = {c: [] for c in grid}

    def collect(record: RunRecord, job):
        if run_log is not None:
            run_log.append(record)
        by_cell[(job[1], job[2], job[3])].append(record)

    if jobs <= 1:
        for job in all_jobs:
            collect(_run_job(job), job)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_job, job): job for job in all_jobs}
            for fut in as_completed(futures):
                collect(fut.result(), futures[fut])

    results = []
    for c in grid:
        runs = sorted(by_cell[c], key=lambda r: (-r.lr, r.replicate))
        results.append(_make_result(spec, *c, runs))
    if out_dir is not None:
        write_tables(spec, results, out_dir)
    return results


def relative_metrics(results: Sequence[ExperimentResult]) -> dict[tuple[str, int, int], float]:
    """Cell metric divided by the tanh, scale-1 cell (autoencoding convention)."""
    base = next(
        (r for r in results if r.activation == act.TANH and r.width == 1), None
    )
    if base is None:
        raise ValueError("relative metrics need the tanh, scale 1 baseline cell")
    return {(r.activation.name, r.depth, r.width): r.metric / base.metric for r in results}


def table_rows(results: Sequence[ExperimentResult], depth: int, value=None) -> tuple[list[int], list[list]]:
    value = value or (lambda r: r.metric)
    widths = sorted({r.width for r in results if r.depth == depth})
    names = []
    for r in results:
        if r.depth == depth and r.activation.name not in names:
            names.append(r.activation.name)
    lookup = {(r.activation.name, r.width): value(r) for r in results if r.depth == depth}
    rows = [[n, *(lookup.get((n, w), "") for w in widths)] for n in names]
    return widths, rows


def write_table(path: str | Path, widths: Sequence[int], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["activation", *widths])
        for row in rows:
            w.writerow([row[0], *(repr(v) if isinstance(v, float) else v for v in row[1:])])


def read_table(path: str | Path) -> tuple[list[int], dict[str, list[float]]]:
    with Path(path).open(newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        widths = [int(w) for w in header[1:]]
        rows = {r[0]: [float(v) if v else float("nan") for v in r[1:]] for r in reader}
    return widths, rows


def write_tables(spec: SweepSpec, results: Sequence[ExperimentResult], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for depth in sorted({r.depth for r in results}):
        path = out_dir / f"{spec.task}_depth{depth}.csv"
        write_table(path, *table_rows(results, depth))
        written.append(path)
    if spec.task == "autoencode":
        rel = relative_metrics(results)
        path = out_dir / "autoencode_relative.csv"
        write_table(
            path,
            *table_rows(results, AUTOENCODE_DEPTH, lambda r: rel[(r.activation.name, r.depth, r.width)]),
        )
        written.append(path)
    return written


# --- named result tables ---------------------------------------------------------

CHECKER_WIDTHS = (5, 10, 50, 100, 200)
MNIST_WIDTHS = (2, 3, 4, 10, 50, 100)

TABLES: dict[str, dict] = {
    "checkerboard1": dict(task="checkerboard", depths=(1,), widths=CHECKER_WIDTHS, replicates=3),
    "checkerboard2": dict(task="checkerboard", depths=(2,), widths=CHECKER_WIDTHS, replicates=3),
    "checkerboard4": dict(task="checkerboard", depths=(4,), widths=CHECKER_WIDTHS, replicates=3),
    "regression2": dict(task="regression", depths=(2,), widths=(10, 20, 50), replicates=5),
    "regression4": dict(task="regression", depths=(4,), widths=(10, 20, 50), replicates=5),
    "memorize1": dict(task="memorize", depths=(1,), widths=(50, 100, 200), replicates=3),
    "memorize2": dict(task="memorize", depths=(2,), widths=(50, 100, 200), replicates=3),
    "memorize4": dict(task="memorize", depths=(4,), widths=(50, 100, 200), replicates=3),
    "memorize10": dict(task="memorize", depths=(10,), widths=(50, 100, 200), replicates=3),
    "autoencode": dict(task="autoencode", depths=(AUTOENCODE_DEPTH,), widths=(1, 2, 4, 8), replicates=3),
    "mnist1": dict(task="mnist", depths=(1,), widths=MNIST_WIDTHS, replicates=5),
    "mnist4": dict(task="mnist", depths=(4,), widths=MNIST_WIDTHS, replicates=5),
}


def table_sweep(name: str, rectified: bool = False, **overrides) -> SweepSpec:
    """Sweep for one of the named table layouts; ``rectified`` swaps in R-SUDO rows."""
    if name not in TABLES:
        raise ValueError(f"unknown table {name!r}; known: {', '.join(TABLES)}")
    kw = dict(TABLES[name], activations=default_activations(rectified))
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return SweepSpec(**kw)


# --- parabola demo and activation histograms ----------------------------------------

@dataclass
class ParabolaRun:
    x: np.ndarray
    target: np.ndarray
    dumps: dict[int, np.ndarray]  # epoch -> predictions over x
    losses: list[float]
    net: nw.Network


def run_parabola_demo(
    units: int,
    activation: ActivationKind,
    epochs: int = 2000,
    every: int = 100,
    learning_rate: float = 1e-3,
    seed: int = 0,
    optimizer: str = "sgd",
) -> ParabolaRun:
    """One hidden layer, linear output; snapshot predictions every ``every`` epochs (and at 0)."""
    data = ds.gen_parabola(200)
    net = nw.init(nw.mlp(1, [units], activation, 1), seed)
    dumps = {0: net.predict(data.inputs).ravel()}

    def snap(epoch, n):
        if epoch % every == 0 or epoch == epochs:
            dumps[epoch] = n.predict(data.inputs).ravel()

    losses = train(net, data, TrainConfig(optimizer, learning_rate, epochs, None, seed), snap)
    return ParabolaRun(data.inputs.ravel(), data.targets.ravel(), dumps, losses, net)


@dataclass
class Histogram:
    labels: list[str]
    counts: np.ndarray
    levels: np.ndarray | None = None  # exact level values when bucketing by level
    edges: np.ndarray | None = None   # bin edges otherwise


def hidden_outputs(net: nw.Network, data: Dataset) -> list[np.ndarray]:
    _, trace = nw.forward(net, data.inputs)
    return trace.post[:-1]


def collect_activation_histogram(net: nw.Network, data: Dataset, bins: int = 8) -> Histogram:
    """Histogram of every hidden-unit output over every row of ``data``.

    When all hidden layers share one discretized kind with at most ``bins``
    levels, buckets are the exact levels; otherwise ``bins`` equal-width bins
    over [-1, 1] (or [0, max] for relu).
    """
    outs = hidden_outputs(net, data)
    if not outs:
        raise ValueError("network has no hidden layers")
    values = np.concatenate([o.ravel() for o in outs])
    kinds = {layer.activation for layer in net.spec.hidden}
    only = next(iter(kinds)) if len(kinds) == 1 else None
    if only is not None and only.discrete and len(act.level_values(only)) <= bins:
        levels = act.level_values(only)
        idx = np.searchsorted(levels, values)
        idx = np.clip(idx, 0, len(levels) - 1)
        # snap to the nearest level in case of rounding
        left = np.clip(idx - 1, 0, len(levels) - 1)
        idx = np.where(np.abs(levels[left] - values) < np.abs(levels[idx] - values), left, idx)
        counts = np.bincount(idx, minlength=len(levels))
        return Histogram([f"{v:.6g}" for v in levels], counts, levels=levels)
    if only is not None and only.kind is act.Kind.RELU:
        hi = float(values.max()) if values.size and values.max() > 0 else 1.0
        edges = np.linspace(0.0, hi, bins + 1)
    else:
        edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    labels = [f"[{a:.4g},{b:.4g}{']' if i == bins - 1 else ')'}" for i, (a, b) in enumerate(zip(edges, edges[1:]))]
    return Histogram(labels, counts, edges=edges)


def summary(results: Sequence[ExperimentResult]) -> list[dict]:
    return [
        dict(
            task=r.task, activation=r.activation.name, depth=r.depth, width=r.width,
            selected_lr=r.selected_lr, metric=r.metric,
        )
        for r in results
    ]
