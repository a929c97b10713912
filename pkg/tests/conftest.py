import os
from pathlib import Path

import pytest

from corpus import memorization_image, patch_corpus

MNIST_DIR = Path(os.environ.get("SUDONET_MNIST_DIR", "/root/data/mnist"))
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _find(name: str) -> Path | None:
    for candidate in (MNIST_DIR / name, MNIST_DIR / (name + ".gz")):
        if candidate.exists():
            return candidate
    return None


@pytest.fixture(scope="session")
def mnist_paths() -> dict[str, Path]:
    found = {k: _find(v) for k, v in MNIST_FILES.items()}
    missing = [MNIST_FILES[k] for k, v in found.items() if v is None]
    if missing:
        pytest.skip(f"MNIST files not found in {MNIST_DIR} (set SUDONET_MNIST_DIR): {missing}")
    return found


@pytest.fixture(scope="session")
def memorization_pgm(tmp_path_factory) -> Path:
    return memorization_image(tmp_path_factory.mktemp("image") / "camera150.pgm")


@pytest.fixture(scope="session")
def image_corpus(tmp_path_factory) -> Path:
    return patch_corpus(tmp_path_factory.mktemp("corpus"), n=800, seed=0)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the acceptance summary, then assert."""

    def record(criterion: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
