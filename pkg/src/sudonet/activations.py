"""Hidden-unit activations: tanh, relu, and the discretized SUDO / R-SUDO units.

A SUDO unit bins ``tanh(x)`` into ``L`` equal-width bins of the range [-1, 1]
and emits one of ``L`` evenly spaced levels. Its backward pass ignores the
binning and returns the tanh derivative (a straight-through estimate). The
rectified variant emits 0, with zero gradient, wherever ``tanh(x) <= 0``.

Scalar functions take and return Python floats; ``apply_forward`` and
``apply_backward`` are the vectorized batch versions and agree with the
scalar functions bit for bit (both evaluate tanh through numpy).
"""

from __future__ import annotations

import enum
import functools
import math
import re
from dataclasses import dataclass

import numpy as np

from .linalg import Matrix


class ConfigError(ValueError):
    """Invalid activation configuration (for example fewer than two levels)."""


class InputError(ValueError):
    """Non-finite input to an activation."""


class Kind(enum.Enum):
    TANH = "tanh"
    RELU = "relu"
    SUDO = "sudo"
    RSUDO = "r-sudo"
    # output-layer kinds
    LINEAR = "linear"
    SOFTMAX = "softmax"


DISCRETE_KINDS = (Kind.SUDO, Kind.RSUDO)


@dataclass(frozen=True)
class ActivationKind:
    kind: Kind
    levels: int = 0

    def __post_init__(self):
        if self.kind in DISCRETE_KINDS:
            if not isinstance(self.levels, (int, np.integer)) or self.levels < 2:
                raise ConfigError(f"{self.kind.value} needs levels L >= 2, got {self.levels!r}")
        elif self.levels:
            raise ConfigError(f"{self.kind.value} does not take a level count")

    @property
    def discrete(self) -> bool:
        return self.kind in DISCRETE_KINDS

    @property
    def name(self) -> str:
        if self.discrete:
            return f"{self.kind.value}-{self.levels}"
        return self.kind.value

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str, levels: int | None = None) -> "ActivationKind":
        """Parse ``tanh``, ``relu``, ``sudo-64``, ``r-sudo-8``, or ``sudo`` with ``levels``."""
        text = text.strip().lower()
        m = re.fullmatch(r"(r-sudo|rsudo|sudo)(?:-(\d+))?", text)
        if m:
            kind = Kind.SUDO if m.group(1) == "sudo" else Kind.RSUDO
            if m.group(2) is not None:
                lv = int(m.group(2))
                if levels is not None and levels != lv:
                    raise ConfigError(f"conflicting level counts in {text!r} and levels={levels}")
            elif levels is None:
                raise ConfigError(f"{text} requires a level count (L >= 2)")
            else:
                lv = int(levels)
            return cls(kind, lv)
        try:
            kind = Kind(text)
        except ValueError:
            raise ConfigError(f"unknown activation {text!r}") from None
        return cls(kind)


TANH = ActivationKind(Kind.TANH)
RELU = ActivationKind(Kind.RELU)
LINEAR = ActivationKind(Kind.LINEAR)
SOFTMAX = ActivationKind(Kind.SOFTMAX)


def sudo(levels: int) -> ActivationKind:
    return ActivationKind(Kind.SUDO, levels)


def rsudo(levels: int) -> ActivationKind:
    return ActivationKind(Kind.RSUDO, levels)


def _check(x: float, levels: int | None = None) -> None:
    if levels is not None and levels < 2:
        raise ConfigError(f"levels L must be >= 2, got {levels}")
    if not math.isfinite(x):
        raise InputError(f"activation input must be finite, got {x!r}")


def _tanh(x: float) -> float:
    # numpy's tanh, so scalar and batch paths round identically
    return float(np.tanh(x))


def _bin_level(u: float, levels: int) -> float:
    # ceil places u exactly on a bin edge into the lower level; the clamp keeps
    # u == -1 from producing an extra level below -1.
    plateau = 2.0 / levels
    k = math.ceil((u + 1.0) / plateau)
    k = min(max(k, 1), levels)
    # == -1 + (k - 1) * 2 / (L - 1), written so that levels are exactly antisymmetric
    return (2 * k - 1 - levels) / (levels - 1)


def sudo_forward(x: float, levels: int) -> float:
    _check(x, levels)
    return _bin_level(_tanh(x), levels)


def sudo_backward(x: float, levels: int) -> float:
    _check(x, levels)
    return tanh_backward(x)


def rsudo_forward(x: float, levels: int) -> float:
    _check(x, levels)
    u = _tanh(x)
    if u <= 0.0:
        return 0.0
    # 1 + u can round to exactly 1 for tiny u; never fall below the first positive-side level
    return max(_bin_level(u, levels), _first_positive_level(levels))


def _first_positive_level(levels: int) -> float:
    k = levels // 2 + 1
    return (2 * k - 1 - levels) / (levels - 1)


def rsudo_backward(x: float, levels: int) -> float:
    _check(x, levels)
    t = _tanh(x)
    if t <= 0.0:
        return 0.0
    return 1.0 - t * t


def tanh_forward(x: float) -> float:
    _check(x)
    return _tanh(x)


def tanh_backward(x: float) -> float:
    _check(x)
    t = _tanh(x)
    return 1.0 - t * t


def relu_forward(x: float) -> float:
    _check(x)
    return x if x > 0.0 else 0.0


def relu_backward(x: float) -> float:
    """Derivative of relu; the subgradient at exactly 0 is taken as 0."""
    _check(x)
    return 1.0 if x > 0.0 else 0.0


def level_values(act: ActivationKind) -> np.ndarray:
    """Every output value a discretized activation can emit, ascending."""
    if not act.discrete:
        raise ConfigError(f"{act.name} has a continuous output range")
    L = act.levels
    k = np.arange(1, L + 1)
    grid = (2 * k - 1 - L) / (L - 1)
    if act.kind is Kind.RSUDO:
        grid = np.concatenate([[0.0], grid[grid > 0]])
    return grid


# Vectorized forms. They mirror the scalar arithmetic step by step so that
# results match the scalar functions exactly.

@functools.lru_cache(maxsize=64)
def _level_table(levels: int) -> np.ndarray:
    # entry k is the output for bin index k; k = 0 only occurs at u == -1 and is clamped to 1
    return np.array([(2 * min(max(k, 1), levels) - 1 - levels) / (levels - 1) for k in range(levels + 1)])


def _bin_levels_vec(u: np.ndarray, levels: int) -> np.ndarray:
    k = u + 1.0
    k /= 2.0 / levels
    np.ceil(k, out=k)
    nan = np.isnan(k)
    if nan.any():
        # keep divergence visible to the caller instead of mapping NaN to a level
        k[nan] = 0.0
        h = _level_table(levels)[k.astype(np.intp)]
        h[nan] = np.nan
        return h
    return _level_table(levels)[k.astype(np.intp)]


def _check_matrix(m: Matrix) -> None:
    if not np.all(np.isfinite(m)):
        raise InputError("activation input contains non-finite values")


def apply_forward(act: ActivationKind, m: Matrix, check: bool = True) -> Matrix:
    if check:
        _check_matrix(m)
    k = act.kind
    if k is Kind.TANH:
        return np.tanh(m)
    if k is Kind.RELU:
        return np.where(m > 0.0, m, 0.0)
    if k is Kind.SUDO:
        return _bin_levels_vec(np.tanh(m), act.levels)
    if k is Kind.RSUDO:
        u = np.tanh(m)
        pos = np.maximum(_bin_levels_vec(u, act.levels), _first_positive_level(act.levels))
        return np.where(u <= 0.0, 0.0, pos)
    if k is Kind.LINEAR:
        return m.copy()
    if k is Kind.SOFTMAX:
        z = m - m.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)
    raise ConfigError(f"unhandled activation {act}")


_TANH_BASED = (Kind.TANH, Kind.SUDO, Kind.RSUDO)


def forward_traced(act: ActivationKind, m: Matrix) -> tuple[Matrix, Matrix | None]:
    """Forward pass that also returns tanh(m) for tanh-based kinds (None otherwise).

    :func:`backward_traced` turns that saved value into the derivative without
    evaluating tanh a second time. Inputs are not checked for finiteness.
    """
    k = act.kind
    if k not in _TANH_BASED:
        return apply_forward(act, m, check=False), None
    u = np.tanh(m)
    if k is Kind.TANH:
        return u, u
    h = _bin_levels_vec(u, act.levels)
    if k is Kind.RSUDO:
        np.maximum(h, _first_positive_level(act.levels), out=h)
        h[u <= 0.0] = 0.0
    return h, u


def backward_traced(act: ActivationKind, pre: Matrix, u: Matrix | None) -> Matrix:
    """Same values as :func:`apply_backward`, reusing tanh(pre) saved by :func:`forward_traced`."""
    if u is None:
        return apply_backward(act, pre, check=False)
    d = u * u
    np.subtract(1.0, d, out=d)
    if act.kind is Kind.RSUDO:
        d[u <= 0.0] = 0.0
    return d


def apply_backward(act: ActivationKind, pre: Matrix, check: bool = True) -> Matrix:
    """Elementwise derivative of the activation with respect to its pre-activation.

    For discretized kinds this is the derivative of the underlying tanh, not of
    the step function. Softmax has no elementwise derivative and is handled
    together with the cross-entropy loss in :mod:`sudonet.network`.
    """
    if check:
        _check_matrix(pre)
    k = act.kind
    if k in (Kind.TANH, Kind.SUDO):
        t = np.tanh(pre)
        return 1.0 - t * t
    if k is Kind.RSUDO:
        t = np.tanh(pre)
        return np.where(t <= 0.0, 0.0, 1.0 - t * t)
    if k is Kind.RELU:
        return np.where(pre > 0.0, 1.0, 0.0)
    if k is Kind.LINEAR:
        return np.ones_like(pre)
    raise ConfigError(f"{act.name} has no elementwise derivative")


def scalar_forward(act: ActivationKind, x: float) -> float:
    k = act.kind
    if k is Kind.TANH:
        return tanh_forward(x)
    if k is Kind.RELU:
        return relu_forward(x)
    if k is Kind.SUDO:
        return sudo_forward(x, act.levels)
    if k is Kind.RSUDO:
        return rsudo_forward(x, act.levels)
    if k is Kind.LINEAR:
        return float(x)
    raise ConfigError(f"{act.name} has no scalar form")


def scalar_backward(act: ActivationKind, x: float) -> float:
    k = act.kind
    if k is Kind.TANH:
        return tanh_backward(x)
    if k is Kind.RELU:
        return relu_backward(x)
    if k is Kind.SUDO:
        return sudo_backward(x, act.levels)
    if k is Kind.RSUDO:
        return rsudo_backward(x, act.levels)
    if k is Kind.LINEAR:
        return 1.0
    raise ConfigError(f"{act.name} has no scalar form")
