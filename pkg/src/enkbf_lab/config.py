"""Flat ``key = value`` experiment configuration files.

Values are numbers, double-quoted strings or comma-separated number lists.
Matrices for linear models (``A``, ``H``, ``C``, ``R``) are written row-major
with rows separated by ``;``. Anything after ``#`` is a comment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError
from .model import linear_model, lorenz63_model

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "format_config",
    "write_config_echo",
    "model_for",
    "initial_state",
    "DEFAULT_EPSILONS",
    "LORENZ63_X0",
]

DEFAULT_EPSILONS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)

# End point of a deterministic RK4 spin-up of (1, 1, 1) over t in [0, 20]:
# a point on the attractor, so sweeps start without a transient.
LORENZ63_X0 = (13.79322909, 12.95184711, 34.90163699)

MODELS = ("lorenz63", "linear")

_INT_KEYS = {"m", "n_steps", "record_every", "master_seed", "n_seeds", "m_ref"}
_FLOAT_KEYS = {"dt", "burn_in_fraction", "init_scale"}
_STR_KEYS = {"model", "output_dir"}
_FLOAT_LIST_KEYS = {"epsilon_list", "x0", "b"}
_INT_LIST_KEYS = {"m_list"}
_MATRIX_KEYS = {"A": "a", "H": "h", "C": "c", "R": "r"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Effective configuration of a run; matrices are stored as nested tuples."""

    model: str
    epsilon_list: tuple = DEFAULT_EPSILONS
    m: int = 4
    m_list: tuple | None = None
    dt: float = 2e-4
    n_steps: int = 500_000
    record_every: int | None = None
    burn_in_fraction: float = 0.1
    master_seed: int = 0
    n_seeds: int = 3
    output_dir: str = "results"
    x0: tuple | None = None
    init_scale: float = 10.0
    m_ref: int | None = None
    a: tuple | None = None
    b: tuple | None = None
    h: tuple | None = None
    c: tuple | None = None
    r: tuple | None = None

    def __post_init__(self):
        self._normalize()
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}", "model")
        if not self.epsilon_list:
            raise ConfigError("epsilon_list must not be empty", "epsilon_list")
        if any(not (e > 0 and math.isfinite(e)) for e in self.epsilon_list):
            raise ConfigError("epsilon_list entries must be positive", "epsilon_list")
        if self.m < 2:
            raise ConfigError("m must be at least 2", "m")
        if self.m_list is not None and (not self.m_list or any(m < 2 for m in self.m_list)):
            raise ConfigError("m_list entries must be at least 2", "m_list")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive", "dt")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be positive", "n_steps")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigError("record_every must be at least 1", "record_every")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError("burn_in_fraction must lie in [0, 1)", "burn_in_fraction")
        if self.n_seeds < 0:
            raise ConfigError("n_seeds must be non-negative", "n_seeds")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative", "master_seed")
        if not self.init_scale >= 0:
            raise ConfigError("init_scale must be non-negative", "init_scale")
        if self.m_ref is not None and self.m_ref < 2:
            raise ConfigError("m_ref must be at least 2", "m_ref")
        if self.model == "linear" and self.a is None:
            raise ConfigError("linear model needs A", "A")

    def _normalize(self):
        def put(name, value):
            object.__setattr__(self, name, value)

        put("epsilon_list", tuple(float(e) for e in self.epsilon_list))
        if self.m_list is not None:
            put("m_list", tuple(int(m) for m in self.m_list))
        for name in ("x0", "b"):
            if getattr(self, name) is not None:
                put(name, tuple(float(v) for v in np.ravel(getattr(self, name))))
        for name in ("a", "h", "c", "r"):
            if getattr(self, name) is not None:
                put(name, tuple(tuple(float(v) for v in row) for row in np.atleast_2d(getattr(self, name))))
        for name in ("dt", "burn_in_fraction", "init_scale"):
            put(name, float(getattr(self, name)))

    @property
    def epsilon(self):
        """The first listed epsilon; used by single-run commands."""
        return self.epsilon_list[0]


def _number(text, key, integer):
    if integer:
        try:
            return int(text)
        except ValueError:
            pass  # allow forms like 5e5
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"malformed number {text!r}", key) from None
    if not math.isfinite(value):
        raise ConfigError(f"non-finite number {text!r}", key)
    if integer:
        if value != int(value):
            raise ConfigError(f"expected an integer, got {text!r}", key)
        return int(value)
    return value


def _numbers(text, key, integer=False):
    parts = [p.strip() for p in text.split(",")]
    if any(not p for p in parts):
        raise ConfigError("empty list entry", key)
    return tuple(_number(p, key, integer) for p in parts)


def _matrix(text, key):
    rows = tuple(_numbers(row, key) for row in text.split(";"))
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("matrix rows have different lengths", key)
    return rows


def _string(text, key):
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return text[1:-1]
    if not text or any(ch in text for ch in "\"'= "):
        raise ConfigError(f"malformed string {text!r}", key)
    return text


def parse_config_text(text):
    """Parse configuration text into an :class:`ExperimentConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", line)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", key)
        if not value:
            raise ConfigError(f"missing value for {key!r}", key)
        if key in _STR_KEYS:
            values[key] = _string(value, key)
        elif key in _INT_KEYS:
            values[key] = _number(value, key, True)
        elif key in _FLOAT_KEYS:
            values[key] = _number(value, key, False)
        elif key in _FLOAT_LIST_KEYS:
            values[key] = _numbers(value, key)
        elif key in _INT_LIST_KEYS:
            values[key] = _numbers(value, key, True)
        elif key in _MATRIX_KEYS:
            values[_MATRIX_KEYS[key]] = _matrix(value, key)
        else:
            raise ConfigError(f"unknown key {key!r}", key)
    if "model" not in values:
        raise ConfigError("missing required key 'model'", "model")
    return ExperimentConfig(**values)


def parse_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", "path") from exc
    return parse_config_text(text)


def _fmt(v):
    return repr(v) if isinstance(v, int) else repr(float(v))


def format_config(cfg):
    """Canonical text form of ``cfg``; :func:`parse_config_text` inverts it."""
    rev = {v: k for k, v in _MATRIX_KEYS.items()}
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        key = rev.get(f.name, f.name)
        if f.name in _STR_KEYS:
            text = f'"{value}"'
        elif f.name in rev:
            text = "; ".join(", ".join(_fmt(x) for x in row) for row in value)
        elif isinstance(value, tuple):
            text = ", ".join(_fmt(x) for x in value)
        else:
            text = _fmt(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def write_config_echo(cfg, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_config(cfg))
    return path


def model_for(cfg, epsilon=None):
    """Build the model for one cell.

    For Lorenz-63, ``R = epsilon I``. For linear models ``R`` comes from the
    file unless ``epsilon`` is given, in which case ``R = epsilon I``.
    """
    try:
        if cfg.model == "lorenz63":
            return lorenz63_model(cfg.epsilon if epsilon is None else epsilon)
        a = np.array(cfg.a, dtype=float)
        h = None if cfg.h is None else np.array(cfg.h, dtype=float)
        ny = a.shape[0] if h is None else h.shape[0]
        if epsilon is not None:
            r = float(epsilon) * np.eye(ny)
        elif cfg.r is not None:
            r = np.array(cfg.r, dtype=float)
        else:
            r = cfg.epsilon * np.eye(ny)
        c = None if cfg.c is None else np.array(cfg.c, dtype=float)
        b = None if cfg.b is None else np.array(cfg.b, dtype=float)
        return linear_model(a, b=b, h=h, c=c, r=r)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid model parameters: {exc}", "model") from exc


def initial_state(cfg, nx):
    if cfg.x0 is not None:
        if len(cfg.x0) != nx:
            raise ConfigError(f"x0 must have {nx} entries", "x0")
        return np.array(cfg.x0, dtype=float)
    if cfg.model == "lorenz63":
        return np.array(LORENZ63_X0)
    return np.zeros(nx)

