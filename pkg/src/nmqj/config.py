"""YAML run configuration.

Schema (all times in the model's time unit)::

    seed: 20240917              # required, unsigned 64-bit
    n_members: 100000           # ensemble size N
    time:
      t_max: 6.0
      dt: 1.0e-3
      output_dt: 0.1            # or output_grid: [0.0, 0.5, ...]
      max_jump_prob: 0.1        # optional
      integrator: fourth        # first | fourth
      adaptive_dt: true
    strict: true                # orphaned negative channels raise
    model:
      preset: two_level         # or a general model, see below
      delta: {kind: damped_oscillation, amplitude: 1.0, decay: 0.25, frequency: 2.0}
      lamb_shift: {kind: constant, value: 0.0}     # optional
      initial: superposition    # excited | ground | superposition | state list
    observables:                # optional; two-level default is P_e and P_g
      P_e: [[[0, 0], [0, 0]], [[0, 0], [1, 0]]]
    output:
      dir: runs/example
      record_counts: false
    bench:
      n_members: [1000, 10000, 100000]
      t_max: 0.5

A general model replaces the preset::

    model:
      dim: 3
      hamiltonian: <matrix>
      channels:
        - {label: c1, operator: <matrix>, rate: <rate>}
      initial_state: <state>
      lamb_shift: <rate>                 # optional
      lamb_shift_operator: <matrix>      # optional

Matrices are row-major nested lists of ``[re, im]`` pairs; states are lists of
``[re, im]`` pairs. A bare number is accepted for a real entry. Rates:

* ``{kind: constant, value}``
* ``{kind: piecewise_constant, breakpoints: [...], values: [...]}``
* ``{kind: damped_oscillation, amplitude, decay, frequency, phase}``
* ``{kind: tabulated, file: path.csv}`` (relative to the config file;
  ``package:NAME`` reads a bundled table) or ``{kind: tabulated, times, values}``
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .linalg import SIGMA_MINUS, SIGMA_PLUS, is_hermitian
from .model import (
    Constant,
    DampedOscillation,
    DecayChannel,
    ModelError,
    ModelSpec,
    PiecewiseConstant,
    RateFunction,
    Tabulated,
    build_two_level_model,
    excited_state,
    ground_state,
    load_rate_table,
    superposition_state,
    validate,
)
from .propagator import StepControl

U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    """Schema or validation failure; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class RunConfig:
    model: ModelSpec
    n_members: int
    step: StepControl
    t_max: float
    output_grid: np.ndarray
    seed: int
    observables: dict[str, np.ndarray]
    out_dir: Path | None = None
    strict: bool = True
    adaptive: bool = True
    record_counts: bool = False
    bench_sizes: tuple[int, ...] = (1000, 10000, 100000)
    bench_t_max: float | None = None
    source: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


# --------------------------------------------------------------------------
# field readers


def _get(d: dict, key: str, path: str, default: Any = ..., kind=None):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}".lstrip("."), "required field missing")
        return default
    val = d[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected {getattr(kind, '__name__', kind)}")
    return val


def _number(val, path: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(path, f"expected a number, got {val!r}")
    return float(val)


def _complex(val, path: str) -> complex:
    if isinstance(val, (list, tuple)):
        if len(val) != 2:
            raise ConfigError(path, "complex entries are [re, im] pairs")
        return complex(_number(val[0], path + "[0]"), _number(val[1], path + "[1]"))
    return complex(_number(val, path))


def parse_state(val, path: str) -> np.ndarray:
    if isinstance(val, str):
        named = {"excited": excited_state, "ground": ground_state, "superposition": superposition_state}
        if val not in named:
            raise ConfigError(path, f"unknown state {val!r} (expected one of {sorted(named)})")
        return named[val]()
    if not isinstance(val, list) or not val:
        raise ConfigError(path, "state must be a non-empty list of [re, im] pairs")
    return np.array([_complex(x, f"{path}[{i}]") for i, x in enumerate(val)], dtype=np.complex128)


def parse_matrix(val, path: str, dim: int | None = None) -> np.ndarray:
    if not isinstance(val, list) or not val or not all(isinstance(r, list) for r in val):
        raise ConfigError(path, "matrix must be a list of rows")
    n = len(val)
    if dim is not None and n != dim:
        raise ConfigError(path, f"matrix has {n} rows, model dimension is {dim}")
    out = np.empty((n, n), dtype=np.complex128)
    for i, row in enumerate(val):
        if len(row) != n:
            raise ConfigError(f"{path}[{i}]", f"row has {len(row)} entries, expected {n}")
        for j, x in enumerate(row):
            out[i, j] = _complex(x, f"{path}[{i}][{j}]")
    return out


def _table_path(ref: str, base: Path | None) -> Path:
    if ref.startswith("package:"):
        return Path(str(resources.files("nmqj") / "data" / ref[len("package:"):]))
    p = Path(ref)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


def parse_rate(val, path: str, base: Path | None = None) -> RateFunction:
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return Constant(float(val))
    kind = _get(val, "kind", path, kind=str)
    try:
        if kind == "constant":
            return Constant(_number(_get(val, "value", path), path + ".value"))
        if kind == "piecewise_constant":
            bps = [_number(x, f"{path}.breakpoints[{i}]") for i, x in enumerate(_get(val, "breakpoints", path, kind=list))]
            vals = [_number(x, f"{path}.values[{i}]") for i, x in enumerate(_get(val, "values", path, kind=list))]
            return PiecewiseConstant(bps, vals)
        if kind == "damped_oscillation":
            return DampedOscillation(
                _number(_get(val, "amplitude", path), path + ".amplitude"),
                _number(_get(val, "decay", path), path + ".decay"),
                _number(_get(val, "frequency", path), path + ".frequency"),
                _number(_get(val, "phase", path, 0.0), path + ".phase"),
            )
        if kind == "tabulated":
            if "file" in val:
                ref = _get(val, "file", path, kind=str)
                p = _table_path(ref, base)
                if not p.is_file():
                    raise ConfigError(path + ".file", f"rate table {str(p)!r} not found")
                return load_rate_table(p)
            times = [_number(x, f"{path}.times[{i}]") for i, x in enumerate(_get(val, "times", path, kind=list))]
            vals = [_number(x, f"{path}.values[{i}]") for i, x in enumerate(_get(val, "values", path, kind=list))]
            return Tabulated(times, vals)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(path + ".kind", f"unknown rate kind {kind!r}")


def parse_model(val, path: str = "model", base: Path | None = None) -> ModelSpec:
    if not isinstance(val, dict):
        raise ConfigError(path, "expected a mapping")
    preset = val.get("preset")
    if preset is not None:
        if preset != "two_level":
            raise ConfigError(path + ".preset", f"unknown preset {preset!r}")
        delta = parse_rate(_get(val, "delta", path), path + ".delta", base)
        lamb = val.get("lamb_shift")
        lamb = None if lamb is None else parse_rate(lamb, path + ".lamb_shift", base)
        psi0 = parse_state(_get(val, "initial", path), path + ".initial")
        if psi0.shape != (2,):
            raise ConfigError(path + ".initial", "two-level preset needs a 2-component state")
        return build_two_level_model(delta, lamb, psi0, label=str(val.get("label", "sigma_minus")))

    dim = _get(val, "dim", path, kind=int)
    if dim < 1:
        raise ConfigError(path + ".dim", "dimension must be >= 1")
    h = parse_matrix(_get(val, "hamiltonian", path), path + ".hamiltonian", dim)
    chans = []
    for i, c in enumerate(_get(val, "channels", path, kind=list)):
        cp = f"{path}.channels[{i}]"
        op = parse_matrix(_get(c, "operator", cp), cp + ".operator", dim)
        rate = parse_rate(_get(c, "rate", cp), cp + ".rate", base)
        chans.append(DecayChannel(op, rate, str(c.get("label", f"C{i}"))))
    psi0 = parse_state(_get(val, "initial_state", path), path + ".initial_state")
    lamb = val.get("lamb_shift")
    lamb = None if lamb is None else parse_rate(lamb, path + ".lamb_shift", base)
    lop = val.get("lamb_shift_operator")
    lop = None if lop is None else parse_matrix(lop, path + ".lamb_shift_operator", dim)
    return ModelSpec(dim, h, tuple(chans), psi0, lamb, lop)


def default_observables(model: ModelSpec) -> dict[str, np.ndarray]:
    if model.dim == 2:
        pe = SIGMA_PLUS @ SIGMA_MINUS
        return {"P_e": pe, "P_g": np.eye(2, dtype=np.complex128) - pe}
    return {f"P_{i}": np.diag(np.eye(model.dim)[i]).astype(np.complex128) for i in range(model.dim)}


def _grid(tsec: dict, t_max: float) -> np.ndarray:
    if "output_grid" in tsec:
        g = tsec["output_grid"]
        if not isinstance(g, list) or not g:
            raise ConfigError("time.output_grid", "expected a non-empty list")
        grid = np.array([_number(x, f"time.output_grid[{i}]") for i, x in enumerate(g)])
        if grid[0] != 0.0:
            grid = np.concatenate([[0.0], grid])
        if np.any(np.diff(grid) <= 0):
            raise ConfigError("time.output_grid", "must be strictly ascending")
        if grid[-1] > t_max or grid[0] < 0:
            raise ConfigError("time.output_grid", f"points must lie within [0, t_max={t_max}]")
        return grid
    step = _number(tsec.get("output_dt", t_max / 100), "time.output_dt")
    if not step > 0:
        raise ConfigError("time.output_dt", "must be > 0")
    n = int(round(t_max / step))
    if n < 1 or abs(n * step - t_max) > 1e-9 * max(1.0, t_max):
        raise ConfigError("time.output_dt", f"must divide t_max={t_max} evenly")
    return np.linspace(0.0, t_max, n + 1)


def parse_seed(val, path: str = "seed") -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(path, f"seed must be an integer, got {val!r}")
    if not 0 <= val <= U64_MAX:
        raise ConfigError(path, "seed must be an unsigned 64-bit integer")
    return val


def _bool(val, path: str) -> bool:
    if not isinstance(val, bool):
        raise ConfigError(path, f"expected true/false, got {val!r}")
    return val


def parse_config(text: str, base_dir: Path | str | None = None) -> RunConfig:
    """Parse and validate YAML config text.

    Relative table paths resolve against ``base_dir``. The model is run
    through :func:`nmqj.model.validate` over ``[0, t_max]``.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a mapping")
    base = Path(base_dir) if base_dir is not None else None

    if raw.get("seed") is None:
        raise ConfigError("seed", "seed required")
    seed = parse_seed(raw["seed"])

    n = _get(raw, "n_members", "", kind=int)
    if isinstance(n, bool) or n < 1:
        raise ConfigError("n_members", "N must be >= 1")

    tsec = _get(raw, "time", "", kind=dict)
    t_max = _number(_get(tsec, "t_max", "time"), "time.t_max")
    if not t_max > 0:
        raise ConfigError("time.t_max", "must be > 0")
    dt = _number(_get(tsec, "dt", "time"), "time.dt")
    max_p = _number(tsec.get("max_jump_prob", 0.1), "time.max_jump_prob")
    try:
        step = StepControl(dt, max_p, str(tsec.get("integrator", "fourth")))
    except ValueError as exc:
        raise ConfigError("time", str(exc)) from None
    adaptive = _bool(tsec.get("adaptive_dt", True), "time.adaptive_dt")
    grid = _grid(tsec, t_max)

    model = parse_model(_get(raw, "model", ""), "model", base)
    problems = validate(model, t_max=t_max)
    if problems:
        raise ConfigError("model", "; ".join(problems))

    obs_raw = raw.get("observables")
    if obs_raw is None:
        obs = default_observables(model)
    else:
        if not isinstance(obs_raw, dict) or not obs_raw:
            raise ConfigError("observables", "expected a non-empty mapping name -> matrix")
        obs = {}
        for name, m in obs_raw.items():
            op = parse_matrix(m, f"observables.{name}", model.dim)
            if not is_hermitian(op, 1e-12):
                raise ConfigError(f"observables.{name}", "observable must be Hermitian")
            obs[str(name)] = op

    out = raw.get("output") or {}
    out_dir = out.get("dir")
    if out_dir is not None:
        out_dir = Path(out_dir)
        if not out_dir.is_absolute() and base is not None:
            out_dir = base / out_dir

    bench = raw.get("bench") or {}
    sizes = tuple(int(x) for x in bench.get("n_members", (1000, 10000, 100000)))
    if any(s < 1 for s in sizes):
        raise ConfigError("bench.n_members", "sizes must be >= 1")
    bt = bench.get("t_max")
    if bt is not None:
        bt = _number(bt, "bench.t_max")
        if not 0 < bt <= t_max:
            raise ConfigError("bench.t_max", f"must lie in (0, t_max={t_max}]")

    return RunConfig(
        model=model,
        n_members=n,
        step=step,
        t_max=t_max,
        output_grid=grid,
        seed=seed,
        observables=obs,
        out_dir=out_dir,
        strict=_bool(raw.get("strict", True), "strict"),
        adaptive=adaptive,
        record_counts=_bool(out.get("record_counts", False), "output.record_counts"),
        bench_sizes=sizes,
        bench_t_max=bt,
        raw=raw,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    cfg = parse_config(path.read_text(), base_dir=path.parent)
    cfg.source = path
    return cfg


__all__ = [
    "ConfigError",
    "ModelError",
    "RunConfig",
    "default_observables",
    "load_config",
    "parse_config",
    "parse_matrix",
    "parse_model",
    "parse_rate",
    "parse_state",
]
