"""Run configuration files: a strict, typed key = value format.

One flat namespace with dotted keys (data.grid, loss.method, ...).  Full-line
comments start with #; values are typed by the schema, unknown keys are
rejected outright so a typo cannot silently fall back to a default.  Every
command writes the fully resolved configuration (defaults included) next to
its outputs; `render` emits a canonical form that parses back to the same
values byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config",
           "render_config", "SCHEMA"]


class ConfigError(ValueError):
    """Malformed file, unknown key, or a value of the wrong shape."""


def _parse_bool(s: str) -> bool:
    if s in ("true", "false"):
        return s == "true"
    raise ConfigError(f"expected true/false, got {s!r}")


def _parse_shape(s: str) -> tuple[int, int]:
    parts = s.split("x")
    if len(parts) != 2:
        raise ConfigError(f"expected AxB, got {s!r}")
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"expected AxB with integers, got {s!r}") from None
    if a < 2 or b < 2:
        raise ConfigError(f"grid sides must be >= 2, got {s!r}")
    return a, b


def _parse_floats(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in s.split(",") if p.strip() != "")
    except ValueError:
        raise ConfigError(f"expected comma-separated floats, got {s!r}") from None


def _parse_strs(s: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in s.split(",") if p.strip() != "")


def _parse_resolutions(s: str) -> tuple[tuple[int, ...], ...]:
    """Comma list where each item is either N (square / scaled) or AxB."""
    out = []
    for item in _parse_strs(s):
        if "x" in item:
            out.append(_parse_shape(item))
        else:
            try:
                n = int(item)
            except ValueError:
                raise ConfigError(
                    f"resolution must be N or AxB, got {item!r}") from None
            if n < 2:
                raise ConfigError(f"resolution must be >= 2, got {item!r}")
            out.append((n,))
    return tuple(out)


_CONVERT = {
    "str": str,
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "shape": _parse_shape,
    "floats": _parse_floats,
    "strs": _parse_strs,
    "resolutions": _parse_resolutions,
}

# key -> (type tag, default); None defaults mean "resolved per PDE later"
SCHEMA: dict[str, tuple[str, object]] = {
    "pde": ("str", None),
    "out_dir": ("str", None),
    "data.train_path": ("str", None),
    "data.test_path": ("str", None),
    "data.n_train": ("int", 25),
    "data.n_test": ("int", 50),
    "data.grid": ("shape", None),
    "data.seed": ("int", 11),
    "data.test_seed": ("int", None),
    "data.noise": ("float", 0.0),
    "data.nu": ("float", 0.01),
    "loss.method": ("str", "baseline"),
    "loss.gamma": ("float", 0.1),
    "loss.generators": ("strs", None),
    "loss.include_residual": ("bool", None),
    "loss.traj_weight": ("float", 1.0),
    "loss.bc_weight": ("float", 1.0),
    "train.epochs": ("int", 300),
    "train.batch_size": ("int", 0),
    "train.lr": ("float", 2e-3),
    "train.lr_step": ("int", 100),
    "train.lr_gamma": ("float", 0.5),
    "train.seed": ("int", 0),
    "train.log_every": ("int", 10),
    "net.modes": ("shape", None),
    "net.width": ("int", 16),
    "net.depth": ("int", 4),
    "net.proj_width": ("int", 32),
    "eval.resolutions": ("resolutions", None),
    "ablate.levels": ("floats", (0.0, 0.01, 0.05, 0.1)),
    "ablate.order": ("strs", None),
    "verify.skip": ("bool", False),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict
    from_file: frozenset

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def set(self, key: str, value) -> "RunConfig":
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        vals = dict(self.values)
        vals[key] = value
        return RunConfig(vals, self.from_file)


def parse_config(text: str) -> RunConfig:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, "
                              f"got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        tag, _ = SCHEMA[key]
        try:
            values[key] = _CONVERT[tag](val)
        except ConfigError as ex:
            raise ConfigError(f"line {lineno}: {key}: {ex}") from None
        except ValueError:
            raise ConfigError(
                f"line {lineno}: {key}: expected {tag}, got {val!r}"
            ) from None
    return RunConfig(values, frozenset(seen))


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as ex:
        raise ConfigError(f"cannot read config {path!r}: {ex}") from None
    return parse_config(text)


def _render_value(tag: str, v) -> str:
    if tag == "bool":
        return "true" if v else "false"
    if tag == "shape":
        return f"{v[0]}x{v[1]}"
    if tag == "floats":
        return ",".join(repr(float(x)) for x in v)
    if tag == "strs":
        return ",".join(v)
    if tag == "resolutions":
        return ",".join("x".join(str(n) for n in item) for item in v)
    if tag == "float":
        return repr(float(v))
    return str(v)


def render_config(cfg: RunConfig) -> str:
    """Canonical text: sorted keys, resolved values, no comments.

    Keys whose value is still None (unset optionals) are omitted; everything
    else round-trips through parse_config exactly.
    """
    lines = []
    for key in sorted(SCHEMA):
        v = cfg.values.get(key)
        if v is None:
            continue
        lines.append(f"{key} = {_render_value(SCHEMA[key][0], v)}")
    return "\n".join(lines) + "\n"
