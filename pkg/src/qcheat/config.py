"""Run configuration: an INI ``[run]`` section with a canonical text form."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace

from .initial import KINDS


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _fmt_float(x):
    return repr(float(x))


@dataclass(frozen=True)
class RunConfig:
    model: str = "qh-torus"
    nx: int = 8
    nw: int = 4
    dt: str = "auto"  # "auto" or an explicit step size
    t_min: float = 0.05
    t_max: float = 0.5
    checkpoint_dt: float = 0.0025
    save_every: int = 20  # write every save_every-th checkpoint to disk
    init: str = "mixed"
    seed: int = 1
    k: float = 1.0
    a: tuple = (1.0, 2.0, 8.0)
    c: float = 8.0 / 3.0
    out: str = "qcheat-out"

    def __post_init__(self):
        if self.model != "qh-torus":
            raise ConfigError(f"heat flow runs need model qh-torus, got {self.model!r}")
        if self.init not in KINDS:
            raise ConfigError(f"init must be one of {KINDS}, got {self.init!r}")
        if not 0 < self.t_min <= self.t_max:
            raise ConfigError("need 0 < t_min <= t_max")
        if self.checkpoint_dt <= 0 or self.save_every < 1:
            raise ConfigError("checkpoint_dt must be positive and save_every at least 1")
        if self.dt != "auto":
            try:
                value = float(self.dt)
            except ValueError:
                raise ConfigError(f"dt must be 'auto' or a number, got {self.dt!r}") from None
            if not value > 0:
                raise ConfigError("dt must be positive")
        if self.k < 0 or not self.a:
            raise ConfigError("need k >= 0 and at least one value of a")

    # -- text form -------------------------------------------------------------

    def to_text(self):
        """Canonical INI text: fixed key order, floats in shortest round-trip form."""
        lines = ["[run]"]
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "a":
                v = " ".join(_fmt_float(x) for x in v)
            elif isinstance(v, float):
                v = _fmt_float(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        if not parser.has_section("run"):
            raise ConfigError("missing [run] section")
        return (base or cls()).updated(dict(parser["run"]))

    @classmethod
    def load(cls, path, base=None):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), base)

    def updated(self, values):
        """Copy with string or typed overrides; ``None`` values are ignored."""
        known = {f.name: f for f in fields(self)}
        changes = {}
        for key, v in values.items():
            if v is None:
                continue
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = self._coerce(key, v)
        return replace(self, **changes)

    def _coerce(self, key, v):
        try:
            if key == "a":
                return _floats(v) if isinstance(v, str) else tuple(float(x) for x in v)
            if key in ("nx", "nw", "save_every", "seed"):
                return int(v)
            if key in ("t_min", "t_max", "checkpoint_dt", "k", "c"):
                return float(v)
            return str(v).strip()
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {v!r}") from None

    # -- derived ---------------------------------------------------------------

    @property
    def checkpoint_times(self):
        """Checkpoints from t_min to t_max every checkpoint_dt (inclusive)."""
        count = int(round((self.t_max - self.t_min) / self.checkpoint_dt))
        times = [round(self.t_min + i * self.checkpoint_dt, 12) for i in range(count + 1)]
        if times[-1] < self.t_max - 1e-12:
            times.append(self.t_max)
        return tuple(times)
