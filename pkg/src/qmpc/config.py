"""Key-value run configuration.

One ``key = value`` per line; ``#`` starts a comment. Unknown keys are an
error so typos do not silently fall back to defaults. Example::

    n = 32
    epsilon = 0.01
    seed = 7
    scheduler = random     # fifo | random | maxchain | stall
    step_budget = 50000000
    p = 2147483647
    adversary = equivocate # crash | equivocate | wrongshare | honest
    inputs = 1,2,3         # padded with default_input
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .field import MERSENNE_31, is_prime
from .simnet import bad_bound


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    n: int = 16
    epsilon: float = 0.01
    seed: int = 0
    scheduler: str = "fifo"
    step_budget: int = 50_000_000
    p: int = MERSENNE_31
    c: float = 2.0
    delta: float = 0.05
    c_lb: float = 4.0
    default_input: int = 0
    adversary: str = "crash"
    t: int | None = None  # bad players; default floor((1/8 - epsilon) n)
    inputs: list = field(default_factory=list)
    copies: int = 1
    trace: bool = True

    @property
    def bad_count(self) -> int:
        return bad_bound(self.n, self.epsilon) if self.t is None else self.t

    def input_vector(self) -> list[int]:
        xs = list(self.inputs[: self.n])
        return xs + [self.default_input] * (self.n - len(xs))

    def validate(self) -> "Config":
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not is_prime(self.p):
            raise ConfigError(f"p={self.p} is not prime")
        if self.p <= 4 * self.n:
            raise ConfigError("p must exceed 4n")
        if not 0 <= self.epsilon < 0.125:
            raise ConfigError("epsilon must lie in [0, 1/8)")
        if self.copies != 1:
            raise ConfigError("copies > 1 is not supported")
        return self

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_ALIASES = {"bad_count": "t", "strategy": "scheduler", "modulus": "p", "field_modulus": "p"}
_TYPES = {f.name: f for f in dataclasses.fields(Config)}


def _convert(name: str, raw: str):
    if name == "inputs":
        return [int(x) for x in raw.replace(",", " ").split()]
    if name == "trace":
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(raw)
        return low in ("true", "1", "yes")
    if name in ("epsilon", "c", "delta", "c_lb"):
        return float(raw)
    if name in ("scheduler", "adversary"):
        return raw
    return int(raw)


def parse_config(text: str, **overrides) -> Config:
    vals: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            vals[key] = _convert(key, value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
    vals.update({k: v for k, v in overrides.items() if v is not None})
    return Config(**vals).validate()


def load_config(path, **overrides) -> Config:
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)
