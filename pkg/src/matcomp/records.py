"""Self-describing run records."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from . import __version__
from .formats import dumps_json, read_json, write_json

SCHEMA_VERSION = 1
TIMING_KEYS = ("timings",)


@dataclass
class RunRecord:
    kind: str
    seed: int
    spec: dict
    error: dict | None = None
    spectral: dict | None = None
    trim: dict | None = None
    cleaning: dict | None = None
    extra: dict = field(default_factory=dict)
    failure: str | None = None
    timings: dict = field(default_factory=dict)
    version: str = __version__
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown RunRecord keys: {sorted(unknown)}")
        return cls(**d)

    def dumps(self) -> str:
        return dumps_json(self.to_dict())

    def write(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def read(cls, path) -> "RunRecord":
        return cls.from_dict(read_json(path))


def strip_timings(d: dict) -> dict:
    """Copy of a record dict without wall-clock fields, for reproducibility checks."""
    return {k: v for k, v in d.items() if k not in TIMING_KEYS}
