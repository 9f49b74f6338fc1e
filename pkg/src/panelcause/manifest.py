"""Run manifests: what ran, on which inputs, producing which outputs.

Manifests make runs auditable and reproducibility checkable: rerunning
a command with inputs whose digests match must reproduce the same
output bytes (timestamps aside).
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(params: dict) -> str:
    """Stable hash of the fully resolved parameter set."""
    encoded = json.dumps(params, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command: tuple[str, ...]
    config_hash: str
    input_digests: dict[str, str]
    seed: int | None
    tool_version: str
    timestamp: str
    outputs: tuple[str, ...]
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def create(cls, command, params: dict, inputs, seed, tool_version, outputs) -> "RunManifest":
        return cls(
            command=tuple(command),
            config_hash=config_hash(params),
            input_digests={str(p): file_digest(p) for p in inputs},
            seed=seed,
            tool_version=tool_version,
            timestamp=dt.datetime.now(dt.timezone.utc).isoformat(),
            outputs=tuple(str(p) for p in outputs),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(
            command=tuple(data["command"]),
            config_hash=data["config_hash"],
            input_digests=dict(data["input_digests"]),
            seed=data["seed"],
            tool_version=data["tool_version"],
            timestamp=data["timestamp"],
            outputs=tuple(data["outputs"]),
            schema_version=data.get("schema_version", SCHEMA_VERSION),
        )

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return path

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
