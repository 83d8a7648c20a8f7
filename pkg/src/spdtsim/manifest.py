"""Reproducibility manifests written by every CLI command."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

from . import __version__


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def canonical_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    command: list[str]
    config_hash: str
    master_seed: int
    tool_version: str = __version__
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    timings_s: dict[str, float] = field(default_factory=dict)
    created_unix: float = field(default_factory=time.time)

    def add_input(self, path: str) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: str) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.__dict__, f, indent=2, sort_keys=True)
            f.write("\n")


class PhaseTimer:
    """Accumulates wall-clock per named phase for the manifest."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest
        self._t0: float | None = None
        self._phase: str | None = None

    def start(self, phase: str) -> None:
        self.stop()
        self._phase, self._t0 = phase, time.perf_counter()

    def stop(self) -> None:
        if self._phase is not None and self._t0 is not None:
            self.manifest.timings_s[self._phase] = round(
                self.manifest.timings_s.get(self._phase, 0.0)
                + time.perf_counter() - self._t0, 6)
        self._phase = self._t0 = None
