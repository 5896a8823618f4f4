"""
Versioned JSON pilot files.

The header carries the config snapshot, seed, iteration count and the metrics
achieved at write time; the payload holds each pilot's preimage, FD pilot and
TD image as [re, im] pairs. Floats are written in their shortest round-trip
form, so a reload reproduces every value bit for bit.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src.errors import PilotFileError
from src.optimizer import PilotSet, PilotSetMetadata
from src.state import SynthesisConfig
from src.subspace import ZeroTailSubspace, to_frequency_domain, to_time_domain
from src.tools.files import atomic_write_text

logger = logging.getLogger(__name__)

PILOT_FILE_VERSION = 1
# re-derived FD/TD vectors must match the stored ones this closely
RELOAD_TOLERANCE = 1e-10


class PilotFileHeader(BaseModel):
    format_version: int
    config: dict
    seed: Optional[int] = None
    iterations: int = 0
    converged: Optional[bool] = None
    metrics: dict[str, Any] = Field(default_factory=dict)


class PilotPayload(BaseModel):
    index: int
    preimage: list[tuple[float, float]]
    fd: list[tuple[float, float]]
    td: list[tuple[float, float]]


class PilotFile(BaseModel):
    header: PilotFileHeader
    pilots: list[PilotPayload] = Field(default_factory=list)


def _pairs(v: np.ndarray) -> list[tuple[float, float]]:
    return [(float(z.real), float(z.imag)) for z in np.asarray(v, dtype=complex)]


def _vector(pairs: list[tuple[float, float]]) -> np.ndarray:
    if not pairs:
        return np.empty(0, dtype=complex)
    arr = np.asarray(pairs, dtype=float)
    return arr[:, 0] + 1j * arr[:, 1]


def to_pilot_file(pilot_set: PilotSet, metrics: Optional[dict[str, Any]] = None) -> PilotFile:
    meta = pilot_set.metadata
    if meta.config is None:
        raise PilotFileError("pilot set carries no config snapshot")
    return PilotFile(
        header=PilotFileHeader(
            format_version=PILOT_FILE_VERSION,
            config=meta.config,
            seed=meta.seed,
            iterations=meta.iterations,
            converged=meta.converged,
            metrics=metrics or {},
        ),
        pilots=[
            PilotPayload(index=i, preimage=_pairs(x), fd=_pairs(fd), td=_pairs(td))
            for i, (x, fd, td) in enumerate(
                zip(pilot_set.preimages, pilot_set.fd_pilots, pilot_set.td_pilots)
            )
        ],
    )


def write_pilot_file(path: Union[str, Path], pilot_set: PilotSet, metrics: Optional[dict[str, Any]] = None) -> Path:
    document = to_pilot_file(pilot_set, metrics).model_dump(mode="json")
    # json's float repr is the shortest string that reloads to the same double
    return atomic_write_text(path, json.dumps(document, indent=1) + "\n")


def read_pilot_file(path: Union[str, Path]) -> PilotFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise PilotFileError(f"cannot read pilot file {path}: {e.strerror}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise PilotFileError(f"{path}: not a pilot file ({e.msg} at line {e.lineno})") from e
    version = raw.get("header", {}).get("format_version") if isinstance(raw, dict) else None
    if version != PILOT_FILE_VERSION:
        raise PilotFileError(f"{path}: format version {version!r}, expected {PILOT_FILE_VERSION}")
    try:
        return PilotFile.model_validate(raw)
    except ValidationError as e:
        raise PilotFileError(f"{path}: malformed pilot file: {e.errors()[0]['msg']}") from e


def file_config(document: PilotFile) -> SynthesisConfig:
    try:
        return SynthesisConfig.model_validate(document.header.config)
    except ValidationError as e:
        raise PilotFileError(f"pilot file config snapshot is invalid: {e.errors()[0]['msg']}") from e


def to_pilot_set(document: PilotFile, sub: ZeroTailSubspace) -> PilotSet:
    """Rebuild a PilotSet, checking the stored FD/TD vectors against the preimages."""
    preimages, fd_pilots, td_pilots = [], [], []
    for payload in sorted(document.pilots, key=lambda p: p.index):
        x = _vector(payload.preimage)
        fd, td = _vector(payload.fd), _vector(payload.td)
        if x.size != sub.preimage_dim or fd.size != sub.dims.n_sc or td.size != sub.dims.n_fft:
            raise PilotFileError(f"pilot {payload.index}: vector lengths do not match the config dims")
        fd_new = to_frequency_domain(sub, x)
        td_new = to_time_domain(sub, x)
        if np.max(np.abs(fd_new - fd)) > RELOAD_TOLERANCE or np.max(np.abs(td_new - td)) > RELOAD_TOLERANCE:
            raise PilotFileError(f"pilot {payload.index}: stored FD/TD vectors disagree with the preimage")
        preimages.append(x)
        fd_pilots.append(fd)
        td_pilots.append(td)
    header = document.header
    return PilotSet(
        preimages=preimages,
        fd_pilots=fd_pilots,
        td_pilots=td_pilots,
        metadata=PilotSetMetadata(
            config=header.config,
            seed=header.seed,
            iterations=header.iterations,
            converged=header.converged,
        ),
    )
