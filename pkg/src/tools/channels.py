"""
Channel models named on the command line.

``random:SEED`` draws seeded 3-tap channels; anything else names a JSON file
holding one entry per pilot::

    [{"taps": [{"delay": 0, "gain": [1.0, 0.0]}, {"delay": 3, "gain": [0.5, 0.0]}],
      "path_loss_db": 0.0}, ...]
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from pydantic import BaseModel, Field, ValidationError

from src.errors import ConfigError, InvalidChannel
from src.evaluator import random_channels
from src.state import ChannelModel, ChannelTap, LagWindow

logger = logging.getLogger(__name__)

RANDOM_PREFIX = "random:"


class TapEntry(BaseModel):
    delay: int = Field(ge=0)
    gain: tuple[float, float]


class ChannelEntry(BaseModel):
    taps: list[TapEntry] = Field(min_length=1)
    path_loss_db: float = 0.0
    seed: int = 0


def _from_entry(entry: ChannelEntry) -> ChannelModel:
    return ChannelModel(
        taps=[ChannelTap(delay=t.delay, gain=complex(*t.gain)) for t in entry.taps],
        path_loss_db=entry.path_loss_db,
        seed=entry.seed,
    )


def load_channels(spec: str, n_pilots: int, window: LagWindow) -> list[ChannelModel]:
    if spec.startswith(RANDOM_PREFIX):
        try:
            seed = int(spec[len(RANDOM_PREFIX):])
        except ValueError as e:
            raise ConfigError(f"--channels: bad seed in '{spec}'", key="channels") from e
        logger.info("Drawing %d random channels with seed %d", n_pilots, seed)
        return random_channels(n_pilots, window, seed)

    path = Path(spec)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        entries = [ChannelEntry.model_validate(item) for item in raw]
    except OSError as e:
        raise ConfigError(f"cannot read channel file {path}: {e.strerror}", key="channels") from e
    except (json.JSONDecodeError, TypeError, ValidationError) as e:
        raise ConfigError(f"{path}: malformed channel file: {e}", key="channels") from e
    if len(entries) != n_pilots:
        raise InvalidChannel(f"{path}: {len(entries)} channels for {n_pilots} pilots")
    return [_from_entry(entry) for entry in entries]
