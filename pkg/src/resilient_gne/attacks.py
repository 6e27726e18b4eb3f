"""Byzantine message policies.

A Byzantine agent is a stateless policy: each round it reads the true messages
of its honest in-neighbors on a channel and emits one crafted message, which is
broadcast to all of its out-neighbors on that channel. Messages are arrays of
shape ``(blocks, d)``; block-level choices (sample duplication) are made per
block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .robust_agg import sanitize

log = logging.getLogger(__name__)

KINDS = ("none", "gaussian", "max_value", "sign_flipping", "sample_duplicating")
CHANNELS = ("estimate", "tracker")

_ALIASES = {
    "gaussian": "gaussian",
    "maxvalue": "max_value",
    "max_value": "max_value",
    "signflipping": "sign_flipping",
    "sign_flipping": "sign_flipping",
    "sampleduplicating": "sample_duplicating",
    "sample_duplicating": "sample_duplicating",
    "none": "none",
}


class AttackError(ValueError):
    pass


def normalize_kind(name) -> str:
    key = "none" if name is None else str(name).lower().replace("-", "_")
    key = _ALIASES.get(key, _ALIASES.get(key.replace("_", ""), None))
    if key is None:
        raise AttackError(f"unknown attack kind {name!r}; expected one of {KINDS}")
    return key


@dataclass(frozen=True)
class AttackModel:
    """``u`` is the variance (gaussian), the constant (max_value) or the scale (sign_flipping, sample_duplicating)."""

    kind: str = "none"
    u: float = 0.0
    channels: tuple[str, ...] = CHANNELS

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        object.__setattr__(self, "channels", tuple(self.channels))
        for c in self.channels:
            if c not in CHANNELS:
                raise AttackError(f"unknown channel {c!r}; expected a subset of {CHANNELS}")
        if self.kind == "gaussian" and not self.u > 0:
            raise AttackError(f"gaussian attack needs a positive variance u1, got {self.u}")
        if self.kind == "sign_flipping" and not self.u < 0:
            raise AttackError(f"sign-flipping attack needs a negative scale u3, got {self.u}")

    @property
    def active(self) -> bool:
        return self.kind != "none"

    def attacks(self, channel: str) -> bool:
        return self.active and channel in self.channels


def _weights(k: int, weights) -> np.ndarray:
    if weights is None:
        return np.full(k, 1.0 / k)
    w = np.asarray(weights, dtype=float)
    if w.shape != (k,) or np.any(w < 0) or w.sum() <= 0:
        raise AttackError("weights must be a nonnegative vector with one entry per honest neighbor")
    return w / w.sum()


def craft_message(model: AttackModel, honest_msgs, rng: np.random.Generator, shape=None, weights=None) -> np.ndarray:
    """Crafted message from the stacked true messages ``honest_msgs`` (k, blocks, d).

    With no honest in-neighbor (k = 0) the mean-based attacks fall back to a
    zero mean and sample duplication sends zeros; ``shape`` then gives the
    message shape.
    """
    if not model.active:
        raise AttackError("craft_message called for a non-attacking model")
    msgs = np.asarray(honest_msgs, dtype=float)
    k = msgs.shape[0] if msgs.ndim >= 1 else 0
    if k == 0:
        if shape is None:
            raise AttackError("message shape is required when there is no honest neighbor")
        log.debug("no honest in-neighbor: %s attack uses zero mean", model.kind)
        out_shape = tuple(shape)
    else:
        out_shape = msgs.shape[1:]

    if model.kind == "max_value":
        return np.full(out_shape, float(model.u))

    if model.kind == "sample_duplicating":
        if k == 0:
            return np.zeros(out_shape)
        blocks = msgs.reshape(k, out_shape[0] if len(out_shape) > 1 else 1, -1)
        pick = rng.integers(k, size=blocks.shape[1])
        chosen = blocks[pick, np.arange(blocks.shape[1])]
        return sanitize(model.u * chosen.reshape(out_shape))

    mean = np.zeros(out_shape) if k == 0 else np.tensordot(_weights(k, weights), msgs, axes=1)
    if model.kind == "gaussian":
        return sanitize(mean + np.sqrt(model.u) * rng.standard_normal(out_shape))
    return sanitize(model.u * mean)  # sign_flipping
