"""Coordinate-wise trimmed mean (CTM).

For each coordinate the receiver drops the ``b`` largest and ``b`` smallest
values it received, then averages what is left together with its own value.
The receiver's own value is never trimmed. The denominator is fixed by the
neighbor count, ``|N| - 2b + 1``.
"""

from __future__ import annotations

from typing import Hashable, Sequence

import numpy as np

SELF = "self"


class TrimError(ValueError):
    """Too few neighbor values for the requested trim budget."""


def _check_count(k: int, budget: int) -> None:
    if budget < 0:
        raise TrimError(f"trim budget must be nonnegative, got {budget}")
    # with b = 0 the rule is a plain average and an isolated receiver is fine
    if budget > 0 and k < 2 * budget + 1:
        raise TrimError(f"need at least 2b+1 = {2 * budget + 1} neighbor values, got {k}")


def trim_coordinate(
    self_value: float,
    neighbor_values: Sequence[tuple[Hashable, float]],
    budget: int,
    self_id: Hashable = SELF,
) -> tuple[float, frozenset]:
    """Trimmed average of one coordinate.

    Ties are broken by sender id, so the discarded set is deterministic.
    Returns the aggregated value and the senders that survived, plus ``self_id``.
    """
    _check_count(len(neighbor_values), budget)
    ordered = sorted(neighbor_values, key=lambda sv: (sv[1], sv[0]))
    kept = ordered[budget: len(ordered) - budget]
    value = (sum(v for _, v in kept) + self_value) / (len(neighbor_values) - 2 * budget + 1)
    return float(value), frozenset([s for s, _ in kept] + [self_id])


def trim_vector(
    self_vec,
    neighbor_vecs: Sequence[tuple[Hashable, np.ndarray]],
    budget: int,
    self_id: Hashable = SELF,
) -> tuple[np.ndarray, list[frozenset]]:
    """Apply :func:`trim_coordinate` to every coordinate independently."""
    self_vec = np.asarray(self_vec, dtype=float).ravel()
    d = self_vec.shape[0]
    for s, v in neighbor_vecs:
        if np.asarray(v).size != d:
            raise TrimError(f"message from {s!r} has dim {np.asarray(v).size}, expected {d}")
    out = np.empty(d)
    kept = []
    for k in range(d):
        out[k], ks = trim_coordinate(self_vec[k], [(s, float(np.ravel(v)[k])) for s, v in neighbor_vecs], budget, self_id)
        kept.append(ks)
    return out, kept


def trimmed_mean(self_values: np.ndarray, stacked: np.ndarray, budget: int) -> np.ndarray:
    """Array form used by the round engine.

    ``stacked`` has the neighbors on axis 0 and any trailing shape matching
    ``self_values``. Only values are returned, so tie-breaking is irrelevant.
    """
    k = stacked.shape[0]
    _check_count(k, budget)
    if budget == 0:
        total = stacked.sum(axis=0)
    else:
        total = np.sort(stacked, axis=0)[budget: k - budget].sum(axis=0)
    return (total + self_values) / (k - 2 * budget + 1)


def sanitize(values: np.ndarray, sentinel: float = 1e300) -> np.ndarray:
    """Replace NaN/+inf by ``+sentinel`` and -inf by ``-sentinel`` so sorting stays well-defined."""
    values = np.asarray(values, dtype=float)
    if np.all(np.isfinite(values)):
        return values
    out = np.nan_to_num(values, nan=sentinel, posinf=sentinel, neginf=-sentinel)
    return out
