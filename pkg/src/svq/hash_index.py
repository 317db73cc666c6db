"""Exact-match sparse hash query between voxel sets.

Coordinates are packed into one non-negative int64 key: three 21-bit fields,
each biased by 2**20, so every component in ``[-2**20, 2**20 - 1]``
(about +/-1.05e6) round-trips. The table is open addressing with linear
probing and Fibonacci hashing; inserts and lookups run as vectorized probe
rounds, each round touching only the keys still unresolved, so total work is
proportional to the number of keys times the mean probe length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError, ScaleMismatchError

FIELD_BITS = 21
BIAS = 1 << (FIELD_BITS - 1)
FIELD_MASK = (1 << FIELD_BITS) - 1
COORD_MIN = -BIAS
COORD_MAX = BIAS - 1

_EMPTY = -1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def pack_coords(coords) -> np.ndarray:
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    if c.size and (c.min() < COORD_MIN or c.max() > COORD_MAX):
        raise ValueError(
            f"voxel coordinate outside packable range [{COORD_MIN}, {COORD_MAX}]"
        )
    b = c + BIAS
    return (b[:, 0] << (2 * FIELD_BITS)) | (b[:, 1] << FIELD_BITS) | b[:, 2]


def unpack_keys(keys) -> np.ndarray:
    k = np.asarray(keys, dtype=np.int64)
    out = np.stack(
        [(k >> (2 * FIELD_BITS)) & FIELD_MASK, (k >> FIELD_BITS) & FIELD_MASK, k & FIELD_MASK],
        axis=1,
    )
    return out - BIAS


class SparseIndex:
    """Immutable map from integer voxel coordinates to row indices."""

    def __init__(self, coords, scale: int = 1):
        keys = pack_coords(coords)
        self.scale = int(scale)
        self.size = len(keys)
        cap = 8
        while cap < 2 * self.size:
            cap <<= 1
        self._bits = cap.bit_length() - 1
        self._mask = cap - 1
        self._keys = np.full(cap, _EMPTY, dtype=np.int64)
        self._vals = np.full(cap, -1, dtype=np.int64)
        self._insert(keys)
        self._keys.setflags(write=False)
        self._vals.setflags(write=False)

    def _home(self, keys):
        h = keys.astype(np.uint64) * _GOLDEN
        return (h >> np.uint64(64 - self._bits)).astype(np.int64)

    def _insert(self, keys):
        slot = self._home(keys)
        pending = np.arange(len(keys))
        claim = np.full(len(self._keys), len(keys), dtype=np.int64)
        while pending.size:
            s = slot[pending]
            occupant = self._keys[s]
            if np.any(occupant == keys[pending]):
                raise InvariantError("duplicate voxel coordinate in index build")
            free = np.flatnonzero(occupant == _EMPTY)
            cand, cs = pending[free], s[free]
            # lowest row index wins a contested slot, keeping the layout deterministic
            np.minimum.at(claim, cs, cand)
            won = claim[cs] == cand
            winners = cand[won]
            self._keys[cs[won]] = keys[winners]
            self._vals[cs[won]] = winners
            claim[cs] = len(keys)
            keep = np.ones(len(pending), dtype=bool)
            keep[free[won]] = False
            pending = pending[keep]
            if np.any(self._keys[s[keep]] == keys[pending]):
                raise InvariantError("duplicate voxel coordinate in index build")
            slot[pending] = (s[keep] + 1) & self._mask

    def lookup(self, coords) -> np.ndarray:
        """Row index per coordinate, ``-1`` where absent."""
        q = pack_coords(coords)
        out = np.full(len(q), -1, dtype=np.int64)
        if self.size == 0 or len(q) == 0:
            return out
        slot = self._home(q)
        pending = np.arange(len(q))
        while pending.size:
            s = slot[pending]
            occupant = self._keys[s]
            hit = occupant == q[pending]
            out[pending[hit]] = self._vals[s[hit]]
            keep = ~hit & (occupant != _EMPTY)
            pending = pending[keep]
            slot[pending] = (s[keep] + 1) & self._mask
        return out

    def __contains__(self, coord) -> bool:
        return bool(self.lookup(np.asarray(coord)[:3])[0] >= 0)

    def __len__(self):
        return self.size


def build_index(vset) -> SparseIndex:
    if isinstance(vset, np.ndarray):
        return SparseIndex(vset)
    return SparseIndex(vset.coords, vset.scale)


@dataclass(frozen=True)
class QueryAlignment:
    """Per-query-row match: ``indices[i]`` is a row of the target set or -1.

    Missing matches stand for the all-zero placeholder of width ``width``.
    """

    indices: np.ndarray
    width: int

    @property
    def matched(self) -> np.ndarray:
        return self.indices >= 0

    @property
    def n_matched(self) -> int:
        return int(np.count_nonzero(self.indices >= 0))

    @property
    def n_placeholders(self) -> int:
        return len(self.indices) - self.n_matched

    @property
    def placeholder(self) -> np.ndarray:
        return np.zeros(self.width)

    def __len__(self):
        return len(self.indices)

    def gather(self, rows) -> np.ndarray:
        """Target rows in query order, zeros for placeholders."""
        rows = np.asarray(rows)
        out = np.zeros((len(self.indices),) + rows.shape[1:], dtype=rows.dtype)
        m = self.indices >= 0
        out[m] = rows[self.indices[m]]
        return out


def check_same_scale(a, b):
    if a.scale != b.scale:
        raise ScaleMismatchError(f"voxel sets at different scales ({a.scale} vs {b.scale})")


def query(current, hist, index: SparseIndex = None) -> QueryAlignment:
    """Align each current voxel with the historical voxel at the same coordinate."""
    check_same_scale(current, hist)
    if index is None:
        index = build_index(hist)
    return QueryAlignment(index.lookup(current.coords), hist.width)


def matched_mask(hist, current) -> np.ndarray:
    """True for historical voxels whose coordinate also occurs in ``current``."""
    check_same_scale(hist, current)
    return build_index(current).lookup(hist.coords) >= 0


def unquery(hist, current):
    """Historical voxels with no coordinate match in ``current``, in history order."""
    keep = np.flatnonzero(~matched_mask(hist, current))
    return hist.subset(keep)


def project(fine_coords, coarse, scale: int = None) -> QueryAlignment:
    """Align scale-1 coordinates with the coarse voxel that contains them."""
    s = coarse.scale if scale is None else int(scale)
    if s < 1:
        raise ValueError(f"projection scale must be >= 1, got {s}")
    if s != coarse.scale:
        raise ScaleMismatchError(f"coarse set is at scale {coarse.scale}, not {s}")
    fine = getattr(fine_coords, "coords", fine_coords)
    fine = np.asarray(fine, dtype=np.int64).reshape(-1, 3)
    return QueryAlignment(build_index(coarse).lookup(np.floor_divide(fine, s)), coarse.width)
