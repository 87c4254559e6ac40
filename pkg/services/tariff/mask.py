"""
Bucket mask (indirection array)
mask[slot] is the position of that slot's reading in the bucket-sorted
layout. Buckets are laid out in declaration order and slots keep ascending
order inside their bucket, so the mask is a stable counting sort of the
slot -> bucket classification. It is computed once per bucket set and shared
by every household.
"""

import functools
import logging
from typing import NamedTuple, Tuple

import numpy as np

from models.errors import BoundaryMismatch, PartitionViolation
from services.tariff.buckets import BucketSet, matching_buckets

logger = logging.getLogger(__name__)


class BucketBoundary(NamedTuple):
    offset: int
    length: int


class BucketMask:
    def __init__(self, mask: np.ndarray, boundaries: Tuple[BucketBoundary, ...],
                 bucket_of_slot: np.ndarray):
        self.mask = np.asarray(mask, dtype=np.intp)
        self.boundaries = tuple(BucketBoundary(int(o), int(n)) for o, n in boundaries)
        self.bucket_of_slot = np.asarray(bucket_of_slot, dtype=np.intp)

        # gather form of the same permutation: sorted[p] = readings[gather_index[p]]
        self.gather_index = np.empty_like(self.mask)
        self.gather_index[self.mask] = np.arange(self.mask.size, dtype=np.intp)

        # cumulative-sum cut points for the aggregate phase
        self.edges = np.zeros(len(self.boundaries) + 1, dtype=np.intp)
        self.edges[1:] = np.cumsum([b.length for b in self.boundaries])

        for array in (self.mask, self.gather_index, self.bucket_of_slot, self.edges):
            array.flags.writeable = False
        check_boundaries(self.boundaries, self.mask.size)

    @property
    def size(self) -> int:
        return int(self.mask.size)

    @property
    def bucket_count(self) -> int:
        return len(self.boundaries)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        lengths = [b.length for b in self.boundaries]
        return f"BucketMask(size={self.size}, lengths={lengths})"


def check_boundaries(boundaries, size: int) -> None:
    """Boundaries must tile [0, size) in order, without gaps or overlaps"""
    position = 0
    for bucket, (offset, length) in enumerate(boundaries):
        if length < 0 or offset != position:
            raise BoundaryMismatch(
                f"Bucket {bucket} starts at {offset} with length {length}, expected offset {position}"
            )
        position += length
    if position != size:
        raise BoundaryMismatch(f"Boundaries cover {position} positions, array has {size}")


def classify_all(bucket_set: BucketSet) -> np.ndarray:
    """Bucket id of every slot of the month, checking the partition on the way"""
    n = bucket_set.month.slots_per_month
    bucket_of_slot = np.empty(n, dtype=np.intp)
    for slot in range(n):
        matches = matching_buckets(slot, bucket_set)
        if len(matches) != 1:
            raise PartitionViolation(slot, matches)
        bucket_of_slot[slot] = matches[0]
    return bucket_of_slot


@functools.lru_cache(maxsize=32)
def build_mask(bucket_set: BucketSet) -> BucketMask:
    bucket_of_slot = classify_all(bucket_set)

    # stable counting sort: slots grouped by bucket, ascending within a bucket
    gather_index = np.argsort(bucket_of_slot, kind="stable")
    mask = np.empty_like(gather_index)
    mask[gather_index] = np.arange(gather_index.size, dtype=np.intp)

    lengths = np.bincount(bucket_of_slot, minlength=len(bucket_set))
    offsets = np.concatenate(([0], np.cumsum(lengths)[:-1])) if len(lengths) else lengths
    boundaries = tuple(BucketBoundary(int(o), int(n)) for o, n in zip(offsets, lengths))

    logger.debug(f"Built mask for {len(bucket_set)} buckets: lengths {lengths.tolist()}")
    return BucketMask(mask, boundaries, bucket_of_slot)
