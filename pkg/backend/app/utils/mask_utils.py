# Run-length encoding of binary masks: row-major pixel order, counts alternate
# starting with a (possibly empty) run of zeros.
from typing import Any, Dict, Tuple

import numpy as np

from app.errors import InvalidInputError


def encode_rle(mask: np.ndarray) -> Dict[str, Any]:
    """Encode a 2D binary mask to {"counts": [...], "size": [height, width]}"""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise InvalidInputError("mask must be two-dimensional")
    height, width = mask.shape
    flat = mask.reshape(-1).astype(np.int8)
    if flat.size == 0:
        return {"counts": [], "size": [height, width]}
    changes = np.flatnonzero(np.diff(flat)) + 1
    boundaries = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(boundaries).tolist()
    if flat[0] == 1:
        counts.insert(0, 0)
    return {"counts": [int(c) for c in counts], "size": [height, width]}


def decode_rle(rle: Dict[str, Any]) -> np.ndarray:
    """Decode an RLE dict back to a boolean mask"""
    try:
        height, width = (int(v) for v in rle["size"])
        counts = np.asarray(rle.get("counts", []), dtype=np.int64)
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidInputError(f"malformed RLE mask: {e}")
    if np.any(counts < 0):
        raise InvalidInputError("RLE counts must be non-negative")
    total = height * width
    if counts.sum() > total:
        raise InvalidInputError(f"RLE covers {counts.sum()} pixels, mask has {total}")
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    flat = np.concatenate([flat, np.zeros(total - flat.size, dtype=bool)])
    return flat.reshape(height, width)


def mask_bbox(mask: np.ndarray) -> Tuple[int, int, int, int]:
    """Inclusive (u_min, v_min, u_max, v_max) of the set pixels"""
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise InvalidInputError("empty mask has no bounding box")
    return int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max())
