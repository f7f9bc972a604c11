"""Bitstring helpers.

Bit ``i`` of a bitstring is atom ``i``; the integer index of ``z`` is
``sum(z[i] << i)`` (little-endian), and the text label lists bits in atom
order, so label ``"100"`` is index 1.
"""
import numpy as np


def as_bits(z, n=None) -> np.ndarray:
    if isinstance(z, str):
        z = from_label(z)
    arr = np.asarray(z)
    if arr.ndim != 1:
        raise ValueError("bitstring must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("bitstring entries must be 0 or 1")
    if n is not None and arr.size != n:
        raise ValueError(f"bitstring length {arr.size} does not match expected {n}")
    return arr.astype(np.uint8)


def to_index(z) -> int:
    z = np.asarray(z, dtype=np.int64)
    return int((z << np.arange(z.size, dtype=np.int64)).sum())


def from_index(index, n) -> np.ndarray:
    return ((int(index) >> np.arange(n)) & 1).astype(np.uint8)


def all_bitstrings(n) -> np.ndarray:
    """Every bitstring of length n, row k is index k."""
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def label(z) -> str:
    return "".join("1" if b else "0" for b in np.asarray(z))


def index_label(index, n) -> str:
    return label(from_index(index, n))


def from_label(text) -> np.ndarray:
    text = text.strip()
    if not text or any(ch not in "01" for ch in text):
        raise ValueError(f"invalid bitstring literal {text!r}")
    return np.array([ch == "1" for ch in text], dtype=np.uint8)
