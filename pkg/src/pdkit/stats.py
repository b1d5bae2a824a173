"""Randomness battery and two-sample distinguishers.

Monobit and serial follow NIST SP 800-22 (frequency test, serial test);
the byte test is a 255-dof chi-square against the uniform byte histogram.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as _st
from scipy.special import gammaincc

from . import kernels


def _u8(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return np.ascontiguousarray(data, dtype=np.uint8).reshape(-1)
    return np.frombuffer(bytes(data), dtype=np.uint8)


def monobit_p(data) -> float:
    buf = _u8(data)
    n = buf.size * 8
    if n == 0:
        return 1.0
    ones = kernels.popcount(buf)
    s_obs = abs(2 * ones - n) / math.sqrt(n)
    return math.erfc(s_obs / math.sqrt(2))


def _psi2(buf: np.ndarray, m: int, n: int) -> float:
    if m == 0:
        return 0.0
    counts = kernels.pattern_counts(buf, m).astype(np.float64)
    return (2 ** m / n) * float(np.dot(counts, counts)) - n


def serial_p(data, m: int = 3) -> tuple[float, float]:
    buf = _u8(data)
    n = buf.size * 8
    if n == 0:
        return 1.0, 1.0
    p_m, p_m1, p_m2 = _psi2(buf, m, n), _psi2(buf, m - 1, n), _psi2(buf, m - 2, n)
    d1 = p_m - p_m1
    d2 = p_m - 2 * p_m1 + p_m2
    return float(gammaincc(2 ** (m - 2), d1 / 2)), float(gammaincc(2 ** (m - 3), d2 / 2))


def byte_chi2_p(data) -> float:
    buf = _u8(data)
    if buf.size == 0:
        return 1.0
    hist = kernels.byte_histogram(buf)
    return float(_st.chisquare(hist).pvalue)


def randomness_battery(data) -> dict[str, float]:
    s1, s2 = serial_p(data)
    return {"monobit": monobit_p(data), "serial1": s1, "serial2": s2, "bytes": byte_chi2_p(data)}


def passes_battery(data, alpha: float = 0.01) -> bool:
    return min(randomness_battery(data).values()) > alpha


def chi2_uniform_p(samples: Sequence[int], categories: int) -> float:
    """Goodness of fit of integer samples in [0, categories) to the uniform law."""
    counts = np.bincount(np.asarray(samples, dtype=np.int64), minlength=categories)
    if counts.size != categories:
        raise ValueError("sample outside the category range")
    return float(_st.chisquare(counts).pvalue)


def chi2_two_sample_p(counts_a: Iterable[int], counts_b: Iterable[int]) -> float:
    """Homogeneity test for two histograms over the same categories."""
    a = np.asarray(list(counts_a), dtype=np.float64)
    b = np.asarray(list(counts_b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("histograms must share categories")
    keep = (a + b) > 0
    if keep.sum() < 2 or a.sum() == 0 or b.sum() == 0:
        return 1.0
    table = np.vstack([a[keep], b[keep]])
    return float(_st.chi2_contingency(table, correction=False)[1])


def binned(samples: Sequence[int], upper: int, bins: int) -> np.ndarray:
    """Histogram of integers in [0, upper) over ``bins`` equal-width bins."""
    arr = np.asarray(samples, dtype=np.int64)
    idx = (arr * bins) // max(upper, 1)
    return np.bincount(idx, minlength=bins)[:bins]


def two_sample_addresses_p(addrs_a, addrs_b, upper: int, bins: int = 16) -> float:
    return chi2_two_sample_p(binned(addrs_a, upper, bins), binned(addrs_b, upper, bins))


def two_sample_bytes_p(data_a, data_b) -> float:
    return chi2_two_sample_p(kernels.byte_histogram(_u8(data_a)), kernels.byte_histogram(_u8(data_b)))
