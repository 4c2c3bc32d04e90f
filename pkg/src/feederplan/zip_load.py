"""Voltage-dependent ZIP loads: exact evaluation and an affine form in squared voltage.

The conic model only carries squared voltage magnitudes, so the
constant-current part of a ZIP load cannot enter it exactly. It is replaced
by the secant/first-order expansion::

    v ~= (v_ref**2 + v_sq) / (2 * v_ref),    v_ref = (v_lo + v_hi) / 2

which over-estimates ``v`` by ``(v - v_ref)**2 / (2 * v_ref)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .case_model import ZIPCoefficients

__all__ = [
    "AffineLoadInVsq",
    "eval_zip",
    "eval_zip_p",
    "eval_zip_q",
    "linearize_triple",
    "linearize_zip_in_vsq",
    "secant_error_bound",
]


@dataclass(frozen=True)
class AffineLoadInVsq:
    """``load / nominal ~= slope * v_sq + intercept`` on ``valid_range``."""

    slope: float
    intercept: float
    valid_range: tuple[float, float]
    max_error: float

    def __call__(self, v_sq):
        return self.slope * np.asarray(v_sq, dtype=float) + self.intercept


def eval_zip(v, nominal, kz: float, ki: float, kp: float, v_rated: float = 1.0):
    """``nominal * (kz*(v/v_rated)**2 + ki*(v/v_rated) + kp)``; vectorised over ``v``."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("voltage magnitude must be positive")
    ratio = v / v_rated
    out = np.asarray(nominal, dtype=float) * (kz * ratio**2 + ki * ratio + kp)
    return float(out) if out.ndim == 0 else out


def eval_zip_p(v, p_nominal, zip: ZIPCoefficients, v_rated: float = 1.0):
    return eval_zip(v, p_nominal, *zip.p_triple, v_rated=v_rated)


def eval_zip_q(v, q_nominal, zip: ZIPCoefficients, v_rated: float = 1.0):
    return eval_zip(v, q_nominal, *zip.q_triple, v_rated=v_rated)


def secant_error_bound(ki: float, v_lo: float, v_hi: float) -> float:
    """Loose analytic bound ``ki*(v_hi-v_lo)**2/(8*v_lo)`` (rated voltage 1)."""
    return ki * (v_hi - v_lo) ** 2 / (8.0 * v_lo)


def linearize_triple(kz: float, ki: float, kp: float, v_rated: float,
                     v_range: tuple[float, float]) -> AffineLoadInVsq:
    v_lo, v_hi = map(float, v_range)
    if not (0 < v_lo < v_hi):
        raise ValueError(f"voltage range must satisfy 0 < v_lo < v_hi, got {v_range}")
    v_ref = 0.5 * (v_lo + v_hi)
    slope = kz / v_rated**2 + ki / (2.0 * v_ref * v_rated)
    intercept = ki * v_ref / (2.0 * v_rated) + kp
    # error ki/v_rated * (v - v_ref)^2 / (2 v_ref) peaks at either end
    half = 0.5 * (v_hi - v_lo)
    max_error = abs(ki) / v_rated * half**2 / (2.0 * v_ref)
    return AffineLoadInVsq(slope, intercept, (v_lo, v_hi), max_error)


def linearize_zip_in_vsq(zip: ZIPCoefficients, v_rated: float,
                         v_range: tuple[float, float]) -> tuple[AffineLoadInVsq, AffineLoadInVsq]:
    """Affine-in-``v_sq`` forms of the active and reactive load fractions."""
    return (
        linearize_triple(*zip.p_triple, v_rated=v_rated, v_range=v_range),
        linearize_triple(*zip.q_triple, v_rated=v_rated, v_range=v_range),
    )
