"""Segmental scale-invariant SDR, SIR and SAR with target activity gating"""

import json
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

import constants
from errors import DegenerateSegment


@dataclass
class MetricsReport:
    """Means over active segments plus the per-segment values (dB)"""

    si_sdr: float
    si_sir: float
    si_sar: float
    segment_count: int
    segment_sdr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    segment_sir: np.ndarray = field(default_factory=lambda: np.zeros(0))
    segment_sar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def to_dict(self) -> Dict[str, float]:
        return {
            "si_sdr": self.si_sdr,
            "si_sir": self.si_sir,
            "si_sar": self.si_sar,
            "segment_count": self.segment_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _ratio_db(signal_energy: np.ndarray, error_energy: np.ndarray) -> np.ndarray:
    cap = constants.METRIC_CAP_DB
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = 10.0 * np.log10(signal_energy / error_energy)
    ratio = np.where(np.isnan(ratio), -cap, ratio)
    return np.clip(ratio, -cap, cap)


def _segments(signal: np.ndarray, length: int, count: int) -> np.ndarray:
    return np.asarray(signal, dtype=float)[:count * length].reshape(count, length)


def si_sdr_segmental(estimate: np.ndarray, target: np.ndarray,
                     interference: Optional[np.ndarray] = None,
                     sample_rate: int = constants.DEFAULT_SAMPLE_RATE,
                     segment_ms: float = constants.SEGMENT_MS,
                     activity_threshold_db: float = constants.ACTIVITY_THRESHOLD_DB) -> MetricsReport:
    """SI-SDR over non-overlapping segments with target activity.

    A segment is active when its target energy is at least the mean segment
    energy lowered by activity_threshold_db. SI-SIR and SI-SAR split the
    residual by projecting the estimate onto span{target, interference}; they
    are NaN when no interference reference is given.
    """
    estimate = np.asarray(estimate, dtype=float).reshape(-1)
    target = np.asarray(target, dtype=float).reshape(-1)
    if estimate.shape != target.shape:
        raise ValueError(f"estimate and target lengths differ: {estimate.size} vs {target.size}")
    if interference is not None:
        interference = np.asarray(interference, dtype=float).reshape(-1)
        if interference.shape != target.shape:
            raise ValueError("interference reference must be aligned with the target")

    length = int(round(segment_ms * sample_rate / 1000.0))
    count = target.size // length
    if count == 0:
        raise DegenerateSegment(f"signal shorter than one {segment_ms} ms segment")
    s = _segments(target, length, count)
    x = _segments(estimate, length, count)

    energy = np.sum(s ** 2, axis=1)
    threshold = np.mean(energy) * 10.0 ** (activity_threshold_db / 10.0)
    active = (energy >= threshold) & (energy > 0)
    if not np.any(active):
        raise DegenerateSegment("no segment carries target energy")
    s, x = s[active], x[active]

    alpha = np.sum(x * s, axis=1) / np.sum(s ** 2, axis=1)
    projected = alpha[:, None] * s
    target_energy = np.sum(projected ** 2, axis=1)
    sdr = _ratio_db(target_energy, np.sum((x - projected) ** 2, axis=1))

    if interference is None:
        sir = np.full(sdr.shape, np.nan)
        sar = np.full(sdr.shape, np.nan)
    else:
        n = _segments(interference, length, count)[active]
        basis = np.stack([s, n], axis=-1)
        coefficients = np.einsum('sij,sj->si', np.linalg.pinv(basis), x)
        span = np.einsum('sij,sj->si', basis, coefficients)
        sir = _ratio_db(target_energy, np.sum((span - projected) ** 2, axis=1))
        sar = _ratio_db(target_energy, np.sum((x - span) ** 2, axis=1))

    return MetricsReport(
        si_sdr=float(np.mean(sdr)),
        si_sir=float(np.mean(sir)),
        si_sar=float(np.mean(sar)),
        segment_count=int(active.sum()),
        segment_sdr=sdr,
        segment_sir=sir,
        segment_sar=sar,
        active=active,
    )
