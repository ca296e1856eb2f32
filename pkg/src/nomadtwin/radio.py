"""Link budget, urban-macro path loss, MCS tables and cell capacity."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 3e8
SYMBOLS_PER_PRB = 12 * 7
SIGMA_LOS_DB = 4.0
SIGMA_NLOS_DB = 7.8

# LTE channel bandwidth (MHz) -> available PRBs
PRB_TABLE = {1.4: 6, 3.0: 15, 5.0: 25, 10.0: 50, 15.0: 75, 20.0: 100}

MODULATIONS = (
    # name, bits/symbol, coding rate
    ("QPSK", 2, 0.4385),
    ("16-QAM", 4, 0.6016),
    ("64-QAM", 6, 0.8525),
    ("256-QAM", 8, 0.9258),
)


class Los(enum.Enum):
    LOS = "LOS"
    NLOS = "NLOS"


def prb_available(bandwidth_hz: float) -> int:
    mhz = bandwidth_hz / 1e6
    for key, prbs in PRB_TABLE.items():
        if abs(key - mhz) < 1e-6:
            return prbs
    raise ValueError(f"no PRB count known for a {mhz:g} MHz channel")


@dataclass(frozen=True)
class RadioConfig:
    name: str
    ptx_dbm: float
    gtx_dbi: float
    grx_dbi: float
    fc_hz: float
    band_min_hz: float
    band_max_hz: float
    bandwidth_hz: float
    beamwidth_deg: float
    overhead: float
    antenna_streams: int = 1
    thresholds_dbm: tuple[float, ...] = ()
    prb: int | None = None

    def __post_init__(self):
        if not self.band_min_hz < self.band_max_hz:
            raise ValueError(f"{self.name}: band_min must be below band_max")
        if self.bandwidth_hz <= 0 or self.bandwidth_hz > self.band_max_hz - self.band_min_hz + 1e-6:
            raise ValueError(f"{self.name}: channel bandwidth does not fit in the band")
        if self.beamwidth_deg <= 0 or (360.0 / self.beamwidth_deg) % 1 > 1e-9:
            raise ValueError(f"{self.name}: beamwidth must divide 360 degrees")
        if not 0 <= self.overhead < 1:
            raise ValueError(f"{self.name}: overhead must lie in [0, 1)")
        if self.antenna_streams < 1:
            raise ValueError(f"{self.name}: antenna_streams must be >= 1")
        if len(self.thresholds_dbm) != len(MODULATIONS):
            raise ValueError(f"{self.name}: expected {len(MODULATIONS)} sensitivity thresholds")
        if any(b <= a for a, b in zip(self.thresholds_dbm, self.thresholds_dbm[1:])):
            raise ValueError(f"{self.name}: thresholds must be strictly increasing")
        expected = prb_available(self.bandwidth_hz)
        if self.prb is None:
            object.__setattr__(self, "prb", expected)
        elif self.prb != expected:
            raise ValueError(f"{self.name}: {self.prb} PRBs inconsistent with bandwidth")

    @property
    def fc_ghz(self) -> float:
        return self.fc_hz / 1e9

    @property
    def eirp_dbm(self) -> float:
        return self.ptx_dbm + self.gtx_dbi + self.grx_dbi


LTE_DEFAULT = RadioConfig(
    name="lte", ptx_dbm=35.0, gtx_dbi=15.0, grx_dbi=0.0, fc_hz=1850e6,
    band_min_hz=1805e6, band_max_hz=1880e6, bandwidth_hz=15e6, beamwidth_deg=120.0,
    overhead=0.25, thresholds_dbm=(-92.2, -81.2, -75.2, -70.2),
)
NN_DEFAULT = RadioConfig(
    name="nn", ptx_dbm=30.0, gtx_dbi=16.0, grx_dbi=0.0, fc_hz=1850e6,
    band_min_hz=1805e6, band_max_hz=1880e6, bandwidth_hz=20e6, beamwidth_deg=60.0,
    overhead=0.25, thresholds_dbm=(-91.0, -80.0, -74.0, -69.0),
)


@dataclass(frozen=True)
class McsEntry:
    name: str
    bits_per_symbol: int
    coding_rate: float
    sensitivity_dbm: float
    datarate_bps: float


@dataclass(frozen=True)
class McsTable:
    entries: tuple[McsEntry, ...]
    _levels: np.ndarray = field(init=False, repr=False, compare=False)
    _rates: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty MCS table")
        object.__setattr__(self, "_levels", np.array([e.sensitivity_dbm for e in self.entries]))
        object.__setattr__(self, "_rates", np.array([e.datarate_bps for e in self.entries]))

    @property
    def lowest_sensitivity(self) -> float:
        return self.entries[0].sensitivity_dbm

    @property
    def max_rate(self) -> float:
        return self.entries[-1].datarate_bps

    def rates(self, prx: np.ndarray) -> np.ndarray:
        """Vectorised :func:`select_mcs`: datarate per sample, 0 where unserved."""
        idx = np.searchsorted(self._levels, np.asarray(prx, dtype=float), side="right") - 1
        return np.where(idx >= 0, self._rates[np.clip(idx, 0, None)], 0.0)


def breakpoint_distance(h_b: float, h_u: float, fc_hz: float) -> float:
    return h_b * h_u * fc_hz / SPEED_OF_LIGHT


def path_loss(d, fc_ghz: float, los, h_b, h_u: float, sf=0.0):
    """Urban-macro path loss in dB.

    ``los`` is a :class:`Los` or a boolean array (True = LOS); ``d``, ``h_b``
    and ``sf`` may be arrays. The breakpoint distance takes the carrier in Hz.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss needs a positive distance")
    if isinstance(los, Los):
        los = los is Los.LOS
    los = np.asarray(los, dtype=bool)
    h_b = np.asarray(h_b, dtype=float)
    d_bp = breakpoint_distance(h_b, h_u, fc_ghz * 1e9)
    log_f = 20.0 * math.log10(fc_ghz)
    pl_los = 28.0 + 40.0 * np.log10(d) + log_f - 9.0 * np.log10(d_bp**2 + (h_b - h_u) ** 2)
    pl_nlos = 13.54 + 39.08 * np.log10(d) + log_f - 0.6 * (h_u - 1.5)
    out = np.where(los, pl_los, pl_nlos) + sf
    return float(out) if out.ndim == 0 else out


def shadow_sigma(los: Los) -> float:
    return SIGMA_LOS_DB if los is Los.LOS else SIGMA_NLOS_DB


def draw_shadow_fading(los: Los, rng: np.random.Generator, size=None):
    return rng.normal(0.0, shadow_sigma(los), size=size)


def received_power(cfg: RadioConfig, pl):
    return cfg.ptx_dbm + cfg.gtx_dbi + cfg.grx_dbi - pl


def build_mcs_table(cfg: RadioConfig, thresholds: Sequence[float] | None = None) -> McsTable:
    """Theoretical PHY rate per modulation: two slots of PRB symbols per ms, less overhead."""
    thresholds = tuple(cfg.thresholds_dbm if thresholds is None else thresholds)
    if len(thresholds) != len(MODULATIONS):
        raise ValueError(f"expected {len(MODULATIONS)} thresholds, got {len(thresholds)}")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    prbs = prb_available(cfg.bandwidth_hz)
    symbols = prbs * SYMBOLS_PER_PRB
    entries = []
    for (name, bits, rate), level in zip(MODULATIONS, thresholds):
        d = 2 * symbols * bits * 1000 * (1 - cfg.overhead) * cfg.antenna_streams
        entries.append(McsEntry(name, bits, rate, float(level), float(d)))
    return McsTable(tuple(entries))


def select_mcs(prx: float, table: McsTable) -> McsEntry | None:
    best = None
    for entry in table.entries:
        if entry.sensitivity_dbm <= prx:
            best = entry
    return best


def max_concurrent_users(cfg: RadioConfig) -> int:
    sectors = round(360.0 / cfg.beamwidth_deg)
    channels = math.floor((cfg.band_max_hz - cfg.band_min_hz) / cfg.bandwidth_hz + 1e-9)
    return sectors * channels
