"""Multi-plant signal fusion: shadow-aware trust and outlier gating.

Each plant gets a map over sun positions of its relative power
prediction error under clear-sky input; positions where the model
systematically over-predicts (shading, horizon) earn the plant less
trust there. Independently, per-timestep errors far outside the
interquartile fences across plants are gated out of the objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .data import PlantSeries
from .solar import SolarPosition


@dataclass(frozen=True)
class ShadowMap:
    """Clear-sky relative error over (zenith, azimuth) bins.

    ``values[i, j]`` covers zenith bin i and azimuth bin j; bins without
    enough samples are invalid and excluded from queries.
    """

    values: np.ndarray
    valid: np.ndarray
    bin_deg: float

    @property
    def n_zenith(self) -> int:
        return self.values.shape[0]

    @property
    def n_azimuth(self) -> int:
        return self.values.shape[1]


def build_shadow_map(
    plant: PlantSeries,
    estimated_clear_power: np.ndarray,
    pnom: float,
    sp: SolarPosition,
    bin_deg: float = 2.0,
    quantile: float = 0.01,
    min_samples: int = 10,
    power_floor_frac: float = 0.02,
) -> ShadowMap:
    """Per-bin low quantile of (predicted clear power - measured) / measured.

    Samples below ``power_floor_frac`` of the plant rating are dropped to
    guard the division. Shaded sun positions show up as elevated values
    because even the best observed samples fall short of the clear-sky
    prediction there.
    """
    n_zen = int(np.ceil(90.0 / bin_deg))
    n_az = int(np.ceil(360.0 / bin_deg))
    values = np.full((n_zen, n_az), np.nan)
    valid = np.zeros((n_zen, n_az), dtype=bool)

    power = plant.power
    ok = (
        sp.daytime
        & np.isfinite(power)
        & (power >= power_floor_frac * pnom)
        & np.isfinite(estimated_clear_power)
    )
    if not ok.any():
        return ShadowMap(values=values, valid=valid, bin_deg=bin_deg)
    rel = (estimated_clear_power[ok] - power[ok]) / power[ok]
    zen_idx = np.minimum(
        (np.rad2deg(sp.zenith[ok]) // bin_deg).astype(int), n_zen - 1
    )
    az_idx = np.minimum(
        (np.rad2deg(np.mod(sp.azimuth[ok], 2 * np.pi)) // bin_deg).astype(int),
        n_az - 1,
    )
    flat = zen_idx * n_az + az_idx
    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    rel_sorted = rel[order]
    starts = np.flatnonzero(np.diff(flat_sorted, prepend=-1))
    bounds = np.append(starts, len(flat_sorted))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - lo < min_samples:
            continue
        cell = flat_sorted[lo]
        values[cell // n_az, cell % n_az] = np.percentile(
            rel_sorted[lo:hi], 100.0 * quantile
        )
        valid[cell // n_az, cell % n_az] = True
    return ShadowMap(values=values, valid=valid, bin_deg=bin_deg)


def smooth_threshold_map(
    shadow: ShadowMap, bandwidth_deg: float = 6.0, floor: float = 0.02
) -> ShadowMap:
    """Gaussian smoothing over valid bins, then a lower threshold.

    The kernel is normalized by its mass over valid bins so constants
    pass through unchanged; azimuth wraps around. The floor bounds the
    inverse map used for trust weights.
    """
    sigma_bins = bandwidth_deg / shadow.bin_deg
    filled = np.where(shadow.valid, shadow.values, 0.0)
    mask = shadow.valid.astype(float)
    num = gaussian_filter(filled, sigma=sigma_bins, mode=("constant", "wrap"), cval=0.0)
    den = gaussian_filter(mask, sigma=sigma_bins, mode=("constant", "wrap"), cval=0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        smoothed = num / den
    reachable = den > 1e-12
    out = np.where(reachable, np.maximum(smoothed, floor), np.nan)
    return ShadowMap(values=out, valid=reachable, bin_deg=shadow.bin_deg)


def lookup_map(shadow: ShadowMap, sp: SolarPosition, floor: float = 0.02) -> np.ndarray:
    """Map values at each sun position; invalid or night bins give the floor."""
    zen_deg = np.rad2deg(np.atleast_1d(sp.zenith))
    az_deg = np.rad2deg(np.mod(np.atleast_1d(sp.azimuth), 2 * np.pi))
    zen_idx = np.clip((zen_deg // shadow.bin_deg).astype(int), 0, shadow.n_zenith - 1)
    az_idx = np.clip((az_deg // shadow.bin_deg).astype(int), 0, shadow.n_azimuth - 1)
    vals = shadow.values[zen_idx, az_idx]
    ok = shadow.valid[zen_idx, az_idx] & (zen_deg < 90.0) & np.isfinite(vals)
    return np.where(ok, vals, floor)


def trust_weights(
    maps: list[ShadowMap], sp: SolarPosition, floor: float = 0.02
) -> np.ndarray:
    """(T, n_plants) weights, each row summing to one.

    A plant's weight is proportional to the inverse of its smoothed
    clear-sky error at the current sun position, so plants shaded at
    this sun position count less.
    """
    dists = np.column_stack(
        [1.0 / np.maximum(lookup_map(m, sp, floor), floor) for m in maps]
    )
    total = dists.sum(axis=1, keepdims=True)
    return dists / total


def tukey_gate(errors: np.ndarray, k_q: float = 1.5) -> np.ndarray:
    """Keep-mask over one timestep's errors by interquartile fences.

    Entries strictly outside [Q25 - k_q*IQ, Q75 + k_q*IQ] are dropped.
    With two or fewer finite entries the quartiles are meaningless and
    everything is kept. NaN entries (missing plants) are kept as True
    and must be masked by the caller.
    """
    e = np.asarray(errors, dtype=float)
    keep = np.ones(e.shape, dtype=bool)
    finite = np.isfinite(e)
    if finite.sum() <= 2:
        return keep
    q25, q75 = np.percentile(e[finite], [25.0, 75.0], method="linear")
    iq = q75 - q25
    lo = q25 - k_q * iq
    hi = q75 + k_q * iq
    keep[finite] = (e[finite] >= lo) & (e[finite] <= hi)
    return keep


def tukey_gate_matrix(error_matrix: np.ndarray, k_q: float = 1.5) -> np.ndarray:
    """Row-wise Tukey gate over a (T, n_plants) error matrix."""
    e = np.asarray(error_matrix, dtype=float)
    keep = np.ones(e.shape, dtype=bool)
    finite = np.isfinite(e)
    enough = finite.sum(axis=1) > 2
    if not enough.any():
        return keep
    rows = np.flatnonzero(enough)
    with np.errstate(invalid="ignore"):
        q25 = np.nanpercentile(e[rows], 25.0, axis=1)
        q75 = np.nanpercentile(e[rows], 75.0, axis=1)
    iq = q75 - q25
    lo = (q25 - k_q * iq)[:, None]
    hi = (q75 + k_q * iq)[:, None]
    sub = e[rows]
    keep[rows] = np.where(np.isfinite(sub), (sub >= lo) & (sub <= hi), True)
    return keep


def export_shadow_map_csv(shadow: ShadowMap, path) -> None:
    """Dump a map as (azimuth_bin, zenith_bin, value, valid) rows."""
    with open(path, "w") as fh:
        fh.write("azimuth_bin_deg,zenith_bin_deg,value,valid\n")
        for i in range(shadow.n_zenith):
            for j in range(shadow.n_azimuth):
                v = shadow.values[i, j]
                fh.write(
                    f"{j * shadow.bin_deg},{i * shadow.bin_deg},"
                    f"{'' if np.isnan(v) else repr(float(v))},"
                    f"{int(shadow.valid[i, j])}\n"
                )
