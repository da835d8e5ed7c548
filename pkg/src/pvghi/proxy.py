"""Forward model from GHI to per-orientation specific PV power.

The chain per timestep and orientation is: split GHI into direct and
diffuse (DISC), project onto the tilted plane (Hay-Davies with ground
reflection), correct the beam for reflection losses (ASHRAE incidence
angle modifier), derate for cell temperature, and apply the combined
module+inverter efficiency curve. The result is a specific power in
W/m^2; multiplying by a plant's coefficient vector (m^2) gives watts.

Everything is pure and elementwise in time, so the sensitivity of the
output to GHI is a per-timestep forward difference.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import InputError
from .solar import (
    SolarPosition,
    Orientation,
    angle_of_incidence,
    day_of_year,
    extraterrestrial_normal,
    relative_airmass,
)

DISC_ZENITH_CUTOFF = np.deg2rad(87.0)
SEA_LEVEL_PRESSURE = 101325.0


@dataclass(frozen=True)
class ProxyParams:
    """Constants of the power chain (crystalline silicon defaults)."""

    k1: float = 0.05            # IAM coefficient
    phi: float = 3.14e-2        # cell heating, K m^2/W
    gamma: float = -4.3e-3      # power temperature coefficient, 1/K
    t_ref: float = 25.0         # reference cell temperature, degC
    i_stc: float = 1000.0       # reference irradiance, W/m^2
    k2: float = 0.942           # efficiency curve constant
    k3: float = -5.02e-2        # efficiency curve ln term
    k4: float = -3.77e-2        # efficiency curve ln^2 term
    i_min: float = 10.0         # efficiency cutoff, W/m^2
    iam_form: str = "secant"    # "secant" (physical) or "cot" (compat)

    def __post_init__(self):
        if self.i_stc <= 0:
            raise InputError("i_stc must be positive")
        if self.iam_form not in ("secant", "cot"):
            raise InputError(f"unknown iam_form: {self.iam_form}")


@dataclass(frozen=True)
class IrradianceComponents:
    """Beam, diffuse and ground-reflected irradiance on a tilted plane."""

    dni: np.ndarray
    dhi: np.ndarray
    i_b: np.ndarray
    i_d: np.ndarray
    i_g: np.ndarray


@dataclass(frozen=True)
class ProxyMatrix:
    """T x n_p matrix of simulated specific power, one column per orientation."""

    values: np.ndarray
    orientations: tuple[Orientation, ...]


def pressure_at_altitude(altitude_m: float) -> float:
    """Barometric pressure, Pa, for the standard atmosphere."""
    return SEA_LEVEL_PRESSURE * (1.0 - 2.25577e-5 * altitude_m) ** 5.25588


def disc_dni(ghi, sp: SolarPosition, doy, pressure: float = SEA_LEVEL_PRESSURE):
    """Direct normal irradiance from GHI via the DISC regression model.

    Returns 0 for zero GHI or zenith at or beyond 87 deg; output is
    clamped to [0, extraterrestrial normal].
    """
    ghi = np.asarray(ghi, dtype=float)
    zenith = np.asarray(sp.zenith, dtype=float)
    e0 = extraterrestrial_normal(doy)

    usable = (ghi > 0) & (zenith < DISC_ZENITH_CUTOFF)
    cos_zen = np.maximum(np.cos(zenith), np.cos(DISC_ZENITH_CUTOFF))
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        kt = np.clip(ghi / (e0 * cos_zen), 0.0, 1.0)

        am_rel = np.where(usable, relative_airmass(zenith), 1.0)
        am = np.minimum(am_rel * pressure / SEA_LEVEL_PRESSURE, 12.0)

        kt2 = kt * kt
        kt3 = kt2 * kt
        low = kt <= 0.6
        a = np.where(
            low,
            0.512 - 1.56 * kt + 2.286 * kt2 - 2.222 * kt3,
            -5.743 + 21.77 * kt - 27.49 * kt2 + 11.56 * kt3,
        )
        b = np.where(low, 0.37 + 0.962 * kt, 41.4 - 118.5 * kt + 66.05 * kt2 + 31.9 * kt3)
        c = np.where(
            low,
            -0.28 + 0.932 * kt - 2.048 * kt2,
            -47.01 + 184.2 * kt - 222.0 * kt2 + 73.81 * kt3,
        )
        delta_kn = a + b * np.exp(c * am)
        knc = (
            0.866
            - 0.122 * am
            + 0.0121 * am * am
            - 0.000653 * am**3
            + 1.4e-5 * am**4
        )
        dni = (knc - delta_kn) * e0
    dni = np.clip(dni, 0.0, e0)
    return np.where(usable, dni, 0.0)


def dhi_from(ghi, sp: SolarPosition, dni):
    """Diffuse horizontal irradiance left after removing the beam share."""
    return np.maximum(np.asarray(ghi, float) - np.cos(sp.zenith) * np.asarray(dni, float), 0.0)


def transpose_hay_davies(
    ghi, dhi, dni, sp: SolarPosition, orientation: Orientation, e0, albedo: float
) -> IrradianceComponents:
    """Project horizontal irradiance onto a tilted plane.

    Beam by incidence-angle projection, diffuse by the Hay-Davies
    anisotropy blend, ground reflection isotropic with the given albedo.
    The beam ratio denominator is floored at cos(87 deg) to avoid the
    horizon blow-up.
    """
    ghi = np.asarray(ghi, float)
    dhi = np.asarray(dhi, float)
    dni = np.asarray(dni, float)
    aoi = angle_of_incidence(sp, orientation)
    cos_aoi = np.maximum(np.cos(aoi), 0.0)
    i_b = dni * cos_aoi
    i_g = albedo * ghi * (1.0 - np.cos(orientation.tilt)) / 2.0
    anisotropy = np.clip(dni / np.asarray(e0, float), 0.0, 1.0)
    r_b = cos_aoi / np.maximum(np.cos(sp.zenith), np.cos(DISC_ZENITH_CUTOFF))
    iso = (1.0 + np.cos(orientation.tilt)) / 2.0
    i_d = dhi * (anisotropy * r_b + (1.0 - anisotropy) * iso)
    return IrradianceComponents(
        dni=dni,
        dhi=dhi,
        i_b=np.maximum(i_b, 0.0),
        i_d=np.maximum(i_d, 0.0),
        i_g=np.maximum(i_g, 0.0),
    )


def incidence_modifier(aoi, params: ProxyParams):
    """Beam reflection-loss factor in [0, 1].

    The physical form uses the secant of the incidence angle (ASHRAE);
    the "cot" form is kept only for comparison studies since it breaks
    down at normal incidence.
    """
    aoi = np.asarray(aoi, dtype=float)
    capped = np.minimum(aoi, np.pi / 2 - 1e-9)
    with np.errstate(divide="ignore", over="ignore"):
        if params.iam_form == "secant":
            raw = 1.0 - params.k1 * (1.0 / np.cos(capped) - 1.0)
        else:
            raw = 1.0 - params.k1 * (1.0 / np.tan(np.maximum(capped, 1e-12)) - 1.0)
    iam = np.clip(raw, 0.0, 1.0)
    return np.where(aoi < np.pi / 2, iam, 0.0)


def apply_iam(components: IrradianceComponents, aoi, params: ProxyParams):
    """Combine plane-of-array components with reflection losses."""
    iam = incidence_modifier(aoi, params)
    return iam * components.i_b + 0.95 * (components.i_d + components.i_g)


def apply_temperature(i_aoi, t_ambient, params: ProxyParams):
    """Derate irradiance-equivalent power for cell temperature.

    The cell runs hotter than ambient in proportion to the absorbed
    irradiance; output scales linearly with the excess over the
    reference temperature.
    """
    i_aoi = np.asarray(i_aoi, dtype=float)
    t_cell = np.asarray(t_ambient, dtype=float) + params.phi * i_aoi
    return np.maximum(i_aoi * (1.0 + params.gamma * (t_cell - params.t_ref)), 0.0)


def efficiency(i_aoit, params: ProxyParams):
    """Combined module and inverter efficiency as a function of irradiance.

    Log-quadratic in the irradiance ratio, clamped to [0, 1], with a
    hard cutoff below i_min where the curve diverges.
    """
    i_aoit = np.asarray(i_aoit, dtype=float)
    safe = np.maximum(i_aoit, 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        ln_r = np.log(safe / params.i_stc)
        eta = params.k2 + params.k3 * ln_r + params.k4 * ln_r * ln_r
    eta = np.clip(eta, 0.0, 1.0)
    return np.where(i_aoit >= params.i_min, eta, 0.0)


def _chain_columns(
    ghi: np.ndarray,
    sp: SolarPosition,
    doy: np.ndarray,
    e0: np.ndarray,
    t_ambient: np.ndarray,
    orientations,
    params: ProxyParams,
    albedo: float,
    pressure: float,
) -> np.ndarray:
    """Evaluate the full chain for every orientation; (T, n_p) array."""
    dni = disc_dni(ghi, sp, doy, pressure)
    dhi = dhi_from(ghi, sp, dni)
    out = np.empty((len(ghi), len(orientations)))
    for j, orient in enumerate(orientations):
        comp = transpose_hay_davies(ghi, dhi, dni, sp, orient, e0, albedo)
        aoi = angle_of_incidence(sp, orient)
        i_aoi = apply_iam(comp, aoi, params)
        i_aoit = apply_temperature(i_aoi, t_ambient, params)
        out[:, j] = efficiency(i_aoit, params) * i_aoit
    out[~sp.daytime, :] = 0.0
    return out


def proxy_matrix(
    ghi: np.ndarray,
    sp: SolarPosition,
    timestamps: np.ndarray,
    t_ambient: np.ndarray,
    orientations,
    params: ProxyParams,
    albedo: float = 0.2,
    pressure: float = SEA_LEVEL_PRESSURE,
    threads: int = 1,
) -> ProxyMatrix:
    """Simulated specific power for every orientation at the given GHI.

    ``ghi`` must be non-negative and as long as the timestamps. Rows at
    night are zero. With ``threads`` > 1 the time axis is processed in
    chunks; results are identical to the single-threaded evaluation.
    """
    ghi = np.asarray(ghi, dtype=float)
    if ghi.shape[0] != len(timestamps):
        raise InputError("ghi length does not match timestamps")
    doy = day_of_year(timestamps)
    e0 = extraterrestrial_normal(doy)
    t_ambient = np.asarray(t_ambient, dtype=float)

    if threads and threads > 1 and len(ghi) > 256:
        bounds = np.linspace(0, len(ghi), threads + 1).astype(int)
        chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

        def run(span):
            lo, hi = span
            sub = SolarPosition(sp.azimuth[lo:hi], sp.zenith[lo:hi])
            return _chain_columns(
                ghi[lo:hi], sub, doy[lo:hi], e0[lo:hi], t_ambient[lo:hi],
                orientations, params, albedo, pressure,
            )

        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
        values = np.vstack(parts)
    else:
        values = _chain_columns(
            ghi, sp, doy, e0, t_ambient, orientations, params, albedo, pressure
        )
    return ProxyMatrix(values=values, orientations=tuple(orientations))


def proxy_gradient(
    ghi: np.ndarray,
    sp: SolarPosition,
    timestamps: np.ndarray,
    t_ambient: np.ndarray,
    orientations,
    params: ProxyParams,
    albedo: float = 0.2,
    pressure: float = SEA_LEVEL_PRESSURE,
    delta_ghi: float = 1.0,
    base: ProxyMatrix | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Forward-difference sensitivity of the proxy matrix to GHI.

    The chain is elementwise in time, so only same-timestep entries are
    non-zero and the result is stored dense as (T, n_p). ``base`` lets
    callers reuse an already computed matrix at the current GHI.
    """
    if delta_ghi <= 0:
        raise InputError("delta_ghi must be positive")
    if base is None:
        base = proxy_matrix(
            ghi, sp, timestamps, t_ambient, orientations, params, albedo, pressure,
            threads=threads,
        )
    bumped = proxy_matrix(
        np.asarray(ghi, float) + delta_ghi,
        sp, timestamps, t_ambient, orientations, params, albedo, pressure,
        threads=threads,
    )
    return (bumped.values - base.values) / delta_ghi
