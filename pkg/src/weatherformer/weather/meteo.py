"""Derived meteorological variables: Tetens saturation vapour pressure, actual
vapour pressure / deficit, and FAO-56 Penman-Monteith reference ET.

All functions accept scalars or numpy arrays and compute in 64-bit.
"""
from __future__ import annotations

import numpy as np

TETENS_MIN_C = -90.0
TETENS_MAX_C = 60.0
STEFAN_BOLTZMANN = 4.903e-9  # MJ K^-4 m^-2 day^-1
ALBEDO = 0.23


def saturation_vapor_pressure(temp_c):
    """Saturation vapour pressure in kPa (Tetens).

    Liquid branch for ``temp_c > 0``, ice branch for ``temp_c <= 0``; both give
    0.6108 kPa at exactly 0 degC.
    """
    x = np.asarray(temp_c, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("temperature must be finite")
    if (x < TETENS_MIN_C).any() or (x > TETENS_MAX_C).any():
        raise ValueError(f"temperature outside [{TETENS_MIN_C}, {TETENS_MAX_C}] degC")
    liquid = 17.27 * x / (x + 237.3)
    ice = 21.87 * x / (x + 265.5)
    out = 0.6108 * np.exp(np.where(x > 0, liquid, ice))
    return out if out.ndim else float(out)


def actual_vapor_pressure_and_deficit(temp_c, relative_humidity):
    """Return ``(VAP, VAD)`` in kPa with VAP = e_s * rh and VAD = e_s - VAP."""
    rh = np.asarray(relative_humidity, dtype=np.float64)
    if (rh < 0).any() or (rh > 1).any() or not np.isfinite(rh).all():
        raise ValueError("relative humidity must be a fraction in [0, 1]")
    es = np.asarray(saturation_vapor_pressure(temp_c))
    vap = es * rh
    vad = es - vap
    if vap.ndim == 0:
        return float(vap), float(vad)
    return vap, vad


def reference_et0(delta, net_radiation, soil_flux, temp_c, wind_2m, es, ea, gamma):
    """FAO-56 Penman-Monteith reference evapotranspiration in mm/day.

    Parameters
    ----------
    delta : slope of the saturation vapour pressure curve (kPa/degC)
    net_radiation, soil_flux : Rn and G (MJ m^-2 day^-1)
    temp_c : mean daily air temperature at 2 m (degC)
    wind_2m : wind speed at 2 m (m/s)
    es, ea : saturation and actual vapour pressure (kPa)
    gamma : psychrometric constant (kPa/degC)
    """
    args = [np.asarray(a, dtype=np.float64) for a in
            (delta, net_radiation, soil_flux, temp_c, wind_2m, es, ea, gamma)]
    if not all(np.isfinite(a).all() for a in args):
        raise ValueError("ET0 inputs must be finite")
    delta, rn, g, t, u2, es, ea, gamma = args
    if (t <= -273).any():
        raise ValueError("temperature at or below -273 degC")
    denom = delta + gamma * (1 + 0.34 * u2)
    if (denom <= 0).any():
        raise ValueError("non-positive ET0 denominator")
    num = 0.408 * delta * (rn - g) + gamma * (900.0 / (t + 273.0)) * u2 * (es - ea)
    out = num / denom
    return out if out.ndim else float(out)


def vapor_pressure_slope(temp_c):
    """Slope of the saturation vapour pressure curve (kPa/degC) in the FAO-56 form."""
    t = np.asarray(temp_c, dtype=np.float64)
    es = 0.6108 * np.exp(17.27 * t / (t + 237.3))
    return 4098.0 * es / (t + 237.3) ** 2


def psychrometric_constant(pressure_kpa):
    return 0.665e-3 * np.asarray(pressure_kpa, dtype=np.float64)


def net_radiation(sw_down, lw_down, temp_c, albedo: float = ALBEDO):
    """Net radiation from downward short/long-wave fluxes and grey-body emission."""
    t_k = np.asarray(temp_c, dtype=np.float64) + 273.16
    return (1 - albedo) * np.asarray(sw_down, dtype=np.float64) + lw_down - STEFAN_BOLTZMANN * t_k ** 4


def derive_columns(values: np.ndarray) -> np.ndarray:
    """Compute the ET0, VAP and VAD columns from the 28 downloaded columns.

    ``values`` is ``(..., 31)`` or ``(..., 28)`` in catalog order; returns the
    ``(..., 31)`` array in 64-bit with the derived columns filled. Soil heat
    flux is taken as 0 (daily step) and temperatures are clipped into the
    Tetens range.
    """
    from .catalog import INDEX

    v = np.asarray(values, dtype=np.float64)
    if v.shape[-1] == 28:
        v = np.concatenate([v, np.zeros(v.shape[:-1] + (3,))], axis=-1)
    out = v.copy()
    t = np.clip(v[..., INDEX["T2M"]], TETENS_MIN_C, TETENS_MAX_C)
    rh = np.clip(v[..., INDEX["RH2M"]], 0.0, 1.0)
    vap, vad = actual_vapor_pressure_and_deficit(t, rh)
    es = vap + vad
    rn = net_radiation(v[..., INDEX["ALLSKY_SFC_SW_DWN"]], v[..., INDEX["ALLSKY_SFC_LW_DWN"]], t)
    wind = np.maximum(v[..., INDEX["WS2M"]], 0.0)
    out[..., INDEX["ET0"]] = reference_et0(vapor_pressure_slope(t), rn, 0.0, t, wind, es, vap,
                                           psychrometric_constant(v[..., INDEX["PS"]]))
    out[..., INDEX["VAP"]] = vap
    out[..., INDEX["VAD"]] = vad
    return out
