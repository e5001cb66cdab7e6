"""Sub-THz link budget through stacked tissue layers.

Implements per-layer and stacked path loss (spreading + molecular
absorption), round-trip backscattered power, molecular-absorption noise
PSD, and Shannon capacity of the forward and backscattered links using a
flat signal PSD over narrow sub-bands.

The printed channel expression e^{-mu*d} * (lambda_g / 4 pi d)^2 is a path
gain; losses here are its negated dB value, so all loss terms are positive
dB for d >= lambda_g / 4 pi. Absolute powers are dB relative to 1 W (dBW).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Tuple

import numpy as np

from .constants import BODY_TEMPERATURE_K, BOLTZMANN, SPEED_OF_LIGHT
from .dielectrics import DielectricModel, optical_properties, refractive_index
from .errors import DomainError, ValidationError

DB_PER_NEPER = 10.0 * np.log10(np.e)

FREQ_MIN_HZ = 0.01e12
FREQ_MAX_HZ = 10e12


@dataclass(frozen=True)
class TissueLayer:
    dielectric: DielectricModel
    thickness: float  # m

    def __post_init__(self):
        if self.thickness <= 0:
            raise ValidationError("layer thickness must be strictly positive")


@dataclass(frozen=True)
class LayerStack:
    """Ordered tissue layers, outermost (skin surface) first."""

    layers: Tuple[TissueLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValidationError("layer stack must not be empty")

    @property
    def total_thickness(self) -> float:
        return sum(layer.thickness for layer in self.layers)


@dataclass(frozen=True)
class LinkParams:
    """Transmit power, antenna gains (linear) and band plan of a link."""

    p_t: float  # W, transmit peak power
    g_t: float  # linear
    g_r: float  # linear
    band: Tuple[float, float]  # (f_min, f_max), Hz
    delta_f: float = 1e9  # sub-band width, Hz
    t0: float = BODY_TEMPERATURE_K  # K

    def __post_init__(self):
        f_min, f_max = self.band
        if not f_min < f_max:
            raise ValidationError("band requires f_min < f_max")
        if self.delta_f <= 0 or self.delta_f > (f_max - f_min):
            raise ValidationError("delta_f must be in (0, f_max - f_min]")
        if self.t0 <= 0:
            raise ValidationError("reference temperature must be positive")

    @property
    def bandwidth(self) -> float:
        return self.band[1] - self.band[0]

    def subband_centers(self) -> np.ndarray:
        n = int(round(self.bandwidth / self.delta_f))
        return self.band[0] + (np.arange(n) + 0.5) * self.delta_f


@dataclass(frozen=True)
class ChannelConfig:
    """Modelling choices that the figures do not pin down."""

    absorption_wavelength: str = "effective"  # or "vacuum"
    spreading: str = "per_layer"  # or "total_distance"
    backscatter_efficiency_db: float = 0.0
    snr_cap_db: float = 300.0
    sensitivity: float = 0.25e-15  # W/Hz^1/2

    def __post_init__(self):
        if self.absorption_wavelength not in ("effective", "vacuum"):
            raise ValidationError("absorption_wavelength must be 'effective' or 'vacuum'")
        if self.spreading not in ("per_layer", "total_distance"):
            raise ValidationError("spreading must be 'per_layer' or 'total_distance'")


DEFAULT_CONFIG = ChannelConfig()


@dataclass(frozen=True)
class LinkBudget:
    frequency: float
    loss_spread_db: float
    loss_abs_db: float
    loss_total_db: float
    p_received_backscatter_db: float  # dBW
    noise_psd: float  # W/Hz


def _check_channel_frequency(frequency: float) -> float:
    f = float(frequency)
    if not (FREQ_MIN_HZ <= f <= FREQ_MAX_HZ):
        raise DomainError(f"frequency {f:.3e} Hz outside supported [0.01, 10] THz")
    return f


def path_loss_layer(
    layer: TissueLayer,
    frequency: float,
    distance: float,
    config: ChannelConfig = DEFAULT_CONFIG,
) -> Tuple[float, float]:
    """(spreading loss dB, absorption loss dB) for one layer over `distance` m."""
    f = _check_channel_frequency(frequency)
    if distance <= 0:
        raise DomainError("distance must be strictly positive")
    opt = optical_properties(layer.dielectric, f, config.absorption_wavelength)
    loss_abs_db = DB_PER_NEPER * opt.mu_abs * distance
    loss_spread_db = 20.0 * np.log10(4.0 * np.pi * distance / opt.lambda_g)
    return loss_spread_db, loss_abs_db


@dataclass(frozen=True)
class StackLoss:
    loss_spread_db: float
    loss_abs_db: float

    @property
    def loss_total_db(self) -> float:
        return self.loss_spread_db + self.loss_abs_db


def stack_loss(
    stack: LayerStack,
    frequency: float,
    config: ChannelConfig = DEFAULT_CONFIG,
) -> StackLoss:
    """One-way loss components over the full stack, summed in dB."""
    f = _check_channel_frequency(frequency)
    spread = 0.0
    absorb = 0.0
    for layer in stack.layers:
        s, a = path_loss_layer(layer, f, layer.thickness, config)
        absorb += a
        spread += s
    if config.spreading == "total_distance":
        # single Friis term over the total depth using the innermost layer's
        # effective wavelength
        opt = optical_properties(stack.layers[-1].dielectric, f, config.absorption_wavelength)
        spread = 20.0 * np.log10(4.0 * np.pi * stack.total_thickness / opt.lambda_g)
    return StackLoss(loss_spread_db=spread, loss_abs_db=absorb)


def path_loss_stack(
    stack: LayerStack,
    frequency: float,
    config: ChannelConfig = DEFAULT_CONFIG,
) -> float:
    """Total one-way loss over the stacked layers, dB."""
    return stack_loss(stack, frequency, config).loss_total_db


def backscatter_power(
    stack: LayerStack,
    params: LinkParams,
    frequency: float,
    config: ChannelConfig = DEFAULT_CONFIG,
) -> float:
    """Round-trip received power at the reader, dBW."""
    loss = path_loss_stack(stack, frequency, config)
    p_t_db = 10.0 * np.log10(params.p_t)
    g_t_db = 10.0 * np.log10(params.g_t)
    g_r_db = 10.0 * np.log10(params.g_r)
    return p_t_db + g_t_db - 2.0 * loss + g_r_db + config.backscatter_efficiency_db


def noise_psd(
    stack: LayerStack,
    params: LinkParams,
    frequency: float,
) -> float:
    """Molecular-absorption noise PSD, W/Hz, bounded by k_B * T0.

    The absorption exponent is accumulated per layer as 4*pi*f*d_i*n''_i / c
    (vacuum-wavelength form, independent of the absorption_wavelength flag).
    """
    f = _check_channel_frequency(frequency)
    exponent = 0.0
    for layer in stack.layers:
        _, n_imag = refractive_index(layer.dielectric, f)
        exponent += 4.0 * np.pi * f * layer.thickness * n_imag / SPEED_OF_LIGHT
    return BOLTZMANN * params.t0 * -np.expm1(-exponent)


@dataclass(frozen=True)
class CapacityResult:
    bits_per_s: float
    snr_capped: bool  # any sub-band hit the configured SNR ceiling


def received_power_at_bns(
    stack: LayerStack,
    params: LinkParams,
    config: ChannelConfig = DEFAULT_CONFIG,
) -> float:
    """Total power (W) arriving at the sensor after one stack traversal.

    The flat forward PSD P_T / B is attenuated per sub-band by the one-way
    stack loss; the anchor-side gain G_T is applied once.
    """
    s_fwd = params.p_t / params.bandwidth
    total = 0.0
    for f in params.subband_centers():
        loss_db = path_loss_stack(stack, f, config)
        total += s_fwd * params.delta_f * 10.0 ** (-loss_db / 10.0)
    return total * params.g_t


def channel_capacity(
    stack: LayerStack,
    params: LinkParams,
    direction: str,
    config: ChannelConfig = DEFAULT_CONFIG,
) -> CapacityResult:
    """Shannon capacity of the forward or backscattered link, bits/s."""
    if direction not in ("forward", "backward"):
        raise DomainError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if direction == "forward":
        s_flat = params.p_t / params.bandwidth
    else:
        s_flat = received_power_at_bns(stack, params, config) / params.bandwidth
    snr_cap = 10.0 ** (config.snr_cap_db / 10.0)
    capped = False
    capacity = 0.0
    for f in params.subband_centers():
        if s_flat == 0.0:
            continue
        loss_lin = 10.0 ** (path_loss_stack(stack, f, config) / 10.0)
        noise = noise_psd(stack, params, f)
        if noise <= 0.0:
            snr = snr_cap
        else:
            snr = s_flat / (loss_lin * noise)
        if snr >= snr_cap:
            snr = snr_cap
            capped = True
        capacity += params.delta_f * np.log2(1.0 + snr)
    return CapacityResult(bits_per_s=capacity, snr_capped=capped)


def link_budget(
    stack: LayerStack,
    params: LinkParams,
    frequency: float,
    config: ChannelConfig = DEFAULT_CONFIG,
) -> LinkBudget:
    loss = stack_loss(stack, frequency, config)
    return LinkBudget(
        frequency=float(frequency),
        loss_spread_db=loss.loss_spread_db,
        loss_abs_db=loss.loss_abs_db,
        loss_total_db=loss.loss_total_db,
        p_received_backscatter_db=backscatter_power(stack, params, frequency, config),
        noise_psd=noise_psd(stack, params, frequency),
    )


def meets_sensitivity(
    stack: LayerStack,
    params: LinkParams,
    frequency: float,
    config: ChannelConfig = DEFAULT_CONFIG,
    reference_bandwidth: float = 1.0,
) -> bool:
    """True if round-trip received power clears the receiver sensitivity.

    Sensitivity is a noise-equivalent power density (W/Hz^1/2); the power
    threshold is sensitivity * sqrt(reference_bandwidth). The 1 Hz default
    makes 0.25 fW/Hz^1/2 equivalent to a -156 dBW power floor.
    """
    p_rx_db = backscatter_power(stack, params, frequency, config)
    p_rx = 10.0 ** (p_rx_db / 10.0)
    return p_rx >= config.sensitivity * np.sqrt(reference_bandwidth)


def sweep(
    stack: LayerStack,
    params: LinkParams,
    config: ChannelConfig = DEFAULT_CONFIG,
    include_capacity: bool = True,
) -> list:
    """Per-sub-band link budget rows for CSV emission."""
    rows = []
    cap_fwd = cap_back = float("nan")
    if include_capacity:
        cap_fwd = channel_capacity(stack, params, "forward", config).bits_per_s
        cap_back = channel_capacity(stack, params, "backward", config).bits_per_s
    for f in params.subband_centers():
        budget = link_budget(stack, params, f, config)
        rows.append({
            "frequency_hz": f,
            "loss_spread_db": budget.loss_spread_db,
            "loss_abs_db": budget.loss_abs_db,
            "loss_total_db": budget.loss_total_db,
            "p_rb_db": budget.p_received_backscatter_db,
            "noise_psd_w_hz": budget.noise_psd,
            "capacity_fwd_bps": cap_fwd,
            "capacity_back_bps": cap_back,
        })
    return rows


# --- stack definition files --------------------------------------------------

def load_stack(path=None, tissues=None) -> LayerStack:
    """Load a layer stack document; defaults to the shipped 2500 um stack."""
    from .dielectrics import default_tissues

    if tissues is None:
        tissues = default_tissues()
    if path is None:
        text = resources.files("nanoloc.assets").joinpath("stacks/default.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    layers = []
    for entry in doc["layers"]:
        name = entry["tissue"]
        if name not in tissues:
            raise ValidationError(f"stack references unknown tissue {name!r}")
        layers.append(TissueLayer(dielectric=tissues[name], thickness=entry["thickness_m"]))
    return LayerStack(layers=tuple(layers))


def default_stack() -> LayerStack:
    return load_stack(None)


def default_link_params() -> LinkParams:
    """Paper-style defaults: 5 kW peak power, 5.09 gains, 0.1-1 THz band."""
    return LinkParams(p_t=5000.0, g_t=5.09, g_r=5.09, band=(0.1e12, 1.0e12), delta_f=1e9)
