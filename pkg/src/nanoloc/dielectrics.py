"""Complex permittivity and derived optical properties of tissue layers.

Two relaxation models are supported: a double Debye model (used for blood,
which is dominated by free water) and a Havriliak-Negami model with an
optional static ionic conductivity term (used for dermis and epidermis).
From the complex relative permittivity the module derives the complex
refractive index, the effective in-medium wavelength and the molecular
absorption coefficient.

Sign convention: the imaginary part of eps_r is non-positive; losses are
carried downstream as a non-negative imaginary refractive index n''.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Tuple, Union

import numpy as np

from .constants import SPEED_OF_LIGHT, VACUUM_PERMITTIVITY
from .errors import DomainError, ValidationError


@dataclass(frozen=True)
class DoubleDebyeParams:
    """Two-term Debye relaxation parameters (relaxation times in seconds)."""

    eps_inf: float
    eps_1: float
    eps_2: float
    tau_1: float
    tau_2: float

    def __post_init__(self):
        if self.eps_inf <= 0:
            raise ValidationError(f"eps_inf must be positive, got {self.eps_inf}")
        if self.tau_1 <= 0 or self.tau_2 <= 0:
            raise ValidationError("relaxation times must be strictly positive")


@dataclass(frozen=True)
class HavriliakNegamiTerm:
    """One Havriliak-Negami relaxation term."""

    eps: float
    tau: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValidationError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (0.0 < self.beta <= 1.0):
            raise ValidationError(f"beta must lie in (0, 1], got {self.beta}")
        if self.tau <= 0:
            raise ValidationError("tau must be strictly positive")


@dataclass(frozen=True)
class HavriliakNegamiParams:
    """Havriliak-Negami relaxation with optional ionic conductivity (S/m)."""

    eps_inf: float
    terms: Tuple[HavriliakNegamiTerm, ...]
    sigma: float = 0.0

    def __post_init__(self):
        if self.eps_inf <= 0:
            raise ValidationError(f"eps_inf must be positive, got {self.eps_inf}")
        if self.sigma < 0:
            raise ValidationError("sigma must be non-negative")
        object.__setattr__(self, "terms", tuple(self.terms))


ModelParams = Union[DoubleDebyeParams, HavriliakNegamiParams]


@dataclass(frozen=True)
class DielectricModel:
    """A named tissue bound to exactly one relaxation model variant."""

    tissue_name: str
    model: ModelParams

    @property
    def model_kind(self) -> str:
        return "double_debye" if isinstance(self.model, DoubleDebyeParams) else "havriliak_negami"


@dataclass(frozen=True)
class OpticalProperties:
    """Refractive index, effective wavelength and absorption at one frequency."""

    frequency: float
    eps_r: complex
    n_real: float
    n_imag: float
    lambda_g: float  # effective wavelength, m
    mu_abs: float  # absorption coefficient, 1/m


def _check_frequency(frequency):
    f = np.asarray(frequency, dtype=float)
    if np.any(f <= 0):
        raise DomainError("frequency must be strictly positive")
    return f


def eval_permittivity(model: DielectricModel, frequency):
    """Complex relative permittivity eps_r at frequency (Hz).

    Accepts a scalar or array frequency; returns a matching complex result.
    """
    f = _check_frequency(frequency)
    omega = 2.0 * np.pi * f
    p = model.model
    if isinstance(p, DoubleDebyeParams):
        eps = (
            p.eps_inf
            + (p.eps_1 - p.eps_2) / (1.0 + 1j * omega * p.tau_1)
            + (p.eps_2 - p.eps_inf) / (1.0 + 1j * omega * p.tau_2)
        )
    else:
        eps = np.full_like(omega, p.eps_inf, dtype=complex)
        for term in p.terms:
            eps = eps + term.eps / (1.0 + (1j * omega * term.tau) ** term.alpha) ** term.beta
        if p.sigma > 0:
            eps = eps - 1j * p.sigma / (omega * VACUUM_PERMITTIVITY)
    if np.isscalar(frequency) or np.ndim(frequency) == 0:
        return complex(eps)
    return eps


def refractive_index(model: DielectricModel, frequency):
    """(n', n'') with n' > 0 (principal sqrt branch) and n'' >= 0."""
    eps = eval_permittivity(model, frequency)
    n = np.sqrt(np.asarray(eps, dtype=complex))
    # principal branch keeps Re >= 0; absorption stored as |Im|
    n_real = np.abs(n.real)
    n_imag = np.abs(n.imag)
    if np.isscalar(frequency) or np.ndim(frequency) == 0:
        return float(n_real), float(n_imag)
    return n_real, n_imag


def optical_properties(
    model: DielectricModel,
    frequency: float,
    absorption_wavelength: str = "effective",
) -> OpticalProperties:
    """Full optical property bundle at one frequency.

    `absorption_wavelength` selects the wavelength entering the absorption
    coefficient mu_abs = 4*pi*n'' / lambda: the in-medium effective wavelength
    (default) or the vacuum wavelength.
    """
    if absorption_wavelength not in ("effective", "vacuum"):
        raise DomainError(
            f"absorption_wavelength must be 'effective' or 'vacuum', got {absorption_wavelength!r}"
        )
    f = float(frequency)
    eps = eval_permittivity(model, f)
    n_real, n_imag = refractive_index(model, f)
    lambda_0 = SPEED_OF_LIGHT / f
    lambda_g = lambda_0 / n_real
    lam = lambda_g if absorption_wavelength == "effective" else lambda_0
    mu_abs = 4.0 * np.pi * n_imag / lam
    return OpticalProperties(
        frequency=f,
        eps_r=eps,
        n_real=n_real,
        n_imag=n_imag,
        lambda_g=lambda_g,
        mu_abs=mu_abs,
    )


# --- serialization -----------------------------------------------------------

def model_to_dict(model: DielectricModel) -> dict:
    p = model.model
    if isinstance(p, DoubleDebyeParams):
        params = {
            "eps_inf": p.eps_inf,
            "eps_1": p.eps_1,
            "eps_2": p.eps_2,
            "tau_1_s": p.tau_1,
            "tau_2_s": p.tau_2,
        }
    else:
        params = {
            "eps_inf": p.eps_inf,
            "sigma_s_per_m": p.sigma,
            "terms": [
                {"eps": t.eps, "tau_s": t.tau, "alpha": t.alpha, "beta": t.beta}
                for t in p.terms
            ],
        }
    return {"name": model.tissue_name, "model_kind": model.model_kind, "parameters": params}


def model_from_dict(doc: dict) -> DielectricModel:
    try:
        kind = doc["model_kind"]
        params = doc["parameters"]
        if kind == "double_debye":
            model = DoubleDebyeParams(
                eps_inf=params["eps_inf"],
                eps_1=params["eps_1"],
                eps_2=params["eps_2"],
                tau_1=params["tau_1_s"],
                tau_2=params["tau_2_s"],
            )
        elif kind == "havriliak_negami":
            model = HavriliakNegamiParams(
                eps_inf=params["eps_inf"],
                sigma=params.get("sigma_s_per_m", 0.0),
                terms=tuple(
                    HavriliakNegamiTerm(
                        eps=t["eps"], tau=t["tau_s"], alpha=t["alpha"], beta=t["beta"]
                    )
                    for t in params["terms"]
                ),
            )
        else:
            raise ValidationError(f"unknown model_kind {kind!r}")
        return DielectricModel(tissue_name=doc["name"], model=model)
    except KeyError as exc:
        raise ValidationError(f"missing key in tissue document: {exc}") from exc


def load_tissue_file(path=None) -> dict:
    """Load a tissue parameter file; defaults to the shipped asset."""
    if path is None:
        text = resources.files("nanoloc.assets").joinpath("tissues/default.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    models = [model_from_dict(entry) for entry in doc["tissues"]]
    return {m.tissue_name: m for m in models}


def dump_tissue_file(models, path) -> None:
    doc = {"tissues": [model_to_dict(m) for m in models]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def default_tissues() -> dict:
    return load_tissue_file(None)
