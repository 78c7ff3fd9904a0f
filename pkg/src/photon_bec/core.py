"""
Parameters, units and shared constants for the dye-cavity condensate model.

Unit convention used throughout the package: times in nanoseconds, rates in
GHz (1/ns), so every ``rate * time`` product is dimensionless.  Detunings and
trap frequencies are angular frequencies in rad/ns.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import scipy.constants as _sc

__all__ = [
    "HBAR",
    "K_B",
    "SPEED_OF_LIGHT",
    "ModelError",
    "ValidationError",
    "ConvergenceError",
    "StiffnessError",
    "ModelParams",
    "kennard_stepanov",
    "detuning_for_ratio",
    "validate",
    "dye_cavity_params",
    "load_params",
    "dump_params",
    "CONFIG_KEYS",
]

# CODATA 2018 (scipy.constants); k_B is exact in SI, hbar to 10 digits.
HBAR = _sc.hbar  # J s
K_B = _sc.k  # J / K
SPEED_OF_LIGHT = _sc.c  # m / s

_NS = 1e-9  # seconds per nanosecond
_KS_RTOL = 1e-9


class ModelError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(ModelError, ValueError):
    """An input violates a documented invariant.

    ``field`` names the offending parameter or invariant.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ConvergenceError(ModelError, RuntimeError):
    """A numerical solver failed to reach its tolerance."""


class StiffnessError(ConvergenceError):
    """The ODE integrator could not advance (step size underflow)."""


@dataclass(frozen=True)
class ModelParams:
    """Rate-equation parameter set.

    Parameters
    ----------
    M : float
        Number of dye molecules in the cavity mode volume.
    kappa : float
        Cavity photon loss rate (GHz).
    gamma_up, gamma_down : float
        Pump rate and nonradiative decay rate per molecule (GHz).
    B_em, B_abs : float
        Phonon-assisted emission and absorption rates into/out of the
        condensate mode (GHz).  ``B_abs`` may be left as ``None`` when
        ``delta`` and ``T`` are given; it is then fixed by the
        Kennard-Stepanov ratio.
    delta : float, optional
        Cavity detuning (rad/ns), negative for red detuning.
    T : float, optional
        Phonon temperature (K).
    """

    M: float = 1.0
    kappa: float = 0.0
    gamma_up: float = 0.0
    gamma_down: float = 0.0
    B_em: float = 0.0
    B_abs: float | None = None
    delta: float | None = None
    T: float | None = None

    def __post_init__(self):
        if self.delta is not None and self.T is not None and self.B_em > 0 and self.T > 0:
            implied = kennard_stepanov(self.B_em, self.delta, self.T)
            if self.B_abs is None:
                object.__setattr__(self, "B_abs", implied)
            elif not math.isclose(self.B_abs, implied, rel_tol=_KS_RTOL):
                warnings.warn(
                    f"explicit B_abs={self.B_abs!r} differs from the Kennard-Stepanov "
                    f"value {implied!r}; using the explicit value",
                    stacklevel=3,
                )
        if self.B_abs is None:
            object.__setattr__(self, "B_abs", 0.0)

    @property
    def ratio(self) -> float:
        """Emission/absorption ratio ``B_em / B_abs`` (inf if ``B_abs == 0``)."""
        return self.B_em / self.B_abs if self.B_abs > 0 else math.inf

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


def kennard_stepanov(B_em: float, delta: float, T: float) -> float:
    """Absorption rate from the Kennard-Stepanov relation.

    ``B_em / B_abs = exp(-hbar * delta / (k_B * T))`` with ``delta`` in rad/ns.
    """
    if not B_em > 0:
        raise ValidationError("B_em", f"must be positive, got {B_em!r}")
    if not T > 0:
        raise ValidationError("T", f"must be positive, got {T!r}")
    x = HBAR * (delta / _NS) / (K_B * T)
    return B_em * math.exp(x)


def detuning_for_ratio(ratio: float, T: float) -> float:
    """Detuning (rad/ns) giving ``B_em / B_abs = ratio`` at temperature ``T``."""
    if not ratio > 0 or not T > 0:
        raise ValidationError("ratio", "ratio and T must be positive")
    return -math.log(ratio) * K_B * T / HBAR * _NS


def validate(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged if every invariant holds.

    Raises :class:`ValidationError` naming the first violated invariant.  An
    explicit ``B_abs`` inconsistent with ``(delta, T)`` only warns, since the
    explicit value takes precedence.
    """
    p = params
    if not (math.isfinite(p.M) and p.M >= 1):
        raise ValidationError("M", f"must be >= 1, got {p.M!r}")
    for name in ("kappa", "gamma_up", "gamma_down", "B_em", "B_abs"):
        value = getattr(p, name)
        if not (math.isfinite(value) and value >= 0):
            raise ValidationError(name, f"must be a finite rate >= 0, got {value!r}")
    if p.T is not None and not p.T > 0:
        raise ValidationError("T", f"must be positive, got {p.T!r}")
    if p.delta is not None and p.delta < 0 and not p.B_em > p.B_abs:
        raise ValidationError("delta", "negative detuning requires B_em > B_abs")
    return p


def dye_cavity_params(gamma_up: float = 0.0, **overrides) -> ModelParams:
    """Parameter set of the rhodamine microcavity experiment.

    M = 5.17e9, kappa = 2.33 GHz, B_em = 2.5e-5 GHz, B_em/B_abs = 57,
    gamma_down = 0.  The pump rate is left as an argument.
    """
    B_em = 2.5e-5
    base = dict(M=5.17e9, kappa=2.33, gamma_up=gamma_up, gamma_down=0.0,
                B_em=B_em, B_abs=B_em / 57.0)
    base.update(overrides)
    return ModelParams(**base)


# config-file key -> ModelParams field
CONFIG_KEYS = {
    "M": "M",
    "kappa_GHz": "kappa",
    "gamma_up_GHz": "gamma_up",
    "gamma_down_GHz": "gamma_down",
    "B_em_GHz": "B_em",
    "B_abs_GHz": "B_abs",
    "delta_rad_per_ns": "delta",
    "T_K": "T",
}


def _read_config(text: str) -> dict[str, float]:
    parser = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=("#",),
        delimiters=("=",), interpolation=None,
    )
    parser.optionxform = str
    parser.read_string("[params]\n" + text)
    values = {}
    for key, raw in parser["params"].items():
        if key not in CONFIG_KEYS:
            raise ValidationError(key, "unknown config key")
        try:
            values[CONFIG_KEYS[key]] = float(raw)
        except ValueError:
            raise ValidationError(key, f"not a number: {raw!r}") from None
    return values


def load_params(path: str | Path, **overrides) -> ModelParams:
    """Read a ``key = value`` parameter file; keyword overrides win."""
    values = _read_config(Path(path).read_text())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ModelParams(**values)


def dump_params(params: ModelParams) -> str:
    lines = []
    for key, field in CONFIG_KEYS.items():
        value = getattr(params, field)
        if value is not None:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"
