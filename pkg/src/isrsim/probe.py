"""Probe-pulse observables computed from the phonon state.

A weak probe exchanges quanta with the phonon mode through an effective
beamsplitter rotation of angle ``coupling_norm``. The read-out is the
photon number in the cross-polarized arm; its mean oscillates at the
phonon frequency while its variance additionally carries a
second-harmonic component whenever the phonon state is squeezed.
All moments here are evaluated in closed form from the Gaussian state,
using the Gaussian moment factorization for the cubic and quartic
phonon moments that enter the variance.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .states import (
    BathSpec,
    GaussianPhononState,
    PumpSpec,
    apply_pump,
    evolve,
    pump_coefficients,
    thermal_state,
)

_REALITY_TOL = 1e-12


@dataclass(frozen=True)
class ProbeSpec:
    """Probe-stage parameters.

    coupling_norm is the beamsplitter rotation angle (radians) of the
    photon-phonon exchange, theta_prime its phase, intensity_y the mean
    photon number per pulse in the detected polarization and theta_y the
    phase of that field.
    """

    coupling_norm: float
    theta_prime: float
    intensity_y: float
    theta_y: float

    def __post_init__(self) -> None:
        if self.coupling_norm < 0 or not math.isfinite(self.coupling_norm):
            raise ValueError(
                f"coupling_norm must be >= 0, got {self.coupling_norm}"
            )
        if self.coupling_norm > math.pi / 2:
            warnings.warn(
                "coupling_norm exceeds pi/2; outside the weak-probe regime",
                stacklevel=2,
            )
        if self.intensity_y < 0 or not math.isfinite(self.intensity_y):
            raise ValueError(f"intensity_y must be >= 0, got {self.intensity_y}")

    @property
    def phase_diff(self) -> float:
        """Relative phase theta_prime - theta_y entering the read-out."""
        return self.theta_prime - self.theta_y


@dataclass(frozen=True)
class ObservablePair:
    """Mean and variance of the detected photon number for one delay."""

    mean_ny: float
    var_ny: float

    def __post_init__(self) -> None:
        if self.mean_ny < 0:
            raise ValueError(f"mean_ny must be >= 0, got {self.mean_ny}")
        if self.var_ny < 0:
            raise ValueError(f"var_ny must be >= 0, got {self.var_ny}")


def _require_real(value: complex, label: str) -> float:
    scale = max(1.0, abs(value.real))
    if abs(value.imag) > _REALITY_TOL * scale:
        raise ArithmeticError(
            f"{label} has imaginary residue {value.imag:.3e}; "
            "moment algebra is inconsistent"
        )
    return value.real


def probe_mean(state: GaussianPhononState, probe: ProbeSpec) -> float:
    """Mean detected photon number after the probe interaction.

    Exact in the rotation angle: the coherent part is attenuated by
    cos^2, the phonon occupation enters with sin^2 and the coherent
    phonon amplitude beats against the field with sin(2 angle).
    """
    th = probe.coupling_norm
    iy = probe.intensity_y
    dth = probe.phase_diff
    s, c = math.sin(th), math.cos(th)
    m = state.mean_b
    cross = (
        0.5j
        * math.sqrt(iy)
        * math.sin(2.0 * th)
        * (cmath.exp(-1j * dth) * np.conj(m) - cmath.exp(1j * dth) * m)
    )
    value = iy * c * c + s * s * state.occupation + cross
    return _require_real(value, "probe mean")


def probe_variance(state: GaussianPhononState, probe: ProbeSpec) -> float:
    """Variance of the detected photon number after the probe interaction.

    Cubic and quartic phonon moments are reduced to the stored first and
    second moments by the Gaussian factorization, exact for every state
    this model produces (thermal, displaced, squeezed, damped). The
    expression is assembled from centered moments, which keeps it
    manifestly real and free of large-displacement cancellation.
    """
    th = probe.coupling_norm
    iy = probe.intensity_y
    dth = probe.phase_diff
    s, c = math.sin(th), math.cos(th)
    m = complex(state.mean_b)
    nu = state.central_occupation
    sig = state.central_anomalous
    rot = cmath.exp(1j * dth)

    # <n^2> - <n>^2 by the Gaussian factorization, centered form.
    var_n = (
        nu * (nu + 1.0)
        + abs(sig) ** 2
        + abs(m) ** 2 * (2.0 * nu + 1.0)
        + 2.0 * (np.conj(m) ** 2 * sig).real
    )
    # Cubic beat term <b† b b> - <b† b><b>, centered.
    cubic = np.conj(m) * sig + m * (nu + 0.5)
    return (
        iy * c ** 4
        + s ** 4 * var_n
        + s * s * c * c * (nu + abs(m) ** 2)
        + iy * s * s * c * c * (2.0 * nu + 1.0)
        - 2.0 * iy * s * s * c * c * (rot * rot * sig).real
        + 2.0 * math.sqrt(iy) * s * c ** 3 * (rot * m).imag
        + 4.0 * math.sqrt(iy) * s ** 3 * c * (rot * cubic).imag
    )


def observables(state: GaussianPhononState, probe: ProbeSpec) -> ObservablePair:
    """Mean and variance of the read-out photon number, as a pair."""
    return ObservablePair(probe_mean(state, probe), probe_variance(state, probe))


def amplitude_2omega(
    tau: float, pump: PumpSpec, bath: BathSpec, probe: ProbeSpec
) -> float:
    """Second-harmonic amplitude of the variance trace at delay tau.

    The variance oscillates as 2|A| cos(2 Omega tau + phase); this
    returns |A|. It is nonzero only under squeezing (r > 0) and decays
    at the full damping rate, twice the rate of the fundamental.
    """
    _, c2 = pump_coefficients(pump)
    r = 2.0 * abs(c2)
    return (
        probe.intensity_y
        * (1.0 + 2.0 * bath.n_bath)
        / 8.0
        * math.exp(-bath.damping_rate * tau)
        * math.sin(2.0 * probe.coupling_norm) ** 2
        * math.sinh(2.0 * r)
    )


def amplitude_omega(
    tau: float,
    z: complex,
    pump: PumpSpec,
    bath: BathSpec,
    probe: ProbeSpec,
    n: float,
) -> float:
    """Fundamental-frequency amplitude of the variance trace at delay tau.

    z is the coherent phonon amplitude <b> immediately after the pump
    and n the pre-pump thermal occupation. The variance trace carries
    2|A| cos(Omega tau + phase); this returns |A|, assembled from the
    evolved first moment beating against the field (leading term) and
    against the relaxing occupation and anomalous moment (cubic terms).
    """
    z = complex(z)
    _, c2 = pump_coefficients(pump)
    r = 2.0 * abs(c2)
    s, c = math.sin(probe.coupling_norm), math.cos(probe.coupling_norm)
    iy = probe.intensity_y
    lam = bath.damping_rate
    if r > 0.0:
        phi = cmath.phase(c2)
        sig0 = math.cosh(r) * (-1j * cmath.exp(1j * phi) * math.sinh(r)) * (
            2.0 * n + 1.0
        )
    else:
        sig0 = 0.0j
    nu0 = n * math.cosh(r) ** 2 + (n + 1.0) * math.sinh(r) ** 2
    occ_relaxed = bath.n_bath + (nu0 - bath.n_bath) * math.exp(-lam * tau)
    beat = 2.0 * math.sqrt(iy) * s * c ** 3 * z * math.exp(-lam * tau / 2.0)
    cubic = (
        4.0
        * math.sqrt(iy)
        * s ** 3
        * c
        * (
            np.conj(z) * sig0 * math.exp(-1.5 * lam * tau)
            + z * math.exp(-lam * tau / 2.0) * (occ_relaxed + 0.5)
        )
    )
    return abs(beat + cubic) / 2.0


def predict_trace(
    pump: PumpSpec,
    bath: BathSpec,
    probe: ProbeSpec,
    thermal_n: float,
    delays,
) -> np.ndarray:
    """Noiseless model trace over a delay grid.

    Prepares a thermal phonon state, applies the impulsive pump, relaxes
    to each delay and evaluates the probe read-out. Returns an array of
    shape (len(delays), 3) with columns (delay, mean_ny, var_ny).
    """
    taus = np.asarray(delays, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("delays must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(taus)) or taus[0] < 0:
        raise ValueError("delays must be finite and non-negative")
    if taus.size > 1 and not np.all(np.diff(taus) > 0):
        raise ValueError("delays must be strictly increasing")
    c1, c2 = pump_coefficients(pump)
    pumped = apply_pump(thermal_state(thermal_n), c1, c2)
    out = np.empty((taus.size, 3), dtype=float)
    for i, tau in enumerate(taus):
        state = evolve(pumped, float(tau), bath)
        out[i, 0] = tau
        out[i, 1] = probe_mean(state, probe)
        out[i, 2] = probe_variance(state, probe)
    return out


def chi3_block(a: float, c: float) -> np.ndarray:
    """Third-order susceptibility of the two Raman-active symmetries.

    Returns the 4x4 matrix chi[2(i-1)+(k-1), 2(j-1)+(l-1)] built from
    the isotropic tensor (weight a) and the two traceless tensors
    (weight c); the off-diagonal blocks encode the cross-polarized
    scattering channel used for detection.
    """
    iso = np.array([[a, 0.0], [0.0, a]])
    trans = np.array([[c, 0.0], [0.0, -c]])
    longi = np.array([[0.0, -c], [-c, 0.0]])
    return np.kron(iso, iso) + np.kron(trans, trans) + np.kron(longi, longi)


def pump_efficiency(theta_pump: float, c: float) -> float:
    """Cross-polarized drive strength for a pump polarized at theta_pump.

    Only the tensor elements mixing the two transverse directions drive
    the detected channel; they require orthogonal pump components, so
    the drive scales as |c^2 sin(theta) cos(theta)| and peaks at 45
    degrees.
    """
    return abs(c * c * math.sin(theta_pump) * math.cos(theta_pump))
