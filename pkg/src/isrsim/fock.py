"""Brute-force validation path on truncated number-state density matrices.

Every fast-path result has an exact counterpart here: the pump unitary is
a dense matrix exponential, dissipative evolution is integrated with a
classical fourth-order Runge-Kutta scheme, and the probe read-out is an
exact two-mode computation with the bright field held in a displaced
frame so that a small photon cutoff suffices. Nothing in this module
reuses the closed-form moment algebra it is meant to check.
"""

from __future__ import annotations

import cmath
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh, expm

from .probe import ObservablePair, ProbeSpec, probe_mean, probe_variance
from .states import (
    BathSpec,
    GaussianPhononState,
    PumpSpec,
    apply_pump,
    evolve,
    pump_coefficients,
    thermal_state,
)

DEFAULT_PHONON_DIM = 60
DEFAULT_PHOTON_DIM = 40

_HERM_TOL = 1e-12
_TRACE_TOL = 1e-10
_EIG_TOL = 1e-10
_TAIL_TOL = 1e-8

# Absolute moment-error budget steering the default integrator step; the
# global Runge-Kutta error grows like tau * omega^5 * dt^4 / 120.
_RK4_ERROR_BUDGET = 3e-10


class TruncationError(RuntimeError):
    """Hilbert-space cutoff too small for the state it must hold."""

    def __init__(
        self,
        message: str,
        suggested_dim: int | None = None,
        register: str = "phonon",
    ):
        super().__init__(message)
        self.suggested_dim = suggested_dim
        self.register = register


class StepSizeError(RuntimeError):
    """Integrator step produced unacceptable trace drift."""


@dataclass(frozen=True)
class FockDensityMatrix:
    """Density matrix in the truncated number basis.

    Construction validates hermiticity, unit trace, positivity and the
    tail-mass health of the truncation (population of the top 10% of
    levels below 1e-8).
    """

    dim: int
    rho: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(
                f"rho must be {self.dim}x{self.dim}, got {rho.shape}"
            )
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > _HERM_TOL:
            raise ValueError(f"rho not Hermitian: max asymmetry {herm:.3e}")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ValueError(f"trace(rho) = {tr!r}, must be 1")
        eigs = np.linalg.eigvalsh(rho)
        if eigs[0] < -_EIG_TOL:
            raise ValueError(f"rho has negative eigenvalue {eigs[0]:.3e}")
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)
        tail = self.tail_mass()
        if tail > _TAIL_TOL:
            raise TruncationError(
                f"top-decile population {tail:.3e} exceeds {_TAIL_TOL:.0e}; "
                f"retry with dim >= {2 * self.dim}",
                suggested_dim=2 * self.dim,
            )

    def tail_mass(self) -> float:
        """Population held in the top 10% of levels."""
        start = int(math.ceil(0.9 * self.dim))
        return float(np.sum(np.diagonal(self.rho)[start:]).real)

    def moments(self) -> tuple[complex, float, complex]:
        """(mean_b, occupation, anomalous) by direct trace evaluation."""
        d = self.dim
        k = np.arange(d)
        pops = np.diagonal(self.rho).real
        occ = float(np.dot(k, pops))
        sub = np.diagonal(self.rho, offset=-1)
        mean_b = complex(np.dot(np.sqrt(k[1:]), sub))
        sub2 = np.diagonal(self.rho, offset=-2)
        anom = complex(np.dot(np.sqrt((k[:-2] + 1.0) * (k[:-2] + 2.0)), sub2))
        return mean_b, occ, anom

    def gaussian_view(self) -> GaussianPhononState:
        """Project onto the moment representation (drops higher cumulants)."""
        m, occ, anom = self.moments()
        return GaussianPhononState(m, occ, anom)


def _destroy(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1.0, dim)), 1).astype(complex)


def suggest_dim(n_eff: float, disp_sq: float = 0.0, floor: int = 32) -> int:
    """Cutoff guess for a displaced squeezed-thermal population.

    n_eff is the widest-quadrature effective thermal occupation
    (central occupation plus |central anomalous|, which controls the
    geometric tail ratio) and disp_sq the squared displacement. The
    guess targets the top-decile tail-mass requirement; construction
    re-checks it, so an undershoot costs one retry, not correctness.
    """
    n_eff = max(float(n_eff), 1e-6)
    disp_sq = max(float(disp_sq), 0.0)
    log_ratio = math.log((n_eff + 1.0) / n_eff)
    shift = disp_sq + 2.0 * math.sqrt(disp_sq * (n_eff + 1.0)) + n_eff
    level = (shift + 18.0 / log_ratio) / 0.9
    return max(floor, int(math.ceil(level / 8.0)) * 8)


def build_thermal_fock(n_mean: float, dim: int = DEFAULT_PHONON_DIM) -> FockDensityMatrix:
    """Thermal state: diagonal geometric populations, renormalized."""
    if n_mean < 0 or not math.isfinite(n_mean):
        raise ValueError(f"n_mean must be >= 0, got {n_mean}")
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if n_mean == 0.0:
        pops = np.zeros(dim)
        pops[0] = 1.0
    else:
        ratio = n_mean / (n_mean + 1.0)
        pops = ratio ** np.arange(dim)
        pops /= pops.sum()
    return FockDensityMatrix(dim, np.diag(pops).astype(complex))


def embed(state: FockDensityMatrix, dim: int) -> FockDensityMatrix:
    """Zero-pad into a larger cutoff (exact)."""
    if dim < state.dim:
        raise ValueError("embedding dimension must not shrink the space")
    if dim == state.dim:
        return state
    rho = np.zeros((dim, dim), dtype=complex)
    rho[: state.dim, : state.dim] = state.rho
    return FockDensityMatrix(dim, rho)


def truncate(state: FockDensityMatrix, dim: int) -> FockDensityMatrix:
    """Cut to a smaller cutoff, allowed only when the cut mass is negligible."""
    if dim >= state.dim:
        return embed(state, dim)
    if dim < 2:
        raise ValueError("dim must be at least 2")
    cut = 1.0 - float(np.sum(np.diagonal(state.rho)[:dim]).real)
    if cut > 1e-9:
        raise TruncationError(
            f"cut would discard population {cut:.3e}", suggested_dim=state.dim
        )
    rho = np.array(state.rho[:dim, :dim])
    rho /= np.trace(rho).real
    return FockDensityMatrix(dim, rho)


def apply_pump_exact(
    state: FockDensityMatrix, c1: complex, c2: complex
) -> FockDensityMatrix:
    """Conjugate by the exponential of the truncated pump generator."""
    d = state.dim
    b = _destroy(d)
    bd = b.conj().T
    gen = c1 * bd + np.conj(c1) * b + c2 * (bd @ bd) + np.conj(c2) * (b @ b)
    u = expm(-1j * gen)
    return FockDensityMatrix(d, u @ state.rho @ u.conj().T)


def _lindblad_tables(dim: int, bath: BathSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elementwise drift and shifted-jump weights of the generator.

    In the number basis the generator touches rho[j, k] only through the
    same element and its (j+1, k+1) / (j-1, k-1) neighbours, so the
    right-hand side is three elementwise products instead of matrix
    multiplications.
    """
    j = np.arange(dim, dtype=float)
    jj, kk = np.meshgrid(j, j, indexing="ij")
    lam = bath.damping_rate
    nb = bath.n_bath
    drift = (
        -1j * bath.omega_rad_ps * (jj - kk)
        - 0.5 * lam * (1.0 + nb) * (jj + kk)
        - 0.5 * lam * nb * (jj + kk + 2.0)
    )
    root = np.sqrt(j)
    up = lam * (1.0 + nb) * np.outer(root[1:], root[1:])  # from rho[j+1, k+1]
    down = lam * nb * np.outer(root[1:], root[1:])  # from rho[j-1, k-1]
    return drift, up, down


def _lindblad_rhs(
    rho: np.ndarray, drift: np.ndarray, up: np.ndarray, down: np.ndarray
) -> np.ndarray:
    out = drift * rho
    out[:-1, :-1] += up * rho[1:, 1:]
    out[1:, 1:] += down * rho[:-1, :-1]
    return out


def default_step(tau: float, bath: BathSpec) -> float:
    """Integrator step meeting both the stability and accuracy bounds."""
    dt = 0.05 / bath.omega_rad_ps
    if bath.damping_rate > 0:
        dt = min(dt, 0.05 / (bath.damping_rate * (1.0 + bath.n_bath)))
    if tau > 0:
        acc = (
            120.0 * _RK4_ERROR_BUDGET / (tau * bath.omega_rad_ps ** 5)
        ) ** 0.25
        dt = min(dt, acc)
    return dt


def evolve_lindblad_exact(
    state: FockDensityMatrix,
    tau: float,
    bath: BathSpec,
    dt: float | None = None,
    return_drift: bool = False,
):
    """Integrate the damped-mode master equation with classical RK4.

    dt defaults to a step meeting the stability bound
    min(0.05 / (lambda (1+n_bath)), 0.05 / omega) and an accuracy budget
    keeping the accumulated moment error near 1e-10. Trace drift beyond
    1e-6 raises StepSizeError; smaller drift (population leaking past
    the truncation boundary, plus roundoff) is renormalized away and
    reported when return_drift is set.
    """
    if tau < 0 or not math.isfinite(tau):
        raise ValueError(f"tau must be >= 0 and finite, got {tau}")
    if tau == 0.0:
        return (state, 0.0) if return_drift else state
    bound = 0.05 / bath.omega_rad_ps
    if bath.damping_rate > 0:
        bound = min(bound, 0.05 / (bath.damping_rate * (1.0 + bath.n_bath)))
    if dt is None:
        dt = default_step(tau, bath)
    elif dt <= 0 or dt > bound:
        raise ValueError(
            f"dt = {dt} violates the stability bound {bound:.3e}"
        )
    steps = max(1, int(math.ceil(tau / dt)))
    h = tau / steps
    drift, up, down = _lindblad_tables(state.dim, bath)
    rho = np.array(state.rho, dtype=complex)
    for _ in range(steps):
        k1 = _lindblad_rhs(rho, drift, up, down)
        k2 = _lindblad_rhs(rho + 0.5 * h * k1, drift, up, down)
        k3 = _lindblad_rhs(rho + 0.5 * h * k2, drift, up, down)
        k4 = _lindblad_rhs(rho + h * k3, drift, up, down)
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    tr = np.trace(rho).real
    drift_err = abs(tr - 1.0)
    if drift_err > 1e-6:
        raise StepSizeError(
            f"trace drifted by {drift_err:.3e} over {steps} steps; reduce dt"
        )
    # Symmetrize away accumulated roundoff; the generator is exactly
    # Hermiticity-preserving, so this touches only float noise.
    rho = 0.5 * (rho + rho.conj().T)
    rho /= tr
    out = FockDensityMatrix(state.dim, rho)
    return (out, drift_err) if return_drift else out


def probe_exact(
    rho_phonon: FockDensityMatrix,
    probe: ProbeSpec,
    photon_dim: int = DEFAULT_PHOTON_DIM,
) -> ObservablePair:
    """Exact two-mode probe read-out.

    The bright field is held in a frame displaced by its coherent
    amplitude, so the photon register starts in the vacuum and a small
    cutoff suffices; the exchange unitary and the number operator are
    conjugated into the same frame, which is exact. Diagonalization of
    the one-exchange generator gives the unitary; only its action on the
    initially populated block is ever formed.
    """
    if photon_dim < 30:
        raise ValueError("photon_dim must be at least 30")
    dph = rho_phonon.dim
    theta = probe.coupling_norm
    amp = math.sqrt(probe.intensity_y) * cmath.exp(-1j * probe.phase_diff)

    a = _destroy(photon_dim)
    b = _destroy(dph)
    eye_a = np.eye(photon_dim, dtype=complex)
    eye_b = np.eye(dph, dtype=complex)
    # theta * (A_coll b† + A_coll† b) with A_coll = a + amp in the
    # displaced frame; assembled from Kronecker products directly.
    gen = theta * (
        np.kron(a, b.conj().T)
        + np.kron(a.conj().T, b)
        + amp * np.kron(eye_a, b.conj().T)
        + np.conj(amp) * np.kron(eye_a, b)
    )
    w, v = eigh(gen)
    # Initial state = photon vacuum x rho_phonon occupies the first dph
    # rows/columns, so only that column block of the unitary is needed.
    block = (v * np.exp(-1j * w)[None, :]) @ v[:dph, :].conj().T

    # Number operator in the displaced frame acts on the photon factor
    # alone: (a† + amp*)(a + amp).
    n_photon = (
        a.conj().T @ a
        + amp * a.conj().T
        + np.conj(amp) * a
        + (abs(amp) ** 2) * eye_a
    )
    block3 = block.reshape(photon_dim, dph, dph)
    n_block = np.einsum("pq,qkj->pkj", n_photon, block3).reshape(
        photon_dim * dph, dph
    )

    rho = rho_phonon.rho
    m1 = block.conj().T @ n_block
    m2 = n_block.conj().T @ n_block
    mean = float(np.einsum("ij,ji->", m1, rho).real)
    second = float(np.einsum("ij,ji->", m2, rho).real)

    # Truncation health of the evolved two-mode state, checked on the
    # reduced diagonals without forming the full density matrix.
    joint_diag = np.einsum("ij,jk,ik->i", block, rho, block.conj()).real
    joint = joint_diag.reshape(photon_dim, dph)
    photon_tail = float(joint[int(math.ceil(0.9 * photon_dim)) :, :].sum())
    phonon_tail = float(joint[:, int(math.ceil(0.9 * dph)) :].sum())
    if photon_tail > _TAIL_TOL:
        raise TruncationError(
            f"photon register tail mass {photon_tail:.3e}; "
            f"retry with photon_dim >= {2 * photon_dim}",
            suggested_dim=2 * photon_dim,
            register="photon",
        )
    if phonon_tail > _TAIL_TOL:
        raise TruncationError(
            f"phonon register tail mass {phonon_tail:.3e}; "
            f"retry with phonon dim >= {2 * dph}",
            suggested_dim=2 * dph,
        )
    return ObservablePair(mean, second - mean * mean)


def quadrature_variances_exact(state: FockDensityMatrix) -> tuple[float, float]:
    """Variances of (b+b†)/sqrt(2) and (b-b†)/(i sqrt(2)) by direct trace."""
    m, occ, anom = state.moments()
    pos = occ + 0.5 + anom.real - 2.0 * m.real**2
    mom = occ + 0.5 - anom.real - 2.0 * m.imag**2
    return float(pos), float(mom)


@dataclass(frozen=True)
class CrossCheckCase:
    """One grid point of the fast-path vs oracle comparison."""

    thermal_n: float
    c1: complex
    c2: complex
    damping_rate: float
    delay: float
    coupling_norm: float
    intensity_y: float
    phase_diff: float
    omega: float = 2.0 * math.pi * 3.84


@dataclass(frozen=True)
class CrossCheckResult:
    case: CrossCheckCase
    moment_errors: dict
    mean_error: float
    var_error: float
    phonon_dim: int
    photon_dim: int
    elapsed_s: float
    passed: bool
    detail: str = ""


def default_grid(seed: int = 20260814, n_random: int = 6) -> list[CrossCheckCase]:
    """Corner cases plus seeded random draws over the validated ranges."""
    rng = np.random.default_rng(seed)
    cases = [
        CrossCheckCase(2.0, 0.9 - 0.4j, 0.25j, 1.0, 3.0, 0.3, 50.0, 0.7),
        CrossCheckCase(0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 5.0, 0.0),
    ]
    for _ in range(n_random):
        lam = rng.uniform(0.6, 2.0)
        # Squeeze magnitude r = 2|c2| sampled uniformly over the
        # validated range [0, 0.5], with a free phase.
        r = rng.uniform(0.0, 0.5)
        phase = rng.uniform(-math.pi, math.pi)
        cases.append(
            CrossCheckCase(
                thermal_n=float(rng.uniform(0.0, 2.0)),
                c1=complex(rng.normal(0, 0.4), rng.normal(0, 0.4)),
                c2=complex(0.5 * r * cmath.exp(1j * phase)),
                damping_rate=float(lam),
                delay=float(rng.uniform(0.0, 3.0) / lam),
                coupling_norm=float(rng.uniform(0.0, 0.3)),
                intensity_y=float(rng.uniform(5.0, 50.0)),
                phase_diff=float(rng.uniform(-math.pi, math.pi)),
            )
        )
    return cases


def _rel_err(fast, oracle) -> float:
    return abs(fast - oracle) / max(abs(oracle), 1e-12)


def cross_validate(
    cases: Sequence[CrossCheckCase] | None = None,
    moment_tol: float = 1e-6,
    probe_tol: float = 1e-4,
    photon_dim: int = 32,
    fault_scale: float = 0.0,
    max_dim: int | None = None,
) -> list[CrossCheckResult]:
    """Run the fast path and the oracle side by side over a grid.

    fault_scale perturbs the fast-path variance by the given relative
    amount before comparison; it exists so the harness can prove the
    check actually fails when a formula is wrong. max_dim caps the
    phonon cutoff; states that genuinely need more levels then raise
    TruncationError instead of retrying upward.
    """
    if cases is None:
        cases = default_grid()
    results = []
    for case in cases:
        t0 = time.perf_counter()
        bath = BathSpec(case.omega, case.damping_rate, case.thermal_n)
        probe = ProbeSpec(
            case.coupling_norm, case.phase_diff, case.intensity_y, 0.0
        )

        # Cutoff guesses come from the fast-path moments; an undersized
        # guess only triggers a retry because construction re-checks the
        # tail, so the comparison itself stays independent.
        fast = apply_pump(thermal_state(case.thermal_n), case.c1, case.c2)
        core_dim = suggest_dim(
            fast.central_occupation + abs(fast.central_anomalous),
            abs(fast.mean_b) ** 2,
        )
        if max_dim is not None:
            core_dim = min(core_dim, max_dim)

        def pump_stage(dim: int) -> FockDensityMatrix:
            return apply_pump_exact(
                build_thermal_fock(case.thermal_n, dim), case.c1, case.c2
            )

        exact = _retry_truncation(pump_stage, core_dim, max_dim=max_dim)
        errs = {}
        em, eo, ea = exact.moments()
        errs["pump_mean_b"] = _rel_err(fast.mean_b, em)
        errs["pump_occupation"] = _rel_err(fast.occupation, eo)
        errs["pump_anomalous"] = _rel_err(fast.anomalous, ea)

        fast = evolve(fast, case.delay, bath)
        exact = _retry_truncation(
            lambda dim: evolve_lindblad_exact(
                embed(exact, dim), case.delay, bath
            ),
            exact.dim,
            max_dim=max_dim,
        )
        em, eo, ea = exact.moments()
        errs["evolve_mean_b"] = _rel_err(fast.mean_b, em)
        errs["evolve_occupation"] = _rel_err(fast.occupation, eo)
        errs["evolve_anomalous"] = _rel_err(fast.anomalous, ea)

        mean_fast = probe_mean(fast, probe)
        var_fast = probe_variance(fast, probe) * (1.0 + fault_scale)
        drive = abs(fast.mean_b) + case.coupling_norm * math.sqrt(
            case.intensity_y
        )
        probe_dim = suggest_dim(
            fast.central_occupation + abs(fast.central_anomalous), drive ** 2
        )
        if max_dim is not None:
            probe_dim = min(probe_dim, max_dim)
        pair, probe_dim, photon_used = _probe_with_retry(
            exact, probe, probe_dim, photon_dim, max_dim=max_dim
        )
        mean_err = _rel_err(mean_fast, pair.mean_ny)
        var_err = _rel_err(var_fast, pair.var_ny)

        passed = (
            all(e < moment_tol for e in errs.values())
            and mean_err < probe_tol
            and var_err < probe_tol
        )
        results.append(
            CrossCheckResult(
                case=case,
                moment_errors=errs,
                mean_error=mean_err,
                var_error=var_err,
                phonon_dim=probe_dim,
                photon_dim=photon_used,
                elapsed_s=time.perf_counter() - t0,
                passed=passed,
                detail="" if passed else "tolerance exceeded",
            )
        )
    return results


def _retry_truncation(
    stage, dim: int, attempts: int = 3, max_dim: int | None = None
) -> FockDensityMatrix:
    last: TruncationError | None = None
    for _ in range(attempts):
        try:
            return stage(dim)
        except TruncationError as exc:
            last = exc
            bigger = exc.suggested_dim or 2 * dim
            if max_dim is not None and bigger > max_dim:
                if dim >= max_dim:
                    raise
                bigger = max_dim
            dim = bigger
    assert last is not None
    raise last


def _probe_with_retry(
    exact: FockDensityMatrix,
    probe: ProbeSpec,
    probe_dim: int,
    photon_dim: int,
    attempts: int = 3,
    max_dim: int | None = None,
) -> tuple[ObservablePair, int, int]:
    last: TruncationError | None = None
    for _ in range(attempts):
        try:
            # Shrink (or pad) to the probe-stage cutoff first; the cut is
            # refused unless the discarded population is negligible.
            staged = truncate(exact, max(probe_dim, 8))
            return probe_exact(staged, probe, photon_dim), probe_dim, photon_dim
        except TruncationError as exc:
            last = exc
            if exc.register == "photon":
                photon_dim = exc.suggested_dim or 2 * photon_dim
            else:
                bigger = exc.suggested_dim or 2 * probe_dim
                if max_dim is not None and bigger > max_dim:
                    if probe_dim >= max_dim:
                        raise
                    bigger = max_dim
                probe_dim = bigger
    assert last is not None
    raise last
