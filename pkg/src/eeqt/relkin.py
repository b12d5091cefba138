"""Free Dirac kinematics in 1+1 dimensions.

Units: hbar = c = 1, lengths in Angstrom, times in Angstrom/c, momenta and
energies in inverse Angstrom.  Particle momenta are quoted as multiples of mc,
so a momentum ``p0`` corresponds to the wavenumber ``p0 * mhat``.

The spinor has four components in the Dirac (standard) representation.
Everything that acts on a whole slice (free propagation, the hyperplane
scalar product) is evaluated spectrally on the slice's grid, which is
treated as one period of a periodic domain.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.constants
import scipy.fft

from .errors import ConstructionError, DomainError, UsageError

#: Inverse reduced Compton wavelength of the electron, 1/Angstrom.
ELECTRON_MHAT = 1.0 / (
    scipy.constants.physical_constants["reduced Compton wavelength"][0] * 1e10
)

_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_I2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)

GAMMA = (
    np.block([[_I2, _Z2], [_Z2, -_I2]]),
    *(np.block([[_Z2, s], [-s, _Z2]]) for s in _SIGMA),
)
for _g in GAMMA:
    _g.flags.writeable = False

#: Minkowski metric, signature (+, -, -, -).
METRIC = np.diag([1.0, -1.0, -1.0, -1.0])

#: Charge conjugation matrix C = i gamma^2 gamma^0.
CHARGE_CONJUGATION = 1j * GAMMA[2] @ GAMMA[0]
#: The map applied to the complex-conjugated spinor: C (gamma^0)^T.
_CC_MAP = CHARGE_CONJUGATION @ GAMMA[0].T

# (upper, lower) component pairs coupled by gamma^0 gamma^1
_BLOCKS = ((0, 3), (1, 2))


def gamma(index: int) -> np.ndarray:
    """Dirac-representation gamma matrix gamma^index (read-only)."""
    if not isinstance(index, (int, np.integer)) or not 0 <= index <= 3:
        raise UsageError(f"gamma index must be 0..3, got {index!r}")
    return GAMMA[int(index)]


def bump_profile(k, delta_k):
    """Compactly supported profile exp(-k^2/(delta_k^2 - k^2)) on |k| < delta_k."""
    if delta_k <= 0:
        raise UsageError("delta_k must be positive")
    k = np.asarray(k, dtype=float)
    out = np.zeros_like(k)
    inside = np.abs(k) < delta_k
    kk = k[inside] ** 2
    out[inside] = np.exp(-kk / (delta_k * delta_k - kk))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ModelParams:
    mhat: float = ELECTRON_MHAT

    def __post_init__(self):
        if not self.mhat > 0:
            raise DomainError(f"mhat must be positive, got {self.mhat}")

    def energy(self, k):
        return np.sqrt(np.asarray(k, dtype=float) ** 2 + self.mhat**2)


@dataclass(frozen=True)
class Grid:
    """Uniform spatial grid; node count is round((x_max - x_min)/dx) + 1."""

    x_min: float
    x_max: float
    dx: float

    def __post_init__(self):
        if not self.dx > 0:
            raise UsageError("dx must be positive")
        if not self.x_max > self.x_min:
            raise UsageError("x_max must exceed x_min")

    @property
    def n(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    def index_of(self, x: float) -> int:
        return int(round((x - self.x_min) / self.dx))

    def wavenumbers(self, n_fft: int | None = None) -> np.ndarray:
        return 2.0 * np.pi * scipy.fft.fftfreq(n_fft or self.n, d=self.dx)


@dataclass(frozen=True, eq=False)
class SpinorSlice:
    """Four-component field sampled on ``grid`` at time ``label``."""

    grid: Grid
    values: np.ndarray
    label: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (4, self.grid.n):
            raise UsageError(
                f"values must have shape (4, {self.grid.n}), got {v.shape}"
            )
        v = v.view()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def density(self) -> np.ndarray:
        """Psi^+ Psi at every node."""
        v = self.values
        return (v.real**2 + v.imag**2).sum(axis=0)

    def norm2(self) -> float:
        return float(self.grid.dx * self.density().sum())

    def replace(self, values=None, label=None) -> "SpinorSlice":
        return SpinorSlice(
            self.grid,
            self.values if values is None else values,
            self.label if label is None else label,
        )


@dataclass(frozen=True)
class Hyperplane:
    """Space-like line sigma(u) = (y0 + alpha u, y1 + u)."""

    y0: float = 0.0
    y1: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not abs(self.alpha) < 1:
            raise DomainError(f"hyperplane slope must satisfy |alpha| < 1, got {self.alpha}")


class StateKind(str, enum.Enum):
    POSITIVE = "P"
    NEGATIVE = "N"
    MIXED = "PN"


@dataclass(frozen=True)
class InitialStateSpec:
    kind: StateKind = StateKind.POSITIVE
    p0: float = 1.0
    x0: float = 0.0
    delta_k: float = 10.0
    eta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", StateKind(self.kind))
        if not self.delta_k > 0:
            raise DomainError("delta_k must be positive")
        if not self.eta > 0:
            raise DomainError("eta must be positive")


# ---------------------------------------------------------------------------
# spectral free evolution


class KineticOperator:
    """Exact free Dirac evolution exp(-i t H0) on a periodic grid.

    H0(k) = k gamma^0 gamma^1 + mhat gamma^0 squares to E(k)^2, so
    exp(-i t H0(k)) = cos(E t) - i sin(E t) H0(k)/E.

    For even n_fft the unpaired Nyquist mode gets k = 0; any other choice
    breaks the charge-conjugation and parity symmetry of the discrete
    evolution.
    """

    def __init__(self, n_fft: int, dx: float, mhat: float):
        self.n_fft = n_fft
        self.dx = dx
        self.mhat = mhat
        self.k = 2.0 * np.pi * scipy.fft.fftfreq(n_fft, d=dx)
        if n_fft % 2 == 0:
            self.k[n_fft // 2] = 0.0
        self.energy = np.sqrt(self.k**2 + mhat**2)
        self._cache: dict[float, tuple] = {}

    def factors(self, t: float):
        t = float(t)
        f = self._cache.get(t)
        if f is None:
            c = np.cos(self.energy * t)
            s = np.sin(self.energy * t) / self.energy
            f = (c - 1j * s * self.mhat, -1j * s * self.k, c + 1j * s * self.mhat)
            if len(self._cache) < 16:
                self._cache[t] = f
        return f

    def apply_spectrum(self, spec: np.ndarray, t: float, blocks=_BLOCKS) -> np.ndarray:
        """Evolve Fourier coefficients ``spec`` (4, n_fft) by time t."""
        up, mix, lo = self.factors(t)
        out = np.zeros_like(spec)
        for a, b in blocks:
            out[a] = up * spec[a] + mix * spec[b]
            out[b] = lo * spec[b] + mix * spec[a]
        return out

    def propagate(self, values: np.ndarray, t: float, blocks=None) -> np.ndarray:
        """Evolve real-space values (4, n) by time t; zero-pads to n_fft."""
        n = values.shape[1]
        if blocks is None:
            blocks = active_blocks(values)
        spec = scipy.fft.fft(values, n=self.n_fft, axis=1)
        out = scipy.fft.ifft(self.apply_spectrum(spec, t, blocks), axis=1)
        return out[:, :n]


def active_blocks(values: np.ndarray) -> tuple:
    """The coupled component pairs that carry any amplitude."""
    return tuple(b for b in _BLOCKS if values[b[0]].any() or values[b[1]].any())


def hamiltonian_symbol(k, mhat: float) -> np.ndarray:
    """The 4x4 matrix H0(k) = k gamma^0 gamma^1 + mhat gamma^0, stacked over k."""
    k = np.asarray(k, dtype=float)
    a1 = GAMMA[0] @ GAMMA[1]
    return k[..., None, None] * a1 + mhat * GAMMA[0]


def free_propagate(psi: SpinorSlice, dt: float, params: ModelParams = ModelParams()) -> SpinorSlice:
    """Apply exp(-i dt H0) exactly in Fourier space on the periodic grid."""
    if dt == 0:
        return psi
    op = KineticOperator(psi.grid.n, psi.grid.dx, params.mhat)
    return psi.replace(op.propagate(psi.values, dt), psi.label + dt)


def energy_projections(psi: SpinorSlice, params: ModelParams = ModelParams()):
    """Fractions of the spectral weight on the +E and -E branches."""
    k = psi.grid.wavenumbers()
    spec = scipy.fft.fft(psi.values, axis=1)
    energy = params.energy(k)
    h_spec = params.mhat * GAMMA[0].diagonal().real[:, None] * spec + k * spec[::-1]
    plus = 0.5 * (spec + h_spec / energy)
    minus = spec - plus
    w_plus = float((np.abs(plus) ** 2).sum())
    w_minus = float((np.abs(minus) ** 2).sum())
    total = w_plus + w_minus
    return w_plus / total, w_minus / total


def mean_wavenumber(psi: SpinorSlice) -> float:
    """<k> from the discrete Fourier transform of the slice."""
    k = psi.grid.wavenumbers()
    w = (np.abs(scipy.fft.fft(psi.values, axis=1)) ** 2).sum(axis=0)
    return float((k * w).sum() / w.sum())


def centroid(psi: SpinorSlice) -> float:
    rho = psi.density()
    return float((psi.x * rho).sum() / rho.sum())


def charge_conjugate(psi: SpinorSlice) -> SpinorSlice:
    """Psi^C = C (gamma^0)^T Psi^*."""
    return psi.replace(_CC_MAP @ np.conj(psi.values))


# ---------------------------------------------------------------------------
# initial states


def _momentum_integral(X, t, k, amp, upper, lower, energy, sign, chunk=2048):
    """Upper (component 0) and lower (component 3) of
    sum_j amp_j (upper_j, 0, 0, lower_j) exp(sign*i*(k_j X - E_j t))."""
    out0 = np.empty(X.size, dtype=complex)
    out3 = np.empty(X.size, dtype=complex)
    tphase = np.exp(-1j * sign * energy * t)
    c0 = amp * upper * tphase
    c3 = amp * lower * tphase
    for start in range(0, X.size, chunk):
        ph = np.exp(1j * sign * np.outer(X[start:start + chunk], k))
        out0[start:start + chunk] = ph @ c0
        out3[start:start + chunk] = ph @ c3
    return out0, out3


def _branch_terms(spec: InitialStateSpec, params: ModelParams, n_k: int):
    """Quadrature nodes of the momentum integrals: list of (k, amp, upper, lower, E, sign)."""
    m = params.mhat
    k0 = spec.p0 * m
    if spec.kind in (StateKind.POSITIVE, StateKind.NEGATIVE):
        k = np.linspace(k0 - spec.delta_k, k0 + spec.delta_k, n_k + 2)[1:-1]
        dk = k[1] - k[0]
        energy = params.energy(k)
        amp = bump_profile(k - k0, spec.delta_k) / (2 * energy) * dk
        if spec.kind is StateKind.POSITIVE:
            return [(k, amp, energy + m, k, energy, +1)]
        return [(k, amp, energy - m, k, energy, -1)]
    half = 6.0 / spec.eta
    pref = np.sqrt(2 * spec.eta) / (2 * np.pi) ** 0.75
    terms = []
    for centre, upper_sign, sign in ((k0, +1, +1), (-k0, -1, -1)):
        k = np.linspace(centre - half, centre + half, n_k)
        dk = k[1] - k[0]
        energy = params.energy(k)
        amp = pref * np.exp(-(spec.eta**2) * (k - centre) ** 2) / (2 * energy) * dk
        terms.append((k, amp, energy + upper_sign * m, k, energy, sign))
    return terms


def _evaluate_state(spec, params, X, t, n_k):
    values = np.zeros((4, X.size), dtype=complex)
    for k, amp, upper, lower, energy, sign in _branch_terms(spec, params, n_k):
        u, l = _momentum_integral(X, t, k, amp, upper, lower, energy, sign)
        values[0] += u
        values[3] += l
    return values


def build_initial_state(
    spec: InitialStateSpec,
    params: ModelParams,
    grid: Grid,
    eval_time: float = 0.0,
    origin: float = 0.0,
    wall_tolerance: float = 1e-3,
    quadrature_tol: float = 1e-10,
    mixed_norm_tol: float = 1e-6,
    hard_walls: bool = True,
) -> SpinorSlice:
    """Evaluate the prepared wavepacket at time ``eval_time`` on ``grid``.

    Grid coordinate x corresponds to the absolute position ``origin + x``.
    The momentum integrals are done by a uniform-node quadrature whose node
    count is doubled until the (unnormalized) norm changes by less than
    ``quadrature_tol``.  P and N states are then normalized on the grid; the
    mixed state carries its analytic prefactor and is only checked.

    Raises ConstructionError when the packet amplitude next to a wall exceeds
    ``wall_tolerance`` times its peak amplitude.
    """
    X = origin + grid.x - spec.x0
    n_k = 128
    values = _evaluate_state(spec, params, X, eval_time, n_k)
    norm2 = grid.dx * float((np.abs(values) ** 2).sum())
    while True:
        n_k *= 2
        finer = _evaluate_state(spec, params, X, eval_time, n_k)
        finer_norm2 = grid.dx * float((np.abs(finer) ** 2).sum())
        converged = abs(finer_norm2 - norm2) <= quadrature_tol * finer_norm2
        values, norm2 = finer, finer_norm2
        if converged:
            break
        if n_k >= 1 << 15:
            raise ConstructionError("momentum quadrature did not converge")

    amp = np.sqrt((np.abs(values) ** 2).sum(axis=0))
    peak = amp.max()
    edge = max(amp[: 2].max(), amp[-2:].max()) / peak
    if edge > wall_tolerance:
        raise ConstructionError(
            f"packet reaches the walls: edge amplitude {edge:.3e} of peak "
            f"exceeds {wall_tolerance:.1e}",
            leakage=edge,
        )
    if hard_walls:
        values[:, 0] = 0
        values[:, -1] = 0
    norm2 = grid.dx * float((np.abs(values) ** 2).sum())
    if spec.kind is StateKind.MIXED:
        if abs(norm2 - 1) > mixed_norm_tol:
            raise ConstructionError(
                f"mixed state norm^2 = {norm2:.12f} deviates from 1", leakage=abs(norm2 - 1)
            )
    else:
        values /= np.sqrt(norm2)
    return SpinorSlice(grid, values, eval_time)


# ---------------------------------------------------------------------------
# covariant scalar product


def _evaluate_on_line(psi: SpinorSlice, dt: np.ndarray, params: ModelParams,
                      rel_cut: float = 1e-16, chunk: int = 512) -> np.ndarray:
    """Psi(label + dt_i, x_i) for every node i by an exact non-uniform sum."""
    n = psi.grid.n
    k = psi.grid.wavenumbers()
    spec = scipy.fft.fft(psi.values, axis=1) / n
    weight = np.abs(spec).max(axis=0)
    keep = weight > rel_cut * weight.max()
    k, spec = k[keep], spec[:, keep]
    energy = params.energy(k)
    h_spec = params.mhat * GAMMA[0].diagonal().real[:, None] * spec + k * spec[::-1]
    rel_x = psi.grid.x - psi.grid.x_min
    out = np.empty((4, n), dtype=complex)
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        wave = np.exp(1j * np.outer(rel_x[sl], k))
        et = np.outer(dt[sl], energy)
        cos_part = wave * np.cos(et)
        sin_part = wave * (np.sin(et) / energy)
        out[:, sl] = (cos_part @ spec.T).T - 1j * (sin_part @ h_spec.T).T
    return out


def scalar_product(a: SpinorSlice, b: SpinorSlice, plane: Hyperplane | None = None,
                   params: ModelParams = ModelParams(), edge_tol: float = 1e-6) -> complex:
    """<a|b> = integral of a^+ gamma^0 gamma^mu b df_mu over the line ``plane``.

    The line is parametrized so that its spatial coordinate runs over the
    grid nodes; each slice is evolved freely to the line's time at every
    node.  Raises DomainError when the integrand has not decayed to
    ``edge_tol`` of its maximum at the ends of the grid.
    """
    if a.grid != b.grid:
        raise UsageError("slices live on different grids")
    if plane is None:
        plane = Hyperplane(y0=a.label)
    times = plane.y0 + plane.alpha * (a.grid.x - plane.y1)
    if plane.alpha == 0:
        va = free_propagate(a, plane.y0 - a.label, params).values
        vb = free_propagate(b, plane.y0 - b.label, params).values
    else:
        va = _evaluate_on_line(a, times - a.label, params)
        vb = _evaluate_on_line(b, times - b.label, params)
    j0 = (np.conj(va) * vb).sum(axis=0)
    j1 = (np.conj(va) * vb[::-1]).sum(axis=0)
    integrand = j0 - plane.alpha * j1
    mag = np.abs(integrand)
    scale = mag.max()
    if scale > 0:
        m = max(2, a.grid.n // 100)
        if max(mag[:m].max(), mag[-m:].max()) > edge_tol * scale:
            raise DomainError("hyperplane leaves the region covered by the grid")
    return complex(a.grid.dx * integrand.sum())
