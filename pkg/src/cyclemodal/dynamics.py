"""Lumped-mass chain oscillators with cubic springs.

The chain is grounded at both ends, so for ``n`` equal masses the stiffness
matrix is tridiagonal with ``2k`` on the diagonal and ``-k`` off it (damping
follows the same pattern).  Cubic terms act on the absolute displacement of
the DOF they are attached to.

Integration is fixed-step RK4 with the sampled force held constant over each
output interval.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import NumericalError
from .series import TimeSeriesMatrix

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@dataclass(frozen=True)
class SystemSpec:
    mass: np.ndarray
    damping_matrix: np.ndarray
    stiffness_matrix: np.ndarray
    cubic_terms: tuple = ()
    forced_dof: int = 0

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mass, dtype=float))
        C = np.atleast_2d(np.asarray(self.damping_matrix, dtype=float))
        K = np.atleast_2d(np.asarray(self.stiffness_matrix, dtype=float))
        n = m.shape[0]
        if C.shape != (n, n) or K.shape != (n, n):
            raise ValueError(f"matrices must be {n}x{n}")
        if np.any(m <= 0):
            raise ValueError("masses must be positive")
        if not np.allclose(K, K.T) or not np.allclose(C, C.T):
            raise ValueError("stiffness and damping matrices must be symmetric")
        cubic = tuple((int(i), float(k3)) for i, k3 in self.cubic_terms)
        for i, k3 in cubic:
            if not 0 <= i < n:
                raise ValueError(f"cubic term on DOF {i} outside 0..{n - 1}")
            if k3 < 0:
                raise ValueError("cubic coefficients must be non-negative")
        if not 0 <= int(self.forced_dof) < n:
            raise ValueError(f"forced_dof {self.forced_dof} outside 0..{n - 1}")
        for arr in (m, C, K):
            arr.setflags(write=False)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "damping_matrix", C)
        object.__setattr__(self, "stiffness_matrix", K)
        object.__setattr__(self, "cubic_terms", cubic)
        object.__setattr__(self, "forced_dof", int(self.forced_dof))

    @property
    def n_dof(self) -> int:
        return self.mass.shape[0]

    def to_dict(self) -> dict:
        return {
            "mass": self.mass.tolist(),
            "damping_matrix": self.damping_matrix.tolist(),
            "stiffness_matrix": self.stiffness_matrix.tolist(),
            "cubic_terms": [list(t) for t in self.cubic_terms],
            "forced_dof": self.forced_dof,
        }


@dataclass(frozen=True)
class ForcingSeries:
    samples: np.ndarray
    fs: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).ravel()
        if x.size < 1:
            raise ValueError("forcing needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("forcing contains non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)


def build_mdof_chain(n_dof, m=1.0, c=0.1, k=10.0, cubic_terms=(), forced_dof=0):
    """Equal-mass chain fixed to ground at both ends.

    >>> build_mdof_chain(2, 1.0, 0.1, 10.0).stiffness_matrix
    array([[ 20., -10.],
           [-10.,  20.]])
    """
    if int(n_dof) != n_dof or n_dof < 1:
        raise ValueError(f"n_dof must be a positive integer, got {n_dof}")
    if m <= 0 or c <= 0 or k <= 0:
        raise ValueError("m, c and k must be positive")
    n = int(n_dof)
    pattern = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    return SystemSpec(
        mass=np.full(n, float(m)),
        damping_matrix=c * pattern,
        stiffness_matrix=k * pattern,
        cubic_terms=tuple(cubic_terms),
        forced_dof=forced_dof,
    )


def linear_eigenvalues(spec: SystemSpec) -> np.ndarray:
    """Ascending eigenvalues of M^-1 K (rad^2/s^2), cubic terms ignored."""
    M = np.diag(spec.mass)
    try:
        linalg.cholesky(spec.stiffness_matrix)
    except linalg.LinAlgError as exc:
        raise NumericalError("stiffness matrix is not positive definite") from exc
    return linalg.eigh(spec.stiffness_matrix, M, eigvals_only=True)


def linear_natural_frequencies(spec: SystemSpec) -> np.ndarray:
    """Natural frequencies (Hz) of the underlying linear system, ascending."""
    return np.sqrt(linear_eigenvalues(spec)) / (2 * np.pi)


def generate_band_limited_noise(n_samples, fs, std, band=None, seed=None) -> ForcingSeries:
    """Gaussian noise with a brickwall band restriction.

    White noise is drawn, every rfft bin outside ``band`` is zeroed, and the
    result is mean-centred and rescaled so that ``np.std`` equals ``std``.
    """
    n_samples = int(n_samples)
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if fs <= 0 or std < 0:
        raise ValueError("fs must be positive and std non-negative")
    nyq = fs / 2
    f_lo, f_hi = (0.0, nyq) if band is None else (float(band[0]), float(band[1]))
    if not 0 <= f_lo < f_hi <= nyq:
        raise ValueError(f"band [{f_lo}, {f_hi}] must satisfy 0 <= lo < hi <= fs/2 = {nyq}")

    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n_samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples, 1.0 / fs)
    spectrum[(freqs < f_lo) | (freqs > f_hi)] = 0.0
    x = np.fft.irfft(spectrum, n_samples)
    x -= x.mean()
    sd = x.std()
    if sd == 0:
        raise ValueError("band contains no frequency bins for this record length")
    x *= std / sd
    return ForcingSeries(x, fs, seed, {"std": std, "band": [f_lo, f_hi]})


def restoring_force(spec: SystemSpec, y, v):
    """Internal force ``K y + C v + k3 y_i^3`` for displacement/velocity vectors."""
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    n = spec.n_dof
    if y.shape != (n,) or v.shape != (n,):
        raise ValueError(f"y and v must have shape ({n},), got {y.shape} and {v.shape}")
    f = spec.stiffness_matrix @ y + spec.damping_matrix @ v
    for i, k3 in spec.cubic_terms:
        f[i] += k3 * y[i] ** 3
    return f


@njit(cache=True)
def _accel(y, v, K, C, inv_m, cubic_idx, cubic_k3, force, forced, out):
    n = y.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += K[i, j] * y[j] + C[i, j] * v[j]
        out[i] = s
    for c in range(cubic_idx.shape[0]):
        i = cubic_idx[c]
        out[i] += cubic_k3[c] * y[i] * y[i] * y[i]
    for i in range(n):
        out[i] = -out[i] * inv_m[i]
    out[forced] += force * inv_m[forced]


@njit(cache=True)
def _rk4_kernel(K, C, inv_m, cubic_idx, cubic_k3, forced, force, dt, n_sub, y0, v0, out, vout):
    """Fill ``out[i]``/``vout[i]`` with the state at output sample i.

    Returns -1 on success or the first output index whose state went non-finite.
    """
    n = y0.shape[0]
    y = y0.copy()
    v = v0.copy()
    yt = np.empty(n)
    v2 = np.empty(n)
    v3 = np.empty(n)
    v4 = np.empty(n)
    a1 = np.empty(n)
    a2 = np.empty(n)
    a3 = np.empty(n)
    a4 = np.empty(n)
    h2 = 0.5 * dt
    for s in range(force.shape[0]):
        for i in range(n):
            out[s, i] = y[i]
            vout[s, i] = v[i]
            if not np.isfinite(y[i]) or not np.isfinite(v[i]):
                return s
        f = force[s]
        for _ in range(n_sub):
            _accel(y, v, K, C, inv_m, cubic_idx, cubic_k3, f, forced, a1)
            for i in range(n):
                yt[i] = y[i] + h2 * v[i]
                v2[i] = v[i] + h2 * a1[i]
            _accel(yt, v2, K, C, inv_m, cubic_idx, cubic_k3, f, forced, a2)
            for i in range(n):
                yt[i] = y[i] + h2 * v2[i]
                v3[i] = v[i] + h2 * a2[i]
            _accel(yt, v3, K, C, inv_m, cubic_idx, cubic_k3, f, forced, a3)
            for i in range(n):
                yt[i] = y[i] + dt * v3[i]
                v4[i] = v[i] + dt * a3[i]
            _accel(yt, v4, K, C, inv_m, cubic_idx, cubic_k3, f, forced, a4)
            for i in range(n):
                y[i] += dt / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i])
                v[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
    return -1


def integrate(spec: SystemSpec, forcing: ForcingSeries, dt_sub=1e-3, fs_out=None, y0=None, v0=None,
              return_velocity=False):
    """RK4 response of ``spec`` to ``forcing`` applied at ``spec.forced_dof``.

    The state starts at ``(y0, v0)`` (zero by default) and row ``i`` of the
    result is the displacement at ``t = i / fs_out``.  ``1 / dt_sub`` must be
    an integer multiple of ``fs_out``.  With ``return_velocity`` the sampled
    velocities are returned as a second array.
    """
    fs_out = forcing.fs if fs_out is None else float(fs_out)
    if fs_out != forcing.fs:
        raise ValueError(f"forcing sampled at {forcing.fs} Hz but fs_out is {fs_out} Hz")
    ratio = 1.0 / (dt_sub * fs_out)
    n_sub = int(round(ratio))
    if n_sub < 1 or abs(ratio - n_sub) > 1e-9 * ratio:
        raise ValueError(f"1/dt_sub = {1 / dt_sub} is not an integer multiple of fs_out = {fs_out}")
    n = spec.n_dof
    y0 = np.zeros(n) if y0 is None else np.asarray(y0, dtype=float).copy()
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    if y0.shape != (n,) or v0.shape != (n,):
        raise ValueError(f"initial state must have shape ({n},)")

    cubic_idx = np.array([i for i, _ in spec.cubic_terms], dtype=np.int64)
    cubic_k3 = np.array([k3 for _, k3 in spec.cubic_terms], dtype=float)
    out = np.empty((forcing.samples.size, n))
    vout = np.empty_like(out)
    # exact step so that n_sub * dt == 1 / fs_out
    dt = 1.0 / (fs_out * n_sub)
    bad = _rk4_kernel(
        np.ascontiguousarray(spec.stiffness_matrix), np.ascontiguousarray(spec.damping_matrix),
        1.0 / spec.mass, cubic_idx, cubic_k3, spec.forced_dof,
        np.ascontiguousarray(forcing.samples), dt, n_sub, y0, v0, out, vout,
    )
    if bad >= 0:
        raise NumericalError(f"integration became non-finite at output step {bad}")
    series = TimeSeriesMatrix(out, fs_out, "displacement")
    return (series, vout) if return_velocity else series


def simulate(spec: SystemSpec, n_samples, fs=100.0, std=5.0, band=(0.0, 50.0), seed=0,
             dt_sub=1e-3, warmup=1000):
    """Response to band-limited noise with the first ``warmup`` samples dropped."""
    forcing = generate_band_limited_noise(int(n_samples) + int(warmup), fs, std, band, seed)
    response = integrate(spec, forcing, dt_sub, fs)
    return response.with_data(response.data[int(warmup):])


def mechanical_energy(spec: SystemSpec, y, v):
    """Kinetic plus linear strain energy (cubic springs excluded) per row."""
    y = np.atleast_2d(y)
    v = np.atleast_2d(v)
    kinetic = 0.5 * np.einsum("ij,j,ij->i", v, spec.mass, v)
    strain = 0.5 * np.einsum("ij,jk,ik->i", y, spec.stiffness_matrix, y)
    return kinetic + strain
