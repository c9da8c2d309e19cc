"""Exact diagonalization of the transverse-field Ising chain.

Hamiltonian on sites ``x = -m, ..., m+L`` with free boundary::

    H = -1/2 sum_x lam_{x,x+1} Z_x Z_{x+1} - sum_x delta_x X_x

Basis conventions (shared with :mod:`rcising.fkising`):

* site ``x`` is stored in bit ``x + m`` of the state index;
* bit value 0 is spin up (Z = +1), bit value 1 is spin down (Z = -1);
* a reduced density matrix on the block ``[lo, hi]`` is indexed so that site
  ``lo`` is the most significant bit of the local index.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_MAX_SITES = 20
DENSE_MAX_SITES = 12


class DimensionCapError(ValueError):
    """Chain too long for the configured cap."""


class ConvergenceError(RuntimeError):
    pass


class NearDegeneracyWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SpinChainParams:
    """Geometry and intensities of a chain ``[-m, m+L]``.

    ``couplings[i]`` is the bond between sites ``-m+i`` and ``-m+i+1``;
    ``fields[i]`` is the transverse field at site ``-m+i``.
    """

    m: int
    L: int
    couplings: tuple[float, ...]
    fields: tuple[float, ...]
    max_sites: int = DEFAULT_MAX_SITES

    def __post_init__(self):
        if self.m < 0 or self.L < 0:
            raise ValueError("m and L must be non-negative")
        object.__setattr__(self, "couplings", tuple(float(c) for c in self.couplings))
        object.__setattr__(self, "fields", tuple(float(d) for d in self.fields))
        n = 2 * self.m + self.L + 1
        if len(self.fields) != n or len(self.couplings) != n - 1:
            raise ValueError(
                f"need {n} fields and {n - 1} couplings, got "
                f"{len(self.fields)} and {len(self.couplings)}"
            )
        if n > self.max_sites:
            raise DimensionCapError(f"{n} sites exceeds cap of {self.max_sites}")
        if any(not c > 0 for c in self.couplings) or any(not d > 0 for d in self.fields):
            raise ValueError("couplings and fields must be strictly positive")

    @classmethod
    def homogeneous(cls, m: int, L: int, lam: float, delta: float, **kw) -> "SpinChainParams":
        n = 2 * m + L + 1
        return cls(m, L, (lam,) * (n - 1), (delta,) * n, **kw)

    @classmethod
    def from_theta(cls, m: int, L: int, theta: float, **kw) -> "SpinChainParams":
        return cls.homogeneous(m, L, theta, 1.0, **kw)

    @property
    def n(self) -> int:
        return 2 * self.m + self.L + 1

    @property
    def sites(self) -> range:
        return range(-self.m, self.m + self.L + 1)

    def scaled(self, eta: float) -> "SpinChainParams":
        return SpinChainParams(
            self.m,
            self.L,
            tuple(eta * c for c in self.couplings),
            tuple(eta * d for d in self.fields),
            self.max_sites,
        )


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    first_site: int = 0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes)
        n = int(round(np.log2(amps.size)))
        if amps.ndim != 1 or 2**n != amps.size:
            raise ValueError("amplitude vector length must be a power of two")
        if abs(np.linalg.norm(amps) - 1.0) > 1e-12:
            raise ValueError("state vector is not normalized")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n(self) -> int:
        return int(round(np.log2(self.amplitudes.size)))

    def bit(self, site: int) -> int:
        b = site - self.first_site
        if not 0 <= b < self.n:
            raise IndexError(f"site {site} outside chain")
        return b


@dataclass(frozen=True)
class DensityMatrix:
    """Reduced density matrix on the site block ``sites = (lo, hi)``."""

    entries: np.ndarray
    sites: tuple[int, int] = (0, 0)
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        d = 2 ** (self.sites[1] - self.sites[0] + 1)
        if rho.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix for sites {self.sites}")
        if self.check:
            if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(rho) - 1.0) > 1e-10:
                raise ValueError("density matrix does not have unit trace")
            if np.linalg.eigvalsh(rho)[0] < -1e-10:
                raise ValueError("density matrix is not positive semi-definite")
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _flip(v: np.ndarray, bit: int) -> np.ndarray:
    """``v[i ^ (1 << bit)]`` for all i, without an index array."""
    return v.reshape(-1, 2, 2**bit)[:, ::-1, :].reshape(-1)


class IsingHamiltonian:
    """Matrix-free transverse-field Ising Hamiltonian."""

    def __init__(self, params: SpinChainParams):
        self.params = params
        n = params.n
        self.n = n
        self.dim = 2**n
        idx = np.arange(self.dim, dtype=np.int64)
        diag = np.zeros(self.dim)
        for b, lam in enumerate(params.couplings):
            anti = ((idx >> b) ^ (idx >> (b + 1))) & 1
            diag -= 0.5 * lam * (1 - 2 * anti)
        self.diagonal = diag
        self.fields = np.array(params.fields)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)

    @property
    def first_site(self) -> int:
        return -self.params.m

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diagonal * v
        for b, delta in enumerate(self.fields):
            out -= delta * _flip(v, b)
        return out

    __matmul__ = apply

    def dense(self) -> np.ndarray:
        if self.n > DENSE_MAX_SITES:
            raise DimensionCapError(f"dense matrix limited to {DENSE_MAX_SITES} sites")
        H = np.diag(self.diagonal)
        idx = np.arange(self.dim)
        for b, delta in enumerate(self.fields):
            H[idx, idx ^ (1 << b)] -= delta
        return H


def build_hamiltonian(params: SpinChainParams) -> IsingHamiltonian:
    return IsingHamiltonian(params)


def _matvec(H):
    if isinstance(H, IsingHamiltonian):
        return H.apply, H.dim, H.first_site, np.float64
    A = np.asarray(H)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("operator must be square")
    if np.max(np.abs(A - A.conj().T), initial=0.0) > 1e-12:
        raise ValueError("operator is not Hermitian")
    dtype = np.float64 if np.isrealobj(A) else np.complex128
    return (lambda v: A @ v), A.shape[0], 0, dtype


def ground_state(
    H,
    tol: float = 1e-10,
    max_iter: int = 2000,
    krylov_dim: int = 80,
) -> tuple[StateVector, float]:
    """Lowest eigenpair by restarted Lanczos with full reorthogonalization.

    The start vector is the normalized all-ones vector, so the result is
    deterministic.  Converged when ``||H psi - E psi|| <= tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    matvec, dim, first_site, dtype = _matvec(H)
    kd = min(dim, krylov_dim)
    x = np.ones(dim, dtype=dtype) / np.sqrt(dim)
    fallback = np.random.default_rng(0)
    n_matvec = 0
    while n_matvec < max_iter:
        V = np.zeros((kd, dim), dtype=dtype)
        V[0] = x
        alphas, betas = [], []
        for j in range(kd):
            w = matvec(V[j])
            n_matvec += 1
            alphas.append(np.vdot(V[j], w).real)
            for _ in range(2):
                w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
            beta = np.linalg.norm(w)
            T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
            evals, evecs = np.linalg.eigh(T)
            if j + 1 == kd or beta * abs(evecs[-1, 0]) <= 0.1 * tol or n_matvec >= max_iter:
                break
            if beta < 1e-13:
                # invariant subspace: continue in a fresh orthogonal direction
                w = fallback.standard_normal(dim).astype(dtype)
                for _ in range(2):
                    w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
                betas.append(0.0)
                V[j + 1] = w / np.linalg.norm(w)
            else:
                betas.append(beta)
                V[j + 1] = w / beta
        y = evecs[:, 0]
        psi = V[: len(alphas)].T @ y
        psi /= np.linalg.norm(psi)
        energy = float(evals[0])
        residual = np.linalg.norm(matvec(psi) - energy * psi)
        if residual <= tol:
            if len(evals) > 1 and evals[1] - evals[0] < 100 * tol:
                warnings.warn(
                    f"ground state nearly degenerate (gap {evals[1] - evals[0]:.3g})",
                    NearDegeneracyWarning,
                    stacklevel=2,
                )
            # fix the global phase: largest-magnitude amplitude real positive
            k = np.argmax(np.abs(psi))
            psi = psi * (abs(psi[k]) / psi[k])
            if dtype == np.float64:
                psi = psi.real
            return StateVector(psi / np.linalg.norm(psi), first_site), energy
        if kd == dim and residual < 1e-8:
            # full space already spanned; residual is at roundoff level
            return StateVector(psi, first_site), energy
        x = psi
    raise ConvergenceError(f"Lanczos did not converge within {max_iter} matrix-vector products")


def reduced_density(psi: StateVector, block: tuple[int, int]) -> DensityMatrix:
    """Partial trace of ``|psi><psi|`` over all sites outside ``block``."""
    lo, hi = block
    if hi < lo:
        raise ValueError("empty block")
    n = psi.n
    blo, bhi = psi.bit(lo), psi.bit(hi)
    t = psi.amplitudes.reshape((2,) * n)
    # tensor axis a holds bit n-1-a; put the block first with site lo leading
    block_axes = [n - 1 - b for b in range(blo, bhi + 1)]
    rest = [a for a in range(n) if a not in block_axes]
    M = np.transpose(t, block_axes + rest).reshape(2 ** (bhi - blo + 1), -1)
    rho = M @ M.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, (lo, hi))


def sorted_spectrum(rho: DensityMatrix) -> np.ndarray:
    return np.linalg.eigvalsh(rho.entries)[::-1]


def entanglement_entropy(rho: DensityMatrix, clip: float = 1e-10) -> float:
    """Von Neumann entropy in bits, with ``0 log 0 = 0``."""
    p = np.clip(sorted_spectrum(rho), 0.0, 1.0)
    p = p[p > clip]
    return float(-np.sum(p * np.log2(p))) if p.size else 0.0


def operator_norm_diff(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """``sup_{|psi|=1} |<psi|rho1 - rho2|psi>|``, the spectral radius of the difference."""
    if rho1.entries.shape != rho2.entries.shape:
        raise ValueError("density matrices have different dimensions")
    ev = np.linalg.eigvalsh(rho1.entries - rho2.entries)
    return float(np.max(np.abs(ev)))


def zz_correlation(psi: StateVector, x: int, y: int) -> float:
    """``<psi| Z_x Z_y |psi>``."""
    bx, by = psi.bit(x), psi.bit(y)
    idx = np.arange(psi.amplitudes.size, dtype=np.int64)
    sign = 1 - 2 * (((idx >> bx) ^ (idx >> by)) & 1)
    return float(np.sum(sign * np.abs(psi.amplitudes) ** 2))


def chain_ground_state(params: SpinChainParams, tol: float = 1e-10) -> tuple[StateVector, float]:
    return ground_state(build_hamiltonian(params), tol=tol)


def block_density(params: SpinChainParams, tol: float = 1e-10) -> DensityMatrix:
    """``rho_m^L``: the ground state reduced to the block ``[0, L]``."""
    psi, _ = chain_ground_state(params, tol)
    return reduced_density(psi, (0, params.L))


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    """Row-major CSV with an ``re,im`` pair of columns per matrix entry."""
    A = np.asarray(matrix, dtype=complex)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in A:
            w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])


def read_matrix_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    arr = np.array(rows)
    return arr[:, 0::2] + 1j * arr[:, 1::2]
