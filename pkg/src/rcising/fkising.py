"""Spins on random-cluster configurations and the quantum estimands they carry.

With ``q = 2`` every cluster carries an independent fair spin.  Given a
configuration, the probability of any slit pattern ``(eps+, eps-)`` is then
either 0 (pattern splits a cluster) or ``2 ** -k`` where ``k`` is the number
of distinct clusters among the slit vertices.  The estimators below average
these conditional probabilities instead of sampling spins.

Slit patterns are indexed lexicographically with -1 < +1 and site 0 as the
most significant position: ``index = sum_x [eps_x = +1] 2 ** (L - x)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .continuum import (
    BoxSpec,
    ClusterLabeling,
    Interval,
    boundary_items,
    label_clusters,
    separating_sets,
    slit_vertex,
)
from .rcsampler import (
    DEFAULT_BURNIN,
    EstimateResult,
    RcParams,
    _result,
    batch_means,
    collect,
    sample_stream,
    stream,
)
from .spinchain import SpinChainParams, build_hamiltonian

MAX_MATRIX_L = 3
SPIN_STREAM_OFFSET = 1 << 20


class InadmissibleBoundary(ValueError):
    pass


@dataclass(frozen=True)
class SpinAssignment:
    cluster_spins: dict[int, int]
    sigma_plus: tuple[int, ...] = ()
    sigma_minus: tuple[int, ...] = ()


def spin_pattern(index: int, L: int) -> tuple[int, ...]:
    return tuple(1 if (index >> (L - x)) & 1 else -1 for x in range(L + 1))


def pattern_index(eps) -> int:
    L = len(eps) - 1
    return sum(1 << (L - x) for x, e in enumerate(eps) if e > 0)


def to_ed_basis(M: np.ndarray) -> np.ndarray:
    """Reorder a pattern-indexed matrix into the spin-chain block basis."""
    d = M.shape[0]
    L = int(round(math.log2(d))) - 1
    perm = np.array([pattern_index(spin_pattern_ed(j, L)) for j in range(d)])
    return M[np.ix_(perm, perm)]


def from_ed_basis(M: np.ndarray) -> np.ndarray:
    """Inverse of ``to_ed_basis``."""
    d = M.shape[0]
    L = int(round(math.log2(d))) - 1
    perm = np.array([pattern_index(spin_pattern_ed(j, L)) for j in range(d)])
    inv = np.argsort(perm)
    return M[np.ix_(inv, inv)]


def spin_pattern_ed(j: int, L: int) -> tuple[int, ...]:
    return tuple(-1 if (j >> (L - x)) & 1 else 1 for x in range(L + 1))


def slit_labels(lab: ClusterLabeling) -> tuple[np.ndarray, np.ndarray]:
    """Cluster labels of the slit vertices ``x+`` and ``x-``, ``x = 0..L``."""
    sites = lab.box.slit_sites
    if not len(sites):
        raise ValueError("box has no slit")
    plus = np.array([lab.label(slit_vertex(x, +1)) for x in sites])
    minus = np.array([lab.label(slit_vertex(x, -1)) for x in sites])
    return plus, minus


def assign_spins(lab: ClusterLabeling, eta: dict[int, int] | None = None, seed=0) -> SpinAssignment:
    """Fair independent spins per cluster, fixed by ``eta`` on the sides.

    ``eta`` maps a side line (``a`` or ``b``) to the spin imposed along it.
    A cluster touching two sides with opposite imposed spins is inadmissible.
    """
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    labels = np.unique(lab.labels)
    spins = dict(zip(labels.tolist(), np.where(rng.random(labels.size) < 0.5, -1, 1).tolist()))
    if eta:
        forced: dict[int, int] = {}
        s, t = lab.box.time
        for x, spin in eta.items():
            if x not in lab.box.lines:
                raise ValueError(f"eta given on line {x}, which is not a side")
            for c in lab.labels_touching([Interval(x, s, t)]):
                if forced.setdefault(c, spin) != spin:
                    raise InadmissibleBoundary(f"cluster {c} touches both boundary values")
        spins.update(forced)
    if lab.box.slit is None:
        return SpinAssignment(spins)
    plus, minus = slit_labels(lab)
    return SpinAssignment(
        spins,
        tuple(spins[int(c)] for c in plus),
        tuple(spins[int(c)] for c in minus),
    )


class _PatternTable:
    """All ``(eps+, eps-)`` pairs as rows of a ``(d*d, 2(L+1))`` spin array."""

    def __init__(self, L: int):
        d = 2 ** (L + 1)
        P = np.array([spin_pattern(i, L) for i in range(d)])
        self.d = d
        self.V = np.concatenate([np.repeat(P, d, axis=0), np.tile(P, (d, 1))], axis=1)

    def conditional(self, plus: np.ndarray, minus: np.ndarray) -> np.ndarray:
        labels = np.concatenate([plus, minus])
        _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        rep = first[inv]
        ok = np.all(self.V == self.V[:, rep], axis=1)
        return (ok * 2.0 ** -first.size).reshape(self.d, self.d)


def agreement_probability(plus: np.ndarray, minus: np.ndarray) -> float:
    """``P(sigma+ = sigma- | omega) = 2 ** (k_joined - k_slit)``."""
    k_slit = np.unique(np.concatenate([plus, minus])).size
    parent = {int(c): int(c) for c in np.concatenate([plus, minus])}

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for a, b in zip(plus.tolist(), minus.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    k_joined = len({find(c) for c in parent})
    return 2.0 ** (k_joined - k_slit)


def _require_q2(params: RcParams):
    if params.q != 2:
        raise ValueError("spin estimators need q = 2")


@dataclass(frozen=True)
class SlitStats:
    a_m: EstimateResult
    joint_counts: np.ndarray
    naive: EstimateResult


def estimate_am(
    box: BoxSpec,
    params: RcParams,
    n_samples: int,
    seed: int = 0,
    n_burnin: int = DEFAULT_BURNIN,
    thin: int = 1,
) -> SlitStats:
    """Probability that the two slit spin vectors agree.

    ``a_m`` averages the exact conditional agreement probability; ``naive``
    is the indicator estimate from one spin draw per configuration, whose
    draws also fill ``joint_counts``.
    """
    _require_q2(params)
    if box.slit is None:
        raise ValueError("box has no slit")
    L = box.slit
    d = 2 ** (L + 1)
    spin_rng = stream(seed, SPIN_STREAM_OFFSET)
    counts = np.zeros((d, d), dtype=np.int64)
    rb, naive = [], []
    for cfg in sample_stream(box, params, n_samples, n_burnin, seed, 0, thin):
        lab = label_clusters(box, cfg)
        plus, minus = slit_labels(lab)
        rb.append(agreement_probability(plus, minus))
        sa = assign_spins(lab, None, spin_rng)
        i, j = pattern_index(sa.sigma_plus), pattern_index(sa.sigma_minus)
        counts[i, j] += 1
        naive.append(float(i == j))
    return SlitStats(_result(rb, n_burnin, seed, warn=False), counts, _result(naive, n_burnin, seed, warn=False))


@dataclass(frozen=True)
class ReducedMatrixEstimate:
    """Joint slit law and the matrix ``phi(sigma+ = eps+, sigma- = eps-) / a_m``.

    ``matrix`` has unit trace by construction, so it is also the
    trace-normalized estimate.
    """

    L: int
    joint: np.ndarray
    joint_se: np.ndarray
    a_m: EstimateResult
    matrix: np.ndarray
    matrix_se: np.ndarray
    n_samples: int

    @property
    def trace_normalized(self) -> np.ndarray:
        return self.matrix / np.trace(self.matrix)

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        return self.joint.sum(axis=1), self.joint.sum(axis=0)


def estimate_reduced_matrix(
    L: int,
    box: BoxSpec,
    params: RcParams,
    n_samples: int,
    seed: int = 0,
    n_burnin: int = DEFAULT_BURNIN,
    thin: int = 1,
    n_chains: int = 1,
) -> ReducedMatrixEstimate:
    """Rao-Blackwellized estimate of the slit joint law and its ratio to ``a_m``.

    Standard errors come from 32 batch means; the ratio uses the delta
    method on the batch means of numerator and denominator.
    """
    _require_q2(params)
    if L > MAX_MATRIX_L:
        raise ValueError(f"L must be at most {MAX_MATRIX_L}")
    if box.slit != L:
        raise ValueError("box slit length must equal L")
    table = _PatternTable(L)
    d = table.d

    def evaluate(cfg):
        lab = label_clusters(box, cfg)
        return table.conditional(*slit_labels(lab)).ravel()

    Y = collect(box, params, evaluate, n_samples, n_burnin, seed, thin, n_chains)
    joint = Y.mean(axis=0)
    diag = np.arange(d) * (d + 1)
    a_series = Y[:, diag].sum(axis=1)
    a_res = _result(a_series, n_burnin, seed, warn=False)

    nb = min(32, n_samples)
    bs = n_samples // nb
    Yb = Y[: nb * bs].reshape(nb, bs, -1).mean(axis=1)
    ab = Yb[:, diag].sum(axis=1)
    joint_se = Yb.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.zeros(d * d)
    ratio = joint / a_res.estimate
    # delta method: residuals of numerator minus ratio times denominator
    z = (Yb - np.outer(ab, ratio)) / a_res.estimate
    ratio_se = z.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.zeros(d * d)
    return ReducedMatrixEstimate(
        L,
        joint.reshape(d, d),
        joint_se.reshape(d, d),
        a_res,
        ratio.reshape(d, d),
        ratio_se.reshape(d, d),
        n_samples,
    )


def estimate_correlation(
    x: int,
    y: int,
    box: BoxSpec,
    params: RcParams,
    n_samples: int,
    seed: int = 0,
    n_burnin: int = DEFAULT_BURNIN,
    thin: int = 1,
) -> EstimateResult:
    """``phi((x,0) <-> (y,0))``, the FK form of ``<Z_x Z_y>``."""
    _require_q2(params)
    if box.slit is not None:
        raise ValueError("correlation estimator expects a box without slit")
    if x == y:
        return EstimateResult(1.0, 0.0, n_samples, n_burnin, seed, 1.0)
    p, q = Interval(x, 0.0, 0.0), Interval(y, 0.0, 0.0)

    def event(cfg):
        lab = label_clusters(box, cfg)
        return float(bool(lab.labels_touching([p]) & lab.labels_touching([q])))

    values = collect(box, params, {"c": event}, n_samples, n_burnin, seed, thin)[:, 0]
    return _result(values, n_burnin, seed, warn=False)


def correlation_matrix(
    sites: range,
    box: BoxSpec,
    params: RcParams,
    n_samples: int,
    seed: int = 0,
    n_burnin: int = DEFAULT_BURNIN,
    thin: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """All pair connectivities from one chain: (estimates, standard errors)."""
    _require_q2(params)
    sites = list(sites)
    n = len(sites)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    items = [Interval(x, 0.0, 0.0) for x in sites]

    def evaluate(cfg):
        lab = label_clusters(box, cfg)
        labs = [lab.labels_touching([it]) for it in items]
        return [float(bool(labs[i] & labs[j])) for i, j in pairs]

    Y = collect(box, params, evaluate, n_samples, n_burnin, seed, thin)
    est, se = np.eye(n), np.zeros((n, n))
    for col, (i, j) in enumerate(pairs):
        mean, err, _ = batch_means(Y[:, col])
        est[i, j] = est[j, i] = mean
        se[i, j] = se[j, i] = err
    return est, se


def finite_beta_bias_bound(chain: SpinChainParams, beta: float) -> float:
    """Bound on ``|tr(rho_beta A) - <psi|A|psi>|`` for any ``||A|| <= 1``.

    Equals ``2 (1 - w0)``, with ``w0`` the Boltzmann weight of the ground
    state at inverse temperature ``beta``.  Dense spectrum, small chains only.
    """
    ev = np.linalg.eigvalsh(build_hamiltonian(chain).dense())
    w = np.exp(-beta * (ev - ev[0]))
    return float(2.0 * (1.0 - w[0] / w.sum()))


def composite_t(t1: float, t2: float) -> float:
    """``t = t1 + 2 t2 + (t1 + t2) / (1 - t1 - 2 t2)``."""
    denom = 1.0 - t1 - 2.0 * t2
    if denom <= 0:
        raise ValueError("1 - t1 - 2 t2 must be positive")
    return t1 + 2.0 * t2 + (t1 + t2) / denom


@dataclass(frozen=True)
class MixingDiagnostics:
    t1: EstimateResult
    t2: float
    t2_se: float
    t: float | None
    geometry: str

    @property
    def defined(self) -> bool:
        return self.t is not None

    @property
    def hypotheses_hold(self) -> bool:
        """Whether the mixing bound applies (``t <= 1/2``)."""
        return self.t is not None and self.t <= 0.5


def mixing_geometry(box: BoxSpec, geometry: str, K: int | None = None, k: int | None = None):
    """``(Delta, D, Gamma)`` as lists of points/intervals in ``box``."""
    if box.slit is None:
        raise ValueError("mixing diagnostics need a slit box")
    L = box.slit
    m = -box.lines[0]
    if box.lines[1] != m + L:
        raise ValueError("box must be [-m, m+L] x [s, t]")
    if geometry == "equator":
        if K is None or not 1 <= K < L / 2:
            raise ValueError("need 1 <= K < L/2")
        sep = separating_sets(m, L, k=max(1, (3 * m) // 7))
        delta = [slit_vertex(x, +1) for x in range(K, L - K + 1)]
        gamma = [slit_vertex(x, -1) for x in range(K, L - K + 1)]
        D = [Interval(p.line, 0.0, 0.0) for p in sep.equator_points()]
    elif geometry == "parallelogram":
        sep = separating_sets(m, L, k)
        delta = [slit_vertex(x, s) for x in range(L + 1) for s in (+1, -1)]
        gamma = boundary_items(box, "sides")
        D = sep.circuit(box)
    else:
        raise ValueError("geometry must be 'equator' or 'parallelogram'")
    return delta, D, gamma


def mixing_diagnostics(
    box: BoxSpec,
    params: RcParams,
    n_samples: int,
    seed: int = 0,
    geometry: str = "equator",
    K: int | None = None,
    k: int | None = None,
    n_burnin: int = DEFAULT_BURNIN,
    thin: int = 1,
) -> MixingDiagnostics:
    """Estimate ``t1 = phi(Delta <-> D)``, ``t2 = sqrt(phi(D <-> Gamma))`` and ``t``."""
    delta, D, gamma = mixing_geometry(box, geometry, K, k)

    def evaluate(cfg):
        lab = label_clusters(box, cfg)
        ld = lab.labels_touching(D)
        return [float(bool(lab.labels_touching(delta) & ld)), float(bool(ld & lab.labels_touching(gamma)))]

    Y = collect(box, params, evaluate, n_samples, n_burnin, seed, thin)
    t1 = _result(Y[:, 0], n_burnin, seed, warn=False)
    p2, se2, _ = batch_means(Y[:, 1])
    t2 = math.sqrt(p2)
    t2_se = se2 / (2 * t2) if t2 > 0 else 0.0
    try:
        t = composite_t(t1.estimate, t2)
    except ValueError:
        t = None
    return MixingDiagnostics(t1, t2, t2_se, t, geometry)


def joint_ratio(joint: np.ndarray) -> np.ndarray:
    """``phi(eps+, eps-) / (phi(eps+) phi(eps-))`` from a joint slit law."""
    row = joint.sum(axis=1)
    col = joint.sum(axis=0)
    return joint / np.outer(row, col)


def write_joint_counts_csv(path: str | Path, counts: np.ndarray) -> None:
    """Columns ``eps_plus,eps_minus,count``; patterns written as strings of +/-."""
    d = counts.shape[0]
    L = int(round(math.log2(d))) - 1

    def fmt(i):
        return "".join("+" if e > 0 else "-" for e in spin_pattern(i, L))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps_plus", "eps_minus", "count"])
        for i, j in product(range(d), repeat=2):
            w.writerow([fmt(i), fmt(j), int(counts[i, j])])
