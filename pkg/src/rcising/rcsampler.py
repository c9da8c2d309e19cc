"""Sampling continuum percolation and the continuum random-cluster model.

* ``q = 1``: deaths and bridges are independent Poisson processes and are
  sampled directly.
* ``q >= 1``: single-event birth/death Metropolis-Hastings targeting the
  Poisson law reweighted by ``q ** k(omega)``.

Random streams are Philox generators keyed by ``(seed, chain)``, so a chain
is reproducible bit-for-bit on any platform and independent chains never
share a stream.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from bisect import bisect_left, bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from scipy import optimize

from .continuum import (
    BoxSpec,
    Interval,
    RcConfig,
    cluster_count,
    label_clusters,
    reaches_boundary,
)

N_BATCHES = 32
DEFAULT_BURNIN = 100
THREADS_ENV = "RCISING_THREADS"


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RcParams:
    """Bridge intensity ``lam``, death intensity ``delta`` and cluster weight ``q``.

    ``line_deltas`` (one per box line) and ``pair_lams`` (one per adjacent
    pair) override the homogeneous intensities for disordered runs.
    """

    lam: float
    delta: float
    q: float = 1.0
    line_deltas: tuple[float, ...] | None = None
    pair_lams: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (self.lam >= 0 and self.delta > 0):
            raise ValueError("need lam >= 0 and delta > 0")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        for name in ("line_deltas", "pair_lams"):
            seq = getattr(self, name)
            if seq is not None:
                seq = tuple(float(v) for v in seq)
                if any(v < 0 for v in seq):
                    raise ValueError(f"{name} must be non-negative")
                object.__setattr__(self, name, seq)

    @classmethod
    def from_theta(cls, theta: float, q: float = 1.0) -> "RcParams":
        return cls(theta, 1.0, q)

    @property
    def theta(self) -> float:
        return self.lam / self.delta

    def with_q(self, q: float) -> "RcParams":
        return RcParams(self.lam, self.delta, q, self.line_deltas, self.pair_lams)

    def death_rates(self, box: BoxSpec) -> np.ndarray:
        if self.line_deltas is None:
            return np.full(box.width, self.delta)
        if len(self.line_deltas) != box.width:
            raise ValueError("line_deltas must have one entry per box line")
        return np.array(self.line_deltas)

    def bridge_rates(self, box: BoxSpec) -> np.ndarray:
        if self.pair_lams is None:
            return np.full(box.width - 1, self.lam)
        if len(self.pair_lams) != box.width - 1:
            raise ValueError("pair_lams must have one entry per adjacent pair")
        return np.array(self.pair_lams)


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    std_error: float
    n_samples: int
    n_burnin: int = 0
    seed: int = 0
    autocorrelation_time: float = 1.0

    def __post_init__(self):
        if self.std_error < 0 or self.n_samples <= 0:
            raise ValueError("need std_error >= 0 and n_samples > 0")


def stream(seed: int, chain: int = 0) -> np.random.Generator:
    """Philox generator for chain ``chain`` of run ``seed``."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(chain),))
    return np.random.Generator(np.random.Philox(ss))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else stream(seed)


def sample_percolation(box: BoxSpec, params: RcParams, seed) -> RcConfig:
    """Independent Poisson deaths (per line) and bridges (per pair)."""
    rng = _rng(seed)
    s, t = box.time
    T = t - s

    def poisson_times(rate):
        n = rng.poisson(rate * T)
        return np.sort(s + T * rng.random(n))

    deaths = [poisson_times(r) for r in params.death_rates(box)]
    bridges = [poisson_times(r) for r in params.bridge_rates(box)]
    return RcConfig.from_arrays(box, deaths, bridges, check=False)


def acceptance_ratio(move: str, n_current, mass, q, delta_k):
    """Metropolis-Hastings ratio for one birth/death proposal.

    ``move`` is ``'birth'`` or ``'delete'``; ``n_current`` counts events of
    that kind before the move; ``mass`` is intensity times total length.
    Plain arithmetic only, so exact rationals pass straight through.
    """
    weight = q**delta_k
    if move == "birth":
        return weight * mass / (n_current + 1)
    if move == "delete":
        return weight * n_current / mass
    raise ValueError(f"unknown move {move!r}")


_GHOST = (-1, 0)


class Chain:
    """Mutable Markov chain state for the birth/death sampler.

    ``delta_k='local'`` resolves the change in cluster count by a
    bidirectional search between the two affected segments; ``'recount'``
    relabels the whole configuration (slow; kept as a reference).
    """

    def __init__(
        self,
        box: BoxSpec,
        params: RcParams,
        rng: np.random.Generator,
        config: RcConfig | None = None,
        delta_k: str = "local",
    ):
        if delta_k not in ("local", "recount"):
            raise ValueError("delta_k must be 'local' or 'recount'")
        self.box = box
        self.params = params
        self.rng = rng
        self.q = float(params.q)
        self.delta_k_mode = delta_k
        a = box.lines[0]
        self.W = box.width
        self.s, self.t = box.time
        self.T = self.t - self.s
        self.periodic = box.periodic_tb
        self.wired = box.side_bc == "wired"
        self.slit = [box.is_slit_line(a + i) for i in range(self.W)]
        config = config if config is not None else RcConfig.empty(box)
        self.cuts = [sorted(d.tolist() + ([0.0] if self.slit[i] else [])) for i, d in enumerate(config.deaths)]
        self.bridges = [b.tolist() for b in config.bridges]
        self.dcount = [d.size for d in config.deaths]
        self.bcount = [b.size for b in config.bridges]
        self.n_d = sum(self.dcount)
        self.n_b = sum(self.bcount)
        d_rates = params.death_rates(box)
        b_rates = params.bridge_rates(box)
        self.death_mass = float(d_rates.sum() * self.T)
        self.bridge_mass = float(b_rates.sum() * self.T)
        self._d_cum = None if params.line_deltas is None else list(np.cumsum(d_rates) / d_rates.sum())
        self._b_cum = None
        if params.pair_lams is not None and b_rates.sum() > 0:
            self._b_cum = list(np.cumsum(b_rates) / b_rates.sum())
        self.accepted = 0
        self.proposed = 0

    # -- state access ----------------------------------------------------

    def snapshot(self) -> RcConfig:
        deaths = [[u for u in c if u != 0.0] if sl else c for c, sl in zip(self.cuts, self.slit)]
        return RcConfig.from_arrays(self.box, deaths, self.bridges, check=False)

    @property
    def n_events(self) -> int:
        return self.n_d + self.n_b

    # -- connectivity ----------------------------------------------------

    def _seg(self, i: int, u: float) -> tuple[int, int]:
        c = self.cuts[i]
        k = bisect_left(c, u)
        if self.periodic and k == len(c):
            k = 0
        return (i, k)

    def _neighbours(self, node):
        if node == _GHOST:
            for i in {0, self.W - 1}:
                n = len(self.cuts[i])
                count = n if (self.periodic and n) else n + 1
                for k in range(count):
                    yield (i, k)
            return
        i, k = node
        c = self.cuts[i]
        n = len(c)
        if n == 0:
            spans = ((self.s, self.t),)
        elif self.periodic and k == 0:
            spans = ((self.s, c[0]), (c[-1], self.t))
        else:
            spans = ((c[k - 1] if k > 0 else self.s, c[k] if k < n else self.t),)
        if self.wired and (i == 0 or i == self.W - 1):
            yield _GHOST
        for j, other in ((i, i + 1), (i - 1, i - 1)):
            if j < 0 or j >= self.W - 1:
                continue
            br = self.bridges[j]
            if not br:
                continue
            oc = self.cuts[other]
            on = len(oc)
            for lo, hi in spans:
                for u in br[bisect_right(br, lo) : bisect_left(br, hi)]:
                    kk = bisect_left(oc, u)
                    if self.periodic and kk == on:
                        kk = 0
                    yield (other, kk)

    def connected(self, a, b) -> bool:
        """Bidirectional breadth-first search; cost ~ size of the smaller cluster."""
        if a == b:
            return True
        seen = ({a}, {b})
        frontier = ([a], [b])
        while frontier[0] and frontier[1]:
            side = 0 if len(frontier[0]) <= len(frontier[1]) else 1
            mine, theirs = seen[side], seen[1 - side]
            nxt = []
            for node in frontier[side]:
                for nb in self._neighbours(node):
                    if nb in theirs:
                        return True
                    if nb not in mine:
                        mine.add(nb)
                        nxt.append(nb)
            frontier[side][:] = nxt
        return False

    def _split_connected(self, i: int, pos: int) -> bool:
        """Are the segments on either side of cut ``pos`` of line ``i`` connected?"""
        n = len(self.cuts[i])
        above = pos + 1
        if self.periodic and above == n:
            above = 0
        return self.connected((i, pos), (i, above))

    def count_clusters(self) -> int:
        return cluster_count(self.box, self.snapshot())

    # -- moves -----------------------------------------------------------

    def _pick_line(self, u: float, cum) -> int:
        if cum is None:
            return min(int(u * self.W), self.W - 1)
        return min(bisect_right(cum, u), len(cum) - 1)

    def _pick_pair(self, u: float) -> int:
        if self._b_cum is None:
            return min(int(u * (self.W - 1)), self.W - 2)
        return min(bisect_right(self._b_cum, u), len(self._b_cum) - 1)

    def _locate(self, counts, r: int) -> tuple[int, int]:
        for i, c in enumerate(counts):
            if r < c:
                return i, r
            r -= c
        raise IndexError(r)

    def _decide(self, base: float, u: float, lo: float, hi: float, delta_k_fn) -> bool:
        # accept iff u < base * q**dk; the search is skipped when the bounds decide
        if u < base * lo:
            return True
        if u >= base * hi:
            return False
        return u < base * self.q ** delta_k_fn()

    def _recount_delta(self, apply, undo) -> int:
        k0 = self.count_clusters()
        apply()
        k1 = self.count_clusters()
        undo()
        return k1 - k0

    def step(self, u0: float, u1: float, u2: float, u3: float) -> bool:
        """One proposal driven by four uniforms; returns acceptance."""
        kind = min(int(u0 * 4), 3)
        q = self.q
        self.proposed += 1
        recount = self.delta_k_mode == "recount"
        if kind == 0:  # insert death
            i = self._pick_line(u1, self._d_cum)
            u = self.s + u2 * self.T
            c = self.cuts[i]
            pos = bisect_left(c, u)
            if u <= self.s or (pos < len(c) and c[pos] == u):
                return False
            base = acceptance_ratio("birth", self.n_d, self.death_mass, 1.0, 0)

            def dk():
                if recount:
                    return self._recount_delta(lambda: self._ins_death(i, pos, u), lambda: self._del_death(i, pos))
                self._ins_death(i, pos, u)
                out = 0 if self._split_connected(i, pos) else 1
                self._del_death(i, pos)
                return out

            ok = self._decide(base, u3, 1.0, q, dk)
            if ok:
                self._ins_death(i, pos, u)
        elif kind == 1:  # delete death
            if self.n_d == 0:
                return False
            i, r = self._locate(self.dcount, min(int(u1 * self.n_d), self.n_d - 1))
            c = self.cuts[i]
            pos = r
            if self.slit[i] and r >= bisect_left(c, 0.0):
                pos += 1
            u = c[pos]
            base = acceptance_ratio("delete", self.n_d, self.death_mass, 1.0, 0)

            def dk():
                if recount:
                    return self._recount_delta(lambda: self._del_death(i, pos), lambda: self._ins_death(i, pos, u))
                return 0 if self._split_connected(i, pos) else -1

            ok = self._decide(base, u3, 1.0 / q, 1.0, dk)
            if ok:
                self._del_death(i, pos)
        elif kind == 2:  # insert bridge
            if self.W < 2 or self.bridge_mass == 0:
                return False
            j = self._pick_pair(u1)
            u = self.s + u2 * self.T
            br = self.bridges[j]
            pos = bisect_left(br, u)
            if u <= self.s or (pos < len(br) and br[pos] == u) or self._on_slit_cut(j, u):
                return False
            base = acceptance_ratio("birth", self.n_b, self.bridge_mass, 1.0, 0)

            def dk():
                if recount:
                    return self._recount_delta(lambda: self._ins_bridge(j, pos, u), lambda: self._del_bridge(j, pos))
                return 0 if self.connected(self._seg(j, u), self._seg(j + 1, u)) else -1

            ok = self._decide(base, u3, 1.0 / q, 1.0, dk)
            if ok:
                self._ins_bridge(j, pos, u)
        else:  # delete bridge
            if self.n_b == 0:
                return False
            j, pos = self._locate(self.bcount, min(int(u1 * self.n_b), self.n_b - 1))
            u = self.bridges[j][pos]
            base = acceptance_ratio("delete", self.n_b, self.bridge_mass, 1.0, 0)

            def dk():
                if recount:
                    return self._recount_delta(lambda: self._del_bridge(j, pos), lambda: self._ins_bridge(j, pos, u))
                self._del_bridge(j, pos)
                out = 0 if self.connected(self._seg(j, u), self._seg(j + 1, u)) else 1
                self._ins_bridge(j, pos, u)
                return out

            ok = self._decide(base, u3, 1.0, q, dk)
            if ok:
                self._del_bridge(j, pos)
        if ok:
            self.accepted += 1
        return ok

    def _on_slit_cut(self, j: int, u: float) -> bool:
        return u == 0.0 and (self.slit[j] or self.slit[j + 1])

    def _ins_death(self, i, pos, u):
        self.cuts[i].insert(pos, u)
        self.dcount[i] += 1
        self.n_d += 1

    def _del_death(self, i, pos):
        del self.cuts[i][pos]
        self.dcount[i] -= 1
        self.n_d -= 1

    def _ins_bridge(self, j, pos, u):
        self.bridges[j].insert(pos, u)
        self.bcount[j] += 1
        self.n_b += 1

    def _del_bridge(self, j, pos):
        del self.bridges[j][pos]
        self.bcount[j] -= 1
        self.n_b -= 1

    @property
    def sweep_length(self) -> int:
        # fixed per box: a length read off the current state would make the
        # recorded states depend on when sweeps end and bias the law
        return int(math.ceil(self.death_mass + self.bridge_mass)) + 1

    def sweep(self) -> None:
        """``sweep_length`` proposals, each of the four moves with probability 1/4."""
        for row in self.rng.random((self.sweep_length, 4)).tolist():
            self.step(*row)


def mcmc_sweep(config: RcConfig, box: BoxSpec, params: RcParams, seed) -> RcConfig:
    chain = Chain(box, params, _rng(seed), config)
    chain.sweep()
    return chain.snapshot()


def sample_stream(
    box: BoxSpec,
    params: RcParams,
    n_samples: int,
    n_burnin: int = DEFAULT_BURNIN,
    seed: int = 0,
    chain: int = 0,
    thin: int = 1,
    direct: bool | None = None,
) -> Iterator[RcConfig]:
    """Configurations from one chain: iid when ``q == 1`` (unless ``direct=False``)."""
    rng = stream(seed, chain)
    if direct is None:
        direct = params.q == 1.0
    if direct:
        if params.q != 1.0:
            raise ValueError("direct sampling needs q = 1")
        for _ in range(n_samples):
            yield sample_percolation(box, params, rng)
        return
    ch = Chain(box, params, rng)
    for _ in range(n_burnin):
        ch.sweep()
    for _ in range(n_samples):
        for _ in range(thin):
            ch.sweep()
        yield ch.snapshot()


def batch_means(values, n_batches: int = N_BATCHES) -> tuple[float, float, float]:
    """Mean, batch-means standard error, and integrated autocorrelation time."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    mean = float(x.mean())
    nb = min(n_batches, n)
    if nb < 2:
        return mean, 0.0, 1.0
    bs = n // nb
    bm = x[: nb * bs].reshape(nb, bs).mean(axis=1)
    var_b = float(bm.var(ddof=1))
    se = math.sqrt(var_b / nb)
    var_x = float(x.var(ddof=1))
    tau = bs * var_b / var_x if var_x > 0 else 1.0
    return mean, se, tau


def _result(values, n_burnin, seed, warn=True) -> EstimateResult:
    mean, se, tau = batch_means(values)
    n = len(values)
    if warn and tau > n / 50:
        warnings.warn(
            f"autocorrelation time {tau:.1f} exceeds n_samples/50 = {n / 50:.1f}",
            ConvergenceWarning,
            stacklevel=3,
        )
    return EstimateResult(mean, se, n, n_burnin, seed, tau)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def collect(
    box: BoxSpec,
    params: RcParams,
    functions: Mapping[str, Callable[[RcConfig], float]] | Callable[[RcConfig], Sequence[float]],
    n_samples: int,
    n_burnin: int = DEFAULT_BURNIN,
    seed: int = 0,
    thin: int = 1,
    n_chains: int = 1,
    direct: bool | None = None,
) -> np.ndarray:
    """Evaluate statistics on every sample; returns an ``(n_samples, n_stats)`` array.

    Chains ``0..n_chains-1`` split the samples and run concurrently (thread
    count from ``RCISING_THREADS``); rows are ordered by chain, so the
    result does not depend on scheduling.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if callable(functions):
        evaluate = functions
    else:
        fns = list(functions.values())

        def evaluate(cfg):
            return [f(cfg) for f in fns]

    sizes = [n_samples // n_chains + (c < n_samples % n_chains) for c in range(n_chains)]

    def run(c):
        return [evaluate(cfg) for cfg in sample_stream(box, params, sizes[c], n_burnin, seed, c, thin, direct)]

    with ThreadPoolExecutor(max_workers=min(_threads(), n_chains)) as ex:
        rows = [r for part in ex.map(run, range(n_chains)) for r in part]
    return np.asarray(rows, dtype=float).reshape(n_samples, -1)


def estimate_event(
    box: BoxSpec,
    params: RcParams,
    event: Callable[[RcConfig], float],
    n_samples: int,
    n_burnin: int = DEFAULT_BURNIN,
    seed: int = 0,
    thin: int = 1,
    n_chains: int = 1,
) -> EstimateResult:
    """Probability (or mean) of ``event`` under the box measure."""
    values = collect(box, params, {"event": event}, n_samples, n_burnin, seed, thin, n_chains)[:, 0]
    burn = 0 if params.q == 1.0 else n_burnin
    return _result(values, burn, seed)


def estimate_many(
    box: BoxSpec,
    params: RcParams,
    functions: Mapping[str, Callable[[RcConfig], float]],
    n_samples: int,
    n_burnin: int = DEFAULT_BURNIN,
    seed: int = 0,
    thin: int = 1,
    n_chains: int = 1,
    direct: bool | None = None,
) -> dict[str, EstimateResult]:
    values = collect(box, params, functions, n_samples, n_burnin, seed, thin, n_chains, direct)
    burn = 0 if (direct if direct is not None else params.q == 1.0) else n_burnin
    return {name: _result(values[:, i], burn, seed, warn=False) for i, name in enumerate(functions)}


def central_interval(box: BoxSpec, half_height: float = 0.5) -> Interval:
    """``I``: the unit interval on the middle line at the middle time."""
    a, b = box.lines
    mid = 0.5 * (box.time[0] + box.time[1])
    x = 0 if a <= 0 <= b else (a + b) // 2
    return Interval(x, mid - half_height, mid + half_height)


def side_reaching(box: BoxSpec, source: Interval | None = None) -> Callable[[RcConfig], float]:
    """Indicator of ``I <-> vertical sides``."""
    src = [source or central_interval(box)]

    def event(cfg: RcConfig) -> float:
        return float(reaches_boundary(box, cfg, src, "sides"))

    return event


@dataclass(frozen=True)
class DecayFit:
    gamma: float
    C: float
    gamma_se: float
    log_C_se: float
    r_squared: float
    used: tuple[float, ...] = ()
    dropped: tuple[float, ...] = field(default=())

    def significance(self) -> float:
        """``gamma / gamma_se`` (inf for an exact fit with gamma > 0)."""
        if self.gamma_se == 0:
            return math.inf if self.gamma > 0 else (-math.inf if self.gamma < 0 else 0.0)
        return self.gamma / self.gamma_se


def estimate_decay_rate(points: Sequence[tuple[float, EstimateResult | float]]) -> DecayFit:
    """Fit ``p_m ~ C exp(-gamma m)`` by weighted least squares on ``log p``.

    Weights are ``(p / SE)^2`` (delta method).  If any standard error is
    zero the fit is unweighted.  Non-positive estimates are dropped.  The
    slope error is inflated by ``sqrt(chi2/dof)`` when that exceeds one.
    """
    ms, ps, ses, dropped = [], [], [], []
    for m, r in points:
        est, se = (r.estimate, r.std_error) if isinstance(r, EstimateResult) else (float(r), 0.0)
        if est <= 0:
            dropped.append(float(m))
            continue
        ms.append(float(m))
        ps.append(est)
        ses.append(se)
    if dropped:
        warnings.warn(f"dropped non-positive estimates at m = {dropped}", RuntimeWarning, stacklevel=2)
    if len(ms) < 3:
        raise ValueError("need at least 3 points with positive estimates")
    x = np.array(ms)
    y = np.log(ps)
    se = np.array(ses)
    weighted = bool(np.all(se > 0))
    w = (np.array(ps) / se) ** 2 if weighted else np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    resid = y - X @ beta
    chi2 = float(np.sum(w * resid**2))
    dof = len(x) - 2
    if weighted:
        scale = max(1.0, chi2 / dof) if dof > 0 else 1.0
    else:
        scale = chi2 / dof if dof > 0 else 0.0
    cov = cov * scale
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - chi2 / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(
        gamma=float(-beta[1]),
        C=float(math.exp(beta[0])),
        gamma_se=float(math.sqrt(max(cov[1, 1], 0.0))),
        log_C_se=float(math.sqrt(max(cov[0, 0], 0.0))),
        r_squared=r2,
        used=tuple(ms),
        dropped=tuple(dropped),
    )


def fit_decay_binomial(points: Sequence[tuple[float, EstimateResult]]) -> DecayFit:
    """Maximum-likelihood fit of ``p_m = C exp(-gamma m)`` to binomial counts.

    Each estimate counts as ``n_eff = n_samples / tau`` independent trials
    with ``estimate * n_eff`` successes, so points with zero hits still
    constrain the fit.  Standard errors come from the Fisher information.
    """
    if len(points) < 2:
        raise ValueError("need at least 2 points")
    x = np.array([float(m) for m, _ in points])
    p_hat = np.array([r.estimate for _, r in points])
    if np.any((p_hat < 0) | (p_hat > 1)):
        raise ValueError("estimates must be probabilities")
    n = np.array([r.n_samples / max(r.autocorrelation_time, 1.0) for _, r in points])
    k = p_hat * n
    if not np.any(k > 0):
        raise ValueError("no successes at any point")
    X = np.column_stack([np.ones_like(x), -x])

    def nll(b):
        eta = X @ b
        if np.any(eta >= 0):
            return np.inf
        return -float(np.sum(k * eta + (n - k) * np.log1p(-np.exp(eta))))

    def grad(b):
        eta = X @ b
        p = np.exp(eta)
        return -X.T @ ((k - n * p) / (1 - p))

    pos = p_hat > 0
    if pos.sum() >= 2:
        start = np.polyfit(x[pos], np.log(p_hat[pos]), 1)[::-1] * np.array([1.0, -1.0])
    else:
        start = np.array([math.log(k.sum() / n.sum()), 0.0])
    start[0] = min(start[0], -1e-3 + start[1] * x.min())
    res = optimize.minimize(nll, start, jac=grad, method="BFGS")
    b = res.x
    p = np.exp(X @ b)
    info = (X.T * (n * p / (1 - p))) @ X
    cov = np.linalg.inv(info)
    # R^2 on the log scale, over the points with hits
    lp = np.log(p_hat[pos])
    ss = float(np.sum((lp - lp.mean()) ** 2))
    r2 = 1.0 - float(np.sum((lp - np.log(p[pos])) ** 2)) / ss if ss > 0 else 1.0
    return DecayFit(
        gamma=float(b[1]),
        C=float(math.exp(b[0])),
        gamma_se=float(math.sqrt(cov[1, 1])),
        log_C_se=float(math.sqrt(cov[0, 0])),
        r_squared=r2,
        used=tuple(x.tolist()),
    )


@dataclass(frozen=True)
class DominationRow:
    name: str
    mean_q: EstimateResult
    mean_1: EstimateResult
    n_sigma: float = 3.0

    @property
    def combined_se(self) -> float:
        return math.hypot(self.mean_q.std_error, self.mean_1.std_error)

    @property
    def ordered(self) -> bool:
        return self.mean_q.estimate <= self.mean_1.estimate + self.n_sigma * self.combined_se


def check_domination(
    box: BoxSpec,
    params_q: RcParams,
    n_samples: int,
    seed: int = 0,
    n_burnin: int = DEFAULT_BURNIN,
    thin: int = 1,
    source: Interval | None = None,
) -> list[DominationRow]:
    """Compare increasing statistics under ``q`` against ``q = 1``.

    Uses the bridge count, minus the death count, and the side-reaching
    indicator.  Each row is ``ordered`` when the ``q`` mean does not exceed
    the percolation mean by more than 3 combined standard errors.
    """
    stats = {
        "bridge_count": lambda c: c.n_bridges,
        "minus_death_count": lambda c: -c.n_deaths,
        "side_reaching": side_reaching(box, source),
    }
    res_q = estimate_many(box, params_q, stats, n_samples, n_burnin, seed, thin)
    res_1 = estimate_many(box, params_q.with_q(1.0), stats, n_samples, 0, seed + 1)
    return [DominationRow(k, res_q[k], res_1[k]) for k in stats]


ESTIMATE_COLUMNS = ("m", "L", "theta", "q", "estimate", "std_error", "n_samples", "seed")


def write_estimates_csv(path: str | Path, rows: Sequence[Mapping[str, object]], header: Sequence[str] = ()) -> None:
    """CSV with columns ``m,L,theta,q,estimate,std_error,n_samples,seed``; ``header`` lines go first as comments."""
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=ESTIMATE_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def cluster_count_of(box: BoxSpec) -> Callable[[RcConfig], float]:
    return lambda cfg: float(label_clusters(box, cfg).n_clusters)
