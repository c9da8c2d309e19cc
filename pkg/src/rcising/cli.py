"""Command-line experiment runner.

Every subcommand takes ``--config FILE`` (``key = value`` lines),
``--seed``, ``--out`` and trailing ``key=value`` overrides.  Data files are
deterministic for a fixed spec and seed; wall-clock time goes to a
``<out>.timing.json`` sidecar so reruns stay byte-identical.

Exit codes: 2 config error, 3 infeasible parameters, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, bounds
from .continuum import BoxSpec
from .fkising import (
    InadmissibleBoundary,
    correlation_matrix,
    estimate_reduced_matrix,
    finite_beta_bias_bound,
    from_ed_basis,
    mixing_diagnostics,
    spin_pattern,
)
from .rcsampler import (
    RcParams,
    estimate_decay_rate,
    estimate_event,
    fit_decay_binomial,
    side_reaching,
    stream,
)
from .spinchain import (
    DimensionCapError,
    SpinChainParams,
    block_density,
    chain_ground_state,
    entanglement_entropy,
    operator_norm_diff,
    zz_correlation,
)


EXIT_CONFIG, EXIT_FEASIBILITY, EXIT_IO = 2, 3, 4

log = logging.getLogger("rcising")


class ConfigError(ValueError):
    pass


class FeasibilityError(ValueError):
    pass


# -- parameter types ------------------------------------------------------


def _parse_int(s: str) -> int:
    return int(s)


def _parse_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _parse_ints(s: str) -> tuple[int, ...]:
    """``4``, ``1,2,5`` or ``lo..hi`` / ``lo..hi:step`` (inclusive)."""
    s = s.strip()
    if ".." in s:
        span, _, step = s.partition(":")
        lo, hi = span.split("..")
        st = int(step) if step else 1
        if st <= 0:
            raise ValueError("step must be positive")
        return tuple(range(int(lo), int(hi) + 1, st))
    return tuple(int(v) for v in s.split(","))


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(_parse_float(v) for v in s.split(","))


def _parse_str(s: str) -> str:
    return s.strip()


PARSERS = {int: _parse_int, float: _parse_float, "ints": _parse_ints, "floats": _parse_floats, str: _parse_str}

# keys every experiment accepts
COMMON = {"seed": (int, 0), "out": (str, "")}
COUPLING = {"theta": (float, None), "lambda": (float, None), "delta": (float, None)}
SAMPLING = {"n_samples": (int, 4000), "n_burnin": (int, 200), "thin": (int, 1), "n_chains": (int, 1)}


@dataclass
class Experiment:
    name: str
    keys: dict
    run: Callable
    columns: tuple[str, ...] = ()
    json_only: bool = False
    default_theta: float | None = None


@dataclass
class ExperimentSpec:
    experiment: str
    parameters: dict = field(default_factory=dict)

    def canonical(self) -> str:
        return json.dumps({"experiment": self.experiment, "parameters": _jsonable(self.parameters)}, sort_keys=True)

    def content_hash(self) -> str:
        """Git blob hash of the canonical spec."""
        body = self.canonical().encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def read_config_lines(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key = value`` pairs; ``#`` starts a comment."""
    raw: dict[str, str] = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"{source}:{no}: expected 'key = value'")
        if key in raw:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r}")
        raw[key] = value
    return raw


def resolve(experiment: str, raw: dict[str, str]) -> ExperimentSpec:
    """Type-check raw values against the experiment's schema and fill defaults."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    exp = EXPERIMENTS[experiment]
    schema = {**COMMON, **exp.keys}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) for {experiment}: {', '.join(unknown)}")
    params: dict = {}
    for key, (typ, default) in schema.items():
        if key in raw:
            try:
                params[key] = PARSERS[typ](raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{key}: cannot read {raw[key]!r} as {getattr(typ, '__name__', typ)}") from exc
        else:
            params[key] = default
            if key not in COUPLING:
                log.info("default %s = %s", key, default)
    if "theta" in exp.keys:
        _resolve_coupling(params, exp.default_theta)
    return ExperimentSpec(experiment, params)


def _resolve_coupling(p: dict, default_theta: float | None) -> None:
    theta, lam, delta = p["theta"], p["lambda"], p["delta"]
    if delta is None:
        delta = 1.0
        log.info("default delta = 1.0")
    if delta <= 0:
        raise ConfigError("delta must be positive")
    if lam is None:
        if theta is None:
            theta = default_theta
            log.info("default theta = %s", theta)
        lam = theta * delta
    elif theta is not None and not math.isclose(theta, lam / delta, rel_tol=1e-12, abs_tol=1e-15):
        raise ConfigError(f"theta = {theta} is inconsistent with lambda / delta = {lam / delta}")
    if lam <= 0:
        raise ConfigError("lambda must be positive")
    p["lambda"], p["delta"], p["theta"] = lam, delta, lam / delta


def parse_config(path: str | Path, experiment: str, overrides: dict[str, str] | None = None) -> ExperimentSpec:
    """Read a config file, apply ``overrides`` and resolve it."""
    raw = read_config_lines(Path(path).read_text(), str(path)) if path else {}
    raw.update(overrides or {})
    return resolve(experiment, raw)


# -- helpers --------------------------------------------------------------


def _chain(p, m: int, L: int) -> SpinChainParams:
    # theta-canonical form: lambda = theta, delta = 1
    try:
        return SpinChainParams.homogeneous(m, L, p["theta"], 1.0)
    except DimensionCapError as exc:
        raise FeasibilityError(str(exc)) from exc


def _rc(p, q: float | None = None) -> RcParams:
    return RcParams.from_theta(p["theta"], p["q"] if q is None else q)


def _beta(p) -> float:
    # time rescales with delta when moving to lambda = theta, delta = 1
    return p["beta"] * p.get("delta", 1.0)


def _decay_box(m: int, beta: float) -> BoxSpec:
    return BoxSpec.square(m) if beta <= 0 else BoxSpec((-m, m), (-beta / 2, beta / 2))


def _fit_summary(points) -> dict:
    out = {}
    try:
        f = fit_decay_binomial(points)
        out["binomial_fit"] = {"gamma": f.gamma, "gamma_se": f.gamma_se, "C": f.C, "significance": f.significance()}
    except ValueError as exc:
        out["binomial_fit"] = {"error": str(exc)}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            f = estimate_decay_rate(points)
        out["log_fit"] = {
            "gamma": f.gamma,
            "gamma_se": f.gamma_se,
            "C": f.C,
            "r_squared": f.r_squared,
            "dropped": list(f.dropped),
        }
    except ValueError as exc:
        out["log_fit"] = {"error": str(exc)}
    return out


def _pattern_str(i: int, L: int) -> str:
    return "".join("+" if e > 0 else "-" for e in spin_pattern(i, L))


# -- experiments ----------------------------------------------------------


def run_ed_entropy(p):
    rows, ent = [], []
    for L in p["L"]:
        s = entanglement_entropy(block_density(_chain(p, p["m"], L)))
        ent.append(s)
        rows.append({"m": p["m"], "L": L, "theta": p["theta"], "entropy_bits": s})
    inc = np.diff(ent)
    return rows, {"max_entropy_bits": max(ent), "increments": inc.tolist()}


def run_ed_normdiff(p):
    N, L = p["N"], p["L"]
    if max(p["m"]) >= N:
        raise FeasibilityError("every m must be below N")
    ref = block_density(_chain(p, N, L))
    rows, pts = [], []
    for m in p["m"]:
        d = operator_norm_diff(block_density(_chain(p, m, L)), ref)
        rows.append({"m": m, "L": L, "N": N, "theta": p["theta"], "norm_diff": d})
        pts.append((m, d))
    ms = np.array([m for m, _ in pts], dtype=float)
    y = np.log([d for _, d in pts])
    slope, icpt = np.polyfit(ms, y, 1)
    r2 = 1 - np.sum((y - (slope * ms + icpt)) ** 2) / np.sum((y - y.mean()) ** 2) if len(ms) > 1 else 1.0
    return rows, {"slope": float(slope), "gamma": float(-slope), "C": float(math.exp(icpt)), "r_squared": float(r2)}


def _decay_rows(p, theta: float, seed_base: int):
    rows, pts = [], []
    beta = _beta(p)
    params = RcParams.from_theta(theta, p["q"])
    for m in p["m"]:
        box = _decay_box(m, beta)
        seed = seed_base + m
        r = estimate_event(box, params, side_reaching(box), p["n_samples"], p["n_burnin"], seed, p["thin"], p["n_chains"])
        pts.append((m, r))
        rows.append(
            {
                "m": m,
                "theta": theta,
                "q": p["q"],
                "beta": box.height,
                "estimate": r.estimate,
                "std_error": r.std_error,
                "n_samples": r.n_samples,
                "seed": seed,
            }
        )
    return rows, pts


def run_rc_decay(p):
    rows, pts = _decay_rows(p, p["theta"], p["seed"])
    return rows, _fit_summary(pts)


def run_rc_critical_scan(p):
    rows, summary = [], {}
    for i, theta in enumerate(p["thetas"]):
        r, pts = _decay_rows(p, theta, p["seed"] + 1000 * i)
        rows += r
        summary[repr(theta)] = _fit_summary(pts)
    return rows, summary


def run_fk_crosscheck(p):
    m, L = p["m"], p["L"]
    chain = _chain(p, m, L)
    psi, _ = chain_ground_state(chain)
    box = BoxSpec.chain_box(m, L, _beta(p))
    sites = range(-m, m + L + 1)
    est, se = correlation_matrix(sites, box, _rc(p, 2.0), p["n_samples"], p["seed"], p["n_burnin"], p["thin"])
    rows, worst = [], 0.0
    for i, x in enumerate(sites):
        for j, y in enumerate(sites):
            if j <= i:
                continue
            ed = zz_correlation(psi, x, y)
            diff = abs(est[i, j] - ed)
            worst = max(worst, diff - 3 * se[i, j])
            rows.append({"x": x, "y": y, "phi": est[i, j], "std_error": se[i, j], "ed": ed, "abs_diff": diff})
    bias = finite_beta_bias_bound(chain, _beta(p)) if chain.n <= 12 else None
    return rows, {"max_excess_over_3se": worst, "finite_beta_bias_bound": bias}


def run_fk_am(p):
    m, L = p["m"], p["L"]
    box = BoxSpec.slit_box(m, L, _beta(p))
    try:
        est = estimate_reduced_matrix(L, box, _rc(p, 2.0), p["n_samples"], p["seed"], p["n_burnin"], p["thin"], p["n_chains"])
    except ValueError as exc:
        raise FeasibilityError(str(exc)) from exc
    rho_fk = from_ed_basis(block_density(_chain(p, m, L)).entries.real)
    Mt = est.trace_normalized
    d = Mt.shape[0]
    rows = []
    for i in range(d):
        for j in range(d):
            rows.append(
                {
                    "eps_plus": _pattern_str(i, L),
                    "eps_minus": _pattern_str(j, L),
                    "joint": est.joint[i, j],
                    "joint_se": est.joint_se[i, j],
                    "matrix": Mt[i, j],
                    "matrix_se": est.matrix_se[i, j],
                    "ed_rho": rho_fk[i, j],
                }
            )
    z = np.abs(Mt - rho_fk) - 3 * est.matrix_se
    return rows, {
        "a_m": est.a_m.estimate,
        "a_m_se": est.a_m.std_error,
        "max_excess_over_3se": float(z.max()),
        "max_asymmetry": float(np.abs(Mt - Mt.T).max()),
    }


def run_mixing_diag(p):
    box = BoxSpec.slit_box(p["m"], p["L"], _beta(p))
    K = p["K"] or None
    k = p["k"] or None
    try:
        md = mixing_diagnostics(box, _rc(p, 2.0), p["n_samples"], p["seed"], p["geometry"], K, k, p["n_burnin"], p["thin"])
    except ValueError as exc:
        raise FeasibilityError(str(exc)) from exc
    return None, {
        "t1": md.t1.estimate,
        "t1_se": md.t1.std_error,
        "t2": md.t2,
        "t2_se": md.t2_se,
        "t": md.t,
        "defined": md.defined,
        "hypotheses_hold": md.hypotheses_hold,
    }


def run_bounds_report(p):
    try:
        rep = bounds.bounds_report(p["lambda"], p["delta"], p["gamma"], p["C"], p["K"] or None, p["C1"])
    except ValueError as exc:
        raise FeasibilityError(str(exc)) from exc
    return None, rep


def disorder_draw(m: int, theta: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Fields in ``[1, 2]`` and couplings in ``[theta/2, theta]`` on ``2m+1`` lines.

    Every draw satisfies the ratio condition ``lam_xy / delta_x <= theta`` and
    is pointwise dominated by the homogeneous ``(theta, 1)`` intensities.
    """
    deltas = 1.0 + rng.random(2 * m + 1)
    lams = theta * (0.5 + 0.5 * rng.random(2 * m))
    return lams, deltas


def run_disorder_sweep(p):
    beta = _beta(p)
    rows = []
    homog = {}
    for m in p["m"]:
        box = _decay_box(m, beta)
        homog[m] = estimate_event(
            box, _rc(p), side_reaching(box), p["n_samples"], p["n_burnin"], p["seed"] + m, p["thin"], p["n_chains"]
        )
    checks = []
    for draw in range(p["n_draws"]):
        rng = stream(p["seed"], 1 << 16 | draw)
        for m in p["m"]:
            box = _decay_box(m, beta)
            lams, deltas = disorder_draw(m, p["theta"], rng)
            chk = bounds.check_disorder_condition(lams, deltas, p["theta"], 1.0)
            checks.append(chk.holds)
            params = RcParams(p["theta"], 1.0, p["q"], tuple(deltas), tuple(lams))
            seed = p["seed"] + 100_000 * (draw + 1) + m
            r = estimate_event(box, params, side_reaching(box), p["n_samples"], p["n_burnin"], seed, p["thin"], p["n_chains"])
            h = homog[m]
            dominated = r.estimate <= h.estimate + 3 * math.hypot(r.std_error, h.std_error)
            rows.append(
                {
                    "draw": draw,
                    "m": m,
                    "estimate": r.estimate,
                    "std_error": r.std_error,
                    "homogeneous": h.estimate,
                    "homogeneous_se": h.std_error,
                    "worst_ratio": chk.worst_ratio,
                    "dominated": int(dominated),
                }
            )
    return rows, {"all_conditions_hold": all(checks), "all_dominated": all(r["dominated"] for r in rows)}


EXPERIMENTS: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment(
            "ed-entropy",
            {**COUPLING, "m": (int, 4), "L": ("ints", (1, 2, 3, 4, 5, 6, 7, 8))},
            run_ed_entropy,
            ("m", "L", "theta", "entropy_bits"),
            default_theta=0.3,
        ),
        Experiment(
            "ed-normdiff",
            {**COUPLING, "m": ("ints", (1, 2, 3, 4, 5)), "L": (int, 1), "N": (int, 6)},
            run_ed_normdiff,
            ("m", "L", "N", "theta", "norm_diff"),
            default_theta=1.0,
        ),
        Experiment(
            "rc-decay",
            {**COUPLING, **SAMPLING, "q": (float, 2.0), "m": ("ints", (4, 8, 12, 16)), "beta": (float, 0.0)},
            run_rc_decay,
            ("m", "theta", "q", "beta", "estimate", "std_error", "n_samples", "seed"),
            default_theta=1.0,
        ),
        Experiment(
            "rc-critical-scan",
            {
                **SAMPLING,
                "thetas": ("floats", (0.5, 1.0, 1.5)),
                "q": (float, 1.0),
                "m": ("ints", (4, 8, 12, 16, 20, 24)),
                "beta": (float, 24.0),
            },
            run_rc_critical_scan,
            ("m", "theta", "q", "beta", "estimate", "std_error", "n_samples", "seed"),
        ),
        Experiment(
            "fk-crosscheck",
            {**COUPLING, **SAMPLING, "m": (int, 2), "L": (int, 0), "beta": (float, 12.0)},
            run_fk_crosscheck,
            ("x", "y", "phi", "std_error", "ed", "abs_diff"),
            default_theta=0.5,
        ),
        Experiment(
            "fk-am",
            {**COUPLING, **SAMPLING, "m": (int, 2), "L": (int, 0), "beta": (float, 12.0)},
            run_fk_am,
            ("eps_plus", "eps_minus", "joint", "joint_se", "matrix", "matrix_se", "ed_rho"),
            default_theta=0.5,
        ),
        Experiment(
            "mixing-diag",
            {
                **COUPLING,
                **SAMPLING,
                "m": (int, 4),
                "L": (int, 3),
                "beta": (float, 12.0),
                "geometry": (str, "equator"),
                "K": (int, 1),
                "k": (int, 0),
            },
            run_mixing_diag,
            json_only=True,
            default_theta=0.5,
        ),
        Experiment(
            "bounds-report",
            {**COUPLING, "gamma": (float, 4 * math.log(2)), "C": (float, 1.0), "K": (int, 0), "C1": (float, 1.0)},
            run_bounds_report,
            json_only=True,
            default_theta=1.0,
        ),
        Experiment(
            "disorder-sweep",
            {
                **COUPLING,
                **SAMPLING,
                "q": (float, 2.0),
                "m": ("ints", (2, 3, 4)),
                "beta": (float, 0.0),
                "n_draws": (int, 5),
            },
            run_disorder_sweep,
            ("draw", "m", "estimate", "std_error", "homogeneous", "homogeneous_se", "worst_ratio", "dominated"),
            default_theta=0.5,
        ),
    ]
}


# -- output ---------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


def header_lines(spec: ExperimentSpec) -> list[str]:
    return [
        f"# rcising {__version__}",
        f"# experiment: {spec.experiment}",
        f"# seed: {spec.parameters['seed']}",
        f"# spec: {spec.canonical()}",
        f"# spec_hash: {spec.content_hash()}",
    ]


def render_csv(spec: ExperimentSpec, columns, rows) -> str:
    buf = io.StringIO()
    buf.write("\n".join(header_lines(spec)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def render_json(spec: ExperimentSpec, summary: dict) -> str:
    doc = {
        "artifact_version": __version__,
        "experiment": spec.experiment,
        "seed": spec.parameters["seed"],
        "spec": json.loads(spec.canonical())["parameters"],
        "spec_hash": spec.content_hash(),
        "result": _jsonable(summary),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def execute(spec: ExperimentSpec) -> dict[str, str]:
    """Run and render; returns ``{suffix: text}`` with ``''`` the main file."""
    exp = EXPERIMENTS[spec.experiment]
    rows, summary = exp.run(spec.parameters)
    if exp.json_only:
        return {"": render_json(spec, summary)}
    return {"": render_csv(spec, exp.columns, rows), ".summary.json": render_json(spec, summary)}


def write_outputs(out: str, texts: dict[str, str], elapsed: float, spec: ExperimentSpec) -> None:
    base = Path(out)
    if base.parent != Path(""):
        base.parent.mkdir(parents=True, exist_ok=True)
    for suffix, text in texts.items():
        Path(str(base) + suffix).write_text(text)
    timing = {"spec_hash": spec.content_hash(), "wall_clock_seconds": round(elapsed, 3)}
    Path(str(base) + ".timing.json").write_text(json.dumps(timing, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rcising", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"rcising {__version__}")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in [*EXPERIMENTS, "bounds"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value file")
        sp.add_argument("--seed", type=int, help="master seed (default 0)")
        sp.add_argument("--out", help="output path; stdout if omitted")
        sp.add_argument("-v", "--verbose", action="store_true", help="log resolved defaults")
        sp.add_argument("overrides", nargs="*", metavar="key=value")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    name = "bounds-report" if args.experiment == "bounds" else args.experiment
    try:
        overrides = {}
        for item in args.overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"expected key=value, got {item!r}")
            if key in overrides:
                raise ConfigError(f"duplicate key {key!r}")
            overrides[key.strip()] = value.strip()
        for flag in ("seed", "out"):
            if getattr(args, flag) is not None:
                overrides[flag] = str(getattr(args, flag))
        spec = parse_config(args.config, name, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("seed = %s", spec.parameters["seed"])
    start = time.perf_counter()
    try:
        texts = execute(spec)
    except (FeasibilityError, DimensionCapError, InadmissibleBoundary) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY
    elapsed = time.perf_counter() - start
    out = spec.parameters["out"]
    if args.experiment == "bounds" or not out:
        sys.stdout.write(texts[""] if args.experiment == "bounds" else "".join(texts.values()))
        return 0
    try:
        write_outputs(out, texts, elapsed, spec)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
