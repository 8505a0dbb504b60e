"""Scenario runner: JSON config intake, solver/evaluator/simulator dispatch,
figure-style sweeps, and machine-readable CSV/JSON output.

Exit codes: 0 success, 1 validation error, 2 verification failure,
3 solver non-certification.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import coverage, mcsim, optimizer
from .coverage import ChannelParams, Mobility, Policy, Scenario, db_to_linear
from .errors import SolverError, ValidationError
from .popularity import PlacementVector, ZipfLibrary, validate_placement

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFY_FAIL = 2
EXIT_NOT_CERTIFIED = 3

_FMT = "%.12g"  # 12 significant digits everywhere numbers are emitted


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration (see parse_config for the JSON schema)."""

    policy: Policy
    mobility: Mobility
    n_values: tuple[int, ...]
    lib: ZipfLibrary
    params: ChannelParams
    placement: PlacementVector | None  # None means "optimal"
    sim: mcsim.SimConfig | None
    sweep_axis: str | None
    sweep_values: tuple | None
    out_path: str | None
    out_format: str

    @property
    def n(self) -> int:
        return self.n_values[0]

    def scenario(self, n: int | None = None) -> Scenario:
        return Scenario(self.policy, self.mobility, self.n if n is None else n)


def _fail(msg: str) -> ValidationError:
    return ValidationError(msg)


def _get(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise _fail(f"{where}: missing required field '{key}'")
    val = doc[key]
    if kind is int and isinstance(val, bool):
        raise _fail(f"{where}.{key}: expected {kind.__name__}, got bool")
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind):
        raise _fail(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _parse_channel(doc: dict) -> ChannelParams:
    ch = _get(doc, "channel", dict, "config")
    has_db = "T_dB" in ch
    has_lin = "T_linear" in ch
    if has_db == has_lin:
        raise _fail("config.channel: exactly one of 'T_dB' or 'T_linear' must be set")
    T = db_to_linear(_get(ch, "T_dB", float, "channel")) if has_db else _get(ch, "T_linear", float, "channel")
    alpha = _get(ch, "alpha", float, "channel") if "alpha" in ch else 4.0
    lam = _get(ch, "lambda", float, "channel") if "lambda" in ch else 1.0
    return ChannelParams(T=T, alpha=alpha, lam=lam)


def _parse_library(doc: dict) -> ZipfLibrary:
    libdoc = _get(doc, "library", dict, "config")
    L = _get(libdoc, "L", int, "library")
    if "request_probs" in libdoc:
        return ZipfLibrary.from_probs(_get(libdoc, "request_probs", list, "library"), L)
    K = _get(libdoc, "K", int, "library")
    gamma = _get(libdoc, "gamma", float, "library")
    return ZipfLibrary.zipf(K, gamma, L)


def _parse_scenario(doc: dict) -> tuple[Policy, Mobility, tuple[int, ...]]:
    sc = _get(doc, "scenario", dict, "config")
    pol_raw = _get(sc, "policy", str, "scenario").upper()
    if pol_raw not in ("P1", "P2"):
        raise _fail(f"scenario.policy: expected 'P1' or 'P2', got {pol_raw!r}")
    mob_raw = _get(sc, "mobility", str, "scenario").lower()
    if mob_raw not in ("static", "mobile"):
        raise _fail(f"scenario.mobility: expected 'static' or 'mobile', got {mob_raw!r}")
    if ("n" in sc) == ("n_range" in sc):
        raise _fail("scenario: exactly one of 'n' or 'n_range' must be set")
    if "n" in sc:
        n_values = (_get(sc, "n", int, "scenario"),)
    else:
        rng = _get(sc, "n_range", list, "scenario")
        if len(rng) != 2 or not all(isinstance(x, int) for x in rng) or rng[0] > rng[1]:
            raise _fail("scenario.n_range: expected [start, stop] with start <= stop")
        n_values = tuple(range(rng[0], rng[1] + 1))
    if any(n < 1 for n in n_values):
        raise _fail("scenario: n must be >= 1")
    return Policy[pol_raw], Mobility(mob_raw), n_values


def _parse_sim(doc: dict) -> mcsim.SimConfig | None:
    if "sim" not in doc:
        return None
    sd = _get(doc, "sim", dict, "config")
    kwargs = dict(
        trials=_get(sd, "trials", int, "sim"),
        seed=_get(sd, "seed", int, "sim"),
    )
    if "window_radius" in sd:
        kwargs["window_radius"] = _get(sd, "window_radius", float, "sim")
    if "placement_model" in sd:
        raw = _get(sd, "placement_model", str, "sim").lower()
        try:
            kwargs["placement_model"] = mcsim.PlacementModel(raw)
        except ValueError:
            raise _fail(f"sim.placement_model: expected 'categorical' or 'independent', got {raw!r}")
    return mcsim.SimConfig(**kwargs)


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document.

    Schema (all physical quantities carry explicit unit fields):
      scenario:  {policy: P1|P2, mobility: static|mobile, n: int | n_range: [lo, hi]}
      library:   {K: int, gamma: float, L: int} or {request_probs: [...], L: int}
      channel:   {T_dB: float | T_linear: float, alpha: float = 4, lambda: float = 1}
      placement: "optimal" | [b_1, ..., b_K]
      sim:       {trials: int, seed: int, window_radius?: float, placement_model?: str}
      sweep:     {axis: n|b1|K, values: [...]}
      output:    {path: str, format: csv|json}
    """
    if not isinstance(doc, dict):
        raise _fail("config: top-level document must be a JSON object")
    policy, mobility, n_values = _parse_scenario(doc)
    lib = _parse_library(doc)
    params = _parse_channel(doc)

    placement = None
    if "placement" not in doc:
        raise _fail("config: missing required field 'placement' ('optimal' or an explicit vector)")
    raw_pl = doc["placement"]
    if raw_pl == "optimal":
        placement = None
    elif isinstance(raw_pl, list):
        placement = validate_placement(np.asarray(raw_pl, dtype=np.float64), lib.L)
    else:
        raise _fail("config.placement: expected 'optimal' or a list of caching probabilities")

    sweep_axis = None
    sweep_values = None
    if "sweep" in doc:
        sw = _get(doc, "sweep", dict, "config")
        sweep_axis = _get(sw, "axis", str, "sweep").lower()
        if sweep_axis not in ("n", "b1", "k"):
            raise _fail(f"sweep.axis: expected 'n', 'b1', or 'K', got {sweep_axis!r}")
        sweep_values = tuple(_get(sw, "values", list, "sweep"))
        if len(sweep_values) == 0:
            raise _fail("sweep.values: must be non-empty")

    out_path = None
    out_format = "csv"
    if "output" in doc:
        od = _get(doc, "output", dict, "config")
        if "path" in od:
            out_path = _get(od, "path", str, "output")
        if "format" in od:
            out_format = _get(od, "format", str, "output").lower()
            if out_format not in ("csv", "json"):
                raise _fail(f"output.format: expected 'csv' or 'json', got {out_format!r}")

    return RunConfig(
        policy=policy,
        mobility=mobility,
        n_values=n_values,
        lib=lib,
        params=params,
        placement=placement,
        sim=_parse_sim(doc),
        sweep_axis=sweep_axis,
        sweep_values=sweep_values,
        out_path=out_path,
        out_format=out_format,
    )


# ---------------------------------------------------------------------------
# Output formatting
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return _FMT % x
    return str(x)


def _emit(rows: list[dict], columns: list[str], out_path: str | None, out_format: str) -> str:
    if out_format == "csv":
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_fmt(row.get(c, "")) for c in columns))
        text = "\n".join(lines) + "\n"
    else:
        # mirror the CSV fields; numbers reformatted so both formats carry
        # identical 12-significant-digit values
        payload = []
        for row in rows:
            item = {}
            for c in columns:
                v = row.get(c, "")
                if isinstance(v, (float, np.floating)):
                    item[c] = float(_FMT % v)
                elif isinstance(v, (int, np.integer)):
                    item[c] = int(v)
                else:
                    item[c] = v
            payload.append(item)
        text = json.dumps({"rows": payload}, indent=2, sort_keys=False) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def _b_columns(K: int) -> list[str]:
    return [f"b_{i + 1}" for i in range(K)]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_optimize(cfg: RunConfig) -> int:
    if cfg.placement is not None:
        raise _fail("optimize requires placement = 'optimal'")
    sol = optimizer.optimal_placement(cfg.scenario(), cfg.lib, cfg.params)
    K = cfg.lib.K
    row = {
        "policy": cfg.policy.value,
        "mobility": cfg.mobility.value,
        "n": cfg.n,
        "hit_prob": sol.objective,
        "nu_star": sol.nu_star,
        "stationarity_residual": sol.stationarity_residual,
        "certified": str(sol.certified).lower(),
    }
    for i, name in enumerate(_b_columns(K)):
        row[name] = float(sol.b_star.probs[i])
    columns = ["policy", "mobility", "n", "hit_prob"] + _b_columns(K) + [
        "nu_star",
        "stationarity_residual",
        "certified",
    ]
    _emit([row], columns, cfg.out_path, cfg.out_format)
    return EXIT_OK if sol.certified else EXIT_NOT_CERTIFIED


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.placement is None:
        raise _fail("evaluate requires an explicit placement vector")
    res = coverage.hit_prob(cfg.scenario(), cfg.placement, cfg.lib, cfg.params, sim_fallback=cfg.sim)
    row = {
        "policy": cfg.policy.value,
        "mobility": cfg.mobility.value,
        "n": cfg.n,
        "hit_prob": res.value,
        "method": res.method,
        "flags": ";".join(res.flags),
    }
    for i, name in enumerate(_b_columns(cfg.lib.K)):
        row[name] = float(cfg.placement.probs[i])
    columns = ["policy", "mobility", "n", "hit_prob", "method"] + _b_columns(cfg.lib.K) + ["flags"]
    _emit([row], columns, cfg.out_path, cfg.out_format)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.sim is None:
        raise _fail("simulate requires a 'sim' section (trials, seed)")
    if cfg.placement is None:
        raise _fail("simulate requires an explicit placement vector")
    res = mcsim.simulate_hit(cfg.scenario(), cfg.placement, cfg.lib, cfg.params, cfg.sim)
    row = {
        "policy": cfg.policy.value,
        "mobility": cfg.mobility.value,
        "n": cfg.n,
        "hit_estimate": res.hit_estimate,
        "ci_halfwidth_99": res.ci_halfwidth_99,
        "trials": res.trials_used,
        "seed": cfg.sim.seed,
        "flags": ";".join(res.flags),
    }
    per_file_cols = [f"per_file_{i + 1}" for i in range(cfg.lib.K)]
    for name, v in zip(per_file_cols, res.per_file_success):
        row[name] = float(v)
    columns = [
        "policy",
        "mobility",
        "n",
        "hit_estimate",
        "ci_halfwidth_99",
        "trials",
        "seed",
    ] + per_file_cols + ["flags"]
    _emit([row], columns, cfg.out_path, cfg.out_format)
    return EXIT_OK


def _sweep_rows_n(cfg: RunConfig, values) -> tuple[list[dict], int]:
    rows = []
    K = cfg.lib.K
    for v in values:
        n = int(v)
        if cfg.placement is None:
            sol = optimizer.optimal_placement(cfg.scenario(n), cfg.lib, cfg.params)
            hit, b = sol.objective, sol.b_star.probs
        else:
            hit = coverage.hit_prob(cfg.scenario(n), cfg.placement, cfg.lib, cfg.params, sim_fallback=cfg.sim).value
            b = cfg.placement.probs
        row = {"axis": "n", "value": n, "policy": cfg.policy.value, "mobility": cfg.mobility.value, "n": n, "hit_prob": hit}
        for i, name in enumerate(_b_columns(K)):
            row[name] = float(b[i])
        rows.append(row)
    return rows, K


def _sweep_rows_b1(cfg: RunConfig, values) -> tuple[list[dict], int]:
    if cfg.lib.K != 2:
        raise _fail("b1 sweep requires a two-file library")
    rows = []
    for v in values:
        b1 = float(v)
        pl = validate_placement(np.array([b1, 1.0 - b1]), cfg.lib.L)
        hit = coverage.hit_prob(cfg.scenario(), pl, cfg.lib, cfg.params, sim_fallback=cfg.sim).value
        rows.append(
            {
                "axis": "b1",
                "value": b1,
                "policy": cfg.policy.value,
                "mobility": cfg.mobility.value,
                "n": cfg.n,
                "hit_prob": hit,
                "b_1": b1,
                "b_2": 1.0 - b1,
            }
        )
    return rows, 2


def _sweep_rows_k(cfg: RunConfig, values) -> tuple[list[dict], int]:
    if cfg.lib.gamma is None:
        raise _fail("K sweep requires a Zipf library (K, gamma, L)")
    k_max = max(int(v) for v in values)
    rows = []
    for v in values:
        K = int(v)
        lib = ZipfLibrary.zipf(K, cfg.lib.gamma, cfg.lib.L)
        sol = optimizer.optimal_placement(cfg.scenario(), lib, cfg.params)
        row = {
            "axis": "K",
            "value": K,
            "policy": cfg.policy.value,
            "mobility": cfg.mobility.value,
            "n": cfg.n,
            "hit_prob": sol.objective,
        }
        for i in range(K):
            row[f"b_{i + 1}"] = float(sol.b_star.probs[i])
        rows.append(row)
    return rows, k_max


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.sweep_axis is None:
        raise _fail("sweep requires a 'sweep' section (axis, values)")
    if cfg.sweep_axis == "n":
        rows, K = _sweep_rows_n(cfg, cfg.sweep_values)
    elif cfg.sweep_axis == "b1":
        rows, K = _sweep_rows_b1(cfg, cfg.sweep_values)
    else:
        rows, K = _sweep_rows_k(cfg, cfg.sweep_values)
    columns = ["axis", "value", "policy", "mobility", "n", "hit_prob"] + _b_columns(K)
    _emit(rows, columns, cfg.out_path, cfg.out_format)
    return EXIT_OK


def _trapezoid_rho1(T: float, alpha: float, panels: int = 2_000_000) -> float:
    # independent check of the adaptive quadrature: the substitution
    # y = u**(-(alpha-2)/2) maps the tail integral onto a finite interval with
    # a smooth bounded integrand, then plain trapezoid at high resolution
    y0 = T ** ((alpha - 2.0) / alpha)
    y = np.linspace(0.0, y0, panels + 1)
    f = (2.0 / (alpha - 2.0)) / (1.0 + y ** (alpha / (alpha - 2.0)))
    return T ** (2.0 / alpha) * float(np.trapezoid(f, dx=y0 / panels))


def _trapezoid_rho2(T: float, alpha: float, panels: int = 2_000_000) -> float:
    hi = T ** (-2.0 / alpha)
    u = np.linspace(0.0, hi, panels + 1)
    f = 1.0 / (1.0 + u ** (alpha / 2.0))
    return T ** (2.0 / alpha) * float(np.trapezoid(f, dx=hi / panels))


def cmd_verify(cfg: RunConfig) -> int:
    """Cross-check table: analytic quantities vs independent oracles, the
    simulator vs analytic hit probability, and the solver vs the grid oracle."""
    T, alpha = cfg.params.T, cfg.params.alpha
    checks: list[tuple[str, float, float, float]] = []  # name, analytic, oracle, tol

    r1, r2 = coverage.rho1(T, alpha), coverage.rho2(T, alpha)
    checks.append(("rho1 vs trapezoid oracle", r1, _trapezoid_rho1(T, alpha), 1e-9))
    checks.append(("rho2 vs trapezoid oracle", r2, _trapezoid_rho2(T, alpha), 1e-9))
    halfline = T ** (2.0 / alpha) * (2.0 * math.pi / alpha) / math.sin(2.0 * math.pi / alpha)
    checks.append(("rho1+rho2 vs closed form", r1 + r2, halfline, 1e-10))
    if abs(T - 1.0) < 1e-12 and abs(alpha - 4.0) < 1e-12:
        checks.append(("rho1 vs pi/4", r1, math.pi / 4.0, 1e-9))
    checks.append(
        ("joint coverage P1 k=1 reduction", coverage.joint_coverage_p1(1, cfg.params), 1.0 / (1.0 + r1), 1e-6)
    )
    checks.append(
        (
            "joint coverage P2 k=1 reduction (b=0.5)",
            coverage.joint_coverage_p2(1, 0.5, cfg.params),
            coverage.success_prob_p2(0.5, T, alpha),
            1e-6,
        )
    )

    rows = []
    failures = 0
    for name, analytic, oracle, tol in checks:
        delta = abs(analytic - oracle)
        ok = delta <= tol
        failures += 0 if ok else 1
        rows.append(
            {
                "quantity": name,
                "analytic": analytic,
                "oracle": oracle,
                "abs_delta": delta,
                "tolerance": tol,
                "status": "pass" if ok else "FAIL",
            }
        )

    # window-truncation pilot: coverage at the configured window vs twice it
    if cfg.sim is not None:
        near, far = mcsim.truncation_pilot(cfg.params, cfg.sim)
        tol = near.ci_halfwidth_99 + far.ci_halfwidth_99
        ok = abs(near.hit_estimate - far.hit_estimate) <= tol
        failures += 0 if ok else 1
        rows.append(
            {
                "quantity": "window truncation pilot (1x vs 2x radius)",
                "analytic": near.hit_estimate,
                "oracle": far.hit_estimate,
                "abs_delta": abs(near.hit_estimate - far.hit_estimate),
                "tolerance": tol,
                "status": "pass" if ok else "FAIL",
            }
        )

    # simulator vs analytic at the configured scenario
    if cfg.sim is not None:
        placement = cfg.placement
        if placement is None:
            placement = optimizer.optimal_placement(cfg.scenario(), cfg.lib, cfg.params).b_star
        ana = coverage.hit_prob(cfg.scenario(), placement, cfg.lib, cfg.params, sim_fallback=cfg.sim)
        sim = mcsim.simulate_hit(cfg.scenario(), placement, cfg.lib, cfg.params, cfg.sim)
        ok = sim.contains(ana.value)
        failures += 0 if ok else 1
        rows.append(
            {
                "quantity": f"hit analytic vs {sim.trials_used}-trial simulation",
                "analytic": ana.value,
                "oracle": sim.hit_estimate,
                "abs_delta": abs(ana.value - sim.hit_estimate),
                "tolerance": sim.ci_halfwidth_99,
                "status": "pass" if ok else "FAIL",
            }
        )

    # solver vs exhaustive grid
    if cfg.lib.K <= 4:
        sol = optimizer.optimal_placement(cfg.scenario(), cfg.lib, cfg.params)
        gb = optimizer.grid_search_oracle(cfg.scenario(), cfg.lib, cfg.params, step=1e-2)
        gval = float(coverage.placement_hit_values(cfg.scenario(), gb.probs, cfg.lib, cfg.params)[0])
        ok = sol.objective >= gval - 1e-5
        failures += 0 if ok else 1
        rows.append(
            {
                "quantity": "solver objective vs grid oracle",
                "analytic": sol.objective,
                "oracle": gval,
                "abs_delta": abs(sol.objective - gval),
                "tolerance": 1e-5,
                "status": "pass" if ok else "FAIL",
            }
        )

    columns = ["quantity", "analytic", "oracle", "abs_delta", "tolerance", "status"]
    _emit(rows, columns, cfg.out_path, cfg.out_format)
    return EXIT_OK if failures == 0 else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cachenet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("optimize", "solve for the optimal placement and report it with its KKT certificate"),
        ("evaluate", "analytic hit probability at an explicit placement"),
        ("simulate", "Monte Carlo hit probability with 99% confidence interval"),
        ("sweep", "one row per grid point along an n, b1, or K axis"),
        ("verify", "analytic-vs-oracle and solver-vs-grid cross checks"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the JSON run configuration")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")
        sp.add_argument("--format", default=None, choices=("csv", "json"), help="output format override")
        sp.add_argument("--seed", type=int, default=None, help="simulation seed override")
        sp.add_argument("--trials", type=int, default=None, help="simulation trial-count override")
        sp.add_argument("--threads", type=int, default=None, help="simulation thread count")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    sim = cfg.sim
    if args.seed is not None or args.trials is not None:
        base = sim if sim is not None else mcsim.SimConfig(trials=100_000, seed=0)
        sim = mcsim.SimConfig(
            trials=args.trials if args.trials is not None else base.trials,
            seed=args.seed if args.seed is not None else base.seed,
            window_radius=base.window_radius,
            attempts=base.attempts,
            placement_model=base.placement_model,
        )
    return RunConfig(
        policy=cfg.policy,
        mobility=cfg.mobility,
        n_values=cfg.n_values,
        lib=cfg.lib,
        params=cfg.params,
        placement=cfg.placement,
        sim=sim,
        sweep_axis=cfg.sweep_axis,
        sweep_values=cfg.sweep_values,
        out_path=args.out if args.out is not None else cfg.out_path,
        out_format=args.format if args.format is not None else cfg.out_format,
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.threads is not None:
            import numba

            numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
        with open(args.config) as fh:
            doc = json.load(fh)
        cfg = _apply_overrides(parse_config(doc), args)
        handler = {
            "optimize": cmd_optimize,
            "evaluate": cmd_evaluate,
            "simulate": cmd_simulate,
            "sweep": cmd_sweep,
            "verify": cmd_verify,
        }[args.command]
        return handler(cfg)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NOT_CERTIFIED


if __name__ == "__main__":
    sys.exit(main())
