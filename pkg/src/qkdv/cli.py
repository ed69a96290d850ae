"""Batch front end: ``qkdv solve|verify|chain --config <path> [--out <dir>] [--seed <u64>]``.

Configurations are JSON documents validated against :data:`CONFIG_SCHEMA`.
Every command writes plain JSON/CSV files whose bytes depend only on the
configuration and the seed.

Exit codes: 0 success, 2 invalid configuration, 3 horizon or contraction
failure, 4 failed assertion, 5 envelope budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import combinatorics as comb
from . import picard, spectral, trees, uniqueness
from .errors import (EnvelopeBudgetExceeded, HorizonExceeded, InvalidArgument, NoContraction,
                     QkdvError)
from .exp_poly import ep_eval
from .lattice import CoeffField, as_frequency, random_hermitian
from .reference import rk4_samples

EXIT_OK, EXIT_CONFIG, EXIT_HORIZON, EXIT_ASSERT, EXIT_ENVELOPE = 0, 2, 3, 4, 5
MODULE = "cli"

SUITES = ("tree-oracle", "combinatorics", "uniqueness", "spectrum")

_NUMBER = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["problem"],
    "additionalProperties": False,
    "properties": {
        "problem": {
            "type": "object",
            "required": ["omega", "kappa", "B0", "initial"],
            "additionalProperties": False,
            "properties": {
                "nu": {"type": "integer", "minimum": 1},
                "omega": {"type": "array", "minItems": 1, "items": _NUMBER},
                "kappa": _POS,
                "B0": _POS,
                "initial": {
                    "oneOf": [
                        {"type": "object", "required": ["coefficients"],
                         "additionalProperties": False,
                         "properties": {"coefficients": {
                             "type": "array",
                             "items": {"type": "object", "required": ["n", "re"],
                                       "additionalProperties": False,
                                       "properties": {
                                           "n": {"type": "array",
                                                 "items": {"type": "integer"}},
                                           "re": _NUMBER, "im": _NUMBER}}}}},
                        {"type": "object", "required": ["generator"],
                         "additionalProperties": False,
                         "properties": {
                             "generator": {"enum": ["random_hermitian", "constant", "zero"]},
                             "value": _NUMBER}},
                    ]
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "R": {"type": "integer", "minimum": 0},
                "t_request": {"oneOf": [{"type": "number", "minimum": 0},
                                        {"const": "horizon"}]},
                "K_max": {"type": "integer", "minimum": 1},
                "target_tol": _POS,
                "prune_floor": {"type": "number", "minimum": 0},
                "C0": _POS,
            },
        },
        "task": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "suite": {"enum": list(SUITES)},
                "k_max": {"type": "integer", "minimum": 1, "maximum": 3},
                "t": {"type": "number", "minimum": 0},
                "rel_tol": _POS,
                "rk4_dt": _POS,
                "radius_step": {"type": "integer", "minimum": 1},
                "E_max": _NUMBER,
                "n_edges": {"type": "integer", "minimum": 1},
                "drift_budget": _POS,
                "segments": {"type": "integer", "minimum": 1},
                "budget_factor": {"type": "number", "minimum": 1},
                "isospectral": {"type": "boolean"},
                "n_t": {"type": "integer", "minimum": 2},
                "n_x": {"type": "integer", "minimum": 1},
            },
        },
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"dir": {"type": "string"}}},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    },
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidArgument(f"cannot read config {path}: {exc}", module=MODULE,
                              invariant="config-schema") from None
    validate_config(doc)
    return doc


def validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidArgument(f"config error at {where}: {exc.message}", module=MODULE,
                              invariant="config-schema") from None
    prob = doc["problem"]
    if "nu" in prob and prob["nu"] != len(prob["omega"]):
        raise InvalidArgument("problem.nu does not match len(omega)", module=MODULE,
                              invariant="config-schema")


def threads() -> int:
    """Worker cap from ``QKDV_THREADS``; execution is sequential regardless."""
    raw = os.environ.get("QKDV_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgument(f"QKDV_THREADS must be an integer, got {raw!r}",
                              module=MODULE, invariant="config-schema") from None
    return max(1, n)


def build_initial(doc: dict, seed: int, radius: int) -> tuple:
    """``(CoeffField with envelope, FrequencyVector)`` from the problem block."""
    prob = doc["problem"]
    om = as_frequency(prob["omega"])
    B0, kappa = float(prob["B0"]), float(prob["kappa"])
    init = prob["initial"]
    zero = tuple([0] * om.nu)
    if "coefficients" in init:
        ent = {}
        for e in init["coefficients"]:
            n = tuple(e["n"])
            if len(n) != om.nu:
                raise InvalidArgument(f"index {list(n)} has the wrong length", module=MODULE,
                                      invariant="config-schema")
            ent[n] = complex(e["re"], e.get("im", 0.0))
        c = CoeffField(om.nu, radius, ent, (B0, kappa))
    elif init["generator"] == "random_hermitian":
        c = random_hermitian(om.nu, radius, B0, kappa, seed)
    elif init["generator"] == "constant":
        c = CoeffField(om.nu, radius, {zero: float(init.get("value", 0.0))}, (B0, kappa))
    else:
        c = CoeffField(om.nu, radius, {}, (B0, kappa))
    if not c.is_hermitian(1e-14):
        raise InvalidArgument("initial coefficients must satisfy c(-n) = conj(c(n))",
                              module=MODULE, invariant="hermitian-data")
    return c, om


def solver_config(doc: dict, c: CoeffField, om) -> picard.SolverConfig:
    s = doc.get("solver", {})
    C0 = s.get("C0")
    C0_val = comb.certified_C0() if C0 is None else float(C0)
    t_req = s.get("t_request", "horizon")
    if t_req == "horizon":
        t_req = picard.horizon(*c.envelope, om, C0_val)
    kw = {"box_radius": int(s.get("R", 8)), "t_request": float(t_req),
          "max_iterations": int(s.get("K_max", 12)), "C0": C0}
    for key in ("target_tol", "prune_floor"):
        if key in s:
            kw[key] = float(s[key])
    return picard.SolverConfig(**kw)


def _setup(doc, seed):
    radius = int(doc.get("solver", {}).get("R", 8))
    c, om = build_initial(doc, seed, radius)
    return c, om, solver_config(doc, c, om)


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------

def _clean(obj):
    """Make a report JSON-safe and order-stable."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_clean(doc), indent=1) + "\n")


def _failure(exc: QkdvError) -> dict:
    return {"status": "error", **exc.describe()}


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _residual_pairs(traj, n=5):
    period = 2 * math.pi / abs(traj.omega.omega[0])
    ts = np.linspace(0.0, traj.t_max, n)
    xs = np.linspace(0.0, period, n, endpoint=False)
    T, X = np.meshgrid(ts, xs, indexing="ij")
    return T.ravel(), X.ravel()


def solve_report(traj) -> dict:
    T, X = _residual_pairs(traj)
    fit = traj.fitted_C1()
    zero = tuple([0] * traj.nu)
    z = traj.coeffs.get(zero)
    zero_const = z is None or bool(np.all(z.powers == 0) and np.all(z.phases == 0))
    return {
        "K": traj.K, "t_max": traj.t_max, "horizon": traj.horizon, "C0": traj.C0,
        "converged": traj.converged, "box_radius": traj.box_radius,
        "weighted_diffs": traj.weighted_diffs(),
        "empirical_ratios": [[k, r] for k, r in traj.empirical_ratios()],
        "C1_fit": {"raw": fit.raw, "value": fit.value},
        "theoretical_ratio": traj.theoretical_ratio(),
        "residual": picard.residual_report(traj, T, X),
        "envelope_violations": len(picard.envelope_violations(traj)),
        "mass_drift": picard.mass_drift(traj),
        "mode_zero_constant": bool(zero_const),
    }


def cmd_solve(doc: dict, out: Path, seed: int) -> int:
    c, om, cfg = _setup(doc, seed)
    traj = picard.solve(c, om, cfg)
    task = doc.get("task", {})
    n_t, n_x = int(task.get("n_t", 5)), int(task.get("n_x", 32))
    period = 2 * math.pi / abs(om.omega[0])
    (out / "trajectory.json").write_text(picard.trajectory_to_json(traj, _clean(doc)) + "\n")
    (out / "samples.csv").write_text(picard.samples_to_csv(
        traj, np.linspace(0.0, traj.t_max, n_t), np.linspace(0.0, period, n_x, endpoint=False)))
    write_json(out / "report.json", {"command": "solve", "status": "ok", "seed": seed,
                                     **solve_report(traj)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------

def _check(checks: list, name: str, ok: bool, module: str, **measured):
    checks.append({"invariant": name, "module": module, "passed": bool(ok), **measured})


def suite_tree_oracle(doc, seed) -> list:
    c, om, cfg = _setup(doc, seed)
    task = doc.get("task", {})
    k_max = int(task.get("k_max", 3))
    t = min(float(task.get("t", 0.05)), cfg.t_request)
    rel_tol = float(task.get("rel_tol", 1e-10))
    R = cfg.box_radius
    checks = []
    it = picard.picard_iterates(c, om, picard._replace(cfg, max_iterations=k_max))
    for k, modes in it:
        if k < 1:
            continue
        tree_vals = trees.tree_sum_all(k, t, c, om, R)
        worst = 0.0
        for n, tv in tree_vals.items():
            f = modes.get(n)
            pv = complex(ep_eval(f, t)) if f is not None else 0j
            diff = abs(tv - pv)
            rel = diff / abs(pv) if pv != 0 else diff
            worst = max(worst, rel)
        _check(checks, f"tree-sum-equals-picard-k{k}", worst <= rel_tol, trees.MODULE,
               k=k, t=t, max_rel_diff=worst, tol=rel_tol)
    return checks


def suite_combinatorics(doc, seed) -> list:
    checks = []
    for N in range(1, 7):
        for l in range(1, 7):
            props = comb.phi_properties(N, l)
            for name, ok in props.items():
                if not ok:
                    _check(checks, f"phi-{name}", False, comb.MODULE, N=N, l=l)
    if not checks:
        _check(checks, "phi-properties", True, comb.MODULE, N_max=6, l_max=6)
    for N in range(1, 7):
        fs, fe = comb.factorial_sum(N, N), comb.factorial_sum_enumerated(N, N)
        _check(checks, "factorial-sum-bound", fs == fe and fs < (2 * N) ** N, comb.MODULE,
               N=N, value=fs, enumerated=fe, bound=(2 * N) ** N)
        for l in range(1, N + 1):
            lhs, rhs = comb.factorial_sum(N, l), (l + N) * comb.factorial_sum(N, l - 1)
            if lhs > rhs:
                _check(checks, "factorial-sum-recursion", False, comb.MODULE,
                       N=N, l=l, lhs=lhs, rhs=rhs)
    for k in range(1, 7):
        B = comb.build_B(k)
        ok = all(len(b) == k + 1 and sum(b) == k for b in B)
        _check(checks, "build-B-weight", ok, comb.MODULE, k=k, size=len(B))
    return checks


def suite_uniqueness(doc, seed) -> list:
    c, om, cfg = _setup(doc, seed)
    task = doc.get("task", {})
    B0, kappa = c.envelope
    times = picard.sample_times(cfg.t_request, 16)
    checks = []
    a = picard.solve(c, om, cfg)
    b = picard.solve(c, om, cfg)
    wide_R = cfg.box_radius + int(task.get("radius_step", 2))
    c_wide = CoeffField(c.nu, wide_R, c.entries, c.envelope)
    wide = picard.solve(c_wide, om, picard._replace(cfg, box_radius=wide_R))
    dt = float(task.get("rk4_dt", 1e-4))
    fit_times = picard.sample_times(cfg.t_request, 41)
    index, vals = rk4_samples(c, om, fit_times, dt)
    rk = uniqueness.trajectory_from_samples(fit_times, index, vals, om, cfg.box_radius)
    for name, other in (("identical-runs", b), ("radius-extension", wide), ("picard-vs-rk4", rk)):
        pair = uniqueness.TrajectoryPair.from_envelope(a, other, B0, kappa)
        rep = uniqueness.assert_unique(pair, times, a.C0)
        _check(checks, f"unique-{name}", rep["passed"], uniqueness.MODULE, **rep)
    return checks


def suite_spectrum(doc, seed) -> list:
    c, om, cfg = _setup(doc, seed)
    task = doc.get("task", {})
    budget = float(task.get("drift_budget", 1e-4))
    E_max = float(task.get("E_max", 3.0))
    n_edges = int(task.get("n_edges", 6))
    traj = picard.solve(c, om, cfg)
    t_list = [0.0, traj.t_max / 2, traj.t_max]
    res = spectral.isospectrality_check(traj, t_list, E_max, n_edges=n_edges,
                                        scale=spectral.LAX_SCALE)
    return [{"invariant": "isospectral-drift", "module": spectral.MODULE,
             "passed": bool(res.max_edge_drift <= budget), "drift": res.max_edge_drift,
             "budget": budget, "times": t_list, "edges": res.edges}]


_SUITES = {"tree-oracle": suite_tree_oracle, "combinatorics": suite_combinatorics,
           "uniqueness": suite_uniqueness, "spectrum": suite_spectrum}


def cmd_verify(doc: dict, out: Path, seed: int) -> int:
    suite = doc.get("task", {}).get("suite")
    if suite is None:
        raise InvalidArgument("verify needs task.suite", module=MODULE, invariant="config-schema")
    checks = _SUITES[suite](doc, seed)
    passed = all(ch["passed"] for ch in checks)
    write_json(out / "verify.json", {"command": "verify", "suite": suite, "seed": seed,
                                     "passed": passed, "checks": checks})
    for ch in checks:
        if not ch["passed"]:
            print(f"FAILED {ch['module']}: {ch['invariant']}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_ASSERT


# ---------------------------------------------------------------------------
# chain
# ---------------------------------------------------------------------------

def cmd_chain(doc: dict, out: Path, seed: int) -> int:
    c, om, cfg = _setup(doc, seed)
    task = doc.get("task", {})
    segments = int(task.get("segments", 4))
    factor = float(task.get("budget_factor", 4.0))
    rows, status = [], "ok"
    try:
        segs = picard.chain(c, om, cfg, segments, budget_factor=factor)
    except EnvelopeBudgetExceeded as exc:
        write_json(out / "chain.json", {"command": "chain", "seed": seed, **_failure(exc)})
        raise
    kappa = c.envelope[1]
    for s in segs:
        end = picard.coefficients_at(s.trajectory, s.trajectory.t_max)
        rows.append({"index": s.index, "t_start": s.t_start, "t_end": s.t_end, "B": s.B,
                     "K": s.K, "B_end": picard.measured_envelope(end, kappa),
                     "envelope_violations": len(picard.envelope_violations(s.trajectory)),
                     "mass_drift": picard.mass_drift(s.trajectory)})
    doc_out = {"command": "chain", "seed": seed, "status": status, "segments": rows}
    passed = True
    if task.get("isospectral", False) and om.nu == 1:
        budget = float(task.get("drift_budget", 1e-4))
        E_max = float(task.get("E_max", 3.0))
        n_edges = int(task.get("n_edges", 6))
        base, worst, edges = None, 0.0, []
        for s in segs:
            pot = spectral.PeriodicPotential.from_coefficients(
                spectral._hermitian_clean(picard.coefficients_at(s.trajectory, 0.0)), om,
                scale=spectral.LAX_SCALE)
            rep = spectral.band_edges(pot, E_max, E_min=spectral._vmin(pot) - 1.0)
            if base is None:
                base = rep.band_edges
            row = spectral.match_edges(base, rep.band_edges, n_edges)
            edges.append(row)
            worst = max(worst, max(abs(a - b) for a, b in zip(row, base[:n_edges])))
        passed = worst <= budget
        doc_out["isospectral"] = {"drift": worst, "budget": budget, "edges": edges,
                                  "passed": passed}
    write_json(out / "chain.json", doc_out)
    with open(out / "chain.csv", "w") as fh:
        fh.write("index,t_start,t_end,B,K,B_end\n")
        for r in rows:
            fh.write(f"{r['index']},{r['t_start']!r},{r['t_end']!r},{r['B']!r},{r['K']},"
                     f"{r['B_end']!r}\n")
    if not passed:
        print(f"FAILED {spectral.MODULE}: isospectral-drift", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "chain": cmd_chain}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qkdv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qkdv {__version__}")
    p.add_argument("command", choices=sorted(_COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (default: config output.dir or ./qkdv-out)")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads()
        doc = load_config(args.config)
        seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
        if not 0 <= seed < 2 ** 64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer", module=MODULE,
                                  invariant="config-schema")
        out = Path(args.out or doc.get("output", {}).get("dir", "qkdv-out"))
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](doc, out, seed)
    except InvalidArgument as exc:
        _report(exc)
        return EXIT_CONFIG
    except (HorizonExceeded, NoContraction) as exc:
        _report(exc)
        return EXIT_HORIZON
    except EnvelopeBudgetExceeded as exc:
        _report(exc)
        return EXIT_ENVELOPE
    except QkdvError as exc:
        _report(exc)
        return EXIT_ASSERT


def _report(exc: QkdvError) -> None:
    print(f"error [{exc.module}] {exc.invariant}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
