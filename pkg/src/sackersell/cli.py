"""Command-line experiment runner.

``sackersell --config run.json --out results/`` validates the config,
dispatches to the requested command and writes ``report.json`` plus
``trace_*.csv`` files (and PNG figures when asked and matplotlib is
installed).

Exit status: 0 success, 1 verification failure or runtime error,
2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, ExperimentConfig, build, canonical_json, scan_config, validate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _clean(x):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


@dataclass
class RunReport:
    command: str
    config: ExperimentConfig
    result: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    status: int = EXIT_OK
    traces: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)
    plots: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    def document(self) -> dict:
        result = _clean(self.result)
        return {
            "tool": "sackersell",
            "version": __version__,
            "command": self.command,
            "config_hash": self.config.hash,
            "config": _clean(self.config.data),
            "result": result,
            "result_hash": hashlib.sha256(canonical_json(result).encode()).hexdigest(),
            "warnings": list(self.warnings),
            "exit_status": self.status,
            "timings": _clean(self.timings),
        }


class _Timer:
    def __init__(self, report: RunReport, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.name] = round(time.perf_counter() - self.t0, 6)


# ---------------------------------------------------------------------------
# commands


def _cmd_lyapunov(cfg, report, threads):
    from .lyapunov import exponent_ladder

    c, family, _ = build(cfg)
    p = cfg["lyapunov"]
    ladders, rows = [], []
    with _Timer(report, "ladders"):
        for mu in family:
            lad = exponent_ladder(c, mu, p["n_max"], p["resolution"], seed=cfg.seed, count=p["count"])
            ladders.append(lad)
            for i, (lam, m) in enumerate(lad.exponents):
                rows.append((lad.measure, i, lam, m))
    report.result = {"ladders": [lad.to_dict() for lad in ladders]}
    report.traces["lyapunov"] = (("measure", "index", "lambda", "multiplicity"), rows)
    top = max(ladders, key=lambda lad: lad.values[0] if lad.values else -math.inf)
    report.result["top"] = {"measure": top.measure, "lambda": top.values[0] if top.values else -math.inf}
    for lad in ladders:
        if lad.flags:
            report.warnings.append(f"{lad.measure}: {', '.join(lad.flags)}")
        report.summary.append((lad.measure, " ".join(f"{lam:+.6f}(x{m})" for lam, m in lad.exponents)))
    report.plots = [("ladder", top)]


def _scan(cfg, c, report, threads):
    from .spectrum import classify_structure, scan_spectrum, spectrum_trace_rows

    with _Timer(report, "scan"):
        r = scan_spectrum(c, scan_config(cfg, threads))
    report.traces["spectrum"] = (("shift", "pass", "dim_u"), spectrum_trace_rows(r))
    for f in r.flags:
        report.warnings.append(f"scan: {f}")
    alt = classify_structure(r)
    report.summary.append(("alternative", f"{alt.alternative} (k = {alt.k})"))
    for i, (lo, hi) in enumerate(r.intervals):
        report.summary.append((f"interval {i + 1}", f"[{lo:+.6f}, {hi:+.6f}]"))
    return r


def _cmd_spectrum(cfg, report, threads):
    from .spectrum import SpectrumError, resolvent_dimension_profile

    c, family, _ = build(cfg)
    r = _scan(cfg, c, report, threads)
    report.result = {"spectrum": r.to_dict()}
    try:
        with _Timer(report, "profile"):
            prof = resolvent_dimension_profile(c, r, cfg=scan_config(cfg, threads))
        report.result["profile"] = [{"gap": [lo, hi], "dim_u": u} for (lo, hi), u in prof]
    except SpectrumError as e:
        report.result["profile"] = None
        report.warnings.append(f"{e.code}: {e}")
    report.plots = [("spectrum", r)]


def _cmd_verify(cfg, report, threads):
    from .base_dynamics import default_samples
    from .jps import VerifyConfig, cao_maximize, log_norm_sequence, verification_ok, verify_endpoints

    c, family, _ = build(cfg)
    r = _scan(cfg, c, report, threads)
    v = cfg["verify"]
    vc = VerifyConfig(n_max=v["n_max"], ladder_n=v["ladder_n"], match_tol=v["match_tol"], margin=v["margin"],
                      p_max=cfg["measures"]["p_max"], dichotomy_n=cfg["scan"]["n_max"], seed=cfg.seed)
    with _Timer(report, "verify"):
        recs = verify_endpoints(c, r, family, vc)
    with _Timer(report, "cao"):
        samples = default_samples(c.system, cfg["measures"]["p_max"])
        cao = cao_maximize(log_norm_sequence(c), family, samples, v["n_max"], c.system, cfg.seed)
    ok = verification_ok(recs)
    report.result = {
        "spectrum": r.to_dict(),
        "family": list(family.labels),
        "endpoints": [rec.to_dict() for rec in recs],
        "verified": ok,
        "cao_top": cao.to_dict(),
    }
    report.traces["cao"] = (("n", "max_over_samples", "argmax_mean"), cao.curve_rows())
    for rec in recs:
        tag = rec.verdict if not rec.matched_measure else f"{rec.verdict} via {rec.matched_measure}"
        report.summary.append((f"{rec.side}_{rec.interval + 1} = {rec.value:+.6f}", tag))
        if rec.verdict == "fail":
            report.warnings.append(f"endpoint {rec.side}_{rec.interval + 1}: {rec.reason}")
    if not ok:
        report.status = EXIT_FAIL
    report.plots = [("spectrum", r), ("cao", {"top": cao})]


def _ly_function(spec):
    if isinstance(spec, (int, float)):
        return lambda q, v=float(spec): v
    vals = [float(x) for x in spec]
    return lambda q: vals[q.symbol(0) % len(vals)]


def _ly_norm(spec):
    from .quasicompactness import EuclideanNorm, WeightedSupNorm, sup_norm

    if spec is None or spec == "euclidean":
        return EuclideanNorm()
    if spec == "sup":
        return sup_norm()
    return WeightedSupNorm(tuple(spec["weighted_sup"]))


def _cmd_quasicompact(cfg, report, threads):
    from .base_dynamics import default_samples, rng
    from .quasicompactness import LasotaYorkeData, check_lasota_yorke, kappa_bound_via_ly, quasicompact_report

    c, family, _ = build(cfg)
    p = cfg["quasicompact"]
    reports = {}
    with _Timer(report, "kappa"):
        for mu in family:
            reports[mu.label] = quasicompact_report(c, mu, p["n_max"], p["tolerance"], cfg.seed)
    report.result = {"measures": {k: v.to_dict() for k, v in reports.items()}}
    for k, v in reports.items():
        report.summary.append((k, f"kappa {v.kappa:+.6f}  lambda {v.lam:+.6f}  {v.verdict}"))
    ly = p.get("lasota_yorke")
    if ly is not None:
        pts = default_samples(c.system, cfg["measures"]["p_max"], seed=cfg.seed)[:64]
        vecs = rng(cfg.seed).standard_normal((ly.get("vectors", 16), c.dim))
        data = LasotaYorkeData(_ly_function(ly["alpha"]), _ly_function(ly["beta"]), _ly_function(ly["gamma"]),
                               pts, list(vecs), _ly_norm(ly.get("strong")), _ly_norm(ly.get("weak")))
        with _Timer(report, "lasota_yorke"):
            chk = check_lasota_yorke(c, data)
            out = {"check": chk.to_dict(), "bounds": {}}
            for mu in family:
                lam = reports[mu.label].lam
                b = kappa_bound_via_ly(data, mu, lam, c.system, ly.get("birkhoff_n", 2048), cfg.seed)
                out["bounds"][mu.label] = b.to_dict()
        report.result["lasota_yorke"] = out
        report.summary.append(("Lasota-Yorke", chk.verdict))
        if chk.verdict != "pass":
            report.warnings.append("Lasota-Yorke inequalities fail on sampled data")
            report.status = EXIT_FAIL


def _cmd_selftest(cfg, report, threads):
    from . import fixtures
    from .jps import VerifyConfig, verification_ok, verify_endpoints
    from .lyapunov import exponent_ladder
    from .quasicompactness import quasicompact_report
    from .spectrum import ScanConfig, scan_spectrum

    checks = []

    def check(name, ok, detail):
        checks.append({"name": name, "ok": bool(ok), "detail": detail})
        report.summary.append((name, ("pass" if ok else "FAIL") + f"  {detail}"))

    with _Timer(report, "selftest"):
        for name in ("diag2", "diag4", "jordan"):
            fx = fixtures.get(name)
            mu = fx.family.measures[0]
            lad = exponent_ladder(fx.cocycle, mu, 512)
            err = max(abs(a - b) for a, b in zip(lad.values, sorted(set(fx.exponents), reverse=True)))
            check(f"{name} ladder", err <= 1e-6, f"max error {err:.2e}")
            r = scan_spectrum(fx.cocycle, ScanConfig(threads=threads))
            ends = sorted(r.endpoints())
            want = sorted(e for iv in fx.spectrum for e in iv)
            err = max((abs(a - b) for a, b in zip(ends, want)), default=math.inf) if len(ends) == len(want) else math.inf
            check(f"{name} spectrum", err <= 1e-3, f"max endpoint error {err:.2e}")
        fx = fixtures.scalar_shift()
        r = scan_spectrum(fx.cocycle, ScanConfig(threads=threads))
        ok = len(r.intervals) == 1 and abs(r.intervals[0][0]) <= 1e-2 and abs(r.intervals[0][1] - 1) <= 1e-2
        check("scalar shift spectrum", ok, str([[round(a, 6), round(b, 6)] for a, b in r.intervals]))
        recs = verify_endpoints(fx.cocycle, r, fx.family, VerifyConfig())
        matched = sorted(str(x.matched_measure) for x in recs)
        check("scalar shift endpoints", verification_ok(recs) and matched == ["per:0", "per:1"], ", ".join(matched))
        fx = fixtures.diagonal_operator()
        mu = fx.family.measures[0]
        q = quasicompact_report(fx.cocycle, mu, 512)
        ok = abs(q.kappa - fx.extras["kappa"]) <= 1e-6 and abs(q.lam - math.log(2)) <= 1e-6
        check("diagonal operator kappa", ok and q.verdict == "quasicompact", f"kappa {q.kappa:.6f} lambda {q.lam:.6f}")
    report.result = {"checks": checks, "passed": all(ch["ok"] for ch in checks)}
    if not report.result["passed"]:
        report.status = EXIT_FAIL


DISPATCH = {
    "lyapunov": _cmd_lyapunov,
    "spectrum": _cmd_spectrum,
    "quasicompact": _cmd_quasicompact,
    "verify-jps": _cmd_verify,
    "selftest": _cmd_selftest,
}


# ---------------------------------------------------------------------------
# output


def _write_traces(report: RunReport, out: str) -> list:
    paths = []
    for name, (header, rows) in sorted(report.traces.items()):
        path = os.path.join(out, f"trace_{name}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        paths.append(path)
    return paths


def _write_figures(report: RunReport, out: str) -> list:
    from . import plotting

    if not plotting.available():
        report.warnings.append("figures requested but matplotlib is not installed")
        return []
    paths = []
    for kind, obj in report.plots:
        path = os.path.join(out, f"{kind}.png")
        if kind == "spectrum":
            paths.append(plotting.plot_spectrum(obj, path))
        elif kind == "ladder":
            paths.append(plotting.plot_ladder(obj, path))
        elif kind == "cao":
            paths.append(plotting.plot_cao(obj, path))
    return paths


def _print_summary(report: RunReport, stream=None):
    stream = stream or sys.stdout
    rows = [("command", report.command), ("config", report.config.hash[:12])] + list(report.summary)
    width = max(len(str(k)) for k, _ in rows)
    for k, v in rows:
        print(f"{str(k):<{width}}  {v}", file=stream)
    for w in report.warnings:
        print(f"warning: {w}", file=stream)
    print(f"status  {report.status}", file=stream)


def run(cfg: ExperimentConfig, out: str | None = None, threads: int = 1, figures: bool | None = None) -> RunReport:
    """Execute ``cfg`` and write its artefacts to ``out`` (if given)."""
    report = RunReport(cfg.command, cfg)
    t0 = time.perf_counter()
    DISPATCH[cfg.command](cfg, report, max(1, int(threads)))
    report.timings["total"] = round(time.perf_counter() - t0, 6)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        _write_traces(report, out)
        want = cfg["output"]["figures"] if figures is None else figures
        if want:
            report.figures = _write_figures(report, out)
        with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.document(), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sackersell", description="Dichotomy spectra and Lyapunov exponents of linear cocycles.")
    p.add_argument("--config", help="JSON experiment config (optional for --command selftest)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for the shift scan")
    p.add_argument("--command", choices=COMMANDS, help="command to run (overrides the config)")
    fig = p.add_mutually_exclusive_group()
    fig.add_argument("--figures", dest="figures", action="store_true", default=None, help="render PNG figures")
    fig.add_argument("--no-figures", dest="figures", action="store_false", help="skip figures")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _report_errors(errors, stream=None):
    stream = stream or sys.stderr
    for e in errors:
        print(json.dumps({k: e[k] for k in ("code", "path", "line", "column", "message")}), file=stream)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        _report_errors([{"code": "config.range", "path": "--threads", "line": None, "column": None,
                         "message": "--threads must be >= 1"}])
        return EXIT_CONFIG
    overrides = {"command": args.command, "seed": args.seed}
    try:
        if args.config is None:
            if args.command != "selftest":
                raise ConfigError([{"code": "config.missing", "path": "--config", "line": None, "column": None,
                                    "message": "--config is required except for --command selftest",
                                    "where": "--config"}])
            cfg = validate("{}", overrides)
        else:
            with open(args.config, encoding="utf-8") as fh:
                cfg = validate(fh.read(), overrides)
        out = args.out or cfg["output"]["dir"]
        report = run(cfg, out, args.threads, args.figures)
    except ConfigError as e:
        _report_errors(e.errors)
        return EXIT_CONFIG
    except OSError as e:
        _report_errors([{"code": "io.error", "path": str(getattr(e, "filename", "")), "line": None,
                         "column": None, "message": str(e)}])
        return EXIT_CONFIG if args.config and not os.path.exists(args.config) else EXIT_FAIL
    except Exception as e:  # runtime failures still carry a code
        code = getattr(e, "code", None) or f"runtime.{type(e).__name__}"
        _report_errors([{"code": code, "path": "", "line": None, "column": None, "message": str(e)}])
        return EXIT_FAIL
    _print_summary(report)
    return report.status


if __name__ == "__main__":
    sys.exit(main())
