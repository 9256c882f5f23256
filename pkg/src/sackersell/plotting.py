"""Optional figures for CLI reports.

matplotlib is imported lazily so the rest of the package never needs it.
Every function writes a PNG and returns its path.
"""

from __future__ import annotations

import math
import os


def available() -> bool:
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        return False
    return True


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    fig.clf()
    return os.fspath(path)


def plot_spectrum(result, path):
    """Scan trace (pass/fail, dim U) with the spectral intervals shaded."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.2))
    trace = sorted(result.trace)
    ok = [(a, u) for a, p, u in trace if p]
    bad = [a for a, p, _ in trace if not p]
    if ok:
        ax.plot([a for a, _ in ok], [u for _, u in ok], "o", ms=3, color="tab:blue", label="passing shift")
    if bad:
        ax.plot(bad, [-0.25] * len(bad), "x", ms=4, color="tab:red", label="failing shift")
    for lo, hi in result.intervals:
        pad = max(0.0, result.tol - (hi - lo)) / 2  # keep point intervals visible
        ax.axvspan(lo - pad, hi + pad, color="0.8", zorder=0)
    if math.isfinite(result.kappa):
        ax.axvline(result.kappa, ls="--", color="k", lw=0.8, label="kappa")
    ax.set_xlabel("shift a")
    ax.set_ylabel("dim U")
    ax.legend(loc="best", fontsize=8, frameon=False)
    return _save(fig, path)


def plot_ladder(spectrum, path):
    """Exponent ladder with multiplicities, one horizontal rule per group."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 4))
    for lam, m in spectrum.exponents:
        ax.hlines(lam, 0, 1, color="tab:blue")
        ax.text(1.02, lam, f"x{m}", va="center", fontsize=8)
    if math.isfinite(spectrum.kappa):
        ax.axhline(spectrum.kappa, ls="--", color="k", lw=0.8)
    ax.set_xlim(0, 1.2)
    ax.set_xticks([])
    ax.set_ylabel("exponent")
    ax.set_title(spectrum.measure, fontsize=9)
    return _save(fig, path)


def plot_cao(curves, path):
    """``n -> (1/n) F_n`` convergence; ``curves`` maps a label to a CaoResult."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, res in curves.items():
        if res.curve is None:
            continue
        n, uni, arg = res.curve.T
        ax.plot(n, uni, lw=1, label=f"{label}: max over samples")
        ax.plot(n, arg, lw=1, ls="--", label=f"{label}: {res.argmax}")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("F_n / n")
    ax.legend(loc="best", fontsize=7, frameon=False)
    return _save(fig, path)
