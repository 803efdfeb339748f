"""Command-line front end: ``qgl <command> [flags]``.

Configuration files are flat ``key = value`` text.  Keys are flag names
without the leading dashes (``l-min`` and ``l_min`` are equivalent), ``#``
starts a comment, blank lines are ignored.  Values given as flags override
file values, which override defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, kernels
from .errors import QGLError
from .ensemble import (LengthDistribution, hopping_sup, ids_estimate, lifshitz_experiment,
                       local_energy_check, sample_lengths, table_to_csv, wegner_experiment)
from .kp_bands import bands_P, delta_set, inf_sigma, sigma_union
from .lattice import build_cube
from .reduction import (LengthField, assemble_M, dM_dl, gap_constants, negative_gap_check,
                        sum_dM_dl)
from .spectra import (eigenvector_at, fd_oracle_spectrum, kernel_dims, localization_profile,
                      spectrum_H)

COMMANDS = ("bands", "sigma", "infspec", "spectrum", "oracle", "ids", "wegner", "lifshitz",
            "localize", "check")

DEFAULT_WINDOWS = {
    "bands": (0.0, 50.0),
    "sigma": (0.0, 50.0),
    "spectrum": (0.0, 6.0),
    "oracle": (0.0, 6.0),
    "localize": (0.0, 2.0),
    "ids": (0.0, 6.0),
    "wegner": (1.0, 2.0),
    "check": (1.0, 2.0),
}

EPILOG = """\
config file grammar:
  line    := blank | comment | key '=' value
  comment := '#' anything
  key     := flag name without dashes, '-' or '_' separators
  lists   := comma separated values, e.g. n-list = 32,64,128
precedence: flag > config file > default

exit codes: 0 success, 1 numerical failure, 2 usage or constraint error
output: <out>/manifest.json plus CSV tables; --out defaults to $QGL_OUT/<command>
"""


class UsageError(Exception):
    """Invalid configuration; reported with exit code 2."""


@dataclass
class RunConfig:
    """Fully resolved run configuration.

    Every field has a default; ``window`` defaults per command.
    """

    command: str
    d: int = 1
    n: int = 8
    n_list: list = field(default_factory=lambda: [32, 64, 128])
    alpha: float = 1.0
    l_min: float = 0.8
    l_max: float = 1.2
    u: float = 1.0
    dist: str = "raised_cosine"
    seed: int = 0
    realizations: int = 200
    window: tuple | None = None
    widths: list = field(default_factory=lambda: [0.04, 0.02, 0.01])
    e0: float | None = None
    beta_exp: float = 0.5
    m: int = 32
    grid_points: int = 101
    out: str | None = None
    threads: int = 0
    plot: bool = False
    raw: bool = False
    tol_root: float = 1e-10
    tol_eig: float = 1e-6

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if not self.d >= 1:
            raise UsageError("constraint violated: d >= 1")
        if not self.n >= 0:
            raise UsageError("constraint violated: n >= 0")
        if any(k < 0 for k in self.n_list) or not self.n_list:
            raise UsageError("constraint violated: n >= 0 for every entry of n-list")
        if not (0 < self.l_min < self.l_max):
            raise UsageError("constraint violated: 0 < l_min < l_max")
        if not self.u > 0:
            raise UsageError("constraint violated: u > 0")
        if self.realizations < 1:
            raise UsageError("constraint violated: realizations >= 1")
        if self.dist not in ("uniform", "triangular", "raised_cosine"):
            raise UsageError("constraint violated: dist in {uniform, triangular, raised_cosine}")
        if self.window is not None and not self.window[0] < self.window[1]:
            raise UsageError("constraint violated: window lower < window upper")
        if self.m < 16:
            raise UsageError("constraint violated: m >= 16")
        if self.threads < 0:
            raise UsageError("constraint violated: threads >= 0")
        if self.tol_root <= 0 or self.tol_eig <= 0:
            raise UsageError("constraint violated: tolerances > 0")
        if any(w <= 0 for w in self.widths):
            raise UsageError("constraint violated: widths > 0")
        return self

    @property
    def resolved_window(self) -> tuple:
        return tuple(self.window) if self.window is not None else DEFAULT_WINDOWS.get(self.command, (0.0, 6.0))

    @property
    def workers(self) -> int:
        return self.threads or (os.cpu_count() or 1)

    @property
    def outdir(self) -> str:
        if self.out:
            return self.out
        return os.path.join(os.environ.get("QGL_OUT", "qgl_out"), self.command)

    def distribution(self) -> LengthDistribution:
        return LengthDistribution(self.dist, self.l_min, self.l_max)


def _floats(text):
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]


def _ints(text):
    return [int(x) for x in str(text).replace(" ", "").split(",") if x]


def _window(text):
    v = _floats(text)
    if len(v) != 2:
        raise UsageError("window needs two comma separated numbers")
    return (v[0], v[1])


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


CONVERTERS = {
    "d": int, "n": int, "n_list": _ints, "alpha": float, "l_min": float, "l_max": float,
    "u": float, "dist": str, "seed": int, "realizations": int, "window": _window,
    "widths": _floats, "e0": float, "beta_exp": float, "m": int, "grid_points": int, "out": str,
    "threads": int, "plot": _bool, "raw": _bool, "tol_root": float, "tol_eig": float,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgl", description=__doc__.splitlines()[0],
                                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"qgl {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    helps = {
        "bands": "Kronig-Penney bands for spacing --u and coupling --alpha up to the window top",
        "sigma": "almost-sure spectrum, its edges and the forbidden set",
        "infspec": "bottom of the almost-sure spectrum",
        "spectrum": "eigenvalues of one random realization in --window",
        "oracle": "finite-element eigenvalues of one realization in --window",
        "ids": "integrated density of states on the --window grid",
        "wegner": "Wegner scaling experiment on I = --window",
        "lifshitz": "Lifshitz tail experiment at --e0 (default: spectral bottom)",
        "localize": "decay fits of eigenvectors in --window",
        "check": "operator inequalities and identities on one set of parameters",
    }
    S = argparse.SUPPRESS
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name], epilog=EPILOG,
                            formatter_class=argparse.RawDescriptionHelpFormatter,
                            argument_default=S)
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--d", type=int, help="lattice dimension (1)")
        sp.add_argument("--n", type=int, help="cube radius (8)")
        sp.add_argument("--n-list", dest="n_list", help="comma separated radii (32,64,128)")
        sp.add_argument("--alpha", type=float, help="vertex coupling (1.0)")
        sp.add_argument("--l-min", dest="l_min", type=float, help="smallest edge length (0.8)")
        sp.add_argument("--l-max", dest="l_max", type=float, help="largest edge length (1.2)")
        sp.add_argument("--u", type=float, help="constant edge length for 'bands' (1.0)")
        sp.add_argument("--dist", help="uniform | triangular | raised_cosine (raised_cosine)")
        sp.add_argument("--seed", type=int, help="master seed (0)")
        sp.add_argument("--realizations", type=int, help="Monte Carlo realizations (200)")
        sp.add_argument("--window", help="energy window 'a,b' (per command)")
        sp.add_argument("--widths", help="comma separated widths |J| (0.04,0.02,0.01)")
        sp.add_argument("--e0", type=float, help="spectral edge for 'lifshitz' (bottom of spectrum)")
        sp.add_argument("--beta-exp", dest="beta_exp", type=float, help="radius exponent (0.5)")
        sp.add_argument("--m", type=int, help="finite elements per edge (32)")
        sp.add_argument("--grid-points", dest="grid_points", type=int, help="IDS grid size (101)")
        sp.add_argument("--out", help="output directory ($QGL_OUT/<command>)")
        sp.add_argument("--threads", type=int, help="worker processes (0 = all cores)")
        sp.add_argument("--plot", action="store_const", const=True, help="also write SVG plots")
        sp.add_argument("--raw", action="store_const", const=True, help="dump per-realization counts")
        sp.add_argument("--tol-root", dest="tol_root", type=float, help="root tolerance (1e-10)")
        sp.add_argument("--tol-eig", dest="tol_eig", type=float, help="eigenvalue tolerance (1e-6)")
    return p


def read_config_file(path: str) -> dict:
    """Parse a flat ``key = value`` file into converted values."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in CONVERTERS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def parse_config(argv, config_file: str | None = None) -> RunConfig:
    """Resolve flags, an optional configuration file and defaults.

    Raises
    ------
    SystemExit
        Code 2 for unknown flags or a missing command.
    UsageError
        For constraint violations or malformed values.
    """
    parser = build_parser()
    argv = list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command", None)
    if command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    path = ns.pop("config", None) or config_file
    values = read_config_file(path) if path else {}
    values.update(ns)
    kwargs = {}
    for key, value in values.items():
        try:
            kwargs[key] = CONVERTERS[key](value) if isinstance(value, str) else value
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {value!r} ({exc})") from None
    return RunConfig(command=command, **kwargs).validate()


# ----------------------------------------------------------------------------
# output helpers


def write_csv(outdir, name, header, rows) -> str:
    path = os.path.join(outdir, name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
    return name


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def plot_csv(outdir, csv_name, x, ys, svg_name, title="", logx=False, logy=False) -> str:
    """Line chart of columns of a CSV file already on disk."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(os.path.join(outdir, csv_name)) as fh:
        rows = list(csv.DictReader(fh))
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.array([float(r[x]) for r in rows])
    for y in ys:
        ax.plot(xs, np.array([float(r[y]) for r in rows]), marker=".", label=y)
    ax.set_xlabel(x)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, svg_name), format="svg", metadata={"Date": None})
    plt.close(fig)
    return svg_name


# ----------------------------------------------------------------------------
# commands


def _cmd_bands(cfg, out):
    E_max = cfg.resolved_window[1]
    bl = bands_P(cfg.u, cfg.alpha, E_max, tol_root=cfg.tol_root)
    files = [write_csv(out, "bands.csv", ["band_index", "left", "right"],
                       [(i, a, b) for i, (a, b) in enumerate(bl.bands)])]
    if cfg.plot:
        files.append(plot_csv(out, "bands.csv", "band_index", ["left", "right"], "bands.svg", "bands"))
    return files


def _cmd_sigma(cfg, out):
    E_max = cfg.resolved_window[1]
    su = sigma_union(cfg.alpha, cfg.d, cfg.l_min, cfg.l_max, E_max, tol_root=cfg.tol_root)
    ds = delta_set(cfg.l_min, cfg.l_max, E_max)
    files = [
        write_csv(out, "sigma_bands.csv", ["band_index", "left", "right"],
                  [(i, a, b) for i, (a, b) in enumerate(su.bands.bands)]),
        write_csv(out, "sigma_edges.csv", ["E", "side", "outside_delta"], su.edges),
        write_csv(out, "delta.csv", ["index", "left", "right"],
                  [(i, a, b) for i, (a, b) in enumerate(ds.intervals)]),
    ]
    if cfg.plot:
        files.append(plot_csv(out, "sigma_bands.csv", "band_index", ["left", "right"], "sigma.svg",
                              "almost-sure spectrum"))
    return files


def _cmd_infspec(cfg, out):
    E, res = inf_sigma(cfg.alpha, cfg.d, cfg.l_min, cfg.l_max, tol_root=cfg.tol_root, full_output=True)
    return [write_csv(out, "infspec.csv", ["alpha", "d", "l_min", "l_max", "E0", "residual"],
                      [(cfg.alpha, cfg.d, cfg.l_min, cfg.l_max, E, res)])]


def _realization(cfg):
    cube = build_cube(cfg.d, cfg.n)
    return cube, sample_lengths(cfg.distribution(), cube, cfg.seed, 0)


def _cmd_spectrum(cfg, out):
    cube, lengths = _realization(cfg)
    res = spectrum_H(cube, lengths, cfg.alpha, cfg.resolved_window, tol_eig=cfg.tol_eig)
    res.to_csv(os.path.join(out, "spectrum.csv"))
    files = ["spectrum.csv",
             write_csv(out, "excluded.csv", ["left", "right", "count"],
                       [(a, b, c) for (a, b), c in zip(res.excluded_intervals, res.excluded_counts)])]
    if cfg.plot:
        files.append(plot_csv(out, "spectrum.csv", "E", ["residual"], "spectrum.svg", "residuals",
                              logy=True))
    return files


def _cmd_oracle(cfg, out):
    cube, lengths = _realization(cfg)
    res = fd_oracle_spectrum(cube, lengths, cfg.alpha, cfg.m, cfg.resolved_window)
    return [write_csv(out, "oracle.csv", ["E"], [(e,) for e in res.eigenvalues])]


def _cmd_ids(cfg, out):
    a, b = cfg.resolved_window
    grid = np.linspace(a, b, cfg.grid_points)
    curve = ids_estimate(cfg.d, max(cfg.n, 2), cfg.alpha, cfg.distribution(), cfg.realizations, grid,
                         seed=cfg.seed, workers=cfg.workers)
    table_to_csv(curve.rows(), os.path.join(out, "ids.csv"))
    files = ["ids.csv"]
    if cfg.plot:
        files.append(plot_csv(out, "ids.csv", "E", ["k", "lower", "upper"], "ids.svg", "IDS"))
    return files


def _cmd_wegner(cfg, out):
    rep = wegner_experiment(cfg.d, cfg.n_list, cfg.alpha, cfg.resolved_window, cfg.widths,
                            cfg.distribution(), cfg.realizations, cfg.seed, workers=cfg.workers,
                            raw=cfg.raw)
    files = rep.write(out, raw=cfg.raw)
    if cfg.plot:
        files.append(plot_csv(out, "wegner_cells.csv", "width", ["C_cell"], "wegner.svg",
                              "P/(|edges| |J|)"))
    return files


def _cmd_lifshitz(cfg, out):
    control = cfg.alpha == 0 and cfg.e0 == 0
    rep = lifshitz_experiment(cfg.d, cfg.n_list, cfg.alpha, cfg.e0, cfg.beta_exp, cfg.distribution(),
                              cfg.realizations, cfg.seed, negative_control=control,
                              workers=cfg.workers, raw=cfg.raw)
    files = rep.write(out, raw=cfg.raw)
    if cfg.plot:
        files.append(plot_csv(out, "lifshitz_probabilities.csv", "n", ["P"], "lifshitz_P.svg",
                              "P(dist <= r_n)", logx=True))
        files.append(plot_csv(out, "lifshitz_ids.csv", "eps", ["k"], "lifshitz_ids.svg", "edge IDS",
                              logx=True))
    return files


def _cmd_localize(cfg, out):
    cube, lengths = _realization(cfg)
    res = spectrum_H(cube, lengths, cfg.alpha, cfg.resolved_window, tol_eig=cfg.tol_eig)
    rows = []
    for E in res.eigenvalues:
        vec = eigenvector_at(cube, lengths, E, cfg.alpha)
        try:
            prof = localization_profile(cube, lengths, E, vec)
        except QGLError:
            continue
        rows.append((E, prof.center, prof.decay_rate, prof.r_squared, prof.ipr))
    files = [write_csv(out, "localize.csv", ["E", "center", "decay_rate", "r_squared", "ipr"], rows)]
    if cfg.plot and rows:
        files.append(plot_csv(out, "localize.csv", "E", ["decay_rate", "ipr"], "localize.svg",
                              "localization"))
    return files


def run_checks(cfg) -> list[tuple]:
    """Rows ``(check, value, threshold, status)`` of the invariant suite."""
    dist = cfg.distribution()
    rows = []

    def add(name, value, threshold, ok):
        rows.append((name, float(value), float(threshold), "pass" if ok else "fail"))

    I = cfg.resolved_window
    cube = build_cube(cfg.d, max(cfg.n, 1))
    lengths = sample_lengths(dist, cube, cfg.seed, 0)
    E = 0.5 * (I[0] + I[1])

    worst = 0.0
    for e in range(min(cube.num_edges, 8)):
        h = 1e-6
        plus = assemble_M(cube, lengths.with_value(e, lengths.values[e] + h), E).matrix
        minus = assemble_M(cube, lengths.with_value(e, lengths.values[e] - h), E).matrix
        fd = (plus - minus) / (2 * h)
        worst = max(worst, abs(fd - dM_dl(cube, lengths, E, e)).max())
    add("dM_dl_central_difference", worst, 1e-5, worst < 1e-5)

    gb = gap_constants(I, dist.l_min, dist.l_max, d=cfg.d)
    lam = np.linalg.eigvalsh(sum_dM_dl(cube, lengths, E).toarray()).min()
    add("sum_dM_dl_minus_beta", lam - gb.beta, 0.0, lam >= gb.beta)

    ng = negative_gap_check(cube, lengths, -1.5, 1.0, 2.0)
    add("negative_gap_margin", ng.margin, -1e-10, ng.margin >= -1e-10)
    add("factorization_residual", ng.factorization_residual, 1e-12, ng.factorization_residual < 1e-12)

    a = 0.5 * min(1.0, 0.9 * hopping_sup(E, dist.l_min, dist.l_max))
    le = local_energy_check(cfg.d, max(cfg.n, 2), E, dist, a, 2000, cfg.seed, realizations=2)
    add("local_energy_min_margin", le["min_margin"], -1e-10, le["min_margin"] >= -1e-10)

    small = build_cube(cfg.d, min(max(cfg.n, 1), 4 if cfg.d == 1 else 1))
    sl = sample_lengths(dist, small, cfg.seed, 1)
    sp = spectrum_H(small, sl, cfg.alpha, (0.05, 6.0), tol_eig=cfg.tol_eig)
    mismatches = 0
    for Ek in sp.eigenvalues[:4]:
        dh, dm = kernel_dims(small, sl, Ek, cfg.alpha, tol_eig=cfg.tol_eig)
        mismatches += dh != dm
    add("multiplicity_identity_mismatches", mismatches, 0, mismatches == 0)
    add("residual_failures", sp.diagnostics["residual_failures"], 0, sp.diagnostics["residual_failures"] == 0)
    return rows


def _cmd_check(cfg, out):
    rows = run_checks(cfg)
    name = write_csv(out, "check.csv", ["check", "value", "threshold", "status"], rows)
    failed = [r[0] for r in rows if r[3] != "pass"]
    if failed:
        raise QGLError(f"checks failed: {', '.join(failed)}")
    return [name]


HANDLERS = {
    "bands": _cmd_bands, "sigma": _cmd_sigma, "infspec": _cmd_infspec, "spectrum": _cmd_spectrum,
    "oracle": _cmd_oracle, "ids": _cmd_ids, "wegner": _cmd_wegner, "lifshitz": _cmd_lifshitz,
    "localize": _cmd_localize, "check": _cmd_check,
}


def run_command(cfg: RunConfig) -> int:
    """Run one subcommand, writing its artifacts and ``manifest.json``.

    Returns 0 on success and 1 on a numerical failure.
    """
    out = cfg.outdir
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    status, error, files = 0, None, []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            files = HANDLERS[cfg.command](cfg, out)
    except (QGLError, ArithmeticError, np.linalg.LinAlgError) as exc:
        status, error = 1, f"{cfg.command}: {type(exc).__name__}: {exc}"
        print(f"qgl {error}", file=sys.stderr)
        if cfg.command == "check":
            files = ["check.csv"]
    config = asdict(cfg)
    config["window"] = list(cfg.resolved_window)
    config["out"] = out
    manifest = {
        "tool": "qgl",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "command": cfg.command,
        "config": config,
        "seed": cfg.seed,
        "files": files,
        "status": "ok" if status == 0 else "error",
        "error": error,
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"qgl: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    except OSError as exc:
        print(f"qgl: {exc}", file=sys.stderr)
        return 2
    return run_command(cfg)


if __name__ == "__main__":
    sys.exit(main())
