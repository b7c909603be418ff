"""Command-line front end: ``stmchain <command> --config run.json``.

Every output starts with ``#`` comment lines that echo the fully resolved
configuration, then a CSV header and the data rows. A failed run exits with 2
for configuration problems or 3 for numerical ones.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import pydantic

from . import __version__, calib, floquet, hn, landscape, timedomain
from .config import AlphaConfig, CriticalBetaConfig, RunConfig, deg_axis_to_rad, fmt, load_config
from .errors import NumericalError, ValidationError
from .model import Truncation
from .parallel import default_threads, ordered_map

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

PORT_PAIRS = [(i, j) for i in range(1, 5) for j in range(1, 5)]


class ConfigError(Exception):
    pass


def _need(section, name):
    if section is None:
        raise ConfigError(f"config section '{name}' is required for this command")
    return section


class Table:
    """CSV writer with a comment preamble; deterministic formatting."""

    def __init__(self, command, cfg: RunConfig):
        self.command = command
        self.comments = [
            f"stmchain {__version__} {command}",
            "config=" + json.dumps(cfg.resolved(), sort_keys=True, separators=(",", ":")),
        ]
        self.header = None
        self.rows = []

    def note(self, text):
        self.comments.append(text)

    def columns(self, *names):
        self.header = list(names)

    def row(self, *values):
        self.rows.append([v if isinstance(v, str) else fmt(v) for v in values])

    def render(self) -> str:
        buf = io.StringIO()
        for c in self.comments:
            buf.write(f"# {c}\n")
        if self.header:
            buf.write(",".join(self.header) + "\n")
        for r in self.rows:
            buf.write(",".join(r) + "\n")
        return buf.getvalue()


def _deg(x):
    return math.degrees(x)


# --- commands ------------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, threads: int) -> Table:
    scfg = _need(cfg.spectrum, "spectrum")
    chain, mod, trunc = cfg.device.build(), cfg.modulation.build(), cfg.truncation.build()
    rows = floquet.spectrum(chain, mod, scfg.omega.values(), trunc, threads)
    t = Table("spectrum", cfg)
    cols = ["omega_MHz"]
    for i, j in PORT_PAIRS:
        cols += [f"S{i}{j}_re", f"S{i}{j}_im"]
    cols += ["S41_mag_dB", "S41_phase_deg", "S23_mag_dB", "S23_phase_deg"]
    cols += ["mag_contrast_dB", "phase_contrast_deg", "P_used", "status"]
    t.columns(*cols)
    for r in rows:
        if r.result is None:
            t.row(r.omega, *(["nan"] * (len(cols) - 3)), "nan", r.status.split(":")[0])
            continue
        s = r.result.S
        vals = [r.omega]
        for i, j in PORT_PAIRS:
            vals += [s[i - 1, j - 1].real, s[i - 1, j - 1].imag]
        s41, s23 = r.result.s(4, 1), r.result.s(2, 3)
        with np.errstate(divide="ignore"):
            vals += [20 * np.log10(abs(s41)), _deg(np.angle(s41)), 20 * np.log10(abs(s23)), _deg(np.angle(s23))]
        vals += [hn.mag_contrast_db(s41, s23), _deg(hn.phase_contrast(s41, s23)), r.result.P_used, "ok"]
        t.row(*vals)
    return t


def cmd_hn(cfg: RunConfig, threads: int) -> Table:
    chain, mod, trunc = cfg.device.build(), cfg.modulation.build(), cfg.truncation.build()
    c = hn.hn_couplings(chain, mod, trunc)
    t = Table("hn", cfg)
    t.columns(
        "lambda12_re", "lambda12_im", "lambda21_re", "lambda21_im",
        "gamma_eff1", "gamma_eff2", "diag_shift1", "diag_shift2",
        "alpha12_re", "alpha12_im", "alpha21_re", "alpha21_im",
        "mag_contrast_dB", "phase_contrast_deg", "residual_sum", "P_used",
    )
    t.row(
        c.lambda12.real, c.lambda12.imag, c.lambda21.real, c.lambda21.imag,
        *c.gamma_eff, *c.diag_real_shift,
        c.alpha12.real, c.alpha12.imag, c.alpha21.real, c.alpha21.imag,
        c.mag_contrast_db, _deg(c.phase_contrast), abs(c.lambda12 + c.lambda21), c.P_used,
    )
    return t


def cmd_alpha(cfg: RunConfig, threads: int) -> Table:
    chain, mod = cfg.device.build(), cfg.modulation.build()
    acfg = cfg.alpha or AlphaConfig()
    gamma0 = acfg.gamma0 if acfg.gamma0 is not None else 0.5 * (chain.site1.gamma + chain.site2.gamma)
    if mod.beta1 != mod.beta2:
        raise ConfigError("the first-order formula needs a common beta (beta1 == beta2)")
    a12, a21 = hn.alpha_first_order(mod.beta1, mod.omega_m, mod.phi, chain.lambda_static, gamma0)
    lam = chain.lambda_static
    t = Table("alpha", cfg)
    t.columns("alpha12", "alpha21", "lambda12", "lambda21", "gamma0")
    t.row(a12, a21, lam * (1 - a12), lam * (1 - a21), gamma0)
    return t


def cmd_map(cfg: RunConfig, threads: int) -> Table:
    mcfg = _need(cfg.map, "map")
    chain, trunc = cfg.device.build(), cfg.truncation.build()
    b1, b2 = mcfg.betas()
    grid = landscape.parameter_map(chain, b1, b2, mcfg.omega_m.values(), deg_axis_to_rad(mcfg.phi_deg), trunc, threads)
    t = Table("map", cfg)
    t.columns(
        "omega_m_MHz", "phi_deg", "lambda12_re", "lambda12_im", "lambda21_re", "lambda21_im",
        "mag_contrast_dB", "phase_contrast_deg", "P_used", "status",
    )
    phi_deg = mcfg.phi_deg.values()
    for i, w in enumerate(grid.omega_m_axis):
        for j, p in enumerate(phi_deg):
            l12, l21 = grid.lambda12[i, j], grid.lambda21[i, j]
            t.row(
                w, p, l12.real, l12.imag, l21.real, l21.imag,
                grid.mag_contrast_db[i, j], _deg(grid.phase_contrast[i, j]), grid.P_used[i, j], str(grid.status[i, j]),
            )
    return t


def cmd_contour(cfg: RunConfig, threads: int) -> Table:
    ccfg = _need(cfg.contour, "contour")
    chain, trunc = cfg.device.build(), cfg.truncation.build()
    window = None
    if ccfg.window_deg is not None:
        w0, w1, p0, p1 = ccfg.window_deg
        window = (w0, w1, math.radians(p0), math.radians(p1))
    found = {}
    for which in ccfg.which:
        found[which] = landscape.ep_contour(
            chain, ccfg.beta, which, window, trunc, tuple(ccfg.resolution), ccfg.refine_tol, ccfg.imag_tol,
            threads=threads,
        )
    t = Table("contour", cfg)
    if "12" in found and "21" in found:
        t.note(f"rings_intersect={int(landscape.contours_intersect(found['12'], found['21']))}")
    t.columns("which", "contour", "point", "omega_m_MHz", "phi_deg", "closed", "imag_guard_flag")
    for which, contours in found.items():
        t.note(f"lambda{which}_contours={len(contours)}")
        for ci, c in enumerate(contours):
            for pi, (w, p) in enumerate(c.points):
                t.row(which, ci, pi, w, _deg(p), c.closed, bool(c.flagged[pi]))
    return t


def cmd_critical_beta(cfg: RunConfig, threads: int) -> Table:
    ccfg = cfg.critical_beta or CriticalBetaConfig()
    chain, trunc = cfg.device.build(), cfg.truncation.build()
    beta = landscape.critical_beta(chain, tuple(ccfg.bracket), tuple(ccfg.omega_m_window), trunc, ccfg.tol)
    _, at = landscape.symmetric_phase_coupling(chain, beta, tuple(ccfg.omega_m_window), trunc)
    t = Table("critical-beta", cfg)
    t.columns("beta_star_MHz", "omega_m_at_min_MHz")
    t.row(beta, at)
    return t


def cmd_gyration(cfg: RunConfig, threads: int) -> Table:
    gcfg = _need(cfg.gyration, "gyration")
    chain, trunc = cfg.device.build(), cfg.truncation.build()
    found = ordered_map(
        lambda w: landscape.gyration_find(chain, gcfg.beta, w, trunc, gcfg.tol, gcfg.n_scan), gcfg.omega_m, threads
    )
    t = Table("gyration", cfg)
    t.columns("beta_MHz", "omega_m_MHz", "phi_deg", "residual_MHz", "lambda12_re", "lambda12_im", "lambda21_re", "lambda21_im")
    for points in found:
        for g in points:
            t.row(g.beta, g.omega_m, g.phi_deg, g.residual, g.lambda12.real, g.lambda12.imag, g.lambda21.real, g.lambda21.imag)
    return t


def cmd_isolation(cfg: RunConfig, threads: int) -> Table:
    icfg = _need(cfg.isolation, "isolation")
    chain, trunc = cfg.device.build(), cfg.truncation.build()
    scan = landscape.isolation_scan(
        chain, icfg.beta, icfg.omega_m, deg_axis_to_rad(icfg.phi_deg), trunc, icfg.threshold_db, threads=threads
    )
    t = Table("isolation", cfg)
    t.note(f"max_contrast_dB={fmt(scan.max_contrast_db)} at phi_deg={fmt(_deg(scan.phi_at_max))}")
    t.note(f"width_above_{fmt(icfg.threshold_db)}dB_deg={fmt(_deg(scan.width_above))}")
    t.note(f"min_contrast_dB={fmt(scan.min_contrast_db)} at phi_deg={fmt(_deg(scan.phi_at_min))}")
    t.note(f"width_below_-{fmt(icfg.threshold_db)}dB_deg={fmt(_deg(scan.width_below))}")
    t.columns("phi_deg", "mag_contrast_dB", "phase_contrast_deg", "status")
    for p, m, ph, st in zip(icfg.phi_deg.values(), scan.mag_contrast_db, scan.phase_contrast, scan.status):
        t.row(p, m, _deg(ph), st)
    return t


def cmd_oracle(cfg: RunConfig, threads: int) -> Table:
    ocfg = _need(cfg.oracle, "oracle")
    chain, mod, trunc = cfg.device.build(), cfg.modulation.build(), cfg.truncation.build()
    settings = timedomain.TimeSettings(dt=ocfg.dt, settle_time=ocfg.settle_time, average_periods=ocfg.average_periods)
    report = timedomain.oracle_compare(chain, mod, ocfg.omega, trunc, settings, threads=threads)
    t = Table("oracle", cfg)
    t.note(f"max_rel_dev={fmt(report.max_rel_dev)}")
    t.columns("omega_MHz", "out_port", "in_port", "td_re", "td_im", "fd_re", "fd_im", "rel_dev")
    for r in report.rows:
        t.row(r.omega, r.out_port, r.drive_port, r.time_domain.real, r.time_domain.imag,
              r.frequency_domain.real, r.frequency_domain.imag, r.rel_dev)
    return t


def cmd_calibrate(cfg: RunConfig, threads: int) -> Table:
    ccfg = _need(cfg.calibrate, "calibrate")
    t = Table("calibrate", cfg)
    if ccfg.phi_offset is not None:
        phi0 = calib.estimate_phi_offset(ccfg.phi_offset.phi_deg, ccfg.phi_offset.contrast_db)
        t.note(f"phi_offset_deg={fmt(phi0)}")
    paths = [ccfg.fwd, ccfg.bwd, ccfg.ref_fwd, ccfg.ref_bwd]
    if all(p is not None for p in paths):
        traces = [calib.load_trace(p, ccfg.format) for p in paths]
        freq, mag = calib.deembed_magnitude(*traces)
        _, phase = calib.deembed_phase(*traces)
        t.columns("freq_MHz", "mag_contrast_dB", "phase_contrast_deg")
        for f, m, p in zip(freq, mag, phase):
            t.row(f, m, p)
    elif any(p is not None for p in paths):
        raise ConfigError("calibrate needs all four traces: fwd, bwd, ref_fwd, ref_bwd")
    elif ccfg.phi_offset is None:
        raise ConfigError("calibrate needs traces and/or a phi_offset block")
    return t


COMMANDS = {
    "spectrum": cmd_spectrum,
    "hn": cmd_hn,
    "alpha": cmd_alpha,
    "map": cmd_map,
    "contour": cmd_contour,
    "critical-beta": cmd_critical_beta,
    "gyration": cmd_gyration,
    "isolation": cmd_isolation,
    "oracle": cmd_oracle,
    "calibrate": cmd_calibrate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="stmchain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stmchain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--out", type=Path, help="output file (default: output.path or stdout)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (env STMCHAIN_THREADS)")
        p.add_argument("--truncation", help="sideband order P, or auto:tol")
        p.add_argument("--seed-params", choices=["table-s1"], help="use a built-in device preset")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. modulation.beta=26 (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.set)
        if args.truncation:
            tr = Truncation.parse(args.truncation)
            overrides += [f"truncation.mode={tr.mode}", f"truncation.P={tr.P}", f"truncation.tol={tr.tol}"]
        cfg = load_config(args.config, overrides, args.seed_params)
    except (ValidationError, ValueError, pydantic.ValidationError, OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    threads = args.threads if args.threads is not None else default_threads()
    try:
        table = COMMANDS[args.command](cfg, threads)
    except (ConfigError, ValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = table.render()
    out = args.out or (Path(cfg.output.path) if cfg.output.path else None)
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
