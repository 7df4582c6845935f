"""Command-line entry point.

    stochhyp <subcommand> --config FILE [--seed K] [--out DIR] [--threads N]

Exit codes: 0 success (including flagged-inconclusive estimates), 1 failed
selftest or unexpected error, 2 configuration error, 3 numerical blow-up.
Errors are also written as a JSON record to ``error.json`` in the output
directory and to stderr.  ``STOCHHYP_OUTPUT_DIR`` overrides the configured
output directory; ``--out`` overrides both.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .characteristics import (flow_invert, representation_lower_order, solution_flow, transport_solution,
                              write_flow_csv)
from .config import (SUBCOMMANDS, ConfigError, build_evolve_config, build_grid, build_h, build_problem,
                     initial_function, load_config, preset_kinks, with_defaults)
from .evolve import BlowUpError, energy_report, integrate_spde
from .grid import Field, sobolev_norm
from .microlocal import (WavefrontSet, detect_singularities, principal_coefficient, propagate_wavefront,
                         write_detections_csv, write_wavefront_csv)
from .noise import sample_brownian
from .stats import (McConfig, ldp_probe, malliavin_directional, malliavin_pointwise, nondegeneracy_check,
                    small_noise_study, support_probe, wz_convergence_study)
from .symbols import estimate_conditions

ENV_OUT = "STOCHHYP_OUTPUT_DIR"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


class Run:
    """Collects artifacts and manifest entries for one invocation."""

    def __init__(self, cfg: dict, out: Path, threads: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.files: list[Path] = []
        self.results: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def mc(self) -> McConfig:
        st = self.cfg["study"]
        return McConfig(num_paths=st["P"], seed=self.cfg["seed"], norm_index=st["norm_index"], threads=self.threads)

    def driver(self):
        pr, so = self.cfg["problem"], self.cfg["solver"]
        return sample_brownian(so["M"], pr["T"], self.cfg["seed"], self.cfg["study"]["path_index"])

    def finish(self):
        entries = {
            "package_version": __version__,
            "config": self.cfg,
            "config_hash": sio.content_hash(self.cfg),
            "seed_policy": "Philox substream (seed, path_index); study paths use index stream*2**32 + i",
            "results": self.results,
            "artifacts": {p.name: sio.sha256_file(p) for p in self.files},
        }
        sio.write_manifest(entries, self.out / "manifest.txt")


# -- subcommands --------------------------------------------------------------

def cmd_simulate(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    ec = build_evolve_config(cfg)
    path = run.driver()
    traj = integrate_spde(p, path, ec)
    stride = cfg["study"]["output_stride"]
    sio.write_trajectory_csv(traj, run.path("trajectory.csv"), stride=stride)
    sio.write_field_csv(traj.final, run.path("final_field.csv"))
    sio.write_path_csv(path, run.path("path.csv"))
    if traj.energy_log is not None and "quad_A" in traj.energy_log:
        sio.write_energy_csv(traj, run.path("energy.csv"))
        rep = energy_report(traj)
        run.results["energy_residual_max"] = float(np.max(np.abs(rep["residual"])))
    run.results["final_norm_s"] = float(traj.norms()[-1])
    run.results["initial_norm_s"] = float(traj.norms()[0])
    run.results["driver_fingerprint"] = traj.driver_fingerprint
    ref = _closed_form(cfg, p, path)
    if ref is not None:
        err = np.linalg.norm(traj.final.values - ref.values) / np.linalg.norm(ref.values)
        run.results["closed_form_rel_l2_error"] = float(err)


def _closed_form(cfg, p, path):
    """``u0(x + c w(T))`` for a constant-speed transport with no other terms."""
    a = cfg["problem"]["a"]
    if a is None or a.get("kind") not in ("transport", "symmetrized_transport") or a.get("a0") is not None:
        return None
    if cfg["problem"]["b"] is not None or cfg["problem"]["f"] is not None or cfg["problem"]["g"] is not None:
        return None
    alpha = a.get("alpha", 1.0)
    if not isinstance(alpha, (int, float)):
        return None
    fn = initial_function(cfg)
    if fn is None or cfg["solver"]["mollifier_eps"] is not None:
        return None
    shift = p.noise_scale * float(alpha) * path.values[-1]
    return Field(p.grid, np.broadcast_to(fn(p.grid.nodes + shift), (p.grid.num_points,)))


def _transport_coefficients(cfg, p):
    a = cfg["problem"]["a"]
    if a is None or a.get("kind") not in ("transport", "symmetrized_transport"):
        raise ConfigError("problem/a: characteristics need a transport-type symbol")
    if p.components != 1:
        raise ConfigError("characteristics apply to scalar problems only")
    sym = p.fam_a.at(0.0)
    alpha = p.noise_scale * principal_coefficient(sym)
    grid = p.grid
    # zeroth-order part: explicit a0 plus alpha'/2 for the symmetrised form
    a0 = np.zeros(grid.num_points, dtype=complex)
    for t in sym.terms:
        if np.all(t.mult == 1.0):
            a0 += t.coef[0, 0]
    if a["kind"] == "symmetrized_transport":
        dal = np.real(np.fft.ifft(1j * grid.frequencies * np.fft.fft(principal_coefficient(sym))))
        a0 += 0.5 * dal
    a0 = p.noise_scale * a0
    beta = None
    if p.fam_b is not None:
        beta = principal_coefficient(p.fam_b.at(0.0))
    return alpha, beta, a0


def cmd_characteristics(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    alpha, beta, a0 = _transport_coefficients(cfg, p)
    path = run.driver()
    M = cfg["solver"]["M"]
    sign = float(cfg["study"]["sign"])
    flow = solution_flow(p.grid, alpha, beta, path, M, sign=sign)
    t = float(cfg["study"]["t"])
    write_flow_csv(flow, run.path("flow.csv"), stride=cfg["study"]["output_stride"])
    u_char = transport_solution(p.u0, flow, t, initial_function(cfg))
    if np.any(np.abs(a0) > 0):
        if beta is not None:
            raise ConfigError("the lower-order representation is implemented without a drift symbol")
        u_char = representation_lower_order(p.u0, a0, alpha, path, t, M, sign=sign)
    sio.write_field_csv(u_char, run.path("characteristic_field.csv"))
    back = flow_invert(flow, t)
    run.results["max_inverse_displacement"] = float(np.max(np.abs(back - p.grid.nodes)))
    run.results["monotone"] = bool(flow.monotone)
    if p.homogeneous and abs(t - p.T) < 1e-12:
        traj = integrate_spde(p, path, build_evolve_config(cfg).replace(energy=False))
        ref = traj.final
        run.results["spectral_vs_characteristics_rel_l2"] = float(
            np.linalg.norm(ref.values - u_char.values) / np.linalg.norm(u_char.values))


def cmd_wavefront(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    alpha, beta, _ = _transport_coefficients(cfg, p)
    st = cfg["study"]
    L = p.grid.length
    kinks = preset_kinks(cfg["problem"]["u0"], L)
    wf0 = WavefrontSet.from_kinks(kinks)
    path = run.driver()
    M = cfg["solver"]["M"]
    sign = float(st["sign"])
    wf_t, traj = propagate_wavefront(wf0, alpha, beta, path, M, p.grid, sign=sign, record_every=st["record_every"])
    write_wavefront_csv(traj, run.path("wavefront.csv"))
    fn = initial_function(cfg)
    flow = solution_flow(p.grid, alpha, beta, path, M, sign=sign)
    tol = 2 * p.grid.dx
    rows, hits, spurious = [], 0, 0
    for i, t in enumerate(traj.times):
        u = transport_solution(p.u0, flow, float(t), fn)
        det = detect_singularities(u, st["window_width"], st["band_fraction"], st["rel_threshold"])
        rows += [(t, d) for d in det]
        pred = np.mod(traj.x[i], L)
        found = np.array([d.x for d in det])
        hits += int(found.size > 0 and all(_periodic_gap(x, found, L).min() <= tol for x in pred))
        spurious += int(any(_periodic_gap(d.x, pred, L).min() > tol for d in det))
    write_detections_csv(rows, run.path("detections.csv"))
    run.results["tracked_fraction"] = hits / len(traj.times)
    run.results["times_with_spurious_detections"] = spurious
    run.results["final_points"] = [[float(q.x), float(q.xi)] for q in wf_t.points]


def _periodic_gap(x, ys, L):
    d = np.abs(np.mod(np.asarray(ys) - x + L / 2, L) - L / 2)
    return np.atleast_1d(d)


def _write_convergence(run: Run, rep, name: str, xlabel: str):
    raw = run.path(f"{name}_per_path.csv")
    rows = [[i, float(a), float(rep.per_path[i, k])] for i in range(rep.per_path.shape[0])
            for k, a in enumerate(rep.abscissae)]
    sio.write_table_csv(["path", "abscissa", "sq_sup_error"], rows, raw)
    summ = run.path(f"{name}_summary.csv")
    sio.write_table_csv(rep.header(), rep.rows(), summ)
    sio.write_gnuplot(run.path(f"{name}.gp"), summ.name, 1, [2], xlabel, "E sup |error|^2",
                      logx=True, logy=True)
    run.results["fitted_slope"] = rep.fitted_slope
    run.results["errors"] = [float(e) for e in rep.errors]
    run.results["stderr"] = [float(e) for e in rep.stderr]
    run.results["excluded_paths"] = rep.excluded


def cmd_wong_zakai(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    rep = wz_convergence_study(p, cfg["study"]["ns"], build_evolve_config(cfg), run.mc())
    _write_convergence(run, rep, "wong_zakai", "n")


def cmd_small_noise(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    rep = small_noise_study(p, cfg["study"]["eps_list"], build_evolve_config(cfg), run.mc())
    _write_convergence(run, rep, "small_noise", "eps")
    run.results["extra_slopes"] = {f"s{k:g}": v["fitted_slope"] for k, v in rep.extra.items()}


def cmd_ldp(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    st = cfg["study"]
    h = build_h(st["h"], p.T, cfg["solver"]["M"])
    rep = ldp_probe(p, h, st["eta"], st["eps_list"], build_evolve_config(cfg), run.mc())
    sio.write_table_csv(rep.header(), rep.rows(), run.path("ldp_summary.csv"))
    run.results["action"] = rep.action
    run.results["overlap"] = [rep.overlap(k) for k in range(len(rep.eps))]


def cmd_support(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    st = cfg["study"]
    hs = [build_h(e, p.T, cfg["solver"]["M"]) for e in st["skeletons"]]
    rep = support_probe(p, hs, st["delta"], build_evolve_config(cfg), run.mc(), eta=st["eta"], ns=st["ns"])
    rows = [[i, int(n), float(rep.distances[i, k])] for i in range(rep.distances.shape[0])
            for k, n in enumerate(rep.ns)]
    sio.write_table_csv(["path", "n", "sup_distance"], rows, run.path("support_distances.csv"))
    crow = [[j, c["delta"], c["accepted"], c["frequency"], int(c["inconclusive"])]
            for j, row in enumerate(rep.conditional) for c in row]
    sio.write_table_csv(["skeleton", "delta", "accepted", "frequency", "inconclusive"], crow,
                        run.path("support_conditional.csv"))
    run.results["median_distance"] = [float(v) for v in rep.median_distance]
    run.results["unconditional_frequency"] = rep.unconditional
    run.results["inconclusive"] = rep.inconclusive


def cmd_malliavin(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    st = cfg["study"]
    ec = build_evolve_config(cfg).replace(energy=False)
    path = run.driver()
    d = malliavin_pointwise(p, path, st["theta"], st["t"], ec)
    sio.write_field_csv(d.data, run.path("malliavin_pointwise.csv"))
    run.results["pointwise_norm_s"] = sobolev_norm(d.data, p.s)
    if st["h"] is not None:
        h = build_h(st["h"], p.T, cfg["solver"]["M"])
        dh = malliavin_directional(p, path, h, st["t"], ec, stride=st["stride"])
        sio.write_field_csv(dh.data, run.path("malliavin_directional.csv"))
        run.results["directional_norm_s"] = sobolev_norm(dh.data, p.s)
    value, verdict = nondegeneracy_check(p, path, st["x_point"], st["t"], ec, threshold=st["threshold"])
    run.results["nondegeneracy_value"] = value
    run.results["nondegenerate"] = verdict


def cmd_check_conditions(run: Run):
    cfg = run.cfg
    p = build_problem(cfg)
    st = cfg["study"]
    diag = estimate_conditions(p.fam_a, p.fam_b, p.s, trials=st["trials"], seed=cfg["seed"],
                               dealias=cfg["solver"]["dealias"])
    th = st["thresholds"]
    table = []
    for key in ("A", "B", "L", "M"):
        val = getattr(diag, f"norm_{key}")
        table.append([key, float(val), float(th[key]), "pass" if val <= th[key] else "warn"])
    sio.write_table_csv(["operator", "norm_estimate", "threshold", "verdict"], table, run.path("conditions.csv"))
    for row in table:
        print(f"{row[0]:>2}  {row[1]:.6e}  (threshold {row[2]:.1e})  {row[3]}")
    run.results.update(diag.as_dict())
    run.results["verdict"] = "pass" if all(r[3] == "pass" for r in table) else "warn"


def cmd_selftest(run: Run):
    from .selftest import run_selftest
    rows = run_selftest()
    for name, ok, detail in rows:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    sio.write_table_csv(["check", "passed", "detail"], [[n, int(ok), d] for n, ok, d in rows],
                        run.path("selftest.csv"))
    run.results["passed"] = sum(ok for _, ok, _ in rows)
    run.results["failed"] = sum(not ok for _, ok, _ in rows)
    return EXIT_OK if run.results["failed"] == 0 else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "characteristics": cmd_characteristics,
    "wavefront": cmd_wavefront,
    "wong-zakai": cmd_wong_zakai,
    "small-noise": cmd_small_noise,
    "ldp": cmd_ldp,
    "support": cmd_support,
    "malliavin": cmd_malliavin,
    "check-conditions": cmd_check_conditions,
    "selftest": cmd_selftest,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochhyp", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON experiment file (optional for selftest)")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for path-level work")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def _error(out: Path | None, code: int, kind: str, message: str) -> int:
    rec = {"exit_code": code, "error": kind, "message": message}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    early = args.out or os.environ.get(ENV_OUT)
    out = Path(early) if early else None
    try:
        if args.config is None:
            if args.subcommand != "selftest":
                raise ConfigError("--config is required for this subcommand")
            raw = {"subcommand": "selftest"}
        else:
            raw = load_config(args.config)
        if raw["subcommand"] != args.subcommand:
            raise ConfigError(f"config is for {raw['subcommand']!r}, not {args.subcommand!r}")
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            raw["seed"] = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = with_defaults(raw)
        out = Path(args.out or os.environ.get(ENV_OUT) or cfg["output_dir"])
        cfg["output_dir"] = str(out)
        build_grid(cfg)
        run = Run(cfg, out, args.threads)
        code = COMMANDS[args.subcommand](run)
        run.finish()
        return EXIT_OK if code is None else code
    except ConfigError as exc:
        return _error(out, EXIT_CONFIG, "config", str(exc))
    except BlowUpError as exc:
        return _error(out, EXIT_BLOWUP, "blowup", str(exc))
    except Exception as exc:  # pragma: no cover - last-resort record
        traceback.print_exc()
        return _error(out, EXIT_FAIL, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
