"""Command line: ``synth``, ``recover``, ``verify`` and ``report``.

Exit codes: 0 success, 1 runtime failure or failed checks, 2 invalid input
(configuration, files, header/config mismatch), 3 phantom not admissible,
10 recovery finished with flagged steps.
"""

import argparse
import os
import sys
import time

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, InadmissiblePhantomError, ParseError, TomoMotionError
from .forward.jets import AnalyticJets, FiniteDifferenceJets
from .forward.measure import GridDetector, MeasurementSet, add_noise, measure, radial_points, synthesize
from .recovery.common import phi_candidates
from .recovery.estimators import recover_trajectory
from .recovery.result import RecoveryResult
from .report import build_report, json_text, sha256_bytes, write_atomic, write_report
from .verify import SCOPES, run_checks

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_PHANTOM, EXIT_FLAGGED = 0, 1, 2, 3, 10
DEFAULT_AZIMUTHS = 16
DEFAULT_SPACING = 0.25


class InputError(TomoMotionError):
    code = "input-mismatch"


def _log(msg):
    print(msg, file=sys.stderr)


def trajectory_document(traj, spec):
    return {"format_version": 1, "type": "trajectory", "motion": spec.to_dict(),
            "times": traj.times.tolist(), "R": traj.R.reshape(len(traj), 9).tolist(),
            "omega": traj.omega.tolist(), "omega_dot": traj.omega_dot.tolist(),
            "R_sha256": sha256_bytes(np.ascontiguousarray(traj.R).tobytes())}


def _load_config(args):
    cfg = ExperimentConfig.load(args.config)
    return cfg.override(seed=getattr(args, "seed", None), backend=getattr(args, "backend", None))


def _out_dir(args, cfg):
    return args.out if args.out else cfg.output_dir


def _sample_points(cfg, mcfg):
    """Stored frequencies: radial lines (analytic backend) or a Cartesian grid (fd backend)."""
    meas = cfg.measurement()
    if cfg.backend == "analytic":
        n = int(meas.get("azimuths", DEFAULT_AZIMUTHS))
        return {"k_points": radial_points(phi_candidates(n), mcfg.sample_array).reshape(-1, 2)}
    g = meas.get("grid", {})
    spacing = float(g.get("spacing", DEFAULT_SPACING))
    # the FD stencils reach 3 * dk3 beyond the outermost sample
    need = np.abs(mcfg.sample_array).max() + 30 * mcfg.dk
    extent = float(g.get("extent", need + spacing))
    if extent < need:
        raise ConfigError(f"{cfg.source}: measurement grid extent {extent:g} must be >= {need:g}")
    if mcfg.model == "DT" and np.sqrt(2) * extent > 0.9 * mcfg.k0:
        raise ConfigError(f"{cfg.source}: grid corners at {np.sqrt(2) * extent:.4g} leave the DT band "
                          f"0.9 k0 = {0.9 * mcfg.k0:.4g}")
    n = int(np.ceil(extent / spacing))
    axis = spacing * np.arange(-n, n + 1)
    return {"k_axes": (axis, axis.copy())}


def cmd_synth(args):
    cfg = _load_config(args)
    mcfg = cfg.model_config()
    ph = cfg.phantom()
    spec = cfg.motion_spec()
    traj = spec.build()
    out = _out_dir(args, cfg)
    ms = synthesize(ph, traj, mcfg, provenance={"config_sha256": cfg.hash(), "seed": cfg.seed},
                    **_sample_points(cfg, mcfg))
    if cfg.noise_level > 0:
        ms = add_noise(ms, cfg.noise_level, cfg.seed)
    os.makedirs(out, exist_ok=True)
    arts = []
    h = write_atomic(os.path.join(out, "phantom.json"), json_text(ph.to_dict()))
    arts.append({"name": "phantom", "path": "phantom.json", "sha256": h})
    h = write_atomic(os.path.join(out, "trajectory.json"), json_text(trajectory_document(traj, spec)))
    arts.append({"name": "trajectory", "path": "trajectory.json", "sha256": h})
    hp = write_atomic(os.path.join(out, "measurements.bin"), ms.payload_bytes())
    hh = write_atomic(os.path.join(out, "measurements.bin.json"), json_text(ms.header()))
    arts.append({"name": "measurements", "path": "measurements.bin", "sha256": hp,
                 "header": "measurements.bin.json", "header_sha256": hh})
    manifest = {"format_version": 1, "type": "manifest", "name": cfg.name, "seed": cfg.seed,
                "config_sha256": cfg.hash(), "model": mcfg.model, "backend": cfg.backend, "artifacts": arts}
    write_atomic(os.path.join(out, "manifest.json"), json_text(manifest))
    _log(f"synth: wrote {len(arts)} artifacts to {out}")
    return EXIT_OK


def _check_header(ms, cfg, mcfg, truth):
    if ms.model != mcfg.model:
        raise InputError(f"measurement model {ms.model} does not match config model {mcfg.model}")
    if mcfg.model == "DT" and (ms.k0 is None or abs(ms.k0 - mcfg.k0) > 1e-12 * mcfg.k0):
        raise InputError(f"measurement k0 {ms.k0} does not match config k0 {mcfg.k0}")
    if ms.times.shape != truth.times.shape or np.abs(ms.times - truth.times).max() > 1e-12:
        raise InputError("measurement time grid does not match the configured motion")
    want = sha256_bytes(np.ascontiguousarray(truth.R).tobytes())
    got = ms.provenance.get("trajectory_sha256")
    if got is not None and got != want:
        raise InputError("measurements were synthesized from a different motion than the config describes")


def _jets(cfg, mcfg, scfg, ms, truth):
    if cfg.backend == "analytic":
        ph = cfg.phantom()
        got = ms.provenance.get("phantom_sha256")
        if got is not None and got != ph.content_hash():
            raise InputError("measurements were synthesized from a different phantom than the config describes")
        if ms.noise:
            _log("recover: analytic backend ignores the stored noise; use --backend fd to recover from noisy data")
        else:
            # spot check that the stored data are the configured forward model
            idx = np.linspace(0, len(ms.k_points) - 1, min(8, len(ms.k_points))).astype(int)
            want = measure(ph, truth, mcfg, 0, ms.k_points[idx])
            if np.abs(ms.values[0, idx] - want).max() > 1e-9 * max(1.0, np.abs(want).max()):
                raise InputError("stored measurements disagree with the configured forward model")
        return AnalyticJets(ph, truth, mcfg)
    if ms.k_axes is None:
        raise InputError("fd backend needs measurements on a Cartesian k grid (synthesize with --backend fd)")
    return FiniteDifferenceJets(GridDetector(ms), dk=mcfg.dk, one_sided=scfg.one_sided, cfg=mcfg)


def _provenance(cfg, ms):
    p = {"config_sha256": cfg.hash(), "measurement_sha256": ms.payload_hash(), "seed": cfg.seed,
         "backend": cfg.backend}
    for k in ("phantom_sha256", "trajectory_sha256"):
        if k in ms.provenance:
            p[k] = ms.provenance[k]
    return p


def cmd_recover(args):
    cfg = _load_config(args)
    mcfg, scfg = cfg.model_config(), cfg.solver_config()
    out = _out_dir(args, cfg)
    path = args.measurements or os.path.join(out, "measurements.bin")
    ms = MeasurementSet.load(path)
    truth = cfg.motion_spec().build()
    _check_header(ms, cfg, mcfg, truth)
    jets = _jets(cfg, mcfg, scfg, ms, truth)
    t0 = time.perf_counter()
    res = recover_trajectory(jets, scfg, mcfg.model, truth=truth, substeps=cfg.substeps, n_jobs=args.threads)
    elapsed = time.perf_counter() - t0
    os.makedirs(out, exist_ok=True)
    write_atomic(os.path.join(out, "result.json"), json_text(res.to_dict()))
    rec = build_report(res, cfg.name, truth, _provenance(cfg, ms))
    write_report(rec, out, cfg.formats)
    s = rec.summary
    _log(f"recover: {s['n_steps']} steps, {s['n_flagged']} flagged, max omega error {s['max_omega_error']}, "
         f"equivalence distance {s['equivalence_distance']} ({elapsed:.2f} s)")
    return EXIT_FLAGGED if res.flagged_steps else EXIT_OK


def cmd_verify(args):
    results = run_checks(args.scope)
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: {r['detail']}")
    doc = {"scope": args.scope, "passed": all(r["passed"] for r in results),
           "checks": [{k: r[k] for k in ("name", "passed", "detail")} for r in results]}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_atomic(os.path.join(args.out, "verify.json"), json_text(doc))
    return EXIT_OK if doc["passed"] else EXIT_FAIL


def cmd_report(args):
    res = RecoveryResult.load(args.result)
    truth, name, prov = None, os.path.splitext(os.path.basename(args.result))[0], {}
    if args.config:
        cfg = _load_config(args)
        truth, name, prov = cfg.motion_spec().build(), cfg.name, {"config_sha256": cfg.hash()}
        if len(truth) != len(res.times) or np.abs(truth.times - res.times).max() > 1e-12:
            raise InputError("result time grid does not match the configured motion")
        if res.trajectory is not None:
            res.compare(truth)
    out = args.out or os.path.dirname(os.path.abspath(args.result))
    rec = build_report(res, name, truth, prov)
    write_report(rec, out, ("json", "csv", "md"))
    _log(f"report: wrote summary for {len(res.steps)} steps to {out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tomomotion", description="Rotational motion recovery experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="experiment YAML file")
        sp.add_argument("--out", help="output directory (default: output.dir of the config)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--backend", choices=("analytic", "fd"), help="override the derivative backend")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for per-step solves")

    sp = sub.add_parser("synth", help="generate phantom, trajectory and measurements")
    common(sp)
    sp.set_defaults(func=cmd_synth)
    sp = sub.add_parser("recover", help="recover the motion from measurements")
    sp.add_argument("measurements", nargs="?", help="measurement payload (default: <out>/measurements.bin)")
    common(sp)
    sp.set_defaults(func=cmd_recover)
    sp = sub.add_parser("verify", help="run the invariant checks")
    sp.add_argument("--scope", choices=SCOPES + ("all",), default="all")
    sp.add_argument("scope_arg", nargs="?", choices=SCOPES + ("all",), help="scope (positional form)")
    sp.add_argument("--out", help="directory for verify.json")
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=cmd_verify)
    sp = sub.add_parser("report", help="rebuild report files from a result file")
    sp.add_argument("--result", required=True)
    common(sp, config_required=False)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "scope_arg", None):
        args.scope = args.scope_arg
    if getattr(args, "threads", 1) is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, ParseError, InputError) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT
    except InadmissiblePhantomError as exc:
        _log(f"error: {exc}")
        return EXIT_PHANTOM
    except TomoMotionError as exc:
        _log(f"error: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
