"""Per-step report rows, summaries and atomic artifact writes."""

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass

import numpy as np

STEP_COLUMNS = (
    "step", "t",
    "omega_hat_x", "omega_hat_y", "omega_hat_z",
    "omega_true_x", "omega_true_y", "omega_true_z",
    "omega_error", "residual", "ambiguity", "condition", "ratio", "phi", "zeta", "rho",
)
PROFILE_COLUMNS = ("step", "phi", "residual")


def sha256_bytes(b):
    return hashlib.sha256(b).hexdigest()


def sha256_file(path):
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


def write_atomic(path, data):
    """Write ``data`` (bytes or str) to ``path.partial`` then rename into place."""
    if isinstance(data, str):
        data = data.encode()
    tmp = str(path) + ".partial"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return sha256_bytes(data)


def json_text(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _fmt(x):
    if isinstance(x, str):
        return x
    x = float(x)
    return repr(x) if np.isfinite(x) else ("nan" if np.isnan(x) else ("inf" if x > 0 else "-inf"))


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


@dataclass
class ReportRecord:
    """Per-step rows, the summary derived from them and residual-vs-azimuth profiles."""

    rows: list
    summary: dict
    profiles: list

    def steps_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) if c not in ("step",) else r[c] for c in STEP_COLUMNS])
        return buf.getvalue()

    def profiles_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS)
        for r in self.profiles:
            w.writerow([r[0], _fmt(r[1]), _fmt(r[2])])
        return buf.getvalue()

    def markdown(self):
        s = self.summary
        lines = [f"# Recovery report: {s['name']}", "",
                 f"- model: {s['model']}", f"- steps: {s['n_steps']} ({s['n_flagged']} flagged)",
                 f"- max omega error: {s['max_omega_error']}", f"- mean omega error: {s['mean_omega_error']}",
                 f"- max residual: {s['max_residual']}", f"- equivalence distance: {s['equivalence_distance']}",
                 f"- branch: {s['branch']}", f"- status: {s['status']}", "", "## Provenance", ""]
        lines += [f"- {k}: {v}" for k, v in sorted(s["provenance"].items())]
        return "\n".join(lines) + "\n"


def step_rows(result, truth=None):
    rows = []
    for i, (t, s) in enumerate(zip(result.times, result.steps)):
        w = np.asarray(s.omega_hat, dtype=float)
        if truth is not None:
            ref = truth.omega[i] if result.branch != "sigma" else truth.omega[i] * np.array([-1.0, -1.0, 1.0])
            err = float(np.linalg.norm(w - ref))
        else:
            ref, err = np.full(3, np.nan), np.nan
        rows.append({"step": i, "t": float(t),
                     "omega_hat_x": w[0], "omega_hat_y": w[1], "omega_hat_z": w[2],
                     "omega_true_x": ref[0], "omega_true_y": ref[1], "omega_true_z": ref[2],
                     "omega_error": err, "residual": float(s.residual), "ambiguity": s.ambiguity,
                     "condition": float(s.condition), "ratio": float(s.ratio),
                     "phi": float(s.phi), "zeta": float(s.zeta), "rho": float(s.rho)})
    return rows


def summarize(rows, name, model, equivalence_distance=None, branch=None, provenance=None):
    """Summary computed from per-step rows only (plus trajectory-level metrics)."""
    err = np.array([r["omega_error"] for r in rows], dtype=float)
    res = np.array([r["residual"] for r in rows], dtype=float)
    flagged = [r["step"] for r in rows if r["ambiguity"] != "unique"]
    fe = err[np.isfinite(err)]
    return {
        "name": name,
        "model": model,
        "n_steps": len(rows),
        "n_flagged": len(flagged),
        "flagged_steps": flagged,
        "ambiguities": sorted({r["ambiguity"] for r in rows}),
        "max_omega_error": _finite_or_none(fe.max()) if fe.size else None,
        "mean_omega_error": _finite_or_none(fe.mean()) if fe.size else None,
        "max_residual": _finite_or_none(np.nanmax(res)) if np.isfinite(res).any() else None,
        "mean_residual": _finite_or_none(np.nanmean(res)) if np.isfinite(res).any() else None,
        "equivalence_distance": None if equivalence_distance is None else _finite_or_none(equivalence_distance),
        "branch": branch,
        "status": "flagged" if flagged else "unique",
        "provenance": dict(provenance or {}),
    }


def build_report(result, name, truth=None, provenance=None):
    rows = step_rows(result, truth)
    summary = summarize(rows, name, result.model, result.equivalence_distance, result.branch, provenance)
    profiles = []
    for i, s in enumerate(result.steps):
        if s.profile is None:
            continue
        phis, r = s.profile
        profiles += [(i, float(p), float(v)) for p, v in zip(phis, r)]
    return ReportRecord(rows, summary, profiles)


def write_report(rec, out_dir, formats=("json", "csv", "md")):
    """Write the report files; returns ``{filename: sha256}``."""
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    if "json" in formats:
        written["summary.json"] = write_atomic(os.path.join(out_dir, "summary.json"), json_text(rec.summary))
    if "csv" in formats:
        written["steps.csv"] = write_atomic(os.path.join(out_dir, "steps.csv"), rec.steps_csv())
        if rec.profiles:
            written["profiles.csv"] = write_atomic(os.path.join(out_dir, "profiles.csv"), rec.profiles_csv())
    if "md" in formats:
        written["summary.md"] = write_atomic(os.path.join(out_dir, "summary.md"), rec.markdown())
    return written
