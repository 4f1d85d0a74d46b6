"""Experiment configuration: YAML documents validated against a JSON schema.

Validation errors name the file and line of the offending entry.
"""

import hashlib
import os
from dataclasses import dataclass

import jsonschema
import numpy as np
import yaml

from .errors import ConfigError, InadmissiblePhantomError, InvalidArgumentError, TomoMotionError
from .forward.measure import ModelConfig
from .motions import MotionSpec
from .phantoms.pointsets import (
    balance_weights,
    dt_pointset_certificate,
    generate_asymmetric_pointset,
    pb_pointset_certificate,
)
from .phantoms.spectral import BlobProfile, Phantom, load_phantom
from .phantoms.symmetry import mirror_symmetrize
from .recovery.common import SolverConfig

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_PROFILE = {"oneOf": [_NUM, {"type": "object", "additionalProperties": False, "properties": {
    "poly": {"type": "array", "items": _NUM},
    "sin": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}}}}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "seed", "model", "phantom", "motion"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "seed": {"type": "integer", "minimum": 0},
        "model": {
            "type": "object", "additionalProperties": False, "required": ["type", "samples"],
            "properties": {
                "type": {"enum": ["DT", "PB"]},
                "k0": {"type": "number", "exclusiveMinimum": 0},
                "samples": {"oneOf": [
                    {"type": "array", "items": _NUM, "minItems": 2},
                    {"type": "object", "additionalProperties": False, "required": ["start", "stop", "num"],
                     "properties": {"start": _NUM, "stop": _NUM, "num": {"type": "integer", "minimum": 2}}}]},
                "backend": {"enum": ["analytic", "fd"]},
                "dk": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "phantom": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "file": {"type": "string"},
                "generate": {"type": "object", "additionalProperties": False, "required": ["n"], "properties": {
                    "n": {"type": "integer", "minimum": 1}, "placement": {"enum": ["ball", "shell"]},
                    "r_min": _NUM, "r_max": _NUM, "eps": _NUM}},
                "points": {"type": "array", "items": _VEC3},
                "weights": {"type": "array", "items": _NUM},
                "profile": {"type": "object", "additionalProperties": False, "required": ["kind", "size"],
                            "properties": {"kind": {"enum": ["gaussian", "ball"]},
                                           "size": {"type": "number", "exclusiveMinimum": 0}}},
                "support_radius": {"type": "number", "exclusiveMinimum": 0},
                "mirror_normal": _VEC3,
                "require_certificate": {"type": "boolean"},
            },
            "oneOf": [{"required": ["file"]}, {"required": ["generate"]}, {"required": ["points"]}],
        },
        "motion": {
            "type": "object", "additionalProperties": False, "required": ["kind", "params"],
            "properties": {
                "kind": {"enum": ["analytic-omega", "rodrigues-composite", "sampled"]},
                "params": {"type": "object", "properties": {
                    "omega": {}, "times": {"type": "array", "items": _NUM},
                    "factors": {"type": "array", "items": {
                        "type": "object", "additionalProperties": False, "required": ["axis", "angle"],
                        "properties": {"axis": _VEC3, "angle": _PROFILE}}}},
                    "additionalProperties": False},
                "t_start": _NUM, "t_end": _NUM,
                "n_steps": {"type": "integer", "minimum": 2},
                "substeps": {"type": "integer", "minimum": 1},
            },
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "phi_grid": {"type": "integer", "minimum": 8},
                "refine_iters": {"type": "integer", "minimum": 1},
                "residual_tol": {"type": "number", "exclusiveMinimum": 0},
                "ambiguity_ratio": {"type": "number", "exclusiveMinimum": 1},
                "condition_max": {"type": "number", "exclusiveMinimum": 0},
                "sanity_bound": {"type": "number", "exclusiveMinimum": 0},
                "one_sided": {"type": "boolean"},
                "substeps": {"type": "integer", "minimum": 1},
            },
        },
        "noise": {"type": "object", "additionalProperties": False,
                  "properties": {"level": {"type": "number", "minimum": 0}}},
        "measurement": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "azimuths": {"type": "integer", "minimum": 1},
                "grid": {"type": "object", "additionalProperties": False, "required": ["extent", "spacing"],
                         "properties": {"extent": {"type": "number", "exclusiveMinimum": 0},
                                        "spacing": {"type": "number", "exclusiveMinimum": 0}}},
            },
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"dir": {"type": "string"},
                           "formats": {"type": "array", "items": {"enum": ["json", "csv", "md"]}}},
        },
    },
}


def _node_line(root, path):
    """1-based line of the YAML node at ``path`` (deepest existing node)."""
    node = root
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
    return node.start_mark.line + 1


def _best_error(errors):
    # deepest error first, so oneOf failures point at the inner entry
    return max(errors, key=lambda e: (len(e.absolute_path), -len(e.context or ())))


def parse_config_text(text, source="<config>"):
    """Parsed and schema-checked document; raises :class:`ConfigError` with ``source:line:``."""
    try:
        root = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError(f"{source}:{line}: YAML syntax error: {exc.problem}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}:1: configuration must be a mapping")
    errors = list(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc))
    if errors:
        err = _best_error(errors)
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{source}:{_node_line(root, err.absolute_path)}: {where}: {err.message}")
    return doc


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``base_dir`` resolves relative file references."""

    doc: dict
    source: str = "<config>"
    base_dir: str = "."

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}:1: cannot read configuration: {exc}") from exc
        cfg = cls(parse_config_text(text, str(path)), str(path), os.path.dirname(os.path.abspath(path)))
        cfg._check_files()
        return cfg

    @classmethod
    def from_text(cls, text, source="<config>", base_dir="."):
        cfg = cls(parse_config_text(text, source), source, base_dir)
        cfg._check_files()
        return cfg

    def _check_files(self):
        f = self.doc["phantom"].get("file")
        if f is not None and not os.path.exists(self._resolve(f)):
            raise ConfigError(f"{self.source}: phantom file {f!r} does not exist")

    def _resolve(self, p):
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def override(self, seed=None, backend=None):
        if seed is not None:
            if int(seed) < 0:
                raise ConfigError("--seed must be nonnegative")
            self.doc["seed"] = int(seed)
        if backend is not None:
            self.doc["model"]["backend"] = backend
        return self

    @property
    def name(self):
        return self.doc["name"]

    @property
    def seed(self):
        return int(self.doc["seed"])

    @property
    def backend(self):
        return self.doc["model"].get("backend", "analytic")

    @property
    def noise_level(self):
        return float(self.doc.get("noise", {}).get("level", 0.0))

    @property
    def output_dir(self):
        return self.doc.get("output", {}).get("dir", "out")

    @property
    def formats(self):
        return tuple(self.doc.get("output", {}).get("formats", ("json", "csv", "md")))

    def hash(self):
        return hashlib.sha256(yaml.safe_dump(self.doc, sort_keys=True).encode()).hexdigest()

    def model_config(self):
        m = self.doc["model"]
        s = m["samples"]
        samples = np.linspace(s["start"], s["stop"], s["num"]) if isinstance(s, dict) else np.asarray(s)
        try:
            return ModelConfig(m["type"], k0=m.get("k0"), samples=samples, backend=self.backend,
                               dk=m.get("dk", 1e-3))
        except InvalidArgumentError as exc:
            raise ConfigError(f"{self.source}: model: {exc}") from exc

    def solver_config(self):
        s = {k: v for k, v in self.doc.get("solver", {}).items() if k != "substeps"}
        try:
            return SolverConfig.for_backend(self.backend, **s)
        except InvalidArgumentError as exc:
            raise ConfigError(f"{self.source}: solver: {exc}") from exc

    @property
    def substeps(self):
        return int(self.doc.get("solver", {}).get("substeps", 4))

    def motion_spec(self):
        d = dict(self.doc["motion"])
        try:
            return MotionSpec.from_dict(d)
        except InvalidArgumentError as exc:
            raise ConfigError(f"{self.source}: motion: {exc}") from exc

    def measurement(self):
        return self.doc.get("measurement", {})

    def phantom(self):
        """Build the phantom and check it is admissible for the model.

        Raises :class:`InadmissiblePhantomError` (or the certificate's own
        error such as too-few-points) when it is not.
        """
        p = self.doc["phantom"]
        model = self.doc["model"]["type"]
        try:
            if "file" in p:
                ph = load_phantom(self._resolve(p["file"]))
                P = np.asarray(ph.points)
            else:
                if "generate" in p:
                    g = p["generate"]
                    kw = {k: g[k] for k in ("placement", "r_min", "r_max", "eps") if k in g}
                    P = np.asarray(generate_asymmetric_pointset(g["n"], seed=self.seed, **kw).points)
                else:
                    P = np.asarray(p["points"], dtype=float)
                w = np.asarray(p["weights"], dtype=float) if "weights" in p else None
                if w is None and len(P) >= 3:
                    w = balance_weights(P)
                prof = BlobProfile(**p.get("profile", {"kind": "gaussian", "size": 0.08}))
                if p.get("require_certificate", True):
                    self._certify(P, model)
                ph = Phantom(P, w if w is not None else np.ones(len(P)), prof, p.get("support_radius", 1.0))
            if "file" in p and p.get("require_certificate", True):
                self._certify(P, model)
            if "mirror_normal" in p:
                n = np.asarray(p["mirror_normal"], dtype=float)
                ph = mirror_symmetrize(ph, n / np.linalg.norm(n))
            return ph
        except ConfigError:
            raise
        except TomoMotionError as exc:
            raise _as_inadmissible(exc) from exc

    @staticmethod
    def _certify(P, model):
        ok = dt_pointset_certificate(P) if model == "DT" else pb_pointset_certificate(P)
        if not ok:
            raise InadmissiblePhantomError(f"point set fails the {model} asymmetry certificate")


def _as_inadmissible(exc):
    if isinstance(exc, InadmissiblePhantomError):
        return exc
    err = InadmissiblePhantomError(*exc.args)
    err.code = exc.code
    return err


def example_config(name):
    """Path of a shipped example configuration (``dt_example``, ``pb_example``, ...)."""
    from importlib.resources import files
    path = files("tomomotion") / "data" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"no shipped example named {name!r}")
    return str(path)
