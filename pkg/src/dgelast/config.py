"""Key-value study configuration files.

Format: one ``key = value`` per line, ``#`` comments, blank lines
ignored.  Lists are comma separated.  Unknown keys are rejected so typos
fail loudly; the schema below is the reference for every key.
"""

import hashlib
from dataclasses import dataclass, field, fields


def _parse_bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: %r" % s)


def _parse_int_list(s):
    return [int(x) for x in s.split(",") if x.strip()]


def _parse_float_list(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _parse_optional_float(s):
    return None if s.lower() in ("auto", "none") else float(s)


# key -> parser; mirrors the StudyConfig fields
SCHEMA = {
    "kind": str,
    "case": str,
    "lam": float,
    "mu": float,
    "degrees": _parse_int_list,
    "mesh_sizes": _parse_int_list,
    "mesh_size": int,
    "degree": int,
    "estimator": str,
    "penalty_factor": float,
    "calibration": float,
    "tau_list": _parse_float_list,
    "final_time": float,
    "scenario": str,
    "time_difference_form": _parse_bool,
    "c_f_omega": _parse_optional_float,
    "solver_tol": float,
    "output": str,
    "seed": int,
    "threads": int,
    "quadrature_check": _parse_bool,
}


@dataclass
class StudyConfig:
    """Validated study settings; defaults match the acceptance runs."""

    kind: str = "stationary"            # stationary | transient
    case: str = "sincos"
    lam: float = 1.0
    mu: float = 1.0
    degrees: list = field(default_factory=lambda: [1, 2])
    mesh_sizes: list = field(default_factory=lambda: [4, 8, 16, 32])
    mesh_size: int = 32                 # transient fixed mesh
    degree: int = 2                     # transient degree
    estimator: str = "duality"          # duality | energy
    penalty_factor: float = 2.0         # alpha = factor * measured alpha_min
    calibration: float = 1.0
    tau_list: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    final_time: float = 1.0
    scenario: str = "constant"          # constant | refine-half | coarsen-half
    time_difference_form: bool = False
    c_f_omega: object = None            # None -> diam(domain)/pi
    solver_tol: float = 1e-10
    output: str = ""
    seed: int = 0
    threads: int = 1
    quadrature_check: bool = False

    def validate(self):
        if self.kind not in ("stationary", "transient"):
            raise ValueError("kind must be stationary or transient")
        if self.estimator not in ("duality", "energy"):
            raise ValueError("estimator must be duality or energy")
        if self.scenario not in ("constant", "refine-half", "coarsen-half"):
            raise ValueError("unknown scenario %r" % self.scenario)
        if self.penalty_factor < 1.0:
            raise ValueError("penalty_factor below 1 voids the coercivity "
                             "threshold")
        if any(n < 1 for n in self.mesh_sizes) or self.mesh_size < 1:
            raise ValueError("mesh sizes must be positive")
        if any(r < 1 for r in self.degrees) or self.degree < 1:
            raise ValueError("degrees must be at least 1")
        if self.final_time <= 0 or any(t <= 0 for t in self.tau_list):
            raise ValueError("nonpositive time parameters")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        return self

    def as_dict(self):
        out = {}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out

    def hash(self):
        payload = "\n".join("%s=%r" % (k, v)
                            for k, v in sorted(self.as_dict().items()))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def parse_config_file(path):
    raw = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected 'key = value'" % (path, lineno))
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA:
                raise ValueError("%s:%d: unknown key %r" % (path, lineno, key))
            if key in raw:
                raise ValueError("%s:%d: duplicate key %r" % (path, lineno, key))
            raw[key] = SCHEMA[key](value)
    return raw


def load_study_config(path, **overrides):
    values = parse_config_file(path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig(**values).validate()
