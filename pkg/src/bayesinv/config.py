"""Run configuration: JSON file, ``BAYESINV_*`` environment overrides, validation, hashing."""

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from .basis import L_MAX, QUADRATURES
from .selection import EVIDENCE_MODES

ENV_PREFIX = "BAYESINV_"
ALGORITHMS = ("joint1", "joint2", "marginal")
PROBLEMS = ("synthetic", "fermi")

# noise-free form-factor data: the noise prior is centred on precision 1e20
# (sigma ~ 1e-10, the forward-model accuracy), and interpolating 15 points
# needs order 15, hence k_max = 16 since p(k_max) = 0
PROBLEM_DEFAULTS = {
    "synthetic": {},
    "fermi": {"k_max": 16, "alpha1": 1.0, "beta1": 1e-20},
}

# fields that do not change results and are left out of the config hash
_UNHASHED = {"out"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "synthetic"
    N: int = 100
    R_c: float = 8.0
    m: int = 20
    k_max: int = 12
    l_set: list = field(default_factory=lambda: list(range(1, L_MAX + 1)))
    quadrature: str = "rectangle"
    alpha1: float = 2.0
    beta1: float = 1.0
    alpha2: float = 2.0
    beta2: float = 1.0
    sigma: float = None
    snr: float = None
    n_phi: int = 64
    n_psi: int = 64
    seed: int = 0
    algorithm: str = "marginal"
    evidence_mode: str = "paper-mc"
    order_prior: bool = True
    true_l: int = 1
    true_k: int = 6
    x_gen: object = None
    fermi_Z: float = 6.0
    fermi_A: float = 12.0
    fermi_d: float = 0.626
    fermi_R: float = None
    q_list: list = None
    lambda0: float = 1.0
    max_iter: int = 200
    tol: float = 1e-8
    out: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        def integer(name, lo):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= lo,
                 f"{name} must be an integer >= {lo}, got {v!r}")

        def positive(name, optional=False):
            v = getattr(self, name)
            if optional and v is None:
                return
            need(isinstance(v, (int, float)) and not isinstance(v, bool)
                 and math.isfinite(v) and v > 0, f"{name} must be a positive number, got {v!r}")

        need(self.problem in PROBLEMS, f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        need(self.algorithm in ALGORITHMS,
             f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        need(self.evidence_mode in EVIDENCE_MODES,
             f"evidence_mode must be one of {EVIDENCE_MODES}, got {self.evidence_mode!r}")
        need(self.quadrature in QUADRATURES,
             f"quadrature must be one of {QUADRATURES}, got {self.quadrature!r}")
        for name, lo in (("N", 1), ("m", 1), ("k_max", 2), ("n_phi", 1), ("n_psi", 1),
                         ("seed", 0), ("true_l", 1), ("true_k", 1), ("max_iter", 1)):
            integer(name, lo)
        for name in ("R_c", "alpha1", "beta1", "alpha2", "beta2", "fermi_Z", "fermi_A",
                     "fermi_d", "lambda0", "tol"):
            positive(name)
        positive("fermi_R", optional=True)
        positive("snr", optional=True)
        if self.sigma is not None:
            need(isinstance(self.sigma, (int, float)) and self.sigma >= 0,
                 f"sigma must be >= 0, got {self.sigma!r}")
        need(isinstance(self.l_set, list) and len(self.l_set) > 0, "l_set must be a nonempty list")
        need(all(isinstance(l, int) and 1 <= l <= L_MAX for l in self.l_set),
             f"l_set entries must be family indices in 1..{L_MAX}")
        need(len(set(self.l_set)) == len(self.l_set), "l_set has duplicate families")
        need(self.true_l <= L_MAX, f"true_l must be in 1..{L_MAX}")
        need(self.true_k <= self.k_max, "true_k must not exceed k_max")
        need(isinstance(self.order_prior, bool), "order_prior must be true or false")
        if self.x_gen is not None:
            need(self.x_gen == "ones" or (isinstance(self.x_gen, list)
                                          and len(self.x_gen) == self.true_k),
                 "x_gen must be null, \"ones\" or a list of true_k numbers")
        if self.q_list is not None:
            need(isinstance(self.q_list, list) and len(self.q_list) > 0, "q_list must be a list")
            need(all(q > 0 for q in self.q_list)
                 and all(b > a for a, b in zip(self.q_list, self.q_list[1:])),
                 "q_list must be strictly positive and increasing")
        need(isinstance(self.out, str) and self.out, "out must be a path")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        problem = data.get("problem", "synthetic")
        if problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {problem!r}")
        merged = {**PROBLEM_DEFAULTS[problem], **data}
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return RunConfig.from_dict({**self.to_dict(), **changes})

    def config_hash(self):
        payload = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        # 2 and 2.0 are the same setting for a float field
        for f in dataclasses.fields(self):
            v = payload.get(f.name)
            if f.type is float and isinstance(v, int) and not isinstance(v, bool):
                payload[f.name] = float(v)
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def env_overrides(environ=None):
    """Config values from ``BAYESINV_<FIELD>`` variables, JSON-decoded when possible."""
    environ = os.environ if environ is None else environ
    names = {f.name.upper(): f.name for f in dataclasses.fields(RunConfig)}
    out = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = names.get(key[len(ENV_PREFIX):])
        if name is None:
            continue
        try:
            out[name] = json.loads(raw)
        except json.JSONDecodeError:
            out[name] = raw
    return out


def load_config(path=None, overrides=None, environ=None):
    """Build a config from an optional JSON file, then env vars, then explicit overrides."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    data.update(env_overrides(environ))
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_dict(data)
