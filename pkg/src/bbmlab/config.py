"""Experiment configuration files (YAML, schema version 1).

A file holds the shared keys ``experiment``, ``seed``, ``out``, ``law``,
``checkpoint_step`` and ``prune``, plus one optional section per
subcommand. Unknown keys anywhere are rejected. Example::

    version: 1
    experiment: tails
    seed: 7
    prune: {window: 6.0}
    tails: {t: 30.0, replicas: 20000}
"""

from dataclasses import asdict, dataclass, field, fields

import yaml

from .engine import DEFAULT_CAP, DEFAULT_CHECKPOINT_STEP, OffspringLaw, PruneConfig
from .errors import ConfigError, ParameterError, ScheduleInfeasibleError
from .kpp import Grid1D

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "ergodic", "tails", "kpp", "corr", "localize")


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _positive(where, **vals):
    for k, v in vals.items():
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"{where}.{k} must be positive, got {v!r}")


def _count(where, **vals):
    for k, v in vals.items():
        if not (isinstance(v, int) and not isinstance(v, bool) and v >= 1):
            raise ConfigError(f"{where}.{k} must be a positive integer, got {v!r}")


def _grid(where, spec):
    if not (isinstance(spec, (list, tuple)) and len(spec) == 3):
        raise ConfigError(f"{where} must be [start, stop, count]")
    lo, hi, n = spec
    if not (hi > lo and isinstance(n, int) and n >= 2):
        raise ConfigError(f"{where} must have stop > start and count >= 2")


# The engine default window keeps populations past the hard cap for t >~ 27,
# so study configs start from a narrower window; at t = 30 its M(t) law is
# within 0.05 (sup distance) of the PDE solution.
STUDY_WINDOW = 6.0


@dataclass
class PruneSection:
    window: float = STUDY_WINDOW
    cap: int = DEFAULT_CAP
    enabled: bool = True
    gamma: float = 1.0

    def build(self):
        try:
            return PruneConfig(window=self.window, cap=int(self.cap), enabled=self.enabled, gamma=self.gamma)
        except ParameterError as exc:
            raise ConfigError(f"prune: {exc}") from None


@dataclass
class SimulateSection:
    t: float = 5.0
    replicas: int = 1000
    series_step: float = 1.0

    def validate(self):
        _positive("simulate", t=self.t, series_step=self.series_step)
        _count("simulate", replicas=self.replicas)


@dataclass
class ErgodicSection:
    T: float = 60.0
    epsilon: float = 0.2
    R_T: float = None
    delta: float = None
    window: list = field(default_factory=lambda: [-1.0, 2.0])
    x_grid: list = field(default_factory=lambda: [-3.0, 3.0, 121])
    C: float = None
    kpp_T: float = 40.0

    def validate(self):
        _positive("ergodic", T=self.T, kpp_T=self.kpp_T)
        if not 0 < self.epsilon < 1:
            raise ConfigError("ergodic.epsilon must lie in (0, 1)")
        d, D = self.window
        if not d < D:
            raise ConfigError("ergodic.window needs d < D")
        _grid("ergodic.x_grid", self.x_grid)
        if self.C is not None:
            _positive("ergodic", C=self.C)
        if self.R_T is not None and self.delta is not None:
            raise ConfigError("ergodic: give R_T or delta, not both")
        if self.R_T is not None and not 0 < self.R_T <= self.epsilon * self.T:
            raise ScheduleInfeasibleError("ergodic.R_T must lie in (0, epsilon*T]")


@dataclass
class TailsSection:
    t: float = 30.0
    replicas: int = 2000
    x_grid: list = field(default_factory=lambda: [-2.0, 5.0, 29])
    fit_range: list = field(default_factory=lambda: [1.5, 4.0])
    step: float = 1.0

    def validate(self):
        _positive("tails", t=self.t, step=self.step)
        _count("tails", replicas=self.replicas)
        if self.replicas < 1000:
            raise ConfigError("tails.replicas must be at least 1000")
        _grid("tails.x_grid", self.x_grid)


@dataclass
class KppSection:
    T: float = 40.0
    dx: float = 0.05
    dt: float = 0.001
    x_min: float = -45.0
    x_max: float = 35.0
    record_every: float = 0.05
    fit_window: list = field(default_factory=lambda: [20.0, 40.0])
    profile_times: list = field(default_factory=lambda: [30.0])
    fit_range: list = None

    def validate(self):
        _positive("kpp", T=self.T, record_every=self.record_every)
        try:
            self.grid()
        except ParameterError as exc:
            raise ConfigError(f"kpp: {exc}") from None
        lo, hi = self.fit_window
        if not 0 < lo < hi <= self.T:
            raise ConfigError("kpp.fit_window must satisfy 0 < lo < hi <= T")
        for t in self.profile_times:
            if not 0 < t <= self.T:
                raise ConfigError("kpp.profile_times must lie in (0, T]")

    def grid(self):
        return Grid1D(self.x_min, self.x_max, self.dx, self.dt)


@dataclass
class CorrSection:
    T: float = 40.0
    epsilon: float = 0.3
    xi: float = 0.8
    window: list = field(default_factory=lambda: [-1.0, 2.0])
    R_T: float = 10.0
    outer: int = 20
    inner: int = 50
    separations: list = field(default_factory=lambda: [0.2, 5.0, 19.0])
    use_localization: bool = False

    def validate(self):
        _positive("corr", T=self.T)
        _count("corr", outer=self.outer, inner=self.inner)
        if not self.epsilon * self.T > self.R_T:
            raise ScheduleInfeasibleError(
                f"corr: epsilon*T={self.epsilon * self.T:.4g} must exceed R_T={self.R_T:.4g}")
        if self.inner < 50:
            raise ConfigError("corr.inner must be at least 50")
        span = (1 - self.epsilon) * self.T
        for sep in self.separations:
            if not 0 < sep <= span:
                raise ConfigError(f"corr.separations must lie in (0, {span:.4g}]")


@dataclass
class LocalizeSection:
    t: float = 30.0
    replicas: int = 200
    r_values: list = field(default_factory=lambda: [2.0, 4.0, 8.0])
    alpha: float = 0.4
    beta: float = 0.6
    window: list = field(default_factory=lambda: [-1.0, 2.0])
    envelope_points: int = 201

    def validate(self):
        _positive("localize", t=self.t)
        _count("localize", replicas=self.replicas, envelope_points=self.envelope_points)
        if not 0 < self.alpha < 0.5 < self.beta < 1:
            raise ConfigError("localize: need 0 < alpha < 1/2 < beta < 1")
        d, D = self.window
        if not d < D:
            raise ConfigError("localize.window needs d < D")
        for r in self.r_values:
            if not 0 <= r < self.t / 2:
                raise ConfigError("localize.r_values must lie in [0, t/2)")


SECTIONS = {
    "simulate": SimulateSection,
    "ergodic": ErgodicSection,
    "tails": TailsSection,
    "kpp": KppSection,
    "corr": CorrSection,
    "localize": LocalizeSection,
}


@dataclass
class ExperimentConfig:
    experiment: str = "simulate"
    seed: int = None
    out: str = None
    law: list = field(default_factory=lambda: [0.0, 1.0])
    rate: float = 1.0
    checkpoint_step: float = DEFAULT_CHECKPOINT_STEP
    prune: PruneSection = field(default_factory=PruneSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    ergodic: ErgodicSection = field(default_factory=ErgodicSection)
    tails: TailsSection = field(default_factory=TailsSection)
    kpp: KppSection = field(default_factory=KppSection)
    corr: CorrSection = field(default_factory=CorrSection)
    localize: LocalizeSection = field(default_factory=LocalizeSection)
    version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown top-level key(s) {', '.join(extra)}")
        if data.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {data['version']}")
        kw = {k: v for k, v in data.items() if k not in SECTIONS and k != "prune"}
        kw["prune"] = _build(PruneSection, data.get("prune"), "prune")
        for name, sec in SECTIONS.items():
            kw[name] = _build(sec, data.get(name), name)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def validate(self):
        if self.experiment not in COMMANDS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.seed is not None and not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        _positive("config", checkpoint_step=self.checkpoint_step)
        self.offspring_law()
        self.prune.build()
        getattr(self, self.experiment).validate()

    def offspring_law(self):
        try:
            return OffspringLaw(tuple(float(p) for p in self.law), rate=float(self.rate))
        except (ParameterError, TypeError) as exc:
            raise ConfigError(f"law: {exc}") from None

    def to_dict(self):
        return asdict(self)


def resolve_seed(cli_seed, config_seed, env):
    """``--seed`` beats the config file, which beats ``BBM_SEED``; default 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if config_seed is not None:
        return int(config_seed)
    raw = env.get("BBM_SEED")
    if raw not in (None, ""):
        try:
            v = int(raw)
        except ValueError:
            raise ConfigError(f"BBM_SEED={raw!r} is not an integer") from None
        if not 0 <= v < 2**64:
            raise ConfigError("BBM_SEED must be an unsigned 64-bit integer")
        return v
    return 0

