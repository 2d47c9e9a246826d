"""Event-driven branching Brownian motion engine."""

from .population import (
    DEFAULT_CAP,
    DEFAULT_CHECKPOINT_STEP,
    DEFAULT_WINDOW,
    OffspringLaw,
    Particle,
    Population,
    PruneConfig,
    advance,
    dump_population,
    init_population,
    load_population,
    prune_report,
    resample_clocks,
    snapshot_positions,
)

__all__ = [
    "DEFAULT_CAP",
    "DEFAULT_CHECKPOINT_STEP",
    "DEFAULT_WINDOW",
    "OffspringLaw",
    "Particle",
    "Population",
    "PruneConfig",
    "advance",
    "dump_population",
    "init_population",
    "load_population",
    "prune_report",
    "resample_clocks",
    "snapshot_positions",
]
