from dataclasses import dataclass

from .brownian import (ContinuousTriple, bridge_cross_prob, brownian_gap_step,
                       brownian_triple_at, run_gap_collisions)
from .howard import IncrementPmf, howard_increment_pmf, increment_second_moment, sigma0
from .lattice import (DiscreteTriple, GapPair, HowardEnv, ScheideggerEnv, Site,
                      check_noncrossing, howard_advance, howard_increments, howard_step, make_advance,
                      scheidegger_advance, scheidegger_step)
from .poisson import (JumpEvent, PoissonForest, TubeUnion, build_poisson_forest,
                      poisson_triple_jump, poisson_tube_union)
from .ssrw import ssrw_triple_step


@dataclass(frozen=True)
class ScalingParams:
    """Diffusive scaling x -> x / (sqrt(n) sigma), t -> t / (n gamma)."""

    gamma: float
    sigma: float

    def __post_init__(self):
        if not (self.gamma > 0 and self.sigma > 0):
            raise ValueError("gamma and sigma must be positive")


__all__ = [
    "ContinuousTriple", "DiscreteTriple", "GapPair", "Site", "ScalingParams",
    "ScheideggerEnv", "HowardEnv", "IncrementPmf", "TubeUnion", "JumpEvent", "PoissonForest",
    "scheidegger_step", "howard_step", "scheidegger_advance", "howard_advance", "make_advance",
    "howard_increments",
    "howard_increment_pmf", "sigma0", "increment_second_moment", "ssrw_triple_step",
    "brownian_triple_at", "brownian_gap_step", "bridge_cross_prob", "run_gap_collisions",
    "poisson_tube_union", "poisson_triple_jump", "build_poisson_forest", "check_noncrossing",
]
