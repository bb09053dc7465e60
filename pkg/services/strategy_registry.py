from typing import Dict, List, Protocol

from models.curtain_models import ConstraintGraph, CurtainPlacement, EntropyMap
from services.placement_planner import PlacementPlanner
from utils.exceptions import ConfigurationError


class PlacementStrategy(Protocol):
    """
    Interface that every curtain placement strategy must implement
    """

    def plan(self, graph: ConstraintGraph, entropy_map: EntropyMap, rng_seed: int) -> CurtainPlacement:
        """
        Produce a feasible placement for the current uncertainty map
        """
        ...


class DynamicProgrammingStrategy(PlacementStrategy):
    def plan(self, graph: ConstraintGraph, entropy_map: EntropyMap, rng_seed: int) -> CurtainPlacement:
        placement, _, _ = PlacementPlanner.optimize_dp(graph, entropy_map)
        return placement


class GreedyStrategy(PlacementStrategy):
    def __init__(self, tie_break: str):
        self.tie_break = tie_break

    def plan(self, graph: ConstraintGraph, entropy_map: EntropyMap, rng_seed: int) -> CurtainPlacement:
        return PlacementPlanner.greedy(graph, entropy_map, tie_break=self.tie_break, seed=rng_seed)


class RandomFrontoparallelStrategy(PlacementStrategy):
    def plan(self, graph: ConstraintGraph, entropy_map: EntropyMap, rng_seed: int) -> CurtainPlacement:
        return PlacementPlanner.random_frontoparallel(rng_seed, graph)


class FixedDepthStrategy(PlacementStrategy):
    def __init__(self, z: float):
        self.z = z

    def plan(self, graph: ConstraintGraph, entropy_map: EntropyMap, rng_seed: int) -> CurtainPlacement:
        return PlacementPlanner.fixed_depth(self.z, graph)


class FrontoparallelUncertaintyStrategy(PlacementStrategy):
    def plan(self, graph: ConstraintGraph, entropy_map: EntropyMap, rng_seed: int) -> CurtainPlacement:
        return PlacementPlanner.frontoparallel_uncertainty(entropy_map, graph)


class StrategyRegistry:
    """
    Resolves strategy selectors such as "dp" or "fixed:15" to placement strategies
    """

    FIXED_PREFIX = "fixed:"

    def __init__(self):
        self.strategies: Dict[str, PlacementStrategy] = {}

    def register_strategy(self, name: str, strategy: PlacementStrategy):
        """
        Register a placement strategy under a selector name
        """
        self.strategies[name] = strategy

    def names(self) -> List[str]:
        return list(self.strategies)

    def resolve(self, selector: str) -> PlacementStrategy:
        strategy = self.strategies.get(selector)
        if strategy is not None:
            return strategy

        if selector.startswith(self.FIXED_PREFIX):
            raw = selector[len(self.FIXED_PREFIX):]
            try:
                z = float(raw)
            except ValueError:
                raise ConfigurationError(f"fixed depth {raw!r} is not a number")
            if not z > 0.0:
                raise ConfigurationError(f"fixed depth must be positive, got {z}")
            return FixedDepthStrategy(z)

        raise ConfigurationError(
            f"unknown strategy {selector!r}; expected one of {', '.join(self.names())} or fixed:<z>"
        )


def default_registry() -> StrategyRegistry:
    registry = StrategyRegistry()
    registry.register_strategy("dp", DynamicProgrammingStrategy())
    registry.register_strategy("greedy-random", GreedyStrategy("random"))
    registry.register_strategy("greedy-minangle", GreedyStrategy("min_angle_change"))
    registry.register_strategy("random", RandomFrontoparallelStrategy())
    registry.register_strategy("fp-uncertainty", FrontoparallelUncertaintyStrategy())
    for depth in (15, 30, 45):
        registry.register_strategy(f"fixed:{depth}", FixedDepthStrategy(float(depth)))
    return registry
