import math
from typing import Sequence

import numpy as np
from scipy.special import entr

from models.curtain_models import ConfidenceGrid, EntropyMap
from utils.exceptions import DomainError


class UncertaintyMapService:
    """
    Converts confidence scores into a binary-entropy uncertainty map and serves lookups
    """

    LN2 = math.log(2.0)

    @staticmethod
    def binary_entropy(p: float) -> float:
        """
        H(p) in bits, with 0 log 0 = 0
        """
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"probability {p} outside [0, 1]")
        return float(UncertaintyMapService.binary_entropies(np.asarray(p, dtype=float)))

    @staticmethod
    def binary_entropies(p: np.ndarray) -> np.ndarray:
        """
        Element-wise H(p); callers guarantee p in [0, 1]
        """
        return (entr(p) + entr(1.0 - p)) / UncertaintyMapService.LN2

    @staticmethod
    def entropy_map(grid: ConfidenceGrid) -> EntropyMap:
        values = UncertaintyMapService.binary_entropies(grid.values)
        return EntropyMap(**grid.geometry().model_dump(), values=np.clip(values, 0.0, 1.0))

    @staticmethod
    def lookup_entropy(entropy_map: EntropyMap, p: Sequence[float]) -> float:
        """
        Entropy of the cell nearest to p; zero outside the grid extent
        """
        return float(UncertaintyMapService.lookup_entropies(entropy_map, np.asarray(p, dtype=float))[0])

    @staticmethod
    def lookup_entropies(entropy_map: EntropyMap, points: np.ndarray) -> np.ndarray:
        ix, iz, inside = entropy_map.nearest_cells(points)
        return np.where(inside, entropy_map.values[ix, iz], 0.0)
