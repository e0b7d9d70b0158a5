"""Uniform grid over lat/lon boxes, used to prune trace pairs that can never meet."""

import math
from typing import Any, Callable, Dict, List, Tuple

Box = Tuple[float, float, float, float]


class GridIndex:
    """Each cell of the grid lists the items whose box intersects it."""

    def __init__(self, size: float) -> None:
        """
        Args:
            size: edge of a grid cell, in the units of the boxes (degrees here)
        """
        self.size = size
        self.grid: Dict[Tuple[int, int], List[int]] = {}
        self.items: List[Any] = []

    def insert(self, box: Box, data: Any) -> None:
        """Insert data covering box = (min_lon, min_lat, max_lon, max_lat)."""
        item_idx = len(self.items)
        self.items.append(data)

        def f(cell: Tuple[int, int]) -> None:
            self.grid.setdefault(cell, []).append(item_idx)

        self._each_cell(box, f)

    def _each_cell(self, box: Box, f: Callable[[Tuple[int, int]], None]) -> None:
        for i in range(int(math.floor(box[0] / self.size)), int(math.floor(box[2] / self.size)) + 1):
            for j in range(int(math.floor(box[1] / self.size)), int(math.floor(box[3] / self.size)) + 1):
                f((i, j))

    def query(self, box: Box) -> List[Any]:
        """Items whose cells intersect box, in insertion order."""
        matches = set()

        def f(cell: Tuple[int, int]) -> None:
            matches.update(self.grid.get(cell, ()))

        self._each_cell(box, f)
        return [self.items[idx] for idx in sorted(matches)]
