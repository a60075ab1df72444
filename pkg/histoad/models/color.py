from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from histoad.errors import ParameterError

Interval = Tuple[float, float]


@dataclass
class ClassHistogram:
    class_id: int
    counts: np.ndarray  # 3 x 256 pixel counts per channel

    @property
    def total(self) -> int:
        return int(self.counts[0].sum())


@dataclass
class ColorTransferTable:
    source: int
    destination: int
    lut: np.ndarray  # 3 x 256 uint8, monotone per channel

    def apply(self, pixels: np.ndarray) -> np.ndarray:
        mapped = np.empty_like(pixels)
        for c in range(3):
            mapped[..., c] = self.lut[c][pixels[..., c]]
        return mapped


TransferTables = Dict[Tuple[int, int], ColorTransferTable]


@dataclass
class StainGroups:
    """Partition of class ids into staining groups; mix-up never crosses a group"""

    groups: Dict[int, Tuple[int, ...]]

    def __post_init__(self):
        seen = set()
        for group_id, members in self.groups.items():
            for k in members:
                if k in seen:
                    raise ParameterError(f"Class {k} belongs to more than one stain group")
                seen.add(k)
        self.groups = {g: tuple(sorted(m)) for g, m in sorted(self.groups.items())}

    @classmethod
    def from_assignments(cls, assignments: Dict[int, int]) -> "StainGroups":
        groups: Dict[int, List[int]] = {}
        for class_id, group_id in assignments.items():
            groups.setdefault(group_id, []).append(class_id)
        return cls({g: tuple(m) for g, m in groups.items()})

    def group_of(self, class_id: int) -> int:
        for group_id, members in self.groups.items():
            if class_id in members:
                return group_id
        raise ParameterError(f"Class {class_id} has no stain group")

    def members(self, class_id: int) -> Tuple[int, ...]:
        return self.groups[self.group_of(class_id)]

    def restricted(self, class_ids) -> "StainGroups":
        keep = set(class_ids)
        groups = {g: tuple(k for k in m if k in keep) for g, m in self.groups.items()}
        return StainGroups({g: m for g, m in groups.items() if m})

    def pairs(self) -> List[Tuple[int, int]]:
        return [(a, b) for members in self.groups.values() for a in members for b in members]


@dataclass
class JitterRanges:
    brightness: Optional[Interval] = None
    contrast: Optional[Interval] = None
    saturation: Optional[Interval] = None
    hue: Optional[Interval] = None

    def is_empty(self) -> bool:
        return all(r is None for r in (self.brightness, self.contrast, self.saturation, self.hue))
