from typing import Tuple

from pydantic import BaseModel, Field

DROP_CLEARANCE = 0.2
SLAB_HALF_WIDTH = 0.1


class DropPoint(BaseModel):
    """Release point in the robot-aligned frame (x ahead, y left, z up from the floor)"""

    x_m: float
    y_m: float
    z_max: float
    eligible_points: int = Field(..., ge=1)

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.x_m, self.y_m, self.z_max
