"""Rule-table road-user classification from box length, height and speed."""
from __future__ import annotations

from enum import Enum
from typing import Optional

from ..config import ClassRules
from .obb import OBB


class ObjectClass(str, Enum):
    PEDESTRIAN = "Pedestrian"
    CAR = "Car"
    TRUCK = "Truck"
    LARGE_FREIGHT = "LargeFreight"
    UNKNOWN = "Unknown"


def classify_dims(length: float, height: float, speed: Optional[float] = None,
                  rules: ClassRules = ClassRules()) -> ObjectClass:
    """Rules are tried from the largest class down; ``speed=None`` skips the speed test."""
    L, H = length, height
    if L > rules.freight_min_length or H > rules.freight_min_height:
        return ObjectClass.LARGE_FREIGHT
    car_lo, car_hi = rules.car_length
    if (rules.truck_length[0] < L <= rules.truck_length[1]
            or (car_lo <= L <= car_hi and rules.truck_height[0] <= H <= rules.truck_height[1])):
        return ObjectClass.TRUCK
    if car_lo <= L <= car_hi and H < rules.car_max_height:
        return ObjectClass.CAR
    h_lo, h_hi = rules.pedestrian_height
    if L < rules.pedestrian_max_length and h_lo <= H <= h_hi and (
            speed is None or speed < rules.pedestrian_max_speed):
        return ObjectClass.PEDESTRIAN
    return ObjectClass.UNKNOWN


def classify_object(obb: OBB, speed: Optional[float] = None, rules: ClassRules = ClassRules()) -> ObjectClass:
    return classify_dims(obb.length, obb.height, speed, rules)
