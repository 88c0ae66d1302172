"""
Planar geometry for the simulator.

World frame follows the CARLA convention: heading grows clockwise, so a
positive steer turns right and a positive lateral offset lies to the right
of the direction of travel.
"""
import math
from typing import Sequence, Tuple

import numpy as np


class Polyline:
    """
    Route centerline with arc-length parametrisation.
    """

    def __init__(self, points: Sequence[Tuple[float, float]]):
        self.points = np.asarray(points, dtype=float)
        segments = np.diff(self.points, axis=0)
        self.lengths = np.hypot(segments[:, 0], segments[:, 1])
        self.directions = segments / self.lengths[:, None]
        # right-hand normal of each segment: direction rotated by +90 degrees
        self.normals = np.stack([-self.directions[:, 1],
                                 self.directions[:, 0]], axis=1)
        self.cumulative = np.concatenate(([0.0], np.cumsum(self.lengths)))
        self.length = float(self.cumulative[-1])

    def project_many(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Closest-point projection of an (M, 2) array of points. Returns the
        stations (arc length of the projection) and signed lateral offsets.
        """
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        starts = self.points[:-1]
        relative = xy[:, None, :] - starts[None, :, :]
        along = np.einsum('msk,sk->ms', relative, self.directions)
        along = np.clip(along, 0.0, self.lengths[None, :])
        closest = starts[None, :, :] + along[:, :, None] * self.directions
        offset = xy[:, None, :] - closest
        distance = np.hypot(offset[..., 0], offset[..., 1])
        segment = np.argmin(distance, axis=1)
        rows = np.arange(xy.shape[0])
        stations = self.cumulative[segment] + along[rows, segment]
        laterals = np.einsum('mk,mk->m', offset[rows, segment],
                             self.normals[segment])
        return stations, laterals

    def project(self, x: float, y: float) -> Tuple[float, float]:
        stations, laterals = self.project_many(np.array([[x, y]]))
        return float(stations[0]), float(laterals[0])

    def segment_at(self, station: float) -> int:
        index = int(np.searchsorted(self.cumulative, station, side='right')) - 1
        return min(max(index, 0), len(self.lengths) - 1)

    def heading_at(self, station: float) -> float:
        dx, dy = self.directions[self.segment_at(station)]
        return math.atan2(dy, dx)

    def to_world(self, station: float, lateral: float = 0.0) -> Tuple[float, float]:
        """
        Point at a station and lateral offset; stations outside the route
        extrapolate along the first or last segment.
        """
        index = self.segment_at(station)
        along = station - self.cumulative[index]
        base = self.points[index] + along * self.directions[index]
        point = base + lateral * self.normals[index]
        return float(point[0]), float(point[1])


def rectangle_corners(x: float, y: float, heading: float,
                      length: float, width: float) -> np.ndarray:
    forward = np.array([math.cos(heading), math.sin(heading)])
    right = np.array([-forward[1], forward[0]])
    center = np.array([x, y])
    half_l, half_w = length / 2.0, width / 2.0
    return np.array([
        center + half_l * forward + half_w * right,
        center + half_l * forward - half_w * right,
        center - half_l * forward - half_w * right,
        center - half_l * forward + half_w * right,
    ])


def rectangles_overlap(first: np.ndarray, second: np.ndarray) -> bool:
    """
    Separating-axis test for two convex quadrilaterals given by corners.
    Touching edges count as overlap.
    """
    for corners in (first, second):
        edges = np.roll(corners, -1, axis=0) - corners
        axes = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
        for axis in axes:
            a = first @ axis
            b = second @ axis
            if a.max() < b.min() or b.max() < a.min():
                return False
    return True


def points_in_rectangle(points: np.ndarray, x: float, y: float,
                        heading: float, length: float,
                        width: float) -> np.ndarray:
    relative = np.atleast_2d(points) - np.array([x, y])
    forward = np.array([math.cos(heading), math.sin(heading)])
    right = np.array([-forward[1], forward[0]])
    return ((np.abs(relative @ forward) <= length / 2.0)
            & (np.abs(relative @ right) <= width / 2.0))
