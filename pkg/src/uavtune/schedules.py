"""Timed waypoint schedules (north m, east m, height m, yaw deg)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRANSITION_INTERVAL = 10.0


@dataclass(frozen=True)
class WaypointSchedule:
    name: str
    times: tuple[float, ...]
    points: tuple[tuple[float, float, float, float], ...]
    duration: float

    def __post_init__(self):
        if not self.times:
            raise ValueError("schedule must contain at least one waypoint")
        if len(self.times) != len(self.points):
            raise ValueError("times and points differ in length")
        if self.times[0] != 0.0:
            raise ValueError("first waypoint must start at t=0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("waypoint times must be strictly increasing")
        if self.duration <= self.times[-1]:
            raise ValueError("duration must extend past the last waypoint start")
        if any(len(p) != 4 for p in self.points):
            raise ValueError("waypoints are (n, e, h, yaw)")

    @classmethod
    def every(cls, name: str, points, interval: float = TRANSITION_INTERVAL) -> "WaypointSchedule":
        points = tuple(tuple(float(v) for v in p) for p in points)
        times = tuple(i * interval for i in range(len(points)))
        return cls(name, times, points, interval * len(points))

    def truncated(self, duration: float) -> "WaypointSchedule":
        keep = [i for i, t in enumerate(self.times) if t < duration]
        return WaypointSchedule(
            self.name, tuple(self.times[i] for i in keep),
            tuple(self.points[i] for i in keep), float(duration),
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.asarray(self.times, dtype=np.float64),
                np.asarray(self.points, dtype=np.float64).reshape(-1, 4))

    def to_dict(self) -> dict:
        return {"name": self.name, "times": list(self.times),
                "points": [list(p) for p in self.points], "duration": self.duration}

    @classmethod
    def from_dict(cls, d: dict) -> "WaypointSchedule":
        return cls(d["name"], tuple(float(t) for t in d["times"]),
                   tuple(tuple(float(v) for v in p) for p in d["points"]), float(d["duration"]))


OSE = WaypointSchedule.every("ose", [
    (0.0, 0.0, 0.2, 40.0),
    (0.06, -0.06, 0.2, -5.0),
    (-0.06, 0.06, 0.2, 40.0),
    (0.06, 0.06, 0.2, 85.0),
    (0.06, 0.06, 0.2, 40.0),
    (0.0, 0.0, 0.2, 40.0),
])

TSE = WaypointSchedule.every("tse", [
    (0.0, 0.0, 0.2, 40.0),
    (0.15, -0.15, 0.25, -5.0),
    (-0.15, 0.15, 0.4, 40.0),
    (0.15, 0.15, 0.25, 85.0),
    (0.15, 0.15, 0.4, 40.0),
    (0.0, 0.0, 0.25, 40.0),
])

UNSEEN = WaypointSchedule.every("unseen", [
    (0.0, 0.0, 0.4, -10.0),
    (-0.25, 0.25, 0.2, 45.0),
    (0.25, -0.25, 0.4, 85.0),
    (0.25, 0.25, 0.4, 85.0),
    (0.0, 0.0, 0.3, -10.0),
    (-0.25, -0.25, 0.4, 45.0),
])

BUILTIN = {s.name: s for s in (OSE, TSE, UNSEEN)}


def hover(height: float, duration: float, yaw: float = float("nan"), name: str = "hover") -> WaypointSchedule:
    """Single-waypoint hover at the centre; NaN yaw holds the start heading."""
    return WaypointSchedule(name, (0.0,), ((0.0, 0.0, float(height), float(yaw)),), float(duration))


def get(name: str) -> WaypointSchedule:
    try:
        return BUILTIN[name]
    except KeyError:
        raise KeyError(f"unknown schedule {name!r}; built-ins are {sorted(BUILTIN)}") from None
