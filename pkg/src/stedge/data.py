"""Trajectory file parsing, observation/prediction windowing, and motion
feature initialization.

Input files are plain text, one observation per line: ``frame_id ped_id x y``
(whitespace separated, ``#`` starts a comment).  Windows are fixed-length
slices of 8 observed + 12 future samples by default; features are per-step
velocities, their norms, and movement angles, each embedded by its own
single-layer perceptron and concatenated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from stedge.autodiff import ParameterStore, Tensor, concatenate

ENDPOINT_MODES = ("off", "last_velocity", "oracle_gt")


class MalformedLineError(ValueError):
    """A trajectory file line does not parse as ``frame_id ped_id x y``."""


class DuplicateObservationError(ValueError):
    """The same (frame_id, ped_id) pair appears twice."""


class EmptyFileError(ValueError):
    """The trajectory file holds no observations."""


@dataclass(frozen=True)
class TrajectoryScene:
    """All observations of one scene, sorted by (frame_id, ped_id)."""

    records: tuple[tuple[int, int, float, float], ...]
    frame_stride: int

    def ped_ids(self) -> list[int]:
        return sorted({r[1] for r in self.records})

    def frames(self) -> list[int]:
        return sorted({r[0] for r in self.records})

    def positions_by_ped(self) -> dict[int, dict[int, tuple[float, float]]]:
        out: dict[int, dict[int, tuple[float, float]]] = {}
        for frame, ped, x, y in self.records:
            out.setdefault(ped, {})[frame] = (x, y)
        return out


@dataclass
class Window:
    """One observation/prediction slice.

    ``obs`` is (N, T_obs, 2) absolute positions, ``fut`` is (N, T_pred, 2),
    and ``origin`` is each pedestrian's last observed position.
    """

    obs: np.ndarray
    fut: np.ndarray
    ped_ids: list[int]
    origin: np.ndarray
    start_frame: int = 0

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float64)
        self.fut = np.asarray(self.fut, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64)

    @property
    def n_peds(self) -> int:
        return self.obs.shape[0]

    @property
    def t_obs(self) -> int:
        return self.obs.shape[1]

    @property
    def t_pred(self) -> int:
        return self.fut.shape[1]


def _parse_id(token: str) -> int:
    value = float(token)
    if not value.is_integer():
        raise ValueError(f"{token!r} is not an integer id")
    return int(value)


def parse_trajectory_file(path) -> TrajectoryScene:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise MalformedLineError(
                    f"{path}:{lineno}: expected 'frame_id ped_id x y', got {line!r}")
            try:
                record = (_parse_id(parts[0]), _parse_id(parts[1]),
                          float(parts[2]), float(parts[3]))
            except ValueError as exc:
                raise MalformedLineError(f"{path}:{lineno}: {exc}") from exc
            records.append(record)
    if not records:
        raise EmptyFileError(f"{path}: no observations")
    return scene_from_records(records)


def scene_from_records(records) -> TrajectoryScene:
    """Validate, sort and stride-infer a record list into a scene."""
    if not records:
        raise EmptyFileError("no observations")
    seen = set()
    for frame, ped, _, _ in records:
        key = (frame, ped)
        if key in seen:
            raise DuplicateObservationError(
                f"duplicate observation for frame {frame}, pedestrian {ped}")
        seen.add(key)
    ordered = tuple(sorted(records, key=lambda r: (r[0], r[1])))

    # stride = GCD of per-pedestrian frame gaps; single-sample peds contribute none
    by_ped: dict[int, list[int]] = {}
    for frame, ped, _, _ in ordered:
        by_ped.setdefault(ped, []).append(frame)
    stride = 0
    for frames in by_ped.values():
        for a, b in zip(frames, frames[1:]):
            stride = math.gcd(stride, b - a)
    return TrajectoryScene(records=ordered, frame_stride=stride or 1)


def build_windows(scene: TrajectoryScene, t_obs: int = 8, t_pred: int = 12,
                  slide: int = 1) -> list[Window]:
    """Cut every valid fixed-length window from a scene.

    A window starts at an observed frame and spans t_obs + t_pred samples
    spaced ``frame_stride`` apart; pedestrians observed at every one of those
    frames are included, others are excluded from that window.  Start frames
    are visited in order, stepping ``slide`` at a time.
    """
    if t_obs < 2:
        raise ValueError("t_obs must be >= 2")
    if t_pred < 1:
        raise ValueError("t_pred must be >= 1")
    if slide < 1:
        raise ValueError("slide must be >= 1")
    span = t_obs + t_pred
    stride = scene.frame_stride
    by_ped = scene.positions_by_ped()

    windows = []
    for start in scene.frames()[::slide]:
        needed = [start + i * stride for i in range(span)]
        peds = [p for p in sorted(by_ped) if all(f in by_ped[p] for f in needed)]
        if not peds:
            continue
        track = np.array([[by_ped[p][f] for f in needed] for p in peds])
        obs, fut = track[:, :t_obs], track[:, t_obs:]
        windows.append(Window(obs=obs, fut=fut, ped_ids=peds,
                              origin=obs[:, -1].copy(), start_frame=start))
    return windows


def motion_features(window: Window, endpoint_mode: str = "off"):
    """Per-step velocities, norms and angles as plain arrays.

    The first observed step has zero velocity so the sequence keeps T_obs
    entries.  Endpoint subtraction (when enabled) removes either the last
    observed velocity or the ground-truth final displacement from every
    step before norms/angles are derived.
    """
    obs = window.obs
    vel = np.zeros_like(obs)
    vel[:, 1:] = obs[:, 1:] - obs[:, :-1]
    if endpoint_mode == "last_velocity":
        vel = vel - vel[:, -1:, :]
    elif endpoint_mode == "oracle_gt":
        fut = window.fut
        if fut.shape[1] >= 2:
            endpoint = fut[:, -1] - fut[:, -2]
        else:
            endpoint = fut[:, 0] - obs[:, -1]
        vel = vel - endpoint[:, None, :]
    elif endpoint_mode != "off":
        raise ValueError(f"unknown endpoint mode {endpoint_mode!r}; "
                         f"expected one of {ENDPOINT_MODES}")
    norm = np.linalg.norm(vel, axis=-1)
    angle = np.arctan2(vel[..., 1], vel[..., 0])
    angle[norm == 0.0] = 0.0  # atan2(0, 0) := 0 so stationary steps stay clean
    return vel, norm, angle


def init_features(window: Window, params: ParameterStore,
                  endpoint_mode: str = "off") -> Tensor:
    """Embed velocity / norm / angle streams and concatenate to (N, T_obs, 3E)."""
    vel, norm, angle = motion_features(window, endpoint_mode)
    parts = [
        Tensor(vel) @ params["feat.w_v"],
        Tensor(norm[..., None]) @ params["feat.w_norm"],
        Tensor(angle[..., None]) @ params["feat.w_angle"],
    ]
    return concatenate(parts, axis=-1)


def future_displacements(window: Window) -> np.ndarray:
    """Per-step relative displacement targets, (N, T_pred, 2)."""
    path = np.concatenate([window.origin[:, None, :], window.fut], axis=1)
    return np.diff(path, axis=1)
