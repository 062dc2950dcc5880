"""Shared fixtures and synthetic-clip helpers for the skill pipeline tests."""

import math
from typing import List, Tuple

import numpy as np
import pytest

from skill_tools.egolift import HandDetection
from skill_tools.se3_core import CameraFrame, Pose6D, RigidTransform, compose, invert, look_at

INTRINSICS = (600.0, 600.0, 320.0, 240.0)


def random_pose(rng: np.random.Generator, spread: float = 1.0) -> Pose6D:
    """Random pose away from gimbal lock"""
    translation = rng.uniform(-spread, spread, size=3)
    orientation = (rng.uniform(-math.pi, math.pi), rng.uniform(-1.4, 1.4), rng.uniform(-math.pi, math.pi))
    return Pose6D(tuple(translation.tolist()), orientation)


def random_transform(rng: np.random.Generator, spread: float = 1.0) -> RigidTransform:
    return random_pose(rng, spread).to_transform()


def synthetic_clip(rng: np.random.Generator, length: int = 30, clip_id: str = 'clip',
                   first_frame: int = 0) -> Tuple[List[Pose6D], List[CameraFrame], List[HandDetection]]:
    """Moving camera watching a moving hand; returns (world truth, cameras, exact detections)"""
    eye0 = np.array([0.0, -0.8, 1.4]) + rng.uniform(-0.1, 0.1, size=3)
    hand0 = np.array([0.0, 0.3, 0.9]) + rng.uniform(-0.1, 0.1, size=3)
    velocity = rng.uniform(-0.01, 0.01, size=3)
    yaw_rate = rng.uniform(-0.05, 0.05)
    truth, cams, dets = [], [], []
    for k in range(length):
        frame_id = first_frame + k
        hand = Pose6D(tuple((hand0 + k * velocity).tolist()), (0.3 + k * yaw_rate, 0.2, -0.4))
        eye = eye0 + 0.03 * np.array([math.sin(0.2 * k), math.cos(0.15 * k), 0.5 * math.sin(0.1 * k)])
        cam = CameraFrame(INTRINSICS, invert(look_at(eye, hand0 + 0.5 * k * velocity)), frame_id)
        in_cam = Pose6D.from_transform(compose(cam.extrinsic_world_to_cam, hand.to_transform()))
        truth.append(hand)
        cams.append(cam)
        dets.append(HandDetection(frame_id, in_cam, 0.9, clip_id))
    return truth, cams, dets


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def clip(rng):
    return synthetic_clip(rng)
