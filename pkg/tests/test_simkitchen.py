"""
Tests for skill_tools.simkitchen: joint projection, attachment, the per-skill
success predicates, scripted demos, detection rendering and scene files.
"""

import math

import numpy as np
import pytest

from skill_tools import records, simkitchen
from skill_tools.egolift import lift_clip
from skill_tools.errors import InfeasibleTask, LengthMismatch
from skill_tools.grasp_select import SelectionMode, select_grasp
from skill_tools.se3_core import CameraFrame, Pose6D, RigidTransform, axis_rotation, compose, frame_from_z, pose_error
from skill_tools.settings import ARTICULATION_SKILLS, SKILLS
from skill_tools.simkitchen import (CLOSE, HOLD, OPEN, DetectionNoise, Gripper, Joint, SceneObject, SimScene,
                                    TaskSpec)


def handle_scene(joint: Joint, handle=(0.0, 0.6, 0.8)) -> SimScene:
    """A single articulated handle with the gripper already on it"""
    pose = Pose6D.from_transform(RigidTransform(frame_from_z((0.0, 1.0, 0.0)), handle))
    obj = SceneObject('target', 'drawer', pose, joint=joint)
    camera = CameraFrame(simkitchen.INTRINSICS, RigidTransform.identity(), 0)
    scene = SimScene({'target': obj}, Gripper(pose), camera)
    return simkitchen.step(scene, pose, CLOSE)


def moved(pose: Pose6D, delta) -> Pose6D:
    return Pose6D(tuple((np.asarray(pose.translation) + np.asarray(delta)).tolist()), pose.orientation)


def replay(skill, seed):
    scene, task = simkitchen.random_scene(skill, seed)
    demo = simkitchen.scripted_demo(task, scene)
    return scene, task, demo, simkitchen.replay_demo(scene, demo)


class TestPrismaticJoint:
    @pytest.fixture
    def drawer(self):
        return handle_scene(Joint('prismatic', (0.0, -1.0, 0.0), 0.0, 0.3, 0.0))

    def test_close_attaches_the_handle(self, drawer):
        assert drawer.gripper.attached_id == 'target'
        assert drawer.gripper.closed

    def test_pull_along_the_axis(self, drawer):
        after = simkitchen.step(drawer, moved(drawer.gripper.pose, (0.0, -0.10, 0.0)))
        assert after.objects['target'].joint.q == pytest.approx(0.10, abs=1e-12)
        np.testing.assert_allclose(after.gripper.pose.translation, (0.0, 0.5, 0.8), atol=1e-12)

    def test_oblique_pull_is_projected(self, drawer):
        angle = math.radians(60.0)
        delta = (0.10 * math.sin(angle), -0.10 * math.cos(angle), 0.0)
        after = simkitchen.step(drawer, moved(drawer.gripper.pose, delta))
        assert after.objects['target'].joint.q == pytest.approx(0.05, abs=1e-12)
        np.testing.assert_allclose(after.gripper.pose.translation, (0.0, 0.55, 0.8), atol=1e-12)

    def test_joint_limits_clamp(self, drawer):
        after = simkitchen.step(drawer, moved(drawer.gripper.pose, (0.0, -0.5, 0.0)))
        assert after.objects['target'].joint.q == pytest.approx(0.3)
        pushed = simkitchen.step(after, moved(after.gripper.pose, (0.0, 1.0, 0.0)))
        assert pushed.objects['target'].joint.q == pytest.approx(0.0)

    def test_open_releases_the_handle(self, drawer):
        released = simkitchen.step(drawer, moved(drawer.gripper.pose, (0.0, -0.1, 0.0)), OPEN)
        assert released.gripper.attached_id is None
        assert released.objects['target'].joint.q == 0.0
        assert released.gripper.pose.translation == pytest.approx((0.0, 0.5, 0.8))

    def test_step_leaves_the_input_untouched(self, drawer):
        before = drawer.gripper.pose
        simkitchen.step(drawer, moved(before, (0.0, -0.1, 0.0)))
        assert drawer.gripper.pose == before
        assert drawer.objects['target'].joint.q == 0.0
        assert drawer.step_count == 1

    def test_unknown_command(self, drawer):
        with pytest.raises(ValueError):
            simkitchen.step(drawer, drawer.gripper.pose, 'squeeze')


class TestRevoluteJoint:
    def test_rotation_about_the_hinge(self):
        pivot = np.array([0.0, 0.6, 1.0])
        scene = handle_scene(Joint('revolute', (0.0, 0.0, 1.0), 0.0, 1.5, 0.0, tuple(pivot.tolist())),
                             handle=tuple((pivot + [0.4, 0.0, 0.0]).tolist()))
        target = pivot + axis_rotation((0.0, 0.0, 1.0), 0.2) @ np.array([0.4, 0.0, 0.0])
        after = simkitchen.step(scene, Pose6D(tuple(target.tolist()), scene.gripper.pose.orientation))
        assert after.objects['target'].joint.q == pytest.approx(0.2, abs=1e-12)
        np.testing.assert_allclose(after.gripper.pose.translation, target, atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_generated_doors_swing_toward_the_robot(self, seed):
        scene, task = simkitchen.random_scene('hinge-open', seed)
        door = scene.objects['target']
        rest = door.pose.translation
        swung = simkitchen.handle_pose_at(door, 0.5).translation
        assert swung[1] < rest[1]
        assert door.joint.axis[2] == (-1.0 if door.kind == 'door-left' else 1.0)

    def test_both_hinge_sides_are_generated(self):
        kinds = {simkitchen.random_scene('hinge-open', seed)[0].objects['target'].kind for seed in range(30)}
        assert kinds == {'door-left', 'door-right'}


class TestScriptedDemos:
    @pytest.mark.parametrize("skill", ARTICULATION_SKILLS)
    def test_articulation_demos_always_succeed(self, skill):
        for seed in range(20):
            _, task, _, snapshots = replay(skill, seed)
            assert simkitchen.success(snapshots[-1], task), f"{skill} seed {seed}"

    @pytest.mark.parametrize("skill", SKILLS)
    def test_every_skill_demo_succeeds(self, skill):
        for seed in (3, 11, 42):
            _, task, _, snapshots = replay(skill, seed)
            assert simkitchen.success(snapshots[-1], task), f"{skill} seed {seed}"

    @pytest.mark.parametrize("skill", SKILLS)
    def test_fresh_scenes_are_not_successes(self, skill):
        scene, task = simkitchen.random_scene(skill, 5)
        assert not simkitchen.success(scene, task)

    def test_demo_shape(self):
        scene, task, demo, snapshots = replay('pick', 0)
        assert len(demo.gripper_poses) == len(demo.commands) == len(demo.camera_frames) == len(snapshots)
        assert demo.grasp_frame == 5
        assert demo.commands[:6] == [OPEN] * 5 + [CLOSE]
        assert set(demo.commands[6:]) == {HOLD}
        assert [c.frame_id for c in demo.camera_frames] == list(range(len(demo.gripper_poses)))
        assert snapshots[demo.grasp_frame].gripper.attached_id == 'target'
        poses, cams = demo
        assert poses is demo.gripper_poses and cams is demo.camera_frames

    def test_demo_is_deterministic(self):
        a = replay('stir', 9)[2]
        b = replay('stir', 9)[2]
        assert a.gripper_poses == b.gripper_poses
        assert [c.extrinsic_world_to_cam.allclose(d.extrinsic_world_to_cam, 0.0)
                for c, d in zip(a.camera_frames, b.camera_frames)] == [True] * len(a.camera_frames)

    def test_pour_conserves_liquid(self):
        scene, task, _, snapshots = replay('pour', 4)
        total = scene.objects['target'].fill_fraction + scene.objects['receiver'].fill_fraction
        for snap in snapshots:
            assert snap.objects['target'].fill_fraction + snap.objects['receiver'].fill_fraction == \
                pytest.approx(total, abs=1e-12)
        assert snapshots[-1].objects['target'].fill_fraction < scene.objects['target'].fill_fraction

    def test_pour_without_receiver_spills_nothing(self):
        scene, task = simkitchen.random_scene('pour', 4)
        demo = simkitchen.scripted_demo(task, scene)
        del scene.objects['receiver']
        for snap in simkitchen.replay_demo(scene, demo):
            assert snap.objects['target'].fill_fraction == 0.8

    def test_stir_accumulates_angle_inside_the_pot(self):
        _, task, _, snapshots = replay('stir', 1)
        pot = snapshots[-1].objects['target']
        assert pot.stir_angle >= 2.0 * math.pi
        assert pot.stir_excursion <= 0.05

    def test_missing_target(self):
        scene, _ = simkitchen.random_scene('pick', 0)
        with pytest.raises(InfeasibleTask):
            simkitchen.scripted_demo(TaskSpec('pick', 'nothing'), scene)

    def test_wrong_joint_kind(self):
        scene, _ = simkitchen.random_scene('hinge-open', 0)
        with pytest.raises(InfeasibleTask):
            simkitchen.scripted_demo(TaskSpec('slide-open', 'target'), scene)

    def test_pour_without_receiver_is_infeasible(self):
        scene, task = simkitchen.random_scene('pour', 0)
        del scene.objects['receiver']
        with pytest.raises(InfeasibleTask):
            simkitchen.scripted_demo(task, scene)

    def test_ungraspable_target(self):
        scene, _ = simkitchen.random_scene('stir', 0)
        with pytest.raises(InfeasibleTask):
            simkitchen.scripted_demo(TaskSpec('stir', 'target'), scene)

    def test_unknown_skill(self):
        with pytest.raises(ValueError):
            simkitchen.random_scene('juggle', 0)


class TestSceneFeatures:
    def test_layout(self):
        scene, task = simkitchen.random_scene('hinge-open', 2)
        features = simkitchen.scene_features(scene, task)
        assert len(features) == 32
        assert features[1] == -1.0
        assert features[2] == scene.objects['target'].joint.axis[2]
        assert features[20 + SKILLS.index('hinge-open')] == 1.0
        assert sum(features[20:29]) == 1.0
        assert features[29:] == (0.0, 0.0, 0.0)

    def test_grasp_point_is_in_camera_frame(self):
        scene, task = simkitchen.random_scene('pick', 2)
        features = simkitchen.scene_features(scene, task)
        expected = scene.camera.extrinsic_world_to_cam.apply(scene.objects['target'].pose.translation)
        np.testing.assert_allclose(features[3:6], expected, atol=1e-12)

    @pytest.mark.parametrize("dim", [8, 40])
    def test_truncate_or_pad(self, dim):
        scene, task = simkitchen.random_scene('slide-open', 2)
        full = simkitchen.scene_features(scene, task, dim=32)
        features = simkitchen.scene_features(scene, task, dim=dim)
        assert len(features) == dim
        assert features[:min(dim, 32)] == full[:min(dim, 32)]
        assert all(v == 0.0 for v in features[32:])

    def test_hinge_sides_separate(self):
        sides = {}
        for seed in range(30):
            scene, task = simkitchen.random_scene('hinge-open', seed)
            sides[scene.objects['target'].kind] = simkitchen.scene_features(scene, task)[2]
        assert sides == {'door-left': -1.0, 'door-right': 1.0}


class TestRenderDetections:
    def test_clean_detections_lift_back_to_the_demo(self):
        _, _, demo, _ = replay('slide-open', 3)
        dets, cams, features = simkitchen.render_detections(demo.gripper_poses, demo.camera_frames, clip_id='c')
        assert len(dets) == len(cams) == len(features) == len(demo.gripper_poses)
        [traj] = lift_clip(dets, cams, min_confidence=0.5)
        for (_, got), want in zip(traj.poses, demo.gripper_poses):
            dt, dr = pose_error(got, want)
            assert dt < 1e-9 and dr < 1e-9

    def test_same_seed_same_output(self):
        _, _, demo, _ = replay('pick', 1)
        noise = DetectionNoise(0.005, 0.01, 0.1)
        a = simkitchen.render_detections(demo.gripper_poses, demo.camera_frames, noise, seed=5)[0]
        b = simkitchen.render_detections(demo.gripper_poses, demo.camera_frames, noise, seed=5)[0]
        assert a == b

    def test_dropout_removes_frames_without_changing_the_others(self):
        _, _, demo, _ = replay('pick', 1)
        kept = simkitchen.render_detections(demo.gripper_poses, demo.camera_frames,
                                            DetectionNoise(0.005, 0.01, 0.0), seed=8)[0]
        dropped = simkitchen.render_detections(demo.gripper_poses, demo.camera_frames,
                                               DetectionNoise(0.005, 0.01, 0.4), seed=8)[0]
        by_frame = {d.frame_id: d for d in kept}
        assert 0 < len(dropped) < len(kept)
        assert all(by_frame[d.frame_id] == d for d in dropped)

    def test_features_follow_snapshots(self):
        scene, task, demo, snapshots = replay('slide-open', 3)
        _, _, features = simkitchen.render_detections(demo.gripper_poses, demo.camera_frames,
                                                      scene_states=snapshots, task=task, feature_dim=32)
        assert features[0][0] == 0.0
        assert features[-1][0] == pytest.approx(0.97)
        assert features[-1][12] == 1.0

    def test_length_mismatch(self):
        _, _, demo, _ = replay('pick', 1)
        with pytest.raises(LengthMismatch):
            simkitchen.render_detections(demo.gripper_poses, demo.camera_frames[1:])


class TestGraspProposals:
    @pytest.mark.parametrize("skill", ['slide-open', 'hinge-close', 'pick', 'pour', 'cut'])
    def test_fused_selection_finds_the_true_grasp(self, skill):
        hits = 0
        for seed in range(10):
            scene, task = simkitchen.random_scene(skill, seed)
            rng = np.random.default_rng(seed)
            aff = simkitchen.propose_affordance(scene, task, rng)
            cands = simkitchen.propose_grasps(scene, task, rng)
            assert len(cands) == 6
            chosen = select_grasp(aff, cands, SelectionMode.AFFORDANCE_FUSED)
            truth = Pose6D.from_transform(compose(scene.camera.extrinsic_world_to_cam,
                                                  simkitchen.canonical_grasp_pose(scene, task).to_transform()))
            dt, dr = pose_error(chosen, truth)
            hits += dt < 0.005 and dr < 1e-9
        assert hits >= 9

    def test_affordance_text(self):
        scene, task = simkitchen.random_scene('slide-open', 0)
        assert simkitchen.propose_affordance(scene, task, np.random.default_rng(0)).task_text == 'open drawer'


class TestSceneFiles:
    @staticmethod
    def without_camera(rec):
        rec = dict(rec)
        rec.pop('camera')
        return rec

    def test_scenes_round_trip(self, tmp_path):
        scenes = [simkitchen.random_scene(skill, 7) for skill in SKILLS]
        path = tmp_path / 'scenes.jsonl'
        assert simkitchen.write_scenes(path, scenes) == len(SKILLS)
        loaded = simkitchen.read_scenes(path)
        for (scene, task), (got_scene, got_task) in zip(scenes, loaded):
            assert self.without_camera(simkitchen.scene_record(got_scene, got_task)) == \
                self.without_camera(simkitchen.scene_record(scene, task))
            assert got_scene.camera.extrinsic_world_to_cam.allclose(scene.camera.extrinsic_world_to_cam, 1e-12)
            assert got_task == task

    def test_loaded_scene_replays_the_same_demo(self, tmp_path):
        scene, task = simkitchen.random_scene('place', 12)
        path = tmp_path / 'scenes.jsonl'
        simkitchen.write_scenes(path, [(scene, task)])
        [(loaded, loaded_task)] = simkitchen.read_scenes(path)
        demo = simkitchen.scripted_demo(loaded_task, loaded)
        assert simkitchen.success(simkitchen.replay_demo(loaded, demo)[-1], loaded_task)

    def test_rollout_log(self, tmp_path):
        _, task, _, snapshots = replay('slide-open', 0)
        path = tmp_path / 'rollout.jsonl'
        assert simkitchen.write_rollout_log(path, snapshots, task) == len(snapshots)
        rows = records.read_records(path)
        assert rows[0][1] == {'format': 'rollout-log', 'version': 1, 'skill': 'slide-open', 'target_id': 'target'}
        assert rows[-1][1]['joints']['target'] == pytest.approx(snapshots[-1].objects['target'].joint.q)
