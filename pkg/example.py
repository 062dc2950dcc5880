#!/usr/bin/env python3
"""
📊 Skill Pipeline Example
Walks one skill through the whole pipeline in-process:
scripted demos -> noisy detections -> lifted trajectories -> dataset -> retrieval policy -> rollouts
"""

from skill_tools import simkitchen
from skill_tools.action_codec import REL_REL
from skill_tools.dataset_builder import build_samples, clip_segments, make_skill_clip
from skill_tools.egolift import lift_clip, translation_rmse
from skill_tools.errors import ClipTooShort, SkillPipelineError
from skill_tools.executor import (STREAM_SYNTH, derive_seed, format_rate, run_trial, run_trials, success_table,
                                  trial_specs, trial_summary)
from skill_tools.policy_retrieval import RetrievalPolicy, fit
from skill_tools.settings import SKILLS

SKILL = 'slide-open'
DEMOS = 20
TRIALS = 10
NOISE = simkitchen.DetectionNoise(translation_std=0.005, rotation_std=0.01, dropout=0.1)


def synth_example():
    """Scripted demos rendered as noisy egocentric detections"""
    print("🎬 Synthetic Demo Example")
    print("-" * 30)

    clips = []
    for k in range(DEMOS):
        scene, task = simkitchen.random_scene(SKILL, derive_seed(0, STREAM_SYNTH, SKILLS.index(SKILL), k))
        demo = simkitchen.scripted_demo(task, scene)
        snapshots = simkitchen.replay_demo(scene, demo)
        clip_id = f"{SKILL}-{k:03d}"
        dets, cams, feats = simkitchen.render_detections(demo.gripper_poses, demo.camera_frames, NOISE, k,
                                                         snapshots, task, clip_id)
        clips.append({'clip_id': clip_id, 'demo': demo, 'detections': dets, 'cameras': cams,
                      'features': {cam.frame_id: f for cam, f in zip(cams, feats)}})

    frames = sum(len(c['cameras']) for c in clips)
    detected = sum(len(c['detections']) for c in clips)
    print(f"   {len(clips)} demos, {frames} frames, {detected} detections after dropout")
    print()
    return clips


def lift_example(clips):
    """World-frame wrist trajectories and their error against the scripted path"""
    print("🖐️ Lifting Example")
    print("-" * 30)

    recovered, truth = [], []
    for clip in clips:
        clip['trajectories'] = lift_clip(clip['detections'], clip['cameras'], clip_id=clip['clip_id'])
        for traj in clip['trajectories']:
            for frame_id, pose in traj.poses:
                recovered.append(pose)
                truth.append(clip['demo'].gripper_poses[frame_id])

    pieces = sum(len(c['trajectories']) for c in clips)
    print(f"   {pieces} trajectories from {len(clips)} clips")
    print(f"   translation RMSE: {translation_rmse(recovered, truth) * 1000:.2f} mm")
    print()


def dataset_example(clips, n=10):
    """Post-grasp segments cut into relT+relO training samples"""
    print("📦 Dataset Example")
    print("-" * 30)

    samples, skipped = [], 0
    for clip in clips:
        demo = clip['demo']
        frame_range = (demo.grasp_frame, len(demo.gripper_poses) - 1)
        for piece in clip_segments(clip['trajectories'], clip['clip_id'], frame_range):
            try:
                skill_clip = make_skill_clip(piece.clip_id, SKILL, 'open the drawer', piece, clip['features'])
                samples.extend(build_samples(skill_clip, clip['cameras'], n, REL_REL))
            except ClipTooShort:
                skipped += 1

    print(f"   {len(samples)} samples (n={n}), {skipped} short pieces skipped")
    print()
    return samples


def rollout_example(samples):
    """Retrieval policy rolled out on held-out scenes"""
    print("🤖 Rollout Example")
    print("-" * 30)

    index = fit(samples)
    policy = RetrievalPolicy(index)
    specs = trial_specs([SKILL], TRIALS, seed=1)
    outcomes = run_trials(specs, lambda spec: run_trial(spec, lambda *_: policy, index.feature_dim), verbose=False)

    row = success_table([trial_summary(*o) for o in outcomes])[SKILL]
    steps = [result.steps for _, result, _ in outcomes if result is not None and result.success]
    print(f"   {SKILL}: {row['successes']}/{row['trials']} ({format_rate(row['successes'], row['trials'])})")
    if steps:
        print(f"   mean steps to success: {sum(steps) / len(steps):.1f}")
    print()


def main():
    """Run all examples"""
    print("🚀 Skill Pipeline Examples")
    print("=" * 50)
    print()

    try:
        clips = synth_example()
        lift_example(clips)
        samples = dataset_example(clips)
        rollout_example(samples)

        print("✅ All examples completed successfully!")

    except SkillPipelineError as e:
        print(f"❌ Error running examples: {type(e).__name__}: {e}")


if __name__ == "__main__":
    main()
