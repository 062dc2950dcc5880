#!/usr/bin/env python3
"""
🍳 Skill Pipeline
Distils kitchen manipulation skills from (synthetic) egocentric video:
scripted demos -> wrist detections -> world trajectories -> skill datasets
-> retrieval policies -> chunked rollouts in the sim kitchen -> success table.

Usage:
  python skill_pipeline.py [--seed S] [--config FILE] [--out-dir DIR] [--workers W] <command> [options]

Commands:
  synth     scripted demos -> detections, cameras, features, annotations, ground truth
  extract   detections + cameras -> world wrist trajectories
  build     trajectories + annotations + features -> per-skill datasets
  fit       datasets -> retrieval indexes
  eval      seeded rollouts in the sim kitchen -> trial records
  grasp     grasp selection on candidate/affordance files, all three modes
  report    trial records -> success table
  verify    recovered trajectories vs ground truth

Exit codes: 0 ok, 1 verification failed, 2 bad input/config, 3 empty output,
4 any other pipeline error.
"""

import argparse
import json
import sys
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from skill_tools import records
from skill_tools.action_codec import ActionMode
from skill_tools.dataset_builder import (DEFAULT_SKILL_KEYWORDS, Annotation, build_samples, clip_segments,
                                         make_skill_clip, read_annotations, read_dataset, read_features,
                                         segment_by_skill, write_annotations, write_dataset, write_features)
from skill_tools.egolift import (HandDetection, WristTrajectory, camera_record, detection_record,
                                 lift_clips, read_cameras, read_detections, read_trajectories,
                                 translation_rmse, write_trajectories)
from skill_tools.errors import (ClipTooShort, ConfigError, MissingFeature, NoViableGrasp, RecordFormatError,
                                RecordIOError, SkillPipelineError, WindowOutOfRange)
from skill_tools.executor import (STREAM_SYNTH, Calibration, ScriptedReplayPolicy, TrialSpec, derive_seed,
                                  format_rate, run_trial, run_trials, success_table, trial_specs, trial_summary)
from skill_tools.grasp_select import (SelectionMode, plan_linear_approach, read_affordance, read_candidates,
                                      read_depth_map, select_grasp)
from skill_tools.policy_retrieval import RetrievalPolicy, StraightLinePolicy, fit, load_index, save_index
from skill_tools.se3_core import Pose6D, pose_error
from skill_tools import simkitchen
from skill_tools.settings import SKILLS, RunConfig, load_config

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_EMPTY = 3
EXIT_PIPELINE_ERROR = 4

STREAM_NOISE = 2
TRIALS_FORMAT = 'trial-records'
TRIALS_VERSION = 1

SKILL_PHRASES = {
    'slide-open': 'open the drawer',
    'slide-close': 'close the drawer',
    'hinge-open': 'open the cupboard',
    'hinge-close': 'close the cupboard',
    'pick': 'pick up the mug',
    'place': 'put the mug down',
    'pour': 'pour water into the bowl',
    'cut': 'cut the bread',
    'stir': 'stir the pot',
}


class Layout:
    """Default file locations under --out-dir; every command can override its inputs"""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.synth = self.root / 'synth'
        self.detections = self.synth / 'detections.jsonl'
        self.cameras = self.synth / 'cameras.jsonl'
        self.features = self.synth / 'features.jsonl'
        self.annotations = self.synth / 'annotations.jsonl'
        self.truth = self.synth / 'ground_truth.jsonl'
        self.scenes = self.synth / 'scenes.jsonl'
        self.trajectories = self.root / 'trajectories.jsonl'
        self.datasets = self.root / 'datasets'
        self.index = self.root / 'index'
        self.eval = self.root / 'eval'
        self.trials = self.eval / 'trials.jsonl'
        self.report = self.eval / 'report.jsonl'
        self.grasp = self.root / 'grasp'


def variant_name(mode: ActionMode, n: int) -> str:
    return f"{mode.label}-n{n}"


def parse_skills(text: Optional[str]) -> List[str]:
    if not text or text == 'all':
        return list(SKILLS)
    skills = [s.strip() for s in text.split(',') if s.strip()]
    unknown = [s for s in skills if s not in SKILLS]
    if unknown:
        raise ConfigError(f"unknown skills {unknown}; expected some of {list(SKILLS)}")
    return skills


def parse_floats(text: str, count: int, name: str) -> Tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(','))
    except ValueError:
        raise ConfigError(f"--{name} needs {count} comma-separated numbers, got {text!r}")
    if len(values) != count:
        raise ConfigError(f"--{name} needs {count} comma-separated numbers, got {text!r}")
    return values


# ---------------------------------------------------------------------------
# synth

@dataclass
class SyntheticClip:
    clip_id: str
    skill: str
    success: bool
    detections: List[HandDetection]
    cameras: List
    features: List[Tuple[float, ...]]
    annotations: List[Annotation]
    truth: WristTrajectory
    scene: simkitchen.SimScene
    task: simkitchen.TaskSpec


def synthesize_clip(skill: str, index: int, seed: int, noise: simkitchen.DetectionNoise,
                    feature_dim: int) -> SyntheticClip:
    """One scripted demo rendered as a noisy egocentric clip"""
    skill_index = SKILLS.index(skill)
    scene_seed = derive_seed(seed, STREAM_SYNTH, skill_index, index)
    noise_seed = derive_seed(seed, STREAM_NOISE, skill_index, index)
    scene, task = simkitchen.random_scene(skill, scene_seed)
    demo = simkitchen.scripted_demo(task, scene)
    snapshots = simkitchen.replay_demo(scene, demo)
    clip_id = f"{skill}-{index:03d}"
    dets, cams, feats = simkitchen.render_detections(demo.gripper_poses, demo.camera_frames, noise, noise_seed,
                                                     snapshots, task, clip_id, feature_dim)
    last = len(demo.gripper_poses) - 1
    reach = scene.objects[task.grasp_id].kind.split('-')[0]
    annotations = [
        Annotation(clip_id, f"reach toward the {reach}", 0, demo.grasp_frame - 1),
        Annotation(clip_id, SKILL_PHRASES[skill], demo.grasp_frame, last),
    ]
    truth = WristTrajectory(clip_id, tuple(enumerate(demo.gripper_poses)))
    return SyntheticClip(clip_id, skill, simkitchen.success(snapshots[-1], task), dets, cams, feats,
                         annotations, truth, scene, task)


def cmd_synth(args, config: RunConfig, layout: Layout) -> int:
    skills = parse_skills(args.skills)
    if args.clean:
        noise = simkitchen.DetectionNoise()
    else:
        noise = simkitchen.DetectionNoise(config.noise_translation, config.noise_rotation, config.dropout)
    jobs = [(skill, k) for skill in skills for k in range(config.demos)]
    print(f"📊 Synthesizing {len(jobs)} demos ({config.demos} per skill, {len(skills)} skills)")
    print(f"   noise: {noise.translation_std * 1000:.1f} mm, {noise.rotation_std:.3f} rad, dropout {noise.dropout:.2f}")
    start = time.time()
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        clips = list(pool.map(lambda job: synthesize_clip(job[0], job[1], config.seed, noise, config.feature_dim),
                              jobs))

    failed = [c.clip_id for c in clips if not c.success]
    for clip_id in failed:
        print(f"⚠️ scripted demo {clip_id} did not reach success; dropped")
    clips = [c for c in clips if c.success]
    if not clips:
        print("❌ No successful demos")
        return EXIT_EMPTY

    records.write_records(layout.detections, (detection_record(d) for c in clips for d in c.detections))
    records.write_records(layout.cameras, (camera_record(c.clip_id, cam) for c in clips for cam in c.cameras))
    write_features(layout.features, ((c.clip_id, cam.frame_id, f) for c in clips
                                     for cam, f in zip(c.cameras, c.features)))
    write_annotations(layout.annotations, (a for c in clips for a in c.annotations))
    write_trajectories(layout.truth, [c.truth for c in clips])
    simkitchen.write_scenes(layout.scenes, [(c.scene, c.task) for c in clips])

    frames = sum(len(c.cameras) for c in clips)
    detected = sum(len(c.detections) for c in clips)
    print(f"✅ {len(clips)} clips, {frames} frames, {detected} detections in {time.time() - start:.1f}s")
    print(f"💾 Wrote {layout.synth}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# extract

def cmd_extract(args, config: RunConfig, layout: Layout) -> int:
    detections_path = Path(args.detections or layout.detections)
    cameras_path = Path(args.cameras or layout.cameras)
    out_path = Path(args.out or layout.trajectories)
    print(f"📊 Lifting {detections_path} with cameras {cameras_path}")
    dets = read_detections(detections_path)
    cams = read_cameras(cameras_path)
    if not dets:
        print(f"❌ No detections in {detections_path}")
        return EXIT_EMPTY

    trajectories, failures = lift_clips(dets, cams, config.min_confidence, config.max_gap,
                                        ignore_extrinsics=args.ignore_extrinsics)
    for clip_id, message in failures.items():
        print(f"⚠️ {clip_id}: {message}")
    if not trajectories:
        print("❌ No trajectory survived lifting")
        return EXIT_EMPTY

    write_trajectories(out_path, trajectories)
    sources = defaultdict(int)
    for traj in trajectories:
        sources[traj.clip_id.split('#', 1)[0]] += 1
    filled = sum(b - a + 1 for t in trajectories for a, b in t.source_gaps)
    print(f"✅ {len(sources)} clips -> {len(trajectories)} trajectories "
          f"({sum(1 for v in sources.values() if v > 1)} split, {filled} frames filled, {len(failures)} failed)")
    print(f"💾 Wrote {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# build

def load_keywords(path: Optional[str]) -> Dict[str, List[str]]:
    if not path:
        return DEFAULT_SKILL_KEYWORDS
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read keyword file {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: bad keyword JSON ({e.msg})")
    if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
        raise ConfigError(f"{path}: keyword file must map skill -> list of phrases")
    return {str(k): [str(p) for p in v] for k, v in data.items()}


def cmd_build(args, config: RunConfig, layout: Layout) -> int:
    skills = parse_skills(args.skills)
    try:
        modes = [ActionMode.parse(m) for m in (args.modes or config.action_mode).split(',')]
        sizes = [int(n) for n in args.chunk_sizes.split(',')] if args.chunk_sizes else [config.chunk_size]
    except ValueError as e:
        raise ConfigError(f"bad --modes/--chunk-sizes: {e}")
    if any(n < 1 for n in sizes):
        raise ConfigError(f"chunk sizes must be >= 1, got {sizes}")

    annotations = read_annotations(args.annotations or layout.annotations)
    features = read_features(args.features or layout.features)
    cameras = read_cameras(args.cameras or layout.cameras)
    trajectories = read_trajectories(args.trajectories or layout.trajectories)
    keywords = load_keywords(args.keywords)

    texts = {(a.clip_id, (a.start_frame, a.end_frame)): a.text for a in annotations}
    assignments = [a for a in segment_by_skill(annotations, keywords) if a[1] in skills]
    print(f"📊 {len(assignments)} of {len(annotations)} annotations assigned to {len(skills)} skills")

    total = 0
    for mode in modes:
        for n in sizes:
            variant = variant_name(mode, n)
            by_skill: Dict[str, list] = defaultdict(list)
            skipped = 0
            for clip_id, skill, frame_range in assignments:
                for piece in clip_segments(trajectories, clip_id, frame_range):
                    try:
                        clip = make_skill_clip(piece.clip_id, skill, texts.get((clip_id, frame_range), ''),
                                               piece, features.get(clip_id, {}))
                        by_skill[skill].extend(build_samples(clip, cameras.get(clip_id, []), n, mode, config.stride))
                    except (ClipTooShort, MissingFeature, WindowOutOfRange) as e:
                        skipped += 1
                        if args.verbose:
                            print(f"   ⚠️ {piece.clip_id}: {e}")
            for skill in skills:
                samples = by_skill.get(skill)
                if not samples:
                    print(f"   ⚠️ {variant} {skill}: no samples")
                    continue
                path = layout.datasets / variant / f"{skill}.jsonl"
                write_dataset(samples, path)
                total += len(samples)
                print(f"   ✅ {variant} {skill}: {len(samples)} samples")
            if skipped:
                print(f"   ⚠️ {variant}: {skipped} clip pieces skipped")
    if not total:
        print("❌ No training samples built")
        return EXIT_EMPTY
    print(f"💾 {total} samples under {layout.datasets}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit

def cmd_fit(args, config: RunConfig, layout: Layout) -> int:
    datasets = Path(args.datasets or layout.datasets)
    files = sorted(datasets.glob('*/*.jsonl'))
    if args.variants:
        wanted = set(args.variants.split(','))
        files = [f for f in files if f.parent.name in wanted]
    if not files:
        print(f"❌ No datasets under {datasets}")
        return EXIT_EMPTY
    weights = (config.w_obs, config.w_goal, config.w_pose)
    for path in files:
        index = fit(read_dataset(path), weights, config.pose_scale)
        target = layout.index / path.parent.name / path.stem
        save_index(index, target)
        print(f"   ✅ {path.parent.name} {path.stem}: {len(index)} samples, d={index.feature_dim}, n={index.chunk_size}")
    print(f"💾 {len(files)} indexes under {layout.index}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval

def _straight_line_factory(n: int):
    def factory(spec: TrialSpec, scene, task, calib: Calibration):
        demo = simkitchen.scripted_demo(task, scene)
        start = np.asarray(demo.gripper_poses[demo.grasp_frame].translation)
        end = np.asarray(demo.gripper_poses[-1].translation)
        displacement = calib.camera_to_robot.rotation.T @ (end - start)
        return StraightLinePolicy(displacement, len(demo.gripper_poses) - 1 - demo.grasp_frame, n)
    return factory


def _replay_factory(n: int):
    def factory(spec: TrialSpec, scene, task, calib: Calibration):
        demo = simkitchen.scripted_demo(task, scene)
        return ScriptedReplayPolicy(demo.gripper_poses[demo.grasp_frame + 1:], calib, n)
    return factory


def _grasp_modes(text: str) -> List[Optional[SelectionMode]]:
    if text == 'post-grasp':
        return [None]
    if text == 'all':
        return list(SelectionMode)
    return [SelectionMode(text)]


def cmd_eval(args, config: RunConfig, layout: Layout) -> int:
    skills = parse_skills(args.skills)
    grasp_modes = _grasp_modes(args.grasp_mode)
    index_root = Path(args.index_dir or layout.index)

    plans = []   # (variant, skill, factory, feature_dim, n)
    if args.policy == 'retrieval':
        variants = sorted(p.name for p in index_root.iterdir() if p.is_dir()) if index_root.is_dir() else []
        if args.variants:
            variants = [v for v in variants if v in set(args.variants.split(','))]
        for variant in variants:
            for skill in skills:
                directory = index_root / variant / skill
                if not directory.is_dir():
                    print(f"   ⚠️ no index for {variant} {skill}")
                    continue
                policy = RetrievalPolicy(load_index(directory))
                plans.append((variant, skill, lambda *_, p=policy: p, policy.index.feature_dim, policy.chunk_size))
    else:
        factory = (_replay_factory if args.policy == 'replay' else _straight_line_factory)(config.chunk_size)
        for skill in skills:
            plans.append((f"{args.policy}-n{config.chunk_size}", skill, factory, config.feature_dim, config.chunk_size))
    if not plans:
        print(f"❌ Nothing to evaluate (index dir {index_root})")
        return EXIT_EMPTY

    print(f"🚀 Evaluating {len(plans)} policies x {config.trials} trials x {len(grasp_modes)} grasp modes "
          f"(seed {config.seed}, {config.workers} workers)")
    summaries = []
    log_dir = layout.eval / 'logs' if args.rollout_logs else None
    for variant, skill, factory, feature_dim, n in plans:
        specs = trial_specs([skill], config.trials, config.seed)
        for grasp_mode in grasp_modes:
            label = grasp_mode.value if grasp_mode is not None else 'post-grasp'
            print(f"📊 {variant} {skill} ({label})")

            def runner(spec, factory=factory, feature_dim=feature_dim, n=n, grasp_mode=grasp_mode):
                return run_trial(spec, factory, feature_dim, config.budget, n, grasp_mode, config.score_threshold,
                                 record_snapshots=log_dir is not None)

            for spec, result, error in run_trials(specs, runner, config.workers, verbose=args.verbose):
                summaries.append(trial_summary(spec, result, error, variant=variant, policy=args.policy,
                                               grasp_mode=label))
                if log_dir is not None and result is not None:
                    path = log_dir / variant / label / f"{skill}-{spec.trial:03d}.jsonl"
                    simkitchen.write_rollout_log(path, result.snapshots, result.task)

    head = records.header(TRIALS_FORMAT, TRIALS_VERSION, seed=config.seed, trials=config.trials)
    out_path = Path(args.out or layout.trials)
    records.write_records(out_path, [head] + summaries)
    successes = sum(1 for s in summaries if s['success'])
    print(f"✅ {successes}/{len(summaries)} successful trials ({format_rate(successes, len(summaries))})")
    print(f"💾 Wrote {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report

def read_trials(path) -> List[Dict]:
    rows = records.read_records(path)
    if not rows:
        return []
    line_no, head = rows[0]
    records.check_header(head, TRIALS_FORMAT, TRIALS_VERSION, path, line_no)
    out = []
    for line_no, rec in rows[1:]:
        for name in ('task', 'success'):
            records.field(rec, name, path, line_no)
        out.append(rec)
    return out


def cmd_report(args, config: RunConfig, layout: Layout) -> int:
    trials_path = Path(args.trials or layout.trials)
    summaries = read_trials(trials_path)
    if not summaries:
        print(f"❌ No trial records in {trials_path}")
        return EXIT_EMPTY
    groups: Dict[Tuple[str, str, str], List[Dict]] = defaultdict(list)
    for rec in summaries:
        groups[(rec.get('variant', ''), rec.get('policy', ''), rec.get('grasp_mode', ''))].append(rec)

    rows = []
    print("📊 SUCCESS RATES (success = per-skill proxy predicate in the sim kitchen)")
    for (variant, policy, grasp_mode), group in sorted(groups.items()):
        print(f"\n{policy} {variant} [{grasp_mode}]")
        print(f"  {'skill':<12} {'success':>9} {'rate':>7} {'grasp fail':>11} {'post-grasp fail':>16}")
        for skill, row in success_table(group).items():
            print(f"  {skill:<12} {row['successes']:>4}/{row['trials']:<4} {row['rate']:>7} "
                  f"{row['grasp']:>11} {row['post-grasp']:>16}")
            rows.append({'variant': variant, 'policy': policy, 'grasp_mode': grasp_mode, 'task': skill,
                         'successes': row['successes'], 'trials': row['trials'], 'rate': row['rate'],
                         'grasp_failures': row['grasp'], 'post_grasp_failures': row['post-grasp'],
                         'errors': row['error']})
    out_path = Path(args.out or layout.report)
    records.write_records(out_path, rows)
    print(f"\n💾 Wrote {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# grasp

def cmd_grasp(args, config: RunConfig, layout: Layout) -> int:
    intrinsics = parse_floats(args.intrinsics, 4, 'intrinsics') if args.intrinsics else simkitchen.INTRINSICS
    initial = parse_floats(args.initial_orientation, 3, 'initial-orientation')
    depth_map = read_depth_map(args.depth_map) if args.depth_map else None
    affordance = read_affordance(args.affordance, intrinsics, depth_map, config.depth_patch)
    candidates = read_candidates(args.candidates)
    print(f"📊 Affordance pixel ({affordance.pixel[0]:.1f}, {affordance.pixel[1]:.1f}) at {affordance.depth:.3f} m, "
          f"{len(candidates)} candidates")

    results = []
    for mode in SelectionMode:
        try:
            pose = select_grasp(affordance, candidates, mode, config.score_threshold, initial)
        except NoViableGrasp as e:
            print(f"   ❌ {mode.value}: {e}")
            results.append({'mode': mode.value, 'ok': False, 'error': str(e)})
            continue
        waypoints = plan_linear_approach(pose, config.standoff, config.approach_step)
        print(f"   ✅ {mode.value}: grasp at ({pose.translation[0]:.3f}, {pose.translation[1]:.3f}, "
              f"{pose.translation[2]:.3f}), {len(waypoints)} waypoints")
        results.append({'mode': mode.value, 'ok': True, 'pose': list(pose.as_vector()),
                        'approach': [list(w.as_vector()) for w in waypoints]})
    out_path = Path(args.out or layout.grasp / 'selection.jsonl')
    records.write_records(out_path, results)
    print(f"💾 Wrote {out_path}")
    return EXIT_OK if any(r['ok'] for r in results) else EXIT_EMPTY


# ---------------------------------------------------------------------------
# verify

def cmd_verify(args, config: RunConfig, layout: Layout) -> int:
    recovered = read_trajectories(args.trajectories or layout.trajectories)
    truth = {t.clip_id: t for t in read_trajectories(args.truth or layout.truth)}
    max_dt = max_dr = 0.0
    rec_poses: List[Pose6D] = []
    true_poses: List[Pose6D] = []
    missing = []
    for traj in recovered:
        reference = truth.get(traj.clip_id.split('#', 1)[0])
        if reference is None:
            missing.append(traj.clip_id)
            continue
        for frame_id, pose in traj.poses:
            expected = reference.pose_at(frame_id)
            if expected is None:
                missing.append(f"{traj.clip_id}@{frame_id}")
                continue
            dt, dr = pose_error(pose, expected)
            max_dt, max_dr = max(max_dt, dt), max(max_dr, dr)
            rec_poses.append(pose)
            true_poses.append(expected)
    if not rec_poses:
        print("❌ Nothing to compare")
        return EXIT_EMPTY
    rmse = translation_rmse(rec_poses, true_poses)
    print(f"📊 {len(recovered)} trajectories, {len(rec_poses)} frames compared")
    print(f"   max translation error {max_dt:.3e} m, max rotation error {max_dr:.3e} rad, RMSE {rmse * 1000:.3f} mm")
    for item in missing:
        print(f"   ⚠️ no ground truth for {item}")

    if args.rmse_band:
        low, high = parse_floats(args.rmse_band, 2, 'rmse-band')
        ok = low <= rmse * 1000.0 <= high and not missing
        print(f"{'✅' if ok else '❌'} RMSE {rmse * 1000:.3f} mm {'inside' if ok else 'outside'} [{low}, {high}] mm")
    else:
        ok = max_dt <= args.tolerance and max_dr <= args.tolerance and not missing
        print(f"{'✅' if ok else '❌'} max error {'within' if ok else 'above'} tolerance {args.tolerance:g}")
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='skill_pipeline.py', description='Skill distillation pipeline')
    parser.add_argument('--seed', type=int, default=None, help='run seed (all randomness flows from it)')
    parser.add_argument('--config', default=None, help='key=value settings file')
    parser.add_argument('--out-dir', default='pipeline_out', help='output directory (default: pipeline_out)')
    parser.add_argument('--workers', type=int, default=None, help='thread pool size')
    parser.add_argument('-q', '--quiet', dest='verbose', action='store_false', help='less per-item output')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help='generate scripted demos and synthetic detections')
    p.add_argument('--skills', default='all')
    p.add_argument('--demos', type=int, default=None, help='demos per skill')
    p.add_argument('--clean', action='store_true', help='no detection noise and no dropout')
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser('extract', help='lift detections into world wrist trajectories')
    p.add_argument('--detections')
    p.add_argument('--cameras')
    p.add_argument('--out')
    p.add_argument('--min-confidence', type=float, default=None)
    p.add_argument('--max-gap', type=int, default=None)
    p.add_argument('--ignore-extrinsics', action='store_true', help='no-SfM ablation: treat every camera as static')
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser('build', help='build per-skill training datasets')
    p.add_argument('--skills', default='all')
    p.add_argument('--annotations')
    p.add_argument('--features')
    p.add_argument('--cameras')
    p.add_argument('--trajectories')
    p.add_argument('--keywords', help='JSON file mapping skill -> keyword phrases')
    p.add_argument('--modes', help='comma-separated action modes, e.g. relT+relO,absT+absO')
    p.add_argument('--chunk-sizes', help='comma-separated chunk sizes, e.g. 5,10,20')
    p.add_argument('--stride', type=int, default=None)
    p.set_defaults(handler=cmd_build)

    p = sub.add_parser('fit', help='fit retrieval indexes on the datasets')
    p.add_argument('--datasets')
    p.add_argument('--variants', help='comma-separated dataset variants, e.g. relT+relO-n10')
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser('eval', help='seeded closed-loop rollouts in the sim kitchen')
    p.add_argument('--skills', default='all')
    p.add_argument('--trials', type=int, default=None)
    p.add_argument('--budget', type=int, default=None)
    p.add_argument('--index-dir')
    p.add_argument('--variants')
    p.add_argument('--policy', choices=('retrieval', 'straight-line', 'replay'), default='retrieval')
    p.add_argument('--grasp-mode', default='post-grasp',
                   choices=['post-grasp', 'all'] + [m.value for m in SelectionMode])
    p.add_argument('--chunk-size', type=int, default=None, help='chunk size for the non-retrieval policies')
    p.add_argument('--rollout-logs', action='store_true', help='write per-trial rollout logs')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('grasp', help='grasp selection in all three modes')
    p.add_argument('--candidates', required=True)
    p.add_argument('--affordance', required=True)
    p.add_argument('--depth-map')
    p.add_argument('--intrinsics', help='fx,fy,cx,cy')
    p.add_argument('--initial-orientation', default='0,0,0', help='alpha,beta,gamma of the gripper in camera frame')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_grasp)

    p = sub.add_parser('report', help='success table from trial records')
    p.add_argument('--trials')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser('verify', help='compare recovered trajectories with ground truth')
    p.add_argument('--trajectories')
    p.add_argument('--truth')
    p.add_argument('--tolerance', type=float, default=1e-9)
    p.add_argument('--rmse-band', help='low,high in millimetres; checks RMSE instead of max error')
    p.set_defaults(handler=cmd_verify)
    return parser


def resolve_config(args) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    overrides = {name: getattr(args, name) for name in names if getattr(args, name, None) is not None}
    return load_config(args.config, **overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    layout = Layout(args.out_dir)
    try:
        config = resolve_config(args)
        return args.handler(args, config, layout)
    except (RecordFormatError, RecordIOError, ConfigError) as e:
        print(f"❌ {e}")
        return EXIT_BAD_INPUT
    except SkillPipelineError as e:
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_PIPELINE_ERROR


if __name__ == '__main__':
    sys.stdout.reconfigure(line_buffering=True)
    sys.exit(main())
