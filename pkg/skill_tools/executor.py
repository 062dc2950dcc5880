"""
🤖 Chunked Rollout Executor
Deployment loop: read the observation, query the policy, map the camera-frame
chunk into the robot frame and execute every action of the chunk before the
next query. Also runs seeded trial batches across a thread pool.

Episode step budget counts post-grasp steps only; grasp-phase steps are
reported separately in RolloutResult.grasp_steps.
"""

import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .action_codec import REL_REL, ActionChunk, ActionMode, decode_chunk, encode_chunk
from .errors import ChunkSizeMismatch, InfeasibleTask, NoViableGrasp
from .grasp_select import SelectionMode, plan_linear_approach, select_grasp
from .policy_retrieval import PolicyQuery
from .se3_core import CameraFrame, Pose6D, RigidTransform, compose, invert
from .settings import APPROACH_STEP, BUDGET, CHUNK_SIZE, SCORE_THRESHOLD, SKILLS, STANDOFF
from . import simkitchen
from .simkitchen import CLOSE, HOLD, OPEN, SimScene, TaskSpec

STREAM_SYNTH = 0
STREAM_EVAL = 1


@dataclass(frozen=True)
class Calibration:
    camera_to_robot: RigidTransform

    @classmethod
    def identity(cls) -> 'Calibration':
        return cls(RigidTransform.identity())

    @classmethod
    def from_camera(cls, camera: CameraFrame) -> 'Calibration':
        """Calibration of a static camera whose world frame is the robot base frame"""
        return cls(camera.camera_to_world())


@dataclass
class RolloutResult:
    steps: int
    inference_calls: int
    success: bool
    final_scene: SimScene
    pose_log: List[Pose6D] = field(default_factory=list)
    failure_stage: Optional[str] = None     # None | 'grasp' | 'post-grasp'
    grasp_steps: int = 0
    steps_per_query: List[int] = field(default_factory=list)
    goal_queries: List[Tuple[float, ...]] = field(default_factory=list)
    snapshots: List[SimScene] = field(default_factory=list)
    task: Optional[TaskSpec] = None


def derive_seed(seed: int, stream: int, skill_index: int, trial: int) -> int:
    """Per-trial seed by counter mixing; independent of execution order"""
    return int(np.random.SeedSequence([int(seed), int(stream), int(skill_index), int(trial)]).generate_state(1)[0])


def camera_to_robot_chunk(chunk: ActionChunk, calib: Calibration) -> List[Pose6D]:
    return [Pose6D.from_transform(compose(calib.camera_to_robot, p.to_transform())) for p in decode_chunk(chunk)]


def robot_to_camera(pose: Pose6D, calib: Calibration) -> Pose6D:
    return Pose6D.from_transform(compose(invert(calib.camera_to_robot), pose.to_transform()))


class ScriptedReplayPolicy:
    """Oracle that replays a demo's post-grasp path chunk by chunk

    Each query encodes the query pose followed by the next n unvisited path
    poses, so relative chunks reproduce the demo path exactly when execution
    tracks it. The path is clamped at its last pose.
    """

    def __init__(self, world_path: Sequence[Pose6D], calib: Calibration, chunk_size: int = CHUNK_SIZE,
                 mode: ActionMode = REL_REL):
        if not world_path:
            raise ValueError("replay path is empty")
        self.path = [robot_to_camera(p, calib) for p in world_path]
        self.chunk_size = int(chunk_size)
        self.mode = mode
        self._cursor = 0

    def predict(self, query: PolicyQuery) -> ActionChunk:
        last = len(self.path) - 1
        window = [query.current_pose]
        window += [self.path[min(self._cursor + k, last)] for k in range(self.chunk_size)]
        self._cursor += self.chunk_size
        return encode_chunk(window, self.mode, self.chunk_size)


def establish_grasp(env: SimScene, task: TaskSpec) -> SimScene:
    """Post-grasp mode start: gripper closed on the task's grasp pose"""
    return simkitchen.step(env, simkitchen.canonical_grasp_pose(env, task), CLOSE)


def execute_grasp(env: SimScene, task: TaskSpec, calib: Calibration, mode: SelectionMode,
                  rng: np.random.Generator, score_threshold: float = SCORE_THRESHOLD,
                  standoff: float = STANDOFF, approach_step: float = APPROACH_STEP) -> Tuple[SimScene, int, bool]:
    """Grasp phase: affordance + candidates -> selected grasp -> linear approach -> close

    Returns (scene, steps taken, whether the right object is held).
    """
    affordance = simkitchen.propose_affordance(env, task, rng)
    candidates = simkitchen.propose_grasps(env, task, rng)
    initial = robot_to_camera(env.gripper.pose, calib).orientation
    grasp_cam = select_grasp(affordance, candidates, mode, score_threshold, initial)
    grasp_world = Pose6D.from_transform(compose(calib.camera_to_robot, grasp_cam.to_transform()))
    waypoints = plan_linear_approach(grasp_world, standoff, approach_step)
    steps = 0
    for waypoint in waypoints[:-1]:
        env = simkitchen.step(env, waypoint, OPEN)
        steps += 1
    env = simkitchen.step(env, waypoints[-1], CLOSE)
    steps += 1
    return env, steps, env.gripper.attached_id == task.grasp_id


def run_episode(policy, env: SimScene, task: TaskSpec, calib: Calibration, goal_feature: Sequence[float],
                budget: int = BUDGET, n: int = CHUNK_SIZE, grasp_mode: Optional[SelectionMode] = None,
                rng: Optional[np.random.Generator] = None, score_threshold: float = SCORE_THRESHOLD,
                standoff: float = STANDOFF, approach_step: float = APPROACH_STEP,
                record_snapshots: bool = False) -> RolloutResult:
    """Run one episode; `policy` is anything with predict(PolicyQuery) -> ActionChunk

    grasp_mode None starts from an established grasp (post-grasp evaluation);
    otherwise the grasp phase runs first with that selection mode. Success is
    checked after every step; the policy is only queried at chunk boundaries.

    Every query but the last runs exactly n steps. The last chunk is cut
    short when the budget runs out (n does not divide the budget) or when
    the task succeeds mid-chunk, so steps == inference_calls * n only holds
    for a failed episode with budget % n == 0.
    """
    if budget < 1 or n < 1:
        raise ValueError(f"budget and n must be >= 1, got {budget} and {n}")
    goal = tuple(float(v) for v in goal_feature)
    grasp_steps = 0
    if grasp_mode is None:
        env = establish_grasp(env, task)
        grasp_steps = 1
    else:
        rng = rng if rng is not None else np.random.default_rng(env.rng_seed)
        try:
            env, grasp_steps, held = execute_grasp(env, task, calib, SelectionMode(grasp_mode), rng,
                                                   score_threshold, standoff, approach_step)
        except NoViableGrasp:
            return RolloutResult(0, 0, False, env, failure_stage='grasp', task=task)
        if not held:
            return RolloutResult(0, 0, False, env, failure_stage='grasp', grasp_steps=grasp_steps, task=task)

    result = RolloutResult(0, 0, simkitchen.success(env, task), env, grasp_steps=grasp_steps, task=task)
    if record_snapshots:
        result.snapshots.append(env)
    while not result.success and result.steps < budget:
        query = PolicyQuery(
            simkitchen.scene_features(env, task, env.camera, len(goal)),
            goal,
            robot_to_camera(env.gripper.pose, calib),
        )
        chunk = policy.predict(query)
        result.inference_calls += 1
        result.goal_queries.append(query.goal_feature)
        if chunk.n != n:
            raise ChunkSizeMismatch(f"policy returned a chunk of {chunk.n} actions, episode runs n={n}")
        executed = 0
        for target in camera_to_robot_chunk(chunk, calib):
            if result.steps >= budget:
                break
            env = simkitchen.step(env, target, HOLD)
            result.steps += 1
            executed += 1
            result.pose_log.append(env.gripper.pose)
            if record_snapshots:
                result.snapshots.append(env)
            if simkitchen.success(env, task):
                result.success = True
                break
        result.steps_per_query.append(executed)
    result.final_scene = env
    if not result.success:
        result.failure_stage = 'post-grasp'
    return result


# ---------------------------------------------------------------------------
# Trial batches

@dataclass(frozen=True)
class TrialSpec:
    skill: str
    trial: int
    seed: int           # run seed the trial seed was derived from
    scene_seed: int


def trial_specs(skills: Sequence[str], trials: int, seed: int, stream: int = STREAM_EVAL) -> List[TrialSpec]:
    return [TrialSpec(skill, k, seed, derive_seed(seed, stream, SKILLS.index(skill), k))
            for skill in skills for k in range(trials)]


def goal_feature_for(scene: SimScene, task: TaskSpec, dim: int) -> Tuple[float, ...]:
    """Feature of the scene after a scripted success, seen from the scene camera (the goal image)"""
    demo = simkitchen.scripted_demo(task, scene)
    final = simkitchen.replay_demo(scene, demo)[-1]
    return simkitchen.scene_features(final, task, scene.camera, dim)


PolicyFactory = Callable[[TrialSpec, SimScene, TaskSpec, Calibration], object]


def run_trial(spec: TrialSpec, policy_factory: PolicyFactory, feature_dim: int, budget: int = BUDGET,
              n: int = CHUNK_SIZE, grasp_mode: Optional[SelectionMode] = None,
              score_threshold: float = SCORE_THRESHOLD, record_snapshots: bool = False) -> RolloutResult:
    scene, task = simkitchen.random_scene(spec.skill, spec.scene_seed)
    calib = Calibration.from_camera(scene.camera)
    goal = goal_feature_for(scene, task, feature_dim)
    policy = policy_factory(spec, scene, task, calib)
    rng = np.random.default_rng(spec.scene_seed + 1)
    return run_episode(policy, scene, task, calib, goal, budget, n, grasp_mode, rng, score_threshold,
                       record_snapshots=record_snapshots)


def trial_summary(spec: TrialSpec, result: Optional[RolloutResult], error: Optional[str] = None,
                  **extra) -> Dict:
    record = {
        'task': spec.skill,
        'trial': spec.trial,
        'seed': spec.seed,
        'scene_seed': spec.scene_seed,
        'success': bool(result.success) if result else False,
        'steps': result.steps if result else 0,
        'inference_calls': result.inference_calls if result else 0,
        'grasp_steps': result.grasp_steps if result else 0,
        'failure_stage': (result.failure_stage if result else 'error'),
    }
    record.update(extra)
    if error:
        record['error'] = error
    return record


def run_trials(specs: Sequence[TrialSpec], runner: Callable[[TrialSpec], RolloutResult], workers: int = 4,
               verbose: bool = True) -> List[Tuple[TrialSpec, Optional[RolloutResult], Optional[str]]]:
    """Run trials on a thread pool; output order follows `specs` whatever the worker count"""
    start = time.time()
    outcomes: Dict[int, Tuple[TrialSpec, Optional[RolloutResult], Optional[str]]] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(runner, spec): i for i, spec in enumerate(specs)}
        for future in as_completed(futures):
            i = futures[future]
            spec = specs[i]
            try:
                result = future.result()
                outcomes[i] = (spec, result, None)
                if verbose:
                    mark = '✅' if result.success else '❌'
                    print(f"   {mark} {spec.skill} trial {spec.trial}: {result.steps} steps, "
                          f"{result.inference_calls} queries")
            except (InfeasibleTask, ValueError) as e:
                outcomes[i] = (spec, None, str(e))
                if verbose:
                    print(f"   ⚠️ {spec.skill} trial {spec.trial} errored: {e}")
    if verbose:
        print(f"⏱️ {len(specs)} trials in {time.time() - start:.1f}s with {workers} workers")
    return [outcomes[i] for i in range(len(specs))]


def format_rate(successes: int, trials: int) -> str:
    return f"{100.0 * successes / trials:.1f}%" if trials else "n/a"


def success_table(summaries: Sequence[Dict]) -> Dict[str, Dict]:
    """Per-skill successes, trial counts and failure-stage breakdown, in skill order"""
    table: Dict[str, Dict] = {}
    for rec in summaries:
        row = table.setdefault(rec['task'], {'successes': 0, 'trials': 0, 'grasp': 0, 'post-grasp': 0, 'error': 0})
        row['trials'] += 1
        if rec['success']:
            row['successes'] += 1
        elif rec.get('failure_stage') in ('grasp', 'post-grasp', 'error'):
            row[rec['failure_stage']] += 1
    ordered = {s: table[s] for s in SKILLS if s in table}
    ordered.update({s: row for s, row in table.items() if s not in ordered})
    for row in ordered.values():
        row['rate'] = format_rate(row['successes'], row['trials'])
    return ordered
