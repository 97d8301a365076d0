"""
Procedural motion-language synthesis.

Skeleton: 21 joints, xyz each, flattened joint-major into 63 columns.

     0 pelvis     1 spine      2 chest      3 neck       4 head
     5 l_shoulder 6 l_elbow    7 l_wrist    8 l_hand
     9 r_shoulder 10 r_elbow   11 r_wrist   12 r_hand
    13 l_hip      14 l_knee    15 l_ankle   16 l_foot
    17 r_hip      18 r_knee    19 r_ankle   20 r_foot

Body frame: x right, y up, z forward. Each primitive yields local joint
offsets, a forward root displacement and a yaw change per frame; the world
pose is ``root + R_y(yaw) @ local``. Root position and heading carry over
from one primitive to the next, so compositions are continuous.
"""

import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from loguru import logger

from mocap_text.exceptions import ConfigError, DimensionError
from mocap_text.models.sample_model import MotionSample
from mocap_text.models.segment_model import GroundTruthAnnotation, SegmentInterval
from mocap_text.schemas.data_schemas import ScenarioConfig

JOINT_COUNT = 21
REFERENCE_FPS = 20.0

REST_POSE = np.array(
    [
        [0.0, 1.0, 0.0],
        [0.0, 1.2, 0.0],
        [0.0, 1.4, 0.0],
        [0.0, 1.55, 0.0],
        [0.0, 1.7, 0.0],
        [-0.2, 1.45, 0.0],
        [-0.22, 1.2, 0.0],
        [-0.22, 0.95, 0.0],
        [-0.22, 0.87, 0.02],
        [0.2, 1.45, 0.0],
        [0.22, 1.2, 0.0],
        [0.22, 0.95, 0.0],
        [0.22, 0.87, 0.02],
        [-0.1, 1.0, 0.0],
        [-0.1, 0.55, 0.0],
        [-0.1, 0.1, 0.0],
        [-0.1, 0.02, 0.12],
        [0.1, 1.0, 0.0],
        [0.1, 0.55, 0.0],
        [0.1, 0.1, 0.0],
        [0.1, 0.02, 0.12],
    ]
)

UPPER_BODY = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]
LEFT_ARM, RIGHT_ARM = [6, 7, 8], [10, 11, 12]
LEFT_LEG, RIGHT_LEG = [14, 15, 16], [18, 19, 20]

# joint index after reflecting through the body midline
MIRROR_JOINTS = [0, 1, 2, 3, 4, 9, 10, 11, 12, 5, 6, 7, 8, 17, 18, 19, 20, 13, 14, 15, 16]
SIDE_WORDS = {"left": "right", "right": "left"}

SPEED_FACTORS = {"slow": 0.6, "normal": 1.0, "fast": 1.5}
SPEED_ADVERBS = {"slow": " slowly", "normal": "", "fast": " quickly"}


@dataclass
class PrimitiveFrames:
    local: np.ndarray  # (n, 21, 3) body-frame joint positions
    forward: np.ndarray  # (n,) root displacement along the heading
    yaw: np.ndarray  # (n,) heading change


def _envelope(n: int) -> np.ndarray:
    """Smooth 0 -> 1 -> 0 bump, zero at both ends"""
    return np.sin(np.pi * (np.arange(n) + 0.5) / n) ** 2


def _rest(n: int) -> np.ndarray:
    return np.repeat(REST_POSE[None], n, axis=0)


class MotionPrimitive(Protocol):
    """Protocol for motion primitives"""

    action_word: str
    duration: Tuple[int, int]

    def phrase(self, speed: str) -> str:
        ...

    def generate(self, n: int, speed: str, rng: np.random.Generator) -> PrimitiveFrames:
        ...


class WalkPrimitive:
    """Alternating leg and arm swing while the root advances"""

    action_word = "walks"
    duration = (20, 30)

    def __init__(self, direction: int):
        self.direction = direction

    def phrase(self, speed: str) -> str:
        way = "forward" if self.direction > 0 else "backward"
        return f"walks {way}{SPEED_ADVERBS[speed]}"

    def generate(self, n, speed, rng):
        factor = SPEED_FACTORS[speed]
        cycles = max(1.0, 0.08 * factor * n)
        phase = 2 * np.pi * cycles * np.arange(n) / n + rng.uniform(0, 0.3)
        swing = np.sin(phase)
        local = _rest(n)
        for joints, sign in ((LEFT_LEG, 1.0), (RIGHT_LEG, -1.0)):
            local[:, joints, 2] += (sign * 0.25 * swing)[:, None] * np.array([0.5, 1.0, 1.0])
            lift = 0.08 * np.maximum(0.0, sign * swing)
            local[:, joints, 1] += lift[:, None]
        for joints, sign in ((LEFT_ARM, -1.0), (RIGHT_ARM, 1.0)):
            local[:, joints, 2] += (sign * 0.15 * swing)[:, None]
        local[:, UPPER_BODY, 1] += 0.02 * np.abs(swing)[:, None]
        step = self.direction * 0.035 * factor
        return PrimitiveFrames(local, np.full(n, step), np.zeros(n))


class TurnPrimitive:
    """Half turn on the spot with small stepping"""

    action_word = "turns"
    duration = (12, 18)

    def phrase(self, speed: str) -> str:
        return "turns around"

    def generate(self, n, speed, rng):
        progress = 0.5 * (1 - np.cos(np.pi * np.arange(1, n + 1) / n))
        heading = np.pi * progress
        yaw = np.diff(np.concatenate([[0.0], heading]))
        local = _rest(n)
        stepping = 0.06 * np.abs(np.sin(4 * np.pi * np.arange(n) / n))
        local[:, LEFT_LEG, 1] += stepping[:, None]
        local[:, RIGHT_LEG, 1] += stepping[::-1][:, None]
        return PrimitiveFrames(local, np.zeros(n), yaw)


class WavePrimitive:
    """Right arm raised and swung sideways"""

    action_word = "waves"
    duration = (14, 20)

    def phrase(self, speed: str) -> str:
        return "waves with the right hand"

    def generate(self, n, speed, rng):
        env = _envelope(n)[:, None]
        raised = np.array([[0.35, 1.5, 0.05], [0.4, 1.8, 0.05], [0.42, 1.88, 0.05]])
        local = _rest(n)
        local[:, RIGHT_ARM] += env[:, :, None] * (raised - REST_POSE[RIGHT_ARM])[None]
        oscillation = 0.12 * np.sin(2 * np.pi * 3 * SPEED_FACTORS[speed] * np.arange(n) / n)
        local[:, [11, 12], 0] += (env[:, 0] * oscillation)[:, None]
        return PrimitiveFrames(local, np.zeros(n), np.zeros(n))


class KickPrimitive:
    """Right leg swung forward and back"""

    action_word = "kicks"
    duration = (10, 14)

    def phrase(self, speed: str) -> str:
        return "kicks with the right leg"

    def generate(self, n, speed, rng):
        env = _envelope(n)[:, None]
        extended = np.array([[0.1, 0.75, 0.3], [0.1, 0.6, 0.65], [0.1, 0.62, 0.78]])
        local = _rest(n)
        local[:, RIGHT_LEG] += env[:, :, None] * (extended - REST_POSE[RIGHT_LEG])[None]
        local[:, LEFT_ARM, 2] += 0.1 * env
        return PrimitiveFrames(local, np.zeros(n), np.zeros(n))


class StompPrimitive:
    """Left knee lifted high and dropped twice"""

    action_word = "stomps"
    duration = (12, 16)

    def phrase(self, speed: str) -> str:
        return "stomps with the left foot"

    def generate(self, n, speed, rng):
        lift = np.abs(np.sin(2 * np.pi * np.arange(n) / n))
        local = _rest(n)
        local[:, LEFT_LEG, 1] += (0.3 * lift)[:, None]
        local[:, 14, 2] += 0.2 * lift
        return PrimitiveFrames(local, np.zeros(n), np.zeros(n))


class SquatPrimitive:
    """Pelvis lowered with knees bent forward"""

    action_word = "squats"
    duration = (12, 18)

    def phrase(self, speed: str) -> str:
        return "squats down"

    def generate(self, n, speed, rng):
        env = _envelope(n)
        local = _rest(n)
        local[:, UPPER_BODY + [13, 17], 1] -= (0.35 * env)[:, None]
        local[:, [14, 18], 1] -= (0.12 * env)[:, None]
        local[:, [14, 18], 2] += (0.25 * env)[:, None]
        local[:, UPPER_BODY, 2] += (0.08 * env)[:, None]
        return PrimitiveFrames(local, np.zeros(n), np.zeros(n))


class PrimitiveFactory:
    """Factory class for the motion primitive library"""

    _primitives: Dict[str, MotionPrimitive] = {
        "walk-forward": WalkPrimitive(direction=1),
        "walk-backward": WalkPrimitive(direction=-1),
        "turn": TurnPrimitive(),
        "wave": WavePrimitive(),
        "kick": KickPrimitive(),
        "stomp": StompPrimitive(),
        "squat": SquatPrimitive(),
    }

    @classmethod
    def get_primitive(cls, name: str) -> MotionPrimitive:
        primitive = cls._primitives.get(name)
        if not primitive:
            raise ConfigError(f"Unsupported primitive: {name}")
        return primitive

    @classmethod
    def get_supported_primitives(cls) -> list:
        return list(cls._primitives.keys())

    @classmethod
    def action_words(cls) -> List[str]:
        return sorted({p.action_word for p in cls._primitives.values()})


def describe(phrases: Sequence[str]) -> List[str]:
    """Two templated descriptions listing phrases in chronological order"""
    if len(phrases) == 1:
        return [f"a person {phrases[0]}"]
    tight = " then ".join(phrases)
    loose = " and then ".join(phrases)
    if len(phrases) == 3:
        tight = f"{phrases[0]} then {phrases[1]} and then {phrases[2]}"
    return [f"a person {tight}", f"a person {loose}"]


def _to_world(local: np.ndarray, origin: np.ndarray, heading: np.ndarray) -> np.ndarray:
    cos, sin = np.cos(heading)[:, None], np.sin(heading)[:, None]
    x, y, z = local[..., 0], local[..., 1], local[..., 2]
    world = np.empty_like(local)
    world[..., 0] = origin[:, None, 0] + cos * x + sin * z
    world[..., 1] = y
    world[..., 2] = origin[:, None, 1] - sin * x + cos * z
    return world


def compose(
    names: Sequence[str],
    rng: np.random.Generator,
    fps: float = REFERENCE_FPS,
    noise: float = 0.0,
    idle: Tuple[int, int] = (3, 6),
) -> Tuple[np.ndarray, List[str], GroundTruthAnnotation]:
    """
    Render a primitive sequence with idle lead-in and lead-out.

    Args:
        names (Sequence[str]): Primitive names in order
        rng (np.random.Generator): Source of durations, speeds and noise
        fps (float): Output frame rate; durations scale from 20 fps
        noise (float): Std of Gaussian coordinate noise
        idle (Tuple[int, int]): Inclusive range of idle frames at each end

    Returns:
        Tuple: Frames (T, 63), descriptions and exact ground-truth intervals

    Raises:
        ConfigError: On an unknown primitive name
    """
    primitives = [PrimitiveFactory.get_primitive(name) for name in names]
    scale = fps / REFERENCE_FPS

    locals_, forwards, yaws, phrases, segments = [], [], [], [], []
    cursor = 0

    def idle_block():
        n = int(rng.integers(idle[0], idle[1] + 1))
        locals_.append(_rest(n))
        forwards.append(np.zeros(n))
        yaws.append(np.zeros(n))
        return n

    cursor += idle_block()
    for primitive in primitives:
        speed = str(rng.choice(list(SPEED_FACTORS)))
        low, high = primitive.duration
        n = max(2, int(round(rng.integers(low, high + 1) * scale)))
        if isinstance(primitive, WalkPrimitive) and speed == "slow":
            n = int(round(n * 1.25))
        block = primitive.generate(n, speed, rng)
        locals_.append(block.local)
        forwards.append(block.forward)
        yaws.append(block.yaw)
        phrases.append(primitive.phrase(speed))
        segments.append(SegmentInterval(cursor, cursor + n))
        cursor += n
    idle_block()

    local = np.concatenate(locals_)
    heading = np.cumsum(np.concatenate(yaws))
    forward = np.concatenate(forwards)
    origin = np.zeros((len(local), 2))
    origin[:, 0] = np.cumsum(forward * np.sin(heading))
    origin[:, 1] = np.cumsum(forward * np.cos(heading))

    world = _to_world(local, origin, heading)
    if noise > 0:
        world = world + rng.normal(0.0, noise, size=world.shape)
    annotation = GroundTruthAnnotation(
        action_words=[p.action_word for p in primitives], segments=segments
    )
    return world.reshape(len(world), JOINT_COUNT * 3), describe(phrases), annotation


def _validate_names(config: ScenarioConfig) -> None:
    names = list(config.primitives)
    for sequence in config.compositions or []:
        names.extend(sequence)
    for name in names:
        PrimitiveFactory.get_primitive(name)


def synth_generate(config: ScenarioConfig, seed: int) -> List[MotionSample]:
    """
    Generate a synthetic dataset.

    Args:
        config (ScenarioConfig): Scenario description
        seed (int): Generator seed; equal seeds give identical samples

    Returns:
        List[MotionSample]: Annotated samples ``synth-00000`` onwards

    Raises:
        ConfigError: If the scenario names an unknown primitive
    """
    _validate_names(config)
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(config.n_samples):
        if config.compositions:
            names: Optional[Sequence[str]] = config.compositions[i % len(config.compositions)]
        else:
            count = int(rng.integers(config.min_primitives, config.max_primitives + 1))
            names = [str(n) for n in rng.choice(config.primitives, size=count)]
        frames, descriptions, annotation = compose(
            names,
            rng,
            fps=config.fps,
            noise=config.noise,
            idle=(config.idle_min, config.idle_max),
        )
        samples.append(
            MotionSample(
                id=f"synth-{i:05d}",
                fps=config.fps,
                frames=frames,
                descriptions=descriptions,
                annotation=annotation,
            )
        )
    logger.info(f"Synthesized {len(samples)} samples with seed {seed}")
    return samples


def mirror_sample(sample: MotionSample) -> MotionSample:
    """
    Reflect a skeleton motion left to right.

    Left and right joints trade places and x changes sign; "left" and "right"
    swap in the descriptions. Action words and their intervals are unchanged.

    Raises:
        DimensionError: If frames are not 21 joints of xyz
    """
    if sample.width != JOINT_COUNT * 3:
        raise DimensionError(f"cannot mirror frames of width {sample.width}")
    joints = sample.frames.reshape(sample.frame_count, JOINT_COUNT, 3)[:, MIRROR_JOINTS].copy()
    joints[..., 0] *= -1.0
    descriptions = [
        re.sub(r"\b(left|right)\b", lambda m: SIDE_WORDS[m.group(1).lower()], d, flags=re.IGNORECASE)
        for d in sample.descriptions
    ]
    annotation = None
    if sample.annotation is not None:
        annotation = GroundTruthAnnotation(
            action_words=list(sample.annotation.action_words),
            segments=list(sample.annotation.segments),
        )
    return MotionSample(
        id=f"{sample.id}-mirror",
        fps=sample.fps,
        frames=joints.reshape(sample.frame_count, JOINT_COUNT * 3),
        descriptions=descriptions,
        annotation=annotation,
    )


def mirror_samples(samples: Sequence[MotionSample]) -> List[MotionSample]:
    """Originals followed by their mirrored copies"""
    mirrored = [mirror_sample(s) for s in samples]
    logger.info(f"Added {len(mirrored)} mirrored samples")
    return list(samples) + mirrored
