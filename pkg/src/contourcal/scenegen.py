"""Domain-randomized scene configurations for an external renderer.

Poses and randomization come from two separate counter-based streams keyed by
``(seed, purpose)`` with the scene index in the counter, so scene ``i`` can be
built without touching scenes ``0..i-1`` and the pose list of a dataset does
not depend on which DR components are switched on.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DataError, EmptyCatalog
from .geometry import EulerPose, PoseRangeTable

SCHEMA_VERSION = 1
PURPOSE_POSE = 0
PURPOSE_DR = 1

LIGHT_KINDS = ("point", "sun", "area", "hemi")
N_CONVEX_MAPS = 19
BACKGROUND_RATIOS = (("surgery", 0.25), ("coco", 0.50), ("contextual", 0.25))

# values the source leaves open; emitted in every header so a renderer can see them
DR_DEFAULTS = {
    "intensity_range": [5.0, 1.0e6],
    "intensity_distribution": "log-uniform",
    "light_box_mm": 500.0,
    "canonical_light": {"kind": "point", "position": [0.0, 0.0, -100.0], "intensity": 1000.0},
    "hue_shift_range": [-0.5, 0.5],
    "brightness_shift_range": [-0.3, 0.3],
    "canonical_roughness": 0.5,
    "per_part_probability": 0.5,
    "scratch_count_range": [5, 30],
    "scratch_length_mm_range": [1.0, 10.0],
    "scratch_width_mm_range": [0.05, 0.3],
    "augmentation": {"hue_shift": [-0.1, 0.1], "brightness_scale": [0.7, 1.3], "rot90": [0, 3], "flip": [0, 1]},
}


def sample_pose(ranges: PoseRangeTable, rng) -> EulerPose:
    lo, hi = ranges.lows(), ranges.highs()
    return EulerPose.from_array(lo + (hi - lo) * rng.random(7))


@dataclass(frozen=True)
class DRFlags:
    dr1: bool = False   # light position behind the camera
    dr2: bool = False   # light intensity
    dr3: bool = False   # number of lights
    dr4: bool = False   # light kind
    dr5: bool = False   # texture augmentation
    dr6: bool = False   # non-contextual backgrounds
    dr7: bool = False   # instrument colour
    dr8: bool = False   # glossiness
    dr9: bool = False   # per-part appearance
    dr10: bool = False  # scratch normal maps
    dr11: bool = False  # non-contextual convex maps

    @classmethod
    def all_on(cls) -> "DRFlags":
        return cls(*([True] * 11))

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "DRFlags":
        known = {f.name for f in fields(cls)}
        bad = [n for n in names if n not in known]
        if bad:
            raise DataError(f"unknown DR component(s): {', '.join(bad)}")
        return cls(**{n: True for n in names})

    @classmethod
    def from_bits(cls, bits: int) -> "DRFlags":
        return cls(*[bool(bits >> k & 1) for k in range(11)])

    def enabled(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name)]


@dataclass(frozen=True)
class Catalogs:
    contextual: tuple
    surgery: tuple = ()
    coco: tuple = ()
    convex_maps: tuple = ()

    @classmethod
    def placeholder(cls, n_coco: int = 5000) -> "Catalogs":
        """Named stand-ins sized like the source collections (the COCO size is arbitrary)."""
        return cls(
            contextual=tuple(f"contextual/{i:04d}.png" for i in range(754)),
            surgery=tuple(f"surgery/{i:04d}.png" for i in range(2840)),
            coco=tuple(f"coco/{i:05d}.jpg" for i in range(n_coco)),
            convex_maps=tuple(f"convex/{i:02d}.png" for i in range(N_CONVEX_MAPS)),
        )


@dataclass(frozen=True)
class Light:
    kind: str
    position: tuple
    intensity: float


@dataclass(frozen=True)
class Background:
    source: str
    image_ref: str
    augmentation: Optional[dict] = None


@dataclass(frozen=True)
class ScratchRecipe:
    count: int
    length_mm: float
    width_mm: float
    depth_sign: int
    placement_seed: int


@dataclass(frozen=True)
class PartAppearance:
    hue_shift: float
    brightness_shift: float
    roughness: float


@dataclass(frozen=True)
class Appearance:
    hue_shift: float = 0.0
    brightness_shift: float = 0.0
    roughness: float = DR_DEFAULTS["canonical_roughness"]
    per_part: dict = field(default_factory=dict)
    scratch: Optional[ScratchRecipe] = None
    convex_maps: tuple = ()


@dataclass(frozen=True)
class SceneConfig:
    scene_id: int
    image_size: tuple
    poses: tuple
    lights: tuple
    background: Background
    appearances: tuple

    def to_json(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "image_size": list(self.image_size),
            "poses": [p.to_json() for p in self.poses],
            "lights": [asdict(l) | {"position": list(l.position)} for l in self.lights],
            "background": asdict(self.background),
            "appearances": [_appearance_json(a) for a in self.appearances],
        }

    def pose_json(self) -> str:
        return json.dumps([p.to_json() for p in self.poses], sort_keys=True)


def _appearance_json(a: Appearance) -> dict:
    return {
        "hue_shift": a.hue_shift,
        "brightness_shift": a.brightness_shift,
        "roughness": a.roughness,
        "per_part": {k: asdict(v) for k, v in a.per_part.items()},
        "scratch": asdict(a.scratch) if a.scratch else None,
        "convex_maps": list(a.convex_maps),
    }


def stream(seed: int, purpose: int, index: int) -> np.random.Generator:
    """Generator for one (seed, purpose, index) triple; Philox keyed by (seed, purpose), index in the counter."""
    key = np.random.SeedSequence([seed, purpose]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, index]))


def _pick(rng, catalog: tuple, name: str) -> str:
    if not catalog:
        raise EmptyCatalog(f"{name} catalog is empty")
    return catalog[int(rng.integers(len(catalog)))]


def sample_background(rng, catalogs: Catalogs, non_contextual: bool = True, augment: bool = False) -> Background:
    """Category draw by the fixed ratios, then a uniform image from it; contextual only when disabled."""
    u = rng.random()
    if non_contextual:
        acc = 0.0
        for source, p in BACKGROUND_RATIOS:
            acc += p
            if u < acc:
                break
    else:
        source = "contextual"
    ref = _pick(rng, getattr(catalogs, source), source)
    if source == "contextual" and augment:
        a = DR_DEFAULTS["augmentation"]
        aug = {
            "hue_shift": float(rng.uniform(*a["hue_shift"])),
            "brightness_scale": float(rng.uniform(*a["brightness_scale"])),
            "rot90": int(rng.integers(a["rot90"][0], a["rot90"][1] + 1)),
            "flip": bool(rng.integers(2)),
        }
        return Background("contextual_augmented", ref, aug)
    return Background(source, ref)


def _lights(flags: DRFlags, rng) -> tuple:
    lo, hi = DR_DEFAULTS["intensity_range"]
    box = DR_DEFAULTS["light_box_mm"] / 2.0
    canon = DR_DEFAULTS["canonical_light"]
    # every quantity is drawn for both slots whatever the flags, so toggling one
    # component never shifts the values drawn for another
    n = 1 + int(rng.integers(2))
    draws = []
    for _ in range(2):
        pos = (float(rng.uniform(-box, box)), float(rng.uniform(-box, box)), -float(rng.uniform(0.0, 2.0 * box)))
        inten = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        kind = LIGHT_KINDS[int(rng.integers(len(LIGHT_KINDS)))]
        draws.append((pos, inten, kind))
    count = n if flags.dr3 else 1
    out = []
    for pos, inten, kind in draws[:count]:
        out.append(Light(
            kind=kind if flags.dr4 else canon["kind"],
            position=pos if flags.dr1 else tuple(canon["position"]),
            intensity=min(hi, max(lo, inten)) if flags.dr2 else canon["intensity"],
        ))
    return tuple(out)


def _appearance(flags: DRFlags, rng, part_names: Sequence[str], catalogs: Catalogs) -> Appearance:
    hue = rng.uniform(*DR_DEFAULTS["hue_shift_range"])
    bright = rng.uniform(*DR_DEFAULTS["brightness_shift_range"])
    rough = rng.random()
    parts = {}
    for name in part_names:
        use = rng.random() < DR_DEFAULTS["per_part_probability"]
        pa = PartAppearance(float(rng.uniform(*DR_DEFAULTS["hue_shift_range"])),
                            float(rng.uniform(*DR_DEFAULTS["brightness_shift_range"])),
                            float(rng.random()))
        if use:
            parts[name] = pa
    c0, c1 = DR_DEFAULTS["scratch_count_range"]
    scratch = ScratchRecipe(
        count=int(rng.integers(c0, c1 + 1)),
        length_mm=float(rng.uniform(*DR_DEFAULTS["scratch_length_mm_range"])),
        width_mm=float(rng.uniform(*DR_DEFAULTS["scratch_width_mm_range"])),
        depth_sign=1 if rng.random() < 0.5 else -1,
        placement_seed=int(rng.integers(2**32)),
    )
    convex_u = rng.random()
    convex = ()
    if flags.dr11:
        if not catalogs.convex_maps:
            raise EmptyCatalog("convex map catalog is empty")
        convex = (catalogs.convex_maps[int(convex_u * len(catalogs.convex_maps))],)
    return Appearance(
        hue_shift=float(hue) if flags.dr7 else 0.0,
        brightness_shift=float(bright) if flags.dr7 else 0.0,
        roughness=float(rough) if flags.dr8 else DR_DEFAULTS["canonical_roughness"],
        per_part=parts if flags.dr9 else {},
        scratch=scratch if flags.dr10 else None,
        convex_maps=convex,
    )


@dataclass(frozen=True)
class SceneGenConfig:
    ranges: PoseRangeTable = field(default_factory=PoseRangeTable)
    image_size: tuple = (299, 299)
    n_instruments: int = 1
    part_names: tuple = ("shaft", "jaw_upper", "jaw_lower")

    def __post_init__(self):
        if self.n_instruments < 1:
            raise DataError("need at least one instrument per scene")


def sample_scene(flags: DRFlags, pose_rng, dr_rng, catalogs: Catalogs, scene_id: int = 0,
                 cfg: SceneGenConfig = SceneGenConfig()) -> SceneConfig:
    poses = tuple(sample_pose(cfg.ranges, pose_rng) for _ in range(cfg.n_instruments))
    lights = _lights(flags, dr_rng)
    background = sample_background(dr_rng, catalogs, non_contextual=flags.dr6, augment=flags.dr5)
    appearances = tuple(_appearance(flags, dr_rng, cfg.part_names, catalogs) for _ in range(cfg.n_instruments))
    return SceneConfig(scene_id, tuple(cfg.image_size), poses, lights, background, appearances)


def scene_at(index: int, seed: int, flags: DRFlags, catalogs: Catalogs,
             cfg: SceneGenConfig = SceneGenConfig()) -> SceneConfig:
    return sample_scene(flags, stream(seed, PURPOSE_POSE, index), stream(seed, PURPOSE_DR, index),
                        catalogs, index, cfg)


def generate_dataset(n: int, seed: int, flags: DRFlags, catalogs: Catalogs,
                     cfg: SceneGenConfig = SceneGenConfig(), start: int = 0) -> Iterator[SceneConfig]:
    if n < 1:
        raise DataError("n must be at least 1")
    for i in range(start, start + n):
        yield scene_at(i, seed, flags, catalogs, cfg)


def header(n: int, seed: int, flags: DRFlags, cfg: SceneGenConfig = SceneGenConfig()) -> dict:
    return {
        "schema": "contourcal.scenes",
        "schema_version": SCHEMA_VERSION,
        "n": n,
        "seed": seed,
        "flags": flags.enabled(),
        "image_size": list(cfg.image_size),
        "pose_ranges": cfg.ranges.to_json(),
        "defaults": DR_DEFAULTS,
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_jsonl(fh, n: int, seed: int, flags: DRFlags, catalogs: Catalogs,
                cfg: SceneGenConfig = SceneGenConfig()) -> None:
    fh.write(dumps(header(n, seed, flags, cfg)) + "\n")
    for scene in generate_dataset(n, seed, flags, catalogs, cfg):
        fh.write(dumps(scene.to_json()) + "\n")
