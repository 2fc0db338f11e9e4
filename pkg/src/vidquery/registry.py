"""Component registry: detectors, property functions, binary classifiers,
and frame filters, each with declared cost units and optional seeded error
profiles for synthetic components.

Cost-unit defaults are fixed constants; plan selection depends only on the
ratios they induce.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .datamodel import UNDEFINED, VObjInstance, is_defined
from .trace_io import Detection, TraceRecord, VideoMeta

GENERAL_DETECTOR_COST = 100.0
SPECIALIZED_DETECTOR_COST = 20.0
ATTRIBUTE_FN_COST = 5.0
CLASSIFIER_COST = 1.0
GEOMETRIC_FN_COST = 0.1


class RegistryError(Exception):
    """Duplicate or unresolvable registration."""


class ConfigurationError(Exception):
    """A component needs configuration (e.g. calibration) that is absent."""


def seeded_flip(seed, *key, rate: float) -> bool:
    """Deterministic Bernoulli draw keyed by (seed, *key)."""
    if rate <= 0.0:
        return False
    if rate >= 1.0:
        return True
    digest = hashlib.sha256(
        ":".join(str(k) for k in (seed, *key)).encode()
    ).digest()
    u = int.from_bytes(digest[:8], "big") / 2.0**64
    return u < rate


@dataclass(frozen=True)
class ErrorProfile:
    miss_rate: float = 0.0
    false_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.miss_rate <= 1.0 or not 0.0 <= self.false_rate <= 1.0:
            raise ValueError("error rates must be in [0, 1]")

    @property
    def is_zero(self) -> bool:
        return self.miss_rate == 0.0 and self.false_rate == 0.0


@dataclass(frozen=True)
class Registration:
    name: str
    kind: str  # detector | classifier | frame_filter | property_fn
    cost_units: float
    params: dict = field(default_factory=dict)
    error_profile: Optional[ErrorProfile] = None

    def __post_init__(self):
        if self.cost_units <= 0:
            raise ValueError("cost_units must be positive")


class Registry:
    """Name -> registration lookup, frozen after program load."""

    def __init__(self):
        self._regs: dict[tuple[str, str], Registration] = {}
        self._frozen = False

    def register(self, reg: Registration) -> None:
        if self._frozen:
            raise RegistryError("registry is frozen")
        key = (reg.kind, reg.name)
        if key in self._regs:
            raise RegistryError(f"duplicate {reg.kind} registration {reg.name!r}")
        self._regs[key] = reg

    def freeze(self) -> None:
        self._frozen = True

    def resolve(self, kind: str, name: str) -> Registration:
        reg = self._regs.get((kind, name))
        if reg is None:
            raise RegistryError(f"no {kind} registered under {name!r}")
        return reg

    def try_resolve(self, kind: str, name: str) -> Optional[Registration]:
        return self._regs.get((kind, name))

    def all_of(self, kind: str) -> list[Registration]:
        return [r for (k, _n), r in sorted(self._regs.items()) if k == kind]

    def specialized_detectors_for(self, vobj_names: list[str]) -> list[Registration]:
        """Detectors registered as specializations of any listed type."""
        out = []
        for reg in self.all_of("detector"):
            if reg.params.get("specializes") in vobj_names:
                out.append(reg)
        return out

    def classifiers_for(self, vobj_names: list[str]) -> list[Registration]:
        return [
            r for r in self.all_of("classifier")
            if r.params.get("vobj") in vobj_names
        ]

    def frame_filters_auto(self) -> list[Registration]:
        return [r for r in self.all_of("frame_filter") if r.params.get("auto")]

    def resolve_property_fn(self, name: str) -> Registration:
        """Named property function; `attr:x` and `attr_vector:x` lookups are
        implicitly available."""
        reg = self.try_resolve("property_fn", name)
        if reg is not None:
            return reg
        if name.startswith(("attr:", "attr_vector:")):
            return Registration(
                name=name, kind="property_fn", cost_units=ATTRIBUTE_FN_COST,
                params={"impl": name},
            )
        if name in PROPERTY_IMPLS:
            return Registration(
                name=name, kind="property_fn",
                cost_units=_BUILTIN_COSTS.get(name, GEOMETRIC_FN_COST),
                params={"impl": name},
            )
        raise RegistryError(f"no property function registered under {name!r}")


# --- property function implementations -------------------------------------

@dataclass
class PropContext:
    """What a property function may read."""

    node: Optional[VObjInstance]
    deps: dict[str, Any]
    window_values: Optional[list]
    meta: Optional[VideoMeta]
    params: dict


def _impl_center(ctx: PropContext):
    x1, y1, x2, y2 = ctx.deps["bbox"]
    return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)


def _impl_direction(ctx: PropContext):
    centers = ctx.window_values
    dx = centers[-1][0] - centers[0][0]
    dy = centers[-1][1] - centers[0][1]
    if math.hypot(dx, dy) < ctx.params.get("min_displacement", 1.0):
        return "stationary"
    if abs(dx) >= abs(dy):
        return "right" if dx > 0 else "left"
    return "down" if dy > 0 else "up"


def _impl_speed(ctx: PropContext):
    # meters per second: center displacement over the window, scaled by fps,
    # divided by the window length and the pixel calibration
    centers = ctx.window_values
    if ctx.meta is None or ctx.meta.px_per_m is None:
        raise ConfigurationError("speed needs px_per_m calibration in the meta file")
    disp = math.dist(centers[0], centers[-1])
    return disp * ctx.meta.fps / len(centers) / ctx.meta.px_per_m


def _impl_attr(ctx: PropContext):
    name = ctx.params["attr"]
    value = ctx.node.attrs.get(name, UNDEFINED)
    return value


def _impl_attr_vector(ctx: PropContext):
    raw = ctx.node.attrs.get(ctx.params["attr"])
    if raw is None:
        return UNDEFINED
    if isinstance(raw, str):
        return tuple(float(v) for v in raw.split(","))
    return tuple(float(v) for v in raw)


def _cosine(a, b) -> float:
    num = sum(x * y for x, y in zip(a, b))
    da = math.sqrt(sum(x * x for x in a))
    db = math.sqrt(sum(y * y for y in b))
    if da == 0.0 or db == 0.0:
        return 0.0
    return num / (da * db)


def _impl_cosine_similarity(ctx: PropContext):
    vectors = [v for v in ctx.window_values if is_defined(v)]
    if not vectors:
        return UNDEFINED
    dim = len(vectors[0])
    mean = tuple(sum(v[i] for v in vectors) / len(vectors) for i in range(dim))
    reference = tuple(float(v) for v in ctx.params["reference"])
    return _cosine(mean, reference)


PROPERTY_IMPLS: dict[str, Callable[[PropContext], Any]] = {
    "center": _impl_center,
    "direction": _impl_direction,
    "speed": _impl_speed,
    "cosine_similarity": _impl_cosine_similarity,
}

_BUILTIN_COSTS = {
    "center": GEOMETRIC_FN_COST,
    "direction": GEOMETRIC_FN_COST,
    "speed": GEOMETRIC_FN_COST,
    "cosine_similarity": ATTRIBUTE_FN_COST,
}


def call_property_impl(reg: Registration, ctx: PropContext):
    impl_name = reg.params.get("impl", reg.name)
    if impl_name.startswith("attr:"):
        ctx.params = {**reg.params, "attr": impl_name.split(":", 1)[1]}
        return _impl_attr(ctx)
    if impl_name.startswith("attr_vector:"):
        ctx.params = {**reg.params, "attr": impl_name.split(":", 1)[1]}
        return _impl_attr_vector(ctx)
    fn = PROPERTY_IMPLS.get(impl_name)
    if fn is None:
        raise RegistryError(f"unknown property implementation {impl_name!r}")
    ctx.params = reg.params
    return fn(ctx)


# --- relation property implementations -------------------------------------

def relation_value(
    name: str, a: VObjInstance, b: VObjInstance, meta: Optional[VideoMeta]
):
    ca = ((a.bbox[0] + a.bbox[2]) / 2.0, (a.bbox[1] + a.bbox[3]) / 2.0)
    cb = ((b.bbox[0] + b.bbox[2]) / 2.0, (b.bbox[1] + b.bbox[3]) / 2.0)
    if name == "distance_px":
        return math.dist(ca, cb)
    if name == "distance_m":
        if meta is None or meta.px_per_m is None:
            raise ConfigurationError(
                "distance in meters needs px_per_m calibration"
            )
        return math.dist(ca, cb) / meta.px_per_m
    if name == "iou":
        from .tracker import iou as box_iou
        return box_iou(a.bbox, b.bbox)
    raise RegistryError(f"unknown relation implementation {name!r}")


RELATION_IMPLS = ("distance_px", "distance_m", "iou")


# --- detector / classifier application -------------------------------------

def _attrs_match(det: Detection, required: dict) -> bool:
    return all(det.attrs.get(k) == v for k, v in required.items())


def apply_detector(
    reg: Registration, record: TraceRecord
) -> list[tuple[int, Detection]]:
    """Emit (trace index, detection) pairs this detector produces on a frame.

    Synthetic error profiles drop planted detections (miss) per a seeded,
    reproducible draw keyed by frame and detection index.
    """
    classes = set(reg.params.get("classes", []))
    threshold = float(reg.params.get("score_threshold", 0.0))
    required = reg.params.get("requires_attrs", {})
    profile = reg.error_profile
    out = []
    for idx, det in enumerate(record.detections):
        if det.class_name not in classes:
            continue
        if det.score < threshold:
            continue
        if not _attrs_match(det, required):
            continue
        if profile and seeded_flip(
            profile.seed, reg.name, "miss", record.frame_id, idx,
            rate=profile.miss_rate,
        ):
            continue
        out.append((idx, det))
    return out


def classify_frame(reg: Registration, record: TraceRecord) -> bool:
    """Binary presence answer for a frame, with seeded error injection."""
    target = reg.params.get("target_class")
    required = reg.params.get("requires_attrs", {})
    present = any(
        d.class_name == target and _attrs_match(d, required)
        for d in record.detections
    )
    profile = reg.error_profile
    if profile is None:
        return present
    if present:
        return not seeded_flip(
            profile.seed, reg.name, "cls_miss", record.frame_id,
            rate=profile.miss_rate,
        )
    return seeded_flip(
        profile.seed, reg.name, "cls_false", record.frame_id,
        rate=profile.false_rate,
    )


# --- built-ins and manifest -------------------------------------------------

def builtin_registry() -> Registry:
    """Registry preloaded with general per-class trace-backed detectors and
    the built-in property functions."""
    reg = Registry()
    for cls in ("car", "person", "bag", "bus", "truck"):
        reg.register(Registration(
            name=f"general_{cls}",
            kind="detector",
            cost_units=GENERAL_DETECTOR_COST,
            params={"classes": [cls], "score_threshold": 0.0},
        ))
    return reg


def load_manifest(path, registry: Optional[Registry] = None) -> Registry:
    """Extend a registry from a manifest file of registrations."""
    registry = registry or builtin_registry()
    with Path(path).open() as fh:
        manifest = json.load(fh)
    for entry in manifest.get("registrations", []):
        profile = None
        if "error_profile" in entry:
            ep = entry["error_profile"]
            profile = ErrorProfile(
                miss_rate=float(ep.get("miss_rate", 0.0)),
                false_rate=float(ep.get("false_rate", 0.0)),
                seed=int(ep.get("seed", 0)),
            )
        kind = entry["kind"]
        default_cost = {
            "detector": SPECIALIZED_DETECTOR_COST if entry.get("specializes")
            else GENERAL_DETECTOR_COST,
            "classifier": CLASSIFIER_COST,
            "frame_filter": GEOMETRIC_FN_COST,
            "property_fn": ATTRIBUTE_FN_COST,
        }.get(kind, ATTRIBUTE_FN_COST)
        params = {
            k: v for k, v in entry.items()
            if k not in ("name", "kind", "cost_units", "error_profile")
        }
        registry.register(Registration(
            name=entry["name"],
            kind=kind,
            cost_units=float(entry.get("cost_units", default_cost)),
            params=params,
            error_profile=profile,
        ))
    return registry
