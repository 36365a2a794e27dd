"""Annotated road-scene documents.

Domain types for one annotated road scene (scene-level context plus
per-frame pedestrian and vehicle records), the XML annotation format,
and the labeling-rule helpers (distance estimation from pixel width,
distance bucketing, occlusion-level assignment).

The XML format is strict: one ``<roadScene>`` root with a single
``<context>`` child followed by one or more ``<frame>`` elements.
Unknown elements or attributes are rejected, never ignored, and all
enum value spellings are case-sensitive.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from typing import Optional


class Environment(str, Enum):
    REAL = "Real"
    VIRTUAL = "Virtual"


class Surroundings(str, Enum):
    VEGETATION = "Vegetation"
    CLEAR = "Clear"


class SceneLabel(str, Enum):
    """Per-frame pedestrian-scene label."""

    NONE_PEDESTRIAN = "NonePedestrian"
    PEDESTRIAN_OCCLUDED = "PedestrianOccluded"
    PEDESTRIAN_NOT_OCCLUDED = "PedestrianNotOccluded"


class OcclusionLevel(str, Enum):
    NONE = "None"
    PARTIAL = "Partial"
    FULL = "Full"


class VehicleState(str, Enum):
    CONTINUOUS_MOVEMENT = "ContinuousMovement"
    STOPPED = "Stopped"
    ACCELERATING = "Accelerating"
    DECELERATING = "Decelerating"


class BrakingLights(str, Enum):
    ON = "On"
    OFF = "Off"


class DistanceBucket(str, Enum):
    NEAR = "NearToEgoVeh"
    MIDDLE = "MiddleDisToEgoVeh"
    FAR = "FarToEgoVeh"


class VehiclePosition(str, Enum):
    FRONT = "Front"
    FRONT_LEFT = "FrontLeft"
    FRONT_RIGHT = "FrontRight"
    LEFT = "Left"
    RIGHT = "Right"


# Visibility below this fraction counts as full occlusion; exactly at the
# threshold is partial.
FULL_OCCLUSION_VISIBILITY_THRESHOLD = 0.25

DEFAULT_DISTANCE_THRESHOLDS = (10.0, 30.0)
DEFAULT_PEDESTRIAN_WIDTH_M = 0.5


class SceneParseError(ValueError):
    """Raised for malformed XML (carries line/column when available)."""


class SceneValidationError(ValueError):
    """Raised when XML is well-formed but violates the annotation schema."""


@dataclass(frozen=True)
class SceneContext:
    """Scene-level labels, annotated once per road scene."""

    scene_id: str
    environment: Environment
    zebra_crossing: bool
    lanes: int
    surroundings: Surroundings

    def __post_init__(self):
        if not self.scene_id:
            raise ValueError("scene_id must be non-empty")
        if self.lanes < 1:
            raise ValueError(f"lanes must be >= 1, got {self.lanes}")


@dataclass(frozen=True)
class PedestrianRecord:
    pedestrian_id: str
    occlusion: OcclusionLevel
    visible_fraction: Optional[float] = None

    def __post_init__(self):
        vf = self.visible_fraction
        if vf is not None and not (0.0 <= vf <= 1.0):
            raise ValueError(f"visible_fraction must be in [0, 1], got {vf}")


@dataclass(frozen=True)
class VehicleRecord:
    vehicle_id: str
    state: VehicleState
    braking_lights: BrakingLights
    distance: DistanceBucket
    position: VehiclePosition


@dataclass(frozen=True)
class FrameAnnotation:
    frame_number: int
    pedestrians_scene: SceneLabel
    pedestrians: tuple[PedestrianRecord, ...] = ()
    vehicles: tuple[VehicleRecord, ...] = ()

    def __post_init__(self):
        if self.frame_number < 0:
            raise ValueError(f"frame_number must be >= 0, got {self.frame_number}")
        # Label/record consistency is deliberately not enforced here so that
        # validate_document can report it as a violation.
        object.__setattr__(self, "pedestrians", tuple(self.pedestrians))
        object.__setattr__(self, "vehicles", tuple(self.vehicles))


@dataclass(frozen=True)
class RoadSceneDocument:
    context: SceneContext
    frames: tuple[FrameAnnotation, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ValueError("document must contain at least one frame")
        numbers = [f.frame_number for f in self.frames]
        if any(b <= a for a, b in zip(numbers, numbers[1:])):
            raise ValueError("frames not strictly increasing")

    @property
    def scene_id(self) -> str:
        return self.context.scene_id


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length: float
    known_pedestrian_width: float = DEFAULT_PEDESTRIAN_WIDTH_M

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError("focal_length must be > 0")
        if self.known_pedestrian_width <= 0:
            raise ValueError("known_pedestrian_width must be > 0")


def estimate_distance(known_width: float, focal_length: float, pixel_width: float) -> float:
    """Distance from pedestrian width via triangle similarity (W * F / P)."""
    if known_width <= 0 or focal_length <= 0 or pixel_width <= 0:
        raise ValueError(
            "estimate_distance requires positive width, focal length and pixel width"
        )
    return known_width * focal_length / pixel_width


def quantize_distance(
    distance: float, thresholds: tuple[float, float] = DEFAULT_DISTANCE_THRESHOLDS
) -> DistanceBucket:
    """Map a metric distance onto the Near/Middle/Far buckets.

    Boundary values land in the upper bucket: with thresholds (10, 30),
    d=10 is Middle and d=30 is Far.
    """
    t_near, t_far = thresholds
    if not (0 < t_near < t_far):
        raise ValueError(f"thresholds must satisfy 0 < t_near < t_far, got {thresholds}")
    if not math.isfinite(distance):
        raise ValueError(f"distance must be finite, got {distance}")
    if distance < t_near:
        return DistanceBucket.NEAR
    if distance < t_far:
        return DistanceBucket.MIDDLE
    return DistanceBucket.FAR


def occlusion_level_from_visibility(
    detector_detected: bool, visible_fraction: float
) -> OcclusionLevel:
    """Occlusion level from detector outcome and visible body fraction.

    A detected pedestrian is None-occluded regardless of the fraction.
    Undetected pedestrians are Full below 25% visibility, Partial at or
    above it (0.25 itself maps to Partial).
    """
    if not (0.0 <= visible_fraction <= 1.0):
        raise ValueError(f"visible_fraction must be in [0, 1], got {visible_fraction}")
    if detector_detected:
        return OcclusionLevel.NONE
    if visible_fraction < FULL_OCCLUSION_VISIBILITY_THRESHOLD:
        return OcclusionLevel.FULL
    return OcclusionLevel.PARTIAL


def validate_document(doc: RoadSceneDocument) -> list[str]:
    """Cross-field consistency check. Returns violation descriptions, [] if clean."""
    violations: list[str] = []
    sid = doc.scene_id
    for frame in doc.frames:
        where = f"scene {sid!r} frame {frame.frame_number}"
        label = frame.pedestrians_scene
        occluded = [
            p
            for p in frame.pedestrians
            if p.occlusion in (OcclusionLevel.PARTIAL, OcclusionLevel.FULL)
        ]
        if label is SceneLabel.NONE_PEDESTRIAN and frame.pedestrians:
            violations.append(f"{where}: NonePedestrian frame lists pedestrians")
        if label is SceneLabel.PEDESTRIAN_OCCLUDED and not occluded:
            violations.append(
                f"{where}: PedestrianOccluded frame has no occluded pedestrian record"
            )
        for p in frame.pedestrians:
            vf = p.visible_fraction
            if vf is None:
                continue
            if vf < FULL_OCCLUSION_VISIBILITY_THRESHOLD and p.occlusion is OcclusionLevel.PARTIAL:
                violations.append(
                    f"{where}: pedestrian {p.pedestrian_id!r} visible_fraction {vf} "
                    f"below {FULL_OCCLUSION_VISIBILITY_THRESHOLD} but occlusion Partial"
                )
            if vf >= FULL_OCCLUSION_VISIBILITY_THRESHOLD and p.occlusion is OcclusionLevel.FULL:
                violations.append(
                    f"{where}: pedestrian {p.pedestrian_id!r} visible_fraction {vf} "
                    f"at or above {FULL_OCCLUSION_VISIBILITY_THRESHOLD} but occlusion Full"
                )
    return violations


# --- XML format ---------------------------------------------------------

_ROOT_ATTRS = {"id", "environment"}
_CONTEXT_ATTRS = {"zebraCrossing", "lanes", "surroundings"}
_FRAME_ATTRS = {"number", "pedestriansScene"}
_PEDESTRIAN_ATTRS = {"id", "occlusion", "visibleFraction"}
_VEHICLE_ATTRS = {"id", "state", "brakingLights", "distance", "position"}


def _enum_attr(elem: ET.Element, name: str, enum_cls, elem_name: str):
    raw = elem.get(name)
    if raw is None:
        raise SceneValidationError(f"<{elem_name}> missing required attribute {name!r}")
    try:
        return enum_cls(raw)
    except ValueError:
        allowed = ", ".join(m.value for m in enum_cls)
        raise SceneValidationError(
            f"<{elem_name}> attribute {name!r} has unknown value {raw!r} "
            f"(allowed: {allowed})"
        ) from None


def _required_attr(elem: ET.Element, name: str, elem_name: str) -> str:
    raw = elem.get(name)
    if raw is None:
        raise SceneValidationError(f"<{elem_name}> missing required attribute {name!r}")
    return raw


def _check_attrs(elem: ET.Element, allowed: set[str], elem_name: str) -> None:
    unknown = set(elem.attrib) - allowed
    if unknown:
        raise SceneValidationError(
            f"<{elem_name}> has unknown attribute(s): {', '.join(sorted(unknown))}"
        )


def _check_no_text(elem: ET.Element, elem_name: str) -> None:
    if elem.text and elem.text.strip():
        raise SceneValidationError(f"<{elem_name}> must not contain text content")


def _parse_bool(raw: str, name: str, elem_name: str) -> bool:
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise SceneValidationError(
        f"<{elem_name}> attribute {name!r} must be 'true' or 'false', got {raw!r}"
    )


def _parse_int(raw: str, name: str, elem_name: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise SceneValidationError(
            f"<{elem_name}> attribute {name!r} must be an integer, got {raw!r}"
        ) from None


def _parse_pedestrian(elem: ET.Element) -> PedestrianRecord:
    _check_attrs(elem, _PEDESTRIAN_ATTRS, "pedestrian")
    _check_no_text(elem, "pedestrian")
    for child in elem:
        raise SceneValidationError(f"<pedestrian> must not contain <{child.tag}>")
    vf_raw = elem.get("visibleFraction")
    vf = None
    if vf_raw is not None:
        try:
            vf = float(vf_raw)
        except ValueError:
            raise SceneValidationError(
                f"<pedestrian> attribute 'visibleFraction' must be a number, got {vf_raw!r}"
            ) from None
    try:
        return PedestrianRecord(
            pedestrian_id=_required_attr(elem, "id", "pedestrian"),
            occlusion=_enum_attr(elem, "occlusion", OcclusionLevel, "pedestrian"),
            visible_fraction=vf,
        )
    except ValueError as exc:
        raise SceneValidationError(f"<pedestrian>: {exc}") from None


def _parse_vehicle(elem: ET.Element) -> VehicleRecord:
    _check_attrs(elem, _VEHICLE_ATTRS, "vehicle")
    _check_no_text(elem, "vehicle")
    for child in elem:
        raise SceneValidationError(f"<vehicle> must not contain <{child.tag}>")
    return VehicleRecord(
        vehicle_id=_required_attr(elem, "id", "vehicle"),
        state=_enum_attr(elem, "state", VehicleState, "vehicle"),
        braking_lights=_enum_attr(elem, "brakingLights", BrakingLights, "vehicle"),
        distance=_enum_attr(elem, "distance", DistanceBucket, "vehicle"),
        position=_enum_attr(elem, "position", VehiclePosition, "vehicle"),
    )


def _parse_frame(elem: ET.Element) -> FrameAnnotation:
    _check_attrs(elem, _FRAME_ATTRS, "frame")
    _check_no_text(elem, "frame")
    number = _parse_int(_required_attr(elem, "number", "frame"), "number", "frame")
    if number < 0:
        raise SceneValidationError(f"<frame> number must be >= 0, got {number}")
    pedestrians = []
    vehicles = []
    for child in elem:
        if child.tag == "pedestrian":
            pedestrians.append(_parse_pedestrian(child))
        elif child.tag == "vehicle":
            vehicles.append(_parse_vehicle(child))
        else:
            raise SceneValidationError(f"<frame> contains unknown element <{child.tag}>")
    return FrameAnnotation(
        frame_number=number,
        pedestrians_scene=_enum_attr(elem, "pedestriansScene", SceneLabel, "frame"),
        pedestrians=tuple(pedestrians),
        vehicles=tuple(vehicles),
    )


def parse_scene_xml(data: bytes) -> RoadSceneDocument:
    """Parse one annotation document from XML bytes.

    Raises SceneParseError (with line/column) on malformed XML and
    SceneValidationError naming the offending element and rule on any
    schema violation, including unknown elements and label/record
    inconsistencies that the annotation rules forbid outright.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, column = exc.position
        raise SceneParseError(f"malformed XML at line {line}, column {column}: {exc.msg}") from None

    if root.tag != "roadScene":
        raise SceneValidationError(f"root element must be <roadScene>, got <{root.tag}>")
    _check_attrs(root, _ROOT_ATTRS, "roadScene")
    _check_no_text(root, "roadScene")

    context_elem = None
    frame_elems = []
    for child in root:
        if child.tag == "context":
            if context_elem is not None:
                raise SceneValidationError("<roadScene> must contain exactly one <context>")
            context_elem = child
        elif child.tag == "frame":
            frame_elems.append(child)
        else:
            raise SceneValidationError(
                f"<roadScene> contains unknown element <{child.tag}>"
            )
    if context_elem is None:
        raise SceneValidationError("<roadScene> must contain a <context> element")
    if not frame_elems:
        raise SceneValidationError("<roadScene> must contain at least one <frame>")

    _check_attrs(context_elem, _CONTEXT_ATTRS, "context")
    _check_no_text(context_elem, "context")
    for child in context_elem:
        raise SceneValidationError(f"<context> must not contain <{child.tag}>")

    lanes = _parse_int(_required_attr(context_elem, "lanes", "context"), "lanes", "context")
    try:
        context = SceneContext(
            scene_id=_required_attr(root, "id", "roadScene"),
            environment=_enum_attr(root, "environment", Environment, "roadScene"),
            zebra_crossing=_parse_bool(
                _required_attr(context_elem, "zebraCrossing", "context"),
                "zebraCrossing",
                "context",
            ),
            lanes=lanes,
            surroundings=_enum_attr(context_elem, "surroundings", Surroundings, "context"),
        )
    except ValueError as exc:
        if isinstance(exc, SceneValidationError):
            raise
        raise SceneValidationError(f"<context>: {exc}") from None

    frames = [_parse_frame(e) for e in frame_elems]
    try:
        doc = RoadSceneDocument(context=context, frames=tuple(frames))
    except ValueError as exc:
        raise SceneValidationError(str(exc)) from None

    # Label/record consistency that the format forbids outright; the
    # finer visibility-threshold rule stays a validate_document concern.
    for frame in doc.frames:
        label = frame.pedestrians_scene
        if label is SceneLabel.NONE_PEDESTRIAN and frame.pedestrians:
            raise SceneValidationError(
                f"<frame number={frame.frame_number}> is NonePedestrian but lists pedestrians"
            )
        if label is SceneLabel.PEDESTRIAN_OCCLUDED and not any(
            p.occlusion in (OcclusionLevel.PARTIAL, OcclusionLevel.FULL)
            for p in frame.pedestrians
        ):
            raise SceneValidationError(
                f"<frame number={frame.frame_number}> is PedestrianOccluded but has "
                "no occluded pedestrian record"
            )
    return doc


def serialize_scene_xml(doc: RoadSceneDocument) -> bytes:
    """Serialize a document to XML bytes. Inverse of parse_scene_xml."""
    root = ET.Element(
        "roadScene",
        {"id": doc.context.scene_id, "environment": doc.context.environment.value},
    )
    ET.SubElement(
        root,
        "context",
        {
            "zebraCrossing": "true" if doc.context.zebra_crossing else "false",
            "lanes": str(doc.context.lanes),
            "surroundings": doc.context.surroundings.value,
        },
    )
    for frame in doc.frames:
        frame_elem = ET.SubElement(
            root,
            "frame",
            {
                "number": str(frame.frame_number),
                "pedestriansScene": frame.pedestrians_scene.value,
            },
        )
        for p in frame.pedestrians:
            attrs = {"id": p.pedestrian_id, "occlusion": p.occlusion.value}
            if p.visible_fraction is not None:
                # repr keeps the shortest decimal that round-trips exactly
                attrs["visibleFraction"] = repr(p.visible_fraction)
            ET.SubElement(frame_elem, "pedestrian", attrs)
        for v in frame.vehicles:
            ET.SubElement(
                frame_elem,
                "vehicle",
                {
                    "id": v.vehicle_id,
                    "state": v.state.value,
                    "brakingLights": v.braking_lights.value,
                    "distance": v.distance.value,
                    "position": v.position.value,
                },
            )
    ET.indent(root, space="  ")
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"
