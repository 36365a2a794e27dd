"""Knowledge-graph compilation from annotated road scenes.

Turns a corpus of RoadSceneDocument into a triple store over a fixed
road-scene ontology, materializes class-level prototype entities
(SceneWithOccludedPed / SceneWithVisiblePed / SceneWithNoPed plus a
generic RoadScene) whose embeddings the Bayesian predictor later
queries, and carves scene-level train/validation/test splits.

Entity id conventions:
  scene:<scene_id>            one per document
  frame:<scene_id>:<number>   one per frame
  ped:<scene_id>:<ped_id>     persistent per scene
  veh:<scene_id>:<number>:<vehicle_id>   per-frame vehicle record
Value entities (On, NearToEgoVeh, VehDecelerating, LaneCount_3, ...)
and the four prototypes are unprefixed and shared across scenes.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .scenes import (
    BrakingLights,
    DistanceBucket,
    Environment,
    FrameAnnotation,
    RoadSceneDocument,
    SceneLabel,
    Surroundings,
    VehiclePosition,
    VehicleState,
    validate_document,
)


class KgBuildError(ValueError):
    """Raised when a corpus cannot be compiled into a knowledge graph."""


class SplitError(ValueError):
    """Raised when requested split counts are infeasible."""


# --- Ontology -----------------------------------------------------------

ROAD_SCENE = "RoadScene"
PROTO_OCCLUDED = "SceneWithOccludedPed"
PROTO_VISIBLE = "SceneWithVisiblePed"
PROTO_NO_PED = "SceneWithNoPed"

PROTOTYPE_FOR_LABEL = {
    SceneLabel.PEDESTRIAN_OCCLUDED: PROTO_OCCLUDED,
    SceneLabel.PEDESTRIAN_NOT_OCCLUDED: PROTO_VISIBLE,
    SceneLabel.NONE_PEDESTRIAN: PROTO_NO_PED,
}

ZEBRA_ENTITY = "ZebraCrossing"
MAX_LANE_ENTITY = 6

VEHICLE_STATE_ENTITY = {
    VehicleState.CONTINUOUS_MOVEMENT: "VehContinuousMovement",
    VehicleState.STOPPED: "VehStopped",
    VehicleState.ACCELERATING: "VehAccelerating",
    VehicleState.DECELERATING: "VehDecelerating",
}


class EntityKind(Enum):
    SCENE = "scene"
    FRAME = "frame"
    PEDESTRIAN = "pedestrian"
    VEHICLE_RECORD = "vehicle_record"
    SCENE_CLASS = "scene_class"
    PED_LABEL = "ped_label"
    ZEBRA = "zebra"
    SURROUNDINGS = "surroundings"
    LANE_COUNT = "lane_count"
    VEHICLE_STATE = "vehicle_state"
    LIGHTS = "lights"
    DISTANCE = "distance"
    POSITION = "position"
    OCCLUSION = "occlusion"
    UNKNOWN = "unknown"


_VALUE_KINDS: dict[str, EntityKind] = {}
_VALUE_KINDS[ZEBRA_ENTITY] = EntityKind.ZEBRA
for m in Surroundings:
    _VALUE_KINDS[m.value] = EntityKind.SURROUNDINGS
for n in range(1, MAX_LANE_ENTITY + 1):
    _VALUE_KINDS[f"LaneCount_{n}"] = EntityKind.LANE_COUNT
for v in VEHICLE_STATE_ENTITY.values():
    _VALUE_KINDS[v] = EntityKind.VEHICLE_STATE
for m in BrakingLights:
    _VALUE_KINDS[m.value] = EntityKind.LIGHTS
for m in DistanceBucket:
    _VALUE_KINDS[m.value] = EntityKind.DISTANCE
for m in VehiclePosition:
    _VALUE_KINDS[m.value] = EntityKind.POSITION
for m in SceneLabel:
    _VALUE_KINDS[m.value] = EntityKind.PED_LABEL
# Occlusion-level entities keep the annotation spellings; they never
# collide with the other value vocabularies.
_VALUE_KINDS["None"] = EntityKind.OCCLUSION
_VALUE_KINDS["Partial"] = EntityKind.OCCLUSION
_VALUE_KINDS["Full"] = EntityKind.OCCLUSION
for p in (ROAD_SCENE, PROTO_OCCLUDED, PROTO_VISIBLE, PROTO_NO_PED):
    _VALUE_KINDS[p] = EntityKind.SCENE_CLASS


def entity_kind(entity_id: str) -> EntityKind:
    if entity_id.startswith("scene:"):
        return EntityKind.SCENE
    if entity_id.startswith("frame:"):
        return EntityKind.FRAME
    if entity_id.startswith("ped:"):
        return EntityKind.PEDESTRIAN
    if entity_id.startswith("veh:"):
        return EntityKind.VEHICLE_RECORD
    return _VALUE_KINDS.get(entity_id, EntityKind.UNKNOWN)


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str

    def as_tsv(self) -> str:
        return f"{self.subject}\t{self.relation}\t{self.object}"


@dataclass(frozen=True)
class OntologySchema:
    """Fixed relation vocabulary with domain/range kinds per relation."""

    relations: Mapping[str, tuple[frozenset[EntityKind], frozenset[EntityKind]]]

    def check(self, triple: Triple) -> Optional[str]:
        """Return a violation description, or None if the triple type-checks.

        Entities of unknown kind (foreign vocabularies loaded from TSV)
        pass; the check is strict only where a kind is recognizable.
        """
        spec = self.relations.get(triple.relation)
        if spec is None:
            return f"unknown relation {triple.relation!r}"
        domain, range_ = spec
        s_kind = entity_kind(triple.subject)
        o_kind = entity_kind(triple.object)
        if s_kind is not EntityKind.UNKNOWN and s_kind not in domain:
            return (
                f"subject {triple.subject!r} of kind {s_kind.value} not allowed "
                f"for relation {triple.relation!r}"
            )
        if o_kind is not EntityKind.UNKNOWN and o_kind not in range_:
            return (
                f"object {triple.object!r} of kind {o_kind.value} not allowed "
                f"for relation {triple.relation!r}"
            )
        return None


def _ks(*kinds: EntityKind) -> frozenset[EntityKind]:
    return frozenset(kinds)


ONTOLOGY = OntologySchema(
    relations={
        "contains": (_ks(EntityKind.FRAME, EntityKind.SCENE_CLASS), _ks(EntityKind.PED_LABEL)),
        "thereIs": (_ks(EntityKind.SCENE, EntityKind.SCENE_CLASS), _ks(EntityKind.ZEBRA)),
        "includes": (
            _ks(EntityKind.SCENE, EntityKind.FRAME, EntityKind.SCENE_CLASS),
            _ks(EntityKind.FRAME, EntityKind.VEHICLE_STATE),
        ),
        "hasSurroundings": (
            _ks(EntityKind.SCENE, EntityKind.SCENE_CLASS),
            _ks(EntityKind.SURROUNDINGS),
        ),
        "hasLanes": (
            _ks(EntityKind.SCENE, EntityKind.SCENE_CLASS),
            _ks(EntityKind.LANE_COUNT),
        ),
        "nextFrame": (_ks(EntityKind.FRAME), _ks(EntityKind.FRAME)),
        "prevFrame": (_ks(EntityKind.FRAME), _ks(EntityKind.FRAME)),
        "hasOcclusionLevel": (_ks(EntityKind.PEDESTRIAN), _ks(EntityKind.OCCLUSION)),
        "hasState": (_ks(EntityKind.VEHICLE_RECORD), _ks(EntityKind.VEHICLE_STATE)),
        "hasBrakingLights": (
            _ks(EntityKind.VEHICLE_RECORD, EntityKind.SCENE_CLASS),
            _ks(EntityKind.LIGHTS),
        ),
        "hasDistance": (
            _ks(EntityKind.VEHICLE_RECORD, EntityKind.SCENE_CLASS),
            _ks(EntityKind.DISTANCE),
        ),
        "hasPosition": (
            _ks(EntityKind.VEHICLE_RECORD, EntityKind.SCENE_CLASS),
            _ks(EntityKind.POSITION),
        ),
        "instanceOfSceneClass": (_ks(EntityKind.FRAME), _ks(EntityKind.SCENE_CLASS)),
    }
)

RELATION_NAMES = tuple(sorted(ONTOLOGY.relations))


def lane_entity(lanes: int) -> str:
    return f"LaneCount_{min(max(lanes, 1), MAX_LANE_ENTITY)}"


def scene_entity(scene_id: str) -> str:
    return f"scene:{scene_id}"


def frame_entity(scene_id: str, frame_number: int) -> str:
    return f"frame:{scene_id}:{frame_number}"


# --- Knowledge graph ----------------------------------------------------


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable triple store with dense entity/relation indices.

    Entities and relations are indexed in sorted id order, so two graphs
    with equal triple sets are identical structures regardless of the
    order their source documents were processed in.
    """

    triples: frozenset[Triple]
    entities: tuple[str, ...] = field(init=False)
    relations: tuple[str, ...] = field(init=False)
    entity_index: dict[str, int] = field(init=False, repr=False)
    relation_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "triples", frozenset(self.triples))
        unknown = {t.relation for t in self.triples} - set(ONTOLOGY.relations)
        if unknown:
            raise KgBuildError(f"unknown relation(s): {', '.join(sorted(unknown))}")
        ents = sorted({t.subject for t in self.triples} | {t.object for t in self.triples})
        rels = sorted({t.relation for t in self.triples})
        object.__setattr__(self, "entities", tuple(ents))
        object.__setattr__(self, "relations", tuple(rels))
        object.__setattr__(self, "entity_index", {e: i for i, e in enumerate(ents)})
        object.__setattr__(self, "relation_index", {r: i for i, r in enumerate(rels)})

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def sorted_triples(self) -> list[Triple]:
        return sorted(self.triples, key=lambda t: (t.subject, t.relation, t.object))

    def to_index_array(self, triples: Optional[Iterable[Triple]] = None) -> np.ndarray:
        """(n, 3) int array of [subject, relation, object] dense indices."""
        source = self.sorted_triples() if triples is None else list(triples)
        out = np.empty((len(source), 3), dtype=np.int64)
        for i, t in enumerate(source):
            out[i, 0] = self.entity_index[t.subject]
            out[i, 1] = self.relation_index[t.relation]
            out[i, 2] = self.entity_index[t.object]
        return out


def export_kg_tsv(kg: KnowledgeGraph) -> bytes:
    """Sorted, newline-terminated subject/relation/object TSV."""
    lines = [t.as_tsv() for t in kg.sorted_triples()]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def import_kg_tsv(data: bytes) -> KnowledgeGraph:
    triples = set()
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise KgBuildError(f"line {lineno}: expected 3 tab-separated fields")
        triples.add(Triple(*parts))
    return KnowledgeGraph(triples=frozenset(triples))


# --- Building -----------------------------------------------------------


def frame_evidence_pairs(
    doc: RoadSceneDocument, frame: FrameAnnotation
) -> list[tuple[str, str, str]]:
    """(relation, value-entity, source) tuples describing one frame.

    Source is "Context" (zebra, surroundings, lanes) or "Vehicle".
    This is the shared vocabulary between prototype linkage and the
    predictor's evidence extraction: class-level triples are exactly
    these pairs re-subjected onto a prototype. Deduplicated; context
    first, then vehicles in id order.
    """
    ctx = doc.context
    out: list[tuple[str, str, str]] = []
    if ctx.zebra_crossing:
        out.append(("thereIs", ZEBRA_ENTITY, "Context"))
    out.append(("hasSurroundings", ctx.surroundings.value, "Context"))
    out.append(("hasLanes", lane_entity(ctx.lanes), "Context"))
    seen = {(rel, obj) for rel, obj, _ in out}
    for v in sorted(frame.vehicles, key=lambda v: v.vehicle_id):
        for rel, obj in (
            ("includes", VEHICLE_STATE_ENTITY[v.state]),
            ("hasBrakingLights", v.braking_lights.value),
            ("hasDistance", v.distance.value),
            ("hasPosition", v.position.value),
        ):
            if (rel, obj) not in seen:
                seen.add((rel, obj))
                out.append((rel, obj, "Vehicle"))
    return out


def build_kg(corpus: Sequence[RoadSceneDocument]) -> KnowledgeGraph:
    """Compile documents into a knowledge graph (without prototype linkage).

    Emits per-scene context triples, the frame chain, per-frame scene
    labels, pedestrian occlusion levels and vehicle records. Documents
    must pass validate_document; every emitted triple is type-checked
    against the ontology.
    """
    triples: set[Triple] = set()
    seen_ids: set[str] = set()
    for doc in corpus:
        sid = doc.scene_id
        if sid in seen_ids:
            raise KgBuildError(f"duplicate scene_id {sid!r} in corpus")
        seen_ids.add(sid)
        violations = validate_document(doc)
        if violations:
            raise KgBuildError(
                f"scene {sid!r} fails validation: " + "; ".join(violations)
            )
        s_ent = scene_entity(sid)
        ctx = doc.context
        if ctx.zebra_crossing:
            triples.add(Triple(s_ent, "thereIs", ZEBRA_ENTITY))
        triples.add(Triple(s_ent, "hasSurroundings", ctx.surroundings.value))
        triples.add(Triple(s_ent, "hasLanes", lane_entity(ctx.lanes)))

        prev_f_ent = None
        for frame in doc.frames:
            f_ent = frame_entity(sid, frame.frame_number)
            triples.add(Triple(s_ent, "includes", f_ent))
            triples.add(Triple(f_ent, "contains", frame.pedestrians_scene.value))
            if prev_f_ent is not None:
                triples.add(Triple(prev_f_ent, "nextFrame", f_ent))
                triples.add(Triple(f_ent, "prevFrame", prev_f_ent))
            prev_f_ent = f_ent
            for p in frame.pedestrians:
                p_ent = f"ped:{sid}:{p.pedestrian_id}"
                triples.add(Triple(p_ent, "hasOcclusionLevel", p.occlusion.value))
            for v in frame.vehicles:
                v_ent = f"veh:{sid}:{frame.frame_number}:{v.vehicle_id}"
                state_ent = VEHICLE_STATE_ENTITY[v.state]
                triples.add(Triple(f_ent, "includes", state_ent))
                triples.add(Triple(v_ent, "hasState", state_ent))
                triples.add(Triple(v_ent, "hasBrakingLights", v.braking_lights.value))
                triples.add(Triple(v_ent, "hasDistance", v.distance.value))
                triples.add(Triple(v_ent, "hasPosition", v.position.value))

    for t in triples:
        problem = ONTOLOGY.check(t)
        if problem:
            raise KgBuildError(f"emitted triple fails ontology check: {problem}")
    return KnowledgeGraph(triples=frozenset(triples))


def class_level_triples(corpus: Sequence[RoadSceneDocument]) -> set[Triple]:
    """Prototype-subject triples summarizing a corpus.

    For every frame, its context/vehicle evidence pairs are re-subjected
    onto both the class prototype matching its label and the generic
    RoadScene entity, and its label is recorded as a contains-triple on
    both. Deduplicated by construction.
    """
    out: set[Triple] = set()
    for doc in corpus:
        for frame in doc.frames:
            proto = PROTOTYPE_FOR_LABEL[frame.pedestrians_scene]
            label_value = frame.pedestrians_scene.value
            out.add(Triple(proto, "contains", label_value))
            out.add(Triple(ROAD_SCENE, "contains", label_value))
            for rel, obj, _ in frame_evidence_pairs(doc, frame):
                out.add(Triple(proto, rel, obj))
                out.add(Triple(ROAD_SCENE, rel, obj))
    return out


def link_prototypes(
    kg: KnowledgeGraph, corpus: Sequence[RoadSceneDocument]
) -> KnowledgeGraph:
    """Attach class prototypes to a built graph.

    Adds <frame, instanceOfSceneClass, SceneWithX> per frame plus the
    deduplicated class-level evidence and label triples for the three
    prototypes and the generic RoadScene entity.
    """
    triples = set(kg.triples)
    for doc in corpus:
        for frame in doc.frames:
            f_ent = frame_entity(doc.scene_id, frame.frame_number)
            if f_ent not in kg.entity_index:
                raise KgBuildError(f"frame entity {f_ent!r} missing from graph")
            label_triple = Triple(f_ent, "contains", frame.pedestrians_scene.value)
            if label_triple not in kg.triples:
                raise KgBuildError(
                    f"frame {f_ent!r} lacks its pedestrians_scene triple"
                )
            triples.add(
                Triple(f_ent, "instanceOfSceneClass", PROTOTYPE_FOR_LABEL[frame.pedestrians_scene])
            )
    triples |= class_level_triples(corpus)
    return KnowledgeGraph(triples=frozenset(triples))


def build_linked_kg(corpus: Sequence[RoadSceneDocument]) -> KnowledgeGraph:
    """build_kg followed by link_prototypes, the usual pipeline entry."""
    return link_prototypes(build_kg(corpus), corpus)


# --- Statistics ---------------------------------------------------------


@dataclass(frozen=True)
class KgStats:
    n_entities: int
    n_relations: int
    n_triples: int
    per_relation: dict[str, int]
    frames_per_label: dict[str, int]

    def render(self) -> str:
        lines = [
            f"entities   {self.n_entities}",
            f"relations  {self.n_relations}",
            f"triples    {self.n_triples}",
        ]
        for rel in sorted(self.per_relation):
            lines.append(f"  {rel:<22}{self.per_relation[rel]}")
        for label in sorted(self.frames_per_label):
            lines.append(f"  frames[{label}]  {self.frames_per_label[label]}")
        return "\n".join(lines)


def kg_stats(kg: KnowledgeGraph) -> KgStats:
    per_relation = Counter(t.relation for t in kg.triples)
    frames_per_label: Counter[str] = Counter()
    for t in kg.triples:
        if t.relation == "contains" and entity_kind(t.subject) is EntityKind.FRAME:
            frames_per_label[t.object] += 1
    return KgStats(
        n_entities=kg.n_entities,
        n_relations=kg.n_relations,
        n_triples=len(kg.triples),
        per_relation=dict(per_relation),
        frames_per_label=dict(frames_per_label),
    )


# --- Splitting ----------------------------------------------------------


@dataclass(frozen=True)
class TripleSplit:
    """Scene-level corpus split plus the triple sets used for training.

    ``train`` is the full training knowledge graph's triple set
    (including prototype triples). ``validation`` and ``test`` hold
    class-level triples derived from their scenes, restricted to the
    training vocabulary; scene- and frame-local entities never cross
    folds. Validation/test triples may coincide with training triples:
    prototype subjects are shared by construction.
    """

    kg: KnowledgeGraph
    train: tuple[Triple, ...]
    validation: tuple[Triple, ...]
    test: tuple[Triple, ...]
    train_scene_ids: frozenset[str] = frozenset()
    validation_scene_ids: frozenset[str] = frozenset()
    test_scene_ids: frozenset[str] = frozenset()

    def all_known(self) -> frozenset[Triple]:
        return frozenset(self.train) | frozenset(self.validation) | frozenset(self.test)


def _sorted_triples(triples: Iterable[Triple]) -> tuple[Triple, ...]:
    return tuple(sorted(triples, key=lambda t: (t.subject, t.relation, t.object)))


def _in_vocabulary(triple: Triple, kg: KnowledgeGraph) -> bool:
    return triple.subject in kg.entity_index and triple.object in kg.entity_index


@dataclass(frozen=True)
class FoldAssignment:
    """Scene-level fold membership, prior to triple derivation."""

    train: tuple[RoadSceneDocument, ...]
    validation: tuple[RoadSceneDocument, ...]
    test: tuple[RoadSceneDocument, ...]


def assign_folds(
    corpus: Sequence[RoadSceneDocument],
    counts: Mapping[Environment, tuple[int, int]],
    seed: int,
    validation_ratio: float = 0.1,
) -> FoldAssignment:
    """Assign scenes to train/validation/test folds per environment.

    ``counts`` maps each environment to (train, test) scene counts; the
    validation fold is carved out of the train allotment at
    ``validation_ratio`` (at least one scene where the allotment
    permits). Deterministic under ``seed`` regardless of document order.
    """
    by_env: dict[Environment, list[RoadSceneDocument]] = {}
    for doc in sorted(corpus, key=lambda d: d.scene_id):
        by_env.setdefault(doc.context.environment, []).append(doc)

    rng = np.random.default_rng(seed)
    train_docs: list[RoadSceneDocument] = []
    val_docs: list[RoadSceneDocument] = []
    test_docs: list[RoadSceneDocument] = []
    for env in sorted(counts, key=lambda e: e.value):
        n_train, n_test = counts[env]
        if n_train < 0 or n_test < 0:
            raise SplitError(f"environment {env.value}: negative split counts")
        available = by_env.get(env, [])
        if n_train + n_test > len(available):
            raise SplitError(
                f"environment {env.value}: requested {n_train}+{n_test} scenes, "
                f"only {len(available)} available"
            )
        order = rng.permutation(len(available))
        picked = [available[i] for i in order]
        test_docs.extend(picked[:n_test])
        pool = picked[n_test : n_test + n_train]
        n_val = int(round(validation_ratio * len(pool)))
        if validation_ratio > 0 and len(pool) >= 2:
            n_val = max(1, min(n_val, len(pool) - 1))
        else:
            n_val = 0
        val_docs.extend(pool[:n_val])
        train_docs.extend(pool[n_val:])

    def key(d: RoadSceneDocument) -> str:
        return d.scene_id

    return FoldAssignment(
        train=tuple(sorted(train_docs, key=key)),
        validation=tuple(sorted(val_docs, key=key)),
        test=tuple(sorted(test_docs, key=key)),
    )


def make_split(folds: FoldAssignment) -> TripleSplit:
    """Derive the triple-level split from scene folds.

    The training KG is compiled from train scenes only; validation and
    test carry the class-level triples of their scenes restricted to
    the training vocabulary, so every evaluated entity has an embedding.
    """
    kg = build_linked_kg(folds.train)
    validation = {
        t for t in class_level_triples(folds.validation) if _in_vocabulary(t, kg)
    }
    test = {t for t in class_level_triples(folds.test) if _in_vocabulary(t, kg)}
    return TripleSplit(
        kg=kg,
        train=_sorted_triples(kg.triples),
        validation=_sorted_triples(validation),
        test=_sorted_triples(test),
        train_scene_ids=frozenset(d.scene_id for d in folds.train),
        validation_scene_ids=frozenset(d.scene_id for d in folds.validation),
        test_scene_ids=frozenset(d.scene_id for d in folds.test),
    )


def split_corpus(
    corpus: Sequence[RoadSceneDocument],
    counts: Mapping[Environment, tuple[int, int]],
    seed: int,
    validation_ratio: float = 0.1,
) -> TripleSplit:
    """assign_folds followed by make_split."""
    return make_split(assign_folds(corpus, counts, seed, validation_ratio))
