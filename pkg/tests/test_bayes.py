"""Posterior inference: evidence extraction, Bayes combination, decisions."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlukg.bayes import (
    HYPOTHESES,
    EvidenceItem,
    EvidenceSource,
    Hypothesis,
    evidence_conditional,
    evidence_marginal,
    extract_evidence,
    posterior,
    predict_frame,
    prior,
)
from occlukg.kg import PROTO_NO_PED, PROTO_OCCLUDED, PROTO_VISIBLE, ROAD_SCENE
from occlukg.scenes import FrameAnnotation, RoadSceneDocument, SceneLabel, Surroundings

from conftest import make_context, model_with_scores


def logit(p):
    return math.log(p / (1.0 - p))


def occluded_hypothesis():
    return Hypothesis.for_label(SceneLabel.PEDESTRIAN_OCCLUDED)


def item(relation="hasSurroundings", object="Vegetation", source=EvidenceSource.CONTEXT):
    return EvidenceItem(relation=relation, object=object, source=source)


def probability_model(entries, priors=(0.3, 0.3, 0.3)):
    """Model whose calibrated probabilities hit the given values exactly.

    ``entries`` maps (subject, relation, object) -> probability; the
    class priors for the three hypotheses are planted as well so
    predict_frame never sees a missing prototype.
    """
    scores = {}
    for (s, r, o), p in entries.items():
        scores[(s, r, o)] = logit(p)
    for h, p in zip(HYPOTHESES, priors):
        key = (ROAD_SCENE, "contains", h.label.value)
        scores.setdefault(key, logit(p))
    return model_with_scores(scores)


class TestHypothesis:
    def test_for_label_prototypes(self):
        assert Hypothesis.for_label(SceneLabel.PEDESTRIAN_OCCLUDED).prototype == PROTO_OCCLUDED
        assert Hypothesis.for_label(SceneLabel.PEDESTRIAN_NOT_OCCLUDED).prototype == PROTO_VISIBLE
        assert Hypothesis.for_label(SceneLabel.NONE_PEDESTRIAN).prototype == PROTO_NO_PED

    def test_rejects_mismatched_prototype(self):
        with pytest.raises(ValueError, match="prototype"):
            Hypothesis(label=SceneLabel.PEDESTRIAN_OCCLUDED, prototype=PROTO_NO_PED)

    def test_fixed_decision_order(self):
        assert [h.label for h in HYPOTHESES] == [
            SceneLabel.PEDESTRIAN_OCCLUDED,
            SceneLabel.PEDESTRIAN_NOT_OCCLUDED,
            SceneLabel.NONE_PEDESTRIAN,
        ]


class TestEvidenceItem:
    def test_valid_items(self):
        item(relation="thereIs", object="ZebraCrossing")
        item(relation="hasLanes", object="LaneCount_3")
        item(relation="includes", object="VehDecelerating", source=EvidenceSource.VEHICLE)
        item(relation="hasBrakingLights", object="On", source=EvidenceSource.VEHICLE)

    def test_rejects_ontology_violation(self):
        with pytest.raises(ValueError, match="ontology"):
            item(relation="thereIs", object="Vegetation")

    def test_rejects_unknown_relation(self):
        with pytest.raises(ValueError, match="ontology"):
            item(relation="surroundedBy", object="Vegetation")


class TestExtractEvidence:
    def test_occluded_crossing_frame(self, occluded_crossing_doc):
        items = extract_evidence(occluded_crossing_doc, 0)
        assert items == [
            EvidenceItem("thereIs", "ZebraCrossing", EvidenceSource.CONTEXT),
            EvidenceItem("hasSurroundings", "Vegetation", EvidenceSource.CONTEXT),
            EvidenceItem("hasLanes", "LaneCount_2", EvidenceSource.CONTEXT),
            EvidenceItem("includes", "VehDecelerating", EvidenceSource.VEHICLE),
            EvidenceItem("hasBrakingLights", "On", EvidenceSource.VEHICLE),
            EvidenceItem("hasDistance", "NearToEgoVeh", EvidenceSource.VEHICLE),
            EvidenceItem("hasPosition", "FrontLeft", EvidenceSource.VEHICLE),
        ]

    def test_vehicle_free_frame_has_context_only(self, minimal_doc):
        items = extract_evidence(minimal_doc, 0)
        assert all(i.source is EvidenceSource.CONTEXT for i in items)
        assert [i.relation for i in items] == ["hasSurroundings", "hasLanes"]

    def test_out_of_range_frame(self, minimal_doc):
        with pytest.raises(IndexError, match="frame_index"):
            extract_evidence(minimal_doc, 5)


class TestPosteriorExactValues:
    def test_single_item_worked_example(self):
        # prior 0.3, conditional 0.8, marginal 0.4: posterior 0.3*0.8/0.4 = 0.6
        e = item()
        model = probability_model(
            {
                (ROAD_SCENE, "contains", "PedestrianOccluded"): 0.3,
                (PROTO_OCCLUDED, "hasSurroundings", "Vegetation"): 0.8,
                (ROAD_SCENE, "hasSurroundings", "Vegetation"): 0.4,
            }
        )
        rep = posterior(model, occluded_hypothesis(), [e])
        assert rep.prior == pytest.approx(0.3, abs=1e-12)
        assert rep.factors[0].conditional == pytest.approx(0.8, abs=1e-12)
        assert rep.factors[0].marginal == pytest.approx(0.4, abs=1e-12)
        assert rep.factors[0].ratio == pytest.approx(2.0, abs=1e-12)
        assert rep.raw == pytest.approx(0.6, abs=1e-12)
        assert rep.clamped == rep.raw
        assert not rep.clamp_flagged

    def test_raw_above_one_is_clamped_and_flagged(self):
        # prior 0.9 and one likelihood ratio of 2 push raw to 1.8
        e = item()
        model = probability_model(
            {
                (ROAD_SCENE, "contains", "PedestrianOccluded"): 0.9,
                (PROTO_OCCLUDED, "hasSurroundings", "Vegetation"): 0.8,
                (ROAD_SCENE, "hasSurroundings", "Vegetation"): 0.4,
            }
        )
        rep = posterior(model, occluded_hypothesis(), [e])
        assert rep.raw == pytest.approx(1.8, abs=1e-12)
        assert rep.clamped == 1.0
        assert rep.clamp_flagged

    def test_two_items_multiply(self):
        e1 = item()
        e2 = item(relation="thereIs", object="ZebraCrossing")
        model = probability_model(
            {
                (ROAD_SCENE, "contains", "PedestrianOccluded"): 0.5,
                (PROTO_OCCLUDED, "hasSurroundings", "Vegetation"): 0.6,
                (ROAD_SCENE, "hasSurroundings", "Vegetation"): 0.3,
                (PROTO_OCCLUDED, "thereIs", "ZebraCrossing"): 0.7,
                (ROAD_SCENE, "thereIs", "ZebraCrossing"): 0.35,
            }
        )
        rep = posterior(model, occluded_hypothesis(), [e1, e2])
        assert rep.raw == pytest.approx(0.5 * (0.6 / 0.3) * (0.7 / 0.35), abs=1e-9)

    def test_probability_accessors(self):
        model = probability_model(
            {
                (ROAD_SCENE, "contains", "PedestrianOccluded"): 0.25,
                (PROTO_OCCLUDED, "hasSurroundings", "Vegetation"): 0.9,
                (ROAD_SCENE, "hasSurroundings", "Vegetation"): 0.45,
            }
        )
        h = occluded_hypothesis()
        e = item()
        assert prior(model, h) == pytest.approx(0.25, abs=1e-12)
        assert evidence_marginal(model, e) == pytest.approx(0.45, abs=1e-12)
        assert evidence_conditional(model, e, h) == pytest.approx(0.9, abs=1e-12)

    def test_bad_denominator_mode(self):
        model = probability_model({})
        with pytest.raises(ValueError, match="denominator"):
            posterior(model, occluded_hypothesis(), [], denominator="joint")


class TestPosteriorInvariants:
    def test_empty_evidence_reproduces_prior_exactly(self):
        model = probability_model({}, priors=(0.37, 0.21, 0.42))
        for h in HYPOTHESES:
            rep = posterior(model, h, [])
            assert rep.raw == rep.prior  # bitwise: empty products are 1.0
            assert rep.denominator == 1.0
            assert rep.factors == ()

    def test_neutral_evidence_changes_nothing(self):
        # conditional == marginal for every item: ratios are all 1
        entries = {}
        items = []
        for i, (rel, obj) in enumerate(
            [("hasSurroundings", "Vegetation"), ("thereIs", "ZebraCrossing"),
             ("hasLanes", "LaneCount_4")]
        ):
            p = 0.2 + 0.2 * i
            entries[(ROAD_SCENE, rel, obj)] = p
            for proto in (PROTO_OCCLUDED, PROTO_VISIBLE, PROTO_NO_PED):
                entries[(proto, rel, obj)] = p
            items.append(item(relation=rel, object=obj))
        model = probability_model(entries, priors=(0.31, 0.44, 0.17))
        for h in HYPOTHESES:
            rep = posterior(model, h, items)
            assert abs(rep.raw - rep.prior) < 1e-9

    def test_posterior_monotone_in_likelihood_ratio(self):
        # same evidence slot, higher conditional => strictly larger posterior
        base = {
            (ROAD_SCENE, "contains", "PedestrianOccluded"): 0.4,
            (ROAD_SCENE, "hasSurroundings", "Vegetation"): 0.5,
        }
        raws = []
        for cond in (0.2, 0.4, 0.6, 0.8):
            model = probability_model(
                {**base, (PROTO_OCCLUDED, "hasSurroundings", "Vegetation"): cond}
            )
            raws.append(posterior(model, occluded_hypothesis(), [item()]).raw)
        assert raws == sorted(raws)
        assert len(set(raws)) == len(raws)

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=0.05, max_value=0.95),
        st.lists(
            st.tuples(
                st.floats(min_value=0.05, max_value=0.95),
                st.floats(min_value=0.05, max_value=0.95),
            ),
            min_size=1,
            max_size=4,
        ),
        st.integers(min_value=0, max_value=3),
        st.floats(min_value=0.01, max_value=0.04),
    )
    def test_raising_one_conditional_raises_posterior(self, pr, pairs, slot, bump):
        rels = [("hasSurroundings", "Vegetation"), ("thereIs", "ZebraCrossing"),
                ("hasLanes", "LaneCount_2"), ("hasLanes", "LaneCount_5")]
        pairs = pairs[:4]
        slot = slot % len(pairs)
        entries = {(ROAD_SCENE, "contains", "PedestrianOccluded"): pr}
        items = []
        for (cond, marg), (rel, obj) in zip(pairs, rels):
            entries[(PROTO_OCCLUDED, rel, obj)] = cond
            entries[(ROAD_SCENE, rel, obj)] = marg
            items.append(item(relation=rel, object=obj))
        lo = posterior(probability_model(entries), occluded_hypothesis(), items).raw
        rel, obj = rels[slot]
        entries[(PROTO_OCCLUDED, rel, obj)] = pairs[slot][0] + bump
        hi = posterior(probability_model(entries), occluded_hypothesis(), items).raw
        assert hi > lo

    def test_argmax_invariant_under_common_scaling(self):
        # scaling every marginal by a common factor rescales all three
        # posteriors identically, so the decision cannot change
        rels = [("hasSurroundings", "Vegetation"), ("thereIs", "ZebraCrossing")]
        conds = {
            PROTO_OCCLUDED: (0.8, 0.3),
            PROTO_VISIBLE: (0.5, 0.5),
            PROTO_NO_PED: (0.2, 0.7),
        }

        def build(margs):
            entries = {}
            for proto, cs in conds.items():
                for (rel, obj), c in zip(rels, cs):
                    entries[(proto, rel, obj)] = c
            for (rel, obj), m in zip(rels, margs):
                entries[(ROAD_SCENE, rel, obj)] = m
            return probability_model(entries, priors=(0.3, 0.35, 0.35))

        items = [item(relation=r, object=o) for r, o in rels]

        def decide(model):
            reps = [posterior(model, h, items) for h in HYPOTHESES]
            assert not any(r.clamp_flagged for r in reps)  # invariance needs raw values
            return max(range(3), key=lambda i: (reps[i].clamped, -i))

        assert decide(build((0.4, 0.4))) == decide(build((0.8, 0.8)))
        assert decide(build((0.45, 0.3))) == decide(build((0.9, 0.6)))

    def test_report_recomputation_matches(self):
        model = probability_model(
            {
                (ROAD_SCENE, "contains", "PedestrianOccluded"): 0.3,
                (PROTO_OCCLUDED, "hasSurroundings", "Vegetation"): 0.8,
                (ROAD_SCENE, "hasSurroundings", "Vegetation"): 0.4,
                (PROTO_OCCLUDED, "thereIs", "ZebraCrossing"): 0.65,
                (ROAD_SCENE, "thereIs", "ZebraCrossing"): 0.5,
            }
        )
        rep = posterior(
            model,
            occluded_hypothesis(),
            [item(), item(relation="thereIs", object="ZebraCrossing")],
        )
        assert rep.recompute_raw() == rep.raw

    def test_mixture_mode_normalizes(self):
        entries = {}
        rng_pairs = [
            (PROTO_OCCLUDED, 0.7),
            (PROTO_VISIBLE, 0.4),
            (PROTO_NO_PED, 0.2),
        ]
        for proto, c in rng_pairs:
            entries[(proto, "hasSurroundings", "Vegetation")] = c
        entries[(ROAD_SCENE, "hasSurroundings", "Vegetation")] = 0.5
        model = probability_model(entries, priors=(0.3, 0.4, 0.3))
        reps = [posterior(model, h, [item()], denominator="mixture") for h in HYPOTHESES]
        assert sum(r.raw for r in reps) == pytest.approx(1.0, abs=1e-9)
        assert all(not r.clamp_flagged for r in reps)


def single_frame_doc(**kwargs):
    frame = FrameAnnotation(
        frame_number=0,
        pedestrians_scene=SceneLabel.NONE_PEDESTRIAN,
        pedestrians=(),
        vehicles=(),
    )
    return RoadSceneDocument(
        context=make_context(scene_id="scene-solo", **kwargs), frames=(frame,)
    )


class TestPredictFrame:
    @staticmethod
    def steering_model(favored, doc_items, priors=(0.3, 0.3, 0.3)):
        """Model whose evidence conditionals favor one prototype."""
        entries = {}
        for rel, obj in doc_items:
            entries[(ROAD_SCENE, rel, obj)] = 0.4
            for proto in (PROTO_OCCLUDED, PROTO_VISIBLE, PROTO_NO_PED):
                entries[(proto, rel, obj)] = 0.8 if proto == favored else 0.2
        return probability_model(entries, priors=priors)

    DOC_ITEMS = [("hasSurroundings", "Vegetation"), ("hasLanes", "LaneCount_2")]

    def doc(self):
        return single_frame_doc()

    def test_predicts_favored_class(self, visible_ped_doc):
        items = [(e.relation, e.object) for e in extract_evidence(visible_ped_doc, 0)]
        for favored, label in [
            (PROTO_OCCLUDED, SceneLabel.PEDESTRIAN_OCCLUDED),
            (PROTO_VISIBLE, SceneLabel.PEDESTRIAN_NOT_OCCLUDED),
            (PROTO_NO_PED, SceneLabel.NONE_PEDESTRIAN),
        ]:
            model = self.steering_model(favored, items)
            pred = predict_frame(model, visible_ped_doc, 0, horizon=0)
            assert pred.predicted is label

    def test_tie_prefers_occluded_then_visible(self):
        doc = self.doc()
        items = [("hasSurroundings", "Vegetation"), ("hasLanes", "LaneCount_2")]
        entries = {}
        for rel, obj in items:
            entries[(ROAD_SCENE, rel, obj)] = 0.4
            for proto in (PROTO_OCCLUDED, PROTO_VISIBLE, PROTO_NO_PED):
                entries[(proto, rel, obj)] = 0.4
        model = probability_model(entries, priors=(0.3, 0.3, 0.3))
        pred = predict_frame(model, doc, 0)
        assert pred.predicted is SceneLabel.PEDESTRIAN_OCCLUDED
        # break the occluded tie only: visible should now win
        for rel, obj in items:
            entries[(PROTO_OCCLUDED, rel, obj)] = 0.1
        model = probability_model(entries, priors=(0.3, 0.3, 0.3))
        pred = predict_frame(model, doc, 0)
        assert pred.predicted is SceneLabel.PEDESTRIAN_NOT_OCCLUDED

    def test_ground_truth_horizon(self, visible_ped_doc):
        model = self.steering_model(
            PROTO_VISIBLE, [(e.relation, e.object) for e in extract_evidence(visible_ped_doc, 0)]
        )
        pred = predict_frame(model, visible_ped_doc, 0, horizon=2)
        assert pred.ground_truth is visible_ped_doc.frames[2].pedestrians_scene
        assert not pred.truncated
        assert pred.horizon == 2
        assert pred.frame_index == 0
        assert pred.frame_number == visible_ped_doc.frames[0].frame_number

    def test_horizon_truncates_at_last_frame(self, visible_ped_doc):
        model = self.steering_model(
            PROTO_VISIBLE, [(e.relation, e.object) for e in extract_evidence(visible_ped_doc, 3)]
        )
        pred = predict_frame(model, visible_ped_doc, 3, horizon=30)
        assert pred.truncated
        assert pred.ground_truth is visible_ped_doc.frames[-1].pedestrians_scene

    def test_horizon_zero_reads_same_frame(self, visible_ped_doc):
        model = self.steering_model(
            PROTO_VISIBLE, [(e.relation, e.object) for e in extract_evidence(visible_ped_doc, 1)]
        )
        pred = predict_frame(model, visible_ped_doc, 1, horizon=0)
        assert pred.ground_truth is visible_ped_doc.frames[1].pedestrians_scene
        assert not pred.truncated

    def test_unknown_evidence_objects_dropped_and_recorded(self):
        doc = single_frame_doc(surroundings=Surroundings.CLEAR)
        # model vocabulary lacks "Clear": that item must be dropped
        model = self.steering_model(PROTO_NO_PED, [("hasLanes", "LaneCount_2")])
        pred = predict_frame(model, doc, 0)
        assert [e.object for e in pred.dropped_evidence] == ["Clear"]
        assert all(e.object != "Clear" for e in pred.evidence)

    def test_reports_carry_decision_and_horizon(self, visible_ped_doc):
        model = self.steering_model(
            PROTO_VISIBLE, [(e.relation, e.object) for e in extract_evidence(visible_ped_doc, 0)]
        )
        pred = predict_frame(model, visible_ped_doc, 0, horizon=5)
        assert len(pred.reports) == 3
        for rep in pred.reports:
            assert rep.predicted_label is pred.predicted
            assert rep.horizon == 5

    def test_bad_frame_index(self, visible_ped_doc):
        model = self.steering_model(PROTO_VISIBLE, self.DOC_ITEMS)
        with pytest.raises(IndexError):
            predict_frame(model, visible_ped_doc, 99)

    def test_negative_horizon(self, visible_ped_doc):
        model = self.steering_model(PROTO_VISIBLE, self.DOC_ITEMS)
        with pytest.raises(ValueError, match="horizon"):
            predict_frame(model, visible_ped_doc, 0, horizon=-1)

    def test_record_serialization_round_trips_labels(self, visible_ped_doc):
        model = self.steering_model(
            PROTO_VISIBLE, [(e.relation, e.object) for e in extract_evidence(visible_ped_doc, 0)]
        )
        record = predict_frame(model, visible_ped_doc, 0).to_record()
        assert record["predicted"] == SceneLabel.PEDESTRIAN_NOT_OCCLUDED.value
        assert record["scene"] == visible_ped_doc.scene_id
        assert len(record["hypotheses"]) == 3
        for h_rec in record["hypotheses"]:
            assert set(h_rec) >= {"label", "prior", "raw", "clamped", "factors"}
