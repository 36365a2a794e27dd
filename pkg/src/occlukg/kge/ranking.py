"""Filtered link-prediction evaluation (MRR, Hits@n, mean rank).

Both directions are ranked per test triple: the true object against
every entity substitution, and the true subject likewise. Candidates
that form another known-true triple are filtered out; ties count
against the true triple (pessimistic), so an untrained all-zero model
cannot score a flattering MRR.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..kg import Triple
from .model import ComplexModel


@dataclass(frozen=True)
class RankingReport:
    mrr: float
    hits_at_1: float
    hits_at_3: float
    hits_at_10: float
    mean_rank: float
    triples: tuple[Triple, ...]
    ranks: tuple[tuple[int, int], ...]  # (subject-direction, object-direction)
    mode: str = "filtered"

    def __post_init__(self):
        if not 0.0 < self.mrr <= 1.0:
            raise ValueError("MRR must lie in (0, 1]")
        if not self.hits_at_1 <= self.hits_at_3 <= self.hits_at_10:
            raise ValueError("Hits@n must be non-decreasing in n")
        if any(r < 1 for pair in self.ranks for r in pair):
            raise ValueError("ranks must be >= 1")


def evaluate_ranking(
    model: ComplexModel, test: Iterable[Triple], filter: Iterable[Triple]
) -> RankingReport:
    """Rank each test triple's subject and object among all entities.

    ``filter`` must contain every known-true triple (train, validation
    and test); a test triple missing from it is an error. The rank of a
    true completion is 1 + the number of unfiltered other candidates
    scoring >= it.
    """
    test_triples = sorted(set(test), key=lambda t: (t.subject, t.relation, t.object))
    if not test_triples:
        raise ValueError("empty test set")
    filter_set = set(filter)
    missing = [t for t in test_triples if t not in filter_set]
    if missing:
        raise ValueError(
            f"filter must be a superset of the test set; missing e.g. {missing[0]}"
        )

    known_objects: dict[tuple[int, int], list[int]] = {}
    known_subjects: dict[tuple[int, int], list[int]] = {}
    for t in filter_set:
        try:
            s = model.entity_index[t.subject]
            o = model.entity_index[t.object]
            r = model.relation_index[t.relation]
        except KeyError:
            continue  # out-of-vocabulary filter triples cannot be candidates
        known_objects.setdefault((s, r), []).append(o)
        known_subjects.setdefault((o, r), []).append(s)

    ranks: list[tuple[int, int]] = []
    for t in test_triples:
        s = model.entity_index[t.subject]
        r = model.relation_index[t.relation]
        o = model.entity_index[t.object]
        s_re, s_im = model.ent_re[s], model.ent_im[s]
        r_re, r_im = model.rel_re[r], model.rel_im[r]
        o_re, o_im = model.ent_re[o], model.ent_im[o]

        # object direction: score is linear in the candidate embedding
        a_re = s_re * r_re - s_im * r_im
        a_im = s_im * r_re + s_re * r_im
        obj_scores = model.ent_re @ a_re + model.ent_im @ a_im
        obj_rank = _pessimistic_rank(obj_scores, o, known_objects[(s, r)])

        # subject direction
        b_re = r_re * o_re + r_im * o_im
        b_im = r_re * o_im - r_im * o_re
        subj_scores = model.ent_re @ b_re + model.ent_im @ b_im
        subj_rank = _pessimistic_rank(subj_scores, s, known_subjects[(o, r)])

        ranks.append((subj_rank, obj_rank))

    flat = np.array([r for pair in ranks for r in pair], dtype=np.float64)
    return RankingReport(
        mrr=float(np.mean(1.0 / flat)),
        hits_at_1=float(np.mean(flat <= 1)),
        hits_at_3=float(np.mean(flat <= 3)),
        hits_at_10=float(np.mean(flat <= 10)),
        mean_rank=float(np.mean(flat)),
        triples=tuple(test_triples),
        ranks=tuple(ranks),
    )


def _pessimistic_rank(scores: np.ndarray, true_idx: int, known: list[int]) -> int:
    true_score = scores[true_idx]
    mask = np.ones(scores.shape[0], dtype=bool)
    mask[known] = False
    mask[true_idx] = False
    return 1 + int(np.count_nonzero(scores[mask] >= true_score))
