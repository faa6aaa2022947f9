"""TF-IDF entity similarity and nearest-neighbor fact retrieval.

Each entity is represented by the bag of tokens [own id] + [object ids of
its entity-valued triples] + [(relation, object) pair tokens]; entities
are compared by cosine similarity of unit-normalized TF-IDF vectors.
Retrieval is exact: results match a brute-force all-pairs oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .ingest import PopularityTable
from .model import Entity, EntityId, GroupKey, Triple, object_key
from .preprocess import PreprocessedSnapshot


class UnknownEntity(KeyError):
    """The entity exists in neither snapshot."""


@dataclass(frozen=True)
class FeatureDoc:
    entity: str
    tokens: Tuple[str, ...]


@dataclass(frozen=True)
class NeighborFact:
    triple: Triple
    similarity: float
    subject_popularity: int = 0


def _pair_token(relation_id: str, object_id: str) -> str:
    return f"{relation_id}|{object_id}"


def _subject_index(snapshot: PreprocessedSnapshot) -> Dict[str, List[Triple]]:
    index: Dict[str, List[Triple]] = {}
    for key, triples in snapshot.groups.items():
        index.setdefault(key.subject.id, []).extend(triples)
    return index


def _entity_object_tokens(
    snapshot: PreprocessedSnapshot,
    entity_id: str,
    subject_index: Optional[Dict[str, List[Triple]]] = None,
) -> List[str]:
    if subject_index is not None:
        triples = subject_index.get(entity_id, [])
    else:
        triples = [
            t
            for key, group in snapshot.groups.items()
            if key.subject.id == entity_id
            for t in group
        ]
    tokens: List[str] = []
    for triple in triples:
        if isinstance(triple.object, Entity):
            tokens.append(triple.object.id.id)
            tokens.append(_pair_token(triple.relation.id, triple.object.id.id))
    return tokens


def build_feature_doc(
    entity_id: str, old: PreprocessedSnapshot, new: PreprocessedSnapshot
) -> FeatureDoc:
    """Token multiset for one entity, sourced from the old snapshot unless
    it has no entity-valued triples there, then from the new one."""
    old_tokens = _entity_object_tokens(old, entity_id)
    if old_tokens:
        return FeatureDoc(entity_id, (entity_id, *old_tokens))
    new_tokens = _entity_object_tokens(new, entity_id)
    if new_tokens:
        return FeatureDoc(entity_id, (entity_id, *new_tokens))
    known = (
        entity_id in old.relevant_entities
        or entity_id in new.relevant_entities
        or any(k.subject.id == entity_id for k in old.groups)
        or any(k.subject.id == entity_id for k in new.groups)
    )
    if not known:
        raise UnknownEntity(entity_id)
    return FeatureDoc(entity_id, (entity_id,))


def build_feature_docs(
    old: PreprocessedSnapshot, new: PreprocessedSnapshot
) -> List[FeatureDoc]:
    """Feature documents for every subject entity of either snapshot."""
    old_index = _subject_index(old)
    new_index = _subject_index(new)
    docs = []
    for entity_id in sorted(set(old_index) | set(new_index)):
        tokens = _entity_object_tokens(old, entity_id, old_index)
        if not tokens:
            tokens = _entity_object_tokens(new, entity_id, new_index)
        docs.append(FeatureDoc(entity_id, (entity_id, *tokens)))
    return docs


@dataclass
class TfidfIndex:
    """Sparse TF-IDF vectors (unit L2 norm) over entity feature documents.

    tf is the raw token count; idf = ln(N / df) without smoothing, so
    tokens present in every document carry no weight.
    """

    vocabulary: Dict[str, int]
    idf: np.ndarray
    matrix: sparse.csr_matrix  # one row per entity, L2-normalized
    entity_ids: List[str]
    rows: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.rows:
            self.rows = {entity: i for i, entity in enumerate(self.entity_ids)}

    def vector(self, entity_id: str) -> sparse.csr_matrix:
        return self.matrix.getrow(self.rows[entity_id])

    def similarities(self, entity_id: str) -> np.ndarray:
        """Cosine similarity of one entity to every indexed entity."""
        return np.asarray(self.matrix @ self.vector(entity_id).T.todense()).ravel()


def build_tfidf_index(docs: Sequence[FeatureDoc]) -> TfidfIndex:
    if not docs:
        raise ValueError("need at least one feature document")
    vocabulary: Dict[str, int] = {}
    for doc in docs:
        for token in doc.tokens:
            if token not in vocabulary:
                vocabulary[token] = len(vocabulary)
    n_docs = len(docs)
    df = np.zeros(len(vocabulary))
    for doc in docs:
        for column in {vocabulary[token] for token in doc.tokens}:
            df[column] += 1
    idf = np.log(n_docs / df)
    rows: List[int] = []
    cols: List[int] = []
    data: List[float] = []
    for row, doc in enumerate(docs):
        counts: Dict[int, int] = {}
        for token in doc.tokens:
            column = vocabulary[token]
            counts[column] = counts.get(column, 0) + 1
        for column, tf in counts.items():
            weight = tf * idf[column]
            if weight != 0.0:
                rows.append(row)
                cols.append(column)
                data.append(weight)
    matrix = sparse.csr_matrix(
        (data, (rows, cols)), shape=(n_docs, len(vocabulary)), dtype=np.float64
    )
    norms = sparse.linalg.norm(matrix, axis=1)
    nonzero = norms > 0
    scale = np.ones_like(norms)
    scale[nonzero] = 1.0 / norms[nonzero]
    matrix = sparse.diags(scale) @ matrix
    return TfidfIndex(
        vocabulary=vocabulary,
        idf=idf,
        matrix=matrix.tocsr(),
        entity_ids=[doc.entity for doc in docs],
    )


def ranked_candidates(index: TfidfIndex, entity_id: str, n: int) -> List[Tuple[str, float]]:
    """Up to n entities ordered by descending cosine to entity_id
    (self excluded), ties broken by ascending entity id."""
    sims = index.similarities(entity_id)
    order = sorted(
        (i for i in range(len(index.entity_ids)) if index.entity_ids[i] != entity_id),
        key=lambda i: (-sims[i], index.entity_ids[i]),
    )
    return [(index.entity_ids[i], float(sims[i])) for i in order[:n]]


def k_nearest_triples(
    query: Triple,
    index: TfidfIndex,
    old: PreprocessedSnapshot,
    k: int = 10,
    n: int = 500,
    popularity: Optional[PopularityTable] = None,
) -> List[NeighborFact]:
    """The k nearest facts sharing the query's relation.

    Iterates candidate entities by descending similarity (up to n), picks
    at most one triple per candidate from the old snapshot with the query's
    relation, and stops after k selections. Fewer than k results is valid.
    """
    if k > n:
        raise ValueError("k must not exceed n")
    results: List[NeighborFact] = []
    for entity_id, similarity in ranked_candidates(index, query.subject.id, n):
        group = old.groups.get(GroupKey(EntityId(entity_id), query.relation))
        if not group:
            continue
        triple = min(group, key=lambda t: object_key(t.object))
        pop = popularity[entity_id] if popularity is not None else 0
        results.append(NeighborFact(triple, similarity, pop))
        if len(results) >= k:
            break
    return results
