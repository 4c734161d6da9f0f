"""Bundled sentence-variation clusters and cluster grouping helpers."""

from __future__ import annotations

from importlib import resources

from .embio import EmbeddingSet

CLUSTER_ID_SEP = "#"


def load_sentence_clusters() -> list[tuple[str, list[str]]]:
    """The bundled clusters of near-identical sentences; each entry is
    (cluster name, sentences)."""
    text = (
        resources.files("m2e")
        .joinpath("fixtures/sentence_variation_clusters.txt")
        .read_text()
    )
    clusters: list[tuple[str, list[str]]] = []
    current: list[str] | None = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            current = []
            clusters.append((line.lstrip("#").strip(), current))
        elif current is not None:
            current.append(line)
    return clusters


def group_by_cluster(es: EmbeddingSet) -> list[tuple[str, EmbeddingSet]]:
    """Split one family file into clusters using ids of the form
    '<cluster>#<index>'."""
    groups: dict[str, list[int]] = {}
    for row, rid in enumerate(es.ids):
        name = rid.rsplit(CLUSTER_ID_SEP, 1)[0]
        groups.setdefault(name, []).append(row)
    return [(name, es.select(rows)) for name, rows in groups.items()]
