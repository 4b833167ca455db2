"""Deployment CSV ingestion: parse, group, deduplicate, project and clip."""
from __future__ import annotations

import codecs
import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterable, Mapping, TextIO, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import Polygon, ProjectionRef, project, project_window
from .pattern import PointPattern

REQUIRED_KEYS = ("operator", "band", "lon", "lat")
DEFAULT_DEDUP_EPS = 1.0


class IngestError(ValueError):
    pass


class EmptyPatternError(IngestError):
    """No site survived filtering, deduplication and clipping."""

    def __init__(self, message: str, report: IngestReport):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SiteRecord:
    operator: str
    band: str
    lon: float
    lat: float


@dataclass
class IngestReport:
    """Row accounting: ``rows_read = retained + rejected + merged + outside``."""

    rows_read: int = 0
    rows_rejected: int = 0
    reject_reasons: dict = field(default_factory=dict)
    duplicates_merged: int = 0
    points_outside_window: int = 0
    points_retained: int = 0

    def balanced(self) -> bool:
        return self.rows_read == (self.points_retained + self.rows_rejected
                                  + self.duplicates_merged + self.points_outside_window)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_rejected": self.rows_rejected,
            "reject_reasons": dict(sorted(self.reject_reasons.items())),
            "duplicates_merged": self.duplicates_merged,
            "points_outside_window": self.points_outside_window,
            "points_retained": self.points_retained,
        }


def parse_mapping(spec: Union[str, Mapping[str, str]]) -> dict[str, str]:
    """Column mapping from a dict or an inline ``operator=Op,band=Tech,...`` string."""
    if isinstance(spec, Mapping):
        mapping = {str(k).strip(): str(v).strip() for k, v in spec.items()}
    else:
        mapping = {}
        for item in spec.split(","):
            if not item.strip():
                continue
            key, sep, col = item.partition("=")
            if not sep:
                raise IngestError(f"mapping entry {item!r} is not key=column")
            mapping[key.strip()] = col.strip()
    missing = [k for k in REQUIRED_KEYS if not mapping.get(k)]
    if missing:
        raise IngestError(f"column mapping lacks {', '.join(missing)}")
    return {k: mapping[k] for k in REQUIRED_KEYS}


def _coordinate(text: str) -> float:
    t = text.strip()
    if "," in t and "." not in t:
        t = t.replace(",", ".")
    value = float(t)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def parse_sites(stream: Union[BinaryIO, TextIO], mapping: Mapping[str, str],
                delimiter: str = ",") -> tuple[list[SiteRecord], IngestReport]:
    """Read site rows; malformed rows are counted per reason, never fatal.

    Raises:
        IngestError: if a mapped column is absent from the header.
    """
    mapping = parse_mapping(mapping)
    if isinstance(stream, io.TextIOBase):
        text = stream
    else:
        text = codecs.getreader("utf-8-sig")(stream)
    reader = csv.reader(text, delimiter=delimiter)
    header = next(reader, None)
    if header is None:
        raise IngestError("site CSV is empty")
    header = [h.strip().lstrip("﻿") for h in header]
    missing = [mapping[k] for k in REQUIRED_KEYS if mapping[k] not in header]
    if missing:
        raise IngestError(f"column(s) {', '.join(missing)} not in header; "
                          f"available: {', '.join(header)}")
    idx = {k: header.index(mapping[k]) for k in REQUIRED_KEYS}
    records: list[SiteRecord] = []
    reasons: Counter = Counter()
    rows = 0
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        rows += 1
        if len(row) < len(header):
            reasons["missing field"] += 1
            continue
        op, band = row[idx["operator"]].strip(), row[idx["band"]].strip()
        if not op:
            reasons["empty operator"] += 1
            continue
        if not band:
            reasons["empty band"] += 1
            continue
        try:
            lon = _coordinate(row[idx["lon"]])
            lat = _coordinate(row[idx["lat"]])
        except ValueError:
            reasons["non-numeric coordinate"] += 1
            continue
        if abs(lat) > 90:
            reasons["latitude out of range"] += 1
            continue
        if abs(lon) > 180:
            reasons["longitude out of range"] += 1
            continue
        records.append(SiteRecord(op, band, lon, lat))
    report = IngestReport(rows_read=rows, rows_rejected=sum(reasons.values()),
                          reject_reasons=dict(reasons), points_retained=len(records))
    return records, report


def _norm(label: str) -> str:
    return label.strip().casefold()


def filter_sites(records: Iterable[SiteRecord], operator: str | None = None,
                 band: str | None = None) -> list[SiteRecord]:
    """Case-insensitive exact match on whichever labels are given."""
    op = None if operator is None else _norm(operator)
    bd = None if band is None else _norm(band)
    return [r for r in records
            if (op is None or _norm(r.operator) == op) and (bd is None or _norm(r.band) == bd)]


def merge_close(points: np.ndarray, eps: float) -> tuple[np.ndarray, int]:
    """Single-linkage merge of points within ``eps`` into cluster centroids.

    Merging repeats on the centroids until no two are within ``eps``, so the
    output is a fixed point. Clusters are ordered by their lowest input index.
    Returns the centroids and the number of inputs absorbed.
    """
    n = len(points)
    if n == 0:
        return points.reshape(0, 2), 0
    labels = np.arange(n)
    centroids = points.copy()
    while True:
        pairs = cKDTree(centroids).query_pairs(eps, output_type="ndarray")
        if len(pairs) == 0:
            break
        m = len(centroids)
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
        _, comp = connected_components(graph, directed=False)
        # relabel components in order of first appearance
        _, first = np.unique(comp, return_index=True)
        order = np.empty(len(first), dtype=np.int64)
        order[np.argsort(first)] = np.arange(len(first))
        labels = order[comp[labels]]
        k = len(first)
        centroids = np.column_stack([
            np.bincount(labels, weights=points[:, d], minlength=k) for d in (0, 1)
        ]) / np.bincount(labels, minlength=k)[:, None]
    return centroids, n - len(centroids)


def to_pattern(records: Iterable[SiteRecord], window_geo: Polygon,
               dedup_eps: float = DEFAULT_DEDUP_EPS,
               ref: ProjectionRef | None = None) -> tuple[PointPattern, IngestReport]:
    """Project sites around the window centroid, merge co-located ones, clip.

    Raises:
        EmptyPatternError: if nothing is left inside the window; the partial
            report is attached.
    """
    if dedup_eps < 0:
        raise ValueError("dedup_eps must be non-negative")
    records = list(records)
    window, ref = project_window(window_geo, ref)
    lon = np.array([r.lon for r in records], dtype=float)
    lat = np.array([r.lat for r in records], dtype=float)
    x, y = project(lon, lat, ref) if records else (lon, lat)
    sites, merged = merge_close(np.column_stack([x, y]).reshape(-1, 2), dedup_eps)
    inside = window.contains(sites) if len(sites) else np.zeros(0, dtype=bool)
    report = IngestReport(rows_read=len(records), duplicates_merged=merged,
                          points_outside_window=int((~inside).sum()),
                          points_retained=int(inside.sum()))
    if not inside.any():
        raise EmptyPatternError(
            f"no site left inside the window ({len(records)} records, "
            f"{merged} merged, {report.points_outside_window} outside)", report)
    return PointPattern(sites[inside], window), report


def combine_reports(parsed: IngestReport, projected: IngestReport) -> IngestReport:
    """End-to-end accounting of one parse followed by one :func:`to_pattern` call."""
    return replace(projected, rows_read=parsed.rows_read, rows_rejected=parsed.rows_rejected,
                   reject_reasons=dict(parsed.reject_reasons))
