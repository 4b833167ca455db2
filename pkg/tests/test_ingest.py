from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np
import pytest
import shapely.geometry as sg

from ginifit import ingest
from ginifit.geometry import Polygon, ProjectionRef, project, project_window, unproject
from ginifit.ingest import (EmptyPatternError, IngestError, SiteRecord, filter_sites, merge_close,
                            parse_mapping, parse_sites, to_pattern)

FIX = Path(__file__).parent / "fixtures"
MAP = {"operator": "op", "band": "tech", "lon": "lon", "lat": "lat"}
GEO = Polygon([(2.32, 48.835), (2.37, 48.835), (2.37, 48.865), (2.32, 48.865)])


def _csv(text: str):
    return io.BytesIO(text.encode("utf-8"))


def test_parse_two_valid_rows():
    recs, rep = parse_sites(_csv("op,tech,lon,lat\nA,LTE800,2.35,48.85\nB,GSM900,2.36,48.86\n"), MAP)
    assert recs == [SiteRecord("A", "LTE800", 2.35, 48.85), SiteRecord("B", "GSM900", 2.36, 48.86)]
    assert rep.rows_read == 2 and rep.rows_rejected == 0 and rep.balanced()


def test_latitude_out_of_range_rejected():
    recs, rep = parse_sites(_csv("op,tech,lon,lat\nA,LTE800,2.35,95\n"), MAP)
    assert recs == [] and rep.reject_reasons == {"latitude out of range": 1}


def test_small_fixture_accounting():
    with open(FIX / "sites_small.csv", "rb") as fh:
        recs, rep = parse_sites(fh, parse_mapping("operator=op,band=tech,lon=lon,lat=lat"))
    assert len(recs) == 8 and rep.rows_read == 10 and rep.rows_rejected == 2
    assert rep.reject_reasons == {"latitude out of range": 1, "non-numeric coordinate": 1}
    assert rep.balanced()
    # decimal comma normalised
    assert SiteRecord("SFR", "UMTS2100", 2.345, 48.848) in recs


def test_other_rejection_reasons():
    text = ("op,tech,lon,lat\n,LTE800,2.35,48.85\nA, ,2.35,48.85\nA,LTE800,200,48.85\n"
            "A,LTE800,2.35\nA,LTE800,inf,48.85\n")
    recs, rep = parse_sites(_csv(text), MAP)
    assert recs == []
    assert rep.reject_reasons == {"empty operator": 1, "empty band": 1, "longitude out of range": 1,
                                  "missing field": 1, "non-numeric coordinate": 1}


def test_missing_column_lists_header():
    with pytest.raises(IngestError, match="available: op, tech, longitude, lat"):
        parse_sites(_csv("op,tech,longitude,lat\n"), MAP)
    with pytest.raises(IngestError):
        parse_mapping("operator=op,band=tech")


def test_bom_and_text_stream():
    recs, _ = parse_sites(_csv("﻿op,tech,lon,lat\nA,X,1,2\n"), MAP)
    assert len(recs) == 1
    recs, _ = parse_sites(io.StringIO("op,tech,lon,lat\nA,X,1,2\n"), MAP)
    assert len(recs) == 1


def _records():
    with open(FIX / "sites_small.csv", "rb") as fh:
        return parse_sites(fh, MAP)[0]


def test_filter_examples():
    recs = _records()
    assert filter_sites(recs) == recs
    got = filter_sites(recs, operator="Orange", band="UMTS2100")
    assert [(r.operator, r.band) for r in got] == [("Orange", "UMTS2100"), ("Orange", "UMTS2100")]
    assert filter_sites(recs, operator="nobody") == []


def test_filter_matches_normalised_scan():
    rng = np.random.default_rng(0)
    ops = ["Orange", "ORANGE", "orange ", "SFR", "sfr", "Free"]
    bands = ["LTE800", "lte800", "GSM900"]
    recs = [SiteRecord(ops[rng.integers(6)], bands[rng.integers(3)], 2.3, 48.8) for _ in range(200)]
    for op in ("orange", "SFR", None):
        for band in ("LTE800", None):
            brute = [r for r in recs
                     if (op is None or r.operator.strip().lower() == op.lower())
                     and (band is None or r.band.strip().lower() == band.lower())]
            assert filter_sites(recs, op, band) == brute


def _at(ref, x, y, op="A"):
    lon, lat = unproject(x, y, ref)
    return SiteRecord(op, "B", lon, lat)


def test_dedup_two_close_records():
    _, ref = project_window(GEO)
    recs = [_at(ref, 0, 0), _at(ref, 0.5, 0), _at(ref, 300, 200)]
    p, rep = to_pattern(recs, GEO, dedup_eps=1.0)
    assert len(p) == 2 and rep.duplicates_merged == 1 and rep.balanced()
    np.testing.assert_allclose(p.points[0], [0.25, 0], atol=1e-6)


def test_outside_record_excluded():
    _, ref = project_window(GEO)
    recs = [_at(ref, 0, 0), _at(ref, 50_000, 0)]
    p, rep = to_pattern(recs, GEO)
    assert len(p) == 1 and rep.points_outside_window == 1 and rep.balanced()


def test_single_linkage_chain_and_fixpoint():
    pts = np.array([[0.0, 0], [0.9, 0], [1.8, 0], [10, 0]])
    c, merged = merge_close(pts, 1.0)
    assert merged == 2 and c.tolist() == [[0.9, 0], [10, 0]]
    # (0.95, 0.5) is 1.07 from both first points but 0.95 from their centroid
    pts = np.array([[0.0, 0], [0.0, 1.0], [0.95, 0.5]])
    c, merged = merge_close(pts, 1.0)
    assert merged == 2 and np.allclose(c, [[0.95 / 3, 0.5]])
    assert merge_close(np.array([[1.0, 2], [1.0, 2]]), 0.0)[1] == 1  # exact duplicates at eps 0


def _brute_dedup(pts, eps):
    """Union-find over all pairs, then repeat on centroids until stable."""
    groups = [[i] for i in range(len(pts))]
    while True:
        cent = np.array([pts[g].mean(axis=0) for g in groups])
        parent = list(range(len(groups)))

        def find(i):
            while parent[i] != i:
                i = parent[i]
            return i
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if math.dist(cent[i], cent[j]) <= eps:
                    parent[find(j)] = find(i)
        roots = {}
        for i in range(len(groups)):
            roots.setdefault(find(i), []).extend(groups[i])
        new = sorted((sorted(g) for g in roots.values()), key=lambda g: g[0])
        if len(new) == len(groups):
            return cent
        groups = new


def test_to_pattern_brute_force_oracle():
    rng = np.random.default_rng(9)
    w, ref = project_window(GEO)
    base = rng.uniform([-2500, -1800], [2500, 1800], (35, 2))
    near = base[:15] + rng.uniform(-0.7, 0.7, (15, 2))  # half of these fall within 1 m
    pts = np.concatenate([base, near])
    recs = [_at(ref, x, y) for x, y in pts]
    p, rep = to_pattern(recs, GEO, 1.0)
    xy = np.column_stack(project(np.array([r.lon for r in recs]), np.array([r.lat for r in recs]), ref))
    cent = _brute_dedup(xy, 1.0)
    poly = sg.Polygon(w.array)
    inside = np.array([poly.covers(sg.Point(*c)) for c in cent])
    np.testing.assert_allclose(p.points, cent[inside], atol=1e-9)
    assert rep.points_retained == inside.sum() and rep.points_outside_window == (~inside).sum()
    assert rep.duplicates_merged == len(recs) - len(cent) and rep.balanced()


def test_dedup_idempotent_on_reexport():
    _, ref = project_window(GEO)
    rng = np.random.default_rng(4)
    pts = rng.uniform(-2000, 2000, (40, 2))
    pts = np.concatenate([pts, pts[:10] + 0.4])
    p, _ = to_pattern([_at(ref, x, y) for x, y in pts], GEO)
    again, rep = to_pattern([_at(ref, x, y) for x, y in p.points], GEO, ref=ref)
    assert rep.duplicates_merged == 0
    np.testing.assert_allclose(again.points, p.points, atol=1e-6)


def test_determinism():
    recs = _records()
    a, ra = to_pattern(recs, GEO)
    b, rb = to_pattern(list(recs), GEO)
    assert np.array_equal(a.points, b.points) and ra == rb


def test_order_independence_of_merge():
    pts = np.array([[0.0, 0], [0.8, 0], [5, 5], [5.5, 5], [9, 9]])
    c1, _ = merge_close(pts, 1.0)
    c2, _ = merge_close(pts[::-1], 1.0)
    key = lambda a: sorted(map(tuple, np.round(a, 12)))  # noqa: E731
    assert key(c1) == key(c2)


def test_empty_output_error_carries_report():
    _, ref = project_window(GEO)
    with pytest.raises(EmptyPatternError, match="no site left") as exc:
        to_pattern([_at(ref, 90_000, 0)], GEO)
    assert exc.value.report.points_outside_window == 1
    with pytest.raises(EmptyPatternError):
        to_pattern([], GEO)
    with pytest.raises(ValueError):
        to_pattern(_records(), GEO, dedup_eps=-1)


def _corner_vs_centroid_distortion():
    geo = Polygon([(2.25, 48.80), (2.45, 48.80), (2.45, 48.935), (2.25, 48.935)])
    rng = np.random.default_rng(2)
    lon = rng.uniform(2.25, 2.45, 60)
    lat = rng.uniform(48.80, 48.935, 60)
    recs = [SiteRecord("A", "B", a, b) for a, b in zip(lon, lat)]
    p1, _ = to_pattern(recs, geo)
    p2, _ = to_pattern(recs, geo, ref=ProjectionRef(2.25, 48.80))
    d1 = np.hypot(*(p1.points[:, None] - p1.points[None]).transpose(2, 0, 1))
    d2 = np.hypot(*(p2.points[:, None] - p2.points[None]).transpose(2, 0, 1))
    off = ~np.eye(len(d1), dtype=bool)
    return float(np.max(np.abs(d1[off] / d2[off] - 1)))


def test_projection_reference_distortion_bound():
    # east-west scale ratio cos(lat0) / cos(lat0') differs from 1 by about tan(lat) * dlat
    dlat = math.radians(48.8675 - 48.80)
    bound = math.tan(math.radians(48.8675)) * dlat * 1.01
    assert _corner_vs_centroid_distortion() < bound


def test_projection_reference_choice_barely_matters():
    # 15 km window: centroid reference versus a corner reference
    geo = Polygon([(2.25, 48.80), (2.45, 48.80), (2.45, 48.935), (2.25, 48.935)])
    rng = np.random.default_rng(2)
    lon = rng.uniform(2.25, 2.45, 60)
    lat = rng.uniform(48.80, 48.935, 60)
    recs = [SiteRecord("A", "B", a, b) for a, b in zip(lon, lat)]
    p1, _ = to_pattern(recs, geo)
    p2, _ = to_pattern(recs, geo, ref=ProjectionRef(2.25, 48.80))
    d1 = np.hypot(*(p1.points[:, None] - p1.points[None]).transpose(2, 0, 1))
    d2 = np.hypot(*(p2.points[:, None] - p2.points[None]).transpose(2, 0, 1))
    off = ~np.eye(len(d1), dtype=bool)
    assert np.max(np.abs(d1[off] / d2[off] - 1)) < 5e-4


def test_fixture_report_accounting_end_to_end():
    with open(FIX / "sites_3op.csv", "rb") as fh:
        recs, parsed = parse_sites(fh, {"operator": "Operateur", "band": "Systeme",
                                        "lon": "Longitude", "lat": "Latitude"})
    geo = Polygon([[2.2953327, 48.8230204], [2.4046673, 48.8230204],
                   [2.4046673, 48.8769796], [2.2953327, 48.8769796]])
    _, rep = to_pattern(recs, geo)
    total = ingest.combine_reports(parsed, rep)
    assert total.balanced() and total.rows_rejected == 3
