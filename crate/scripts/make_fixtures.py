#!/usr/bin/env python3
"""Regenerate the synthetic fixture datasets under fixtures/.

The fixtures mimic the schemas of the historical inputs (conflicts, cities,
trade edges, port totals, ship ledgers, region borders) but every value is
synthetic. Output is deterministic for a fixed seed.
"""
import csv
import json
import math
import os
import random
from collections import deque

SEED = 20240611
OUT = os.path.join(os.path.dirname(__file__), "..", "fixtures")

# name, lon, lat, exist_from, exist_to, role
CITIES = [
    ("Ouidah", 2.09, 6.36, 1816, 1836, "sale_atlantic"),
    ("Porto Novo", 2.63, 6.50, 1816, 1836, "sale_atlantic"),
    ("Lagos", 3.39, 6.45, 1816, 1836, "sale_atlantic"),
    ("Abomey", 1.99, 7.18, 1816, 1836, "sale_coastal"),
    ("Benin City", 5.62, 6.34, 1816, 1836, "sale_coastal"),
    ("Djougou", 1.67, 9.71, 1816, 1836, "sale_saharan"),
    ("Kalama", 3.93, 9.61, 1816, 1836, "sale_saharan"),
    ("Bussa", 4.52, 9.93, 1816, 1836, "sale_saharan"),
    ("Ogudu", 5.25, 9.35, 1816, 1836, "sale_saharan"),
    ("Tsaragi", 5.05, 8.85, 1816, 1836, "sale_saharan"),
    ("Ogodo", 4.60, 9.15, 1816, 1836, "sale_saharan"),
    ("Oyo", 3.93, 8.85, 1816, 1836, "interior"),
    ("Ilorin", 4.55, 8.50, 1816, 1836, "interior"),
    ("Ogbomosho", 4.25, 8.13, 1816, 1836, "interior"),
    ("Iseyin", 3.60, 7.97, 1816, 1836, "interior"),
    ("Saki", 3.39, 8.67, 1816, 1836, "interior"),
    ("Igboho", 3.72, 8.83, 1816, 1836, "interior"),
    ("Kishi", 3.85, 9.08, 1816, 1836, "interior"),
    ("Ijaye", 3.75, 7.55, 1816, 1836, "interior"),
    ("Ibadan", 3.90, 7.38, 1829, 1836, "interior"),
    ("Abeokuta", 3.35, 7.15, 1816, 1836, "interior"),
    ("Ijebu Ode", 3.92, 6.82, 1816, 1836, "interior"),
    ("Ikorodu", 3.50, 6.62, 1816, 1836, "interior"),
    ("Badagry", 2.88, 6.42, 1816, 1836, "interior"),
    ("Ketu", 2.60, 7.36, 1816, 1836, "interior"),
    ("Sabe", 2.47, 8.03, 1816, 1836, "interior"),
    ("Savalou", 1.98, 7.93, 1816, 1836, "interior"),
    ("Dassa", 2.18, 7.75, 1816, 1836, "interior"),
    ("Ife", 4.56, 7.48, 1816, 1836, "interior"),
    ("Ilesa", 4.73, 7.62, 1816, 1836, "interior"),
    ("Ede", 4.45, 7.73, 1816, 1836, "interior"),
    ("Oshogbo", 4.56, 7.77, 1816, 1836, "interior"),
    ("Ikirun", 4.67, 7.91, 1816, 1836, "interior"),
    ("Offa", 4.72, 8.15, 1816, 1836, "interior"),
    ("Owu", 4.05, 7.20, 1816, 1824, "interior"),
    ("Ondo", 4.84, 7.09, 1816, 1836, "interior"),
    ("Ado Ekiti", 5.22, 7.62, 1816, 1836, "interior"),
    ("Akure", 5.19, 7.25, 1816, 1836, "interior"),
    ("Okeho", 3.35, 8.03, 1816, 1836, "interior"),
    ("Igbeti", 4.14, 8.75, 1816, 1836, "interior"),
]

# Hand-kept extra links: the coastal lagoon route and a directed river link.
EXTRA_EDGES = [
    ("Ouidah", "Porto Novo", 0),
    ("Porto Novo", "Badagry", 0),
    ("Badagry", "Lagos", 0),
    ("Lagos", "Ikorodu", 0),
    ("Ijebu Ode", "Benin City", 0),
    ("Ondo", "Benin City", 0),
    ("Akure", "Benin City", 0),
    ("Kishi", "Kalama", 1),
]

LAT0 = sum(c[2] for c in CITIES) / len(CITIES)
KM_LON = 111.320 * math.cos(math.radians(LAT0))
KM_LAT = 110.574


def dist(a, b):
    dx = (a[1] - b[1]) * KM_LON
    dy = (a[2] - b[2]) * KM_LAT
    return math.hypot(dx, dy)


def build_edges():
    edges = {}
    for i, a in enumerate(CITIES):
        near = sorted(
            (dist(a, b), j) for j, b in enumerate(CITIES) if j != i
        )[:3]
        for _, j in near:
            key = tuple(sorted((i, j)))
            edges.setdefault(key, 0)
    named = {c[0]: k for k, c in enumerate(CITIES)}
    out = [(CITIES[i][0], CITIES[j][0], d) for (i, j), d in sorted(edges.items())]
    existing = {(a, b) for a, b, _ in out} | {(b, a) for a, b, _ in out}
    for a, b, d in EXTRA_EDGES:
        assert a in named and b in named
        if (a, b) not in existing:
            out.append((a, b, d))
    return out


def check_connectivity(edges):
    for year in range(1816, 1837):
        active = {c[0] for c in CITIES if c[3] <= year <= c[4]}
        rev = {n: [] for n in active}
        for a, b, directed in edges:
            if a in active and b in active:
                rev[b].append(a)
                if not directed:
                    rev[a].append(b)
        seen = {c[0] for c in CITIES if c[0] in active and c[5] != "interior"}
        q = deque(seen)
        while q:
            n = q.popleft()
            for m in rev[n]:
                if m not in seen:
                    seen.add(m)
                    q.append(m)
        stranded = active - seen
        assert not stranded, (year, stranded)


# Conflict zones drift over the years: (lon, lat, spread_deg)
ZONES = {
    "north": (4.10, 8.70, 0.22),
    "owu": (3.95, 7.30, 0.16),
    "west": (2.40, 7.60, 0.20),
    "east": (4.75, 7.75, 0.18),
    "egba": (2.95, 6.90, 0.15),
}


def zone_plan(year):
    if year == 1827:
        return []
    if year <= 1822:
        return [("north", 6), ("west", 4)]
    if year <= 1826:
        return [("owu", 7), ("north", 5), ("west", 3)]
    if year == 1828:
        return [("north", 12), ("east", 10), ("west", 8)]
    return [("north", 6), ("east", 6), ("egba", 5)]


def make_conflicts(rng):
    rows = []
    cid = 0
    for year in range(1816, 1837):
        placed = []
        for zone, count in zone_plan(year):
            lon0, lat0, spread = ZONES[zone]
            k = 0
            while k < count:
                lon = rng.gauss(lon0, spread)
                lat = rng.gauss(lat0, spread)
                if any(dist(("", lon, lat), ("", p[0], p[1])) < 4.0 for p in placed):
                    continue
                placed.append((lon, lat))
                intensity = 10 if rng.random() < 0.4 else 5
                cid += 1
                rows.append((f"c{cid}", round(lon, 5), round(lat, 5), year, year, intensity))
                k += 1
        if year not in (1827, 1828):
            # founded / rebuilt markers, which the model ignores
            for code in (0, 1):
                cid += 1
                rows.append((f"c{cid}", round(rng.uniform(2.0, 5.0), 5),
                             round(rng.uniform(6.6, 9.4), 5), year, year, code))
    # a few multi-year sieges
    rows.append(("s1", 3.98, 7.24, 1824, 1826, 10))
    rows.append(("s2", 4.52, 8.45, 1823, 1825, 5))
    return rows


def make_ports(rng):
    rows = []
    for year in range(1816, 1837):
        if year == 1820:
            rows.append((year, "UNKNOWN", rng.randint(500, 2000)))
            continue
        for port in ("Ouidah", "Porto Novo", "Lagos"):
            rows.append((year, port, rng.randint(300, 4000)))
        rows.append((year, "UNKNOWN", rng.randint(100, 1500)))
    return rows


REGIONS = [
    ("Dahomey", 1816, 1836, [(1.50, 6.25), (2.75, 6.25), (2.75, 8.40), (1.50, 8.40)]),
    ("Egba", 1816, 1836, [(2.75, 6.25), (3.70, 6.25), (3.70, 7.45), (2.75, 7.45)]),
    ("Ijebu", 1816, 1836, [(3.70, 6.25), (4.40, 6.25), (4.40, 7.45), (3.70, 7.45)]),
    ("Ife", 1816, 1836, [(4.40, 6.25), (5.80, 6.25), (5.80, 8.00), (4.40, 8.00), (4.40, 7.45)]),
    ("Oyo", 1816, 1836, [(2.75, 7.45), (4.40, 7.45), (4.40, 8.00), (4.30, 8.40),
                          (4.30, 9.20), (2.75, 9.20), (2.75, 8.40)]),
    ("Ilorin", 1816, 1836, [(4.40, 8.00), (5.80, 8.00), (5.80, 10.10), (4.30, 10.10),
                             (4.30, 8.40)]),
    ("Borgu", 1816, 1836, [(1.50, 8.40), (2.75, 8.40), (2.75, 9.20), (4.30, 9.20),
                            (4.30, 10.10), (1.50, 10.10)]),
]


def make_ledgers(rng):
    rows = []
    ships = [("Esperanca", 1825, "Lagos"), ("Uniao", 1825, "Ouidah"),
             ("Tibre", 1832, "Lagos"), ("Felicidade", 1832, "Porto Novo")]
    names = [r[0] for r in REGIONS]
    for ship, year, port in ships:
        for region in names:
            c = rng.randint(0, 60)
            if c:
                rows.append((ship, year, port, region, c))
    return rows


def main():
    rng = random.Random(SEED)
    os.makedirs(OUT, exist_ok=True)
    edges = build_edges()
    check_connectivity(edges)
    with open(os.path.join(OUT, "cities.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["name", "lon", "lat", "exist_from", "exist_to", "role"])
        w.writerows(CITIES)
    with open(os.path.join(OUT, "edges.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["from", "to", "directed"])
        w.writerows(edges)
    with open(os.path.join(OUT, "conflicts.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "lon", "lat", "start_year", "end_year", "intensity"])
        w.writerows(make_conflicts(rng))
    with open(os.path.join(OUT, "ports.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["year", "port", "count"])
        w.writerows(make_ports(rng))
    with open(os.path.join(OUT, "ledgers.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["ship_id", "year", "port", "region", "count"])
        w.writerows(make_ledgers(rng))
    regions = [
        {"region": r, "year_from": a, "year_to": b, "ring": [list(p) for p in ring]}
        for r, a, b, ring in REGIONS
    ]
    with open(os.path.join(OUT, "regions.json"), "w") as f:
        json.dump(regions, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
