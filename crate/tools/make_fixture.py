"""Generate the bundled 10-vertiport / 6-NFZ fixture airspace.

Shapes are authored in a local east/north frame (meters) and written out as
lat/lon with the same equirectangular projection the library uses.
"""
import json
import math
import sys

from shapely.geometry import Point, Polygon

R_EARTH = 6_371_000.0
ORIGIN = (51.4545, -2.5879)  # lat, lon

def unproject(x, y):
    lat0, lon0 = ORIGIN
    lat = lat0 + math.degrees(y / R_EARTH)
    lon = lon0 + math.degrees(x / (R_EARTH * math.cos(math.radians(lat0))))
    return lat, lon

BOUNDS = [(-7000, -7000), (7000, -7000), (7000, 7000), (-7000, 7000)]

# All concave, counter-clockwise.
NFZS = {
    # U opening north
    "nfz-u": [(-2600, 1600), (-400, 1600), (-400, 3600), (-900, 3600),
              (-900, 2100), (-2100, 2100), (-2100, 3600), (-2600, 3600)],
    # L
    "nfz-l-east": [(1800, 1200), (4200, 1200), (4200, 1800), (2500, 1800),
                   (2500, 4000), (1800, 4000)],
    # C opening east
    "nfz-c": [(-500, -2800), (2200, -2800), (2200, -2200), (300, -2200),
              (300, -400), (2200, -400), (2200, 200), (-500, 200)],
    # L rotated
    "nfz-l-west": [(-5200, -3600), (-3000, -3600), (-3000, -1400),
                   (-3700, -1400), (-3700, -2900), (-5200, -2900)],
    # notched block
    "nfz-notch": [(3400, -4200), (5200, -4200), (5200, -1800), (4600, -1800),
                  (4600, -3400), (4000, -3400), (4000, -1800), (3400, -1800)],
    # chevron
    "nfz-chevron": [(-5600, 300), (-4200, 1300), (-2800, 300), (-2800, 1100),
                    (-4200, 2100), (-5600, 1100)],
}

VERTIPORTS = [
    ("0", (-4500, 5200)),
    ("1", (5200, 5600)),
    ("2", (2900, -3200)),
    ("3", (-6200, -800)),
    ("4", (6000, -500)),
    ("5", (-800, -6000)),
    ("6", (400, 6000)),
    ("7", (-3200, -5200)),
    ("8", (5800, -5800)),
    ("9", (-1500, 2900)),
]

def check():
    bounds = Polygon(BOUNDS)
    polys = {k: Polygon(v) for k, v in NFZS.items()}
    for k, p in polys.items():
        assert p.is_valid and p.exterior.is_ccw, k
        assert not math.isclose(p.convex_hull.area, p.area), f"{k} not concave"
        assert bounds.contains(p), k
    for vid, xy in VERTIPORTS:
        pt = Point(xy)
        for k, p in polys.items():
            d = p.exterior.distance(pt)
            assert not p.contains(pt) and d > 300, (vid, k, d)
    for (a, pa), (b, pb) in [(VERTIPORTS[0], VERTIPORTS[2])]:
        print("0-2 direct", math.dist(pa, pb), file=sys.stderr)

def ring(pts):
    return [{"lat": la, "lon": lo} for la, lo in (unproject(x, y) for x, y in pts)]

def main():
    check()
    doc = {
        "origin": {"lat": ORIGIN[0], "lon": ORIGIN[1]},
        "bounds": ring(BOUNDS),
        "nfzs": [{"id": k, "ring": ring(v)} for k, v in NFZS.items()],
        "vertiports": [
            {"id": vid, **dict(zip(("lat", "lon"), unproject(*xy)))}
            for vid, xy in VERTIPORTS
        ],
    }
    json.dump(doc, sys.stdout, indent=2)
    print()

if __name__ == "__main__":
    main()
