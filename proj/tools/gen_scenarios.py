#!/usr/bin/env python3
"""Writes the shipped scenarios and their UTM maps.

Geometry is laid out in the ego-stationary frame (ego starts at the origin
facing +x) and converted to UTM with the scenario anchor.
"""
import json
import math
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
SCEN = ROOT / "scenarios"
MAPS = SCEN / "maps"


def to_utm(anchor, p):
    a = math.radians(anchor["phi_deg"])
    x, y = p
    return [round(anchor["utm_e"] + math.cos(a) * x - math.sin(a) * y, 4),
            round(anchor["utm_n"] + math.sin(a) * x + math.cos(a) * y, 4)]


def rect(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def straight(y, x0, x1, step=5.0):
    n = int(round(abs(x1 - x0) / step))
    return [(x0 + k * (x1 - x0) / n, y) for k in range(n + 1)]


def arc(cx, cy, r, a0_deg, a1_deg, n):
    return [(cx + r * math.cos(math.radians(a0_deg + (a1_deg - a0_deg) * k / n)),
             cy + r * math.sin(math.radians(a0_deg + (a1_deg - a0_deg) * k / n)))
            for k in range(n + 1)]


def write_map(name, anchor, buildings, lanes):
    doc = {
        "buildings": [{"id": i + 1, "corners": [to_utm(anchor, c) for c in b]}
                      for i, b in enumerate(buildings)],
        "lanes": [{"id": i + 1, "points": [to_utm(anchor, q) for q in l]}
                  for i, l in enumerate(lanes)],
    }
    (MAPS / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")


def obj(id_, x, y, phi_deg, v, cls="car", length=4.5, width=1.8, segments=None, **extra):
    o = {"id": id_, "class": cls, "x": x, "y": y, "phi_deg": phi_deg, "v": v,
         "length": length, "width": width}
    if segments:
        o["segments"] = segments
    o.update(extra)
    return o


def write_scenario(name, doc):
    (SCEN / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")


def passing_vehicles():
    anchor = {"utm_e": 572310.0, "utm_n": 5361420.0, "phi_deg": 32.0}
    buildings = [rect(x, 11, x + 30, 25) for x in (-40, 0, 40, 80, 120)]
    lanes = [straight(0.0, -100, 250), straight(3.5, -100, 250), straight(7.0, 250, -100)]
    write_map("passing_vehicles", anchor, buildings, lanes)
    statics = [{"id": 100 + i, "x": x, "y": -7.0, "length": 4.5, "width": 1.8}
               for i, x in enumerate((10, 16, 40, 60, 75, 100))]
    statics.append({"id": 200, "x": 50.0, "y": -10.0, "length": 200.0, "width": 0.3})
    write_scenario("passing_vehicles", {
        "name": "passing_vehicles",
        "duration": 9.9,
        "seed": 7,
        "map": "maps/passing_vehicles.json",
        "anchor": anchor,
        "ego": {"v": 8.0},
        "objects": [
            obj(1, -25.0, 3.5, 0.0, 13.0),
            obj(2, 20.0, 0.0, 0.0, 9.0, cls="truck", length=10.0, width=2.5),
            obj(3, 55.0, 7.0, 180.0, 10.0),
            obj(4, 15.0, -4.5, 0.0, 5.0, cls="bicycle", length=1.8, width=0.6),
            obj(5, 90.0, 7.0, 180.0, 9.0),
        ],
        "statics": statics,
    })


def roundabout_false_track():
    anchor = {"utm_e": 571880.0, "utm_n": 5360950.0, "phi_deg": -18.0}
    ring = arc(62.0, 0.0, 14.0, -170.0, 170.0, 24)
    lanes = [straight(0.0, -60, 46), straight(3.5, 46, -60), ring]
    buildings = [rect(10, -30, 40, -15), rect(-40, 15, 0, 30)]
    write_map("roundabout_false_track", anchor, buildings, lanes)
    write_scenario("roundabout_false_track", {
        "name": "roundabout_false_track",
        "duration": 8.0,
        "seed": 1,
        "map": "maps/roundabout_false_track.json",
        "anchor": anchor,
        "ego": {"v": 6.0, "segments": [{"duration": 8.0, "a": -0.5}]},
        "objects": [
            obj(1, 12.0, 0.0, 0.0, 5.0, segments=[{"duration": 8.0, "a": -0.4}]),
            obj(2, 44.0, 3.5, 180.0, 7.0),
        ],
        "injectors": {
            "false_tracks": [
                {"label": 900, "x": 42.0, "y": 1.75, "phi_deg": 90.0, "v": 0.0,
                 "existence": 0.9, "class": "car"},
            ],
        },
    })


def innercity_ghost_occlusion():
    anchor = {"utm_e": 573105.0, "utm_n": 5362240.0, "phi_deg": 75.0}
    buildings = [rect(-40, 7, 28, 30), rect(40, 7, 90, 30),
                 rect(-40, -30, 28, -7), rect(40, -30, 90, -7)]
    lanes = [straight(0.0, -50, 90), straight(3.5, 90, -50),
             [(32.0, y) for y in range(40, -41, -5)],
             [(36.0, y) for y in range(-40, 41, 5)]]
    write_map("innercity_ghost_occlusion", anchor, buildings, lanes)
    cyclist_segments = [{"duration": 2.0, "a": -2.0}]
    write_scenario("innercity_ghost_occlusion", {
        "name": "innercity_ghost_occlusion",
        "duration": 9.0,
        "seed": 3,
        "map": "maps/innercity_ghost_occlusion.json",
        "anchor": anchor,
        "ego": {"v": 3.0, "segments": [{"duration": 4.0, "a": -0.75}]},
        "objects": [
            obj(1, 35.0, -14.0, 90.0, 4.0, cls="bicycle", length=1.8, width=0.6,
                t_start=0.0, segments=[{"duration": 5.0, "a": 0.0}] + cyclist_segments),
            obj(2, 37.0, -15.0, 90.0, 4.0, cls="bicycle", length=1.8, width=0.6,
                t_start=0.0, segments=[{"duration": 5.0, "a": 0.0}] + cyclist_segments),
        ],
        "statics": [
            {"id": 100, "x": 31.0, "y": 10.0, "phi_deg": 90.0, "length": 8.0,
             "width": 2.5, "occluder": True},
        ],
        "injectors": {
            "grid_ghosts": [
                {"id": 500, "x": 10.0, "y": 14.0, "phi_deg": 0.0, "v": 2.0,
                 "length": 2.0, "width": 1.0, "t_start": 0.0,
                 "segments": [{"duration": 4.0, "a": 0.0}, {"duration": 1.0, "a": -2.0},
                              {"duration": 1.0, "a": 2.0}]},
            ],
        },
    })


def nominal_following():
    anchor = {"utm_e": 570950.0, "utm_n": 5359870.0, "phi_deg": 0.0}
    lanes = [straight(0.0, -100, 300), straight(3.5, -100, 300)]
    buildings = [rect(x, -30, x + 25, -14) for x in (-20, 20, 60, 100, 140)]
    write_map("nominal_following", anchor, buildings, lanes)
    write_scenario("nominal_following", {
        "name": "nominal_following",
        "duration": 10.0,
        "seed": 11,
        "map": "maps/nominal_following.json",
        "anchor": anchor,
        "ego": {"v": 10.0},
        "objects": [
            obj(1, 20.0, 0.0, 0.0, 10.0),
            obj(2, 35.0, 3.5, 0.0, 11.0),
        ],
        "statics": [{"id": 100, "x": 35.0, "y": -6.0, "length": 50.0, "width": 0.3}],
    })


if __name__ == "__main__":
    MAPS.mkdir(parents=True, exist_ok=True)
    passing_vehicles()
    roundabout_false_track()
    innercity_ghost_occlusion()
    nominal_following()
