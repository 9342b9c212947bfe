#!/usr/bin/env python3
"""Regenerates data/fixtures. Output is deterministic; rerunning rewrites identical bytes."""

import json
import math
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parent.parent / "data" / "fixtures"

SPEEDS = ["accelerate", "decelerate", "keep", "stop"]
PATHS = ["straight", "turn_left", "turn_right", "change_left", "change_right"]


def dump_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def dump_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def decision(speed, path, index):
    return {"index": index, "kind": "decision", "speed": speed, "path": path}


# ---------------------------------------------------------------------------
# Experience base documents
# ---------------------------------------------------------------------------

def meta(source):
    return {"source": source, "created_at": "2025-03-01T00:00:00Z"}


DOCS = [
    {
        "id": "doc-red-light",
        "sd": "urban intersection with a red traffic light ahead and vehicles queued at the stop line",
        "p": [
            {"index": 0, "kind": "thought", "text": "red traffic light governs the intersection"},
            {"index": 1, "kind": "tool_call", "tool": "detect_objects", "args": {"range": 40.0},
             "invocation_id": "call-1"},
            {"index": 2, "kind": "tool_result", "tool": "detect_objects",
             "result": {"invocation_id": "call-1", "status": "ok", "detections": []}},
            decision("stop", "straight", 3),
        ],
        "h": {"speed": "stop", "path": "straight"},
        "t": ["detect_objects"],
        "m": meta("fixture-demo"),
    },
    {
        "id": "doc-zebra",
        "sd": "pedestrian crossing zebra with a pedestrian waiting at the curb",
        "p": [
            {"index": 0, "kind": "thought", "text": "pedestrian may enter the zebra crossing"},
            {"index": 1, "kind": "tool_call", "tool": "detect_open_vocab", "args": {"query": "pedestrian"},
             "invocation_id": "call-1"},
            {"index": 2, "kind": "tool_result", "tool": "detect_open_vocab",
             "result": {"invocation_id": "call-1", "status": "ok", "detections": []}},
            decision("decelerate", "straight", 3),
        ],
        "h": {"speed": "decelerate", "path": "straight"},
        "t": ["detect_open_vocab"],
        "m": meta("fixture-demo"),
    },
    {
        "id": "doc-construction",
        "sd": "construction zone where traffic cones close the right lane",
        "p": [
            {"index": 0, "kind": "thought", "text": "cones narrow the road, merge left early"},
            {"index": 1, "kind": "tool_call", "tool": "crop_image",
             "args": {"x": 32, "y": 16, "w": 24, "h": 24, "out_ref": "crop.ppm"}, "invocation_id": "call-1"},
            {"index": 2, "kind": "tool_result", "tool": "crop_image",
             "result": {"invocation_id": "call-1", "status": "ok",
                        "crop": {"out_ref": "crop.ppm", "w": 24, "h": 24}}},
            decision("keep", "change_left", 3),
        ],
        "h": {"speed": "keep", "path": "change_left"},
        "t": ["crop_image"],
        "m": meta("fixture-demo"),
    },
]

# ---------------------------------------------------------------------------
# Scenario pack: observations, images, annotations, scripted policy
# ---------------------------------------------------------------------------

W, H = 64, 48


def make_image(boxes, sky, road):
    px = bytearray()
    for y in range(H):
        for x in range(W):
            c = sky if y < H // 3 else road
            for (bx, by, bw, bh, col) in boxes:
                if bx <= x < bx + bw and by <= y < by + bh:
                    c = col
            px += bytes(c)
    return b"P6\n%d %d\n255\n" % (W, H) + bytes(px)


SCENARIOS = [
    {
        "id": "s01-red-light",
        "prompt": "approaching an urban intersection where the red traffic light ahead is on",
        "nav": "go straight",
        "objects": [
            {"label": "traffic light", "bbox": [30, 4, 4, 10], "distance_m": 35.0, "confidence": 0.94,
             "color": (220, 30, 30)},
            {"label": "car", "bbox": [20, 24, 14, 10], "distance_m": 12.5, "confidence": 0.91,
             "color": (40, 40, 180)},
        ],
        "script": [
            "THOUGHT: a signalised intersection is ahead",
            "CITE: doc-red-light",
            "TOOL: detect_objects {\"range\": 40}",
            "THOUGHT: the light is red and a car is queued",
            "DECISION: stop/straight",
        ],
    },
    {
        "id": "s02-zebra",
        "prompt": "a pedestrian crossing zebra ahead with a pedestrian stepping off the curb",
        "nav": "go straight",
        "objects": [
            {"label": "pedestrian", "bbox": [44, 20, 4, 12], "distance_m": 18.0, "confidence": 0.88,
             "color": (250, 200, 40)},
            {"label": "zebra crossing", "bbox": [8, 34, 48, 6], "distance_m": 16.0, "confidence": 0.81,
             "color": (240, 240, 240)},
        ],
        "script": [
            "CITE: doc-zebra",
            "TOOL: detect_open_vocab {\"query\": \"pedestrian\"}",
            "THOUGHT: one pedestrian is about to cross",
            "DECISION: decelerate/straight",
        ],
    },
    {
        "id": "s03-construction",
        "prompt": "construction cones close the right lane ahead of the ego vehicle",
        "nav": "continue on this road",
        "objects": [
            {"label": "traffic cone", "bbox": [40, 26, 3, 5], "distance_m": 22.0, "confidence": 0.9,
             "color": (255, 120, 0)},
            {"label": "traffic cone", "bbox": [46, 30, 3, 5], "distance_m": 17.0, "confidence": 0.86,
             "color": (255, 120, 0)},
            {"label": "construction sign", "bbox": [52, 18, 6, 6], "distance_m": 25.0, "confidence": 0.77,
             "color": (255, 220, 0)},
        ],
        "script": [
            "CITE: doc-construction",
            "TOOL: crop_image {\"x\": 32, \"y\": 16, \"w\": 24, \"h\": 24}",
            "TOOL: detect_open_vocab {\"query\": \"traffic cone\"}",
            "THOUGHT: cones taper into the right lane",
            "DECISION: keep/change_left",
        ],
    },
    {
        "id": "s04-open-highway",
        "prompt": "open highway in clear weather with no traffic",
        "nav": "keep lane",
        "objects": [],
        "script": [
            "THOUGHT: nothing relevant in memory, the road is empty",
            "DECISION: accelerate/straight",
        ],
    },
    {
        "id": "s05-left-junction",
        "prompt": "turn left at the next junction behind the bus",
        "nav": "turn left",
        "objects": [
            {"label": "bus", "bbox": [18, 18, 22, 16], "distance_m": 20.0, "confidence": 0.93,
             "color": (200, 200, 40)},
            {"label": "cyclist", "bbox": [6, 26, 4, 8], "distance_m": 55.0, "confidence": 0.71,
             "color": (20, 160, 60)},
        ],
        "script": [
            "TOOL: detect_objects {\"range\": 30}",
            "TOOL: detect_objects {\"range\": 60}",
            "THOUGHT: the bus is close and a cyclist is far to the left",
            "DECISION: keep/turn_left",
        ],
    },
]


def write_scenarios():
    images = ROOT / "images"
    images.mkdir(parents=True, exist_ok=True)
    observations, scripts = [], {}
    for s in SCENARIOS:
        boxes = [tuple(o["bbox"]) + (o["color"],) for o in s["objects"]]
        (images / f"{s['id']}.ppm").write_bytes(make_image(boxes, (135, 180, 230), (90, 90, 90)))
        ann = {"image": {"w": W, "h": H},
               "objects": [{k: v for k, v in o.items() if k != "color"} for o in s["objects"]]}
        dump_json(images / f"{s['id']}.json", ann)
        observations.append({"scenario_id": s["id"], "image_ref": f"images/{s['id']}.ppm",
                             "prompt": s["prompt"], "navigation_instruction": s["nav"]})
        scripts[s["id"]] = s["script"]
    dump_jsonl(ROOT / "scenarios.jsonl", observations)
    dump_json(ROOT / "policy_script.json", scripts)


# ---------------------------------------------------------------------------
# Evaluation records
# ---------------------------------------------------------------------------

def wrong(values, v):
    return values[(values.index(v) + 1) % len(values)]


def eval_records(prefix, n, n_path, n_speed, n_joint, rng):
    """n records with exactly n_path path-correct, n_speed speed-correct, n_joint both."""
    kinds = (["both"] * n_joint + ["path"] * (n_path - n_joint) + ["speed"] * (n_speed - n_joint))
    kinds += ["none"] * (n - len(kinds))
    assert len(kinds) == n
    rng.shuffle(kinds)
    out = []
    for i, kind in enumerate(kinds):
        gold = {"speed": rng.choice(SPEEDS), "path": rng.choice(PATHS)}
        pred = dict(gold)
        if kind in ("speed", "none"):
            pred["path"] = wrong(PATHS, gold["path"])
        if kind in ("path", "none"):
            pred["speed"] = wrong(SPEEDS, gold["speed"])
        out.append({"scenario_id": f"{prefix}-{i:04d}", "predicted": pred, "gold": gold})
    return out


def spread(total_tenths, n, rng):
    """n integer scores whose sum is total_tenths * n / 10 (so the mean is total_tenths / 10)."""
    total = total_tenths * n // 10
    base, extra = divmod(total, n)
    scores = [base + 1] * extra + [base] * (n - extra)
    rng.shuffle(scores)
    return scores


def write_eval():
    rng = random.Random(7)
    recs = eval_records("ev", 10, 9, 8, 7, rng)
    traces = ROOT / "eval_traces"
    traces.mkdir(parents=True, exist_ok=True)
    texts = [
        "THOUGHT: the traffic light is red and a pedestrian waits at the crossing",
        "THOUGHT: a pedestrian is near the curb",
        "THOUGHT: the road is empty",
    ]
    for i, r in enumerate(recs):
        if i < len(texts):
            name = f"{r['scenario_id']}.txt"
            (traces / name).write_text(texts[i] + "\n")
            r["trace_ref"] = f"eval_traces/{name}"
    dump_jsonl(ROOT / "eval_records.jsonl", recs)
    dump_json(ROOT / "rubric.json", {
        "base_points": 50,
        "keywords": [
            {"pattern": "pedestrian", "points": 25, "axis": "all"},
            {"pattern": "traffic light", "points": 25, "axis": "all"},
        ],
    })

    # Headline report fixtures: 1000 records each, counts and integer judge scores chosen so
    # the aggregated report reproduces the published rows to one decimal.
    for name, row in [("navsim", (798, 788, 808, 931, 846, 826)), ("roadwork", (802, 796, 803, 442, 721, 335))]:
        rng = random.Random(name)
        n = 1000
        recs = eval_records(name, n, row[3], row[4], row[5], rng)
        axes = [spread(t, n, rng) for t in row[:3]]
        for i, r in enumerate(recs):
            r["judge_scores"] = {"risk_assessment": axes[0][i], "commonsense_reasoning": axes[1][i],
                                 "scene_awareness": axes[2][i]}
        dump_jsonl(ROOT / f"headline_{name}.jsonl", recs)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def write_trajectories():
    rows = ["scenario_id,t,x,y,heading"]

    def emit(sid, samples):
        for (t, x, y, h) in samples:
            rows.append(f"{sid},{t:.2f},{x:.6f},{y:.6f},{h:.6f}")

    dt, n = 0.1, 41
    emit("traj-straight", [(i * dt, 10.0 * i * dt, 0.0, 0.0) for i in range(n)])
    R, v = 20.0, 8.0
    emit("traj-left-arc", [(i * dt, R * math.sin(v * i * dt / R), R * (1 - math.cos(v * i * dt / R)),
                            v * i * dt / R) for i in range(n)])
    brake = []
    for i in range(61):
        t = i * dt
        s = 8.0 * t - t * t if t <= 4.0 else 16.0
        brake.append((t, s, 0.0, 0.0))
    emit("traj-brake", brake)
    emit("traj-lane-change", [(i * dt, 10.0 * i * dt, 3.5 * (0.5 - 0.5 * math.cos(math.pi * i / (n - 1))), 0.0)
                              for i in range(n)])
    (ROOT / "trajectories.csv").write_text("\n".join(rows) + "\n")


CONFIG = """# Demo configuration for the bundled fixture pack. Paths resolve against this file.

[encoder]
backend = "reference"
dims = 256

[retrieval]
k = 3
relevance_threshold = 0.35

[agent]
max_steps = 4
max_turns = 32
policy_backend = "script"
policy_script = "policy_script.json"
tool_backend = "fixture"
jobs = 2

[grpo]
group_size = 8
beta = 0.02
epsilon = 0.2
lambda = 1.0
iterations = 500
seed = 0
learning_rate = 0.05
inner_steps = 2
scenarios_per_class = 8

[labeling]
stop_speed = 0.3
accel = 0.4
turn_deg = 15.0
lane = 1.5
terminal_fraction = 0.25

[judge]
backend = "rubric"
rubric = "rubric.json"

[paths]
docs = "docs.jsonl"
scenarios = "scenarios.jsonl"
fixture_root = "."
trajectories = "trajectories.csv"
records = "eval_records.jsonl"
"""


def main():
    ROOT.mkdir(parents=True, exist_ok=True)
    dump_jsonl(ROOT / "docs.jsonl", DOCS)
    write_scenarios()
    write_eval()
    write_trajectories()
    (ROOT / "config.toml").write_text(CONFIG)


if __name__ == "__main__":
    main()
