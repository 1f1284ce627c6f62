#!/usr/bin/env python3
"""Builds the shipped DH skeleton table, constraint table and rest-pose oracle.

Each row is described by the direction of its rotation axis in the body
frame at rest (x = subject's left, y = down, z = away from the camera).  The
script solves the twist angle of every row and the rest joint angles so the
rest configuration is an upright standing pose with arms hanging down, then
evaluates that table with a plain chain of 4x4 products to produce the
rest-pose oracle used by the C++ tests.

Outputs (relative to the repository root):
  data/topology.json      rows, keypoints and bones (degrees / meters)
  data/constraints.json   effective [min, max] per variable parameter
  data/rest_pose.json     16 keypoints of the rest configuration
  src/default_tables.inc  the same table as a C++ initializer
"""

import json
import math
import pathlib

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parent.parent

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])
LEFT, RIGHT, DOWN, UP, BACK, FORWARD = X, -X, Y, -Y, Z, -Z

KEYPOINTS = [
    "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
    "spine", "thorax", "head", "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
]
KP = {name: i for i, name in enumerate(KEYPOINTS)}


def row(name, axis, kind="rot", length=0.0, x=None, keypoint=None,
        lo=-30.0, hi=30.0, positive=None, child=None):
    return dict(name=name, axis=axis, kind=kind, length=length, x=x,
                keypoint=keypoint, lo=lo, hi=hi, positive=positive, child=child)


def leg(side):
    out = LEFT if side == "l" else RIGHT
    return [
        row(f"{side}_hip.1", out, "bone_d", 0.13, lo=-30, hi=120,
            positive=FORWARD, child=DOWN),
        row(f"{side}_hip.2", DOWN, lo=-40, hi=40),
        row(f"{side}_hip.3", FORWARD, x=DOWN, keypoint=f"{side}_hip",
            lo=-20, hi=45, positive=out, child=DOWN),
        row(f"{side}_knee", RIGHT, "bone_a", 0.45, x=DOWN,
            keypoint=f"{side}_knee", lo=-180, hi=0),
        row(f"{side}_ankle", RIGHT, "bone_a", 0.44, keypoint=f"{side}_ankle"),
    ]


def arm(side):
    out = LEFT if side == "l" else RIGHT
    return [
        row(f"{side}_shoulder.1", out, "bone_d", 0.15, lo=-45, hi=150,
            positive=FORWARD, child=DOWN),
        row(f"{side}_shoulder.2", DOWN, lo=-70, hi=70),
        row(f"{side}_shoulder.3", FORWARD, x=DOWN, keypoint=f"{side}_shoulder",
            lo=-15, hi=150, positive=out, child=DOWN),
        row(f"{side}_elbow", RIGHT, "bone_a", 0.28, x=DOWN,
            keypoint=f"{side}_elbow", lo=0, hi=150),
        row(f"{side}_wrist", RIGHT, "bone_a", 0.25, keypoint=f"{side}_wrist",
            lo=-45, hi=45),
    ]


ROOT_ROWS = [
    row("root.1", BACK, lo=-20, hi=20),
    row("root.2", LEFT, lo=-20, hi=20),
    row("root.3", UP, x=BACK, keypoint="pelvis", lo=-30, hi=30),
]
SPINE_THORAX = [
    row("spine.1", UP, "bone_d", 0.23),
    row("spine.2", FORWARD, lo=-25, hi=25),
    row("spine.3", LEFT, x=UP, keypoint="spine", lo=-20, hi=45,
        positive=FORWARD, child=UP),
    row("thorax.1", LEFT, "bone_a", 0.25, lo=-15, hi=30,
        positive=FORWARD, child=UP),
    row("thorax.2", FORWARD, lo=-20, hi=20),
    row("thorax.3", UP, x=BACK, keypoint="thorax"),
]
HEAD = [
    row("neck.1", UP, lo=-60, hi=60),
    row("neck.2", LEFT, lo=-40, hi=50, positive=FORWARD, child=UP),
    row("neck.3", FORWARD, x=UP, lo=-35, hi=35),
    row("head", LEFT, "bone_a", 0.20, keypoint="head"),
]

BRANCHES = [
    ("right_leg", ROOT_ROWS + leg("r"), 3),
    ("left_leg", ROOT_ROWS + leg("l"), 3),
    ("torso", ROOT_ROWS + SPINE_THORAX + HEAD, 9),
    ("left_arm", ROOT_ROWS + SPINE_THORAX + arm("l"), 9),
    ("right_arm", ROOT_ROWS + SPINE_THORAX + arm("r"), 9),
]


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_z(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def dh(a, d, alpha, theta):
    ct, st, ca, sa = math.cos(theta), math.sin(theta), math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st, 0.0, a],
        [st * ca, ct * ca, -sa, -d * sa],
        [st * sa, ct * sa, ca, d * ca],
        [0.0, 0.0, 0.0, 1.0],
    ])


def snap_deg(rad):
    deg = math.degrees(rad)
    deg = round(deg, 6)
    return 0.0 if deg == 0 else deg


def solve_branch(rows):
    """Returns per-row (a, d, alpha_deg, theta_deg) for one branch."""
    out = []
    R = np.eye(3)
    for k, r in enumerate(rows):
        z_local = R.T @ r["axis"]
        assert abs(z_local[0]) < 1e-9, (r["name"], "axis not reachable")
        alpha = math.atan2(-z_local[1], z_local[2])
        Rp = R @ rot_x(alpha)
        if r["x"] is not None:
            x_des = r["x"]
        elif k + 1 < len(rows):
            nxt = rows[k + 1]
            if nxt["kind"] == "bone_a":
                raise AssertionError(f"{r['name']}: a-bone child needs explicit x")
            x_des = np.cross(r["axis"], nxt["axis"])
        else:
            x_des = None
        if x_des is None:
            theta = 0.0
        else:
            assert abs(np.dot(x_des, r["axis"])) < 1e-9, (r["name"], "x not normal to axis")
            x_local = Rp.T @ x_des
            theta = math.atan2(x_local[1], x_local[0])
        alpha_d, theta_d = snap_deg(alpha), snap_deg(theta)
        a = r["length"] if r["kind"] == "bone_a" else 0.0
        d = r["length"] if r["kind"] == "bone_d" else 0.0
        out.append((a, d, alpha_d, theta_d))
        R = Rp @ rot_z(math.radians(theta_d))
    return out


def main():
    canonical = {}  # row name -> canonical row id
    length_ids = {}  # row name -> length param id
    rows_json = []
    solved_by_name = {}
    for b, (bname, rows, shared) in enumerate(BRANCHES):
        solved = solve_branch(rows)
        for k, (r, (a, d, alpha, theta)) in enumerate(zip(rows, solved)):
            name = r["name"]
            if name in solved_by_name:
                assert solved_by_name[name] == (a, d, alpha, theta), name
            solved_by_name[name] = (a, d, alpha, theta)
            canonical.setdefault(name, len(canonical))
            variable = ["theta"]
            if r["kind"] == "bone_a":
                variable.append("a")
            elif r["kind"] == "bone_d":
                variable.append("d")
            rows_json.append({
                "branch": b, "row": k, "name": name,
                "a": a, "d": d, "alpha": alpha, "theta": theta,
                "variable": variable, "shared_id": canonical[name],
                "keypoint": KP[r["keypoint"]] if r["keypoint"] else -1,
            })
    assert len(canonical) == 33, len(canonical)
    # length ids follow the theta ids, in first-appearance order
    for rj in rows_json:
        if len(rj["variable"]) == 2 and rj["name"] not in length_ids:
            length_ids[rj["name"]] = 33 + len(length_ids)
    assert len(length_ids) == 15

    bones = []
    for rj in rows_json:
        if rj["name"] in length_ids and length_ids[rj["name"]] - 33 == len(bones):
            # the bone ends at the keypoint of the first keypoint-bearing row
            # at or after this row in the branch
            b, k = rj["branch"], rj["row"]
            branch_rows = [x for x in rows_json if x["branch"] == b]
            child = next(x["keypoint"] for x in branch_rows[k:] if x["keypoint"] >= 0)
            parent = next(x["keypoint"] for x in reversed(branch_rows[:k]) if x["keypoint"] >= 0)
            bones.append([parent, child])
    assert len(bones) == 15

    topology = {
        "format": "dhaug-topology/1",
        "units": {"angles": "degrees", "lengths": "meters"},
        "keypoints": KEYPOINTS,
        "bones": bones,
        "branches": [{"id": b, "name": n, "shared_prefix": s}
                     for b, (n, _, s) in enumerate(BRANCHES)],
        "rows": rows_json,
    }

    # rest pose via naive products over each branch
    pose = {}
    for b, (bname, rows, shared) in enumerate(BRANCHES):
        M = np.eye(4)
        for rj in (x for x in rows_json if x["branch"] == b):
            M = M @ dh(rj["a"], rj["d"], math.radians(rj["alpha"]), math.radians(rj["theta"]))
            if rj["keypoint"] >= 0:
                p = M[:3, 3].copy()
                if rj["keypoint"] in pose:
                    assert np.allclose(pose[rj["keypoint"]], p, atol=1e-12)
                pose[rj["keypoint"]] = p
    assert len(pose) == 16
    rest = [[float(v) for v in pose[i]] for i in range(16)]

    # rest orientation of each row axis, used to orient asymmetric ranges
    axes = {}
    for b, (bname, rows, shared) in enumerate(BRANCHES):
        R = np.eye(3)
        for rj in (x for x in rows_json if x["branch"] == b):
            R = R @ rot_x(math.radians(rj["alpha"]))
            axes[rj["name"]] = R[:, 2].copy()
            R = R @ rot_z(math.radians(rj["theta"]))

    spec_by_name = {}
    for _, rows, _ in BRANCHES:
        for r in rows:
            spec_by_name[r["name"]] = r

    bounds = []
    for name, cid in sorted(canonical.items(), key=lambda kv: kv[1]):
        r = spec_by_name[name]
        a, d, alpha, theta = solved_by_name[name]
        lo, hi = float(r["lo"]), float(r["hi"])
        if r["positive"] is not None:
            motion = np.cross(axes[name], r["child"])
            if np.dot(motion, r["positive"]) < 0:
                lo, hi = -hi, -lo
        bounds.append({"param": f"{name}.theta", "min": theta + lo, "max": theta + hi})
    for name, lid in sorted(length_ids.items(), key=lambda kv: kv[1]):
        r = spec_by_name[name]
        field = "a" if r["kind"] == "bone_a" else "d"
        rest_len = r["length"]
        bounds.append({"param": f"{name}.{field}",
                       "min": round(0.8 * rest_len, 12), "max": round(1.2 * rest_len, 12)})

    constraints = {
        "format": "dhaug-constraints/1",
        "units": {"angles": "degrees", "lengths": "meters"},
        "note": "min/max are effective DH values (rest value plus delta)",
        "bounds": bounds,
    }

    (ROOT / "data").mkdir(exist_ok=True)
    (ROOT / "data/topology.json").write_text(json.dumps(topology, indent=1) + "\n")
    (ROOT / "data/constraints.json").write_text(json.dumps(constraints, indent=1) + "\n")
    (ROOT / "data/rest_pose.json").write_text(json.dumps(
        {"format": "dhaug-pose/1", "keypoints": KEYPOINTS, "joints": rest}, indent=1) + "\n")

    lines = ["// Generated by tools/design_topology.py. Do not edit by hand.",
             "// branch, row, name, a, d, alpha_deg, theta_deg, var_a, var_d, shared_id, keypoint"]
    for rj in rows_json:
        lines.append(
            f'{{{rj["branch"]}, {rj["row"]}, "{rj["name"]}", {rj["a"]!r}, {rj["d"]!r}, '
            f'{rj["alpha"]!r}, {rj["theta"]!r}, {str("a" in rj["variable"]).lower()}, '
            f'{str("d" in rj["variable"]).lower()}, {rj["shared_id"]}, {rj["keypoint"]}}},')
    lines.append("")
    (ROOT / "src/default_tables.inc").write_text("\n".join(lines))

    lines = ["// Generated by tools/design_topology.py. Do not edit by hand.",
             "// param name, effective min, effective max (degrees / meters)"]
    for bnd in bounds:
        lines.append(f'{{"{bnd["param"]}", {bnd["min"]!r}, {bnd["max"]!r}}},')
    lines.append("")
    (ROOT / "src/default_constraints.inc").write_text("\n".join(lines))

    for i, p in enumerate(rest):
        print(f"{KEYPOINTS[i]:>11s} {p[0]: .4f} {p[1]: .4f} {p[2]: .4f}")


if __name__ == "__main__":
    main()
