#!/usr/bin/env python3
"""Regenerate the bundled scenario preset files.

Run from the repository root:  python tools/make_presets.py
"""

import json
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stepplan.model import RobotModel, nominal_position  # noqa: E402

OUT = Path(__file__).resolve().parent.parent / "src" / "stepplan" / "scenarios"

# Per-configuration travel is limited by the window-lagged reference box to
# roughly (d_lim + l_bnd - l_leg/(n_legs-1)) / 2; the dimensions below give
# the hexapod ~0.17 m and the quadruped ~0.13 m per configuration.
HEXAPOD = dict(
    n_legs=6,
    leg_offsets=[0.0, math.pi / 3, 2 * math.pi / 3, -math.pi, -2 * math.pi / 3, -math.pi / 3],
    l_leg=0.25,
    l_bnd=0.13,
    d_lim=0.26,
    dz_max=0.08,
)
QUADRUPED = dict(
    n_legs=4,
    leg_offsets=[math.pi / 4, 3 * math.pi / 4, -3 * math.pi / 4, -math.pi / 4],
    l_leg=0.2 * math.sqrt(2.0),
    l_bnd=0.13,
    d_lim=0.22,
    dz_max=0.08,
)

WEIGHTS = {"q_goal": [8.0, 8.0, 8.0, 3.0], "q_t": -0.15, "q_r": [0.05, 0.05]}


def stance(robot_cfg, coc_xy, yaw, z):
    robot = RobotModel(**{k: (tuple(v) if k == "leg_offsets" else v) for k, v in robot_cfg.items()})
    holds = []
    for j in range(robot.n_legs):
        p = nominal_position(coc_xy, yaw, j + 1, robot)
        holds.append([float(p[0]), float(p[1]), float(z)])
    return holds


def rect(x0, x1, y0, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def strip_regions(x_from, x_to, count, width, y0, y1, z, thickness):
    """Evenly pitched cross-track strips between two platforms."""
    pitch = (x_to - x_from) / count
    if width > pitch:
        raise ValueError("strips overlap")
    out = []
    for k in range(count):
        cx = x_from + (k + 0.5) * pitch
        out.append(
            {
                "name": f"stone{k + 1}",
                "polygon": rect(cx - width / 2, cx + width / 2, y0, y1),
                "z": z,
                "thickness": thickness,
            }
        )
    return out


def write(name, doc):
    OUT.mkdir(parents=True, exist_ok=True)
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print("wrote", path)


def hexapod_stepping_stones():
    regions = [
        {"name": "start", "polygon": rect(-0.65, 0.42, -0.55, 0.55), "z": 0.0, "thickness": 0.04},
        {"name": "goal", "polygon": rect(1.58, 2.65, -0.55, 0.55), "z": 0.0, "thickness": 0.04},
    ]
    regions += strip_regions(0.42, 1.58, 11, 0.085, -0.55, 0.55, 0.0, 0.04)
    return {
        "version": 1,
        "name": "hexapod_stepping_stones",
        "robot": HEXAPOD,
        "regions": regions,
        "start": {"footholds": stance(HEXAPOD, [0.0, 0.0], 0.0, 0.0), "yaw": 0.0},
        "goal": {"position": [2.0, 0.0, 0.0], "yaw": math.pi / 4},
        "max_steps": 96,
        "theta_range": [-0.9, 0.9],
        "n_segments": 8,
        "weights": WEIGHTS,
        "workspace_box": {"min": [-0.95, -0.75, -0.05], "max": [2.95, 0.75, 0.05]},
    }


def hexapod_rotation():
    regions = [
        {"name": "start", "polygon": rect(-0.65, 0.45, -0.6, 0.6), "z": 0.0, "thickness": 0.04},
        {"name": "bridge", "polygon": rect(0.45, 0.95, -0.6, 0.6), "z": 0.0, "thickness": 0.04},
        {"name": "goal", "polygon": rect(0.95, 2.0, -0.6, 0.6), "z": 0.0, "thickness": 0.04},
    ]
    return {
        "version": 1,
        "name": "hexapod_rotation",
        "robot": HEXAPOD,
        "regions": regions,
        "start": {"footholds": stance(HEXAPOD, [0.0, 0.0], 0.0, 0.0), "yaw": 0.0},
        "goal": {"position": [1.2, 0.0, 0.0], "yaw": math.pi / 2},
        "max_steps": 72,
        "theta_range": [-math.pi / 4, math.pi / 4],
        "n_segments": 8,
        "weights": WEIGHTS,
        "workspace_box": {"min": [-0.95, -0.8, -0.05], "max": [2.3, 0.8, 0.05]},
    }


def hexapod_tilted_terrain():
    slope = 0.12
    ramp_x0, ramp_x1 = 0.42, 1.12
    top_z = slope * (ramp_x1 - ramp_x0)
    regions = [
        {"name": "start", "polygon": rect(-0.65, ramp_x0, -0.55, 0.55), "z": 0.0, "thickness": 0.04},
        {
            "name": "ramp",
            "polygon": rect(ramp_x0, ramp_x1, -0.55, 0.55),
            "plane": [slope, 0.0, -slope * ramp_x0],
            "thickness": 0.04,
        },
        {"name": "top", "polygon": rect(ramp_x1, 2.3, -0.55, 0.55), "z": top_z, "thickness": 0.04},
    ]
    return {
        "version": 1,
        "name": "hexapod_tilted_terrain",
        "robot": HEXAPOD,
        "regions": regions,
        "start": {"footholds": stance(HEXAPOD, [0.0, 0.0], 0.0, 0.0), "yaw": 0.0},
        "goal": {"position": [1.7, 0.0, top_z], "yaw": 0.0},
        "max_steps": 96,
        "theta_range": [-0.9, 0.9],
        "n_segments": 8,
        "weights": WEIGHTS,
        "workspace_box": {"min": [-0.95, -0.75, -0.05], "max": [2.6, 0.75, top_z + 0.06]},
    }


def quadruped_stepping_stones():
    regions = [
        {"name": "start", "polygon": rect(-0.55, 0.34, -0.45, 0.45), "z": 0.0, "thickness": 0.04},
        {"name": "goal", "polygon": rect(1.16, 2.05, -0.45, 0.45), "z": 0.0, "thickness": 0.04},
    ]
    regions += strip_regions(0.34, 1.16, 11, 0.055, -0.45, 0.45, 0.0, 0.04)
    return {
        "version": 1,
        "name": "quadruped_stepping_stones",
        "robot": QUADRUPED,
        "regions": regions,
        "start": {"footholds": stance(QUADRUPED, [0.0, 0.0], 0.0, 0.0), "yaw": 0.0},
        "goal": {"position": [1.4, 0.0, 0.0], "yaw": math.pi / 4},
        "max_steps": 64,
        "theta_range": [-0.9, 0.9],
        "n_segments": 8,
        "weights": WEIGHTS,
        "workspace_box": {"min": [-0.85, -0.65, -0.05], "max": [2.35, 0.65, 0.05]},
    }


def quadruped_tilted_terrain():
    slope = 0.12
    ramp_x0, ramp_x1 = 0.34, 0.94
    top_z = slope * (ramp_x1 - ramp_x0)
    regions = [
        {"name": "start", "polygon": rect(-0.55, ramp_x0, -0.45, 0.45), "z": 0.0, "thickness": 0.04},
        {
            "name": "ramp",
            "polygon": rect(ramp_x0, ramp_x1, -0.45, 0.45),
            "plane": [slope, 0.0, -slope * ramp_x0],
            "thickness": 0.04,
        },
        {"name": "top", "polygon": rect(ramp_x1, 2.0, -0.45, 0.45), "z": top_z, "thickness": 0.04},
    ]
    return {
        "version": 1,
        "name": "quadruped_tilted_terrain",
        "robot": QUADRUPED,
        "regions": regions,
        "start": {"footholds": stance(QUADRUPED, [0.0, 0.0], 0.0, 0.0), "yaw": 0.0},
        "goal": {"position": [1.4, 0.0, top_z], "yaw": 0.0},
        "max_steps": 64,
        "theta_range": [-0.9, 0.9],
        "n_segments": 8,
        "weights": WEIGHTS,
        "workspace_box": {"min": [-0.85, -0.65, -0.05], "max": [2.3, 0.65, top_z + 0.06]},
    }


def main():
    write("hexapod_stepping_stones", hexapod_stepping_stones())
    write("hexapod_rotation", hexapod_rotation())
    write("hexapod_tilted_terrain", hexapod_tilted_terrain())
    write("quadruped_stepping_stones", quadruped_stepping_stones())
    write("quadruped_tilted_terrain", quadruped_tilted_terrain())


if __name__ == "__main__":
    main()
