#!/usr/bin/env python3
"""Independent numpy implementation of the four-point head pose pipeline.

Used to produce the golden files under crates/cli/tests/data/ and the
frozen baseline constants in the Rust test suites. Shares no code with the
Rust crates.

    python3 scripts/reference_pipeline.py golden crates/cli/tests/data
    python3 scripts/reference_pipeline.py baseline
"""

import math
import sys
from pathlib import Path

import numpy as np

LABELS = ["chin", "nose_tip", "left_canthus", "right_canthus"]
MODEL = np.array(
    [[0.0, -62.0, -10.0], [0.0, -20.0, 21.0], [-34.0, 18.0, 0.0], [34.0, 18.0, 0.0]]
)

ETA = 1.77
TOL = 1e-6
MAX_ITER = 100
LAMBDA0 = 1e-3
LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e8


def rot(pitch, yaw, roll):
    cx, sx = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    cz, sz = math.cos(roll), math.sin(roll)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def euler(r):
    pitch = math.atan2(r[2, 1], r[2, 2])
    yaw = -math.atan2(max(-1.0, min(1.0, r[2, 0])), math.hypot(r[2, 1], r[2, 2]))
    roll = math.atan2(r[1, 0], r[0, 0])
    return np.degrees([pitch, yaw, roll])


def unit_rows(pts):
    dev = pts - pts.mean(axis=0)
    return dev / np.linalg.norm(dev, axis=1)[:, None]


def rotation_from(targets2, model3):
    # targets2: 4x2, model3: 4x3 -> least-squares 2x3, polar factor, cross product
    m = targets2.T
    big = model3.T
    rp = m @ big.T @ np.linalg.inv(big @ big.T)
    u, _, vt = np.linalg.svd(rp, full_matrices=False)
    q = u @ vt
    return np.vstack([q[0], q[1], np.cross(q[0], q[1])])


def sphere(points):
    p1 = points[0]
    a = points[1:] - p1
    b = 0.5 * (np.sum(points[1:] ** 2, axis=1) - np.sum(p1**2))
    c = np.linalg.solve(a, b)
    return c, np.linalg.norm(p1 - c)


def spherical(points, c, l):
    d = points - c
    elev = np.arccos(np.clip(d[:, 2] / l, -1.0, 1.0))
    azim = np.arctan2(d[:, 1], d[:, 0])
    return azim, elev


def morph_points(c, l, azim, elev, d_azim, d_elev):
    a = azim + d_azim
    e = elev + d_elev
    return c + l * np.stack([np.sin(e) * np.cos(a), np.sin(e) * np.sin(a), np.cos(e)], axis=1)


# symmetric packing: free = (d1_elev, d2_elev, d34_elev, d3_azim); d4_azim = -d3_azim
EXPAND = np.zeros((8, 4))  # rows: (azim_i, elev_i) for i = 0..3
EXPAND[1, 0] = 1.0
EXPAND[3, 1] = 1.0
EXPAND[5, 2] = 1.0
EXPAND[7, 2] = 1.0
EXPAND[4, 3] = 1.0
EXPAND[6, 3] = -1.0


def expand(free):
    full = EXPAND @ free
    return full[0::2], full[1::2]


class Problem:
    def __init__(self, targets, base3, eta):
        self.targets = targets
        self.c, self.l = sphere(base3)
        self.azim, self.elev = spherical(base3, self.c, self.l)
        self.initial = morph_points(self.c, self.l, self.azim, self.elev, 0.0, 0.0)
        self.r1 = rotation_from(targets, base3)
        self.proj = self.r1[:2]
        self.eta = eta

    def points(self, free):
        da, de = expand(free)
        return morph_points(self.c, self.l, self.azim, self.elev, da, de)

    def residuals(self, free):
        pts = self.points(free)
        rep = (self.targets - pts @ self.proj.T).ravel()
        pen = math.sqrt(self.eta) * (pts - self.initial).ravel()
        return np.concatenate([rep, pen])

    def objective(self, free):
        r = self.residuals(free)
        return float(r @ r)

    def jacobian(self, free):
        da, de = expand(free)
        a = self.azim + da
        e = self.elev + de
        full = np.zeros((20, 8))
        for i in range(4):
            d_az = self.l * np.array([-math.sin(e[i]) * math.sin(a[i]), math.sin(e[i]) * math.cos(a[i]), 0.0])
            d_el = self.l * np.array([math.cos(e[i]) * math.cos(a[i]), math.cos(e[i]) * math.sin(a[i]), -math.sin(e[i])])
            for col, dv in ((2 * i, d_az), (2 * i + 1, d_el)):
                full[2 * i : 2 * i + 2, col] = -self.proj @ dv
                full[8 + 3 * i : 8 + 3 * i + 3, col] = math.sqrt(self.eta) * dv
        return full @ EXPAND


def lm(problem, tol=TOL, max_iter=MAX_ITER):
    x = np.zeros(4)
    e = problem.objective(x)
    lam = LAMBDA0
    it = 0
    converged = False
    r = problem.residuals(x)
    j = problem.jacobian(x)
    while it < max_iter:
        g = j.T @ r
        if np.max(np.abs(g)) <= 1e-14:
            converged = True
            break
        h = j.T @ j
        d = np.maximum(np.diag(h), 1e-12)
        step = np.linalg.solve(h + lam * np.diag(d), -g)
        cand = x + step
        ec = problem.objective(cand)
        it += 1
        if ec < e:
            dec = e - ec
            x, e = cand, ec
            lam = max(lam / 10.0, LAMBDA_MIN)
            r = problem.residuals(x)
            j = problem.jacobian(x)
            if dec <= tol:
                converged = True
                break
        else:
            if lam >= LAMBDA_MAX:
                converged = True
                break
            lam = min(lam * 10.0, LAMBDA_MAX)
    return x, e, it, converged


def estimate(landmarks, model=MODEL, eta=ETA, morph=True):
    t = unit_rows(landmarks)
    b = unit_rows(model)
    problem = Problem(t, b, eta)
    if not morph:
        return euler(problem.r1), problem.objective(np.zeros(4)), 0, True
    x, e, it, conv = lm(problem)
    r = rotation_from(t, problem.points(x))
    return euler(r), e, it, conv


def weak_project(points, angles_deg, scale=1.0, t=(0.0, 0.0)):
    r = rot(*np.radians(angles_deg))
    return scale * (points @ r[:2].T + np.asarray(t))


def raw_morph(model, free):
    c, l = sphere(model)
    a, e = spherical(model, c, l)
    da, de = expand(np.asarray(free))
    return morph_points(c, l, a, e, da, de)


def grid_poses():
    vals = [-30, -15, 0, 15, 30]
    poses = []
    for p in vals:
        for y in vals:
            for r in vals:
                poses.append((f"g{len(poses):03d}", float(p), float(y), float(r)))
    return poses


def fmt(x):
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def report_lines(truth, preds, provenance):
    errs = {k: [] for k in ("pitch", "yaw", "roll")}
    for img, angles in truth.items():
        est = preds[img]
        for k, a, b in zip(("pitch", "yaw", "roll"), est, angles):
            d = (a - b + 180.0) % 360.0 - 180.0
            errs[k].append(abs(d))
    lines = ["# headpose eval", provenance, "angle,mae,std"]
    for k in ("pitch", "yaw", "roll"):
        v = np.array(errs[k])
        mae = v.mean()
        std = math.sqrt(np.mean((v - mae) ** 2))
        lines.append(f"{k},{mae:.2f},{std:.2f}")
    lines.append(f"instances,{len(truth)}")
    lines.append("failures,0")
    return lines


def estimate_grid(morph):
    out = {}
    for img, p, y, r in grid_poses():
        lm2 = weak_project(MODEL, (p, y, r))
        # predictions are written at 6 decimals; evaluation reads them back
        ang, _, _, _ = estimate(lm2, morph=morph)
        out[img] = tuple(float(fmt(a)) for a in ang)
    return out


def provenance(morph):
    return (
        f"# headpose estimate eta=1.77 tol=0.000001 max_iter=100 "
        f"constraints=symmetric morph={'on' if morph else 'off'}"
    )


def cmd_golden(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    poses = grid_poses()
    with open(outdir / "grid125_poses.csv", "w") as f:
        f.write("image_id,pitch,yaw,roll\n")
        for img, p, y, r in poses:
            f.write(f"{img},{p:.1f},{y:.1f},{r:.1f}\n")
    truth = {img: (p, y, r) for img, p, y, r in poses}
    for morph, name in ((True, "grid125_report.csv"), (False, "grid125_report_nomorph.csv")):
        preds = estimate_grid(morph)
        lines = report_lines(truth, preds, provenance(morph))
        (outdir / name).write_text("\n".join(lines) + "\n")
    with open(outdir / "grid125_expected.csv", "w") as f:
        f.write("image_id,pitch_off,yaw_off,roll_off,pitch_on,yaw_on,roll_on,objective_on\n")
        for img, p, y, r in poses:
            lm2 = weak_project(MODEL, (p, y, r))
            off, *_ = estimate(lm2, morph=False)
            on, e, _, _ = estimate(lm2, morph=True)
            vals = [*off, *on, e]
            f.write(img + "," + ",".join(repr(float(v)) for v in vals) + "\n")


def cmd_baseline():
    for morph in (False, True):
        errs = []
        for img, p, y, r in grid_poses():
            lm2 = weak_project(MODEL, (p, y, r))
            ang, e, it, conv = estimate(lm2, morph=morph)
            errs.append(np.abs(ang - np.array([p, y, r])))
        errs = np.array(errs)
        print("morph" if morph else "no-morph", "MAE", [repr(v) for v in errs.mean(axis=0)])


def cmd_ablation(n=100, seed=7, eta=ETA):
    rng = np.random.default_rng(seed)
    on, off = [], []
    for _ in range(n):
        free = rng.uniform(-0.15, 0.15, 4)
        truth = rng.uniform([-30, -30, -30], [30, 30, 30])
        true3 = raw_morph(MODEL, free)
        lm2 = weak_project(true3, truth)
        a_on, *_ = estimate(lm2, eta=eta, morph=True)
        a_off, *_ = estimate(lm2, eta=eta, morph=False)
        on.append(np.abs(a_on - truth))
        off.append(np.abs(a_off - truth))
    print("eta", eta, "on", np.mean(on, axis=0), np.mean(on), "off", np.mean(off, axis=0), np.mean(off))


if __name__ == "__main__":
    cmd = sys.argv[1]
    if cmd == "golden":
        cmd_golden(sys.argv[2])
    elif cmd == "baseline":
        cmd_baseline()
    elif cmd == "ablation":
        cmd_ablation(eta=float(sys.argv[2]) if len(sys.argv) > 2 else ETA)
