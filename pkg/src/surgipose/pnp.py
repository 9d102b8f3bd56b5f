"""Classical pose estimation from 2D-3D correspondences.

A DLT linear estimate (on intrinsics-normalized pixels and Hartley-normalized
model points) is projected to the nearest rigid pose and refined by damped
least squares on the reprojection error.  The rotation is parameterized by a
local axis-angle increment, R <- exp([dw]x) R, which is singularity free for
the small steps the damping enforces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BehindCamera, DegenerateConfiguration, Diverged, InvalidParam, ParseError
from .geometry import CameraModel, Pose, nearest_rotation, rotation_from

# near-coplanarity threshold on the singular-value ratio of centered points
_RANK_RATIO = 1e-6
_LAMBDA_INIT = 1e-3
_MAX_ITERS = 100
_MIN_IMPROVEMENT = 1e-10  # px
_MIN_DEPTH = 1e-6         # mm; steps putting points behind this are rejected


@dataclass(frozen=True)
class Correspondence:
    """A model-frame 3D point (mm) and its observed pixel."""

    model_point: tuple
    image_point: tuple

    def __post_init__(self):
        mp = tuple(float(v) for v in self.model_point)
        ip = tuple(float(v) for v in self.image_point)
        if len(mp) != 3 or len(ip) != 2:
            raise InvalidParam("correspondence needs a 3D model point and a 2D pixel")
        if not all(math.isfinite(v) for v in mp + ip):
            raise InvalidParam("correspondence values must be finite")
        object.__setattr__(self, "model_point", mp)
        object.__setattr__(self, "image_point", ip)


@dataclass(frozen=True)
class PnpResult:
    pose: Pose
    rmse_px: float
    initial_rmse_px: float
    iterations: int


def _stack(corrs) -> tuple[np.ndarray, np.ndarray]:
    pts = np.array([c.model_point for c in corrs], dtype=np.float64)
    uv = np.array([c.image_point for c in corrs], dtype=np.float64)
    return pts, uv


def _pixel_residuals(r, t, pts, uv, cam: CameraModel) -> np.ndarray | None:
    p = pts @ r.T + t
    z = p[:, 2]
    if np.any(z < _MIN_DEPTH):
        return None
    res = np.empty_like(uv)
    res[:, 0] = cam.fx * p[:, 0] / z + cam.cx - uv[:, 0]
    res[:, 1] = cam.fy * p[:, 1] / z + cam.cy - uv[:, 1]
    return res.reshape(-1)


def _rmse(res: np.ndarray) -> float:
    """RMS of the per-point 2D pixel errors: sqrt(mean_i ||duv_i||^2)."""
    per_point = res.reshape(-1, 2)
    return float(np.sqrt(np.mean((per_point ** 2).sum(axis=1))))


def reprojection_rmse(pose: Pose, corrs, cam: CameraModel) -> float:
    """Root-mean-square pixel residual of the correspondences under `pose`."""
    pts, uv = _stack(corrs)
    p = pose.apply(pts)
    if np.any(p[:, 2] < cam.near_clip):
        raise BehindCamera("transformed points fall closer than the near clip")
    res = _pixel_residuals(pose.rotation, pose.translation, pts, uv, cam)
    return _rmse(res)


def reprojection_jacobian(pose: Pose, corrs, cam: CameraModel) -> np.ndarray:
    """Analytic (2N, 6) Jacobian of the pixel residuals.

    Parameter order is [dwx, dwy, dwz, dtx, dty, dtz] for the perturbation
    R <- exp([dw]x) R, t <- t + dt.
    """
    pts, uv = _stack(corrs)
    p = pts @ pose.rotation.T + pose.translation
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    if np.any(z < _MIN_DEPTH):
        raise BehindCamera("points behind the camera have no projection Jacobian")
    n = len(pts)
    # du/dp and dv/dp
    duv_dp = np.zeros((n, 2, 3))
    duv_dp[:, 0, 0] = cam.fx / z
    duv_dp[:, 0, 2] = -cam.fx * x / z ** 2
    duv_dp[:, 1, 1] = cam.fy / z
    duv_dp[:, 1, 2] = -cam.fy * y / z ** 2
    # dp/dw = -[q]x with q = R m (rotation acts before the translation offset)
    q = pts @ pose.rotation.T
    dp_dw = np.zeros((n, 3, 3))
    dp_dw[:, 0, 1] = q[:, 2]
    dp_dw[:, 0, 2] = -q[:, 1]
    dp_dw[:, 1, 0] = -q[:, 2]
    dp_dw[:, 1, 2] = q[:, 0]
    dp_dw[:, 2, 0] = q[:, 1]
    dp_dw[:, 2, 1] = -q[:, 0]
    jac = np.zeros((2 * n, 6))
    jac[:, :3] = np.einsum("nij,njk->nik", duv_dp, dp_dw).reshape(2 * n, 3)
    jac[:, 3:] = duv_dp.reshape(2 * n, 3)
    return jac


def _dlt(pts: np.ndarray, uv: np.ndarray, cam: CameraModel) -> Pose:
    """Linear pose estimate, projected onto SE(3) with positive-depth cheirality."""
    # intrinsics-normalized pixels
    xn = (uv[:, 0] - cam.cx) / cam.fx
    yn = (uv[:, 1] - cam.cy) / cam.fy
    # Hartley normalization of the model points
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    rms = float(np.sqrt((centered ** 2).sum(axis=1).mean()))
    scale = math.sqrt(3.0) / rms if rms > 0 else 1.0
    xs = centered * scale

    n = len(pts)
    a = np.zeros((2 * n, 12))
    a[0::2, 0:3] = xs
    a[0::2, 3] = 1.0
    a[0::2, 8:11] = -xn[:, None] * xs
    a[0::2, 11] = -xn
    a[1::2, 4:7] = xs
    a[1::2, 7] = 1.0
    a[1::2, 8:11] = -yn[:, None] * xs
    a[1::2, 11] = -yn
    _, _, vt = np.linalg.svd(a)

    def candidate(vec, sign: float):
        p = vec.reshape(3, 4)
        # undo the 3D normalization: P_unnorm = P [scale*I, -scale*c; 0, 1]
        m = p[:, :3] * scale
        t = p[:, 3] - m @ centroid
        det = np.linalg.det(sign * m)
        if det <= 0:
            return None
        lam = det ** (-1.0 / 3.0)
        r = nearest_rotation(sign * lam * m)
        tv = sign * lam * t
        z = (pts @ r.T + tv)[:, 2]
        front = int((z > 0).sum())
        if front < math.ceil(0.9 * n):
            return None
        res = _pixel_residuals(r, tv, pts, uv, cam)
        if res is None:
            return None
        return Pose(r, tv), _rmse(res)

    # For near-planar point sets the nullspace of A is nearly two-dimensional
    # and the true solution can sit in either of the two smallest singular
    # vectors (the other holds its mirror); try both, keep the candidate that
    # reprojects best among those with valid cheirality.
    best = None
    for vec in (vt[-1], vt[-2]):
        for sign in (1.0, -1.0):
            cand = candidate(vec, sign)
            if cand is not None and (best is None or cand[1] < best[1]):
                best = cand
    if best is None:
        raise DegenerateConfiguration(
            "linear estimate has no pose with >= 90% of points in front of the camera")
    return best[0]


def solve_pnp(corrs, cam: CameraModel) -> PnpResult:
    """Pose from >= 6 non-coplanar 2D-3D correspondences.

    Refinement accepts only improving steps (multiplicative damping, x10 on
    reject, /10 on accept), so the returned RMSE never exceeds the linear
    estimate's.
    """
    corrs = list(corrs)
    if len(corrs) < 6:
        raise DegenerateConfiguration(f"need at least 6 correspondences, got {len(corrs)}")
    pts, uv = _stack(corrs)
    svals = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if svals[0] <= 0 or svals[-1] / svals[0] < _RANK_RATIO:
        raise DegenerateConfiguration(
            f"model points are (near-)coplanar: singular-value ratio "
            f"{svals[-1] / svals[0] if svals[0] > 0 else 0:.2e}")

    pose = _dlt(pts, uv, cam)
    res = _pixel_residuals(pose.rotation, pose.translation, pts, uv, cam)
    if res is None:
        raise DegenerateConfiguration("linear estimate places points behind the camera")
    initial_rmse = _rmse(res)

    r, t = pose.rotation, pose.translation
    rmse = initial_rmse
    lam = _LAMBDA_INIT
    improved_once = False
    iters = 0
    while iters < _MAX_ITERS:
        iters += 1
        jac = reprojection_jacobian(Pose(r, t), corrs, cam)
        jtj = jac.T @ jac
        jtr = jac.T @ res
        step = None
        damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-12))
        try:
            step = np.linalg.solve(damped, -jtr)
        except np.linalg.LinAlgError:
            pass
        new = None
        if step is not None:
            r_new = nearest_rotation(rotation_from_step(step[:3]) @ r)
            t_new = t + step[3:]
            res_new = _pixel_residuals(r_new, t_new, pts, uv, cam)
            if res_new is not None:
                new = (r_new, t_new, res_new, _rmse(res_new))
        if new is not None and new[3] < rmse:
            improvement = rmse - new[3]
            r, t, res, rmse = new
            lam = max(lam / 10.0, 1e-12)
            improved_once = True
            if improvement < _MIN_IMPROVEMENT:
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                break  # stationary: no direction improves, keep the current pose
    else:
        if not improved_once:
            raise Diverged(
                f"no accepted step after {_MAX_ITERS} iterations "
                f"(RMSE stuck at {rmse:.3g} px)")
    z = (pts @ r.T + t)[:, 2]
    if int((z > 0).sum()) < math.ceil(0.9 * len(pts)):
        raise DegenerateConfiguration("refined pose violates positive-depth cheirality")
    return PnpResult(pose=Pose(r, t), rmse_px=rmse,
                     initial_rmse_px=initial_rmse, iterations=iters)


def rotation_from_step(dw: np.ndarray) -> np.ndarray:
    """exp([dw]x) for a small axis-angle increment."""
    angle = float(np.linalg.norm(dw))
    if angle < 1e-15:
        return np.eye(3)
    return rotation_from(dw / angle, angle)


def load_correspondences_csv(path) -> list[Correspondence]:
    """Read x,y,z,u,v rows (one correspondence per line, optional header)."""
    lines = Path(path).read_text().splitlines()
    out = []
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped:
            continue
        fields = stripped.split(",")
        if lineno == 1 and any(not _is_number(f) for f in fields):
            continue  # header row
        if len(fields) != 5:
            raise ParseError(f"{path}:{lineno}: expected 5 fields x,y,z,u,v")
        try:
            vals = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        out.append(Correspondence(model_point=tuple(vals[:3]), image_point=tuple(vals[3:])))
    return out


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
