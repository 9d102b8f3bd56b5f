"""Pose-error metrics, evaluation over a dataset, statistics, and histograms.

The three errors, for ground truth (R_gt, t_gt) and estimate (R_est, t_est):

    e_te   = ||t_gt - t_est||                                 (mm)
    e_re   = arccos(clamp((trace(R_gt R_est^T) - 1) / 2))     (reported in deg)
    e_mssd = min over S in S_M of max over x in V_M of
             ||P_est x - P_gt S x||                           (mm)

with S_M the object's symmetry transforms (always containing identity) and
V_M the model vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bop import PoseEstimate, read_results, read_scene, scene_dirs, _load_json
from .errors import EmptyInput, InvalidParam, MissingGt, SchemaError
from .geometry import Pose, compose
from .mesh import TriMesh, load_mesh


@dataclass(frozen=True)
class SymmetrySet:
    """Finite set of rigid symmetry transforms; identity is always included."""

    transforms: tuple

    def __post_init__(self):
        poses = tuple(self.transforms)
        if not any(_is_identity(p) for p in poses):
            poses = (Pose.identity(),) + poses
        object.__setattr__(self, "transforms", poses)

    @classmethod
    def identity(cls) -> "SymmetrySet":
        return cls(transforms=())

    @classmethod
    def from_matrices(cls, mats) -> "SymmetrySet":
        """From a list of flattened 4x4 row-major transforms (BOP models_info style)."""
        poses = []
        for m in mats:
            m = np.asarray(m, dtype=np.float64).reshape(4, 4)
            poses.append(Pose(m[:3, :3], m[:3, 3]))
        return cls(transforms=tuple(poses))

    def __len__(self):
        return len(self.transforms)


def _is_identity(p: Pose, tol: float = 1e-12) -> bool:
    return (np.max(np.abs(p.rotation - np.eye(3))) <= tol
            and np.max(np.abs(p.translation)) <= tol)


def e_te(t_gt, t_est) -> float:
    """Translational error: Euclidean distance in mm."""
    a = np.asarray(t_gt, dtype=np.float64).reshape(3)
    b = np.asarray(t_est, dtype=np.float64).reshape(3)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidParam("translations must be finite")
    return float(np.linalg.norm(a - b))


def e_re(r_gt, r_est) -> float:
    """Rotational error in degrees via the axis-angle of R_gt R_est^-1."""
    a = np.asarray(r_gt, dtype=np.float64).reshape(3, 3)
    b = np.asarray(r_est, dtype=np.float64).reshape(3, 3)
    trace = float(np.trace(a @ b.T))
    cos_angle = min(1.0, max(-1.0, (trace - 1.0) / 2.0))
    return math.degrees(math.acos(cos_angle))


def e_mssd(p_gt: Pose, p_est: Pose, vertices, symmetries: SymmetrySet) -> float:
    """Maximum symmetry-aware surface distance in mm."""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if len(v) < 1:
        raise InvalidParam("e_mssd needs at least one vertex")
    est_pts = p_est.apply(v)
    best = math.inf
    for sym in symmetries.transforms:
        gt_pts = compose(p_gt, sym).apply(v)
        d = np.sqrt(((est_pts - gt_pts) ** 2).sum(axis=1)).max()
        best = min(best, float(d))
    return best


@dataclass(frozen=True)
class MetricRecord:
    scene_id: int
    im_id: int
    obj_id: int
    e_te_mm: float
    e_re_deg: float
    e_mssd_mm: float
    visib_fract: float

    def __post_init__(self):
        if min(self.e_te_mm, self.e_re_deg, self.e_mssd_mm) < 0:
            raise InvalidParam("errors must be >= 0")
        if self.e_re_deg > 180.0 + 1e-9:
            raise InvalidParam("e_re cannot exceed 180 deg")


@dataclass
class EvaluationResult:
    """Joined GT/estimate metrics plus filtering bookkeeping.

    evaluated + excluded_by_visibility + missing == total GT annotations.
    Misses (GT with no estimate) are reported as a count, never folded into
    the error statistics.
    """

    records: list = field(default_factory=list)
    n_total_gt: int = 0
    n_excluded_visibility: int = 0
    n_missing_estimate: int = 0
    missing_keys: list = field(default_factory=list)

    @property
    def n_evaluated(self) -> int:
        return len(self.records)


def load_models(dataset_root) -> tuple[dict, dict]:
    """Load models/*.ply and models_info.json -> (obj_id -> TriMesh, obj_id -> SymmetrySet)."""
    models_dir = Path(dataset_root) / "models"
    meshes: dict[int, TriMesh] = {}
    syms: dict[int, SymmetrySet] = {}
    if not models_dir.is_dir():
        return meshes, syms
    for ply in sorted(models_dir.glob("obj_*.ply")):
        obj_id = int(ply.stem.split("_")[1])
        meshes[obj_id] = load_mesh(ply)
    info_path = models_dir / "models_info.json"
    if info_path.exists():
        info = _load_json(info_path)
        for key, rec in info.items():
            if "symmetries_discrete" in rec:
                syms[int(key)] = SymmetrySet.from_matrices(rec["symmetries_discrete"])
    return meshes, syms


def evaluate_run(gt_dataset_root, estimates, min_visib: float = 0.3,
                 symmetries: dict | None = None,
                 models: dict | None = None) -> EvaluationResult:
    """Join estimates against dataset ground truth and compute the metrics.

    GT annotations below `min_visib` visibility are excluded; GT with no
    matching estimate counts as missing.  An estimate whose
    (scene_id, im_id, obj_id) has no GT raises MissingGt.  When several
    estimates share a key the highest score wins.

    Object meshes default to the dataset's models/ directory; per-object
    symmetry sets default to models_info.json's symmetries_discrete (identity
    otherwise) and can be overridden via `symmetries`.
    """
    root = Path(gt_dataset_root)
    if isinstance(estimates, (str, Path)):
        estimates = read_results(estimates)

    file_models, file_syms = load_models(root)
    if models:
        file_models.update(models)
    if symmetries:
        file_syms.update(symmetries)

    gt_index = {}
    for scene_dir in scene_dirs(root):
        scene_id = int(scene_dir.name)
        data = read_scene(scene_dir)
        for im_id in data.im_ids:
            for entry, info in zip(data.gt[im_id], data.gt_info[im_id]):
                key = (scene_id, im_id, entry.obj_id)
                gt_index[key] = (entry.pose_cam, info.visib_fract)
    if not gt_index:
        raise SchemaError(f"{root}: no ground-truth annotations found")

    est_index: dict[tuple, PoseEstimate] = {}
    for est in estimates:
        if est.key not in gt_index:
            raise MissingGt(f"estimate for {est.key} has no ground truth")
        cur = est_index.get(est.key)
        if cur is None or est.score > cur.score:
            est_index[est.key] = est

    result = EvaluationResult(n_total_gt=len(gt_index))
    for key in sorted(gt_index):
        scene_id, im_id, obj_id = key
        pose_gt, visib = gt_index[key]
        if visib < min_visib:
            result.n_excluded_visibility += 1
            continue
        est = est_index.get(key)
        if est is None:
            result.n_missing_estimate += 1
            result.missing_keys.append(key)
            continue
        pose_est = Pose(est.rotation, est.translation)
        if obj_id not in file_models:
            raise SchemaError(f"no model mesh for obj_id {obj_id} (need models/obj_{obj_id:06d}.ply)")
        sym = file_syms.get(obj_id, SymmetrySet.identity())
        result.records.append(MetricRecord(
            scene_id=scene_id, im_id=im_id, obj_id=obj_id,
            e_te_mm=e_te(pose_gt.translation, pose_est.translation),
            e_re_deg=e_re(pose_gt.rotation, pose_est.rotation),
            e_mssd_mm=e_mssd(pose_gt, pose_est, file_models[obj_id].vertices, sym),
            visib_fract=visib))
    return result


# ---------------------------------------------------------------------------
# statistics and histograms

METRIC_FIELDS = ("e_re_deg", "e_te_mm", "e_mssd_mm")
METRIC_LABELS = {"e_re_deg": "e_RE (deg)", "e_te_mm": "e_TE (mm)", "e_mssd_mm": "e_MSSD (mm)"}
# Histogram truncation defaults (overflow beyond goes to the last bin).
DEFAULT_TRUNCATION = {"e_te_mm": 70.0, "e_re_deg": 15.0, "e_mssd_mm": 10.0}


@dataclass(frozen=True)
class Stats1D:
    mean: float
    std: float     # population (divide by N)
    median: float
    min: float
    max: float


@dataclass(frozen=True)
class SummaryStats:
    n: int
    e_re_deg: Stats1D
    e_te_mm: Stats1D
    e_mssd_mm: Stats1D


@dataclass(frozen=True)
class Histogram:
    edges: tuple     # len bins+1, covering [0, truncation]
    counts: tuple    # len bins
    overflow: int    # samples beyond the truncation

    @property
    def total(self) -> int:
        return sum(self.counts) + self.overflow


def _stats(values: np.ndarray) -> Stats1D:
    return Stats1D(mean=float(values.mean()), std=float(values.std()),
                   median=float(np.median(values)),
                   min=float(values.min()), max=float(values.max()))


def summarize_and_histogram(records, bins: int = 20,
                            truncation: dict | None = None
                            ) -> tuple[SummaryStats, dict]:
    """Summary statistics plus per-metric histograms with an overflow bin."""
    records = list(records)
    if not records:
        raise EmptyInput("no metric records to summarize")
    if bins < 1:
        raise InvalidParam("bins must be >= 1")
    trunc = dict(DEFAULT_TRUNCATION)
    if truncation:
        trunc.update(truncation)

    arrays = {name: np.array([getattr(r, name) for r in records]) for name in METRIC_FIELDS}
    summary = SummaryStats(n=len(records),
                           e_re_deg=_stats(arrays["e_re_deg"]),
                           e_te_mm=_stats(arrays["e_te_mm"]),
                           e_mssd_mm=_stats(arrays["e_mssd_mm"]))
    histograms = {}
    for name in METRIC_FIELDS:
        limit = float(trunc[name])
        edges = np.linspace(0.0, limit, bins + 1)
        vals = arrays[name]
        inside = vals[vals <= limit]
        counts, _ = np.histogram(inside, bins=edges)
        histograms[name] = Histogram(edges=tuple(float(e) for e in edges),
                                     counts=tuple(int(c) for c in counts),
                                     overflow=int((vals > limit).sum()))
    return summary, histograms


def summary_to_json(summary: SummaryStats) -> dict:
    def stats_dict(s: Stats1D) -> dict:
        return {"mean": s.mean, "std": s.std, "median": s.median,
                "min": s.min, "max": s.max}
    return {"n": summary.n,
            "e_re_deg": stats_dict(summary.e_re_deg),
            "e_te_mm": stats_dict(summary.e_te_mm),
            "e_mssd_mm": stats_dict(summary.e_mssd_mm)}


def summary_table(summary: SummaryStats) -> str:
    """Aligned text table: rows mean/std/median/min/max, one column per metric."""
    rows = ("mean", "std", "median", "min", "max")
    header = f"Test set results (N={summary.n})"
    cols = [METRIC_LABELS[m] for m in METRIC_FIELDS]
    lines = [header, "{:<8s} {:>12s} {:>12s} {:>12s}".format("", *cols)]
    stats = {"e_re_deg": summary.e_re_deg, "e_te_mm": summary.e_te_mm,
             "e_mssd_mm": summary.e_mssd_mm}
    for row in rows:
        vals = [getattr(stats[m], row) for m in METRIC_FIELDS]
        lines.append("{:<8s} {:>12.2f} {:>12.2f} {:>12.2f}".format(row, *vals))
    return "\n".join(lines)


def records_to_csv(records, path) -> None:
    lines = ["scene_id,im_id,obj_id,e_te_mm,e_re_deg,e_mssd_mm,visib_fract"]
    for r in records:
        lines.append(f"{r.scene_id},{r.im_id},{r.obj_id},"
                     f"{r.e_te_mm:.17g},{r.e_re_deg:.17g},{r.e_mssd_mm:.17g},"
                     f"{r.visib_fract:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def records_from_csv(path) -> list[MetricRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "scene_id,im_id,obj_id,e_te_mm,e_re_deg,e_mssd_mm,visib_fract":
        raise SchemaError(f"{path}: not a metric records CSV")
    out = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        f = line.split(",")
        if len(f) != 7:
            raise SchemaError(f"{path}:{lineno}: expected 7 fields")
        out.append(MetricRecord(scene_id=int(f[0]), im_id=int(f[1]), obj_id=int(f[2]),
                                e_te_mm=float(f[3]), e_re_deg=float(f[4]),
                                e_mssd_mm=float(f[5]), visib_fract=float(f[6])))
    return out


def histograms_to_csv(histograms: dict, path) -> None:
    lines = ["metric,bin_lo,bin_hi,count"]
    for name in METRIC_FIELDS:
        h = histograms[name]
        for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
            lines.append(f"{name},{lo:.17g},{hi:.17g},{c}")
        lines.append(f"{name},{h.edges[-1]:.17g},inf,{h.overflow}")
    Path(path).write_text("\n".join(lines) + "\n")
