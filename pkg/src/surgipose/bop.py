"""Bit-exact reader/writer for BOP-format scenes and results CSV.

Scene layout (one directory per scene_id):

    scene_camera.json   im_id -> {"cam_K": [9 row-major], "depth_scale": s}
    scene_gt.json       im_id -> [{"cam_R_m2c": [9], "cam_t_m2c": [3 mm], "obj_id": n}]
    scene_gt_info.json  im_id -> [{"bbox_obj", "bbox_visib", "px_count_all",
                                   "px_count_visib", "visib_fract"}]
    rgb/%06d.png        8-bit RGB
    depth/%06d.png      16-bit, value = depth_mm / depth_scale
    mask/%06d_%06d.png  full projected mask per GT entry (binary, 255 = on)
    mask_visib/%06d_%06d.png  visible mask per GT entry

JSON keys are stringified integers in ascending order and reals carry 17
significant digits, so write -> read round-trips float64 exactly.  Only PNG is
used (lossless), keeping datasets reproducible byte for byte.
"""

from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DepthOverflow, InvalidParam, ParseError, SchemaError
from .geometry import Pose, nearest_rotation, rotation_drift

DEFAULT_DEPTH_SCALE = 0.1  # 0.1 mm quanta, 6.55 m range

RESULTS_HEADER = "scene_id,im_id,obj_id,score,R,t,time"

_SCENE_DIR_RE = re.compile(r"^\d{6}$")


# ---------------------------------------------------------------------------
# JSON with fixed float formatting

def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        keys = list(value.keys())
        if keys and all(isinstance(k, (int, np.integer)) for k in keys):
            items = [(str(int(k)), value[k]) for k in sorted(int(k) for k in keys)]
        else:
            items = [(str(k), value[k]) for k in keys]
        body = ", ".join(f"{json.dumps(k)}: {_format_value(v)}" for k, v in items)
        return "{" + body + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        seq = value.tolist() if isinstance(value, np.ndarray) else value
        return "[" + ", ".join(_format_value(v) for v in seq) + "]"
    if value is None:
        return "null"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dump_json(obj, path) -> None:
    """Serialize with 17-significant-digit reals and ascending integer keys."""
    Path(path).write_text(_format_value(obj) + "\n")


def encode_png(array: np.ndarray) -> bytes:
    """Deterministic PNG bytes for uint8 RGB/gray or uint16 gray arrays."""
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return buf.getvalue()


def _decode_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im)


# ---------------------------------------------------------------------------
# scene writing

@dataclass
class ObjectAnnotation:
    """Per-object frame annotation destined for scene_gt / scene_gt_info.

    `info` carries the GtInfo fields (bbox_obj, bbox_visib, px_count_all,
    px_count_visib, visib_fract); masks are boolean arrays at frame resolution.
    """

    obj_id: int
    pose_cam: Pose
    info: object
    mask: np.ndarray
    mask_visib: np.ndarray


class SceneWriter:
    """Incremental writer for one BOP scene directory.

    Image files are written as frames arrive; the three JSON indices are
    written once by `finalize` (so a missing scene_gt.json marks a partial
    scene).
    """

    def __init__(self, scene_dir, depth_scale: float = DEFAULT_DEPTH_SCALE):
        if depth_scale <= 0:
            raise InvalidParam("depth_scale must be positive")
        self.scene_dir = Path(scene_dir)
        self.depth_scale = float(depth_scale)
        for sub in ("rgb", "depth", "mask", "mask_visib"):
            (self.scene_dir / sub).mkdir(parents=True, exist_ok=True)
        self._camera: dict[int, dict] = {}
        self._gt: dict[int, list] = {}
        self._gt_info: dict[int, list] = {}
        self._finalized = False

    def add_frame(self, im_id: int, rgb: np.ndarray, depth_mm: np.ndarray,
                  cam_k: np.ndarray, annotations: list[ObjectAnnotation]) -> None:
        if self._finalized:
            raise InvalidParam("scene already finalized")
        if im_id in self._camera:
            raise InvalidParam(f"duplicate im_id {im_id}")
        quant = np.rint(np.asarray(depth_mm, dtype=np.float64) / self.depth_scale)
        if quant.max(initial=0.0) > 65535:
            raise DepthOverflow(
                f"depth {float(np.max(depth_mm)):.6g} mm exceeds 16-bit range at "
                f"depth_scale {self.depth_scale}")
        (self.scene_dir / "rgb" / f"{im_id:06d}.png").write_bytes(encode_png(rgb))
        (self.scene_dir / "depth" / f"{im_id:06d}.png").write_bytes(
            encode_png(quant.astype(np.uint16)))
        for gt_idx, ann in enumerate(annotations):
            for sub, mask in (("mask", ann.mask), ("mask_visib", ann.mask_visib)):
                img = (np.asarray(mask, dtype=bool).astype(np.uint8) * 255)
                (self.scene_dir / sub / f"{im_id:06d}_{gt_idx:06d}.png").write_bytes(
                    encode_png(img))
        self._camera[im_id] = {
            "cam_K": [float(v) for v in np.asarray(cam_k, dtype=np.float64).reshape(9)],
            "depth_scale": self.depth_scale,
        }
        self._gt[im_id] = [
            {"cam_R_m2c": [float(v) for v in ann.pose_cam.rotation.reshape(9)],
             "cam_t_m2c": [float(v) for v in ann.pose_cam.translation],
             "obj_id": int(ann.obj_id)}
            for ann in annotations
        ]
        self._gt_info[im_id] = [
            {"bbox_obj": [int(v) for v in ann.info.bbox_obj],
             "bbox_visib": [int(v) for v in ann.info.bbox_visib],
             "px_count_all": int(ann.info.px_count_all),
             "px_count_visib": int(ann.info.px_count_visib),
             "visib_fract": float(ann.info.visib_fract)}
            for ann in annotations
        ]

    def finalize(self) -> None:
        dump_json(self._camera, self.scene_dir / "scene_camera.json")
        dump_json(self._gt, self.scene_dir / "scene_gt.json")
        dump_json(self._gt_info, self.scene_dir / "scene_gt_info.json")
        self._finalized = True


def write_scene(scene_dir, frames, depth_scale: float = DEFAULT_DEPTH_SCALE) -> None:
    """Write a whole scene at once: frames is {im_id: (rgb, depth_mm, cam_K, annotations)}."""
    writer = SceneWriter(scene_dir, depth_scale)
    for im_id in sorted(frames):
        rgb, depth_mm, cam_k, annotations = frames[im_id]
        writer.add_frame(im_id, rgb, depth_mm, cam_k, annotations)
    writer.finalize()


# ---------------------------------------------------------------------------
# scene reading

@dataclass
class GtEntry:
    obj_id: int
    pose_cam: Pose


@dataclass
class GtInfoEntry:
    bbox_obj: tuple
    bbox_visib: tuple
    px_count_all: int
    px_count_visib: int
    visib_fract: float


@dataclass
class SceneData:
    """Parsed scene indices plus lazy buffer loaders."""

    scene_dir: Path
    camera: dict            # im_id -> {"cam_K": (3,3) array, "depth_scale": float}
    gt: dict                # im_id -> [GtEntry]
    gt_info: dict           # im_id -> [GtInfoEntry]
    warnings: list = field(default_factory=list)

    @property
    def im_ids(self) -> list[int]:
        return sorted(self.camera)

    def load_rgb(self, im_id: int) -> np.ndarray:
        return _decode_png(self.scene_dir / "rgb" / f"{im_id:06d}.png")

    def load_depth(self, im_id: int) -> np.ndarray:
        """Depth in mm (decoded with the frame's depth_scale)."""
        raw = _decode_png(self.scene_dir / "depth" / f"{im_id:06d}.png")
        return raw.astype(np.float64) * self.camera[im_id]["depth_scale"]

    def mask_path(self, im_id: int, gt_idx: int, visib: bool = False) -> Path:
        sub = "mask_visib" if visib else "mask"
        return self.scene_dir / sub / f"{im_id:06d}_{gt_idx:06d}.png"

    def load_mask(self, im_id: int, gt_idx: int, visib: bool = False) -> np.ndarray:
        return _decode_png(self.mask_path(im_id, gt_idx, visib)) > 0


def _load_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc


def read_scene(scene_dir) -> SceneData:
    """Read and validate one scene directory.

    Missing mask files are tolerated with a warning (ground-truth-only
    evaluation still works); inconsistent im_ids or invalid rotations raise
    SchemaError naming the offending key.
    """
    scene_dir = Path(scene_dir)
    cam_doc = _load_json(scene_dir / "scene_camera.json")
    gt_doc = _load_json(scene_dir / "scene_gt.json")
    info_doc = _load_json(scene_dir / "scene_gt_info.json")

    def int_keys(doc, name):
        out = {}
        for key in doc:
            try:
                out[int(key)] = doc[key]
            except ValueError:
                raise SchemaError(f"{name}: key {key!r} is not an integer im_id")
        return out

    cam_doc = int_keys(cam_doc, "scene_camera.json")
    gt_doc = int_keys(gt_doc, "scene_gt.json")
    info_doc = int_keys(info_doc, "scene_gt_info.json")

    ids = set(cam_doc)
    for name, doc in (("scene_gt.json", gt_doc), ("scene_gt_info.json", info_doc)):
        if set(doc) != ids:
            missing = sorted(ids.symmetric_difference(doc))
            raise SchemaError(f"{name}: im_id set mismatch (offending ids {missing[:5]})")

    camera = {}
    for im_id, rec in cam_doc.items():
        try:
            k = np.asarray(rec["cam_K"], dtype=np.float64).reshape(3, 3)
            scale = float(rec["depth_scale"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"scene_camera.json: im {im_id}: {exc}") from exc
        camera[im_id] = {"cam_K": k, "depth_scale": scale}

    gt = {}
    for im_id, items in gt_doc.items():
        entries = []
        for gt_idx, rec in enumerate(items):
            try:
                r = np.asarray(rec["cam_R_m2c"], dtype=np.float64).reshape(3, 3)
                t = np.asarray(rec["cam_t_m2c"], dtype=np.float64).reshape(3)
                obj_id = int(rec["obj_id"])
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"scene_gt.json: im {im_id} gt {gt_idx}: {exc}") from exc
            drift = rotation_drift(r)
            if drift > 1e-6:
                raise SchemaError(
                    f"scene_gt.json: im {im_id} gt {gt_idx} cam_R_m2c: "
                    f"not a rotation (drift {drift:.3e})")
            entries.append(GtEntry(obj_id=obj_id, pose_cam=Pose(r, t)))
        gt[im_id] = entries

    gt_info = {}
    for im_id, items in info_doc.items():
        if len(items) != len(gt[im_id]):
            raise SchemaError(
                f"scene_gt_info.json: im {im_id}: {len(items)} entries but "
                f"scene_gt has {len(gt[im_id])}")
        entries = []
        for gt_idx, rec in enumerate(items):
            try:
                entries.append(GtInfoEntry(
                    bbox_obj=tuple(int(v) for v in rec["bbox_obj"]),
                    bbox_visib=tuple(int(v) for v in rec["bbox_visib"]),
                    px_count_all=int(rec["px_count_all"]),
                    px_count_visib=int(rec["px_count_visib"]),
                    visib_fract=float(rec["visib_fract"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"scene_gt_info.json: im {im_id} gt {gt_idx}: {exc}") from exc
        gt_info[im_id] = entries

    data = SceneData(scene_dir=scene_dir, camera=camera, gt=gt, gt_info=gt_info)
    for im_id in data.im_ids:
        for gt_idx in range(len(gt[im_id])):
            for visib in (False, True):
                if not data.mask_path(im_id, gt_idx, visib).exists():
                    data.warnings.append(
                        f"missing {'mask_visib' if visib else 'mask'} for "
                        f"im {im_id} gt {gt_idx}")
    return data


def scene_dirs(dataset_root) -> list[Path]:
    root = Path(dataset_root)
    return sorted(p for p in root.iterdir()
                  if p.is_dir() and _SCENE_DIR_RE.match(p.name))


# ---------------------------------------------------------------------------
# results CSV

@dataclass
class PoseEstimate:
    """One estimator output row; rotation re-orthonormalized on load if needed."""

    scene_id: int
    im_id: int
    obj_id: int
    score: float
    rotation: np.ndarray
    translation: np.ndarray
    time_s: float = -1.0
    raw_rotation: np.ndarray | None = None
    reorthonormalized: bool = False

    @property
    def key(self) -> tuple:
        return (self.scene_id, self.im_id, self.obj_id)


def read_results(path) -> list[PoseEstimate]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].strip().replace(" ", "")
    if header != RESULTS_HEADER:
        raise ParseError(f"{path}:1: expected header '{RESULTS_HEADER}', got '{lines[0]}'")
    estimates = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 7:
            raise ParseError(f"{path}:{lineno}: expected 7 comma-separated fields, got {len(fields)}")
        try:
            scene_id, im_id, obj_id = int(fields[0]), int(fields[1]), int(fields[2])
            score = float(fields[3])
            r_vals = [float(v) for v in fields[4].split()]
            t_vals = [float(v) for v in fields[5].split()]
            time_s = float(fields[6])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if len(r_vals) != 9:
            raise ParseError(f"{path}:{lineno}: R must hold 9 numbers, got {len(r_vals)}")
        if len(t_vals) != 3:
            raise ParseError(f"{path}:{lineno}: t must hold 3 numbers, got {len(t_vals)}")
        if not np.isfinite(score):
            raise ParseError(f"{path}:{lineno}: score must be finite")
        raw = np.asarray(r_vals, dtype=np.float64).reshape(3, 3)
        drift = rotation_drift(raw)
        if drift > 1e-4:
            raise ParseError(f"{path}:{lineno}: R is not a rotation (drift {drift:.3e})")
        fixed = raw
        flagged = False
        if drift > 1e-9:
            fixed = nearest_rotation(raw)
            flagged = True
        estimates.append(PoseEstimate(
            scene_id=scene_id, im_id=im_id, obj_id=obj_id, score=score,
            rotation=fixed, translation=np.asarray(t_vals, dtype=np.float64),
            time_s=time_s, raw_rotation=raw, reorthonormalized=flagged))
    return estimates


def write_results(path, estimates) -> None:
    lines = [RESULTS_HEADER]
    for est in estimates:
        r = " ".join(format(float(v), ".17g") for v in np.asarray(est.rotation).reshape(9))
        t = " ".join(format(float(v), ".17g") for v in np.asarray(est.translation).reshape(3))
        lines.append(f"{est.scene_id},{est.im_id},{est.obj_id},"
                     f"{format(float(est.score), '.17g')},{r},{t},"
                     f"{format(float(est.time_s), '.17g')}")
    Path(path).write_text("\n".join(lines) + "\n")


def results_io(path, mode: str, estimates=None):
    """Read ('r') or write ('w') a BOP results CSV."""
    if mode == "r":
        return read_results(path)
    if mode == "w":
        if estimates is None:
            raise InvalidParam("writing requires estimates")
        write_results(path, estimates)
        return None
    raise InvalidParam(f"mode must be 'r' or 'w', got {mode!r}")


# ---------------------------------------------------------------------------
# dataset validation

@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    scenes_checked: int = 0
    frames_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def _bbox_of_mask(mask: np.ndarray) -> tuple:
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return (0, 0, 0, 0)
    return (int(xs.min()), int(ys.min()),
            int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))


def _bbox_contains(outer, inner) -> bool:
    if inner[2] == 0 or inner[3] == 0:
        return True
    return (outer[0] <= inner[0] and outer[1] <= inner[1]
            and inner[0] + inner[2] <= outer[0] + outer[2]
            and inner[1] + inner[3] <= outer[1] + outer[3])


def validate_dataset(dataset_root, sampled_frames_per_scene: int = 3) -> ValidationReport:
    """Cross-check index files, annotation invariants, and pixel data.

    Never raises on findings; the report carries them.  Pixel-level checks
    (depth/mask coupling, pixel counts, bbox extents) run on the first few
    frames of each scene to stay fast on large datasets.
    """
    root = Path(dataset_root)
    report = ValidationReport()
    dirs = scene_dirs(root)
    if not dirs:
        report.violations.append(f"{root}: no scene directories (expected 6-digit names)")
        return report

    manifest = None
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        try:
            manifest = _load_json(manifest_path)
        except ParseError as exc:
            report.violations.append(str(exc))
    else:
        report.warnings.append("no manifest.json at dataset root")

    seen_scene_ids = []
    for scene_dir in dirs:
        scene_id = int(scene_dir.name)
        seen_scene_ids.append(scene_id)
        # parse the three indices separately so one missing file is reported precisely
        docs = {}
        parse_failed = False
        for name in ("scene_camera.json", "scene_gt.json", "scene_gt_info.json"):
            try:
                docs[name] = _load_json(scene_dir / name)
            except ParseError as exc:
                report.violations.append(str(exc))
                parse_failed = True
        if parse_failed:
            continue
        cam_ids = set(docs["scene_camera.json"])
        gt_ids = set(docs["scene_gt.json"])
        info_ids = set(docs["scene_gt_info.json"])
        for im in sorted(cam_ids - gt_ids):
            report.violations.append(f"{scene_dir.name}: im_id {im} missing in scene_gt")
        for im in sorted(cam_ids - info_ids):
            report.violations.append(f"{scene_dir.name}: im_id {im} missing in scene_gt_info")
        for im in sorted((gt_ids | info_ids) - cam_ids):
            report.violations.append(f"{scene_dir.name}: im_id {im} missing in scene_camera")
        if not (cam_ids == gt_ids == info_ids):
            continue

        try:
            data = read_scene(scene_dir)
        except (ParseError, InvalidParam) as exc:
            report.violations.append(f"{scene_dir.name}: {exc}")
            continue
        report.scenes_checked += 1
        # read_scene tolerates missing masks (GT-only evaluation); a complete
        # dataset must have them, so here they count as violations
        report.violations.extend(f"{scene_dir.name}: {w}" for w in data.warnings)

        for im_id in data.im_ids:
            for sub in ("rgb", "depth"):
                f = scene_dir / sub / f"{im_id:06d}.png"
                if not f.exists():
                    report.violations.append(f"{scene_dir.name}: missing {sub}/{f.name}")
            for gt_idx, info in enumerate(data.gt_info[im_id]):
                where = f"{scene_dir.name}: im {im_id} gt {gt_idx}"
                if info.px_count_visib > info.px_count_all:
                    report.violations.append(f"{where}: px_count_visib > px_count_all")
                if not 0.0 <= info.visib_fract <= 1.0:
                    report.violations.append(f"{where}: visib_fract {info.visib_fract} out of range [0, 1]")
                expected = (info.px_count_visib / info.px_count_all
                            if info.px_count_all > 0 else 0.0)
                if abs(info.visib_fract - expected) > 1e-9:
                    report.violations.append(
                        f"{where}: visib_fract {info.visib_fract} != "
                        f"px_count_visib/px_count_all ({expected})")
                if not _bbox_contains(info.bbox_obj, info.bbox_visib):
                    report.violations.append(f"{where}: bbox_visib not contained in bbox_obj")

        for im_id in data.im_ids[:sampled_frames_per_scene]:
            report.frames_checked += 1
            try:
                depth = data.load_depth(im_id)
            except (OSError, ValueError):
                continue  # already reported as missing
            union = np.zeros(depth.shape, dtype=bool)
            have_all_masks = True
            for gt_idx, info in enumerate(data.gt_info[im_id]):
                where = f"{scene_dir.name}: im {im_id} gt {gt_idx}"
                try:
                    mask = data.load_mask(im_id, gt_idx, visib=False)
                    mask_visib = data.load_mask(im_id, gt_idx, visib=True)
                except (OSError, ValueError):
                    have_all_masks = False
                    continue
                union |= mask_visib
                if int(mask.sum()) != info.px_count_all:
                    report.violations.append(
                        f"{where}: px_count_all {info.px_count_all} != mask pixels {int(mask.sum())}")
                if int(mask_visib.sum()) != info.px_count_visib:
                    report.violations.append(
                        f"{where}: px_count_visib {info.px_count_visib} != "
                        f"mask_visib pixels {int(mask_visib.sum())}")
                if _bbox_of_mask(mask) != tuple(info.bbox_obj):
                    report.violations.append(f"{where}: bbox_obj does not match mask extents")
                if _bbox_of_mask(mask_visib) != tuple(info.bbox_visib):
                    report.violations.append(f"{where}: bbox_visib does not match mask_visib extents")
                if np.any(mask_visib & ~(depth > 0)):
                    report.violations.append(f"{where}: mask_visib covers zero-depth pixels")
            if have_all_masks and not np.array_equal(union, depth > 0):
                report.violations.append(
                    f"{scene_dir.name}: im {im_id}: union of visible masks does not "
                    f"equal the depth>0 foreground")

    if manifest is not None:
        try:
            listed = sorted(int(s["scene_id"]) for s in manifest["scenes"])
            if listed != sorted(seen_scene_ids):
                report.violations.append(
                    f"manifest scene_ids {listed} != directories {sorted(seen_scene_ids)}")
            for entry in manifest["scenes"]:
                sdir = root / f"{int(entry['scene_id']):06d}"
                cam_path = sdir / "scene_camera.json"
                if cam_path.exists():
                    n_frames = len(_load_json(cam_path))
                    if n_frames != int(entry["frames_written"]):
                        report.violations.append(
                            f"manifest: scene {entry['scene_id']} lists "
                            f"{entry['frames_written']} frames but {n_frames} exist")
        except (KeyError, TypeError, ValueError) as exc:
            report.violations.append(f"manifest.json: malformed: {exc}")

    return report
