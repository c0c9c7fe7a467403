"""Scene file formats and the manifest.

A scene is a JSON manifest plus layer files, all paths relative to the
manifest directory:

* ``depth_raw`` / ``depth_gt``: 16-bit grayscale PNG, millimeters, 0 = invalid;
* ``mask``: 8-bit grayscale PNG with labels {0 background, 1 contain,
  2 wrap-grasp, 3 support};
* ``normals``: uint16 ``.npy`` of shape (3, H, W), v = floor((n+1)/2*65535),
  decoded by n = 2 v/65535 - 1 and renormalized; invalid pixels store the
  encoding of the zero vector;
* ``volume`` (optional): uint16 ``.npy`` of shape (4, H, W), probability = v/65535;
* ``boundary``: 8-bit RGB PNG, channels (none, occlusion, contact),
  probability = v/255;
* ``intrinsics``: text file of ``key = value`` lines (fx, fy, cx, cy,
  width, height);
* ``rgb`` (optional): 8-bit RGB PNG.

The manifest carries a ``layers`` table, an ``instances`` array of per-
instance bounding boxes (u0, v0, u1, v1; exclusive max) with classification
scores (contain, wrap-grasp, support), and a ``format`` tag. Unknown keys
are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import SceneFormatError
from .geometry import CameraIntrinsics
from .images import BoundaryMap, DepthImage, NormalMap, NUM_CLASSES

FORMAT_TAG = "aff-scene-v1"
_MANIFEST_KEYS = {"format", "layers", "instances"}
_LAYER_KEYS = {"depth_raw", "depth_gt", "mask", "volume", "normals",
               "boundary", "intrinsics", "rgb"}
_INSTANCE_KEYS = {"bbox", "scores"}
_INTRINSICS_KEYS = {"fx", "fy", "cx", "cy", "width", "height"}


@dataclass
class SceneInstanceInfo:
    bbox: tuple  # (u0, v0, u1, v1), exclusive max
    scores: np.ndarray  # (contain, wrap-grasp, support)


@dataclass
class Scene:
    intrinsics: CameraIntrinsics
    depth_raw: DepthImage
    mask: np.ndarray
    normals: NormalMap
    boundary: BoundaryMap
    instances: list = field(default_factory=list)
    depth_gt: DepthImage | None = None
    volume: np.ndarray | None = None
    rgb: np.ndarray | None = None

    @property
    def shape(self):
        return self.depth_raw.shape


# ---------------------------------------------------------------------------
# layer encodings

def encode_depth(depth: DepthImage) -> np.ndarray:
    """Depth in millimeters, round half up, 0 on invalid pixels."""
    mm = np.floor(depth.values * 1000.0 + 0.5)
    mm = np.clip(mm, 0, 65535)
    mm[~depth.valid] = 0
    return mm.astype(np.uint16)

def decode_depth(mm: np.ndarray) -> DepthImage:
    values = mm.astype(np.float64) / 1000.0
    valid = mm > 0
    return DepthImage(np.where(valid, values, 0.0), valid)


def encode_normals(normals: NormalMap) -> np.ndarray:
    """Truncating 16-bit quantizer v = floor((n+1)/2 * 65535)."""
    n = np.where(normals.valid[..., None], normals.vectors, 0.0)
    v = np.floor((n + 1.0) / 2.0 * 65535.0)
    v = np.clip(v, 0, 65535).astype(np.uint16)
    return np.moveaxis(v, -1, 0)  # (3, H, W)

def decode_normals(v: np.ndarray) -> NormalMap:
    n = 2.0 * np.moveaxis(v, 0, -1).astype(np.float64) / 65535.0 - 1.0
    norms = np.linalg.norm(n, axis=-1)
    valid = norms > 0.5
    vectors = np.zeros_like(n)
    np.divide(n, norms[..., None], out=vectors, where=valid[..., None])
    return NormalMap(vectors, valid)


def encode_boundary(boundary: BoundaryMap) -> np.ndarray:
    return np.floor(np.clip(boundary.probs, 0, 1) * 255.0 + 0.5).astype(np.uint8)

def decode_boundary(v: np.ndarray) -> BoundaryMap:
    return BoundaryMap(v.astype(np.float64) / 255.0)


def encode_volume(volume: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(volume, 0, 1) * 65535.0 + 0.5).astype(np.uint16)

def decode_volume(v: np.ndarray) -> np.ndarray:
    return v.astype(np.float64) / 65535.0


# ---------------------------------------------------------------------------
# file helpers

def _save_png(path: Path, arr: np.ndarray):
    Image.fromarray(arr).save(path, format="PNG")

def _load_png(path: Path) -> np.ndarray:
    if not path.exists():
        raise SceneFormatError(f"missing layer file: {path}")
    return np.array(Image.open(path))


def write_depth_png(path, depth: DepthImage) -> None:
    """Write a depth map as 16-bit millimeter PNG (0 = invalid)."""
    _save_png(Path(path), encode_depth(depth))


def read_depth_png(path) -> DepthImage:
    """Read a 16-bit millimeter PNG back into a DepthImage."""
    return decode_depth(_load_png(Path(path)))


def write_intrinsics(path: Path, k: CameraIntrinsics):
    lines = [f"fx = {k.fx!r}", f"fy = {k.fy!r}", f"cx = {k.cx!r}", f"cy = {k.cy!r}",
             f"width = {k.width}", f"height = {k.height}"]
    path.write_text("\n".join(lines) + "\n")

def read_intrinsics(path: Path) -> CameraIntrinsics:
    if not path.exists():
        raise SceneFormatError(f"missing intrinsics file: {path}")
    fields = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SceneFormatError(f"malformed intrinsics line in {path}: {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _INTRINSICS_KEYS:
            raise SceneFormatError(f"unknown intrinsics key in {path}: {key!r}")
        fields[key] = val
    missing = _INTRINSICS_KEYS - fields.keys()
    if missing:
        raise SceneFormatError(f"intrinsics file {path} missing keys: {sorted(missing)}")
    return CameraIntrinsics(float(fields["fx"]), float(fields["fy"]),
                            float(fields["cx"]), float(fields["cy"]),
                            int(fields["width"]), int(fields["height"]))


# ---------------------------------------------------------------------------
# manifest save / load

_DEFAULT_NAMES = {
    "depth_raw": "depth_raw.png",
    "depth_gt": "depth_gt.png",
    "mask": "mask.png",
    "volume": "volume.npy",
    "normals": "normals.npy",
    "boundary": "boundary.png",
    "intrinsics": "intrinsics.txt",
    "rgb": "rgb.png",
}


def save_scene(scene: Scene, manifest_path) -> Path:
    """Write all layers next to the manifest; byte output is deterministic
    for identical inputs."""
    manifest_path = Path(manifest_path)
    out_dir = manifest_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)

    layers = {}

    def put(name, writer):
        fname = _DEFAULT_NAMES[name]
        writer(out_dir / fname)
        layers[name] = fname

    put("depth_raw", lambda p: _save_png(p, encode_depth(scene.depth_raw)))
    if scene.depth_gt is not None:
        put("depth_gt", lambda p: _save_png(p, encode_depth(scene.depth_gt)))
    put("mask", lambda p: _save_png(p, scene.mask.astype(np.uint8)))
    put("normals", lambda p: np.save(p, encode_normals(scene.normals)))
    if scene.volume is not None:
        put("volume", lambda p: np.save(p, encode_volume(scene.volume)))
    put("boundary", lambda p: _save_png(p, encode_boundary(scene.boundary)))
    put("intrinsics", lambda p: write_intrinsics(p, scene.intrinsics))
    if scene.rgb is not None:
        put("rgb", lambda p: _save_png(p, scene.rgb.astype(np.uint8)))

    manifest = {
        "format": FORMAT_TAG,
        "layers": layers,
        "instances": [
            {"bbox": [int(b) for b in inst.bbox],
             "scores": [float(s) for s in inst.scores]}
            for inst in scene.instances
        ],
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _reject_unknown(d: dict, allowed: set, what: str):
    unknown = set(d) - allowed
    if unknown:
        raise SceneFormatError(f"unknown {what} keys: {sorted(unknown)}")


def load_scene(manifest_path) -> Scene:
    """Load a scene, checking formats, palettes, and layer dimensions."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise SceneFormatError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"manifest {manifest_path} is not valid JSON: {exc}")
    if not isinstance(manifest, dict):
        raise SceneFormatError("manifest must be a JSON object")
    _reject_unknown(manifest, _MANIFEST_KEYS, "manifest")
    if manifest.get("format") != FORMAT_TAG:
        raise SceneFormatError(f"unsupported scene format: {manifest.get('format')!r}")
    layers = manifest.get("layers", {})
    _reject_unknown(layers, _LAYER_KEYS, "layer")
    base = manifest_path.parent

    def lpath(name) -> Path:
        return base / layers[name]

    for required in ("depth_raw", "mask", "normals", "boundary", "intrinsics"):
        if required not in layers:
            raise SceneFormatError(f"manifest missing required layer: {required}")

    k = read_intrinsics(lpath("intrinsics"))
    shape = (k.height, k.width)

    def check_shape(arr, name, expected):
        if arr.shape != expected:
            raise SceneFormatError(
                f"layer {layers[name]} has shape {arr.shape}, expected {expected}")
        return arr

    depth_raw = decode_depth(check_shape(_load_png(lpath("depth_raw")),
                                         "depth_raw", shape)).validate()
    depth_gt = None
    if "depth_gt" in layers:
        depth_gt = decode_depth(check_shape(_load_png(lpath("depth_gt")),
                                            "depth_gt", shape)).validate()
    mask = check_shape(_load_png(lpath("mask")), "mask", shape)
    if mask.max() > NUM_CLASSES:
        raise SceneFormatError(
            f"layer {layers['mask']} holds label {int(mask.max())}, "
            f"outside the palette 0..{NUM_CLASSES}")
    mask = mask.astype(np.uint8)

    npath = lpath("normals")
    if not npath.exists():
        raise SceneFormatError(f"missing layer file: {npath}")
    normals_raw = np.load(npath)
    if normals_raw.dtype != np.uint16 or normals_raw.shape != (3,) + shape:
        raise SceneFormatError(
            f"layer {layers['normals']} must be uint16 of shape (3, H, W)")
    normals = decode_normals(normals_raw).validate()

    boundary_raw = _load_png(lpath("boundary"))
    if boundary_raw.ndim != 3 or boundary_raw.shape[2] != 3:
        raise SceneFormatError(f"layer {layers['boundary']} must be 3-channel")
    boundary = decode_boundary(check_shape(boundary_raw, "boundary", shape + (3,)))

    volume = None
    if "volume" in layers:
        vpath = lpath("volume")
        if not vpath.exists():
            raise SceneFormatError(f"missing layer file: {vpath}")
        volume_raw = np.load(vpath)
        if volume_raw.dtype != np.uint16 or volume_raw.shape != (NUM_CLASSES + 1,) + shape:
            raise SceneFormatError(
                f"layer {layers['volume']} must be uint16 of shape (N+1, H, W)")
        volume = decode_volume(volume_raw)

    rgb = None
    if "rgb" in layers:
        rgb = check_shape(_load_png(lpath("rgb")), "rgb", shape + (3,))

    instances = []
    for idx, inst in enumerate(manifest.get("instances", [])):
        _reject_unknown(inst, _INSTANCE_KEYS, f"instance[{idx}]")
        bbox = tuple(int(b) for b in inst["bbox"])
        if len(bbox) != 4:
            raise SceneFormatError(f"instance[{idx}] bbox must have 4 entries")
        u0, v0, u1, v1 = bbox
        if not (0 <= u0 < u1 <= k.width and 0 <= v0 < v1 <= k.height):
            raise SceneFormatError(f"instance[{idx}] bbox {bbox} out of bounds")
        scores = np.asarray(inst["scores"], dtype=np.float64)
        if scores.shape != (NUM_CLASSES,) or scores.min() < 0 or scores.max() > 1:
            raise SceneFormatError(f"instance[{idx}] scores must be {NUM_CLASSES} "
                                   "values in [0, 1]")
        instances.append(SceneInstanceInfo(bbox, scores))

    return Scene(k, depth_raw, mask, normals, boundary, instances,
                 depth_gt=depth_gt, volume=volume, rgb=rgb)
