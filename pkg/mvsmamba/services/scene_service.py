"""
Scene Service Layer
Procedural ray-cast scenes with analytic depth, and MVSNet-style scene bundles on disk
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mvsmamba.config.constants import ERROR_MESSAGES, RESOLUTION_MULTIPLE
from mvsmamba.config.settings import Config
from mvsmamba.models.mvs import CameraView
from mvsmamba.services.camera_service import CameraService
from mvsmamba.services.image_service import ImageService
from mvsmamba.utils.exceptions import ArgumentError, FileFormatError

logger = logging.getLogger(__name__)

TEXTURE_WAVES = 4


@dataclass
class Plane:
    """Surface n . X = offset; optional world (x_min, x_max, y_min, y_max) bounds make it a patch"""
    normal: np.ndarray
    offset: float
    bounds: Optional[Tuple[float, float, float, float]] = None

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        self.normal = n / np.linalg.norm(n)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)


@dataclass
class SceneGeometry:
    planes: List[Plane] = field(default_factory=list)
    spheres: List[Sphere] = field(default_factory=list)
    frequencies: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None

    def texture(self, points: np.ndarray, surface: np.ndarray) -> np.ndarray:
        """
        Colour of world points [3, P] on surfaces [P] as [3, P] in [0, 1]

        Each channel is a sum of sinusoids of world position with a per-surface phase.
        """
        if self.frequencies is None:
            return np.full((3, points.shape[1]), 0.5)
        waves = np.einsum('cmk,kp->cmp', self.frequencies, points)
        shifted = waves + self.phases[:, :, None] + 1.3 * surface[None, None, :]
        return 0.5 + 0.45 * np.sin(shifted).mean(axis=1)


@dataclass
class SceneBundle:
    """Views with cameras, images and depth, plus the ordered source list per reference"""
    root: Optional[str]
    views: List[CameraView]
    pairs: Dict[int, List[int]]
    height: int
    width: int

    def select(self, ref: int, num_views: int) -> List[CameraView]:
        """Reference first, then its best num_views - 1 sources"""
        if ref not in self.pairs:
            raise ArgumentError("Reference view has no pair entry", details={"ref": ref})
        srcs = self.pairs[ref][:num_views - 1]
        if len(srcs) < 1:
            raise ArgumentError(ERROR_MESSAGES['NO_SOURCES'], details={"ref": ref})
        return [self.views[ref]] + [self.views[s] for s in srcs]


def default_intrinsics(height: int, width: int) -> np.ndarray:
    f = 0.9 * width
    return np.array([[f, 0.0, (width - 1) / 2.0],
                     [0.0, f, (height - 1) / 2.0],
                     [0.0, 0.0, 1.0]])


def arc_angles(num_views: int, arc_degrees: float) -> List[float]:
    """View 0 looks straight ahead; the rest alternate right and left along the arc"""
    step = arc_degrees / max(num_views - 1, 1)
    angles = [0.0]
    for k in range(1, num_views):
        sign = 1.0 if k % 2 else -1.0
        angles.append(sign * ((k + 1) // 2) * step)
    return angles


def arc_camera(theta_degrees: float, radius: float, K: np.ndarray,
               depth_range: Tuple[float, float]) -> CameraView:
    """Camera on a circle around (0, 0, radius) looking at its centre; theta=0 is the identity pose"""
    theta = math.radians(theta_degrees)
    centre = np.array([-radius * math.sin(theta), 0.0, radius - radius * math.cos(theta)])
    R = np.array([[math.cos(theta), 0.0, -math.sin(theta)],
                  [0.0, 1.0, 0.0],
                  [math.sin(theta), 0.0, math.cos(theta)]])
    return CameraView(K=K, R=R, t=-R @ centre, depth_range=depth_range)


def random_geometry(rng: np.random.Generator, depth_range: Tuple[float, float],
                    num_planes: int = 2, sphere: bool = True) -> SceneGeometry:
    """A tilted background plane, bounded tilted patches in front of it and an optional sphere"""
    d_min, d_max = depth_range
    span = d_max - d_min

    def tilted(depth: float, tilt: float) -> Tuple[np.ndarray, float]:
        n = np.array([rng.uniform(-tilt, tilt), rng.uniform(-tilt, tilt), 1.0])
        n /= np.linalg.norm(n)
        return n, float(n @ np.array([0.0, 0.0, depth]))

    normal, offset = tilted(d_min + 0.8 * span, 0.15)
    planes = [Plane(normal, offset)]
    for i in range(1, num_planes):
        depth = d_min + (0.45 + 0.12 * (i - 1)) * span
        normal, offset = tilted(depth, 0.25)
        cx, cy = rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0)
        planes.append(Plane(normal, offset, bounds=(cx - 2.5, cx + 2.5, cy - 1.8, cy + 1.8)))

    spheres = []
    if sphere:
        centre = np.array([rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0), d_min + 0.3 * span])
        spheres.append(Sphere(centre, 0.12 * span))

    frequencies = rng.uniform(1.0, 3.5, size=(3, TEXTURE_WAVES, 3)) * rng.choice([-1.0, 1.0], size=(3, TEXTURE_WAVES, 3))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(3, TEXTURE_WAVES))
    return SceneGeometry(planes, spheres, frequencies, phases)


def render_view(camera: CameraView, geometry: SceneGeometry, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ray-cast one view

    Pixel (i, j) looks along K^-1 (j, i, 1); depth is the camera-frame z of the
    nearest hit (0 where nothing is hit).

    Returns:
        (image [3, H, W] in [0, 1], depth [H, W])
    """
    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing='ij')
    pix = np.stack([xs.reshape(-1), ys.reshape(-1), np.ones(height * width)])
    rays = np.linalg.solve(camera.K, pix)
    rays = rays / rays[2:3]
    dirs = camera.R.T @ rays
    origin = -camera.R.T @ camera.t

    best = np.full(height * width, np.inf)
    surface = np.full(height * width, -1)

    for idx, plane in enumerate(geometry.planes):
        denom = plane.normal @ dirs
        with np.errstate(divide='ignore', invalid='ignore'):
            t = (plane.offset - plane.normal @ origin) / denom
        hit = np.isfinite(t) & (t > 0)
        if plane.bounds is not None:
            x_min, x_max, y_min, y_max = plane.bounds
            points = origin[:, None] + dirs * np.where(hit, t, 0.0)
            hit &= (points[0] >= x_min) & (points[0] <= x_max) & (points[1] >= y_min) & (points[1] <= y_max)
        closer = hit & (t < best)
        best = np.where(closer, t, best)
        surface = np.where(closer, idx, surface)

    for idx, sphere in enumerate(geometry.spheres, start=len(geometry.planes)):
        oc = origin - sphere.center
        a = (dirs * dirs).sum(axis=0)
        b = 2.0 * (oc @ dirs)
        c = oc @ oc - sphere.radius ** 2
        disc = b * b - 4 * a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        t = (-b - root) / (2 * a)
        hit = (disc >= 0) & (t > 0)
        closer = hit & (t < best)
        best = np.where(closer, t, best)
        surface = np.where(closer, idx, surface)

    found = np.isfinite(best)
    depth = np.where(found, best, 0.0)
    points = origin[:, None] + dirs * depth
    image = geometry.texture(points, surface)
    image[:, ~found] = 0.0
    return image.reshape(3, height, width), depth.reshape(height, width)


class SceneService:
    """Service for generating, writing and loading scene bundles"""

    @staticmethod
    def view_paths(root: str, index: int) -> Dict[str, str]:
        return {
            'image': os.path.join(root, 'images', f"{index:08d}.ppm"),
            'camera': os.path.join(root, 'cams', f"{index:08d}_cam.txt"),
            'depth': os.path.join(root, 'depths', f"{index:08d}.pfm"),
        }

    @staticmethod
    def validate_scene_config(scene) -> None:
        """
        Raises:
            ArgumentError: On an impossible geometry configuration
        """
        if scene.num_views < 2:
            raise ArgumentError("A scene needs at least two views", details={"num_views": scene.num_views})
        if scene.height % RESOLUTION_MULTIPLE or scene.width % RESOLUTION_MULTIPLE:
            raise ArgumentError(ERROR_MESSAGES['BAD_RESOLUTION'],
                                details={"height": scene.height, "width": scene.width})
        if not 0 < scene.depth_min < scene.depth_max:
            raise ArgumentError("Depth range must satisfy 0 < depth_min < depth_max",
                                details={"depth_min": scene.depth_min, "depth_max": scene.depth_max})
        if not 1 <= scene.num_planes <= 3:
            raise ArgumentError("Scenes hold one to three planes", details={"num_planes": scene.num_planes})

    @staticmethod
    def synthesize(scene, seed: int) -> SceneBundle:
        """Render every view of a procedural scene in memory"""
        SceneService.validate_scene_config(scene)
        rng = np.random.default_rng(seed)
        depth_range = (float(scene.depth_min), float(scene.depth_max))
        geometry = random_geometry(rng, depth_range, scene.num_planes, scene.sphere)
        K = default_intrinsics(scene.height, scene.width)
        angles = arc_angles(scene.num_views, scene.arc_degrees)
        cameras = [arc_camera(theta, scene.radius, K, depth_range) for theta in angles]

        with ThreadPoolExecutor(max_workers=Config.NUM_THREADS) as pool:
            rendered = list(pool.map(lambda cam: render_view(cam, geometry, scene.height, scene.width), cameras))

        for cam, (image, depth) in zip(cameras, rendered):
            cam.image = image
            cam.gt_depth = depth

        pairs = {}
        for ref, theta in enumerate(angles):
            others = sorted((k for k in range(len(angles)) if k != ref), key=lambda k: (abs(angles[k] - theta), k))
            pairs[ref] = others
        return SceneBundle(None, cameras, pairs, scene.height, scene.width)

    @staticmethod
    def write(bundle: SceneBundle, root: str) -> str:
        for index, view in enumerate(bundle.views):
            paths = SceneService.view_paths(root, index)
            ImageService.write_ppm(paths['image'], view.image)
            CameraService.write_camera(paths['camera'], view)
            if view.gt_depth is not None:
                ImageService.write_pfm(paths['depth'], view.gt_depth)

        angles = {}
        for ref, srcs in bundle.pairs.items():
            angles[ref] = [(s, 1.0 / (1.0 + rank)) for rank, s in enumerate(srcs)]
        CameraService.write_pairs(os.path.join(root, 'pair.txt'), angles)
        logger.info(f"Scene written: {root} ({len(bundle.views)} views, {bundle.height}x{bundle.width})")
        return root

    @staticmethod
    def generate(scene, seed: int, root: str) -> SceneBundle:
        """Render, write and reload a scene so the returned bundle matches the files"""
        SceneService.write(SceneService.synthesize(scene, seed), root)
        return SceneService.load(root)

    @staticmethod
    def load(root: str, dtype=np.float64) -> SceneBundle:
        """
        Load a scene directory

        Raises:
            FileFormatError: If the pair list names a missing view
            ArgumentError: If image extents differ or are not divisible by 16
        """
        pairs = CameraService.read_pairs(os.path.join(root, 'pair.txt'))
        indices = sorted(set(pairs) | {s for srcs in pairs.values() for s in srcs})

        views = []
        for index in range(max(indices) + 1 if indices else 0):
            paths = SceneService.view_paths(root, index)
            if not os.path.isfile(paths['image']) or not os.path.isfile(paths['camera']):
                if index in indices:
                    raise FileFormatError("Pair list references a missing view", details={"view": index})
                views.append(None)
                continue
            view = CameraService.read_camera(paths['camera'])
            view.image = ImageService.read_ppm(paths['image'], dtype=dtype)
            if os.path.isfile(paths['depth']):
                view.gt_depth = ImageService.read_pfm(paths['depth']).astype(dtype)
            views.append(view)

        shapes = {v.image.shape[1:] for v in views if v is not None}
        if len(shapes) != 1:
            raise ArgumentError(ERROR_MESSAGES['EXTENT_MISMATCH'], details={"shapes": sorted(shapes)})
        height, width = shapes.pop()
        if height % RESOLUTION_MULTIPLE or width % RESOLUTION_MULTIPLE:
            raise ArgumentError(ERROR_MESSAGES['BAD_RESOLUTION'], details={"height": height, "width": width})

        logger.info(f"Scene loaded: {root} ({len(views)} views, {height}x{width})")
        return SceneBundle(root, views, pairs, height, width)

    @staticmethod
    def require_ground_truth(views: Sequence[CameraView]) -> None:
        if views[0].gt_depth is None:
            raise ArgumentError(ERROR_MESSAGES['MISSING_GT'])

    @staticmethod
    def require_extents(bundle: SceneBundle, scene) -> None:
        """
        Check a bundle against the configured scene.height/scene.width

        Training saves these extents with the checkpoint, so the same check guards
        both training input and inference input.

        Raises:
            ArgumentError: If the extents differ
        """
        if (bundle.height, bundle.width) != (scene.height, scene.width):
            raise ArgumentError(
                ERROR_MESSAGES['EXTENT_MISMATCH'],
                details={"scene": [bundle.height, bundle.width],
                         "configured": [scene.height, scene.width]}
            )
