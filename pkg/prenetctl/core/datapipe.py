"""
Image I/O, paired datasets and synthetic rain

Images are 8-bit RGB PNGs on disk and (1, 3, h, w) tensors in [0, 1] in
memory. Paired datasets live under a root with rain/ and norain/
subdirectories matched by filename. The synthetic generator renders
anti-aliased streak segments, blurs them and adds them to a clean image
(linear composition y = clamp(x + s, 0, 1)).
"""

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from prenetctl.core.tensor import Tensor, get_default_dtype
from prenetctl.errors import (ConfigError, DatasetValidationError, ImageIOError, ShapeError,
                              UnsupportedImageFormat)
from prenetctl.logging_config import get_logger

logger = get_logger('datapipe')

RAIN_DIR = 'rain'
CLEAN_DIR = 'norain'
IMAGE_SUFFIXES = ('.png',)
NAMING_MODES = ('filename', 'rain100h')

PathLike = Union[str, Path]


# Image I/O

def array_from_image(image: Image.Image) -> np.ndarray:
    """8-bit RGB PIL image -> float array (3, h, w) with values v/255"""
    pixels = np.asarray(image, dtype=np.uint8)
    return (pixels.astype(np.float64) / 255.0).transpose(2, 0, 1)


def quantize(values: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and map to bytes with round-half-up"""
    scaled = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def load_image(path: PathLike, dtype=None) -> Tensor:
    """Read an 8-bit RGB image as a (1, 3, h, w) tensor in [0, 1]"""
    path = Path(path)
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode != 'RGB':
                raise UnsupportedImageFormat(f"{path}: expected 8-bit RGB, got mode {image.mode}")
            values = array_from_image(image)
    except UnsupportedImageFormat:
        raise
    except FileNotFoundError as e:
        raise ImageIOError(f"Image not found: {path}") from e
    except (UnidentifiedImageError, OSError) as e:
        raise ImageIOError(f"Cannot decode image {path}: {e}") from e
    return Tensor(values[np.newaxis], dtype=dtype or get_default_dtype())


def save_image(image: Union[Tensor, np.ndarray], path: PathLike) -> Path:
    """Write a (1, 3, h, w) or (3, h, w) image as an 8-bit RGB PNG"""
    path = Path(path)
    values = image.data if isinstance(image, Tensor) else np.asarray(image)
    if values.ndim == 4:
        if values.shape[0] != 1:
            raise ShapeError(f"save_image takes a single image, got batch of {values.shape[0]}")
        values = values[0]
    if values.ndim != 3 or values.shape[0] != 3:
        raise ShapeError(f"save_image expects 3 channels, got shape {values.shape}")
    pixels = quantize(values).transpose(1, 2, 0)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.ascontiguousarray(pixels)).save(path, format='PNG')
    except OSError as e:
        raise ImageIOError(f"Cannot write image {path}: {e}") from e
    return path


# Synthetic rain

@dataclass(frozen=True)
class RainParams:
    """Streak rendering parameters; the same seed always yields the same layer"""
    streak_count: int = 120
    angle_range: Tuple[float, float] = (-20.0, 20.0)
    length_range: Tuple[float, float] = (8.0, 24.0)
    width_range: Tuple[float, float] = (1.0, 2.0)
    intensity_range: Tuple[float, float] = (0.2, 0.6)
    blur_sigma: float = 0.6
    seed: int = 0

    def validate(self) -> "RainParams":
        if isinstance(self.streak_count, bool) or not isinstance(self.streak_count, int) or self.streak_count < 0:
            raise ConfigError(f"streak_count must be a non-negative integer, got {self.streak_count!r}")
        for name in ('angle_range', 'length_range', 'width_range', 'intensity_range'):
            low, high = getattr(self, name)
            if low > high:
                raise ConfigError(f"{name} must be (low, high) with low <= high, got {(low, high)}")
        if self.length_range[0] < 0 or self.width_range[0] <= 0:
            raise ConfigError("Streak lengths must be >= 0 and widths > 0")
        low, high = self.intensity_range
        if not (0 < low <= high <= 0.8):
            raise ConfigError(f"intensity_range must lie in (0, 0.8], got {(low, high)}")
        if self.blur_sigma < 0:
            raise ConfigError(f"blur_sigma must be >= 0, got {self.blur_sigma}")
        return self

    def with_seed(self, seed: int) -> "RainParams":
        values = asdict(self)
        values['seed'] = seed
        return RainParams(**values)


def _draw_streak(layer: np.ndarray, cx: float, cy: float, angle_deg: float,
                 length: float, width: float, intensity: float) -> None:
    """Accumulate one anti-aliased segment into layer (h, w) in place"""
    height, width_px = layer.shape
    theta = math.radians(angle_deg)
    dx, dy = math.sin(theta), math.cos(theta)
    half = length / 2.0
    x0, y0 = cx - dx * half, cy - dy * half
    reach = width / 2.0 + 1.0

    left = max(int(math.floor(min(x0, cx + dx * half) - reach)), 0)
    right = min(int(math.ceil(max(x0, cx + dx * half) + reach)) + 1, width_px)
    top = max(int(math.floor(min(y0, cy + dy * half) - reach)), 0)
    bottom = min(int(math.ceil(max(y0, cy + dy * half) + reach)) + 1, height)
    if left >= right or top >= bottom:
        return

    ys, xs = np.mgrid[top:bottom, left:right].astype(np.float64)
    px, py = xs - x0, ys - y0
    along = np.clip(px * dx + py * dy, 0.0, length)
    dist = np.hypot(px - along * dx, py - along * dy)
    coverage = np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)
    layer[top:bottom, left:right] += intensity * coverage


def render_rain_layer(height: int, width: int, params: RainParams) -> np.ndarray:
    """Non-negative (h, w) rain layer, deterministic in params (seed included)"""
    params.validate()
    rng = np.random.default_rng(params.seed)
    layer = np.zeros((height, width), dtype=np.float64)
    for _ in range(params.streak_count):
        cx = rng.uniform(0.0, width)
        cy = rng.uniform(0.0, height)
        angle = rng.uniform(*params.angle_range)
        length = rng.uniform(*params.length_range)
        stroke = rng.uniform(*params.width_range)
        intensity = rng.uniform(*params.intensity_range)
        _draw_streak(layer, cx, cy, angle, length, stroke, intensity)
    if params.blur_sigma > 0 and params.streak_count > 0:
        layer = ndimage.gaussian_filter(layer, sigma=params.blur_sigma, mode='constant')
    return np.maximum(layer, 0.0)


def synthesize_pair(clean: Tensor, params: RainParams) -> Tuple[Tensor, Tensor]:
    """rainy = clamp(clean + rain_layer, 0, 1); the layer is shared by all channels"""
    if clean.ndim != 4 or clean.shape[1] != 3:
        raise ShapeError(f"synthesize_pair expects (n, 3, h, w), got {clean.shape}")
    layer = render_rain_layer(clean.shape[2], clean.shape[3], params)
    rainy = np.clip(clean.data + layer[np.newaxis, np.newaxis].astype(clean.dtype), 0.0, 1.0)
    return Tensor(rainy, dtype=clean.dtype), clean


def generate_background(height: int, width: int, seed: int) -> Tensor:
    """Smooth procedural clean image in [0.05, 0.85] used when no photos are given"""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    channels = []
    for _ in range(3):
        base = rng.uniform(0.2, 0.6)
        gx, gy = rng.uniform(-0.3, 0.3, size=2)
        gradient = base + gx * xx / max(width - 1, 1) + gy * yy / max(height - 1, 1)
        texture = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma=rng.uniform(2.0, 5.0))
        texture /= max(np.abs(texture).max(), 1e-12)
        channels.append(gradient + 0.15 * texture)
    image = np.clip(np.stack(channels), 0.05, 0.85)
    return Tensor(image[np.newaxis], dtype=get_default_dtype())


# Paired datasets

@dataclass(frozen=True)
class ImagePair:
    name: str
    rainy: Path
    clean: Path


@dataclass
class ValidationReport:
    """Problems found while scanning a paired dataset"""
    missing_clean: List[str] = field(default_factory=list)
    missing_rainy: List[str] = field(default_factory=list)
    dimension_mismatches: List[str] = field(default_factory=list)
    unreadable: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing_clean or self.missing_rainy or self.dimension_mismatches or self.unreadable)

    def problems(self) -> List[str]:
        lines = [f"no {CLEAN_DIR}/ counterpart for {RAIN_DIR}/{n}" for n in self.missing_clean]
        lines += [f"no {RAIN_DIR}/ counterpart for {CLEAN_DIR}/{n}" for n in self.missing_rainy]
        lines += [f"dimension mismatch: {n}" for n in self.dimension_mismatches]
        lines += [f"unreadable: {n}" for n in self.unreadable]
        return lines


@dataclass
class PairedDataset:
    """Immutable, byte-wise sorted manifest of rainy/clean pairs"""
    root: Path
    pairs: Tuple[ImagePair, ...]
    report: ValidationReport

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[ImagePair]:
        return iter(self.pairs)

    def manifest_lines(self) -> List[str]:
        return [f"{pair.rainy}\t{pair.clean}" for pair in self.pairs]

    def write_manifest(self, path: PathLike) -> Path:
        path = Path(path)
        try:
            path.write_text(''.join(line + '\n' for line in self.manifest_lines()), encoding='utf-8')
        except OSError as e:
            raise ImageIOError(f"Cannot write manifest {path}: {e}") from e
        return path

    def load_arrays(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(rainy, clean) arrays of shape (3, h, w) in the default dtype"""
        arrays = []
        for pair in self.pairs:
            arrays.append((load_image(pair.rainy).data[0], load_image(pair.clean).data[0]))
        return arrays


def _clean_name_for(rainy_name: str, naming: str) -> str:
    if naming == 'rain100h' and rainy_name.startswith('rain-'):
        return 'no' + rainy_name
    return rainy_name


def _list_images(directory: Path) -> List[str]:
    return sorted((p.name for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
                  key=lambda name: name.encode('utf-8'))


def _image_size(path: Path) -> Tuple[int, int]:
    with Image.open(path) as image:
        return image.size


def scan_dataset(root: PathLike, strict: bool = True, naming: str = 'filename') -> PairedDataset:
    """
    Pair rain/ and norain/ images by filename and check dimensions.

    In strict mode any problem raises DatasetValidationError naming the
    offending files; otherwise the problems are kept in the report and only
    valid pairs enter the manifest.
    """
    root = Path(root)
    if naming not in NAMING_MODES:
        raise ConfigError(f"naming must be one of {NAMING_MODES}, got {naming!r}")
    rain_dir, clean_dir = root / RAIN_DIR, root / CLEAN_DIR
    for directory in (rain_dir, clean_dir):
        if not directory.is_dir():
            raise ImageIOError(f"Dataset directory missing: {directory}")

    rainy_names = _list_images(rain_dir)
    clean_names = set(_list_images(clean_dir))
    report = ValidationReport()
    pairs: List[ImagePair] = []
    matched_clean = set()

    for rainy_name in rainy_names:
        clean_name = _clean_name_for(rainy_name, naming)
        if clean_name not in clean_names:
            report.missing_clean.append(rainy_name)
            continue
        matched_clean.add(clean_name)
        rainy_path, clean_path = rain_dir / rainy_name, clean_dir / clean_name
        try:
            sizes_match = _image_size(rainy_path) == _image_size(clean_path)
        except (UnidentifiedImageError, OSError):
            report.unreadable.append(rainy_name)
            continue
        if not sizes_match:
            report.dimension_mismatches.append(rainy_name)
            continue
        pairs.append(ImagePair(name=rainy_name, rainy=rainy_path, clean=clean_path))

    for clean_name in sorted(clean_names - matched_clean, key=lambda n: n.encode('utf-8')):
        report.missing_rainy.append(clean_name)

    if not report.ok:
        problems = report.problems()
        if strict:
            raise DatasetValidationError(f"Dataset {root} failed validation: " + '; '.join(problems), problems)
        for problem in problems:
            logger.warning(f"Skipping invalid pair ({problem})")

    logger.debug(f"Scanned {root}: {len(pairs)} pair(s)")
    return PairedDataset(root=root, pairs=tuple(pairs), report=report)


def write_synthetic_dataset(root: PathLike, count: int, height: int, width: int, params: RainParams,
                            clean_images: Optional[Sequence[PathLike]] = None) -> PairedDataset:
    """
    Write count rainy/clean pairs under root (rain/, norain/, manifest.tsv).

    Image k uses rain seed params.seed + k; clean images come from
    clean_images when given (cycled), otherwise from generate_background.
    """
    params.validate()
    if count <= 0:
        raise ConfigError(f"count must be positive, got {count}")
    root = Path(root)
    for k in range(count):
        name = f"{k:04d}.png"
        if clean_images:
            clean = load_image(clean_images[k % len(clean_images)])
        else:
            clean = generate_background(height, width, seed=params.seed * 100003 + k)
        rainy, clean = synthesize_pair(clean, params.with_seed(params.seed + k))
        save_image(clean, root / CLEAN_DIR / name)
        save_image(rainy, root / RAIN_DIR / name)
    dataset = scan_dataset(root, strict=True)
    dataset.write_manifest(root / 'manifest.tsv')
    return dataset
