"""Digit-image ingestion and construction of sequential task streams.

Three stream flavours are supported: class-incremental splits (disjoint
label pairs), fixed pixel permutations, and progressive rotations. Streams
are immutable after construction and safe to share across evaluators.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28
IMAGE_PIXELS = IMAGE_SIDE * IMAGE_SIDE
NUM_CLASSES = 10

SPLIT_CLASS_SETS = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))


class IdxFormatError(ValueError):
    """Raised when an IDX file's magic number or structure is wrong."""


class DataConsistencyError(ValueError):
    """Raised when image and label files disagree or a class is missing."""


@dataclass
class Dataset:
    """Flattened image matrix (N x 784, pixels in [0,1]) with integer labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 2 or self.images.shape[1] != IMAGE_PIXELS:
            raise DataConsistencyError(
                f"images must be N x {IMAGE_PIXELS}, got {self.images.shape}"
            )
        if self.labels.shape != (self.images.shape[0],):
            raise DataConsistencyError(
                f"label count {self.labels.shape} does not match "
                f"image count {self.images.shape[0]}"
            )
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataConsistencyError("pixel values must lie in [0,1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= NUM_CLASSES):
            raise DataConsistencyError("labels must lie in {0..9}")

    def __len__(self):
        return self.images.shape[0]


@dataclass(frozen=True)
class Transform:
    """Per-task input transform: identity, pixel permutation, or rotation."""

    kind: str  # "identity" | "permutation" | "rotation"
    perm: np.ndarray | None = None
    angle: float = 0.0

    def apply(self, images: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return images
        if self.kind == "permutation":
            return images[:, self.perm]
        if self.kind == "rotation":
            return rotate_images(images, self.angle)
        raise ValueError(f"unknown transform kind {self.kind!r}")


@dataclass(frozen=True)
class TaskSpec:
    task_id: int  # 1-based position in the stream
    class_set: tuple
    transform: Transform

    def __post_init__(self):
        if self.task_id < 1:
            raise ValueError("task_id must be >= 1")
        if len(set(self.class_set)) != len(self.class_set):
            raise ValueError("class ids must be unique within a task")
        if self.transform.kind == "permutation":
            perm = self.transform.perm
            if perm is None or sorted(perm.tolist()) != list(range(IMAGE_PIXELS)):
                raise ValueError("permutation must be a bijection on pixel indices")
        if self.transform.kind == "rotation" and not 0.0 <= self.transform.angle <= 180.0:
            raise ValueError("rotation angle must lie in [0,180]")


@dataclass(frozen=True)
class Task:
    spec: TaskSpec
    train: Dataset
    test: Dataset


@dataclass(frozen=True)
class TaskStream:
    """Ordered, presented-once sequence of tasks plus the global class count."""

    name: str
    tasks: tuple
    total_classes: int = field(default=NUM_CLASSES)

    def __len__(self):
        return len(self.tasks)


def _read_be32(f):
    data = f.read(4)
    if len(data) != 4:
        raise IdxFormatError("truncated IDX header")
    return struct.unpack(">I", data)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label file pair into a Dataset.

    Pixels are scaled from byte range to [0,1]; 28x28 frames are flattened
    row-major. Raises IdxFormatError on a bad magic number and
    DataConsistencyError when the two files disagree on sample count.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f)
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x}")
        count, rows, cols = _read_be32(f), _read_be32(f), _read_be32(f)
        raw = np.frombuffer(f.read(), dtype=np.uint8)
        if raw.size != count * rows * cols:
            raise IdxFormatError(
                f"image payload has {raw.size} bytes, header promises {count * rows * cols}"
            )
        images = raw.reshape(count, rows * cols).astype(np.float32) / 255.0
    with open(labels_path, "rb") as f:
        magic = _read_be32(f)
        if magic != LABEL_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x}")
        n_labels = _read_be32(f)
        labels = np.frombuffer(f.read(), dtype=np.uint8).astype(np.int64)
        if labels.size != n_labels:
            raise IdxFormatError("label payload shorter than header promises")
    if count != n_labels:
        raise DataConsistencyError(
            f"image file holds {count} samples but label file holds {n_labels}"
        )
    return Dataset(images=images, labels=labels)


def rotate_images(images: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate flattened square images about their center by angle_deg.

    Bilinear interpolation; samples falling outside the frame are zero.
    Output is clipped to [0,1] to absorb interpolation round-off.
    """
    if angle_deg == 0.0:
        return images.copy()
    side = int(round(np.sqrt(images.shape[1])))
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    center = (side - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    y = rows - center
    x = cols - center
    # inverse map: source coordinates that land on each output pixel
    src_x = cos_t * x + sin_t * y + center
    src_y = -sin_t * x + cos_t * y + center
    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    fx = src_x - x0
    fy = src_y - y0

    out = np.zeros((images.shape[0], side * side), dtype=images.dtype)
    frames = images.reshape(-1, side, side)
    for dy, dx, w in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy = y0 + dy
        xx = x0 + dx
        valid = (yy >= 0) & (yy < side) & (xx >= 0) & (xx < side)
        yc = np.clip(yy, 0, side - 1).ravel()
        xc = np.clip(xx, 0, side - 1).ravel()
        out += frames[:, yc, xc] * np.where(valid, w, 0.0).ravel()
    return np.clip(out, 0.0, 1.0)


def rotate_image(img: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate one flattened image; angle restricted to [0,180] degrees."""
    if not 0.0 <= angle_deg <= 180.0:
        raise ValueError("angle must lie in [0,180]")
    return rotate_images(img[np.newaxis, :], angle_deg)[0]


def _class_subset(d: Dataset, classes) -> Dataset:
    mask = np.isin(d.labels, list(classes))
    return Dataset(images=d.images[mask], labels=d.labels[mask])


def make_split_tasks(train: Dataset, test: Dataset) -> TaskStream:
    """Partition a full-digit dataset into five disjoint two-class tasks."""
    for d, name in ((train, "train"), (test, "test")):
        present = set(np.unique(d.labels).tolist())
        if present != set(range(NUM_CLASSES)):
            raise DataConsistencyError(
                f"{name} split is missing classes {sorted(set(range(NUM_CLASSES)) - present)}"
            )
    tasks = []
    for i, classes in enumerate(SPLIT_CLASS_SETS, start=1):
        spec = TaskSpec(task_id=i, class_set=classes, transform=Transform("identity"))
        tasks.append(Task(spec=spec, train=_class_subset(train, classes),
                          test=_class_subset(test, classes)))
    return TaskStream(name="split", tasks=tuple(tasks))


def make_permuted_tasks(train: Dataset, test: Dataset, t_count: int, seed: int) -> TaskStream:
    """Build t_count ten-way tasks; task 1 is the identity, the rest are
    independent fixed pixel permutations seeded by seed + task_id."""
    if t_count < 1:
        raise ValueError("t_count must be >= 1")
    all_classes = tuple(range(NUM_CLASSES))
    tasks = []
    for t in range(1, t_count + 1):
        if t == 1:
            tf = Transform("identity")
        else:
            perm = np.random.default_rng(seed + t).permutation(IMAGE_PIXELS)
            tf = Transform("permutation", perm=perm)
        spec = TaskSpec(task_id=t, class_set=all_classes, transform=tf)
        tasks.append(Task(spec=spec,
                          train=Dataset(tf.apply(train.images), train.labels),
                          test=Dataset(tf.apply(test.images), test.labels)))
    return TaskStream(name="permuted", tasks=tuple(tasks))


def make_rotated_tasks(train: Dataset, test: Dataset, t_count: int) -> TaskStream:
    """Build t_count ten-way tasks rotated by evenly spaced angles over [0,180]."""
    if t_count < 2:
        raise ValueError("t_count must be >= 2")
    all_classes = tuple(range(NUM_CLASSES))
    tasks = []
    for t in range(1, t_count + 1):
        angle = 180.0 * (t - 1) / (t_count - 1)
        tf = Transform("identity") if angle == 0.0 else Transform("rotation", angle=angle)
        spec = TaskSpec(task_id=t, class_set=all_classes, transform=tf)
        tasks.append(Task(spec=spec,
                          train=Dataset(tf.apply(train.images), train.labels),
                          test=Dataset(tf.apply(test.images), test.labels)))
    return TaskStream(name="rotated", tasks=tuple(tasks))


def subsample(d: Dataset, cap: int, seed: int) -> Dataset:
    """Stratified, seeded subsample of at most cap rows (proportional by class)."""
    if cap >= len(d):
        return d
    rng = np.random.default_rng(seed)
    keep = []
    classes, counts = np.unique(d.labels, return_counts=True)
    quota = np.maximum(1, np.floor(counts * cap / len(d)).astype(int))
    # distribute the remainder to the largest classes
    while quota.sum() < cap:
        quota[np.argmax(counts - quota)] += 1
    while quota.sum() > cap:
        quota[np.argmax(quota)] -= 1
    for cls, q in zip(classes, quota):
        idx = np.flatnonzero(d.labels == cls)
        keep.append(rng.choice(idx, size=min(q, idx.size), replace=False))
    keep = np.sort(np.concatenate(keep))
    return Dataset(images=d.images[keep], labels=d.labels[keep])


def cap_stream(stream: TaskStream, train_cap, test_cap, seed: int) -> TaskStream:
    """Apply per-task train/test caps (stratified, seeded) to a built stream."""
    if not train_cap and not test_cap:
        return stream
    tasks = []
    for t in stream.tasks:
        train = subsample(t.train, train_cap, seed + t.spec.task_id) if train_cap else t.train
        test = subsample(t.test, test_cap, seed + 7919 + t.spec.task_id) if test_cap else t.test
        tasks.append(Task(spec=t.spec, train=train, test=test))
    return TaskStream(name=stream.name, tasks=tuple(tasks),
                      total_classes=stream.total_classes)


# 5x7 dot-matrix digit glyphs used by the synthetic generator.
_GLYPHS = [
    "01110 10001 10011 10101 11001 10001 01110",  # 0
    "00100 01100 00100 00100 00100 00100 01110",  # 1
    "01110 10001 00001 00010 00100 01000 11111",  # 2
    "11111 00010 00100 00010 00001 10001 01110",  # 3
    "00010 00110 01010 10010 11111 00010 00010",  # 4
    "11111 10000 11110 00001 00001 10001 01110",  # 5
    "00110 01000 10000 11110 10001 10001 01110",  # 6
    "11111 00001 00010 00100 01000 01000 01000",  # 7
    "01110 10001 10001 01110 10001 10001 01110",  # 8
    "01110 10001 10001 01111 00001 00010 01100",  # 9
]


def _glyph_frame(digit: int, scale: int = 3) -> np.ndarray:
    bits = np.array([[int(c) for c in row] for row in _GLYPHS[digit].split()],
                    dtype=np.float32)
    big = np.kron(bits, np.ones((scale, scale), dtype=np.float32))
    frame = np.zeros((IMAGE_SIDE, IMAGE_SIDE), dtype=np.float32)
    r0 = (IMAGE_SIDE - big.shape[0]) // 2
    c0 = (IMAGE_SIDE - big.shape[1]) // 2
    frame[r0:r0 + big.shape[0], c0:c0 + big.shape[1]] = big
    return frame


def _shift_frame(frame: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(frame)
    src_r = slice(max(0, -dy), IMAGE_SIDE - max(0, dy))
    src_c = slice(max(0, -dx), IMAGE_SIDE - max(0, dx))
    dst_r = slice(max(0, dy), IMAGE_SIDE - max(0, -dy))
    dst_c = slice(max(0, dx), IMAGE_SIDE - max(0, -dx))
    out[dst_r, dst_c] = frame[src_r, src_c]
    return out


def make_synthetic_digits(n_train: int, n_test: int, seed: int = 0,
                          max_angle: float = 20.0, max_shift: int = 3,
                          noise_sd: float = 0.08) -> tuple:
    """Generate a balanced 10-class 28x28 digit dataset from glyph prototypes.

    A stand-in source when no IDX files are available: each sample is a
    rotated, shifted, intensity-jittered, noisy rendering of its class glyph,
    calibrated to roughly MLP-on-MNIST difficulty.
    """
    rng = np.random.default_rng(seed)
    out = []
    for n in (n_train, n_test):
        labels = np.tile(np.arange(NUM_CLASSES), n // NUM_CLASSES + 1)[:n].astype(np.int64)
        rng.shuffle(labels)
        angles = rng.integers(-int(max_angle), int(max_angle) + 1, size=n)
        shifts = rng.integers(-max_shift, max_shift + 1, size=(n, 2))
        proto = {}
        images = np.empty((n, IMAGE_PIXELS), dtype=np.float32)
        for i in range(n):
            key = (int(labels[i]), int(angles[i]))
            if key not in proto:
                frame = _glyph_frame(key[0])
                proto[key] = _rotate_any(frame, float(key[1]))
            images[i] = _shift_frame(proto[key], int(shifts[i, 0]), int(shifts[i, 1])).ravel()
        intensity = rng.uniform(0.55, 1.0, size=(n, 1)).astype(np.float32)
        noise = rng.normal(0.0, noise_sd, size=images.shape).astype(np.float32)
        images = np.clip(images * intensity + noise, 0.0, 1.0)
        out.append(Dataset(images=images, labels=labels))
    return out[0], out[1]


def _rotate_any(frame: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotation helper for signed angles (generator internal)."""
    flat = frame.ravel()[np.newaxis, :]
    return rotate_images(flat, angle_deg)[0].reshape(frame.shape)
