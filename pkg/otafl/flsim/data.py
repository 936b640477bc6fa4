"""
Datasets for the federated simulation: synthetic Gaussian clusters, MNIST IDX
files, and class-balanced partitioning across devices.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..errors import DataError, FormatError, ParameterError

LOGGER = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
IDX_HEADER_WORD = 4

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass(frozen=True)
class Dataset:
    """Feature rows x_k with integer labels y_k in 0..C-1."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ParameterError(f"Features must be a 2-D array, got shape {self.features.shape}")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ParameterError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ParameterError(f"Labels must lie in 0..{self.num_classes - 1}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


def make_gaussian_clusters(
    num_classes: int,
    feature_dim: int,
    samples_per_class: int,
    rng: np.random.Generator,
    separation: float = 1.0,
    centers: np.ndarray = None,
) -> Tuple[Dataset, np.ndarray]:
    """Draws samples around one Gaussian center per class.

    Centers are N(0, separation^2 I); samples are center + N(0, I). Pass the
    returned centers back in to draw a test set from the same distribution.
    """
    if num_classes < 2 or feature_dim < 1 or samples_per_class < 1:
        raise ParameterError("Need num_classes >= 2, feature_dim >= 1 and samples_per_class >= 1")
    if centers is None:
        centers = separation * rng.standard_normal((num_classes, feature_dim))
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    features = centers[labels] + rng.standard_normal((labels.size, feature_dim))
    return Dataset(features, labels, num_classes), centers


def partition_iid(dataset: Dataset, num_devices: int, per_device: int, rng: np.random.Generator) -> List[Dataset]:
    """Splits the dataset into disjoint, class-balanced shards.

    Each shard holds per_device samples; classes get per_device // C samples
    each, and the remainder goes one extra sample to the lowest classes.

    Raises:
        DataError: if some class does not have enough samples.
    """
    if num_devices < 1 or per_device < 1:
        raise ParameterError("Need at least one device and one sample per device")
    num_classes = dataset.num_classes
    quota = np.full(num_classes, per_device // num_classes)
    quota[: per_device % num_classes] += 1

    pools = []
    for label in range(num_classes):
        members = np.flatnonzero(dataset.labels == label)
        needed = int(quota[label]) * num_devices
        if members.size < needed:
            raise DataError(
                f"Class {label} has {members.size} samples, partition needs {needed}"
            )
        pools.append(rng.permutation(members)[:needed])

    shards = []
    for device in range(num_devices):
        picks = [pool[device * q:(device + 1) * q] for pool, q in zip(pools, quota)]
        shards.append(dataset.subset(np.concatenate(picks)))
    LOGGER.debug(f"Partitioned {len(dataset)} samples into {num_devices} shards of {per_device}")
    return shards


def _read_header(payload: bytes, offset: int, count: int) -> Tuple[int, ...]:
    end = offset + IDX_HEADER_WORD * count
    if len(payload) < end:
        raise FormatError(f"Truncated IDX header, expected {count} words", offset=len(payload))
    return struct.unpack(f">{count}I", payload[offset:end])


def load_idx(images_path: Union[str, Path], labels_path: Union[str, Path], num_classes: int = 10) -> Dataset:
    """Reads an IDX image/label file pair into a Dataset.

    Pixels are scaled to [0, 1] and images flattened row-major, so 28x28 images
    give 784 features.

    Raises:
        FormatError: on a wrong magic number, a truncated payload or an image
            count that differs from the label count.
    """
    images = Path(images_path).read_bytes()
    labels = Path(labels_path).read_bytes()

    (magic,) = _read_header(images, 0, 1)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"Bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}", offset=0)
    count, rows, cols = _read_header(images, 4, 3)
    pixel_offset = 16
    pixel_bytes = count * rows * cols
    if len(images) < pixel_offset + pixel_bytes:
        raise FormatError(
            f"Image payload truncated: {len(images) - pixel_offset} of {pixel_bytes} bytes",
            offset=len(images),
        )

    (magic,) = _read_header(labels, 0, 1)
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(f"Bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}", offset=0)
    (label_count,) = _read_header(labels, 4, 1)
    if label_count != count:
        raise FormatError(f"{count} images but {label_count} labels", offset=4)
    if len(labels) < 8 + label_count:
        raise FormatError(
            f"Label payload truncated: {len(labels) - 8} of {label_count} bytes", offset=len(labels)
        )

    pixels = np.frombuffer(images, dtype=np.uint8, count=pixel_bytes, offset=pixel_offset)
    features = pixels.reshape(count, rows * cols).astype(float) / 255.0
    label_values = np.frombuffer(labels, dtype=np.uint8, count=label_count, offset=8).astype(int)
    if label_values.size and label_values.max() >= num_classes:
        raise FormatError(f"Label {label_values.max()} outside 0..{num_classes - 1}", offset=8)
    LOGGER.info(f"Loaded {count} IDX images of {rows}x{cols} from {images_path}")
    return Dataset(features, label_values, num_classes)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: Union[str, Path], labels_path: Union[str, Path]):
    """Writes uint8 images (count, rows, cols) and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">4I", IDX_IMAGE_MAGIC, count, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", IDX_LABEL_MAGIC, labels.size) + labels.tobytes())


def load_mnist(directory: Union[str, Path]) -> Tuple[Dataset, Dataset]:
    """Loads the standard MNIST train and test IDX files from a directory."""
    directory = Path(directory)
    train = load_idx(directory / MNIST_FILES["train_images"], directory / MNIST_FILES["train_labels"])
    test = load_idx(directory / MNIST_FILES["test_images"], directory / MNIST_FILES["test_labels"])
    return train, test
