"""Data model, dataset splitting and labelled random streams."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import BadRatios, EmptyDataset, TooFewPoints

__all__ = [
    "Site",
    "Observation",
    "Dataset",
    "SplitDataset",
    "RngSpec",
    "split_dataset",
    "kfold_indices",
]


@dataclass(frozen=True)
class Site:
    coords: tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"site coordinates must be finite, got {coords}")
        object.__setattr__(self, "coords", coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype or float)


@dataclass(frozen=True)
class Observation:
    site: Site
    features: tuple[float, ...]
    response: float

    def __post_init__(self):
        if not isinstance(self.site, Site):
            object.__setattr__(self, "site", Site(tuple(self.site)))
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        if len(self.features) < 1:
            raise ValueError("an observation needs at least one feature")
        if not math.isfinite(self.response):
            raise ValueError("response must be finite")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented observation table.

    ``sites`` has shape (n, d), ``features`` (n, p) and ``responses`` (n,).
    Arrays are made read-only on construction.
    """

    sites: np.ndarray
    features: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        sites = np.array(self.sites, dtype=float, ndmin=2)
        features = np.array(self.features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        responses = np.array(self.responses, dtype=float).ravel()
        n = len(responses)
        if sites.shape[0] != n or features.shape[0] != n:
            raise ValueError(
                f"row counts differ: sites {sites.shape[0]}, features "
                f"{features.shape[0]}, responses {n}"
            )
        if not (np.isfinite(sites).all() and np.isfinite(responses).all()):
            raise ValueError("sites and responses must be finite")
        for arr in (sites, features, responses):
            arr.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "responses", responses)

    @classmethod
    def from_observations(cls, observations: Sequence[Observation]) -> "Dataset":
        if not observations:
            raise EmptyDataset("no observations")
        widths = {len(o.features) for o in observations}
        if len(widths) != 1:
            raise ValueError(f"inconsistent feature lengths: {sorted(widths)}")
        return cls(
            np.array([o.site.coords for o in observations]),
            np.array([o.features for o in observations]),
            np.array([o.response for o in observations]),
        )

    def __len__(self) -> int:
        return len(self.responses)

    def __getitem__(self, i: int) -> Observation:
        return Observation(Site(tuple(self.sites[i])), tuple(self.features[i]), float(self.responses[i]))

    def __iter__(self) -> Iterator[Observation]:
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.sites[idx], self.features[idx], self.responses[idx])


@dataclass(frozen=True)
class SplitDataset:
    data: Dataset
    train_idx: np.ndarray
    calib_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        parts = [np.asarray(p, dtype=np.intp) for p in (self.train_idx, self.calib_idx, self.test_idx)]
        if any(len(p) == 0 for p in parts):
            raise EmptyDataset("every split must be non-empty")
        joined = np.concatenate(parts)
        if len(np.unique(joined)) != len(joined):
            raise ValueError("split index lists overlap")
        if joined.min() < 0 or joined.max() >= len(self.data):
            raise IndexError("split index out of range")
        for name, p in zip(("train_idx", "calib_idx", "test_idx"), parts):
            p.setflags(write=False)
            object.__setattr__(self, name, p)

    @property
    def train(self) -> Dataset:
        return self.data.subset(self.train_idx)

    @property
    def calib(self) -> Dataset:
        return self.data.subset(self.calib_idx)

    @property
    def test(self) -> Dataset:
        return self.data.subset(self.test_idx)


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer stream labels must be non-negative")
        return int(label)
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RngSpec:
    """A root seed plus a path of stream labels.

    Children are derived with :meth:`child`; two specs with the same seed
    and path always produce bit-identical generators, and adding a new
    consumer under a fresh label never perturbs existing streams.

    >>> a = RngSpec(7).child("split").generator().integers(1000, size=3)
    >>> b = RngSpec(7).child("split").generator().integers(1000, size=3)
    >>> bool((a == b).all())
    True
    """

    seed: int
    path: tuple = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def child(self, *labels) -> "RngSpec":
        return RngSpec(self.seed, self.path + tuple(labels))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            int(self.seed), spawn_key=tuple(_label_key(lab) for lab in self.path)
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def uint64(self) -> int:
        """A single derived 64-bit integer, e.g. to seed a compiled kernel."""
        return int(self.seed_sequence().generate_state(1, np.uint64)[0])


def split_dataset(
    obs: Dataset | Sequence[Observation],
    ratios: Sequence[float] = (0.4, 0.4, 0.2),
    rng: RngSpec = RngSpec(0),
) -> SplitDataset:
    """Random train/calibration/test split.

    Train and calibration sizes are ``floor(ratio * n)``; the remainder
    goes to the test split.
    """
    data = obs if isinstance(obs, Dataset) else Dataset.from_observations(obs)
    n = len(data)
    if n < 10:
        raise EmptyDataset(f"need at least 10 observations to split, got {n}")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three positive fractions summing to 1, got {ratios}")
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_calib = math.floor(ratios[1] * n + 1e-9)
    if n_train == 0 or n_calib == 0 or n_train + n_calib >= n:
        raise BadRatios(f"ratios {ratios} leave an empty split at n={n}")
    perm = rng.generator().permutation(n)
    return SplitDataset(
        data,
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_calib]),
        np.sort(perm[n_train + n_calib:]),
    )


def kfold_indices(idx, k: int = 5, rng: RngSpec = RngSpec(0)) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffle ``idx`` and cut it into ``k`` (fit, holdout) pairs.

    Holdout sizes differ by at most one; the first ``len(idx) % k`` folds
    are the larger ones.
    """
    idx = np.asarray(idx, dtype=np.intp)
    if k < 2:
        raise TooFewPoints(f"k must be at least 2, got {k}")
    if len(idx) < k:
        raise TooFewPoints(f"{len(idx)} points cannot fill {k} folds")
    shuffled = idx[rng.generator().permutation(len(idx))]
    holdouts = np.array_split(shuffled, k)
    folds = []
    for j, hold in enumerate(holdouts):
        fit = np.concatenate([h for i, h in enumerate(holdouts) if i != j])
        folds.append((np.sort(fit), np.sort(hold)))
    return folds
