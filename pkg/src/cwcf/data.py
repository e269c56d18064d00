"""Dataset loading, normalization, splitting and synthetic generators.

A :class:`Dataset` bundles everything the environment needs: the normalized
feature matrix, integer labels, per-feature acquisition costs, a presence
mask for sparse data, the normalization statistics and a train/val/test
split.  Instances are immutable by convention; every transform returns a
new object.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CsvFormatError(ValueError):
    """Raised when an input CSV cannot be parsed; the message names the line."""


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def indices(self, name: str) -> np.ndarray:
        try:
            return getattr(self, name)
        except AttributeError:
            raise ValueError(f"unknown split {name!r}") from None

    def as_dict(self) -> dict:
        return {"train": self.train, "val": self.val, "test": self.test}


@dataclass
class Dataset:
    """Normalized samples with costs, presence mask and split."""

    n_features: int
    n_classes: int
    features: np.ndarray      # [n_samples, n_features], absent entries hold 0
    labels: np.ndarray        # [n_samples] int class indices
    costs: np.ndarray         # [n_features] strictly positive
    present: np.ndarray       # [n_samples, n_features] bool
    means: np.ndarray         # per-feature normalization mean (raw units)
    stds: np.ndarray          # per-feature normalization std (raw units)
    split: Split
    feature_names: list[str] = field(default_factory=list)
    seed: int | None = None

    # -- derived quantities ------------------------------------------------

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def total_cost(self) -> float:
        return float(self.costs.sum())

    def prior_accuracy(self, split: str = "train") -> float:
        """Accuracy of always predicting the majority class of the train split."""
        train_labels = self.labels[self.split.train]
        majority = int(np.bincount(train_labels, minlength=self.n_classes).argmax())
        idx = self.split.indices(split)
        return float(np.mean(self.labels[idx] == majority))

    def has_missing(self) -> bool:
        return not bool(self.present.all())

    # -- invariants ----------------------------------------------------------

    def validate(self) -> None:
        if np.any(self.costs <= 0):
            raise ValueError("all feature costs must be strictly positive")
        if self.features.shape != self.present.shape:
            raise ValueError("features and present must have identical shape")
        all_idx = np.concatenate([self.split.train, self.split.val, self.split.test])
        if len(set(all_idx.tolist())) != len(all_idx) or len(all_idx) != self.n_samples:
            raise ValueError("splits must be disjoint and cover all samples")
        if np.any(self.features[~self.present] != 0.0):
            raise ValueError("absent entries must hold 0 after normalization")
        tr = self.split.train
        for j in range(self.n_features):
            col = self.features[tr, j][self.present[tr, j]]
            if col.size == 0:
                continue
            if np.ptp(col) == 0.0:
                continue  # constant column, normalized with std := 1
            if abs(col.mean()) > 1e-6:
                raise ValueError(f"train column {j} not zero-mean after normalization")
            if abs(col.std() - 1.0) > 1e-3:
                raise ValueError(f"train column {j} not unit-std after normalization")

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        np.savez_compressed(
            path,
            format=np.array("cwcf-dataset"),
            version=np.array(1),
            features=self.features,
            labels=self.labels,
            costs=self.costs,
            present=self.present,
            means=self.means,
            stds=self.stds,
            split_train=self.split.train,
            split_val=self.split.val,
            split_test=self.split.test,
            feature_names=np.array(json.dumps(self.feature_names)),
            n_classes=np.array(self.n_classes),
            seed=np.array(-1 if self.seed is None else self.seed),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        with np.load(path, allow_pickle=False) as z:
            if str(z["format"]) != "cwcf-dataset":
                raise ValueError(f"{path}: not a dataset snapshot")
            seed = int(z["seed"])
            return cls(
                n_features=int(z["features"].shape[1]),
                n_classes=int(z["n_classes"]),
                features=z["features"],
                labels=z["labels"],
                costs=z["costs"],
                present=z["present"],
                means=z["means"],
                stds=z["stds"],
                split=Split(z["split_train"], z["split_val"], z["split_test"]),
                feature_names=json.loads(str(z["feature_names"])),
                seed=None if seed == -1 else seed,
            )


# -- construction helpers ----------------------------------------------------


def _normalization_stats(raw: np.ndarray, present: np.ndarray,
                         train_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean/std over present train entries; population std.

    Constant (or empty) columns get std 1 so normalization never divides
    by zero.
    """
    n_features = raw.shape[1]
    means = np.zeros(n_features)
    stds = np.ones(n_features)
    for j in range(n_features):
        col = raw[train_idx, j][present[train_idx, j]]
        if col.size == 0:
            continue
        means[j] = col.mean()
        s = col.std()  # population std
        stds[j] = s if s > 0 else 1.0
    return means, stds


def _from_raw(raw: np.ndarray, labels: np.ndarray, costs: np.ndarray,
              present: np.ndarray, split: Split, n_classes: int,
              feature_names: list[str], seed: int | None) -> Dataset:
    """Normalize raw values with train-split statistics and zero absent entries."""
    means, stds = _normalization_stats(raw, present, split.train)
    features = (raw - means) / stds
    features[~present] = 0.0
    ds = Dataset(
        n_features=raw.shape[1],
        n_classes=n_classes,
        features=features,
        labels=labels.astype(np.int64),
        costs=costs.astype(np.float64),
        present=present,
        means=means,
        stds=stds,
        split=split,
        feature_names=feature_names,
        seed=seed,
    )
    ds.validate()
    return ds


def stratified_split(labels: np.ndarray, fractions: tuple[float, float, float],
                     rng: np.random.Generator) -> Split:
    """Partition sample indices per class so split priors stay stable."""
    if len(fractions) != 3:
        raise ValueError("split fractions must be (train, val, test)")
    if any(f < 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
        raise ValueError("split fractions must be nonnegative and sum to 1")
    parts: list[list[int]] = [[], [], []]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n = len(idx)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        n_train = min(n_train, n)
        n_val = min(n_val, n - n_train)
        parts[0].extend(idx[:n_train])
        parts[1].extend(idx[n_train:n_train + n_val])
        parts[2].extend(idx[n_train + n_val:])
    train, val, test = (np.sort(np.array(p, dtype=np.int64)) for p in parts)
    if len(train) == 0:
        raise ValueError("empty train split")
    return Split(train, val, test)


def load_dataset(data_path: str | Path, costs_path: str | Path | None = None,
                 split: tuple[float, float, float] = (0.6, 0.2, 0.2),
                 seed: int = 0) -> Dataset:
    """Load a CSV with a header row and a `label` column.

    Empty cells mark missing values.  Without a cost file every feature
    costs 1.0; the cost file is a two-column CSV (feature, cost).
    """
    data_path = Path(data_path)
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{data_path}: empty file") from None
        header = [h.strip() for h in header]
        if "label" not in header:
            raise CsvFormatError(f"{data_path}: no `label` column in header")
        label_col = header.index("label")
        feature_names = [h for i, h in enumerate(header) if i != label_col]
        rows: list[list[float]] = []
        row_present: list[list[bool]] = []
        raw_labels: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{data_path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            values, present = [], []
            for i, cell in enumerate(row):
                if i == label_col:
                    continue
                cell = cell.strip()
                if cell == "":
                    values.append(0.0)
                    present.append(False)
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"{data_path}: line {lineno}: bad number {cell!r}") from None
                present.append(True)
            label = row[label_col].strip()
            if label == "":
                raise CsvFormatError(f"{data_path}: line {lineno}: empty label")
            rows.append(values)
            row_present.append(present)
            raw_labels.append(label)
    if not rows:
        raise CsvFormatError(f"{data_path}: no data rows")

    raw = np.array(rows, dtype=np.float64)
    present = np.array(row_present, dtype=bool)
    classes = sorted(set(raw_labels))
    labels = np.array([classes.index(lbl) for lbl in raw_labels], dtype=np.int64)

    costs = _load_costs(costs_path, feature_names)
    rng = np.random.default_rng(seed)
    split_obj = stratified_split(labels, split, rng)
    return _from_raw(raw, labels, costs, present, split_obj,
                     n_classes=len(classes), feature_names=feature_names, seed=seed)


def _load_costs(costs_path: str | Path | None, feature_names: list[str]) -> np.ndarray:
    if costs_path is None:
        return np.ones(len(feature_names))
    costs = np.ones(len(feature_names))
    with open(costs_path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0].strip() in ("feature", "name")):
                continue
            if len(row) != 2:
                raise CsvFormatError(f"{costs_path}: line {lineno}: expected (feature, cost)")
            name, cost_str = row[0].strip(), row[1].strip()
            if name not in feature_names:
                raise ValueError(f"cost file names unknown feature {name!r}")
            try:
                cost = float(cost_str)
            except ValueError:
                raise CsvFormatError(
                    f"{costs_path}: line {lineno}: bad number {cost_str!r}") from None
            if cost <= 0:
                raise ValueError(f"feature {name!r} has non-positive cost {cost}")
            costs[feature_names.index(name)] = cost
    return costs


# -- transforms ---------------------------------------------------------------


def mcar_drop(dataset: Dataset, rate: float, seed: int,
              include_val: bool = False) -> Dataset:
    """Mark train entries absent independently with probability `rate`.

    The test split always stays complete; models may acquire any feature at
    evaluation time.  Statistics are recomputed over the surviving present
    entries so the returned dataset is normalized in its own right.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"missing rate must lie in [0, 1], got {rate}")
    if rate == 0.0:
        return dataset
    rng = np.random.default_rng(seed)
    present = dataset.present.copy()
    targets = [dataset.split.train] + ([dataset.split.val] if include_val else [])
    for idx in targets:
        keep = rng.random((len(idx), dataset.n_features)) >= rate
        present[idx] &= keep
    # recover raw values for entries that are still present, then renormalize
    raw = dataset.features * dataset.stds + dataset.means
    raw[~present] = 0.0
    return _from_raw(raw, dataset.labels, dataset.costs, present, dataset.split,
                     dataset.n_classes, dataset.feature_names, dataset.seed)


# -- synthetic generators ------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Parameters for :func:`make_synthetic`.

    Generators:

    * ``two-informative`` - binary features; the label is the XOR or AND of
      features 0 and 1, every other feature is independent noise.
    * ``reveal-chain`` - feature i equals the (signed) label with probability
      ``reveal_probs[i]`` and 0 otherwise, so each acquisition is a chance to
      resolve the class outright.  Useful spend grows smoothly with budget.
    """

    generator: str = "two-informative"
    n_features: int = 6
    n_samples: int = 6000
    label_rule: str = "xor"            # two-informative: "xor" or "and"
    feature_p: float = 0.5             # two-informative: Bernoulli parameter
    reveal_probs: tuple[float, ...] | None = None   # reveal-chain
    costs: tuple[float, ...] | None = None
    split: tuple[float, float, float] = (0.5, 0.25, 0.25)


def make_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    """Generate a small discrete dataset whose optimal policy is solvable exactly."""
    rng = np.random.default_rng(seed)
    if spec.generator == "two-informative":
        raw, labels = _gen_two_informative(spec, rng)
    elif spec.generator == "reveal-chain":
        raw, labels = _gen_reveal_chain(spec, rng)
    else:
        raise ValueError(f"unknown synthetic generator {spec.generator!r}")
    if spec.costs is None:
        costs = np.ones(spec.n_features)
    else:
        if len(spec.costs) != spec.n_features:
            raise ValueError("costs length must equal n_features")
        costs = np.array(spec.costs, dtype=np.float64)
    present = np.ones_like(raw, dtype=bool)
    split = stratified_split(labels, spec.split, rng)
    names = [f"f{i}" for i in range(spec.n_features)]
    return _from_raw(raw, labels, costs, present, split,
                     n_classes=int(labels.max()) + 1, feature_names=names, seed=seed)


def _gen_two_informative(spec: SyntheticSpec, rng: np.random.Generator):
    if spec.n_features < 2:
        raise ValueError("two-informative needs at least 2 features")
    raw = (rng.random((spec.n_samples, spec.n_features)) < spec.feature_p).astype(np.float64)
    f0, f1 = raw[:, 0].astype(bool), raw[:, 1].astype(bool)
    if spec.label_rule == "xor":
        labels = (f0 ^ f1).astype(np.int64)
    elif spec.label_rule == "and":
        labels = (f0 & f1).astype(np.int64)
    else:
        raise ValueError(f"unknown label rule {spec.label_rule!r}")
    return raw, labels


def _gen_reveal_chain(spec: SyntheticSpec, rng: np.random.Generator):
    probs = spec.reveal_probs
    if probs is None:
        probs = tuple(0.30 - 0.02 * i for i in range(spec.n_features))
    if len(probs) != spec.n_features:
        raise ValueError("reveal_probs length must equal n_features")
    labels = (rng.random(spec.n_samples) < 0.5).astype(np.int64)
    signed = np.where(labels == 1, 1.0, -1.0)
    reveal = rng.random((spec.n_samples, spec.n_features)) < np.asarray(probs)
    raw = reveal * signed[:, None]
    return raw, labels
