"""
Edge-IIoT CSV ingestion and preprocessing: clean, select, encode, standardize, split.

Every step is deterministic: identical file, settings and seed give a
bit-identical dataset bundle.
"""
import csv
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import (
    BUNDLE_FORMAT, BUNDLE_VERSION, DROP_COLUMNS, EDGE_IIOT_CLASSES, FEATURE_DIM,
    LABEL_COLUMN, MISSING_SENTINELS, ONEHOT_COLUMNS, SEED, STRATIFIED,
    SUBSAMPLE_FRACTION, TEST_FRACTION, UNSEEN_CODE,
)
from .errors import (
    BundleError, ColumnError, ConfigError, DimensionError, EmptyDatasetError, InputError,
    LabelError, NonFiniteError, RaggedRowError,
)
from .tensor import SeededRng
from .utils import atomic_directory, atomic_write_text, read_json, validate_matrix, write_json

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


# ---------------------------------------------------------------------- types

@dataclass
class RawTable:
    """Rectangular table with per-column kinds; missing cells are NaN/None."""
    frame: pd.DataFrame
    kinds: Dict[str, str]
    label_column: str

    @property
    def columns(self) -> List[str]:
        return list(self.frame.columns)

    @property
    def row_count(self) -> int:
        return len(self.frame)

    def missing_count(self) -> int:
        return int(self.frame.isna().sum().sum())

    def feature_columns(self) -> List[str]:
        return [c for c in self.frame.columns if c != self.label_column]


@dataclass(frozen=True)
class LabelCodec:
    """Bijective class-name <-> index table."""
    names: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise LabelError(f"class names must be unique: {self.names}")

    @classmethod
    def edge_iiot(cls) -> "LabelCodec":
        return cls(EDGE_IIOT_CLASSES)

    def __len__(self) -> int:
        return len(self.names)

    def encode(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LabelError(f"unknown class {name!r}; known classes: {', '.join(self.names)}") from None

    def decode(self, index: int) -> str:
        if not 0 <= index < len(self.names):
            raise LabelError(f"class index {index} outside 0..{len(self.names) - 1}")
        return self.names[index]

    def encode_many(self, values: Sequence[str]) -> np.ndarray:
        lookup = {name: i for i, name in enumerate(self.names)}
        unknown = sorted({str(v) for v in values if v not in lookup})
        if unknown:
            raise LabelError(f"unknown classes {unknown}; known classes: {', '.join(self.names)}")
        return np.array([lookup[v] for v in values], dtype=np.int64)


@dataclass
class CategoryEncoder:
    """Persisted categorical mapping; categories in first-appearance order."""
    column: str
    kind: str  # "label" or "onehot"
    categories: List[str]

    @property
    def output_names(self) -> List[str]:
        if self.kind == "label":
            return [self.column]
        return [f"{self.column}={c}" for c in self.categories]

    def codes(self, keys: pd.Series) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.categories)}
        codes = keys.map(lookup)
        unseen = codes.isna()
        if unseen.any():
            logger.warning("column %s: %d unseen categories mapped to %d",
                           self.column, int(unseen.sum()), UNSEEN_CODE)
        return codes.fillna(UNSEEN_CODE).astype(np.int64).to_numpy()

    def transform(self, keys: pd.Series) -> np.ndarray:
        codes = self.codes(keys)
        if self.kind == "label":
            return codes.astype(np.float64).reshape(-1, 1)
        out = np.zeros((len(codes), len(self.categories)))
        seen = codes >= 0
        out[np.flatnonzero(seen), codes[seen]] = 1.0
        return out

    def decode(self, code: int) -> Optional[str]:
        return None if code == UNSEEN_CODE else self.categories[code]


@dataclass
class FeatureEncoders:
    """Column order, kinds and categorical encoders needed to rebuild the model matrix."""
    columns: List[str]
    kinds: Dict[str, str]
    encoders: Dict[str, CategoryEncoder]

    @property
    def feature_names(self) -> List[str]:
        names: List[str] = []
        for col in self.columns:
            names.extend(self.encoders[col].output_names if col in self.encoders else [col])
        return names

    @property
    def width(self) -> int:
        return len(self.feature_names)

    def transform(self, t: RawTable) -> np.ndarray:
        missing = [c for c in self.columns if c not in t.frame.columns]
        if missing:
            raise ColumnError(f"table lacks encoded columns {missing}")
        blocks = []
        for col in self.columns:
            series = t.frame[col]
            if col in self.encoders:
                blocks.append(self.encoders[col].transform(_category_keys(series)))
            else:
                blocks.append(series.to_numpy(dtype=np.float64).reshape(-1, 1))
        if not blocks:
            return np.zeros((t.row_count, 0))
        return np.hstack(blocks)

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "kinds": dict(self.kinds),
            "encoders": {c: asdict(e) for c, e in self.encoders.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureEncoders":
        return cls(
            columns=list(d["columns"]),
            kinds=dict(d["kinds"]),
            encoders={c: CategoryEncoder(**e) for c, e in d["encoders"].items()},
        )


@dataclass
class StandardizationStats:
    """Per-feature mean/std fitted on training rows only."""
    mean: np.ndarray
    std: np.ndarray

    @property
    def zero_std(self) -> np.ndarray:
        return self.std == 0

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


@dataclass(eq=False)
class LabeledDataset:
    """Feature matrix X, integer labels y and a flag per synthetic row."""
    X: np.ndarray
    y: np.ndarray
    codec: LabelCodec
    synthetic: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.X.ndim != 2:
            raise DimensionError(f"X must be 2-D, got shape {self.X.shape}")
        if len(self.X) != len(self.y):
            raise DimensionError(f"X has {len(self.X)} rows, y has {len(self.y)}")
        if self.synthetic is None:
            self.synthetic = np.zeros(len(self.y), dtype=bool)
        self.synthetic = np.asarray(self.synthetic, dtype=bool).reshape(-1)
        if len(self.synthetic) != len(self.y):
            raise DimensionError("synthetic flags must match the row count")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.codec)):
            raise LabelError(f"labels must lie in 0..{len(self.codec) - 1}")
        if not np.isfinite(self.X).all():
            raise NonFiniteError("dataset features must be finite")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def width(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=len(self.codec))

    def class_rows(self, class_idx: int, real_only: bool = True) -> np.ndarray:
        mask = self.y == class_idx
        if real_only:
            mask &= ~self.synthetic
        return self.X[mask]

    def subset(self, idx: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.X[idx], self.y[idx], self.codec, self.synthetic[idx])

    def append(self, X_new: np.ndarray, label: int, synthetic: bool = True) -> "LabeledDataset":
        X_new = np.asarray(X_new, dtype=np.float64).reshape(-1, self.width)
        return LabeledDataset(
            np.vstack([self.X, X_new]),
            np.concatenate([self.y, np.full(len(X_new), label, dtype=np.int64)]),
            self.codec,
            np.concatenate([self.synthetic, np.full(len(X_new), synthetic, dtype=bool)]),
        )


@dataclass
class SplitSpec:
    test_fraction: float = TEST_FRACTION
    stratified: bool = STRATIFIED
    seed: int = SEED

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")


@dataclass
class EncodedTable:
    matrix: np.ndarray
    labels: np.ndarray
    codec: LabelCodec
    encoders: FeatureEncoders


# ------------------------------------------------------------------ ingestion

def _category_keys(series: pd.Series) -> pd.Series:
    return series.astype(str)


def _decoded_lines(path: Path) -> Iterator[str]:
    """Yield the file's lines as text, naming the byte offset of any invalid UTF-8."""
    offset = 0
    with open(path, "rb") as handle:
        for number, raw in enumerate(handle):
            try:
                # a leading byte-order mark is not part of the first column name
                yield raw.decode("utf-8-sig" if number == 0 else "utf-8")
            except UnicodeDecodeError as exc:
                raise InputError(f"{path}: not valid UTF-8 at byte offset {offset + exc.start}") from None
            offset += len(raw)


def _scan_rows(path: Path) -> List[str]:
    """
    Check every record's field count against the header and return the header.

    Line numbers are 1-based physical lines, header included. Blank lines
    are skipped the same way the frame reader skips them.
    """
    reader = csv.reader(_decoded_lines(path))
    header: Optional[List[str]] = None
    for row in reader:
        if not row:
            continue
        if header is None:
            header = row
            continue
        if len(row) != len(header):
            raise RaggedRowError(reader.line_num, f"{len(row)} fields, header has {len(header)}")
    if header is None:
        raise ColumnError(f"{path}: file has no header row")
    duplicated = sorted({n for n in header if header.count(n) > 1})
    if duplicated:
        raise ColumnError(f"{path}: duplicated column names {duplicated}")
    return header


def load_csv(path, label_column: str = LABEL_COLUMN) -> RawTable:
    """
    Read a CSV with a header row into a typed RawTable.

    A column is numeric when every non-missing cell parses as a number;
    empty strings and "nan" sentinels are missing.

    Raises:
        FileNotFoundError: path does not exist
        RaggedRowError: a row's field count differs from the header
        ColumnError: no header, duplicated names or missing label column
        InputError: the file is not UTF-8 text
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    _scan_rows(path)
    try:
        # index_col=False: never promote a column to the index on long rows
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False,
                            index_col=False, encoding="utf-8-sig", low_memory=False)
    except pd.errors.EmptyDataError:
        raise ColumnError(f"{path}: file has no header row") from None
    except pd.errors.ParserError as exc:
        found = re.search(r"line (\d+)", str(exc))
        raise RaggedRowError(int(found.group(1)) if found else -1, str(exc)) from None

    if label_column not in frame.columns:
        raise ColumnError(f"{path}: label column {label_column!r} not found")

    missing = frame.isin(MISSING_SENTINELS)
    kinds: Dict[str, str] = {}
    columns = {}
    for col in frame.columns:
        present = frame[col].where(~missing[col])
        if col == label_column:
            kinds[col] = CATEGORICAL
            columns[col] = present.astype(object).where(~missing[col], None)
            continue
        parsed = pd.to_numeric(present, errors="coerce")
        if parsed[~missing[col]].notna().all():
            kinds[col] = NUMERIC
            columns[col] = parsed.astype(np.float64)
        else:
            kinds[col] = CATEGORICAL
            columns[col] = present.astype(object).where(~missing[col], None)
    table = pd.DataFrame(columns, columns=list(frame.columns))
    logger.info("loaded %s: %d rows x %d columns", path, len(table), table.shape[1])
    return RawTable(table, kinds, label_column)


def clean(t: RawTable) -> RawTable:
    """
    Remove exact duplicate rows (first kept) and fill missing cells.

    Numeric gaps take the column median, categorical gaps the column mode
    (smallest value among ties). Rows without a label are dropped.

    Raises:
        ColumnError: a column has no values at all
    """
    frame = t.frame
    if len(frame):
        empty = [c for c in frame.columns if frame[c].isna().all()]
        if empty:
            raise ColumnError(f"column {empty[0]!r} has no values to fill from")
    before = len(frame)
    frame = frame.drop_duplicates(keep="first")
    unlabeled = frame[t.label_column].isna()
    if unlabeled.any():
        logger.warning("dropping %d rows without a label", int(unlabeled.sum()))
        frame = frame[~unlabeled]
    frame = frame.reset_index(drop=True).copy()
    for col in frame.columns:
        if not frame[col].isna().any():
            continue
        if t.kinds[col] == NUMERIC:
            frame[col] = frame[col].fillna(frame[col].median())
        else:
            frame[col] = frame[col].fillna(frame[col].mode().iloc[0])
    logger.info("clean: %d -> %d rows", before, len(frame))
    return RawTable(frame, dict(t.kinds), t.label_column)


def select_features(t: RawTable, drop_list: Sequence[str] = DROP_COLUMNS) -> RawTable:
    """
    Drop identifier-like and leakage-prone columns.

    Raises:
        ColumnError: an unknown column is listed, or the label column is listed
    """
    drop = list(dict.fromkeys(drop_list))
    if t.label_column in drop:
        raise ColumnError(f"label column {t.label_column!r} cannot be dropped")
    unknown = [c for c in drop if c not in t.frame.columns]
    if unknown:
        raise ColumnError(f"cannot drop unknown columns {unknown}")
    frame = t.frame.drop(columns=drop)
    kinds = {c: k for c, k in t.kinds.items() if c not in drop}
    return RawTable(frame, kinds, t.label_column)


def encode_labels_and_categoricals(t: RawTable, codec: Optional[LabelCodec] = None,
                                   onehot_columns: Sequence[str] = ()) -> EncodedTable:
    """
    Build the numeric model matrix and the label vector.

    Categorical columns get integer codes in first-appearance order; columns
    named in ``onehot_columns`` expand into one indicator per category
    instead. Labels go through the codec.

    Returns:
        EncodedTable with matrix, labels, codec and persisted encoders
    """
    codec = codec or LabelCodec.edge_iiot()
    unknown = [c for c in onehot_columns if c not in t.frame.columns or c == t.label_column]
    if unknown:
        raise ColumnError(f"cannot one-hot encode unknown columns {unknown}")
    columns = t.feature_columns()
    encoders: Dict[str, CategoryEncoder] = {}
    for col in columns:
        if col in onehot_columns or t.kinds[col] == CATEGORICAL:
            _, uniques = pd.factorize(_category_keys(t.frame[col]), sort=False)
            kind = "onehot" if col in onehot_columns else "label"
            encoders[col] = CategoryEncoder(col, kind, [str(u) for u in uniques])
    fe = FeatureEncoders(columns, {c: t.kinds[c] for c in columns}, encoders)
    matrix = fe.transform(t)
    labels = codec.encode_many(list(t.frame[t.label_column]))
    return EncodedTable(matrix, labels, codec, fe)


# ------------------------------------------------------------ standardization

def standardize_fit(train_matrix: np.ndarray) -> StandardizationStats:
    X = np.asarray(train_matrix, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDatasetError("standardization needs a non-empty 2-D training matrix")
    stats = StandardizationStats(X.mean(axis=0), X.std(axis=0))
    if stats.zero_std.any():
        logger.info("%d features have zero variance on the training split", int(stats.zero_std.sum()))
    return stats


def standardize_apply(matrix: np.ndarray, stats: StandardizationStats) -> np.ndarray:
    """(x - mean) / std per feature; zero-variance features map to 0."""
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(stats.mean):
        raise DimensionError(f"matrix {X.shape} does not match {len(stats.mean)} fitted features")
    zero = stats.zero_std
    out = (X - stats.mean) / np.where(zero, 1.0, stats.std)
    out[:, zero] = 0.0
    return out


# -------------------------------------------------------------------- splitting

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _class_name(codec: Optional[LabelCodec], label: int) -> str:
    return codec.names[label] if codec is not None and 0 <= label < len(codec) else str(label)


def stratified_indices(Y: np.ndarray, fraction: float, rng: SeededRng,
                       codec: Optional[LabelCodec] = None, min_left: int = 1) -> np.ndarray:
    """
    Per-class random selection of ``fraction`` of each class's rows.

    At least one row is selected and at least ``min_left`` rows are left
    out of every class present.
    """
    chosen = []
    for label in np.unique(Y):
        members = np.flatnonzero(Y == label)
        if len(members) < 1 + min_left:
            raise LabelError(
                f"class {_class_name(codec, int(label))} has {len(members)} row(s); need at least {1 + min_left}"
            )
        k = min(max(_round_half_up(len(members) * fraction), 1), len(members) - min_left)
        chosen.append(members[rng.permutation(len(members))[:k]])
    if not chosen:
        return np.zeros(0, dtype=np.int64)
    return np.sort(np.concatenate(chosen))


def stratified_split(X: np.ndarray, Y: np.ndarray, spec: SplitSpec,
                     codec: Optional[LabelCodec] = None) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Partition rows into train/test, per class when ``spec.stratified``.

    Raises:
        LabelError: a class has a single row
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.int64)
    codec = codec or LabelCodec.edge_iiot()
    if len(Y) == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    rng = SeededRng(spec.seed)
    if spec.stratified:
        test_idx = stratified_indices(Y, spec.test_fraction, rng, codec)
    else:
        k = min(max(_round_half_up(len(Y) * spec.test_fraction), 1), len(Y) - 1)
        test_idx = np.sort(rng.permutation(len(Y))[:k])
    train_idx = np.setdiff1d(np.arange(len(Y)), test_idx)
    return (LabeledDataset(X[train_idx], Y[train_idx], codec),
            LabeledDataset(X[test_idx], Y[test_idx], codec))


def stratified_subsample(X: np.ndarray, Y: np.ndarray, fraction: float, seed: int,
                         codec: Optional[LabelCodec] = None) -> np.ndarray:
    """Row indices of a seed-fixed per-class subsample keeping >= 2 rows per class."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"subsample fraction must be in (0, 1], got {fraction}")
    Y = np.asarray(Y, dtype=np.int64)
    if fraction == 1.0:
        return np.arange(len(Y))
    rng = SeededRng(seed).spawn(1)
    kept = []
    for label in np.unique(Y):
        members = np.flatnonzero(Y == label)
        k = min(len(members), max(2, _round_half_up(len(members) * fraction)))
        kept.append(members[rng.permutation(len(members))[:k]])
    return np.sort(np.concatenate(kept))


# --------------------------------------------------------------- full pipeline

@dataclass
class DatasetBundle:
    """Everything the train/evaluate commands need from preprocessing."""
    train: LabeledDataset
    test: LabeledDataset
    stats: StandardizationStats
    encoders: FeatureEncoders
    split: SplitSpec = field(default_factory=SplitSpec)
    label_column: str = LABEL_COLUMN
    drop_columns: List[str] = field(default_factory=list)
    onehot_columns: List[str] = field(default_factory=list)
    subsample_fraction: float = SUBSAMPLE_FRACTION
    extra: Dict[str, object] = field(default_factory=dict)

    @property
    def codec(self) -> LabelCodec:
        return self.train.codec

    @property
    def feature_names(self) -> List[str]:
        return self.encoders.feature_names

    def manifest(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "feature_width": self.train.width,
            "feature_names": self.feature_names,
            "train_shape": list(self.train.X.shape),
            "test_shape": list(self.test.X.shape),
            "codec": list(self.codec.names),
            "train_class_counts": self.train.class_counts().tolist(),
            "test_class_counts": self.test.class_counts().tolist(),
            "synthetic_rows": int(self.train.synthetic.sum()),
            "seed": self.split.seed,
            "split": asdict(self.split),
            "subsample_fraction": self.subsample_fraction,
            "label_column": self.label_column,
            "drop_columns": list(self.drop_columns),
            "onehot_columns": list(self.onehot_columns),
            "stats": self.stats.to_dict(),
            "encoders": self.encoders.to_dict(),
            **self.extra,
        }


def prepare_dataset(path, label_column: str = LABEL_COLUMN, drop_columns: Sequence[str] = DROP_COLUMNS,
                    onehot_columns: Sequence[str] = ONEHOT_COLUMNS, split: Optional[SplitSpec] = None,
                    subsample_fraction: float = SUBSAMPLE_FRACTION, codec: Optional[LabelCodec] = None,
                    expected_width: Optional[int] = FEATURE_DIM) -> DatasetBundle:
    """load -> clean -> select -> encode -> (subsample) -> split -> standardize."""
    split = split or SplitSpec()
    table = select_features(clean(load_csv(path, label_column)), drop_columns)
    encoded = encode_labels_and_categoricals(table, codec, onehot_columns)
    width = encoded.matrix.shape[1]
    if expected_width is not None and width != expected_width:
        logger.warning("encoded width is %d, expected %d; adjust the drop/one-hot lists", width, expected_width)
    X, Y = encoded.matrix, encoded.labels
    if subsample_fraction < 1.0:
        keep = stratified_subsample(X, Y, subsample_fraction, split.seed, encoded.codec)
        X, Y = X[keep], Y[keep]
        logger.info("subsampled %d rows (fraction %.3f)", len(Y), subsample_fraction)
    train_raw, test_raw = stratified_split(X, Y, split, encoded.codec)
    stats = standardize_fit(train_raw.X)
    train = LabeledDataset(standardize_apply(train_raw.X, stats), train_raw.y, encoded.codec)
    test = LabeledDataset(standardize_apply(test_raw.X, stats), test_raw.y, encoded.codec)
    logger.info("split: %d train / %d test rows, %d features", len(train), len(test), width)
    return DatasetBundle(
        train=train, test=test, stats=stats, encoders=encoded.encoders, split=split,
        label_column=label_column, drop_columns=list(drop_columns),
        onehot_columns=list(onehot_columns), subsample_fraction=subsample_fraction,
    )


BUNDLE_ARRAYS = ("X_train", "y_train", "synthetic_train", "X_test", "y_test")


def save_bundle(path, bundle: DatasetBundle, sidecars: Optional[Dict[str, Union[dict, str]]] = None) -> Path:
    """
    Write arrays as .npy plus manifest.json, atomically replacing ``path``.

    Sidecar dicts are written as JSON, strings as UTF-8 text.
    """
    arrays = {
        "X_train": bundle.train.X,
        "y_train": bundle.train.y,
        "synthetic_train": bundle.train.synthetic,
        "X_test": bundle.test.X,
        "y_test": bundle.test.y,
    }
    with atomic_directory(path) as staging:
        for name in BUNDLE_ARRAYS:
            np.save(staging / f"{name}.npy", arrays[name], allow_pickle=False)
        write_json(staging / "manifest.json", bundle.manifest())
        for name, payload in (sidecars or {}).items():
            if isinstance(payload, str):
                atomic_write_text(staging / name, payload)
            else:
                write_json(staging / name, payload)
    logger.info("wrote bundle %s", path)
    return Path(path)


def load_bundle(path) -> DatasetBundle:
    """
    Read a bundle written by save_bundle.

    Raises:
        BundleError: missing files or a foreign format/version
    """
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise BundleError(f"{root}: no manifest.json (run preprocess first)")
    manifest = read_json(manifest_path)
    if manifest.get("format") != BUNDLE_FORMAT or manifest.get("version") != BUNDLE_VERSION:
        raise BundleError(f"{root}: unsupported bundle format {manifest.get('format')!r} v{manifest.get('version')}")
    arrays = {}
    for name in BUNDLE_ARRAYS:
        file = root / f"{name}.npy"
        if not file.is_file():
            raise BundleError(f"{root}: missing {file.name}")
        arrays[name] = np.load(file, allow_pickle=False)
    width = manifest.get("feature_width")
    for name in ("X_train", "X_test"):
        if not validate_matrix(arrays[name], width):
            raise BundleError(f"{root}: {name}.npy is not a finite matrix with {width} columns")
    codec = LabelCodec(tuple(manifest["codec"]))
    known = {"format", "version", "feature_width", "feature_names", "train_shape", "test_shape",
             "codec", "train_class_counts", "test_class_counts", "synthetic_rows", "seed", "split",
             "subsample_fraction", "label_column", "drop_columns", "onehot_columns", "stats", "encoders"}
    return DatasetBundle(
        train=LabeledDataset(arrays["X_train"], arrays["y_train"], codec, arrays["synthetic_train"]),
        test=LabeledDataset(arrays["X_test"], arrays["y_test"], codec),
        stats=StandardizationStats.from_dict(manifest["stats"]),
        encoders=FeatureEncoders.from_dict(manifest["encoders"]),
        split=SplitSpec(**manifest["split"]),
        label_column=manifest["label_column"],
        drop_columns=list(manifest["drop_columns"]),
        onehot_columns=list(manifest["onehot_columns"]),
        subsample_fraction=manifest["subsample_fraction"],
        extra={k: v for k, v in manifest.items() if k not in known},
    )
