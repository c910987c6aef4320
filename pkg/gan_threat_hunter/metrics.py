"""
Confusion matrix, per-class precision/recall/F1, averaged report and training history.
"""
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .config import HISTORY_COLUMNS, NUM_CLASSES, REPORT_FORMAT, REPORT_VERSION
from .errors import BundleError, ConfigError, DimensionError, EmptyDatasetError, LabelError
from .utils import staged_writes

logger = logging.getLogger(__name__)

EMIT_FORMATS = ("json", "txt", "csv", "png")


@dataclass(eq=False)
class ConfusionCounts:
    """Square count matrix; rows are true classes, columns predicted classes."""
    matrix: np.ndarray

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionCounts) and np.array_equal(self.matrix, other.matrix)

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    @property
    def support(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @property
    def fp(self) -> np.ndarray:
        return self.matrix.sum(axis=0) - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.matrix.sum(axis=1) - self.tp

    @property
    def tn(self) -> np.ndarray:
        return self.total - self.tp - self.fp - self.fn


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvaluationReport:
    """Per-class metrics in codec order plus accuracy, macro and weighted averages."""
    classes: List[ClassMetrics]
    accuracy: float
    macro: Dict[str, float]
    weighted: Dict[str, float]
    confusion: ConfusionCounts

    @property
    def class_names(self) -> List[str]:
        return [c.name for c in self.classes]

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "classes": [
                {"name": c.name, "precision": c.precision, "recall": c.recall,
                 "f1": c.f1, "support": c.support}
                for c in self.classes
            ],
            "accuracy": self.accuracy,
            "macro_avg": dict(self.macro),
            "weighted_avg": dict(self.weighted),
            "total": self.confusion.total,
            "confusion": self.confusion.matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        if d.get("format") != REPORT_FORMAT or d.get("version") != REPORT_VERSION:
            raise BundleError(f"unsupported report format {d.get('format')!r} v{d.get('version')}")
        return cls(
            classes=[ClassMetrics(**c) for c in d["classes"]],
            accuracy=d["accuracy"],
            macro=dict(d["macro_avg"]),
            weighted=dict(d["weighted_avg"]),
            confusion=ConfusionCounts(np.asarray(d["confusion"], dtype=np.int64)),
        )

    def to_text(self, digits: int = 2) -> str:
        """Aligned table with one row per class and accuracy/macro/weighted rows."""
        labels = self.class_names + ["weighted avg"]
        width = max(len(s) for s in labels)
        head = ("precision", "recall", "f1-score", "support")
        lines = [" " * width + " " + " ".join(f"{h:>9}" for h in head), ""]
        fmt = f"{{:>{width}}} {{:>9.{digits}f}} {{:>9.{digits}f}} {{:>9.{digits}f}} {{:>9}}"
        for c in self.classes:
            lines.append(fmt.format(c.name, c.precision, c.recall, c.f1, c.support))
        lines.append("")
        total = self.confusion.total
        lines.append(f"{'accuracy':>{width}} {'':>9} {'':>9} {self.accuracy:>9.{digits}f} {total:>9}")
        for label, avg in (("macro avg", self.macro), ("weighted avg", self.weighted)):
            lines.append(fmt.format(label, avg["precision"], avg["recall"], avg["f1"], total))
        return "\n".join(lines) + "\n"


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: Optional[float] = None
    test_acc: Optional[float] = None

    def describe(self) -> str:
        text = f"train_loss={self.train_loss:.4f} train_acc={self.train_acc:.4f}"
        if self.test_loss is not None:
            text += f" test_loss={self.test_loss:.4f} test_acc={self.test_acc:.4f}"
        return text


@dataclass
class TrainingHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def column(self, name: str) -> List[Optional[float]]:
        return [getattr(r, name) for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        rows = [[getattr(r, c) for c in HISTORY_COLUMNS] for r in self.records]
        frame = pd.DataFrame(rows, columns=list(HISTORY_COLUMNS))
        return frame.astype({c: "float64" for c in HISTORY_COLUMNS[1:]})

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, path) -> "TrainingHistory":
        frame = pd.read_csv(path)
        if list(frame.columns) != list(HISTORY_COLUMNS):
            raise BundleError(f"{path}: expected history columns {HISTORY_COLUMNS}")
        history = cls()
        for row in frame.itertuples(index=False):
            values = [None if pd.isna(v) else float(v) for v in row[1:]]
            history.append(EpochRecord(int(row[0]), *values))
        return history


def confusion(y_true, y_pred, num_classes: int = NUM_CLASSES) -> ConfusionCounts:
    """
    Count (true, predicted) pairs into a num_classes x num_classes matrix.

    Raises:
        DimensionError: the vectors differ in length
        LabelError: a label is outside 0..num_classes-1
    """
    t = np.asarray(y_true, dtype=np.int64).reshape(-1)
    p = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise DimensionError(f"y_true has {t.size} labels, y_pred has {p.size}")
    for name, v in (("y_true", t), ("y_pred", p)):
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise LabelError(f"{name} holds labels outside 0..{num_classes - 1}")
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (t, p), 1)
    return ConfusionCounts(matrix)


def accuracy(c: ConfusionCounts) -> float:
    """Trace over total."""
    if c.total == 0:
        raise EmptyDatasetError("accuracy of an empty confusion matrix")
    return float(np.trace(c.matrix) / c.total)


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den else 0.0


def precision_recall_f1(c: ConfusionCounts, class_idx: int, name: Optional[str] = None) -> ClassMetrics:
    """One-vs-rest metrics for one class; every 0/0 is reported as 0."""
    if not 0 <= class_idx < c.num_classes:
        raise LabelError(f"class index {class_idx} outside 0..{c.num_classes - 1}")
    tp = int(c.tp[class_idx])
    precision = _ratio(tp, tp + int(c.fp[class_idx]))
    recall = _ratio(tp, tp + int(c.fn[class_idx]))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return ClassMetrics(
        name=name if name is not None else str(class_idx),
        precision=precision,
        recall=recall,
        f1=f1,
        support=int(c.support[class_idx]),
    )


def build_report(c: ConfusionCounts, codec) -> EvaluationReport:
    """
    Assemble the full report in codec order.

    Args:
        c: Confusion counts
        codec: Anything with a ``names`` sequence matching the matrix size

    Returns:
        EvaluationReport with macro (unweighted) and weighted (by support) averages
    """
    names = list(codec.names)
    if len(names) != c.num_classes:
        raise DimensionError(f"codec has {len(names)} classes, confusion matrix {c.num_classes}")
    classes = [precision_recall_f1(c, i, name) for i, name in enumerate(names)]
    keys = ("precision", "recall", "f1")
    values = np.array([[getattr(m, k) for k in keys] for m in classes])
    support = c.support.astype(np.float64)
    macro = {k: float(values[:, j].mean()) for j, k in enumerate(keys)}
    if support.sum() > 0:
        weighted = {k: float((values[:, j] * support).sum() / support.sum()) for j, k in enumerate(keys)}
    else:
        weighted = {k: 0.0 for k in keys}
    acc = accuracy(c) if c.total else 0.0
    return EvaluationReport(classes, acc, macro, weighted, c)


def confusion_frame(c: ConfusionCounts, names: Sequence[str]) -> pd.DataFrame:
    frame = pd.DataFrame(c.matrix, index=list(names), columns=list(names))
    frame.index.name = "true\\pred"
    return frame


def emit(report: EvaluationReport, history: Optional[TrainingHistory], out_dir,
         formats: Sequence[str] = EMIT_FORMATS, comparison: Optional[dict] = None) -> List[Path]:
    """
    Write report artifacts into ``out_dir``; byte-stable for identical inputs.

    Files: report.json, report.txt, confusion.csv, history.csv,
    confusion.png and curves.png, depending on ``formats``, plus
    comparison.json when a baseline comparison is given. All files are
    rendered first and replaced together.

    Returns:
        Paths written, in a fixed order
    """
    unknown = [f for f in formats if f not in EMIT_FORMATS]
    if unknown:
        raise ConfigError(f"unknown report formats {unknown}; choose from {EMIT_FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with staged_writes() as stage:
        def put_png(name: str, image) -> None:
            buffer = io.BytesIO()
            image.save(buffer, format="PNG")
            stage.write_bytes(out / name, buffer.getvalue())

        if "json" in formats:
            stage.write_text(out / "report.json", json.dumps(report.to_dict(), indent=2) + "\n")
            if comparison is not None:
                stage.write_text(out / "comparison.json", json.dumps(comparison, indent=2) + "\n")
        if "txt" in formats:
            stage.write_text(out / "report.txt", report.to_text())
        if "csv" in formats:
            stage.write_text(out / "confusion.csv", confusion_frame(report.confusion, report.class_names)
                             .to_csv(lineterminator="\n"))
            if history is not None:
                stage.write_text(out / "history.csv", history.to_csv())
        if "png" in formats:
            from .renderer import ReportRenderer

            renderer = ReportRenderer()
            put_png("confusion.png", renderer.render_confusion(report.confusion.matrix, report.class_names))
            if history is not None and len(history):
                put_png("curves.png", renderer.render_curves(history))
        written = stage.targets
    logger.info("wrote %d report artifacts to %s", len(written), out)
    return written
