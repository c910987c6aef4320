"""
Confusion-matrix heatmaps and training curves rendered using PIL.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .config import (
    CELL_SIZE, COLOR_GRID_LINE, COLOR_HEAT_HIGH, COLOR_HEAT_LOW, COLOR_TEST,
    COLOR_TRAIN, CURVE_SIZE, LABEL_MARGIN,
)
from .metrics import TrainingHistory

Color = Tuple[int, int, int]


def _load_font(size: int):
    try:
        return ImageFont.truetype("/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf", size)
    except OSError:
        return ImageFont.load_default()


def blend(low: Color, high: Color, t: float) -> Color:
    """Linear interpolation between two RGB colors, t in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    return tuple(int(round(a + (b - a) * t)) for a, b in zip(low, high))


class ReportRenderer:
    """Renders evaluation artifacts as images."""

    def __init__(self, cell_size: int = CELL_SIZE, margin: int = LABEL_MARGIN,
                 curve_size: Tuple[int, int] = CURVE_SIZE, font_size: int = 11):
        """
        Initialize renderer.

        Args:
            cell_size: Size of each confusion cell in pixels
            margin: Room left of and above the matrix for class names
            curve_size: (width, height) of one curve panel
            font_size: Label font size
        """
        self.cell_size = cell_size
        self.margin = margin
        self.curve_size = curve_size
        self.font = _load_font(font_size)

    def render_confusion(self, matrix: np.ndarray, names: Sequence[str]) -> Image.Image:
        """
        Render a confusion matrix as a row-normalized heatmap with counts.

        Args:
            matrix: Square count matrix, rows are true classes
            names: Class names in matrix order

        Returns:
            PIL Image of the heatmap
        """
        matrix = np.asarray(matrix)
        n = matrix.shape[0]
        side = self.margin + n * self.cell_size + 1
        img = Image.new("RGB", (side, side), "white")
        draw = ImageDraw.Draw(img)

        row_totals = matrix.sum(axis=1)
        for row in range(n):
            for col in range(n):
                x1 = self.margin + col * self.cell_size
                y1 = self.margin + row * self.cell_size
                x2 = x1 + self.cell_size
                y2 = y1 + self.cell_size
                share = matrix[row, col] / row_totals[row] if row_totals[row] else 0.0
                fill = blend(COLOR_HEAT_LOW, COLOR_HEAT_HIGH, share)
                draw.rectangle([x1, y1, x2, y2], fill=fill, outline=COLOR_GRID_LINE)
                if matrix[row, col]:
                    text_color = "white" if share > 0.5 else "black"
                    draw.text((x1 + 2, y1 + self.cell_size // 3), str(int(matrix[row, col])),
                              fill=text_color, font=self.font)

        for i, name in enumerate(names):
            label = name[:20]
            y = self.margin + i * self.cell_size + self.cell_size // 3
            draw.text((4, y), label, fill="black", font=self.font)
            # column headers are written vertically
            header = Image.new("RGB", (self.margin - 8, self.cell_size), "white")
            ImageDraw.Draw(header).text((2, self.cell_size // 3), label, fill="black", font=self.font)
            rotated = header.rotate(90, expand=True)
            img.paste(rotated, (self.margin + i * self.cell_size, 4))
        return img

    def render_panel(self, series: List[Tuple[str, Sequence[Optional[float]], Color]],
                     title: str) -> Image.Image:
        """Plot one or more per-epoch series as polylines on a shared axis."""
        width, height = self.curve_size
        pad = 36
        img = Image.new("RGB", (width, height), "white")
        draw = ImageDraw.Draw(img)
        draw.rectangle([pad, pad, width - pad, height - pad], outline=COLOR_GRID_LINE)
        draw.text((pad, 8), title, fill="black", font=self.font)

        values = [v for _, ys, _ in series for v in ys if v is not None]
        if not values:
            return img
        low, high = min(values), max(values)
        if high == low:
            high = low + 1.0
        epochs = max(len(ys) for _, ys, _ in series)
        span_x = max(epochs - 1, 1)

        def point(i: int, v: float) -> Tuple[float, float]:
            x = pad + (width - 2 * pad) * i / span_x
            y = height - pad - (height - 2 * pad) * (v - low) / (high - low)
            return x, y

        draw.text((4, pad - 6), f"{high:.3f}", fill="black", font=self.font)
        draw.text((4, height - pad - 6), f"{low:.3f}", fill="black", font=self.font)
        for k, (label, ys, color) in enumerate(series):
            pts = [point(i, v) for i, v in enumerate(ys) if v is not None]
            if len(pts) > 1:
                draw.line(pts, fill=color, width=2)
            for x, y in pts:
                draw.ellipse([x - 2, y - 2, x + 2, y + 2], fill=color)
            draw.text((width - pad - 80, pad + 4 + 14 * k), label, fill=color, font=self.font)
        return img

    def render_curves(self, history: TrainingHistory) -> Image.Image:
        """Loss and accuracy panels side by side, train vs test."""
        loss = self.render_panel([
            ("train", history.column("train_loss"), COLOR_TRAIN),
            ("test", history.column("test_loss"), COLOR_TEST),
        ], "loss")
        acc = self.render_panel([
            ("train", history.column("train_acc"), COLOR_TRAIN),
            ("test", history.column("test_acc"), COLOR_TEST),
        ], "accuracy")
        return side_by_side([loss, acc])


def side_by_side(images: Sequence[Image.Image], padding: int = 10) -> Image.Image:
    """
    Paste images in a horizontal row.

    Args:
        images: Images to combine
        padding: Spacing between and around images

    Returns:
        Combined image
    """
    if not images:
        return Image.new("RGB", (padding, padding), "white")
    total_width = sum(img.width for img in images) + (len(images) + 1) * padding
    max_height = max(img.height for img in images) + 2 * padding
    combined = Image.new("RGB", (total_width, max_height), "white")
    x_offset = padding
    for img in images:
        combined.paste(img, (x_offset, (max_height - img.height) // 2))
        x_offset += img.width + padding
    return combined
