"""Heatmap and parsing panels written as PNG grids."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import torch  # noqa: E402
import torch.nn.functional as F  # noqa: E402
from numpy.typing import NDArray  # noqa: E402

from .const import INTERVENTION_RANDOM_STYLE, NUM_PARTS, PART_NAMES  # noqa: E402
from .data import image_tensor  # noqa: E402
from .evaluation import intervened_scenes  # noqa: E402
from .metrics import InstancePrediction, merge_instances  # noqa: E402
from .model import CausalParser, ParserOutput  # noqa: E402
from .synthscenes import LabeledScene  # noqa: E402

_LOGGER = logging.getLogger(__name__)

# Background plus one color per part
LABEL_COLORS = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.95, 0.75, 0.2],
        [0.2, 0.55, 0.9],
        [0.9, 0.3, 0.3],
        [0.3, 0.8, 0.4],
    ],
    dtype=np.float32,
)


def colorize_labels(labels: NDArray[np.int64]) -> NDArray[np.float32]:
    return LABEL_COLORS[np.clip(labels, 0, NUM_PARTS)]


def _upsample(values: torch.Tensor, size: int) -> NDArray[np.float32]:
    """(h, w) tensor to a (size, size) float map, nearest neighbour."""
    grid = values.detach().float()[None, None]
    return F.interpolate(grid, size=(size, size), mode="nearest")[0, 0].cpu().numpy()


def _labels(logits: torch.Tensor, size: int) -> NDArray[np.int64]:
    up = F.interpolate(logits.detach().float()[None], size=(size, size), mode="nearest")[0]
    return up.argmax(dim=0).cpu().numpy()


def _grid(panels: list[tuple[str, NDArray, str | None]], path: Path, rows: int = 1) -> Path:
    """Lay out (title, array, cmap) panels and save them."""
    cols = int(np.ceil(len(panels) / rows))
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.4 * rows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for ax, (title, array, cmap) in zip(axes.ravel(), panels):
        if cmap is None:
            ax.imshow(np.clip(array, 0.0, 1.0))
        else:
            ax.imshow(array, cmap=cmap)
        ax.set_title(title, fontsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def best_query(output: ParserOutput, batch_index: int = 0) -> int:
    return int(output.instances.person_prob[batch_index].argmax())


# ── Panels ───────────────────────────────────────────────────────────


def affinity_panel(
    scene: LabeledScene, output: ParserOutput, query: int, path: Path, batch_index: int = 0
) -> Path:
    """Image, the per-part affinity maps and the norm of both representations."""
    size = scene.size
    panels: list[tuple[str, NDArray, str | None]] = [(f"{scene.style}", scene.image, None)]
    if output.reps is not None:
        for part, name in enumerate(PART_NAMES):
            affinity = output.reps.affinity[batch_index, query, part]
            panels.append((f"affinity {name}", _upsample(affinity, size), "magma"))
        content = output.reps.content[batch_index, query].norm(dim=0)
        context = output.reps.context[batch_index, query].norm(dim=0)
        panels.append(("content norm", _upsample(content, size), "viridis"))
        panels.append(("context norm", _upsample(context, size), "viridis"))
    else:
        norm = output.inst_features[batch_index, query].norm(dim=0)
        panels.append(("feature norm", _upsample(norm, size), "viridis"))
    return _grid(panels, path)


def branch_panel(
    scene: LabeledScene, output: ParserOutput, query: int, path: Path, batch_index: int = 0
) -> Path:
    """Parsing of the content branch, the context branch and their fusion."""
    size = scene.size
    panels: list[tuple[str, NDArray, str | None]] = [
        ("image", scene.image, None),
        ("ground truth", colorize_labels(scene.semantic_label_map()), None),
    ]
    for title, masks in (("content", output.content_masks), ("context", output.context_masks)):
        if masks is not None:
            labels = _labels(masks.logits[batch_index, query], size)
            panels.append((title, colorize_labels(labels), None))
    fused = _labels(output.masks.logits[batch_index, query], size)
    panels.append(("fused", colorize_labels(fused), None))
    return _grid(panels, path)


def representation_panel(
    scene: LabeledScene,
    view: LabeledScene,
    original: ParserOutput,
    intervened: ParserOutput,
    query: int,
    path: Path,
) -> Path:
    """Content representation of the same query on an original and an intervened image."""
    size = scene.size
    panels: list[tuple[str, NDArray, str | None]] = [
        (scene.style, scene.image, None),
        (view.style, view.image, None),
    ]
    for title, output in (("original", original), ("intervened", intervened)):
        rep = output.reps.content if output.reps is not None else output.inst_features
        panels.append((f"content {title}", _upsample(rep[0, query].norm(dim=0), size), "viridis"))
    return _grid(panels, path)


def comparison_panel(
    scenes: list[LabeledScene],
    predictions: dict[str, list[list[InstancePrediction]]],
    path: Path,
) -> Path:
    """One row per scene: image, ground truth, then each model's merged parsing."""
    panels: list[tuple[str, NDArray, str | None]] = []
    for index, scene in enumerate(scenes):
        shape = scene.image.shape[:2]
        panels.append(("image", scene.image, None))
        panels.append(("ground truth", colorize_labels(scene.semantic_label_map()), None))
        for name, preds in predictions.items():
            panels.append((name, colorize_labels(merge_instances(preds[index], shape)), None))
    return _grid(panels, path, rows=max(len(scenes), 1))


@torch.no_grad()
def dump_vis(
    model: CausalParser,
    scenes: list[LabeledScene],
    out_dir: str | Path,
    *,
    max_scenes: int = 4,
    device: str | torch.device = "cpu",
) -> list[Path]:
    """Affinity, branch and invariance panels for the first ``max_scenes`` scenes."""
    out_dir = Path(out_dir)
    model.eval()
    written = []
    chosen = [scene for scene in scenes if scene.instances][:max_scenes]
    views = intervened_scenes(chosen, INTERVENTION_RANDOM_STYLE, seed=0)
    for index, (scene, view) in enumerate(zip(chosen, views)):
        output = model(image_tensor([scene], device))
        view_output = model(image_tensor([view], device))
        query = best_query(output)
        stem = f"scene{index:02d}_{scene.scene_seed}"
        written.append(affinity_panel(scene, output, query, out_dir / f"{stem}_affinity.png"))
        written.append(branch_panel(scene, output, query, out_dir / f"{stem}_branches.png"))
        written.append(
            representation_panel(
                scene, view, output, view_output, query, out_dir / f"{stem}_invariance.png"
            )
        )
    _LOGGER.info("Wrote %d visualization panels to %s", len(written), out_dir)
    return written
