"""Writing results to disk. Every file goes through a temp file and a rename."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

from .dataset import Dataset
from .forest import feature_importances, model_to_dict
from .pipeline import SegmentationResult, cluster_profiles
from .plotting import save_embedding_svg

SEGMENT_FILES = (
    "embedding.csv",
    "labels.csv",
    "profiles.csv",
    "importances.csv",
    "model.json",
    "embedding.svg",
    "run.json",
)


@contextmanager
def atomic_path(path: str | Path):
    """Yield a temporary sibling path that replaces ``path`` on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=path.suffix)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_text(path: str | Path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text, encoding="utf-8")


def write_json(path: str | Path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def embedding_csv(row_ids, coords) -> str:
    return _csv([("row_id", "x", "y")] + [(r, repr(float(x)), repr(float(y))) for r, (x, y) in zip(row_ids, coords)])


def labels_csv(row_ids, labels) -> str:
    return _csv([("row_id", "cluster_label")] + [(r, int(k)) for r, k in zip(row_ids, labels)])


def importances_csv(model) -> str:
    return _csv([("feature", "score")] + [(name, repr(score)) for name, score in feature_importances(model)])


def write_segmentation(result: SegmentationResult, out_dir: str | Path, original: Dataset,
                       run_record: dict, title: str | None = None) -> list[Path]:
    """Write the full set of segment artifacts into ``out_dir``.

    When the model saw standardized features, ``profiles_original.csv`` repeats
    the profiles in the input's own units.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = original.row_ids
    a = result.assignment
    written = []

    def put(name, text):
        write_text(out / name, text)
        written.append(out / name)

    put("embedding.csv", embedding_csv(ids, result.embedding.coords))
    put("labels.csv", labels_csv(ids, a.labels))
    put("profiles.csv", result.profiles.to_csv())
    if result.features is not original and run_record.get("pipeline", {}).get("standardize_input"):
        put("profiles_original.csv", cluster_profiles(original.values, original.feature_names, a).to_csv())
    put("importances.csv", importances_csv(result.model))
    put("model.json", json.dumps(model_to_dict(result.model), separators=(",", ":")))
    with atomic_path(out / "embedding.svg") as tmp:
        save_embedding_svg(tmp, result.embedding.coords, a.labels, a.cluster_sizes, title)
    written.append(out / "embedding.svg")
    record = dict(run_record)
    record["result"] = {
        "n_points": a.n_points,
        "n_clusters": a.n_clusters,
        "n_non_singleton": a.n_non_singleton(),
        "cluster_sizes": list(a.cluster_sizes),
        "epsilon_used": a.epsilon_used,
        "final_kl": result.embedding.final_kl,
    }
    write_json(out / "run.json", record)
    written.append(out / "run.json")
    return written
