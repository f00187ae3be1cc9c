"""Dataset manifests: per-class counts, proportions, and file lists.

Persisted as a UTF-8 JSON list of ``{"class", "count", "proportion",
"files"}`` objects; file paths are relative to the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParameterError

# printed per-class counts of the source dataset (7 classes, 15,063 images)
SOURCE_CLASS_COUNTS = {
    "anthracnose": 4566,
    "leaf_blight": 3018,
    "blight_disease": 1711,
    "tea_wheel_spot": 276,
    "tea_white_star": 1703,
    "tea_coal": 585,
    "mechanical_damage": 3204,
}

# printed per-class counts after augmentation (28,044 images)
AUGMENTED_CLASS_COUNTS = {
    "anthracnose": 7076,
    "leaf_blight": 4482,
    "blight_disease": 4022,
    "tea_wheel_spot": 1834,
    "tea_white_star": 3806,
    "tea_coal": 2038,
    "mechanical_damage": 4786,
}

# printed proportions, for fixture validation
SOURCE_CLASS_PROPORTIONS = {
    "anthracnose": 0.303,
    "leaf_blight": 0.200,
    "blight_disease": 0.114,
    "tea_wheel_spot": 0.018,
    "tea_white_star": 0.113,
    "tea_coal": 0.039,
    "mechanical_damage": 0.213,
}

AUGMENTED_CLASS_PROPORTIONS = {
    "anthracnose": 0.252,
    "leaf_blight": 0.160,
    "blight_disease": 0.143,
    "tea_wheel_spot": 0.065,
    "tea_white_star": 0.136,
    "tea_coal": 0.073,
    "mechanical_damage": 0.171,
}


@dataclass
class ClassEntry:
    name: str
    count: int
    proportion: float = 0.0
    files: list[str] = field(default_factory=list)


@dataclass
class DatasetManifest:
    classes: list[ClassEntry]

    def total(self) -> int:
        return sum(e.count for e in self.classes)

    def entry(self, name: str) -> ClassEntry:
        for e in self.classes:
            if e.name == name:
                return e
        raise KeyError(name)

    def class_names(self) -> list[str]:
        return [e.name for e in self.classes]

    def recompute_proportions(self) -> "DatasetManifest":
        total = self.total()
        for e in self.classes:
            e.proportion = e.count / total if total else 0.0
        return self

    def validate(self, tol_sum: float = 0.005, tol_each: float = 0.001) -> None:
        """Check the count/proportion consistency invariants."""
        total = self.total()
        psum = sum(e.proportion for e in self.classes)
        if abs(psum - 1.0) > tol_sum:
            raise ParameterError(f"proportions sum to {psum:.4f}, expected 1 +/- {tol_sum}")
        for e in self.classes:
            if e.count < 0:
                raise ParameterError(f"negative count for class {e.name}")
            exact = e.count / total if total else 0.0
            if abs(e.proportion - exact) > tol_each:
                raise ParameterError(
                    f"class {e.name}: proportion {e.proportion:.4f} != count/total {exact:.4f}"
                )

    def save(self, path: str | Path) -> None:
        doc = [
            {"class": e.name, "count": e.count, "proportion": e.proportion, "files": e.files}
            for e in self.classes
        ]
        Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return DatasetManifest(
            classes=[
                ClassEntry(
                    name=item["class"],
                    count=int(item["count"]),
                    proportion=float(item.get("proportion", 0.0)),
                    files=list(item.get("files", [])),
                )
                for item in doc
            ]
        )

    @staticmethod
    def from_counts(counts: dict[str, int]) -> "DatasetManifest":
        m = DatasetManifest(
            classes=[ClassEntry(name=k, count=v) for k, v in counts.items()]
        )
        return m.recompute_proportions()

    @staticmethod
    def from_files(files_by_class: dict[str, list[str]]) -> "DatasetManifest":
        m = DatasetManifest(
            classes=[
                ClassEntry(name=k, count=len(v), files=list(v))
                for k, v in files_by_class.items()
            ]
        )
        return m.recompute_proportions()


def source_manifest() -> DatasetManifest:
    """The pre-augmentation dataset as printed (counts only)."""
    return DatasetManifest.from_counts(SOURCE_CLASS_COUNTS)


def augmented_manifest() -> DatasetManifest:
    """The post-augmentation dataset as printed (counts only)."""
    return DatasetManifest.from_counts(AUGMENTED_CLASS_COUNTS)
