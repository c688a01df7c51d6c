"""Dataset manifest: CSV loading, validation, and label/demographic semantics.

A manifest is a fixed-header CSV, one row per participant utterance:

    uid,audio_path,asr_path,age,sex,language,task,label

Fields never contain commas (no quoting). Paths are relative to the
manifest's ``root`` directory. Labels are the three cognitive-status classes
plus UNKNOWN, which is legal on disk but rejected by training/evaluation
entry points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ScbError

HEADER = "uid,audio_path,asr_path,age,sex,language,task,label"


class Label(Enum):
    HC = 0
    MCI = 1
    AD = 2
    UNKNOWN = 3


class Sex(Enum):
    FEMALE = "female"
    MALE = "male"


# Downstream feature encoding: female -> 1, male -> 0.
SEX_BIT = {Sex.FEMALE: 1, Sex.MALE: 0}

CLASS_ORDER = (Label.HC, Label.MCI, Label.AD)


class ManifestError(ScbError):
    pass


class MissingHeader(ManifestError):
    def __init__(self, got: str):
        super().__init__(f"manifest must start with header {HEADER!r}, got {got!r}")


class DuplicateUid(ManifestError):
    def __init__(self, uid: str):
        self.uid = uid
        super().__init__(f"duplicate uid {uid!r}")


class BadField(ManifestError):
    def __init__(self, row: int, column: str, reason: str):
        self.row = row
        self.column = column
        self.reason = reason
        super().__init__(f"row {row}, column {column!r}: {reason}")


class TooFewRecords(ManifestError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    uid: str
    audio_path: str
    asr_path: str | None
    age: float
    sex: Sex
    language: str
    task: str
    label: Label


@dataclass
class Manifest:
    records: list[SampleRecord] = field(default_factory=list)
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def uids(self) -> list[str]:
        return [r.uid for r in self.records]

    def by_uid(self) -> dict[str, SampleRecord]:
        return {r.uid: r for r in self.records}

    def resolve(self, relpath: str) -> Path:
        return self.root / relpath


def _parse_row(row_no: int, line: str) -> SampleRecord:
    parts = line.split(",")
    if len(parts) != 8:
        raise BadField(row_no, "*", f"expected 8 fields, got {len(parts)}")
    uid, audio_path, asr_path, age_s, sex_s, language, task, label_s = parts

    if not uid:
        raise BadField(row_no, "uid", "empty uid")
    if not audio_path:
        raise BadField(row_no, "audio_path", "empty audio path")
    try:
        age = float(age_s)
    except ValueError:
        raise BadField(row_no, "age", f"not a number: {age_s!r}") from None
    if not math.isfinite(age) or not (0.0 <= age <= 130.0):
        raise BadField(row_no, "age", f"out of range [0, 130]: {age_s}")
    try:
        sex = Sex(sex_s.lower())
    except ValueError:
        raise BadField(row_no, "sex", f"expected female|male, got {sex_s!r}") from None
    if len(language) != 2 or not language.isalpha() or not language.islower():
        raise BadField(row_no, "language", f"not a lowercase ISO-639-1 tag: {language!r}")
    try:
        label = Label[label_s.upper()]
    except KeyError:
        raise BadField(row_no, "label", f"expected HC|MCI|AD|UNKNOWN, got {label_s!r}") from None

    return SampleRecord(
        uid=uid,
        audio_path=audio_path,
        asr_path=asr_path or None,
        age=age,
        sex=sex,
        language=language,
        task=task,
        label=label,
    )


def parse_manifest(path: str | Path) -> Manifest:
    """Load and validate a manifest CSV. Record order is file order."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.replace("\r\n", "\n").split("\n")
    if not lines or lines[0] != HEADER:
        raise MissingHeader(lines[0] if lines else "")

    records: list[SampleRecord] = []
    seen: set[str] = set()
    for row_no, line in enumerate(lines[1:], start=1):
        if line == "":
            continue
        rec = _parse_row(row_no, line)
        if rec.uid in seen:
            raise DuplicateUid(rec.uid)
        seen.add(rec.uid)
        records.append(rec)
    return Manifest(records=records, root=path.parent)


def serialize_manifest(m: Manifest) -> str:
    """Render a manifest back to CSV text (record order preserved).

    The format supports no quoting, so fields must not contain commas or
    newlines.
    """
    lines = [HEADER]
    for r in m.records:
        age = repr(r.age)
        if age.endswith(".0"):
            age = age[:-2]
        fields = [r.uid, r.audio_path, r.asr_path or "", age, r.sex.value,
                  r.language, r.task, r.label.name]
        for value in fields:
            if "," in value or "\n" in value or "\r" in value:
                raise ManifestError(f"field {value!r} contains a separator; not serializable")
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def write_manifest(m: Manifest, path: str | Path) -> None:
    Path(path).write_text(serialize_manifest(m), encoding="utf-8")


def class_counts(m: Manifest) -> dict[Label, int]:
    """Exact per-label record counts; UNKNOWN counted separately."""
    counts = {label: 0 for label in Label}
    for r in m.records:
        counts[r.label] += 1
    return counts


def demographic_stats(m: Manifest) -> dict:
    """Mean/std of age (sample std, n-1 denominator) and sex counts."""
    if len(m.records) < 2:
        raise TooFewRecords(f"need >= 2 records, got {len(m.records)}")
    ages = [r.age for r in m.records]
    n = len(ages)
    mean = sum(ages) / n
    var = sum((a - mean) ** 2 for a in ages) / (n - 1)
    sex_counts = {Sex.FEMALE: 0, Sex.MALE: 0}
    for r in m.records:
        sex_counts[r.sex] += 1
    return {"age_mean": mean, "age_std": math.sqrt(var), "sex_counts": sex_counts}


def labeled_uids(m: Manifest) -> dict[str, Label]:
    """uid -> label for every record, erroring on UNKNOWN.

    Training/evaluation entry points call this; UNKNOWN labels are legal in
    the file but not in a benchmark run.
    """
    unknown = [r.uid for r in m.records if r.label is Label.UNKNOWN]
    if unknown:
        raise ManifestError(
            f"{len(unknown)} record(s) with UNKNOWN label cannot enter "
            f"training/evaluation: {', '.join(unknown[:5])}"
            + ("..." if len(unknown) > 5 else "")
        )
    return {r.uid: r.label for r in m.records}
