"""CSV ingestion and report writers.

Exposure files carry `user_id,item_id,label`, prediction files
`user_id,item_id,score`. External ids (strings or sparse integers) are
remapped to dense 1-based ids; the maps travel with the parsed data and are
written next to outputs as `*_idmap.csv`. Leading `# key=value` lines are
provenance and are skipped on read.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from ure_eval import __version__
from ure_eval.core import (
    Catalog,
    ExposureKind,
    ExposureRows,
    LabeledExposure,
    PredictionTable,
    group_exposures,
    validate_dataset,
)
from ure_eval.errors import (
    DuplicatePair,
    IncompleteFullExposure,
    InvalidItem,
    InvalidLabel,
    InvalidScore,
    IoError,
    MissingPrediction,
    ParseError,
)
from ure_eval.schemas import (
    ComparisonTable,
    CorrelationCurve,
    CorrelationMatrix,
    EvalReport,
    RunConfig,
)
from ure_eval.synth import ScorerSpec, SimulationManifest, SyntheticWorld

logger = logging.getLogger(__name__)

EXPOSURE_HEADER = ["user_id", "item_id", "label"]
PREDICTION_HEADER = ["user_id", "item_id", "score"]
NONFINITE_TOKENS = {"nan", "+nan", "-nan", "inf", "+inf", "-inf", "infinity", "+infinity", "-infinity"}

PathLike = Union[str, Path]


# -------- id maps --------
def _natural_key(value: str):
    try:
        return (0, int(value), "")
    except ValueError:
        return (1, 0, value)


@dataclass(frozen=True, eq=False)
class IdMap:
    """External id <-> dense id (1-based). `external[d - 1]` is the source id of dense id d."""

    external: List[str]

    def __post_init__(self):
        object.__setattr__(self, "_dense", {e: i + 1 for i, e in enumerate(self.external)})

    @classmethod
    def from_values(cls, values: Iterable[str]) -> "IdMap":
        """Dense ids in natural order: integer ids numerically, then other ids lexicographically."""
        return cls(sorted(set(values), key=_natural_key))

    @classmethod
    def identity(cls, count: int) -> "IdMap":
        return cls([str(i) for i in range(1, count + 1)])

    def __len__(self) -> int:
        return len(self.external)

    def __contains__(self, value: str) -> bool:
        return value in self._dense

    def encode(self, values: Sequence[str], missing: int = 0) -> np.ndarray:
        """Dense ids; unknown values map to `missing`."""
        lookup = self._dense
        return np.fromiter((lookup.get(v, missing) for v in values), dtype=np.int64, count=len(values))

    def source(self, dense_id: int) -> str:
        return self.external[dense_id - 1]

    @property
    def is_identity(self) -> bool:
        return all(e == str(i + 1) for i, e in enumerate(self.external))


@dataclass(frozen=True, eq=False)
class ExposureDataset:
    kind: ExposureKind
    catalog: Catalog
    exposures: Dict[int, LabeledExposure]
    users: IdMap
    items: IdMap
    path: Optional[str] = None


@dataclass(frozen=True, eq=False)
class PredictionSet:
    catalog: Catalog
    tables: Dict[int, PredictionTable]
    users: IdMap
    items: IdMap
    path: Optional[str] = None


# -------- reading --------
def _provenance_lines(path: Path) -> int:
    count = 0
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            count += 1
    return count


def _read_frame(path: PathLike, header: List[str]) -> "tuple[pd.DataFrame, np.ndarray]":
    """Rows as stripped strings plus each row's 1-based source line."""
    path = Path(path)
    try:
        skipped = _provenance_lines(path)
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skiprows=skipped,
            encoding="utf-8",
        )
    except FileNotFoundError:
        raise IoError(f"{path}: no such file")
    except UnicodeDecodeError:
        raise ParseError("not valid UTF-8", path=str(path))
    except pd.errors.EmptyDataError:
        raise ParseError(f"empty file, expected header {','.join(header)}", line=1, path=str(path))
    except pd.errors.ParserError as e:
        raise ParseError(str(e), path=str(path))
    except OSError as e:
        raise IoError(f"{path}: {e}")

    header_line = skipped + 1
    columns = [str(c).strip() for c in frame.columns]
    if columns != header:
        raise ParseError(
            f"expected header {','.join(header)}, got {','.join(columns)}", line=header_line, path=str(path)
        )
    frame.columns = header
    frame = frame.fillna("").apply(lambda col: col.str.strip())
    lines = frame.index.to_numpy(dtype=np.int64) + header_line + 1

    blank = (frame == "").all(axis=1).to_numpy()
    frame, lines = frame[~blank].reset_index(drop=True), lines[~blank]
    if frame.empty:
        raise ParseError("no data rows", line=header_line, path=str(path))
    empty = (frame == "").any(axis=1).to_numpy()
    if empty.any():
        row = int(np.flatnonzero(empty)[0])
        missing = [c for c in header if frame.at[row, c] == ""]
        raise ParseError(f"empty field {missing[0]}", line=int(lines[row]), path=str(path))
    return frame, lines


def _catalog_items(raw: Sequence[str], catalog: Optional[Catalog], item_map: Optional[IdMap]) -> IdMap:
    if item_map is not None:
        return item_map
    if catalog is not None:
        return IdMap.identity(catalog.item_count)
    return IdMap.from_values(raw)


def _raise_issue(summary, rows: ExposureRows, raw_users, raw_items, raw_labels, catalog: Catalog, path: str):
    """Raise the first issue in file order as the matching typed error."""
    issue = summary.issues()[0]
    row = None if issue.line is None else int(np.flatnonzero(rows.lines == issue.line)[0])
    if issue.kind == "duplicate":
        raise DuplicatePair(raw_users[row], raw_items[row], line=issue.line, path=path)
    if issue.kind == "out_of_range":
        raise InvalidItem(raw_items[row], line=issue.line, path=path)
    if issue.kind == "invalid_label":
        raise InvalidLabel(raw_labels[row], line=issue.line, path=path)
    labeled = int(np.unique(rows.items[rows.users == issue.user]).size)
    raise IncompleteFullExposure(issue.user, labeled, catalog.item_count)


def read_exposure_csv(
    path: PathLike,
    kind: ExposureKind,
    catalog: Optional[Catalog] = None,
    item_map: Optional[IdMap] = None,
    user_map: Optional[IdMap] = None,
) -> ExposureDataset:
    """Parse, validate and group an exposure file.

    The catalog comes from `item_map` (e.g. the prediction file's items),
    else `catalog` (items must then be the integers 1..item_count), else the
    items seen in the file.
    """
    kind = ExposureKind(kind)
    frame, lines = _read_frame(path, EXPOSURE_HEADER)
    where = str(path)
    raw_users = frame["user_id"].tolist()
    raw_items = frame["item_id"].tolist()
    raw_labels = frame["label"].tolist()

    labels = pd.to_numeric(frame["label"], errors="coerce")
    not_int = (labels.isna() | (labels != labels.round())).to_numpy()
    if not_int.any():
        row = int(np.flatnonzero(not_int)[0])
        raise InvalidLabel(raw_labels[row], line=int(lines[row]), path=where)

    items = _catalog_items(raw_items, catalog, item_map)
    catalog = Catalog(len(items))
    users = user_map if user_map is not None else IdMap.from_values(raw_users)
    if user_map is not None:
        unknown = [u for u in raw_users if u not in user_map]
        if unknown:
            raise MissingPrediction(unknown[0], "*", path=where)

    rows = ExposureRows(
        users=users.encode(raw_users),
        items=items.encode(raw_items),
        labels=labels.to_numpy(dtype=np.int64),
        lines=lines,
    )
    summary = validate_dataset(rows, catalog, kind)
    if not summary.ok:
        _raise_issue(summary, rows, raw_users, raw_items, raw_labels, catalog, where)

    exposures = group_exposures(rows, catalog, kind)
    logger.info(
        f"read path={where} kind={kind.value} rows={len(raw_users)} users={len(exposures)} items={catalog.item_count}"
    )
    return ExposureDataset(kind=kind, catalog=catalog, exposures=exposures, users=users, items=items, path=where)


def read_predictions_csv(
    path: PathLike,
    catalog: Optional[Catalog] = None,
    item_map: Optional[IdMap] = None,
    user_map: Optional[IdMap] = None,
) -> PredictionSet:
    """One PredictionTable per user; every user must score every catalog item."""
    frame, lines = _read_frame(path, PREDICTION_HEADER)
    where = str(path)
    raw_users = frame["user_id"].tolist()
    raw_items = frame["item_id"].tolist()

    scores = pd.to_numeric(frame["score"], errors="coerce").to_numpy(dtype=np.float64)
    tokens = frame["score"].str.lower()
    unparsable = np.isnan(scores) & ~tokens.isin(NONFINITE_TOKENS).to_numpy()
    if unparsable.any():
        row = int(np.flatnonzero(unparsable)[0])
        raise ParseError(f"score {frame.at[row, 'score']!r} is not a number", line=int(lines[row]), path=where)
    # pandas does not parse every spelling of infinity
    for row in np.flatnonzero(np.isnan(scores) & tokens.isin(NONFINITE_TOKENS).to_numpy()):
        scores[row] = float(tokens.iat[row])
    bad = ~np.isfinite(scores)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise InvalidScore(raw_users[row], raw_items[row], float(scores[row]), line=int(lines[row]))

    items = _catalog_items(raw_items, catalog, item_map)
    users = user_map if user_map is not None else IdMap.from_values(raw_users)
    dense_items = items.encode(raw_items)
    dense_users = users.encode(raw_users)

    outside = np.flatnonzero((dense_items == 0) | (dense_users == 0))
    if outside.size:
        row = int(outside[0])
        if dense_items[row] == 0:
            raise InvalidItem(raw_items[row], line=int(lines[row]), path=where)
        raise ParseError(f"unknown user {raw_users[row]!r}", line=int(lines[row]), path=where)

    pairs = np.stack([dense_users, dense_items], axis=1)
    _, first, inverse = np.unique(pairs, axis=0, return_index=True, return_inverse=True)
    repeats = np.flatnonzero(first[inverse.ravel()] != np.arange(len(raw_users)))
    if repeats.size:
        row = int(repeats[0])
        raise DuplicatePair(raw_users[row], raw_items[row], line=int(lines[row]), path=where)

    matrix = np.full((len(users), len(items)), np.nan)
    matrix[dense_users - 1, dense_items - 1] = scores
    holes = np.argwhere(np.isnan(matrix))
    if holes.size:
        u, i = holes[0]
        raise MissingPrediction(users.source(int(u) + 1), items.source(int(i) + 1), path=where)

    tables = {u: PredictionTable(user=u, scores=matrix[u - 1]) for u in range(1, len(users) + 1)}
    logger.info(f"read path={where} predictions users={len(tables)} items={len(items)}")
    return PredictionSet(catalog=Catalog(len(items)), tables=tables, users=users, items=items, path=where)


# -------- writing --------
def _write_text(path: PathLike, text: str) -> None:
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise IoError(f"{path}: {e}")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    out = [",".join(header)]
    out += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(out) + "\n"


def _source(idmap: Optional[IdMap], dense_id: int) -> str:
    return str(dense_id) if idmap is None else idmap.source(dense_id)


def write_exposure_csv(
    path: PathLike,
    exposures: Mapping[int, LabeledExposure],
    users: Optional[IdMap] = None,
    items: Optional[IdMap] = None,
) -> None:
    rows = []
    for user in sorted(exposures):
        exposure = exposures[user]
        rows += [(_source(users, user), _source(items, int(i)), int(l)) for i, l in zip(exposure.items, exposure.labels)]
    _write_text(path, _csv(EXPOSURE_HEADER, rows))


def write_predictions_csv(
    path: PathLike,
    tables: Mapping[int, PredictionTable],
    users: Optional[IdMap] = None,
    items: Optional[IdMap] = None,
) -> None:
    rows = []
    for user in sorted(tables):
        scores = tables[user].scores
        rows += [(_source(users, user), _source(items, i + 1), float(s)) for i, s in enumerate(scores)]
    _write_text(path, _csv(PREDICTION_HEADER, rows))


def write_idmap(path: PathLike, idmap: IdMap) -> None:
    _write_text(path, _csv(["dense_id", "external_id"], ((i + 1, e) for i, e in enumerate(idmap.external))))


def idmap_path(out: PathLike, role: str) -> Path:
    """`report.json` -> `report_users_idmap.csv`."""
    out = Path(out)
    return out.with_name(f"{out.stem}_{role}_idmap.csv")


Result = Union[BaseModel, List[BaseModel]]


def _dump(result: Result) -> Any:
    if isinstance(result, list):
        return [r.model_dump(mode="json") for r in result]
    return result.model_dump(mode="json")


def render_json(result: Result, config: RunConfig) -> str:
    payload = {"version": __version__, "config": config.model_dump(mode="json"), "result": _dump(result)}
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _provenance(config: RunConfig, extra: Optional[Dict[str, Any]] = None) -> str:
    fields = {"version": __version__, **config.model_dump(mode="json", exclude_none=True), **(extra or {})}
    lines = []
    for key in sorted(fields):
        value = fields[key]
        if isinstance(value, (dict, list)):
            if not value:
                continue
            value = json.dumps(value, sort_keys=True, separators=(",", ":"))
        lines.append(f"# {key}={_cell(value)}")
    return "\n".join(lines) + "\n"


def _curve_rows(curve: CorrelationCurve):
    return zip(curve.k_grid, curve.pearson_r)


def render_csv(result: Result, config: RunConfig) -> str:
    """Provenance comment lines, then one flat table."""
    if isinstance(result, EvalReport):
        extra = {"macro_mean": result.macro_mean, "skipped_users": result.skipped_users, "zero_filled": result.zero_filled}
        rows = [(result.scheme.value, result.k, u, v) for u, v in sorted(result.per_user.items())]
        return _provenance(config, extra) + _csv(["scheme", "k", "user_id", "value"], rows)
    if isinstance(result, CorrelationCurve):
        extra = {"fixed": result.fixed, "k_max": result.k_max, "nbar": result.nbar}
        return _provenance(config, extra) + _csv(["k", "pearson_r"], _curve_rows(result))
    if isinstance(result, CorrelationMatrix):
        rows = [(m, *vals, a) for m, vals, a in zip(result.row_metrics, result.values, result.row_argmax)]
        header = ["metric", *(f"full@{k}" for k in result.col_k), "argmax_k"]
        return _provenance(config, {"diagonal_dominant": result.diagonal_dominant}) + _csv(header, rows)
    if isinstance(result, ComparisonTable):
        extra = {"reference": result.reference, "kendall_tau": result.kendall_tau}
        rows = [(r.model, r.traditional, r.gold, r.ure) for r in result.rows]
        return _provenance(config, extra) + _csv(["model", "traditional", "gold", "ure"], rows)
    if isinstance(result, list):
        # several curves share one table: one row per (curve, k)
        rows = [(c.fixed, c.nbar, c.k_max, k, r) for c in result for k, r in _curve_rows(c)]
        return _provenance(config) + _csv(["fixed", "nbar", "k_max", "k", "pearson_r"], rows)
    flat = {k: v for k, v in result.model_dump(mode="json").items() if not isinstance(v, (dict, list))}
    return _provenance(config) + _csv(["key", "value"], sorted(flat.items()))


def render_report(result: Result, config: RunConfig) -> str:
    return render_csv(result, config) if config.format == "csv" else render_json(result, config)


def write_report(result: Result, path: PathLike, config: RunConfig) -> None:
    """Write `result` in `config.format`; identical inputs give identical bytes."""
    _write_text(path, render_report(result, config))
    logger.info(f"wrote path={path} format={config.format}")


def write_curves(curves: List[CorrelationCurve], path: PathLike, config: RunConfig) -> List[Path]:
    """JSON: one file holding every curve. CSV: one `k,pearson_r` file per curve."""
    path = Path(path)
    if config.format == "json":
        write_report(curves, path, config)
        return [path]
    written = []
    for curve in curves:
        tag = curve.fixed.replace("@", "")
        if curve.nbar is not None:
            tag += f"_nbar{curve.nbar}"
        target = path.with_name(f"{path.stem}_{tag}{path.suffix or '.csv'}")
        write_report(curve, target, config)
        written.append(target)
    return written


def write_world(
    out_dir: PathLike,
    world: SyntheticWorld,
    rand: Mapping[int, LabeledExposure],
    scorers: Sequence[ScorerSpec],
    predictions: Mapping[str, Mapping[int, PredictionTable]],
    nbar: int,
    sample_seed: int,
    config: RunConfig,
) -> SimulationManifest:
    """full.csv, rand.csv, predictions/<label>.csv and manifest.json under `out_dir`."""
    out_dir = Path(out_dir)
    files = {"full": "full.csv", "rand": "rand.csv"}
    write_exposure_csv(out_dir / files["full"], world.full)
    write_exposure_csv(out_dir / files["rand"], rand)
    for spec in scorers:
        files[spec.label] = f"predictions/{spec.label}.csv"
        write_predictions_csv(out_dir / files[spec.label], predictions[spec.label])

    manifest = SimulationManifest(
        world=world.spec, nbar=nbar, sample_seed=sample_seed, scorers=list(scorers), files=files
    )
    write_report(manifest, out_dir / "manifest.json", config.model_copy(update={"format": "json"}))
    logger.info(f"world written dir={out_dir} scorers={len(scorers)}")
    return manifest


def read_family(
    paths: Sequence[PathLike], catalog: Optional[Catalog] = None
) -> "tuple[Dict[str, Dict[int, PredictionTable]], IdMap, IdMap]":
    """Prediction files keyed by file stem; every file must share the first file's users and items."""
    if not paths:
        raise IoError("no prediction files given")
    family: Dict[str, Dict[int, PredictionTable]] = {}
    first = read_predictions_csv(paths[0], catalog=catalog)
    family[Path(paths[0]).stem] = first.tables
    for path in paths[1:]:
        preds = read_predictions_csv(path, item_map=first.items, user_map=first.users)
        family[Path(path).stem] = preds.tables
    return family, first.users, first.items
