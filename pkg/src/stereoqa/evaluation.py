"""Dataset scoring and correlation reporting.

Predictions run at each pair's natural length (padded only up to the
model's structural minimum) and are mapped to the 0-100 scale. Reports
carry Pearson and Spearman correlations against the subjective scores
plus mean squared error, overall and per codec group; groups too small
or too degenerate for a correlation keep their slot with the correlation
fields omitted.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import RatedPair, load_wav, validate_pair
from .conditioning import build_input_tensor, dual_mono
from .errors import DegenerateInput, NotStereo
from .gammatone import FrontendConfig, design_filterbank
from .model import StereoQualityNet
from .training import select_planes


def rank_average(values) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x, y) -> float:
    """Sample Pearson linear correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInput("inputs must be 1-D sequences of equal length")
    if x.size < 2:
        raise DegenerateInput("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx2 = float((dx * dx).sum())
    sy2 = float((dy * dy).sum())
    if sx2 == 0.0 or sy2 == 0.0:
        raise DegenerateInput("zero variance input")
    return float(np.clip(float((dx * dy).sum()) / np.sqrt(sx2 * sy2), -1.0, 1.0))


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson of average-tied rank vectors."""
    return pearson(rank_average(x), rank_average(y))


@dataclass
class GroupStats:
    n: int
    rp: float | None
    rs: float | None
    mse: float


@dataclass
class RowResult:
    ref_path: str
    cod_path: str
    mos: float
    predicted: float
    codec: str | None


@dataclass
class EvalReport:
    n: int
    rp: float | None
    rs: float | None
    mse: float
    per_group: dict[str, GroupStats] = field(default_factory=dict)
    rows: list[RowResult] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "rp": self.rp,
            "rs": self.rs,
            "mse": self.mse,
            "per_group": {
                k: {"n": g.n, "rp": g.rp, "rs": g.rs, "mse": g.mse}
                for k, g in sorted(self.per_group.items())
            },
        }

    def to_text(self) -> str:
        def fmt(v):
            return "   --" if v is None else f"{v:5.3f}"

        lines = [
            f"{'group':<16}{'n':>5}  {'rp':>6} {'rs':>6} {'mse':>10}",
            f"{'overall':<16}{self.n:>5}  {fmt(self.rp):>6} {fmt(self.rs):>6} {self.mse:>10.2f}",
        ]
        for name, g in sorted(self.per_group.items()):
            lines.append(f"{name:<16}{g.n:>5}  {fmt(g.rp):>6} {fmt(g.rs):>6} {g.mse:>10.2f}")
        return "\n".join(lines)

    def write_rows_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ref_path", "cod_path", "codec", "mos", "predicted"])
            for r in self.rows:
                writer.writerow([r.ref_path, r.cod_path, r.codec or "", r.mos, f"{r.predicted:.4f}"])

    def write_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)
            fh.write("\n")


def _stats(mos: np.ndarray, pred: np.ndarray) -> tuple[float | None, float | None, float]:
    mse = float(np.mean((pred - mos) ** 2))
    try:
        rp = pearson(mos, pred)
        rs = spearman(mos, pred)
    except DegenerateInput:
        return None, None, mse
    return rp, rs, mse


def predict_pair(
    model: StereoQualityNet,
    ref,
    cod,
    frontend: FrontendConfig,
    *,
    filterbank=None,
) -> float:
    """Score one validated pair on the 0-100 scale at its natural length."""
    tensor = build_input_tensor(
        ref,
        cod,
        frontend,
        min_frames=model.min_input_frames,
        filterbank=filterbank,
    )
    return model.score_mushra(select_planes(tensor.data, model.config.in_channels))


def evaluate(
    model: StereoQualityNet,
    rows: list[RatedPair],
    *,
    frontend: FrontendConfig | None = None,
    allow_dual_mono: bool = False,
    threads: int = 1,
) -> EvalReport:
    """Score every manifest row and aggregate correlation statistics."""
    if not rows:
        raise DegenerateInput("empty manifest")
    frontend = frontend or FrontendConfig()
    fb = design_filterbank(frontend)

    def _score_row(row: RatedPair) -> float:
        ref = load_wav(row.ref_path)
        cod = load_wav(row.cod_path)
        if ref.channels == 1 or cod.channels == 1:
            if not allow_dual_mono:
                raise NotStereo(
                    f"{row.ref_path}: mono rows require the dual-mono option"
                )
            if ref.channels == 1:
                ref = dual_mono(ref)
            if cod.channels == 1:
                cod = dual_mono(cod)
        ref, cod = validate_pair(ref, cod)
        return predict_pair(model, ref, cod, frontend, filterbank=fb)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            preds = list(pool.map(_score_row, rows))
    else:
        preds = [_score_row(row) for row in rows]
    return _aggregate(rows, preds)


def _aggregate(rows: list[RatedPair], preds: list[float]) -> EvalReport:
    """Fold per-row predictions into the overall and per-group report."""
    results = [
        RowResult(
            ref_path=row.ref_path,
            cod_path=row.cod_path,
            mos=row.mos,
            predicted=pred,
            codec=row.codec,
        )
        for row, pred in zip(rows, preds)
    ]
    mos = np.array([r.mos for r in results])
    pred = np.array([r.predicted for r in results])
    rp, rs, mse = _stats(mos, pred)

    per_group: dict[str, GroupStats] = {}
    for tag in sorted({r.codec for r in results if r.codec is not None}):
        sel = [r for r in results if r.codec == tag]
        g_mos = np.array([r.mos for r in sel])
        g_pred = np.array([r.predicted for r in sel])
        g_rp, g_rs, g_mse = _stats(g_mos, g_pred)
        per_group[tag] = GroupStats(n=len(sel), rp=g_rp, rs=g_rs, mse=g_mse)

    return EvalReport(n=len(results), rp=rp, rs=rs, mse=mse, per_group=per_group, rows=results)
