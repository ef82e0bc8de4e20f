"""Confusion matrices, the metric suite, the ablation grid and report rendering.

The label order (HOF, NOT) is fixed project-wide here: HOF maps to class
index 0 and NOT to 1 everywhere, which keeps checkpoints and reports
portable.
"""

import csv
import io
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

LABELS = ("HOF", "NOT")
LABEL_TO_INDEX = {label: i for i, label in enumerate(LABELS)}


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [gold, pred] over LABELS order

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cell(self, gold: str, pred: str) -> int:
        return int(self.counts[LABEL_TO_INDEX[gold], LABEL_TO_INDEX[pred]])


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    name: str          # feature-set tag, e.g. "EMB+CH+HW"
    provider: str      # provider spec string, or "-" when EMB is disabled
    accuracy: float
    macro_f1: float
    weighted_f1: float
    per_class: dict
    cm: ConfusionMatrix


def confusion(preds, golds) -> ConfusionMatrix:
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    if not preds:
        raise ValueError("cannot build a confusion matrix from empty inputs")
    counts = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    for pred, gold in zip(preds, golds):
        counts[LABEL_TO_INDEX[gold], LABEL_TO_INDEX[pred]] += 1
    return ConfusionMatrix(counts)


def metrics(cm: ConfusionMatrix) -> dict:
    """Accuracy, macro / weighted F1 and per-class precision-recall-F1.

    Zero denominators yield 0 for precision, recall and F1, which keeps
    macro-F1 defined when a class never occurs.
    """
    total = cm.total
    if total == 0:
        raise ValueError("empty confusion matrix")
    counts = cm.counts
    accuracy = float(np.trace(counts)) / total
    per_class = {}
    f1s = []
    weighted = 0.0
    for i, label in enumerate(LABELS):
        tp = float(counts[i, i])
        predicted = float(counts[:, i].sum())
        support = int(counts[i, :].sum())
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / support if support > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[label] = ClassMetrics(precision, recall, f1, support)
        f1s.append(f1)
        weighted += support * f1
    return {
        "accuracy": accuracy,
        "macro_f1": float(np.mean(f1s)),
        "weighted_f1": weighted / total,
        "per_class": per_class,
    }


def make_report(name: str, provider: str, cm: ConfusionMatrix) -> EvalReport:
    m = metrics(cm)
    return EvalReport(
        name=name,
        provider=provider,
        accuracy=m["accuracy"],
        macro_f1=m["macro_f1"],
        weighted_f1=m["weighted_f1"],
        per_class=m["per_class"],
        cm=cm,
    )


def round2(value: float) -> str:
    """Round-half-up to two decimals, e.g. 0.84655 -> '0.85'."""
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_report(reports, fmt: str = "markdown") -> str:
    if not reports:
        raise ValueError("no reports to render")
    if fmt == "markdown":
        return _render_markdown(reports)
    if fmt == "csv":
        return _render_csv(reports)
    raise ValueError(f"unknown report format {fmt!r}")


def _render_markdown(reports) -> str:
    lines = ["| Features | Acc | M-F1 | W-F1 |", "| --- | --- | --- | --- |"]
    for r in reports:
        lines.append(
            f"| {r.name} | {round2(r.accuracy)} | {round2(r.macro_f1)} | {round2(r.weighted_f1)} |"
        )
    for r in reports:
        lines.append("")
        lines.append(f"### {r.name} (provider: {r.provider})")
        lines.append("| gold \\ pred | HOF | NOT |")
        lines.append("| --- | --- | --- |")
        for gold in LABELS:
            cells = " | ".join(str(r.cm.cell(gold, pred)) for pred in LABELS)
            lines.append(f"| {gold} | {cells} |")
    return "\n".join(lines) + "\n"


def _render_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["features", "provider", "accuracy", "macro_f1", "weighted_f1",
                     "hof_hof", "hof_not", "not_hof", "not_not"])
    for r in reports:
        writer.writerow([
            r.name,
            r.provider,
            f"{r.accuracy:.6f}",
            f"{r.macro_f1:.6f}",
            f"{r.weighted_f1:.6f}",
            r.cm.cell("HOF", "HOF"),
            r.cm.cell("HOF", "NOT"),
            r.cm.cell("NOT", "HOF"),
            r.cm.cell("NOT", "NOT"),
        ])
    return buf.getvalue()


def parse_feature_set(text: str) -> tuple[tuple[str, ...], str | None]:
    """Parse a set like 'EMB+CH+HW' or 'EMB:bb+CH' into (features, provider key)."""
    features = []
    provider_key = None
    for raw in text.split("+"):
        token = raw.strip()
        if not token:
            raise ValueError(f"empty feature in set {text!r}")
        if token.upper().startswith("EMB"):
            name, _, key = token.partition(":")
            if name.upper() != "EMB":
                raise ValueError(f"unknown feature {token!r}")
            features.append("EMB")
            if key:
                provider_key = key
        elif token.upper() in ("CH", "HW"):
            features.append(token.upper())
        else:
            raise ValueError(f"unknown feature {token!r}")
    if not features:
        raise ValueError("empty feature set")
    if len(set(features)) != len(features):
        raise ValueError(f"repeated feature in set {text!r}")
    return tuple(features), provider_key


def run_ablation(feature_sets, train_data, test_data, providers, lexicon,
                 base_config, train_params) -> list[EvalReport]:
    """Train and evaluate one fresh model per feature set, in input order.

    feature_sets: list of set descriptors, each either a string like
    "EMB+CH+HW" / "EMB:hb+CH" or an already-parsed (features, provider key)
    pair. providers: mapping of provider key -> embedding provider; the
    "default" key serves sets that say just "EMB". Run i derives its seeds
    as base seed + i, so listing a set twice produces two independent,
    reproducible rows.
    """
    from . import pipeline  # deferred: pipeline imports this module's labels

    if not feature_sets:
        raise ValueError("no feature sets given")
    parsed = []
    for fs in feature_sets:
        features, key = parse_feature_set(fs) if isinstance(fs, str) else fs
        provider = None
        if "EMB" in features:
            key = key or "default"
            provider = providers.get(key)
            if provider is None:
                raise ValueError(f"feature set needs embedding provider {key!r} but none was given")
        parsed.append((features, provider))

    reports = []
    for i, (features, provider) in enumerate(parsed):
        config = replace(base_config, features=features, seed=base_config.seed + i)
        run_train_params = replace(train_params, seed=train_params.seed + i)
        params, _ = pipeline.train(config, run_train_params, train_data, provider, lexicon)
        preds, golds = pipeline.predict_dataset(params, test_data, lexicon, provider)
        tag = "+".join(features)
        spec = provider.spec if provider is not None else "-"
        reports.append(make_report(tag, spec, confusion(preds, golds)))
    return reports
