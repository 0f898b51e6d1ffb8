"""The annotation loop: strategy orchestration over a shared pool protocol.

Per iteration a strategy selects samples from the unlabeled pool (BADGE
for dafl/dal-*, uniform random for dicl), a simulated annotator releases
their withheld labels, and the model updates: dafl and dicl fine-tune
the network on the new batch mixed with an equal-size sample of old
labeled data (dafl then re-extracts pool features); dal-* refit their
classifier from scratch on frozen version-0 features.  The loop halts
when the labeling budget is reached, iterations run out, or test
accuracy crosses the optional threshold.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import nncore
from .acquisition import badge_embeddings, kmeanspp_select, random_select
from .classifiers import classify, fit_knn, fit_logreg, fit_ridge
from .data import PoolState
from .errors import ContractError
from .evalstats import BootstrapCI, bootstrap_accuracy_samples, ci_from_samples
from .features import FeatureMatrix, extract_features, refresh_features
from .seeding import PURPOSE, derive_seed

logger = logging.getLogger(__name__)

STRATEGIES = ("dafl", "dicl", "dal-ridge", "dal-logreg", "dal-knn")

_FT_DEFAULT = nncore.TrainConfig(
    epochs=100, base_lr=0.001, schedule=(15, 60, 90), batch_size=16, loss=nncore.KLD
)


@dataclass(frozen=True)
class LoopConfig:
    strategy: str
    iterations: int
    per_iteration: int
    budget: int | None = None  # None: initial labeled + iterations * per_iteration
    fine_tune_epochs: int = 100
    threshold: float | None = None
    fine_tune: nncore.TrainConfig = _FT_DEFAULT
    freeze: nncore.FreezePolicy = nncore.FreezePolicy(nncore.NO_FREEZE)
    bootstrap_resamples: int = 1000
    # shared across strategies so bootstrap resample k is paired; derived
    # from ``seed`` (which is strategy-specific) when left unset
    eval_seed: int | None = None
    store_bootstrap_accs: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ContractError(f"unknown strategy {self.strategy!r}")
        if self.iterations < 0 or self.per_iteration < 1:
            raise ContractError("iterations must be >= 0 and per_iteration >= 1")
        if self.fine_tune_epochs < 0:
            raise ContractError("fine_tune_epochs must be >= 0")
        if self.threshold is not None and not 0 <= self.threshold <= 1:
            raise ContractError("threshold must be in [0, 1]")


class AnnotationOracle:
    """Simulated human annotator: withheld labels released on demand,
    each id at most once."""

    def __init__(self, labels: dict[str, int]):
        self._labels = dict(labels)
        self._consumed: set[str] = set()
        self.queries = 0

    @classmethod
    def from_pools(cls, pools: PoolState) -> "AnnotationOracle":
        table = {}
        for i in pools.pool:
            clip = pools.dataset.clips[i]
            if clip.label is None:
                raise ContractError(f"pool clip {clip.id} has no withheld label")
            table[clip.id] = clip.label
        return cls(table)

    def annotate(self, ids: Sequence[str]) -> list[int]:
        out = []
        for cid in ids:
            if cid not in self._labels:
                raise ContractError(f"oracle: unknown id {cid!r}")
            if cid in self._consumed:
                raise ContractError(f"oracle: id {cid!r} was already annotated")
            self._consumed.add(cid)
            self.queries += 1
            out.append(self._labels[cid])
        return out


def annotate(oracle: AnnotationOracle, ids: Sequence[str]) -> list[int]:
    return oracle.annotate(ids)


@dataclass
class IterationRecord:
    iteration: int
    selected_ids: list[str]
    annotated: int
    fine_tune_size: int
    validation_accuracy: float
    test_accuracy: float
    ci: BootstrapCI
    labeled_total: int
    feature_version: int | None
    bootstrap_accuracies: list[float] | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = asdict(self.ci)
        return d


@dataclass
class RunLog:
    strategy: str
    config: dict
    records: list[IterationRecord]
    final_labels: dict[str, int]

    def to_json(self) -> str:
        doc = {
            "strategy": self.strategy,
            "config": self.config,
            "records": [r.to_dict() for r in self.records],
            "final_labels": self.final_labels,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunLog":
        doc = json.loads(text)
        records = []
        for r in doc["records"]:
            ci = BootstrapCI(**r.pop("ci"))
            records.append(IterationRecord(ci=ci, **r))
        return cls(
            strategy=doc["strategy"],
            config=doc["config"],
            records=records,
            final_labels=doc["final_labels"],
        )

    def iteration_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "labeled", "mu", "ci_halfwidth"])
        for r in self.records:
            writer.writerow([r.iteration, r.labeled_total, repr(r.ci.mu), repr(r.ci.halfwidth)])
        return buf.getvalue()


def _config_snapshot(cfg: LoopConfig) -> dict:
    doc = asdict(cfg)
    doc["fine_tune"]["schedule"] = list(doc["fine_tune"]["schedule"])
    doc["freeze"]["stage_epochs"] = list(doc["freeze"]["stage_epochs"])
    return doc


def fine_tune_round(
    net: nncore.NetworkState,
    new_set: tuple[np.ndarray, np.ndarray],
    prior_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: nncore.TrainConfig,
    policy: nncore.FreezePolicy | None = None,
    sample_seed: int | None = None,
) -> tuple[nncore.NetworkState, float]:
    """One fine-tuning round on the new batch plus an equal-size random
    sample of previously labeled data (clamped to what exists).

    Returns the validation-best checkpoint with its revision bumped, so
    downstream feature caches can tell the rounds apart.
    """
    x_new, y_new = new_set
    if len(x_new) == 0:
        raise ContractError("fine_tune_round: empty new sample set")
    if len(val_set[0]) == 0:
        raise ContractError("fine_tune_round: empty validation set")
    x_old, y_old = prior_set
    n_old = min(len(x_new), len(x_old))
    rng = np.random.default_rng(config.rng_seed if sample_seed is None else sample_seed)
    if n_old > 0:
        pick = rng.permutation(len(x_old))[:n_old]
        x_mix = np.concatenate([x_new, np.asarray(x_old)[pick]])
        y_mix = np.concatenate([y_new, np.asarray(y_old)[pick]])
    else:
        x_mix, y_mix = np.asarray(x_new), np.asarray(y_new)
    if config.epochs == 0:
        out = net.clone()
        out.revision = net.revision + 1
        return out, nncore.evaluate(out, val_set)
    best, val = nncore.train(net, (x_mix, y_mix), val_set, config, policy)
    best.revision = net.revision + 1
    return best, val


def _fit_classifier(kind: str, feats: np.ndarray, labels: np.ndarray, num_classes: int):
    if kind == "dal-ridge":
        return fit_ridge(feats, labels, alpha=1.0, num_classes=num_classes)
    if kind == "dal-logreg":
        return fit_logreg(feats, labels, l2=1e-4, num_classes=num_classes)
    if kind == "dal-knn":
        k = min(5, len(labels))
        return fit_knn(feats, labels, k=k)
    raise ContractError(f"not a classifier strategy: {kind}")


def run_strategy(
    pools: PoolState, net: nncore.NetworkState, cfg: LoopConfig
) -> RunLog:
    """Run one strategy to completion and return its full log.

    ``net`` must already be pretrained: through the last-conv rebuild for
    dafl/dicl, plain training for the dal-* feature source.
    """
    pools.validate()
    ds = pools.dataset
    if cfg.iterations * cfg.per_iteration > len(pools.pool):
        raise ContractError(
            f"iterations * per_iteration = {cfg.iterations * cfg.per_iteration} "
            f"exceeds pool size {len(pools.pool)}"
        )
    labeled = [int(i) for i in pools.labeled]
    pool = [int(i) for i in pools.pool]
    budget = cfg.budget
    if budget is None:
        budget = len(labeled) + cfg.iterations * cfg.per_iteration
    oracle = AnnotationOracle.from_pools(pools)
    x_val, y_val = ds.stack(pools.validation)
    x_test, y_test = ds.stack(pools.test)
    num_classes = net.spec.num_classes

    net = net.clone()
    is_dal = cfg.strategy.startswith("dal-")
    is_dafl = cfg.strategy == "dafl"

    feats_all: FeatureMatrix | None = None
    dal_digest = None
    classifier = None
    if is_dal:
        feats_all = extract_features(net, ds.clips, version=0)
        dal_digest = net.params_digest()
        classifier = _fit_classifier(
            cfg.strategy, feats_all.values[labeled], np.array([ds.clips[i].label for i in labeled]),
            num_classes,
        )
    cache: FeatureMatrix | None = None
    if is_dafl:
        cache = extract_features(net, [ds.clips[i] for i in pool], version=0)

    def predictions(x: np.ndarray, idx: Sequence[int] | None) -> np.ndarray:
        # dal-* predict from frozen features; the nets predict from waveforms
        if is_dal:
            return classify(classifier, feats_all.values[list(idx)])
        return nncore.predict_logits(net, x).argmax(axis=1)

    eval_seed = cfg.eval_seed
    if eval_seed is None:
        eval_seed = derive_seed(cfg.seed, PURPOSE["bootstrap"])

    def measure(iteration: int) -> tuple[float, float, BootstrapCI, list[float] | None]:
        val_preds = predictions(x_val, pools.validation)
        test_preds = predictions(x_test, pools.test)
        val_acc = float((val_preds == y_val).mean())
        test_acc = float((test_preds == y_test).mean())
        accs = bootstrap_accuracy_samples(
            test_preds,
            y_test,
            n_resamples=cfg.bootstrap_resamples,
            seed=derive_seed(eval_seed, iteration),
        )
        stored = [float(a) for a in accs] if cfg.store_bootstrap_accs else None
        return val_acc, test_acc, ci_from_samples(accs), stored

    def feature_version() -> int | None:
        if is_dafl:
            return cache.version
        if is_dal:
            return feats_all.version
        return None

    records: list[IterationRecord] = []
    val_acc, test_acc, ci, boot_accs = measure(0)
    records.append(
        IterationRecord(
            iteration=0,
            selected_ids=[],
            annotated=0,
            fine_tune_size=0,
            validation_accuracy=val_acc,
            test_accuracy=test_acc,
            ci=ci,
            labeled_total=len(labeled),
            feature_version=feature_version(),
            bootstrap_accuracies=boot_accs,
        )
    )
    logger.info(
        "%s iteration 0: labeled=%d test=%.4f features=v%s",
        cfg.strategy, len(labeled), test_acc, feature_version(),
    )

    threshold_met = cfg.threshold is not None and test_acc >= cfg.threshold
    for it in range(1, cfg.iterations + 1):
        if budget <= len(labeled) or threshold_met or not pool:
            break
        n_sel = min(cfg.per_iteration, budget - len(labeled), len(pool))
        sel_seed = derive_seed(cfg.seed, PURPOSE["selection"], it)
        if cfg.strategy == "dicl":
            local = random_select(len(pool), n_sel, sel_seed)
        else:
            emb = badge_embeddings(net, [ds.clips[i] for i in pool])
            local = kmeanspp_select(emb, n_sel, sel_seed)
        picked = [pool[i] for i in local]
        ids = [ds.clips[i].id for i in picked]
        new_labels = np.array(annotate(oracle, ids))
        prior_labeled = list(labeled)
        for i in sorted(local, reverse=True):
            pool.pop(i)
        labeled.extend(picked)

        x_new, _ = ds.stack(picked)
        if is_dal:
            feats = feats_all.values[labeled]
            y_lab = np.array([ds.clips[i].label for i in labeled])
            classifier = _fit_classifier(cfg.strategy, feats, y_lab, num_classes)
            val_acc = float((classify(classifier, feats_all.values[list(pools.validation)]) == y_val).mean())
            ft_size = 0
        else:
            x_old, y_old = (
                ds.stack(prior_labeled) if prior_labeled else (np.zeros((0,) + x_new.shape[1:]), np.zeros(0, int))
            )
            ft_cfg = replace(
                cfg.fine_tune,
                epochs=cfg.fine_tune_epochs,
                rng_seed=derive_seed(cfg.seed, PURPOSE["fine_tune"], it),
            )
            net, val_acc = fine_tune_round(
                net,
                (x_new, new_labels),
                (x_old, y_old),
                (x_val, y_val),
                ft_cfg,
                policy=cfg.freeze,
                sample_seed=derive_seed(cfg.seed, PURPOSE["old_mix"], it),
            )
            ft_size = len(picked) + min(len(picked), len(prior_labeled))
            if is_dafl:
                cache = refresh_features(cache, net, [ds.clips[i] for i in pool])
                assert cache.version == it, "one refresh per fine-tune round"

        _, test_acc, ci, boot_accs = measure(it)
        records.append(
            IterationRecord(
                iteration=it,
                selected_ids=ids,
                annotated=len(ids),
                fine_tune_size=ft_size,
                validation_accuracy=val_acc,
                test_accuracy=test_acc,
                ci=ci,
                labeled_total=len(labeled),
                feature_version=feature_version(),
                bootstrap_accuracies=boot_accs,
            )
        )
        logger.info(
            "%s iteration %d: labeled=%d test=%.4f features=v%s",
            cfg.strategy, it, len(labeled), test_acc, feature_version(),
        )
        if cfg.threshold is not None and test_acc >= cfg.threshold:
            threshold_met = True

    if is_dal:
        assert net.params_digest() == dal_digest, "dal feature network must stay frozen"

    final_labels: dict[str, int] = {}
    for i in labeled:
        final_labels[ds.clips[i].id] = int(ds.clips[i].label)
    if pool:
        x_pool, _ = ds.stack(pool)
        pool_preds = predictions(x_pool, pool)
        for i, pred in zip(pool, pool_preds):
            final_labels[ds.clips[i].id] = int(pred)

    return RunLog(
        strategy=cfg.strategy,
        config=_config_snapshot(cfg),
        records=records,
        final_labels=final_labels,
    )
