"""Training objectives.

Four terms drive training: a binary cross-entropy detection loss against the
stability-fused reliability target, a margin triplet loss that separates
descriptors across semantic classes, a reliability-weighted differentiable
average-precision loss that ranks candidates within a class, and an L1
feature-consistency loss that distills dense semantic features into the
encoder taps.  The descriptor and total losses are weighted combinations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import InsufficientClassesError, ShapeError, UndefinedAPError
from .network import ForwardOutput
from .synth import WarpedPair, gt_correspondence

BCE_EPS = 1e-7
AP_EPS = 1e-8
NORM_EPS = 1e-12


@dataclass(frozen=True)
class LossConfig:
    margin: float = 1.0
    w_inter: float = 1.0
    w_intra: float = 0.5
    w_det: float = 1.0
    w_desc: float = 1.0
    w_feat: float = 1.0
    ap_bins: int = 25
    triplets_per_batch: int = 512
    samples_per_class: int = 8

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if min(self.w_inter, self.w_intra, self.w_det, self.w_desc, self.w_feat) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.ap_bins < 2:
            raise ValueError(f"ap_bins must be >= 2, got {self.ap_bins}")


@dataclass
class LabeledDescriptorBatch:
    """Descriptor rows with semantic labels, reliabilities and correspondences.

    ``correspondence[i]`` is the row index of sample i's positive in the paired
    image, or -1.  ``candidate_mask[q, j]``, when present, marks which rows may
    serve as ranking candidates for query q (spatial exclusion zones applied at
    construction); without it every other row is eligible.
    """

    descriptors: T.Tensor  # [n, D]
    labels: np.ndarray  # [n]
    reliabilities: np.ndarray  # [n] in [0, 1]
    image_ids: np.ndarray  # [n]
    correspondence: np.ndarray  # [n], -1 for none
    candidate_mask: np.ndarray | None = None  # [n, n] bool

    def __post_init__(self):
        n = self.descriptors.shape[0]
        self.labels = np.asarray(self.labels)
        self.reliabilities = np.asarray(self.reliabilities, dtype=np.float64)
        self.image_ids = np.asarray(self.image_ids)
        self.correspondence = np.asarray(self.correspondence, dtype=np.int64)
        if not (len(self.labels) == len(self.reliabilities) == len(self.image_ids) == len(self.correspondence) == n):
            raise ShapeError("batch field lengths disagree")
        norms = np.linalg.norm(self.descriptors.data, axis=1)
        if n and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("descriptor rows must be unit-norm within 1e-6")
        for i, j in enumerate(self.correspondence):
            if j >= 0 and self.labels[i] != self.labels[j]:
                raise ValueError(f"positive {j} of sample {i} has a different label")

    def __len__(self) -> int:
        return int(self.descriptors.shape[0])


# ---------------------------------------------------------------------------
# detection


def detection_loss(s_pred: T.Tensor, s_rel: np.ndarray, s_sta: np.ndarray) -> T.Tensor:
    """Mean BCE of the predicted map against the fused target s_rel * s_sta."""
    s_rel = np.asarray(s_rel, dtype=np.float64)
    s_sta = np.asarray(s_sta, dtype=np.float64)
    if s_pred.shape != s_rel.shape or s_pred.shape != s_sta.shape:
        raise ShapeError(f"detection_loss: shapes {s_pred.shape}, {s_rel.shape}, {s_sta.shape} differ")
    target = T.Tensor(s_rel * s_sta)
    p = T.clamp(s_pred, BCE_EPS, 1.0 - BCE_EPS)
    nll = T.add(T.mul(target, T.log(p)), T.mul(T.sub(1.0, target), T.log(T.sub(1.0, p))))
    return T.mul(T.mean(nll), -1.0)


# ---------------------------------------------------------------------------
# inter-class triplets


def sample_triplets(
    labels: np.ndarray, count: int, rng: np.random.Generator
) -> list[tuple[int, int, int]]:
    """Uniformly random (anchor, positive, negative) index triples.

    Anchors need another sample of their own label and at least one sample of
    a different label; positives share the anchor label, negatives do not.
    """
    labels = np.asarray(labels)
    by_label: dict = {}
    for i, lab in enumerate(labels):
        by_label.setdefault(lab.item() if hasattr(lab, "item") else lab, []).append(i)
    if len(by_label) < 2:
        raise InsufficientClassesError(f"need >= 2 distinct labels, got {len(by_label)}")
    anchors = [i for i, lab in enumerate(labels) if len(by_label[lab.item() if hasattr(lab, "item") else lab]) >= 2]
    if not anchors:
        raise InsufficientClassesError("no label has two samples to form a positive pair")
    triplets = []
    all_indices = np.arange(len(labels))
    for _ in range(count):
        a = int(rng.choice(anchors))
        same = by_label[labels[a].item() if hasattr(labels[a], "item") else labels[a]]
        p = a
        while p == a:
            p = int(rng.choice(same))
        neg_pool = all_indices[labels != labels[a]]
        n = int(rng.choice(neg_pool))
        triplets.append((a, p, n))
    return triplets


def _pairwise_distance(desc: T.Tensor, idx_a, idx_b) -> T.Tensor:
    da = T.gather_rows(desc, idx_a)
    db = T.gather_rows(desc, idx_b)
    diff = T.sub(da, db)
    return T.sqrt(T.sum_(T.mul(diff, diff), axes=1))


def inter_class_loss(
    batch: LabeledDescriptorBatch,
    cfg: LossConfig,
    rng: np.random.Generator | None = None,
    triplets: list[tuple[int, int, int]] | None = None,
) -> T.Tensor:
    """Mean hinge over sampled cross-class triplets.

    The printed objective omits the clamp at zero; the usual triplet-loss
    convention max(., 0) is adopted so satisfied triplets contribute nothing.
    """
    if triplets is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        triplets = sample_triplets(batch.labels, cfg.triplets_per_batch, rng)
    if not triplets:
        raise InsufficientClassesError("no triplets to evaluate")
    ai = [t[0] for t in triplets]
    pi = [t[1] for t in triplets]
    ni = [t[2] for t in triplets]
    d_pos = _pairwise_distance(batch.descriptors, ai, pi)
    d_neg = _pairwise_distance(batch.descriptors, ai, ni)
    hinge = T.relu(T.add(T.sub(d_pos, d_neg), cfg.margin))
    return T.mean(hinge)


# ---------------------------------------------------------------------------
# average precision


def exact_ap(scores, is_positive) -> float:
    """Average precision of the descending-score ranking; ties break by index."""
    scores = np.asarray(scores, dtype=np.float64)
    is_positive = np.asarray(is_positive, dtype=bool)
    if scores.shape != is_positive.shape or scores.ndim != 1:
        raise ShapeError("scores and is_positive must be equal-length 1-d arrays")
    n_pos = int(is_positive.sum())
    if n_pos == 0:
        raise UndefinedAPError("no positive candidates")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if is_positive[idx]:
            hits += 1
            total += hits / rank
    return total / n_pos


def _bin_centers(bins: int) -> np.ndarray:
    return np.linspace(1.0, -1.0, bins)


def quantized_ap(scores, is_positive, bins: int = 25) -> float:
    """Soft-binned AP on similarity scores in [-1, 1]; numpy forward only.

    Triangular kernels over descending bin centers form a partition of unity,
    so soft per-bin counts cumulate exactly like hard ranks as bins grow.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_positive = np.asarray(is_positive, dtype=bool)
    n_pos = int(is_positive.sum())
    if n_pos == 0:
        raise UndefinedAPError("no positive candidates")
    centers = _bin_centers(bins)
    delta = 2.0 / (bins - 1)
    w = np.maximum(0.0, 1.0 - np.abs(scores[None, :] - centers[:, None]) / delta)  # [B, m]
    h = w.sum(axis=1)
    hp = w[:, is_positive].sum(axis=1)
    prec = np.cumsum(hp) / (np.cumsum(h) + AP_EPS)
    return float(np.sum(prec * hp / n_pos))


def _quantized_ap_graph(scores: T.Tensor, positive_mask: np.ndarray, bins: int) -> T.Tensor:
    """Differentiable twin of quantized_ap over a 1-d score tensor."""
    m = scores.shape[0]
    centers = T.Tensor(np.repeat(_bin_centers(bins)[:, None], m, axis=1))
    delta = 2.0 / (bins - 1)
    spread = T.absolute(T.sub(T.tile_rows(scores, bins), centers))
    w = T.relu(T.sub(1.0, T.mul(spread, 1.0 / delta)))  # [B, m]
    h = T.sum_(w, axes=1)
    hp = T.sum_(T.mul(w, T.Tensor(np.tile(positive_mask, (bins, 1)))), axes=1)
    prec = T.div(T.cumsum(hp), T.add(T.cumsum(h), AP_EPS))
    n_pos = float(positive_mask.sum())
    return T.sum_(T.mul(prec, T.mul(hp, 1.0 / n_pos)))


def intra_class_ap_loss(
    batch: LabeledDescriptorBatch,
    cfg: LossConfig,
    restrict_to_label: bool = True,
) -> T.Tensor:
    """Reliability-weighted quantized-AP ranking loss, per class then averaged.

    Queries are the rows with a correspondence; candidates share the query's
    label (unless the restriction is disabled for ablations) and respect the
    batch's exclusion mask.  A query without an eligible positive is skipped;
    if every query is skipped the loss is undefined.  The reliability weight
    multiplies the AP complement and is detached from the gradient path.
    """
    n = len(batch)
    queries = [i for i in range(n) if batch.correspondence[i] >= 0]
    per_class: dict = {}
    skipped = 0
    for q in queries:
        label = batch.labels[q]
        eligible = np.ones(n, dtype=bool)
        eligible[q] = False
        if restrict_to_label:
            eligible &= batch.labels == label
        if batch.candidate_mask is not None:
            eligible &= batch.candidate_mask[q]
        pos = int(batch.correspondence[q])
        if not eligible[pos]:
            skipped += 1
            continue
        cand_idx = np.flatnonzero(eligible)
        positive_mask = (cand_idx == pos).astype(np.float64)
        q_col = T.reshape(T.gather_rows(batch.descriptors, [q]), (batch.descriptors.shape[1], 1))
        scores = T.reshape(T.matmul(T.gather_rows(batch.descriptors, cand_idx), q_col), (len(cand_idx),))
        ap = _quantized_ap_graph(scores, positive_mask, cfg.ap_bins)
        weight = float(batch.reliabilities[q])  # detached on purpose
        term = T.mul(T.sub(1.0, ap), weight)
        key = label.item() if hasattr(label, "item") else label
        per_class.setdefault(key, []).append(term)
    if not per_class:
        raise UndefinedAPError(f"all {skipped} queries skipped; intra-class AP undefined")

    class_means = []
    for terms in per_class.values():
        acc = terms[0]
        for t in terms[1:]:
            acc = T.add(acc, t)
        class_means.append(T.mul(acc, 1.0 / len(terms)))
    total = class_means[0]
    for cm in class_means[1:]:
        total = T.add(total, cm)
    return T.mul(total, 1.0 / len(class_means))


def descriptor_loss(
    batch: LabeledDescriptorBatch,
    cfg: LossConfig,
    rng: np.random.Generator | None = None,
) -> T.Tensor:
    inter = inter_class_loss(batch, cfg, rng=rng)
    intra = intra_class_ap_loss(batch, cfg)
    return T.add(T.mul(inter, cfg.w_inter), T.mul(intra, cfg.w_intra))


# ---------------------------------------------------------------------------
# feature consistency and total


def feature_consistency_loss(taps: list[T.Tensor], teacher_maps: list[np.ndarray]) -> T.Tensor:
    """Mean absolute difference per tapped layer, averaged over the two taps."""
    if len(taps) != len(teacher_maps):
        raise ShapeError(f"got {len(taps)} taps and {len(teacher_maps)} teacher maps")
    terms = []
    for student, teacher_map in zip(taps, teacher_maps):
        teacher_map = np.asarray(teacher_map, dtype=np.float64)
        if student.shape != teacher_map.shape:
            raise ShapeError(f"tap shape {student.shape} != teacher shape {teacher_map.shape}")
        terms.append(T.mean(T.absolute(T.sub(student, T.Tensor(teacher_map)))))
    acc = terms[0]
    for t in terms[1:]:
        acc = T.add(acc, t)
    return T.mul(acc, 1.0 / len(terms))


def total_loss(
    det: T.Tensor | None,
    desc: T.Tensor | None,
    feat: T.Tensor | None,
    cfg: LossConfig,
) -> T.Tensor:
    total = T.Tensor(0.0)
    for term, weight in ((det, cfg.w_det), (desc, cfg.w_desc), (feat, cfg.w_feat)):
        if term is not None:
            total = T.add(total, T.mul(term, weight))
    return total


# ---------------------------------------------------------------------------
# batch construction from a warped pair


def _normalize_rows_graph(rows: T.Tensor) -> T.Tensor:
    sumsq = T.sum_(T.mul(rows, rows), axes=1)
    norms = T.sqrt(T.add(sumsq, NORM_EPS))
    return T.div(rows, T.tile_cols(norms, rows.shape[1]))


def build_intra_batches(
    out_a: ForwardOutput,
    out_b: ForwardOutput,
    pair: WarpedPair,
    cfg: LossConfig,
    grid_stride: int = 1,
    exclusion_radius: float = 4.0,
    rng: np.random.Generator | None = None,
) -> LabeledDescriptorBatch:
    """Assemble the ranking batch for one warped pair.

    Rows are the descriptor-map cells of both images on a regular grid (cell
    (i, j) sits at image pixel (j*f, i*f)).  Queries live in image a and point
    at their ground-truth cell in image b; negatives are other rows beyond the
    pixel exclusion radius around the query and around its positive.  At most
    samples_per_class queries are kept per class.
    """
    h, w = pair.scene_a.shape
    hm, wm = out_a.desc_map.shape[1], out_a.desc_map.shape[2]
    f = h // hm

    cells = [(i, j) for i in range(0, hm, grid_stride) for j in range(0, wm, grid_stride)]
    rows_i = np.array([c[0] for c in cells])
    rows_j = np.array([c[1] for c in cells])
    ys, xs = rows_i * f, rows_j * f

    raw_a = T.gather_pixels(out_a.desc_map, rows_i, rows_j)
    raw_b = T.gather_pixels(out_b.desc_map, rows_i, rows_j)
    descriptors = _normalize_rows_graph(T.concat_rows(raw_a, raw_b))

    m = len(cells)
    labels = np.concatenate([pair.scene_a.mask.labels[ys, xs], pair.scene_b.mask.labels[ys, xs]])
    reliabilities = np.concatenate([out_a.s.data[ys, xs], out_b.s.data[ys, xs]])
    image_ids = np.concatenate([np.zeros(m, dtype=np.int64), np.ones(m, dtype=np.int64)])
    positions = np.concatenate([np.stack([xs, ys], axis=1)] * 2).astype(np.float64)

    cell_lookup = {(int(i), int(j)): t for t, (i, j) in enumerate(cells)}
    correspondence = np.full(2 * m, -1, dtype=np.int64)
    for t in range(m):
        target = gt_correspondence(pair, float(xs[t]), float(ys[t]))
        if target is None:
            continue
        bj, bi = int(round(target[0] / f)), int(round(target[1] / f))
        slot = cell_lookup.get((bi, bj))
        if slot is None:
            continue
        if labels[m + slot] != labels[t]:
            continue  # nearest-cell label disagreement at region boundaries
        correspondence[t] = m + slot

    if cfg.samples_per_class > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        kept: dict = {}
        order = rng.permutation(2 * m)
        for idx in order:
            if correspondence[idx] < 0:
                continue
            key = labels[idx].item()
            kept.setdefault(key, [])
            if len(kept[key]) < cfg.samples_per_class:
                kept[key].append(idx)
        keep_set = {i for lst in kept.values() for i in lst}
        for idx in range(2 * m):
            if correspondence[idx] >= 0 and idx not in keep_set:
                correspondence[idx] = -1

    candidate_mask = np.ones((2 * m, 2 * m), dtype=bool)
    np.fill_diagonal(candidate_mask, False)
    for q in range(2 * m):
        pos = correspondence[q]
        if pos < 0:
            continue
        dist_q = np.linalg.norm(positions - positions[q], axis=1)
        dist_p = np.linalg.norm(positions - positions[pos], axis=1)
        excl = ((image_ids == image_ids[q]) & (dist_q <= exclusion_radius)) | (
            (image_ids == image_ids[pos]) & (dist_p <= exclusion_radius)
        )
        excl[pos] = False
        excl[q] = True
        candidate_mask[q] = ~excl

    return LabeledDescriptorBatch(
        descriptors=descriptors,
        labels=labels,
        reliabilities=reliabilities,
        image_ids=image_ids,
        correspondence=correspondence,
        candidate_mask=candidate_mask,
    )
