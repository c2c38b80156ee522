"""Genotype relatedness: correlation-matrix intake and k-means cluster ids.

Each genotype is represented by its row of the correlation matrix and the
rows are clustered with Lloyd's algorithm from k-means++ seeds.
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pipeline import DataError


@dataclass
class CorrelationMatrix:
    ids: list
    values: np.ndarray

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.values = np.asarray(self.values, dtype=np.float64)

    def check(self, tol=1e-9):
        v = self.values
        n = len(self.ids)
        if v.shape != (n, n):
            raise DataError(f"correlation matrix is {v.shape} for {n} genotype ids")
        if len(set(self.ids)) != n:
            raise DataError("duplicate genotype ids in correlation matrix")
        if not np.all(np.isfinite(v)):
            raise DataError("correlation matrix contains NaN or infinite entries")
        if np.max(np.abs(v - v.T), initial=0.0) > tol:
            raise DataError("correlation matrix is not symmetric")
        if np.max(np.abs(np.diag(v) - 1.0), initial=0.0) > tol:
            raise DataError("correlation matrix diagonal is not 1")
        if np.any(np.abs(v) > 1.0 + tol):
            raise DataError("correlation entries outside [-1, 1]")
        return self


@dataclass
class ClusterAssignment:
    labels: dict  # genotype id -> cluster id
    centroids: np.ndarray
    inertia: float
    history: list = field(default_factory=list)  # inertia per Lloyd iteration
    n_iter: int = 0

    @property
    def k(self):
        return self.centroids.shape[0]


def _sq_dists(X, C, chunk=512):
    out = np.empty((X.shape[0], C.shape[0]))
    for s in range(0, X.shape[0], chunk):
        d = X[s : s + chunk, None, :] - C[None, :, :]
        out[s : s + chunk] = np.einsum("nkd,nkd->nk", d, d)
    return out


def _plusplus(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = next(i for i in range(n) if i not in chosen)
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(X, X[[nxt]])[:, 0])
    return X[chosen].copy()


def _update(X, labels, C, d2):
    k = C.shape[0]
    counts = np.bincount(labels, minlength=k)
    new = np.zeros_like(C)
    np.add.at(new, labels, X)
    nonempty = counts > 0
    new[nonempty] /= counts[nonempty, None]
    empty = np.flatnonzero(~nonempty)
    if empty.size:
        # reseed each empty centroid at the point farthest from its own centroid
        own = d2[np.arange(len(X)), labels].copy()
        for j in empty:
            far = int(np.argmax(own))
            new[j] = X[far]
            own[far] = -1.0
    return new


def kmeans(X, k, seed=0, max_iters=300, tol=1e-6):
    """Lloyd iterations from k-means++ seeds.

    Ties in the nearest-centroid step go to the lowest centroid index. Stops
    when assignments repeat, the largest centroid shift drops below ``tol``,
    or after ``max_iters`` iterations. Returns ``(labels, centroids, inertia,
    history)`` where ``history`` holds the inertia of every iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"kmeans: need a nonempty 2-d point array, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("kmeans: input contains NaN or infinite values")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"kmeans: k={k} must be between 1 and the number of points {n}")
    rng = np.random.default_rng(seed)
    C = _plusplus(X, k, rng)
    history = []
    prev = None
    for _ in range(max_iters):
        d2 = _sq_dists(X, C)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), labels].sum()))
        if prev is not None and np.array_equal(labels, prev):
            break
        new = _update(X, labels, C, d2)
        shift = float(np.max(np.sqrt(np.sum((new - C) ** 2, axis=1))))
        C = new
        prev = labels
        if shift < tol:
            break
    d2 = _sq_dists(X, C)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, C, inertia, history


def cluster_genotypes(corr, k=5, seed=0, max_iters=300, tol=1e-6):
    """Cluster genotypes by their correlation rows.

    Genotypes are put in canonical (sorted id) order before clustering and
    cluster ids are renumbered by first appearance in that order, so the
    result does not depend on the input row order.
    """
    if isinstance(corr, CorrelationMatrix):
        corr.check()
        ids, values = corr.ids, corr.values
    else:
        ids, values = corr
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    X = np.asarray(values, dtype=np.float64)[np.ix_(order, order)]
    labels, C, inertia, history = kmeans(X, k, seed, max_iters, tol)
    remap = {}
    for lab in labels:
        remap.setdefault(int(lab), len(remap))
    for lab in range(k):
        remap.setdefault(lab, len(remap))
    perm = np.empty(k, dtype=int)
    for old, new in remap.items():
        perm[new] = old
    canon_ids = [ids[i] for i in order]
    return ClusterAssignment(
        labels={g: remap[int(lab)] for g, lab in zip(canon_ids, labels)},
        centroids=C[perm],
        inertia=inertia,
        history=history,
        n_iter=len(history),
    )


def assign_cluster_feature(assignment, genotype_id):
    labels = assignment.labels if isinstance(assignment, ClusterAssignment) else assignment
    try:
        return int(labels[str(genotype_id)])
    except KeyError:
        raise KeyError(f"genotype {genotype_id!r} has no cluster assignment") from None


def planted_correlation(n, families=5, within=0.9, between=0.1, jitter=0.0, seed=0):
    """Correlation matrix with planted families (genotype ``i`` in family ``i % families``).

    Returns ``(CorrelationMatrix, family_labels)``.
    """
    fam = np.arange(n) % families
    same = fam[:, None] == fam[None, :]
    v = np.where(same, within, between).astype(np.float64)
    if jitter > 0:
        rng = np.random.default_rng(seed)
        noise = rng.uniform(-jitter, jitter, size=(n, n))
        v = np.clip(v + np.triu(noise, 1) + np.triu(noise, 1).T, -1.0, 1.0)
    np.fill_diagonal(v, 1.0)
    ids = [f"G{i:04d}" for i in range(n)]
    return CorrelationMatrix(ids, v), fam


def read_correlation_csv(path):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty correlation file")
    ids = [c.strip() for c in rows[0][1:]]
    values = np.empty((len(rows) - 1, len(ids)))
    for r, row in enumerate(rows[1:]):
        if len(row) != len(ids) + 1:
            raise DataError(f"{path}:{r + 2}: expected {len(ids) + 1} fields, got {len(row)}")
        if r >= len(ids) or row[0].strip() != ids[r]:
            raise DataError(f"{path}:{r + 2}: row id {row[0]!r} does not match column order")
        try:
            values[r] = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{r + 2}: {exc}") from None
    return CorrelationMatrix(ids, values).check()


def write_correlation_csv(corr, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["genotype_id"] + list(corr.ids))
        for gid, row in zip(corr.ids, corr.values):
            w.writerow([gid] + [f"{x:.6f}" for x in row])


def write_assignment_csv(assignment, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["genotype_id", "cluster_id"])
        for gid in sorted(assignment.labels):
            w.writerow([gid, assignment.labels[gid]])


def read_assignment_csv(path):
    path = Path(path)
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["genotype_id", "cluster_id"]:
            raise DataError(f"{path}:1: expected header genotype_id,cluster_id")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                labels[row[0].strip()] = int(row[1])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return labels
