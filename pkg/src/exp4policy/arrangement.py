"""Cell enumeration for central hyperplane arrangements in LES coefficient space.

Each coarsening point ``x_t`` defines the hyperplane ``{beta : (1, x_t') beta = 0}``.
A cell is labelled by the sign of ``(1, x_t') beta`` for every point; it is
kept when the slack-maximising LP in :mod:`.lpfeas` certifies a nonempty
interior.

Hyperplanes are inserted one at a time and every surviving label is extended
by ``+`` and ``-``.  Infeasible labels are never extended, since an empty cell
cannot be divided.  Two extension strategies are available:

``"lp"``
    Solve an LP for every proposed extension whose feasibility is not already
    witnessed by the parent's interior point.
``"restricted"`` (default)
    Only cells that the new hyperplane actually cuts need the opposite-sign
    extension.  Those cells are in bijection with the cells of the
    arrangement restricted to the new hyperplane, which is one dimension
    lower and is enumerated recursively (directly by angle sorting in the
    plane).  Every proposed split is still confirmed by the LP.  Any numerical
    trouble in the restricted computation falls back to the ``"lp"`` step.

Finally each label's LP is re-solved against the full constraint set to give
its pseudo-Chebyshev witness.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Optional

import numpy as np

from .core import DimensionError, LesRule, UniformRandom, augment
from .lpfeas import DEFAULT_BOX, EPS_R, Status, solve_rows

logger = logging.getLogger(__name__)

DEDUP_TOL = 1e-12
SPILL_LABELS = 10**6
_ZERO_ROW = 1e-13


def harding(t: int, J: int) -> int:
    """Maximal number of signed linear dichotomies of ``t`` points in ``R^J``."""
    if t < 2 or J < 0:
        raise ValueError("harding(t, J) needs t >= 2 and J >= 0")
    return 2 * sum(math.comb(t - 1, j) for j in range(J + 1))


def label_string(signs) -> str:
    return "".join("+" if s > 0 else "-" for s in signs)


def parse_label(text: str) -> np.ndarray:
    if set(text) - {"+", "-"}:
        raise ValueError(f"label {text!r} must consist of '+' and '-'")
    return np.array([1 if c == "+" else -1 for c in text], dtype=np.int8)


def dedup_rows(rows, tol: float = DEDUP_TOL):
    """Merge rows that coincide after unit scaling with first nonzero entry positive.

    Returns ``(keep, index_map, orientation)``: positions of the representative
    rows (first occurrences), the representative index of every row, and
    ``+1``/``-1`` for whether the row points the same way as its representative.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms <= 0):
        raise ValueError("cannot deduplicate zero rows")
    unit = rows / norms[:, None]
    first = np.argmax(np.abs(unit) > tol, axis=1)
    orient = np.where(unit[np.arange(len(unit)), first] < 0, -1, 1).astype(np.int8)
    unit = unit * orient[:, None]
    keys = np.round(unit / tol).astype(np.int64) if tol > 0 else unit
    seen = {}
    keep: List[int] = []
    index_map = np.empty(len(rows), dtype=np.int64)
    for i, key in enumerate(map(bytes, keys)):
        j = seen.get(key)
        if j is None:
            j = seen[key] = len(keep)
            keep.append(i)
        index_map[i] = j
    return np.array(keep, dtype=np.int64), index_map, orient


# ------------------------------------------------------------- LP helpers


def _solve_cell(S, box, eps_r, hint=None, chunk=None):
    """Slack LP over signed unit rows ``S`` by constraint generation.

    Starts from the rows tightest at ``hint`` and adds violated rows until the
    subproblem optimum satisfies every row; that optimum is then the optimum of
    the full LP.  An infeasible subproblem proves the full system infeasible.
    """
    m, d = S.shape
    chunk = chunk or 2 * d + 2
    if m <= 3 * chunk:
        return solve_rows(S, np.ones(m), box=box, eps_r=eps_r)
    if hint is None:
        active = np.arange(min(chunk, m))
    else:
        active = np.argsort(S @ hint, kind="stable")[:chunk]
    active_mask = np.zeros(m, dtype=bool)
    active_mask[active] = True
    while True:
        idx = np.flatnonzero(active_mask)
        res = solve_rows(S[idx], np.ones(idx.size), box=box, eps_r=eps_r)
        if res.status is not Status.FEASIBLE:
            return res
        slack = S @ res.witness - res.r_star
        viol = np.flatnonzero((slack < -1e-9) & ~active_mask)
        if viol.size == 0:
            return res
        worst = viol[np.argsort(slack[viol], kind="stable")[:chunk]]
        active_mask[worst] = True


def _inherits(W, h, box, eps_r):
    """Per witness, the sign of ``h . w`` when it certifies the child on that side, else 0."""
    v = W @ h
    scale = np.abs(W).max(axis=1)
    ok = (scale > 0) & (np.abs(v) * box > 10 * eps_r * scale)
    return np.where(ok, np.sign(v), 0).astype(np.int8)


# ------------------------------------------------------- restricted pruning


def _planar_labels(P):
    """All cells of a central line arrangement in the plane, as sign rows.

    ``P`` holds unit normals of distinct lines.  Cells are the sectors between
    consecutive line directions; the bisector of each sector is its witness.
    """
    dirs = np.column_stack([-P[:, 1], P[:, 0]])
    ang = np.arctan2(np.concatenate([dirs[:, 1], -dirs[:, 1]]), np.concatenate([dirs[:, 0], -dirs[:, 0]]))
    ang = np.sort(ang)
    gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
    if gaps.min() < 1e-12:
        return None
    mid = ang + gaps / 2
    probe = np.column_stack([np.cos(mid), np.sin(mid)])
    vals = probe @ P.T
    if np.min(np.abs(vals)) < 1e-12:
        return None
    return np.where(vals > 0, 1, -1).astype(np.int8)


def _restricted_labels(H, h, box, eps_r):
    """Labels (over the rows of ``H``) of the cells cut by the hyperplane ``h``.

    Returns None when the computation is numerically unreliable.
    """
    d = h.size
    _, _, vt = np.linalg.svd(h[None, :])
    U = vt[1:].T
    P = H @ U
    norms = np.linalg.norm(P, axis=1)
    if norms.min() < _ZERO_ROW:
        return None
    if d - 1 == 1:
        base = np.where(P[:, 0] > 0, 1, -1).astype(np.int8)
        if np.min(np.abs(P[:, 0])) < 1e-12:
            return None
        return np.vstack([base, -base])
    keep, index_map, orient = dedup_rows(P)
    Q = P[keep] * (orient[keep] / norms[keep])[:, None]
    if d - 1 == 2:
        sub = _planar_labels(Q)
    else:
        sub, _ = _incremental(Q, box, eps_r, "restricted")
    if sub is None:
        return None
    return (sub[:, index_map] * orient[None, :]).astype(np.int8)


# ------------------------------------------------------------ incremental


def _alloc(shape, dtype, spill_dir):
    if shape[0] > SPILL_LABELS and spill_dir is not None:
        fd, path = tempfile.mkstemp(dir=spill_dir, suffix=".labels")
        os.close(fd)
        return np.memmap(path, dtype=dtype, mode="w+", shape=shape)
    return np.empty(shape, dtype=dtype)


def _incremental(H, box, eps_r, method, spill_dir=None, progress=None):
    """Labels and interior points of all cells of the arrangement of unit rows ``H``.

    Labels are produced in lexicographic order with ``+`` before ``-``.
    """
    m, d = H.shape
    labels = np.empty((2, m), dtype=np.int8)
    labels[:, 0] = (1, -1)
    W = np.vstack([H[0], -H[0]]) * box / np.max(np.abs(H[0]))
    for t in range(1, m):
        h = H[t]
        n = labels.shape[0]
        plus_ok = np.zeros(n, dtype=bool)
        minus_ok = np.zeros(n, dtype=bool)
        Wp = np.empty((n, d))
        Wm = np.empty((n, d))
        side = _inherits(W, h, box, eps_r)
        plus_ok[side > 0] = True
        minus_ok[side < 0] = True
        Wp[side > 0] = W[side > 0]
        Wm[side < 0] = W[side < 0]

        todo = None
        if method == "restricted":
            restricted = _restricted_labels(H[:t], h, box, eps_r)
            if restricted is not None:
                # int8 +1/-1 bytes order as '+' < '-', so the frontier is sorted as byte strings
                keys = np.ascontiguousarray(labels[:, :t]).view(f"S{t}").ravel()
                query = np.ascontiguousarray(restricted).view(f"S{t}").ravel()
                pos = np.minimum(np.searchsorted(keys, query), n - 1)
                if np.all(keys[pos] == query):
                    cut = np.zeros(n, dtype=bool)
                    cut[pos] = True
                    todo = np.flatnonzero(cut | (side == 0))
                else:
                    logger.debug("restricted labels missing from frontier at step %d; using LP step", t + 1)
        if todo is None:
            todo = np.arange(n)

        for i in todo:
            s = side[i]
            base = labels[i, :t, None] * H[:t]
            for sign in (1, -1):
                if sign == s:
                    continue
                S = np.vstack([base, sign * h])
                res = _solve_cell(S, box, eps_r, hint=W[i])
                if res.status is Status.DEGENERATE:
                    logger.warning("degenerate LP for label %s", label_string(np.append(labels[i, :t], sign)))
                if res.status is Status.FEASIBLE:
                    if sign > 0:
                        plus_ok[i], Wp[i] = True, res.witness
                    else:
                        minus_ok[i], Wm[i] = True, res.witness

        sel = np.flatnonzero(np.column_stack([plus_ok, minus_ok]).ravel())
        parent = sel // 2
        child_sign = np.where(sel % 2 == 0, 1, -1).astype(np.int8)
        new_labels = _alloc((sel.size, m), np.int8, spill_dir)
        new_labels[:, :t] = labels[parent, :t]
        new_labels[:, t] = child_sign
        W = np.where((child_sign > 0)[:, None], Wp[parent], Wm[parent])
        labels = new_labels
        if progress is not None:
            progress(t + 1, labels.shape[0])
    return labels, W


# ---------------------------------------------------------------- catalog


@dataclass(frozen=True)
class CellCatalog:
    """Enumerated cells: sign labels over deduplicated hyperplanes plus witnesses.

    ``hyperplanes`` are the augmented rows ``(1, x')`` of the first occurrence
    of each distinct coarsening point; ``dedup_map[i]`` is the hyperplane of
    original point ``i``.
    """

    labels: np.ndarray
    witnesses: np.ndarray
    hyperplanes: np.ndarray
    dedup_map: np.ndarray
    r_star: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def J(self) -> int:
        return self.hyperplanes.shape[1] - 1

    def label_strings(self) -> List[str]:
        return [label_string(row) for row in self.labels]

    @property
    def cells(self):
        return list(zip(self.label_strings(), self.witnesses))

    def point_labels(self) -> np.ndarray:
        """Labels expanded to the original (non-deduplicated) points."""
        return self.labels[:, self.dedup_map]

    @cached_property
    def _experts(self):
        return tuple(LesRule(w) for w in self.witnesses)

    def experts(self) -> List[LesRule]:
        """One LES rule per cell; the rule objects are built once and shared."""
        return list(self._experts)

    def to_csv(self, path) -> Path:
        """Write ``label, beta_0..beta_J`` rows and a JSON sidecar; returns the sidecar path."""
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label"] + [f"beta_{j}" for j in range(self.J + 1)])
            for lab, beta in zip(self.label_strings(), self.witnesses):
                w.writerow([lab] + [repr(float(b)) for b in beta])
        sidecar = path.with_suffix(".json")
        sidecar.write_text(
            json.dumps(
                {
                    "J": self.J,
                    "dedup_map": [int(i) for i in self.dedup_map],
                    "hyperplanes": [[float(v) for v in row] for row in self.hyperplanes],
                    "n_cells": len(self),
                },
                indent=1,
            )
            + "\n",
            encoding="utf-8",
        )
        return sidecar

    @classmethod
    def from_csv(cls, path) -> "CellCatalog":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        labels, witnesses = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[0] != "label" or len(header) != meta["J"] + 2:
                raise ValueError(f"{path}: unexpected catalog header {header}")
            for row in reader:
                labels.append(parse_label(row[0]))
                witnesses.append([float(v) for v in row[1:]])
        hyper = np.array(meta["hyperplanes"], dtype=float)
        labels = np.array(labels, dtype=np.int8).reshape(-1, hyper.shape[0])
        return cls(labels, np.array(witnesses).reshape(-1, meta["J"] + 1), hyper, np.array(meta["dedup_map"], dtype=np.int64))


def enumerate_cells(
    points,
    J: int,
    method: str = "restricted",
    box: float = DEFAULT_BOX,
    eps_r: float = EPS_R,
    progress=None,
) -> CellCatalog:
    """Enumerate the LES cells induced by ``points`` (shape ``(t, J)``)."""
    if method not in ("restricted", "lp"):
        raise ValueError(f"unknown method {method!r}")
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.size == 0:
        raise ValueError("at least one point is required")
    if X.shape[1] != J:
        raise DimensionError("coarsening points", J, X.shape[1])
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    rows = augment(X)
    keep, dedup_map, _ = dedup_rows(rows)
    hyper = rows[keep]
    H = hyper / np.linalg.norm(hyper, axis=1)[:, None]

    with tempfile.TemporaryDirectory(prefix="cells-") as spill:
        labels, W = _incremental(H, box, eps_r, method, spill_dir=spill, progress=progress)
        labels = np.array(labels)

    witnesses = np.empty_like(W)
    r_star = np.empty(labels.shape[0])
    ok = np.ones(labels.shape[0], dtype=bool)
    for i in range(labels.shape[0]):
        res = _solve_cell(labels[i, :, None] * H, box, eps_r, hint=W[i])
        if res.status is not Status.FEASIBLE:
            logger.warning("final LP for label %s returned %s; dropped", label_string(labels[i]), res.status.value)
            ok[i] = False
            continue
        witnesses[i], r_star[i] = res.witness, res.r_star
    return CellCatalog(labels[ok], witnesses[ok], hyper, dedup_map, r_star[ok], {"method": method})


def coarsen_les(points, J: int, catalog: Optional[CellCatalog] = None, **kwargs):
    """One LES expert per cell of the coarsening points, plus a uniform expert."""
    if catalog is None:
        catalog = enumerate_cells(points, J, **kwargs)
    elif catalog.J != J:
        raise DimensionError("catalog", J, catalog.J)
    return catalog.experts() + [UniformRandom()]


def brute_force_labels(points, J: int, box: float = DEFAULT_BOX, eps_r: float = EPS_R):
    """All feasible labels by solving the LP for each of the ``2^t`` sign vectors.

    Exponential; intended for small cross-checks only.
    """
    rows = augment(np.atleast_2d(points))
    keep, dedup_map, _ = dedup_rows(rows)
    H = rows[keep] / np.linalg.norm(rows[keep], axis=1)[:, None]
    m = H.shape[0]
    out = []
    for code in range(2**m):
        signs = np.array([1 if not (code >> (m - 1 - i)) & 1 else -1 for i in range(m)], dtype=np.int8)
        if solve_rows(signs[:, None] * H, np.ones(m), box=box, eps_r=eps_r).status is Status.FEASIBLE:
            out.append(signs)
    return np.array(out, dtype=np.int8).reshape(-1, m)
