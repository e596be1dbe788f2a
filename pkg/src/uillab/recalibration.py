"""Per-class gradient recalibration for the CE + entropy-minimization objective.

For every head row ``c`` the two loss gradients ``g_ce`` and ``g_em`` are
merged into one update:

* multi-objective: ``g = g_ce + gamma * g_em``; ``||g||`` is the class magnitude.
* direction: the sum of unit directions ``u_ce + gamma * u_em`` is pushed by a
  conflict-averse offset of length ``beta = rho * ||u_ce + gamma * u_em||``.
  The offset direction is the normalized convex combination
  ``lam * u_ce + (1 - lam) * u_em`` where ``lam`` minimizes the CAGrad dual
  ``<g_lam, g0> + beta * ||g_lam||`` on ``[0, 1]``.
* magnitude: ``w_c = 1 - (||g^c|| - min) / (max - min)`` over all classes of
  the step, clamped to ``[w_floor, 1]``.

Direction and magnitude are decoupled: the final row gradient is
``w_c * ||g^c|| * direction``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GradientBundle

__all__ = [
    "RecalConfig",
    "RecalibratedGradient",
    "DirectionResult",
    "gcs",
    "combine",
    "worst_case_alignment",
    "solve_offset",
    "direction_recalibrate",
    "magnitude_recalibrate",
    "recalibrate",
    "DIAG_COLUMNS",
]

BISECT_ITERS = 64
_TINY = 1e-300

DIAG_COLUMNS = ("step", "class_id", "gcs", "mag_pre", "mag_post", "w", "lambda_star")


@dataclass(frozen=True)
class RecalConfig:
    gamma: float = 0.01
    rho: float = 0.5
    w_floor: float = 0.0
    enable_direction: bool = True
    enable_magnitude: bool = True
    enable_multi_objective: bool = True

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.rho >= 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not 0 <= self.w_floor <= 1:
            raise ValueError(f"w_floor must lie in [0, 1], got {self.w_floor}")

    @property
    def effective_gamma(self) -> float:
        return self.gamma if self.enable_multi_objective else 0.0


@dataclass(frozen=True)
class DirectionResult:
    direction: np.ndarray
    lambda_star: float
    degenerate: bool


@dataclass(frozen=True, eq=False)
class RecalibratedGradient:
    """Final per-row update and the diagnostics of one recalibration step."""

    classes: tuple[int, ...]
    weights: np.ndarray
    biases: np.ndarray
    gcs: np.ndarray
    mag_pre: np.ndarray
    mag_post: np.ndarray
    w: np.ndarray
    lambda_star: np.ndarray
    degenerate: np.ndarray

    def diagnostics(self, step: int) -> list[tuple]:
        return [
            (step, c, float(self.gcs[i]), float(self.mag_pre[i]), float(self.mag_post[i]),
             float(self.w[i]), float(self.lambda_star[i]))
            for i, c in enumerate(self.classes)
        ]


def _unit_rows(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(n > 0, n, 1.0)
    return np.where(n > 0, v / safe, 0.0), n[..., 0]


def gcs(u, v, return_degenerate: bool = False):
    """Cosine similarity of two gradients.

    A zero input yields 0 (flagged as degenerate when requested) rather
    than an error.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return (0.0, True) if return_degenerate else 0.0
    val = float(np.clip(np.dot(u / nu, v / nv), -1.0, 1.0))
    return (val, False) if return_degenerate else val


def _gcs_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ua, na = _unit_rows(a)
    ub, nb = _unit_rows(b)
    return np.clip((ua * ub).sum(axis=-1), -1.0, 1.0)


def combine(g_ce, g_em, gamma: float) -> np.ndarray:
    g_ce = np.asarray(g_ce, dtype=np.float64)
    g_em = np.asarray(g_em, dtype=np.float64)
    if g_ce.shape != g_em.shape:
        raise ValueError(f"shape mismatch: {g_ce.shape} vs {g_em.shape}")
    return g_ce + gamma * g_em


def worst_case_alignment(u1, u2, g0, beta: float, lam) -> np.ndarray:
    """``min_i <u_i, g0 + beta * g_lam / ||g_lam||>`` for scalar or array ``lam``.

    This is the quantity the offset maximizes; tests evaluate it on a grid.
    """
    lam = np.asarray(lam, dtype=np.float64)[..., None]
    g = lam * u1 + (1 - lam) * u2
    gh, _ = _unit_rows(g)
    d = g0 + beta * gh
    return np.minimum(d @ u1, d @ u2)


def solve_offset(u1: np.ndarray, u2: np.ndarray, g0: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Row-wise minimizer ``lam`` of ``<g_lam, g0> + beta * ||g_lam||`` on [0, 1].

    Arrays are ``(k, d)`` with ``beta`` of shape ``(k,)``.  The dual is convex
    in ``lam``, so its derivative is non-decreasing and bisection on the
    derivative's sign locates the minimizer to machine precision.  A value
    that is only close in objective is not enough here: the worst-case
    alignment has a kink at the optimum and would inherit the error.
    """
    diff = u1 - u2
    lin = (diff * g0).sum(axis=1)

    def slope(lam):
        g = lam[:, None] * u1 + (1 - lam[:, None]) * u2
        n = np.linalg.norm(g, axis=1)
        curv = np.where(n > 0, (g * diff).sum(axis=1) / np.where(n > 0, n, 1.0), 0.0)
        return lin + beta * curv

    k = len(u1)
    lo, hi = np.zeros(k), np.ones(k)
    for _ in range(BISECT_ITERS):
        mid = (lo + hi) / 2
        up = slope(mid) > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    lam = (lo + hi) / 2
    lam = np.where(slope(np.zeros(k)) >= 0, 0.0, lam)
    return np.where(slope(np.ones(k)) <= 0, 1.0, lam)


def _direction_rows(g_ce: np.ndarray, g_em: np.ndarray, gamma: float, rho: float):
    u1, n1 = _unit_rows(g_ce)
    u2, n2 = _unit_rows(g_em)
    g0 = u1 + gamma * u2
    beta = rho * np.linalg.norm(g0, axis=1)
    degenerate = (n1 == 0) & (n2 == 0)
    lam = solve_offset(u1, u2, g0, beta)
    gw, _ = _unit_rows(lam[:, None] * u1 + (1 - lam[:, None]) * u2)
    if rho == 0:
        out, _ = _unit_rows(g0)
    else:
        out, _ = _unit_rows(g0 + beta[:, None] * gw)
    out[degenerate] = 0.0
    return out, lam, degenerate


def direction_recalibrate(g_ce, g_em, cfg: RecalConfig) -> DirectionResult:
    """Conflict-averse unit direction for one class row."""
    g_ce = np.atleast_2d(np.asarray(g_ce, dtype=np.float64))
    g_em = np.atleast_2d(np.asarray(g_em, dtype=np.float64))
    if g_ce.shape != g_em.shape:
        raise ValueError(f"shape mismatch: {g_ce.shape} vs {g_em.shape}")
    out, lam, deg = _direction_rows(g_ce, g_em, cfg.effective_gamma, cfg.rho)
    return DirectionResult(out[0], float(lam[0]), bool(deg[0]))


def magnitude_recalibrate(magnitudes, cfg: RecalConfig | None = None, w_floor: float | None = None):
    """Min-max derived rescale factors.

    ``magnitudes`` may be a mapping ``class_id -> ||g^c||`` (a mapping of
    factors is returned) or an array (an array is returned).
    """
    if w_floor is None:
        w_floor = cfg.w_floor if cfg is not None else 0.0
    if isinstance(magnitudes, dict):
        keys = list(magnitudes)
        w = magnitude_recalibrate(np.array([magnitudes[k] for k in keys], dtype=np.float64),
                                  w_floor=w_floor)
        return {k: float(v) for k, v in zip(keys, w)}
    m = np.asarray(magnitudes, dtype=np.float64)
    if m.size == 0:
        raise ValueError("need at least one magnitude")
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.ones_like(m)
    w = 1.0 - (m - lo) / (hi - lo)
    return np.clip(w, w_floor, 1.0)


def recalibrate(bundle: GradientBundle, cfg: RecalConfig) -> RecalibratedGradient:
    """Turn a CE/EM gradient bundle into the final per-row update."""
    gamma = cfg.effective_gamma
    g = combine(bundle.ce_w, bundle.em_w, gamma)
    gb = bundle.ce_b + gamma * bundle.em_b
    mag_pre = np.linalg.norm(g, axis=1)
    k = len(bundle.classes)

    w = magnitude_recalibrate(mag_pre, w_floor=cfg.w_floor) if cfg.enable_magnitude else np.ones(k)
    if cfg.enable_direction:
        direction, lam, degenerate = _direction_rows(bundle.ce_w, bundle.em_w, gamma, cfg.rho)
        mag_post = w * mag_pre
        final = mag_post[:, None] * direction
    else:
        lam = np.full(k, np.nan)
        degenerate = mag_pre == 0
        final = g if not cfg.enable_magnitude else w[:, None] * g
        mag_post = w * mag_pre
    bias = gb if not cfg.enable_magnitude else w * gb

    return RecalibratedGradient(
        classes=bundle.classes,
        weights=final,
        biases=bias,
        gcs=_gcs_rows(bundle.ce_w, bundle.em_w),
        mag_pre=mag_pre,
        mag_post=mag_post,
        w=w,
        lambda_star=lam,
        degenerate=degenerate,
    )
