"""Self-supervised fitting of the per-point surface parameters.

Three losses drive the fit: a one-directional L1 chamfer from projected
queries to the cloud, the mean neighbor residual of each point's surfaces,
and a self-consistency term that makes the field shrink linearly along its
own displacement direction. All gradients are analytic; the optimizer is
Adam with a cosine learning-rate schedule. Given the same cloud, config and
seed, the loss trace is bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, pi

import numpy as np

from .core import PointCloud
from .errors import DivergenceError, InvalidInput
from .model import (GRAD_KEYS, ModelState, derive_params, field_backward,
                    field_forward, finalize_grads, new_accumulator,
                    residual_pairs_forward, select_all, _pairs_backward)

_NORM_GUARD = 1e-300
# Below this, a residual counts as exactly zero and gets the zero
# subgradient; keeps float noise at an exact fit from producing unit-length
# norm gradients that the optimizer would amplify.
_ZERO_TOL = 1e-12


@dataclass
class TrainConfig:
    steps: int
    lr0: float = 1e-3
    query_batch: int = 6000
    jitter: float = 0.03
    lambda_cd: float = 1.0
    lambda_local: float = 1.0
    lambda_udf: float = 1.0
    seed: int = 0
    select_period: int = 50
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    aux_residual: float = 0.1   # weight of the non-selected variants' residuals

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidInput("steps must be >= 0")
        if self.lr0 <= 0 or self.query_batch < 1 or self.select_period < 1:
            raise InvalidInput("lr0, query_batch and select_period must be positive")
        if not 0.0 <= self.jitter <= 0.1:
            raise InvalidInput("jitter must lie in [0, 0.1]")
        if min(self.lambda_cd, self.lambda_local, self.lambda_udf) < 0:
            raise InvalidInput("loss weights must be non-negative")


@dataclass
class LossReport:
    step: int
    lr: float
    l_cd: float
    l_local: float
    l_udf: float
    total: float

    CSV_HEADER = "step,lr,l_cd,l_local,l_udf,total"

    def csv_row(self) -> str:
        return (f"{self.step},{self.lr!r},{self.l_cd!r},{self.l_local!r},"
                f"{self.l_udf!r},{self.total!r}")


def sample_queries(cloud: PointCloud, m: int, jitter: float, rng) -> np.ndarray:
    """m queries: uniformly chosen cloud points plus U(-jitter, jitter) offsets."""
    if m < 1:
        raise InvalidInput("need at least one query")
    idx = rng.integers(0, len(cloud), m)
    offsets = rng.uniform(-jitter, jitter, (m, 3))
    return cloud.points[idx] + offsets


@dataclass
class UdfContext:
    """Frozen inputs of the field-consistency loss: the intermediate points,
    the target displacements, and the interpolation draws."""

    qtilde: np.ndarray
    target: np.ndarray
    alpha: np.ndarray


def udf_context(state: ModelState, queries, rng, derived=None) -> UdfContext:
    """Draw alpha ~ U(0.1, 0.9) and walk each query toward the surface.

    The endpoints of [0, 1] are excluded: alpha = 1 makes the 1/(1 - alpha)
    factor singular and alpha = 0 makes the term vacuous.
    """
    queries = np.asarray(queries, dtype=np.float64)
    s0, _ = field_forward(state, queries, derived=derived)
    alpha = rng.uniform(0.1, 0.9, queries.shape[0])
    qtilde = queries + alpha[:, None] * s0
    return UdfContext(qtilde=qtilde, target=s0, alpha=alpha)


def _loss_cd_into(state, derived, queries, acc, weight, field=None):
    m = queries.shape[0]
    if field is None:
        field = field_forward(state, queries, want_ctx=True, derived=derived)
    s, ctx = field
    y = queries + s
    _, nearest = state.cloud.tree.query(y, k=1, p=1, workers=-1)
    diff = y - state.cloud.points[nearest]
    value = float(np.abs(diff).sum(axis=1).mean())
    if weight != 0.0:
        g_y = np.where(np.abs(diff) > _ZERO_TOL,
                       np.sign(diff), 0.0) * (weight / m)
        field_backward(state, ctx, g_y, acc)
    return value


def _loss_local_into(state, derived, aux_residual, acc, weight):
    n, k1 = state.neighbors.shape
    sel = state.bank.selected
    value = 0.0
    for v in state.enabled:
        D, (sp, norms, groups) = residual_pairs_forward(state, v, derived)
        coef = np.where(sel == v, 1.0, aux_residual)
        value += float((coef * D).mean())
        if weight == 0.0:
            continue
        g_norm = np.repeat(coef, k1) * (weight / (n * k1))
        safe = np.maximum(norms, _NORM_GUARD)
        gs = np.where(norms[:, None] > _ZERO_TOL,
                      (g_norm / safe)[:, None] * sp, 0.0)
        _pairs_backward(derived, groups, gs, acc)
    return value


def _loss_udf_into(state, derived, ctx, acc, weight):
    m = ctx.qtilde.shape[0]
    st, fctx = field_forward(state, ctx.qtilde, want_ctx=True, derived=derived)
    inv = 1.0 / (1.0 - ctx.alpha)
    resid = st * inv[:, None] - ctx.target
    norms = np.linalg.norm(resid, axis=1)
    value = float(norms.mean())
    if weight != 0.0:
        safe = np.maximum(norms, _NORM_GUARD)
        g_st = np.where(norms[:, None] > _ZERO_TOL,
                        resid * (weight * inv / (safe * m))[:, None], 0.0)
        field_backward(state, fctx, g_st, acc)
    return value


def loss_cd(state: ModelState, queries):
    """One-directional L1 chamfer from {q + s(q)} to the cloud.

    The nearest cloud point is recomputed per call and held constant during
    differentiation.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.shape[0] < 1:
        raise InvalidInput("queries must be non-empty")
    derived = derive_params(state)
    acc = new_accumulator(state)
    value = _loss_cd_into(state, derived, queries, acc, 1.0)
    return value, finalize_grads(state, derived, acc)


def loss_local(state: ModelState, aux_residual: float = 0.1):
    """Mean selected-variant residual plus a small weight on the others.

    The auxiliary weight keeps non-selected candidates improving so a later
    re-selection can promote them.
    """
    derived = derive_params(state)
    acc = new_accumulator(state)
    value = _loss_local_into(state, derived, aux_residual, acc, 1.0)
    return value, finalize_grads(state, derived, acc)


def loss_udf(state: ModelState, queries=None, rng=None, *, ctx: UdfContext = None):
    """Mean of ||s(qtilde)/(1 - alpha) - s(q)||_2 over queries.

    s(q) acts as a constant target; gradients flow through s(qtilde) only.
    Pass a prebuilt context to pin (qtilde, target, alpha) across evaluations.
    """
    derived = derive_params(state)
    if ctx is None:
        if queries is None or rng is None:
            raise InvalidInput("either a context or (queries, rng) is required")
        ctx = udf_context(state, queries, rng, derived=derived)
    acc = new_accumulator(state)
    value = _loss_udf_into(state, derived, ctx, acc, 1.0)
    return value, finalize_grads(state, derived, acc)


def total_loss(state: ModelState, queries, ctx: UdfContext, cfg: TrainConfig):
    """Weighted total with per-term values and combined gradients.

    With `queries` and `ctx` pinned, the returned value is a deterministic
    function of the parameters, suitable for finite-difference checks.
    """
    derived = derive_params(state)
    acc = new_accumulator(state)
    lcd = _loss_cd_into(state, derived, queries, acc, cfg.lambda_cd)
    lloc = _loss_local_into(state, derived, cfg.aux_residual, acc,
                            cfg.lambda_local)
    ludf = _loss_udf_into(state, derived, ctx, acc, cfg.lambda_udf)
    total = cfg.lambda_cd * lcd + cfg.lambda_local * lloc + cfg.lambda_udf * ludf
    return total, (lcd, lloc, ludf), finalize_grads(state, derived, acc)


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """lr0 * 0.5 * (1 + cos(pi * step / total_steps))."""
    return lr0 * 0.5 * (1.0 + cos(pi * step / max(total_steps, 1)))


class Adam:
    """Adaptive-moment optimizer over the parameter bank arrays."""

    def __init__(self, bank, betas=(0.9, 0.999), eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = bank.zero_grads()
        self.v = bank.zero_grads()

    def step(self, bank, grads, lr):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in GRAD_KEYS:
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            getattr(bank, k)[...] -= lr * update


def fit(state: ModelState, cfg: TrainConfig):
    """Run cfg.steps optimizer iterations in place.

    Geometry selection reruns every cfg.select_period steps (including step
    zero). Aborts with DivergenceError on a non-finite loss, reporting the
    failing step and the last finite report.
    """
    rng = np.random.default_rng(cfg.seed)
    adam = Adam(state.bank, betas=cfg.betas, eps=cfg.eps)
    reports: list[LossReport] = []
    for t in range(cfg.steps):
        derived = derive_params(state)
        if t % cfg.select_period == 0:
            select_all(state, derived)
        queries = sample_queries(state.cloud, cfg.query_batch, cfg.jitter, rng)
        try:
            # one field evaluation serves both the chamfer term and the
            # consistency target
            s_q, fctx = field_forward(state, queries, want_ctx=True,
                                      derived=derived)
            alpha = rng.uniform(0.1, 0.9, cfg.query_batch)
            ctx = UdfContext(qtilde=queries + alpha[:, None] * s_q,
                             target=s_q, alpha=alpha)
            acc = new_accumulator(state)
            lcd = _loss_cd_into(state, derived, queries, acc, cfg.lambda_cd,
                                field=(s_q, fctx))
            lloc = _loss_local_into(state, derived, cfg.aux_residual, acc,
                                    cfg.lambda_local)
            ludf = _loss_udf_into(state, derived, ctx, acc, cfg.lambda_udf)
        except ValueError as err:
            # non-finite parameters surface as kd-tree query failures
            raise DivergenceError(t, reports[-1] if reports else None) from err
        total = (cfg.lambda_cd * lcd + cfg.lambda_local * lloc
                 + cfg.lambda_udf * ludf)
        if not np.isfinite(total):
            raise DivergenceError(t, reports[-1] if reports else None)
        grads = finalize_grads(state, derived, acc)
        lr = cosine_lr(t, cfg.steps, cfg.lr0)
        adam.step(state.bank, grads, lr)
        reports.append(LossReport(step=t, lr=lr, l_cd=lcd, l_local=lloc,
                                  l_udf=ludf, total=total))
    return state, reports
