"""Toy-scale rectified-flow laboratory.

Time convention: t = 1 is pure noise, t = 0 is data, and the straight
interpolation z_t = (1 - t) x0 + t * eps connects them.  A velocity field
v(z, t) drives the sampling ODE dz = v dt integrated from t = 1 down to
t = 0; the matching training target is eps - x0.  The stochastic sampler
shares the ODE's per-time marginals by compensating the injected noise
with the score, which for this interpolation is recoverable from the
velocity alone:

    score(z, t) = -(z + (1 - t) v) / t

Point-mass (Dirac) data admits closed forms throughout, which the test
suite uses as oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

T_FLOOR = 1e-3
DEFAULT_ODE_STEPS = 25  # inference default
DEFAULT_GUIDANCE_SCALE = 4.0  # recorded config constant, not used by the math


@dataclass(frozen=True)
class FlowState:
    z: np.ndarray
    t: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        if not np.all(np.isfinite(z)):
            raise ValueError("state vector must be finite")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must be in [0, 1], got {self.t}")
        object.__setattr__(self, "z", z)


class VelocityField:
    """Wraps an evaluator (z, t, condition) -> velocity of matching dimension."""

    def __init__(self, fn: Callable[[np.ndarray, float, np.ndarray | None], np.ndarray]):
        self._fn = fn

    def __call__(self, z: np.ndarray, t: float, condition: np.ndarray | None = None) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        v = np.asarray(self._fn(z, t, condition), dtype=np.float64)
        if v.shape != z.shape:
            raise ValueError(f"velocity shape {v.shape} != state shape {z.shape}")
        return v


def interpolate_state(x0: np.ndarray, eps: np.ndarray, t: float) -> FlowState:
    """z_t = (1 - t) x0 + t * eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError("x0 and eps must share a shape")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must be in [0, 1]")
    return FlowState(z=(1.0 - t) * x0 + t * eps, t=t)


def dirac_velocity(c: np.ndarray) -> VelocityField:
    """Exact velocity field for point-mass data at c.

    Along any interpolation path the value is constant in t (eps - c), so
    Euler integration of the ODE is exact for every step count.
    """
    c = np.asarray(c, dtype=np.float64)

    def fn(z: np.ndarray, t: float, condition: np.ndarray | None) -> np.ndarray:
        tt = max(t, T_FLOOR)
        return (z - (1.0 - tt) * c) / tt - c

    return VelocityField(fn)


def fm_loss(
    field: VelocityField,
    batch: Sequence[tuple],
) -> float:
    """Mean squared flow-matching residual over a batch.

    Batch items are (x0, eps, t) or (x0, eps, t, condition); the condition
    is forwarded to the field, which is how source/reference conditioning
    enters without changing the loss shape.
    """
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    total = 0.0
    for item in batch:
        x0, eps, t = item[0], item[1], item[2]
        condition = item[3] if len(item) > 3 else None
        state = interpolate_state(x0, eps, t)
        target = np.asarray(eps, dtype=np.float64) - np.asarray(x0, dtype=np.float64)
        r = field(state.z, state.t, condition) - target
        total += float(np.dot(r.ravel(), r.ravel()))
    return total / len(batch)


def score_from_velocity(state: FlowState, v: np.ndarray) -> np.ndarray:
    """Marginal score implied by the optimal velocity: -(z + (1 - t) v) / t."""
    if state.t <= T_FLOOR:
        raise ValueError(f"score undefined at t <= {T_FLOOR}")
    v = np.asarray(v, dtype=np.float64)
    return -(state.z + (1.0 - state.t) * v) / state.t


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def sample_ode(
    field: VelocityField,
    z1: np.ndarray,
    steps: int = DEFAULT_ODE_STEPS,
    condition: np.ndarray | None = None,
) -> np.ndarray:
    """Euler integration of dz = v dt from t = 1 to t = 0."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z = np.asarray(z1, dtype=np.float64).copy()
    dt = 1.0 / steps
    for k in range(steps):
        t = 1.0 - k * dt
        z = z - dt * field(z, t, condition)
    return z


@dataclass(frozen=True)
class NoiseSchedule:
    """sigma(t) controlling sampler stochasticity; sigma = 0 recovers the ODE."""

    sigma: Callable[[float], float]
    scale: float
    name: str = "custom"


def _clip_t(t: float) -> float:
    return min(max(t, T_FLOOR), 1.0 - T_FLOOR)


def sqrt_ratio_schedule(scale: float) -> NoiseSchedule:
    """sigma(t) = scale * sqrt(t / (1 - t)), t clipped to [1e-3, 1 - 1e-3]."""
    return NoiseSchedule(
        sigma=lambda t: scale * float(np.sqrt(_clip_t(t) / (1.0 - _clip_t(t)))),
        scale=scale,
        name="sqrt_ratio",
    )


def constant_schedule(scale: float) -> NoiseSchedule:
    return NoiseSchedule(sigma=lambda t: scale, scale=scale, name="constant")


def sqrt_schedule(scale: float) -> NoiseSchedule:
    return NoiseSchedule(sigma=lambda t: scale * float(np.sqrt(_clip_t(t))), scale=scale, name="sqrt")


SCHEDULES = {
    "sqrt_ratio": sqrt_ratio_schedule,
    "constant": constant_schedule,
    "sqrt": sqrt_schedule,
}


def sample_sde(
    field: VelocityField,
    z1: np.ndarray,
    steps: int,
    schedule: NoiseSchedule,
    seed: int,
    condition: np.ndarray | None = None,
) -> np.ndarray:
    """Euler-Maruyama integration of the marginal-preserving reverse SDE.

    Drift is v - (sigma_t^2 / 2) * score with the score recovered from the
    velocity; diffusion adds sigma_t * sqrt(dt) Gaussian increments.  A
    zero schedule reproduces sample_ode bit for bit (the score and noise
    terms are skipped entirely, leaving the identical Euler update).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    z = np.asarray(z1, dtype=np.float64).copy()
    dt = 1.0 / steps
    for k in range(steps):
        t = 1.0 - k * dt
        v = field(z, t, condition)
        sigma = schedule.sigma(t)
        if sigma == 0.0:
            z = z - dt * v
            continue
        t_eff = max(t, T_FLOOR)
        score = -(z + (1.0 - t_eff) * v) / t_eff
        drift = v - 0.5 * sigma * sigma * score
        z = z - dt * drift + sigma * np.sqrt(dt) * rng.standard_normal(z.shape)
    return z


# ---------------------------------------------------------------------------
# Fitting a per-time-bin affine field
# ---------------------------------------------------------------------------


@dataclass
class AffineBinField(VelocityField):
    """v(z, t) = a[bin(t)] * z + b[bin(t)], elementwise per dimension."""

    a: np.ndarray  # (bins, d)
    b: np.ndarray  # (bins, d)
    loss_curve: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        VelocityField.__init__(self, self._eval)

    @property
    def bins(self) -> int:
        return self.a.shape[0]

    def bin_of(self, t: float) -> int:
        return min(int(t * self.bins), self.bins - 1)

    def _eval(self, z: np.ndarray, t: float, condition: np.ndarray | None) -> np.ndarray:
        k = self.bin_of(t)
        return self.a[k] * z + self.b[k]


def fit_field(
    data: Sequence[np.ndarray] | np.ndarray,
    t_bins: int = 8,
    iters: int = 50_000,
    lr: float = 1e-2,
    seed: int = 0,
    batch_size: int = 64,
    tail_fraction: float = 0.25,
) -> AffineBinField:
    """Minibatch SGD on the Monte-Carlo flow-matching loss.

    Gradients of the squared residual w.r.t. the per-bin affine
    coefficients are analytic (2 r z and 2 r).  Parameters are averaged
    over the trailing ``tail_fraction`` of iterations, which removes most
    SGD noise around the optimum.  Raises on non-finite loss, reporting
    the iteration index.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.size == 0:
        raise ValueError("data must be non-empty")
    n, d = arr.shape

    rng = np.random.default_rng(seed)
    a = np.zeros((t_bins, d))
    b = np.zeros((t_bins, d))
    losses = np.zeros(iters)
    tail_start = int(iters * (1.0 - tail_fraction))
    a_acc = np.zeros_like(a)
    b_acc = np.zeros_like(b)
    tail_n = 0

    for it in range(iters):
        x0 = arr[rng.integers(0, n, batch_size)]
        eps = rng.standard_normal((batch_size, d))
        t = rng.uniform(0.0, 1.0, batch_size)
        k = np.minimum((t * t_bins).astype(np.int64), t_bins - 1)
        z = (1.0 - t)[:, None] * x0 + t[:, None] * eps
        r = a[k] * z + b[k] - (eps - x0)
        loss = float(np.mean(np.sum(r * r, axis=1)))
        if not np.isfinite(loss):
            raise ValueError(f"non-finite loss at iteration {it}")
        losses[it] = loss

        grad_a = np.zeros_like(a)
        grad_b = np.zeros_like(b)
        np.add.at(grad_a, k, 2.0 * r * z)
        np.add.at(grad_b, k, 2.0 * r)
        a -= lr * grad_a / batch_size
        b -= lr * grad_b / batch_size

        if it >= tail_start:
            a_acc += a
            b_acc += b
            tail_n += 1

    return AffineBinField(a=a_acc / tail_n, b=b_acc / tail_n, loss_curve=losses)


def gaussian_optimal_coefficient(t: float) -> float:
    """Closed-form optimal affine slope for standard-normal data."""
    return (2.0 * t - 1.0) / ((1.0 - t) ** 2 + t**2)
