"""Monotone semi-implicit solver for a stochastic reaction-diffusion
equation on the unit-volume 1-D torus with finitely many noise modes.

    du = [Laplacian(u) + f(u, xi)] dt + sum_k sigma_k(xi) dW^k.

One step is drift-explicit / diffusion-implicit:

    u+ = (I - dt * L_h)^{-1} [u + dt f(clamp(u)) + sqrt(dt) sum_k sigma_k g_k]

with L_h the 3-point circulant Laplacian scaled by N^2, solved by FFT
diagonalization.  The implicit factor is the inverse of an M-matrix and
hence order-preserving unconditionally; the explicit drift map preserves
pointwise order iff dt * L_R <= 1 where L_R bounds the negative slope of
f on the clamp interval.  That product guard is enforced at config time,
so the whole scheme is provably monotone.

Noise draws come from a counter-based generator keyed by (seed, step):
paths and modes are indexed by array position inside one block, which
makes runs bit-reproducible and lets two initial conditions share the
identical noise path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

ASSUMPTION_GRID = 10_000
ASSUMPTION_RANGE = 50.0


class SpdeError(ValueError):
    pass


class ConfigError(SpdeError):
    pass


class NonFinite(SpdeError):
    def __init__(self, step_index):
        self.step_index = step_index
        super().__init__(f"non-finite field values at step {step_index} "
                         f"(dt too large?)")


class NotOrdered(SpdeError):
    def __init__(self, pair_index):
        self.pair_index = pair_index
        super().__init__(f"field pair {pair_index} is not pointwise ordered")


# ---------------------------------------------------------------------------
# drift and noise specifications
# ---------------------------------------------------------------------------

def _drift_function(name, params):
    if name == "cubic":
        K = float(params.get("K", 1.0))
        return lambda x, xi: K * x - x ** 3
    if name == "linear":
        a = float(params.get("a", -1.0))
        return lambda x, xi: a * x
    if name == "zero":
        return lambda x, xi: np.zeros_like(x)
    raise ConfigError(f"unknown drift {name!r}")


@dataclass(frozen=True)
class DriftSpec:
    name: str
    params: dict
    K1: float
    K2: float
    K3: float

    def __post_init__(self):
        if self.K1 <= 0 or self.K2 <= 0:
            raise ConfigError("need K1, K2 > 0")
        _drift_function(self.name, self.params)  # validates the name

    def f(self, x, xi=None):
        return _drift_function(self.name, self.params)(x, xi)

    def check_dissipativity(self, R: float = ASSUMPTION_RANGE,
                            n_grid: int = ASSUMPTION_GRID):
        """Sampled one-sided growth and one-sided Lipschitz bounds.

        Returns (ok, report); report carries the worst margins and Cf.
        """
        xs = np.linspace(-R, R, n_grid)
        fx = self.f(xs)
        m1 = (self.K1 - self.K2 * xs ** 2 - xs * fx).min()
        slopes = np.diff(fx) / np.diff(xs)
        m2 = (self.K3 - slopes).min()
        cf = float(max(0.0, fx[xs >= 0].max(initial=0.0)))
        ok = bool(m1 >= -1e-9 and m2 >= -1e-9)
        return ok, {"min_growth_margin": float(m1),
                    "min_lipschitz_margin": float(m2), "Cf": cf}

    def negative_slope_bound(self, R: float) -> float:
        """L_R = max(0, -min f' on [-R, R]), from a dense sample."""
        xs = np.linspace(-R, R, ASSUMPTION_GRID)
        slopes = np.diff(self.f(xs)) / np.diff(xs)
        return float(max(0.0, -slopes.min()))

    def to_json_obj(self):
        return {"name": self.name, "params": dict(self.params),
                "K1": self.K1, "K2": self.K2, "K3": self.K3}

    @staticmethod
    def from_json_obj(obj):
        allowed = {"name", "params", "K1", "K2", "K3"}
        _reject_unknown(obj, allowed, "drift")
        return DriftSpec(name=obj["name"], params=dict(obj.get("params", {})),
                         K1=float(obj["K1"]), K2=float(obj["K2"]),
                         K3=float(obj["K3"]))


def _sigma_values(spec, grid):
    kind = spec.get("kind")
    amp = float(spec.get("amp", 1.0))
    if kind == "const":
        return np.full_like(grid, amp)
    if kind == "cos":
        return amp * np.cos(2 * np.pi * float(spec.get("freq", 1)) * grid)
    if kind == "sin":
        return amp * np.sin(2 * np.pi * float(spec.get("freq", 1)) * grid)
    raise ConfigError(f"unknown noise profile {kind!r}")


@dataclass(frozen=True)
class NoiseSpec:
    m: int
    sigma: tuple          # tuple of profile dicts (closed-form expressions)
    lambda_k: tuple | None = None

    def __post_init__(self):
        if self.m != len(self.sigma):
            raise ConfigError("m must match the number of noise profiles")
        object.__setattr__(self, "sigma", tuple(dict(s) for s in self.sigma))
        if self.lambda_k is not None:
            object.__setattr__(self, "lambda_k",
                               tuple(float(v) for v in self.lambda_k))

    def tabulate(self, N: int) -> np.ndarray:
        grid = np.arange(N) / N
        if self.m == 0:
            return np.zeros((0, N))
        return np.stack([_sigma_values(s, grid) for s in self.sigma])

    def lambda_min(self, N: int) -> float | None:
        """min over the grid of sum_k lambda_k sigma_k, if lambdas given."""
        if self.lambda_k is None:
            return None
        tab = self.tabulate(N)
        return float((np.asarray(self.lambda_k) @ tab).min()) if self.m else 0.0

    def check_assumption_b(self, N: int, eps: float) -> bool:
        lm = self.lambda_min(N)
        return lm is not None and lm > eps

    def to_json_obj(self):
        obj = {"m": self.m, "sigma": [dict(s) for s in self.sigma]}
        if self.lambda_k is not None:
            obj["lambda_k"] = list(self.lambda_k)
        return obj

    @staticmethod
    def from_json_obj(obj):
        _reject_unknown(obj, {"m", "sigma", "lambda_k"}, "noise")
        return NoiseSpec(m=int(obj["m"]), sigma=tuple(obj.get("sigma", [])),
                         lambda_k=tuple(obj["lambda_k"])
                         if obj.get("lambda_k") is not None else None)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise SpdeError("non-finite field values")
        object.__setattr__(self, "values", v)
        self.values.setflags(write=False)

    @property
    def N(self):
        return len(self.values)

    def l2_norm_sq(self) -> float:
        return float((self.values ** 2).mean())

    def l2_norm(self) -> float:
        return math.sqrt(self.l2_norm_sq())

    def leq(self, other: "Field") -> bool:
        return bool(np.all(self.values <= other.values))


def l2_sq(values: np.ndarray) -> np.ndarray:
    """Quadrature-weighted squared L2 norm along the grid axis."""
    return (np.asarray(values, dtype=float) ** 2).mean(axis=-1)


def phi(values) -> np.ndarray | float:
    """Signed square functional 2 * integral of x^2 sign(x)."""
    v = np.asarray(values, dtype=float)
    return 2.0 * (v ** 2 * np.sign(v)).mean(axis=-1)


def psi(values) -> np.ndarray | float:
    return 4.0 * math.sqrt(2.0) * (1.0 + l2_sq(values))


def field_distance_sq(x, y) -> float:
    """d(x, y) = squared L2 distance with unit-volume quadrature."""
    return float(l2_sq(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


def phi_condition_check(pairs, tol: float = 1e-10):
    """Verify the premetric sandwich and the square-root Hoelder bound on a
    list of pointwise-ordered field pairs (x below y)."""
    results = []
    for idx, (x, y) in enumerate(pairs):
        xv = x.values if isinstance(x, Field) else np.asarray(x, dtype=float)
        yv = y.values if isinstance(y, Field) else np.asarray(y, dtype=float)
        if not np.all(xv <= yv):
            raise NotOrdered(idx)
        d = field_distance_sq(xv, yv)
        gap = float(phi(yv) - phi(xv))
        sandwich = -tol <= d <= gap + tol
        holder = abs(float(phi(xv) - phi(yv))) <= \
            d ** 0.5 * (psi(xv) + psi(yv)) + tol
        results.append({"pair": idx, "d": d, "phi_gap": gap,
                        "sandwich": bool(sandwich), "holder": bool(holder)})
    verdict = all(r["sandwich"] and r["holder"] for r in results)
    return verdict, results


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _reject_unknown(obj, allowed, where):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} field(s): {sorted(unknown)}")


@dataclass(frozen=True)
class SpdeConfig:
    N: int
    dt: float
    T: float
    drift: DriftSpec
    noise: NoiseSpec
    seed: int = 0
    n_paths: int = 1
    clamp_R: float = 20.0
    scheme: str = "semi_implicit"

    def __post_init__(self):
        if self.scheme != "semi_implicit":
            raise ConfigError(f"unsupported scheme {self.scheme!r}")
        if self.N < 2 or self.dt <= 0 or self.T < 0 or self.n_paths < 1:
            raise ConfigError("invalid grid/time parameters")
        L_R = self.drift.negative_slope_bound(self.clamp_R)
        if self.dt * L_R > 1.0 + 1e-12:
            raise ConfigError(
                f"monotonicity restriction violated: dt * L_R = "
                f"{self.dt * L_R:.6g} > 1 (L_R = {L_R:.6g})")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def with_seed(self, seed: int) -> "SpdeConfig":
        return replace(self, seed=int(seed))

    def to_json_obj(self):
        return {"N": self.N, "dt": self.dt, "T": self.T,
                "drift": self.drift.to_json_obj(),
                "noise": self.noise.to_json_obj(),
                "seed": self.seed, "n_paths": self.n_paths,
                "clamp_R": self.clamp_R, "scheme": self.scheme}

    @staticmethod
    def from_json_obj(obj) -> "SpdeConfig":
        allowed = {"N", "dt", "T", "drift", "noise", "seed", "n_paths",
                   "clamp_R", "scheme"}
        _reject_unknown(obj, allowed, "config")
        return SpdeConfig(
            N=int(obj["N"]), dt=float(obj["dt"]), T=float(obj["T"]),
            drift=DriftSpec.from_json_obj(obj["drift"]),
            noise=NoiseSpec.from_json_obj(obj["noise"]),
            seed=int(obj.get("seed", 0)),
            n_paths=int(obj.get("n_paths", 1)),
            clamp_R=float(obj.get("clamp_R", 20.0)),
            scheme=obj.get("scheme", "semi_implicit"))


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def noise_draws(seed: int, step_index: int, n_paths: int, m: int) -> np.ndarray:
    """Standard-normal block for one time step, counter-keyed by
    (seed, step); paths and modes are identified by array position."""
    gen = np.random.Generator(
        np.random.Philox(key=np.array([seed, step_index], dtype=np.uint64)))
    return gen.standard_normal((n_paths, m))


class Stepper:
    """Precomputed tables for repeated steps of one configuration."""

    def __init__(self, config: SpdeConfig):
        self.config = config
        N = config.N
        self.grid = np.arange(N) / N
        self.sigma = config.noise.tabulate(N)          # (m, N)
        j = np.arange(N // 2 + 1)
        lam = -2.0 * N * N * (1.0 - np.cos(2.0 * np.pi * j / N))
        self.implicit_factor = 1.0 / (1.0 - config.dt * lam)
        self.sqrt_dt = math.sqrt(config.dt)

    def step(self, u: np.ndarray, draws: np.ndarray) -> np.ndarray:
        """One semi-implicit step of an ensemble u (paths on leading axes)."""
        cfg = self.config
        clamped = np.clip(u, -cfg.clamp_R, cfg.clamp_R)
        rhs = u + cfg.dt * cfg.drift.f(clamped, self.grid)
        if cfg.noise.m:
            rhs = rhs + self.sqrt_dt * (draws @ self.sigma)
        out = np.fft.irfft(np.fft.rfft(rhs, axis=-1) * self.implicit_factor,
                           n=cfg.N, axis=-1)
        return out


def step(u: Field, config: SpdeConfig, gaussian_draws) -> Field:
    """Single-field convenience wrapper around Stepper.step."""
    draws = np.asarray(gaussian_draws, dtype=float).reshape(1, -1)
    if draws.shape[1] != config.noise.m:
        raise ConfigError(f"expected {config.noise.m} gaussian draws")
    out = Stepper(config).step(u.values[None, :], draws)[0]
    if not np.all(np.isfinite(out)):
        raise NonFinite(0)
    return Field(out)


def simulate(config: SpdeConfig, u0, record_times, seed: int | None = None):
    """Run an ensemble and return {time: array (n_paths, N)} snapshots.

    u0 may be a Field (broadcast over paths) or an (n_paths, N) array.
    `seed` overrides config.seed, which is how a second initial condition
    rides the identical noise path (same seed) or an independent one.
    """
    seed = config.seed if seed is None else int(seed)
    u0v = u0.values if isinstance(u0, Field) else np.asarray(u0, dtype=float)
    if u0v.ndim == 1:
        U = np.broadcast_to(u0v, (config.n_paths, config.N)).copy()
    else:
        U = u0v.copy()
    steps_for = {}
    for t in record_times:
        k = int(round(t / config.dt))
        if abs(k * config.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"record time {t} is not a multiple of dt")
        steps_for.setdefault(k, float(t))
    n_total = max(steps_for, default=0)
    stepper = Stepper(config)
    out = {}
    if 0 in steps_for:
        out[steps_for[0]] = U.copy()
    for k in range(1, n_total + 1):
        draws = noise_draws(seed, k, U.shape[0], config.noise.m)
        U = stepper.step(U, draws)
        if not np.all(np.isfinite(U)):
            raise NonFinite(k)
        if k in steps_for:
            out[steps_for[k]] = U.copy()
    return out


def comparison_check(config: SpdeConfig, x: Field, y: Field, T: float,
                     n_paths: int) -> float:
    """Max pointwise order violation (u_x - u_y)+ over shared-noise pairs,
    all steps, all grid points."""
    if not x.leq(y):
        raise SpdeError("initial fields must satisfy x <= y pointwise")
    cfg = replace(config, T=T, n_paths=n_paths)
    stepper = Stepper(cfg)
    Ux = np.broadcast_to(x.values, (n_paths, cfg.N)).copy()
    Uy = np.broadcast_to(y.values, (n_paths, cfg.N)).copy()
    worst = 0.0
    for k in range(1, cfg.n_steps + 1):
        draws = noise_draws(cfg.seed, k, n_paths, cfg.noise.m)
        Ux = stepper.step(Ux, draws)
        Uy = stepper.step(Uy, draws)
        if not (np.all(np.isfinite(Ux)) and np.all(np.isfinite(Uy))):
            raise NonFinite(k)
        worst = max(worst, float((Ux - Uy).max()))
    return max(0.0, worst)
