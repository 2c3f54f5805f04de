"""Euler-Maruyama schemes with stable or Pareto increments, and the exact OU transition.

Random-number layout: trajectory ``i`` reads stream ``i`` and the block at
counter ``step * d + component`` supplies every uniform that component needs
at that step.  A run is therefore a pure function of its configuration.
"""

from __future__ import annotations

import enum
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np

from .drifts import KIND_CUSTOM, DriftModel
from .errors import ConfigInvalid, DimensionMismatch, DomainError, TrajectoryDiverged
from .rng import RngStream, fill_uniforms
from .stable import (
    StableSpec,
    log_tail_from_abs,
    sample_stable_vector,
    stable_tables,
)

BINARY_MAGIC = b"HTEM1"


class Scheme(str, enum.Enum):
    STABLE = "StableEM"
    PARETO = "ParetoEM"
    EXACT_OU = "ExactOU"

    @property
    def code(self) -> int:
        return _SCHEME_CODES[self]


_SCHEME_CODES = {Scheme.STABLE: 0, Scheme.PARETO: 1, Scheme.EXACT_OU: 2}


@dataclass(frozen=True)
class SchemeConfig:
    """Stepsize, horizon, scheme and sampling layout of one ensemble run."""

    eta: float
    n_steps: int
    scheme: Scheme
    x0: tuple[float, ...] = (0.0,)
    seed: int = 0
    n_traj: int = 1
    stream0: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        if not (0.0 < self.eta <= 1.0):
            raise ConfigInvalid(f"eta must lie in (0, 1], got {self.eta}")
        if self.n_steps < 0 or self.n_traj < 1:
            raise ConfigInvalid("n_steps must be >= 0 and n_traj >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigInvalid("seed must be an unsigned 64-bit integer")

    @property
    def dim(self) -> int:
        return len(self.x0)

    @property
    def horizon(self) -> float:
        return self.eta * self.n_steps

    def gate_holds(self, model: DriftModel) -> bool:
        """Whether ``eta`` is below the stepsize gate of the drift."""
        return self.eta <= model.stepsize_gate()

    def check(self, model: DriftModel, spec: StableSpec) -> None:
        if model.dim != self.dim or spec.dim != self.dim:
            raise DimensionMismatch(
                f"x0 has dimension {self.dim}, drift {model.dim}, noise {spec.dim}")
        if self.scheme is Scheme.EXACT_OU and not model.is_linear:
            raise ConfigInvalid("ExactOU requires the OU drift")


@dataclass
class TrajectoryEnsemble:
    terminal_states: np.ndarray
    config: SchemeConfig
    wall_time: float
    gate_ok: bool
    paths: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_traj(self) -> int:
        return self.terminal_states.shape[0]

    def to_csv(self, path) -> None:
        write_csv(path, self.terminal_states)

    def to_binary(self, path) -> None:
        write_binary(path, self.terminal_states)


# ---------------------------------------------------------------------------
# Export formats


def write_csv(path, states: np.ndarray) -> None:
    """Header ``x0,...,x{d-1}`` then one row per trajectory; ``path`` may be an open text file."""
    states = np.atleast_2d(states)
    lines = [",".join(f"x{j}" for j in range(states.shape[1]))]
    lines += [",".join(repr(float(v)) for v in row) for row in states]
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def write_binary(path, states: np.ndarray) -> None:
    """``HTEM1`` magic, u64 rows, u64 cols, then row-major little-endian f64."""
    states = np.ascontiguousarray(np.atleast_2d(states), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<QQ", *states.shape))
        fh.write(states.tobytes())


def read_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:5] != BINARY_MAGIC:
        raise ConfigInvalid(f"{path}: not an HTEM1 file")
    if len(raw) < 21:
        raise ConfigInvalid(f"{path}: truncated header")
    rows, cols = struct.unpack("<QQ", raw[5:21])
    if len(raw) - 21 != 8 * rows * cols:
        raise ConfigInvalid(f"{path}: payload has {len(raw) - 21} bytes, expected {8 * rows * cols}")
    data = np.frombuffer(raw, dtype="<f8", offset=21)
    return data.reshape(rows, cols).astype(float)


# ---------------------------------------------------------------------------
# Single steps (reference implementations)


def _finite_or_raise(v: np.ndarray, step: int) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise TrajectoryDiverged(0, step)
    return v


def step_stable(y, model: DriftModel, eta: float, xi, step: int = 0) -> np.ndarray:
    """``y + eta b(y) + xi`` with ``xi`` a stable increment of scale ``eta^(1/alpha)``."""
    y = np.asarray(y, dtype=float)
    return _finite_or_raise(y + eta * model(y) + np.asarray(xi, dtype=float), step)


def step_pareto(u, model: DriftModel, eta: float, zeta, spec: StableSpec, step: int = 0) -> np.ndarray:
    """``u + eta b(u) + (eta^(1/alpha) / sigma) zeta`` with symmetric Pareto ``zeta``."""
    u = np.asarray(u, dtype=float)
    noise = eta ** (1.0 / spec.alpha) / spec.sigma * np.asarray(zeta, dtype=float)
    return _finite_or_raise(u + eta * model(u) + noise, step)


def ou_transition_scale(theta: float, t: float, alpha: float) -> float:
    """Stable scale of ``int_0^t e^(-theta (t-s)) dL_s``: ``((1 - e^(-alpha theta t)) / (alpha theta))^(1/alpha)``."""
    if not (theta > 0 and t >= 0):
        raise DomainError("need theta > 0 and t >= 0")
    return (-math.expm1(-alpha * theta * t) / (alpha * theta)) ** (1.0 / alpha)


def exact_ou_step(x, theta: float, t: float, spec: StableSpec, stream: RngStream) -> np.ndarray:
    """Draw from the exact OU transition law over time ``t``."""
    if not t > 0:
        raise DomainError("t must be positive")
    x = np.asarray(x, dtype=float)
    scale = ou_transition_scale(theta, t, spec.alpha)
    return math.exp(-theta * t) * x + sample_stable_vector(stream, spec, scale)


def em_linear_scale(theta: float, eta: float, n_steps: int, alpha: float) -> float:
    """Stable scale of the StableEM chain on the OU drift after ``n_steps`` steps.

    ``Y_N = (1 - theta eta)^N x + eta^(1/alpha) sum_j (1 - theta eta)^j xi_j``;
    the weighted sum of i.i.d. unit stable variables is stable with scale
    ``eta^(1/alpha) (sum_j |1 - theta eta|^(alpha j))^(1/alpha)``.
    """
    q = abs(1.0 - theta * eta) ** alpha
    if q == 1.0:
        s = float(n_steps)
    else:
        s = -math.expm1(n_steps * math.log(q)) / (1.0 - q) if q > 0 else 1.0
    return (eta * s) ** (1.0 / alpha) if n_steps > 0 else 0.0


# ---------------------------------------------------------------------------
# Step-major engine
#
# Each step draws one block per trajectory (compiled Philox loop), maps the
# uniforms to unit noise with numpy's vectorised transcendental functions and
# applies a compiled update.  Trajectories are cut into fixed-size chunks that
# a thread pool processes independently; the chunk size never depends on the
# thread count, so results are bit-identical under any HTEM_THREADS.

CHUNK = 1 << 16


@nb.njit(inline="always", cache=True, error_model="numpy")
def _drift(kind, param, y):
    if kind == 0:
        return -param * y
    if kind == 1:
        return -y + param * math.sin(y)
    return -y + 2.0 * math.tanh(y)


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _first_bad(y):
    acc = 0.0
    for i in range(y.shape[0]):
        acc += y[i] - y[i]
    if acc == 0.0:
        return -1
    for i in range(y.shape[0]):
        if not math.isfinite(y[i]):
            return i
    return -1


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _em_update(kind, param, eta, scale, y, noise):
    for i in range(y.shape[0]):
        y[i] = y[i] + eta * _drift(kind, param, y[i]) + scale * noise[i]


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _linear_update(decay, scale, y, noise):
    for i in range(y.shape[0]):
        y[i] = decay * y[i] + scale * noise[i]


class _Draws:
    """Reusable buffers turning Philox blocks into unit stable or Pareto noise."""

    def __init__(self, n: int, alpha: float, seed: int, stream0: int = 0):
        self.alpha = alpha
        self.seed = seed
        self.stream0 = stream0
        self.u0 = np.empty(n)
        self.u1 = np.empty(n)
        self.sign = np.empty(n)
        self.a = np.empty(n)
        self.b = np.empty(n)
        self.out = np.empty(n)

    def uniforms(self, counter: int) -> None:
        fill_uniforms(self.seed, self.stream0, counter, self.u0, self.u1, self.sign)

    def pareto(self, counter: int) -> np.ndarray:
        """``sign * u0^(-1/alpha)``; leaves ``log u0`` in ``self.b``."""
        self.uniforms(counter)
        np.log(self.u0, out=self.b)
        np.multiply(self.b, -1.0 / self.alpha, out=self.out)
        np.exp(self.out, out=self.out)
        np.multiply(self.out, self.sign, out=self.out)
        return self.out

    def stable(self, counter: int) -> np.ndarray:
        """Chambers-Mallows-Stuck unit stable draws from ``(u0, u1)``."""
        self.uniforms(counter)
        al = self.alpha
        a, b, out = self.a, self.b, self.out
        np.subtract(self.u0, 0.5, out=a)
        a *= math.pi
        # log(cos((1-al) a) / W) * (1-al)/al with W = -log u1
        np.multiply(a, 1.0 - al, out=out)
        np.cos(out, out=out)
        np.log(self.u1, out=b)
        np.divide(out, b, out=out)
        np.negative(out, out=out)
        np.log(out, out=out)
        out *= (1.0 - al) / al
        # minus log(cos a) / al
        np.cos(a, out=b)
        np.log(b, out=b)
        b *= 1.0 / al
        out -= b
        np.exp(out, out=out)
        np.multiply(a, al, out=b)
        np.sin(b, out=b)
        out *= b
        return out


def _threads() -> int:
    env = os.environ.get("HTEM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigInvalid(f"HTEM_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _map_chunks(n: int, fn):
    """Run ``fn(stream0, count)`` over fixed chunks of ``range(n)`` and concatenate along axis 0."""
    starts = list(range(0, n, CHUNK))
    jobs = [(s0, min(CHUNK, n - s0)) for s0 in starts]
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        parts = [fn(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(col, axis=0) for col in zip(*parts))
    return np.concatenate(parts, axis=0)


def _noise_scale(config: SchemeConfig, model: DriftModel, spec: StableSpec):
    eta = config.eta
    if config.scheme is Scheme.EXACT_OU:
        return math.exp(-model.theta1 * eta), ou_transition_scale(model.theta1, eta, spec.alpha)
    if config.scheme is Scheme.PARETO:
        return 1.0, eta ** (1.0 / spec.alpha) / spec.sigma
    return 1.0, eta ** (1.0 / spec.alpha)


def _engine_chunk(config: SchemeConfig, model: DriftModel, spec: StableSpec, keep_path: bool,
                  stream0: int, count: int):
    d = config.dim
    stream0 = config.stream0 + stream0
    draws = _Draws(count, spec.alpha, config.seed, stream0)
    state = np.empty((d, count))
    state[:] = np.asarray(config.x0)[:, None]
    paths = np.empty((config.n_steps + 1, d, count)) if keep_path else None
    if keep_path:
        paths[0] = state
    eta = config.eta
    custom = model.kind_code == KIND_CUSTOM
    kind, param = model.kind_code, float(model.param)
    decay, scale = _noise_scale(config, model, spec)
    for m in range(config.n_steps):
        drift = eta * model.func(state.T).T if custom else None
        for c in range(d):
            counter = m * d + c
            noise = draws.pareto(counter) if config.scheme is Scheme.PARETO else draws.stable(counter)
            y = state[c]
            if config.scheme is Scheme.EXACT_OU:
                _linear_update(decay, scale, y, noise)
            elif custom:
                y += drift[c] + scale * noise
            else:
                _em_update(kind, param, eta, scale, y, noise)
            bad = _first_bad(y)
            if bad >= 0:
                raise TrajectoryDiverged(stream0 + bad, m)
        if keep_path:
            paths[m + 1] = state
    out = np.ascontiguousarray(state.T)
    if keep_path:
        return out, np.ascontiguousarray(paths.transpose(2, 0, 1))
    return out


def simulate_ensemble(config: SchemeConfig, model: DriftModel, spec: StableSpec,
                      full_path: bool = False) -> TrajectoryEnsemble:
    """Run ``n_traj`` trajectories; trajectory ``i`` uses stream ``stream0 + i``.

    Only terminal states are kept unless ``full_path`` is set, in which case
    ``paths`` has shape ``(n_traj, n_steps + 1, d)``.  Any non-finite state
    raises :class:`TrajectoryDiverged`.
    """
    config.check(model, spec)
    t0 = time.perf_counter()
    res = _map_chunks(config.n_traj,
                      lambda s0, cnt: _engine_chunk(config, model, spec, full_path, s0, cnt))
    out, paths = res if full_path else (res, None)
    return TrajectoryEnsemble(out, config, time.perf_counter() - t0, config.gate_holds(model), paths)


# ---------------------------------------------------------------------------
# Coupled pairs for convergence studies
#
# Estimating W1 from two independent heavy-tailed ensembles has a noise floor
# of order n^(1/alpha - 1), far above the discretisation errors of interest.
# The pairs below share randomness so that the empirical W1 between the two
# ensembles tracks the true distance.  Each function returns the scheme states
# and the reference states, both of shape (n_traj, d), and reads the same
# stream/counter layout as simulate_ensemble.


@nb.njit(inline="always", cache=True, error_model="numpy")
def _r_lookup(v, r):
    # branch-free cubic Lagrange read of r on the uniform grid [0, 45]
    n = r.shape[0]
    pos = min(v, 45.0) * ((n - 1) / 45.0)
    i = min(max(np.int64(pos), 1), n - 3)
    t = pos - i
    return (-t * (t - 1.0) * (t - 2.0) / 6.0 * r[i - 1]
            + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * r[i]
            - (t + 1.0) * t * (t - 2.0) / 2.0 * r[i + 1]
            + (t + 1.0) * t * (t - 1.0) / 6.0 * r[i + 2])


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _pareto_ou_pair_update(theta, eta, pareto_scale, decay, ou_scale, r_table, u, x, z, log_u0):
    for i in range(u.shape[0]):
        # same operation order as the engine kernel, so the chains match bit for bit
        u[i] = u[i] + eta * _drift(0, theta, u[i]) + pareto_scale * z[i]
        # the stable quantile at the same tail probability is |z| r(v) / sigma
        x[i] = decay * x[i] + ou_scale * z[i] * _r_lookup(-log_u0[i], r_table)


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _pareto_from_increment(xi, coarse_unit, v_table, alpha, sigma, out):
    inv_alpha = -1.0 / alpha
    for i in range(xi.shape[0]):
        lt = log_tail_from_abs(abs(xi[i]) * coarse_unit, v_table, alpha, sigma)
        z = math.exp(lt * inv_alpha)
        out[i] = -z if xi[i] < 0.0 else z


def _pair_states(x0, count):
    a = np.empty((x0.size, count))
    a[:] = x0[:, None]
    return a, a.copy()


def _check_pair(a, b, m, stream0):
    for arr in (a, b):
        bad = _first_bad(arr.ravel())
        if bad >= 0:
            raise TrajectoryDiverged(stream0 + bad % arr.shape[-1], m)


def _run_pair(n_traj, chunk_fn):
    y, x = _map_chunks(n_traj, chunk_fn)
    return y, x


def pareto_vs_exact_ou(theta: float, spec: StableSpec, eta: float, n_steps: int, x0, seed: int,
                       n_traj: int) -> tuple[np.ndarray, np.ndarray]:
    """ParetoEM on the OU drift against the exact OU chain on the same grid.

    At every step the Pareto draw and the exact stable innovation are the
    quantile transforms of one uniform (and one sign), so large jumps of the
    two chains coincide and only the small-jump mismatch separates them.
    The Pareto chain is bit-for-bit the one produced by
    :func:`simulate_ensemble` with the same seed.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    r_table = stable_tables(spec.alpha).r
    pareto_scale = eta ** (1.0 / spec.alpha) / spec.sigma
    decay = math.exp(-theta * eta)
    ou_scale = ou_transition_scale(theta, eta, spec.alpha) / spec.sigma

    def chunk(stream0, count):
        u, x = _pair_states(x0, count)
        draws = _Draws(count, spec.alpha, seed, stream0)
        for m in range(n_steps):
            for c in range(d):
                z = draws.pareto(m * d + c)
                _pareto_ou_pair_update(theta, eta, pareto_scale, decay, ou_scale, r_table,
                                       u[c], x[c], z, draws.b)
            if (m + 1) % 64 == 0 or m + 1 == n_steps:
                _check_pair(u, x, m, stream0)
        return u.T.copy(), x.T.copy()

    return _run_pair(n_traj, chunk)


def stable_vs_exact_ou_stepwise(theta: float, spec: StableSpec, eta: float, n_steps: int, x0,
                                seed: int, n_traj: int) -> tuple[np.ndarray, np.ndarray]:
    """StableEM and the exact OU chain driven by the same unit stable draws.

    The StableEM chain equals :func:`simulate_ensemble` output for the same seed.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    noise_scale = eta ** (1.0 / spec.alpha)
    decay = math.exp(-theta * eta)
    ou_scale = ou_transition_scale(theta, eta, spec.alpha)

    def chunk(stream0, count):
        y, x = _pair_states(x0, count)
        draws = _Draws(count, spec.alpha, seed, stream0)
        for m in range(n_steps):
            for c in range(d):
                s = draws.stable(m * d + c)
                _em_update(0, theta, eta, noise_scale, y[c], s)
                _linear_update(decay, ou_scale, x[c], s)
            if (m + 1) % 64 == 0 or m + 1 == n_steps:
                _check_pair(y, x, m, stream0)
        return y.T.copy(), x.T.copy()

    return _run_pair(n_traj, chunk)


def stable_vs_exact_ou_aggregated(theta: float, spec: StableSpec, eta: float, n_steps: int, x0,
                                  seed: int, n_traj: int) -> tuple[np.ndarray, np.ndarray]:
    """Terminal StableEM and exact OU states drawn from their closed-form laws.

    On the OU drift both terminal laws are stable (see :func:`em_linear_scale`
    and :func:`ou_transition_scale`), so each ensemble is an exact sample of
    the corresponding law.  Both are built from one set of unit draws, which
    realises the monotone coupling.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    t = eta * n_steps
    y_mean, y_scale = (1.0 - theta * eta) ** n_steps * x0, em_linear_scale(theta, eta, n_steps, spec.alpha)
    x_mean, x_scale = math.exp(-theta * t) * x0, ou_transition_scale(theta, t, spec.alpha)

    def chunk(stream0, count):
        draws = _Draws(count, spec.alpha, seed, stream0)
        s = np.empty((count, d))
        for c in range(d):
            s[:, c] = draws.stable(c)
        return y_mean + y_scale * s, x_mean + x_scale * s

    return _run_pair(n_traj, chunk)


def scheme_vs_fine_reference(model: DriftModel, spec: StableSpec, scheme: Scheme, eta: float,
                             n_steps: int, x0, seed: int, n_traj: int,
                             refine: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """A coarse scheme against StableEM at stepsize ``eta / refine`` on a shared path.

    The coarse stable increment is the sum of the ``refine`` fine increments
    it spans (same law as a direct draw).  For ParetoEM the coarse Pareto draw
    is the quantile transform of that increment's tail probability.  The
    fine chain reads counters ``(m * refine + j) * d + c``.
    """
    scheme = Scheme(scheme)
    if scheme is Scheme.EXACT_OU:
        raise ConfigInvalid("the fine reference pairs with StableEM or ParetoEM")
    if model.kind_code == KIND_CUSTOM:
        raise ConfigInvalid("fine-grid reference runs only on the shipped drifts")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    kind, param = model.kind_code, float(model.param)
    v_table = stable_tables(spec.alpha).v_of_y if scheme is Scheme.PARETO else None
    h = eta / refine
    fine_scale = h ** (1.0 / spec.alpha)
    coarse_unit = eta ** (-1.0 / spec.alpha)
    pareto_scale = eta ** (1.0 / spec.alpha) / spec.sigma

    def chunk(stream0, count):
        y, x = _pair_states(x0, count)
        draws = _Draws(count, spec.alpha, seed, stream0)
        xi = np.empty(count)
        z = np.empty(count)
        for m in range(n_steps):
            for c in range(d):
                xi[:] = 0.0
                for j in range(refine):
                    s = draws.stable((m * refine + j) * d + c)
                    s *= fine_scale
                    xi += s
                    _em_update(kind, param, h, 1.0, x[c], s)
                if scheme is Scheme.STABLE:
                    _em_update(kind, param, eta, 1.0, y[c], xi)
                else:
                    _pareto_from_increment(xi, coarse_unit, v_table, spec.alpha, spec.sigma, z)
                    _em_update(kind, param, eta, pareto_scale, y[c], z)
            _check_pair(y, x, m, stream0)
        return y.T.copy(), x.T.copy()

    return _run_pair(n_traj, chunk)
