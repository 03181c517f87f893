"""Daily-resolution GBM and Heston price simulation with reproducible per-path seeding.

Each path draws its normals from an independent substream seeded by
``master_seed XOR path_id``, so a path's trajectory does not depend on how the
batch is laid out or split across workers.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IntegrityError

PATHSET_MAGIC = b"EHFP"
PATHSET_VERSION = 1

# header: magic, version u32, n_paths u64, n_steps u64, s0 f64, seed u64
_HEADER = struct.Struct("<4sIQQdQ")


@dataclass(frozen=True)
class GBMParams:
    """Geometric Brownian motion drift and volatility (per year / per sqrt-year)."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class HestonParams:
    """Stochastic-volatility parameters.

    The Feller condition 2*kappa*theta >= sigma_v**2 is deliberately not
    enforced: the experiment scenarios violate it, which is why the variance
    discretization truncates at zero.
    """

    v0: float
    theta: float
    kappa: float
    mu: float
    sigma_v: float
    rho: float

    def __post_init__(self):
        if self.v0 < 0:
            raise ConfigurationError(f"v0 must be >= 0, got {self.v0}")
        if self.theta < 0:
            raise ConfigurationError(f"theta must be >= 0, got {self.theta}")
        if self.kappa <= 0:
            raise ConfigurationError(f"kappa must be > 0, got {self.kappa}")
        if self.sigma_v < 0:
            raise ConfigurationError(f"sigma_v must be >= 0, got {self.sigma_v}")
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigurationError(f"rho must be in [-1, 1], got {self.rho}")


#: Market scenarios used throughout the experiments.
LOW_VOL = HestonParams(v0=0.4, theta=0.4, kappa=1.0, mu=0.01, sigma_v=4.0, rho=-0.7)
HIGH_VOL = HestonParams(v0=0.8, theta=0.8, kappa=1.0, mu=0.01, sigma_v=4.0, rho=-0.7)


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    seed: int
    s0: float = 100.0
    n_steps: int = 30
    dt: float = 1.0 / 365.0

    def __post_init__(self):
        if self.s0 <= 0:
            raise ConfigurationError(f"s0 must be > 0, got {self.s0}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.n_paths < 1:
            raise ConfigurationError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")


@dataclass
class PathSet:
    """Simulated daily prices (and, for Heston, variances) for many trajectories.

    ``prices`` has shape [n_paths, n_steps + 1] with column 0 equal to s0.
    Arrays are frozen after construction; a PathSet is safe to share read-only.
    """

    prices: np.ndarray
    variances: np.ndarray | None
    s0: float
    seed: int
    path_ids: np.ndarray

    def __post_init__(self):
        self.prices = np.ascontiguousarray(self.prices, dtype=np.float64)
        if self.variances is not None:
            self.variances = np.ascontiguousarray(self.variances, dtype=np.float64)
            self.variances.setflags(write=False)
        self.path_ids = np.ascontiguousarray(self.path_ids, dtype=np.int64)
        self.prices.setflags(write=False)
        self.path_ids.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    @property
    def n_steps(self) -> int:
        return self.prices.shape[1] - 1

    def take(self, start: int, stop: int) -> "PathSet":
        """Row slice [start, stop) keeping global path ids."""
        var = None if self.variances is None else self.variances[start:stop]
        return PathSet(self.prices[start:stop], var, self.s0, self.seed,
                       self.path_ids[start:stop])


def split_pathset(paths: PathSet, n_train: int, n_test: int) -> tuple[PathSet, PathSet]:
    """Disjoint train/test split: first n_train rows for training, next n_test for testing."""
    if n_train + n_test > paths.n_paths:
        raise ConfigurationError(
            f"n_train + n_test = {n_train + n_test} exceeds {paths.n_paths} simulated paths")
    return paths.take(0, n_train), paths.take(n_train, n_train + n_test)


def _substream_normals(seed: int, path_ids: np.ndarray, n_steps: int) -> np.ndarray:
    """Per-path standard-normal draws, shape [len(path_ids), n_steps, 2].

    Column 0 drives the price, column 1 the orthogonal part of the variance
    shock. GBM consumes the same block layout so that a degenerate Heston run
    reproduces a GBM run pathwise under the same seed.
    """
    z = np.empty((len(path_ids), n_steps, 2))
    for j, pid in enumerate(path_ids):
        rng = np.random.default_rng(int(np.uint64(seed) ^ np.uint64(pid)))
        z[j] = rng.standard_normal((n_steps, 2))
    return z


def _resolve_range(cfg: SimConfig, path_range: tuple[int, int] | None) -> np.ndarray:
    if path_range is None:
        return np.arange(cfg.n_paths, dtype=np.int64)
    start, stop = path_range
    if not 0 <= start < stop <= cfg.n_paths:
        raise ConfigurationError(f"path_range {path_range} not within [0, {cfg.n_paths}]")
    return np.arange(start, stop, dtype=np.int64)


def simulate_gbm(params: GBMParams, cfg: SimConfig,
                 path_range: tuple[int, int] | None = None) -> PathSet:
    """Exact log-Euler GBM: S_{t+1} = S_t * exp((mu - sigma^2/2) dt + sigma sqrt(dt) Z)."""
    ids = _resolve_range(cfg, path_range)
    z = _substream_normals(cfg.seed, ids, cfg.n_steps)
    increments = (params.mu - 0.5 * params.sigma ** 2) * cfg.dt \
        + params.sigma * np.sqrt(cfg.dt) * z[:, :, 0]
    log_prices = np.log(cfg.s0) + np.cumsum(increments, axis=1)
    prices = np.empty((len(ids), cfg.n_steps + 1))
    prices[:, 0] = cfg.s0
    prices[:, 1:] = np.exp(log_prices)
    return PathSet(prices, None, cfg.s0, cfg.seed, ids)


def simulate_heston(params: HestonParams, cfg: SimConfig,
                    path_range: tuple[int, int] | None = None) -> PathSet:
    """Full-truncation Euler for the variance, log-Euler for the price.

    The raw variance state may go negative; drift, diffusion and the price leg
    all use v+ = max(v, 0), and only the truncated variance is stored.
    """
    ids = _resolve_range(cfg, path_range)
    n = len(ids)
    z = _substream_normals(cfg.seed, ids, cfg.n_steps)
    z1 = z[:, :, 0]
    z2 = params.rho * z1 + np.sqrt(1.0 - params.rho ** 2) * z[:, :, 1]

    prices = np.empty((n, cfg.n_steps + 1))
    v_raw = np.empty((n, cfg.n_steps + 1))
    prices[:, 0] = cfg.s0
    v_raw[:, 0] = params.v0
    sqrt_dt = np.sqrt(cfg.dt)
    for t in range(cfg.n_steps):
        v_plus = np.maximum(v_raw[:, t], 0.0)
        vol = np.sqrt(v_plus)
        prices[:, t + 1] = prices[:, t] * np.exp(
            (params.mu - 0.5 * v_plus) * cfg.dt + vol * sqrt_dt * z1[:, t])
        v_raw[:, t + 1] = v_raw[:, t] + params.kappa * (params.theta - v_plus) * cfg.dt \
            + params.sigma_v * vol * sqrt_dt * z2[:, t]
    variances = np.maximum(v_raw, 0.0)
    return PathSet(prices, variances, cfg.s0, cfg.seed, ids)


def save_pathset(paths: PathSet, filename) -> None:
    """Write the versioned little-endian binary PathSet format."""
    with open(filename, "wb") as fh:
        fh.write(_HEADER.pack(PATHSET_MAGIC, PATHSET_VERSION, paths.n_paths,
                              paths.n_steps, paths.s0, paths.seed))
        fh.write(np.ascontiguousarray(paths.prices, dtype="<f8").tobytes())
        flag = 1.0 if paths.variances is not None else 0.0
        fh.write(struct.pack("<d", flag))
        if paths.variances is not None:
            fh.write(np.ascontiguousarray(paths.variances, dtype="<f8").tobytes())


def load_pathset(filename) -> PathSet:
    with open(filename, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise IntegrityError(f"{filename}: truncated header")
    magic, version, n_paths, n_steps, s0, seed = _HEADER.unpack_from(raw, 0)
    if magic != PATHSET_MAGIC:
        raise IntegrityError(f"{filename}: bad magic {magic!r}")
    if version != PATHSET_VERSION:
        raise IntegrityError(f"{filename}: unsupported version {version}")
    n_vals = n_paths * (n_steps + 1)
    offset = _HEADER.size
    expect_min = offset + 8 * n_vals + 8
    if len(raw) < expect_min:
        raise IntegrityError(f"{filename}: truncated price block")
    prices = np.frombuffer(raw, dtype="<f8", count=n_vals, offset=offset).reshape(n_paths, n_steps + 1)
    offset += 8 * n_vals
    (flag,) = struct.unpack_from("<d", raw, offset)
    offset += 8
    variances = None
    if flag == 1.0:
        if len(raw) < offset + 8 * n_vals:
            raise IntegrityError(f"{filename}: truncated variance block")
        variances = np.frombuffer(raw, dtype="<f8", count=n_vals, offset=offset).reshape(n_paths, n_steps + 1)
    elif flag != 0.0:
        raise IntegrityError(f"{filename}: invalid variance flag {flag}")
    return PathSet(prices.copy(), None if variances is None else variances.copy(),
                   s0, seed, np.arange(n_paths, dtype=np.int64))


def pathset_to_csv(paths: PathSet, filename) -> None:
    """Debug export: one row per path, columns path_id, s_0..s_N."""
    with open(filename, "w", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id"] + [f"s_{t}" for t in range(paths.n_steps + 1)])
        for pid, row in zip(paths.path_ids, paths.prices):
            writer.writerow([int(pid)] + [repr(float(x)) for x in row])
