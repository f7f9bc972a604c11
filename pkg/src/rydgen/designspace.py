"""Binary-pixel designs, a synthetic filter objective and the Renyi benchmark."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import mcmc
from .autoenc import AutoencoderModel, binarize, decode, latent_indices
from .bits import all_bitstrings
from .errors import CapacityError, DivergenceError
from .metrics import (
    DEFAULT_ALPHA,
    DEFAULT_BINS,
    BinnedDistribution,
    bin_costs,
    bin_index,
    kl_divergence,
    renyi_divergence,
    total_variation,
)

MAX_TARGET_N = 16
DEFAULT_ANGLES = 16
DEFAULT_THETA_STAR = 0.14 * np.pi
DEFAULT_SAMPLES = 5000

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


@dataclass(frozen=True)
class Design:
    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2 or p.size == 0:
            raise ValueError("a design is a non-empty 2-D grid")
        if not np.isin(p, (0, 1)).all():
            raise ValueError("design pixels must be 0 or 1")
        object.__setattr__(self, "pixels", p.astype(np.uint8))

    @property
    def shape(self):
        return self.pixels.shape

    @property
    def flat(self) -> np.ndarray:
        return self.pixels.ravel()


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def design_hash(design) -> str:
    pixels = np.asarray(getattr(design, "pixels", design), dtype=np.uint8)
    return f"{fnv1a64(pixels.tobytes(order='C')):016x}"


def filter_cost(ideal, actual, dtheta) -> float:
    """1 - sum_k (T_ideal - T_actual) * dtheta."""
    return float(1.0 - np.sum((np.asarray(ideal) - np.asarray(actual)) * dtheta))


@dataclass(frozen=True, eq=False)
class Objective:
    """Design cost.

    ``synthetic-filter``: the actual transmissivity at angle k is
    ``logistic(w_k . x / P)`` and the cost is the discretized filter figure
    of merit over ``K`` angles with normalized measure ``1/K``, so costs lie
    in [0, 2].  ``external-table``: costs are looked up by design hash.
    """

    kind: str
    shape: tuple
    angles: np.ndarray = None
    ideal: np.ndarray = None
    weights: np.ndarray = None
    seed: int = 0
    table: dict = field(default_factory=dict)

    @property
    def dtheta(self) -> float:
        return 1.0 / self.angles.size

    def transmissivity(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.weights.shape[1])
        a = x @ self.weights.T / self.weights.shape[1]
        return 0.5 * (1.0 + np.tanh(0.5 * a))

    def costs(self, designs) -> np.ndarray:
        """Costs of a stack of binary designs."""
        return evaluate_many(self, designs)

    def relaxed_cost(self, x):
        """Cost on real-valued pixels in [0, 1] and its gradient (rows = designs)."""
        if self.kind != "synthetic-filter":
            x = np.asarray(x, dtype=float)
            costs = np.array([evaluate(self, binarize(row).reshape(self.shape)) for row in x])
            return costs, np.zeros_like(x)
        x = np.asarray(x, dtype=float).reshape(-1, self.weights.shape[1])
        t = self.transmissivity(x)
        cost = 1.0 - ((self.ideal[None, :] - t) * self.dtheta).sum(axis=1)
        grad = (t * (1.0 - t) * self.dtheta) @ self.weights / self.weights.shape[1]
        return cost, grad


def synthetic_objective(shape, angles: int = DEFAULT_ANGLES, theta_star: float = DEFAULT_THETA_STAR, seed: int = 0, gain: float = 2.0, spread: float = 0.3) -> Objective:
    """Seeded stand-in for an electromagnetic filter simulation.

    Angles are midpoints of K equal cells on [0, pi/2]; the ideal response is
    1 below ``theta_star`` and 0 above.  Each angle's weight vector is a
    shared random direction signed by the ideal response plus independent
    per-angle noise of relative size ``spread``.
    """
    shape = tuple(int(s) for s in shape)
    p = int(np.prod(shape))
    theta = (np.arange(angles) + 0.5) * (0.5 * np.pi / angles)
    ideal = (theta < theta_star).astype(float)
    rng = np.random.Generator(np.random.Philox(seed))
    base = rng.standard_normal(p)
    noise = rng.standard_normal((angles, p))
    sign = np.where(ideal > 0, 1.0, -1.0)
    w = gain * np.sqrt(p) * (sign[:, None] * base[None, :] + spread * noise)
    return Objective("synthetic-filter", shape, theta, ideal, w, seed)


def evaluate(objective: Objective, design) -> float:
    pixels = np.asarray(getattr(design, "pixels", design))
    if pixels.shape != tuple(objective.shape):
        raise ValueError(f"design shape {pixels.shape} does not match objective shape {objective.shape}")
    if objective.kind == "external-table":
        key = design_hash(pixels)
        if key not in objective.table:
            raise KeyError(f"design hash {key} missing from external table")
        return float(objective.table[key])
    t = objective.transmissivity(pixels.ravel())[0]
    return filter_cost(objective.ideal, t, objective.dtheta)


def evaluate_many(objective: Objective, designs) -> np.ndarray:
    arr = np.asarray(designs)
    if objective.kind == "synthetic-filter":
        flat = arr.reshape(arr.shape[0], -1).astype(float)
        cost, _ = objective.relaxed_cost(flat)
        return cost
    return np.array([evaluate(objective, d.reshape(objective.shape)) for d in arr])


def load_external_table(path, shape) -> Objective:
    table = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'hash,cost'")
            table[row[0].strip().lower()] = float(row[1])
    return Objective("external-table", tuple(shape), table=table)


def write_external_table(path, designs, costs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for d, c in zip(designs, costs):
            w.writerow([design_hash(d), repr(float(c))])


# --------------------------------------------------------------------------
# dataset files


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and chr(data[pos]).isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not chr(data[pos]).isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path.name}: truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5":
        raise ValueError(f"{path.name}: only binary PGM (P5) is supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path.name}: PGM maxval must be 255")
    raw = np.frombuffer(data[pos:pos + w * h], dtype=np.uint8)
    if raw.size != w * h:
        raise ValueError(f"{path.name}: PGM pixel data truncated")
    return (raw.reshape(h, w) >= 128).astype(np.uint8)


def _read_csv_grid(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            vals = [v.strip() for v in row]
            if any(v not in ("0", "1") for v in vals):
                raise ValueError(f"{path.name}: CSV designs must contain only 0 and 1")
            rows.append([int(v) for v in vals])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path.name}: ragged or empty CSV grid")
    return np.array(rows, dtype=np.uint8)


def load_dataset(path) -> list:
    """Read every .pgm / .csv design in a directory, in filename order."""
    root = Path(path)
    designs, shape, first = [], None, None
    for f in sorted(p for p in root.iterdir() if p.suffix.lower() in (".pgm", ".csv")):
        try:
            pix = _read_pgm(f) if f.suffix.lower() == ".pgm" else _read_csv_grid(f)
        except (OSError, UnicodeDecodeError) as exc:
            raise ValueError(f"{f.name}: unreadable ({exc})") from exc
        if shape is None:
            shape, first = pix.shape, f.name
        elif pix.shape != shape:
            raise ValueError(f"{f.name}: shape {pix.shape} differs from {first} {shape}")
        designs.append(Design(pix))
    return designs


def write_pgm(path, design) -> None:
    pix = np.asarray(getattr(design, "pixels", design), dtype=np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((pix * 255).astype(np.uint8).tobytes())


def write_csv_design(path, design) -> None:
    pix = np.asarray(getattr(design, "pixels", design), dtype=np.uint8)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(pix.tolist())


def synthetic_designs(count: int, shape=(8, 8), seed: int = 0, smoothing: int = 2) -> list:
    """Mirror-symmetric blob patterns: smoothed Gaussian noise thresholded at 0."""
    h, w = shape
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for _ in range(count):
        f = rng.standard_normal((h, w))
        for _ in range(smoothing):
            f = (f + np.roll(f, 1, 0) + np.roll(f, -1, 0) + np.roll(f, 1, 1) + np.roll(f, -1, 1)) / 5.0
        f = f + f[::-1, :] + f[:, ::-1] + f[::-1, ::-1]
        out.append(Design((f > 0).astype(np.uint8)))
    return out


# --------------------------------------------------------------------------
# Boltzmann target and benchmark


def latent_costs(model: AutoencoderModel, objective: Objective) -> np.ndarray:
    """Cost of the thresholded decoding of every latent bitstring."""
    if model.latent_n > MAX_TARGET_N:
        raise CapacityError(f"latent enumeration limited to n <= {MAX_TARGET_N}")
    designs = binarize(decode(model, all_bitstrings(model.latent_n).astype(float)))
    return evaluate_many(objective, designs.reshape(-1, *objective.shape))


def boltzmann_bins(costs, tau: float, bins: int = DEFAULT_BINS) -> BinnedDistribution:
    if tau <= 0:
        raise ValueError("temperature must be positive")
    costs = np.asarray(costs, dtype=float)
    w = np.exp(-(costs - costs.min()) / tau)
    return bin_costs(costs, w, bins)


def decoder_boltzmann_target(model, objective, tau: float, bins: int = DEFAULT_BINS, costs=None) -> BinnedDistribution:
    """Binned Boltzmann mass of the decoded designs over all 2**n latents."""
    if model is not None and model.latent_n > MAX_TARGET_N:
        raise CapacityError(f"latent enumeration limited to n <= {MAX_TARGET_N}")
    costs = latent_costs(model, objective) if costs is None else costs
    return boltzmann_bins(costs, tau, bins)


def validation_accept(c_current: float, c_proposed: float, tau: float, rng) -> bool:
    """MH acceptance on design costs."""
    return mcmc.mh_accept(c_proposed - c_current, tau, rng)


@dataclass
class BenchmarkReport:
    tau: float
    alpha: float
    depth: int
    sampler: str
    renyi: float
    kl: float
    tv: float
    edges: np.ndarray
    p_hat: np.ndarray
    mu_hat: np.ndarray

    def table_rows(self):
        for k in range(self.p_hat.size):
            yield (repr(float(self.edges[k])), repr(float(self.edges[k + 1])), repr(float(self.p_hat[k])), repr(float(self.mu_hat[k])))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "p_hat", "mu_hat"])
            w.writerows(self.table_rows())
            w.writerow(["# summary", f"tau={self.tau!r}", f"renyi_nats={self.renyi!r}", f"kl_nats={self.kl!r}"])


def renyi_benchmark(
    model: AutoencoderModel,
    channel: mcmc.Channel,
    objective: Objective,
    tau: float,
    alpha: float = DEFAULT_ALPHA,
    n_samples: int = DEFAULT_SAMPLES,
    bins: int = DEFAULT_BINS,
    seed: int = 0,
    dataset=None,
    starts=None,
    oracle: bool = False,
    costs=None,
) -> BenchmarkReport:
    """Divergence of channel-generated design costs from the decoder Boltzmann target.

    Chains start from the encoder's quantized latents of ``dataset`` (a
    start is drawn uniformly per sample), or from explicit latent indices in
    ``starts``; with neither, every chain starts at the all-zero latent.
    Each chain applies the channel's proposal sampler for ``channel.depth``
    steps with MH acceptance on the decoded design cost at ``tau``.  With
    ``oracle=True`` samples are drawn exactly from the target instead.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    if alpha == 1:
        raise ValueError("alpha must differ from 1")
    costs = latent_costs(model, objective) if costs is None else np.asarray(costs, dtype=float)
    mu = boltzmann_bins(costs, tau, bins)
    rng = mcmc.make_rng(seed)
    n = channel.n
    if oracle:
        w = np.exp(-(costs - costs.min()) / tau)
        finals = rng.choice(costs.size, size=n_samples, p=w / w.sum())
    else:
        if starts is None and dataset is not None:
            starts = latent_indices(model, np.vstack([np.asarray(getattr(d, "pixels", d)).ravel() for d in dataset]))
        starts = np.zeros(1, dtype=np.int64) if starts is None else np.asarray(starts, dtype=np.int64)
        picks = starts[rng.integers(0, starts.size, size=n_samples)]
        design_channel = channel.with_(energy=costs, tau=tau)
        finals = mcmc.apply_channel_batch(design_channel, picks, rng)
    counts = np.bincount(bin_index(costs[finals], mu.edges), minlength=mu.bins).astype(float)
    p_hat = counts / counts.sum()
    bad = np.nonzero((p_hat > 0) & (mu.probs <= 0))[0]
    if bad.size:
        raise DivergenceError(
            f"target mass underflows in bins {bad.tolist()} at tau={tau}; edges {mu.edges[bad].tolist()}", bad
        )
    return BenchmarkReport(
        tau=tau,
        alpha=alpha,
        depth=channel.depth,
        sampler="oracle" if oracle else channel.sampler,
        renyi=renyi_divergence(p_hat, mu.probs, alpha),
        kl=kl_divergence(p_hat, mu.probs),
        tv=total_variation(p_hat, mu.probs),
        edges=mu.edges,
        p_hat=p_hat,
        mu_hat=mu.probs,
    )
