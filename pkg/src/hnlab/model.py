"""Random potentials and the periodic Hatano-Nelson matrix."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


class ModelError(ValueError):
    """Invalid potential specification or matrix size."""


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ModelError(f"Uniform requires lo < hi, got lo={self.lo}, hi={self.hi}")

    def values(self) -> tuple[float, ...]:
        return (self.lo, self.hi)


@dataclass(frozen=True)
class Bernoulli:
    """Takes the values +w and -w with probability 1/2 each."""

    w: float

    def __post_init__(self):
        if self.w < 0:
            raise ModelError(f"Bernoulli requires w >= 0, got w={self.w}")

    def values(self) -> tuple[float, ...]:
        return (-self.w, self.w)


@dataclass(frozen=True)
class Constant:
    v: float

    def values(self) -> tuple[float, ...]:
        return (self.v,)


Distribution = Union[Uniform, Bernoulli, Constant]
_KINDS = {"uniform": Uniform, "bernoulli": Bernoulli, "constant": Constant}


@dataclass(frozen=True)
class PotentialSpec:
    distribution: Distribution
    background: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "background", tuple(float(a) for a in self.background))

    @property
    def bound(self) -> float:
        """Exact supremum A of |v_j + a_j|.

        |x + a| is convex in x, so over a Uniform interval the sup sits at an endpoint.
        """
        shifts = self.background or (0.0,)
        return float(max(abs(x + a) for x in self.distribution.values() for a in shifts))

    @property
    def nondegenerate(self) -> bool:
        d = self.distribution
        return isinstance(d, Uniform) or (isinstance(d, Bernoulli) and d.w > 0)

    def to_dict(self) -> dict:
        d = self.distribution
        kind = {Uniform: "uniform", Bernoulli: "bernoulli", Constant: "constant"}[type(d)]
        out = {"kind": kind, **d.__dict__}
        if self.background:
            out["background"] = list(self.background)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialSpec":
        data = dict(data)
        kind = data.pop("kind", None)
        if kind not in _KINDS:
            raise ModelError(f"unknown distribution kind {kind!r}")
        background = data.pop("background", ())
        try:
            dist = _KINDS[kind](**{k: float(v) for k, v in data.items()})
        except TypeError as exc:
            raise ModelError(f"bad parameters for {kind}: {sorted(data)}") from exc
        return cls(dist, tuple(background))


def uniform(lo: float, hi: float, background: Sequence[float] = ()) -> PotentialSpec:
    return PotentialSpec(Uniform(lo, hi), tuple(background))


def bernoulli(w: float, background: Sequence[float] = ()) -> PotentialSpec:
    return PotentialSpec(Bernoulli(w), tuple(background))


def constant(v: float = 0.0, background: Sequence[float] = ()) -> PotentialSpec:
    return PotentialSpec(Constant(v), tuple(background))


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Philox stream for realisation ``index`` of experiment ``seed``.

    Streams for distinct (seed, index) are independent and do not depend on
    the order in which they are created.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def draw(spec: PotentialSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    d = spec.distribution
    if isinstance(d, Uniform):
        v = rng.uniform(d.lo, d.hi, n)
    elif isinstance(d, Bernoulli):
        v = d.w * (2.0 * rng.integers(0, 2, n) - 1.0)
    else:
        v = np.full(n, float(d.v))
    if spec.background:
        bg = np.asarray(spec.background)
        v = v + np.resize(bg, n)
    return v


@dataclass(frozen=True)
class PotentialVector:
    values: np.ndarray = field(repr=False)
    seed: int
    spec: Optional[PotentialSpec]
    index: int = 0

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def bound(self) -> float:
        return float(np.max(np.abs(self.values))) if self.n else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["v"])
        w.writerows([repr(float(x))] for x in self.values)
        return buf.getvalue()


def sample_potential(spec: PotentialSpec, n: int, seed: int, index: int = 0) -> PotentialVector:
    if n < 1:
        raise ModelError(f"need n >= 1, got {n}")
    return PotentialVector(draw(spec, n, stream(seed, index)), seed, spec, index)


def fixed_potential(values: Sequence[float]) -> PotentialVector:
    """Wrap an explicit potential (tests, deterministic examples)."""
    return PotentialVector(np.asarray(values, dtype=np.float64), 0, None)


@dataclass(frozen=True)
class HatanoNelsonMatrix:
    potential: PotentialVector
    g: float
    entries: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def build_matrix(potential: PotentialVector, g: float) -> HatanoNelsonMatrix:
    """Dense H_N(g): diagonal v, e^g below and e^-g above the diagonal, periodic corners."""
    v = potential.values
    n = v.shape[0]
    if n < 3:
        raise ModelError(f"degenerate size N={n}: corner and off-diagonal entries coincide for N < 3")
    up, down = np.exp(-g), np.exp(g)
    H = np.diag(v.astype(np.float64))
    idx = np.arange(n - 1)
    H[idx, idx + 1] = up
    H[idx + 1, idx] = down
    H[0, n - 1] = down
    H[n - 1, 0] = up
    H.setflags(write=False)
    return HatanoNelsonMatrix(potential, float(g), H)


def apply(matrix: HatanoNelsonMatrix, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (matrix.n,):
        raise ModelError(f"dimension mismatch: matrix is {matrix.n}x{matrix.n}, vector has shape {x.shape}")
    return matrix.entries @ x
