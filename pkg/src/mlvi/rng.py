"""Deterministic, replayable standard-normal noise batches (MC and RQMC).

Every batch is a pure function of (seed, iteration, kind, n, d).  Plain-MC
batches map counter-based Philox uniforms through the inverse normal CDF;
RQMC batches map a Sobol point set with a Cranley--Patterson additive shift
(mod 1) through the same transform, so both kinds share one path from
uniforms to normals.

The Sobol direction numbers ship as a bundled text table (Joe--Kuo layout:
``d s a m_1 .. m_s``, one row per dimension from d = 2) covering dimensions
up to 1101.  Indexing starts at Sobol index 1, skipping the all-zeros point.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np

from .core import EstimateKind

__all__ = [
    "NoiseBatch",
    "SobolDimensionError",
    "inverse_normal_cdf",
    "sobol_uniform",
    "mc_normal_batch",
    "rqmc_normal_batch",
    "max_sobol_dim",
]

_DIRECTION_FILE = "joe_kuo_6_1101.txt"
_MAXBIT = 32
_SCALE = 2.0 ** -_MAXBIT
_TINY_U = 2.0 ** -54  # uniform guard: keeps the inverse CDF off u = 0


class SobolDimensionError(ValueError):
    """Requested dimension exceeds the bundled direction-number table."""


@dataclass(frozen=True)
class NoiseBatch:
    """An n x d matrix of standard-normal draws with replay identity."""

    values: np.ndarray
    kind: EstimateKind
    stream_id: tuple[int, int]  # (seed, iteration)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError("values must be an n x d matrix")
        if not np.isfinite(values).all():
            raise ValueError("non-finite noise values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


# --- inverse normal CDF (Wichura's PPND16 rational approximation) ---------

_A = np.array([
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
])
_B = np.array([
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3,
])
_C = np.array([
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
])
_D = np.array([
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1,
    1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9,
])
_E = np.array([
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
])
_F = np.array([
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4,
    1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15,
])


def _poly(coeffs: np.ndarray, r: np.ndarray) -> np.ndarray:
    out = np.full_like(r, coeffs[-1])
    for c in coeffs[-2::-1]:
        out = out * r + c
    return out


def inverse_normal_cdf(u):
    """Standard-normal quantile function on (0, 1).

    Rational approximation accurate to well below 1e-9 absolute error over
    [1e-12, 1 - 1e-12].  Accepts scalars or arrays; raises on u outside
    (0, 1).
    """
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(u_arr <= 0.0) or np.any(u_arr >= 1.0):
        raise ValueError("inverse_normal_cdf requires 0 < u < 1")

    q = u_arr - 0.5
    out = np.empty_like(u_arr)

    central = np.abs(q) <= 0.425
    if np.any(central):
        r = 0.180625 - q[central] ** 2
        out[central] = q[central] * _poly(_A, r) / _poly(_B, r)

    tail = ~central
    if np.any(tail):
        qt = q[tail]
        r = np.where(qt < 0.0, u_arr[tail], 1.0 - u_arr[tail])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        x = np.empty_like(r)
        if np.any(near):
            rn = r[near] - 1.6
            x[near] = _poly(_C, rn) / _poly(_D, rn)
        if np.any(~near):
            rf = r[~near] - 5.0
            x[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(qt < 0.0, -x, x)

    if np.isscalar(u) or u_arr.ndim == 0:
        return float(out)
    return out


# --- Sobol construction ----------------------------------------------------

_direction_cache: dict[int, np.ndarray] = {}


def _load_direction_rows() -> list[tuple[int, int, list[int]]]:
    text = (
        importlib.resources.files("mlvi")
        .joinpath("data", _DIRECTION_FILE)
        .read_text()
    )
    rows = []
    for line in text.splitlines()[1:]:  # first line is the column header
        parts = line.split()
        if not parts:
            continue
        s, a = int(parts[1]), int(parts[2])
        m = [int(tok) for tok in parts[3:]]
        if len(m) != s:
            raise ValueError(f"malformed direction-number row: {line!r}")
        rows.append((s, a, m))
    return rows


def max_sobol_dim() -> int:
    return len(_load_direction_rows()) + 1  # + first (van der Corput) dimension


def _direction_table(d: int) -> np.ndarray:
    """V[j, i] = i-th direction integer of dimension j, as uint64 < 2^32."""
    if d in _direction_cache:
        return _direction_cache[d]
    rows = _load_direction_rows()
    if d > len(rows) + 1:
        raise SobolDimensionError(
            f"dimension {d} exceeds the bundled direction-number table "
            f"(max {len(rows) + 1})"
        )
    V = np.zeros((d, _MAXBIT), dtype=np.uint64)
    V[0] = [1 << (_MAXBIT - i) for i in range(1, _MAXBIT + 1)]
    for j in range(1, d):
        s, a, m = rows[j - 1]
        v = np.zeros(_MAXBIT, dtype=np.uint64)
        for i in range(min(s, _MAXBIT)):
            v[i] = m[i] << (_MAXBIT - (i + 1))
        for i in range(s, _MAXBIT):
            v[i] = v[i - s] ^ (v[i - s] >> np.uint64(s))
            for k in range(1, s):
                if (a >> (s - 1 - k)) & 1:
                    v[i] ^= v[i - k]
        V[j] = v
    _direction_cache[d] = V
    return V


def sobol_uniform(n: int, d: int, shift: np.ndarray | None = None) -> np.ndarray:
    """First ``n`` Sobol points in [0,1)^d (index starts at 1), plus an
    optional additive shift mod 1.

    With shift = 0 the points match the reference construction from the
    bundled Joe--Kuo table.
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    V = _direction_table(d)
    idx = np.arange(1, n + 1, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    state = np.zeros((n, d), dtype=np.uint64)
    maxbit = int(gray.max()).bit_length()
    for b in range(maxbit):
        rows = (gray >> np.uint64(b)) & np.uint64(1) == 1
        if rows.any():
            state[rows] ^= V[:, b]
    points = state.astype(np.float64) * _SCALE
    if shift is not None:
        shift = np.asarray(shift, dtype=np.float64)
        if shift.shape != (d,):
            raise ValueError("shift must be a length-d vector")
        if np.any(shift < 0.0) or np.any(shift >= 1.0):
            raise ValueError("shift entries must lie in [0, 1)")
        points = np.mod(points + shift, 1.0)
    return points


# --- noise batches ----------------------------------------------------------

def _uniform_stream(seed: int, iteration: int, tag: int) -> np.random.Generator:
    # Counter-style stream: the (seed, iteration) pair is the Philox key;
    # the tag separates purposes (MC draws vs RQMC shift) via the high
    # counter word, which generation can never reach.
    bitgen = np.random.Philox(
        counter=[0, 0, 0, tag], key=[seed % 2**64, iteration % 2**64]
    )
    return np.random.Generator(bitgen)


def mc_normal_batch(seed: int, iteration: int, n: int, d: int) -> NoiseBatch:
    """n x d i.i.d. standard normals from the (seed, iteration) stream."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    u = _uniform_stream(seed, iteration, tag=0).random((n, d))
    u = np.where(u <= 0.0, _TINY_U, u)
    return NoiseBatch(inverse_normal_cdf(u), EstimateKind.MC, (seed, iteration))


def rqmc_normal_batch(seed: int, iteration: int, n: int, d: int) -> NoiseBatch:
    """n x d normals from a randomly shifted Sobol point set.

    The shift is drawn deterministically from the (seed, iteration) stream,
    so equal stream ids replay bit-identical batches.
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    shift = _uniform_stream(seed, iteration, tag=1).random(d)
    u = sobol_uniform(n, d, shift)
    u = np.where(u <= 0.0, _TINY_U, u)
    return NoiseBatch(inverse_normal_cdf(u), EstimateKind.RQMC, (seed, iteration))
