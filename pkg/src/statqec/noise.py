"""Phenomenological noise histories over repeated Z-check measurement.

Time layout for t_f measurement rounds:

* spin layers sit at integer times t = 0 .. t_f, with the t = 0 layer a
  perfect reference (no errors before it),
* bitflip slots sit at half-integer times t + 1/2 for t = 0 .. t_f - 1,
  stored as bitflips[r, t],
* measurement-error slots sit at rounds t = 1 .. t_f - 1 when the final
  round is perfect (the default), stored as meas_errors[check, t - 1].

A bitflip history determines qubit signs sigma(e)[r, t] = parity of all
flips on r before time t, and the measured record is the check product of
those signs times the measurement error sign.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .codes import CssCode
from .errors import InvalidInput, InvalidParameter

FROZEN = math.inf
"""Marker for an infinitely strong coupling (a hard constraint, never arithmetic)."""


@dataclass(frozen=True)
class NoiseParams:
    p_bf: float
    p_m: float
    t_f: int
    final_round_perfect: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p_bf < 0.5:
            raise InvalidParameter(f"p_bf must lie in [0, 1/2), got {self.p_bf}")
        if not 0.0 <= self.p_m <= 0.5:
            raise InvalidParameter(f"p_m must lie in [0, 1/2], got {self.p_m}")
        if int(self.t_f) != self.t_f or self.t_f < 1:
            raise InvalidParameter(f"t_f must be a positive integer, got {self.t_f}")

    @property
    def num_meas_rounds(self) -> int:
        """Rounds that carry a measurement-error slot."""
        return self.t_f - 1 if self.final_round_perfect else self.t_f


@dataclass(frozen=True)
class Couplings:
    k_bf: float
    k_m: float


def nishimori_coupling(p: float) -> float:
    """Coupling matched to an error rate, K = (1/2) ln((1-p)/p).

    p = 0 maps to the frozen-infinite marker.  Rates at or beyond 1/2 are
    rejected: the matched model would leave the ferromagnetic regime.
    """
    if p < 0 or p >= 0.5:
        raise InvalidParameter(f"error rate must lie in [0, 1/2), got {p}")
    if p == 0:
        return FROZEN
    return 0.5 * math.log((1.0 - p) / p)


def couplings_from_params(params: NoiseParams) -> Couplings:
    return Couplings(k_bf=nishimori_coupling(params.p_bf), k_m=nishimori_coupling(params.p_m))


@dataclass
class ErrorPattern:
    """One sampled noise history: bitflips [n, t_f], meas_errors [checks, rounds]."""

    bitflips: np.ndarray
    meas_errors: np.ndarray

    def __post_init__(self):
        self.bitflips = np.asarray(self.bitflips, dtype=bool)
        self.meas_errors = np.asarray(self.meas_errors, dtype=bool)

    @property
    def t_f(self) -> int:
        return self.bitflips.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, ErrorPattern)
            and self.bitflips.shape == other.bitflips.shape
            and self.meas_errors.shape == other.meas_errors.shape
            and bool(np.all(self.bitflips == other.bitflips))
            and bool(np.all(self.meas_errors == other.meas_errors))
        )


@dataclass
class SyndromeHistory:
    """Measured check signs, signs[check, t-1] for rounds t = 1 .. t_f, values +-1."""

    signs: np.ndarray

    def __post_init__(self):
        self.signs = np.asarray(self.signs, dtype=np.int8)

    @property
    def t_f(self) -> int:
        return self.signs.shape[1]


@lru_cache(maxsize=64)
def _check_arrays(code: CssCode):
    """CSR-style (indices, indptr) over z checks for vectorized sign products."""
    indices = np.concatenate([np.array(s, dtype=np.intp) for s in code.z_checks])
    lengths = np.array([len(s) for s in code.z_checks], dtype=np.intp)
    indptr = np.concatenate([[0], np.cumsum(lengths)])
    return indices, indptr


def check_products(code: CssCode, layer_signs: np.ndarray) -> np.ndarray:
    """Product of a sign layer over each z check support; works on [n] or [n, m] input."""
    indices, indptr = _check_arrays(code)
    gathered = layer_signs[indices]
    return np.multiply.reduceat(gathered, indptr[:-1], axis=0)


def sample_error(code: CssCode, params: NoiseParams, rng: np.random.Generator) -> ErrorPattern:
    n = code.n_qubits
    bitflips = rng.random((n, params.t_f)) < params.p_bf
    meas = rng.random((code.num_z_checks, params.num_meas_rounds)) < params.p_m
    return ErrorPattern(bitflips=bitflips, meas_errors=meas)


def cumulative_signs(e: ErrorPattern) -> np.ndarray:
    """sigma(e)[r, t] for t = 0 .. t_f: +1 at t = 0, then flipped by each earlier slot."""
    n, t_f = e.bitflips.shape
    parity = np.cumsum(e.bitflips, axis=1) & 1
    sigma = np.ones((n, t_f + 1), dtype=np.int8)
    sigma[:, 1:] = 1 - 2 * parity.astype(np.int8)
    return sigma


def syndrome_of(code: CssCode, e: ErrorPattern, params: NoiseParams) -> SyndromeHistory:
    """Measured record of a history: check products of qubit signs times error signs."""
    if e.bitflips.shape != (code.n_qubits, params.t_f):
        raise InvalidInput("bitflip array shape does not match code and t_f")
    if e.meas_errors.shape != (code.num_z_checks, params.num_meas_rounds):
        raise InvalidInput("meas error array shape does not match code and t_f")
    sigma = cumulative_signs(e)
    signs = check_products(code, sigma[:, 1:])
    meas_signs = np.ones_like(signs)
    meas_signs[:, : params.num_meas_rounds] = 1 - 2 * e.meas_errors.astype(np.int8)
    return SyndromeHistory(signs=signs * meas_signs)


def true_logical(code: CssCode, e: ErrorPattern, js=None) -> np.ndarray:
    """Final-time logical signs prod_{r in L_j} sigma(e)[r, t_f], one per requested j."""
    sigma_final = cumulative_signs(e)[:, -1]
    if js is None:
        js = range(code.num_logicals)
    return np.array([sigma_final[list(code.logical_z[j])].prod() for j in js], dtype=np.int8)


def detection_events(s: SyndromeHistory) -> np.ndarray:
    """Bool array [checks, t_f]: sign change between consecutive rounds, +1 before round 1."""
    signs = s.signs
    d = np.empty(signs.shape, dtype=bool)
    d[:, 0] = signs[:, 0] == -1
    d[:, 1:] = signs[:, 1:] != signs[:, :-1]
    return d


def change_of_basis_inverse(code: CssCode, e: ErrorPattern, params: NoiseParams):
    """History -> (qubit sign trajectory, measured record)."""
    return cumulative_signs(e), syndrome_of(code, e, params)


def change_of_basis_forward(
    code: CssCode, sigma_hat: np.ndarray, s: SyndromeHistory, params: NoiseParams
) -> ErrorPattern:
    """(qubit sign trajectory, measured record) -> history; exact inverse of the above.

    sigma_hat must carry the perfect reference layer (all +1 at t = 0) and,
    when the final round is perfect, reproduce the final-round record
    exactly; otherwise the pair lies outside the bijection's domain.
    """
    sigma_hat = np.asarray(sigma_hat)
    n, cols = sigma_hat.shape
    if n != code.n_qubits or cols != params.t_f + 1:
        raise InvalidInput("sigma_hat must have shape [n, t_f + 1]")
    if np.any(np.abs(sigma_hat) != 1):
        raise InvalidInput("sigma_hat entries must be +-1")
    if np.any(sigma_hat[:, 0] != 1):
        raise InvalidInput("reference layer sigma_hat[:, 0] must be all +1")
    bitflips = sigma_hat[:, :-1] * sigma_hat[:, 1:] == -1
    products = check_products(code, sigma_hat[:, 1:])
    err_signs = s.signs * products
    if params.final_round_perfect and np.any(err_signs[:, -1] != 1):
        raise InvalidInput("final round is perfect but the record disagrees with sigma_hat")
    meas_errors = err_signs[:, : params.num_meas_rounds] == -1
    return ErrorPattern(bitflips=bitflips, meas_errors=meas_errors)


def _bernoulli_log_weight(w: int, total: int, p: float) -> float:
    if w < 0 or w > total:
        raise InvalidInput("event count outside range")
    out = 0.0
    if w:
        out += -math.inf if p == 0 else w * math.log(p)
    if total - w:
        out += (total - w) * math.log1p(-p)
    return out


def log_probability(e: ErrorPattern, params: NoiseParams) -> float:
    """log P(e) under independent slot noise; -inf if a zero-rate slot fired."""
    n, t_f = e.bitflips.shape
    w_bf = int(e.bitflips.sum())
    w_m = int(e.meas_errors.sum())
    return _bernoulli_log_weight(w_bf, n * t_f, params.p_bf) + _bernoulli_log_weight(
        w_m, e.meas_errors.size, params.p_m
    )


def log_relative_weight(e: ErrorPattern, params: NoiseParams) -> float:
    """log of P(e) relative to the empty history: counts times log-odds of each slot type.

    Requires both rates positive (otherwise the ratio degenerates); used in
    weighted minimum-weight decoding.
    """
    if params.p_bf == 0 or params.p_m == 0:
        raise InvalidParameter("relative weights need strictly positive rates")
    w_bf = int(e.bitflips.sum())
    w_m = int(e.meas_errors.sum())
    return w_bf * math.log(params.p_bf / (1 - params.p_bf)) + w_m * math.log(
        params.p_m / (1 - params.p_m)
    )


@dataclass(frozen=True)
class CorrelatedEventModel:
    """Independent multi-qubit flip events plus per-check measurement error rates."""

    n_qubits: int
    events: tuple[tuple[tuple[int, ...], float], ...]
    meas_rates: tuple[float, ...]

    def __post_init__(self):
        for support, rate in self.events:
            if not support or list(support) != sorted(set(support)):
                raise InvalidInput(f"event support {support} must be sorted, unique, nonempty")
            if support[0] < 0 or support[-1] >= self.n_qubits:
                raise InvalidInput(f"event support {support} out of range")
            if not 0.0 <= rate < 0.5:
                raise InvalidParameter(f"event rate must lie in [0, 1/2), got {rate}")
        for rate in self.meas_rates:
            if not 0.0 <= rate < 0.5:
                raise InvalidParameter(f"meas rate must lie in [0, 1/2), got {rate}")


def sample_correlated_error(
    code: CssCode, model: CorrelatedEventModel, params: NoiseParams, rng: np.random.Generator
) -> ErrorPattern:
    """Draw one history: each event fires independently in every bitflip slot."""
    if model.n_qubits != code.n_qubits or len(model.meas_rates) != code.num_z_checks:
        raise InvalidInput("correlated model does not match the code")
    n, t_f = code.n_qubits, params.t_f
    bitflips = np.zeros((n, t_f), dtype=bool)
    for support, rate in model.events:
        fired = rng.random(t_f) < rate
        for q in support:
            bitflips[q] ^= fired
    rates = np.array(model.meas_rates)[:, None]
    meas = rng.random((code.num_z_checks, params.num_meas_rounds)) < rates
    return ErrorPattern(bitflips=bitflips, meas_errors=meas)


# ---------------------------------------------------------------------------
# serialization: 16-byte header (4-byte magic, then n, t_f, checks as uint32),
# then the bit-packed payload; a JSON form is kept alongside for debugging.

_MAGIC_ERR_PERFECT = b"SQEP"
_MAGIC_ERR_FULL = b"SQEF"
_MAGIC_SYN = b"SQSH"


def error_pattern_to_bytes(e: ErrorPattern) -> bytes:
    n, t_f = e.bitflips.shape
    c, m = e.meas_errors.shape
    if m == t_f - 1:
        magic = _MAGIC_ERR_PERFECT
    elif m == t_f:
        magic = _MAGIC_ERR_FULL
    else:
        raise InvalidInput("meas error rounds must be t_f - 1 or t_f")
    header = magic + np.array([n, t_f, c], dtype="<u4").tobytes()
    payload = np.packbits(e.bitflips, bitorder="little").tobytes()
    payload += np.packbits(e.meas_errors, bitorder="little").tobytes()
    return header + payload


def error_pattern_from_bytes(buf: bytes) -> ErrorPattern:
    if len(buf) < 16 or buf[:4] not in (_MAGIC_ERR_PERFECT, _MAGIC_ERR_FULL):
        raise InvalidInput("not an error-pattern record")
    n, t_f, c = (int(x) for x in np.frombuffer(buf[4:16], dtype="<u4"))
    m = t_f - 1 if buf[:4] == _MAGIC_ERR_PERFECT else t_f
    bf_bytes = (n * t_f + 7) // 8
    me_bytes = (c * m + 7) // 8
    if len(buf) != 16 + bf_bytes + me_bytes:
        raise InvalidInput("error-pattern record has wrong length")
    bf = np.unpackbits(
        np.frombuffer(buf[16 : 16 + bf_bytes], dtype=np.uint8), count=n * t_f, bitorder="little"
    ).reshape(n, t_f)
    me = np.unpackbits(
        np.frombuffer(buf[16 + bf_bytes :], dtype=np.uint8), count=c * m, bitorder="little"
    ).reshape(c, m)
    return ErrorPattern(bitflips=bf.astype(bool), meas_errors=me.astype(bool))


def syndrome_to_bytes(s: SyndromeHistory, n_qubits: int = 0) -> bytes:
    c, t_f = s.signs.shape
    header = _MAGIC_SYN + np.array([n_qubits, t_f, c], dtype="<u4").tobytes()
    return header + np.packbits(s.signs == -1, bitorder="little").tobytes()


def syndrome_from_bytes(buf: bytes) -> SyndromeHistory:
    if len(buf) < 16 or buf[:4] != _MAGIC_SYN:
        raise InvalidInput("not a syndrome record")
    _, t_f, c = (int(x) for x in np.frombuffer(buf[4:16], dtype="<u4"))
    bits = np.unpackbits(
        np.frombuffer(buf[16:], dtype=np.uint8), count=c * t_f, bitorder="little"
    ).reshape(c, t_f)
    return SyndromeHistory(signs=1 - 2 * bits.astype(np.int8))


def error_pattern_to_json(e: ErrorPattern) -> str:
    return json.dumps(
        {
            "bitflips": e.bitflips.astype(int).tolist(),
            "meas_errors": e.meas_errors.astype(int).tolist(),
        }
    )


def error_pattern_from_json(text: str) -> ErrorPattern:
    payload = json.loads(text)
    return ErrorPattern(
        bitflips=np.array(payload["bitflips"], dtype=bool),
        meas_errors=np.array(payload["meas_errors"], dtype=bool),
    )


def syndrome_to_json(s: SyndromeHistory) -> str:
    return json.dumps({"signs": s.signs.astype(int).tolist()})


def syndrome_from_json(text: str) -> SyndromeHistory:
    return SyndromeHistory(signs=np.array(json.loads(text)["signs"], dtype=np.int8))
