"""Transfer-matrix form of the layered models on the 2^n auxiliary spin space.

One measurement round is the operator

    T = exp(K_m sum_S s_S Z_S) * exp(Kbar_bf sum_r X_r),

acting X factor first, with tanh(Kbar_bf) = exp(-2 K_bf).  Basis index bit
r set means spin r is down.  The full partition sum of a record equals a
boundary bracket of the round operators times a per-qubit-per-step
constant c = exp(K_bf) / cosh(Kbar_bf); frozen couplings degrade the
corresponding factor to a projector and drop the constant.

Everything here is exact and intentionally tiny: building is capped at 14
qubits and dense spectral work at 12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gf2
from .codes import CssCode
from .errors import InvalidInput, InvalidParameter, UnsupportedSize
from .noise import FROZEN, CorrelatedEventModel, Couplings, nishimori_coupling

BUILD_CUTOFF = 14
DENSE_CUTOFF = 12


def dual_x_coupling(k_bf: float) -> float:
    """Kbar with tanh(Kbar) = exp(-2 K_bf); zero when the bond is frozen."""
    if k_bf is FROZEN or math.isinf(k_bf):
        return 0.0
    if k_bf <= 0:
        raise InvalidParameter("bitflip coupling must be positive")
    return math.atanh(math.exp(-2.0 * k_bf))


def couplings_from_continuous(h: float, delta_tau: float) -> Couplings:
    """Couplings of the anisotropic classical limit of transverse field h at step delta_tau.

    K_m = delta_tau and exp(2 K_bf) K_m = 1 / h.  This is a parameter map
    only; nothing elsewhere relies on any equivalence between the two
    descriptions at finite step.
    """
    if h <= 0 or delta_tau <= 0:
        raise InvalidParameter("h and delta_tau must be positive")
    if h * delta_tau >= 1:
        raise InvalidParameter("h * delta_tau must be below 1 for a positive K_bf")
    return Couplings(k_bf=0.5 * math.log(1.0 / (h * delta_tau)), k_m=delta_tau)


def _chi_table(mask: int, n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.uint64)
    return (1 - 2 * (np.bitwise_count(idx & np.uint64(mask)).astype(np.int8) & 1)).astype(np.int8)


@dataclass
class TransferMatrix:
    code: CssCode
    couplings: Couplings
    n: int
    chi_checks: np.ndarray  # [num_checks, 2^n] signs of each Z check
    kbar: float
    log_c: float

    def apply_x_layer(self, v: np.ndarray) -> np.ndarray:
        """exp(Kbar sum_r X_r) applied along the first axis."""
        if self.kbar == 0.0:
            return v.copy()
        ch, sh = math.cosh(self.kbar), math.sinh(self.kbar)
        out = v
        shape = v.shape
        for r in range(self.n):
            a = 1 << (self.n - 1 - r)
            b = 1 << r
            flat = out.reshape((a, 2, b) + shape[1:])
            out = (ch * flat + sh * flat[:, ::-1]).reshape(shape)
        return out

    def z_field(self, signs: np.ndarray) -> np.ndarray:
        """sum_S s_S chi_S over the basis for one round's signs."""
        return (signs.astype(np.float64) @ self.chi_checks.astype(np.float64))

    @staticmethod
    def _leading(weights: np.ndarray, like: np.ndarray) -> np.ndarray:
        return weights.reshape((len(weights),) + (1,) * (like.ndim - 1))

    def apply_round(self, v: np.ndarray, signs: np.ndarray | None = None) -> np.ndarray:
        """One full round: X layer then the signed Z layer (weights or projector)."""
        if signs is None:
            signs = np.ones(len(self.chi_checks), dtype=np.int8)
        out = self.apply_x_layer(v)
        if self.couplings.k_m is FROZEN or math.isinf(self.couplings.k_m):
            mask = np.all(self.chi_checks == signs[:, None], axis=0)
            return out * self._leading(mask.astype(np.float64), out)
        weights = np.exp(self.couplings.k_m * self.z_field(signs))
        return out * self._leading(weights, out)

    def project_z(self, v: np.ndarray, signs: np.ndarray | None = None) -> np.ndarray:
        """Projector onto the basis states whose check signs equal the given pattern."""
        if signs is None:
            signs = np.ones(len(self.chi_checks), dtype=np.int8)
        mask = np.all(self.chi_checks == signs[:, None], axis=0)
        return v * self._leading(mask.astype(np.float64), np.asarray(v))

    def project_x(self, v: np.ndarray) -> np.ndarray:
        """Average over the X-check flip group (the gauge symmetrizer)."""
        masks = [self.code.x_check_masks[i]
                 for i in gf2.independent_subset(self.code.x_check_masks)]
        group = gf2.span_elements(masks)
        idx = np.arange(1 << self.n, dtype=np.uint64)
        acc = np.zeros_like(v, dtype=np.float64)
        for g in group:
            acc += v[(idx ^ g).astype(np.intp)]
        return acc / len(group)

    def dense(self) -> np.ndarray:
        """T as a dense matrix (clean signs); capped at DENSE_CUTOFF qubits."""
        if self.n > DENSE_CUTOFF:
            raise UnsupportedSize(f"dense transfer matrix capped at {DENSE_CUTOFF} qubits")
        eye = np.eye(1 << self.n)
        return self.apply_round(eye)

    def log_partition(self, signs: np.ndarray | None, t_f: int) -> float:
        """log Z of the record (clean when signs is None); perfect final round.

        Matches exact enumeration of the matching layered model: t_f X
        layers, signed Z weights at rounds 1 .. t_f - 1, and a final-round
        sign projector, all times the bond constant.
        """
        if t_f < 1:
            raise InvalidInput("t_f must be at least 1")
        c = len(self.chi_checks)
        if signs is None:
            signs = np.ones((c, t_f), dtype=np.int8)
        signs = np.asarray(signs)
        if signs.shape != (c, t_f):
            raise InvalidInput("signs must have shape [num_checks, t_f]")
        v = np.zeros(1 << self.n)
        v[0] = 1.0
        log_scale = 0.0
        frozen_m = self.couplings.k_m is FROZEN or math.isinf(self.couplings.k_m)
        for t in range(1, t_f):
            v = self.apply_x_layer(v)
            if frozen_m:
                v = self.project_z(v, signs[:, t - 1])
            else:
                v = v * np.exp(self.couplings.k_m * self.z_field(signs[:, t - 1]))
            peak = float(v.max())
            if peak <= 0.0:
                return -math.inf
            v /= peak
            log_scale += math.log(peak)
        v = self.apply_x_layer(v)
        v = self.project_z(v, signs[:, t_f - 1])
        total = float(v.sum())
        if total <= 0.0:
            return -math.inf
        return self.n * t_f * self.log_c + log_scale + math.log(total)

    def logical_expectation(self, t_f: int, j: int, signs: np.ndarray | None = None) -> float:
        """Final-layer order parameter of logical j under the recorded weights."""
        c = len(self.chi_checks)
        if signs is None:
            signs = np.ones((c, t_f), dtype=np.int8)
        v = np.zeros(1 << self.n)
        v[0] = 1.0
        frozen_m = self.couplings.k_m is FROZEN or math.isinf(self.couplings.k_m)
        for t in range(1, t_f):
            v = self.apply_x_layer(v)
            if frozen_m:
                v = self.project_z(v, signs[:, t - 1])
            else:
                v = v * np.exp(self.couplings.k_m * self.z_field(signs[:, t - 1]))
            peak = float(np.abs(v).max())
            if peak > 0:
                v /= peak
        v = self.apply_x_layer(v)
        v = self.project_z(v, signs[:, t_f - 1])
        lsign = _chi_table(self.code.logical_z_masks[j], self.n)
        den = float(v.sum())
        if den == 0.0:
            raise InvalidInput("record is incompatible with every final layer")
        return float((v * lsign).sum() / den)

    def clean_bracket_log_partition(self, t_f: int, insert_projectors: bool = True) -> float:
        """log Z of the clean model from the boundary bracket with gauge projectors.

        Evaluates <1| P_Z P_X T^t_f P_X |0> and folds in the bond constant
        and the final-layer reweighting; the P_X insertions are
        value-preserving because T commutes with the symmetrizer.
        """
        v = np.zeros(1 << self.n)
        v[0] = 1.0
        if insert_projectors:
            v = self.project_x(v)
        log_scale = 0.0
        for _ in range(t_f):
            v = self.apply_round(v)
            peak = float(v.max())
            v /= peak
            log_scale += math.log(peak)
        if insert_projectors:
            v = self.project_x(v)
        v = self.project_z(v)
        total = float(v.sum())
        frozen_m = self.couplings.k_m is FROZEN or math.isinf(self.couplings.k_m)
        correction = 0.0 if frozen_m else -self.couplings.k_m * len(self.chi_checks)
        return self.n * t_f * self.log_c + log_scale + math.log(total) + correction


def build_transfer_matrix(code: CssCode, couplings: Couplings) -> TransferMatrix:
    n = code.n_qubits
    if n > BUILD_CUTOFF:
        raise UnsupportedSize(f"transfer matrix capped at {BUILD_CUTOFF} qubits, got {n}")
    if couplings.k_m is not FROZEN and not math.isinf(couplings.k_m) and couplings.k_m <= 0:
        raise InvalidParameter("measurement coupling must be positive")
    kbar = dual_x_coupling(couplings.k_bf)
    if couplings.k_bf is FROZEN or math.isinf(couplings.k_bf):
        log_c = 0.0
    else:
        log_c = couplings.k_bf - math.log(math.cosh(kbar))
    chi = np.stack([_chi_table(m, n) for m in code.z_check_masks])
    return TransferMatrix(code=code, couplings=couplings, n=n, chi_checks=chi,
                          kbar=kbar, log_c=log_c)


# ---------------------------------------------------------------------------
# continuous generator and spectral sectors


def quantum_hamiltonian(code: CssCode, h: float) -> np.ndarray:
    """Dense H = -sum_S Zprod_S - sum_G Xprod_G - h sum_r X_r on 2^n states."""
    n = code.n_qubits
    if n > DENSE_CUTOFF:
        raise UnsupportedSize(f"dense generator capped at {DENSE_CUTOFF} qubits")
    dim = 1 << n
    ham = np.zeros((dim, dim))
    diag = np.zeros(dim)
    for m in code.z_check_masks:
        diag -= _chi_table(m, n).astype(np.float64)
    ham[np.arange(dim), np.arange(dim)] = diag
    idx = np.arange(dim)
    for m in code.x_check_masks:
        ham[idx ^ m, idx] -= 1.0
    for r in range(n):
        ham[idx ^ (1 << r), idx] -= h
    return ham


@dataclass
class SpectralSummary:
    sectors: dict[tuple[int, ...], tuple[float, float]]

    def ground_sector(self) -> tuple[int, ...]:
        return tuple([1] * len(next(iter(self.sectors))))

    def delta_e(self, sector: tuple[int, ...]) -> float:
        lam0 = self.sectors[self.ground_sector()][0]
        return -math.log(self.sectors[sector][0] / lam0)

    def gap(self, sector: tuple[int, ...]) -> float:
        lam0, lam1 = self.sectors[sector]
        return -math.log(lam1 / lam0)


def spectral_summary(tm: TransferMatrix) -> SpectralSummary:
    """Leading transfer eigenvalues in each X-logical symmetry sector.

    Works in the symmetrized similar form sqrt(D) X-layer sqrt(D), block
    reduced over orbits of the logical-X flip group, so eigenvalues are
    real and sector labels are the logical-X eigenvalues.
    """
    n = tm.n
    if n > DENSE_CUTOFF:
        raise UnsupportedSize(f"spectral summary capped at {DENSE_CUTOFF} qubits")
    code = tm.code
    k = code.num_logicals
    dim = 1 << n
    if tm.couplings.k_m is FROZEN or math.isinf(tm.couplings.k_m):
        raise InvalidParameter("spectral summary needs a finite measurement coupling")
    field = tm.z_field(np.ones(len(tm.chi_checks), dtype=np.int8))
    half = np.exp(0.5 * tm.couplings.k_m * field)
    xdense = tm.apply_x_layer(np.eye(dim))
    sym = half[:, None] * xdense * half[None, :]

    gens = list(code.logical_x_masks)
    group = gf2.span_elements(gens)  # element i = XOR of generators in bits of i
    idx = np.arange(dim, dtype=np.uint64)
    orbit_min = idx.copy()
    for g in group[1:]:
        orbit_min = np.minimum(orbit_min, idx ^ g)
    reps = np.nonzero(orbit_min == idx)[0]

    sectors = {}
    for bits in range(1 << k):
        eps = tuple(-1 if (bits >> j) & 1 else 1 for j in range(k))
        block = np.zeros((len(reps), len(reps)))
        for gi, g in enumerate(group):
            chi = 1
            for j in range(k):
                if (gi >> j) & 1:
                    chi *= eps[j]
            cols = (reps.astype(np.uint64) ^ g).astype(np.intp)
            block += chi * sym[np.ix_(reps, cols)]
        vals = np.linalg.eigvalsh(block)
        sectors[eps] = (float(vals[-1]), float(vals[-2]) if len(vals) > 1 else float("-inf"))
    return SpectralSummary(sectors=sectors)


# ---------------------------------------------------------------------------
# correlated events


def event_x_coupling(rate: float) -> float:
    """Kbar_E = (1/2) ln(1 / (1 - 2 p)); tanh gives the odds p / (1 - p)."""
    if not 0.0 <= rate < 0.5:
        raise InvalidParameter(f"event rate must lie in [0, 1/2), got {rate}")
    return 0.5 * math.log(1.0 / (1.0 - 2.0 * rate))


@dataclass
class CorrelatedTransferMatrix:
    code: CssCode
    model: CorrelatedEventModel
    n: int
    check_k: tuple[float, ...]
    chi_checks: np.ndarray
    event_masks: tuple[int, ...]
    event_k: tuple[float, ...]

    def apply_x_layer(self, v: np.ndarray) -> np.ndarray:
        idx = np.arange(1 << self.n, dtype=np.uint64)
        out = np.array(v, dtype=np.float64, copy=True)
        for mask, kb in zip(self.event_masks, self.event_k):
            if kb == 0.0:
                continue
            flipped = out[(idx ^ np.uint64(mask)).astype(np.intp)]
            out = math.cosh(kb) * out + math.sinh(kb) * flipped
        return out

    def apply_round(self, v: np.ndarray, signs: np.ndarray | None = None) -> np.ndarray:
        if signs is None:
            signs = np.ones(len(self.chi_checks), dtype=np.int8)
        out = self.apply_x_layer(v)
        weights = np.zeros(1 << self.n)
        for kk, s, chi in zip(self.check_k, signs, self.chi_checks):
            weights += kk * s * chi
        shaped = np.exp(weights).reshape((1 << self.n,) + (1,) * (out.ndim - 1))
        return out * shaped

    def dense(self) -> np.ndarray:
        if self.n > DENSE_CUTOFF:
            raise UnsupportedSize(f"dense transfer matrix capped at {DENSE_CUTOFF} qubits")
        return self.apply_round(np.eye(1 << self.n))


def build_correlated_transfer_matrix(code: CssCode,
                                     model: CorrelatedEventModel) -> CorrelatedTransferMatrix:
    n = code.n_qubits
    if n > BUILD_CUTOFF:
        raise UnsupportedSize(f"transfer matrix capped at {BUILD_CUTOFF} qubits, got {n}")
    if model.n_qubits != n or len(model.meas_rates) != code.num_z_checks:
        raise InvalidInput("correlated model does not match the code")
    check_k = tuple(nishimori_coupling(p) for p in model.meas_rates)
    for kk in check_k:
        if kk is FROZEN:
            raise InvalidParameter("correlated transfer matrix needs positive meas rates")
    chi = np.stack([_chi_table(m, n) for m in code.z_check_masks])
    masks = []
    ks = []
    for support, rate in model.events:
        m = 0
        for q in support:
            m |= 1 << q
        masks.append(m)
        ks.append(event_x_coupling(rate))
    return CorrelatedTransferMatrix(code=code, model=model, n=n, check_k=check_k,
                                    chi_checks=chi, event_masks=tuple(masks),
                                    event_k=tuple(ks))
