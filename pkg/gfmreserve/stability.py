# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Small-signal certification of the DAPI loop with energy reserve consensus.

The closed loop is linearized around the synchronous operating point, projected
onto the disagreement space (the complement of the all-ones direction) and
checked two ways: per-mode characteristic polynomials with Routh-Hurwitz
conditions, and the numeric spectrum of the assembled state matrices.
Droop inverters are analyzed as virtual synchronous machines whose inertia and
voltage time constant equal the power filter time constant.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import root

from gfmreserve.errors import SolverError, UnsupportedCaseError
from gfmreserve.model import (
    CommGraph,
    GammaRatios,
    InverterParams,
    build_laplacian,
    gamma_ratios,
)
from gfmreserve.netsolve import PhasorNetwork, power_jacobians, solve_injections

logger = logging.getLogger(__name__)

COMMUTATOR_TOLERANCE = 1e-6
STRUCTURAL_ZERO = 1e-9
TUNABLE_GAINS = ("k_i", "m_omega", "kappa_i", "tau_v")


@dataclass(frozen=True)
class ProjectionPair:
    R: np.ndarray
    Pi: np.ndarray


def projection(n: int) -> ProjectionPair:
    """Helmert basis of the disagreement space: row k is (1,...,1,-k,0,...)/sqrt(k(k+1))."""
    if n < 2:
        raise ValueError("projection needs at least two inverters")
    r = np.zeros((n - 1, n))
    for k in range(1, n):
        r[k - 1, :k] = 1.0
        r[k - 1, k] = -float(k)
        r[k - 1] /= math.sqrt(k * (k + 1))
    pi = np.eye(n) - np.ones((n, n)) / n
    return ProjectionPair(r, pi)


@dataclass(frozen=True)
class OperatingPoint:
    v: np.ndarray
    delta: np.ndarray
    converged: bool
    residual: float = 0.0

    @property
    def sources(self) -> List[Tuple[float, float]]:
        return [(float(v), float(d)) for v, d in zip(self.v, self.delta)]


def find_operating_point(
    net: PhasorNetwork,
    params: Sequence[InverterParams],
    v: Optional[Sequence[float]] = None,
    tol: float = 1e-10,
) -> OperatingPoint:
    """Angles at which every m_i dP_i is equal, with magnitudes held at ``v``.

    The first inverter is the angle reference.
    """
    count = len(params)
    mags = np.ones(count) if v is None else np.asarray(v, dtype=float)
    scale = np.array([net.s_base / p.s_max for p in params])
    m = np.array([p.m for p in params])
    p_set = np.array([p.p_set_pu for p in params])

    def residual(x: np.ndarray) -> np.ndarray:
        delta = np.concatenate(([0.0], x[:-1]))
        powers = solve_injections(net, list(zip(mags, delta)))
        p_own = np.array([pq[0] for pq in powers]) * scale
        return m * (p_own - p_set) - x[-1]

    def jacobian(x: np.ndarray) -> np.ndarray:
        delta = np.concatenate(([0.0], x[:-1]))
        ds_dva, _ = power_jacobians(net, list(zip(mags, delta)))
        jac = np.empty((count, count))
        jac[:, :-1] = (m * scale)[:, None] * ds_dva.real[:, 1:]
        jac[:, -1] = -1.0
        return jac

    start = np.zeros(count)
    start[-1] = -float(np.mean(m * p_set))
    result = root(residual, start, jac=jacobian, method="hybr", tol=tol)
    error = float(np.max(np.abs(residual(result.x))))
    # hybr may stop at the roundoff floor without reporting success
    converged = bool(np.isfinite(error)) and error < 1e-8
    if not converged:
        logger.warning("operating point search stopped: %s", result.message)
    delta = np.concatenate(([0.0], result.x[:-1]))
    return OperatingPoint(mags, delta, converged, error)


@dataclass(frozen=True)
class LinearizedPower:
    """Sensitivities in network per-unit: P per radian and Q per pu voltage."""

    l_p: np.ndarray
    l_q: np.ndarray
    l_q_jacobian: np.ndarray
    row_sum_p: float
    row_sum_q: float


def linearize_power(net: PhasorNetwork, point: OperatingPoint) -> LinearizedPower:
    if not point.converged:
        raise SolverError("operating point did not converge")
    ds_dva, ds_dvm = power_jacobians(net, point.sources)
    l_p = ds_dva.real
    y = -net.y_reduced.imag
    v_bar = np.asarray(point.v, dtype=float)
    l_q = np.diag(v_bar) @ y + np.diag(y @ v_bar)
    ones = np.ones(len(v_bar))
    return LinearizedPower(
        l_p=l_p,
        l_q=l_q,
        l_q_jacobian=ds_dvm.imag,
        row_sum_p=float(np.linalg.norm(l_p @ ones)),
        row_sum_q=float(np.linalg.norm(l_q @ ones)),
    )


def freq_char_poly(
    lambda_a: float,
    lambda_p: float,
    k_i: float,
    m_omega: float,
    m: float,
    gamma_e: float,
) -> np.ndarray:
    """Quartic coefficients, highest power first."""
    if lambda_a <= 0 or lambda_p <= 0:
        raise UnsupportedCaseError(
            f"non-positive modal eigenvalue ({lambda_a:g}, {lambda_p:g})"
        )
    return np.array(
        [
            k_i * m_omega,
            k_i + m_omega * lambda_a,
            lambda_a + m * k_i * lambda_p + 1.0,
            m * lambda_a * lambda_p,
            m * gamma_e * lambda_a * lambda_p,
        ]
    )


def volt_char_poly(
    lambda_b: float,
    lambda_q: float,
    kappa_i: float,
    tau_v: float,
    n: float,
    q_set: float,
    beta: float,
    gamma_f: float,
) -> np.ndarray:
    """Cubic coefficients, highest power first."""
    if lambda_b <= 0 or lambda_q <= 0:
        raise UnsupportedCaseError(
            f"non-positive modal eigenvalue ({lambda_b:g}, {lambda_q:g})"
        )
    return np.array(
        [
            kappa_i * tau_v,
            kappa_i * (1.0 + n * lambda_q),
            beta + lambda_b * lambda_q / q_set,
            n * gamma_f * lambda_b * lambda_q,
        ]
    )


@dataclass(frozen=True)
class RouthHurwitzVerdict:
    """``stable`` refers to the polynomial with trailing zero coefficients removed."""

    stable: bool
    violated: Optional[str] = None
    structural_zeros: int = 0
    degree: int = 0


def _routh_first_column(coeffs: List[float]) -> List[float]:
    width = (len(coeffs) + 1) // 2
    rows = [
        coeffs[0::2] + [0.0] * (width - len(coeffs[0::2])),
        coeffs[1::2] + [0.0] * (width - len(coeffs[1::2])),
    ]
    for _ in range(len(coeffs) - 2):
        upper, lower = rows[-2], rows[-1]
        if lower[0] == 0:
            return [row[0] for row in rows]
        nxt = [
            (lower[0] * upper[k + 1] - upper[0] * lower[k + 1]) / lower[0]
            for k in range(width - 1)
        ] + [0.0]
        rows.append(nxt)
    return [row[0] for row in rows]


def routh_hurwitz(coeffs: Sequence[float]) -> RouthHurwitzVerdict:
    c = [float(a) for a in coeffs]
    if not c or c[0] <= 0:
        raise ValueError("leading coefficient must be positive")
    zeros = 0
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
        zeros += 1
    degree = len(c) - 1
    for k, a in enumerate(c):
        if a <= 0:
            return RouthHurwitzVerdict(False, f"a{k} > 0", zeros, degree)
    if degree <= 2:
        return RouthHurwitzVerdict(True, None, zeros, degree)
    if degree == 3:
        a0, a1, a2, a3 = c
        if not a1 * a2 > a0 * a3:
            return RouthHurwitzVerdict(False, "a1*a2 > a0*a3", zeros, degree)
        return RouthHurwitzVerdict(True, None, zeros, degree)
    if degree == 4:
        a0, a1, a2, a3, a4 = c
        delta2 = a1 * a2 - a0 * a3
        if not delta2 > 0:
            return RouthHurwitzVerdict(False, "a1*a2 > a0*a3", zeros, degree)
        # a3 > 0 here, so the divided form is equivalent to this product form
        if not a3 * delta2 > a1 * a1 * a4:
            return RouthHurwitzVerdict(
                False, "a1*a2 > a1^2*a4/a3 + a0*a3", zeros, degree
            )
        return RouthHurwitzVerdict(True, None, zeros, degree)
    column = _routh_first_column(c)
    for k, value in enumerate(column):
        if not value > 0:
            return RouthHurwitzVerdict(False, f"routh row {k} > 0", zeros, degree)
    return RouthHurwitzVerdict(True, None, zeros, degree)


def max_root_real(coeffs: Sequence[float]) -> float:
    """Largest real part among the roots, trailing zero coefficients removed."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size <= 1:
        return -math.inf
    return float(np.max(np.roots(c).real))


@dataclass(frozen=True)
class GainBound:
    name: str
    value: float
    bound: float
    satisfied: bool
    margin: float


def gain_bounds(
    k_i: float,
    m_omega: float,
    gamma_e: Optional[float],
    gamma_f: Optional[float],
    n: float,
    tau_v: float,
    q_set: float,
) -> List[GainBound]:
    """Sufficient gain conditions under gamma-uniform energy weights."""
    if gamma_e is None or gamma_f is None:
        raise UnsupportedCaseError("gain bounds need gamma-uniform energy weights")
    limit = math.inf if gamma_e == 0 else 1.0 / gamma_e
    inverse_q = math.inf if q_set == 0 else 1.0 / abs(q_set)
    needed = n * tau_v * gamma_f
    return [
        GainBound("k_i <= 1/gamma_e", k_i, limit, k_i <= limit, limit - k_i),
        GainBound(
            "m_omega <= 1/gamma_e", m_omega, limit, m_omega <= limit, limit - m_omega
        ),
        GainBound(
            "1/Q* >= n*tau_v*gamma_f",
            inverse_q,
            needed,
            inverse_q >= needed,
            inverse_q - needed,
        ),
    ]


@dataclass(frozen=True)
class CompositeModel:
    """Linearized closed loop in each inverter's own per-unit base.

    Droop inverters enter with m_omega = tau_v = 1/omega_c.
    """

    l_p: np.ndarray
    l_q: np.ndarray
    l_a: np.ndarray
    l_b: np.ndarray
    l_e: np.ndarray
    l_f: np.ndarray
    omega_b: np.ndarray
    k_i: np.ndarray
    m_omega: np.ndarray
    m: np.ndarray
    kappa_i: np.ndarray
    tau_v: np.ndarray
    n: np.ndarray
    q_set: np.ndarray
    beta: np.ndarray

    @property
    def size(self) -> int:
        return self.l_p.shape[0]

    @classmethod
    def build(
        cls,
        params: Sequence[InverterParams],
        graph: CommGraph,
        lin: LinearizedPower,
        s_base: float,
        omega_c: float,
    ) -> "CompositeModel":
        scale = np.diag([s_base / p.s_max for p in params])

        def vec(name: str) -> np.ndarray:
            return np.array([getattr(p, name) for p in params], dtype=float)

        m_omega = np.array([p.m_omega if p.is_vsm else 1.0 / omega_c for p in params])
        tau_v = np.array([p.tau_v if p.is_vsm else 1.0 / omega_c for p in params])
        return cls(
            l_p=scale @ lin.l_p,
            l_q=scale @ lin.l_q,
            l_a=build_laplacian(graph, "a"),
            l_b=build_laplacian(graph, "b"),
            l_e=build_laplacian(graph, "e"),
            l_f=build_laplacian(graph, "f"),
            omega_b=vec("omega_nom"),
            k_i=vec("k_i"),
            m_omega=m_omega,
            m=vec("m"),
            kappa_i=vec("kappa_i"),
            tau_v=tau_v,
            n=vec("n"),
            q_set=np.array([p.q_set_pu for p in params]),
            beta=vec("xi"),
        )

    def with_gain(self, name: str, value: float) -> "CompositeModel":
        if name not in TUNABLE_GAINS:
            raise ValueError(f"gain {name!r} cannot be swept")
        return dataclasses.replace(self, **{name: np.full(self.size, float(value))})

    def homogeneous(self) -> bool:
        vectors = (
            self.omega_b,
            self.k_i,
            self.m_omega,
            self.m,
            self.kappa_i,
            self.tau_v,
            self.n,
            self.q_set,
            self.beta,
        )
        return all(np.allclose(v, v[0], rtol=1e-12, atol=0.0) for v in vectors)


def assemble_matrices(
    model: CompositeModel, proj: ProjectionPair
) -> Tuple[np.ndarray, np.ndarray]:
    """Disagreement-space state matrices of the frequency and voltage loops.

    Frequency states (delta, d_omega, Omega, dE); voltage states (V, e, dF).
    """
    n = model.size
    for name in ("l_p", "l_q", "l_a", "l_b", "l_e", "l_f"):
        if getattr(model, name).shape != (n, n):
            raise ValueError(f"{name} is not {n}x{n}")
    if proj.R.shape != (n - 1, n):
        raise ValueError(f"projection is {proj.R.shape}, expected {(n - 1, n)}")
    eye = np.eye(n)
    zero = np.zeros((n, n))
    inv_mw = np.diag(1.0 / model.m_omega)
    inv_k = np.diag(1.0 / model.k_i)
    m = np.diag(model.m)
    freq = np.block(
        [
            [zero, np.diag(model.omega_b), zero, zero],
            [-inv_mw @ m @ model.l_p, -inv_mw, inv_mw, zero],
            [zero, -inv_k, -inv_k @ model.l_a, -inv_k @ model.l_e @ m],
            [model.l_p, zero, zero, zero],
        ]
    )
    inv_tau = np.diag(1.0 / model.tau_v)
    inv_kappa = np.diag(1.0 / model.kappa_i)
    q_safe = np.where(model.q_set == 0, 1.0, model.q_set)
    volt = np.block(
        [
            [-inv_tau @ (eye + np.diag(model.n) @ model.l_q), inv_tau, zero],
            [
                -inv_kappa
                @ (np.diag(model.beta) + model.l_b @ np.diag(1.0 / q_safe) @ model.l_q),
                zero,
                -inv_kappa @ model.l_f @ np.diag(model.n),
            ],
            [model.l_q, zero, zero],
        ]
    )
    t_freq = np.kron(np.eye(4), proj.R)
    t_volt = np.kron(np.eye(3), proj.R)
    return t_freq @ freq @ t_freq.T, t_volt @ volt @ t_volt.T


@dataclass(frozen=True)
class AssembledSpectra:
    freq: np.ndarray
    volt: np.ndarray

    def max_real(self, channel: str) -> float:
        """Largest real part, structural zeros excluded."""
        values = self.nonzero(channel)
        return float(values.real.max()) if values.size else -math.inf

    def nonzero(self, channel: str) -> np.ndarray:
        values = getattr(self, channel)
        scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
        return values[np.abs(values) > STRUCTURAL_ZERO * scale]

    def structural_zeros(self, channel: str) -> int:
        return int(getattr(self, channel).size - self.nonzero(channel).size)


def assemble_and_eig(model: CompositeModel, proj: ProjectionPair) -> AssembledSpectra:
    a_freq, a_volt = assemble_matrices(model, proj)
    return AssembledSpectra(np.linalg.eigvals(a_freq), np.linalg.eigvals(a_volt))


def commutator_ratio(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a @ b - b @ a) / denom)


def modal_pairs(a: np.ndarray, b: np.ndarray) -> List[Tuple[float, float]]:
    """Paired eigenvalues of two commuting matrices.

    Both are diagonalized by the eigenvectors of a generic combination.
    """
    ratio = commutator_ratio(a, b)
    if ratio >= COMMUTATOR_TOLERANCE:
        raise UnsupportedCaseError(
            f"matrices do not commute (relative commutator {ratio:.2e})"
        )
    # irrational weight so distinct modes of the pair stay distinct in the sum
    _, vectors = np.linalg.eig(a + (1.0 / math.pi) * b)
    inverse = np.linalg.inv(vectors)
    da = inverse @ a @ vectors
    db = inverse @ b @ vectors
    pairs = []
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1.0)
    for k in range(a.shape[0]):
        la, lb = da[k, k], db[k, k]
        if abs(la.imag) > 1e-9 * scale or abs(lb.imag) > 1e-9 * scale:
            raise UnsupportedCaseError("complex modal eigenvalue")
        pairs.append((float(la.real), float(lb.real)))
    return sorted(pairs)


def match_spectra(a: Sequence[complex], b: Sequence[complex]) -> float:
    """Largest distance after greedily pairing each value of ``a`` with one of ``b``."""
    remaining = list(np.asarray(b, dtype=complex))
    if len(remaining) != len(a):
        raise ValueError("spectra differ in size")
    worst = 0.0
    for value in sorted(np.asarray(a, dtype=complex), key=lambda z: (z.real, z.imag)):
        distances = [abs(value - other) for other in remaining]
        k = int(np.argmin(distances))
        worst = max(worst, distances[k])
        remaining.pop(k)
    return worst


@dataclass
class ModeReport:
    index: int
    lambdas: Tuple[float, float]
    coefficients: List[float]
    verdict: RouthHurwitzVerdict
    max_root_real: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.index,
            "lambda": list(self.lambdas),
            "coefficients": list(self.coefficients),
            "stable": self.verdict.stable,
            "violated": self.verdict.violated,
            "structural_zeros": self.verdict.structural_zeros,
            "max_root_real": _finite(self.max_root_real),
        }


@dataclass
class Crossing:
    gain: str
    value: Optional[float]
    searched_up_to: float
    rh_violated: Optional[bool] = None
    max_real_above: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class StabilityReport:
    gamma: GammaRatios
    freq_modes: List[ModeReport] = field(default_factory=list)
    volt_modes: List[ModeReport] = field(default_factory=list)
    gain_bounds: List[GainBound] = field(default_factory=list)
    spectra: Optional[AssembledSpectra] = None
    scalar_modal: bool = False
    modal_gap: Optional[float] = None
    notes: List[str] = field(default_factory=list)
    crossing: Optional[Crossing] = None

    @property
    def rh_ok(self) -> bool:
        return all(mode.verdict.stable for mode in self.freq_modes + self.volt_modes)

    @property
    def stable(self) -> bool:
        if self.spectra is None:
            return self.rh_ok
        return (
            self.rh_ok
            and self.spectra.max_real("freq") < 0
            and self.spectra.max_real("volt") < 0
        )

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "gamma_e": self.gamma.gamma_e,
            "gamma_f": self.gamma.gamma_f,
            "energy_channels": {
                "active": bool(self.gamma.gamma_e),
                "reactive": bool(self.gamma.gamma_f),
            },
            "scalar_modal": self.scalar_modal,
            "rh_freq": [mode.to_dict() for mode in self.freq_modes],
            "rh_volt": [mode.to_dict() for mode in self.volt_modes],
            "gain_bounds": [
                {
                    "name": b.name,
                    "value": _finite(b.value),
                    "bound": _finite(b.bound),
                    "satisfied": bool(b.satisfied),
                    "margin": _finite(b.margin),
                }
                for b in self.gain_bounds
            ],
            "rh_ok": self.rh_ok,
            "stable": self.stable,
            "modal_gap": self.modal_gap,
            "notes": list(self.notes),
        }
        if self.spectra is not None:
            data["eigenvalues"] = {
                channel: [
                    [float(z.real), float(z.imag)]
                    for z in getattr(self.spectra, channel)
                ]
                for channel in ("freq", "volt")
            }
            data["max_real"] = {
                channel: _finite(self.spectra.max_real(channel))
                for channel in ("freq", "volt")
            }
            data["structural_zeros"] = {
                channel: self.spectra.structural_zeros(channel)
                for channel in ("freq", "volt")
            }
        if self.crossing is not None:
            data["crossing"] = self.crossing.to_dict()
        return data


def _finite(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def _mode(index: int, lambdas: Tuple[float, float], coeffs: np.ndarray) -> ModeReport:
    return ModeReport(
        index, lambdas, coeffs.tolist(), routh_hurwitz(coeffs), max_root_real(coeffs)
    )


def modal_reports(
    model: CompositeModel, proj: ProjectionPair, gamma: GammaRatios
) -> Tuple[List[ModeReport], List[ModeReport], float]:
    """Per-mode polynomials and verdicts plus the gap to the assembled spectrum."""
    r = proj.R

    def project(mat: np.ndarray) -> np.ndarray:
        return r @ mat @ r.T

    omega_b, m, k_i = model.omega_b[0], model.m[0], model.k_i[0]
    freq_pairs = modal_pairs(project(model.l_a), omega_b * project(model.l_p))
    volt_pairs = modal_pairs(project(model.l_b), project(model.l_q))
    freq_modes, volt_modes, roots = [], [], {"freq": [], "volt": []}
    for index, (la, lp) in enumerate(freq_pairs):
        coeffs = freq_char_poly(la, lp, k_i, model.m_omega[0], m, gamma.gamma_e)
        freq_modes.append(_mode(index, (la, lp), coeffs))
        roots["freq"].extend(np.roots(coeffs))
    for index, (lb, lq) in enumerate(volt_pairs):
        coeffs = volt_char_poly(
            lb,
            lq,
            model.kappa_i[0],
            model.tau_v[0],
            model.n[0],
            model.q_set[0],
            model.beta[0],
            gamma.gamma_f,
        )
        volt_modes.append(_mode(index, (lb, lq), coeffs))
        roots["volt"].extend(np.roots(coeffs))
    spectra = assemble_and_eig(model, proj)
    gap = max(
        match_spectra(roots["freq"], spectra.freq),
        match_spectra(roots["volt"], spectra.volt),
    )
    return freq_modes, volt_modes, gap


def analyze_model(model: CompositeModel, gamma: GammaRatios) -> StabilityReport:
    report = StabilityReport(gamma=gamma)
    if model.size < 2:
        report.notes.append("single inverter: no disagreement modes")
        return report
    proj = projection(model.size)
    report.spectra = assemble_and_eig(model, proj)
    if not gamma.uniform:
        report.notes.append("energy weights are not gamma-uniform; modal analysis skipped")
        return report
    if not model.homogeneous():
        report.notes.append("gains are heterogeneous; modal analysis skipped")
        return report
    report.gain_bounds = gain_bounds(
        model.k_i[0],
        model.m_omega[0],
        gamma.gamma_e,
        gamma.gamma_f,
        model.n[0],
        model.tau_v[0],
        model.q_set[0],
    )
    try:
        report.freq_modes, report.volt_modes, report.modal_gap = modal_reports(
            model, proj, gamma
        )
        report.scalar_modal = True
    except UnsupportedCaseError as exc:
        report.notes.append(f"modal analysis skipped: {exc}")
    if gamma.gamma_e == 0:
        report.notes.append("active energy channel absent (gamma_e = 0)")
    if gamma.gamma_f == 0:
        report.notes.append("reactive energy channel absent (gamma_f = 0)")
    return report


def _is_stable(model: CompositeModel, proj: ProjectionPair) -> Tuple[bool, float]:
    spectra = assemble_and_eig(model, proj)
    worst = max(spectra.max_real("freq"), spectra.max_real("volt"))
    return worst < 0, worst


def sweep_gain(
    model: CompositeModel, gain: str, values: Sequence[float]
) -> List[Tuple[float, float]]:
    """(value, largest non-structural real part) along a gain grid."""
    proj = projection(model.size)
    return [(float(v), _is_stable(model.with_gain(gain, v), proj)[1]) for v in values]


def find_crossing(
    model: CompositeModel,
    gain: str,
    gamma: GammaRatios,
    upper: float = 100.0,
    iterations: int = 50,
    overshoot: float = 0.05,
) -> Crossing:
    """Smallest value of ``gain`` above its current one that destabilizes the loop.

    The reported verdicts are taken a relative ``overshoot`` past the crossing.
    """
    proj = projection(model.size)
    low = float(getattr(model, gain)[0])
    if not _is_stable(model, proj)[0]:
        return Crossing(gain, low, low)
    grid = np.geomspace(low, upper, 60)
    high = None
    for value in grid[1:]:
        if not _is_stable(model.with_gain(gain, value), proj)[0]:
            high = float(value)
            break
        low = float(value)
    if high is None:
        return Crossing(gain, None, upper)
    for _ in range(iterations):
        mid = 0.5 * (low + high)
        if _is_stable(model.with_gain(gain, mid), proj)[0]:
            low = mid
        else:
            high = mid
    above = model.with_gain(gain, high * (1.0 + overshoot))
    crossing = Crossing(gain, high, upper, max_real_above=_is_stable(above, proj)[1])
    if gamma.uniform and above.homogeneous():
        try:
            freq_modes, volt_modes, _ = modal_reports(above, proj, gamma)
            crossing.rh_violated = not all(
                mode.verdict.stable for mode in freq_modes + volt_modes
            )
        except UnsupportedCaseError:
            pass
    return crossing


def analyze(
    net: PhasorNetwork,
    params: Sequence[InverterParams],
    graph: CommGraph,
    omega_c: float,
    sweep: Optional[str] = None,
) -> StabilityReport:
    """Full certification at the synchronous operating point."""
    point = find_operating_point(net, params)
    lin = linearize_power(net, point)
    logger.debug(
        "linearized: |L_P 1| = %.3e, |L_Q 1| = %.3e", lin.row_sum_p, lin.row_sum_q
    )
    model = CompositeModel.build(params, graph, lin, net.s_base, omega_c)
    gamma = gamma_ratios(graph)
    report = analyze_model(model, gamma)
    if sweep is not None and model.size >= 2:
        report.crossing = find_crossing(model, sweep, gamma)
    return report
