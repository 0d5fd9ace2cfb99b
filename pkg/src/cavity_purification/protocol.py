"""No-photon post-selection protocol, Bell analysis, detector and localization models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .dynamics import (
    IntegratorConfig,
    branch_states,
    dark_state,
    evolve_master,
    evolve_no_click,
    find_steady_state,
    ground_state,
    pointer_amplitudes,
)
from .models import EffectiveParams, build_interaction_hamiltonian, collective_coupling, two_atom_signature
from .states import (
    DensityState,
    SpaceSignature,
    default_n_max,
    fidelity_pure,
    partial_trace,
    sigma_x,
    sigma_y,
    sigma_z,
    trace_distance,
)

BELL_THRESHOLD = 1 / math.sqrt(2)
PROBABILITY_FLOOR = 1e-12
FAMILY_TOL = 1e-6


class ProjectionError(ValueError):
    """The no-photon outcome has (numerically) zero probability."""


@dataclass(frozen=True)
class DetectorModel:
    """Photon counter watching the cavity output for ``observation_window``."""

    efficiency: float = 1.0
    dark_count_rate: float = 0.0
    observation_window: float = 5.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.dark_count_rate < 0 or self.observation_window < 0:
            raise ValueError("rates and windows must be >= 0")


@dataclass(frozen=True)
class ProtocolParams:
    effective: EffectiveParams
    rounds: int = 1
    mode: str = "steady"
    tau: Optional[float] = None
    detector: Optional[DetectorModel] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.mode not in ("steady", "timed"):
            raise ValueError(f"mode must be 'steady' or 'timed', got {self.mode!r}")
        if self.mode == "timed" and not (self.tau is not None and self.tau > 0):
            raise ValueError("timed mode needs tau > 0")

    @property
    def pointer_separation(self) -> float:
        """``|2 alpha~|^2`` in steady mode, ``|2 alpha(tau)|^2`` in timed mode."""
        g = self.effective.g_eff
        if self.mode == "timed":
            return (g * self.tau) ** 2
        return (2 * g / self.effective.kappa) ** 2


# -- projection ---------------------------------------------------------------

def project_vacuum(rho: DensityState, floor: float = PROBABILITY_FLOOR) -> tuple[DensityState, float]:
    """Post-select the cavity vacuum and return the normalized atomic state and its probability."""
    dims = rho.signature.dims
    nf = dims[-1]
    rest = rho.dim // nf
    block = np.asarray(rho.matrix).reshape(rest, nf, rest, nf)[:, 0, :, 0]
    prob = float(np.trace(block).real)
    if prob < floor:
        raise ProjectionError(f"vacuum probability {prob:.3e} below floor {floor:.1e}")
    return DensityState.from_matrix(SpaceSignature(dims[:-1]), block / prob), prob


def sector_projectors(p: EffectiveParams, tol: float = 1e-9) -> list[tuple[float, np.ndarray]]:
    """Eigen-projectors of the collective atomic coupling, grouped by eigenvalue."""
    vals, vecs = np.linalg.eigh(collective_coupling(p).matrix)
    groups: list[tuple[float, list[int]]] = []
    for i, v in enumerate(vals):
        if groups and abs(v - groups[-1][0]) <= tol:
            groups[-1][1].append(i)
        else:
            groups.append((float(v), [i]))
    return [(v, vecs[:, idx] @ vecs[:, idx].conj().T) for v, idx in groups]


def detector_filter(rho: DensityState, p: EffectiveParams, detector: DetectorModel,
                    floor: float = PROBABILITY_FLOOR, pulsed: bool = False) -> tuple[DensityState, float]:
    """Post-select "no click" with a finite detector instead of a vacuum projection.

    Each collective-coupling sector carries a (near) coherent field ``beta_k``.
    With the lasers on it leaks photons at rate ``kappa |beta_k|^2``; with
    ``pulsed=True`` the drive is off and the stored pulse decays.  The sector
    survives zero clicks with probability ``f_k = no_click_probability(...)``
    and the atomic state is filtered by ``sum_k sqrt(f_k) P_k`` after tracing
    out the field.
    """
    nf = rho.signature.dims[-1]
    atoms = np.asarray(partial_trace(rho, (0, 1)).matrix)
    a_field = np.diag(np.sqrt(np.arange(1, nf)), k=1)
    kraus = np.zeros((4, 4), dtype=complex)
    for _, proj in sector_projectors(p):
        weight = float(np.trace(proj @ atoms).real)
        if weight <= floor:
            continue
        mean_a = np.trace(np.kron(proj, a_field) @ rho.matrix) / weight
        f = no_click_probability(mean_a, detector, p.kappa, pulsed)
        kraus += math.sqrt(f) * proj
    out = kraus @ atoms @ kraus.conj().T
    prob = float(np.trace(out).real)
    if prob < floor:
        raise ProjectionError(f"no-click probability {prob:.3e} below floor {floor:.1e}")
    return DensityState.from_matrix(SpaceSignature((2, 2)), out / prob), prob


# -- closed forms -------------------------------------------------------------

def closed_form_fidelity(N: int, alpha_tilde: complex) -> float:
    """``1 / (1 + 2 exp(-N |2 a|^2))``, as printed for the N-round state."""
    x = abs(2 * alpha_tilde) ** 2
    return 1.0 / (1.0 + 2.0 * math.exp(-N * x))


def closed_form_success(N: int, alpha_tilde: complex) -> float:
    """``(1/2) (1 + e^{-x})^{-1} prod_{m=2}^{N} (1 + 2 e^{-m x})^{-1}``, ``x = |2 a|^2``."""
    x = abs(2 * alpha_tilde) ** 2
    out = 0.5 / (1.0 + math.exp(-x))
    for m in range(2, N + 1):
        out /= 1.0 + 2.0 * math.exp(-m * x)
    return out


def oracle_fidelity(N: int, alpha_tilde: complex) -> float:
    """Dark-state weight from exact projection arithmetic: ``1 / (1 + exp(-N x))``.

    Starting from ``|gg>``, the contaminating branches carry weight 1/2 against
    1/2 for the dark state and each round multiplies them by ``exp(-x)``.
    """
    x = abs(2 * alpha_tilde) ** 2
    return 1.0 / (1.0 + math.exp(-N * x))


def oracle_success(N: int, alpha_tilde: complex) -> float:
    """Probability that all ``N`` rounds see the vacuum: ``(1 + exp(-N x)) / 2``."""
    x = abs(2 * alpha_tilde) ** 2
    return 0.5 * (1.0 + math.exp(-N * x))


def oracle_round_probability(m: int, alpha_tilde: complex) -> float:
    """Vacuum probability of round ``m`` given success in all earlier rounds."""
    return oracle_success(m, alpha_tilde) / (oracle_success(m - 1, alpha_tilde) if m > 1 else 1.0)


# -- Bell analysis ------------------------------------------------------------

@dataclass(frozen=True)
class BellReport:
    correlation: np.ndarray
    top_eigenvalues: tuple[float, float]
    s_max: float

    @property
    def violates(self) -> bool:
        return self.s_max > 2.0


_PAULIS = (sigma_x(), sigma_y(), sigma_z())


def correlation_matrix(rho: DensityState) -> np.ndarray:
    if rho.signature.dims != (2, 2):
        raise ValueError(f"need a two-qubit state, got dimensions {rho.signature.dims}")
    T = np.empty((3, 3))
    for i, a in enumerate(_PAULIS):
        for j, b in enumerate(_PAULIS):
            T[i, j] = np.trace(rho.matrix @ np.kron(a.matrix, b.matrix)).real
    return T


def chsh_max(rho: DensityState) -> BellReport:
    """Maximal CHSH value ``2 sqrt(m1 + m2)`` from the correlation matrix (Horodecki)."""
    T = correlation_matrix(rho)
    m = np.sort(np.linalg.eigvalsh(T.T @ T))[::-1]
    m1, m2 = float(max(m[0], 0.0)), float(max(m[1], 0.0))
    return BellReport(T, (m1, m2), 2.0 * math.sqrt(m1 + m2))


def _direction(theta: float, phi: float) -> np.ndarray:
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


def _spin(n: np.ndarray) -> np.ndarray:
    return sum(c * s.matrix for c, s in zip(n, _PAULIS))


def chsh_value(rho: DensityState, a, a2, b, b2) -> float:
    """``<A B> + <A B'> + <A' B> - <A' B'>`` for measurement directions on the Bloch sphere."""
    A, A2, B, B2 = (_spin(np.asarray(x)) for x in (a, a2, b, b2))
    op = np.kron(A, B + B2) + np.kron(A2, B - B2)
    return float(np.trace(rho.matrix @ op).real)


def chsh_angle_search(rho: DensityState, grid: int = 4, rng: Optional[np.random.Generator] = None,
                      starts: int = 6) -> float:
    """Direct maximization of the CHSH expression over measurement angles.

    A coarse grid over Alice's two directions seeds local optimization over all
    eight angles; the operator expectation is evaluated from ``rho`` directly.
    """
    rng = rng or np.random.default_rng(0)

    def neg(x):
        d = [_direction(x[2 * k], x[2 * k + 1]) for k in range(4)]
        return -chsh_value(rho, *d)

    seeds = [rng.uniform([0, 0] * 4, [math.pi, 2 * math.pi] * 4) for _ in range(starts)]
    ths = np.linspace(0, math.pi, grid)
    for t1 in ths:
        for t2 in ths:
            x = rng.uniform([0, 0] * 4, [math.pi, 2 * math.pi] * 4)
            x[0], x[2] = t1, t2
            seeds.append(x)
    ranked = sorted(seeds, key=neg)[:starts]
    best = -min(optimize.minimize(neg, x0, method="BFGS").fun for x0 in ranked)
    return best


def bell_family_state(lam: float, variant: bool = False) -> DensityState:
    """``(1-lam)/2 (|++><++| + |--><--|) + lam |Psi+><Psi+|`` (Phi+ family for the variant)."""
    p = EffectiveParams(g_eff=0.0, coupling_signs=(1, -1) if variant else (1, 1))
    states = branch_states(p)
    names = list(states)
    m = sum((1 - lam) / 2 * states[k].to_density().matrix for k in names[:2])
    m = m + lam * states[names[2]].to_density().matrix
    return DensityState.from_matrix(SpaceSignature((2, 2)), m)


def family_lambda(rho: DensityState, variant: bool = False) -> tuple[float, float]:
    """``lambda = <dark|rho|dark>`` and the trace distance of ``rho`` to that family member."""
    target = dark_state(EffectiveParams(g_eff=0.0, coupling_signs=(1, -1) if variant else (1, 1)))
    lam = fidelity_pure(target, rho)
    return lam, trace_distance(rho, bell_family_state(lam, variant))


# -- purification -------------------------------------------------------------

@dataclass
class RoundRecord:
    round: int
    probability: float
    atoms: DensityState
    fidelity: float
    lam: float
    family_residual: float
    s_max: float
    cumulative_success: float
    closed_fidelity: float
    closed_success: float
    oracle_fidelity: float
    oracle_success: float
    steady_residual: float = 0.0
    converged: bool = True

    @property
    def on_family(self) -> bool:
        return self.family_residual <= FAMILY_TOL

    @property
    def fidelity_gap(self) -> float:
        """Simulated fidelity minus the printed closed form."""
        return self.fidelity - self.closed_fidelity


@dataclass
class PurificationReport:
    params: ProtocolParams
    target: str
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def success_probability(self) -> float:
        return self.rounds[-1].cumulative_success if self.rounds else 1.0

    @property
    def final(self) -> RoundRecord:
        return self.rounds[-1]


def _default_n_max(p: ProtocolParams) -> int:
    tau = p.tau if p.mode == "timed" else None
    return default_n_max(max(abs(a) for a in pointer_amplitudes(p.effective, tau).values()))


def _pointer_alpha(p: ProtocolParams) -> complex:
    """``alpha~`` such that ``|2 alpha~|^2`` equals the pointer separation in use."""
    return 0.5j * math.sqrt(p.pointer_separation)


def purify(p: ProtocolParams, cfg: Optional[IntegratorConfig] = None,
           n_max: Optional[int] = None) -> PurificationReport:
    """Run ``p.rounds`` rounds of preparation and no-photon post-selection.

    Every round starts from ``rho_atoms (x) |0><0|``; in steady mode the master
    equation is integrated to its steady state, in timed mode the lasers act
    unitarily for ``tau`` and are then switched off.  Post-selection is a vacuum
    projection, or ``detector_filter`` when a detector model is given.
    """
    eff = p.effective
    if cfg is None:
        cfg = IntegratorConfig(method="expm") if p.mode == "timed" else IntegratorConfig()
    n_max = n_max or _default_n_max(p)
    H = build_interaction_hamiltonian(eff, n_max)
    target = dark_state(eff)
    report = PurificationReport(p, "phi+" if eff.variant else "psi+")
    atoms = partial_trace(ground_state(n_max), (0, 1))
    vac = np.zeros((n_max + 1, n_max + 1))
    vac[0, 0] = 1.0
    alpha = _pointer_alpha(p)
    cumulative = 1.0
    for k in range(1, p.rounds + 1):
        rho0 = DensityState(two_atom_signature(n_max), np.kron(atoms.matrix, vac))
        residual, converged = 0.0, True
        if p.mode == "steady":
            ss = find_steady_state(H, eff.kappa, rho0, cfg)
            rho, residual, converged = ss.state, ss.residual, ss.converged
        else:
            rho = evolve_master(H, 0.0, rho0, replace(cfg, t_final=p.tau, sample_stride=0)).final
        if p.detector is None:
            atoms, prob = project_vacuum(rho)
        else:
            atoms, prob = detector_filter(rho, eff, p.detector, pulsed=p.mode == "timed")
        cumulative *= prob
        lam, resid = family_lambda(atoms, eff.variant)
        report.rounds.append(RoundRecord(
            round=k, probability=prob, atoms=atoms, fidelity=fidelity_pure(target, atoms),
            lam=lam, family_residual=resid, s_max=chsh_max(atoms).s_max,
            cumulative_success=cumulative,
            closed_fidelity=closed_form_fidelity(k, alpha), closed_success=closed_form_success(k, alpha),
            oracle_fidelity=oracle_fidelity(k, alpha), oracle_success=oracle_success(k, alpha),
            steady_residual=residual, converged=converged,
        ))
    return report


# -- Bell surface -------------------------------------------------------------

@dataclass
class BellSurface:
    rows: list[dict]
    contour: list[dict]


def _bisect_threshold(fn, lo: float, hi: float) -> Optional[float]:
    flo, fhi = fn(lo) - BELL_THRESHOLD, fn(hi) - BELL_THRESHOLD
    if flo * fhi > 0:
        return None
    return optimize.bisect(lambda a: fn(a) - BELL_THRESHOLD, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)


def bell_surface(alpha_grid: Sequence[float], N_grid: Sequence[int], numeric: Optional[str] = "timed",
                 cfg: Optional[IntegratorConfig] = None, kappa: float = 1.0) -> BellSurface:
    """Tabulate ``lambda(|alpha~|, N)`` with violation flags and the ``lambda = 1/sqrt 2`` contour.

    ``numeric`` selects how the simulated column is produced: ``"timed"``
    (unitary preparation with ``|2 alpha(tau)| = |2 alpha~|``), ``"steady"``
    (master-equation steady state) or ``None`` to skip it.
    """
    rows = []
    n_top = max(N_grid)
    for a in alpha_grid:
        numeric_rounds: dict[int, RoundRecord] = {}
        if numeric is not None and a > 0:
            eff = EffectiveParams(g_eff=a * kappa, kappa=kappa)
            if numeric == "timed":
                pp = ProtocolParams(eff, rounds=n_top, mode="timed", tau=2.0 / kappa)
            else:
                pp = ProtocolParams(eff, rounds=n_top)
            numeric_rounds = {r.round: r for r in purify(pp, cfg).rounds}
        for N in N_grid:
            lam_closed = closed_form_fidelity(N, 1j * a)
            rec = numeric_rounds.get(N)
            row = {
                "alpha": float(a),
                "N": int(N),
                "lambda_closed": lam_closed,
                "lambda_oracle": oracle_fidelity(N, 1j * a),
                "lambda_numeric": rec.lam if rec else math.nan,
                "family_residual": rec.family_residual if rec else math.nan,
                "s_max_closed": chsh_max(bell_family_state(lam_closed)).s_max,
                "s_max_numeric": rec.s_max if rec else math.nan,
            }
            row["violation_closed"] = row["s_max_closed"] > 2.0
            row["violation_numeric"] = bool(rec and rec.s_max > 2.0)
            rows.append(row)
    contour = []
    hi = max(10.0, max(alpha_grid) if len(alpha_grid) else 0.0)
    for N in N_grid:
        a_closed = _bisect_threshold(lambda a: closed_form_fidelity(N, 1j * a), 0.0, hi)
        a_oracle = _bisect_threshold(lambda a: oracle_fidelity(N, 1j * a), 0.0, hi)
        contour.append({
            "N": int(N),
            "alpha_closed": a_closed,
            "N_alpha2_closed": N * a_closed**2 if a_closed is not None else math.nan,
            "alpha_oracle": a_oracle,
            "N_alpha2_oracle": N * a_oracle**2 if a_oracle is not None else math.nan,
        })
    return BellSurface(rows, contour)


def contour_constant(closed_form: bool = True) -> float:
    """Closed-form value of ``N |alpha~|^2`` on the ``lambda = 1/sqrt 2`` contour."""
    if closed_form:
        return 0.25 * math.log(2.0 / (math.sqrt(2.0) - 1.0))
    return 0.25 * math.log(1.0 / (math.sqrt(2.0) - 1.0))


# -- localization -------------------------------------------------------------

@dataclass
class LocalizationTable:
    rows: list[dict]
    exponent: float
    prefactor: float
    record: str


def localization_model(epsilon: float) -> float:
    return 1.0 / (1.0 + epsilon**2)


def localized_fidelity(p: ProtocolParams, epsilon: float, record: str = "continuous",
                       cfg: Optional[IntegratorConfig] = None) -> dict:
    """Dark-state fidelity once purified with couplings ``g_eff`` and ``g_eff + epsilon kappa``.

    ``record="continuous"`` post-selects on no click during the whole
    preparation window (``cfg.max_time``) and traces out the field;
    ``record="projective"`` runs one steady-state round with a final vacuum
    projection.
    """
    cfg = cfg or IntegratorConfig()
    eff = replace(p.effective, delta_g=epsilon * p.effective.kappa)
    target = dark_state(eff)
    if record == "continuous":
        n_max = default_n_max(max(abs(a) for a in pointer_amplitudes(eff).values()))
        H = build_interaction_hamiltonian(eff, n_max)
        psi, prob = evolve_no_click(H, eff.kappa, ground_state(n_max), cfg.max_time)
        atoms = partial_trace(psi, (0, 1))
        return {"fidelity": fidelity_pure(target, atoms), "probability": prob, "converged": True}
    if record == "projective":
        rec = purify(replace(p, effective=eff, rounds=1, mode="steady"), cfg).final
        return {"fidelity": rec.fidelity, "probability": rec.probability, "converged": rec.converged}
    raise ValueError(f"unknown record {record!r}")


def localization_sweep(p: ProtocolParams, epsilon_grid: Sequence[float], record: str = "continuous",
                       cfg: Optional[IntegratorConfig] = None,
                       fit_range: tuple[float, float] = (0.02, 0.2)) -> LocalizationTable:
    """Once-purified fidelity against coupling asymmetry, with a log-log fit of ``1 - F``."""
    rows = []
    for eps in epsilon_grid:
        out = localized_fidelity(p, float(eps), record, cfg)
        model = localization_model(eps)
        row = {
            "epsilon": float(eps),
            "fidelity_numeric": out["fidelity"],
            "fidelity_model": model,
            "infidelity_ratio": (1 - out["fidelity"]) / (1 - model) if eps > 0 else math.nan,
            "probability": out["probability"],
            "converged": out["converged"],
        }
        rows.append(row)
    pts = [(r["epsilon"], 1 - r["fidelity_numeric"]) for r in rows
           if fit_range[0] - 1e-12 <= r["epsilon"] <= fit_range[1] + 1e-12 and r["fidelity_numeric"] < 1]
    if len(pts) >= 2:
        x, y = np.log([e for e, _ in pts]), np.log([d for _, d in pts])
        slope, intercept = np.polyfit(x, y, 1)
        exponent, prefactor = float(slope), float(math.exp(intercept))
    else:
        exponent = prefactor = math.nan
    return LocalizationTable(rows, exponent, prefactor, record)


# -- detection ----------------------------------------------------------------

@dataclass(frozen=True)
class DetectionOutcome:
    clicks: int
    verdict: str
    p_no_click: float
    p_misclassified: float


def mean_clicks(amplitude: complex, d: DetectorModel, kappa: float = 1.0, pulsed: bool = False) -> float:
    """Poisson mean of the click count in the observation window ``T``.

    Driven field: ``eta kappa |beta|^2 T + dark T``.  Free pulse
    (``pulsed=True``): ``eta |beta|^2 (1 - exp(-kappa T)) + dark T``.
    """
    T = d.observation_window
    n = abs(amplitude) ** 2
    signal = n * (1.0 - math.exp(-kappa * T)) if pulsed else kappa * n * T
    return d.efficiency * signal + d.dark_count_rate * T


def no_click_probability(amplitude: complex, d: DetectorModel, kappa: float = 1.0,
                         pulsed: bool = False) -> float:
    return math.exp(-mean_clicks(amplitude, d, kappa, pulsed))


def classify_detection(amplitude: complex, d: DetectorModel, rng: np.random.Generator,
                       kappa: float = 1.0, pulsed: bool = False) -> DetectionOutcome:
    """Sample the click count for a field branch (``amplitude = 0`` is the vacuum branch).

    The verdict is ``"no-photon"`` iff no click is registered.  The closed-form
    misclassification probability is a false alarm for the vacuum branch and a
    miss for a coherent branch.
    """
    mu = mean_clicks(amplitude, d, kappa, pulsed)
    clicks = int(rng.poisson(mu))
    p0 = math.exp(-mu)
    wrong = 1.0 - p0 if amplitude == 0 else p0
    return DetectionOutcome(clicks, "no-photon" if clicks == 0 else "photon", p0, wrong)


def sample_clicks(amplitude: complex, d: DetectorModel, rng: np.random.Generator, size: int,
                  kappa: float = 1.0, pulsed: bool = False) -> np.ndarray:
    return rng.poisson(mean_clicks(amplitude, d, kappa, pulsed), size=size)


def cell_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for sweep cell ``index``, fixed by ``(seed, index)`` alone."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
