"""Hamiltonians, cavity dissipator and regime checks.

Units: hbar = 1, so every Hamiltonian is returned as ``H / hbar`` in rad/time.

Conventions for the two-atom effective models (signature ``[2, 2, n_max+1]``)::

    sigma_j  = |g_j><e_j|,   sigma_x,j = sigma_j + sigma_j^dag

Each atom carries a signed effective coupling ``c_j``.  The interaction-picture
Hamiltonian is ``-(1/2)(a + a^dag) sum_j c_j sigma_x,j``; equal signs give the
symmetric scheme with dark state ``|Psi+>``, opposite signs the variant whose
dark state is ``|Phi+>``.  With ``c = g' (+1, -1)`` this is identical to
``+(g'/2)(a + a^dag) sum_j (-1)^j sigma_x,j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .states import (
    C,
    E,
    G,
    Operator,
    SignatureError,
    SpaceSignature,
    annihilation,
    embed,
    identity,
    number,
    sigma_lower,
    sigma_raise,
    sigma_x,
    tensor,
    transition,
)

DEFAULT_STRICTNESS = 0.1
# the variant's strong-driving inequality is stated both ways; both readings are reported
AMBIGUOUS_CONDITIONS = ("variant_strong_driving",)


# -- parameters ---------------------------------------------------------------

@dataclass(frozen=True)
class EffectiveParams:
    """Couplings of the adiabatically eliminated two-level model.

    ``delta_g`` is added to the magnitude of atom 2's coupling, which models
    unequal atom-cavity coupling from imperfect localization.
    """

    g_eff: float
    omega_eff_drive: float = 0.0
    kappa: float = 1.0
    coupling_signs: tuple[int, int] = (1, 1)
    delta_g: float = 0.0

    def __post_init__(self) -> None:
        signs = tuple(int(s) for s in self.coupling_signs)
        if len(signs) != 2 or any(s not in (1, -1) for s in signs):
            raise ValueError(f"coupling_signs must be two entries of +1/-1, got {self.coupling_signs!r}")
        object.__setattr__(self, "coupling_signs", signs)
        if not self.g_eff >= 0:
            raise ValueError(f"g_eff must be >= 0, got {self.g_eff}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    @property
    def couplings(self) -> tuple[float, float]:
        s1, s2 = self.coupling_signs
        return (s1 * self.g_eff, s2 * (self.g_eff + self.delta_g))

    @property
    def variant(self) -> bool:
        return self.coupling_signs[0] != self.coupling_signs[1]

    @property
    def alpha_tilde(self) -> complex:
        """Steady pointer amplitude ``i g_eff / kappa`` (``beta`` for the variant)."""
        return 1j * self.g_eff / self.kappa


@dataclass(frozen=True)
class FullModelParams:
    """Parameters of the two-atom three-level (Lambda) model with one cavity mode."""

    omega_e: float
    omega_c: float
    omega_f: float
    g1: float
    g2: float
    Omega: float
    Omega1p: float
    Omega2p: float
    Delta: float
    DeltaP: float
    stark_compensation: bool = True

    def __post_init__(self) -> None:
        for name in ("omega_e", "omega_c", "omega_f", "g1", "g2", "Omega", "Omega1p", "Omega2p", "Delta", "DeltaP"):
            value = getattr(self, name)
            if isinstance(value, complex) or np.iscomplexobj(value):
                raise TypeError(f"{name} must be real")
            object.__setattr__(self, name, float(value))
        if self.Delta == self.DeltaP:
            raise ValueError("Delta and DeltaP must differ")
        if self.Delta == 0 or self.DeltaP == 0:
            raise ValueError("detunings must be nonzero")

    @classmethod
    def resonant(cls, *, Delta, DeltaP, g, Omega, Omega1p, Omega2p, omega_e=0.0, omega_f=0.0,
                 g2=None, stark_compensation=True) -> "FullModelParams":
        """Choose ``omega_c`` so the cavity Raman process is two-photon resonant."""
        return cls(
            omega_e=omega_e, omega_c=Delta + omega_e + omega_f, omega_f=omega_f,
            g1=g, g2=g if g2 is None else g2, Omega=Omega, Omega1p=Omega1p, Omega2p=Omega2p,
            Delta=Delta, DeltaP=DeltaP, stark_compensation=stark_compensation,
        )

    @property
    def two_photon_detuning(self) -> float:
        return self.omega_f + self.omega_e - (self.omega_c - self.Delta)

    def effective(self, kappa: float = 1.0) -> EffectiveParams:
        """Adiabatically eliminated couplings ``g_eff = Omega g / Delta``, ``Omega'_eff = Omega1' Omega2' / Delta'``."""
        scale = self.Omega / self.Delta
        g1, g2 = abs(self.g1), abs(self.g2)
        return EffectiveParams(
            g_eff=scale * g1,
            omega_eff_drive=self.Omega1p * self.Omega2p / self.DeltaP,
            kappa=kappa,
            coupling_signs=(int(math.copysign(1, self.g1)), int(math.copysign(1, self.g2))),
            delta_g=scale * (g2 - g1),
        )

    def variant_effective(self, kappa: float = 1.0) -> EffectiveParams:
        """Variant scheme (``Omega = 0``): ``g'_eff = Omega1' g / Delta``."""
        scale = self.Omega1p / self.Delta
        g1, g2 = abs(self.g1), abs(self.g2)
        return EffectiveParams(
            g_eff=scale * g1,
            omega_eff_drive=self.Omega1p * self.Omega2p / self.DeltaP,
            kappa=kappa,
            coupling_signs=(int(math.copysign(1, self.g1)), int(math.copysign(1, self.g2))),
            delta_g=scale * (g2 - g1),
        )


# -- effective builders -------------------------------------------------------

def two_atom_signature(n_max: int) -> SpaceSignature:
    return SpaceSignature((2, 2, n_max + 1))


def _field_ops(sig: SpaceSignature) -> tuple[Operator, Operator]:
    a = embed(annihilation(sig.n_max), len(sig) - 1, sig)
    return a, a.dag()


def _atom_op(op: Operator, j: int, sig: SpaceSignature) -> Operator:
    return embed(op, j, sig)


def effective_coupling_term(p: EffectiveParams, n_max: int) -> Operator:
    """Anti-Jaynes-Cummings part ``-sum_j c_j (a^dag sigma_j^dag + a sigma_j)``."""
    sig = two_atom_signature(n_max)
    a, ad = _field_ops(sig)
    out = Operator(sig, np.zeros((sig.total, sig.total)))
    for j, c in enumerate(p.couplings):
        sp = _atom_op(sigma_raise(), j, sig)
        sm = _atom_op(sigma_lower(), j, sig)
        out = out - c * (ad @ sp + a @ sm)
    return out


def effective_drive_term(p: EffectiveParams, n_max: int) -> Operator:
    """Classical drive ``-Omega'_eff sum_j sigma_x,j``."""
    sig = two_atom_signature(n_max)
    out = Operator(sig, np.zeros((sig.total, sig.total)))
    for j in range(2):
        out = out - p.omega_eff_drive * _atom_op(sigma_x(), j, sig)
    return out


def build_effective_hamiltonian(p: EffectiveParams, n_max: int) -> Operator:
    """Effective Hamiltonian after eliminating ``|c>``: anti-JC coupling plus classical drive."""
    return effective_coupling_term(p, n_max) + effective_drive_term(p, n_max)


def collective_coupling(p: EffectiveParams) -> Operator:
    """Atomic operator ``sum_j c_j sigma_x,j`` on the two qubits."""
    c1, c2 = p.couplings
    return c1 * tensor(sigma_x(), identity(2)) + c2 * tensor(identity(2), sigma_x())


def build_interaction_hamiltonian(p: EffectiveParams, n_max: int) -> Operator:
    """Strong-driving interaction-picture Hamiltonian ``-(1/2)(a + a^dag) sum_j c_j sigma_x,j``."""
    sig = two_atom_signature(n_max)
    quad = annihilation(n_max) + creation_of(n_max)
    return Operator(sig, -0.5 * np.kron(collective_coupling(p).matrix, quad.matrix))


def creation_of(n_max: int) -> Operator:
    return annihilation(n_max).dag()


def driven_cavity_hamiltonian(drive: float, n_max: int) -> Operator:
    """Empty cavity with a classical drive, ``drive (a + a^dag)``."""
    a = annihilation(n_max)
    return drive * (a + a.dag())


# -- dissipation --------------------------------------------------------------

class LindbladGenerator:
    """Cavity-loss master equation ``-i[H, rho] + kappa D[a] rho`` with ``a`` on the last subsystem.

    The jump term is applied by index shifting rather than by matrix products,
    so one right-hand side costs two dense matrix products (one when ``rho``
    is known to be Hermitian).
    """

    def __init__(self, H: Operator, kappa: float):
        if kappa < 0:
            raise ValueError("kappa must be >= 0")
        self.H = H
        self.kappa = float(kappa)
        self.signature = H.signature
        self._h = np.ascontiguousarray(H.matrix)
        dims = H.signature.dims
        self._rest = H.dim // dims[-1]
        self._nf = dims[-1]
        n = np.tile(np.arange(self._nf, dtype=float), self._rest)
        self._nsum = 0.5 * self.kappa * (n[:, None] + n[None, :])
        s = np.sqrt(np.arange(1, self._nf, dtype=float))
        self._jump_w = self.kappa * np.outer(s, s)[None, :, None, :]

    def __call__(self, rho: np.ndarray, hermitian: bool = False) -> np.ndarray:
        k = self._h @ rho
        out = k.conj().T if hermitian else rho @ self._h
        out -= k
        out *= 1j
        if self.kappa:
            out -= self._nsum * rho
            o4 = out.reshape(self._rest, self._nf, self._rest, self._nf)
            o4[:, :-1, :, :-1] += rho.reshape(o4.shape)[:, 1:, :, 1:] * self._jump_w
        return out

    def effective_hamiltonian(self) -> np.ndarray:
        """No-jump generator ``H - (i kappa / 2) a^dag a``."""
        n = np.tile(np.arange(self._nf, dtype=float), self._rest)
        return self._h - 0.5j * self.kappa * np.diag(n)

    def spectral_radius_estimate(self) -> float:
        """``max |k_i - conj(k_j)|`` over eigenvalues of the no-jump generator.

        Exact for pure damping; the jump term only shifts population down the
        Fock ladder and does not enlarge the estimate materially.
        """
        k = np.linalg.eigvals(self.effective_hamiltonian())
        return float(np.max(np.abs(k[:, None] - k.conj()[None, :])))

    def as_superoperator_action(self):
        """Flattened-vector action and its adjoint, for Krylov exponentiation."""
        d = self.H.dim
        hd = self._h.conj().T

        def matvec(v):
            return self(np.asarray(v).reshape(d, d)).reshape(-1)

        def rmatvec(v):
            x = np.asarray(v).reshape(d, d)
            out = 1j * (hd @ x - x @ self._h)
            if self.kappa:
                out -= self._nsum * x
                x4 = x.reshape(self._rest, self._nf, self._rest, self._nf)
                up = np.zeros_like(x4)
                up[:, 1:, :, 1:] = x4[:, :-1, :, :-1] * self._jump_w
                out += up.reshape(d, d)
            return out.reshape(-1)

        return matvec, rmatvec


def lindblad_rhs(H: Operator, kappa: float, rho) -> np.ndarray:
    """``d rho / dt`` for the cavity-loss master equation."""
    matrix = getattr(rho, "matrix", rho)
    sig = getattr(rho, "signature", None)
    if sig is not None and sig != H.signature:
        raise SignatureError(f"{H.signature.dims} vs {sig.dims}")
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (H.dim, H.dim):
        raise SignatureError(f"rho shape {matrix.shape} does not match dimension {H.dim}")
    return LindbladGenerator(H, kappa)(matrix)


# -- full three-level model ---------------------------------------------------

@dataclass
class TimeDependentOperator:
    """``static + sum_k (exp(-i w_k t) A_k + h.c.)``."""

    static: Operator
    terms: list[tuple[float, Operator]] = field(default_factory=list)

    @property
    def signature(self) -> SpaceSignature:
        return self.static.signature

    @property
    def dim(self) -> int:
        return self.static.dim

    def __post_init__(self) -> None:
        self._static = np.asarray(self.static.matrix)
        self._ops = [(w, np.asarray(A.matrix), np.asarray(A.matrix).conj().T) for w, A in self.terms]

    def at(self, t: float) -> Operator:
        m = self._static.copy()
        for w, A, Ad in self._ops:
            ph = np.exp(-1j * w * t)
            m += ph * A + np.conj(ph) * Ad
        return Operator(self.signature, m)

    __call__ = at

    def apply(self, t: float, vec: np.ndarray) -> np.ndarray:
        out = self._static @ vec
        for w, A, Ad in self._ops:
            ph = np.exp(-1j * w * t)
            out += ph * (A @ vec) + np.conj(ph) * (Ad @ vec)
        return out

    def norm_bound(self) -> float:
        bound = float(np.max(np.abs(np.linalg.eigvalsh(self._static))))
        for _, A, _ in self._ops:
            bound += 2 * float(np.linalg.norm(A, 2))
        return bound


def full_signature(n_max: int) -> SpaceSignature:
    return SpaceSignature((3, 3, n_max + 1))


def stark_counterterm(p: FullModelParams, n_max: int) -> Operator:
    """Diagonal term cancelling the second-order light shifts of ``|g>`` and ``|e>``.

    In the frame where ``|c>`` sits at energy ``Delta`` above the Raman-resonant
    ``|g>``, ``|e>`` manifold, each off-resonant coupling shifts the lower
    level by ``-|coupling|^2 / detuning``:

    * ``|g_j>`` via the Omega laser (detuning Delta) and Omega1' (Delta'),
    * ``|e_j>`` via Omega2' (Delta') and the cavity, ``|e_j, n> -> |c_j, n-1>``
      with matrix element ``g_j sqrt(n)`` (detuning Delta).

    The returned operator adds the opposite shifts.  The cavity contribution is
    photon-number dependent, ``(g_j^2 / Delta) |e_j><e_j| a^dag a``.
    """
    sig = full_signature(n_max)
    nf = n_max + 1
    n_field = np.arange(nf, dtype=float)
    diag = np.zeros(sig.total)
    g_shift = p.Omega**2 / p.Delta + p.Omega1p**2 / p.DeltaP
    for j, gj in enumerate((p.g1, p.g2)):
        level = np.zeros(3)
        level[G] = g_shift
        level[E] = p.Omega2p**2 / p.DeltaP
        ones3 = np.ones(3)
        atom = [ones3, ones3]
        atom[j] = level
        diag += np.kron(np.kron(atom[0], atom[1]), np.ones(nf))
        e_proj = np.zeros(3)
        e_proj[E] = 1.0
        atom = [ones3, ones3]
        atom[j] = e_proj
        diag += (gj**2 / p.Delta) * np.kron(np.kron(atom[0], atom[1]), n_field)
    return Operator(sig, np.diag(diag))


def full_hamiltonian_source(p: FullModelParams, n_max: int) -> TimeDependentOperator:
    """Laboratory-frame Hamiltonian of the two three-level atoms and the cavity mode."""
    sig = full_signature(n_max)
    a = embed(annihilation(n_max), 2, sig)
    ad = a.dag()
    static = p.omega_f * embed(number(n_max), 2, sig)
    laser_cg = Operator(sig, np.zeros((sig.total, sig.total)))
    laser_ce = Operator(sig, np.zeros((sig.total, sig.total)))
    for j, gj in enumerate((p.g1, p.g2)):
        ee = _atom_op(transition(3, E, E), j, sig)
        cc = _atom_op(transition(3, C, C), j, sig)
        ec = _atom_op(transition(3, E, C), j, sig)
        static = static + p.omega_e * ee + p.omega_c * cc + gj * (ad @ ec + a @ ec.dag())
        laser_cg = laser_cg + _atom_op(transition(3, C, G), j, sig)
        laser_ce = laser_ce + _atom_op(transition(3, C, E), j, sig)
    if p.stark_compensation:
        static = static + stark_counterterm(p, n_max)
    terms = [
        (p.omega_c - p.Delta, p.Omega * laser_cg),
        (p.omega_c - p.omega_e - p.DeltaP, p.Omega2p * laser_ce),
        (p.omega_c - p.DeltaP, p.Omega1p * laser_cg),
    ]
    return TimeDependentOperator(static, [(w, A) for w, A in terms if np.any(A.matrix)])


def build_full_hamiltonian(p: FullModelParams, n_max: int, t: float) -> Operator:
    """Full Hamiltonian at time ``t`` (laboratory frame, explicit laser phases)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return full_hamiltonian_source(p, n_max).at(t)


def rotating_frame_energies(p: FullModelParams, n_max: int) -> np.ndarray:
    """Diagonal of the frame generator ``R`` that makes the resonant Hamiltonian static.

    ``R = sum_j [omega_e |e_j><e_j| + (omega_c - Delta) |c_j><c_j|] + omega_f a^dag a``;
    a lab-frame state maps to the rotating frame as ``exp(i R t) psi``.
    """
    level = np.zeros(3)
    level[E] = p.omega_e
    level[C] = p.omega_c - p.Delta
    ones3 = np.ones(3)
    nf = n_max + 1
    return (
        np.kron(np.kron(level, ones3), np.ones(nf))
        + np.kron(np.kron(ones3, level), np.ones(nf))
        + np.kron(np.ones(9), p.omega_f * np.arange(nf))
    )


def ge_subspace_indices(n_max: int) -> np.ndarray:
    """Indices of the ``{g, e}^2 x field`` block inside the ``[3, 3, n_max+1]`` space, in ``[2, 2, n_max+1]`` order."""
    nf = n_max + 1
    return np.array([(i * 3 + j) * nf + n for i in (G, E) for j in (G, E) for n in range(nf)])


# -- regime checks ------------------------------------------------------------

@dataclass(frozen=True)
class RegimeEntry:
    name: str
    condition: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.value <= self.threshold


@dataclass(frozen=True)
class RegimeReport:
    entries: tuple[RegimeEntry, ...]
    strictness: float

    @property
    def passed(self) -> bool:
        """All unambiguous conditions hold."""
        return all(e.passed for e in self.entries if e.condition not in AMBIGUOUS_CONDITIONS)

    @property
    def ambiguous(self) -> list[RegimeEntry]:
        return [e for e in self.entries if e.condition in AMBIGUOUS_CONDITIONS]

    def by_condition(self, condition: str) -> list[RegimeEntry]:
        return [e for e in self.entries if e.condition == condition]

    def max_ratio(self, conditions: Sequence[str] = ("adiabatic", "rwa")) -> float:
        return max((e.value for e in self.entries if e.condition in conditions), default=0.0)


def _ratio(num: float, den: float) -> float:
    if num == 0:
        return 0.0
    return abs(num) / abs(den) if den else math.inf


def check_regimes(p: FullModelParams, strictness: float = DEFAULT_STRICTNESS) -> RegimeReport:
    """Report every ``<<`` condition of the elimination as ``ratio <= strictness``.

    Conditions: ``adiabatic`` (couplings over detunings), ``rwa`` (second-order
    couplings over the ``|Delta - Delta'|`` gap), ``variant_adiabatic``
    (couplings over Delta for the opposite-phase scheme) and ``strong_driving``
    (``g_eff / Omega'_eff``).  ``variant_strong_driving`` holds both readings
    of the opposite-phase condition, ``Omega'_eff / g'_eff`` and its inverse;
    it is listed under ``ambiguous`` and left out of ``passed``.
    """
    g = max(abs(p.g1), abs(p.g2))
    gap = abs(p.Delta - p.DeltaP)
    dp = p.DeltaP
    rows = [
        ("Omega/Delta", "adiabatic", _ratio(p.Omega, p.Delta)),
        ("g/Delta", "adiabatic", _ratio(g, p.Delta)),
        ("Omega1p/DeltaP", "adiabatic", _ratio(p.Omega1p, dp)),
        ("Omega2p/DeltaP", "adiabatic", _ratio(p.Omega2p, dp)),
        ("Omega*Omega2p/DeltaP/|Delta-DeltaP|", "rwa", _ratio(p.Omega * p.Omega2p / dp, gap)),
        ("Omega*Omega1p/DeltaP/|Delta-DeltaP|", "rwa", _ratio(p.Omega * p.Omega1p / dp, gap)),
        ("Omega2p*g/DeltaP/|Delta-DeltaP|", "rwa", _ratio(p.Omega2p * g / dp, gap)),
        ("Omega1p*g/DeltaP/|Delta-DeltaP|", "rwa", _ratio(p.Omega1p * g / dp, gap)),
        ("Omega1p/Delta", "variant_adiabatic", _ratio(p.Omega1p, p.Delta)),
        ("Omega2p/Delta", "variant_adiabatic", _ratio(p.Omega2p, p.Delta)),
        ("|g|/Delta", "variant_adiabatic", _ratio(g, p.Delta)),
        ("g_eff/Omega_eff", "strong_driving",
         _ratio(p.Omega * g / p.Delta, p.Omega1p * p.Omega2p / dp)),
        ("Omega_eff/g'_eff", "variant_strong_driving",
         _ratio(p.Omega1p * p.Omega2p / dp, p.Omega1p * g / p.Delta)),
        ("g'_eff/Omega_eff", "variant_strong_driving",
         _ratio(p.Omega1p * g / p.Delta, p.Omega1p * p.Omega2p / dp)),
    ]
    return RegimeReport(tuple(RegimeEntry(n, c, v, strictness) for n, c, v in rows), strictness)
