"""Command-line front end.

Usage::

    cavity-purify SUBCOMMAND [--config PATH] [--out DIR] [--seed INT] [--set key=value ...]

Subcommands are ``evolve``, ``purify``, ``bell-surface``, ``validate-regimes``
and ``localization``.  Each writes ``<out>/<subcommand>.csv`` together with the
resolved configuration ``<out>/<subcommand>.config.yaml``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import ConfigError, config_hash, dump_config, load_config, normalize_units
from .dynamics import (
    IntegratorConfig,
    NumericalError,
    branch_states,
    branch_weights,
    closed_form_evolved_state,
    compare_full_and_effective,
    evolve_master,
    evolve_pure,
    ground_state,
    steady_residual,
)
from .models import (
    EffectiveParams,
    FullModelParams,
    build_interaction_hamiltonian,
    check_regimes,
    two_atom_signature,
)
from .protocol import (
    DetectorModel,
    ProjectionError,
    ProtocolParams,
    bell_surface,
    cell_rng,
    localization_sweep,
    no_click_probability,
    purify,
    sample_clicks,
)
from .states import (
    DensityState,
    Operator,
    PureState,
    StateValidationError,
    TruncationError,
    basis,
    default_n_max,
    embed,
    fidelity_pure,
    number,
)
from .tables import ResultTable, reproducible_timestamp

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericalFailure(RuntimeError):
    """Raised after the table is built when a run flagged non-convergence."""

    def __init__(self, table: ResultTable, message: str):
        super().__init__(message)
        self.table = table


# -- builders -----------------------------------------------------------------

def _effective(cfg: dict) -> EffectiveParams:
    e = dict(cfg["effective"])
    e["coupling_signs"] = tuple(e["coupling_signs"])
    try:
        return EffectiveParams(**e)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"effective: {exc}") from exc


def _integrator(cfg: dict, **extra) -> IntegratorConfig:
    try:
        return IntegratorConfig(**{**cfg["integrator"], **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc


def _detector(cfg: dict) -> Optional[DetectorModel]:
    d = cfg["protocol"]["detector"]
    if d is None:
        return None
    try:
        return DetectorModel(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"protocol.detector: {exc}") from exc


def _protocol(cfg: dict, eff: EffectiveParams) -> ProtocolParams:
    pr = cfg["protocol"]
    try:
        return ProtocolParams(eff, rounds=pr["rounds"], mode=pr["mode"], tau=pr["tau"],
                              detector=_detector(cfg), seed=cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"protocol: {exc}") from exc


def _full_params(cfg: dict) -> FullModelParams:
    f = cfg["full_model"]
    try:
        if f["omega_c"] is None:
            return FullModelParams.resonant(
                Delta=f["Delta"], DeltaP=f["DeltaP"], g=f["g"], g2=f["g2"], Omega=f["Omega"],
                Omega1p=f["Omega1p"], Omega2p=f["Omega2p"], omega_e=f["omega_e"],
                omega_f=f["omega_f"], stark_compensation=f["stark_compensation"])
        return FullModelParams(
            omega_e=f["omega_e"], omega_c=f["omega_c"], omega_f=f["omega_f"], g1=f["g"],
            g2=f["g"] if f["g2"] is None else f["g2"], Omega=f["Omega"], Omega1p=f["Omega1p"],
            Omega2p=f["Omega2p"], Delta=f["Delta"], DeltaP=f["DeltaP"],
            stark_compensation=f["stark_compensation"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"full_model: {exc}") from exc


def _metadata(cfg: dict, experiment: str, reproduces: str) -> dict:
    return {
        "experiment": experiment,
        "reproduces": reproduces,
        "config_hash": config_hash(cfg),
        "tool_version": __version__,
        "timestamp": reproducible_timestamp(),
        "seed": cfg["seed"],
    }


def _photon_operator(n_max: int) -> Operator:
    return embed(number(n_max), 2, two_atom_signature(n_max))


# -- experiments --------------------------------------------------------------

def cmd_evolve(cfg: dict) -> ResultTable:
    """Branch populations, photon number and closed-form or steady-state diagnostics over time."""
    eff = _effective(cfg)
    ev = cfg["evolve"]
    mode, t_final, n_samples = ev["mode"], float(ev["t_final"]), int(ev["n_samples"])
    if mode not in ("unitary", "dissipative", "decay"):
        raise ConfigError(f"evolve.mode must be unitary, dissipative or decay, got {mode!r}")
    if t_final < 0 or n_samples < 2:
        raise ConfigError("evolve needs t_final >= 0 and n_samples >= 2")
    if mode == "unitary":
        amp = max(abs(a) for a in (0.5 * eff.g_eff * t_final, 0.5 * (eff.g_eff + eff.delta_g) * t_final))
    elif mode == "dissipative":
        amp = (eff.g_eff + abs(eff.delta_g)) / eff.kappa
    else:
        amp = 1.0
    n_max = cfg["n_max"] or default_n_max(amp)
    sig = two_atom_signature(n_max)
    if mode == "decay":
        H = Operator(sig, np.zeros((sig.total, sig.total)))
        state = PureState(sig, basis(sig.total, 1).amplitudes)
    else:
        H = build_interaction_hamiltonian(eff, n_max)
        state = ground_state(n_max)
    kappa = 0.0 if mode == "unitary" else eff.kappa
    photons = _photon_operator(n_max)
    names = list(branch_states(eff))
    table = ResultTable(
        [("t", "1/kappa")] + [(f"p_{k}", "") for k in names]
        + [("mean_photons", ""), ("closed_form_fidelity", ""), ("decay_reference", ""),
           ("residual", "kappa"), ("trace_drift", ""), ("positivity_margin", "")],
        metadata=_metadata(cfg, "evolve", {
            "unitary": "strong-driving interaction Hamiltonian; closed-form branch state",
            "dissipative": "cavity-loss master equation driven by the interaction Hamiltonian",
            "decay": "cavity-loss master equation (free field decay)",
        }[mode]),
    )
    table.metadata["mode"] = mode
    table.metadata["n_max"] = n_max
    times = np.linspace(0.0, t_final, n_samples)
    _integrator(cfg)  # validate before the first step
    if mode != "unitary":
        state = state.to_density()
    drift, margin = 0.0, 0.0
    for i, t in enumerate(times):
        if i > 0:
            step = _integrator(cfg, t_final=float(t - times[i - 1]), sample_stride=0)
            if mode == "unitary":
                res = evolve_pure(H, state, step)
                drift = max(drift, res.norm_drift)
            else:
                res = evolve_master(H, kappa, state, step)
                drift = max(drift, res.trace_drift)
                margin = min(margin, res.positivity_margin)
            state = res.final
        weights = branch_weights(state if isinstance(state, DensityState) else state.to_density(), eff)
        n_mean = float(photons.expect(state).real)
        closed = math.nan
        if mode == "unitary":
            closed = fidelity_pure(closed_form_evolved_state(eff, float(t), n_max), state.to_density())
        resid = steady_residual(H, kappa, state) if mode != "unitary" else math.nan
        table.add(float(t), *[weights[k] for k in names], n_mean, closed,
                  math.exp(-eff.kappa * t) if mode == "decay" else math.nan, resid, drift, margin)
    return table


def _detector_columns(pp: ProtocolParams, rounds: int, trials: int) -> list[tuple[float, float]]:
    """Sampled and closed-form zero-click frequency of the coherent branch per round."""
    if pp.detector is None:
        return [(math.nan, math.nan)] * rounds
    beta = math.sqrt(pp.pointer_separation)
    kappa, pulsed = pp.effective.kappa, pp.mode == "timed"
    out = []
    for k in range(1, rounds + 1):
        clicks = sample_clicks(beta, pp.detector, cell_rng(pp.seed, k), trials, kappa, pulsed)
        out.append((float(np.mean(clicks == 0)), no_click_probability(beta, pp.detector, kappa, pulsed)))
    return out


def cmd_purify(cfg: dict) -> ResultTable:
    """One row per round: numeric and closed-form fidelity, probabilities, lambda and S_max."""
    eff = _effective(cfg)
    pp = _protocol(cfg, eff)
    icfg = _integrator(cfg, method="expm") if pp.mode == "timed" and cfg["integrator"]["method"] == "rk4" \
        else _integrator(cfg)
    report = purify(pp, icfg, cfg["n_max"])
    table = ResultTable(
        [("round", ""), ("fidelity_numeric", ""), ("fidelity_closed_form", ""), ("fidelity_gap", ""),
         ("fidelity_oracle", ""), ("round_probability", ""), ("success_numeric", ""),
         ("success_closed_form", ""), ("success_oracle", ""), ("lambda", ""),
         ("family_residual", ""), ("on_family", ""), ("s_max", ""), ("steady_residual", "kappa"),
         ("converged", ""), ("no_click_coherent_sampled", ""), ("no_click_coherent_closed_form", "")],
        metadata=_metadata(cfg, "purify",
                           "projected atomic state; purified fidelity and success probability closed forms; "
                           "Bell-diagonal family"),
    )
    table.metadata["target"] = report.target
    table.metadata["mode"] = pp.mode
    det = _detector_columns(pp, len(report.rounds), int(cfg["protocol"]["detector_trials"]))
    for r, (sampled, closed) in zip(report.rounds, det):
        table.add(r.round, r.fidelity, r.closed_fidelity, r.fidelity_gap, r.oracle_fidelity, r.probability,
                  r.cumulative_success, r.closed_success, r.oracle_success, r.lam, r.family_residual,
                  r.on_family, r.s_max, r.steady_residual, r.converged, sampled, closed)
    if not all(r.converged for r in report.rounds):
        raise NumericalFailure(table, "steady-state search did not converge in every round")
    return table


def cmd_bell_surface(cfg: dict) -> ResultTable:
    """``lambda`` over (|alpha~|, N) with violation flags; threshold contour rows appended."""
    bs = cfg["bell_surface"]
    numeric = bs["numeric"]
    if numeric not in (None, "steady", "timed"):
        raise ConfigError("bell_surface.numeric must be steady, timed or null")
    alphas, Ns = [float(a) for a in bs["alpha_grid"]], [int(n) for n in bs["N_grid"]]
    if any(a < 0 for a in alphas) or any(n < 1 for n in Ns):
        raise ConfigError("bell_surface grids need alpha >= 0 and N >= 1")
    surf = bell_surface(alphas, Ns, numeric, _integrator(cfg), kappa=_effective(cfg).kappa)
    table = ResultTable(
        [("kind", ""), ("alpha", ""), ("N", ""), ("lambda_closed", ""), ("lambda_oracle", ""),
         ("lambda_numeric", ""), ("family_residual", ""), ("s_max_closed", ""), ("s_max_numeric", ""),
         ("violation_closed", ""), ("violation_numeric", ""), ("N_alpha2", "")],
        metadata=_metadata(cfg, "bell-surface",
                           "purified fidelity closed form; Bell-diagonal family; CHSH violation map"),
    )
    table.metadata["numeric"] = numeric or "none"
    for r in surf.rows:
        table.add("grid", r["alpha"], r["N"], r["lambda_closed"], r["lambda_oracle"], r["lambda_numeric"],
                  r["family_residual"], r["s_max_closed"], r["s_max_numeric"], r["violation_closed"],
                  r["violation_numeric"], r["N"] * r["alpha"] ** 2)
    nan = math.nan
    for c in surf.contour:
        thr = 1 / math.sqrt(2)
        table.add("contour_closed", c["alpha_closed"], c["N"], thr, nan, nan, nan, 2.0, nan, False, False,
                  c["N_alpha2_closed"])
        table.add("contour_oracle", c["alpha_oracle"], c["N"], nan, thr, nan, nan, nan, nan, False, False,
                  c["N_alpha2_oracle"])
    return table


def cmd_validate_regimes(cfg: dict) -> ResultTable:
    """Regime ratios and the full-versus-effective trace-distance time series."""
    p = _full_params(cfg)
    f = cfg["full_model"]
    report = check_regimes(p)
    comp = compare_full_and_effective(p, horizon=float(f["horizon"]), n_samples=int(f["n_samples"]),
                                      n_max=f["n_max"], cfg=_integrator(cfg, radius_limit=0.05))
    table = ResultTable(
        [("kind", ""), ("name", ""), ("t", "1/g_eff"), ("value", ""), ("threshold", ""), ("passed", "")],
        metadata=_metadata(cfg, "validate-regimes",
                           "three-level two-atom Hamiltonian; adiabatic and rotating-wave inequalities; "
                           "effective Raman Hamiltonian; strong-driving interaction Hamiltonian"),
    )
    nan = math.nan
    for e in report.entries:
        table.add(f"ratio:{e.condition}", e.name, nan, e.value, e.threshold, e.passed)
    eff_rate = p.effective(kappa=1.0).g_eff or 1.0
    bound = max(e.value for e in report.entries if e.condition in ("adiabatic", "rwa"))
    table.add("summary", "max_distance_effective", nan, comp.max_distance_effective, bound,
              comp.max_distance_effective <= bound)
    table.add("summary", "max_distance_interaction", nan, comp.max_distance_interaction, bound,
              comp.max_distance_interaction <= bound)
    table.add("summary", "max_leakage", nan, float(np.max(comp.leakage)), nan, True)
    table.add("summary", "top_fock_population", nan, comp.top_fock_population, 1e-6,
              comp.top_fock_population <= 1e-6)
    for t, de, di, lk in zip(comp.times, comp.distance_effective, comp.distance_interaction, comp.leakage):
        ts = float(t) * eff_rate
        table.add("series", "distance_effective", ts, float(de), nan, True)
        table.add("series", "distance_interaction", ts, float(di), nan, True)
        table.add("series", "leakage", ts, float(lk), nan, True)
    return table


def cmd_localization(cfg: dict) -> ResultTable:
    """Once-purified fidelity against coupling asymmetry with the fitted infidelity exponent."""
    eff = _effective(cfg)
    loc = cfg["localization"]
    if loc["record"] not in ("continuous", "projective"):
        raise ConfigError("localization.record must be continuous or projective")
    pp = ProtocolParams(eff, rounds=1, seed=cfg["seed"])
    sweep = localization_sweep(pp, [float(e) for e in loc["epsilon_grid"]], loc["record"], _integrator(cfg),
                               tuple(loc["fit_range"]))
    table = ResultTable(
        [("epsilon", ""), ("fidelity_numeric", ""), ("fidelity_model", ""), ("infidelity_ratio", ""),
         ("probability", ""), ("converged", "")],
        metadata=_metadata(cfg, "localization", "localization-error fidelity model 1/(1+epsilon^2)"),
    )
    table.metadata["record"] = sweep.record
    table.metadata["fit_exponent"] = sweep.exponent
    table.metadata["fit_prefactor"] = sweep.prefactor
    for r in sweep.rows:
        table.add(r["epsilon"], r["fidelity_numeric"], r["fidelity_model"], r["infidelity_ratio"],
                  r["probability"], r["converged"])
    return table


COMMANDS: dict[str, Callable[[dict], ResultTable]] = {
    "evolve": cmd_evolve,
    "purify": cmd_purify,
    "bell-surface": cmd_bell_surface,
    "validate-regimes": cmd_validate_regimes,
    "localization": cmd_localization,
}


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration value, e.g. effective.g_eff=0.5 (repeatable)")
    common.add_argument("--print-config", action="store_true",
                        help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="cavity-purify", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__.split("\n")[0])
    return parser


def run(cfg: dict) -> ResultTable:
    """Run the configured experiment on a unit-normalized copy of ``cfg``."""
    return COMMANDS[cfg["experiment"]](normalize_units(cfg))


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides, experiment=args.command,
                          output_dir=args.out, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    status = EXIT_OK
    try:
        table = run(cfg)
    except (ConfigError, TruncationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        table, status = exc.table, EXIT_NUMERIC
    except (NumericalError, ProjectionError, StateValidationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"{cfg['experiment']}.csv")
    table.write(path)
    with open(os.path.join(out, f"{cfg['experiment']}.config.yaml"), "w", encoding="utf-8", newline="") as fh:
        fh.write(dump_config(cfg))
    print(path)
    return status


if __name__ == "__main__":
    sys.exit(main())
