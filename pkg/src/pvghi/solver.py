"""GHI inverse solver.

The objective separates over timesteps: at each instant the scalar
unknown GHI_t is chosen so the simulated plant powers match the
measured ones. A coarse grid over [0, k_safety * clear-sky] seeds the
solution; per-timestep descent with an exponentially decaying step then
refines it. Timesteps are fully independent: solving any subset gives
bit-identical values for those timesteps.

Per timestep the scalar objective is the absolute trust-weighted,
outlier-gated mean of the normalized plant errors. Its gradient comes
from the forward-difference sensitivity of the power chain. Descent
steps move GHI by the step size along the gradient sign; a step that
does not decrease the objective is reverted and the step size decays by
a constant factor, so after m rejections the step is lambda0 * k^m.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import AlignedDataset, InputError
from .orientation import OmegaCoefficients
from .proxy import ProxyParams, pressure_at_altitude, proxy_matrix
from .reconcile import (
    build_shadow_map,
    smooth_threshold_map,
    trust_weights,
    tukey_gate_matrix,
)
from .solar import SolarPosition, sun_positions, clearsky_ghi


@dataclass(frozen=True)
class SolverConfig:
    n_grid: int = 30                 # grid-search resolution
    k_safety: float = 1.3            # clear-sky multiplier bounding GHI
    delta_ghi: float = 1.0           # W/m^2, forward-difference step
    lambda0: float = 20.0            # W/m^2, initial descent step
    k_decay: float = 0.5             # step decay per rejected update
    max_iterations: int = 100
    lambda_min: float = 0.05         # W/m^2, freeze threshold
    use_trust: bool = True
    use_gate: bool = True
    gate_rounds: int = 2             # outlier-gate refresh passes
    grad_floor: float = 1e-9
    trust_floor: float = 0.02        # shadow-map threshold
    trust_bandwidth_deg: float = 6.0
    trust_bin_deg: float = 2.0
    k_q: float = 1.5                 # Tukey fence multiplier
    linke_turbidity: float = 3.0

    def __post_init__(self):
        if self.n_grid < 2:
            raise InputError("n_grid must be >= 2")
        if not 0.0 < self.k_decay < 1.0:
            raise InputError("k_decay must be in (0, 1)")
        if self.delta_ghi <= 0:
            raise InputError("delta_ghi must be positive")


ZERO_MEAN_TOL = 1e-12  # normalized mean errors below this are float noise


@dataclass
class EstimationState:
    ghi: np.ndarray
    errors: np.ndarray            # (T, n_plants) normalized PV errors
    lambdas: np.ndarray
    ghi_max: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    err_history: list = field(default_factory=list)       # Frobenius of errors
    objective_history: list = field(default_factory=list)  # accepted objective per round
    bound_violation: float = 0.0


class ForwardModel:
    """Plant power predictions restricted to the used orientations.

    Only mesh columns carrying weight for at least one plant are
    evaluated; dropped columns multiply zero coefficients, so the
    restriction is exact.
    """

    def __init__(
        self,
        dataset: AlignedDataset,
        omegas: tuple[OmegaCoefficients, ...],
        mesh_orientations,
        params: ProxyParams,
        sp: SolarPosition,
        threads: int = 1,
    ):
        if len(omegas) != dataset.n_plants:
            raise InputError("one coefficient set per plant is required")
        weights = np.column_stack([oc.omega for oc in omegas])
        if weights.shape[0] != len(mesh_orientations):
            raise InputError("coefficient length does not match the mesh")
        support = np.flatnonzero(weights.any(axis=1))
        if support.size == 0:
            raise InputError("all coefficient vectors are zero")
        self.dataset = dataset
        self.params = params
        self.sp = sp
        self.threads = threads
        self.orientations = [mesh_orientations[j] for j in support]
        self.weights = weights[support]
        self.pnom = np.maximum(
            np.array([oc.estimated_pnom for oc in omegas]), 1e-9
        )
        self.power = dataset.power_matrix()
        self.temperature = dataset.mean_temperature()
        self.pressure = pressure_at_altitude(dataset.site.altitude)

    def proxies(self, ghi: np.ndarray) -> np.ndarray:
        return proxy_matrix(
            ghi, self.sp, self.dataset.timestamps, self.temperature,
            self.orientations, self.params, albedo=self.dataset.site.albedo,
            pressure=self.pressure, threads=self.threads,
        ).values

    def predict(self, ghi: np.ndarray, pr: np.ndarray | None = None) -> np.ndarray:
        if pr is None:
            pr = self.proxies(ghi)
        return pr @ self.weights

    def errors_from(self, pr: np.ndarray) -> np.ndarray:
        return (self.power - pr @ self.weights) / self.pnom[None, :]

    def normalized_errors(self, ghi: np.ndarray) -> np.ndarray:
        return self.errors_from(self.proxies(ghi))


def _objective_weights(
    errors: np.ndarray, trust: np.ndarray, gate: np.ndarray
) -> np.ndarray:
    """Per-entry weights, renormalized over available (kept) plants."""
    avail = np.isfinite(errors) & gate
    w = np.where(avail, trust, 0.0)
    total = w.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(total > 0, w / total, 0.0)
    return w


def objective_value(
    errors: np.ndarray, trust: np.ndarray, gate: np.ndarray
) -> np.ndarray:
    """Per-timestep objective: |weighted mean normalized error|."""
    w = _objective_weights(errors, trust, gate)
    mean = np.nansum(np.where(w > 0, w * errors, 0.0), axis=1)
    return np.abs(mean)


def objective_gradient(
    model: ForwardModel,
    ghi: np.ndarray,
    trust: np.ndarray,
    gate: np.ndarray,
    cfg: SolverConfig,
    pr_base: np.ndarray | None = None,
    errors: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient of the per-timestep objective with respect to GHI.

    The per-plant error sensitivity is the negative proxy sensitivity
    weighted by the plant coefficients; gated or missing entries
    contribute nothing.
    """
    if pr_base is None:
        pr_base = model.proxies(ghi)
    if errors is None:
        errors = model.errors_from(pr_base)
    pr_plus = model.proxies(np.asarray(ghi, float) + cfg.delta_ghi)
    dpred = (pr_plus - pr_base) @ model.weights / cfg.delta_ghi
    derr = -dpred / model.pnom[None, :]
    w = _objective_weights(errors, trust, gate)
    mean = np.nansum(np.where(w > 0, w * errors, 0.0), axis=1)
    dmean = np.nansum(np.where(w > 0, w * derr, 0.0), axis=1)
    sign = np.where(np.abs(mean) > ZERO_MEAN_TOL, np.sign(mean), 0.0)
    return sign * dmean


def init_ghi(
    model: ForwardModel,
    ghi_clear: np.ndarray,
    trust: np.ndarray,
    cfg: SolverConfig,
) -> EstimationState:
    """Grid search over [0, k_safety * clear-sky] per timestep.

    Each candidate is a scaled clear-sky profile; per timestep the
    candidate with the lowest weighted mean absolute error wins. Night
    steps are zero; daytime steps with no usable plant fall back to the
    clear-sky value.
    """
    ghi_max = cfg.k_safety * np.asarray(ghi_clear, float)
    day = model.sp.daytime & (ghi_max > 0)
    t_count = len(ghi_max)

    best_score = np.full(t_count, np.inf)
    best_ghi = np.zeros(t_count)
    gate = np.ones_like(trust, dtype=bool)
    any_data = np.zeros(t_count, dtype=bool)
    for g in range(1, cfg.n_grid + 1):
        cand = (g / cfg.n_grid) * ghi_max
        errors = model.normalized_errors(cand)
        w = _objective_weights(errors, trust, gate)
        score = np.nansum(np.where(w > 0, w * np.abs(errors), 0.0), axis=1)
        has_data = w.sum(axis=1) > 0
        any_data |= has_data
        better = day & has_data & (score < best_score)
        best_score[better] = score[better]
        best_ghi[better] = cand[better]

    no_info = day & ~any_data
    best_ghi[no_info] = np.asarray(ghi_clear, float)[no_info]

    # every reporting plant at exactly zero power means deep overcast (or
    # an outage): seed at zero rather than the smallest grid candidate
    power = model.power
    with np.errstate(invalid="ignore"):
        all_zero = np.where(np.isfinite(power), power == 0.0, True).all(axis=1)
    dark = day & any_data & all_zero
    best_ghi[dark] = 0.0

    pr = model.proxies(best_ghi)
    errors = model.errors_from(pr)
    state = EstimationState(
        ghi=best_ghi,
        errors=errors,
        lambdas=np.full(t_count, cfg.lambda0),
        ghi_max=ghi_max,
        iterations=np.zeros(t_count, dtype=int),
        converged=np.zeros(t_count, dtype=bool),
    )
    state.converged[~day] = True
    return state


def refine_ghi(
    model: ForwardModel,
    state: EstimationState,
    trust: np.ndarray,
    gate: np.ndarray,
    cfg: SolverConfig,
) -> EstimationState:
    """Per-timestep descent from the grid initialization.

    Steps move GHI by the current per-timestep step size along the
    gradient sign, clamped to [0, k_safety * clear-sky]. A step that
    does not strictly decrease the timestep objective is reverted and
    the step decays; a timestep freezes once its step falls below
    lambda_min or its gradient vanishes. Iteration stops when every
    timestep is frozen or at the iteration cap.
    """
    ghi = state.ghi.copy()
    lam = np.full_like(ghi, cfg.lambda0)
    day = model.sp.daytime & (state.ghi_max > 0)

    pr = model.proxies(ghi)
    errors = model.errors_from(pr)
    h = objective_value(errors, trust, gate)
    has_data = _objective_weights(errors, trust, gate).sum(axis=1) > 0
    active = day & has_data

    round_history = [float(h[active].sum())]
    state.err_history.append(float(np.sqrt(np.nansum(errors**2))))

    iterations = state.iterations
    bound_violation = state.bound_violation
    for _ in range(cfg.max_iterations):
        if not active.any():
            break
        grad = objective_gradient(
            model, ghi, trust, gate, cfg, pr_base=pr, errors=errors
        )
        direction = np.sign(grad)
        direction[np.abs(grad) <= cfg.grad_floor] = 0.0

        flat = active & (direction == 0.0)
        active = active & ~flat

        cand = np.clip(ghi - lam * direction, 0.0, state.ghi_max)
        cand = np.where(active, cand, ghi)
        pr_cand = model.proxies(cand)
        err_cand = model.errors_from(pr_cand)
        h_cand = objective_value(err_cand, trust, gate)

        improved = active & (h_cand < h)
        rejected = active & ~improved

        ghi = np.where(improved, cand, ghi)
        pr = np.where(improved[:, None], pr_cand, pr)
        errors = np.where(improved[:, None], err_cand, errors)
        h = np.where(improved, h_cand, h)
        lam = np.where(rejected, lam * cfg.k_decay, lam)
        iterations[active] += 1

        frozen = active & (lam < cfg.lambda_min)
        active = active & ~frozen

        bound_violation = max(
            bound_violation,
            float(np.max(ghi - state.ghi_max, initial=0.0)),
            float(np.max(-ghi, initial=0.0)),
        )
        state.err_history.append(float(np.sqrt(np.nansum(errors**2))))
        round_history.append(float(h[day & has_data].sum()))

    state.objective_history.append(round_history)
    state.ghi = ghi
    state.errors = errors
    state.lambdas = lam
    state.iterations = iterations
    state.converged = state.converged | (day & has_data & ~active)
    state.bound_violation = bound_violation
    return state


@dataclass
class SolveResult:
    timestamps: np.ndarray
    ghi: np.ndarray
    state: EstimationState
    trust: np.ndarray
    gate: np.ndarray
    n_plants_used: np.ndarray
    ghi_clear: np.ndarray
    seconds_per_sample: float

    @property
    def converged(self) -> np.ndarray:
        return self.state.converged


def estimate(
    dataset: AlignedDataset,
    omegas: tuple[OmegaCoefficients, ...],
    mesh_orientations,
    params: ProxyParams = ProxyParams(),
    cfg: SolverConfig = SolverConfig(),
    ghi_clear: np.ndarray | None = None,
    threads: int = 1,
) -> SolveResult:
    """Full estimation pipeline for one aligned dataset.

    Builds shadow maps and trust weights (for two or more plants), runs
    the grid initialization, then alternates outlier gating with descent
    refinement a fixed number of rounds. A single plant reduces to the
    ungated, unweighted objective.
    """
    t0 = time.perf_counter()
    sp = sun_positions(dataset.timestamps, dataset.site)
    if ghi_clear is None:
        ghi_clear = clearsky_ghi(
            dataset.timestamps, dataset.site, linke_turbidity=cfg.linke_turbidity
        )
    model = ForwardModel(
        dataset, omegas, mesh_orientations, params, sp, threads=threads
    )

    n_pv = dataset.n_plants
    if n_pv > 1 and cfg.use_trust:
        pr_clear = model.proxies(np.asarray(ghi_clear, float))
        pred_clear = pr_clear @ model.weights
        maps = []
        for i, plant in enumerate(dataset.plants):
            raw = build_shadow_map(
                plant, pred_clear[:, i], model.pnom[i], sp,
                bin_deg=cfg.trust_bin_deg,
            )
            maps.append(
                smooth_threshold_map(
                    raw, bandwidth_deg=cfg.trust_bandwidth_deg, floor=cfg.trust_floor
                )
            )
        trust = trust_weights(maps, sp, floor=cfg.trust_floor)
    else:
        trust = np.full((dataset.n_steps, n_pv), 1.0 / n_pv)

    state = init_ghi(model, ghi_clear, trust, cfg)

    gating = cfg.use_gate and n_pv >= 3
    rounds = cfg.gate_rounds if gating else 1
    gate = np.ones((dataset.n_steps, n_pv), dtype=bool)
    for _ in range(max(rounds, 1)):
        if gating:
            gate = tukey_gate_matrix(state.errors, k_q=cfg.k_q)
        state = refine_ghi(model, state, trust, gate, cfg)

    used = (np.isfinite(state.errors) & gate).sum(axis=1)
    elapsed = time.perf_counter() - t0
    return SolveResult(
        timestamps=dataset.timestamps,
        ghi=state.ghi,
        state=state,
        trust=trust,
        gate=gate,
        n_plants_used=used,
        ghi_clear=np.asarray(ghi_clear, float),
        seconds_per_sample=elapsed / max(dataset.n_steps, 1),
    )
