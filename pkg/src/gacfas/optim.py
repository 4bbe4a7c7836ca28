"""The optimizer family: ERM/SGD, whole-batch SAM, domain-wise SAM, the
gradient-aligned cross-domain variant (gac_fas), and its domain-scoped
perturbation ablation (reg_domain_perturb).

Loss convention: the whole-batch loss L(theta; B) is the SUM of per-domain
batch-mean losses, and its gradient is the matching sum of per-domain mean
gradients. All reductions over domains run in ascending domain-id order so
results are bit-identical regardless of how the per-domain evaluations are
scheduled.

The ascending vector eps_i = rho * g_i / ||g_i|| and the gamma * g offset are
held constant when the gradient at the perturbed point is taken (first-order
practice; nothing differentiates through eps).

Step functions are pure updates: they never modify the incoming ParamVector
and return a fresh one. The model argument may be an MlpSpec or any object
exposing loss(theta, inputs, labels) and loss_and_grad(theta, inputs, labels)
returning per-sub-batch means; the scalar oracles in the test suite use the
latter hook.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from . import numerics
from .model import Batch, ParamVector, domain_slices
from .numerics import axpy, dot, l2_norm

MODES = ("erm", "sam_whole", "sam_domain", "gac_fas", "reg_domain_perturb")
SCHEDULE_KINDS = ("constant", "step", "theorem1")


@dataclass(frozen=True)
class Schedule:
    """Decay rule applied to eta, rho and gamma alike.

    kind "constant" keeps the base value; "step" multiplies by factor every
    period; "theorem1" decays as base / sqrt(t). The step period is
    configured in epochs and resolved to steps by the harness before any
    step runs (period_steps = 0 means unresolved).
    """

    kind: str = "constant"
    period_epochs: int = 40
    factor: float = 0.1
    period_steps: int = 0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if self.kind == "step":
            if self.period_epochs < 1:
                raise ValueError(f"step period must be >= 1 epoch, got {self.period_epochs}")
            if not 0.0 < self.factor <= 1.0:
                raise ValueError(f"step factor must be in (0, 1], got {self.factor}")


@dataclass(frozen=True)
class OptimizerConfig:
    mode: str = "gac_fas"
    eta0: float = 0.005
    rho: float = 0.1
    gamma: float = 0.0002
    weight_decay: float = 1e-4
    schedule: Schedule = field(default_factory=Schedule)
    zero_grad_eps: float = 1e-12
    track_surrogate_gap: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.eta0 < 0:
            raise ValueError(f"eta0 must be >= 0, got {self.eta0}")
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.zero_grad_eps < 0:
            raise ValueError(f"zero_grad_eps must be >= 0, got {self.zero_grad_eps}")


@dataclass(frozen=True)
class AscendingVector:
    """Radius-rho perturbation in the gradient direction (zero if the
    gradient is numerically zero)."""

    eps: np.ndarray
    domain: int
    rho_used: float


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step record, populated from quantities the step already computed.

    Per-domain entries follow ascending domain-id order (see domain_ids).
    Modes without per-domain perturbed gradients fill the per-domain slots
    with their closest analog: erm records the plain per-domain gradients,
    sam_whole replicates its single perturbed gradient across domains.
    surrogate_gap is NaN when tracking is toggled off.
    """

    step_index: int
    domain_ids: tuple[int, ...]
    loss_erm: float
    per_domain_loss: tuple[float, ...]
    grad_norm: float
    per_domain_perturbed_grad_norm: tuple[float, ...]
    alignment_cos: tuple[float, ...]
    adv_grad_norms: tuple[float, ...]
    surrogate_gap: float


def ascending_vector(
    grad: np.ndarray, rho: float, zero_grad_eps: float = 1e-12, domain: int = 0
) -> AscendingVector:
    """eps = rho * grad / ||grad|| when ||grad|| > zero_grad_eps, else zero.

    The guard prevents division blow-up at exact minima."""
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    norm = l2_norm(grad)
    if norm > zero_grad_eps:
        eps = grad * (rho / norm)
    else:
        eps = numerics.zeros(grad.shape[0])
    return AscendingVector(eps, int(domain), float(rho))


def regularizer_grad(params: ParamVector, weight_decay: float) -> np.ndarray:
    """Gradient of (weight_decay/2)||theta||^2: weight_decay * theta, biases included."""
    return params.theta * float(weight_decay)


def schedule_value(schedule: Schedule, base: float, t: int) -> float:
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    if schedule.kind == "constant":
        return base
    if schedule.kind == "theorem1":
        return base / math.sqrt(t)
    if schedule.period_steps < 1:
        raise ValueError("step schedule period not resolved to steps (see harness)")
    return base * schedule.factor ** ((t - 1) // schedule.period_steps)


def _loss_and_grad(model, theta: np.ndarray, inputs, labels):
    fn = getattr(model, "loss_and_grad", None)
    if fn is not None:
        loss, grad = fn(theta, inputs, labels)
        return float(loss), numerics.as_vec64(grad)
    return model_mod.mean_loss_and_grad(model, theta, inputs, labels)


def _mean_loss(model, theta: np.ndarray, inputs, labels) -> float:
    fn = getattr(model, "loss", None)
    if fn is not None:
        return float(fn(theta, inputs, labels))
    return model_mod.mean_loss(model, theta, inputs, labels)


def _domain_terms(model, theta: np.ndarray, batch: Batch):
    """(domain_id, mean loss, mean gradient) per domain, ascending id order."""
    out = []
    for dom, idx in domain_slices(batch):
        loss, grad = _loss_and_grad(model, theta, batch.inputs[idx], batch.labels[idx])
        out.append((dom, loss, grad))
    return out


def _sum_terms(terms):
    """Sum per-domain losses and gradients in ascending domain-id order."""
    total_loss = 0.0
    total_grad = terms[0][2].copy()
    total_loss += terms[0][1]
    for _, loss, grad in terms[1:]:
        total_loss += loss
        total_grad += grad
    return total_loss, total_grad


def batch_loss_and_grad(model, theta: np.ndarray, batch: Batch):
    """Whole-batch loss/gradient under the sum-of-domain-means convention."""
    return _sum_terms(_domain_terms(model, theta, batch))


def batch_loss(model, theta: np.ndarray, batch: Batch) -> float:
    total = 0.0
    for dom, idx in domain_slices(batch):
        total += _mean_loss(model, theta, batch.inputs[idx], batch.labels[idx])
    return total


def _check_domains(terms, n_domains):
    if n_domains is not None and len(terms) != n_domains:
        present = [dom for dom, _, _ in terms]
        raise ValueError(f"batch covers domains {present}, expected {n_domains} domains")


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    denom = l2_norm(a) * l2_norm(b)
    if denom == 0.0:
        return 0.0
    return min(1.0, max(-1.0, dot(a, b) / denom))


def erm_step(model, params: ParamVector, batch: Batch, cfg: OptimizerConfig, t: int, n_domains=None):
    """theta <- theta - eta_t (grad L(theta;B) + grad R)."""
    eta_t = schedule_value(cfg.schedule, cfg.eta0, t)
    theta = params.theta
    terms = _domain_terms(model, theta, batch)
    _check_domains(terms, n_domains)
    loss, g = _sum_terms(terms)
    r = regularizer_grad(params, cfg.weight_decay)
    new_theta = axpy(-eta_t, g + r, theta)
    g_norm = l2_norm(g)
    domain_grad_norms = tuple(l2_norm(grad) for _, _, grad in terms)
    diag = StepDiagnostics(
        step_index=t,
        domain_ids=tuple(dom for dom, _, _ in terms),
        loss_erm=loss,
        per_domain_loss=tuple(l for _, l, _ in terms),
        grad_norm=g_norm,
        per_domain_perturbed_grad_norm=domain_grad_norms,
        alignment_cos=tuple(_cos(grad, g) for _, _, grad in terms),
        adv_grad_norms=domain_grad_norms,
        surrogate_gap=0.0 if cfg.track_surrogate_gap else math.nan,
    )
    return params.with_theta(new_theta), diag


def sam_whole_step(model, params: ParamVector, batch: Batch, cfg: OptimizerConfig, t: int, n_domains=None):
    """Ascend along the whole-batch gradient, descend with the gradient taken
    at the ascended point."""
    eta_t = schedule_value(cfg.schedule, cfg.eta0, t)
    rho_t = schedule_value(cfg.schedule, cfg.rho, t)
    theta = params.theta
    terms = _domain_terms(model, theta, batch)
    _check_domains(terms, n_domains)
    loss, g = _sum_terms(terms)
    asc = ascending_vector(g, rho_t, cfg.zero_grad_eps)
    theta_p = axpy(1.0, asc.eps, theta)
    p_terms = _domain_terms(model, theta_p, batch)
    loss_p, g_p = _sum_terms(p_terms)
    r = regularizer_grad(params, cfg.weight_decay)
    new_theta = axpy(-eta_t, g_p + r, theta)
    k = len(terms)
    gp_norm = l2_norm(g_p)
    align = _cos(g_p, g)
    diag = StepDiagnostics(
        step_index=t,
        domain_ids=tuple(dom for dom, _, _ in terms),
        loss_erm=loss,
        per_domain_loss=tuple(l for _, l, _ in terms),
        grad_norm=l2_norm(g),
        per_domain_perturbed_grad_norm=(gp_norm,) * k,
        alignment_cos=(align,) * k,
        adv_grad_norms=(gp_norm,) * k,
        surrogate_gap=(loss_p - loss) if cfg.track_surrogate_gap else math.nan,
    )
    return params.with_theta(new_theta), diag


def sam_domain_step(model, params: ParamVector, batch: Batch, cfg: OptimizerConfig, t: int, n_domains=None):
    """Per-domain ascent, per-domain descent gradient on the domain's own
    sub-batch only, averaged over domains."""
    eta_t = schedule_value(cfg.schedule, cfg.eta0, t)
    rho_t = schedule_value(cfg.schedule, cfg.rho, t)
    theta = params.theta
    terms = _domain_terms(model, theta, batch)
    _check_domains(terms, n_domains)
    loss, g = _sum_terms(terms)
    k = len(terms)

    slices = domain_slices(batch)
    gap = 0.0
    gp_list = []
    for (dom, dom_loss, dom_grad), (_, idx) in zip(terms, slices):
        asc = ascending_vector(dom_grad, rho_t, cfg.zero_grad_eps, domain=dom)
        theta_p = axpy(1.0, asc.eps, theta)
        loss_p, gp = _loss_and_grad(model, theta_p, batch.inputs[idx], batch.labels[idx])
        gp_list.append(gp)
        gap += loss_p - dom_loss
    acc = gp_list[0].copy()
    for gp in gp_list[1:]:
        acc += gp
    mean_gp = acc * (1.0 / k)
    r = regularizer_grad(params, cfg.weight_decay)
    new_theta = axpy(-eta_t, mean_gp + r, theta)
    diag = StepDiagnostics(
        step_index=t,
        domain_ids=tuple(dom for dom, _, _ in terms),
        loss_erm=loss,
        per_domain_loss=tuple(l for _, l, _ in terms),
        grad_norm=l2_norm(g),
        per_domain_perturbed_grad_norm=tuple(l2_norm(gp) for gp in gp_list),
        alignment_cos=tuple(_cos(gp, g) for gp in gp_list),
        adv_grad_norms=tuple(l2_norm(gp) for gp in gp_list),
        surrogate_gap=(gap / k) if cfg.track_surrogate_gap else math.nan,
    )
    return params.with_theta(new_theta), diag


def _aligned_perturb_step(model, params, batch, cfg, t, n_domains, domain_scope: bool):
    """Shared body of gac_fas_step and reg_domain_perturb_step.

    For each domain i: ascend by eps_i from that domain's gradient, offset by
    -gamma_t * g, and take the perturbed gradient over the whole batch
    (domain_scope=False) or over B_i rescaled by k (domain_scope=True).
    Update: theta - eta_t (g + mean_i perturbed_grad_i + r).
    """
    eta_t = schedule_value(cfg.schedule, cfg.eta0, t)
    rho_t = schedule_value(cfg.schedule, cfg.rho, t)
    gamma_t = schedule_value(cfg.schedule, cfg.gamma, t)
    theta = params.theta
    terms = _domain_terms(model, theta, batch)
    _check_domains(terms, n_domains)
    loss, g = _sum_terms(terms)
    k = len(terms)
    r = regularizer_grad(params, cfg.weight_decay)

    offset = axpy(-gamma_t, g, theta)
    slices = domain_slices(batch)
    deviations = numerics.zeros(theta.shape[0])
    gap = 0.0
    gp_list = []
    for (dom, _, dom_grad), (_, idx) in zip(terms, slices):
        asc = ascending_vector(dom_grad, rho_t, cfg.zero_grad_eps, domain=dom)
        theta_adv = axpy(1.0, asc.eps, offset)
        if domain_scope:
            loss_adv, gp = _loss_and_grad(model, theta_adv, batch.inputs[idx], batch.labels[idx])
            # Rescale the single-domain estimate to whole-batch (sum) units so
            # k=1 and fully symmetric domains reproduce the unscoped step.
            gp = gp * float(k)
            loss_adv = loss_adv * float(k)
        else:
            loss_adv, gp = _sum_terms(_domain_terms(model, theta_adv, batch))
        gp_list.append(gp)
        # Accumulating deviations from g keeps the terms small (they cluster
        # around g for small rho/gamma) and makes the rho=0, gamma=0 collapse
        # back to the doubled ERM gradient exact in floating point.
        deviations += gp - g
        gap += loss_adv - loss
    mean_gp = axpy(1.0 / k, deviations, g)
    new_theta = axpy(-eta_t, (g + mean_gp) + r, theta)
    diag = StepDiagnostics(
        step_index=t,
        domain_ids=tuple(dom for dom, _, _ in terms),
        loss_erm=loss,
        per_domain_loss=tuple(l for _, l, _ in terms),
        grad_norm=l2_norm(g),
        per_domain_perturbed_grad_norm=tuple(l2_norm(gp) for gp in gp_list),
        alignment_cos=tuple(_cos(gp, g) for gp in gp_list),
        adv_grad_norms=tuple(l2_norm(gp) for gp in gp_list),
        surrogate_gap=(gap / k) if cfg.track_surrogate_gap else math.nan,
    )
    return params.with_theta(new_theta), diag


def gac_fas_step(model, params: ParamVector, batch: Batch, cfg: OptimizerConfig, t: int, n_domains=None):
    """One aligned-perturbation step:

      g_i = grad L(theta; B_i); g = sum_i g_i; r = grad R(theta)
      eps_i = rho_t * g_i / ||g_i||
      gp_i = grad L(theta + eps_i - gamma_t * g; B)  (whole batch)
      theta <- theta - eta_t (g + (1/k) sum_i gp_i + r)
    """
    return _aligned_perturb_step(model, params, batch, cfg, t, n_domains, domain_scope=False)


def reg_domain_perturb_step(model, params: ParamVector, batch: Batch, cfg: OptimizerConfig, t: int, n_domains=None):
    """Ablation: the perturbed gradient for domain i is evaluated on B_i only
    (rescaled by k), not on the whole batch."""
    return _aligned_perturb_step(model, params, batch, cfg, t, n_domains, domain_scope=True)


_STEP_FNS = {
    "erm": erm_step,
    "sam_whole": sam_whole_step,
    "sam_domain": sam_domain_step,
    "gac_fas": gac_fas_step,
    "reg_domain_perturb": reg_domain_perturb_step,
}


def take_step(model, params: ParamVector, batch: Batch, cfg: OptimizerConfig, t: int, n_domains=None):
    """Dispatch one optimizer step on cfg.mode."""
    return _STEP_FNS[cfg.mode](model, params, batch, cfg, t, n_domains=n_domains)
