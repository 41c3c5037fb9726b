"""Training regimes: linear-decay SGD (1LR), RMSProp (2LR), and
covariance-preconditioned per-partition training with a final parameter
average (3LR).

All preconditioning is elementwise (diagonal). The covariance
accumulator uses the literal gamma*(1-gamma) variance factor; pass
standard_ewma=True for the conventional (1-gamma) weighting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nets
from .errors import InvalidPlan, InvalidValue, SizeMismatch

DEFAULT_BETA = 0.9
DEFAULT_GAMMA = 0.9
DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True)
class Schedule:
    alpha_start: float
    alpha_end: float
    total_steps: int

    def __post_init__(self):
        if not (self.alpha_start >= self.alpha_end > 0):
            raise InvalidValue("need alpha_start >= alpha_end > 0")
        if self.total_steps <= 0:
            raise InvalidValue("total_steps must be positive")


def schedule_alpha(s: Schedule, t: int) -> float:
    """Linear interpolation from alpha_start at t=0 to alpha_end at t=total_steps."""
    if not (0 <= t <= s.total_steps):
        raise InvalidValue(f"step {t} outside [0, {s.total_steps}]")
    return s.alpha_start + (s.alpha_end - s.alpha_start) * t / s.total_steps


@dataclass
class PreconditionerState:
    """Per-parameter accumulators for the adaptive step rules."""

    psi: np.ndarray  # running mean of squared gradients
    mu: np.ndarray  # running gradient mean
    c2: np.ndarray  # running gradient variance
    step: int = 0
    beta: float = DEFAULT_BETA
    gamma: float = DEFAULT_GAMMA
    epsilon: float = DEFAULT_EPSILON
    standard_ewma: bool = False

    @classmethod
    def zeros_like(cls, theta, beta=DEFAULT_BETA, gamma=DEFAULT_GAMMA,
                   epsilon=DEFAULT_EPSILON, standard_ewma=False):
        arr = theta.data if isinstance(theta, ad.Tensor) else np.asarray(theta)
        z = np.zeros_like(arr, dtype=np.float64)
        return cls(psi=z.copy(), mu=z.copy(), c2=z.copy(), beta=beta,
                   gamma=gamma, epsilon=epsilon, standard_ewma=standard_ewma)


def _check_shapes(theta, grad, *accs):
    t = theta.data if isinstance(theta, ad.Tensor) else np.asarray(theta)
    g = np.asarray(grad)
    if t.shape != g.shape:
        raise SizeMismatch(f"theta {t.shape} vs grad {g.shape}")
    for a in accs:
        if a.shape != t.shape:
            raise SizeMismatch(f"accumulator {a.shape} vs theta {t.shape}")
    return t, g


def sgd_step(theta, grad, alpha):
    """theta - alpha * grad."""
    t, g = _check_shapes(theta, grad)
    if alpha <= 0:
        raise InvalidValue("alpha must be positive")
    out = t - alpha * g
    return ad.Tensor(out, requires_grad=True) if isinstance(theta, ad.Tensor) else out


def rmsprop_step(theta, grad, state: PreconditionerState, alpha):
    """psi <- beta*psi + (1-beta)*g^2; theta <- theta - alpha*g/(sqrt(psi)+eps)."""
    t, g = _check_shapes(theta, grad, state.psi)
    psi = state.beta * state.psi + (1 - state.beta) * g * g
    out = t - alpha * g / (np.sqrt(psi) + state.epsilon)
    state.psi = psi
    state.step += 1
    new = ad.Tensor(out, requires_grad=True) if isinstance(theta, ad.Tensor) else out
    return new, state


def covprecond_step(theta, grad, state: PreconditionerState, alpha):
    """Covariance-preconditioned update.

    c2 <- gamma*c2 + gamma*(1-gamma)*(g - mu)^2   (previous mu)
    mu <- gamma*mu + (1-gamma)*g
    theta <- theta - alpha*g/(sqrt(c2)+eps)
    """
    t, g = _check_shapes(theta, grad, state.mu, state.c2)
    var_w = (1 - state.gamma) if state.standard_ewma else state.gamma * (1 - state.gamma)
    c2 = state.gamma * state.c2 + var_w * (g - state.mu) ** 2
    mu = state.gamma * state.mu + (1 - state.gamma) * g
    out = t - alpha * g / (np.sqrt(c2) + state.epsilon)
    state.c2 = c2
    state.mu = mu
    state.step += 1
    new = ad.Tensor(out, requires_grad=True) if isinstance(theta, ad.Tensor) else out
    return new, state


def average_params(models):
    """Parameter-wise arithmetic mean of structurally identical models."""
    from .errors import ArchMismatch

    if not models:
        raise InvalidValue("no models to average")
    ref = models[0]
    out = ref.clone()
    for name in ref.params:
        stack = []
        for m in models:
            if m.arch_id != ref.arch_id or set(m.params) != set(ref.params):
                raise ArchMismatch("models differ in architecture")
            if m.params[name].data.shape != ref.params[name].data.shape:
                raise ArchMismatch(f"shape mismatch for {name!r}")
            stack.append(m.params[name].data)
        out.params[name] = ad.Tensor(np.mean(stack, axis=0), requires_grad=True)
    return out


@dataclass(frozen=True)
class PartitionPlan:
    num_partitions: int
    assignments: tuple  # per-sample partition index
    iterations: int

    def __post_init__(self):
        idx = np.asarray(self.assignments)
        if self.num_partitions < 1 or self.iterations < 1:
            raise InvalidPlan("need at least one partition and one iteration")
        present = set(int(i) for i in idx)
        if present != set(range(self.num_partitions)):
            raise InvalidPlan("every partition must be non-empty and indices contiguous")

    def partition_indices(self, j):
        return [i for i, p in enumerate(self.assignments) if p == j]


@dataclass
class Hyper:
    """Regime hyperparameters; alpha_start/alpha_end drive 1LR's schedule,
    alpha is the fixed rate of the adaptive regimes."""

    alpha: float = 0.001
    alpha_start: float = 0.01
    alpha_end: float = 0.005
    beta: float = DEFAULT_BETA
    gamma: float = DEFAULT_GAMMA
    epsilon: float = DEFAULT_EPSILON
    iterations: int = 100
    batch_size: int = 32
    standard_ewma: bool = False


def _loss_on_batch(model, X, labels):
    logits = nets.forward(model, ad.Tensor(X))
    return ad.softmax_cross_entropy(logits, labels)


def _train_steps(model, batches, step_fn, num_steps, loss_trace=None, partition=0,
                 alpha_of=None):
    """Run `num_steps` minibatch steps cycling over `batches`.

    step_fn(name, param, grad, alpha) -> new param tensor.
    """
    n = len(batches)
    for t in range(num_steps):
        X, labels = batches[t % n]
        loss = _loss_on_batch(model, X, labels)
        ad.backward(loss)
        alpha = alpha_of(t) if alpha_of else None
        for name, p in model.param_items():
            if p.grad is None:
                continue
            model.params[name] = step_fn(name, p, p.grad, alpha)
        if loss_trace is not None:
            loss_trace.append((t, partition, alpha, loss.item()))
    return model


def train_epoch(model, batches, regime: str, hyper: Hyper, num_steps=None):
    """Train for `num_steps` minibatch steps (default hyper.iterations)
    under one regime; returns (model, loss trace rows)."""
    if not batches:
        raise InvalidValue("no batches")
    steps = hyper.iterations if num_steps is None else num_steps
    trace = []
    if regime == "1LR":
        sched = Schedule(hyper.alpha_start, hyper.alpha_end, steps)

        def step(name, p, g, alpha):
            return sgd_step(p, g, alpha)

        _train_steps(model, batches, step, steps, trace,
                     alpha_of=lambda t: schedule_alpha(sched, t))
    elif regime == "2LR":
        states = {n: PreconditionerState.zeros_like(p, beta=hyper.beta,
                                                    epsilon=hyper.epsilon)
                  for n, p in model.param_items()}

        def step(name, p, g, alpha):
            new, states[name] = rmsprop_step(p, g, states[name], hyper.alpha)
            return new

        _train_steps(model, batches, step, steps, trace,
                     alpha_of=lambda t: hyper.alpha)
    elif regime == "3LR-inner":
        states = {n: PreconditionerState.zeros_like(p, gamma=hyper.gamma,
                                                    epsilon=hyper.epsilon,
                                                    standard_ewma=hyper.standard_ewma)
                  for n, p in model.param_items()}

        def step(name, p, g, alpha):
            new, states[name] = covprecond_step(p, g, states[name], hyper.alpha)
            return new

        _train_steps(model, batches, step, steps, trace,
                     alpha_of=lambda t: hyper.alpha)
    else:
        raise InvalidValue(f"unknown regime {regime!r}")
    return model, trace


def make_batches(X, labels, batch_size, seed=0):
    """Shuffle once and split into minibatches (last one may be short)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    X = np.asarray(X)[order]
    labels = np.asarray(labels)[order]
    return [(X[i:i + batch_size], labels[i:i + batch_size])
            for i in range(0, len(labels), batch_size)]


def train_partitioned(init, X, labels, plan: PartitionPlan, hyper: Hyper,
                      seed=0, loss_trace=None):
    """3LR: clone the init per partition, train each clone on its own
    partition with the covariance-preconditioned step, then average."""
    X = np.asarray(X)
    labels = np.asarray(labels)
    if len(labels) != len(plan.assignments):
        raise InvalidPlan("plan does not cover the data")
    clones = []
    for j in range(plan.num_partitions):
        idx = plan.partition_indices(j)
        if not idx:
            raise InvalidPlan(f"partition {j} is empty")
        batches = make_batches(X[idx], labels[idx], hyper.batch_size, seed=seed + j)
        clone = init.clone()
        trace = [] if loss_trace is not None else None
        _, rows = train_epoch(clone, batches, "3LR-inner", hyper,
                              num_steps=plan.iterations)
        if loss_trace is not None:
            loss_trace.extend((t, j, a, l) for (t, _, a, l) in rows)
        clones.append(clone)
    return average_params(clones)
