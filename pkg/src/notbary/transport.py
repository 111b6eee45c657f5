"""Transport-plan models and the congruent potential bank.

A plan model represents the conditional distributions ``pi(.|x)`` of a
transport plan through a map of the input and auxiliary noise:

- `DeterministicMap`: ``y = T(x)``; noise is ignored
- `StochasticMap`: ``y = T(x, s)`` with the network fed ``[x, s]``
- `GaussianModel`: ``y = mu(x) + sigma(x) * s`` with a softplus scale net
- `AffinePlan`: a fixed affine map, used to evaluate oracle maps

When the noise batch has one more axis than ``x`` (``x: (n, D)``,
``s: (n, m, D_s)``) every model returns ``(n, m, D)``, one row per draw.

`PotentialBank` holds the networks ``g_k`` and exposes the congruent
potentials ``f_k = g_k - sum_j l_j g_j`` so that ``sum_k l_k f_k = 0``
holds for any parameters.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .diffmath import MlpParams, Node, init_mlp, mlp_forward
from .distributions import Sampler
from .errors import ContractError
from .gaussian_oracle import AffineMap

PlanKind = Literal["deterministic", "stochastic", "gaussian"]

SCALE_FLOOR = 1e-6
WEIGHT_SUM_TOL = 1e-12


def _check_inputs(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise ContractError("input width does not match the model", {"expected": dim, "shape": list(x.shape)})
    return x


def _check_noise(x: np.ndarray, s: Optional[np.ndarray], noise_dim: int, kind: str) -> np.ndarray:
    if s is None:
        raise ContractError(f"{kind} plan model needs a noise batch")
    s = np.asarray(s, dtype=np.float64)
    lead = x.shape[:-1]
    if s.shape[-1] != noise_dim or s.shape[: len(lead)] != lead or s.ndim not in (x.ndim, x.ndim + 1):
        raise ContractError(
            "noise batch does not match inputs",
            {"x": list(x.shape), "s": list(s.shape), "noise_dim": noise_dim},
        )
    return s


def _spread(y: Node, x: np.ndarray, s: Optional[np.ndarray]) -> Node:
    """Repeat per-input outputs along the draw axis of ``s``."""
    if s is None or np.ndim(s) == x.ndim:
        return y
    lead = x.shape[:-1]
    m = np.shape(s)[len(lead)]
    return y.reshape(*lead, 1, y.shape[-1]).broadcast_to(lead + (m, y.shape[-1]))


class PlanModel(ABC):
    """Conditional-distribution model ``x -> pi(.|x)``.

    Attributes:
        in_dim: Input dimension.
        out_dim: Output (barycenter) dimension.
        noise_dim: Auxiliary noise dimension; 0 when no noise is used.
    """

    kind: str = "abstract"
    in_dim: int
    out_dim: int
    noise_dim: int = 0

    @property
    def needs_noise(self) -> bool:
        return self.noise_dim > 0

    @abstractmethod
    def forward(self, x: np.ndarray, s: Optional[np.ndarray] = None) -> Node:
        """Map inputs (and noise) to outputs."""

    @abstractmethod
    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Node]]:
        """Trainable leaves with stable names."""

    def parameters(self) -> List[Node]:
        return [p for _, p in self.named_parameters()]

    def manifest(self) -> Dict[str, Any]:
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim, "noise_dim": self.noise_dim}


class DeterministicMap(PlanModel):
    kind = "deterministic"

    def __init__(self, net: MlpParams) -> None:
        self.net = net
        self.in_dim = net.in_dim
        self.out_dim = net.out_dim

    def forward(self, x: np.ndarray, s: Optional[np.ndarray] = None) -> Node:
        x = _check_inputs(x, self.in_dim)
        return _spread(mlp_forward(self.net, x), x, s)

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Node]]:
        return self.net.named_parameters(f"{prefix}net.")

    def manifest(self) -> Dict[str, Any]:
        return {**super().manifest(), "net": self.net.manifest()}


class StochasticMap(PlanModel):
    """``T(x, s)`` as one network on the concatenation ``[x, s]``."""

    kind = "stochastic"

    def __init__(self, net: MlpParams, in_dim: int, noise_dim: int) -> None:
        if noise_dim < 1 or net.in_dim != in_dim + noise_dim:
            raise ContractError(
                "stochastic map network must take [x, s]",
                {"net_in": net.in_dim, "in_dim": in_dim, "noise_dim": noise_dim},
            )
        self.net = net
        self.in_dim = in_dim
        self.out_dim = net.out_dim
        self.noise_dim = noise_dim

    def forward(self, x: np.ndarray, s: Optional[np.ndarray] = None) -> Node:
        x = _check_inputs(x, self.in_dim)
        s = _check_noise(x, s, self.noise_dim, self.kind)
        if s.ndim == x.ndim + 1:
            x = np.broadcast_to(x[..., None, :], s.shape[:-1] + (self.in_dim,))
        return mlp_forward(self.net, np.concatenate([x, s], axis=-1))

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Node]]:
        return self.net.named_parameters(f"{prefix}net.")

    def manifest(self) -> Dict[str, Any]:
        return {**super().manifest(), "net": self.net.manifest()}


class GaussianModel(PlanModel):
    """Conditional ``N(mu(x), diag sigma(x)^2)``; ``sigma = softplus(.) + 1e-6``."""

    kind = "gaussian"

    def __init__(self, mean_net: MlpParams, scale_net: MlpParams) -> None:
        if mean_net.in_dim != scale_net.in_dim or mean_net.out_dim != scale_net.out_dim:
            raise ContractError(
                "mean and scale networks must share input and output widths",
                {"mean": list(mean_net.widths), "scale": list(scale_net.widths)},
            )
        if scale_net.output_activation != "softplus":
            raise ContractError("scale network must end in softplus")
        self.mean_net = mean_net
        self.scale_net = scale_net
        self.in_dim = mean_net.in_dim
        self.out_dim = mean_net.out_dim
        self.noise_dim = mean_net.out_dim

    def moments(self, x: np.ndarray) -> Tuple[Node, Node]:
        """``(mu(x), sigma(x))``, each shaped like ``x`` with the output width."""
        x = _check_inputs(x, self.in_dim)
        return mlp_forward(self.mean_net, x), mlp_forward(self.scale_net, x) + SCALE_FLOOR

    def forward(self, x: np.ndarray, s: Optional[np.ndarray] = None) -> Node:
        x = _check_inputs(x, self.in_dim)
        s = _check_noise(x, s, self.noise_dim, self.kind)
        mu, sigma = self.moments(x)
        if s.ndim == x.ndim + 1:
            lead = x.shape[:-1]
            mu = mu.reshape(*lead, 1, self.out_dim)
            sigma = sigma.reshape(*lead, 1, self.out_dim)
        return mu + sigma * s

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Node]]:
        return self.mean_net.named_parameters(f"{prefix}mean.") + self.scale_net.named_parameters(
            f"{prefix}scale."
        )

    def manifest(self) -> Dict[str, Any]:
        return {**super().manifest(), "mean": self.mean_net.manifest(), "scale": self.scale_net.manifest()}


class AffinePlan(PlanModel):
    """Parameter-free deterministic plan ``x -> A x + b``."""

    kind = "affine"

    def __init__(self, affine: AffineMap) -> None:
        self.affine = affine
        self.in_dim = affine.dim
        self.out_dim = affine.dim

    def forward(self, x: np.ndarray, s: Optional[np.ndarray] = None) -> Node:
        x = _check_inputs(x, self.in_dim)
        return _spread(Node(self.affine(x)), x, s)

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Node]]:
        return []


def map_forward(model: PlanModel, x: np.ndarray, s: Optional[np.ndarray] = None) -> Node:
    """Evaluate ``model`` on inputs ``x`` and optional noise ``s``.

    Raises:
        ContractError: If a stochastic or Gaussian model gets no noise, or
            shapes disagree.
    """
    return model.forward(x, s)


def build_plan_model(
    kind: PlanKind,
    dim: int,
    hidden: Sequence[int],
    rng: np.random.Generator,
    *,
    noise_dim: Optional[int] = None,
) -> PlanModel:
    """Initialize a plan model ``R^dim -> R^dim`` with the given hidden widths."""
    hidden = list(hidden)
    if kind == "deterministic":
        return DeterministicMap(init_mlp([dim, *hidden, dim], rng))
    if kind == "stochastic":
        ds = dim if noise_dim is None else int(noise_dim)
        return StochasticMap(init_mlp([dim + ds, *hidden, dim], rng), dim, ds)
    if kind == "gaussian":
        mean_net = init_mlp([dim, *hidden, dim], rng)
        scale_net = init_mlp([dim, *hidden, dim], rng, output_activation="softplus")
        return GaussianModel(mean_net, scale_net)
    raise ContractError("unknown plan model kind", {"kind": kind})


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


def check_weights(weights: Sequence[float]) -> np.ndarray:
    """Validate barycenter weights: positive and summing to 1 within 1e-12."""
    lam = np.asarray(weights, dtype=np.float64)
    if lam.ndim != 1 or lam.size < 1 or np.any(lam <= 0) or abs(float(lam.sum()) - 1.0) > WEIGHT_SUM_TOL:
        raise ContractError("weights must be positive and sum to 1", {"weights": np.atleast_1d(lam).tolist()})
    return lam


class PotentialBank:
    """Scalar networks ``g_1..g_K`` on the target space with barycenter weights."""

    def __init__(self, nets: Sequence[MlpParams], weights: Sequence[float]) -> None:
        lam = check_weights(weights)
        if len(nets) != lam.size:
            raise ContractError("one potential network per weight", {"nets": len(nets), "weights": lam.size})
        dims = {(net.in_dim, net.out_dim) for net in nets}
        if len(dims) != 1 or next(iter(dims))[1] != 1:
            raise ContractError("potential networks must share input width and output a scalar")
        self.nets = list(nets)
        self.weights = lam
        self.dim = self.nets[0].in_dim

    @property
    def K(self) -> int:
        return len(self.nets)

    @classmethod
    def init(
        cls, dim: int, weights: Sequence[float], hidden: Sequence[int], rng: np.random.Generator
    ) -> "PotentialBank":
        lam = check_weights(weights)
        return cls([init_mlp([dim, *hidden, 1], rng) for _ in range(lam.size)], lam)

    def g(self, y: Any) -> List[Node]:
        """All ``g_k(y)`` with the trailing unit axis dropped."""
        return [_scalar_out(mlp_forward(net, y)) for net in self.nets]

    def potential_eval(self, k: int, y: Any) -> Node:
        """``f_k(y) = g_k(y) - sum_j l_j g_j(y)`` for 0-based ``k``.

        Raises:
            ContractError: If ``k`` is out of range.
        """
        if not 0 <= k < self.K:
            raise ContractError("potential index out of range", {"k": k, "K": self.K})
        gs = self.g(y)
        return gs[k] - _mix(gs, self.weights)

    def potentials(self, y: Any) -> List[Node]:
        """Every ``f_k`` at the same points, sharing one evaluation of the nets."""
        gs = self.g(y)
        mix = _mix(gs, self.weights)
        return [g - mix for g in gs]

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Node]]:
        named: List[Tuple[str, Node]] = []
        for k, net in enumerate(self.nets):
            named.extend(net.named_parameters(f"{prefix}g{k + 1}."))
        return named

    def parameters(self) -> List[Node]:
        return [p for _, p in self.named_parameters()]

    def manifest(self) -> Dict[str, Any]:
        return {"weights": self.weights.tolist(), "nets": [net.manifest() for net in self.nets]}


def _scalar_out(h: Node) -> Node:
    return h.reshape(h.shape[:-1])


def _mix(gs: Sequence[Node], weights: np.ndarray) -> Node:
    total = gs[0] * float(weights[0])
    for w, g in zip(weights[1:], gs[1:]):
        total = total + g * float(w)
    return total


def potential_eval(bank: PotentialBank, k: int, y: Any) -> Node:
    return bank.potential_eval(k, y)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def draw_noise(model: PlanModel, noise: Optional[Sampler], n: int, m: int) -> Optional[np.ndarray]:
    """An ``(n, m, D_s)`` noise batch, or None for noise-free models."""
    if not model.needs_noise:
        return None
    if noise is None:
        raise ContractError(f"{model.kind} plan model needs a noise sampler")
    if noise.dim != model.noise_dim:
        raise ContractError("noise sampler dimension mismatch", {"sampler": noise.dim, "model": model.noise_dim})
    return noise.sample(n * m).reshape(n, m, model.noise_dim)


def sample_plan(
    model: PlanModel,
    sampler: Sampler,
    n: int,
    m: int,
    noise: Optional[Sampler] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` inputs and ``m`` conditional outputs for each.

    Returns:
        ``(x, ys)`` with shapes ``(n, D)`` and ``(n, m, D)``. Deterministic
        models repeat one output ``m`` times.
    """
    if n < 1 or m < 1:
        raise ContractError("n and m must be >= 1", {"n": n, "m": m})
    x = sampler.sample(n)
    s = draw_noise(model, noise, n, m)
    if s is None:
        ys = model.forward(x).value[:, None, :].repeat(m, axis=1)
    else:
        ys = model.forward(x, s).value
    return x, ys


def allocate_counts(
    weights: Sequence[float], n: int, labels: Optional[Sequence[str]] = None
) -> np.ndarray:
    """Split ``n`` into ``l_k``-proportional integers by largest remainder.

    Equal remainders go to the smallest label, so reordering the components
    permutes the counts with them. Without labels, ties go to the lower index.

    Raises:
        ContractError: If labels are not unique or do not match the weights.
    """
    lam = check_weights(weights)
    if labels is None:
        tie = np.arange(lam.size)
    else:
        labels = list(labels)
        if len(labels) != lam.size or len(set(labels)) != len(labels):
            raise ContractError("one unique label per weight", {"labels": labels, "weights": lam.size})
        rank = {label: i for i, label in enumerate(sorted(labels))}
        tie = np.array([rank[label] for label in labels])
    raw = lam * n
    counts = np.floor(raw).astype(np.int64)
    short = int(n - counts.sum())
    if short > 0:
        order = np.lexsort((tie, -(raw - counts)))
        counts[order[:short]] += 1
    return counts


def pushforward_pool(
    models: Sequence[PlanModel],
    samplers: Sequence[Sampler],
    weights: Sequence[float],
    n: int,
    noise: Optional[Sequence[Optional[Sampler]]] = None,
) -> np.ndarray:
    """Pooled samples of the barycenter implied by the maps.

    Model ``k`` contributes ``round(l_k n)`` pushforward samples of its own
    reference sampler. The pooled rows are sorted lexicographically, so the
    result does not depend on the order of the models.
    """
    if len(models) != len(samplers):
        raise ContractError("one sampler per model", {"models": len(models), "samplers": len(samplers)})
    noise_list = list(noise) if noise is not None else [None] * len(models)
    parts = []
    counts = allocate_counts(weights, n, [s.stream for s in samplers])
    for model, sampler, ns, count in zip(models, samplers, noise_list, counts):
        if count == 0:
            continue
        _, ys = sample_plan(model, sampler, int(count), 1, ns)
        parts.append(ys[:, 0, :])
    pooled = np.concatenate(parts, axis=0)
    return pooled[np.lexsort(pooled.T[::-1])]
