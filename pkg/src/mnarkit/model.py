"""Deep generative imputer with parallel data and mask decoders.

One amortized Gaussian encoder feeds two parameter-disjoint decoders: a
Gaussian data decoder and a Bernoulli mask decoder. Training maximizes an
importance-weighted lower bound on the joint likelihood of observed values
and the missing mask, with a temperature ``alpha`` on the mask term. A
``serial`` structure variant replaces the mask decoder with a single
dense+sigmoid head on the decoded data mean (selection-model baseline).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, backward
from .errors import ConsistencyError, DomainError, NumericError, ShapeError
from .masking import IncompleteMatrix, zero_impute
from .synth import make_rng

CHECKPOINT_VERSION = 1

ENCODER_VARIANTS = ("zero_impute", "set_function")
STRUCTURES = ("parallel", "serial")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training hyperparameters."""

    latent_dim: int = 1
    hidden_sizes: tuple = (128, 128)
    k_train: int = 20          # importance samples per row during training
    l_impute: int = 1000       # importance samples per row during imputation
    alpha: float = 1.0         # mask-likelihood temperature; 0 disables the mask model
    learning_rate: float = 1e-3
    iterations: int = 10000
    batch_size: int = 128
    encoder: str = "zero_impute"
    set_embedding_size: int = 20
    set_code_size: int = 50
    seed: int = 0
    structure: str = "parallel"
    mean_activation: str = "linear"   # "sigmoid" for rating-scaled outputs
    mean_scale: float = 1.0
    trace_interval: int = 100

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        if self.k_train < 1 or self.l_impute < 1:
            raise DomainError("k_train and l_impute must be >= 1")
        if self.alpha < 0:
            raise DomainError("alpha must be >= 0")
        if self.encoder not in ENCODER_VARIANTS:
            raise DomainError(f"unknown encoder variant {self.encoder!r}")
        if self.structure not in STRUCTURES:
            raise DomainError(f"unknown structure {self.structure!r}")
        if self.mean_activation not in ("linear", "sigmoid"):
            raise DomainError(f"unknown mean activation {self.mean_activation!r}")


class ParamBlocks:
    """Named weight arrays, addressable as one flat vector for the optimizer.

    Names are prefixed ``enc.`` (encoder), ``dec_x.`` (data decoder) and
    ``dec_m.`` (mask decoder / serial mask head); the two decoder blocks
    share no parameters.
    """

    def __init__(self, arrays: dict):
        self._arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}

    @property
    def names(self):
        return list(self._arrays)

    def __getitem__(self, name):
        return self._arrays[name]

    def __setitem__(self, name, value):
        self._arrays[name] = np.asarray(value, dtype=np.float64)

    @property
    def n_features(self) -> int:
        return self._arrays["dec_x.bmean"].shape[1]

    def flatten(self) -> np.ndarray:
        return np.concatenate([self._arrays[k].ravel() for k in self._arrays])

    def unflatten(self, flat: np.ndarray) -> "ParamBlocks":
        out = {}
        pos = 0
        for k, a in self._arrays.items():
            out[k] = flat[pos:pos + a.size].reshape(a.shape).copy()
            pos += a.size
        if pos != flat.size:
            raise ShapeError("flat vector length does not match parameter blocks")
        return ParamBlocks(out)

    def copy(self) -> "ParamBlocks":
        return ParamBlocks({k: v.copy() for k, v in self._arrays.items()})

    def block_slices(self, prefix: str):
        """Flat-vector index ranges of all blocks whose name starts with prefix."""
        pos = 0
        spans = []
        for k, a in self._arrays.items():
            if k.startswith(prefix):
                spans.append((pos, pos + a.size))
            pos += a.size
        return spans


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig, d: int, rng=None) -> ParamBlocks:
    """Fresh parameter blocks for a d-feature dataset."""
    if rng is None:
        rng = make_rng(config.seed)
    h = config.hidden_sizes
    p = {}
    if config.encoder == "zero_impute":
        sizes = [d, *h]
        for i in range(len(h)):
            p[f"enc.W{i}"] = _glorot(rng, sizes[i], sizes[i + 1])
            p[f"enc.b{i}"] = np.zeros((1, sizes[i + 1]))
        top = h[-1]
    else:
        emb, code = config.set_embedding_size, config.set_code_size
        p["enc.Eval"] = _glorot(rng, d, emb) * np.sqrt(d / (1 + emb))  # per-pair scale
        p["enc.Eid"] = _glorot(rng, d, emb) * np.sqrt(d / (1 + emb))
        p["enc.Wcode"] = _glorot(rng, emb, code)
        p["enc.bcode"] = np.zeros((1, code))
        top = code
    p["enc.Wmean"] = _glorot(rng, top, config.latent_dim)
    p["enc.bmean"] = np.zeros((1, config.latent_dim))
    p["enc.Wstd"] = _glorot(rng, top, config.latent_dim)
    p["enc.bstd"] = np.zeros((1, config.latent_dim))

    sizes = [config.latent_dim, *h]
    for i in range(len(h)):
        p[f"dec_x.W{i}"] = _glorot(rng, sizes[i], sizes[i + 1])
        p[f"dec_x.b{i}"] = np.zeros((1, sizes[i + 1]))
    p["dec_x.Wmean"] = _glorot(rng, h[-1], d)
    p["dec_x.bmean"] = np.zeros((1, d))
    p["dec_x.Wstd"] = _glorot(rng, h[-1], d)
    p["dec_x.bstd"] = np.zeros((1, d))

    if config.structure == "parallel":
        for i in range(len(h)):
            p[f"dec_m.W{i}"] = _glorot(rng, sizes[i], sizes[i + 1])
            p[f"dec_m.b{i}"] = np.zeros((1, sizes[i + 1]))
        p["dec_m.Wout"] = _glorot(rng, h[-1], d)
        p["dec_m.bout"] = np.zeros((1, d))
    else:
        # serial selection head: single dense+sigmoid on the decoded data mean
        p["dec_m.W"] = _glorot(rng, d, d)
        p["dec_m.b"] = np.zeros((1, d))
    return ParamBlocks(p)


def _nodes(params: ParamBlocks) -> dict:
    return {k: Tensor(params[k]) for k in params.names}


def _flat_grads(params: ParamBlocks, nodes: dict) -> np.ndarray:
    parts = []
    for k in params.names:
        g = nodes[k].grad
        parts.append((np.zeros_like(params[k]) if g is None else g).ravel())
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# network pieces


def encode(data: IncompleteMatrix, nodes: dict, config: ModelConfig):
    """Posterior parameters (mean_z, std_z) for each row.

    The mask is never concatenated to the input: the zero_impute variant
    sees the zero-filled values; the set_function variant sums per-feature
    embeddings of the observed (feature-id, value) pairs only.
    """
    if config.encoder == "zero_impute":
        h = Tensor(zero_impute(data))
        for i in range(len(config.hidden_sizes)):
            h = ad.tanh(ad.dense(h, nodes[f"enc.W{i}"], nodes[f"enc.b{i}"]))
    else:
        filled = zero_impute(data)  # masked values; missing contributes nothing
        s = ad.add(ad.matmul(Tensor(filled * data.mask), nodes["enc.Eval"]),
                   ad.matmul(Tensor(data.mask), nodes["enc.Eid"]))
        h = ad.tanh(ad.dense(s, nodes["enc.Wcode"], nodes["enc.bcode"]))
    mean = ad.dense(h, nodes["enc.Wmean"], nodes["enc.bmean"])
    std = ad.std_head(ad.dense(h, nodes["enc.Wstd"], nodes["enc.bstd"]))
    return mean, std


def decode_data(z: Tensor, nodes: dict, config: ModelConfig):
    """Gaussian likelihood parameters (mean_x, std_x) for all features."""
    h = z
    for i in range(len(config.hidden_sizes)):
        h = ad.tanh(ad.dense(h, nodes[f"dec_x.W{i}"], nodes[f"dec_x.b{i}"]))
    mean = ad.dense(h, nodes["dec_x.Wmean"], nodes["dec_x.bmean"])
    if config.mean_activation == "sigmoid":
        mean = ad.scale(ad.sigmoid(mean), config.mean_scale)
    std = ad.std_head(ad.dense(h, nodes["dec_x.Wstd"], nodes["dec_x.bstd"]))
    return mean, std


def decode_mask(z: Tensor, nodes: dict, config: ModelConfig) -> Tensor:
    """Per-entry observation probabilities from the parallel mask decoder."""
    h = z
    for i in range(len(config.hidden_sizes)):
        h = ad.tanh(ad.dense(h, nodes[f"dec_m.W{i}"], nodes[f"dec_m.b{i}"]))
    return ad.sigmoid(ad.dense(h, nodes["dec_m.Wout"], nodes["dec_m.bout"]))


def decode_mask_serial(mean_x: Tensor, nodes: dict) -> Tensor:
    """Serial selection head: sigmoid of one dense layer on the data mean."""
    return ad.sigmoid(ad.dense(mean_x, nodes["dec_m.W"], nodes["dec_m.b"]))


def mask_probabilities(z: Tensor, mean_x: Tensor, nodes: dict, config: ModelConfig) -> Tensor:
    if config.structure == "parallel":
        return decode_mask(z, nodes, config)
    return decode_mask_serial(mean_x, nodes)


@dataclass
class LatentBatch:
    """K reparameterized posterior draws per row, flattened to (n*k, dim)."""

    z: Tensor
    mean_rep: Tensor
    std_rep: Tensor
    noise: np.ndarray
    k: int


def sample_latent(mean_z: Tensor, std_z: Tensor, k: int, noise=None, rng=None) -> LatentBatch:
    n, dim = mean_z.value.shape
    if noise is None:
        noise = rng.standard_normal((n * k, dim))
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (n * k, dim):
        raise ShapeError(f"noise shape {noise.shape} != {(n * k, dim)}")
    mean_rep = ad.repeat_rows(mean_z, k)
    std_rep = ad.repeat_rows(std_z, k)
    z = ad.reparameterize(mean_rep, std_rep, noise)
    return LatentBatch(z=z, mean_rep=mean_rep, std_rep=std_rep, noise=noise, k=k)


@dataclass
class ImportanceWeightSet:
    """Per-row, per-draw log-weights, their normalized form, and the four
    additive log-components (for diagnostics and tests)."""

    log_w: np.ndarray       # (n, k)
    normalized: np.ndarray  # rows sum to 1
    components: dict        # name -> (n, k)
    node: Tensor            # graph handle, shape (n, k)


def _normalize_rows(log_w: np.ndarray) -> np.ndarray:
    m = log_w.max(axis=1, keepdims=True)
    w = np.exp(log_w - m)
    total = w.sum(axis=1, keepdims=True)
    if not np.all(np.isfinite(total)) or np.any(total <= 0):
        raise NumericError("importance weights degenerate (all underflowed)")
    return w / total


def importance_log_weights(data: IncompleteMatrix, latent: LatentBatch,
                           nodes: dict, config: ModelConfig,
                           alpha: float | None = None) -> ImportanceWeightSet:
    """log w = observed-data term + alpha * mask term + prior - posterior.

    The data term sums Gaussian log-densities over observed entries only;
    the mask term sums Bernoulli log-densities over all entries. With
    alpha=0 the mask model contributes exactly nothing (term and gradient).
    """
    if alpha is None:
        alpha = config.alpha
    n, d = data.shape
    k = latent.k
    x_rep = np.repeat(zero_impute(data), k, axis=0)
    m_rep = np.repeat(data.mask, k, axis=0)

    mean_x, std_x = decode_data(latent.z, nodes, config)
    ld = ad.gaussian_log_density(x_rep, mean_x, std_x)
    data_term = ad.sum_axis(ad.mul_const(ld, m_rep), 1)

    prior = ad.sum_axis(ad.gaussian_log_density(
        latent.z, np.zeros((1, 1)), np.ones((1, 1))), 1)
    posterior = ad.sum_axis(ad.gaussian_log_density(
        latent.z, latent.mean_rep, latent.std_rep), 1)

    components = {
        "data": data_term.value.reshape(n, k).copy(),
        "prior": prior.value.reshape(n, k).copy(),
        "neg_posterior": -posterior.value.reshape(n, k).copy(),
    }
    total = ad.sub(ad.add(data_term, prior), posterior)
    if alpha != 0.0:
        p_m = mask_probabilities(latent.z, mean_x, nodes, config)
        mask_term = ad.scale(ad.sum_axis(ad.bernoulli_log_density(m_rep, p_m), 1), alpha)
        components["mask"] = mask_term.value.reshape(n, k).copy()
        total = ad.add(total, mask_term)
    else:
        components["mask"] = np.zeros((n, k))

    node = ad.reshape(total, (n, k))
    log_w = node.value.copy()
    for name, comp in components.items():
        if not np.all(np.isfinite(comp)):
            raise NumericError(f"non-finite importance-weight component: {name}")
    return ImportanceWeightSet(log_w=log_w, normalized=_normalize_rows(log_w),
                               components=components, node=node)


def _bound_node(data: IncompleteMatrix, nodes: dict, config: ModelConfig,
                noise: np.ndarray) -> tuple[Tensor, ImportanceWeightSet]:
    n = data.shape[0]
    k = noise.shape[0] // n
    mean_z, std_z = encode(data, nodes, config)
    latent = sample_latent(mean_z, std_z, k, noise=noise)
    weights = importance_log_weights(data, latent, nodes, config)
    per_row = ad.add_const(ad.log_sum_exp(weights.node, axis=1), -np.log(k))
    return ad.mean_all(per_row), weights


def bound(data: IncompleteMatrix, params: ParamBlocks, config: ModelConfig,
          rng=None, noise=None) -> float:
    """Monte Carlo estimate of the importance-weighted lower bound.

    Pass ``noise`` of shape (n*k, latent_dim) for shared-randomness
    comparisons across k; otherwise draws k_train samples from rng.
    """
    nodes = _nodes(params)
    if noise is None:
        n = data.shape[0]
        noise = rng.standard_normal((n * config.k_train, config.latent_dim))
    node, _ = _bound_node(data, nodes, config, np.asarray(noise, dtype=np.float64))
    return float(node.value[0, 0])


# ---------------------------------------------------------------------------
# training


def train(dataset: IncompleteMatrix, config: ModelConfig):
    """Fit by Adam on minibatches; returns (params, trace).

    trace is a list of (iteration, bound) pairs sampled every
    ``trace_interval`` iterations. Deterministic given config.seed.
    """
    rng = make_rng(config.seed)
    n, d = dataset.shape
    params = init_params(config, d, rng)
    state = AdamState.for_size(params.flatten().size)
    trace = []
    order = rng.permutation(n)
    pos = 0
    for it in range(config.iterations):
        take = min(config.batch_size, n)
        if pos + take > n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos:pos + take]
        pos += take
        batch = IncompleteMatrix(dataset.values[idx], dataset.mask[idx])
        noise = rng.standard_normal((take * config.k_train, config.latent_dim))
        nodes = _nodes(params)
        try:
            bound_node, weights = _bound_node(batch, nodes, config, noise)
        except NumericError as e:
            raise NumericError(f"iteration {it}: {e}") from e
        value = float(bound_node.value[0, 0])
        if not np.isfinite(value):
            stats = {k: (float(v.min()), float(v.max())) for k, v in weights.components.items()}
            raise NumericError(f"non-finite bound at iteration {it}; component ranges {stats}")
        if it % config.trace_interval == 0:
            trace.append((it, value))
        loss = ad.scale(bound_node, -1.0)
        backward(loss)
        flat, state = adam_step(params.flatten(), _flat_grads(params, nodes),
                                state, config.learning_rate)
        params = params.unflatten(flat)
    return params, trace


# ---------------------------------------------------------------------------
# imputation


@dataclass
class ImputationResult:
    """Completed matrix plus the predicted per-entry observation probabilities."""

    completed: np.ndarray
    prob_mask: np.ndarray
    draws: list | None = None


def _forward_weights(chunk: IncompleteMatrix, nodes: dict, config: ModelConfig,
                     l_samples: int, rng):
    """Forward pass for one row chunk: weights, decoded means/stds, mask probs."""
    mean_z, std_z = encode(chunk, nodes, config)
    latent = sample_latent(mean_z, std_z, l_samples, rng=rng)
    weights = importance_log_weights(chunk, latent, nodes, config)
    mean_x, std_x = decode_data(latent.z, nodes, config)
    p_m = mask_probabilities(latent.z, mean_x, nodes, config)
    return weights, mean_x.value, std_x.value, p_m.value


def impute(data: IncompleteMatrix, params: ParamBlocks, config: ModelConfig,
           rng=None, chunk_rows: int = 32) -> ImputationResult:
    """Self-normalized importance-sampling imputation.

    Missing entries get the weight-averaged decoded mean over l_impute
    latent draws; observed entries pass through bit-exactly. The
    probabilistic mask is the weight-averaged mask-decoder output.
    """
    if params.n_features != data.shape[1]:
        raise ConsistencyError(
            f"checkpoint has {params.n_features} features, dataset has {data.shape[1]}")
    if rng is None:
        rng = make_rng(config.seed + 1)
    nodes = _nodes(params)
    n, d = data.shape
    L = config.l_impute
    completed = np.array(data.values, dtype=np.float64)
    prob_mask = np.zeros((n, d))
    for lo in range(0, n, chunk_rows):
        hi = min(lo + chunk_rows, n)
        chunk = IncompleteMatrix(data.values[lo:hi], data.mask[lo:hi])
        weights, mean_x, _, p_m = _forward_weights(chunk, nodes, config, L, rng)
        w = weights.normalized[:, :, None]                      # (rows, L, 1)
        est = (w * mean_x.reshape(hi - lo, L, d)).sum(axis=1)   # (rows, d)
        pm = (w * p_m.reshape(hi - lo, L, d)).sum(axis=1)
        miss = chunk.mask == 0
        completed[lo:hi][miss] = est[miss]
        prob_mask[lo:hi] = pm
    return ImputationResult(completed=completed, prob_mask=prob_mask)


def multiple_impute(data: IncompleteMatrix, params: ParamBlocks, config: ModelConfig,
                    n_draws: int, rng=None, chunk_rows: int = 32) -> list:
    """Sampling-importance-resampling draws of the completed matrix.

    Each draw resamples one latent per row with probability proportional to
    the normalized weights, then samples missing entries from the data
    decoder's Gaussian at that latent. Observed entries are preserved.
    """
    if n_draws < 1:
        raise DomainError("n_draws must be >= 1")
    if rng is None:
        rng = make_rng(config.seed + 1)
    nodes = _nodes(params)
    n, d = data.shape
    L = config.l_impute
    draws = [np.array(data.values, dtype=np.float64) for _ in range(n_draws)]
    for lo in range(0, n, chunk_rows):
        hi = min(lo + chunk_rows, n)
        rows = hi - lo
        chunk = IncompleteMatrix(data.values[lo:hi], data.mask[lo:hi])
        weights, mean_x, std_x, _ = _forward_weights(chunk, nodes, config, L, rng)
        mean_x = mean_x.reshape(rows, L, d)
        std_x = std_x.reshape(rows, L, d)
        cum = np.cumsum(weights.normalized, axis=1)
        miss = chunk.mask == 0
        for t in range(n_draws):
            pick = np.minimum((cum < rng.random((rows, 1))).sum(axis=1), L - 1)
            mu = mean_x[np.arange(rows), pick]
            sd = std_x[np.arange(rows), pick]
            sample = mu + sd * rng.standard_normal((rows, d))
            draws[t][lo:hi][miss] = sample[miss]
    return draws


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: ParamBlocks, config: ModelConfig) -> None:
    """Versioned npz layout: config echo as JSON plus raw float64 blocks."""
    payload = {
        "format_version": np.int64(CHECKPOINT_VERSION),
        "config_json": np.array(json.dumps(asdict(config)), dtype=object),
        "param_order": np.array(params.names, dtype=object),
    }
    for name in params.names:
        payload[f"param:{name}"] = params[name]
    np.savez(path, **payload)


def load_checkpoint(path):
    """Returns (params, config); bit-exact inverse of save_checkpoint."""
    with np.load(path, allow_pickle=True) as f:
        version = int(f["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ConsistencyError(f"unsupported checkpoint version {version}")
        raw = json.loads(str(f["config_json"][()]))
        config = ModelConfig(**raw)
        order = [str(x) for x in f["param_order"]]
        params = ParamBlocks({name: f[f"param:{name}"] for name in order})
    return params, config
