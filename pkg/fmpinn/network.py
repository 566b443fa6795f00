"""Multi-scale deep neural network with a Fourier feature first layer.

The network holds Q subnetworks that share one architecture. Subnetwork i
receives the input stretched by its scale factor a_i. The weights of the Q
subnetworks are stored stacked along a leading axis of size Q, so that one
batched matrix product evaluates all of them at once.
"""

import json
import logging
import os
import struct
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .constants import CHECKPOINT_MAGIC, DEFAULT_HIDDEN, DEFAULT_SCALES, NAME_DELIMITER
from .exceptions import ConfigurationError
from .helpers import canonical_hash

logger = logging.getLogger("fmpinn")

FIRST_ACTIVATIONS = ("fourier", "sincos", "tanh")
HIDDEN_ACTIVATIONS = ("sincos", "tanh", "requ")
AGGREGATIONS = ("inverse_scale_mean", "linear_head")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture of a multi-scale network.

    Attributes:
        dim_in (int): Input dimension d.
        dim_out (int): Output dimension, 1 + d for the mixed formulation and 1
            for the classical residual formulation.
        scales (tuple of float): Scale vector, one factor a_i >= 1 per subnetwork.
        hidden (tuple of int): Hidden layer widths of every subnetwork.
        first_activation (str): One of 'fourier', 'sincos', 'tanh'.
        hidden_activation (str): One of 'sincos', 'tanh', 'requ'.
        soften (float): Relaxation factor s in (0, 1] of the Fourier layer.
        aggregation (str): 'inverse_scale_mean' or 'linear_head'.
        resnet_skips (bool): Add one-step skips between equal-width hidden layers.
        train_first_layer (bool): Whether the first-layer weights are trained.
    """

    dim_in: int
    dim_out: int
    scales: Tuple[float, ...] = DEFAULT_SCALES
    hidden: Tuple[int, ...] = DEFAULT_HIDDEN
    first_activation: str = "fourier"
    hidden_activation: str = "sincos"
    soften: float = 1.0
    aggregation: str = "inverse_scale_mean"
    resnet_skips: bool = True
    train_first_layer: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(a) for a in self.scales))
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.dim_in < 1 or self.dim_out < 1:
            raise ConfigurationError(
                f"Network dimensions must be positive, got in={self.dim_in}, out={self.dim_out}"
            )
        if len(self.scales) == 0:
            raise ConfigurationError("The scale vector needs at least one entry")
        if any(a < 1 for a in self.scales):
            raise ConfigurationError(f"Scale factors must be >= 1, got {self.scales}")
        if len(self.hidden) == 0 or any(w < 1 for w in self.hidden):
            raise ConfigurationError(f"Hidden widths must be positive, got {self.hidden}")
        if self.first_activation not in FIRST_ACTIVATIONS:
            raise ConfigurationError(f"Unknown first activation '{self.first_activation}'")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigurationError(f"Unknown hidden activation '{self.hidden_activation}'")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigurationError(f"Unknown aggregation '{self.aggregation}'")
        if not 0 < self.soften <= 1:
            raise ConfigurationError(f"Soften factor must lie in (0, 1], got {self.soften}")

    @property
    def n_subnets(self) -> int:
        """Number of subnetworks Q."""
        return len(self.scales)

    def layer_shapes(self):
        """Weight shapes (out, in) of one subnetwork, output layer included.

        The Fourier layer emits cos and sin of its preactivations, so the layer
        after it sees twice its unit count.
        """
        shapes = []
        width = self.dim_in
        for index, units in enumerate(self.hidden):
            shapes.append((units, width))
            width = 2 * units if index == 0 and self.first_activation == "fourier" else units
        shapes.append((self.dim_out, width))
        return shapes

    def skip_layers(self):
        """Indices of hidden layers that receive a one-step skip connection."""
        if not self.resnet_skips:
            return []
        shapes = self.layer_shapes()[:-1]
        return [index for index, (out, inp) in enumerate(shapes) if index > 0 and out == inp]

    def parameter_count(self) -> int:
        """Total number of trainable scalars, in closed form."""
        per_subnet = sum(out * inp + out for out, inp in self.layer_shapes())
        count = self.n_subnets * per_subnet
        if self.aggregation == "linear_head":
            count += self.n_subnets * self.dim_out * self.dim_out + self.dim_out
        return count

    def to_dict(self) -> dict:
        """Plain dict view, lists instead of tuples."""
        data = asdict(self)
        data["scales"] = list(self.scales)
        data["hidden"] = list(self.hidden)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        """Build a config from a dict as produced by `to_dict`."""
        try:
            return cls(**data)
        except TypeError as err:
            raise ConfigurationError(f"Invalid network configuration: {err}") from err

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the config."""
        return canonical_hash(self.to_dict())


class Parameters(Mapping):
    """Trainable parameters, an ordered mapping of name to array.

    Names follow 'layers.<l>.weight' with shape (Q, out, in),
    'layers.<l>.bias' with shape (Q, out) and, for the linear head,
    'head.weight' with shape (Q, dim_out, dim_out) and 'head.bias'.
    """

    def __init__(self, arrays: Mapping):
        self._arrays = {name: np.asarray(value, dtype=float) for name, value in arrays.items()}

    def __getitem__(self, name):
        return self._arrays[name]

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    @property
    def count(self) -> int:
        """Total number of scalars."""
        return int(sum(value.size for value in self._arrays.values()))

    def flatten(self) -> np.ndarray:
        """All parameters as one vector, in name order of the mapping."""
        return np.concatenate([value.ravel() for value in self._arrays.values()])

    def unflatten(self, vector) -> "Parameters":
        """Parameters with the same layout filled from a flat vector."""
        vector = np.asarray(vector, dtype=float)
        if vector.size != self.count:
            raise ConfigurationError(
                f"Vector of length {vector.size} does not match {self.count} parameters"
            )
        arrays, offset = {}, 0
        for name, value in self._arrays.items():
            arrays[name] = vector[offset : offset + value.size].reshape(value.shape)
            offset += value.size
        return Parameters(arrays)

    def map(self, fn: Callable) -> "Parameters":
        """Apply fn(name, array) to every entry."""
        return Parameters({name: fn(name, value) for name, value in self._arrays.items()})

    def copy(self) -> "Parameters":
        """Deep copy."""
        return self.map(lambda name, value: value.copy())

    def subnet(self, index: int) -> "Parameters":
        """The parameters of one subnetwork, keeping a leading axis of size 1."""
        return Parameters(
            {
                name: value[index : index + 1]
                for name, value in self._arrays.items()
                if name.startswith("layers")
            }
        )

    def norm(self) -> float:
        """Euclidean norm of the flattened parameters."""
        return float(np.linalg.norm(self.flatten()))

    def shapes(self) -> dict:
        """Mapping of name to shape."""
        return {name: list(value.shape) for name, value in self._arrays.items()}


@dataclass
class NetworkOutput:
    """Network output split into the state u and the flux components.

    Attributes:
        u: Values of u, shape (n,).
        flux: Tuple of d arrays, one per flux component (empty when the
            network only approximates u).
    """

    u: object
    flux: tuple = field(default_factory=tuple)


def sincos(z):
    """0.5 sin(z) + 0.5 cos(z)."""
    return ad.add(ad.mul(0.5, ad.sin(z)), ad.mul(0.5, ad.cos(z)))


ACTIVATIONS = {"sincos": sincos, "tanh": ad.tanh, "requ": ad.requ}
# Lipschitz constants; sincos is sin(z + pi/4) / sqrt(2).
ACTIVATION_LIPSCHITZ = {"sincos": np.sqrt(0.5), "tanh": 1.0, "requ": np.inf}


def activate(name: str, z):
    """Apply a named hidden activation."""
    try:
        return ACTIVATIONS[name](z)
    except KeyError as err:
        raise ConfigurationError(f"Unknown activation '{name}'") from err


def layer_name(index: int, kind: str) -> str:
    """Name of a layer parameter, e.g. 'layers.0.weight'."""
    return NAME_DELIMITER.join(["layers", str(index), kind])


class MscaleNetwork:
    """Multi-scale network: Q subnetworks fed a_i * x, outputs aggregated.

    Attributes:
        config (NetworkConfig): The architecture.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        self._scales = np.asarray(config.scales, dtype=float).reshape(-1, 1, 1)
        self._skips = set(config.skip_layers())

    @property
    def frozen(self):
        """Names of parameters excluded from training."""
        if self.config.train_first_layer:
            return ()
        return (layer_name(0, "weight"),)

    def init_parameters(self, seed: int) -> Parameters:
        """Glorot-uniform weights and zero biases, deterministic in the seed."""
        rng = np.random.Generator(np.random.Philox(seed))
        q = self.config.n_subnets
        arrays = {}
        for index, (out, inp) in enumerate(self.config.layer_shapes()):
            bound = np.sqrt(6.0 / (inp + out))
            arrays[layer_name(index, "weight")] = rng.uniform(-bound, bound, size=(q, out, inp))
            arrays[layer_name(index, "bias")] = np.zeros((q, out))
        if self.config.aggregation == "linear_head":
            m = self.config.dim_out
            bound = np.sqrt(6.0 / (q * m + m))
            arrays["head.weight"] = rng.uniform(-bound, bound, size=(q, m, m))
            arrays["head.bias"] = np.zeros(m)
        params = Parameters(arrays)
        logger.info(
            "Initialized %s subnetworks with %s parameters (seed %s)",
            q,
            params.count,
            seed,
        )
        return params

    def expected_shapes(self) -> dict:
        """Parameter name to expected array shape."""
        q = self.config.n_subnets
        shapes = {}
        for index, (out, inp) in enumerate(self.config.layer_shapes()):
            shapes[layer_name(index, "weight")] = (q, out, inp)
            shapes[layer_name(index, "bias")] = (q, out)
        if self.config.aggregation == "linear_head":
            m = self.config.dim_out
            shapes["head.weight"] = (q, m, m)
            shapes["head.bias"] = (m,)
        return shapes

    def check_parameters(self, params: Mapping):
        """Raise ConfigurationError if params do not match the config."""
        expected = self.expected_shapes()
        missing = [name for name in expected if name not in params]
        if missing:
            raise ConfigurationError(f"Missing parameters: {missing}")
        for name, shape in expected.items():
            actual = tuple(np.shape(ad.value_of(params[name])))
            if actual != shape:
                raise ConfigurationError(
                    f"Parameter '{name}' has shape {actual}, expected {shape}"
                )

    def _dense(self, params, index, h):
        weight = params[layer_name(index, "weight")]
        bias = params[layer_name(index, "bias")]
        return ad.add(ad.linear(h, weight), ad.expand_dims(bias, -2))

    def first_layer(self, params, x_scaled):
        """First hidden layer: Fourier feature map or a plain activation.

        The Fourier map is concat(cos(s z), sin(s z)) with z = W x + b.
        """
        z = self._dense(params, 0, x_scaled)
        if self.config.first_activation == "fourier":
            if self.config.soften != 1.0:
                z = ad.mul(self.config.soften, z)
            return ad.concatenate([ad.cos(z), ad.sin(z)], axis=-1)
        return activate(self.config.first_activation, z)

    def subnet_forward(self, params, x_scaled):
        """Run the stacked subnetworks on already scaled inputs.

        Args:
            params (Mapping): Layer parameters with a leading subnetwork axis.
            x_scaled: Inputs of shape (Q, n, d) (or (n, d), broadcast).

        Returns:
            Outputs of shape (Q, n, dim_out); the last layer is linear.
        """
        h = ad.check_finite(self.first_layer(params, x_scaled), layer=0)
        n_hidden = len(self.config.hidden)
        for index in range(1, n_hidden):
            z = activate(self.config.hidden_activation, self._dense(params, index, h))
            h = ad.add(z, h) if index in self._skips else z
            ad.check_finite(h, layer=index)
        return ad.check_finite(self._dense(params, n_hidden, h), layer=n_hidden)

    def aggregate(self, params, outputs):
        """Combine the (Q, n, dim_out) subnetwork outputs into (n, dim_out)."""
        if self.config.aggregation == "linear_head":
            mixed = ad.reduce_sum(ad.linear(outputs, params["head.weight"]), axis=0)
            return ad.add(mixed, params["head.bias"])
        weights = 1.0 / (self.config.n_subnets * self._scales)
        return ad.reduce_sum(ad.mul(weights, outputs), axis=0)

    def forward_raw(self, params, x):
        """Aggregated outputs of shape (n, dim_out) for points x of shape (n, d)."""
        self.check_parameters(params)
        if ad.value_of(x).shape[-1] != self.config.dim_in:
            raise ConfigurationError(
                f"Points of dimension {ad.value_of(x).shape[-1]} given to a network "
                f"with input dimension {self.config.dim_in}"
            )
        x_scaled = ad.mul(self._scales, x)
        return self.aggregate(params, self.subnet_forward(params, x_scaled))

    def forward(self, params, x) -> NetworkOutput:
        """Evaluate the network and split the result into (u, flux)."""
        return split_output(self.forward_raw(params, x))

    __call__ = forward

    def lipschitz_bound(self, params) -> float:
        """Upper bound on the Lipschitz constant of x -> output in 2-norms.

        Composes the spectral norms of the layers with the activation
        constants; a skip layer contributes 1 + c ||W||. The input stretch a_i
        cancels against the 1/a_i of the mean aggregation. Infinite when a
        ReQU layer is used, which is only locally Lipschitz.
        """
        config = self.config
        norms = [
            np.linalg.svd(np.asarray(params[layer_name(index, "weight")]), compute_uv=False)[:, 0]
            for index in range(len(config.hidden) + 1)
        ]
        if config.first_activation == "fourier":
            bound = config.soften * norms[0]
        else:
            bound = ACTIVATION_LIPSCHITZ[config.first_activation] * norms[0]
        for index in range(1, len(config.hidden)):
            layer = ACTIVATION_LIPSCHITZ[config.hidden_activation] * norms[index]
            bound = bound * (1.0 + layer if index in self._skips else layer)
        bound = bound * norms[-1]
        if config.aggregation == "linear_head":
            head = np.linalg.svd(np.asarray(params["head.weight"]), compute_uv=False)[:, 0]
            return float(np.sum(head * self._scales.ravel() * bound))
        return float(np.mean(bound))

    def lipschitz_ratios(
        self, params, box, n_probes: int = 1000, seed: int = 0, step: float = 1e-3
    ) -> np.ndarray:
        """Empirical |F(x + d) - F(x)| / |d| at random x in the box, |d| = step."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(box.lo, box.hi, size=(n_probes, self.config.dim_in))
        d = rng.normal(size=x.shape)
        d *= step / np.linalg.norm(d, axis=-1, keepdims=True)
        change = self.forward_raw(params, x + d) - self.forward_raw(params, x)
        return np.linalg.norm(change, axis=-1) / step

    def directional(self, params, x, direction: int, order: int = 1) -> ad.Directional:
        """Outputs and their exact derivatives along one input coordinate."""
        return ad.forward_directional(
            lambda z: self.forward_raw(params, z), x, direction, order
        )


def split_output(y) -> NetworkOutput:
    """Split (n, m) outputs into u = y[:, 0] and flux = y[:, 1:] by component."""
    width = ad.value_of(y).shape[-1]
    return NetworkOutput(
        u=ad.getitem(y, (Ellipsis, 0)),
        flux=tuple(ad.getitem(y, (Ellipsis, k)) for k in range(1, width)),
    )


class AnalyticModel:
    """A closed-form (u, flux) pair exposing the network interface.

    Used to plug exact solutions into the losses. The functions must be built
    from the primitives of `fmpinn.autodiff`, so they accept dual numbers.

    Attributes:
        u_fn (callable): u(x) for points of shape (n, d).
        flux_fn (callable, optional): Returns a tuple of d flux components.
    """

    frozen = ()

    def __init__(self, u_fn: Callable, flux_fn: Optional[Callable] = None):
        self.u_fn = u_fn
        self.flux_fn = flux_fn

    def forward(self, params, x) -> NetworkOutput:  # pylint: disable=unused-argument
        """Evaluate the closed-form functions; params are ignored."""
        flux = tuple(self.flux_fn(x)) if self.flux_fn is not None else ()
        return NetworkOutput(u=self.u_fn(x), flux=flux)

    __call__ = forward


def save_checkpoint(path: str, params: Parameters, config: NetworkConfig) -> str:
    """Write parameters to a flat binary checkpoint plus a JSON sidecar.

    Layout: magic, 32-byte config hash digest, uint64 count, then the
    little-endian float64 values in parameter order.

    Returns:
        str: Path of the JSON sidecar.
    """
    digest = bytes.fromhex(config.config_hash())
    payload = params.flatten().astype("<f8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(digest)
        f.write(struct.pack("<Q", payload.size))
        f.write(payload.tobytes())
    sidecar = f"{path}.json"
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump(
            {
                "config_hash": config.config_hash(),
                "network": config.to_dict(),
                "shapes": params.shapes(),
                "count": params.count,
            },
            f,
            indent=2,
        )
    logger.info("Checkpoint written to %s", path)
    return sidecar


def load_checkpoint(path: str):
    """Read a checkpoint written by `save_checkpoint`.

    Returns:
        tuple: (Parameters, NetworkConfig)

    Raises:
        ConfigurationError: If the file is not a checkpoint or does not match
            its sidecar.
    """
    sidecar = f"{path}.json"
    if not os.path.exists(sidecar):
        raise ConfigurationError(f"Checkpoint sidecar {sidecar} not found")
    with open(sidecar, "r", encoding="utf-8") as f:
        meta = json.load(f)
    config = NetworkConfig.from_dict(meta["network"])
    with open(path, "rb") as f:
        if f.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ConfigurationError(f"{path} is not an fmpinn checkpoint")
        digest = f.read(32).hex()
        (count,) = struct.unpack("<Q", f.read(8))
        payload = np.frombuffer(f.read(), dtype="<f8")
    if digest != config.config_hash():
        raise ConfigurationError("Checkpoint config hash does not match its sidecar")
    if payload.size != count:
        raise ConfigurationError(f"Checkpoint holds {payload.size} values, expected {count}")
    offset, arrays = 0, {}
    for name, shape in meta["shapes"].items():
        size = int(np.prod(shape))
        arrays[name] = payload[offset : offset + size].reshape(shape).astype(float)
        offset += size
    params = Parameters(arrays)
    MscaleNetwork(config).check_parameters(params)
    return params, config
