"""Experiment configuration: schema, file loading and overrides.

A configuration file is a flat INI file with the sections [problem],
[network], [training] and [output]::

    [problem]
    name = ex1_eps0.1

    [network]
    scales = 1, 2, 3, 4, 5, 10, 20, 30, 40, 50
    hidden = 30, 40, 30, 30, 30

    [training]
    epochs = 10000
    beta = 10
    seed = 7

Entries left out take their defaults; the interior and boundary point
counts and the hidden widths default per problem. The JSON summary of a run
holds the resolved configuration under "config" and loads back to the same
configuration hash.
"""

import configparser
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .constants import DEFAULT_SCALES, NAME_DELIMITER, OUTPUT_DIR_ENV
from .exceptions import ConfigurationError, ValidationError
from .expressions import load_problem_file
from .fields import (
    BooleanField,
    ChoiceField,
    ListField,
    NumericField,
    SectionField,
    TextField,
)
from .helpers import canonical_hash, flatten, merge, parse_override, unflatten
from .network import AGGREGATIONS, FIRST_ACTIVATIONS, HIDDEN_ACTIVATIONS, NetworkConfig
from .problems import ProblemDefinition, get_problem
from .trainer import METHODS, TrainConfig

logger = logging.getLogger("fmpinn")

DEFAULT_OUTPUT_DIR = "runs"

# Sections that do not change the computation and stay out of the hash.
UNHASHED_SECTIONS = ("output",)


class ConfigSchema:
    """The configuration schema: one SectionField per section.

    Attributes:
        root (dict of SectionField): Sections by name.
    """

    def __init__(self):
        self.root = {
            "problem": SectionField(
                "problem",
                fields=[
                    TextField(
                        "name",
                        required=True,
                        pattern=r"[A-Za-z][\w.+\-]*",
                        help="Catalog problem, e.g. ex1_eps0.1, or the name of a custom problem.",
                    ),
                    TextField("file", help="INI file defining a custom problem."),
                ],
            ),
            "network": SectionField(
                "network",
                fields=[
                    ListField(
                        NumericField("scales", type="float", minimum=1),
                        default=list(DEFAULT_SCALES),
                        help="Scale factor of every subnetwork.",
                    ),
                    ListField(
                        NumericField("hidden", type="integer", minimum=1),
                        help="Hidden widths; defaults per problem.",
                    ),
                    ChoiceField("first_activation", choices=FIRST_ACTIVATIONS, default="fourier"),
                    ChoiceField("hidden_activation", choices=HIDDEN_ACTIVATIONS, default="sincos"),
                    NumericField("soften", type="float", minimum=0, maximum=1, default=1.0),
                    ChoiceField("aggregation", choices=AGGREGATIONS, default="inverse_scale_mean"),
                    BooleanField("resnet_skips", default=True),
                    BooleanField("train_first_layer", default=True),
                ],
            ),
            "training": SectionField(
                "training",
                fields=[
                    NumericField("epochs", type="integer", minimum=0, default=50000),
                    NumericField("lr0", type="float", minimum=0, exclusive=True, default=0.01),
                    NumericField(
                        "lr_decay",
                        type="float",
                        minimum=0,
                        maximum=1,
                        exclusive=True,
                        default=0.025,
                    ),
                    NumericField("decay_every", type="integer", minimum=1, default=100),
                    NumericField("eval_every", type="integer", minimum=1, default=1000),
                    NumericField("n_interior", type="integer", minimum=1),
                    NumericField("n_boundary", type="integer", minimum=1),
                    NumericField("beta", type="float", minimum=0, exclusive=True, default=10.0),
                    NumericField("gamma0", type="float", minimum=0, exclusive=True, default=10.0),
                    NumericField("seed", type="integer", minimum=0, default=0),
                    ChoiceField("method", choices=METHODS, default="fmpinn"),
                    BooleanField("fixed_batch", default=False),
                    BooleanField("checkpoint_every_eval", default=False),
                ],
            ),
            "output": SectionField(
                "output",
                fields=[
                    TextField("dir", help=f"Artifact directory; ${OUTPUT_DIR_ENV} overrides."),
                    BooleanField("pointwise", default=True),
                ],
            ),
        }

    def field(self, key: str):
        """The field of a flattened key such as 'training.beta'."""
        section, _, name = key.partition(NAME_DELIMITER)
        if section not in self.root or name not in self.root[section].fields:
            raise ValidationError(f"Unknown field '{key}'", key)
        return self.root[section].fields[name]

    def validate(self, values: Mapping) -> dict:
        """Convert and validate a nested dict of raw values.

        Raises:
            ValidationError: If a value is invalid or a key is unknown.
            ConversionError: If a value cannot be converted.
        """
        unknown = [section for section in values if section not in self.root]
        if unknown:
            raise ValidationError(f"Unknown section '{unknown[0]}'", unknown[0])
        return {
            name: section.validate(values.get(name))
            for name, section in self.root.items()
        }

    @property
    def description(self):
        return "\n\n".join(section.description for section in self.root.values())


def read_config_file(path: str) -> dict:
    """Raw nested values of an INI file or a JSON file.

    A JSON file may be a plain nested config or a run summary holding one
    under "config".
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"Configuration file {path} not found")
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as err:
                raise ConfigurationError(f"Cannot decode {path}: {err}") from err
        return dict(data.get("config", data))
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise ConfigurationError(f"Cannot parse {path}: {err}") from err
    return {section: dict(parser[section]) for section in parser.sections()}


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment.

    Attributes:
        problem_name (str): Catalog name or custom problem name.
        problem_file (str, optional): Custom problem file.
        network (NetworkConfig): Architecture, dimensions included.
        training (TrainConfig): Optimization settings.
        output (dict): Output options ('dir', 'pointwise').
    """

    problem_name: str
    problem_file: Optional[str]
    network: NetworkConfig
    training: TrainConfig
    output: dict = field(default_factory=dict, compare=False)

    def problem(self) -> ProblemDefinition:
        """Resolve the problem definition."""
        return resolve_problem(self.problem_name, self.problem_file)

    def to_dict(self) -> dict:
        """Nested echo with every value resolved."""
        network = self.network.to_dict()
        network.pop("dim_in")
        network.pop("dim_out")
        return {
            "problem": {"name": self.problem_name, "file": self.problem_file},
            "network": network,
            "training": self.training.to_dict(),
            "output": dict(self.output),
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical echo, output options excluded."""
        echo = {k: v for k, v in self.to_dict().items() if k not in UNHASHED_SECTIONS}
        return canonical_hash(echo)

    def output_dir(self, environ: Optional[Mapping[str, str]] = None) -> str:
        """Artifact directory: $FMPINN_OUTPUT_DIR, else [output] dir, else a
        directory named after problem, method and seed."""
        environ = os.environ if environ is None else environ
        run = f"{self.problem_name}_{self.training.method}_seed{self.training.seed}"
        if environ.get(OUTPUT_DIR_ENV):
            return os.path.join(environ[OUTPUT_DIR_ENV], run)
        if self.output.get("dir"):
            return self.output["dir"]
        return os.path.join(DEFAULT_OUTPUT_DIR, run)

    def with_override(self, key: str, value) -> "ExperimentConfig":
        """A copy with one flattened entry changed, revalidated."""
        return build_config(self.to_dict(), overrides={key: value})


def resolve_problem(name: str, path: Optional[str] = None) -> ProblemDefinition:
    """Catalog problem by name, or the custom problem of a file."""
    if path:
        problem = load_problem_file(path)
        if name and name != problem.name:
            logger.warning("Problem file %s names '%s', renamed to '%s'", path, problem.name, name)
            problem = replace(problem, name=name)
        return problem
    return get_problem(name)


def build_config(
    values: Mapping,
    overrides: Optional[Mapping[str, object]] = None,
    schema: Optional[ConfigSchema] = None,
) -> ExperimentConfig:
    """Validate raw values plus flattened overrides into an ExperimentConfig.

    Args:
        values (dict): Nested raw values, e.g. from `read_config_file`.
        overrides (dict, optional): Flattened key -> raw value; wins over values.
        schema (ConfigSchema, optional): Schema to use.

    Raises:
        ValidationError, ConversionError: For invalid entries, naming the field.
        ConfigurationError: If the problem does not resolve or settings clash.
    """
    schema = schema or ConfigSchema()
    overrides = dict(overrides or {})
    for key in overrides:
        schema.field(key)
    raw = merge(dict(values or {}), unflatten(overrides.items()))
    clean = schema.validate(raw)

    problem = resolve_problem(clean["problem"]["name"], clean["problem"]["file"])
    network = dict(clean["network"])
    training = dict(clean["training"])
    network["hidden"] = tuple(network["hidden"] or problem.hidden)
    network["scales"] = tuple(network["scales"])
    training["n_interior"] = training["n_interior"] or problem.n_interior
    training["n_boundary"] = training["n_boundary"] or problem.n_boundary
    dim_out = problem.dim + 1 if training["method"] == "fmpinn" else 1
    config = ExperimentConfig(
        problem_name=clean["problem"]["name"],
        problem_file=clean["problem"]["file"],
        network=NetworkConfig(dim_in=problem.dim, dim_out=dim_out, **network),
        training=TrainConfig(**training),
        output={key: value for key, value in clean["output"].items() if value is not None},
    )
    logger.debug("Resolved configuration %s", dict(flatten(config.to_dict())))
    return config


def load_config(
    path: Optional[str] = None,
    overrides: Sequence[str] = (),
    flags: Optional[Mapping[str, object]] = None,
) -> ExperimentConfig:
    """Load a config file and apply '--set section.key=value' overrides and
    flag values (flattened key -> value, None meaning unset).

    Flags win over '--set' overrides, which win over the file.
    """
    values = read_config_file(path) if path else {}
    merged = dict(parse_override(text) for text in overrides)
    merged.update({key: value for key, value in (flags or {}).items() if value is not None})
    return build_config(values, merged)
