"""Classes representing the typed entries of an experiment configuration."""

import logging
import re
from collections.abc import MutableMapping
from copy import copy

import validators

from .constants import NAME_DELIMITER
from .exceptions import ConversionError, ValidationError
from .helpers import bold

logger = logging.getLogger("fmpinn")


class Field:
    """
    Abstract base class representing a configuration entry.

    Attributes:
        name (str): The (full) name of the field, i.e. with section prefix.
        type (str): The type of the field, defined within the subclass.
        required (bool): Whether the field is required.
        default (any, optional): The default value for the field.
        help (str): One line describing the entry.
    """

    def __init__(self, name: str, **params):
        """Class representing a configuration entry.

        Args:
            name (str): Name of the field (with section prefix).
            params (dict, optional): Additional parameters for the field.

        Raises:
            ValueError: When the field type is not provided.
        """
        self._name = name

        if "type" not in params:
            raise ValueError(f"No type defined for field '{name}'")
        self.type = params.get("type")
        self.required = params.get("required", False)
        self.default = params.get("default", None)
        self.help = params.get("help", "")

    @property
    def name(self):
        """Get the name of the field."""
        return self._name

    @name.setter
    def name(self, value):
        self._name = value

    @property
    def basename(self):
        """Get the basename of the field name."""
        return self._name.split(NAME_DELIMITER)[-1]

    @property
    def namespace(self):
        """Get the namespace (the section) of the field name."""
        return NAME_DELIMITER.join(self._name.split(NAME_DELIMITER)[:-1])

    @namespace.setter
    def namespace(self, value):
        self._name = f"{value}{NAME_DELIMITER}{self.basename}" if value else self.basename

    @property
    def description(self):
        """Get description property of the field."""
        lines = [f"{bold('Type')}: {self.type}.", f"{bold('Required')}: {self.required}."]
        if self.default is not None:
            lines.append(f"{bold('Default')}: {self.default}.")
        if self.help:
            lines.insert(0, self.help)
        return "\n".join(lines)

    def validate(self, value, convert: bool = True, set_default: bool = True):
        """Validate the field value.

        Validation is a 3 step process: First the default value is applied
        if the value is empty, then the value is converted to its
        Python representation (if needed) and finally it is validated.

        Args:
            value: The field value to validate.
            convert (bool, optional): Whether to convert the value before
                validating it. Defaults to True.
            set_default (bool, optional): Whether to set the default value if
                the value is empty. Defaults to True.

        Returns:
            Any: The cleaned value, if valid, or the default value, if empty.

        Raises:
            ValidationError: If the value is invalid.
            ConversionError: If the value cannot be converted.
        """
        if set_default:
            value = self.apply_default(value)
        if convert:
            value = self.convert(value)
        self.assert_valid(value)
        return value

    def assert_valid(self, value):
        """Check if the field value is valid.

        Default implementation throws an error if the value is empty and required.

        Raises:
            ValidationError: If the value is invalid.
        """
        if self.required and self.is_empty(value):
            raise ValidationError(f"Value required for '{self.name}'", self.name)

    def apply_default(self, value):
        """Apply the field's default if the value is empty."""
        if self.is_empty(value) and self.default is not None:
            logger.debug("Applying default value to '%s': '%s'", self.name, self.default)
            return self.convert(self.default)
        return copy(value)

    def convert(self, value):
        """Convert a value (typically text from a config file) to its Python
        representation.

        Raises:
            ConversionError: If the value cannot be converted.
        """
        return copy(value)

    def is_empty(self, value):
        """Check if a value is empty."""
        return value is None or value == "" or value == []

    def __str__(self):
        return self.description


class TextField(Field):
    """Class representing a text entry, optionally restricted by a pattern."""

    def __init__(self, name: str, **params):
        params.setdefault("type", "text")
        super().__init__(name, **params)
        self.pattern = params.get("pattern", None) or None
        if self.pattern is not None and not self.pattern.startswith("^"):
            self.pattern = f"^{self.pattern}$"

    def assert_valid(self, value):
        super().assert_valid(value)
        if value is None:
            return
        if not isinstance(value, str):
            raise ValidationError(
                f"'{self.name}' must be a string, got value '{value}' instead",
                self.name,
                value,
            )
        if self.pattern is not None and not re.match(self.pattern, value):
            raise ValidationError(
                f"'{self.name}' does not match pattern '{self.pattern}', got value '{value}'",
                self.name,
                value,
            )

    def convert(self, value):
        return str(value).strip() if value is not None else value


class BooleanField(Field):
    """Class representing a boolean entry."""

    def __init__(self, name: str, **params):
        params.setdefault("type", "boolean")
        super().__init__(name, **params)

    def assert_valid(self, value):
        super().assert_valid(value)
        if not isinstance(value, bool) and value is not None:
            raise ValidationError(
                f"'{self.name}' must be a boolean, got value '{value}' instead",
                self.name,
                value,
            )

    def convert(self, value):
        if isinstance(value, bool) or value is None:
            return value
        if isinstance(value, str):
            value = value.strip().lower()
            if value in ["true", "yes", "y", "on", "1"]:
                return True
            if value in ["false", "no", "n", "off", "0"]:
                return False
        raise ConversionError(
            f"'{self.name}' cannot be converted to boolean, got value '{value}'",
            self.name,
            value,
        )


class NumericField(Field):
    """Class representing an integer or float entry with optional bounds.

    Attributes:
        minimum, maximum: Bounds, inclusive unless `exclusive` is set.
        exclusive (bool): Whether the bounds themselves are rejected.
    """

    def __init__(self, name: str, minimum=None, maximum=None, exclusive=False, **params):
        super().__init__(name, **params)
        if self.type not in ["integer", "float"]:
            raise NotImplementedError("NumericField only supports integer and float fields")
        self.numeric_type = int if self.type == "integer" else float
        self.minimum = self.numeric_type(minimum) if minimum is not None else None
        self.maximum = self.numeric_type(maximum) if maximum is not None else None
        self.exclusive = exclusive

    def assert_valid(self, value):
        super().assert_valid(value)
        if value is None:
            return
        if not isinstance(value, self.numeric_type) or isinstance(value, bool):
            raise ValidationError(f"'{self.name}' must be of type '{self.type}'", self.name, value)
        if self.minimum is None and self.maximum is None:
            return
        if value == 0:
            # validators.between rejects every falsy value
            inside = (self.minimum is None or self.minimum <= 0) and (
                self.maximum is None or self.maximum >= 0
            )
        else:
            inside = validators.between(value, min_val=self.minimum, max_val=self.maximum) is True
        if inside and self.exclusive:
            inside = value not in (self.minimum, self.maximum)
        if not inside:
            raise ValidationError(
                f"'{self.name}' must lie in {self.interval}, got {value}", self.name, value
            )

    @property
    def interval(self) -> str:
        """The accepted range in interval notation."""
        left = "(" if self.exclusive or self.minimum is None else "["
        right = ")" if self.exclusive or self.maximum is None else "]"
        lo = "-inf" if self.minimum is None else self.minimum
        hi = "inf" if self.maximum is None else self.maximum
        return f"{left}{lo}, {hi}{right}"

    def convert(self, value):
        if value is None or isinstance(value, bool):
            return value
        try:
            if self.numeric_type is int and isinstance(value, str):
                number = float(value)
                if not number.is_integer():
                    raise ValueError(value)
                return int(number)
            if self.numeric_type is int and isinstance(value, float):
                if not value.is_integer():
                    raise ValueError(value)
            return self.numeric_type(value)
        except (ValueError, TypeError, OverflowError) as err:
            raise ConversionError(
                f"'{self.name}' cannot be converted to type {self.type}, got value '{value}'",
                self.name,
                value,
            ) from err

    @property
    def description(self):
        """Modify description property for numeric field."""
        if self.minimum is None and self.maximum is None:
            return super().description
        return "\n".join([super().description, f"{self.type} in {self.interval}."])


class ChoiceField(Field):
    """Class representing a single choice among fixed values."""

    def __init__(self, name: str, choices=None, **params):
        """Init a choice field.

        Args:
            name (str): Name of the field.
            choices (sequence): The possible values.
            params (dict, optional): Additional parameters for the field.

        Raises:
            ValueError: When no choices are provided.
        """
        params.setdefault("type", "choice")
        super().__init__(name, **params)
        if not choices:
            raise ValueError(f"No 'choices' provided for choice field '{name}'")
        self.choices = [str(v) for v in choices]

    @property
    def description(self):
        return "\n".join(
            [super().description, "Choose one of: " + ", ".join(self.choices) + "."]
        )

    def assert_valid(self, value):
        super().assert_valid(value)
        if value is not None and value not in self.choices:
            raise ValidationError(
                f"'{self.name}' must be one of {self.choices}, got '{value}'",
                self.name,
                value,
            )

    def convert(self, value):
        if isinstance(value, (list, tuple)):
            raise ConversionError(f"Single value expected for '{self.name}'", self.name, value)
        return str(value).strip() if value is not None else None


class ListField(Field):
    """Class decorating a field to accept a list of its values.

    Text values are split on commas, so 'hidden = 30, 40, 30' gives three
    integers when the wrapped field is an integer field.
    """

    def __init__(self, field: Field, min_length: int = 1, **params):
        """Init a list field.

        Args:
            field (Field): The field of the items.
            min_length (int): Minimum number of items of a non-empty list.
            params (dict, optional): Additional parameters for the field.
        """
        self.field = field
        self.min_length = min_length
        params.setdefault("type", f"list of {field.type}")
        params.setdefault("help", field.help)
        super().__init__(field.name, **params)

    @Field.namespace.setter
    def namespace(self, value):
        Field.namespace.fset(self, value)
        self.field.namespace = value

    def assert_valid(self, value):
        super().assert_valid(value)
        if value is None:
            return
        if not isinstance(value, list):
            raise ValidationError(f"'{self.name}' must be a list", self.name, value)
        if len(value) < self.min_length:
            raise ValidationError(
                f"'{self.name}' needs at least {self.min_length} values, got {len(value)}",
                self.name,
                value,
            )
        for val in value:
            self.field.assert_valid(val)

    def convert(self, value):
        if value is None:
            return None
        if isinstance(value, str):
            value = value.strip().strip("[]()")
            if value == "":
                return None
            value = [part for part in value.split(",") if part.strip()]
        if isinstance(value, (list, tuple)):
            return [self.field.convert(val) for val in value]
        return [self.field.convert(value)]


class SectionField(Field):
    """Class representing a section of the configuration: a mapping of
    named subfields. Unknown keys are rejected.

    Attributes:
        fields (dict of Field): Subfields by basename.
    """

    def __init__(self, name: str, fields: list = None, **params):
        params.setdefault("type", "section")
        super().__init__(name, **params)
        self.fields = {field.basename: field for field in fields or []}
        if not self.fields:
            raise ValueError(f"Section '{self.name}' must have at least one field")
        for subfield in self.fields.values():
            subfield.namespace = self.name

    @property
    def required_fields(self):
        """Names of the required subfields."""
        return [key for key, subfield in self.fields.items() if subfield.required]

    @property
    def description(self):
        return "\n\n".join(
            [f"[{self.name}]"]
            + [f"\033[4m{sub.name}\033[0m\n{sub.description}" for sub in self.fields.values()]
        )

    def validate(self, value, convert: bool = True, set_default: bool = True):
        """Validate every subfield; missing subfields get their defaults."""
        value = {} if self.is_empty(value) else value
        if not isinstance(value, MutableMapping):
            raise ValidationError(f"'{self.name}' must be a section", self.name, value)
        unknown = [key for key in value if key not in self.fields]
        if unknown:
            raise ValidationError(
                f"Unknown field '{self.name}{NAME_DELIMITER}{unknown[0]}'",
                f"{self.name}{NAME_DELIMITER}{unknown[0]}",
                value[unknown[0]],
            )
        return {
            key: subfield.validate(value.get(key), convert=convert, set_default=set_default)
            for key, subfield in self.fields.items()
        }

    def convert(self, value):
        if self.is_empty(value):
            return {}
        if not isinstance(value, MutableMapping):
            raise ConversionError(f"Cannot convert section '{self.name}'", self.name, value)
        return {
            key: self.fields[key].convert(val) if key in self.fields else val
            for key, val in value.items()
        }
