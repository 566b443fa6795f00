"""Constants for the fmpinn package."""

from fractions import Fraction

# Name delimiter to use when flattening parameter and config names.
NAME_DELIMITER = "."

# Default scale vector: the unit scale twice, then 2, 3, 4, 5, 10, 15, ..., 95, 100.
# 25 subnetworks in total.
DEFAULT_SCALES = tuple([1.0, 1.0, 2.0, 3.0, 4.0] + [float(a) for a in range(5, 101, 5)])

DEFAULT_HIDDEN = (30, 40, 30, 30, 30)

# Boundary penalty breakpoints as fractions of the epoch budget and the
# multipliers of gamma0 on each half-open interval.
GAMMA_BREAKPOINTS = (
    Fraction(1, 10),
    Fraction(1, 5),
    Fraction(1, 4),
    Fraction(1, 2),
    Fraction(3, 4),
)
GAMMA_MULTIPLIERS = (1, 10, 50, 100, 200, 500)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Checkpoint and grid field file magics.
CHECKPOINT_MAGIC = b"FMPINNP1"
GRID_MAGIC = b"FMPGRID1"

# Environment variable overriding the artifact output directory.
OUTPUT_DIR_ENV = "FMPINN_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_VALIDATION = 3
