"""Exception hierarchy shared across the package.

CLI exit-code mapping: ConfigError -> 1, DataError -> 2, NumericsError -> 3.
ContractError marks a violated call contract (bad arguments, missing
gradients) and maps to 2 when it reaches the CLI.
"""


class PlanetError(Exception):
    pass


class ConfigError(PlanetError):
    """Invalid configuration value or unknown config key."""


class DataError(PlanetError):
    """Malformed input file or inconsistent graph data."""


class NumericsError(PlanetError):
    """Non-finite values or a numerically failed run (NaN abort)."""


class ContractError(PlanetError):
    """An operation was called outside its contract."""
