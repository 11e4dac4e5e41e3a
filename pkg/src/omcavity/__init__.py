"""Circuit-mode, optomechanical-response and fitting toolkit for drum-coupled microwave cavities."""

from .errors import OmCavityError

__version__ = "0.1.0"

__all__ = ["OmCavityError", "__version__"]
