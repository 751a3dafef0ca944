"""Quick-count estimation engine: interval estimates of a 500-seat chamber
from stratified samples of polling stations, complete or partial.
"""

from .catalog import Catalog, ElectoralConstants
from .sampleframe import Frame, PartialSample, Station, StationReturn

__all__ = [
    "Catalog",
    "ElectoralConstants",
    "Frame",
    "PartialSample",
    "Station",
    "StationReturn",
]

__version__ = "0.1.0"
