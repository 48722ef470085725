"""From-scratch NumPy implementation of slim-neck detector building blocks:
GSConv, VoV-GSCSP, pyramid pooling, attention modules, IoU-family losses,
a cost model and a small graph runner."""

from .errors import FormatError, GeometryError, ShapeError, SlimneckError, SpecError, WeightError

__version__ = "0.1.0"

__all__ = [
    "FormatError",
    "GeometryError",
    "ShapeError",
    "SlimneckError",
    "SpecError",
    "WeightError",
    "__version__",
]
