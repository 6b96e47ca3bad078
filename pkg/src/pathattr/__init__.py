"""Path attributions (IG, guided IG, blur IG) with important-direction integration.

Typical use::

    from pathattr import attribute, models
    m = models.ToyModel(models.load_weights("weights.json"))
    a = attribute(m, c=0, x=image, method="ig", idgi=True, steps=200)
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ArtifactIOError,
    DegenerateInputError,
    DegenerateStepError,
    FormatError,
    InvalidParameterError,
    PathAttrError,
    TrainingFailure,
)
from .integrators import (  # noqa: E402
    AttributionMap,
    attribute,
    attribute_pair,
    idgi_integrate,
    load_attribution,
    riemann_integrate,
    save_attribution,
)

__all__ = [
    "ArtifactIOError",
    "AttributionMap",
    "DegenerateInputError",
    "DegenerateStepError",
    "FormatError",
    "InvalidParameterError",
    "PathAttrError",
    "TrainingFailure",
    "__version__",
    "attribute",
    "attribute_pair",
    "idgi_integrate",
    "load_attribution",
    "riemann_integrate",
    "save_attribution",
]
