"""Mesh-free exterior calculus on R^n.

The exterior derivative of a sampled form is computed as the normalised flux
through the boundary of a small cube; forms are integrated over parametrised
blocks and chains; and the usual identities (Stokes, boundary of a boundary,
D twice, mean value) can be checked numerically.
"""

__version__ = "0.1.0"

from .chains import NAMED_CHAINS, Block, Chain, SingularBlock, boundary, chain_from_json, face, load_chain, register_map
from .deriv import (
    AspectRatioWarning,
    DerivConfig,
    RichardsonWarning,
    convergence_order,
    derivative_field,
    exterior_derivative_at,
    exterior_derivative_many,
    exterior_derivative_refined,
    flux_average,
)
from .errors import (
    AxisError,
    BracketingError,
    DegreeError,
    FluxFormError,
    FormSyntaxError,
    MissingDerivativeError,
    SamplingError,
    ShapeError,
    UnknownIdentifierError,
)
from .expression import FormDegreeError, FormExpression, RepeatedFactorWarning, format_form, parse_form
from .forms import AlternatingTensor, ApproximateMatchingWarning, DataCloud, FormField, apply_tensor, field_from_cloud, sample
from .integrate import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    boundary_integral,
    integrate,
    integrate_over_chain,
    integrate_over_singular_block,
    pullback_density,
    pullback_field,
)
from .multiindex import REPEATED, enumerate_indices, sort_with_sign
from .verify import (
    MvtResult,
    average_flux,
    boundary_of_boundary_integral,
    compatibility_check,
    d_squared,
    d_squared_residual,
    integrate_derivative,
    mvt_locate,
    stokes_residual,
    stokes_sides,
)
