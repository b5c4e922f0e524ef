"""csflow: multicomponent compressible finite-volume solver with coupled and
component-split implicit pseudo-time integration."""

from .mixture import (  # noqa: F401
    CellPrimitive,
    MixtureModel,
    SpeciesData,
    cons_to_prim,
    load_mixture,
    make_primitive,
    mixture_gas_constant,
    pressure,
    prim_to_cons,
    temperature_from_energy,
    transport,
)
from .chemistry import (  # noqa: F401
    Mechanism,
    Reaction,
    load_mechanism,
    production_rates,
    source_jacobian,
    source_spectral_radius,
)
from .grid import (  # noqa: F401
    StructuredGrid,
    compute_metrics,
    generate_box,
    generate_cylinder_ogrid,
)
from .boundary import BoundaryCondition, apply_boundary_conditions  # noqa: F401
from .plot3d import read_plot3d, write_plot3d  # noqa: F401

__version__ = "0.1.0"
