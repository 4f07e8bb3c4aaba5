"""Zero-range processes with condensation: thermodynamics, simulation and limit diagnostics."""
from .thermo import (CapacityError, CylinderObservable, JumpRate, JumpRateSpec, SeriesDivergence,
                     ThermoProfile, UnstableExtrapolation, extended_homologue, rate_function)
from .lattice import Lattice
from .ensembles import (InitialCondition, build_canonical_table, canonical_expectation_g, sample_canonical,
                        sample_initial)
from .sim import EventBudgetExceeded, JumpEvent, Trajectory, ZeroRangeProcess
from .empirical import (GeneralizedYoungMeasure, TestFunction, build_young, build_young_double_block,
                        build_young_macro, extract_fields)
from .pde import self_convergence, solve, weak_error
from .verify import DiscreteTestField, Experiment, ReplicaStats

__version__ = "0.1.0"
