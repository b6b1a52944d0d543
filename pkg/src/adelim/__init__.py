"""Time-dependent adiabatic elimination for driven multilevel atoms with
center-of-mass motion: momentum-ladder states, pulse envelopes, projector
series, effective Hamiltonians and Schrodinger propagation."""

from .elimination import (EffectiveHamiltonian, SIntegralSpec, ValidityReport,
                          commuting_limit_hamiltonian, effective_hamiltonian,
                          markov_hamiltonian, paulisch_hamiltonian,
                          projector_first_order, projector_order,
                          s_integral_closed, s_integral_quadrature,
                          sanz_hamiltonian, validity_report)
from .hilbert import (BlockOperator, InternalSpace, LadderTerm, MomentumLadder,
                      StateVector, conjugate_shift_check, find_commensuration,
                      plane_wave_shift)
from .models import (AtomConstants, LaserSpec, SystemSpec, bragg_system,
                     double_bragg_system, double_raman_system,
                     five_level_system, full_hamiltonian, load_atom_constants,
                     raman_system, rubidium87_preset, rubidium87_raman)
from .propagator import (IntegratorConfig, Observables, TrajectoryResult,
                         evolve, expm_evolve, matrix_evolve, observables,
                         relative_error)
from .pulses import PulseShape, calibrate_amplitude, evaluate, pulse_area

__version__ = "0.1.0"
