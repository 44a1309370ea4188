"""Maximum hands-off control: L1-optimal solves, switching structure, packet codec, network loop."""

from .codec import bit_count, decode, encode, quantize
from .errors import (
    CapacityError,
    CodecError,
    ComplexityGuardError,
    DegenerateProgramError,
    DimensionError,
    DivergenceError,
    HandsOffError,
    InvalidInputError,
    NumericalFailure,
    PacketCorruptionError,
    PacketFormatError,
    PacketLengthError,
    ReservedCodeError,
    StructureViolationError,
    UnboundedSearchError,
)
from .model import (
    PlantModel,
    controllability_matrix,
    discretize_zoh,
    expm,
    is_controllable,
    plant_from_dict,
    propagate_segment,
    spectral_info,
)
from .netsim import ChannelModel, SimConfig, SimTrace, rng_draw, rng_stream, run_closed_loop, sweep_bits
from .oracle import OracleResult, oracle_bang_off_bang, terminal_state
from .solver import (
    AdmmSettings,
    ControlProblem,
    SolveResult,
    build_reachability,
    check_feasible,
    l0_measure,
    minimum_time,
    solve_l1,
)
from .structure import (
    ChannelSignal,
    StructureReport,
    SwitchingSignal,
    extract_switching,
    switching_bound,
    theoretical_bits,
    verify_structure,
)

__version__ = "0.1.0"
