"""Modal simulator and stability certificates for viscoelastic memory with switched delay feedback."""

__version__ = "0.1.0"

from .certificates import (
    CertificateReport,
    DecayCalibrator,
    DecayConstants,
    Envelope,
    ExponentialCertificate,
    calibrate_decay,
    certify,
    check_asymptotic,
    check_exponential,
    cycle_factor,
    decay_envelope,
    observability_factor,
)
from .dynamics import Trajectory, init_state, simulate, simulate_ode_oracle, step
from .energy import delay_energy, full_energy, standard_energy
from .model import (
    ANTI_DAMPING,
    DELAYED,
    Cycle,
    GeometricSchedule,
    HistoryTable,
    MemoryKernel,
    OperatorSpec,
    Scenario,
    Schedule,
    build_operator,
    coefficient_at,
    kernel_eval,
    validate_kernel,
    validate_scenario,
    validate_schedule,
)

__all__ = [
    "ANTI_DAMPING",
    "DELAYED",
    "CertificateReport",
    "Cycle",
    "DecayCalibrator",
    "DecayConstants",
    "Envelope",
    "ExponentialCertificate",
    "GeometricSchedule",
    "HistoryTable",
    "MemoryKernel",
    "OperatorSpec",
    "Scenario",
    "Schedule",
    "Trajectory",
    "build_operator",
    "calibrate_decay",
    "certify",
    "check_asymptotic",
    "check_exponential",
    "coefficient_at",
    "cycle_factor",
    "decay_envelope",
    "delay_energy",
    "full_energy",
    "init_state",
    "kernel_eval",
    "observability_factor",
    "simulate",
    "simulate_ode_oracle",
    "standard_energy",
    "step",
    "validate_kernel",
    "validate_scenario",
    "validate_schedule",
]
