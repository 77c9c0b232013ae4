"""Quorum-based asynchronous MPC simulator."""

from .field import DEFAULT_FIELD, MERSENNE_31, PrimeField
from .simnet import (
    BadFractionExceeded,
    Metrics,
    NonTermination,
    Simulation,
    bad_bound,
    make_behavior,
    make_scheduler,
    spawn,
)
from .agreement import BaSession, RbcSession
from .sharing import (
    AvssSession,
    DealFailed,
    DegreeTooHigh,
    OpenSession,
    ReconstructFailed,
    VerifiedDeal,
    avss_rec,
    reconstruct,
    shamir_share,
)
from .hwmpc import HwMpcSession, Program, majority_program, random_quorum_choice
from .quorum import QuorumTable, create_quorums
from .tcounter import AuditFailure, audit_trace, build_layout, run_counter
from .circuit.protocol import MpcResult, audit_masks, run_mpc
from .config import Config, load_config, parse_config
from .harness import audit, sweep

__version__ = "0.1.0"
