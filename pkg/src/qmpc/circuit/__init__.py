"""Circuit graphs, generators and the end-to-end protocol."""

from .graph import CircuitGraph, CycleDetected, FanInViolation, Gate, ParseError, build_graph, load_circuit, parse_circuit
from .families import addition_tree, inner_product, layered, random_dag
from .protocol import MpcPlayer, MpcResult, Setup, audit_masks, effective_inputs, make_setup, run_mpc
