"""Graph-network observer and controller for multi-agent target tracking."""

import json

import numpy as np

from . import _lbgnn

__all__ = [
    "build_topology",
    "pinned_laplacian",
    "interaction_matrix",
    "eigenvalues",
    "lambda_min_closed_form",
    "param_count",
    "forward",
    "jacobian",
    "gradcheck",
    "project",
    "certify_gains",
    "target_accel",
    "rms",
    "run_scenario",
]


def _dump(value):
    return value if isinstance(value, str) else json.dumps(value)


def build_topology(kind, n_agents=6):
    """Topology as a dict with 1-based edges and pins."""
    return json.loads(_lbgnn.build_topology(kind, n_agents))


def pinned_laplacian(topology):
    return _lbgnn.pinned_laplacian(_dump(topology))


def interaction_matrix(topology, state_dim=3):
    return _lbgnn.interaction_matrix(_dump(topology), state_dim)


def eigenvalues(matrix):
    return _lbgnn.eigenvalues(np.asarray(matrix, dtype=float))


lambda_min_closed_form = _lbgnn.lambda_min_closed_form


def param_count(arch, d_in, d_out, hidden):
    return _lbgnn.param_count(arch, d_in, d_out, list(hidden))


def forward(arch, d_in, d_out, hidden, topology, thetas, inputs):
    """Per-node outputs of a DNN, GNN or GAT ensemble."""
    return _lbgnn.forward(arch, d_in, d_out, list(hidden), _dump(topology), list(thetas), list(inputs))


def jacobian(arch, d_in, d_out, hidden, topology, thetas, inputs, i, z):
    """d(phi_i)/d(theta_z) with 0-based node indices."""
    return _lbgnn.jacobian(arch, d_in, d_out, list(hidden), _dump(topology), list(thetas), list(inputs), i, z)


def gradcheck(configs=50, seed=7):
    return json.loads(_lbgnn.gradcheck(configs, seed))


project = _lbgnn.project


def certify_gains(control=None, n_agents=6, lipschitz=0.0):
    """Gain conditions for the given gains; lipschitz <= 0 uses the sampled estimate."""
    return json.loads(_lbgnn.certify_gains(_dump(control or {}), n_agents, lipschitz))


target_accel = _lbgnn.target_accel
rms = _lbgnn.rms


def run_scenario(scenario, split=10.0, take_sqrt=False):
    """Runs one closed-loop simulation. Returns the report dict plus K x N norm arrays."""
    out = _lbgnn.run_scenario(_dump(scenario), split, take_sqrt)
    result = json.loads(out.pop("report"))
    result.update(out)
    return result
