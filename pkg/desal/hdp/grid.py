"""
Co-located PV and the LinDistFlow model of the radial feeder.

LinDistFlow drops line losses. Branch flows then equal the total load
downstream of each line. The squared voltage falls along every path by
2(rP + xQ) per line. Both relations are linear, so a whole horizon is
solved with two matrix products.
"""

from typing import Dict, List, NamedTuple, Optional

import networkx as nx
import numpy as np
from arxiv.base.globals import get_application_config as config
from arxiv.base import logging

from .domain import Line, NetworkModel, Violation

logger = logging.getLogger(__name__)

SQRT2 = float(np.sqrt(2.0))


class NetworkTopologyError(Exception):
    """The feeder is not a single radial tree rooted at the substation."""


class PowerFlow(NamedTuple):
    """LinDistFlow solution, per unit, one row per hour."""

    p_line: np.ndarray
    """Shape (T, lines), ordered as :attr:`NetworkModel.lines`."""
    q_line: np.ndarray
    vsq: np.ndarray
    """Shape (T, nodes), ordered as :attr:`NetworkModel.nodes`."""


def build_tree(net: NetworkModel) -> nx.DiGraph:
    """
    Orient the feeder away from the substation.

    Raises
    ------
    :class:`NetworkTopologyError`
        If the network is meshed or a node is disconnected.

    """
    graph = nx.Graph()
    graph.add_nodes_from(net.nodes)
    for k, line in enumerate(net.lines):
        graph.add_edge(line.from_node, line.to_node, index=k)
    if net.substation not in graph:
        raise NetworkTopologyError(f'Unknown substation {net.substation}')
    if not nx.is_connected(graph):
        stranded = set(net.nodes) \
            - nx.node_connected_component(graph, net.substation)
        raise NetworkTopologyError(
            f'Disconnected nodes: {sorted(stranded)}'
        )
    if graph.number_of_edges() != graph.number_of_nodes() - 1:
        raise NetworkTopologyError('Network is not radial')
    return nx.bfs_tree(graph, net.substation)


def incidence(net: NetworkModel) -> np.ndarray:
    """
    Downstream incidence matrix, shape (lines, nodes).

    Entry (l, j) is 1 when node ``j`` lies downstream of line ``l``. Rows
    sum the loads a line carries; columns mark the lines on the path from
    the substation to a node.
    """
    tree = build_tree(net)
    matrix = np.zeros((len(net.lines), len(net.nodes)))
    for k, line in enumerate(net.lines):
        child = line.to_node
        if tree.has_edge(line.to_node, line.from_node):
            child = line.from_node
        for node in nx.descendants(tree, child) | {child}:
            matrix[k, net.node_index(node)] = 1.0
    return matrix


def line_children(net: NetworkModel) -> List[int]:
    """Downstream node of each line."""
    tree = build_tree(net)
    return [line.from_node if tree.has_edge(line.to_node, line.from_node)
            else line.to_node for line in net.lines]


def lindistflow_solve(net: NetworkModel, p_load: np.ndarray,
                      q_load: np.ndarray) -> PowerFlow:
    """
    Solve LinDistFlow for nodal loads.

    Parameters
    ----------
    net : :class:`.NetworkModel`
    p_load, q_load : array
        Net consumption per node in per unit, shape (nodes,) or
        (T, nodes). The HDP's net power belongs in the column of
        :attr:`NetworkModel.hdp_node`; generation is negative load. The
        substation column is ignored.

    Returns
    -------
    :class:`PowerFlow`

    """
    p_load = np.atleast_2d(np.asarray(p_load, dtype=float)).copy()
    q_load = np.atleast_2d(np.asarray(q_load, dtype=float)).copy()
    sub = net.node_index(net.substation)
    p_load[:, sub] = 0.0
    q_load[:, sub] = 0.0
    paths = incidence(net)
    p_line = p_load @ paths.T
    q_line = q_load @ paths.T
    r = np.array([line.r for line in net.lines])
    x = np.array([line.x for line in net.lines])
    vsq = net.vsq_sub - 2 * (p_line * r + q_line * x) @ paths
    return PowerFlow(p_line=p_line, q_line=q_line, vsq=vsq)


def check_network_limits(flows: PowerFlow,
                         net: NetworkModel) -> List[Violation]:
    """
    Check line loading and voltage limits.

    Line limits are the octagon |P|, |Q| ≤ S_max and |P ± Q| ≤ √2·S_max.
    """
    tol = float(config().get('HDP_FLOW_TOL', 1e-6))
    found: List[Violation] = []
    s_max = np.array([line.s_max for line in net.lines])
    names = [f'{line.from_node}-{line.to_node}' for line in net.lines]
    for t in range(flows.p_line.shape[0]):
        p, q = flows.p_line[t], flows.q_line[t]
        for label, value, bound in (
                ('P', np.abs(p), s_max), ('Q', np.abs(q), s_max),
                ('P+Q', np.abs(p + q), SQRT2 * s_max),
                ('P-Q', np.abs(p - q), SQRT2 * s_max)):
            for k in np.nonzero(value > bound + tol)[0]:
                found.append(Violation(t, f'line {names[k]} {label}',
                                       float(value[k]), float(bound[k]),
                                       'max'))
        for j in np.nonzero(flows.vsq[t] < net.vsq_min - tol)[0]:
            found.append(Violation(t, f'node {net.nodes[j]} V²',
                                   float(flows.vsq[t, j]), net.vsq_min,
                                   'min'))
        for j in np.nonzero(flows.vsq[t] > net.vsq_max + tol)[0]:
            found.append(Violation(t, f'node {net.nodes[j]} V²',
                                   float(flows.vsq[t, j]), net.vsq_max,
                                   'max'))
    return found


def pv_check(p: float, q: float, forecast_t: float, rating: float,
             hour: Optional[int] = None) -> List[Violation]:
    """Check a PV dispatch against forecast, rating and the octagon."""
    tol = float(config().get('HDP_FLOW_TOL', 1e-6))
    found: List[Violation] = []
    checks = (
        ('PV power', p, 0.0, 'min'), ('PV power', p, forecast_t, 'max'),
        ('PV reactive', q, 0.0, 'min'), ('PV reactive', q, rating, 'max'),
        ('PV q-p', q, p - SQRT2 * rating, 'min'),
        ('PV q+p', q, -p + SQRT2 * rating, 'max'),
    )
    for name, value, bound, sense in checks:
        if (sense == 'min' and value < bound - tol) \
                or (sense == 'max' and value > bound + tol):
            found.append(Violation(hour, name, value, bound, sense))
    return found


def nodal_load(net: NetworkModel, base_p_kw: np.ndarray,
               base_q_kvar: np.ndarray, hdp_p_kw: np.ndarray,
               hdp_q_kvar: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Per-unit nodal loads with the HDP's net power at its node.

    Base loads are (T, nodes) in kW/kvar; HDP values are per hour.
    """
    j = net.node_index(net.hdp_node)
    p = np.array(base_p_kw, dtype=float)
    q = np.array(base_q_kvar, dtype=float)
    p[:, j] += np.asarray(hdp_p_kw, dtype=float)
    q[:, j] += np.asarray(hdp_q_kvar, dtype=float)
    return {'p': p / net.base_kva, 'q': q / net.base_kva}


def ohm_to_pu(r_ohm: float, x_ohm: float, base_kv: float,
              base_kva: float) -> tuple:
    """Convert a line impedance to per unit."""
    z_base = base_kv ** 2 * 1000.0 / base_kva
    return r_ohm / z_base, x_ohm / z_base


def make_line(from_node: int, to_node: int, r_ohm: float, x_ohm: float,
              s_max_kva: float, base_kv: float, base_kva: float) -> Line:
    r, x = ohm_to_pu(r_ohm, x_ohm, base_kv, base_kva)
    return Line(from_node, to_node, r, x, s_max_kva / base_kva)
