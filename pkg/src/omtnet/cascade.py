"""Cascaded fiber networks of transducer nodes.

Nodes are labelled 1..N in propagation order; label 0 stands for the
common fiber input. The output of node j drives every node i > j.
"""
from dataclasses import dataclass, field

import numpy as np

from . import numerics, om_node
from .errors import InstabilityError, PhysicsRegimeError

P = np.diag([0.0, 1.0, 0.0, 1.0]).astype(complex)
FIBER_INPUT = np.diag([0.0, 0.0, 0.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class NodeChain:
    nodes: tuple
    qubits: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if len(self.nodes) != len(self.qubits):
            raise ValueError("one qubit per node is required")
        if not self.nodes:
            raise ValueError("empty chain")

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class CascadedMECoefficients:
    gamma: np.ndarray      # (N,)
    delta0: np.ndarray     # (N,)
    delta_th: np.ndarray   # (N,)
    n_occ: np.ndarray      # (N,)
    J: np.ndarray          # (N, N), J[i, j] nonzero only for i > j
    D: np.ndarray          # (N, N), zero diagonal
    theta: np.ndarray      # (N,)
    meta: dict = field(default_factory=dict)

    @property
    def delta(self):
        return self.delta0 + self.delta_th

    @property
    def n_qubits(self):
        return len(self.gamma)


def _drift(n):
    m = om_node.drift_matrix(n)
    if not om_node.is_stable(m):
        raise InstabilityError("a node of the chain is unstable")
    return m


def single_node_transfer(n, omega):
    """C(w) = P - 2 kappa_f P A(w) P: how the fiber field bypasses one node."""
    a = om_node.response_matrix(_drift(n), omega)
    return P - 2.0 * n.base.kappa_f * (P @ a @ P)


def transmission(n, omega):
    """Transmission amplitude t = C_22 of one node."""
    return single_node_transfer(n, omega)[1, 1]


class _Responses:
    """Per-frequency cache of A^i and C^i for a chain."""

    def __init__(self, chain, omega):
        self.chain = chain
        self.a = [om_node.response_matrix(_drift(n), omega) for n in chain.nodes]
        self.c = [P - 2.0 * n.base.kappa_f * (P @ a @ P)
                  for n, a in zip(chain.nodes, self.a)]
        self.kf = [n.base.kappa_f for n in chain.nodes]

    def T(self, i, j):
        if j == 0:
            prod = np.eye(4, dtype=complex)
            for k in range(i - 1, 0, -1):
                prod = prod @ self.c[k - 1]
            return -np.sqrt(2.0 * self.kf[i - 1]) * (self.a[i - 1] @ prod)
        if i == j:
            return self.a[i - 1]
        if i < j:
            raise IndexError(f"no response from node {j} to upstream node {i}")
        prod = np.eye(4, dtype=complex)
        for k in range(i - 1, j, -1):
            prod = prod @ self.c[k - 1]
        return (-2.0 * np.sqrt(self.kf[i - 1] * self.kf[j - 1])
                * (self.a[i - 1] @ prod @ P @ self.a[j - 1]))

    def corr(self, i, j):
        """Spectral correlation matrix C^{ij}(w) of nodes i and j."""
        out = self.T(i, 0).conj() @ FIBER_INPUT @ self.T(j, 0).T
        for k in range(1, min(i, j) + 1):
            r = om_node.noise_matrix(self.chain.nodes[k - 1].base)
            out = out + self.T(i, k).conj() @ r @ self.T(j, k).T
        return out


def multinode_response(chain, i, j, omega):
    """Multinode response matrix from node j (0 = fiber input) to node i >= j."""
    n = len(chain)
    if not (0 <= j <= i <= n) or i == 0:
        raise IndexError(f"need 0 <= j <= i <= {n}, i >= 1; got i={i}, j={j}")
    return _Responses(chain, omega).T(i, j)


def spectral_correlation(chain, i, j, omega):
    return _Responses(chain, omega).corr(i, j)


# --- joint block-triangular description ---------------------------------

def joint_drift(chain):
    """Drift matrix of the whole chain in the basis (v^1, ..., v^N).

    Node i sees the fiber input plus sqrt(2 kappa_f^j) c_j of every
    upstream node j; this gives lower-triangular blocks 2 sqrt(k_i k_j) P.
    """
    n = len(chain)
    m = np.zeros((4 * n, 4 * n), dtype=complex)
    kf = [x.base.kappa_f for x in chain.nodes]
    for i, node in enumerate(chain.nodes):
        m[4 * i:4 * i + 4, 4 * i:4 * i + 4] = _drift(node)
        for j in range(i):
            m[4 * i:4 * i + 4, 4 * j:4 * j + 4] = 2.0 * np.sqrt(kf[i] * kf[j]) * P
    return m


def joint_noise(chain):
    """<R^+ R> of the joint chain, including the shared fiber vacuum."""
    n = len(chain)
    r = np.zeros((4 * n, 4 * n), dtype=complex)
    kf = [x.base.kappa_f for x in chain.nodes]
    for i, node in enumerate(chain.nodes):
        r[4 * i:4 * i + 4, 4 * i:4 * i + 4] = om_node.noise_matrix(node.base)
        for j in range(n):
            r[4 * i + 3, 4 * j + 3] += 2.0 * np.sqrt(kf[i] * kf[j])
    return r


def joint_moments(chain):
    """Steady <v_k^+ v_l> of the joint chain from one Lyapunov solve."""
    m = joint_drift(chain)
    return numerics.lyapunov_solve(m.conj(), joint_noise(chain))


def thermal_shifts(chain, omega=None):
    """Thermal frequency shifts -lam^2/2 Im T_ii(w_q) for every node."""
    m = joint_drift(chain)
    w = joint_moments(chain)
    out = np.zeros(len(chain))
    for i, q in enumerate(chain.qubits):
        wq = q.omega_q if omega is None else omega
        a = numerics.inverse(m - 1j * wq * np.eye(m.shape[0]))
        t = np.sum(a[4 * i, :].conj() * w[:, 4 * i])
        out[i] = -0.5 * q.lam ** 2 * t.imag
    return out


# --- master-equation coefficients ----------------------------------------

def _theta(chain, phis, J):
    """Absorbed phases; RWA closed form, else nearest-neighbour chaining."""
    n = len(chain)
    theta = np.zeros(n)
    rwa = all(x.base.zeta == 0 for x in chain.nodes)
    if rwa:
        acc = 0.0
        for i in range(n):
            theta[i] = phis[i] + acc
            acc += 2.0 * phis[i]
        return theta, "rwa_closed_form"
    theta[0] = phis[0]
    for i in range(1, n):
        theta[i] = theta[i - 1] + np.angle(J[i, i - 1])
    return theta, "nearest_neighbour_arg_J"


def me_coefficients(chain, include_thermal_shift=True):
    """Full coefficient set of the cascaded master equation.

    All correlators are evaluated at each qubit's own frequency; the
    couplings J_ij, D_ij use the frequency of qubit i.
    """
    n = len(chain)
    lam = np.array([q.lam for q in chain.qubits])
    gamma = np.zeros(n)
    delta0 = np.zeros(n)
    n_occ = np.zeros(n)
    J = np.zeros((n, n), dtype=complex)
    D = np.zeros((n, n), dtype=complex)
    phis = np.zeros(n)
    cache = {}

    def resp(w):
        if w not in cache:
            cache[w] = _Responses(chain, w)
        return cache[w]

    for i in range(1, n + 1):
        q = chain.qubits[i - 1]
        r = resp(q.omega_q)
        x_ii = r.T(i, i)[0, 0]
        gamma[i - 1] = 0.5 * q.lam ** 2 * x_ii.real
        delta0[i - 1] = 0.25 * q.lam ** 2 * x_ii.imag
        phis[i - 1] = np.angle(1j * r.a[i - 1][1, 0])
        y_ii = r.corr(i, i)[0, 0].real
        g = gamma[i - 1]
        n_occ[i - 1] = 0.0 if g == 0 else 0.25 * q.lam ** 2 * y_ii / g
        for j in range(1, n + 1):
            if j == i:
                continue
            lam2 = lam[i - 1] * lam[j - 1]
            if j < i:
                J[i - 1, j - 1] = 0.25 * lam2 * r.T(i, j)[0, 0]
            D[i - 1, j - 1] = 0.25 * lam2 * r.corr(i, j)[0, 0]
    theta, conv = _theta(chain, phis, J)
    dth = thermal_shifts(chain) if include_thermal_shift else np.zeros(n)
    meta = {"theta_convention": conv}
    return CascadedMECoefficients(gamma=gamma, delta0=delta0, delta_th=dth,
                                  n_occ=n_occ, J=J, D=D, theta=theta, meta=meta)


def cascaded_occupation(chain, i):
    """(N0_i, Nc_i): local occupation and spectrum of the fiber input at node i."""
    from . import interface

    node = chain.nodes[i - 1]
    q = chain.qubits[i - 1]
    n0 = interface.bath_occupation(node, q)
    r = _Responses(chain, q.omega_q)
    nc = 0.0 + 0j
    for a in range(1, i):
        for b in range(1, i):
            nc += 2.0 * np.sqrt(r.kf[a - 1] * r.kf[b - 1]) * r.corr(a, b)[1, 1]
    return n0, float(nc.real)


def cascaded_occupation_estimate(node, gamma_op):
    """Leading-order two-node estimate of the cascaded occupation."""
    p = node.base
    g2 = abs(node.G) ** 2
    k = p.kappa
    chi = 1.0 if abs(node.G) <= k / 2 else 0.5 * g2 / (g2 - 3.0 * k * k / 16.0)
    return (p.kappa_f / k) * (2 * p.thermal_rate / gamma_op
                              + (k / gamma_op) * g2 / p.omega_r ** 2) * chi


def thermal_jump_operators(chain):
    """Coefficients of the thermal jump operator of every node.

    Returns a list of (n, vec) with vec[i-1] the weight of sigma_i^- for
    i >= n (zero for i < n). Only exact for RWA nodes without intrinsic
    cavity loss.
    """
    for node in chain.nodes:
        if node.base.zeta != 0 or node.base.kappa_0 != 0:
            raise PhysicsRegimeError(
                "thermal jump operators need zeta = 0 and kappa_0 = 0")
    n = len(chain)
    out = []
    for k in range(1, n + 1):
        vec = np.zeros(n, dtype=complex)
        for i in range(k, n + 1):
            q = chain.qubits[i - 1]
            vec[i - 1] = 0.5 * q.lam * np.conj(_Responses(chain, q.omega_q).T(i, k)[0, 0])
        out.append((k, vec))
    return out


def back_solve_drives(chain_params, alphas):
    """Local laser drives that put the prescribed amplitudes alpha_i in the cavities.

    Cavity i sees its own drive plus the classical output of all upstream
    cavities, E_i^eff = E_i - 2 sum_{j<i} sqrt(kf_i kf_j) alpha_j.
    """
    drives = []
    for i, (p, a) in enumerate(zip(chain_params, alphas)):
        a = complex(a)
        shift = 2.0 * p.g0 ** 2 * abs(a) ** 2 / p.omega_r
        e_eff = a * (1j * p.delta_c + p.kappa - 1j * shift)
        drives.append(e_eff + _upstream(chain_params, alphas, i))
    return drives


def _upstream(chain_params, alphas, i):
    kf = chain_params[i].kappa_f
    return sum(2.0 * np.sqrt(kf * chain_params[j].kappa_f) * complex(alphas[j])
               for j in range(i))


def effective_drives(chain_params, drives, alphas):
    """Forward map from local drives to the drives each cavity actually sees."""
    return [complex(e) - _upstream(chain_params, alphas, i)
            for i, e in enumerate(drives)]
