"""Effective N-qubit master equations: assembly, integration, fidelities.

Conventions: single-qubit basis (|0>, |1>) with |1> excited, sigma^- =
|0><1|, sigma_z = diag(-1, 1). Qubit 1 is the most significant factor of
the tensor product. Density matrices are vectorised row-major, so that
vec(A rho B) = (A kron B^T) vec(rho).

The generator has the pairwise form

    d mu/dt = sum_i { -i delta_i/2 [sz_i, mu]
                      + gamma_i/2 (n_i + 1) D[s_i^-] + gamma_i/2 n_i D[s_i^+]
                      + 1/(4 T2_i) D[sz_i] }
              - sum_{i != j} ( J_ij [s_i^+, s_j^- mu] + J_ij^* [mu s_j^+, s_i^-] )
              + sum_{i != j} D_ij [[s_j^+, mu], s_i^-]

with D[a] mu = 2 a mu a^+ - a^+ a mu - mu a^+ a.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import numerics
from .errors import StepSizeError

MAX_QUBITS = 4

SM = np.array([[0, 1], [0, 0]], dtype=complex)
SP = SM.conj().T
SZ = np.diag([-1.0, 1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class PairwiseCoefficients:
    """Coefficient set of the pairwise master equation (see module doc)."""
    gamma: np.ndarray
    delta: np.ndarray
    n_occ: np.ndarray
    J: np.ndarray
    D: np.ndarray

    @property
    def n_qubits(self):
        return len(self.gamma)


def site_op(op, i, n):
    """Embed a single-qubit operator acting on qubit i (0-based) of n."""
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        out = np.kron(out, op if k == i else I2)
    return out


def _left(a):
    return np.kron(a, np.eye(a.shape[0]))


def _right(b):
    return np.kron(np.eye(b.shape[0]), b.T)


def commutator_super(h):
    """Superoperator of mu -> -i [h, mu]."""
    return -1j * (_left(h) - _right(h))


def dissipator_super(a):
    """Superoperator of D[a] mu = 2 a mu a^+ - a^+ a mu - mu a^+ a."""
    ad = a.conj().T
    ada = ad @ a
    return 2.0 * _left(a) @ _right(ad) - _left(ada) - _right(ada)


def _check_n(n):
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"1 <= n_qubits <= {MAX_QUBITS} required, got {n}")


@lru_cache(maxsize=None)
def _basis(n):
    """Superoperator building blocks; cached per qubit number."""
    _check_n(n)
    sm = [site_op(SM, i, n) for i in range(n)]
    sp = [site_op(SP, i, n) for i in range(n)]
    sz = [site_op(SZ, i, n) for i in range(n)]
    blocks = {
        "shift": np.array([-0.5j * (_left(z) - _right(z)) for z in sz]),
        "down": np.array([0.5 * dissipator_super(s) for s in sm]),
        "up": np.array([0.5 * dissipator_super(s) for s in sp]),
        "deph": np.array([0.25 * dissipator_super(z) for z in sz]),
    }
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    cas_a, cas_b, diff = [], [], []
    for i, j in pairs:
        # A = [s_i^+, s_j^- mu], B = [mu s_j^+, s_i^-]
        a = _left(sp[i] @ sm[j]) - _left(sm[j]) @ _right(sp[i])
        b = _right(sp[j] @ sm[i]) - _left(sm[i]) @ _right(sp[j])
        cas_a.append(a)
        cas_b.append(b)
        # [[s_j^+, mu], s_i^-]
        c = (_left(sp[j]) @ _right(sm[i]) - _right(sp[j] @ sm[i])
             - _left(sm[i] @ sp[j]) + _left(sm[i]) @ _right(sp[j]))
        diff.append(c)
    blocks["cas_a"] = np.array(cas_a) if pairs else np.zeros((0, 4 ** n, 4 ** n))
    blocks["cas_b"] = np.array(cas_b) if pairs else np.zeros((0, 4 ** n, 4 ** n))
    blocks["diff"] = np.array(diff) if pairs else np.zeros((0, 4 ** n, 4 ** n))
    return pairs, blocks


def build_generator(coeffs, dephasing=None):
    """Liouvillian (4^N x 4^N) of a coefficient set.

    ``coeffs`` fields may carry a leading time axis; the result then has
    shape (n_t, 4^N, 4^N). ``dephasing`` holds 1/T2 per qubit.
    """
    gamma = np.asarray(coeffs.gamma, dtype=float)
    n = gamma.shape[-1]
    _check_n(n)
    batched = gamma.ndim == 2
    g = gamma if batched else gamma[None]
    nt = g.shape[0]

    def per_site(x):
        x = np.asarray(x, dtype=complex)
        return np.broadcast_to(x if x.ndim == 2 else x[None], (nt, n))

    def per_pair(x):
        x = np.asarray(x, dtype=complex)
        return np.broadcast_to(x if x.ndim == 3 else x[None], (nt, n, n))

    delta = per_site(coeffs.delta)
    nocc = per_site(coeffs.n_occ)
    J = per_pair(coeffs.J)
    D = per_pair(coeffs.D)
    deph = per_site(np.zeros(n) if dephasing is None else dephasing)
    pairs, b = _basis(n)
    L = (np.einsum("ti,iab->tab", delta, b["shift"])
         + np.einsum("ti,iab->tab", g * (nocc + 1.0), b["down"])
         + np.einsum("ti,iab->tab", g * nocc, b["up"])
         + np.einsum("ti,iab->tab", deph, b["deph"]))
    if pairs:
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        jp = J[:, ii, jj]
        L = L - np.einsum("tp,pab->tab", jp, b["cas_a"])
        L = L - np.einsum("tp,pab->tab", jp.conj(), b["cas_b"])
        L = L + np.einsum("tp,pab->tab", D[:, ii, jj], b["diff"])
    return L if batched else L[0]


def lindblad_generator(h, jumps, n):
    """Liouvillian of -i[h, mu] + sum_k D[L_k]/2 for explicit operators."""
    L = commutator_super(h)
    for op in jumps:
        L = L + 0.5 * dissipator_super(op)
    return L


def vec(rho):
    return np.asarray(rho, dtype=complex).reshape(-1)


def unvec(v):
    d = int(round(np.sqrt(v.shape[-1])))
    return v.reshape(v.shape[:-1] + (d, d))


def max_rate(gens):
    """Infinity-norm bound on the fastest rate of a generator schedule."""
    g = np.asarray(gens)
    return float(np.abs(g).sum(axis=-1).max())


def evolve(mu0, gens, dt, check_step=True, backend=None):
    """Integrate d mu/dt = L(t) mu with L sampled on a uniform grid.

    ``mu0`` is one density matrix (d, d) or a batch (m, d, d) of operators
    evolved together. Returns the trajectory, shape (n_t,) + mu0.shape.
    Returned states are re-symmetrised when the input is Hermitian.
    """
    gens = np.asarray(gens, dtype=complex)
    if gens.ndim == 2:
        raise ValueError("gens must have a time axis; use np.repeat for constants")
    rate = max_rate(gens)
    if check_step and dt * 50.0 * rate > 1.0 + 1e-12:
        raise StepSizeError(f"dt = {dt:.3g} too coarse for rate {rate:.3g}; "
                            f"need dt <= {1 / (50 * rate):.3g}")
    mu0 = np.asarray(mu0, dtype=complex)
    single = mu0.ndim == 2
    batch = mu0[None] if single else mu0
    y0 = batch.reshape(batch.shape[0], -1).T
    ys = numerics.rk4_linear(gens, y0, dt, backend=backend)
    traj = np.transpose(ys, (0, 2, 1)).reshape((gens.shape[0],) + batch.shape)
    herm = np.allclose(batch, np.conj(np.swapaxes(batch, -1, -2)))
    if herm:
        traj = 0.5 * (traj + np.conj(np.swapaxes(traj, -1, -2)))
    return traj[:, 0] if single else traj


def partial_trace(rho, keep, n):
    """Reduced state of the qubits listed in ``keep`` (0-based)."""
    rho = np.asarray(rho).reshape((2,) * (2 * n))
    drop = [k for k in range(n) if k not in keep]
    for count, k in enumerate(sorted(drop, reverse=True)):
        m = n - count
        rho = np.trace(rho, axis1=k, axis2=k + m)
    d = 2 ** len(keep)
    return rho.reshape(d, d)


CARDINAL_STATES = [
    np.array([1, 0], dtype=complex),
    np.array([0, 1], dtype=complex),
    np.array([1, 1], dtype=complex) / np.sqrt(2),
    np.array([1, -1], dtype=complex) / np.sqrt(2),
    np.array([1, 1j], dtype=complex) / np.sqrt(2),
    np.array([1, -1j], dtype=complex) / np.sqrt(2),
]


def apply_channel(outputs, psi):
    """Output of a linear single-qubit map given on the |a><b| basis.

    ``outputs[a, b]`` is the image of |a><b|, shape (2, 2, d, d).
    """
    rho_in = np.outer(psi, psi.conj())
    return np.einsum("ab,abij->ij", rho_in, outputs)


def average_fidelity(outputs, target_unitary=None):
    """Uniform average of <U psi| E(psi) |U psi> over the Bloch sphere.

    The six cardinal states form a 2-design, so their mean is exact.
    """
    u = I2 if target_unitary is None else np.asarray(target_unitary)
    total = 0.0
    for psi in CARDINAL_STATES:
        tgt = u @ psi
        total += np.real(tgt.conj() @ apply_channel(outputs, psi) @ tgt)
    return total / len(CARDINAL_STATES)


def average_transfer_fidelity(outputs, phase):
    """Average fidelity against the target alpha|0> - beta e^{i phase}|1>."""
    u = np.diag([1.0, -np.exp(1j * phase)])
    return average_fidelity(outputs, u)


def entanglement_fidelity(outputs, target_unitary=None):
    """<Phi| (id x U^+ E U)(|Phi><Phi|) |Phi> for the maximally entangled Phi."""
    u = I2 if target_unitary is None else np.asarray(target_unitary)
    total = 0j
    for a in range(2):
        for b in range(2):
            total += (u.conj().T @ outputs[a, b] @ u)[a, b]
    return float(total.real) / 4.0


BELL_TARGET = np.array([0, 1, -1j, 0], dtype=complex) / np.sqrt(2)


def bell_fidelity(rho):
    """Overlap with (|01> - i|10>)/sqrt(2)."""
    rho = np.asarray(rho)
    return float(np.real(BELL_TARGET.conj() @ rho @ BELL_TARGET))


def basis_state(bits):
    """Density matrix of a computational basis state, e.g. (0, 1) = |01>."""
    n = len(bits)
    idx = 0
    for b in bits:
        idx = 2 * idx + int(b)
    rho = np.zeros((2 ** n, 2 ** n), dtype=complex)
    rho[idx, idx] = 1.0
    return rho


# --- adapters for the on-chip master equations ---------------------------

def collective_coefficients(n, J_N, delta, gamma_coll, n_coll, gamma_loc, n_loc):
    """Pairwise form of the collective + local on-chip master equation.

    -i[J_N S^+S^-, mu] - i delta/2 [S^z, mu] + collective and local
    decay/heating channels with jump operators S^-, S^+, s_i^-, s_i^+.
    """
    pair = 1j * J_N + 0.5 * gamma_coll
    J = np.full((n, n), pair, dtype=complex)
    D = np.full((n, n), gamma_coll * n_coll, dtype=complex)
    np.fill_diagonal(J, 0.0)
    np.fill_diagonal(D, 0.0)
    g = gamma_coll + gamma_loc
    gn = gamma_coll * n_coll + gamma_loc * n_loc
    n_occ = gn / g if g > 0 else 0.0
    return PairwiseCoefficients(gamma=np.full(n, g), delta=np.full(n, delta + J_N),
                                n_occ=np.full(n, n_occ), J=J, D=D)


def two_node_coefficients(J, delta_prime, gamma_s, n_s, gamma_a, n_a):
    """Pairwise form of the two-node symmetric/antisymmetric master equation."""
    g = 0.5 * (gamma_s + gamma_a)
    gn = 0.5 * (gamma_s * n_s + gamma_a * n_a)
    pair = 1j * J + 0.25 * (gamma_s - gamma_a)
    diff = 0.5 * (gamma_s * n_s - gamma_a * n_a)
    Jm = np.array([[0, pair], [pair, 0]], dtype=complex)
    Dm = np.array([[0, diff], [diff, 0]], dtype=complex)
    n_occ = gn / g if g > 0 else 0.0
    return PairwiseCoefficients(gamma=np.full(2, g), delta=np.full(2, delta_prime),
                                n_occ=np.full(2, n_occ), J=Jm, D=Dm)
