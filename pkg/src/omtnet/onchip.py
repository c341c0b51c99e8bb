"""Qubits coupled through a single-mode bus cavity shared by identical nodes.

Only the centre-of-mass cavity mode couples to the bus, so the
oscillator network splits into one 6x6 set (b1, c1, d0 and conjugates)
and N-1 identical 4x4 sets that look like a bare node with kappa -> kappa_0.
For two nodes these are the symmetric (s) and antisymmetric (a) sets.
"""
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics, om_node
from . import qubit_dynamics as qd
from .errors import (InstabilityError, ProximityError, ZeroCouplingError)

SYMMETRIES = ("s", "a")
BAND = 3.0          # excluded band half-width in units of the mode coupling
FSR_FACTOR = 10.0   # bus free spectral range must exceed this many times every scale
RESOLVED_FACTOR = 10.0


@dataclass(frozen=True)
class OnChipParams:
    """Identical nodes on a bus; frequencies in units of omega_r by convention.

    K = sqrt(N) h is the centre-of-mass cavity to bus coupling; it is held
    fixed when N changes (the bus is extended with every node).
    """
    G: float
    K: float
    lam: float
    omega_r: float = 1.0
    kappa_0: float = 0.0
    kappa_0f: float = 0.0
    gamma_m: float = 0.0
    n_m: float = 0.0
    zeta: int = 0
    n_nodes: int = 2
    delta_c: float = None
    delta_c0: float = None
    fsr: float = None

    def __post_init__(self):
        if not self.omega_r > 0:
            raise ValueError("omega_r must be positive")
        for name in ("G", "K", "lam", "kappa_0", "kappa_0f", "gamma_m", "n_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.zeta not in (0, 1):
            raise ValueError("zeta must be 0 or 1")
        if self.n_nodes < 2:
            raise ValueError("a bus network needs at least two nodes")
        if self.delta_c is None:
            object.__setattr__(self, "delta_c", self.omega_r)
        if self.delta_c0 is None:
            object.__setattr__(self, "delta_c0", self.omega_r)
        if self.fsr is not None:
            scale = max(self.omega_r, self.G, self.K, self.lam, self.kappa_0,
                        self.kappa_0f, self.gamma_m)
            if self.fsr < FSR_FACTOR * scale:
                warnings.warn(f"bus free spectral range {self.fsr:.3g} is not well above "
                              f"{scale:.3g}; the single-mode bus is questionable",
                              RuntimeWarning, stacklevel=2)

    @property
    def h(self):
        return self.K / math.sqrt(self.n_nodes)

    @property
    def delta(self):
        return math.hypot(self.G, self.K)

    @property
    def thermal_rate(self):
        return self.gamma_m * self.n_m

    def with_nodes(self, n):
        return replace(self, n_nodes=int(n))

    @classmethod
    def from_nodes(cls, nodes, h, lam, kappa_0f, delta_c0=None, fsr=None):
        """Build from per-node linearised nodes; the nodes must be identical."""
        nodes = list(nodes)
        first = nodes[0]
        for other in nodes[1:]:
            if other != first:
                raise ValueError("bus networks need identical nodes")
        b = first.base
        return cls(G=abs(first.G), K=math.sqrt(len(nodes)) * h, lam=lam,
                   omega_r=b.omega_r, kappa_0=b.kappa, kappa_0f=kappa_0f,
                   gamma_m=b.gamma_m, n_m=b.n_m, zeta=b.zeta, n_nodes=len(nodes),
                   delta_c=first.delta_c_eff, delta_c0=delta_c0, fsr=fsr)


# Charge and spin parameter sets. Gamma_m is read as gamma_m n_m; n_m only
# splits it into a rate and an occupation.
PRESET_N_M = 400.0
PRESETS = {
    # omega_r/2pi = 50 MHz, lambda/2pi = 3.5 MHz, (kappa_0, kappa_0f, Gamma_m)/2pi = (50, 25, 10) kHz
    "charge": dict(G=0.2, K=0.25, lam=3.5 / 50, kappa_0=1e-3, kappa_0f=5e-4,
                   thermal=2e-4, t2_seconds=2e-6, omega_r_hz=50e6),
    # omega_r/2pi = 7.5 MHz, lambda/2pi = 40 kHz, same decoherence rates
    "spin": dict(G=0.25, K=0.25, lam=40e3 / 7.5e6, kappa_0=50e3 / 7.5e6,
                 kappa_0f=25e3 / 7.5e6, thermal=10e3 / 7.5e6, t2_seconds=10e-3,
                 omega_r_hz=7.5e6),
}


def preset(name, zeta=1, n_nodes=2):
    """(params, T2) of a named preset; T2 in units of 1/omega_r."""
    try:
        d = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    p = OnChipParams(G=d["G"], K=d["K"], lam=d["lam"], kappa_0=d["kappa_0"],
                     kappa_0f=d["kappa_0f"], gamma_m=d["thermal"] / PRESET_N_M,
                     n_m=PRESET_N_M, zeta=zeta, n_nodes=n_nodes)
    t2 = d["t2_seconds"] * 2 * math.pi * d["omega_r_hz"]
    return p, t2


# --- drift and noise matrices -----------------------------------------------

def block_matrices(p, zeta=None):
    """Drift and noise matrices of the bus-coupled set (1) and the others (2).

    Set 1 is ordered (b, c, d0, b^+, c^+, d0^+), set 2 (b, c, b^+, c^+).
    """
    z = p.zeta if zeta is None else zeta
    G, K = complex(p.G), complex(p.K)
    Gc, Kc = G.conjugate(), K.conjugate()
    wr, dc, d0 = p.omega_r, p.delta_c, p.delta_c0
    m1 = 1j * np.array([
        [wr, Gc, 0, 0, z * G, 0],
        [G, dc, Kc, z * G, 0, 0],
        [0, K, d0, 0, 0, 0],
        [0, -z * Gc, 0, -wr, -G, 0],
        [-z * Gc, 0, 0, -Gc, -dc, -K],
        [0, 0, 0, 0, -Kc, -d0],
    ], dtype=complex)
    m1 += np.diag([0.5 * p.gamma_m, p.kappa_0, p.kappa_0f,
                   0.5 * p.gamma_m, p.kappa_0, p.kappa_0f])
    base = om_node.OMNodeParams(omega_r=wr, delta_c=dc, kappa_0=p.kappa_0,
                                gamma_m=p.gamma_m, n_m=p.n_m, zeta=z)
    m2 = om_node.drift_matrix(om_node.LinearizedNode(base=base, G=G, delta_c_eff=dc))
    gn = p.gamma_m * p.n_m
    r1 = np.diag([gn, 0, 0, p.gamma_m * (p.n_m + 1), 2 * p.kappa_0, 2 * p.kappa_0f])
    r2 = np.diag([gn, 0, p.gamma_m * (p.n_m + 1), 2 * p.kappa_0])
    return {"M1": m1, "M2": m2, "r1": r1.astype(complex), "r2": r2.astype(complex)}


def _positive_blocks(p):
    """Dissipation-free RWA frequency matrices and damping of the two sets."""
    G, K = p.G, p.K
    h_s = np.array([[p.omega_r, G, 0], [G, p.delta_c, K], [0, K, p.delta_c0]], dtype=float)
    h_a = np.array([[p.omega_r, G], [G, p.delta_c]], dtype=float)
    d_s = np.array([0.5 * p.gamma_m, p.kappa_0, p.kappa_0f])
    d_a = np.array([0.5 * p.gamma_m, p.kappa_0])
    return {"s": (h_s, d_s), "a": (h_a, d_a)}


def _full_frequency_matrix(p, sym):
    """M/i without dissipation and with the counter-rotating terms on."""
    key = "M1" if sym == "s" else "M2"
    q = replace(p, kappa_0=0.0, kappa_0f=0.0, gamma_m=0.0)
    return block_matrices(q, zeta=1)[key] / 1j


# --- normal modes -----------------------------------------------------------

@dataclass(frozen=True)
class NormalModeRecord:
    symmetry: str
    index: str           # "-", "0" or "+"
    omega: float
    gamma: float
    lam_eff: float
    n_th: float
    n_nonrwa: float
    closed: dict = field(default_factory=dict)
    deviation: dict = field(default_factory=dict)

    @property
    def label(self):
        return f"({self.symmetry},{self.index})"

    def n_total(self, zeta):
        return self.n_th + (self.n_nonrwa if zeta else 0.0)


def _indices(sym):
    return ("-", "0", "+") if sym == "s" else ("-", "+")


def closed_form_modes(p):
    """Leading-order mode data for Delta_c = Delta_c0 = omega_r and small losses."""
    G, K, wr = p.G, p.K, p.omega_r
    d2 = p.delta ** 2
    gm, gn, k0, kf = p.gamma_m, p.thermal_rate, p.kappa_0, p.kappa_0f
    lam = p.lam
    out = {}
    ga = gm / 4 + k0 / 2
    for sgn, idx in ((-1, "-"), (1, "+")):
        out[("a", idx)] = dict(omega=wr + sgn * G, gamma=ga, lam_eff=lam / math.sqrt(2),
                               n_th=gn / (4 * ga) if ga > 0 else 0.0,
                               n_nonrwa=G ** 2 / (4 * (G + sgn * wr) ** 2))
    g0 = K ** 2 / (2 * d2) * gm + G ** 2 / d2 * kf
    out[("s", "0")] = dict(omega=wr, gamma=g0, lam_eff=K / p.delta * lam,
                           n_th=K ** 2 / d2 * gn / (2 * g0) if g0 > 0 else 0.0,
                           n_nonrwa=k0 * K ** 2 / (4 * kf * wr ** 2) if kf > 0 else math.inf)
    gs = G ** 2 / (4 * d2) * gm + k0 / 2 + K ** 2 / (2 * d2) * kf
    g = G / K if K > 0 else math.inf
    den = 4 * (kf + k0 + g * g * k0)
    nr = g ** 4 * k0 / den * K ** 2 / wr ** 2 if den > 0 else 0.0
    for sgn, idx in ((-1, "-"), (1, "+")):
        out[("s", idx)] = dict(omega=wr + sgn * p.delta, gamma=gs,
                               lam_eff=G / (math.sqrt(2) * p.delta) * lam,
                               n_th=G ** 2 / (2 * d2) * gn / (2 * gs) if gs > 0 else 0.0,
                               n_nonrwa=nr)
    return out


def nonrwa_occupations(p):
    """Stokes occupation of every mode, to first order in the counter-rotating terms.

    The left eigenvectors of the dissipation-free RWA problem pick up an
    admixture of creation operators; the vacuum noise those carry acts as
    an effective occupation (thermal corrections are left out).
    """
    out = {}
    blocks = _positive_blocks(p)
    widths = _rwa_widths(p)
    for sym in SYMMETRIES:
        h, _ = blocks[sym]
        n = h.shape[0]
        w, u = np.linalg.eigh(h)
        hf = _full_frequency_matrix(p, sym)
        v_ur = hf[:n, n:]                  # annihilation rows, creation columns
        r_cr = np.array([p.gamma_m, 2 * p.kappa_0, 2 * p.kappa_0f][:n]) \
            if sym == "s" else np.array([p.gamma_m, 2 * p.kappa_0])
        for j, idx in enumerate(_indices(sym)):
            coef = np.zeros(n, dtype=complex)
            for m in range(n):
                # <e_j| V |e'_m>, e'_m = (0, u_m^*) has frequency -w_m
                amp = u[:, j].conj() @ v_ur @ u[:, m].conj()
                coef += amp / (w[j] + w[m]) * u[:, m].T
            gam = widths[sym][j]
            noise = float(np.sum(np.abs(coef) ** 2 * r_cr))
            out[(sym, idx)] = noise / (2 * gam) if gam > 0 else (0.0 if noise == 0 else math.inf)
    return out


def _rwa_widths(p):
    out = {}
    for sym, (h, d) in _positive_blocks(p).items():
        ed = numerics.eig(1j * h + np.diag(d))
        out[sym] = ed.eigenvalues.real
    return out


def normal_mode_table(p, counter_rotating=False):
    """Numerical eigen-data of the RWA sets next to the leading-order closed forms.

    Frequencies and widths come from the dissipative RWA drift matrices;
    couplings and thermal occupations from the dissipation-free
    eigenvectors, which keeps the weights exactly complete. With
    ``counter_rotating`` (and zeta = 1) frequencies and widths are taken
    from the full drift matrices instead, which carry the Stokes shifts.
    """
    small = max(p.kappa_0, p.kappa_0f, p.gamma_m)
    if small > 0 and min(p.G, p.K) < RESOLVED_FACTOR * small:
        warnings.warn("normal modes are not well resolved (G, K not >> losses)",
                      RuntimeWarning, stacklevel=2)
    closed = closed_form_modes(p)
    nonrwa = nonrwa_occupations(p)
    records = []
    full = block_matrices(p) if counter_rotating and p.zeta else None
    for sym, (h, d) in _positive_blocks(p).items():
        if full is None:
            ed = numerics.eig(1j * h + np.diag(d))
        else:
            ed = numerics.eig(full["M1" if sym == "s" else "M2"])
            keep = ed.eigenvalues.imag > 0
            ed = numerics.EigenDecomposition(ed.eigenvalues[keep], ed.vectors[:, keep])
        w, u = np.linalg.eigh(h)
        for j, idx in enumerate(_indices(sym)):
            lam_eff = p.lam * abs(u[0, j])
            gam = float(ed.eigenvalues[j].real)
            n_th = abs(u[0, j]) ** 2 * p.thermal_rate / (2 * gam) if gam > 0 else 0.0
            num = dict(omega=float(ed.eigenvalues[j].imag), gamma=gam, lam_eff=lam_eff,
                       n_th=n_th, n_nonrwa=nonrwa[(sym, idx)])
            cf = closed[(sym, idx)]
            dev = {k: _rel(num[k], cf[k]) for k in ("omega", "gamma", "lam_eff", "n_th")}
            records.append(NormalModeRecord(symmetry=sym, index=idx, closed=cf,
                                            deviation=dev, **num))
    records.sort(key=lambda r: r.omega)
    return records


def _rel(a, b):
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return abs(a - b) / abs(b)


def weight_sums(records):
    """Sum of lam_eff^2 per symmetry set."""
    out = {s: 0.0 for s in SYMMETRIES}
    for r in records:
        out[r.symmetry] += r.lam_eff ** 2
    return out


def mode_band_mask(records, omega_q, band=BAND):
    """True where omega_q keeps at least band * lam_eff from every mode."""
    wq = np.asarray(omega_q, dtype=float)
    ok = np.ones(wq.shape, dtype=bool)
    for r in records:
        ok &= np.abs(wq - r.omega) >= band * r.lam_eff
    return ok


# --- gate coefficients --------------------------------------------------------

@dataclass(frozen=True)
class GateCoefficients:
    """Two-node exchange coupling and symmetric/antisymmetric decay channels."""
    J: float
    delta_prime: float
    gamma_s: float
    n_s: float
    gamma_a: float
    n_a: float
    method: str
    modes: tuple = ()

    def infidelity_rate(self):
        return self.gamma_s * (1 + 2 * self.n_s) + self.gamma_a * (1 + 2 * self.n_a)

    def pairwise(self):
        return qd.two_node_coefficients(self.J, self.delta_prime, self.gamma_s, self.n_s,
                                        self.gamma_a, self.n_a)


@dataclass(frozen=True)
class CollectiveCoefficients:
    J_N: float
    delta: float
    gamma_coll: float
    n_coll: float
    gamma_loc: float
    n_loc: float
    n_nodes: int

    def pairwise(self):
        return qd.collective_coefficients(self.n_nodes, self.J_N, self.delta,
                                          self.gamma_coll, self.n_coll,
                                          self.gamma_loc, self.n_loc)


def gate_coefficients_lorentzian(p, omega_q, records=None, check=True):
    """Independent-mode coefficients: a sum of one Lorentzian per normal mode.

    Exchange contributions of antisymmetric modes carry a minus sign. The
    common frequency shift is dropped (it does not act on the gate).
    """
    if p.n_nodes != 2:
        raise ValueError("the independent-mode form is implemented for two nodes")
    records = normal_mode_table(p, counter_rotating=True) if records is None else records
    J = 0.0
    acc = {s: [0.0, 0.0] for s in SYMMETRIES}
    modes = []
    for r in records:
        dbar = omega_q - r.omega
        if check and abs(dbar) < BAND * r.lam_eff:
            raise ProximityError(f"omega_q within {BAND} lam_eff of mode {r.label}")
        den = r.gamma ** 2 + dbar ** 2
        sign = -1.0 if r.symmetry == "a" else 1.0
        jj = r.lam_eff ** 2 / 8 * dbar * sign / den
        gg = r.lam_eff ** 2 / 2 * r.gamma / den
        nn = r.n_total(p.zeta)
        J += jj
        acc[r.symmetry][0] += gg
        acc[r.symmetry][1] += gg * nn
        modes.append((r.label, jj, gg, nn))
    gs, gsn = acc["s"]
    ga, gan = acc["a"]
    return GateCoefficients(J=J, delta_prime=0.0, gamma_s=gs, n_s=gsn / gs if gs > 0 else 0.0,
                            gamma_a=ga, n_a=gan / ga if ga > 0 else 0.0,
                            method="lorentzian", modes=tuple(modes))


def correlators(p, omega_q):
    """(X1, X2, Y1, Y2): response and noise spectra of the two sets at omega_q."""
    b = block_matrices(p)
    out = []
    for m, r in ((b["M1"], b["r1"]), (b["M2"], b["r2"])):
        # lossless networks are marginal; only growing modes are rejected
        ev = np.linalg.eigvals(m)
        if np.any(ev.real < -1e-12 * np.abs(ev).max()):
            raise InstabilityError("bus network drift matrix is unstable")
        a = om_node.response_matrix(m, omega_q)
        out.append((a[0, 0], float((a.conj() @ r @ a.T)[0, 0].real)))
    (x1, y1), (x2, y2) = out
    return x1, x2, y1, y2


def collective_gate_coefficients(p, omega_q):
    """Collective and local coefficients of the N-node bus master equation."""
    x1, x2, y1, y2 = correlators(p, omega_q)
    n = p.n_nodes
    l2 = p.lam ** 2
    g_coll = l2 / (2 * n) * (x1 - x2).real
    g_loc = l2 / 2 * x2.real
    gn_coll = l2 / (4 * n) * (y1 - y2)
    gn_loc = l2 / 4 * y2
    return CollectiveCoefficients(
        J_N=l2 / (4 * n) * (x1 - x2).imag, delta=l2 / 4 * x2.imag,
        gamma_coll=g_coll, n_coll=gn_coll / g_coll if g_coll != 0 else 0.0,
        gamma_loc=g_loc, n_loc=gn_loc / g_loc if g_loc != 0 else 0.0, n_nodes=n)


def gate_coefficients_full(p, omega_q):
    """Two-node coefficients of the full elimination (no independent-mode step)."""
    if p.n_nodes != 2:
        raise ValueError("the two-node form needs n_nodes = 2; "
                         "use collective_gate_coefficients")
    x1, x2, y1, y2 = correlators(p, omega_q)
    l2 = p.lam ** 2
    J = l2 / 8 * (x1 - x2).imag
    gs, ga = l2 / 2 * x1.real, l2 / 2 * x2.real
    return GateCoefficients(J=J, delta_prime=l2 / 4 * x2.imag + J,
                            gamma_s=gs, n_s=l2 / 4 * y1 / gs if gs > 0 else 0.0,
                            gamma_a=ga, n_a=l2 / 4 * y2 / ga if ga > 0 else 0.0,
                            method="full")


# --- sqrt(SWAP) fidelity ----------------------------------------------------

def _dephasing_rate(t2):
    return 0.0 if t2 is None or math.isinf(t2) else 1.0 / t2


def first_order_fidelity(co, t2=math.inf):
    """Bell-state fidelity to first order in the Lindblad terms."""
    if co.J == 0:
        raise ZeroCouplingError("exchange coupling is zero")
    aj = abs(co.J)
    return 1.0 - math.pi / 8 * co.infidelity_rate() / aj \
        - math.pi / 8 * _dephasing_rate(t2) / aj


def bell_target(sign=1.0):
    """(|01> - i s |10>)/sqrt(2); s is the sign of J, the state the gate makes."""
    return np.array([0, 1, -1j * np.sign(sign), 0], dtype=complex) / math.sqrt(2)


def gate_time(J):
    if J == 0:
        raise ZeroCouplingError("exchange coupling is zero")
    return math.pi / (4 * abs(J))


def evolve_gate(co, t2=math.inf, backend=None):
    """State after the sqrt(SWAP) time, starting from |01>."""
    tg = gate_time(co.J)
    deph = np.full(2, _dephasing_rate(t2))
    L = qd.build_generator(co.pairwise(), dephasing=deph)
    n = int(math.ceil(tg * 50.0 * qd.max_rate(L[None]) * 1.01)) + 1
    n = max(n, 20)
    dt = tg / (n - 1)
    gens = np.broadcast_to(L, (n,) + L.shape)
    traj = qd.evolve(qd.basis_state((0, 1)), gens, dt, backend=backend)
    return traj[-1]


def sqrt_swap_fidelity(p, omega_q, t2=math.inf, method="first_order",
                       coefficients="full", backend=None):
    """Fidelity of making an entangled pair with one sqrt(SWAP) from |01>."""
    if p.n_nodes != 2:
        raise ValueError("the sqrt(SWAP) fidelity is defined for two nodes")
    if coefficients == "full":
        co = gate_coefficients_full(p, omega_q)
    elif coefficients == "lorentzian":
        co = gate_coefficients_lorentzian(p, omega_q)
    else:
        raise ValueError(f"unknown coefficients {coefficients!r}")
    if method == "first_order":
        return first_order_fidelity(co, t2)
    if method == "full_me":
        rho = evolve_gate(co, t2, backend=backend)
        tgt = bell_target(co.J)
        return float(np.real(tgt.conj() @ rho @ tgt))
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class FidelityScan:
    omega_q: np.ndarray
    full: np.ndarray         # first order with full-elimination coefficients
    lorentzian: np.ndarray   # first order, independent modes; nan inside the bands
    valid: np.ndarray        # outside every excluded band
    records: tuple


def default_grid(p, n_points=400):
    d = p.delta
    return np.linspace(p.omega_r - 1.2 * d, p.omega_r + 1.2 * d, n_points)


def fidelity_scan(p, t2=math.inf, grid=None, n_points=400):
    """Both fidelity curves over a qubit-frequency grid."""
    records = normal_mode_table(p, counter_rotating=True)
    wq = default_grid(p, n_points) if grid is None else np.asarray(grid, dtype=float)
    valid = mode_band_mask(records, wq)
    full = np.full(wq.shape, np.nan)
    lor = np.full(wq.shape, np.nan)
    for k, w in enumerate(wq):
        try:
            full[k] = first_order_fidelity(gate_coefficients_full(p, w), t2)
        except ZeroCouplingError:
            pass
        if valid[k]:
            co = gate_coefficients_lorentzian(p, w, records=records, check=False)
            if co.J != 0:
                lor[k] = first_order_fidelity(co, t2)
    return FidelityScan(omega_q=wq, full=full, lorentzian=lor, valid=valid,
                        records=tuple(records))


# --- operating points ---------------------------------------------------------

@dataclass(frozen=True)
class OperatingPoint:
    omega_q: float
    fidelity: float
    closed_form: float
    regime: str
    mode: str = ""


def decay_limited_fidelity(p, t2=math.inf):
    """Best fidelity between the central modes, two nearest modes only.

    Assumes G = K and kappa_0 = kappa_0f << G.
    """
    k0 = p.kappa_0
    par = 1.0 + (p.thermal_rate / k0 if k0 > 0 else 0.0) + p.G ** 2 / (2 * p.omega_r ** 2)
    return 1.0 - math.pi / 2 * k0 / p.G * par \
        - math.pi / 2 * p.G / p.lam ** 2 * _dephasing_rate(t2)


def optimal_detuning(gamma, n, lam_eff, t2):
    """Detuning from one mode balancing induced decay against dephasing."""
    return math.sqrt(lam_eff ** 2 * gamma * (1 + 2 * n) * t2 / 2)


def dephasing_limited_fidelity(gamma, n, lam_eff, t2):
    if math.isinf(t2):
        return 1.0
    return 1.0 - math.pi * math.sqrt(2 * gamma * (1 + 2 * n) / (lam_eff ** 2 * t2))


def optimal_operating_point(p, t2=math.inf, regime="decay_dominated", mode=None,
                            n_points=400):
    """Best qubit frequency in one of the two limiting regimes.

    decay_dominated scans the two windows between (s,0) and (a,+/-) with
    the full-elimination fidelity and reports the closed-form estimate
    alongside. dephasing_dominated sits at the optimal detuning from one
    mode (``mode`` like "(a,+)", default: the best one).
    """
    records = normal_mode_table(p, counter_rotating=True)
    by = {r.label: r for r in records}
    if regime == "decay_dominated":
        centre = by["(s,0)"].omega
        best = (None, -math.inf)
        for side in ("(a,-)", "(a,+)"):
            edge = by[side].omega
            lo, hi = sorted((centre, edge))
            grid = np.linspace(lo, hi, n_points + 2)[1:-1]
            grid = grid[mode_band_mask(records, grid)]
            for w in grid:
                f = first_order_fidelity(gate_coefficients_full(p, w), t2)
                if f > best[1]:
                    best = (float(w), f)
        if best[0] is None:
            raise ProximityError("no qubit frequency between the central modes "
                                 "clears the excluded bands")
        return OperatingPoint(omega_q=best[0], fidelity=best[1],
                              closed_form=decay_limited_fidelity(p, t2), regime=regime)
    if regime == "dephasing_dominated":
        if math.isinf(t2):
            raise ValueError("the dephasing-dominated regime needs a finite T2")
        cands = [by[mode]] if mode is not None else records
        best = None
        for r in cands:
            n = r.n_total(p.zeta)
            f = dephasing_limited_fidelity(r.gamma, n, r.lam_eff, t2)
            if best is None or f > best[1]:
                best = (r, f)
        r, f = best
        dbar = optimal_detuning(r.gamma, r.n_total(p.zeta), r.lam_eff, t2)
        if dbar < BAND * r.lam_eff:
            raise ProximityError(f"optimal detuning {dbar:.3g} from {r.label} is inside "
                                 f"{BAND} lam_eff = {BAND * r.lam_eff:.3g}")
        choices = []
        for w in (r.omega - dbar, r.omega + dbar):
            if mode_band_mask(records, w):
                choices.append((first_order_fidelity(gate_coefficients_full(p, w), t2), w))
        if not choices:
            raise ProximityError("optimal detuning lands on a neighbouring mode")
        f_num, w = max(choices)
        return OperatingPoint(omega_q=float(w), fidelity=f_num, closed_form=f,
                              regime=regime, mode=r.label)
    raise ValueError(f"unknown regime {regime!r}")
