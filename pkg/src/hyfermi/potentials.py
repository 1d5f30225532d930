"""Zero-energy scattering, periodized scattering functions, and the
Bethe-Goldstone equation.

Everything works in units where the one-body kinetic operator is -Delta.
The radial reduction u(r) = r*(1 - phi(r)) turns the zero-energy equation
-2*Delta*phi = V*(1 - phi) into u'' = (V/2)*u with u(0) = 0, which is
integrated with a fixed-step RK4 scheme; outside the support of V the
solution is exactly linear and the scattering length is read off from
a = r - u(r)/u'(r).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, simpson
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

_KINDS = ("square-well", "truncated-gaussian", "tabulated")


@dataclass(frozen=True)
class RadialPotential:
    """Nonnegative radial potential supported in [0, R].

    kind 'square-well' is V0 on [0, R]; 'truncated-gaussian' is
    V0*exp(-(3r/R)^2) cut at R; 'tabulated' interpolates (radius, value)
    samples linearly and vanishes beyond the last sample.
    """

    kind: str
    V0: float = 0.0
    R: float = 1.0
    samples: tuple = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.R <= 0.0:
            raise ValueError("range R must be positive")
        if self.kind == "tabulated":
            if not self.samples:
                raise ValueError("tabulated potential needs samples")
            pts = tuple((float(r), float(v)) for r, v in self.samples)
            radii = np.array([p[0] for p in pts])
            vals = np.array([p[1] for p in pts])
            if np.any(np.diff(radii) <= 0.0):
                raise ValueError("sample radii must be strictly increasing")
            if radii[-1] > self.R:
                raise ValueError("last sample radius exceeds R")
            if np.any(vals < 0.0) or radii[0] < 0.0:
                raise ValueError("samples must have r >= 0 and V >= 0")
            object.__setattr__(self, "samples", pts)
        else:
            if self.V0 < 0.0:
                raise ValueError("V0 must be nonnegative")

    @classmethod
    def from_json(cls, source):
        """Build from a JSON document (dict, JSON text, or path)."""
        if isinstance(source, dict):
            doc = source
        else:
            text = str(source)
            if not text.lstrip().startswith("{"):
                with open(text, "r", encoding="utf-8") as fh:
                    text = fh.read()
            doc = json.loads(text)
        samples = doc.get("samples")
        return cls(
            kind=doc["kind"],
            V0=float(doc.get("V0", 0.0)),
            R=float(doc.get("R", 1.0)),
            samples=tuple(tuple(s) for s in samples) if samples else None,
        )

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        inside = r <= self.R
        if self.kind == "square-well":
            out = np.where(inside, self.V0, 0.0)
        elif self.kind == "truncated-gaussian":
            out = np.where(inside, self.V0 * np.exp(-((3.0 * r / self.R) ** 2)), 0.0)
        else:
            radii = np.array([p[0] for p in self.samples])
            vals = np.array([p[1] for p in self.samples])
            out = np.interp(r, radii, vals, left=vals[0], right=0.0)
            out = np.where(r > radii[-1], 0.0, out)
        return out if out.ndim else float(out)

    def radial_moment(self, power):
        """integral of V(r) * r^power over [0, R]."""
        if self.kind == "square-well":
            return self.V0 * self.R ** (power + 1) / (power + 1)
        if self.kind == "truncated-gaussian":
            val, _ = quad(lambda r: self.V0 * math.exp(-((3.0 * r / self.R) ** 2))
                          * r ** power, 0.0, self.R, limit=200)
            return val
        radii = np.array([p[0] for p in self.samples])
        vals = np.array([p[1] for p in self.samples])
        # 3-point Gauss per linear segment: exact for (linear V) * r^power, power <= 4
        x3, w3 = np.polynomial.legendre.leggauss(3)
        acc = 0.0
        for i in range(len(radii) - 1):
            lo, hi = radii[i], radii[i + 1]
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            rr = mid + half * x3
            vv = vals[i] + (vals[i + 1] - vals[i]) * (rr - lo) / (hi - lo)
            acc += half * np.sum(w3 * vv * rr ** power)
        return acc


def born_length(potential):
    """First-Born approximation (8 pi)^-1 * integral of V over R^3.

    Upper bound for the scattering length of a nonnegative potential.
    """
    return 0.5 * potential.radial_moment(2)


@dataclass(frozen=True)
class ScatteringSolution:
    """Normalized zero-energy radial solution u(r) = r*(1 - phi(r)).

    u_profile is scaled so that u(r) = r - a exactly beyond the support
    of V; slope is the raw u'(matching_radius) before rescaling.
    """

    a: float
    r_grid: np.ndarray
    u_profile: np.ndarray
    matching_radius: float
    slope: float
    residual: float
    potential: RadialPotential = field(repr=False, default=None)

    def phi_profile(self):
        """phi(r) = 1 - u(r)/r on the grid, with the r -> 0 limit filled in."""
        with np.errstate(invalid="ignore", divide="ignore"):
            phi = 1.0 - self.u_profile / self.r_grid
        if self.r_grid[0] == 0.0:
            phi[0] = 1.0 - 1.0 / self.slope
        return phi

    def u_at(self, r):
        return np.interp(r, self.r_grid, self.u_profile)


def _rk4_linear(q_half, u0, w0, h):
    """March (u, u') through u'' = q(r) u; q_half holds q at step midpoints
    interleaved with nodes: q_half[2i], q_half[2i+1], q_half[2i+2]."""
    n = (len(q_half) - 1) // 2
    u = np.empty(n + 1)
    u[0] = u0
    w = w0
    for i in range(n):
        qa, qm, qb = q_half[2 * i], q_half[2 * i + 1], q_half[2 * i + 2]
        k1u, k1w = w, qa * u[i]
        k2u, k2w = w + 0.5 * h * k1w, qm * (u[i] + 0.5 * h * k1u)
        k3u, k3w = w + 0.5 * h * k2w, qm * (u[i] + 0.5 * h * k2u)
        k4u, k4w = w + h * k3w, qb * (u[i] + h * k3u)
        u[i + 1] = u[i] + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        w = w + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return u, w


def solve_scattering(potential, n_steps=4000, matching_radius=None):
    """Integrate u'' = (V/2) u, u(0) = 0, u'(0) = 1 and extract a.

    The grid is split at R so the integrator never straddles the edge of
    the support. Raises if the discrete residual of the second-order
    equation is out of line with the step size.
    """
    R = potential.R
    rm = 1.5 * R if matching_radius is None else float(matching_radius)
    if rm < R:
        raise ValueError("matching_radius must not be inside the support")

    h_in = R / n_steps
    r_in = np.linspace(0.0, R, n_steps + 1)
    r_half = np.linspace(0.0, R, 2 * n_steps + 1)
    q_in = 0.5 * potential(r_half)
    u_in, w_end = _rk4_linear(q_in, 0.0, 1.0, h_in)

    if rm > R:
        # exterior: u'' = 0, the continuation is exactly linear
        n_out = max(16, n_steps // 8)
        r_out = np.linspace(R, rm, n_out + 1)
        u_out = u_in[-1] + w_end * (r_out - R)
        r_grid = np.concatenate([r_in, r_out[1:]])
        u_raw = np.concatenate([u_in, u_out[1:]])
    else:
        r_grid, u_raw = r_in, u_in

    c = w_end
    if c <= 0.0:
        raise RuntimeError("u'(matching_radius) <= 0; potential too singular "
                           "for the zero-energy reduction")
    a = rm - (u_raw[-1]) / c

    # centered-difference consistency check on the interior of [0, R]
    if n_steps >= 4:
        lap = (u_in[2:] - 2.0 * u_in[1:-1] + u_in[:-2]) / h_in ** 2
        rhs = q_in[2:-2:2] * u_in[1:-1]
        scale = 1.0 + np.max(np.abs(rhs))
        residual = float(np.max(np.abs(lap - rhs)) / scale)
    else:
        residual = 0.0
    if residual > 1e-3:
        raise RuntimeError(
            f"integration residual {residual:.3e} too large; raise n_steps")

    return ScatteringSolution(a=a, r_grid=r_grid, u_profile=u_raw / c,
                              matching_radius=rm, slope=c, residual=residual,
                              potential=potential)


def scattering_length_from_integral(solution):
    """a = (1/2) * integral of V(r) u(r) r dr, a quadrature cross-check."""
    pot = solution.potential
    mask = solution.r_grid <= pot.R
    r = solution.r_grid[mask]
    w = pot(r) * solution.u_profile[mask] * r
    return 0.5 * float(simpson(w, x=r))


def fourier_Vf(solution, s):
    """Radial Fourier transform of V * (1 - phi) at |p| = s (vectorized).

    Equals 8*pi*a at s = 0 and decays like 1/s^2; phi-hat(p) is this
    divided by 2|p|^2.
    """
    pot = solution.potential
    mask = solution.r_grid <= pot.R
    r = solution.r_grid[mask]
    w = pot(r) * solution.u_profile[mask] * r
    s = np.asarray(s, dtype=np.float64)
    flat = np.atleast_1d(s).ravel()
    out = np.empty(flat.shape)
    for lo in range(0, flat.size, 256):
        blk = flat[lo:lo + 256, None]
        out[lo:lo + 256] = simpson(
            4.0 * np.pi * w[None, :] * np.sinc(blk * r[None, :] / np.pi),
            x=r, axis=1)
    return float(out[0]) if s.ndim == 0 else out.reshape(s.shape)


def fourier_V(potential, s):
    """Radial Fourier transform of the bare potential at |p| = s."""
    flat = np.atleast_1d(np.asarray(s, dtype=np.float64)).ravel()
    if potential.kind == "square-well":
        V0, R = potential.V0, potential.R
        small = np.abs(flat) < 1e-8
        ss = np.where(small, 1.0, flat)
        out = 4.0 * np.pi * V0 * (np.sin(ss * R) - ss * R * np.cos(ss * R)) / ss ** 3
        out = np.where(small, 4.0 * np.pi * V0 * R ** 3 / 3.0, out)
    else:
        r = np.linspace(0.0, potential.R, 4001)
        w = potential(r) * r * r
        out = np.empty(flat.shape)
        for lo in range(0, flat.size, 256):
            blk = flat[lo:lo + 256, None]
            out[lo:lo + 256] = simpson(
                4.0 * np.pi * w[None, :] * np.sinc(blk * r[None, :] / np.pi),
                x=r, axis=1)
    return float(out[0]) if np.ndim(s) == 0 else out.reshape(np.shape(s))


@dataclass(frozen=True)
class PeriodicScatteringFunction:
    """Fourier data of the periodized scattering function on (2pi/L)Z^3.

    Coefficients are keyed by integer triples n with p = (2pi/L)*n; the
    zero mode is pinned to 0. cutoff_applied records whether the
    high-momentum cutoff has been multiplied in.
    """

    L: float
    n_max: int
    coefficients: dict
    cutoff_applied: bool
    a: float

    def coeff(self, n):
        return self.coefficients.get(tuple(int(c) for c in n), 0.0)

    def real_space(self, N=None):
        """Evaluate on the uniform N^3 spatial grid via an inverse FFT.

        Returns (x, values) with x the 1D coordinate array; values are
        real because the coefficients are real and even.
        """
        if N is None:
            N = 2 * self.n_max + 1
        if N < 2 * self.n_max + 1:
            raise ValueError("N too small to hold the coefficient cube")
        A = np.zeros((N, N, N), dtype=np.complex128)
        for n, v in self.coefficients.items():
            A[n[0] % N, n[1] % N, n[2] % N] = v
        vals = np.fft.ifftn(A) * (N ** 3 / self.L ** 3)
        x = np.arange(N) * (self.L / N)
        return x, vals.real


def periodize_phi(solution, L, cutoff=None, n_max=24):
    """Fourier coefficients of the box-periodized scattering function.

    phi-hat(p) = F(V(1-phi))(|p|) / (2|p|^2) on p in (2pi/L)Z^3, zero mode
    dropped; when a cutoff is supplied each coefficient is multiplied by
    chi_greater(|p|). Refuses boxes that cannot contain the support of V.
    """
    R = solution.potential.R
    if L <= 2.0 * R:
        raise ValueError(f"box side L = {L} must exceed twice the range {R}")
    base = 2.0 * np.pi / L
    n = np.arange(-n_max, n_max + 1)
    n2 = (n[:, None, None] ** 2 + n[None, :, None] ** 2
          + n[None, None, :] ** 2)
    uniq = np.unique(n2)
    uniq = uniq[uniq > 0]
    s = base * np.sqrt(uniq.astype(np.float64))
    vals = fourier_Vf(solution, s) / (2.0 * s ** 2)
    if cutoff is not None:
        vals = vals * cutoff.chi_greater(s)
    lookup = dict(zip(uniq.tolist(), vals.tolist()))
    coeffs = {}
    for i in n:
        for j in n:
            for k in n:
                m2 = int(i * i + j * j + k * k)
                if m2 > 0:
                    coeffs[(int(i), int(j), int(k))] = lookup[m2]
    coeffs[(0, 0, 0)] = 0.0
    return PeriodicScatteringFunction(L=float(L), n_max=int(n_max),
                                      coefficients=coeffs,
                                      cutoff_applied=cutoff is not None,
                                      a=solution.a)


def lambda_shift(r, p):
    """Dispersion shift |r+p|^2 - |r|^2; broadcasts over leading axes."""
    r = np.asarray(r, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    return np.sum((r + p) ** 2, axis=-1) - np.sum(r * r, axis=-1)


@dataclass(frozen=True)
class EtaFunction:
    """Regularized pair excitation amplitude 8*pi*a over the shifted
    two-particle dispersion."""

    a: float
    epsilon: float
    kF_up: float
    kF_down: float

    def pauli_allowed(self, r, rp, p):
        r = np.asarray(r, dtype=np.float64)
        rp = np.asarray(rp, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        norm = lambda v: np.sqrt(np.sum(v * v, axis=-1))
        return ((norm(r) <= self.kF_up) & (norm(r + p) > self.kF_up)
                & (norm(rp) <= self.kF_down) & (norm(rp - p) > self.kF_down))

    def value(self, r, rp, p):
        """8*pi*a / (lambda_{r,p} + lambda_{r',-p} + 2*epsilon).

        With epsilon = 0 the formula is only defined on the Pauli-allowed
        region; a nonpositive denominator raises instead of returning a
        negative amplitude.
        """
        den = lambda_shift(r, p) + lambda_shift(rp, np.negative(p)) \
            + 2.0 * self.epsilon
        if self.epsilon == 0.0 and np.any(den <= 0.0):
            raise ValueError("pair dispersion nonpositive at epsilon = 0; "
                             "arguments leave the Pauli-allowed region")
        if np.any(den == 0.0):
            raise ValueError("pair dispersion vanishes; eta undefined")
        return 8.0 * np.pi * self.a / den


def eta_eps(eta, r, rp, p):
    return eta.value(r, rp, p)


@dataclass(frozen=True)
class BGSolution:
    """Discretized solution of the two-particle in-medium scattering
    equation; phi = G over the pair dispersion where that is positive."""

    mode: str
    nodes: np.ndarray
    G: np.ndarray
    phi: np.ndarray
    denominators: np.ndarray
    residual: float
    iterations: int
    used_direct_solve: bool
    condition_estimate: float
    kF_up: float
    kF_down: float


def _fourier_V_table(potential, s_max):
    s_tab = np.linspace(0.0, s_max, 8001)
    v_tab = fourier_V(potential, s_tab)
    return lambda s: np.interp(s, s_tab, v_tab)


def _bg_radial_matrix(potential, kf_floor, n_radial, q_max, n_mu):
    """Collocation matrix for the spherically symmetric case r = r' = 0.

    Returns (nodes, M, FV) with the equation reading (I + M) G = FV.
    """
    edges = kf_floor + (q_max - kf_floor) * np.array(
        [0.0, 0.03, 0.1, 0.3, 0.6, 1.0])
    per = max(8, n_radial // (len(edges) - 1))
    xg, wg = np.polynomial.legendre.leggauss(per)
    qs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        qs.append(mid + half * xg)
        ws.append(half * wg)
    q = np.concatenate(qs)
    w = np.concatenate(ws)

    if potential.kind == "square-well":
        FV = lambda s: fourier_V(potential, s)
    else:
        FV = _fourier_V_table(potential, 2.0 * q_max + 1.0)

    xm, wm = np.polynomial.legendre.leggauss(n_mu)
    p2 = q[:, None, None] ** 2
    q2 = q[None, :, None] ** 2
    pq = q[:, None, None] * q[None, :, None]
    s = np.sqrt(np.maximum(p2 + q2 - 2.0 * pq * xm[None, None, :], 0.0))
    K0 = np.tensordot(FV(s), wm, axes=([2], [0]))
    M = K0 * w[None, :] / (8.0 * np.pi ** 2)
    return q, M, FV(q)


def _bg_generic_matrix(potential, kF_up, kF_down, r, rp,
                       n_radial, q_max, n_theta, n_phi):
    """Collocation matrix on a spherical product grid for general r, r'."""
    cuts = sorted({0.0, q_max} | {
        c for c in (kF_up - np.linalg.norm(r), kF_up + np.linalg.norm(r),
                    kF_down - np.linalg.norm(rp), kF_down + np.linalg.norm(rp))
        if 0.0 < c < q_max})
    per = max(6, n_radial // (len(cuts) - 1))
    xg, wg = np.polynomial.legendre.leggauss(per)
    qs, ws = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        qs.append(mid + half * xg)
        ws.append(half * wg)
    q_r = np.concatenate(qs)
    w_r = np.concatenate(ws)

    xmu, wmu = np.polynomial.legendre.leggauss(n_theta)
    phis = 2.0 * np.pi * np.arange(n_phi) / n_phi
    w_phi = 2.0 * np.pi / n_phi

    sin_t = np.sqrt(1.0 - xmu ** 2)
    dirs = np.stack([
        np.outer(sin_t, np.cos(phis)).ravel(),
        np.outer(sin_t, np.sin(phis)).ravel(),
        np.repeat(xmu, n_phi),
    ], axis=-1)
    w_dir = np.repeat(wmu, n_phi) * w_phi

    nodes = q_r[:, None, None] * dirs[None, :, :]
    nodes = nodes.reshape(-1, 3)
    weights = (w_r[:, None] * w_dir[None, :] * q_r[:, None] ** 2).ravel()

    lam = lambda_shift(r, nodes) + lambda_shift(rp, -nodes)
    allowed = ((np.linalg.norm(r + nodes, axis=-1) >= kF_up)
               & (np.linalg.norm(rp - nodes, axis=-1) >= kF_down)
               & (lam > 1e-12))

    if potential.kind == "square-well":
        FV = lambda s: fourier_V(potential, s)
    else:
        FV = _fourier_V_table(potential, 2.0 * q_max + 1.0)

    dist = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=-1)
    col = np.zeros(len(nodes))
    col[allowed] = weights[allowed] / lam[allowed] / (2.0 * np.pi) ** 3
    M = FV(dist) * col[None, :]
    return nodes, M, FV(np.linalg.norm(nodes, axis=-1)), lam


def bethe_goldstone_solve(potential, kF_up, kF_down, r=None, rp=None,
                          n_radial=240, q_max=None, n_mu=64,
                          n_theta=8, n_phi=8, tol=1e-11, max_iter=200):
    """Solve the in-medium pair scattering equation on a momentum grid.

    With r = r' = 0 the problem is spherically symmetric and collocated
    on a radial grid; otherwise a full spherical product grid is used.
    Picard iteration runs first; on divergence the dense linear system is
    solved directly and a condition estimate is reported.
    """
    r = np.zeros(3) if r is None else np.asarray(r, dtype=np.float64)
    rp = np.zeros(3) if rp is None else np.asarray(rp, dtype=np.float64)
    if np.linalg.norm(r) > kF_up or np.linalg.norm(rp) > kF_down:
        raise ValueError("hole momenta must lie inside their Fermi balls")
    if q_max is None:
        q_max = 80.0 / potential.R

    radial = np.linalg.norm(r) == 0.0 and np.linalg.norm(rp) == 0.0
    if radial:
        kf_floor = max(kF_up, kF_down)
        nodes, M, FV_nodes = _bg_radial_matrix(
            potential, kf_floor, n_radial, q_max, n_mu)
        lam_p = 2.0 * nodes ** 2
    else:
        nodes, M, FV_nodes, lam_p = _bg_generic_matrix(
            potential, kF_up, kF_down, r, rp, n_radial, q_max,
            n_theta, n_phi)

    G = FV_nodes.copy()
    prev = np.inf
    iterations = 0
    diverging = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        G_new = FV_nodes - M @ G
        delta = float(np.max(np.abs(G_new - G)))
        G = G_new
        if delta <= tol * max(1.0, float(np.max(np.abs(G)))):
            converged = True
            break
        diverging = diverging + 1 if delta > prev else 0
        prev = delta
        if diverging >= 3:
            break

    used_direct = False
    cond = None
    if not converged:
        A = np.eye(len(FV_nodes)) + M
        lu, piv = lu_factor(A)
        G = lu_solve((lu, piv), FV_nodes)
        rcond, _ = dgecon(lu, np.linalg.norm(A, 1), norm="1")
        cond = float(1.0 / rcond) if rcond > 0 else np.inf
        used_direct = True

    residual = float(np.max(np.abs(G - (FV_nodes - M @ G))))
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(lam_p > 0.0, G / lam_p, np.nan)
    return BGSolution(mode="radial" if radial else "generic",
                      nodes=nodes, G=G, phi=phi, denominators=lam_p,
                      residual=residual, iterations=iterations,
                      used_direct_solve=used_direct,
                      condition_estimate=cond,
                      kF_up=float(kF_up), kF_down=float(kF_down))
