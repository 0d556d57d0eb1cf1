"""Compiled (numba) kernels for the torus benchmark family.

Specialized to ambient dimension 3, identity diffusion (a = sigma = I) and a
constant antisymmetric matrix; the generic pure-numpy implementations in
`projection` and `sampler` cover everything else and are cross-checked against
these kernels.  Noise is drawn from the same counter-based streams as
`noise.py`, so both paths produce identical chains for a given key.

All functions release the GIL; multi-run experiments run them from a thread
pool.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi
_SQRT3 = np.sqrt(3.0)

STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1
STATUS_RANK_LOSS = 2


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z ^= z >> U64(30)
    z *= _MIX1
    z ^= z >> U64(27)
    z *= _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True, nogil=True, inline="always")
def _raw(key, ctr):
    return _mix64(key + (ctr + U64(1)) * _GOLDEN)


@njit(cache=True, nogil=True, inline="always")
def _unif(key, ctr):
    return float(_raw(key, ctr) >> U64(11)) * _U53


@njit(cache=True, nogil=True, inline="always")
def _noise(kind, key, ctr):
    if kind == 0:  # gaussian, Box-Muller cosine branch
        u1 = _unif(key, U64(2) * ctr)
        u2 = _unif(key, U64(2) * ctr + U64(1))
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(_TWO_PI * u2)
    if kind == 1:  # rademacher
        return 1.0 if _raw(key, ctr) & U64(1) == U64(1) else -1.0
    return _SQRT3 * (2.0 * _unif(key, ctr) - 1.0)  # uniform on [-sqrt3, sqrt3]


@njit(cache=True, nogil=True, inline="always")
def _txi(x, R, r):
    s = R * R - r * r + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
    return s * s - 4.0 * R * R * (x[0] * x[0] + x[1] * x[1])


@njit(cache=True, nogil=True, inline="always")
def _tgrad(x, R, r, out):
    s = R * R - r * r + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
    out[0] = 4.0 * x[0] * (s - 2.0 * R * R)
    out[1] = 4.0 * x[1] * (s - 2.0 * R * R)
    out[2] = 4.0 * x[2] * s


@njit(cache=True, nogil=True, inline="always")
def _flow_rhs(x, M, R, r, kappa, out, g):
    # -((2-kappa)/2) |xi|^(1-kappa) (xi/|xi|) (a - A) grad xi, with k = 1
    xi = _txi(x, R, r)
    if xi == 0.0:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 0.0
        return
    _tgrad(x, R, r, g)
    amag = abs(xi)
    fac = -0.5 * (2.0 - kappa) * amag ** (1.0 - kappa) * (xi / amag)
    for i in range(3):
        out[i] = fac * (M[i, 0] * g[0] + M[i, 1] * g[1] + M[i, 2] * g[2])


@njit(cache=True, nogil=True)
def _project(x, M, R, r, kappa, dt0, eps_tol, max_rk, halving, err_tol,
             k1, k2, k3, k4, y, g):
    """Bogacki-Shampine 3(2) integration of the projection flow.

    Standard embedded-pair step control (third-order propagation, second-order
    error estimate, FSAL) plus a monotonicity rule: an attempt that fails to
    shrink |xi| by at least 1% of the stopping tolerance is rejected and
    retried with half the step, and the halved value caps the step size for
    the rest of the call.  The progress floor matters: for kappa > 0 the flow
    field is non-Lipschitz at the surface, the error estimate plateaus once
    stages straddle it, and without the floor the controller locks into
    steps that hop across the surface with |xi| stagnating just above the
    tolerance.  Returns (accepted steps, |xi| at exit, status); ``max_rk``
    caps attempts.  Mutates x.
    """
    prev = abs(_txi(x, R, r))
    if prev < eps_tol:
        return 0, prev, STATUS_OK
    progress_floor = 0.01 * eps_tol
    dt = dt0
    dt_cap = np.inf
    steps = 0
    attempts = 0
    _flow_rhs(x, M, R, r, kappa, k1, g)
    while attempts < max_rk:
        attempts += 1
        for i in range(3):
            y[i] = x[i] + 0.5 * dt * k1[i]
        _flow_rhs(y, M, R, r, kappa, k2, g)
        for i in range(3):
            y[i] = x[i] + 0.75 * dt * k2[i]
        _flow_rhs(y, M, R, r, kappa, k3, g)
        c0 = x[0] + dt * ((2.0 / 9.0) * k1[0] + (1.0 / 3.0) * k2[0] + (4.0 / 9.0) * k3[0])
        c1 = x[1] + dt * ((2.0 / 9.0) * k1[1] + (1.0 / 3.0) * k2[1] + (4.0 / 9.0) * k3[1])
        c2 = x[2] + dt * ((2.0 / 9.0) * k1[2] + (1.0 / 3.0) * k2[2] + (4.0 / 9.0) * k3[2])
        y[0] = c0
        y[1] = c1
        y[2] = c2
        _flow_rhs(y, M, R, r, kappa, k4, g)
        # difference between the third- and second-order solutions
        e0 = dt * ((2.0 / 9.0 - 7.0 / 24.0) * k1[0] + (1.0 / 3.0 - 0.25) * k2[0]
                   + (4.0 / 9.0 - 1.0 / 3.0) * k3[0] - 0.125 * k4[0])
        e1 = dt * ((2.0 / 9.0 - 7.0 / 24.0) * k1[1] + (1.0 / 3.0 - 0.25) * k2[1]
                   + (4.0 / 9.0 - 1.0 / 3.0) * k3[1] - 0.125 * k4[1])
        e2 = dt * ((2.0 / 9.0 - 7.0 / 24.0) * k1[2] + (1.0 / 3.0 - 0.25) * k2[2]
                   + (4.0 / 9.0 - 1.0 / 3.0) * k3[2] - 0.125 * k4[2])
        err = np.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
        if err > err_tol:
            fac = 0.9 * (err_tol / err) ** (1.0 / 3.0)
            if fac < 0.2:
                fac = 0.2
            dt *= fac
            continue
        cur = abs(_txi(y, R, r))
        if halving and cur > prev - progress_floor:
            dt *= 0.5
            dt_cap = dt
            continue
        x[0] = c0
        x[1] = c1
        x[2] = c2
        steps += 1
        for i in range(3):
            k1[i] = k4[i]
        if cur < eps_tol:
            return steps, cur, STATUS_OK
        if err == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * (err_tol / err) ** (1.0 / 3.0)
            if fac > 5.0:
                fac = 5.0
            if fac < 0.2:
                fac = 0.2
        dt *= fac
        if dt > dt_cap:
            dt = dt_cap
        prev = cur
        _tgrad(x, R, r, g)
        if g[0] * g[0] + g[1] * g[1] + g[2] * g[2] < 1e-20:
            return steps, cur, STATUS_RANK_LOSS
    return steps, prev, STATUS_NO_CONVERGENCE


@njit(cache=True, nogil=True)
def project_point(x0, A, R, r, kappa, dt0, eps_tol, max_rk, halving, err_tol):
    """Single projection; returns (point, steps, final |xi|, status)."""
    x = x0.copy()
    M = np.eye(3) - A
    k1 = np.zeros(3)
    k2 = np.zeros(3)
    k3 = np.zeros(3)
    k4 = np.zeros(3)
    y = np.zeros(3)
    g = np.zeros(3)
    steps, cur, status = _project(
        x, M, R, r, kappa, dt0, eps_tol, max_rk, halving, err_tol, k1, k2, k3, k4, y, g
    )
    return x, steps, cur, status


@njit(cache=True, nogil=True, inline="always")
def _grad_potential(u_kind, u_param, x, out):
    # 0: U = 0;  1: U = u_param * x3^2;  2: U = u_param * cos^2(theta)
    if u_kind == 1:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 2.0 * u_param * x[2]
    elif u_kind == 2:
        rho2 = x[0] * x[0] + x[1] * x[1]
        out[0] = u_param * 2.0 * x[0] * x[1] * x[1] / (rho2 * rho2)
        out[1] = -u_param * 2.0 * x[0] * x[0] * x[1] / (rho2 * rho2)
        out[2] = 0.0
    else:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 0.0


@njit(cache=True, nogil=True, inline="always")
def _observable(f_kind, f_param, r, x, theta):
    # 0: constant f_param;  1: f_param * (x3/r)^2;  2: theta-cubic
    if f_kind == 1:
        return f_param * (x[2] / r) * (x[2] / r)
    if f_kind == 2:
        return f_param * theta * (theta - 1.5 * np.pi) * (theta - _TWO_PI)
    return f_param


@njit(cache=True, nogil=True)
def run_chain(
    x0,
    R,
    r,
    beta,
    A,
    u_kind,
    u_param,
    f_kind,
    f_param,
    h,
    n,
    kappa,
    dt0,
    eps_tol,
    max_rk,
    halving,
    err_tol,
    noise_kind,
    key,
    rk_hist,
    batch_sums,
    batch_len,
    hist,
    angles,
    xi_half_series,
    x_final,
):
    """One chain of n steps; accumulates into the preallocated output arrays.

    Returns (status, fail_step, sum_f, sum_xi_half, transitions, total_rk,
    max_state_xi).  The observable average includes the initial state and
    excludes the final one; the RK histogram and intermediate |xi| cover the n
    projections performed.
    """
    x = x0.copy()
    M = np.eye(3) - A      # a - A with a = I
    D = A - np.eye(3)      # drift matrix A - a
    k1 = np.zeros(3)
    k2 = np.zeros(3)
    k3 = np.zeros(3)
    k4 = np.zeros(3)
    y = np.zeros(3)
    g = np.zeros(3)
    gu = np.zeros(3)
    noise_scale = np.sqrt(2.0 * h / beta)
    n_batches = batch_sums.shape[0]
    bins = hist.shape[0]
    record_angles = angles.shape[0] > 0
    record_xi = xi_half_series.shape[0] > 0
    sum_f = 0.0
    sum_xi_half = 0.0
    total_rk = 0
    transitions = 0
    last_region = 0
    max_state_xi = 0.0
    for ell in range(n):
        theta = np.arctan2(x[1], x[0])
        if theta < 0.0:
            theta += _TWO_PI
        fval = _observable(f_kind, f_param, r, x, theta)
        sum_f += fval
        if n_batches > 0 and batch_len > 0:
            b = ell // batch_len
            if b < n_batches:
                batch_sums[b] += fval
        if record_angles:
            rho = np.sqrt(x[0] * x[0] + x[1] * x[1])
            phi = np.arctan2(x[2], rho - R)
            if phi < 0.0:
                phi += _TWO_PI
            angles[ell, 0] = phi
            angles[ell, 1] = theta
        if bins > 0:
            rho = np.sqrt(x[0] * x[0] + x[1] * x[1])
            phi = np.arctan2(x[2], rho - R)
            if phi < 0.0:
                phi += _TWO_PI
            i = int(phi / _TWO_PI * bins)
            j = int(theta / _TWO_PI * bins)
            if i >= bins:
                i = bins - 1
            if j >= bins:
                j = bins - 1
            hist[i, j] += 1
        # hysteresis transition counter between the two azimuthal wells
        region = 0
        if abs(theta - 0.5 * np.pi) <= 0.25 * np.pi:
            region = 1
        elif abs(theta - 1.5 * np.pi) <= 0.25 * np.pi:
            region = 2
        if region != 0:
            if last_region != 0 and region != last_region:
                transitions += 1
            last_region = region
        # half step: x + (A - a) grad U h + sqrt(2h/beta) eta
        _grad_potential(u_kind, u_param, x, gu)
        base = U64(3) * U64(ell)
        for i in range(3):
            eta = _noise(noise_kind, key, base + U64(i))
            x[i] += h * (D[i, 0] * gu[0] + D[i, 1] * gu[1] + D[i, 2] * gu[2]) + noise_scale * eta
        xi_half = abs(_txi(x, R, r))
        sum_xi_half += xi_half
        if record_xi:
            xi_half_series[ell] = xi_half
        steps, cur, status = _project(
            x, M, R, r, kappa, dt0, eps_tol, max_rk, halving, err_tol, k1, k2, k3, k4, y, g
        )
        total_rk += steps
        if steps < rk_hist.shape[0]:
            rk_hist[steps] += 1
        else:
            rk_hist[rk_hist.shape[0] - 1] += 1
        if status != STATUS_OK:
            for i in range(3):
                x_final[i] = x[i]
            return status, ell, sum_f, sum_xi_half, transitions, total_rk, max_state_xi
        if cur > max_state_xi:
            max_state_xi = cur
    for i in range(3):
        x_final[i] = x[i]
    return STATUS_OK, n, sum_f, sum_xi_half, transitions, total_rk, max_state_xi
