"""Adaptive Dormand-Prince 4(5) integration of the oscillator models.

Both simulators integrate with an embedded 4(5) pair under mixed
absolute/relative error control and report trajectories on a fixed output
grid through cubic Hermite interpolation of each accepted step.  The
high-dimensional network integrator never stores the full phase trajectory:
it reduces each interpolated state to the complex order parameter on the fly,
returning only its magnitude and (wrapped) phase on the grid.

Heavy-tailed intrinsic velocities are kept as drawn; very fast oscillators
force the controller toward tiny steps, so a step budget bounds the cost.  A
budget overrun or non-finite state aborts the run, signalled by the returned
status flag; callers map that to a failed simulation.
"""

import math

import numpy as np
from numba import njit

# Dormand-Prince 4(5) tableau (FSAL: the 7th stage is next step's first).
_C2, _C3, _C4, _C5, _C6 = 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0

STATUS_OK = 0
STATUS_FAILED = 1


@njit(cache=True, nogil=True, fastmath=True)
def network_rhs(phi, omega, coupling, out, sin_buf, cos_buf):
    """Phase velocities of the all-to-all coupled network.

    The pairwise sine coupling is collapsed through the order parameter:
    sum_j sin(phi_j - phi_i) = S cos(phi_i) - C sin(phi_i) with S, C the
    component sums of sin and cos, making the evaluation linear in size.
    """
    m = phi.shape[0]
    s = 0.0
    c = 0.0
    for i in range(m):
        si = np.sin(phi[i])
        ci = np.cos(phi[i])
        sin_buf[i] = si
        cos_buf[i] = ci
        s += si
        c += ci
    k_over_m = coupling / m
    for i in range(m):
        out[i] = omega[i] + k_over_m * (s * cos_buf[i] - c * sin_buf[i])


@njit(cache=True, nogil=True, fastmath=True)
def _initial_step(y0, f0, rtol, atol, t_span):
    n = y0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        scale = atol + rtol * abs(y0[i])
        d0 += (y0[i] / scale) ** 2
        d1 += (f0[i] / scale) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    return min(h0, t_span)


@njit(cache=True, nogil=True, fastmath=True)
def integrate_network(omega, coupling, t_grid, rtol, atol, max_steps):
    """Integrate the phase network from zero initial phases over ``t_grid``.

    Returns (r, phi_wrapped, status): order-parameter magnitude and wrapped
    phase at each grid time.  On failure the arrays are only filled up to the
    last completed grid point; the rest is NaN.
    """
    m = omega.shape[0]
    n_grid = t_grid.shape[0]
    r_out = np.full(n_grid, np.nan)
    phi_out = np.full(n_grid, np.nan)

    t = t_grid[0]
    t_end = t_grid[n_grid - 1]
    y = np.zeros(m)
    f = np.empty(m)
    sin_buf = np.empty(m)
    cos_buf = np.empty(m)
    network_rhs(y, omega, coupling, f, sin_buf, cos_buf)

    # Grid point at the initial time: all phases zero.
    r_out[0] = 1.0
    phi_out[0] = 0.0
    g = 1

    y_new = np.empty(m)
    f_new = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    k5 = np.empty(m)
    k6 = np.empty(m)
    stage = np.empty(m)

    h = _initial_step(y, f, rtol, atol, t_end - t)
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            return r_out, phi_out, STATUS_FAILED
        steps += 1
        if h > t_end - t:
            h = t_end - t

        for i in range(m):
            stage[i] = y[i] + h * _A21 * f[i]
        network_rhs(stage, omega, coupling, k2, sin_buf, cos_buf)
        for i in range(m):
            stage[i] = y[i] + h * (_A31 * f[i] + _A32 * k2[i])
        network_rhs(stage, omega, coupling, k3, sin_buf, cos_buf)
        for i in range(m):
            stage[i] = y[i] + h * (_A41 * f[i] + _A42 * k2[i] + _A43 * k3[i])
        network_rhs(stage, omega, coupling, k4, sin_buf, cos_buf)
        for i in range(m):
            stage[i] = y[i] + h * (_A51 * f[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        network_rhs(stage, omega, coupling, k5, sin_buf, cos_buf)
        for i in range(m):
            stage[i] = y[i] + h * (_A61 * f[i] + _A62 * k2[i] + _A63 * k3[i]
                                   + _A64 * k4[i] + _A65 * k5[i])
        network_rhs(stage, omega, coupling, k6, sin_buf, cos_buf)
        for i in range(m):
            y_new[i] = y[i] + h * (_B1 * f[i] + _B3 * k3[i] + _B4 * k4[i]
                                   + _B5 * k5[i] + _B6 * k6[i])
        network_rhs(y_new, omega, coupling, f_new, sin_buf, cos_buf)

        err = 0.0
        for i in range(m):
            e = h * (_E1 * f[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                     + _E6 * k6[i] + _E7 * f_new[i])
            scale = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            err += (e / scale) ** 2
        err = math.sqrt(err / m)
        if not math.isfinite(err):
            return r_out, phi_out, STATUS_FAILED

        if err <= 1.0:
            t_new = t + h
            while g < n_grid and t_grid[g] <= t_new:
                sigma = (t_grid[g] - t) / h
                s2 = sigma * sigma
                s3 = s2 * sigma
                b00 = 2 * s3 - 3 * s2 + 1
                b10 = s3 - 2 * s2 + sigma
                b01 = -2 * s3 + 3 * s2
                b11 = s3 - s2
                sum_sin = 0.0
                sum_cos = 0.0
                for i in range(m):
                    yg = (b00 * y[i] + b10 * h * f[i]
                          + b01 * y_new[i] + b11 * h * f_new[i])
                    sum_sin += np.sin(yg)
                    sum_cos += np.cos(yg)
                zr = sum_cos / m
                zi = sum_sin / m
                r_out[g] = math.sqrt(zr * zr + zi * zi)
                phi_out[g] = math.atan2(zi, zr)
                g += 1
            t = t_new
            for i in range(m):
                y[i] = y_new[i]
                f[i] = f_new[i]
            factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err**-0.2)
            h *= max(_MIN_FACTOR, factor)
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err**-0.2)
        if h <= 1e-14 * max(1.0, abs(t)):
            return r_out, phi_out, STATUS_FAILED

    return r_out, phi_out, STATUS_OK


@njit(cache=True, nogil=True, fastmath=True)
def reduced_rhs(y, coupling, gamma, omega0, out):
    """Order-parameter dynamics under the all-harmonics closure: a scalar
    cubic for the magnitude and uniform rotation for the phase."""
    r = y[0]
    out[0] = (0.5 * coupling - gamma) * r - 0.5 * coupling * r * r * r
    out[1] = omega0


@njit(cache=True, nogil=True, fastmath=True)
def integrate_reduced(coupling, gamma, omega0, t_grid, rtol, atol, max_steps):
    """Integrate the reduced 2-D model from (r, phi) = (1, 0) over ``t_grid``."""
    n_grid = t_grid.shape[0]
    r_out = np.full(n_grid, np.nan)
    phi_out = np.full(n_grid, np.nan)

    t = t_grid[0]
    t_end = t_grid[n_grid - 1]
    y = np.empty(2)
    y[0] = 1.0
    y[1] = 0.0
    f = np.empty(2)
    reduced_rhs(y, coupling, gamma, omega0, f)
    r_out[0] = y[0]
    phi_out[0] = y[1]
    g = 1

    y_new = np.empty(2)
    f_new = np.empty(2)
    k2 = np.empty(2)
    k3 = np.empty(2)
    k4 = np.empty(2)
    k5 = np.empty(2)
    k6 = np.empty(2)
    stage = np.empty(2)

    h = _initial_step(y, f, rtol, atol, t_end - t)
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            return r_out, phi_out, STATUS_FAILED
        steps += 1
        if h > t_end - t:
            h = t_end - t

        for i in range(2):
            stage[i] = y[i] + h * _A21 * f[i]
        reduced_rhs(stage, coupling, gamma, omega0, k2)
        for i in range(2):
            stage[i] = y[i] + h * (_A31 * f[i] + _A32 * k2[i])
        reduced_rhs(stage, coupling, gamma, omega0, k3)
        for i in range(2):
            stage[i] = y[i] + h * (_A41 * f[i] + _A42 * k2[i] + _A43 * k3[i])
        reduced_rhs(stage, coupling, gamma, omega0, k4)
        for i in range(2):
            stage[i] = y[i] + h * (_A51 * f[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        reduced_rhs(stage, coupling, gamma, omega0, k5)
        for i in range(2):
            stage[i] = y[i] + h * (_A61 * f[i] + _A62 * k2[i] + _A63 * k3[i]
                                   + _A64 * k4[i] + _A65 * k5[i])
        reduced_rhs(stage, coupling, gamma, omega0, k6)
        for i in range(2):
            y_new[i] = y[i] + h * (_B1 * f[i] + _B3 * k3[i] + _B4 * k4[i]
                                   + _B5 * k5[i] + _B6 * k6[i])
        reduced_rhs(y_new, coupling, gamma, omega0, f_new)

        err = 0.0
        for i in range(2):
            e = h * (_E1 * f[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                     + _E6 * k6[i] + _E7 * f_new[i])
            scale = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            err += (e / scale) ** 2
        err = math.sqrt(err / 2)
        if not math.isfinite(err):
            return r_out, phi_out, STATUS_FAILED

        if err <= 1.0:
            t_new = t + h
            while g < n_grid and t_grid[g] <= t_new:
                sigma = (t_grid[g] - t) / h
                s2 = sigma * sigma
                s3 = s2 * sigma
                b00 = 2 * s3 - 3 * s2 + 1
                b10 = s3 - 2 * s2 + sigma
                b01 = -2 * s3 + 3 * s2
                b11 = s3 - s2
                r_out[g] = (b00 * y[0] + b10 * h * f[0]
                            + b01 * y_new[0] + b11 * h * f_new[0])
                phi_out[g] = (b00 * y[1] + b10 * h * f[1]
                              + b01 * y_new[1] + b11 * h * f_new[1])
                g += 1
            t = t_new
            y[0] = y_new[0]
            y[1] = y_new[1]
            f[0] = f_new[0]
            f[1] = f_new[1]
            factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err**-0.2)
            h *= max(_MIN_FACTOR, factor)
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err**-0.2)
        if h <= 1e-14 * max(1.0, abs(t)):
            return r_out, phi_out, STATUS_FAILED

    return r_out, phi_out, STATUS_OK
