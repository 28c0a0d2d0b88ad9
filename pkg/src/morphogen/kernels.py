"""Pointwise kernels used inside the time loop and the Lyapunov evaluators.

Every kernel exists twice: a loop version compiled with numba (``*_nb``) and a
vectorised numpy version (``*_np``). The public name dispatches to one of them
according to :data:`morphogen._accel.USE_NUMBA`. Both paths must agree to
rounding; ``tests/test_kernels.py`` checks that.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# Below this |x| the Bregman gap of -log(1-x) is summed as a series;
# log1p(-x) + x loses all digits there.
_SERIES_CUTOFF = 1e-3


# --- receptor update --------------------------------------------------------
# Exact solution of ds/dt = -rate*s + l*(1-s) with l frozen. Below 1/2 the
# update is summed for s itself (exact zero stays zero), above it for 1-s (the
# result stays strictly below one). Both forms are sums of nonnegative terms.

def receptor_update_np(s, l, rate, dt):
    r = rate + l
    decay = np.exp(-r * dt)
    gain = -np.expm1(-r * dt) / r
    direct = s * decay + l * gain
    sbar = (1.0 - s) * decay + rate * gain
    return np.where(direct <= 0.5, direct, 1.0 - sbar)


@njit
def receptor_update_nb(s, l, rate, dt):
    out = np.empty_like(s)
    for i in range(s.shape[0]):
        r = rate + l[i]
        decay = math.exp(-r * dt)
        gain = -math.expm1(-r * dt) / r
        direct = s[i] * decay + l[i] * gain
        if direct <= 0.5:
            out[i] = direct
        else:
            out[i] = 1.0 - ((1.0 - s[i]) * decay + rate * gain)
    return out


# --- explicit morphogen reaction -------------------------------------------

def morphogen_reaction_np(l, s, delta, dt):
    return l + dt * (delta * s - l * (1.0 - s))


@njit
def morphogen_reaction_nb(l, s, delta, dt):
    out = np.empty_like(l)
    for i in range(l.shape[0]):
        out[i] = l[i] + dt * (delta * s[i] - l[i] * (1.0 - s[i]))
    return out


# --- Bregman gap of -log(1-x) ----------------------------------------------

def bregman_np(v, s_ref):
    x = (v - s_ref) / (1.0 - s_ref)
    small = np.abs(x) < _SERIES_CUTOFF
    out = np.empty_like(x)
    xs = x[small]
    out[small] = xs * xs * (0.5 + xs * (1.0 / 3.0 + xs * (0.25 + xs * (0.2 + xs / 6.0))))
    xl = x[~small]
    out[~small] = -np.log1p(-xl) - xl
    return out


@njit
def bregman_nb(v, s_ref):
    out = np.empty_like(v)
    for i in range(v.shape[0]):
        x = (v[i] - s_ref[i]) / (1.0 - s_ref[i])
        if abs(x) < _SERIES_CUTOFF:
            out[i] = x * x * (0.5 + x * (1.0 / 3.0 + x * (0.25 + x * (0.2 + x / 6.0))))
        else:
            out[i] = -math.log1p(-x) - x
    return out


# --- reaction part of the dissipation --------------------------------------

def dissipation_density_np(u, v, l_inf, s_inf, delta, epsilon):
    rate = delta + epsilon
    flux = u * (1.0 - v) - rate * v
    dv = v - s_inf
    return (flux * flux + epsilon * (l_inf + rate) * dv * dv) / (1.0 - v)


@njit
def dissipation_density_nb(u, v, l_inf, s_inf, delta, epsilon):
    rate = delta + epsilon
    out = np.empty_like(u)
    for i in range(u.shape[0]):
        flux = u[i] * (1.0 - v[i]) - rate * v[i]
        dv = v[i] - s_inf[i]
        out[i] = (flux * flux + epsilon * (l_inf[i] + rate) * dv * dv) / (1.0 - v[i])
    return out


if USE_NUMBA:
    receptor_update = receptor_update_nb
    morphogen_reaction = morphogen_reaction_nb
    bregman = bregman_nb
    dissipation_density = dissipation_density_nb
else:
    receptor_update = receptor_update_np
    morphogen_reaction = morphogen_reaction_np
    bregman = bregman_np
    dissipation_density = dissipation_density_np
