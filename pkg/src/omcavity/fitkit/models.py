"""S21 models in fit-parameter form, with analytic Jacobians.

Angular units throughout. ``omega`` is the absolute probe frequency.
"""

from __future__ import annotations

import numpy as np


def bare(omega, omega_c, kappa, amp):
    return amp / (1.0 - 2j * (omega - omega_c) / kappa)


def bare_jac(omega, omega_c, kappa, amp):
    """Columns d/d(omega_c), d/d(kappa), d/d(amp) of :func:`bare`."""
    delta = omega - omega_c
    d = 1.0 - 2j * delta / kappa
    s_over_d = -amp / (d * d)
    return np.stack([
        s_over_d * (2j / kappa),
        s_over_d * (2j * delta / kappa**2),
        1.0 / d,
    ], axis=-1)


def omia(omega, omega_m, gamma_m, coop, *, omega_c, kappa, amp, omega_d):
    a = 1.0 - 2j * (omega - omega_c) / kappa
    b = 1.0 - 2j * (omega - omega_d - omega_m) / gamma_m
    return amp / (a + coop / b)


def omia_jac(omega, omega_m, gamma_m, coop, *, omega_c, kappa, amp, omega_d):
    """Columns d/d(omega_m), d/d(gamma_m), d/d(coop) of :func:`omia`."""
    a = 1.0 - 2j * (omega - omega_c) / kappa
    delta = omega - omega_d - omega_m
    b = 1.0 - 2j * delta / gamma_m
    d = a + coop / b
    pre = -amp / (d * d)
    c_over_b2 = -coop / (b * b)
    return np.stack([
        pre * c_over_b2 * (2j / gamma_m),
        pre * c_over_b2 * (2j * delta / gamma_m**2),
        pre / b,
    ], axis=-1)


def stack_complex(z: np.ndarray) -> np.ndarray:
    """Real residual vector (or Jacobian rows) from complex values."""
    return np.concatenate([z.real, z.imag], axis=0)


def magnitude_jac(s: np.ndarray, ds: np.ndarray) -> np.ndarray:
    """Jacobian of |s| from the complex Jacobian ``ds`` (rows follow ``s``)."""
    return (s.conj()[:, None] * ds).real / np.abs(s)[:, None]


def loaded(omega, omega_c, kappa, amp, *, window):
    """Cavity response with a fixed mechanical term ``window = C / b`` added."""
    return amp / (1.0 - 2j * (omega - omega_c) / kappa + window)


def loaded_jac(omega, omega_c, kappa, amp, *, window):
    delta = omega - omega_c
    d = 1.0 - 2j * delta / kappa + window
    pre = -amp / (d * d)
    return np.stack([pre * (2j / kappa), pre * (2j * delta / kappa**2), 1.0 / d], axis=-1)
