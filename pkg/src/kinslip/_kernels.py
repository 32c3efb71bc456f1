"""Compiled finite-volume sweep kernels (fixed loop order, hence bit-reproducible)."""

from __future__ import annotations

import numba as nb
import numpy as np

UPWIND, MINMOD, LINEAR = 0, 1, 2


@nb.njit(cache=True, inline="always")
def _slope(a, b, scheme):
    if scheme == MINMOD:
        if a * b <= 0.0:
            return 0.0
        return a if abs(a) < abs(b) else b
    if scheme == LINEAR:
        return 0.5 * (a + b)
    return 0.0


@nb.njit(cache=True)
def sweep_x(F, vel, lam, scheme):
    """Periodic sweep along axis 0; lam = dt / (eps dx); vel = node velocities along x.

    ``flux[i]`` is the flux through the face between cells i and i + 1.
    """
    nx, ny, n = F.shape
    out = np.empty_like(F)
    flux = np.empty((nx, n))
    for j in range(ny):
        for i in range(nx):
            im = i - 1 if i > 0 else nx - 1
            ip = i + 1 if i + 1 < nx else 0
            ipp = ip + 1 if ip + 1 < nx else 0
            for k in range(n):
                v = vel[k]
                c = abs(v) * lam
                if v > 0:
                    s = _slope(F[i, j, k] - F[im, j, k], F[ip, j, k] - F[i, j, k], scheme)
                    flux[i, k] = v * (F[i, j, k] + 0.5 * (1.0 - c) * s)
                else:
                    s = _slope(F[ip, j, k] - F[i, j, k], F[ipp, j, k] - F[ip, j, k], scheme)
                    flux[i, k] = v * (F[ip, j, k] - 0.5 * (1.0 - c) * s)
        for i in range(nx):
            im = i - 1 if i > 0 else nx - 1
            for k in range(n):
                out[i, j, k] = F[i, j, k] - lam * (flux[i, k] - flux[im, k])
    return out


@nb.njit(cache=True)
def sweep_y(F, vel, lam, scheme, bottom, top, s_first, s_last):
    """Wall-bounded sweep along axis 1.

    ``bottom``/``top`` are the wall face states (nx, n); ``s_first``/``s_last``
    the slopes used in the first and last cell rows.  ``flux[j]`` is the flux
    through the face below cell j.
    """
    nx, ny, n = F.shape
    out = np.empty_like(F)
    flux = np.empty((ny + 1, n))
    for i in range(nx):
        for k in range(n):
            flux[0, k] = vel[k] * bottom[i, k]
            flux[ny, k] = vel[k] * top[i, k]
        for j in range(ny - 1):
            jp = j + 1
            for k in range(n):
                v = vel[k]
                c = abs(v) * lam
                if v > 0:
                    if j == 0:
                        s = s_first[i, k]
                    else:
                        s = _slope(F[i, j, k] - F[i, j - 1, k], F[i, jp, k] - F[i, j, k], scheme)
                    flux[jp, k] = v * (F[i, j, k] + 0.5 * (1.0 - c) * s)
                else:
                    if jp == ny - 1:
                        s = s_last[i, k]
                    else:
                        s = _slope(F[i, jp, k] - F[i, j, k], F[i, jp + 1, k] - F[i, jp, k], scheme)
                    flux[jp, k] = v * (F[i, jp, k] - 0.5 * (1.0 - c) * s)
        for j in range(ny):
            for k in range(n):
                out[i, j, k] = F[i, j, k] - lam * (flux[j + 1, k] - flux[j, k])
    return out


@nb.njit(cache=True)
def _solve4(J, r):
    """Solve the 4x4 system J x = r by Gaussian elimination with partial pivoting."""
    A = J.copy()
    x = r.copy()
    for c in range(4):
        piv = c
        for i in range(c + 1, 4):
            if abs(A[i, c]) > abs(A[piv, c]):
                piv = i
        if piv != c:
            for j in range(4):
                A[c, j], A[piv, j] = A[piv, j], A[c, j]
            x[c], x[piv] = x[piv], x[c]
        for i in range(c + 1, 4):
            f = A[i, c] / A[c, c]
            for j in range(c, 4):
                A[i, j] -= f * A[c, j]
            x[i] -= f * x[c]
    for c in range(3, -1, -1):
        s = x[c]
        for j in range(c + 1, 4):
            s -= A[c, j] * x[j]
        x[c] = s / A[c, c]
    return x


@nb.njit(cache=True)
def equilibrium_tensor2(F, v, p, tol, max_iter):
    """Moment-matching exponential family on a 2-D tensor lattice, cell by cell.

    F has shape (K, m*m) with node index i0*m + i1; v, p are the 1-D nodes and
    plain weights.  Returns (E, status) with status 0 on success, 1 for a
    non-physical state and 2 when Newton did not converge.
    """
    K = F.shape[0]
    m = v.shape[0]
    E = np.empty_like(F)
    e0 = np.empty(m)
    e1 = np.empty(m)
    x = np.empty(5)
    y = np.empty(5)
    t = np.empty(4)
    res = np.empty(4)
    J = np.empty((4, 4))
    for kc in range(K):
        t[:] = 0.0
        for i in range(m):
            for j in range(m):
                w = F[kc, i * m + j] * p[i] * p[j]
                t[0] += w
                t[1] += w * v[i]
                t[2] += w * v[j]
                t[3] += w * (v[i] * v[i] + v[j] * v[j])
        rho = t[0]
        if not rho > 0.0:
            return E, 1
        ux = t[1] / rho
        uy = t[2] / rho
        theta = (t[3] / rho - ux * ux - uy * uy) / 2.0
        if not theta > 0.0:
            return E, 1
        a = np.log(rho) - np.log(2 * np.pi * theta) - 0.5 * (ux * ux + uy * uy) / theta
        bx = ux / theta
        by = uy / theta
        c = -0.5 / theta
        scale = max(abs(t[0]), abs(t[1]), abs(t[2]), abs(t[3])) + 1e-300
        converged = False
        ok = False
        ea = 0.0
        for it in range(max_iter):
            for i in range(m):
                e0[i] = np.exp(bx * v[i] + c * v[i] * v[i])
                e1[i] = np.exp(by * v[i] + c * v[i] * v[i])
            ea = np.exp(a)
            x[:] = 0.0
            y[:] = 0.0
            for i in range(m):
                px = p[i] * e0[i]
                py = p[i] * e1[i]
                vk = 1.0
                for k in range(5):
                    x[k] += px * vk
                    y[k] += py * vk
                    vk *= v[i]
            for k in range(5):
                x[k] *= ea
            s1 = x[0] * y[0]
            sx = x[1] * y[0]
            sy = x[0] * y[1]
            se = x[2] * y[0] + x[0] * y[2]
            res[0] = s1 - t[0]
            res[1] = sx - t[1]
            res[2] = sy - t[2]
            res[3] = se - t[3]
            if converged:
                ok = True
                break
            mx = max(abs(res[0]), abs(res[1]), abs(res[2]), abs(res[3]))
            # one polishing update after the tolerance is met
            converged = mx <= tol * scale
            J[0, 0] = s1
            J[0, 1] = J[1, 0] = sx
            J[0, 2] = J[2, 0] = sy
            J[0, 3] = J[3, 0] = se
            J[1, 1] = x[2] * y[0]
            J[1, 2] = J[2, 1] = x[1] * y[1]
            J[1, 3] = J[3, 1] = x[3] * y[0] + x[1] * y[2]
            J[2, 2] = x[0] * y[2]
            J[2, 3] = J[3, 2] = x[2] * y[1] + x[0] * y[3]
            J[3, 3] = x[4] * y[0] + 2 * x[2] * y[2] + x[0] * y[4]
            d = _solve4(J, res)
            a -= d[0]
            bx -= d[1]
            by -= d[2]
            c -= d[3]
        if not ok:
            return E, 2
        for i in range(m):
            for j in range(m):
                E[kc, i * m + j] = ea * e0[i] * e1[j]
    return E, 0
