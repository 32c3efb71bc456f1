"""Channel geometry and solenoidal test fields shared by the kinetic and fluid solvers.

The channel is periodic in x with length ``Lx`` and bounded by walls at y = 0
and y = 1.  Kinetic cells and fluid pressure cells coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelGeometry:
    nx: int = 64
    ny: int = 64
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"need at least 8 cells per direction, got {self.nx}x{self.ny}")
        if self.Ly != 1.0:
            raise ValueError("channel height is fixed at 1")
        if not self.Lx > 0:
            raise ValueError("channel length must be positive")

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def xc(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def yc(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dy

    def centers(self):
        """Cell-centre coordinate arrays of shape (nx, ny)."""
        return np.meshgrid(self.xc, self.yc, indexing="ij")

    def refined(self, factor: int = 2) -> "ChannelGeometry":
        return ChannelGeometry(self.nx * factor, self.ny * factor, self.Lx, self.Ly)


@dataclass(frozen=True)
class FieldSample:
    """A test field and its derivatives at one time on the cell centres.

    ``w``, ``E`` have shape (nx, ny, 2); ``grad[..., a, b]`` = d w_a / d x_b;
    ``w_bottom`` and ``w_top`` hold wall values, shape (nx, 2).
    """

    w: np.ndarray
    grad: np.ndarray
    E: np.ndarray
    w_bottom: np.ndarray
    w_top: np.ndarray


class ShearField:
    """Perturbed planar shear with an analytic stream function.

    psi(x, y) = (a/pi) sin(pi y) + b f(t) sin(k x) sin^2(pi y),  k = 2 pi / Lx,
    velocity (d psi/dy, -d psi/dx).  The field is exactly solenoidal and
    tangential at y = 0, 1; the wall tangential velocity is +-a.  ``f(t) =
    cos(omega t)`` makes the field time dependent when ``omega`` is nonzero.
    """

    def __init__(self, a: float = 0.35, b: float = 0.15 / math.pi, Lx: float = 1.0,
                 omega: float = 0.0):
        self.a, self.b, self.Lx, self.omega = float(a), float(b), float(Lx), float(omega)
        self.k = 2 * math.pi / self.Lx

    def _bt(self, t):
        return self.b * math.cos(self.omega * t), -self.b * self.omega * math.sin(self.omega * t)

    def streamfunction(self, x, y, t: float = 0.0):
        bt, _ = self._bt(t)
        return self.a / math.pi * np.sin(math.pi * y) + bt * np.sin(self.k * x) * np.sin(math.pi * y) ** 2

    def velocity(self, x, y, t: float = 0.0):
        bt, _ = self._bt(t)
        k, p = self.k, math.pi
        u = self.a * np.cos(p * y) + bt * np.sin(k * x) * p * np.sin(2 * p * y)
        v = -bt * k * np.cos(k * x) * np.sin(p * y) ** 2
        return np.stack(np.broadcast_arrays(u, v), axis=-1)

    def gradient(self, x, y, t: float = 0.0):
        bt, _ = self._bt(t)
        k, p = self.k, math.pi
        ux = bt * k * np.cos(k * x) * p * np.sin(2 * p * y)
        uy = -self.a * p * np.sin(p * y) + bt * np.sin(k * x) * 2 * p * p * np.cos(2 * p * y)
        vx = bt * k * k * np.sin(k * x) * np.sin(p * y) ** 2
        vy = -bt * k * np.cos(k * x) * p * np.sin(2 * p * y)
        ux, uy, vx, vy = np.broadcast_arrays(ux, uy, vx, vy)
        return np.stack([np.stack([ux, uy], -1), np.stack([vx, vy], -1)], -2)

    def time_derivative(self, x, y, t: float = 0.0):
        _, dbt = self._bt(t)
        k, p = self.k, math.pi
        u = dbt * np.sin(k * x) * p * np.sin(2 * p * y)
        v = -dbt * k * np.cos(k * x) * np.sin(p * y) ** 2
        return np.stack(np.broadcast_arrays(u, v), axis=-1)

    def sup_norm(self) -> float:
        return abs(self.a) + abs(self.b) * math.pi + abs(self.b) * self.k

    def sample(self, t: float, geom: ChannelGeometry) -> FieldSample:
        X, Y = geom.centers()
        w = self.velocity(X, Y, t)
        G = self.gradient(X, Y, t)
        E = self.time_derivative(X, Y, t) + np.einsum("...b,...ab->...a", w, G)
        xw = geom.xc
        return FieldSample(w=w, grad=G, E=E,
                           w_bottom=self.velocity(xw, np.zeros_like(xw), t),
                           w_top=self.velocity(xw, np.ones_like(xw), t))


class ZeroField:
    """The test field w = 0."""

    def sup_norm(self) -> float:
        return 0.0

    def velocity(self, x, y, t: float = 0.0):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.zeros(x.shape + (2,))

    def sample(self, t: float, geom: ChannelGeometry) -> FieldSample:
        z = np.zeros((geom.nx, geom.ny, 2))
        zw = np.zeros((geom.nx, 2))
        return FieldSample(w=z, grad=np.zeros((geom.nx, geom.ny, 2, 2)), E=z, w_bottom=zw, w_top=zw)


def cell_gradient(U: np.ndarray, geom: ChannelGeometry) -> np.ndarray:
    """Gradient of a cell-centred field U (nx, ny, c): periodic central in x,
    second-order central in y with one-sided second-order rows at the walls."""
    gx = (np.roll(U, -1, axis=0) - np.roll(U, 1, axis=0)) / (2 * geom.dx)
    gy = np.gradient(U, geom.dy, axis=1, edge_order=2)
    return np.stack([gx, gy], axis=-1)


def wall_extrapolate(U: np.ndarray):
    """Third-order extrapolation of cell-centred rows to y = 0 and y = 1."""
    bottom = (15 * U[:, 0] - 10 * U[:, 1] + 3 * U[:, 2]) / 8
    top = (15 * U[:, -1] - 10 * U[:, -2] + 3 * U[:, -3]) / 8
    return bottom, top


class GridField:
    """Test field given by cell-centred snapshots at increasing times.

    Values are linearly interpolated in time; the time derivative is the
    piecewise-constant slope between snapshots (central average at interior
    snapshots).  Wall values come from :func:`wall_extrapolate` with the
    normal component set to zero.
    """

    def __init__(self, times, snapshots, geom: ChannelGeometry):
        self.times = np.asarray(times, dtype=float)
        self.snaps = np.asarray(snapshots, dtype=float)
        if self.snaps.shape[1:] != (geom.nx, geom.ny, 2):
            raise ValueError("snapshot shape does not match the geometry")
        if len(self.times) != len(self.snaps) or np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing and match the snapshots")
        self.geom = geom
        if len(self.times) > 1:
            self.dts = np.gradient(self.snaps, self.times, axis=0)
        else:
            self.dts = np.zeros_like(self.snaps)

    def sup_norm(self) -> float:
        b, t = [], []
        for s in self.snaps:
            wb, wt = wall_extrapolate(s)
            b.append(np.abs(wb[..., 0]).max())
            t.append(np.abs(wt[..., 0]).max())
        return float(max(np.linalg.norm(self.snaps, axis=-1).max(), max(b), max(t)))

    def _interp(self, arr, t):
        if t <= self.times[0]:
            return arr[0]
        if t >= self.times[-1]:
            return arr[-1]
        k = int(np.searchsorted(self.times, t)) - 1
        th = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1 - th) * arr[k] + th * arr[k + 1]

    def sample(self, t: float, geom: ChannelGeometry | None = None) -> FieldSample:
        geom = self.geom if geom is None else geom
        w = self._interp(self.snaps, t)
        G = cell_gradient(w, geom)
        E = self._interp(self.dts, t) + np.einsum("...b,...ab->...a", w, G)
        wb, wt = wall_extrapolate(w)
        wb[:, 1] = 0.0
        wt[:, 1] = 0.0
        return FieldSample(w=w, grad=G, E=E, w_bottom=wb, w_top=wt)
