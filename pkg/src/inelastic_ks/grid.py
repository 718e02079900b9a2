"""Uniform phase-space grids, Maxwellian-weighted norms and the trajectory shift.

A field over a grid is a numpy array of shape ``(Nx,)*n + (Nv,)*n``; the
first n axes index position cells, the last n index velocity cells.  Most
collision code works on the flattened view ``(Nx**n, Nv**n)``.
"""

from __future__ import annotations

import math
import string
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

DEFAULT_MAX_CELLS = 50_000_000


@dataclass(frozen=True)
class PhaseGrid:
    n: int
    Lx: float
    Lv: float
    Nx: int
    Nv: int
    max_cells: int = field(default=DEFAULT_MAX_CELLS, repr=False, compare=False)

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.n}")
        if self.Nx < 4 or self.Nv < 4:
            raise ConfigurationError("need at least 4 cells per axis")
        if not (self.Lx > 0 and self.Lv > 0):
            raise ConfigurationError("grid extents must be positive")
        if self.n_cells > self.max_cells:
            raise ConfigurationError(f"{self.n_cells} phase cells exceed the memory budget of {self.max_cells}")

    @property
    def dx(self):
        return 2.0 * self.Lx / self.Nx

    @property
    def dv(self):
        return 2.0 * self.Lv / self.Nv

    @property
    def n_cells(self):
        return (self.Nx * self.Nv) ** self.n

    @property
    def NX(self):
        """Number of position cells."""
        return self.Nx**self.n

    @property
    def NV(self):
        """Number of velocity cells."""
        return self.Nv**self.n

    @property
    def shape(self):
        return (self.Nx,) * self.n + (self.Nv,) * self.n

    @property
    def cell_volume(self):
        return (self.dx * self.dv) ** self.n

    @property
    def x_axis(self):
        return -self.Lx + (np.arange(self.Nx) + 0.5) * self.dx

    @property
    def v_axis(self):
        return -self.Lv + (np.arange(self.Nv) + 0.5) * self.dv

    @cached_property
    def x_points(self):
        """Position cell centres, shape (Nx**n, n), C order."""
        return _mesh(self.x_axis, self.n)

    @cached_property
    def v_points(self):
        """Velocity cell centres, shape (Nv**n, n), C order."""
        return _mesh(self.v_axis, self.n)

    @cached_property
    def x_sq(self):
        return np.sum(self.x_points**2, axis=1)

    @cached_property
    def v_sq(self):
        return np.sum(self.v_points**2, axis=1)

    @cached_property
    def velocity(self):
        return VelocityLattice(self.n, self.Nv, self.Lv)

    def flat(self, values):
        return np.asarray(values).reshape(self.NX, self.NV)

    def full(self, values):
        return np.asarray(values).reshape(self.shape)

    def to_dict(self):
        return {"n": self.n, "Lx": self.Lx, "Lv": self.Lv, "Nx": self.Nx, "Nv": self.Nv}


@dataclass(frozen=True)
class VelocityLattice:
    """The velocity factor of a phase grid; collision operators only need this."""

    n: int
    Nv: int
    Lv: float

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.n}")
        if self.Nv < 4 or not self.Lv > 0:
            raise ConfigurationError("velocity lattice needs Nv >= 4 and Lv > 0")

    @property
    def dv(self):
        return 2.0 * self.Lv / self.Nv

    @property
    def NV(self):
        return self.Nv**self.n

    @property
    def cell_volume(self):
        return self.dv**self.n

    @property
    def axis(self):
        return -self.Lv + (np.arange(self.Nv) + 0.5) * self.dv

    @cached_property
    def points(self):
        return _mesh(self.axis, self.n)

    @cached_property
    def sq(self):
        return np.sum(self.points**2, axis=1)


def _mesh(axis, n):
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class MaxwellianEnvelope:
    """c exp(-alpha |x|^2 - beta |xi|^2)."""

    alpha: float
    beta: float
    c: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigurationError("envelope exponents must be positive")
        if not self.c >= 0:
            raise ConfigurationError("envelope amplitude must be nonnegative")

    def sample(self, grid, t=0.0, lab=False):
        """Values on the grid (flattened shape).  ``lab=True`` gives the free-streamed bound."""
        if lab and t != 0.0:
            x = grid.x_points[:, None, :] - t * grid.v_points[None, :, :]
            xs = np.sum(x * x, axis=-1)
        else:
            xs = grid.x_sq[:, None]
        return self.c * np.exp(-self.alpha * xs - self.beta * grid.v_sq[None, :])


@dataclass(frozen=True)
class DistributionField:
    """Nonnegative field on a grid at time ``t``; ``sharp`` marks trajectory coordinates."""

    grid: PhaseGrid
    values: np.ndarray
    t: float = 0.0
    sharp: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.n_cells:
            raise ConfigurationError(f"field has {v.size} values, grid expects {self.grid.n_cells}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("field values must be finite")
        if np.any(v < 0):
            raise ConfigurationError("field values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.t < 0:
            raise ConfigurationError("time label must be nonnegative")

    @property
    def flat(self):
        return self.values.reshape(self.grid.NX, self.grid.NV)


def maxwellian_norm(values, grid, alpha, beta):
    """sup |f| exp(alpha |x|^2 + beta |xi|^2) over cell centres, evaluated in log space."""
    f = np.abs(grid.flat(values))
    nz = f > 0
    if not nz.any():
        return 0.0
    logw = alpha * grid.x_sq[:, None] + beta * grid.v_sq[None, :]
    with np.errstate(divide="ignore"):
        logs = np.where(nz, np.log(np.where(nz, f, 1.0)) + logw, -np.inf)
    return float(np.exp(logs.max()))


def l1_norm(values, grid):
    return float(np.abs(grid.flat(values)).sum() * grid.cell_volume)


def moments(values, grid):
    """(mass, momentum vector, integral of f |xi|^2) by the midpoint rule."""
    f = grid.flat(values)
    fv = f.sum(axis=0) * grid.cell_volume
    mass = float(fv.sum())
    momentum = fv @ grid.v_points
    energy = float(fv @ grid.v_sq)
    return mass, momentum, energy


# -- trajectory shift ------------------------------------------------------------

def shift_matrices(grid, t):
    """Per-velocity linear interpolation operators for x -> x + t xi along one axis.

    Returns an array ``S[v, i, j]`` with ``(S[v] @ g)[i] = g(x_i + t v)`` for
    a piecewise linear g that vanishes half a cell outside the box.
    """
    x = grid.x_axis
    q = (x[None, :, None] + t * grid.v_axis[:, None, None] - x[None, None, :]) / grid.dx
    return np.maximum(0.0, 1.0 - np.abs(q))


def _shift(values, grid, t):
    f = grid.full(values)
    if t == 0.0:
        return f.copy()
    mats = shift_matrices(grid, t)
    n = grid.n
    letters = string.ascii_letters
    xs = letters[:n]
    vs = letters[n : 2 * n]
    out = f
    for d in range(n):
        new = letters[2 * n]
        src = xs[: d] + new + xs[d + 1 :] + vs
        dst = xs + vs
        out = np.einsum(f"{vs[d]}{xs[d]}{new},{src}->{dst}", mats, out, optimize=True)
    return out


def sharp_transform(values, grid, t):
    """f^#(x, xi) = f(x + t xi, xi)."""
    return _shift(values, grid, t)


def unsharp_transform(values, grid, t):
    """f(x, xi) = f^#(x - t xi, xi)."""
    return _shift(values, grid, -t)


# -- snapshots -------------------------------------------------------------------

_MAGIC = b"KSF1"
_HEADER = struct.Struct("<4siiiddd?")


def write_snapshot(path, values, grid, t, sharp=True, fmt="bin"):
    f = np.ascontiguousarray(grid.full(values), dtype="<f8")
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, grid.n, grid.Nx, grid.Nv, grid.Lx, grid.Lv, t, bool(sharp)))
            fh.write(f.tobytes(order="C"))
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"# n={grid.n} Nx={grid.Nx} Nv={grid.Nv} Lx={grid.Lx!r} Lv={grid.Lv!r} t={t!r} sharp={int(sharp)}\n")
            for v in f.ravel():
                fh.write(repr(float(v)) + "\n")
    else:
        raise ConfigurationError(f"unknown snapshot format {fmt!r}")


def read_snapshot(path):
    """Inverse of :func:`write_snapshot` for the binary layout."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, n, Nx, Nv, Lx, Lv, t, sharp = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ConfigurationError(f"{path} is not a field snapshot")
        grid = PhaseGrid(n, Lx, Lv, Nx, Nv)
        data = np.frombuffer(fh.read(), dtype="<f8")
    return DistributionField(grid, data.reshape(grid.shape).copy(), t=t, sharp=sharp)


def gaussian_mass(c, alpha, beta, n):
    """Closed-form integral of c exp(-alpha|x|^2 - beta|xi|^2) over R^n x R^n."""
    return c * (math.pi / alpha) ** (n / 2) * (math.pi / beta) ** (n / 2)
