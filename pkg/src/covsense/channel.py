"""Clustered mmWave channel model: array responses, scenarios, realizations
and the exact spatial covariance.

Conventions used throughout the package:

* ``vec`` is column-major (``X.ravel(order="F")``), so ``vec(H)`` stacks the
  columns of the ``N_r x N_t`` channel and ``vec(x y^T) = y kron x``.
* Angles are radians. Degrees only appear at the JSON boundary.
* The covariance is ``R = E[vec(H) vec(H)^H]`` and has trace 1 when the
  cluster powers sum to one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

MAX_SEPARATION_ATTEMPTS = 10_000


class ConfigurationError(ValueError):
    """Raised for invalid array geometries or infeasible scenario settings."""


class ArrayKind(str, Enum):
    ULA = "ULA"
    USPA = "USPA"


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear (ULA) or uniform square planar (USPA) array.

    ``spacing`` defaults to half a wavelength.
    """

    kind: ArrayKind
    num_antennas: int
    wavelength: float = SPEED_OF_LIGHT / 28e9
    spacing: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ArrayKind(self.kind))
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise ConfigurationError(f"num_antennas must be a positive integer, got {self.num_antennas}")
        if self.kind is ArrayKind.USPA and math.isqrt(self.num_antennas) ** 2 != self.num_antennas:
            raise ConfigurationError(f"USPA needs a perfect-square element count, got {self.num_antennas}")
        if not self.spacing > 0 or not self.wavelength > 0:
            raise ConfigurationError("spacing and wavelength must be positive")

    @property
    def side(self) -> int:
        """Elements per axis (``N`` for a ULA, ``sqrt(N)`` for a USPA)."""
        if self.kind is ArrayKind.USPA:
            return math.isqrt(self.num_antennas)
        return self.num_antennas

    @property
    def phase_scale(self) -> float:
        return 2 * np.pi * self.spacing / self.wavelength

    @classmethod
    def from_carrier(cls, kind, num_antennas, carrier_hz=28e9, spacing=None):
        return cls(ArrayKind(kind), num_antennas, SPEED_OF_LIGHT / carrier_hz, spacing)


def _ula_vector(n, phase, norm):
    return np.exp(1j * np.arange(n)[:, None] * np.atleast_1d(phase)[None, :]) / norm


def array_response_axes(geom: ArrayGeometry, azimuth, elevation=0.0):
    """Per-axis USPA responses ``(a_y, a_z)``, each of shape ``(sqrt(N), n_angles)``."""
    azimuth = np.atleast_1d(np.asarray(azimuth, dtype=float))
    elevation = np.broadcast_to(np.asarray(elevation, dtype=float), azimuth.shape)
    n = geom.side
    norm = geom.num_antennas ** 0.25
    a_y = _ula_vector(n, geom.phase_scale * np.sin(azimuth) * np.sin(elevation), norm)
    a_z = _ula_vector(n, geom.phase_scale * np.cos(elevation), norm)
    return a_y, a_z


def array_responses(geom: ArrayGeometry, azimuth, elevation=0.0) -> np.ndarray:
    """Array responses for many directions, one column per angle."""
    azimuth = np.atleast_1d(np.asarray(azimuth, dtype=float))
    if geom.kind is ArrayKind.ULA:
        return _ula_vector(geom.num_antennas, geom.phase_scale * np.sin(azimuth), np.sqrt(geom.num_antennas))
    a_y, a_z = array_response_axes(geom, azimuth, elevation)
    # column-wise Kronecker product a_y kron a_z
    return (a_y[:, None, :] * a_z[None, :, :]).reshape(geom.num_antennas, -1)


def array_response(geom: ArrayGeometry, azimuth: float, elevation: float = 0.0) -> np.ndarray:
    """Unit-norm steering vector. The elevation is ignored for a ULA."""
    return array_responses(geom, azimuth, elevation)[:, 0]


@dataclass(frozen=True)
class AngularSpread:
    """Half-widths (radians) of the uniform ray-angle intervals around each center."""

    tx_azimuth: float = np.deg2rad(10.2)
    tx_elevation: float = 0.0
    rx_azimuth: float = np.deg2rad(15.5)
    rx_elevation: float = np.deg2rad(6.0)

    def __post_init__(self):
        if min(self.as_tuple()) < 0:
            raise ConfigurationError("angular spreads must be nonnegative")

    def as_tuple(self):
        return (self.tx_azimuth, self.tx_elevation, self.rx_azimuth, self.rx_elevation)

    @classmethod
    def from_degrees(cls, tx_azimuth, tx_elevation, rx_azimuth, rx_elevation):
        return cls(*np.deg2rad([tx_azimuth, tx_elevation, rx_azimuth, rx_elevation]).tolist())


@dataclass(frozen=True)
class ChannelScenario:
    """Large-scale cluster geometry, fixed across snapshots.

    ``center_angles`` has shape ``(K, 4)`` and ``ray_angles`` shape
    ``(K, L, 4)``, with the last axis ordered as
    ``(tx azimuth, tx elevation, rx azimuth, rx elevation)``.
    """

    tx_geometry: ArrayGeometry
    rx_geometry: ArrayGeometry
    cluster_powers: np.ndarray
    center_angles: np.ndarray
    ray_angles: np.ndarray
    spreads: AngularSpread = field(default_factory=AngularSpread)

    @property
    def num_clusters(self) -> int:
        return self.ray_angles.shape[0]

    @property
    def rays_per_cluster(self) -> int:
        return self.ray_angles.shape[1]

    @property
    def dims(self):
        return self.tx_geometry.num_antennas, self.rx_geometry.num_antennas

    def ray_responses(self):
        """Transmit and receive responses of every ray, shapes ``(N_t, KL)`` and ``(N_r, KL)``."""
        ang = self.ray_angles.reshape(-1, 4)
        a_t = array_responses(self.tx_geometry, ang[:, 0], ang[:, 1])
        a_r = array_responses(self.rx_geometry, ang[:, 2], ang[:, 3])
        return a_t, a_r

    def ray_weights(self) -> np.ndarray:
        """``gamma_k / sqrt(L)`` for every ray, flattened cluster-major."""
        gamma = np.sqrt(np.asarray(self.cluster_powers, dtype=float))
        return np.repeat(gamma, self.rays_per_cluster) / np.sqrt(self.rays_per_cluster)

    def to_dict(self) -> dict:
        def geom(g):
            return {"kind": g.kind.value, "num_antennas": g.num_antennas,
                    "wavelength_m": g.wavelength, "spacing_m": g.spacing}

        return {
            "tx_geometry": geom(self.tx_geometry),
            "rx_geometry": geom(self.rx_geometry),
            "cluster_powers": np.asarray(self.cluster_powers).tolist(),
            "center_angles_deg": np.rad2deg(self.center_angles).tolist(),
            "ray_angles_deg": np.rad2deg(self.ray_angles).tolist(),
            "spreads_deg": np.rad2deg(self.spreads.as_tuple()).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelScenario":
        def geom(g):
            return ArrayGeometry(ArrayKind(g["kind"]), int(g["num_antennas"]),
                                 float(g["wavelength_m"]), float(g["spacing_m"]))

        return cls(
            geom(d["tx_geometry"]),
            geom(d["rx_geometry"]),
            np.asarray(d["cluster_powers"], dtype=float),
            np.deg2rad(np.asarray(d["center_angles_deg"], dtype=float)),
            np.deg2rad(np.asarray(d["ray_angles_deg"], dtype=float)),
            AngularSpread.from_degrees(*d["spreads_deg"]),
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ChannelScenario":
        return cls.from_dict(json.loads(text))


def sample_cluster_powers(rng: np.random.Generator, num_clusters: int) -> np.ndarray:
    """Fraction powers ``u^2 * 10^(-z/10)`` (u ~ U(0,1), z ~ N(0, 4 dB)), normalized to sum 1."""
    if num_clusters < 1:
        raise ConfigurationError("need at least one cluster")
    u = rng.uniform(size=num_clusters)
    z = rng.normal(0.0, 4.0, size=num_clusters)
    p = u**2 * 10 ** (-z / 10)
    # u == 0 has probability zero but would break positivity
    p = np.maximum(p, np.finfo(float).tiny)
    return p / p.sum()


def circular_distance(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % (2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def _separated_centers(rng, num_clusters, spread):
    if num_clusters * 2 * spread > 2 * np.pi:
        raise ConfigurationError(
            f"cannot separate {num_clusters} centers by {np.rad2deg(spread):.2f} deg on the circle")
    for _ in range(MAX_SEPARATION_ATTEMPTS):
        c = rng.uniform(0, 2 * np.pi, size=num_clusters)
        if num_clusters == 1:
            return c
        i, j = np.triu_indices(num_clusters, 1)
        if np.all(circular_distance(c[i], c[j]) >= spread):
            return c
    raise ConfigurationError("center-angle rejection sampling did not find a separated configuration")


def sample_scenario(rng: np.random.Generator, tx_geometry: ArrayGeometry, rx_geometry: ArrayGeometry,
                    num_clusters: int, rays_per_cluster: int,
                    spreads: AngularSpread | None = None) -> ChannelScenario:
    """Draw cluster centers, per-ray angles and cluster powers.

    Every center angle (azimuth and elevation, tx and rx) is uniform on
    ``[0, 2 pi)`` with pairwise circular separation of at least the matching
    spread; rays are uniform within +/- the spread of their center.
    """
    if num_clusters < 1 or rays_per_cluster < 1:
        raise ConfigurationError("num_clusters and rays_per_cluster must be >= 1")
    spreads = spreads or AngularSpread()
    widths = np.asarray(spreads.as_tuple())
    centers = np.column_stack([_separated_centers(rng, num_clusters, w) for w in widths])
    offsets = rng.uniform(-1.0, 1.0, size=(num_clusters, rays_per_cluster, 4)) * widths
    rays = centers[:, None, :] + offsets
    powers = sample_cluster_powers(rng, num_clusters)
    return ChannelScenario(tx_geometry, rx_geometry, powers, centers, rays, spreads)


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray
    H: np.ndarray


def complex_normal(rng: np.random.Generator, size, variance=1.0) -> np.ndarray:
    """Circular CN(0, variance) samples."""
    scale = np.sqrt(np.asarray(variance) / 2)
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * scale


def realize_channel(scenario: ChannelScenario, rng: np.random.Generator, gains=None) -> ChannelRealization:
    """One small-scale fading draw of the ``N_r x N_t`` channel.

    ``gains`` (shape ``(K, L)``) overrides the random draw.
    """
    K, L = scenario.num_clusters, scenario.rays_per_cluster
    if gains is None:
        var = np.repeat(np.asarray(scenario.cluster_powers, dtype=float)[:, None], L, axis=1)
        gains = complex_normal(rng, (K, L), var)
    gains = np.asarray(gains, dtype=complex).reshape(K, L)
    a_t, a_r = scenario.ray_responses()
    H = (a_r * gains.ravel()) @ a_t.conj().T / np.sqrt(L)
    return ChannelRealization(gains, H)


def realize_channels(scenario: ChannelScenario, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` independent channels stacked as ``(count, N_r, N_t)``."""
    K, L = scenario.num_clusters, scenario.rays_per_cluster
    var = np.repeat(np.asarray(scenario.cluster_powers, dtype=float), L)
    g = complex_normal(rng, (count, K * L), var)
    a_t, a_r = scenario.ray_responses()
    return np.einsum("rk,tk,sk->trs", a_r, g, a_t.conj()) / np.sqrt(L)


@dataclass(frozen=True)
class CovarianceModel:
    """Exact covariance ``R = F F^H`` with ``F`` the weighted ``conj(a_t) kron a_r`` columns."""

    R: np.ndarray
    factor: np.ndarray
    singular_values: np.ndarray
    dims: tuple


def covariance_factor(scenario: ChannelScenario) -> np.ndarray:
    a_t, a_r = scenario.ray_responses()
    N_t, N_r = scenario.dims
    cols = (a_t.conj()[:, None, :] * a_r[None, :, :]).reshape(N_t * N_r, -1)
    return cols * scenario.ray_weights()


def build_covariance(scenario: ChannelScenario) -> CovarianceModel:
    F = covariance_factor(scenario)
    R = F @ F.conj().T
    R = (R + R.conj().T) / 2
    sv = np.linalg.svd(F, compute_uv=False) ** 2
    n = F.shape[0]
    sv = np.concatenate([sv, np.zeros(max(0, n - sv.size))])[:n]
    return CovarianceModel(R, F, sv, scenario.dims)


def scenario_from_rays(tx_geometry, rx_geometry, ray_angles, cluster_powers=None,
                       spreads=None) -> ChannelScenario:
    """Deterministic scenario with given ray angles ``(K, L, 4)``, centers set to the ray means."""
    rays = np.asarray(ray_angles, dtype=float)
    if rays.ndim == 2:
        rays = rays[None]
    K = rays.shape[0]
    p = np.full(K, 1.0 / K) if cluster_powers is None else np.asarray(cluster_powers, float)
    return ChannelScenario(tx_geometry, rx_geometry, p / p.sum(), rays.mean(axis=1), rays,
                           spreads or AngularSpread(0.0, 0.0, 0.0, 0.0))


def geometry_pair(kind, N_t: int, N_r: int, carrier_hz: float = 28e9) -> Sequence[ArrayGeometry]:
    return (ArrayGeometry.from_carrier(kind, N_t, carrier_hz), ArrayGeometry.from_carrier(kind, N_r, carrier_hz))
