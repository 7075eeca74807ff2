"""Reproducible initial-condition sampling for coherent states.

Every trajectory owns a counter-based random stream keyed by
``(master_seed, trajectory_index)``, so ensembles are bit-identical for a
fixed seed no matter how work is scheduled or how many workers run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WIGNER = "wigner"
POSITIVE_P = "positive_p"


@dataclass(frozen=True)
class InitialStateSpec:
    """Coherent-state amplitude and the representation to sample it in."""

    amplitude: complex
    representation: str

    def __post_init__(self):
        if self.representation not in (WIGNER, POSITIVE_P):
            raise ValueError(f"unknown representation {self.representation!r}")

    @property
    def n_particles(self) -> float:
        return abs(self.amplitude) ** 2


@dataclass
class RandomStream:
    """One trajectory's private Gaussian stream (Philox, ziggurat normals)."""

    seed: int
    stream_index: int
    draws: int = 0
    _gen: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self._gen is None:
            key = np.array(
                [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_index & 0xFFFFFFFFFFFFFFFF],
                dtype=np.uint64,
            )
            self._gen = np.random.Generator(np.random.Philox(key=key))

    def normals(self, n: int) -> np.ndarray:
        """Draw n independent standard real Gaussians."""
        self.draws += n
        return self._gen.standard_normal(n)


def stream_for_trajectory(master_seed: int, trajectory_index: int) -> RandomStream:
    """Independent, reproducible stream for one trajectory.

    Distinct (seed, index) pairs key distinct Philox counters, giving
    statistically independent sequences; the same pair always replays the
    same sequence regardless of scheduling or worker count.
    """
    if trajectory_index < 0:
        raise ValueError("trajectory index must be nonnegative")
    return RandomStream(master_seed, trajectory_index)


def sample_wigner_coherent(spec: InitialStateSpec, stream: RandomStream) -> complex:
    """alpha0 plus complex vacuum noise with <zeta* zeta> = 1/2.

    Real and imaginary noise parts are independent with variance 1/4 each.
    """
    if spec.representation != WIGNER:
        raise ValueError("spec is not a Wigner-representation state")
    w = stream.normals(2)
    return complex(spec.amplitude) + 0.5 * (w[0] + 1j * w[1])


def sample_positive_p_coherent(spec: InitialStateSpec) -> tuple[complex, complex]:
    """Deterministic doubled-phase-space start (alpha1, alpha2*).

    A coherent state is a delta distribution here, so no randomness is
    consumed and alpha2* alpha1 equals |alpha0|^2 exactly at t = 0.
    """
    if spec.representation != POSITIVE_P:
        raise ValueError("spec is not a positive-P-representation state")
    a0 = complex(spec.amplitude)
    return (a0, a0.conjugate())
