"""Synthetic motion generation.

A motion is a voluntary position trajectory plus a vibration force, each a
finite sum of sinusoids with randomly drawn frequency, phase and amplitude,
plus white measurement noise. Vibration components optionally drift to a
new nearby frequency mid-run via a linear amplitude crossfade, so the total
signal stays continuous through the transition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

TWO_PI = 2.0 * math.pi


@dataclass
class SineComponent:
    nu: float                    # frequency, Hz
    phi: float                   # phase, rad
    xi: float                    # amplitude, >= 0
    nu_prime: float | None = None   # post-drift frequency
    phi_prime: float | None = None  # post-drift phase (drawn independently)


@dataclass
class SynthParams:
    """Distribution parameters for one signal class (vibration or voluntary).

    s_xi is a numerator: the per-component amplitude std is s_xi / N for a
    draw of N components. frequency_law is "uniform" on [a_nu, b_nu) or
    "exponential" with scale (b_nu - a_nu)/5 shifted by a_nu (favors the low
    end of the band; not truncated above).
    """

    a_nu: float
    b_nu: float
    a_n: int
    b_n: int
    xi_total: float
    s_xi: float
    s_nu: float = 0.0            # frequency drift std, Hz
    frequency_law: str = "uniform"
    a_phi: float = 0.0
    b_phi: float = TWO_PI
    # scale the amplitude ladder so the expected total stays xi_total for any
    # drawn count; a sweep over the component count then splits a fixed energy
    # budget instead of adding energy with every component
    normalize_total: bool = False

    def validate(self) -> None:
        if not (0.0 < self.a_nu < self.b_nu):
            raise ValueError(f"need 0 < a_nu < b_nu, got {self.a_nu}, {self.b_nu}")
        if self.a_n < 1 or self.b_n < self.a_n:
            raise ValueError(f"need 1 <= a_n <= b_n, got {self.a_n}, {self.b_n}")
        if self.xi_total <= 0.0 or self.s_xi < 0.0 or self.s_nu < 0.0:
            raise ValueError("xi_total must be > 0 and stds >= 0")
        if self.frequency_law not in ("uniform", "exponential"):
            raise ValueError(f"unknown frequency_law {self.frequency_law!r}")


def vibration_defaults() -> SynthParams:
    return SynthParams(a_nu=6.0, b_nu=10.0, a_n=1, b_n=3,
                       xi_total=0.6, s_xi=0.05, s_nu=0.5,
                       frequency_law="uniform")


def voluntary_defaults() -> SynthParams:
    return SynthParams(a_nu=0.01, b_nu=0.3, a_n=7, b_n=10,
                       xi_total=10.0, s_xi=0.3,
                       frequency_law="exponential")


def sample_spec(p: SynthParams, rng: np.random.Generator) -> list[SineComponent]:
    """Draw one component set: N ~ int-uniform[a_n, b_n], then per component
    a frequency by p.frequency_law, a phase ~ U[a_phi, b_phi) and an
    amplitude ~ N(m_k, s_xi/N) clamped at zero, where the means
    m_k = (xi_total/b_n)*(b_n - k) decrease linearly so the first component
    dominates; with normalize_total the ladder is rescaled to
    m_k = xi_total*2*(N - k)/(N*(N + 1)) so the means sum to xi_total for
    every drawn count N.
    """
    p.validate()
    n = int(rng.integers(p.a_n, p.b_n + 1))
    comps = []
    for k in range(n):
        if p.frequency_law == "uniform":
            nu = float(rng.uniform(p.a_nu, p.b_nu))
        else:
            nu = float(p.a_nu + rng.exponential((p.b_nu - p.a_nu) / 5.0))
        phi = float(rng.uniform(p.a_phi, p.b_phi))
        if p.normalize_total:
            m_k = p.xi_total * 2.0 * (n - k) / (n * (n + 1))
        else:
            m_k = (p.xi_total / p.b_n) * (p.b_n - k)
        xi = max(0.0, float(rng.normal(m_k, p.s_xi / n)))
        comps.append(SineComponent(nu=nu, phi=phi, xi=xi))
    return comps


@dataclass
class MotionSpec:
    voluntary: list[SineComponent] = field(default_factory=list)
    vibration: list[SineComponent] = field(default_factory=list)
    s_n: float = 0.001           # white force-noise std
    drift_start: float = 12.25   # s
    drift_duration: float = 0.5  # s
    seed: int | None = None

    def validate(self) -> None:
        for c in [*self.voluntary, *self.vibration]:
            if c.nu <= 0.0 or c.xi < 0.0:
                raise ValueError(f"component needs nu > 0 and xi >= 0: {c}")
            if c.nu_prime is not None and c.nu_prime <= 0.0:
                raise ValueError(f"drifted frequency must be > 0: {c}")
        if self.s_n < 0.0 or self.drift_start < 0.0 or self.drift_duration < 0.0:
            raise ValueError("s_n, drift_start and drift_duration must be >= 0")


def apply_drift(spec: MotionSpec, p: SynthParams, rng: np.random.Generator) -> MotionSpec:
    """Assign each vibration component a drifted frequency ~ N(nu, s_nu)
    and an independently drawn phase for the post-drift sinusoid.
    """
    for c in spec.vibration:
        c.nu_prime = abs(float(rng.normal(c.nu, p.s_nu)))
        c.phi_prime = float(rng.uniform(p.a_phi, p.b_phi))
    return spec


def make_motion(seed: int,
                vib: SynthParams | None = None,
                vol: SynthParams | None = None,
                s_n: float = 0.001,
                drift_start: float = 12.25,
                drift_duration: float = 0.5,
                drift: bool = True) -> MotionSpec:
    """Sample a full motion: voluntary components, vibration components and
    (optionally) their drift targets, all from one seeded generator.
    """
    vib = vib if vib is not None else vibration_defaults()
    vol = vol if vol is not None else voluntary_defaults()
    rng = np.random.default_rng(seed)
    spec = MotionSpec(voluntary=sample_spec(vol, rng),
                      vibration=sample_spec(vib, rng),
                      s_n=s_n, drift_start=drift_start,
                      drift_duration=drift_duration, seed=seed)
    if drift and vib.s_nu > 0.0:
        apply_drift(spec, vib, rng)
    spec.validate()
    return spec


def drift_crossfade(t, start: float, duration: float):
    """Linear crossfade weights (w_old, w_new): (1,0) before the window,
    (0,1) after, complementary ramps inside. Continuous in t; both weights
    equal 1/2 at the midpoint.
    """
    t = np.asarray(t, dtype=np.float64)
    if duration <= 0.0:
        w_new = (t >= start).astype(np.float64)
    else:
        w_new = np.clip((t - start) / duration, 0.0, 1.0)
    return 1.0 - w_new, w_new


def voluntary_position(spec: MotionSpec, t):
    t = np.asarray(t, dtype=np.float64)
    x = np.zeros_like(t)
    for c in spec.voluntary:
        x += c.xi * np.sin(TWO_PI * c.nu * t + c.phi)
    return x


def voluntary_velocity(spec: MotionSpec, t):
    # analytic derivative of voluntary_position
    t = np.asarray(t, dtype=np.float64)
    v = np.zeros_like(t)
    for c in spec.voluntary:
        v += c.xi * TWO_PI * c.nu * np.cos(TWO_PI * c.nu * t + c.phi)
    return v


def voluntary_accel(spec: MotionSpec, t):
    # analytic second derivative of voluntary_position
    t = np.asarray(t, dtype=np.float64)
    a = np.zeros_like(t)
    for c in spec.voluntary:
        a -= c.xi * (TWO_PI * c.nu) ** 2 * np.sin(TWO_PI * c.nu * t + c.phi)
    return a


def vibration_force(spec: MotionSpec, t):
    t = np.asarray(t, dtype=np.float64)
    f = np.zeros_like(t)
    fade = None
    for c in spec.vibration:
        if c.nu_prime is None:
            f += c.xi * np.sin(TWO_PI * c.nu * t + c.phi)
        else:
            if fade is None:
                fade = drift_crossfade(t, spec.drift_start, spec.drift_duration)
            w_old, w_new = fade
            f += c.xi * (w_old * np.sin(TWO_PI * c.nu * t + c.phi)
                         + w_new * np.sin(TWO_PI * c.nu_prime * t + c.phi_prime))
    return f


def evaluate(spec: MotionSpec, t, rng: np.random.Generator | None = None):
    """Motion signals at time(s) t: (x_r, f_nu, f_n).

    f_n is freshly drawn white noise ~ N(0, s_n) when rng is given and
    s_n > 0, else zeros.
    """
    t = np.asarray(t, dtype=np.float64)
    x_r = voluntary_position(spec, t)
    f_nu = vibration_force(spec, t)
    if rng is not None and spec.s_n > 0.0:
        f_n = rng.normal(0.0, spec.s_n, t.shape)
    else:
        f_n = np.zeros_like(t)
    return x_r, f_nu, f_n


# --- persistence --------------------------------------------------------------

def _comp_to_dict(c: SineComponent) -> dict:
    d = {"nu": c.nu, "phi": c.phi, "xi": c.xi}
    if c.nu_prime is not None:
        d["nu_prime"] = c.nu_prime
        d["phi_prime"] = c.phi_prime
    return d


def motion_to_dict(spec: MotionSpec) -> dict:
    return {
        "seed": spec.seed,
        "s_n": spec.s_n,
        "drift_start": spec.drift_start,
        "drift_duration": spec.drift_duration,
        "voluntary": [_comp_to_dict(c) for c in spec.voluntary],
        "vibration": [_comp_to_dict(c) for c in spec.vibration],
    }


def motion_from_dict(d: dict) -> MotionSpec:
    def comp(cd):
        return SineComponent(nu=float(cd["nu"]), phi=float(cd["phi"]), xi=float(cd["xi"]),
                             nu_prime=cd.get("nu_prime"), phi_prime=cd.get("phi_prime"))
    spec = MotionSpec(
        voluntary=[comp(c) for c in d.get("voluntary", [])],
        vibration=[comp(c) for c in d.get("vibration", [])],
        s_n=float(d.get("s_n", 0.001)),
        drift_start=float(d.get("drift_start", 12.25)),
        drift_duration=float(d.get("drift_duration", 0.5)),
        seed=d.get("seed"),
    )
    spec.validate()
    return spec


def save_motion(path, spec: MotionSpec) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(motion_to_dict(spec), fh, sort_keys=True)


def load_motion(path) -> MotionSpec:
    with open(path) as fh:
        return motion_from_dict(yaml.safe_load(fh))
