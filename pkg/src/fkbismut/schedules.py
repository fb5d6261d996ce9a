"""Deterministic piecewise-linear weight schedules k and l."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ScheduleError(ValueError):
    pass


_TOL = 1e-12


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear function on [0, T] through ``(breakpoints, values)``.

    ``role`` is one of ``"k_grad"`` (first-derivative weight), ``"k"``
    (generator/Hessian weight, dead from some S < T on) or ``"l"`` (equal
    to 1 up to S, zero at T).
    """

    breakpoints: tuple
    values: tuple
    role: str
    name: str = "custom"

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or len(b) < 2 or len(b) != len(v):
            raise ScheduleError("need at least two breakpoints with matching values")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ScheduleError("breakpoints must start at 0 and increase strictly")
        if not np.all(np.isfinite(v)):
            raise ScheduleError("non-finite schedule value")
        if self.role not in ("k_grad", "k", "l"):
            raise ScheduleError(f"unknown role {self.role!r}")
        if self.role in ("k_grad", "k") and abs(v[0] - 1.0) > _TOL:
            raise ScheduleError("k must start at 1")
        if abs(v[-1]) > _TOL:
            raise ScheduleError(f"{self.role} must vanish at T")
        if self.role == "l" and abs(v[0] - 1.0) > _TOL:
            raise ScheduleError("l must start at 1")

    @property
    def T(self):
        return float(self.breakpoints[-1])

    def eval(self, s):
        """(value, right derivative) at time ``s`` in [0, T]."""
        s = float(s)
        if s < -_TOL or s > self.T * (1 + 1e-12) + _TOL:
            raise ScheduleError(f"time {s} outside [0, {self.T}]")
        val, der = self.eval_many(np.array([s]))
        return float(val[0]), float(der[0])

    def eval_many(self, s):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        s = np.clip(np.asarray(s, dtype=float), 0.0, b[-1])
        slopes = np.diff(v) / np.diff(b)
        # right derivative: interval i with b[i] <= s < b[i+1]; last interval at T
        idx = np.clip(np.searchsorted(b, s, side="right") - 1, 0, len(slopes) - 1)
        return np.interp(s, b, v), slopes[idx]

    def plateau_end(self):
        """Largest S with l == 1 on [0, S] (role l)."""
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        S = 0.0
        for i in range(len(b) - 1):
            if abs(v[i] - 1) <= _TOL and abs(v[i + 1] - 1) <= _TOL:
                S = b[i + 1]
            else:
                break
        return S

    def support_end(self):
        """Smallest S with k == 0 on [S, T] (role k)."""
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        S = b[-1]
        for i in range(len(b) - 1, 0, -1):
            if abs(v[i]) <= _TOL and abs(v[i - 1]) <= _TOL:
                S = b[i - 1]
            else:
                break
        return S

    def integral_sq_derivative(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        slopes = np.diff(v) / np.diff(b)
        return float(np.sum(slopes**2 * np.diff(b)))

    def to_dict(self):
        return {"name": self.name, "role": self.role, "breakpoints": list(map(float, self.breakpoints)),
                "values": list(map(float, self.values))}


def gradient_k(T):
    """k_s = (T - s) / T."""
    return Schedule((0.0, float(T)), (1.0, 0.0), "k_grad", "linear")


def generator_k(T):
    """k_s = max((T - 2s) / T, 0)."""
    return Schedule((0.0, T / 2, float(T)), (1.0, 0.0, 0.0), "k", "default")


def generator_l(T):
    """l_s = min(1, 2 (T - s) / T)."""
    return Schedule((0.0, T / 2, float(T)), (1.0, 1.0, 0.0), "l", "default")


def knee_k(T, knee=0.5, level=0.5):
    """Alternative gradient schedule with a knee at (knee*T, level)."""
    return Schedule((0.0, knee * T, float(T)), (1.0, level, 0.0), "k_grad", f"knee({knee},{level})")


def from_spec(spec, role, T):
    """``"default"`` or ``{"breakpoints": [...], "values": [...]}``; breakpoints
    may be given as fractions of T with ``"relative": true``."""
    if spec is None or spec == "default":
        return {"k_grad": gradient_k, "k": generator_k, "l": generator_l}[role](T)
    b = np.asarray(spec["breakpoints"], dtype=float)
    if spec.get("relative", False):
        b = b * T
    if abs(b[-1] - T) > 1e-9 * max(1.0, T):
        raise ScheduleError(f"{role} breakpoints must end at T={T}")
    b[-1] = T
    return Schedule(tuple(b), tuple(spec["values"]), role, spec.get("name", "custom"))


@dataclass(frozen=True)
class ScheduleSet:
    k_grad: Schedule
    k: Schedule
    l: Schedule

    def __post_init__(self):
        if self.k_grad.role != "k_grad" or self.k.role != "k" or self.l.role != "l":
            raise ScheduleError("schedule roles do not match their slots")
        if self.k.support_end() > self.l.plateau_end() + _TOL or self.k.support_end() >= self.k.T:
            raise ScheduleError("k must vanish from some S < T on while l == 1 on [0, S]")

    @classmethod
    def default(cls, T):
        return cls(gradient_k(T), generator_k(T), generator_l(T))

    def grid(self, n_steps, dt):
        """Per-step (value, derivative) arrays at the left grid points."""
        s = np.arange(n_steps) * dt
        out = {}
        for name in ("k_grad", "k", "l"):
            v, d = getattr(self, name).eval_many(s)
            out[name] = (np.ascontiguousarray(v), np.ascontiguousarray(d))
        return out

    def ids(self):
        return {name: getattr(self, name).name for name in ("k_grad", "k", "l")}
