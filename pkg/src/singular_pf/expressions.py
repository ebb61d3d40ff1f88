"""Closed expression vocabulary for data fields given in config files.

Grammar (YAML/JSON values)::

    3.0                                  constant
    {const: c}                           constant
    {cos: [m1, m2], amp: a}              a * prod_k cos(pi m_k x_k / L_k)
    {coord: k, amp: a}                   a * x_k / L_k
    {sum: [e1, e2, ...]}                 sum
    {product: [e1, e2, ...]}             product
    {ramp: [t0, v0, t1, v1]}             linear time ramp, constant outside [t0, t1]
    {noise: a}                           a * uniform(-1, 1), fixed by the run seed

Expressions are pure: the same points, time and seed give the same values.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class Expr:
    kind: str
    args: tuple = ()
    amp: float = 1.0
    value: float = 0.0

    def evaluate(self, points, t=0.0, extent=None, seed=0):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        m = points.shape[0]
        extent = np.ones(points.shape[1]) if extent is None else np.asarray(extent, dtype=float)
        if self.kind == "const":
            return np.full(m, self.value)
        if self.kind == "cos":
            out = np.full(m, self.amp)
            for k, mode in enumerate(self.args):
                if mode:
                    out = out * np.cos(np.pi * mode * points[:, k] / extent[k])
            return out
        if self.kind == "coord":
            k = self.args[0]
            return self.amp * points[:, k] / extent[k]
        if self.kind == "sum":
            return sum((e.evaluate(points, t, extent, seed) for e in self.args), np.zeros(m))
        if self.kind == "product":
            out = np.ones(m)
            for e in self.args:
                out = out * e.evaluate(points, t, extent, seed)
            return out
        if self.kind == "ramp":
            t0, v0, t1, v1 = self.args
            if t1 <= t0:
                return np.full(m, v1 if t >= t1 else v0)
            s = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
            return np.full(m, v0 + s * (v1 - v0))
        if self.kind == "noise":
            rng = np.random.default_rng([int(seed), zlib.crc32(repr(self.args).encode()), m])
            return self.amp * rng.uniform(-1.0, 1.0, size=m)
        raise ExpressionError(f"unknown expression kind {self.kind!r}")

    @property
    def time_dependent(self) -> bool:
        if self.kind == "ramp":
            return True
        if self.kind in ("sum", "product"):
            return any(e.time_dependent for e in self.args)
        return False

    def to_data(self):
        if self.kind == "const":
            return self.value
        if self.kind == "cos":
            return {"cos": list(self.args), "amp": self.amp}
        if self.kind == "coord":
            return {"coord": self.args[0], "amp": self.amp}
        if self.kind in ("sum", "product"):
            return {self.kind: [e.to_data() for e in self.args]}
        if self.kind == "ramp":
            return {"ramp": list(self.args)}
        return {"noise": self.amp, "stream": self.args[0] if self.args else 0}


def parse_expr(data) -> Expr:
    if isinstance(data, Expr):
        return data
    if isinstance(data, bool):
        raise ExpressionError("booleans are not expressions")
    if isinstance(data, (int, float)):
        return Expr("const", value=float(data))
    if not isinstance(data, dict):
        raise ExpressionError(f"cannot parse expression from {data!r}")
    keys = set(data)
    if keys == {"const"}:
        return parse_expr(float(data["const"]))
    if "cos" in keys and keys <= {"cos", "amp"}:
        modes = tuple(int(m) for m in data["cos"])
        return Expr("cos", modes, amp=float(data.get("amp", 1.0)))
    if "coord" in keys and keys <= {"coord", "amp"}:
        return Expr("coord", (int(data["coord"]),), amp=float(data.get("amp", 1.0)))
    if keys in ({"sum"}, {"product"}):
        (kind,) = keys
        items = data[kind]
        if not isinstance(items, (list, tuple)) or not items:
            raise ExpressionError(f"{kind} needs a non-empty list")
        return Expr(kind, tuple(parse_expr(e) for e in items))
    if keys == {"ramp"}:
        vals = tuple(float(v) for v in data["ramp"])
        if len(vals) != 4:
            raise ExpressionError("ramp takes [t0, v0, t1, v1]")
        return Expr("ramp", vals)
    if "noise" in keys and keys <= {"noise", "stream"}:
        return Expr("noise", (int(data.get("stream", 0)),), amp=float(data["noise"]))
    raise ExpressionError(f"cannot parse expression from {data!r}")
