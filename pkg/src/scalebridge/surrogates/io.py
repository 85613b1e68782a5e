"""Versioned ``.npz`` serialization of fitted surrogates (exact round trip)."""
from __future__ import annotations

import json

import numpy as np

from ..core import Domain
from .mlp import MlpSurrogate
from .rbf import RbfSurrogate

FORMAT_VERSION = 1


def _domain_json(domain: Domain | None) -> str:
    if domain is None:
        return ""
    return json.dumps({"bounds": domain.bounds, "log_scaled": domain.log_scaled, "names": domain.names})


def _domain_from(text: str) -> Domain | None:
    if not text:
        return None
    d = json.loads(text)
    return Domain(bounds=tuple(tuple(b) for b in d["bounds"]), log_scaled=tuple(d["log_scaled"]),
                  names=tuple(d["names"]))


def save_surrogate(s, path) -> None:
    if isinstance(s, RbfSurrogate):
        np.savez(path, kind="rbf", version=FORMAT_VERSION, centers=s.centers, weights=s.weights,
                 poly=s.poly, lam=s.lam, residual=s.residual, domain=_domain_json(s.domain))
    elif isinstance(s, MlpSurrogate):
        arrays = {f"W{i}": W for i, W in enumerate(s.weights)}
        arrays.update({f"b{i}": b for i, b in enumerate(s.biases)})
        np.savez(path, kind="mlp", version=FORMAT_VERSION, n_layers=len(s.weights),
                 x_mean=s.x_mean, x_scale=s.x_scale, y_mean=s.y_mean, y_scale=s.y_scale,
                 log_targets=s.log_targets, loss_history=s.loss_history,
                 domain=_domain_json(s.domain), **arrays)
    else:
        raise TypeError(f"cannot serialize {type(s).__name__}")


def load_surrogate(path):
    with np.load(path, allow_pickle=False) as z:
        kind = str(z["kind"])
        if int(z["version"]) != FORMAT_VERSION:
            raise ValueError(f"unsupported surrogate format version {int(z['version'])}")
        domain = _domain_from(str(z["domain"]))
        if kind == "rbf":
            return RbfSurrogate(centers=z["centers"], weights=z["weights"], poly=z["poly"],
                                lam=float(z["lam"]), domain=domain, residual=float(z["residual"]))
        if kind == "mlp":
            n = int(z["n_layers"])
            return MlpSurrogate(
                weights=[z[f"W{i}"] for i in range(n)], biases=[z[f"b{i}"] for i in range(n)],
                x_mean=z["x_mean"], x_scale=z["x_scale"], y_mean=z["y_mean"], y_scale=z["y_scale"],
                domain=domain, log_targets=bool(z["log_targets"]), loss_history=z["loss_history"],
            )
    raise ValueError(f"unknown surrogate kind {kind!r}")
