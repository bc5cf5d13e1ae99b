"""On-disk formats: packet, model and truth JSON documents and client CSVs."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import ClusterSolution, SummaryPacket
from .losses import LocalDataset

PACKET_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


class FormatError(ValueError):
    """A file that does not parse or fails validation."""


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


def canonical_payload(n: int, p: int, theta, grad, hessian) -> str:
    """Numbers in wire order, floats at 17 significant digits, comma separated."""
    nums = [str(int(n)), str(int(p))]
    for arr in (theta, grad, hessian):
        nums.extend(format(float(x), ".17g") for x in np.asarray(arr, dtype=float).ravel())
    return ",".join(nums)


def packet_checksum(n, p, theta, grad, hessian) -> str:
    return format(fnv1a64(canonical_payload(n, p, theta, grad, hessian).encode("ascii")), "016x")


def packet_to_dict(pk: SummaryPacket) -> dict:
    # float() repr is the shortest string that round-trips
    return {
        "version": PACKET_VERSION,
        "client_id": pk.client_id,
        "n": int(pk.n),
        "p": pk.p,
        "loss_kind": pk.loss_kind,
        "theta_tilde": [float(x) for x in pk.theta_tilde],
        "grad_tilde": [float(x) for x in pk.grad_tilde],
        "hessian_tilde": [float(x) for x in pk.hessian_tilde.ravel()],
        "checksum": packet_checksum(pk.n, pk.p, pk.theta_tilde, pk.grad_tilde, pk.hessian_tilde),
    }


def packet_from_dict(d: dict) -> SummaryPacket:
    try:
        if d["version"] != PACKET_VERSION:
            raise FormatError(f"unsupported packet version {d['version']!r}")
        n, p = int(d["n"]), int(d["p"])
        theta = np.asarray(d["theta_tilde"], dtype=float)
        grad = np.asarray(d["grad_tilde"], dtype=float)
        hess = np.asarray(d["hessian_tilde"], dtype=float)
        client_id, kind, checksum = str(d["client_id"]), d["loss_kind"], d["checksum"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed packet: {exc}") from exc
    if theta.shape != (p,) or grad.shape != (p,) or hess.shape != (p * p,):
        raise FormatError(f"packet arrays do not match p={p}")
    if packet_checksum(n, p, theta, grad, hess) != checksum:
        raise FormatError("packet checksum mismatch")
    try:
        return SummaryPacket(client_id, n, theta, grad, hess.reshape(p, p), kind)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def write_packet(pk: SummaryPacket, path) -> None:
    Path(path).write_text(json.dumps(packet_to_dict(pk), indent=1) + "\n")


def read_packet(path) -> SummaryPacket:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not JSON ({exc})") from exc
    return packet_from_dict(d)


def read_dataset(path, loss_kind: str) -> LocalDataset:
    """Client CSV: header row, response first, covariates after; an intercept is prepended."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if len(rows) < 2:
        raise FormatError(f"{path}: need a header and at least one data row")
    width = len(rows[0])
    if width < 2:
        raise FormatError(f"{path}: need a response and at least one covariate")
    try:
        body = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric entry ({exc})") from exc
    if body.ndim != 2 or body.shape[1] != width:
        raise FormatError(f"{path}: ragged rows")
    if not np.all(np.isfinite(body)):
        raise FormatError(f"{path}: non-finite entry")
    X = np.column_stack([np.ones(len(body)), body[:, 1:]])
    try:
        return LocalDataset(X, body[:, 0], loss_kind)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_dataset(data: LocalDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"x{j}" for j in range(1, data.p)])
        for yi, xi in zip(data.y, data.X[:, 1:]):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])


def model_to_dict(sol: ClusterSolution, extra: dict | None = None) -> dict:
    d = {
        "partition": [list(map(int, g)) for g in sol.partition],
        "psi": np.asarray(sol.psi).tolist(),
        "theta_hat": np.asarray(sol.theta_hat).tolist(),
        "active_set": list(map(int, sol.active_set)),
        "lambda1": sol.lambda1,
        "lambda2": sol.lambda2,
        "converged": bool(sol.converged),
    }
    if extra:
        d.update(extra)
    return d


def write_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
