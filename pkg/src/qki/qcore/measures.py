"""Entropies, fidelity and trace distance (all logarithms base 2)."""

from __future__ import annotations

import re
from typing import Iterable, Sequence

import numpy as np

from ..errors import DimMismatch, InvariantViolation, OverlappingGroups, UnknownLabel
from .states import MultipartiteState, partial_trace

EIG_CLAMP = 1e-10  # eigenvalues in [-EIG_CLAMP, 0) are rounding noise
ENTROPY_CUTOFF = 1e-12


def _herm(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def clamped_eigh(m: np.ndarray, clamp: float = EIG_CLAMP):
    w, v = np.linalg.eigh(_herm(m))
    if w.size and w[0] < -clamp:
        raise InvariantViolation(f"matrix has eigenvalue {w[0]:.3e} < -{clamp}")
    return np.clip(w, 0.0, None), v


def sqrtm_psd(m: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """PSD square root; eigenvalues below ``floor * max(1, lambda_max)`` are zeroed."""
    w, v = clamped_eigh(m)
    if floor and w.size:
        w = np.where(w < floor * max(1.0, w[-1]), 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def entropy_of_spectrum(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > ENTROPY_CUTOFF]
    return float(-np.sum(p * np.log2(p)))


def binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * np.log2(x) - (1 - x) * np.log2(1 - x))


def entropy_bits(s) -> float:
    """Von Neumann entropy in bits of a state or a raw density matrix."""
    m = s.matrix if isinstance(s, MultipartiteState) else np.asarray(s)
    w, _ = clamped_eigh(m)
    return entropy_of_spectrum(w)


def fidelity(rho, xi) -> float:
    """Root fidelity ||sqrt(rho) sqrt(xi)||_1, clipped to [0, 1]."""
    a = rho.matrix if isinstance(rho, MultipartiteState) else np.asarray(rho)
    b = xi.matrix if isinstance(xi, MultipartiteState) else np.asarray(xi)
    if isinstance(rho, MultipartiteState) and isinstance(xi, MultipartiteState):
        if rho.dims.dims != xi.dims.dims:
            raise DimMismatch(f"fidelity between {rho.dims.items} and {xi.dims.items}")
    if a.shape != b.shape:
        raise DimMismatch(f"fidelity between shapes {a.shape} and {b.shape}")
    # singular values of sqrt(a) sqrt(b) avoid the square-root blow-up of
    # Tr sqrt(sqrt(a) b sqrt(a)) near rank deficiency; the floor stops
    # eigen-solver noise on kernel directions entering as sqrt(1e-16)
    sv = np.linalg.svd(sqrtm_psd(a, 1e-14) @ sqrtm_psd(b, 1e-14), compute_uv=False)
    return float(min(1.0, max(0.0, sv.sum())))


def trace_distance(rho, xi) -> float:
    """Half the trace norm of the difference."""
    a = rho.matrix if isinstance(rho, MultipartiteState) else np.asarray(rho)
    b = xi.matrix if isinstance(xi, MultipartiteState) else np.asarray(xi)
    if a.shape != b.shape:
        raise DimMismatch(f"trace distance between shapes {a.shape} and {b.shape}")
    return float(0.5 * np.abs(np.linalg.eigvalsh(_herm(a - b))).sum())


# ---------------------------------------------------------------------------
# entropic combinations over label groups


def _check_groups(s: MultipartiteState, *groups: Sequence[str]) -> list[list[str]]:
    seen: set[str] = set()
    out = []
    for g in groups:
        g = list(g)
        for lab in g:
            if lab not in s.labels:
                raise UnknownLabel(f"unknown label {lab!r}; have {s.labels}")
            if lab in seen:
                raise OverlappingGroups(f"label {lab!r} appears in more than one group")
            seen.add(lab)
        out.append(g)
    return out


def _S(s: MultipartiteState, labels: Iterable[str]) -> float:
    labels = list(labels)
    if not labels:
        return 0.0
    return entropy_bits(partial_trace(s, labels))


def conditional_entropy(s: MultipartiteState, x: Sequence[str], y: Sequence[str] = ()) -> float:
    x, y = _check_groups(s, x, y)
    return _S(s, x + y) - _S(s, y)


def mutual_information(s: MultipartiteState, x: Sequence[str], y: Sequence[str]) -> float:
    x, y = _check_groups(s, x, y)
    return _S(s, x) + _S(s, y) - _S(s, x + y)


def conditional_mutual_information(
    s: MultipartiteState, x: Sequence[str], y: Sequence[str], z: Sequence[str] = ()
) -> float:
    x, y, z = _check_groups(s, x, y, z)
    return _S(s, x + z) + _S(s, y + z) - _S(s, x + y + z) - _S(s, z)


_EXPR = re.compile(r"^\s*([SI])\s*\((.*)\)\s*$")


def _split_group(text: str, s: MultipartiteState) -> list[str]:
    text = text.strip()
    if not text:
        return []
    if "," in text or " " in text:
        return [t for t in re.split(r"[,\s]+", text) if t]
    if text in s.labels:
        return [text]
    # concatenated single-character labels, e.g. "NQ"
    return list(text)


def entropic(s: MultipartiteState, expr: str) -> float:
    """Evaluate ``S(X)``, ``S(X|Y)``, ``I(X:Y)`` or ``I(X:Y|Z)``.

    Groups are either comma-separated labels (``I(N1,N2:Q|C)``) or a run of
    single-character labels (``I(N:QR|C)``).
    """
    m = _EXPR.match(expr)
    if not m:
        raise ValueError(f"cannot parse entropic expression {expr!r}")
    kind, body = m.groups()
    cond = []
    if "|" in body:
        body, c = body.split("|", 1)
        cond = _split_group(c, s)
    if kind == "S":
        return conditional_entropy(s, _split_group(body, s), cond)
    if ":" not in body:
        raise ValueError(f"mutual information needs two groups: {expr!r}")
    a, b = body.split(":", 1)
    return conditional_mutual_information(s, _split_group(a, s), _split_group(b, s), cond)
