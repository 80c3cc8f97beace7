"""Finite-dimensional entanglement-assisted protocols and Helstrom decoding."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..model import DimensionMismatch
from .channel import Channel


class InvalidPOVM(ValueError):
    pass


class NotAState(ValueError):
    pass


@dataclass(frozen=True)
class QuantumProtocol:
    """Shared state on ``C^dim (x) C^dim``, encoder and decoder POVMs.

    ``E[i][x]`` is the encoder element for message ``i`` and channel input
    ``x``; ``D[y][i]`` the decoder element for output ``y`` and guess ``i``.
    """

    dim: int
    psi: np.ndarray
    E: tuple
    D: tuple

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex).ravel()
        if psi.size != self.dim ** 2:
            raise DimensionMismatch(f"state has {psi.size} entries, expected {self.dim ** 2}")
        if abs(np.linalg.norm(psi) - 1) > 1e-12:
            raise NotAState("shared state must have unit norm")
        object.__setattr__(self, "psi", psi)
        E = tuple(tuple(np.asarray(m, dtype=complex) for m in row) for row in self.E)
        D = tuple(tuple(np.asarray(m, dtype=complex) for m in row) for row in self.D)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "D", D)
        for name, fam in (("encoder", E), ("decoder", D)):
            for k, povm in enumerate(fam):
                _check_povm(povm, self.dim, f"{name}[{k}]")


def _check_povm(povm, dim, where, tol=1e-10):
    total = np.zeros((dim, dim), dtype=complex)
    for m in povm:
        if m.shape != (dim, dim):
            raise DimensionMismatch(f"{where}: element of shape {m.shape}, expected {dim}x{dim}")
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise InvalidPOVM(f"{where}: element not hermitian")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -tol:
            raise InvalidPOVM(f"{where}: element not PSD")
        total += m
    if np.max(np.abs(total - np.eye(dim))) > tol:
        raise InvalidPOVM(f"{where}: elements do not sum to the identity")


def evaluate_protocol(c: Channel, p: QuantumProtocol) -> float:
    """(1/2^k) sum_{i,x,y} W(y|x) <psi| E(x|i) (x) D(i|y) |psi>."""
    K, X, Y = c.messages, c.n_in, c.n_out
    if len(p.E) != K or any(len(r) != X for r in p.E):
        raise DimensionMismatch(f"encoder must have {K} POVMs over {X} inputs")
    if len(p.D) != Y or any(len(r) != K for r in p.D):
        raise DimensionMismatch(f"decoder must have {Y} POVMs over {K} messages")
    d = p.dim
    # rho[a, b, a', b'] of the shared state; <psi| A (x) B |psi> = sum A[a',a] B[b',b] ...
    psi = p.psi.reshape(d, d)
    total = 0.0
    for i, x, y in itertools.product(range(K), range(X), range(Y)):
        w = c.W[y, x]
        if w == 0:
            continue
        val = np.einsum("ab,ac,bd,cd->", psi.conj(), p.E[i][x], p.D[y][i], psi)
        total += w * val.real
    return float(total / K)


def helstrom(rho0, rho1, tol: float = 1e-10):
    """Projector onto the non-negative eigenspace of ``rho0 - rho1`` and the
    success probability ``1/2 + ||rho0 - rho1||_1 / 4`` at equal priors."""
    mats = []
    for r in (rho0, rho1):
        r = np.asarray(r, dtype=complex)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise NotAState("density matrices must be square")
        if np.max(np.abs(r - r.conj().T)) > tol or abs(np.trace(r) - 1) > tol:
            raise NotAState("density matrix must be hermitian with unit trace")
        if np.linalg.eigvalsh(r)[0] < -tol:
            raise NotAState("density matrix must be PSD")
        mats.append(r)
    w, V = np.linalg.eigh(mats[0] - mats[1])
    P = V[:, w >= 0] @ V[:, w >= 0].conj().T
    return P, 0.5 + 0.25 * float(np.sum(np.abs(w)))


def rotation_u() -> np.ndarray:
    return np.array([[0, -1, -1, 1],
                     [1, 0, 1, 1],
                     [-1, 1, 0, 1],
                     [-1, -1, 1, 0]], dtype=float) / np.sqrt(3)


def four_dim_protocol(c: Channel) -> QuantumProtocol:
    """Protocol for a one-bit code over a channel whose outputs are pairs of inputs.

    Maximally entangled state on 4 x 4; message 0 is encoded by measuring
    in the computational basis, message 1 in the basis rotated by ``U``.
    The decoder for output ``y`` is the Helstrom measurement between the two
    states the receiver holds (transposed, as seen through the maximally
    entangled state) given ``y`` and the message.
    """
    if c.n_in != 4 or c.k != 1:
        raise DimensionMismatch("needs a four-input channel and k = 1")
    U = rotation_u()
    basis = np.eye(4)
    E0 = [np.outer(basis[x], basis[x]) for x in range(4)]
    E1 = [U @ P @ U.T for P in E0]
    D = []
    for y in range(c.n_out):
        w = c.W[y]
        if w.sum() == 0:
            D.append((np.eye(4), np.zeros((4, 4))))
            continue
        rho0 = sum(w[x] * E0[x] for x in range(4)) / w.sum()
        rho1 = sum(w[x] * E1[x] for x in range(4)) / w.sum()
        P, _ = helstrom(rho0.T, rho1.T)
        D.append((P, np.eye(4) - P))
    psi = np.eye(4).ravel() / 2.0
    return QuantumProtocol(4, psi, (tuple(E0), tuple(E1)), tuple(D))
