"""Dense state-vector quantum mechanics over labelled polarisation qubits.

Basis convention: ``h`` is index bit 0, ``v`` is index bit 1 and the leftmost
label is the most significant bit, so ``Ket(("a", "b"), ...)`` stores the
amplitudes in the order ``hh, hv, vh, vv``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ATOL = 1e-12
EIG_ATOL = 1e-10
ZERO_EIG = 1e-14
MAX_QUBITS = 8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Ket:
    """Amplitude vector over ``labels``; the squared norm may be below one
    for post-selected branches, in which case it is the success probability."""

    labels: tuple[str, ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amplitudes", _frozen(self.amplitudes).reshape(-1))
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        if len(labels) > MAX_QUBITS:
            raise ValueError(f"at most {MAX_QUBITS} qubits supported")
        if self.amplitudes.size != 2 ** len(labels):
            raise ValueError(
                f"{self.amplitudes.size} amplitudes for {len(labels)} labels"
            )
        if self.norm2 > 1 + ATOL:
            raise ValueError(f"squared norm {self.norm2} exceeds 1")

    @classmethod
    def basis(cls, bits: str, labels: Sequence[str]) -> "Ket":
        """Computational basis state, e.g. ``Ket.basis("hv", ("a", "b"))``."""
        if len(bits) != len(labels):
            raise ValueError("one polarisation letter per label")
        index = 0
        for letter in bits:
            if letter not in "hv":
                raise ValueError(f"unknown polarisation {letter!r}")
            index = 2 * index + (letter == "v")
        amps = np.zeros(2 ** len(labels), dtype=complex)
        amps[index] = 1.0
        return cls(tuple(labels), amps)

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "Ket":
        n2 = self.norm2
        if n2 <= 0:
            raise ValueError("cannot normalise a zero-norm state")
        return Ket(self.labels, self.amplitudes / np.sqrt(n2))

    def amplitude(self, bits: str) -> complex:
        """Amplitude of the basis ket written as a string of h/v letters."""
        return complex(np.vdot(Ket.basis(bits, self.labels).amplitudes, self.amplitudes))

    def reorder(self, labels: Sequence[str]) -> "Ket":
        labels = tuple(labels)
        if sorted(labels) != sorted(self.labels):
            raise ValueError(f"{labels} is not a permutation of {self.labels}")
        tensor = self.amplitudes.reshape((2,) * self.n_qubits)
        perm = [self.labels.index(lab) for lab in labels]
        return Ket(labels, np.transpose(tensor, perm).reshape(-1))

    def relabel(self, mapping: dict[str, str]) -> "Ket":
        return Ket(tuple(mapping.get(lab, lab) for lab in self.labels), self.amplitudes)

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix.from_ket(self.normalized())

    def equal_up_to_phase(self, other: "Ket", atol: float = ATOL) -> bool:
        """|<psi|phi>| == |psi||phi|, after aligning label order."""
        if set(self.labels) != set(other.labels):
            return False
        other = other.reorder(self.labels)
        overlap = abs(np.vdot(self.amplitudes, other.amplitudes))
        return abs(overlap - np.sqrt(self.norm2 * other.norm2)) < atol


@dataclass(frozen=True)
class Operator:
    """Linear map from ``n_in`` qubits to ``n_out`` qubits.

    ``inputs``/``outputs`` are optional default labels; an unlabelled operator
    is applied to whatever targets the caller names.
    """

    matrix: np.ndarray = field(repr=False)
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        rows, cols = self.matrix.shape
        n_out, n_in = int(np.log2(rows)), int(np.log2(cols))
        if 2**n_out != rows or 2**n_in != cols:
            raise ValueError(f"matrix shape {self.matrix.shape} is not qubit-sized")
        if self.inputs and len(self.inputs) != n_in:
            raise ValueError("input labels do not match matrix width")
        if self.outputs and len(self.outputs) != n_out:
            raise ValueError("output labels do not match matrix height")

    @property
    def n_in(self) -> int:
        return int(np.log2(self.matrix.shape[1]))

    @property
    def n_out(self) -> int:
        return int(np.log2(self.matrix.shape[0]))

    @property
    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.outputs, self.inputs)

    def is_unitary(self, atol: float = ATOL) -> bool:
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            return False
        return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) < atol)

    def is_contraction(self, atol: float = ATOL) -> bool:
        """All eigenvalues of K^dagger K lie in [0, 1]."""
        evals = np.linalg.eigvalsh(self.matrix.conj().T @ self.matrix)
        return bool(evals.min() >= -atol and evals.max() <= 1 + atol)

    def __matmul__(self, other: "Operator") -> "Operator":
        return Operator(self.matrix @ other.matrix, other.inputs, self.outputs)


@dataclass(frozen=True)
class DensityMatrix:
    labels: tuple[str, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        m = _frozen(self.matrix)
        object.__setattr__(self, "matrix", m)
        dim = 2 ** len(self.labels)
        if m.shape != (dim, dim):
            raise ValueError(f"matrix shape {m.shape} does not match {len(self.labels)} qubits")
        if np.max(np.abs(m - m.conj().T)) > ATOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1) > ATOL:
            raise ValueError(f"trace {np.trace(m).real} != 1")
        if np.linalg.eigvalsh(m).min() < -EIG_ATOL:
            raise ValueError("density matrix is not positive semidefinite")

    @classmethod
    def from_ket(cls, ket: Ket) -> "DensityMatrix":
        a = ket.normalized().amplitudes
        return cls(ket.labels, np.outer(a, a.conj()))

    @classmethod
    def maximally_mixed(cls, labels: Sequence[str]) -> "DensityMatrix":
        dim = 2 ** len(labels)
        return cls(tuple(labels), np.eye(dim) / dim)

    def mix(self, other: "DensityMatrix", weight: float) -> "DensityMatrix":
        """``(1 - weight) * self + weight * other``."""
        if other.labels != self.labels:
            raise ValueError("label mismatch")
        return DensityMatrix(self.labels, (1 - weight) * self.matrix + weight * other.matrix)

    def transform(self, op: np.ndarray) -> "DensityMatrix":
        return DensityMatrix(self.labels, op @ self.matrix @ op.conj().T)

    def reorder(self, labels: Sequence[str]) -> "DensityMatrix":
        labels = tuple(labels)
        n = len(self.labels)
        perm = [self.labels.index(lab) for lab in labels]
        t = self.matrix.reshape((2,) * (2 * n))
        t = np.transpose(t, perm + [p + n for p in perm])
        return DensityMatrix(labels, t.reshape(2**n, 2**n))


def tensor(a, b):
    """Kronecker product of two kets, or of two operators."""
    if isinstance(a, Ket) and isinstance(b, Ket):
        clash = set(a.labels) & set(b.labels)
        if clash:
            raise ValueError(f"duplicate labels {sorted(clash)}")
        return Ket(a.labels + b.labels, np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, Operator) and isinstance(b, Operator):
        for side in ("inputs", "outputs"):
            la, lb = getattr(a, side), getattr(b, side)
            if set(la) & set(lb):
                raise ValueError(f"duplicate {side} labels")
        labelled = bool(a.inputs) and bool(b.inputs)
        return Operator(
            np.kron(a.matrix, b.matrix),
            a.inputs + b.inputs if labelled else (),
            a.outputs + b.outputs if labelled and a.outputs and b.outputs else (),
        )
    raise TypeError("tensor expects two Kets or two Operators")


def half_wave_plate(theta: float) -> Operator:
    """Jones matrix of a half-wave plate with its fast axis at ``theta``."""
    return Operator(np.cos(2 * theta) * SIGMA_Z + np.sin(2 * theta) * SIGMA_X)


def quarter_wave_plate(theta: float) -> Operator:
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return Operator(rot @ np.diag([1, 1j]) @ rot.T)


def apply(op: Operator, state: Ket, targets: Sequence[str] | None = None,
          outputs: Sequence[str] | None = None) -> Ket:
    """Act with ``op`` on the ``targets`` qubits of ``state``.

    The output qubits take the place of the first target in the register;
    for a shrinking map (fusion gate) the remaining targets disappear.
    """
    targets = tuple(targets if targets is not None else op.inputs)
    if not targets:
        raise ValueError("no target labels given")
    if len(targets) != op.n_in:
        raise ValueError(f"operator takes {op.n_in} qubits, got {len(targets)} targets")
    missing = [t for t in targets if t not in state.labels]
    if missing:
        raise KeyError(f"unknown labels {missing}")
    if outputs is None:
        outputs = op.outputs or targets[: op.n_out]
    outputs = tuple(outputs)
    if len(outputs) != op.n_out:
        raise ValueError("output label count does not match operator")

    rest = [lab for lab in state.labels if lab not in targets]
    if set(outputs) & set(rest):
        raise ValueError("output labels collide with untouched qubits")
    psi = state.reorder(targets + tuple(rest)).amplitudes
    psi = (op.matrix @ psi.reshape(2 ** len(targets), -1)).reshape(-1)

    if set(outputs) == set(targets):
        return Ket(outputs + tuple(rest), psi).reorder(state.labels)
    first = state.labels.index(targets[0])
    before = [lab for lab in state.labels[:first] if lab not in targets]
    after = [lab for lab in rest if lab not in before]
    return Ket(outputs + tuple(rest), psi).reorder(tuple(before) + outputs + tuple(after))


def projector(basis_state: Ket) -> Operator:
    """Rank-one projector onto the (normalised) ``basis_state``."""
    a = basis_state.normalized().amplitudes
    labels = basis_state.labels
    return Operator(np.outer(a, a.conj()), labels, labels)


def born_probability(state: Ket, proj: Operator, normalize: bool = True) -> float:
    """<psi|P|psi>, divided by <psi|psi> unless ``normalize`` is false.

    A labelled projector may cover a subset of the register; it is then
    applied with identity on the remaining qubits.
    """
    psi = state
    if proj.inputs:
        rest = [lab for lab in state.labels if lab not in proj.inputs]
        psi = state.reorder(proj.inputs + tuple(rest))
        m = np.kron(proj.matrix, np.eye(2 ** len(rest)))
    else:
        m = proj.matrix
    if m.shape[1] != psi.amplitudes.size:
        raise ValueError("projector does not match the register size")
    raw = float(np.vdot(psi.amplitudes, m @ psi.amplitudes).real)
    if not normalize:
        return raw
    n2 = psi.norm2
    if n2 <= 0:
        raise ValueError("zero-norm state has no normalised probabilities")
    return raw / n2


def _factor(m: np.ndarray) -> np.ndarray:
    """W with m = W W^dagger; eigenvalues below ZERO_EIG are dropped as
    round-off, whose square roots would otherwise leak ~1e-8 errors."""
    evals, evecs = np.linalg.eigh(m)
    keep = evals > ZERO_EIG
    return evecs[:, keep] * np.sqrt(evals[keep])


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(m)
    keep = evals > ZERO_EIG
    return (evecs[:, keep] * np.sqrt(evals[keep])) @ evecs[:, keep].conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, squared convention."""
    if rho.labels != sigma.labels:
        sigma = sigma.reorder(rho.labels)
    s = _psd_sqrt(rho.matrix)
    evals = np.linalg.eigvalsh(s @ sigma.matrix @ s)
    f = float(np.sum(np.sqrt(np.clip(evals, 0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def purity(rho: DensityMatrix) -> float:
    return float(np.real(np.trace(rho.matrix @ rho.matrix)))


def concurrence(rho: DensityMatrix) -> float:
    """Wootters concurrence of a two-qubit state.

    Uses the singular values of W^T (Y x Y) W for rho = W W^dagger, which are
    the square roots of the eigenvalues of rho times its spin-flipped state.
    """
    if len(rho.labels) != 2:
        raise ValueError("concurrence is defined for two qubits only")
    w = _factor(rho.matrix)
    tau = w.T @ np.kron(SIGMA_Y, SIGMA_Y) @ w
    lam = np.zeros(4)
    sv = np.linalg.svd(tau, compute_uv=False)
    lam[: sv.size] = sv
    return float(min(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]), 1.0))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
