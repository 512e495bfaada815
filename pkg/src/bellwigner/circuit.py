"""The six-photon Bell-Wigner circuit: sources, friends' fusion-gate
measurements, the heralded four-photon state and the observables."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import ATOL, Ket, Operator, apply, born_probability, half_wave_plate, projector, tensor

VARIANTS = ("main", "alt_observables", "alt_polarizer_protocol")
RESOURCE_ANGLE = 7 * np.pi / 16
WINGS = {"alice": ("a", "alpha"), "bob": ("b", "beta")}
HERALDS = {"alice": "alpha_h", "bob": "beta_h"}

# success probability of the 50/50 beam-splitter singlet projection; tracked
# as metadata only, per-setting normalisation cancels it
BSM_SUCCESS = 0.5

_S = 1 / np.sqrt(2)
_BELL = {
    "phi+": {"hh": _S, "vv": _S},
    "phi-": {"hh": _S, "vv": -_S},
    "psi+": {"hv": _S, "vh": _S},
    "psi-": {"hv": _S, "vh": -_S},
}


@dataclass(frozen=True)
class SettingPair:
    x: int
    y: int
    variant: str = "main"

    def __post_init__(self):
        if self.x not in (0, 1) or self.y not in (0, 1):
            raise ValueError(f"settings must be 0 or 1, got ({self.x}, {self.y})")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


def all_settings(variant: str = "main") -> list[SettingPair]:
    """The four setting pairs in the fixed order (0,0), (0,1), (1,0), (1,1)."""
    return [SettingPair(x, y, variant) for x in (0, 1) for y in (0, 1)]


@dataclass(frozen=True)
class Observable:
    """Rank-one eigenprojectors on a two-qubit wing, each with its outcome."""

    labels: tuple[str, ...]
    names: tuple[str, ...]
    projectors: tuple[Operator, ...]
    eigenvalues: tuple[float, ...]

    def __post_init__(self):
        total = sum(p.matrix for p in self.projectors)
        if np.max(np.abs(total - np.eye(total.shape[0]))) > ATOL:
            raise ValueError("projectors do not resolve the identity")
        for i, p in enumerate(self.projectors):
            for q in self.projectors[i + 1:]:
                if np.max(np.abs(p.matrix @ q.matrix)) > ATOL:
                    raise ValueError("projectors are not orthogonal")

    def matrix(self) -> np.ndarray:
        return sum(v * p.matrix for v, p in zip(self.eigenvalues, self.projectors))


@dataclass(frozen=True)
class Outcome:
    alice: str
    bob: str
    alice_value: float
    bob_value: float
    probability: float

    @property
    def product(self) -> float:
        return self.alice_value * self.bob_value


@dataclass(frozen=True)
class ProbabilityTable:
    setting: SettingPair
    entries: tuple[Outcome, ...]

    def __post_init__(self):
        p = self.probabilities
        if np.any(p < -ATOL):
            raise ValueError("negative probability")
        if abs(p.sum() - 1) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()}")

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([e.probability for e in self.entries])

    @property
    def products(self) -> np.ndarray:
        return np.array([e.product for e in self.entries])

    def with_probabilities(self, probs) -> "ProbabilityTable":
        probs = np.clip(np.asarray(probs, dtype=float), 0, None)
        probs = probs / probs.sum()
        return ProbabilityTable(
            self.setting,
            tuple(Outcome(e.alice, e.bob, e.alice_value, e.bob_value, float(p))
                  for e, p in zip(self.entries, probs)),
        )

    def grid(self) -> np.ndarray:
        """Probabilities as a 4x4 array indexed [alice outcome, bob outcome]."""
        return self.probabilities.reshape(4, 4)


def bell_state(kind: str, labels: Sequence[str]) -> Ket:
    """One of ``phi+``, ``phi-``, ``psi+``, ``psi-`` on two labels."""
    try:
        terms = _BELL[kind]
    except KeyError:
        raise ValueError(f"unknown Bell state {kind!r}") from None
    if len(labels) != 2:
        raise ValueError("Bell states need exactly two labels")
    amps = sum(c * Ket.basis(bits, labels).amplitudes for bits, c in terms.items())
    return Ket(tuple(labels), amps)


def resource_state(angle: float = RESOURCE_ANGLE) -> Ket:
    """Singlet on (a, b) with a half-wave plate at ``angle`` on b."""
    return apply(half_wave_plate(angle), bell_state("psi-", ("a", "b")), ["b"])


def fusion_gate_kraus() -> Operator:
    """Post-selected type-I fusion: (|h><hh| - |v><vv|) / sqrt(2)."""
    m = np.zeros((2, 4), dtype=complex)
    m[0, 0] = 1 / np.sqrt(2)
    m[1, 3] = -1 / np.sqrt(2)
    return Operator(m)


def friend_measure(state: Ket, system: str, ancillas: tuple[str, str]) -> Ket:
    """Non-destructive h/v measurement of ``system`` by a friend.

    ``ancillas`` is (heralded, memory); a singlet is prepared on them and the
    fusion gate acts on (system, heralded). The returned branch is
    unnormalised and the memory holds the flipped value of the system.
    """
    herald, memory = ancillas
    if system not in state.labels:
        raise KeyError(f"unknown label {system!r}")
    clash = {herald, memory} & set(state.labels)
    if clash or herald == memory:
        raise ValueError(f"ancilla labels collide: {sorted(clash) or [herald]}")
    joint = tensor(state, bell_state("psi-", (herald, memory)))
    return apply(fusion_gate_kraus(), joint, [system, herald], [system])


def four_photon_state(angle: float = RESOURCE_ANGLE, normalize: bool = False) -> Ket:
    """Heralded branch over (a, alpha, b, beta); squared norm 1/16 unless normalised."""
    psi = resource_state(angle)
    psi = friend_measure(psi, "a", (HERALDS["alice"], WINGS["alice"][1]))
    psi = friend_measure(psi, "b", (HERALDS["bob"], WINGS["bob"][1]))
    psi = psi.reorder(WINGS["alice"] + WINGS["bob"])
    return psi.normalized() if normalize else psi


# eigenstate order per setting; see README "Table layout"
_RECORD_ORDER = ("hv", "vv", "hh", "vh")
_BELL_ORDER = ("psi+", "psi-", "phi+", "phi-")
_EIGENVALUES = {
    ("main", 0): (1.0, 1.0, -1.0, -1.0),
    ("alt_observables", 0): (1.0, 0.0, 0.0, -1.0),
    ("bell", 1): (1.0, -1.0, 0.0, 0.0),
}


def observable(setting: int, who: str, variant: str = "main") -> Observable:
    """A_x (``who="alice"``) or B_y (``who="bob"``) on that party's wing.

    x = 0 reads the friend's memory: main assigns +1 to memory v ("photon is
    h") whatever the system photon does; alt_observables gives +1 to hv, -1 to
    vh and 0 to the inconsistent hh, vv. x = 1 is Psi+ -> +1, Psi- -> -1,
    Phi+- -> 0.
    """
    if who not in WINGS:
        raise ValueError(f"unknown party {who!r}")
    if variant == "alt_polarizer_protocol":
        variant = "alt_observables"
    if variant not in ("main", "alt_observables"):
        raise ValueError(f"unknown variant {variant!r}")
    labels = WINGS[who]
    if setting == 0:
        names = _RECORD_ORDER
        kets = [Ket.basis(n, labels) for n in names]
        values = _EIGENVALUES[(variant, 0)]
    elif setting == 1:
        names = _BELL_ORDER
        kets = [bell_state(n, labels) for n in names]
        values = _EIGENVALUES[("bell", 1)]
    else:
        raise ValueError(f"setting must be 0 or 1, got {setting}")
    return Observable(labels, names, tuple(projector(k) for k in kets), values)


def outcome_probabilities(state: Ket, setting: SettingPair) -> ProbabilityTable:
    """Born probabilities of all 16 eigenprojector pairs, normalised per setting."""
    needed = set(WINGS["alice"] + WINGS["bob"])
    if set(state.labels) != needed:
        raise ValueError(f"state must live on {sorted(needed)}, got {state.labels}")
    obs_a = observable(setting.x, "alice", setting.variant)
    obs_b = observable(setting.y, "bob", setting.variant)
    entries = []
    for na, pa, va in zip(obs_a.names, obs_a.projectors, obs_a.eigenvalues):
        for nb, pb, vb in zip(obs_b.names, obs_b.projectors, obs_b.eigenvalues):
            p = born_probability(state, tensor(pa, pb))
            entries.append(Outcome(na, nb, va, vb, p))
    return ProbabilityTable(setting, tuple(entries))


def ideal_tables(variant: str = "main", angle: float = RESOURCE_ANGLE) -> list[ProbabilityTable]:
    psi = four_photon_state(angle)
    return [outcome_probabilities(psi, s) for s in all_settings(variant)]


def expectation(table: ProbabilityTable) -> float:
    """Sum over outcomes of a * b * P(a, b)."""
    return float(np.dot(table.products, table.probabilities))
