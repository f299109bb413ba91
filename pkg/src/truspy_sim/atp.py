"""Authentication Tokenization Program: token-mediated access to the secure store.

An APP in the REE authenticates to the ATP, receives a token minted by the
TA, and masks data with it before handing it over (the UDI).  The ATP checks
the Clark-Wilson triple, runs the IVP (stored-token equality plus expiry) and
unmasks with the *stored* token to obtain the CDI it writes.  Reads run the
same checks and return the CDI masked with the stored token.  A TA, at the
same integrity level as the store, reads and writes CDIs directly.

Masking is plain XOR against the 16-byte nonce repeated cyclically.  This is
keystream reuse and gives no payload integrity; it is kept deliberately.
"""

from __future__ import annotations

import enum
import hmac
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    AuthFailure,
    EmptyData,
    NotAuthenticated,
    NotFound,
    PolicyViolation,
    RoleError,
    TokenInvalid,
    TripleDenied,
)

NONCE_BYTES = 16


class Role(enum.Enum):
    APP = "APP"
    TA = "TA"
    ATP = "ATP"


class IvpFailure(enum.Enum):
    NO_TOKEN = "NoToken"
    MISMATCH = "Mismatch"
    EXPIRED = "Expired"


class WriterRole(enum.Enum):
    APP_VIA_ATP = "APP-via-ATP"
    TA = "TA"


@dataclass(frozen=True)
class SubjectIdentity:
    id: str
    role: Role
    credential: bytes = b""


@dataclass(frozen=True)
class Token:
    nonce: bytes
    subject_id: str
    issued_at: int
    expires_at: int

    def __post_init__(self):
        if len(self.nonce) != NONCE_BYTES:
            raise ValueError(f"nonce must be {NONCE_BYTES} bytes")
        if not any(self.nonce):
            raise ValueError("nonce must be nonzero")
        if self.expires_at <= self.issued_at:
            raise ValueError("expires_at must be after issued_at")


@dataclass(frozen=True)
class UnconstrainedItem:
    payload: bytes
    token_ref: Token

    def __post_init__(self):
        if not self.payload:
            raise EmptyData("UDI payload must be non-empty")


@dataclass(frozen=True)
class ConstrainedItem:
    payload: bytes
    writer_role: WriterRole


@dataclass(frozen=True)
class IvpResult:
    passed: bool
    reason: Optional[IvpFailure] = None

    def __bool__(self):
        return self.passed


PASS = IvpResult(True)


def tp_mask(data: bytes, token: Token) -> bytes:
    """XOR ``data`` with the token nonce repeated cyclically (an involution)."""
    if not data:
        raise EmptyData("cannot mask empty data")
    return bytes(b ^ k for b, k in zip(data, itertools.cycle(token.nonce)))


# -- secure store --------------------------------------------------------------


@dataclass
class SecureStore:
    """TEE-side memory: a data region, a token region and a logical clock.

    ``regions`` maps a region name to a half-open address interval.  Every
    touch of the data region is appended to ``access_log`` as
    ``(actor_id, operation, address)``.
    """

    regions: dict[str, tuple[int, int]] = field(
        default_factory=lambda: {"secure_data": (0x1000, 0x2000)})
    clock: int = 0
    data: dict[int, ConstrainedItem] = field(default_factory=dict)
    access_log: list[tuple[str, str, int]] = field(default_factory=list)
    _tokens: dict[str, Token] = field(default_factory=dict, repr=False)

    def region_of(self, address: int) -> str:
        for name, (start, stop) in self.regions.items():
            if start <= address < stop:
                return name
        raise PolicyViolation(f"address {address:#x} lies outside every secure region")

    def advance(self, ticks: int = 1) -> int:
        if ticks < 0:
            raise ValueError("the logical clock only moves forward")
        self.clock += ticks
        return self.clock

    # The token region is private to ATP/TA code paths in this module.
    def _store_token(self, token: Token) -> None:
        self._tokens[token.subject_id] = token

    def _stored_token(self, subject_id: str) -> Optional[Token]:
        return self._tokens.get(subject_id)

    def _read(self, actor: str, address: int) -> ConstrainedItem:
        self.access_log.append((actor, "read", address))
        try:
            return self.data[address]
        except KeyError:
            raise NotFound(f"no data at {address:#x}") from None

    def _write(self, actor: str, address: int, item: ConstrainedItem) -> None:
        self.access_log.append((actor, "write", address))
        self.data[address] = item


def dump_hex(store: SecureStore) -> str:
    """One ``address: bytes`` line per stored item, ascending by address."""
    return "".join(f"{addr:#010x}: {store.data[addr].payload.hex(' ')}\n"
                   for addr in sorted(store.data))


def load_hex(text: str) -> dict[int, bytes]:
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        addr, _, payload = line.partition(":")
        out[int(addr, 16)] = bytes.fromhex(payload)
    return out


# -- triples -------------------------------------------------------------------


@dataclass(frozen=True)
class Triple:
    role: Role
    operation: str
    region: str


@dataclass
class TripleRegistry:
    """Certified (role, operation, region) relations and who certified each."""

    entries: dict[Triple, set[str]] = field(default_factory=dict)

    def certify(self, triple: Triple, certifier_id: str) -> None:
        self.entries.setdefault(triple, set()).add(certifier_id)

    def check(self, subject: SubjectIdentity, operation: str, region: str) -> Triple:
        triple = Triple(subject.role, operation, region)
        if triple not in self.entries:
            raise TripleDenied(f"no certified triple {triple}")
        if subject.id in self.entries[triple]:
            raise TripleDenied(f"{subject.id} certified {triple} and may not execute it")
        return triple


def default_registry(region: str = "secure_data", certifier: str = "security-officer") -> TripleRegistry:
    registry = TripleRegistry()
    for op in ("read", "write"):
        registry.certify(Triple(Role.APP, op, region), certifier)
    return registry


# -- the ATP -------------------------------------------------------------------


@dataclass(frozen=True)
class Session:
    subject: SubjectIdentity
    session_id: int


class ATP:
    """The single token-issuing mediator of a scenario.

    ``ta`` is the trusted application through which tokens are minted; ``rng``
    is the seeded generator nonces are drawn from.
    """

    def __init__(self, store: SecureStore, registry: TripleRegistry, ta: SubjectIdentity,
                 rng: np.random.Generator, identity: str = "atp"):
        if ta.role is not Role.TA:
            raise RoleError("tokens must be minted through a TA")
        self.store = store
        self.registry = registry
        self.ta = ta
        self.rng = rng
        self.identity = SubjectIdentity(identity, Role.ATP)
        self._sessions: dict[int, Session] = {}
        self._next_session = itertools.count(1)

    def authenticate_subject(self, subject: SubjectIdentity, presented_credential: bytes) -> Session:
        if subject.role is not Role.APP:
            raise RoleError(f"{subject.role.value} subjects do not authenticate to the ATP")
        if not hmac.compare_digest(subject.credential, presented_credential):
            raise AuthFailure(f"bad credential for {subject.id}")
        session = Session(subject, next(self._next_session))
        self._sessions[session.session_id] = session
        return session

    def issue_token(self, session: Optional[Session], ttl: int) -> Token:
        if session is None or self._sessions.get(session.session_id) != session:
            raise NotAuthenticated("issue_token needs an authenticated session")
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        token = self._mint(session.subject.id, ttl)
        self.store._store_token(token)
        return token

    def _mint(self, subject_id: str, ttl: int) -> Token:
        # Runs on the TA side; the nonce is redrawn in the (2**-128) all-zero case.
        nonce = self.rng.bytes(NONCE_BYTES)
        while not any(nonce):
            nonce = self.rng.bytes(NONCE_BYTES)
        now = self.store.clock
        return Token(nonce, subject_id, now, now + ttl)

    def ivp_verify(self, presented: Optional[Token]) -> IvpResult:
        if presented is None:
            return IvpResult(False, IvpFailure.NO_TOKEN)
        stored = self.store._stored_token(presented.subject_id)
        if stored is None:
            return IvpResult(False, IvpFailure.NO_TOKEN)
        if not hmac.compare_digest(stored.nonce, presented.nonce):
            return IvpResult(False, IvpFailure.MISMATCH)
        if self.store.clock >= stored.expires_at:
            return IvpResult(False, IvpFailure.EXPIRED)
        return PASS

    def _admit(self, subject: SubjectIdentity, token: Optional[Token], operation: str,
               address: int) -> Token:
        region = self.store.region_of(address)
        self.registry.check(subject, operation, region)
        if token is not None and token.subject_id != subject.id:
            raise TokenInvalid(IvpFailure.MISMATCH)
        verdict = self.ivp_verify(token)
        if not verdict:
            raise TokenInvalid(verdict.reason)
        return self.store._stored_token(subject.id)

    def write_secure(self, subject: SubjectIdentity, token: Optional[Token],
                     udi: UnconstrainedItem, address: int) -> ConstrainedItem:
        stored = self._admit(subject, token, "write", address)
        cdi = ConstrainedItem(tp_mask(udi.payload, stored), WriterRole.APP_VIA_ATP)
        self.store._write(subject.id, address, cdi)
        return cdi

    def read_secure(self, subject: SubjectIdentity, token: Optional[Token], address: int) -> bytes:
        stored = self._admit(subject, token, "read", address)
        return tp_mask(self.store._read(subject.id, address).payload, stored)

    def trigger_gate(self, token: Optional[Token]) -> bool:
        """Whether a REE request carrying ``token`` may start a TEE victim run."""
        return bool(self.ivp_verify(token))


def ta_direct_access(subject: SubjectIdentity, address: int, store: SecureStore,
                     data: Optional[bytes] = None) -> bytes | ConstrainedItem:
    """TA path: read (``data is None``) or write a CDI with no token and no masking."""
    if subject.role is not Role.TA:
        raise RoleError(f"{subject.role.value} subjects need a token to reach the secure store")
    store.region_of(address)
    if data is None:
        return store._read(subject.id, address).payload
    if not data:
        raise EmptyData("cannot store empty data")
    cdi = ConstrainedItem(bytes(data), WriterRole.TA)
    store._write(subject.id, address, cdi)
    return cdi
