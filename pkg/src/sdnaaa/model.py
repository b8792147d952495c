"""Domain model for SDN-managed AAA routing.

Value types for peer tables, realm routing tables, TLS profiles and
attribute rules, plus the canonical JSON document encoding shared by the
management channel, the scenario fixtures and the CLI.

Everything here is an immutable value; the operations are pure functions,
so the types are safe to share across the simulator without copying.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

REDACTED = "<redacted>"

HOP_LIMIT = 16

_LABEL_RE = re.compile(r"^[a-z0-9-]{1,63}$")
_MAX_REALM_LABELS = 32

MIN_SECRET_LEN = 16
MAX_SECRET_LEN = 64


class ModelError(ValueError):
    """Parse or decode failure; ``code`` is the machine-readable reason."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


# ---------------------------------------------------------------------------
# identities and realm patterns


@dataclass(frozen=True)
class Realm:
    """An administrative domain name, kept as its lowercase label sequence."""

    labels: tuple[str, ...]

    @classmethod
    def parse(cls, text: str) -> "Realm":
        labels = tuple(text.lower().split("."))
        if not (1 <= len(labels) <= _MAX_REALM_LABELS) or not all(
            _LABEL_RE.match(label) for label in labels
        ):
            raise ModelError("BAD_REALM", text)
        return cls(labels)

    @property
    def text(self) -> str:
        return ".".join(self.labels)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Nai:
    """Network access identifier: user plus the realm that routes it."""

    user: str
    realm: Realm

    @property
    def text(self) -> str:
        return f"{self.user}@{self.realm.text}"

    def __str__(self) -> str:
        return self.text


def parse_nai(text: str) -> Nai:
    """Split ``user@realm`` at the last '@' and validate both halves.

    Errors: NO_AT_SIGN, EMPTY_USER, BAD_USER (embedded '@'), BAD_REALM.
    """
    if "@" not in text:
        raise ModelError("NO_AT_SIGN", text)
    user, _, realm_text = text.rpartition("@")
    if not user:
        raise ModelError("EMPTY_USER", text)
    if "@" in user:
        raise ModelError("BAD_USER", text)
    return Nai(user, Realm.parse(realm_text))


class PatternKind(Enum):
    EXACT = "exact"
    WILDCARD = "wildcard"
    DEFAULT = "default"


@dataclass(frozen=True)
class RealmPattern:
    """Routing pattern: an exact realm, a ``*.suffix`` wildcard, or ``*``.

    Specificity is 2n+1 for an exact pattern of n labels, 2n for a wildcard
    with an n-label suffix and 0 for the default, so distinct patterns that
    match the same realm never tie.
    """

    kind: PatternKind
    suffix: Optional[Realm] = None

    @classmethod
    def parse(cls, text: str) -> "RealmPattern":
        if text == "*":
            return cls(PatternKind.DEFAULT)
        if text.startswith("*."):
            return cls(PatternKind.WILDCARD, Realm.parse(text[2:]))
        return cls(PatternKind.EXACT, Realm.parse(text))

    @property
    def text(self) -> str:
        if self.kind is PatternKind.DEFAULT:
            return "*"
        if self.kind is PatternKind.WILDCARD:
            return f"*.{self.suffix.text}"
        return self.suffix.text

    @property
    def specificity(self) -> int:
        if self.kind is PatternKind.DEFAULT:
            return 0
        n = len(self.suffix.labels)
        return 2 * n + 1 if self.kind is PatternKind.EXACT else 2 * n

    def __str__(self) -> str:
        return self.text


def match_realm(pattern: RealmPattern, realm: Realm) -> Optional[int]:
    """Return the pattern's specificity if it matches ``realm``, else None.

    A wildcard requires at least one extra label in front of its suffix.
    """
    if pattern.kind is PatternKind.DEFAULT:
        return 0
    if pattern.kind is PatternKind.EXACT:
        return pattern.specificity if realm.labels == pattern.suffix.labels else None
    suffix = pattern.suffix.labels
    if len(realm.labels) > len(suffix) and realm.labels[-len(suffix):] == suffix:
        return pattern.specificity
    return None


# ---------------------------------------------------------------------------
# peer table, tls container, routing table, attribute rules


class Transport(Enum):
    RADIUS_UDP = "radius-udp"
    RADIUS_TLS = "radius-tls"
    DIAMETER_TCP = "diameter-tcp"
    DIAMETER_TLS = "diameter-tls"


TLS_TRANSPORTS = frozenset({Transport.RADIUS_TLS, Transport.DIAMETER_TLS})

#: conventional ports used when the controller fabricates peer entries
TRANSPORT_PORTS = {
    Transport.RADIUS_UDP: 1812,
    Transport.RADIUS_TLS: 2083,
    Transport.DIAMETER_TCP: 3868,
    Transport.DIAMETER_TLS: 3868,
}


@dataclass(frozen=True)
class SharedSecret:
    """Shared secret credential; ``secret`` is raw bytes, or the redaction
    token once the document has passed through a read path."""

    secret: Union[bytes, str]


@dataclass(frozen=True)
class TlsRef:
    profile: str


Credential = Union[SharedSecret, TlsRef]


@dataclass(frozen=True)
class TlsProfile:
    """Simulated TLS identity: who this node claims to be and who it trusts."""

    name: str
    local_identity: str
    local_key: Union[bytes, str]  # write-only material; str only when redacted
    trusted_identities: frozenset[str]


@dataclass(frozen=True)
class PeerEntry:
    peer_id: str
    identity: str
    host: str
    port: int
    transport: Transport
    credential: Credential
    expiration: Optional[int] = None  # absolute logical ms


class Action(Enum):
    LOCAL = "local"
    RELAY = "relay"
    PROXY = "proxy"
    REDIRECT = "redirect"


class Direction(Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"


class RuleOp(Enum):
    ADD = "add"
    REMOVE = "remove"
    REPLACE = "replace"


@dataclass(frozen=True)
class AttributeRule:
    rule_id: str
    direction: Direction
    op: RuleOp
    attribute: str
    value: Optional[str] = None  # absent for REMOVE


@dataclass(frozen=True)
class RealmEntry:
    pattern: RealmPattern
    next_hop: Optional[str]  # peer_id; None for LOCAL
    action: Action
    rule_refs: tuple[str, ...] = ()
    expiration: Optional[int] = None


# ---------------------------------------------------------------------------
# messages and notifications


class MsgKind(Enum):
    REQUEST = "request"
    RESPONSE = "response"


@dataclass(frozen=True)
class AaaMessage:
    """Protocol-independent AAA message with its accumulated hop trace.

    ``attributes`` is treated as a value: handlers copy it before changing
    anything. ``error`` carries the code when status is "error".
    """

    msg_id: str
    kind: MsgKind
    nai: Nai
    dest_realm: Realm
    attributes: dict[str, str]
    hop_trace: tuple[str, ...] = ()
    status: str = "pending"  # pending | accept | reject | error
    error: Optional[str] = None

    def to_json(self) -> dict:
        out = {
            "kind": self.kind.value,
            "msg_id": self.msg_id,
            "nai": self.nai.text,
            "dest_realm": self.dest_realm.text,
            "attributes": dict(self.attributes),
            "trace": list(self.hop_trace),
            "status": self.status,
        }
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass(frozen=True)
class Notification:
    """Node-to-controller event (acquire-route, expirations, forward failure)."""

    kind: str
    node_id: str
    realm: Optional[Realm] = None
    peer_id: Optional[str] = None
    pattern: Optional[RealmPattern] = None

    ACQUIRE_ROUTE = "acquire-route"
    PEER_EXPIRED = "peer-expired"
    ROUTE_EXPIRED = "route-expired"
    FORWARD_FAILURE = "forward-failure"

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind, "node": self.node_id}
        if self.realm is not None:
            out["realm"] = self.realm.text
        if self.peer_id is not None:
            out["peer"] = self.peer_id
        if self.pattern is not None:
            out["pattern"] = self.pattern.text
        return out

    @classmethod
    def acquire_route(cls, node_id: str, realm: Realm) -> "Notification":
        return cls(cls.ACQUIRE_ROUTE, node_id, realm=realm)

    @classmethod
    def peer_expired(cls, node_id: str, peer_id: str) -> "Notification":
        return cls(cls.PEER_EXPIRED, node_id, peer_id=peer_id)

    @classmethod
    def route_expired(cls, node_id: str, pattern: RealmPattern) -> "Notification":
        return cls(cls.ROUTE_EXPIRED, node_id, pattern=pattern)

    @classmethod
    def forward_failure(cls, node_id: str, peer_id: str, realm: Realm) -> "Notification":
        return cls(cls.FORWARD_FAILURE, node_id, realm=realm, peer_id=peer_id)


def notification_from_json(obj: dict) -> Notification:
    return Notification(
        kind=obj["kind"],
        node_id=obj["node"],
        realm=Realm.parse(obj["realm"]) if "realm" in obj else None,
        peer_id=obj.get("peer"),
        pattern=RealmPattern.parse(obj["pattern"]) if "pattern" in obj else None,
    )


# ---------------------------------------------------------------------------
# configuration document


@dataclass(frozen=True)
class ConfigDocument:
    """A node's full configuration: peers, routing, tls and attributes.

    Containers are keyed sets; they are normalized to key order on
    construction so equal configurations compare equal and the canonical
    encoding is simply the field order.
    """

    peers: tuple[PeerEntry, ...] = ()
    routing: tuple[RealmEntry, ...] = ()
    tls: tuple[TlsProfile, ...] = ()
    attributes: tuple[AttributeRule, ...] = ()

    def __post_init__(self):
        for container in CONTAINERS:
            entries = tuple(
                sorted(getattr(self, container), key=lambda e: entry_key(container, e))
            )
            object.__setattr__(self, container, entries)

    def peer(self, peer_id: str) -> Optional[PeerEntry]:
        for p in self.peers:
            if p.peer_id == peer_id:
                return p
        return None

    def route(self, pattern_text: str) -> Optional[RealmEntry]:
        for r in self.routing:
            if r.pattern.text == pattern_text:
                return r
        return None

    def profile(self, name: str) -> Optional[TlsProfile]:
        for t in self.tls:
            if t.name == name:
                return t
        return None

    def rule(self, rule_id: str) -> Optional[AttributeRule]:
        for a in self.attributes:
            if a.rule_id == rule_id:
                return a
        return None


CONTAINERS = ("peers", "routing", "tls", "attributes")


def entry_key(container: str, entity) -> str:
    """The unique key an entity sorts and upserts by within its container."""
    if container == "peers":
        return entity.peer_id
    if container == "routing":
        return entity.pattern.text
    if container == "tls":
        return entity.name
    if container == "attributes":
        return entity.rule_id
    raise ModelError("BAD_CONTAINER", container)


def with_entry(doc: ConfigDocument, container: str, entity) -> ConfigDocument:
    """Upsert ``entity`` into ``container`` keyed by its unique key."""
    key = entry_key(container, entity)
    entries = tuple(
        e for e in getattr(doc, container) if entry_key(container, e) != key
    ) + (entity,)
    return replace(doc, **{container: entries})


def without_entry(doc: ConfigDocument, container: str, key: str) -> ConfigDocument:
    entries = tuple(
        e for e in getattr(doc, container) if entry_key(container, e) != key
    )
    return replace(doc, **{container: entries})


# ---------------------------------------------------------------------------
# route selection


def select_route(
    table, realm: Realm, now: int
) -> Optional[RealmEntry]:
    """Most-specific non-expired entry matching ``realm``, or None.

    An entry is selectable strictly before its expiration time. Distinct
    matching patterns never share a specificity, so the result is
    deterministic without a tie-break.
    """
    best = None
    best_spec = -1
    for entry in table:
        if entry.expiration is not None and now >= entry.expiration:
            continue
        spec = match_realm(entry.pattern, realm)
        if spec is not None and spec > best_spec:
            best, best_spec = entry, spec
    return best


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str

    def __str__(self) -> str:
        return f"{self.code}: {self.subject}"

    def to_json(self) -> dict:
        return {"code": self.code, "subject": self.subject}


def _valid_token(value) -> bool:
    return isinstance(value, str) and bool(value)


def _valid_expiration(value) -> bool:
    return value is None or (isinstance(value, int) and not isinstance(value, bool) and value > 0)


def _valid_realm_labels(realm: Realm) -> bool:
    return (
        1 <= len(realm.labels) <= _MAX_REALM_LABELS
        and all(isinstance(l, str) and _LABEL_RE.match(l) for l in realm.labels)
    )


def validate_document(doc: ConfigDocument) -> list[Violation]:
    """Check every type invariant plus cross-reference resolution.

    Returns all violations found, in document order; an empty list means
    the document is consistent.
    """
    out: list[Violation] = []

    seen_profiles: set[str] = set()
    for t in doc.tls:
        where = f"tls/{t.name}"
        if not _valid_token(t.name):
            out.append(Violation("BAD_ID", where))
        elif t.name in seen_profiles:
            out.append(Violation("DUPLICATE_TLS_PROFILE", where))
        seen_profiles.add(t.name)
        if not _valid_token(t.local_identity):
            out.append(Violation("BAD_IDENTITY", where))
        if not t.trusted_identities:
            out.append(Violation("EMPTY_TRUST", where))
        if isinstance(t.local_key, str) and t.local_key != REDACTED:
            out.append(Violation("BAD_KEY", where))

    seen_rules: set[str] = set()
    for a in doc.attributes:
        where = f"attributes/{a.rule_id}"
        if not _valid_token(a.rule_id):
            out.append(Violation("BAD_ID", where))
        elif a.rule_id in seen_rules:
            out.append(Violation("DUPLICATE_RULE_ID", where))
        seen_rules.add(a.rule_id)
        if not _valid_token(a.attribute):
            out.append(Violation("BAD_ATTRIBUTE", where))
        if a.op is RuleOp.REMOVE:
            if a.value is not None:
                out.append(Violation("UNEXPECTED_VALUE", where))
        elif a.value is None:
            out.append(Violation("MISSING_VALUE", where))

    seen_peers: set[str] = set()
    for p in doc.peers:
        where = f"peers/{p.peer_id}"
        if not _valid_token(p.peer_id):
            out.append(Violation("BAD_ID", where))
        elif p.peer_id in seen_peers:
            out.append(Violation("DUPLICATE_PEER_ID", where))
        seen_peers.add(p.peer_id)
        if not _valid_token(p.identity):
            out.append(Violation("BAD_IDENTITY", where))
        if not _valid_token(p.host):
            out.append(Violation("BAD_HOST", where))
        if not (
            isinstance(p.port, int)
            and not isinstance(p.port, bool)
            and 1 <= p.port <= 65535
        ):
            out.append(Violation("BAD_PORT", where))
        if not _valid_expiration(p.expiration):
            out.append(Violation("BAD_EXPIRATION", where))
        if p.transport in TLS_TRANSPORTS:
            if not isinstance(p.credential, TlsRef):
                out.append(Violation("TRANSPORT_CREDENTIAL_MISMATCH", where))
        elif p.transport is Transport.RADIUS_UDP:
            if not isinstance(p.credential, SharedSecret):
                out.append(Violation("TRANSPORT_CREDENTIAL_MISMATCH", where))
        if isinstance(p.credential, SharedSecret):
            secret = p.credential.secret
            if isinstance(secret, str):
                if secret != REDACTED:
                    out.append(Violation("BAD_SECRET", where))
            elif not (MIN_SECRET_LEN <= len(secret) <= MAX_SECRET_LEN):
                out.append(Violation("BAD_SECRET_LENGTH", where))
        if isinstance(p.credential, TlsRef):
            prof = doc.profile(p.credential.profile)
            if prof is None:
                out.append(Violation("DANGLING_TLS_REF", where))
            elif p.identity not in prof.trusted_identities:
                out.append(Violation("IDENTITY_NOT_TRUSTED", where))

    seen_patterns: set[str] = set()
    for r in doc.routing:
        where = f"routing/{r.pattern.text}"
        if r.pattern.kind is not PatternKind.DEFAULT and not _valid_realm_labels(
            r.pattern.suffix
        ):
            out.append(Violation("BAD_REALM", where))
        if r.pattern.text in seen_patterns:
            out.append(Violation("DUPLICATE_PATTERN", where))
        seen_patterns.add(r.pattern.text)
        if r.action is Action.LOCAL:
            if r.next_hop is not None:
                out.append(Violation("UNEXPECTED_NEXT_HOP", where))
        else:
            if r.next_hop is None:
                out.append(Violation("MISSING_NEXT_HOP", where))
            elif r.next_hop not in seen_peers:
                out.append(Violation("DANGLING_NEXT_HOP", where))
        if r.rule_refs and r.action is not Action.PROXY:
            out.append(Violation("RULE_REFS_NOT_ALLOWED", where))
        for ref in r.rule_refs:
            if ref not in seen_rules:
                out.append(Violation("DANGLING_RULE_REF", where))
        if not _valid_expiration(r.expiration):
            out.append(Violation("BAD_EXPIRATION", where))

    return out


# ---------------------------------------------------------------------------
# canonical encoding


def _key_bytes_to_json(value: Union[bytes, str]) -> str:
    return value.hex() if isinstance(value, bytes) else value


def credential_to_json(cred: Credential) -> dict:
    if isinstance(cred, SharedSecret):
        return {"kind": "shared-secret", "secret": _key_bytes_to_json(cred.secret)}
    return {"kind": "tls-ref", "profile": cred.profile}


def peer_to_json(p: PeerEntry) -> dict:
    return {
        "peer_id": p.peer_id,
        "identity": p.identity,
        "host": p.host,
        "port": p.port,
        "transport": p.transport.value,
        "credential": credential_to_json(p.credential),
        "expiration": p.expiration,
    }


def route_to_json(r: RealmEntry) -> dict:
    return {
        "pattern": r.pattern.text,
        "next_hop": r.next_hop,
        "action": r.action.value,
        "rule_refs": list(r.rule_refs),
        "expiration": r.expiration,
    }


def profile_to_json(t: TlsProfile) -> dict:
    return {
        "name": t.name,
        "local_identity": t.local_identity,
        "local_key": _key_bytes_to_json(t.local_key),
        "trusted_identities": sorted(t.trusted_identities),
    }


def rule_to_json(a: AttributeRule) -> dict:
    return {
        "rule_id": a.rule_id,
        "direction": a.direction.value,
        "op": a.op.value,
        "attribute": a.attribute,
        "value": a.value,
    }


_TO_JSON = {
    "peers": peer_to_json,
    "routing": route_to_json,
    "tls": profile_to_json,
    "attributes": rule_to_json,
}


def entity_to_json(container: str, entity) -> dict:
    return _TO_JSON[container](entity)


def document_to_json(doc: ConfigDocument) -> dict:
    return {
        container: [
            _TO_JSON[container](e)
            for e in sorted(
                getattr(doc, container), key=lambda e: entry_key(container, e)
            )
        ]
        for container in CONTAINERS
    }


def encode_document(doc: ConfigDocument) -> str:
    """Canonical UTF-8 JSON: fixed container order, entries sorted by key."""
    return json.dumps(document_to_json(doc), separators=(",", ":"))


class _Fields:
    """Strict field extraction for decode; unknown keys are schema errors."""

    def __init__(self, obj, where: str, allowed: set[str]):
        if not isinstance(obj, dict):
            raise ModelError("SCHEMA_ERROR", f"{where}: expected object")
        unknown = set(obj) - allowed
        if unknown:
            raise ModelError("SCHEMA_ERROR", f"{where}: unknown key {sorted(unknown)[0]!r}")
        self.obj = obj
        self.where = where

    def req(self, key: str):
        if key not in self.obj:
            raise ModelError("SCHEMA_ERROR", f"{self.where}: missing key {key!r}")
        return self.obj[key]

    def opt(self, key: str, default=None):
        return self.obj.get(key, default)


def _decode_str(value, where: str) -> str:
    if not isinstance(value, str):
        raise ModelError("SCHEMA_ERROR", f"{where}: expected string")
    return value


def _decode_int(value, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ModelError("SCHEMA_ERROR", f"{where}: expected integer")
    return value


def _decode_opt_int(value, where: str) -> Optional[int]:
    return None if value is None else _decode_int(value, where)


def _decode_key_bytes(value, where: str) -> Union[bytes, str]:
    text = _decode_str(value, where)
    if text == REDACTED:
        return text
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise ModelError("SCHEMA_ERROR", f"{where}: expected hex bytes") from None


def _decode_enum(enum_cls, value, where: str):
    try:
        return enum_cls(_decode_str(value, where))
    except ValueError:
        raise ModelError("SCHEMA_ERROR", f"{where}: bad value {value!r}") from None


def credential_from_json(obj, where: str = "credential") -> Credential:
    f = _Fields(obj, where, {"kind", "secret", "profile"})
    kind = _decode_str(f.req("kind"), where)
    if kind == "shared-secret":
        return SharedSecret(_decode_key_bytes(f.req("secret"), where))
    if kind == "tls-ref":
        return TlsRef(_decode_str(f.req("profile"), where))
    raise ModelError("SCHEMA_ERROR", f"{where}: bad credential kind {kind!r}")


def peer_from_json(obj, where: str = "peers") -> PeerEntry:
    f = _Fields(
        obj, where,
        {"peer_id", "identity", "host", "port", "transport", "credential", "expiration"},
    )
    return PeerEntry(
        peer_id=_decode_str(f.req("peer_id"), where),
        identity=_decode_str(f.req("identity"), where),
        host=_decode_str(f.req("host"), where),
        port=_decode_int(f.req("port"), where),
        transport=_decode_enum(Transport, f.req("transport"), where),
        credential=credential_from_json(f.req("credential"), f"{where}.credential"),
        expiration=_decode_opt_int(f.opt("expiration"), where),
    )


def route_from_json(obj, where: str = "routing") -> RealmEntry:
    f = _Fields(obj, where, {"pattern", "next_hop", "action", "rule_refs", "expiration"})
    refs = f.opt("rule_refs", [])
    if not isinstance(refs, list):
        raise ModelError("SCHEMA_ERROR", f"{where}: rule_refs must be a list")
    next_hop = f.opt("next_hop")
    try:
        pattern = RealmPattern.parse(_decode_str(f.req("pattern"), where))
    except ModelError as err:
        if err.code == "BAD_REALM":
            raise ModelError("SCHEMA_ERROR", f"{where}: bad pattern") from None
        raise
    return RealmEntry(
        pattern=pattern,
        next_hop=None if next_hop is None else _decode_str(next_hop, where),
        action=_decode_enum(Action, f.req("action"), where),
        rule_refs=tuple(_decode_str(r, where) for r in refs),
        expiration=_decode_opt_int(f.opt("expiration"), where),
    )


def profile_from_json(obj, where: str = "tls") -> TlsProfile:
    f = _Fields(obj, where, {"name", "local_identity", "local_key", "trusted_identities"})
    trusted = f.req("trusted_identities")
    if not isinstance(trusted, list):
        raise ModelError("SCHEMA_ERROR", f"{where}: trusted_identities must be a list")
    return TlsProfile(
        name=_decode_str(f.req("name"), where),
        local_identity=_decode_str(f.req("local_identity"), where),
        local_key=_decode_key_bytes(f.req("local_key"), where),
        trusted_identities=frozenset(_decode_str(t, where) for t in trusted),
    )


def rule_from_json(obj, where: str = "attributes") -> AttributeRule:
    f = _Fields(obj, where, {"rule_id", "direction", "op", "attribute", "value"})
    value = f.opt("value")
    return AttributeRule(
        rule_id=_decode_str(f.req("rule_id"), where),
        direction=_decode_enum(Direction, f.req("direction"), where),
        op=_decode_enum(RuleOp, f.req("op"), where),
        attribute=_decode_str(f.req("attribute"), where),
        value=None if value is None else _decode_str(value, where),
    )


_FROM_JSON = {
    "peers": peer_from_json,
    "routing": route_from_json,
    "tls": profile_from_json,
    "attributes": rule_from_json,
}


def entity_from_json(container: str, obj) -> object:
    if container not in _FROM_JSON:
        raise ModelError("SCHEMA_ERROR", f"bad container {container!r}")
    return _FROM_JSON[container](obj, container)


def document_from_json(obj) -> ConfigDocument:
    if not isinstance(obj, dict):
        raise ModelError("SCHEMA_ERROR", "top level must be an object")
    if set(obj) != set(CONTAINERS):
        bad = sorted(set(obj) ^ set(CONTAINERS))[0]
        raise ModelError("SCHEMA_ERROR", f"bad top-level key {bad!r}")
    parts = {}
    for container in CONTAINERS:
        entries = obj[container]
        if not isinstance(entries, list):
            raise ModelError("SCHEMA_ERROR", f"{container} must be a list")
        parts[container] = tuple(_FROM_JSON[container](e, container) for e in entries)
    return ConfigDocument(**parts)


def decode_document(text: str) -> ConfigDocument:
    """Inverse of encode_document. Errors: PARSE_ERROR, SCHEMA_ERROR."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise ModelError("PARSE_ERROR", str(err)) from None
    return document_from_json(obj)


# ---------------------------------------------------------------------------
# redaction


def redact(doc: ConfigDocument) -> ConfigDocument:
    """Replace all private credential material with the redaction token.

    Idempotent; every other field is preserved byte for byte.
    """
    peers = tuple(
        replace(p, credential=SharedSecret(REDACTED))
        if isinstance(p.credential, SharedSecret)
        else p
        for p in doc.peers
    )
    tls = tuple(replace(t, local_key=REDACTED) for t in doc.tls)
    return replace(doc, peers=peers, tls=tls)
