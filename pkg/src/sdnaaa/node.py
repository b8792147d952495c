"""Data plane agent: applies southbound configuration, manages simulated
security channels with its peers, and routes AAA messages by realm with
LOCAL/RELAY/PROXY/REDIRECT semantics, reactive acquire notifications and
entry expirations.

A node is a single logical state machine: southbound frames, AAA records
and timer ticks are processed one at a time in event-loop order. Nothing
blocks; every inter-node interaction is message passing with explicit
latency supplied by the surrounding harness.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Optional

from . import model, southbound
from .model import (
    AaaMessage,
    Action,
    Direction,
    MsgKind,
    Notification,
    Realm,
    RealmEntry,
    RealmPattern,
    RuleOp,
    SharedSecret,
    TlsRef,
)

HOP_LIMIT = model.HOP_LIMIT
PENDING_LIMIT = 64
PENDING_TIMEOUT_MS = 5000
REDIRECT_HINT_TTL_MS = 30000

IDLE = "IDLE"
ESTABLISHED = "ESTABLISHED"
FAILED = "FAILED"

UP = "UP"
DOWN = "DOWN"


class RuleError(Exception):
    def __init__(self, code: str, attribute: str = ""):
        super().__init__(f"{code}: {attribute}" if attribute else code)
        self.code = code


def apply_attribute_rules(msg: AaaMessage, rules, direction: Direction) -> AaaMessage:
    """Apply matching rules in list order to a copy of the attribute map.

    ADD of an existing attribute raises ADD_EXISTS, REPLACE of a missing
    one raises REPLACE_MISSING, REMOVE of a missing one is a no-op. The
    hop trace and the NAI are never touched.
    """
    attrs = dict(msg.attributes)
    for rule in rules:
        if rule.direction is not direction:
            continue
        if rule.op is RuleOp.ADD:
            if rule.attribute in attrs:
                raise RuleError("ADD_EXISTS", rule.attribute)
            attrs[rule.attribute] = rule.value
        elif rule.op is RuleOp.REMOVE:
            attrs.pop(rule.attribute, None)
        else:  # REPLACE
            if rule.attribute not in attrs:
                raise RuleError("REPLACE_MISSING", rule.attribute)
            attrs[rule.attribute] = rule.value
    return replace(msg, attributes=attrs)


# records exchanged between nodes besides AAA messages


@dataclass(frozen=True)
class RedirectQuery:
    realm: Realm
    requester: str

    def to_json(self) -> dict:
        return {"kind": "redirect-query", "realm": self.realm.text, "from": self.requester}


@dataclass(frozen=True)
class RedirectHint:
    realm: Realm
    next_host: str
    ttl: int

    def to_json(self) -> dict:
        return {"kind": "redirect-hint", "realm": self.realm.text, "next": self.next_host, "ttl": self.ttl}


@dataclass(frozen=True)
class RedirectMiss:
    realm: Realm

    def to_json(self) -> dict:
        return {"kind": "redirect-miss", "realm": self.realm.text}


@dataclass
class Channel:
    status: str = IDLE
    established_at: Optional[int] = None


class _PendingQueue:
    """FIFO of messages waiting for a usable route to one realm.

    The queue's lifetime is the deduplication window for both the
    acquire-route notification and forward-failure notifications.
    """

    __slots__ = ("items", "acquire_sent", "failures_reported")

    def __init__(self):
        self.items: deque = deque()
        self.acquire_sent = False
        self.failures_reported: set[str] = set()


class Node:
    """One AAA node: running configuration plus routing behavior."""

    def __init__(
        self,
        node_id: str,
        address: str,
        loop,
        network,
        role: str = "AGENT",
        served_realms=(),
        users: Optional[dict[str, str]] = None,
        authorized_controller: str = "controller",
        state: str = UP,
    ):
        self.node_id = node_id
        self.address = address
        self.loop = loop
        self.network = network
        self.role = role
        self.served_realms: tuple[Realm, ...] = tuple(served_realms)
        self.users = dict(users or {})
        self.authorized_controller = authorized_controller
        self.state = state
        self.session = None

        self.running = model.ConfigDocument()
        self.channels: dict[str, Channel] = {}
        self.pending: dict[str, _PendingQueue] = {}
        self.route_cache: dict[str, RealmEntry] = {}

        self.forwards = 0
        self.queue_drops = 0
        self.notification_drops = 0
        self.redirect_queries_sent = 0

        self._handshakes: dict[str, list[Callable]] = {}
        self._redirect_inflight: set[str] = set()

    def is_up(self) -> bool:
        return self.state == UP

    def channel_status(self, peer_id: str) -> str:
        channel = self.channels.get(peer_id)
        return channel.status if channel is not None else IDLE

    # ------------------------------------------------------------------
    # southbound configuration

    def apply_changes(self, changes) -> tuple[bool, Optional[dict]]:
        """Atomic validate-then-swap: either every change lands or none.

        Returns (True, None) or (False, {"code", "detail"}).
        """
        doc = self.running
        try:
            for change in changes:
                doc = self._apply_one(doc, change)
        except southbound.SouthboundError as err:
            return False, {"code": err.code, "detail": [str(err)]}
        violations = model.validate_document(doc)
        if violations:
            return False, {
                "code": "VALIDATION_FAILED",
                "detail": [v.to_json() for v in violations],
            }
        old = self.running
        self.running = doc
        self._after_apply(old, changes)
        return True, None

    @staticmethod
    def _apply_one(doc: model.ConfigDocument, change) -> model.ConfigDocument:
        container, key = change.container_key()
        if change.op == southbound.MERGE:
            if change.value is None:
                raise southbound.SouthboundError("BAD_PATH", f"{change.path}: merge without value")
            if model.entry_key(container, change.value) != key:
                raise southbound.SouthboundError("BAD_PATH", f"{change.path}: key mismatch")
            return model.with_entry(doc, container, change.value)
        if change.op == southbound.DELETE:
            if not any(
                model.entry_key(container, e) == key for e in getattr(doc, container)
            ):
                raise southbound.SouthboundError("BAD_PATH", f"{change.path}: no such entry")
            return model.without_entry(doc, container, key)
        raise southbound.SouthboundError("BAD_PATH", f"{change.path}: bad op {change.op!r}")

    def _after_apply(self, old: model.ConfigDocument, changes) -> None:
        now = self.loop.now
        routing_touched = False
        for change in changes:
            container, key = change.container_key()
            if container == "peers":
                before = old.peer(key)
                after = self.running.peer(key)
                if before is not None and before != after:
                    self._drop_channel_pair(before)
                if after is not None and after.expiration is not None:
                    self.loop.call_at(after.expiration, self._timer_tick)
            elif container == "routing":
                routing_touched = True
                before = old.route(key)
                after = self.running.route(key)
                if before is not None and after is not None and before.next_hop != after.next_hop:
                    self.network.note_reroute(self.node_id, key)
                if after is not None and after.expiration is not None:
                    self.loop.call_at(after.expiration, self._timer_tick)
        if routing_touched:
            self._flush_pending()

    def _drop_channel_pair(self, entry: model.PeerEntry) -> None:
        self.channels.pop(entry.peer_id, None)
        peer_node = self.network.node_by_address(entry.host)
        if peer_node is None:
            return
        mirror = peer_node.peer_for_host(self.address)
        if mirror is not None:
            peer_node.channels.pop(mirror.peer_id, None)

    def peer_for_host(self, host: str) -> Optional[model.PeerEntry]:
        for p in self.running.peers:
            if p.host == host:
                return p
        return None

    # ------------------------------------------------------------------
    # security channels

    def establish_channel(self, peer_id: str, on_result: Callable) -> None:
        """Simulated handshake with the peer behind ``peer_id``; the verdict
        is delivered one time unit later via ``on_result(ok, reason)``.

        Concurrent attempts to the same peer share one handshake.
        """
        waiters = self._handshakes.get(peer_id)
        if waiters is not None:
            waiters.append(on_result)
            return
        self._handshakes[peer_id] = [on_result]
        self.loop.call_later(1, lambda: self._finish_handshake(peer_id))

    def _finish_handshake(self, peer_id: str) -> None:
        waiters = self._handshakes.pop(peer_id, [])
        if not self.is_up():
            return
        ok, reason = self._handshake_verdict(peer_id)
        peer_node = None
        if ok:
            entry = self.running.peer(peer_id)
            peer_node = self.network.node_by_address(entry.host)
            mirror = peer_node.peer_for_host(self.address)
            now = self.loop.now
            self.channels[peer_id] = Channel(ESTABLISHED, now)
            peer_node.channels[mirror.peer_id] = Channel(ESTABLISHED, now)
            self.network.note_channel(self.node_id, peer_node.node_id)
        else:
            self.channels[peer_id] = Channel(FAILED)
        for cb in waiters:
            cb(ok, reason)
        if ok:
            # fresh connectivity may unblock messages parked on a channel
            # failure; both endpoints retry their queues
            self._flush_pending()
            peer_node._flush_pending()

    def _handshake_verdict(self, peer_id: str) -> tuple[bool, Optional[str]]:
        entry = self.running.peer(peer_id)
        if entry is None:
            return False, "NO_MIRROR_ENTRY"
        peer_node = self.network.node_by_address(entry.host)
        if peer_node is None or not peer_node.is_up():
            return False, "PEER_DOWN"
        mirror = peer_node.peer_for_host(self.address)
        if mirror is None:
            return False, "NO_MIRROR_ENTRY"
        if mirror.transport is not entry.transport:
            return False, "TRANSPORT_MISMATCH"
        mine, theirs = entry.credential, mirror.credential
        if isinstance(mine, SharedSecret) and isinstance(theirs, SharedSecret):
            if (
                isinstance(mine.secret, bytes)
                and isinstance(theirs.secret, bytes)
                and mine.secret == theirs.secret
            ):
                return True, None
            return False, "CREDENTIAL_MISMATCH"
        if isinstance(mine, TlsRef) and isinstance(theirs, TlsRef):
            my_prof = self.running.profile(mine.profile)
            their_prof = peer_node.running.profile(theirs.profile)
            if (
                my_prof is not None
                and their_prof is not None
                and their_prof.local_identity in my_prof.trusted_identities
                and my_prof.local_identity in their_prof.trusted_identities
            ):
                return True, None
            return False, "CREDENTIAL_MISMATCH"
        return False, "CREDENTIAL_MISMATCH"

    # ------------------------------------------------------------------
    # message routing

    def handle_message(self, msg: AaaMessage, now: int) -> None:
        if msg.kind is MsgKind.RESPONSE:
            self._route_response(msg)
            return
        if self.node_id in msg.hop_trace:
            self._fail(msg, "ROUTE_LOOP")
            return
        if len(msg.hop_trace) >= HOP_LIMIT:
            self._fail(msg, "HOP_LIMIT")
            return
        msg = replace(msg, hop_trace=msg.hop_trace + (self.node_id,))
        self._route(msg, now)

    def _select(self, realm: Realm, now: int) -> Optional[RealmEntry]:
        # live cache entries shadow running entries with the same pattern,
        # so a cached redirect hint overrides the REDIRECT entry it refined
        cache = {}
        for key in list(self.route_cache):
            cached = self.route_cache[key]
            if cached.expiration is not None and now >= cached.expiration:
                del self.route_cache[key]
            else:
                cache[key] = cached
        table = [r for r in self.running.routing if r.pattern.text not in cache]
        table.extend(cache.values())
        return model.select_route(table, realm, now)

    def _route(self, msg: AaaMessage, now: int) -> None:
        entry = self._select(msg.dest_realm, now)
        if entry is None:
            self._park(msg, now, acquire=True)
            return
        self._dispatch(msg, entry, now)

    def _dispatch(self, msg: AaaMessage, entry: RealmEntry, now: int) -> None:
        if entry.action is Action.LOCAL:
            self.authenticate_local(msg)
        elif entry.action is Action.RELAY:
            self._forward(msg, entry.next_hop)
        elif entry.action is Action.PROXY:
            rules = [self.running.rule(ref) for ref in entry.rule_refs]
            try:
                msg = apply_attribute_rules(msg, rules, Direction.OUTGOING)
            except RuleError as err:
                self._fail(msg, err.code)
                return
            self._forward(msg, entry.next_hop)
        else:  # REDIRECT
            self.query_redirect(msg, entry.next_hop, now)

    def _forward(self, msg: AaaMessage, peer_id: str) -> None:
        queue = self.pending.get(msg.dest_realm.text)
        if queue is not None and queue.items:
            # a backlog means the last dispatch round could not get through;
            # join it to keep per-realm FIFO, and keep probing the channel so
            # a recovery flushes the whole queue
            self._park(msg, self.loop.now, acquire=False)
            channel = self.channels.get(peer_id)
            if channel is None or channel.status != ESTABLISHED:
                self.establish_channel(peer_id, lambda ok, reason: None)
            return
        channel = self.channels.get(peer_id)
        if channel is not None and channel.status == ESTABLISHED:
            self._transmit(msg, peer_id)
            return

        def done(ok: bool, reason: Optional[str]) -> None:
            if ok:
                self._transmit(msg, peer_id)
            else:
                self._channel_failed(msg, peer_id, reason)

        self.establish_channel(peer_id, done)

    def _transmit(self, msg: AaaMessage, peer_id: str) -> None:
        entry = self.running.peer(peer_id)
        if entry is None:
            self._channel_failed(msg, peer_id, "NO_MIRROR_ENTRY")
            return
        target = self.network.node_by_address(entry.host)
        self.forwards += 1
        self.network.send_record(self, target, msg)

    def _channel_failed(self, msg: AaaMessage, peer_id: str, reason: Optional[str]) -> None:
        # Keep the message pending for retry after the controller reroutes.
        self.network.record_event(
            self.node_id,
            "channel-failed",
            peer=peer_id,
            reason=reason,
            message=msg.to_json(),
        )
        queue = self._park(msg, self.loop.now, acquire=False)
        if queue is not None and peer_id not in queue.failures_reported:
            queue.failures_reported.add(peer_id)
            self.emit_notification(
                Notification.forward_failure(self.node_id, peer_id, msg.dest_realm)
            )

    def _park(self, msg: AaaMessage, now: int, acquire: bool) -> Optional[_PendingQueue]:
        realm_text = msg.dest_realm.text
        queue = self.pending.get(realm_text)
        if queue is None:
            queue = _PendingQueue()
            self.pending[realm_text] = queue
        if len(queue.items) >= PENDING_LIMIT:
            self.queue_drops += 1
            self._fail(msg, "QUEUE_FULL")
            return queue
        queue.items.append((msg, now))
        self.loop.call_at(now + PENDING_TIMEOUT_MS, self._timer_tick)
        if acquire and not queue.acquire_sent:
            queue.acquire_sent = True
            self.emit_notification(Notification.acquire_route(self.node_id, msg.dest_realm))
        return queue

    def _flush_pending(self) -> None:
        now = self.loop.now
        for realm_text in list(self.pending):
            queue = self.pending.get(realm_text)
            if queue is None:
                continue
            realm = Realm.parse(realm_text)
            if self._select(realm, now) is None:
                continue
            del self.pending[realm_text]
            for msg, _enqueued in list(queue.items):
                entry = self._select(realm, now)
                if entry is None:
                    self._park(msg, now, acquire=False)
                else:
                    self._dispatch(msg, entry, now)

    def authenticate_local(self, msg: AaaMessage) -> None:
        """Terminal LOCAL action on the home server: check the stub user
        registry and send the verdict back along the reversed hop trace."""
        if msg.dest_realm not in self.served_realms:
            self._fail(msg, "REALM_NOT_SERVED")
            return
        expected = self.users.get(msg.nai.user)
        accepted = expected is not None and expected == msg.attributes.get("password")
        self.network.note_authenticated(msg, accepted)
        response = AaaMessage(
            msg_id=msg.msg_id,
            kind=MsgKind.RESPONSE,
            nai=msg.nai,
            dest_realm=msg.dest_realm,
            attributes={},
            hop_trace=msg.hop_trace,
            status="accept" if accepted else "reject",
        )
        self._route_response(response)

    def _route_response(self, resp: AaaMessage) -> None:
        idx = resp.hop_trace.index(self.node_id)
        if idx == 0:
            self.network.finalize_message(self.node_id, resp)
            return
        prev = resp.hop_trace[idx - 1]
        entry = self._peer_for_node(prev)
        if entry is None:
            self._fail(resp, "CHANNEL_FAILED")
            return

        def done(ok: bool, reason: Optional[str]) -> None:
            if ok:
                self.forwards += 1
                target = self.network.node_by_address(entry.host)
                self.network.send_record(self, target, resp)
            else:
                self.emit_notification(
                    Notification.forward_failure(self.node_id, entry.peer_id, resp.dest_realm)
                )
                self._fail(resp, "CHANNEL_FAILED")

        channel = self.channels.get(entry.peer_id)
        if channel is not None and channel.status == ESTABLISHED:
            done(True, None)
        else:
            self.establish_channel(entry.peer_id, done)

    def _peer_for_node(self, node_id: str) -> Optional[model.PeerEntry]:
        entry = self.running.peer(node_id)
        if entry is not None:
            return entry
        address = self.network.address_of(node_id)
        return self.peer_for_host(address) if address else None

    # ------------------------------------------------------------------
    # redirect

    def query_redirect(self, msg: AaaMessage, agent_peer_id: str, now: int) -> None:
        """Ask the redirect agent for the next hop; park the message until
        the hint arrives, then route through the cached synthesized entry.

        Only one query per realm is in flight; later messages share it.
        """
        realm_text = msg.dest_realm.text
        queue = self._park(msg, now, acquire=False)
        if realm_text in self._redirect_inflight:
            return
        self._redirect_inflight.add(realm_text)

        def done(ok: bool, reason: Optional[str]) -> None:
            if not ok:
                self._redirect_inflight.discard(realm_text)
                if queue is not None and agent_peer_id not in queue.failures_reported:
                    queue.failures_reported.add(agent_peer_id)
                    self.emit_notification(
                        Notification.forward_failure(self.node_id, agent_peer_id, msg.dest_realm)
                    )
                return
            entry = self.running.peer(agent_peer_id)
            target = self.network.node_by_address(entry.host)
            self.redirect_queries_sent += 1
            self.network.send_record(self, target, RedirectQuery(msg.dest_realm, self.node_id))

        channel = self.channels.get(agent_peer_id)
        if channel is not None and channel.status == ESTABLISHED:
            done(True, None)
        else:
            self.establish_channel(agent_peer_id, done)

    def _handle_redirect_query(self, query: RedirectQuery) -> None:
        now = self.loop.now
        entry = model.select_route(self.running.routing, query.realm, now)
        requester = self.network.node_by_id(query.requester)
        if entry is None:
            reply: object = RedirectMiss(query.realm)
        elif entry.next_hop is not None:
            hop = self.running.peer(entry.next_hop)
            ttl = (
                entry.expiration - now
                if entry.expiration is not None
                else REDIRECT_HINT_TTL_MS
            )
            reply = RedirectHint(query.realm, hop.host, ttl)
        else:
            reply = RedirectHint(query.realm, self.address, REDIRECT_HINT_TTL_MS)
        self.network.send_record(self, requester, reply)

    def _handle_redirect_hint(self, hint: RedirectHint) -> None:
        now = self.loop.now
        realm_text = hint.realm.text
        self._redirect_inflight.discard(realm_text)
        peer = self.peer_for_host(hint.next_host)
        if peer is None:
            self._fail_queue(realm_text, "CHANNEL_FAILED")
            return
        self.route_cache[realm_text] = RealmEntry(
            pattern=RealmPattern(model.PatternKind.EXACT, hint.realm),
            next_hop=peer.peer_id,
            action=Action.RELAY,
            expiration=now + hint.ttl,
        )
        self._flush_pending()

    def _handle_redirect_miss(self, miss: RedirectMiss) -> None:
        self._redirect_inflight.discard(miss.realm.text)
        self._fail_queue(miss.realm.text, "REDIRECT_NO_ROUTE")

    def _fail_queue(self, realm_text: str, code: str) -> None:
        queue = self.pending.pop(realm_text, None)
        if queue is None:
            return
        for msg, _enqueued in queue.items:
            self._fail(msg, code)

    # ------------------------------------------------------------------
    # record delivery entry point

    def receive(self, record, from_node_id: str) -> None:
        if isinstance(record, AaaMessage):
            self.handle_message(record, self.loop.now)
        elif isinstance(record, RedirectQuery):
            self._handle_redirect_query(record)
        elif isinstance(record, RedirectHint):
            self._handle_redirect_hint(record)
        elif isinstance(record, RedirectMiss):
            self._handle_redirect_miss(record)

    # ------------------------------------------------------------------
    # timers and expiry

    def _timer_tick(self) -> None:
        self.tick(self.loop.now)

    def tick(self, now: int) -> list[Notification]:
        """Remove entries whose expiration has passed, cascade routes whose
        next hop vanished, and time out stale pending messages. Emits one
        notification per removed entry; idempotent across repeated calls."""
        notes: list[Notification] = []
        expired_peers = [
            p for p in self.running.peers
            if p.expiration is not None and p.expiration <= now
        ]
        gone = {p.peer_id for p in expired_peers}
        expired_routes = [
            r for r in self.running.routing
            if (r.expiration is not None and r.expiration <= now)
            or (r.next_hop is not None and r.next_hop in gone)
        ]
        if expired_peers or expired_routes:
            doc = self.running
            for p in expired_peers:
                doc = model.without_entry(doc, "peers", p.peer_id)
                self._drop_channel_pair(p)
                notes.append(Notification.peer_expired(self.node_id, p.peer_id))
            for r in expired_routes:
                doc = model.without_entry(doc, "routing", r.pattern.text)
                notes.append(Notification.route_expired(self.node_id, r.pattern))
            self.running = doc

        for key in list(self.route_cache):
            cached = self.route_cache[key]
            if cached.expiration is not None and cached.expiration <= now:
                del self.route_cache[key]

        for realm_text in list(self.pending):
            queue = self.pending[realm_text]
            while queue.items and now - queue.items[0][1] >= PENDING_TIMEOUT_MS:
                msg, _enqueued = queue.items.popleft()
                self._fail(msg, "NO_ROUTE_TIMEOUT")
            if not queue.items:
                del self.pending[realm_text]

        for note in notes:
            self.emit_notification(note)
        return notes

    # ------------------------------------------------------------------
    # notifications, failures, liveness

    def emit_notification(self, note: Notification) -> None:
        if self.session is None or self.session.closed:
            self.notification_drops += 1
            return
        self.session.notify(note)

    def _fail(self, msg: AaaMessage, code: str) -> None:
        failed = replace(msg, status="error", error=code)
        self.network.finalize_message(self.node_id, failed)

    def set_down(self) -> None:
        self.state = DOWN
        self.channels.clear()
        self.pending.clear()
        self.route_cache.clear()
        self._redirect_inflight.clear()

    def set_up(self) -> None:
        self.state = UP
