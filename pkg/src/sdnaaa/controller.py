"""Control plane: topology and realm assignments, northbound policy
ingestion, next-hop computation, adjacency establishment with rollback,
route installation, and reactions to node notifications (reactive route
acquisition, expirations, forward failures).

The controller is one logical state machine: provisioning commands and
notification handlers run as queued jobs, one at a time; a job awaiting a
southbound reply keeps the queue parked until it completes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from . import model, southbound
from .model import (
    Action,
    ModelError,
    Notification,
    PeerEntry,
    Realm,
    RealmEntry,
    RealmPattern,
    SharedSecret,
    TlsProfile,
    TlsRef,
    Transport,
)
from .southbound import ConfigChange, Reply

log = logging.getLogger("sdnaaa.controller")

CLIENT = "CLIENT"
SERVER = "SERVER"
AGENT = "AGENT"

PSK = "psk"
TLS = "tls"


class PolicyError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass
class NodeInfo:
    address: str
    role: str
    served_realms: tuple[Realm, ...] = ()
    state: str = "UP"


@dataclass
class Topology:
    """Controller-side view: nodes, allowed adjacencies, realm homes."""

    nodes: dict[str, NodeInfo]
    allowed_links: set[frozenset]
    home_of: dict[str, str] = field(default_factory=dict)

    def neighbors(self, node_id: str) -> list[str]:
        out = []
        for pair in self.allowed_links:
            if node_id in pair:
                out.extend(m for m in pair if m != node_id)
        return sorted(out)


@dataclass(frozen=True)
class Policy:
    policy_id: str
    realm_pattern: RealmPattern
    home_node: str
    security: str  # psk | tls
    default_entry_ttl: Optional[int] = None


def load_policy(text: str, topology: Topology) -> list[Policy]:
    """Parse northbound directives, one per line:

        route <pattern> via <node_id> security <psk|tls> [ttl <ms>]

    '#' starts a comment. Errors: PARSE_ERROR, UNKNOWN_HOME_NODE.
    """
    policies: list[Policy] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if (
            len(tokens) not in (6, 8)
            or tokens[0] != "route"
            or tokens[2] != "via"
            or tokens[4] != "security"
        ):
            raise PolicyError("PARSE_ERROR", f"line {lineno}: {line!r}")
        try:
            pattern = RealmPattern.parse(tokens[1])
        except ModelError:
            raise PolicyError("PARSE_ERROR", f"line {lineno}: bad pattern {tokens[1]!r}") from None
        home = tokens[3]
        if home not in topology.nodes:
            raise PolicyError("UNKNOWN_HOME_NODE", home)
        security = tokens[5]
        if security not in (PSK, TLS):
            raise PolicyError("PARSE_ERROR", f"line {lineno}: bad security {security!r}")
        ttl = None
        if len(tokens) == 8:
            if tokens[6] != "ttl" or not tokens[7].isdigit() or int(tokens[7]) <= 0:
                raise PolicyError("PARSE_ERROR", f"line {lineno}: bad ttl")
            ttl = int(tokens[7])
        policies.append(Policy(f"p{len(policies) + 1}", pattern, home, security, ttl))
    return policies


def compute_next_hops(
    topology: Topology, target: str, exclude: frozenset = frozenset()
) -> dict[str, str]:
    """BFS shortest-path next hops toward ``target`` over UP nodes.

    Ties between equal-distance next hops break toward the
    lexicographically smallest node id; unreachable nodes are absent.
    """
    up = {
        n
        for n, info in topology.nodes.items()
        if info.state == "UP" and n not in exclude
    }
    if target not in up:
        return {}
    adjacency = {n: [m for m in topology.neighbors(n) if m in up] for n in up}
    dist = {target: 0}
    frontier = deque([target])
    while frontier:
        n = frontier.popleft()
        for m in adjacency[n]:
            if m not in dist:
                dist[m] = dist[n] + 1
                frontier.append(m)
    hops: dict[str, str] = {}
    for n in sorted(up):
        if n == target or n not in dist:
            continue
        hops[n] = min(m for m in adjacency[n] if m in dist and dist[m] == dist[n] - 1)
    return hops


@dataclass
class AdjacencyRecord:
    pair: frozenset
    status: str  # NONE | HALF | ESTABLISHED
    security: str
    credential_fingerprint: Optional[str] = None


@dataclass(frozen=True)
class EstablishResult:
    status: str  # ESTABLISHED | FAILED
    failed_step: Optional[int] = None
    error: Optional[str] = None


class Controller:
    def __init__(
        self,
        controller_id: str,
        topology: Topology,
        loop,
        seed: int = 0,
        parallel_adjacency: bool = False,
    ):
        self.controller_id = controller_id
        self.topology = topology
        self.loop = loop
        self.rng = random.Random(seed)
        self.parallel_adjacency = parallel_adjacency
        self.sessions: dict[str, southbound.Session] = {}
        self.policies: list[Policy] = []
        self.adjacencies: dict[frozenset, AdjacencyRecord] = {}
        # desired state confirmed by OK replies; holds no credential bytes
        self.ledger: dict[str, dict] = {}
        self.suspected: set[str] = set()
        self.reports: list[dict] = []
        self._jobs: deque = deque()
        self._active = False
        self._pumping = False

    # ------------------------------------------------------------------
    # wiring

    def attach_session(self, node_id: str, session: southbound.Session) -> None:
        self.sessions[node_id] = session

    def node_registered(self, node_id: str) -> None:
        """Re-registration of a node clears any failure suspicion."""
        self.suspected.discard(node_id)

    def load_policies(self, text: str) -> list[Policy]:
        policies = load_policy(text, self.topology)
        self.policies.extend(policies)
        return policies

    # ------------------------------------------------------------------
    # job queue: handlers and provisioning run strictly one at a time

    def _submit(self, gen) -> Reply:
        done = Reply()
        self._jobs.append((gen, done))
        self._pump()
        return done

    def _pump(self) -> None:
        if self._pumping:
            return
        self._pumping = True
        try:
            while not self._active and self._jobs:
                gen, done = self._jobs.popleft()
                self._active = True

                def finish(result, done=done):
                    self._active = False
                    done.resolve(result)
                    self._pump()

                southbound.run_workflow(gen).add_done_callback(finish)
        finally:
            self._pumping = False

    # ------------------------------------------------------------------
    # public operations (each returns a Reply resolved when the job ends)

    def establish_adjacency(self, node_a: str, node_b: str, security: str, ttl=None) -> Reply:
        return self._submit(self._adjacency_job(node_a, node_b, security, ttl))

    def install_route(self, node_id, pattern, next_hop, action, rule_refs=(), ttl=None) -> Reply:
        return self._submit(
            self._route_job(node_id, pattern, next_hop, action, tuple(rule_refs), ttl, None)
        )

    def provision_realm(self, policy: Policy) -> Reply:
        return self._submit(self._provision_job(policy))

    def provision_all(self) -> list[Reply]:
        return [self.provision_realm(p) for p in self.policies]

    def get_node_config(self, node_id: str) -> Reply:
        return self._submit(self._get_config_job(node_id))

    def push_document(self, node_id: str, doc: model.ConfigDocument) -> Reply:
        """Administrator-style seeding of a full document (scenario
        static_config); applied through the ordinary session, not ledgered."""
        changes = []
        for container in ("tls", "attributes", "peers", "routing"):
            for entity in getattr(doc, container):
                key = model.entry_key(container, entity)
                changes.append(ConfigChange(southbound.MERGE, f"{container}/{key}", entity))
        return self._submit(self._push_job(node_id, changes))

    def on_notification(self, note: Notification) -> Reply:
        if note.kind == Notification.ACQUIRE_ROUTE:
            return self._submit(self._acquire_job(note))
        if note.kind in (Notification.PEER_EXPIRED, Notification.ROUTE_EXPIRED):
            return self._submit(self._expired_job(note))
        if note.kind == Notification.FORWARD_FAILURE:
            return self._submit(self._forward_failure_job(note))
        done = Reply()
        done.resolve(None)
        return done

    # ------------------------------------------------------------------
    # credentials

    def _address(self, node_id: str) -> str:
        return self.topology.nodes[node_id].address

    def _adjacency_changes(self, a: str, b: str, security: str):
        """Fabricate one credential pair; the raw material lives only in the
        returned changes, the controller keeps the fingerprint."""
        if security == PSK:
            secret = self.rng.randbytes(32)
            fingerprint = hashlib.sha256(secret).hexdigest()

            def entry(other: str) -> PeerEntry:
                return PeerEntry(
                    peer_id=other,
                    identity=other,
                    host=self._address(other),
                    port=model.TRANSPORT_PORTS[Transport.RADIUS_UDP],
                    transport=Transport.RADIUS_UDP,
                    credential=SharedSecret(secret),
                )

            return (
                [ConfigChange(southbound.MERGE, f"peers/{b}", entry(b))],
                [ConfigChange(southbound.MERGE, f"peers/{a}", entry(a))],
                fingerprint,
            )

        key_a = self.rng.randbytes(32)
        key_b = self.rng.randbytes(32)
        fingerprint = hashlib.sha256(key_a + key_b).hexdigest()
        prof_a = TlsProfile(f"tls-{a}-{b}", f"{a}-cert", key_a, frozenset({f"{b}-cert"}))
        prof_b = TlsProfile(f"tls-{b}-{a}", f"{b}-cert", key_b, frozenset({f"{a}-cert"}))

        def entry(other: str, profile: str) -> PeerEntry:
            return PeerEntry(
                peer_id=other,
                identity=f"{other}-cert",
                host=self._address(other),
                port=model.TRANSPORT_PORTS[Transport.RADIUS_TLS],
                transport=Transport.RADIUS_TLS,
                credential=TlsRef(profile),
            )

        return (
            [
                ConfigChange(southbound.MERGE, f"tls/{prof_a.name}", prof_a),
                ConfigChange(southbound.MERGE, f"peers/{b}", entry(b, prof_a.name)),
            ],
            [
                ConfigChange(southbound.MERGE, f"tls/{prof_b.name}", prof_b),
                ConfigChange(southbound.MERGE, f"peers/{a}", entry(a, prof_b.name)),
            ],
            fingerprint,
        )

    def _stamp(self, changes, ttl: Optional[int]):
        """Fix absolute expirations so entry lifetime measured from node-side
        creation equals ttl (send time + channel latency + ttl)."""
        if ttl is None:
            return list(changes)
        exp = self.loop.now + southbound.LATENCY + ttl
        out = []
        for ch in changes:
            if ch.op == southbound.MERGE and isinstance(ch.value, (PeerEntry, RealmEntry)):
                out.append(ConfigChange(ch.op, ch.path, replace(ch.value, expiration=exp)))
            else:
                out.append(ch)
        return out

    # ------------------------------------------------------------------
    # ledger bookkeeping

    def _node_ledger(self, node_id: str) -> dict:
        return self.ledger.setdefault(node_id, {"peers": {}, "routes": {}})

    def _ledger_changes(self, node_id: str, changes, security: str, policy_id) -> None:
        entry = self._node_ledger(node_id)
        for ch in changes:
            container, key = ch.container_key()
            if ch.op != southbound.MERGE:
                if container == "peers":
                    entry["peers"].pop(key, None)
                elif container == "routing":
                    entry["routes"].pop(key, None)
                continue
            if container == "peers":
                entry["peers"][key] = {
                    "peer_id": key,
                    "transport": ch.value.transport.value,
                    "security": security,
                    "expiration": ch.value.expiration,
                    "policy": policy_id,
                }
            elif container == "routing":
                entry["routes"][key] = {
                    "pattern": key,
                    "next_hop": ch.value.next_hop,
                    "action": ch.value.action.value,
                    "expiration": ch.value.expiration,
                    "policy": policy_id,
                }

    def _has_route(self, node_id: str, pattern: RealmPattern, next_hop, action: Action) -> bool:
        have = self.ledger.get(node_id, {}).get("routes", {}).get(pattern.text)
        return (
            have is not None
            and have["next_hop"] == next_hop
            and have["action"] == action.value
        )

    def _policy_by_id(self, policy_id) -> Optional[Policy]:
        for p in self.policies:
            if p.policy_id == policy_id:
                return p
        return None

    def _match_policy(self, realm: Realm) -> Optional[Policy]:
        best = None
        best_spec = -1
        for p in self.policies:
            spec = model.match_realm(p.realm_pattern, realm)
            if spec is not None and spec > best_spec:
                best, best_spec = p, spec
        return best

    # ------------------------------------------------------------------
    # jobs

    def _adjacency_job(
        self, a, b, security, ttl, extra_a=(), extra_b=(), policy_id=None
    ):
        """Two-step exchange: configure a, await OK, configure b, await OK;
        roll back a when the second step fails. ``extra_*`` are freshly
        needed changes (routes) combined into the same frames."""
        session_a = self.sessions.get(a)
        session_b = self.sessions.get(b)
        if session_a is None:
            return EstablishResult("FAILED", 1, "NO_SESSION")
        if session_b is None:
            return EstablishResult("FAILED", 3, "NO_SESSION")
        changes_a, changes_b, fingerprint = self._adjacency_changes(a, b, security)
        changes_a = self._stamp(changes_a + list(extra_a), ttl)
        changes_b = changes_b + list(extra_b)
        pair = frozenset((a, b))

        if self.parallel_adjacency:
            changes_b = self._stamp(changes_b, ttl)
            reply_a = session_a.edit_config(changes_a)
            reply_b = session_b.edit_config(changes_b)
            frame_a = yield reply_a
            frame_b = yield reply_b
            if frame_a.type != southbound.OK and frame_b.type != southbound.OK:
                self.adjacencies[pair] = AdjacencyRecord(pair, "NONE", security)
                return EstablishResult("FAILED", 1, frame_a.error["code"])
            if frame_a.type != southbound.OK:
                yield session_b.edit_config(self._rollback_changes(changes_b))
                self.adjacencies[pair] = AdjacencyRecord(pair, "NONE", security)
                return EstablishResult("FAILED", 1, frame_a.error["code"])
            if frame_b.type != southbound.OK:
                yield session_a.edit_config(self._rollback_changes(changes_a))
                self.adjacencies[pair] = AdjacencyRecord(pair, "NONE", security)
                return EstablishResult("FAILED", 3, frame_b.error["code"])
        else:
            frame_a = yield session_a.edit_config(changes_a)
            if frame_a.type != southbound.OK:
                self.adjacencies[pair] = AdjacencyRecord(pair, "NONE", security)
                return EstablishResult("FAILED", 1, frame_a.error["code"])
            self.adjacencies[pair] = AdjacencyRecord(pair, "HALF", security)
            # stamped at its own send time so ttl counts from node-side creation
            changes_b = self._stamp(changes_b, ttl)
            frame_b = yield session_b.edit_config(changes_b)
            if frame_b.type != southbound.OK:
                yield session_a.edit_config(self._rollback_changes(changes_a))
                self.adjacencies[pair] = AdjacencyRecord(pair, "NONE", security)
                return EstablishResult("FAILED", 3, frame_b.error["code"])

        self.adjacencies[pair] = AdjacencyRecord(pair, "ESTABLISHED", security, fingerprint)
        self._ledger_changes(a, changes_a, security, policy_id)
        self._ledger_changes(b, changes_b, security, policy_id)
        log.info("adjacency %s-%s established (%s)", a, b, security)
        return EstablishResult("ESTABLISHED")

    @staticmethod
    def _rollback_changes(changes):
        # delete in reverse so routes go before the peers they reference
        return [
            ConfigChange(southbound.DELETE, ch.path)
            for ch in reversed(changes)
            if ch.op == southbound.MERGE
        ]

    def _route_job(self, node_id, pattern, next_hop, action, rule_refs, ttl, policy_id):
        session = self.sessions.get(node_id)
        if session is None:
            return {"op": "route", "node": node_id, "outcome": "FAILED", "error": "NO_SESSION"}
        entry = RealmEntry(pattern, next_hop, action, tuple(rule_refs))
        changes = self._stamp(
            [ConfigChange(southbound.MERGE, f"routing/{pattern.text}", entry)], ttl
        )
        frame = yield session.edit_config(changes)
        if frame.type != southbound.OK:
            return {
                "op": "route",
                "node": node_id,
                "outcome": "FAILED",
                "error": frame.error["code"],
            }
        self._ledger_changes(node_id, changes, "", policy_id)
        return {"op": "route", "node": node_id, "pattern": pattern.text, "outcome": "OK"}

    def _get_config_job(self, node_id):
        session = self.sessions.get(node_id)
        if session is None:
            return None
        frame = yield session.get_config()
        return frame.doc if frame.type == southbound.CONFIG else None

    def _push_job(self, node_id, changes):
        session = self.sessions.get(node_id)
        if session is None:
            return {"op": "push", "node": node_id, "outcome": "FAILED", "error": "NO_SESSION"}
        frame = yield session.edit_config(changes)
        outcome = "OK" if frame.type == southbound.OK else "FAILED"
        return {"op": "push", "node": node_id, "outcome": outcome}

    def _client_paths(self, policy: Policy, next_hops: dict[str, str]):
        """Nodes on client->home shortest paths, in first-visit order."""
        home = policy.home_node
        order: list[str] = []
        seen: set[str] = set()
        unreachable: list[str] = []
        clients = sorted(
            n for n, info in self.topology.nodes.items() if info.role == CLIENT
        )
        for client in clients:
            if client != home and client not in next_hops:
                unreachable.append(client)
                continue
            n = client
            while n != home:
                if n not in seen:
                    seen.add(n)
                    order.append(n)
                n = next_hops[n]
        return order, unreachable

    def _provision_job(self, policy: Policy):
        """Install peers and routes along every client->home path, pairing
        each new adjacency with the new route in one edit-config frame."""
        report: list[dict] = []
        home = policy.home_node
        pattern = policy.realm_pattern
        ttl = policy.default_entry_ttl
        next_hops = compute_next_hops(
            self.topology, home, frozenset(self.suspected)
        )
        order, unreachable = self._client_paths(policy, next_hops)
        for client in unreachable:
            report.append({"op": "path", "node": client, "outcome": "UNREACHABLE"})
        failed: set[str] = set()

        def route_change(next_hop):
            entry = RealmEntry(pattern, next_hop, Action.RELAY)
            return ConfigChange(southbound.MERGE, f"routing/{pattern.text}", entry)

        def local_change():
            entry = RealmEntry(pattern, None, Action.LOCAL)
            return ConfigChange(southbound.MERGE, f"routing/{pattern.text}", entry)

        for n in order:
            next_hop = next_hops[n]
            if n in failed or next_hop in failed:
                report.append({"op": "route", "node": n, "outcome": "SKIPPED"})
                continue
            pair = frozenset((n, next_hop))
            record = self.adjacencies.get(pair)
            need_adjacency = record is None or record.status != "ESTABLISHED"
            need_route = not self._has_route(n, pattern, next_hop, Action.RELAY)
            if need_adjacency:
                # Mirror side first: if n holds parked traffic, its lazy
                # handshake must find the counterpart entry already in place.
                extra_mirror = []
                if next_hop == home and not self._has_route(home, pattern, None, Action.LOCAL):
                    extra_mirror = [local_change()]
                extra_self = [route_change(next_hop)] if need_route else []
                result = yield from self._adjacency_job(
                    next_hop, n, policy.security, ttl, extra_mirror, extra_self, policy.policy_id
                )
                report.append(
                    {
                        "op": "adjacency",
                        "node": n,
                        "next_hop": next_hop,
                        "outcome": result.status,
                        "error": result.error,
                    }
                )
                if result.status != "ESTABLISHED":
                    failed.add(next_hop if result.failed_step == 1 else n)
            elif need_route:
                outcome = yield from self._route_job(
                    n, pattern, next_hop, Action.RELAY, (), ttl, policy.policy_id
                )
                report.append(outcome)
        if home not in failed and not self._has_route(home, pattern, None, Action.LOCAL):
            outcome = yield from self._route_job(
                home, pattern, None, Action.LOCAL, (), ttl, policy.policy_id
            )
            report.append(outcome)
        self.reports.append({"event": "provision", "policy": policy.policy_id, "report": report})
        return report

    def _acquire_job(self, note: Notification):
        """Reactive path: answer an acquire-route with one combined
        peer+route frame to the notifying node (plus the mirror frame)."""
        n = note.node_id
        realm = note.realm
        policy = self._match_policy(realm)
        if policy is None:
            self.reports.append({"event": "unroutable", "node": n, "realm": realm.text})
            log.info("acquire from %s for %s: no policy", n, realm.text)
            return None
        pattern = policy.realm_pattern
        ttl = policy.default_entry_ttl
        home = policy.home_node
        if n == home:
            if not self._has_route(home, pattern, None, Action.LOCAL):
                return (yield from self._route_job(
                    home, pattern, None, Action.LOCAL, (), ttl, policy.policy_id
                ))
            return None
        next_hops = compute_next_hops(self.topology, home, frozenset(self.suspected))
        next_hop = next_hops.get(n)
        if next_hop is None:
            self.reports.append(
                {"event": "unroutable", "node": n, "realm": realm.text, "reason": "no path"}
            )
            return None
        pair = frozenset((n, next_hop))
        record = self.adjacencies.get(pair)
        need_adjacency = record is None or record.status != "ESTABLISHED"
        need_route = not self._has_route(n, pattern, next_hop, Action.RELAY)
        route_ch = ConfigChange(
            southbound.MERGE, f"routing/{pattern.text}", RealmEntry(pattern, next_hop, Action.RELAY)
        )
        if need_adjacency:
            # Mirror frame to the next hop first, then one combined
            # peer+route frame to the notifying node; its queued messages
            # flush against an already-configured counterpart.
            extra_mirror = []
            if next_hop == home and not self._has_route(home, pattern, None, Action.LOCAL):
                extra_mirror = [
                    ConfigChange(
                        southbound.MERGE,
                        f"routing/{pattern.text}",
                        RealmEntry(pattern, None, Action.LOCAL),
                    )
                ]
            return (yield from self._adjacency_job(
                next_hop, n, policy.security, ttl, extra_mirror, [route_ch] if need_route else [],
                policy.policy_id,
            ))
        if need_route:
            return (yield from self._route_job(
                n, pattern, next_hop, Action.RELAY, (), ttl, policy.policy_id
            ))
        return None

    def _expired_job(self, note: Notification):
        """Re-provision an expired entry when its policy is still active."""
        node_entry = self.ledger.get(note.node_id, {})
        owner = None
        if note.kind == Notification.PEER_EXPIRED:
            gone = node_entry.get("peers", {}).pop(note.peer_id, None)
            pair = frozenset((note.node_id, note.peer_id))
            record = self.adjacencies.get(pair)
            if record is not None:
                record.status = "NONE"
            owner = gone and gone.get("policy")
        else:
            gone = node_entry.get("routes", {}).pop(note.pattern.text, None)
            owner = gone and gone.get("policy")
        policy = self._policy_by_id(owner)
        if policy is None:
            self.reports.append(
                {"event": "expired", "node": note.node_id, "outcome": "REMOVAL_CONFIRMED"}
            )
            return None
        return (yield from self._provision_job(policy))

    def _forward_failure_job(self, note: Notification):
        """Suspect the failed peer's node, recompute next hops without it,
        and re-provision the affected policy."""
        self.suspected.add(note.peer_id)
        log.info("forward failure at %s via %s; suspecting %s", note.node_id, note.peer_id, note.peer_id)
        policy = self._match_policy(note.realm)
        if policy is None:
            self.reports.append(
                {"event": "forward-failure", "node": note.node_id, "outcome": "NO_POLICY"}
            )
            return None
        return (yield from self._provision_job(policy))

    # ------------------------------------------------------------------
    # snapshot

    def snapshot_json(self) -> str:
        """Serialized desired state: policies, adjacencies, ledger. Contains
        credential fingerprints, never raw material."""
        state = {
            "policies": [
                {
                    "policy_id": p.policy_id,
                    "pattern": p.realm_pattern.text,
                    "home": p.home_node,
                    "security": p.security,
                    "ttl": p.default_entry_ttl,
                }
                for p in self.policies
            ],
            "adjacencies": [
                {
                    "pair": sorted(record.pair),
                    "status": record.status,
                    "security": record.security,
                    "fingerprint": record.credential_fingerprint,
                }
                for record in sorted(self.adjacencies.values(), key=lambda r: sorted(r.pair))
            ],
            "ledger": {
                node: {
                    "peers": {k: dict(v) for k, v in sorted(entry["peers"].items())},
                    "routes": {k: dict(v) for k, v in sorted(entry["routes"].items())},
                }
                for node, entry in sorted(self.ledger.items())
            },
        }
        return json.dumps(state, separators=(",", ":"))

    def save_snapshot(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.snapshot_json() + "\n")
