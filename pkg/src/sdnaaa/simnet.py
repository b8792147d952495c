"""Deterministic discrete-event harness: logical clock, scenario loading,
event injection (requests, node failures), random topology generation,
metrics and transcript capture.

Every run is a pure function of the scenario: all randomness comes from the
scenario seed, the loop is single threaded, and ties at equal timestamps
break by insertion order. There is no wall-clock dependence anywhere.
"""

from __future__ import annotations

import heapq
import json
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import model, node as node_mod, southbound
from .controller import (
    AGENT,
    CLIENT,
    SERVER,
    Controller,
    NodeInfo,
    Policy,
    PolicyError,
    Topology,
    load_policy,
)
from .model import AaaMessage, MsgKind, Realm

log = logging.getLogger("sdnaaa.simnet")

PROACTIVE = "PROACTIVE"
REACTIVE = "REACTIVE"

ROLES = (CLIENT, SERVER, AGENT)

EVENT_KINDS = ("inject", "node-down", "node-up", "snapshot")


class ScenarioError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


class EventLoop:
    """Time-ordered callback queue; equal timestamps run in insertion order."""

    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = 0

    def call_at(self, time: int, fn) -> None:
        heapq.heappush(self._heap, (max(time, self.now), self._seq, fn))
        self._seq += 1

    def call_later(self, delay: int, fn) -> None:
        self.call_at(self.now + delay, fn)

    def run_until(self, stop_time: int) -> None:
        while self._heap and self._heap[0][0] <= stop_time:
            time, _seq, fn = heapq.heappop(self._heap)
            self.now = time
            fn()
        self.now = max(self.now, stop_time)


class Transcript:
    """Ordered record of everything observable: southbound frames, AAA
    transfers, terminal outcomes, liveness events, snapshots."""

    def __init__(self):
        self.records: list[dict] = []

    def add(self, time: int, actor: str, direction: str, **payload) -> None:
        record = {"time": time, "actor": actor, "direction": direction}
        record.update(payload)
        self.records.append(record)

    def to_ndjson(self) -> str:
        if not self.records:
            return ""
        return "\n".join(json.dumps(r, separators=(",", ":")) for r in self.records) + "\n"

    def frames(self, ftype: Optional[str] = None, actor: Optional[str] = None,
               direction: Optional[str] = None) -> list[dict]:
        out = []
        for r in self.records:
            frame = r.get("frame")
            if frame is None:
                continue
            if ftype is not None and frame.get("type") != ftype:
                continue
            if actor is not None and r["actor"] != actor:
                continue
            if direction is not None and r["direction"] != direction:
                continue
            out.append(r)
        return out


class Metrics:
    def __init__(self):
        self.injected = 0
        self.delivered = 0
        self.rejected = 0
        self.errored = 0
        self.still_pending = 0
        self.hops: dict[str, int] = {}
        self.controller_frames = 0
        self.notifications: dict[str, int] = {}
        self.reroutes = 0
        self.channels: list = []
        self.lost_in_flight = 0
        self.error_codes: dict[str, int] = {}

    def to_json(self) -> dict:
        return {
            "injected": self.injected,
            "delivered": self.delivered,
            "rejected": self.rejected,
            "errored": self.errored,
            "still_pending": self.still_pending,
            "hops": dict(self.hops),
            "controller_frames": self.controller_frames,
            "notifications": {k: self.notifications[k] for k in sorted(self.notifications)},
            "reroutes": self.reroutes,
            "channels": [list(pair) for pair in self.channels],
            "lost_in_flight": self.lost_in_flight,
            "error_codes": {k: self.error_codes[k] for k in sorted(self.error_codes)},
        }

    def to_text(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


class Network:
    """In-memory transport and observation point between nodes."""

    def __init__(self, loop: EventLoop, metrics: Metrics, transcript: Transcript):
        self.loop = loop
        self.metrics = metrics
        self.transcript = transcript
        self.nodes: dict[str, node_mod.Node] = {}
        self._by_address: dict[str, node_mod.Node] = {}
        self.registry: dict[str, dict] = {}

    def register(self, node) -> None:
        self.nodes[node.node_id] = node
        self._by_address[node.address] = node

    def node_by_id(self, node_id: str):
        return self.nodes.get(node_id)

    def node_by_address(self, address: str):
        return self._by_address.get(address)

    def address_of(self, node_id: str) -> Optional[str]:
        n = self.nodes.get(node_id)
        return n.address if n else None

    def send_record(self, src, dst, record) -> None:
        self.transcript.add(
            self.loop.now,
            src.node_id,
            "fwd",
            to=dst.node_id if dst is not None else None,
            message=record.to_json(),
        )
        if dst is None:
            self.metrics.lost_in_flight += 1
            return
        self.loop.call_later(1, lambda: self._deliver(dst, record, src.node_id))

    def _deliver(self, dst, record, src_id: str) -> None:
        if not dst.is_up():
            self.metrics.lost_in_flight += 1
            return
        dst.receive(record, src_id)

    def record_event(self, actor: str, direction: str, **payload) -> None:
        self.transcript.add(self.loop.now, actor, direction, **payload)

    def note_reroute(self, node_id: str, pattern: str) -> None:
        self.metrics.reroutes += 1

    def note_channel(self, a: str, b: str) -> None:
        self.transcript.add(self.loop.now, a, "channel-up", peer=b)

    def note_authenticated(self, msg: AaaMessage, accepted: bool) -> None:
        self.metrics.hops[msg.msg_id] = len(msg.hop_trace)

    def finalize_message(self, node_id: str, msg: AaaMessage) -> None:
        entry = self.registry.get(msg.msg_id)
        if entry is not None and entry["status"] != "pending":
            return
        self.registry[msg.msg_id] = {
            "status": msg.status,
            "error": msg.error,
            "trace": list(msg.hop_trace),
        }
        self.transcript.add(self.loop.now, node_id, "done", message=msg.to_json())
        if msg.status == "accept":
            self.metrics.delivered += 1
        elif msg.status == "reject":
            self.metrics.rejected += 1
        else:
            self.metrics.errored += 1
            code = msg.error or "UNKNOWN"
            self.metrics.error_codes[code] = self.metrics.error_codes.get(code, 0) + 1

    def invalidate_channels_to(self, downed) -> None:
        address = downed.address
        for nid in sorted(self.nodes):
            other = self.nodes[nid]
            if other is downed:
                continue
            for p in other.running.peers:
                if p.host == address:
                    other.channels.pop(p.peer_id, None)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Event:
    time: int
    kind: str
    node: Optional[str] = None
    nai: Optional[str] = None
    password: Optional[str] = None


@dataclass
class Scenario:
    seed: int
    topology: Topology
    node_specs: dict[str, dict]
    policies: list[Policy]
    mode: str
    events: list[Event]
    stop_time: int
    options: dict = field(default_factory=dict)
    static_config: dict[str, model.ConfigDocument] = field(default_factory=dict)


def _require(cond: bool, code: str, detail: str = "") -> None:
    if not cond:
        raise ScenarioError(code, detail)


def scenario_from_dict(obj: dict) -> Scenario:
    _require(isinstance(obj, dict), "PARSE_ERROR", "top level must be an object")
    required = {"seed", "topology", "policies", "mode", "events", "stop_time"}
    allowed = required | {"options", "static_config"}
    _require(required <= set(obj), "PARSE_ERROR", f"missing keys {sorted(required - set(obj))}")
    _require(set(obj) <= allowed, "PARSE_ERROR", f"unknown keys {sorted(set(obj) - allowed)}")

    seed = obj["seed"]
    _require(isinstance(seed, int) and not isinstance(seed, bool), "PARSE_ERROR", "seed")
    stop_time = obj["stop_time"]
    _require(
        isinstance(stop_time, int) and not isinstance(stop_time, bool) and stop_time > 0,
        "PARSE_ERROR", "stop_time",
    )
    mode = obj["mode"]
    _require(mode in (PROACTIVE, REACTIVE), "PARSE_ERROR", f"mode {mode!r}")

    topo_obj = obj["topology"]
    _require(isinstance(topo_obj, dict), "PARSE_ERROR", "topology")
    _require(
        set(topo_obj) <= {"nodes", "links", "homes"} and "nodes" in topo_obj,
        "PARSE_ERROR", "topology keys",
    )
    specs = topo_obj["nodes"]
    _require(isinstance(specs, dict) and specs, "PARSE_ERROR", "topology.nodes")
    node_specs: dict[str, dict] = {}
    infos: dict[str, NodeInfo] = {}
    for nid, raw in specs.items():
        _require(isinstance(raw, dict), "PARSE_ERROR", f"node {nid}")
        _require(
            set(raw) <= {"address", "role", "realms", "users", "state"},
            "PARSE_ERROR", f"node {nid} keys",
        )
        role = raw.get("role", AGENT)
        _require(role in ROLES, "PARSE_ERROR", f"node {nid} role {role!r}")
        state = raw.get("state", "UP")
        _require(state in ("UP", "DOWN"), "PARSE_ERROR", f"node {nid} state")
        realms = tuple(Realm.parse(r) for r in raw.get("realms", []))
        spec = {
            "address": raw.get("address", f"{nid}.sim"),
            "role": role,
            "realms": realms,
            "users": dict(raw.get("users", {})),
            "state": state,
        }
        node_specs[nid] = spec
        infos[nid] = NodeInfo(spec["address"], role, realms, state)

    links: set[frozenset] = set()
    for pair in topo_obj.get("links", []):
        _require(
            isinstance(pair, list) and len(pair) == 2 and pair[0] != pair[1],
            "PARSE_ERROR", f"link {pair}",
        )
        for end in pair:
            _require(end in infos, "UNKNOWN_NODE", str(end))
        links.add(frozenset(pair))

    home_of: dict[str, str] = {}
    for realm_text, home in topo_obj.get("homes", {}).items():
        realm = Realm.parse(realm_text)
        _require(home in infos, "UNKNOWN_NODE", home)
        info = infos[home]
        _require(
            info.role == SERVER and realm in info.served_realms,
            "PARSE_ERROR", f"home {home} does not serve {realm_text}",
        )
        home_of[realm.text] = home

    topology = Topology(infos, links, home_of)

    policies_obj = obj["policies"]
    _require(
        isinstance(policies_obj, list)
        and all(isinstance(p, str) for p in policies_obj),
        "PARSE_ERROR", "policies",
    )
    try:
        policies = load_policy("\n".join(policies_obj), topology)
    except PolicyError as err:
        raise ScenarioError(err.code, str(err)) from None

    events: list[Event] = []
    last_time = None
    for raw in obj["events"]:
        _require(isinstance(raw, dict), "PARSE_ERROR", "event")
        kind = raw.get("kind")
        _require(kind in EVENT_KINDS, "PARSE_ERROR", f"event kind {kind!r}")
        time = raw.get("time")
        _require(isinstance(time, int) and not isinstance(time, bool) and time >= 0,
                 "PARSE_ERROR", "event time")
        if last_time is not None and time < last_time:
            raise ScenarioError("UNSORTED_EVENTS", f"t={time} after t={last_time}")
        last_time = time
        if kind == "inject":
            _require(
                set(raw) == {"time", "kind", "at", "nai", "password"},
                "PARSE_ERROR", "inject event fields",
            )
            _require(raw["at"] in infos, "UNKNOWN_NODE", str(raw["at"]))
            events.append(Event(time, kind, node=raw["at"], nai=raw["nai"],
                                password=raw["password"]))
        elif kind in ("node-down", "node-up"):
            _require(set(raw) == {"time", "kind", "node"}, "PARSE_ERROR", "event fields")
            _require(raw["node"] in infos, "UNKNOWN_NODE", str(raw["node"]))
            events.append(Event(time, kind, node=raw["node"]))
        else:  # snapshot
            _require(set(raw) == {"time", "kind"}, "PARSE_ERROR", "event fields")
            events.append(Event(time, kind))

    options = obj.get("options", {})
    _require(isinstance(options, dict) and set(options) <= {"parallel_adjacency"},
             "PARSE_ERROR", "options")

    static_config: dict[str, model.ConfigDocument] = {}
    for nid, doc_obj in obj.get("static_config", {}).items():
        _require(nid in infos, "UNKNOWN_NODE", nid)
        try:
            static_config[nid] = model.document_from_json(doc_obj)
        except model.ModelError as err:
            raise ScenarioError(err.code, str(err)) from None

    return Scenario(
        seed=seed,
        topology=topology,
        node_specs=node_specs,
        policies=policies,
        mode=mode,
        events=events,
        stop_time=stop_time,
        options=dict(options),
        static_config=static_config,
    )


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario file.

    Errors: PARSE_ERROR, UNKNOWN_NODE, UNSORTED_EVENTS (plus policy and
    document codes from the embedded formats).
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError("PARSE_ERROR", str(err)) from None
    return scenario_from_dict(obj)


def scenario_for_topology(
    topology: Topology,
    *,
    seed: int,
    mode: str,
    events,
    stop_time: int,
    policy_lines: str = "",
    users: Optional[dict[str, dict[str, str]]] = None,
    options: Optional[dict] = None,
) -> Scenario:
    """Build a Scenario directly from a Topology (for generated graphs)."""
    users = users or {}
    node_specs = {
        nid: {
            "address": info.address,
            "role": info.role,
            "realms": info.served_realms,
            "users": dict(users.get(nid, {})),
            "state": info.state,
        }
        for nid, info in topology.nodes.items()
    }
    return Scenario(
        seed=seed,
        topology=topology,
        node_specs=node_specs,
        policies=load_policy(policy_lines, topology),
        mode=mode,
        events=list(events),
        stop_time=stop_time,
        options=dict(options or {}),
    )


# ---------------------------------------------------------------------------
# simulation


class Simulation:
    """One deterministic run of a scenario; exposes its parts for tests."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.loop = EventLoop()
        self.metrics = Metrics()
        self.transcript = Transcript()
        self.network = Network(self.loop, self.metrics, self.transcript)
        self.snapshots: list[str] = []
        self._msg_seq = 0

        self.nodes: dict[str, node_mod.Node] = {}
        for nid, spec in scenario.node_specs.items():
            n = node_mod.Node(
                nid,
                spec["address"],
                self.loop,
                self.network,
                role=spec["role"],
                served_realms=spec["realms"],
                users=spec["users"],
                state=spec["state"],
            )
            self.nodes[nid] = n
            self.network.register(n)

        self.controller = Controller(
            "controller",
            scenario.topology,
            self.loop,
            seed=scenario.seed,
            parallel_adjacency=bool(scenario.options.get("parallel_adjacency", False)),
        )
        self.controller.policies.extend(scenario.policies)

        for nid in sorted(self.nodes):
            if self.nodes[nid].is_up():
                self._open_session(nid)

        for nid in sorted(scenario.static_config):
            self.controller.push_document(nid, scenario.static_config[nid])

        if scenario.mode == PROACTIVE:
            self.controller.provision_all()

        for ev in scenario.events:
            self.loop.call_at(ev.time, lambda ev=ev: self._fire(ev))

    def _open_session(self, nid: str) -> None:
        session = southbound.open_session(
            "controller",
            self.nodes[nid],
            self.loop,
            recorder=self._record_frame,
            on_notification=self._on_notification,
        )
        self.controller.attach_session(nid, session)

    def _record_frame(self, time: int, node_id: str, direction: str, frame) -> None:
        self.transcript.add(time, node_id, direction, frame=frame.to_json())
        if direction == "c2n":
            self.metrics.controller_frames += 1

    def _on_notification(self, note: model.Notification) -> None:
        self.metrics.notifications[note.kind] = self.metrics.notifications.get(note.kind, 0) + 1
        self.controller.on_notification(note)

    def _fire(self, ev: Event) -> None:
        if ev.kind == "inject":
            self._inject(ev)
        elif ev.kind == "node-down":
            n = self.nodes[ev.node]
            n.set_down()
            self.network.invalidate_channels_to(n)
            self.transcript.add(self.loop.now, ev.node, "node-down")
        elif ev.kind == "node-up":
            n = self.nodes[ev.node]
            n.set_up()
            if n.session is None:
                self._open_session(ev.node)
            self.controller.node_registered(ev.node)
            self.transcript.add(self.loop.now, ev.node, "node-up")
        else:  # snapshot
            snap = self.controller.snapshot_json()
            self.snapshots.append(snap)
            self.transcript.add(self.loop.now, "controller", "snapshot", snapshot=json.loads(snap))

    def _inject(self, ev: Event) -> None:
        self._msg_seq += 1
        nai = model.parse_nai(ev.nai)
        msg = AaaMessage(
            msg_id=f"m{self._msg_seq:06d}",
            kind=MsgKind.REQUEST,
            nai=nai,
            dest_realm=nai.realm,
            attributes={"password": ev.password},
        )
        self.metrics.injected += 1
        self.network.registry[msg.msg_id] = {"status": "pending", "error": None, "trace": []}
        self.transcript.add(self.loop.now, ev.node, "inject", message=msg.to_json())
        target = self.nodes[ev.node]
        if target.is_up():
            target.handle_message(msg, self.loop.now)
        else:
            self.metrics.lost_in_flight += 1

    def run_until(self, stop_time: int) -> None:
        self.loop.run_until(stop_time)

    def run(self) -> tuple[Metrics, Transcript]:
        self.run_until(self.scenario.stop_time)
        self._finalize()
        return self.metrics, self.transcript

    def _finalize(self) -> None:
        pairs = set()
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            for peer_id, channel in n.channels.items():
                if channel.status != node_mod.ESTABLISHED:
                    continue
                entry = n.running.peer(peer_id)
                other = self.network.node_by_address(entry.host) if entry else None
                if other is not None:
                    pairs.add(tuple(sorted((nid, other.node_id))))
        self.metrics.channels = sorted(pairs)
        self.metrics.still_pending = sum(
            1 for r in self.network.registry.values() if r["status"] == "pending"
        )


def run(scenario: Scenario) -> tuple[Metrics, Transcript]:
    """Execute the scenario to stop_time; identical inputs give identical
    (metrics, transcript) outputs."""
    return Simulation(scenario).run()


# ---------------------------------------------------------------------------
# random topologies


def gen_random_topology(
    seed: int, n_nodes: int, edge_prob: float, realms=("realm.org",)
) -> Topology:
    """Connected random topology: one SERVER per realm, one CLIENT, the rest
    AGENTs. Rejection-samples edge sets until connected; deterministic for a
    given seed. Raises GIVE_UP after 1000 attempts."""
    if not (3 <= n_nodes <= 64):
        raise ScenarioError("BAD_ARGS", f"n_nodes {n_nodes}")
    if not (0 < edge_prob <= 1):
        raise ScenarioError("BAD_ARGS", f"edge_prob {edge_prob}")
    realm_objs = [Realm.parse(r) for r in realms]
    if n_nodes < len(realm_objs) + 1:
        raise ScenarioError("BAD_ARGS", "not enough nodes for realms plus a client")
    rng = random.Random(seed)
    names = [f"n{i:02d}" for i in range(n_nodes)]

    for _attempt in range(1000):
        links = set()
        for i in range(n_nodes):
            for j in range(i + 1, n_nodes):
                if rng.random() < edge_prob:
                    links.add(frozenset((names[i], names[j])))
        if _connected(names, links):
            infos: dict[str, NodeInfo] = {}
            home_of: dict[str, str] = {}
            for idx, name in enumerate(names):
                if idx < len(realm_objs):
                    realm = realm_objs[idx]
                    infos[name] = NodeInfo(f"{name}.sim", SERVER, (realm,))
                    home_of[realm.text] = name
                elif idx == len(realm_objs):
                    infos[name] = NodeInfo(f"{name}.sim", CLIENT)
                else:
                    infos[name] = NodeInfo(f"{name}.sim", AGENT)
            return Topology(infos, links, home_of)
    raise ScenarioError("GIVE_UP", f"no connected graph after 1000 attempts (p={edge_prob})")


def _connected(names, links) -> bool:
    if not names:
        return False
    adjacency = {n: [] for n in names}
    for pair in links:
        a, b = sorted(pair)
        adjacency[a].append(b)
        adjacency[b].append(a)
    seen = {names[0]}
    frontier = deque([names[0]])
    while frontier:
        n = frontier.popleft()
        for m in adjacency[n]:
            if m not in seen:
                seen.add(m)
                frontier.append(m)
    return len(seen) == len(names)
