"""BPMN 2.0 process model: parsing, activity extraction, context summaries.

The parser is namespace-prefix agnostic (elements are matched on local
names), lenient by default, and collects human-readable warnings instead of
failing on common export quirks: dangling sequence-flow references, unnamed
tasks, duplicate ids, self-loops. ``strict=True`` promotes warnings to
``StrictValidationError``.

Sub-processes are treated as single activities; their inner elements are not
expanded. Gateways are never activities but are traversed when summarizing
an activity's surroundings.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from xml.etree import ElementTree

from .errors import NoProcessFound, StrictValidationError, UnknownActivity, XmlSyntaxError

logger = logging.getLogger(__name__)


class NodeKind(str, Enum):
    TASK = "Task"
    USER_TASK = "UserTask"
    SERVICE_TASK = "ServiceTask"
    MANUAL_TASK = "ManualTask"
    SEND_TASK = "SendTask"
    RECEIVE_TASK = "ReceiveTask"
    START_EVENT = "StartEvent"
    END_EVENT = "EndEvent"
    INTERMEDIATE_EVENT = "IntermediateEvent"
    EXCLUSIVE_GATEWAY = "ExclusiveGateway"
    PARALLEL_GATEWAY = "ParallelGateway"
    INCLUSIVE_GATEWAY = "InclusiveGateway"
    SUB_PROCESS = "SubProcess"
    OTHER = "Other"


# Local tag name -> node kind. Anything else becomes OTHER with the tag kept.
_TAG_KINDS = {
    "task": NodeKind.TASK,
    "userTask": NodeKind.USER_TASK,
    "serviceTask": NodeKind.SERVICE_TASK,
    "manualTask": NodeKind.MANUAL_TASK,
    "sendTask": NodeKind.SEND_TASK,
    "receiveTask": NodeKind.RECEIVE_TASK,
    "startEvent": NodeKind.START_EVENT,
    "endEvent": NodeKind.END_EVENT,
    "intermediateCatchEvent": NodeKind.INTERMEDIATE_EVENT,
    "intermediateThrowEvent": NodeKind.INTERMEDIATE_EVENT,
    "boundaryEvent": NodeKind.INTERMEDIATE_EVENT,
    "exclusiveGateway": NodeKind.EXCLUSIVE_GATEWAY,
    "parallelGateway": NodeKind.PARALLEL_GATEWAY,
    "inclusiveGateway": NodeKind.INCLUSIVE_GATEWAY,
    "subProcess": NodeKind.SUB_PROCESS,
}

ACTIVITY_KINDS = frozenset({
    NodeKind.TASK,
    NodeKind.USER_TASK,
    NodeKind.SERVICE_TASK,
    NodeKind.MANUAL_TASK,
    NodeKind.SEND_TASK,
    NodeKind.RECEIVE_TASK,
    NodeKind.SUB_PROCESS,
})

EVENT_KINDS = frozenset({
    NodeKind.START_EVENT,
    NodeKind.END_EVENT,
    NodeKind.INTERMEDIATE_EVENT,
})

GATEWAY_KINDS = frozenset({
    NodeKind.EXCLUSIVE_GATEWAY,
    NodeKind.PARALLEL_GATEWAY,
    NodeKind.INCLUSIVE_GATEWAY,
})

# Gateway traversal depth for predecessor/successor resolution.
MAX_GATEWAY_HOPS = 3


@dataclass(frozen=True)
class FlowNode:
    node_id: str
    kind: NodeKind
    name: str
    lane: str | None = None
    tag: str = ""          # local XML tag, informative for kind OTHER
    doc_order: int = 0     # position in document order, ties and cycles resolve on it


@dataclass(frozen=True)
class SequenceFlow:
    flow_id: str
    source: str
    target: str
    name: str = ""


@dataclass(frozen=True)
class ProcessModel:
    process_id: str
    name: str
    domain_tag: str
    nodes: tuple[FlowNode, ...]
    flows: tuple[SequenceFlow, ...]
    warnings: tuple[str, ...] = ()

    def node(self, node_id: str) -> FlowNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise UnknownActivity(f"no node with id {node_id!r}")


@dataclass(frozen=True)
class ActivityContext:
    activity_id: str
    activity_name: str
    process_name: str
    domain_tag: str
    lane: str | None
    predecessors: tuple[str, ...]
    successors: tuple[str, ...]


def _local(tag: str) -> str:
    """Local element name, with any `{namespace}` prefix removed."""
    return tag.rsplit("}", 1)[-1]


def _normalize_name(raw: str | None) -> str:
    return re.sub(r"\s+", " ", raw or "").strip()


def parse_bpmn(
    xml_bytes: bytes | str,
    *,
    strict: bool = False,
    domain_tag: str = "",
) -> ProcessModel:
    """Parse BPMN 2.0 XML into a ProcessModel.

    All ``process`` elements under the document root are mapped; when a file
    holds several (collaboration exports), their nodes and flows are merged
    into one model and a warning is recorded. Unknown elements are ignored.

    Lenient mode records warnings for recoverable defects and repairs them:
    duplicate node ids keep the first occurrence, dangling flow references
    drop the flow, unnamed activities are demoted to ``Other`` so they never
    reach analysis. ``strict=True`` raises ``StrictValidationError`` on the
    first such defect instead.
    """
    if isinstance(xml_bytes, str):
        xml_bytes = xml_bytes.encode("utf-8")
    try:
        root = ElementTree.fromstring(xml_bytes)
    except ElementTree.ParseError as exc:
        raise XmlSyntaxError(f"not well-formed XML: {exc}") from exc

    processes = [el for el in root.iter() if _local(el.tag) == "process"]
    if _local(root.tag) == "process":
        processes.insert(0, root)
    if not processes:
        raise NoProcessFound("no <process> element in document")

    warnings: list[str] = []

    def warn(message: str) -> None:
        if strict:
            raise StrictValidationError(message)
        warnings.append(message)
        logger.debug("bpmn warning: %s", message)

    if len(processes) > 1:
        warn(f"{len(processes)} process elements merged into one model")

    nodes: list[FlowNode] = []
    seen_ids: set[str] = set()
    raw_flows: list[SequenceFlow] = []
    lane_of: dict[str, str] = {}
    doc_order = 0

    for proc in processes:
        # Lane assignments come first so nodes can carry them at construction.
        for lane_el in proc.iter():
            if _local(lane_el.tag) != "lane":
                continue
            lane_name = _normalize_name(lane_el.get("name"))
            if not lane_name:
                continue
            for ref in lane_el:
                if _local(ref.tag) == "flowNodeRef" and ref.text:
                    lane_of[ref.text.strip()] = lane_name

        for el in proc:
            tag = _local(el.tag)
            if tag == "sequenceFlow":
                source = el.get("sourceRef", "")
                target = el.get("targetRef", "")
                raw_flows.append(SequenceFlow(
                    flow_id=el.get("id", f"flow-{len(raw_flows)}"),
                    source=source,
                    target=target,
                    name=_normalize_name(el.get("name")),
                ))
                continue
            if tag in ("laneSet", "lane", "documentation", "extensionElements"):
                continue
            kind = _TAG_KINDS.get(tag)
            node_id = el.get("id")
            if node_id is None:
                if kind is not None:
                    warn(f"<{tag}> without id ignored")
                continue
            if kind is None:
                kind = NodeKind.OTHER
            if node_id in seen_ids:
                warn(f"duplicate node id {node_id!r}; first occurrence kept")
                continue
            seen_ids.add(node_id)
            name = _normalize_name(el.get("name"))
            if kind in ACTIVITY_KINDS and not name:
                warn(f"unnamed {tag} {node_id!r} excluded from analysis")
                kind = NodeKind.OTHER
            nodes.append(FlowNode(
                node_id=node_id,
                kind=kind,
                name=name,
                lane=lane_of.get(node_id),
                tag=tag,
                doc_order=doc_order,
            ))
            doc_order += 1

    flows: list[SequenceFlow] = []
    for fl in raw_flows:
        if fl.source not in seen_ids or fl.target not in seen_ids:
            warn(f"flow {fl.flow_id!r} references unknown node; dropped")
            continue
        if fl.source == fl.target:
            warn(f"flow {fl.flow_id!r} is a self-loop on {fl.source!r}")
        flows.append(fl)

    first = processes[0]
    process_id = first.get("id") or "process"
    name = _normalize_name(first.get("name")) or process_id
    return ProcessModel(
        process_id=process_id,
        name=name,
        domain_tag=domain_tag,
        nodes=tuple(nodes),
        flows=tuple(flows),
        warnings=tuple(warnings),
    )


def parse_bpmn_file(path, *, strict: bool = False, domain_tag: str = "") -> ProcessModel:
    with open(path, "rb") as fh:
        return parse_bpmn(fh.read(), strict=strict, domain_tag=domain_tag)


def _adjacency(model: ProcessModel) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
    outgoing: dict[str, list[str]] = {n.node_id: [] for n in model.nodes}
    incoming: dict[str, list[str]] = {n.node_id: [] for n in model.nodes}
    for fl in model.flows:
        outgoing[fl.source].append(fl.target)
        incoming[fl.target].append(fl.source)
    return outgoing, incoming


def _total_order(model: ProcessModel) -> list[FlowNode]:
    """Deterministic topological order over every node.

    Kahn's algorithm seeded by in-degree-zero nodes (start events and any
    disconnected roots), always taking the document-order-smallest ready
    node. When only cyclic nodes remain, the document-order-first unprocessed
    node is emitted and its unsatisfied in-edges are treated as back-edges.
    """
    by_id = {n.node_id: n for n in model.nodes}
    outgoing, incoming = _adjacency(model)
    # self-loops never block their own node
    pending = {nid: sum(1 for s in srcs if s != nid) for nid, srcs in incoming.items()}
    remaining = sorted(by_id, key=lambda nid: by_id[nid].doc_order)
    done: set[str] = set()
    order: list[FlowNode] = []
    while len(done) < len(remaining):
        ready = [nid for nid in remaining if nid not in done and pending[nid] <= 0]
        if ready:
            nid = ready[0]
        else:
            # cycle: break at the earliest unprocessed node
            nid = next(n for n in remaining if n not in done)
        done.add(nid)
        order.append(by_id[nid])
        for tgt in outgoing[nid]:
            if tgt not in done:
                pending[tgt] -= 1
    return order


def extract_activities(model: ProcessModel) -> list[FlowNode]:
    """Named activity nodes in deterministic process order.

    The order is a topological sort from the start events with document-order
    tie-breaking; cycles are broken at back-edges so every activity appears
    exactly once.
    """
    return [n for n in _total_order(model) if n.kind in ACTIVITY_KINDS and n.name]


def _neighbors_through_gateways(
    model: ProcessModel,
    start: str,
    edges: dict[str, list[str]],
) -> list[str]:
    """Names of activity/event nodes adjacent to ``start``.

    Gateways are traversed transparently up to MAX_GATEWAY_HOPS; named
    activities and events terminate a path and are collected, everything
    else terminates the path silently. Results keep document order.
    """
    by_id = {n.node_id: n for n in model.nodes}
    found: dict[str, FlowNode] = {}
    frontier = [(nid, 0) for nid in edges.get(start, [])]
    visited: set[str] = set()
    while frontier:
        nid, hops = frontier.pop(0)
        if nid in visited:
            continue
        visited.add(nid)
        node = by_id.get(nid)
        if node is None:
            continue
        if node.kind in GATEWAY_KINDS:
            if hops < MAX_GATEWAY_HOPS:
                frontier.extend((nxt, hops + 1) for nxt in edges.get(nid, []))
            continue
        if node.name and (node.kind in ACTIVITY_KINDS or node.kind in EVENT_KINDS):
            found[nid] = node
    ordered = sorted(found.values(), key=lambda n: n.doc_order)
    names: list[str] = []
    for n in ordered:
        if n.name not in names:
            names.append(n.name)
    return names


def summarize_context(model: ProcessModel, activity_id: str) -> ActivityContext:
    """Surroundings of one activity: lane, neighbors, process identity."""
    node = model.node(activity_id)
    if node.kind not in ACTIVITY_KINDS:
        raise UnknownActivity(f"{activity_id!r} is a {node.kind.value}, not an activity")
    outgoing, incoming = _adjacency(model)
    return ActivityContext(
        activity_id=activity_id,
        activity_name=node.name,
        process_name=model.name,
        domain_tag=model.domain_tag,
        lane=node.lane,
        predecessors=tuple(_neighbors_through_gateways(model, activity_id, incoming)),
        successors=tuple(_neighbors_through_gateways(model, activity_id, outgoing)),
    )
