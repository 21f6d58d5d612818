"""CNI conflist handling and the proxy's node / pod initialization procedures."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .packet import HOST_NAMESPACE, NamespaceId
from .proxy import (
    DEFAULT_GC_INTERVAL,
    DEFAULT_MAX_AGE,
    SECOND,
    KeyStrategy,
    MetadataStore,
)

PROXY_PLUGIN_TYPE = "tsn-proxy"


class ConflistError(ValueError):
    """A conflist document that cannot be parsed or violates the CNI shape."""

    def __init__(self, message: str, location: str):
        super().__init__(f"{location}: {message}")
        self.location = location


class NodeError(RuntimeError):
    pass


@dataclass
class PluginEntry:
    # Full plugin object, including "type", in its original key order.
    config: Dict[str, Any]

    @property
    def type(self) -> str:
        return self.config["type"]


@dataclass
class PluginChainConfig:
    name: str
    cni_version: str
    plugins: List[PluginEntry]
    # Top-level document as read; unknown keys ride along untouched.
    document: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def plugin_types(self) -> List[str]:
        return [p.type for p in self.plugins]

    @property
    def primary(self) -> PluginEntry:
        return self.plugins[0]

    def has_proxy(self) -> bool:
        return PROXY_PLUGIN_TYPE in self.plugin_types

    @classmethod
    def from_document(cls, doc: Any) -> "PluginChainConfig":
        if not isinstance(doc, dict):
            raise ConflistError("top level must be an object", "$")
        for key in ("name", "cniVersion"):
            if not isinstance(doc.get(key), str):
                raise ConflistError(f"missing or non-string {key!r}", f"$.{key}")
        plugins = doc.get("plugins")
        if not isinstance(plugins, list) or not plugins:
            raise ConflistError("must be a non-empty array", "$.plugins")
        entries = []
        for i, plugin in enumerate(plugins):
            where = f"$.plugins[{i}]"
            if not isinstance(plugin, dict):
                raise ConflistError("plugin entry must be an object", where)
            if not isinstance(plugin.get("type"), str) or not plugin["type"]:
                raise ConflistError("missing or non-string 'type'", where + ".type")
            entries.append(PluginEntry(copy.deepcopy(plugin)))
        if sum(e.type == PROXY_PLUGIN_TYPE for e in entries) > 1:
            raise ConflistError(f"more than one {PROXY_PLUGIN_TYPE!r} entry", "$.plugins")
        return cls(doc["name"], doc["cniVersion"], entries, copy.deepcopy(doc))

    def to_document(self) -> Dict[str, Any]:
        doc = copy.deepcopy(self.document)
        doc["name"] = self.name
        doc["cniVersion"] = self.cni_version
        doc["plugins"] = [copy.deepcopy(p.config) for p in self.plugins]
        return doc


def parse_conflist(text: str) -> PluginChainConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConflistError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return PluginChainConfig.from_document(doc)


def emit_conflist(conflist: PluginChainConfig) -> str:
    return json.dumps(conflist.to_document(), indent=2) + "\n"


def proxy_plugin_config(nic: str = "eth0", gc_interval: int = DEFAULT_GC_INTERVAL,
                        max_age: int = DEFAULT_MAX_AGE,
                        strategy: KeyStrategy = KeyStrategy.BUFFER_ADDRESS) -> Dict[str, Any]:
    return {
        "type": PROXY_PLUGIN_TYPE,
        "nic": nic,
        "gcIntervalSeconds": gc_interval / SECOND,
        "maxAgeSeconds": max_age / SECOND,
        "keyStrategy": KeyStrategy.parse(strategy).value,
    }


def insert_proxy_plugin(conflist: PluginChainConfig,
                        proxy_config: Optional[Dict[str, Any]] = None) -> PluginChainConfig:
    """Append the proxy so it runs after every other plugin.

    Returns the input unchanged when a proxy entry is already present.
    """
    if conflist.has_proxy():
        return conflist
    entry = PluginEntry(dict(proxy_config or proxy_plugin_config()))
    if entry.config.get("type") != PROXY_PLUGIN_TYPE:
        raise ValueError(f"proxy config must have type {PROXY_PLUGIN_TYPE!r}")
    return PluginChainConfig(
        conflist.name,
        conflist.cni_version,
        [PluginEntry(copy.deepcopy(p.config)) for p in conflist.plugins] + [entry],
        copy.deepcopy(conflist.document),
    )


def default_conflist() -> PluginChainConfig:
    """A stock Flannel chain as found in /etc/cni/net.d on a fresh node."""
    return PluginChainConfig.from_document({
        "name": "cbr0",
        "cniVersion": "1.0.0",
        "plugins": [
            {"type": "flannel", "delegate": {"hairpinMode": True, "isDefaultGateway": True}},
            {"type": "portmap", "capabilities": {"portMappings": True}},
        ],
    })


@dataclass(frozen=True)
class VethPair:
    pod_end: str
    host_end: str
    pod_namespace: NamespaceId
    host_namespace: NamespaceId = HOST_NAMESPACE


@dataclass
class PodState:
    namespace: NamespaceId
    veth: VethPair
    veth_hook_attached: bool = False
    plugins_run: List[str] = field(default_factory=list)


@dataclass
class NodeState:
    conflist: PluginChainConfig = field(default_factory=default_conflist)
    nics: Tuple[str, ...] = ("eth0",)
    store: Optional[MetadataStore] = None
    binaries_installed: bool = False
    nic_hook_attached: bool = False
    clone_probe_attached: bool = False
    gc_running: bool = False
    nic: Optional[str] = None
    gc_interval: Optional[int] = None
    pods: Dict[str, PodState] = field(default_factory=dict)
    init_steps: List[str] = field(default_factory=list)

    @property
    def host_namespace(self) -> NamespaceId:
        return HOST_NAMESPACE

    @property
    def initialized(self) -> bool:
        return self.nic_hook_attached and self.clone_probe_attached and self.gc_running


def node_init(node: NodeState, nic_name: str, gc_interval: int = DEFAULT_GC_INTERVAL,
              max_age: int = DEFAULT_MAX_AGE,
              strategy: KeyStrategy = KeyStrategy.BUFFER_ADDRESS) -> NodeState:
    """Run the DaemonSet's six node preparation steps, in order."""
    if node.store is not None or node.init_steps:
        raise NodeError("node is already initialized")
    if nic_name not in node.nics:
        raise NodeError(f"unknown NIC {nic_name!r}; node has {list(node.nics)}")
    if gc_interval <= 0:
        raise NodeError("gc_interval must be positive")
    strategy = KeyStrategy.parse(strategy)

    node.store = MetadataStore(strategy=strategy, max_age=max_age)
    node.init_steps.append("create-store")

    node.binaries_installed = True
    node.init_steps.append("install-binaries")

    node.conflist = insert_proxy_plugin(
        node.conflist, proxy_plugin_config(nic_name, gc_interval, max_age, strategy))
    node.init_steps.append("insert-plugin")

    node.nic = nic_name
    node.nic_hook_attached = True
    node.init_steps.append("attach-restore-hook")

    # Attached under both strategies; it simply never matches for data keys.
    node.clone_probe_attached = True
    node.init_steps.append("attach-clone-probe")

    node.gc_interval = gc_interval
    node.gc_running = True
    node.init_steps.append("start-gc")
    return node


def detach_clone_probe(node: NodeState) -> NodeState:
    node.clone_probe_attached = False
    return node


def pod_init(node: NodeState, pod_name: str, is_tsa: bool) -> NodeState:
    """Create the pod namespace and veth pair, then run the plugin chain."""
    if not node.init_steps or node.store is None:
        raise NodeError("node is not initialized")
    if pod_name in node.pods:
        raise NodeError(f"pod {pod_name!r} already exists")

    namespace = NamespaceId(pod_name)
    veth = VethPair(pod_end="eth0", host_end=f"veth-{pod_name}", pod_namespace=namespace)
    pod = PodState(namespace=namespace, veth=veth)
    for plugin in node.conflist.plugins:
        pod.plugins_run.append(plugin.type)
        if plugin.type == PROXY_PLUGIN_TYPE and is_tsa:
            pod.veth_hook_attached = True
    node.pods[pod_name] = pod
    return node
