"""Carry Ethernet/TSN frames over an IP-only 5G user plane with VxLAN, keeping their priority.

Per frame: {VLAN ID, PCP} -> VNI -> outer DSCP -> QFI -> 5QI -> DRB.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    FrameError,
    MappingError,
    NoRouteError,
    TagMismatchError,
    VxtsnError,
)
from .frames import (  # noqa: E402
    EthernetFrame,
    MacAddress,
    VlanTag,
    VxlanPacket,
    decode_frame,
    decode_vxlan,
    encode_frame,
    encode_vxlan,
)
from .mapping import (  # noqa: E402
    DscpTable,
    MappingConfig,
    PdrRule,
    PdrRuleSet,
    TsnTuple,
    classify_qfi,
    dscp_from_pcp,
    lookup_5qi,
    pcp_from_dscp,
    tuple_from_vni,
    vni_from_tuple,
)
from .vtep import ForwardingTable, Vtep, VtepConfig  # noqa: E402

__all__ = [
    "ConfigError", "FrameError", "MappingError", "NoRouteError", "TagMismatchError", "VxtsnError",
    "EthernetFrame", "MacAddress", "VlanTag", "VxlanPacket",
    "decode_frame", "decode_vxlan", "encode_frame", "encode_vxlan",
    "DscpTable", "MappingConfig", "PdrRule", "PdrRuleSet", "TsnTuple",
    "classify_qfi", "dscp_from_pcp", "lookup_5qi", "pcp_from_dscp", "tuple_from_vni", "vni_from_tuple",
    "ForwardingTable", "Vtep", "VtepConfig",
]
