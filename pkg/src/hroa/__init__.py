"""Route-origin authorization encoding toolkit.

Layers, bottom up: prefix trie primitives, the minimal maxLength
compressor, the bitmap sub-tree codec, the hybrid splitter, a
hanging-level optimizer, the wire format, and a reset-query sync pair.
"""

from .prefix import (
    V4,
    V6,
    AddressBlock,
    ExpansionCapError,
    FamilyMismatchError,
    Prefix,
    PrefixFormatError,
    Vrp,
    covers,
    expand,
    parse_prefix,
)
from .mlcodec import compress_minimal, excess_prefixes, scatter_degree
from .bmcodec import (
    BitmapRoa,
    HangingLevels,
    Stm,
    SubTreeBlock,
    apply_roa,
    decode_block,
    encode_batch,
    make_node_number,
    make_subtree_id,
    nearest_hanging_level,
    stm_decode,
    stm_insert,
    subtree_height,
)
from .hybrid import (
    AggregatedGroup,
    HybridConfig,
    HybridPayload,
    aggregate_blocks,
    hybrid_decode,
    hybrid_encode,
    sweep_parameters,
)
from .levelopt import CostModel, count_nonempty_subtrees, optimize_levels
from .sync import CacheSnapshot, RtrServer, SyncReport, fetch, serve
from .workload import Workload, load_csv, synthetic_scattered

__version__ = "0.1.0"

__all__ = [
    "V4",
    "V6",
    "AddressBlock",
    "AggregatedGroup",
    "BitmapRoa",
    "CacheSnapshot",
    "CostModel",
    "ExpansionCapError",
    "FamilyMismatchError",
    "HangingLevels",
    "HybridConfig",
    "HybridPayload",
    "Prefix",
    "PrefixFormatError",
    "RtrServer",
    "Stm",
    "SubTreeBlock",
    "SyncReport",
    "Vrp",
    "Workload",
    "aggregate_blocks",
    "apply_roa",
    "compress_minimal",
    "count_nonempty_subtrees",
    "covers",
    "decode_block",
    "encode_batch",
    "excess_prefixes",
    "expand",
    "fetch",
    "hybrid_decode",
    "hybrid_encode",
    "load_csv",
    "make_node_number",
    "make_subtree_id",
    "nearest_hanging_level",
    "optimize_levels",
    "parse_prefix",
    "scatter_degree",
    "serve",
    "stm_decode",
    "stm_insert",
    "subtree_height",
    "sweep_parameters",
    "synthetic_scattered",
]
