# -*- coding: utf-8 -*-
"""
Core Constants
==============
Centralized configuration constants for the stegmesh core.
This file decouples hardcoded values from logic, so scenario defaults and
wire-format sizes live in one place.
"""

# ============================================================================
# FIXED-POINT METRICS
# ============================================================================

# One unit expressed in micro-units (10^-6 resolution)
MICRO = 1_000_000

# Any route at or above this cost is unreachable (2^31 micro-units)
INFINITY_COST = 2 ** 31

# Count-to-infinity ceiling on advertised hop counts
MAX_HOPS = 32

# Default metric weights (delay, capacity, methods), in whole units
DEFAULT_WEIGHTS = (1, 1, 1)

# ============================================================================
# METHOD REGISTRY
# ============================================================================

MAX_METHOD_ID = 63

# ============================================================================
# CODEC LAYOUTS
# ============================================================================

# HeaderField: options region starts after an untouched 8-byte header prefix
HEADER_OPTIONS_OFFSET = 8
HEADER_PREAMBLE_LEN = 8          # u32 length + u32 CRC-32
HEADER_MIN_CARRIER = 32

# PayloadLowBits: 32 LSBs of length + 32 LSBs of CRC-32 trail the payload bits
LOWBITS_TRAILER_LEN = 64

# ============================================================================
# INTRA-CLUSTER CIPHER
# ============================================================================

CLUSTER_KEY_LEN = 32
NONCE_LEN = 8
TAG_LEN = 4

# ============================================================================
# ENGINE DEFAULTS (ticks)
# ============================================================================

DEFAULT_RANDOM_WALK_PERIOD = 50
DEFAULT_ROUTING_UPDATE_PERIOD = 10
DEFAULT_HELLO_PERIOD = 10
DEFAULT_HELLO_TIMEOUT = 35
DEFAULT_FORWARD_PROBABILITY = 700_000    # 0.7 in micro-units
DEFAULT_RELAY_DEPTH = 4
STALE_ROUTE_FACTOR = 3                   # x routing_update_period
QUIESCENCE_FACTOR = 3                    # x routing_update_period
WALK_HOP_LIMIT = 64                      # simulator guard for pf = 1 walks
DATA_TTL = 32

# ============================================================================
# CLI
# ============================================================================

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

TRACE_FILE = "trace.log"
REPORT_FILE = "report.json"
METRICS_FILE = "metrics.csv"

DEFAULT_RUN_LIMIT = 5_000

# ============================================================================
# SIMULATOR
# ============================================================================

# Random keys an eavesdropper tries on every captured intra-cluster ciphertext
ADVERSARY_GUESSES = 4

# Stream labels for derive_stream(seed, ...)
STREAM_ENGINE = 1
STREAM_CLUSTER_KEYS = 2
STREAM_ADVERSARY = 3
