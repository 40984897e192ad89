# Copyright 2025 Stanford University, NVIDIA Corporation
# SPDX-License-Identifier: Apache-2.0

"""Python bindings for the taskdual runtimes, graph compiler and benchmarks."""

from ._taskdual import (
    ChecksumMismatch,
    Error,
    ValidationError,
    async_transform,
    compile_dump,
    compute_metg,
    cross_edges,
    expected_checksum,
    generate_graph,
    graph_dot,
    run_bench,
    trace_demo,
    transitive_reduce,
    verify,
)

__all__ = [
    "ChecksumMismatch",
    "Error",
    "ValidationError",
    "async_transform",
    "compile_dump",
    "compute_metg",
    "cross_edges",
    "expected_checksum",
    "generate_graph",
    "graph_dot",
    "run_bench",
    "trace_demo",
    "transitive_reduce",
    "verify",
]
