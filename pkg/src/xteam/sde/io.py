"""Flat binary and CSV serialization of simulated batches."""

from __future__ import annotations

import csv
import struct

import numpy as np

MAGIC = b"XTEAM1"


def write_binary(path, states: np.ndarray, actions: np.ndarray) -> None:
    """Header: magic, then M, N, K, d, m as little-endian u32; payload: states then actions, float64 LE."""
    M, N, K1, d = states.shape
    m = actions.shape[-1]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", M, N, K1 - 1, d, m))
        fh.write(np.ascontiguousarray(states, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(actions, dtype="<f8").tobytes())


def read_binary(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not an XTEAM1 batch file")
        M, N, K, d, m = struct.unpack("<5I", fh.read(20))
        states = np.frombuffer(fh.read(8 * M * N * (K + 1) * d), dtype="<f8").reshape(M, N, K + 1, d)
        actions = np.frombuffer(fh.read(8 * M * N * K * m), dtype="<f8").reshape(M, N, K, m)
    return states.copy(), actions.copy()


def write_csv(path, states: np.ndarray, actions: np.ndarray, times: np.ndarray) -> None:
    """One row per (replication, agent, step); actions at the terminal step are blank."""
    M, N, K1, d = states.shape
    m = actions.shape[-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rep", "agent", "k", "t"] + [f"x{j}" for j in range(d)] + [f"u{j}" for j in range(m)])
        for r in range(M):
            for i in range(N):
                for k in range(K1):
                    u = [repr(float(v)) for v in actions[r, i, k]] if k < K1 - 1 else [""] * m
                    w.writerow([r, i, k, repr(float(times[k]))]
                               + [repr(float(v)) for v in states[r, i, k]] + u)


def write_batch(path, batch, fmt: str = "binary") -> None:
    if fmt == "binary":
        write_binary(path, batch.states, batch.actions)
    elif fmt == "csv":
        write_csv(path, batch.states, batch.actions, batch.grid.times)
    else:
        raise ValueError(f"unknown batch format {fmt!r}")
