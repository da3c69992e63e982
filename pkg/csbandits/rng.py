"""Seeded random streams for reproducible replications."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReplicationStreams:
    """Two disjoint numpy streams owned by a single replication.

    `env` feeds the censoring environment only; `policy` feeds posterior
    sampling and the random choices of the estimation phase. Changing a
    policy never shifts the environment draws.
    """

    env: np.random.Generator
    policy: np.random.Generator


def spawn_streams(master_seed: int, replication_index: int) -> ReplicationStreams:
    if master_seed < 0 or replication_index < 0:
        raise ValueError(
            f"Seed e índice de replicação devem ser >= 0 (seed={master_seed}, rep={replication_index})"
        )
    root = np.random.SeedSequence([int(master_seed), int(replication_index)])
    env_seq, policy_seq = root.spawn(2)
    return ReplicationStreams(
        env=np.random.default_rng(env_seq),
        policy=np.random.default_rng(policy_seq),
    )
