from csbandits.core import (
    Allocation,
    CommonThreshold,
    CsbInstance,
    FeedbackVector,
    InfeasibleAllocationError,
    InvalidInstanceError,
    PerArmThreshold,
    RegretTrace,
    environment_step,
    make_instance,
    optimal_allocation,
    round_regret,
)
from csbandits.policies import PolicyConfig, run_csb_dt, run_csb_st
from csbandits.rng import ReplicationStreams, spawn_streams
