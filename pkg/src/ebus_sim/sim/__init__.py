from .model import (
    BusSpec,
    BusState,
    ChargeAction,
    ChargerBank,
    DispatchDecision,
    SimConfig,
    SimResult,
    StrandingEvent,
    World,
    baseline_expected_wait,
    charging_policy,
    dispatch_policy,
    finalize,
    fleet_comparison,
    grid_load_profile,
    run_simulation,
    step,
)

__all__ = [
    "BusSpec",
    "BusState",
    "ChargeAction",
    "ChargerBank",
    "DispatchDecision",
    "SimConfig",
    "SimResult",
    "StrandingEvent",
    "World",
    "baseline_expected_wait",
    "charging_policy",
    "dispatch_policy",
    "finalize",
    "fleet_comparison",
    "grid_load_profile",
    "run_simulation",
    "step",
]
