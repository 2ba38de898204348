"""Telepresence walking workbench.

Maps a walker's motion in a small room onto an avatar in a large virtual
environment (motion compression), embeds the avatar in a social-force
pedestrian crowd, relays contact forces back in the user frame, and
calibrates the gate-choice model against observed route choices.
"""

from .calibration import (
    CalibrationState,
    ObservedData,
    TrialOutcome,
    calibrate,
    compare_user,
    fit_params,
    fit_params_for_scenario,
    msa_update,
    smooth_update,
    tv_distance,
)
from .compression import (
    CompressionConfig,
    Correspondence,
    GuidanceState,
    InfeasibleRoomError,
    RoomSpec,
    guidance_step,
    map_pose,
    predict_target_path,
    transform_path,
)
from .crowd import (
    Pedestrian,
    SimulationError,
    TrialMetrics,
    World,
    choose_gate,
    driving_force,
    pair_force,
    run_trial,
    wall_force,
)
from .geometry import PathInputError, PolyPath, Pose, reconstruct, resample_path, turning_angle
from .haptics import ForceSample, avatar_force, transform_force
from .scenario import (
    Gate,
    GateChoiceParams,
    Scenario,
    ScenarioError,
    SocialForceParams,
    default_scenario,
    load_scenario,
    save_scenario,
)
from .service import (
    ScriptedParticipant,
    ScriptedPolicy,
    Session,
    SessionConfig,
    TrackerSample,
    replay,
    run_scripted_session,
)

__version__ = "0.1.0"
