"""Energy demand, fuel use and driving behaviour of vehicles in platoons."""

from .analysis import (
    JointDistribution,
    SegmentLabel,
    compute_gaps,
    gap_histograms,
    joint_distribution,
    l2_amplification,
    map_correlation,
    segment_steady_perturbation,
    speed_std_per_segment,
)
from .energy import (
    ArrbParams,
    ModelSet,
    VehicleParams,
    VspParams,
    VtMicroCoefficients,
    arrb_rate,
    assess_platoon,
    fuel_consumption,
    tractive_energy,
    tractive_power,
    vsp_power,
    vsp_rate,
    vt_micro_rate,
)
from .io import ColumnMapping, ingest_csv, read_canonical, write_canonical
from .scenario import load_preset, load_scenario
from .sim import (
    AccControllerParams,
    HumanModelParams,
    LeaderCycle,
    SpeedEvent,
    generate_leader,
    run_scenario,
    simulate_platoon,
)
from .trajectory import (
    DataError,
    PlatoonDataset,
    Trajectory,
    compute_ivs,
    derive_acceleration,
    derive_grade,
    prepare,
    resample,
)

__version__ = "0.1.0"
