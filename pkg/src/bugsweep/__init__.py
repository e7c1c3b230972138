"""bugsweep: find and localize hidden wireless sensors from Wi-Fi traffic.

The package watches encrypted wireless traffic volumes, stimulates the space
(moving, speaking, flashing a screen), and tests whether any device's traffic
is *caused* by those stimuli — then walks a suspected sensor down to a small
patch of the room by directional trials.
"""
from .causality import (
    CausalityVerdict,
    EventCausality,
    GrangerResult,
    audio_event_causality,
    detect_sustained_elevation,
    discover_timeout,
    granger_sweep,
    granger_test,
)
from .detect import (
    DetectionReport,
    DeviceFinding,
    OuiDatabase,
    active_detect,
    background_detect,
    classify_device,
)
from .errors import (
    BugsweepError,
    ConfigError,
    InputMismatchError,
    InsufficientActivityError,
    InsufficientDataError,
)
from .localize import (
    GridRegion,
    LocalizationResult,
    audio_localize,
    localize,
    map_coverage,
    most_likely_location,
)
from .stats import OlsFit, betainc_reg, f_cdf, f_sf, ols_fit
from .trace import (
    AudioEvent,
    DeviceTrace,
    GroundTruthTrace,
    PacketRecord,
    TimeSeries,
    UserPath,
    deduplicate,
    resample_ground_truth,
    suppress_iframes,
    windowize,
)
from .worldsim import (
    CountermeasureConfig,
    InnocuousDevice,
    Scenario,
    ScriptStep,
    SensorPlacement,
    apply_countermeasure,
    coverage_oracle,
    generate,
    load_scenario,
    save_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "AudioEvent",
    "BugsweepError",
    "CausalityVerdict",
    "ConfigError",
    "CountermeasureConfig",
    "DetectionReport",
    "DeviceFinding",
    "DeviceTrace",
    "EventCausality",
    "GrangerResult",
    "GridRegion",
    "GroundTruthTrace",
    "InnocuousDevice",
    "InputMismatchError",
    "InsufficientActivityError",
    "InsufficientDataError",
    "LocalizationResult",
    "OlsFit",
    "OuiDatabase",
    "PacketRecord",
    "Scenario",
    "ScriptStep",
    "SensorPlacement",
    "TimeSeries",
    "UserPath",
    "active_detect",
    "apply_countermeasure",
    "audio_event_causality",
    "audio_localize",
    "background_detect",
    "betainc_reg",
    "classify_device",
    "coverage_oracle",
    "deduplicate",
    "detect_sustained_elevation",
    "discover_timeout",
    "f_cdf",
    "f_sf",
    "generate",
    "granger_sweep",
    "granger_test",
    "load_scenario",
    "localize",
    "map_coverage",
    "most_likely_location",
    "ols_fit",
    "resample_ground_truth",
    "save_scenario",
    "suppress_iframes",
    "windowize",
    "__version__",
]
