"""Event-camera denoising: ESR metrics, streaming filters, synthetic data and benchmarks."""
from .core import (
    Event,
    EventPacket,
    SensorGeometry,
    ValidationReport,
    concatenate,
    slice_by_count,
    slice_by_time,
    sort_stable,
    validate_packet,
)
from .io import (
    EventFormatError,
    EventParseError,
    TruncationError,
    load_events,
    read_events_binary,
    read_events_text,
    save_events,
    write_events_binary,
    write_events_text,
)
from .metrics import (
    EsrComponents,
    MesrResult,
    MetricParams,
    PixelHistogram,
    UndefinedMetricError,
    WarpModel,
    esr,
    esr_components,
    l_n,
    mesr,
    ntss,
    spatial_support,
    tss,
    warp_to_iwe,
)
from .synth import NoiseSpec, SceneSpec, generate_scene, inject_uniform_noise, remove_hot_pixels
from .filters import DENOISERS, FILTERS, FilterDecisionTrace, apply_filter, make_config
from .bench import (
    BenchmarkPlan,
    BenchmarkReport,
    InputSource,
    Protocol,
    emit_report,
    load_plan,
    run_benchmark,
    standard_fixture,
)

from .bench import __version__  # noqa: E402
