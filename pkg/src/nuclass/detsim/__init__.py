from .events import (
    CLASSES,
    EnergyDeposit,
    Event,
    GeneratorConfig,
    apportion,
    class_index,
    class_name,
    class_schedule,
    event_seed,
    sample_event,
)
from .geometry import DetectorGeometry, DiffusionModel, DomainError, GeometryError, nearest_anode_distance
from .io import (
    Dataset,
    DatasetRecord,
    DatasetWriter,
    FormatError,
    GenerationPlan,
    calibration_scale,
    generate_dataset,
    iter_dataset,
    read_dataset,
    read_pixelmap,
    write_dataset,
    write_pixelmap,
)
from .render import (
    VIEWS,
    EventRenderer,
    NormSettings,
    PixelMap,
    calibrate_scale,
    project_grid,
    render_event,
    render_views,
)
from .voxelize import VoxelGrid, smear_and_voxelize
