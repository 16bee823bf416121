from gencol_mmot.io.readers import (
    image_to_marginal,
    pixel_coordinates,
    read_cloud,
    read_csv_cloud,
    read_idx_images,
    read_pgm,
    read_pgm_array,
    read_plan,
    read_potentials,
)
from gencol_mmot.io.writers import (
    ProgressWriter,
    write_cloud,
    write_grid,
    write_history,
    write_mask,
    write_plan,
    write_potentials,
    write_run_record,
)

__all__ = [
    "image_to_marginal",
    "pixel_coordinates",
    "read_cloud",
    "read_csv_cloud",
    "read_idx_images",
    "read_pgm",
    "read_pgm_array",
    "read_plan",
    "read_potentials",
    "ProgressWriter",
    "write_cloud",
    "write_grid",
    "write_history",
    "write_mask",
    "write_plan",
    "write_potentials",
    "write_run_record",
]
