//! Loading, validating, correcting and transforming state-day panels.

pub mod corrections;
pub mod dataset;
pub mod pipeline;
pub mod transforms;

pub use corrections::{apply_corrections, Correction, CorrectionSet};
pub use dataset::{Column, ColumnRole, PanelBuilder, PanelDataset, Schema, StateSpan};
pub use pipeline::{Overrides, Pipeline, Step};
pub use transforms::{
    encode_mask_policies, lag, lag_name, ma_name, moving_average, national_aggregate, national_name, weekly_log_growth,
    GrowthNames, TransformSpec,
    MASKS_EMPLOYEES_ONLY, MASKS_PUBLIC,
};
