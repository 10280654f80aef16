//! World-space geometry: transforms, interpolation, resampling.

pub mod interp;
pub mod resample;
pub mod transform;

pub use interp::{
    interpolator_from_name, interpolator_names, nearest_sample, trilinear_sample, Interpolator,
    Nearest, Trilinear,
};
pub use resample::{regrid, resample};
pub use transform::{
    read_transform_json, write_transform_json, AffineTransform, TRANSFORM_SCHEMA,
};
