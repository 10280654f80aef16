pub mod calibrate;
pub mod export_mesh;
pub mod phantom;
pub mod register;
pub mod segment;
pub mod validate;
