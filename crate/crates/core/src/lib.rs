pub mod adr;
pub mod dmd;
pub mod linalg;
pub mod nn;
pub mod trainer;
