pub mod error;
pub mod estimate;
pub mod laws;
pub mod linalg;
pub mod mc;
pub mod structures;
pub mod functionals;
pub mod cohomology;
pub mod random;
pub mod kde;
pub mod io;
pub mod cli;
