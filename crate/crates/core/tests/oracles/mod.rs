//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

pub mod dft;
pub mod eigen;
pub mod hdbscan;
