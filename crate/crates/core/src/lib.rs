//! Growth competitions between two sets on rotationally symmetric surfaces.
//!
//! The slower set's final region is the fixed point of an obstacle-distance
//! recursion; [`grid`] computes it on a polar grid, [`analytic`] provides the
//! closed-form curves it is checked against, and [`runner`] drives solve,
//! refinement, sweep and comparison runs from a [`config`] file.

pub mod analytic;
pub mod config;
pub mod export;
pub mod grid;
pub mod metric;
pub mod quadrature;
pub mod runner;
