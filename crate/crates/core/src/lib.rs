//! Fully-connected versus homogeneous-vector-capsule classifier heads on a
//! procedurally rendered micro-PCB dataset, with the geometry, pose
//! measurement, and experiment harness needed to study how rotation and
//! perspective coverage in training affects test accuracy.

pub mod cli;
pub mod experiments;
pub mod geometry;
pub mod network;
pub mod posemeasure;
pub mod raster;
pub mod synthgen;
pub mod tensor;
