pub mod cli;
pub mod energy_torque;
pub mod geometry;
pub mod grip_model;
pub mod materials;
pub mod magnetostatics;
pub mod mesh;
