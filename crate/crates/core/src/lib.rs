pub mod liegroup;
pub mod chain;
pub mod ik;
pub mod datagen;
pub mod metrics;
pub mod fista;
