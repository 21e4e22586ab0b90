pub mod cli;
pub mod formats;
pub mod identify;
pub mod plan;
pub mod resample;
pub mod sim;
pub mod vdg;
