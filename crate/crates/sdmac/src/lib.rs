pub mod bounds;
pub mod channel;
pub mod format;
pub mod presets;
pub mod prob;
pub mod report;
pub mod round1;
pub mod round2;
