pub mod ablate;
pub mod checkpoint;
pub mod family;
pub mod fit;
pub mod param_count;
pub mod rank_report;
pub mod verify;
