//! File formats, the synthetic benchmark generator, and the CLI.

pub mod cli;
pub mod formats;
pub mod records;
pub mod synth;

pub use cli::cli_main;
pub use formats::{
    parse_correspondences, parse_intrinsics, parse_trajectory, serialize_correspondences,
    serialize_intrinsics, serialize_trajectory, RunManifest, SynthConfig, ToolingError,
};
pub use records::{read_align_records, write_align_records, AlignRecord, PairStatus};
pub use synth::{
    generate_planted_matches, generate_synthetic_pair, simulate_teach_repeat, MotionModel,
    SynthPair,
};
