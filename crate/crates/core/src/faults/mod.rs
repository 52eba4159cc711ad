//! Byte-level fault masks: generation, application and recovery from
//! before/after dumps.

mod generate;
mod mask;
pub mod rng;

pub use generate::{
    gen_byte_set, gen_emfi_pattern, gen_random_bitflips, EmfiPatternParams, FaultModel, MIB,
};
pub use mask::{apply_mask, diff_to_mask, FaultMask, FaultOp, FaultRecord};
