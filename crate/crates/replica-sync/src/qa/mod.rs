//! Kernel quadratic assignment: Mercer truncation, the decoupled potential,
//! its limits, and exact enumeration over permutations.

mod exact;
mod kernel;
mod potential;

pub use exact::{generate_qa, qa_exact_free_energy, QaExactReport, QaInstance, QA_MAX_N};
pub use kernel::{mercer_truncate, BaseMeasure, KernelKind, KernelSpec, MercerTruncation, RANK_FLOOR};
pub use potential::{grad_psi_qa, psi_qa, qa_mi_mmse, qa_scale_sweep, qa_solve, QaLevel, QaSolution, QaSweepRow, CAUCHY_TOL, JUMP_FLAG};
