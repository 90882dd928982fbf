//! Transfer filter functions for open-loop quantum control.
//!
//! The crate builds toggling-frame control matrices for instantaneous pulse
//! sequences, computes fundamental filter functions exactly in moment space
//! or in closed form at given frequencies, assembles generalized filter
//! functions, extracts filtering and cancellation orders, and evaluates
//! Magnus-expansion error actions and dephasing decay.

pub mod control;
pub mod divdiff;
pub mod error;
pub mod fff;
pub mod gff;
pub mod magnus;
pub mod orders;
pub mod pauli;
pub mod quadrature;
mod scalar;
pub mod spectra;

pub use control::{
    cdd_sequence, free_evolution, toggling_control_matrix, udd_sequence, udd_sequence_bits, ControlMatrix, Pulse, PulseSequence,
    TimeRegime,
};
pub use error::{Error, Result};
pub use fff::{fff_eval, fff_taylor, moment, FilterEvaluation, IndexTuple, MomentEngine, MomentTable, MomentValue, ScalarKind};
pub use gff::{
    compositions, dyson_from_magnus, effective_first_order_ff, gff_eval, gff_taylor, magnus_slice_tables, Composition,
    GffEntry, GffEvaluation, GffTable, SliceTables,
};
pub use magnus::{
    error_action_norm, exact_propagator, figure1_scan, magnus_terms, MagnusSimulator, MagnusTerms, ModelKind, ScanModel,
    ScanRow, ToyNoiseModel,
};
pub use orders::{
    analyze, fff_filtering_order, gff_filtering_order, protocol_co, protocol_fo, protocol_fo_generalized,
    quasistatic_no_go, relevant_indices, Caps, IndexOrders, NoGo, Order, ProtocolOrders, RelevantSet, RelevantTuple,
};
pub use pauli::{PauliAxis, PauliProduct};
pub use quadrature::fff_eval_quadrature;
pub use spectra::{chi_gaussian, classical_decay, CumulantSeries, NoiseSpectrum, Polyspectrum};
pub use scalar::{ratio_to_f64, round_to_bits, sin_squared_pi_fraction};
