//! Feynman clock Hamiltonians on system (x) clock space.
//!
//! A clock matrix is assembled from one local term per edge `t -> t + dt`:
//! either a free term that hops between neighbouring slices, or a jump
//! penalty that pins the state on `t + dt` to a collapsed wave function and
//! cuts the hop. Slices joined by free terms form a block; every block has a
//! one-dimensional null space, so a clock with `n` jumps has an
//! `(n + 1)`-fold degenerate ground level.

mod build;
mod disorder;
mod history;
mod spectrum;
mod stochastic;

use std::ops::Range;

use crate::grid::ClockGrid;
use crate::linalg::{CMatrix, CVector};
use crate::qcore::PureState;
use crate::sse::{JumpEvent, JumpRecord};

pub use build::{build_nonhermitian_clock, build_unitary_clock};
pub use disorder::{add_disorder, DisorderSpec, DISORDER_STREAM};
pub use history::{
    combine_degenerate, density_trace_from_clocks, ensemble_density_from_clocks, ground_history,
    history_from_trajectory, jump_table_from_history, jump_table_recursive, measure_clock, HistoryState,
    SUPPORT_LEAK_TOL, ZERO_SLICE_TOL,
};
pub use spectrum::{
    fit_power_law, gap_scan, hermitizing_transform, normality_residual, similarity_transform,
    spectrum_report, spectrum_report_capped, SpectrumReport, SpectrumRoute, ABOVE_BAND_THRESHOLD, BAND_TOP,
    DEFAULT_DIM_CAP,
};
pub use stochastic::{
    clock_from_trajectory, forced_single_jump_clock, sample_exact_stochastic_clock,
    sample_single_jump_clock, segment_hamiltonians,
};

pub use crate::qcore::JumpProbabilityTable;

/// Default weight of the initial-condition and jump penalties.
///
/// A weight of 1 keeps every clock eigenvalue inside `[0, 4]`; any weight
/// above 2 splits off exactly one penalized level above the band. 6.1 puts
/// that level at 7.30 on desk-scale grids.
pub const DEFAULT_PENALTY_WEIGHT: f64 = 6.1;

/// How the backward hop `R^-1` of the non-Hermitian clock is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InverseMode {
    /// Exact matrix inverse of `R`; history states are exact null vectors.
    #[default]
    Exact,
    /// `1 + i H dt + D dt`, correct to first order only.
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockOptions {
    pub penalty_weight: f64,
    pub inverse: InverseMode,
}

impl Default for ClockOptions {
    fn default() -> Self {
        ClockOptions {
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
            inverse: InverseMode::Exact,
        }
    }
}

impl ClockOptions {
    pub fn first_order() -> Self {
        ClockOptions {
            inverse: InverseMode::FirstOrder,
            ..Self::default()
        }
    }

    pub fn with_penalty(mut self, weight: f64) -> Self {
        self.penalty_weight = weight;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClockRecipe {
    Unitary,
    NonHermitian { dressed: bool },
    StochasticExact { jumps: JumpRecord },
    /// `None` when the sampler drew no jump.
    SingleJump(Option<JumpEvent>),
    Disordered {
        base: Box<ClockRecipe>,
        seed: u64,
        delta_max: f64,
    },
}

impl ClockRecipe {
    pub fn name(&self) -> String {
        match self {
            ClockRecipe::Unitary => "Unitary".into(),
            ClockRecipe::NonHermitian { dressed } => {
                if *dressed {
                    "NonHermitian(dressed)".into()
                } else {
                    "NonHermitian".into()
                }
            }
            ClockRecipe::StochasticExact { jumps } => format!("StochasticExact({} jumps)", jumps.len()),
            ClockRecipe::SingleJump(Some(e)) => format!("SingleJump(s={}, m={})", e.slice, e.channel),
            ClockRecipe::SingleJump(None) => "SingleJump(NoJump)".into(),
            ClockRecipe::Disordered { base, .. } => format!("Disordered({})", base.name()),
        }
    }
}

/// Local term on the edge `k -> k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum SliceTerm {
    /// Contributes `-forward` on block `(k+1, k)`, `-backward` on `(k, k+1)`
    /// and the identity on both diagonal blocks.
    Free { forward: CMatrix, backward: CMatrix },
    /// Contributes `penalty` on diagonal block `(k+1, k+1)` only; `target` is
    /// the normalized collapsed state the penalty annihilates.
    Jump {
        channel: usize,
        target: PureState,
        penalty: CMatrix,
    },
}

#[derive(Debug, Clone)]
pub struct ClockHamiltonian {
    pub matrix: CMatrix,
    pub grid: ClockGrid,
    pub recipe: ClockRecipe,
    pub psi0: PureState,
    pub terms: Vec<SliceTerm>,
    pub options: ClockOptions,
}

impl ClockHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Slice ranges joined by free terms, in order.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (k, term) in self.terms.iter().enumerate() {
            if matches!(term, SliceTerm::Jump { .. }) {
                out.push(start..k + 1);
                start = k + 1;
            }
        }
        out.push(start..self.grid.n_slices);
        out
    }

    /// State each block's initial-condition constraint pins its first slice to.
    pub fn block_initial_states(&self) -> Vec<PureState> {
        let mut out = vec![self.psi0.clone()];
        for term in &self.terms {
            if let SliceTerm::Jump { target, .. } = term {
                out.push(target.clone());
            }
        }
        out
    }

    pub fn jump_events(&self) -> Vec<JumpEvent> {
        self.terms
            .iter()
            .enumerate()
            .filter_map(|(k, t)| match t {
                SliceTerm::Jump { channel, .. } => Some(JumpEvent {
                    slice: k + 1,
                    channel: *channel,
                }),
                SliceTerm::Free { .. } => None,
            })
            .collect()
    }

    pub fn is_disordered(&self) -> bool {
        matches!(self.recipe, ClockRecipe::Disordered { .. })
    }

    /// `||H v||` for a history state on the same grid.
    pub fn residual(&self, eta: &HistoryState) -> f64 {
        (&self.matrix * &eta.vector).norm()
    }

    pub(crate) fn block_range_indices(&self, slices: &Range<usize>) -> Range<usize> {
        slices.start * self.grid.dim..slices.end * self.grid.dim
    }
}

pub(crate) fn slice_of(v: &CVector, grid: &ClockGrid, k: usize) -> CVector {
    v.rows(k * grid.dim, grid.dim).into_owned()
}
