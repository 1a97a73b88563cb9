use std::io::Write;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::grid::ClockGrid;
use crate::lindblad_ref::DensityTrace;
use crate::linalg::{self, c, CMatrix, CVector};
use crate::qcore::{density_from_states, DensityMatrix, JumpProbabilityTable, LindbladModel, PureState};
use crate::sse::Trajectory;

use super::{slice_of, ClockHamiltonian};

/// Largest norm a block-combined vector may carry outside its block.
pub const SUPPORT_LEAK_TOL: f64 = 1e-6;

/// Smallest slice norm `measure_clock` will renormalize.
pub const ZERO_SLICE_TOL: f64 = 1e-12;

/// Unit vector on system (x) clock space.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    pub vector: CVector,
    pub grid: ClockGrid,
}

impl HistoryState {
    /// Normalizes `vector`.
    pub fn new(vector: CVector, grid: ClockGrid) -> Result<Self> {
        if vector.len() != grid.full_dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.full_dim(),
                got: vector.len(),
            });
        }
        let norm = vector.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParams("history vector has no finite nonzero norm".into()));
        }
        Ok(HistoryState {
            vector: vector / c(norm),
            grid,
        })
    }

    /// `sqrt(dt / (T + dt)) sum_t |psi(t)> (x) |t>`
    pub fn from_slices(states: &[PureState], grid: ClockGrid) -> Result<Self> {
        if states.len() != grid.n_slices {
            return Err(Error::DimensionMismatch {
                expected: grid.n_slices,
                got: states.len(),
            });
        }
        let w = c(grid.slice_weight().sqrt());
        let mut v = CVector::zeros(grid.full_dim());
        for (k, s) in states.iter().enumerate() {
            if s.dim() != grid.dim {
                return Err(Error::DimensionMismatch {
                    expected: grid.dim,
                    got: s.dim(),
                });
            }
            v.rows_mut(k * grid.dim, grid.dim).copy_from(&(s.amplitudes() * w));
        }
        HistoryState::new(v, grid)
    }

    pub fn slice(&self, k: usize) -> CVector {
        slice_of(&self.vector, &self.grid, k)
    }

    pub fn slice_norm(&self, k: usize) -> f64 {
        self.vector.rows(k * self.grid.dim, self.grid.dim).norm()
    }

    pub fn normalized_slice(&self, k: usize) -> Result<PureState> {
        measure_clock(self, k)
    }

    /// Same per-slice directions and phases, every slice rescaled to weight
    /// `dt / (T + dt)`. Empty slices stay empty.
    pub fn physical(&self) -> HistoryState {
        let w = self.grid.slice_weight().sqrt();
        let d = self.grid.dim;
        let mut v = self.vector.clone();
        for k in 0..self.grid.n_slices {
            let mut rows = v.rows_mut(k * d, d);
            let n = rows.norm();
            if n > ZERO_SLICE_TOL {
                rows *= c(w / n);
            }
        }
        let norm = v.norm();
        HistoryState {
            vector: v / c(norm),
            grid: self.grid,
        }
    }

    /// Columns `slice,t,re_0..,im_0..,slice_norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.dim;
        let mut header = vec!["slice".to_string(), "t".to_string()];
        header.extend((0..d).map(|i| format!("re_{i}")));
        header.extend((0..d).map(|i| format!("im_{i}")));
        header.push("slice_norm".into());
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.grid.n_slices {
            let s = self.slice(k);
            let mut row = vec![k.to_string(), self.grid.time(k).to_string()];
            row.extend(s.iter().map(|z| z.re.to_string()));
            row.extend(s.iter().map(|z| z.im.to_string()));
            row.push(s.norm().to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn block_submatrix(clock: &ClockHamiltonian, idx: &std::ops::Range<usize>) -> CMatrix {
    clock
        .matrix
        .view((idx.start, idx.start), (idx.len(), idx.len()))
        .into_owned()
}

fn embed(block: &CVector, idx: &std::ops::Range<usize>, n: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v.rows_mut(idx.start, idx.len()).copy_from(block);
    v
}

/// Multiplies `v` by the phase that makes `<target|first slice>` real and
/// nonnegative.
fn fix_phase(v: &mut CVector, first: &CVector, target: &PureState) {
    let overlap = target.amplitudes().dotc(first);
    if overlap.norm() > ZERO_SLICE_TOL {
        *v *= overlap.conj() / c(overlap.norm());
    }
}

/// Physical ground state of a clock.
///
/// A clock with a single block has a one-dimensional null space and its
/// near-null vector is returned with slice 0 in phase with `psi0`. A clock
/// with jump penalties is block diagonal; each block supplies one null vector
/// and the blocks are joined by [`combine_degenerate`]. Disordered clocks no
/// longer have exact null vectors and use the lowest eigenvector per block.
pub fn ground_history(clock: &ClockHamiltonian) -> Result<HistoryState> {
    let blocks = clock.blocks();
    let n = clock.dim();
    if blocks.len() == 1 {
        let mut v = if clock.is_disordered() {
            linalg::lowest_eigenpair(&clock.matrix, linalg::EIG_TOL)?.1
        } else {
            linalg::near_null_vector(&clock.matrix, linalg::NULL_TOL)?.0
        };
        let first = slice_of(&v, &clock.grid, 0);
        fix_phase(&mut v, &first, &clock.psi0);
        return HistoryState::new(v, clock.grid);
    }
    let mut basis = Vec::with_capacity(blocks.len());
    for slices in &blocks {
        let idx = clock.block_range_indices(slices);
        let sub = block_submatrix(clock, &idx);
        let local = if clock.is_disordered() {
            linalg::lowest_eigenpair(&sub, linalg::EIG_TOL)?.1
        } else {
            linalg::near_null_vector(&sub, linalg::NULL_TOL)?.0
        };
        basis.push(embed(&local, &idx, n));
    }
    combine_degenerate(&basis, clock)
}

/// Joins a basis of a clock's degenerate ground space into one physical
/// history state.
///
/// For every block the basis is rotated to the combination with the largest
/// weight on that block, which must then vanish elsewhere. Each block is
/// scaled to weight `len / N` and phased so its first slice has nonnegative
/// overlap with the state that slice is pinned to (`psi0`, or the collapsed
/// state of the jump that opens the block).
pub fn combine_degenerate(basis: &[CVector], clock: &ClockHamiltonian) -> Result<HistoryState> {
    let blocks = clock.blocks();
    if basis.len() != blocks.len() {
        return Err(Error::RankMismatch {
            requested: blocks.len(),
            found: basis.len(),
        });
    }
    let n = clock.dim();
    if let Some(v) = basis.iter().find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let initial = clock.block_initial_states();
    let grid = clock.grid;
    let k = basis.len();
    let mut total = CVector::zeros(n);
    for (b, slices) in blocks.iter().enumerate() {
        let idx = clock.block_range_indices(slices);
        let gram = CMatrix::from_fn(k, k, |i, j| basis[i].rows(idx.start, idx.len()).dotc(&basis[j].rows(idx.start, idx.len())));
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.imax();
        let mut v = CVector::zeros(n);
        for (i, bv) in basis.iter().enumerate() {
            v += bv * eig.eigenvectors[(i, top)];
        }
        let inside = v.rows(idx.start, idx.len()).norm();
        let leak = (v.norm_squared() - inside * inside).max(0.0).sqrt() / v.norm();
        if leak > SUPPORT_LEAK_TOL {
            return Err(Error::SupportOverlap { leak });
        }
        let mut local: CVector = v.rows(idx.start, idx.len()).into_owned();
        let scale = (slices.len() as f64 * grid.slice_weight()).sqrt() / local.norm();
        local *= c(scale);
        let first: CVector = local.rows(0, grid.dim).into_owned();
        fix_phase(&mut local, &first, &initial[b]);
        total.rows_mut(idx.start, idx.len()).copy_from(&local);
    }
    HistoryState::new(total, grid)
}

/// Projective clock measurement: the normalized slice `k`.
pub fn measure_clock(eta: &HistoryState, slice: usize) -> Result<PureState> {
    if slice >= eta.grid.n_slices {
        return Err(Error::InvalidParams(format!(
            "slice {slice} outside 0..{}",
            eta.grid.n_slices
        )));
    }
    let s = eta.slice(slice);
    if s.norm() < ZERO_SLICE_TOL {
        return Err(Error::ZeroSlice { slice });
    }
    PureState::new(s)
}

/// Average of the measured slice states of an ensemble of history states.
pub fn ensemble_density_from_clocks(etas: &[HistoryState], slice: usize) -> Result<DensityMatrix> {
    let first = etas.first().ok_or(Error::EmptyEnsemble)?;
    if etas.iter().any(|e| e.grid != first.grid) {
        return Err(Error::InvalidParams("history states live on different grids".into()));
    }
    let states = etas
        .iter()
        .map(|e| measure_clock(e, slice))
        .collect::<Result<Vec<_>>>()?;
    density_from_states(states.iter())
}

/// Ensemble densities at every slice.
pub fn density_trace_from_clocks(etas: &[HistoryState]) -> Result<DensityTrace> {
    let grid = etas.first().ok_or(Error::EmptyEnsemble)?.grid;
    let rhos = (0..grid.n_slices)
        .map(|k| ensemble_density_from_clocks(etas, k))
        .collect::<Result<Vec<_>>>()?;
    DensityTrace::new((0..grid.n_slices).map(|k| grid.time(k)).collect(), rhos)
}

fn slice_expectations(eta0: &HistoryState, model: &LindbladModel) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if eta0.grid.dim != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: eta0.grid.dim,
        });
    }
    let n0 = eta0.slice_norm(0);
    if n0 < ZERO_SLICE_TOL {
        return Err(Error::ZeroSlice { slice: 0 });
    }
    let mut weights = Vec::with_capacity(eta0.grid.n_slices);
    let mut rates = Vec::with_capacity(eta0.grid.n_slices);
    for k in 0..eta0.grid.n_slices {
        let s = eta0.slice(k);
        let n2 = s.norm_squared();
        if n2 < ZERO_SLICE_TOL * ZERO_SLICE_TOL {
            return Err(Error::TimestepTooLarge { total: 1.0 });
        }
        weights.push(n2 / (n0 * n0));
        rates.push(
            (0..model.channels())
                .map(|m| (s.dotc(&(model.jump_product(m) * &s)).re / n2).max(0.0))
                .collect(),
        );
    }
    Ok((weights, rates))
}

/// Jump probabilities along the no-jump branch encoded by the ground state
/// of the undressed non-Hermitian clock.
///
/// The branch survival at slice `t` is the squared slice norm relative to
/// slice 0, and `dp_m(t) = dt <s_t|C_m^dag C_m|s_t> / <s_t|s_t>`. Only
/// `M * N` scalars are kept.
pub fn jump_table_from_history(eta0: &HistoryState, model: &LindbladModel) -> Result<JumpProbabilityTable> {
    let dt = eta0.grid.dt;
    let (survival, rates) = slice_expectations(eta0, model)?;
    let dp = rates
        .into_iter()
        .map(|row| row.into_iter().map(|r| dt * r).collect())
        .collect();
    JumpProbabilityTable::new(dp, survival)
}

/// Same table built with the first-order recursion
/// `dp_m(t + dt) = dt <C^dag C>_{t+dt} / (1 - sum_{t' <= t} dp(t'))`, where
/// the expectation is taken on the slice scaled relative to slice 0.
pub fn jump_table_recursive(eta0: &HistoryState, model: &LindbladModel) -> Result<JumpProbabilityTable> {
    let dt = eta0.grid.dt;
    let (weights, rates) = slice_expectations(eta0, model)?;
    let mut survival = Vec::with_capacity(weights.len());
    let mut dp = Vec::with_capacity(weights.len());
    let mut remaining = 1.0;
    for (w, row) in weights.iter().zip(rates) {
        if remaining <= 0.0 {
            return Err(Error::TimestepTooLarge { total: 1.0 });
        }
        let step: Vec<f64> = row.iter().map(|r| dt * r * w / remaining).collect();
        survival.push(remaining);
        remaining -= step.iter().sum::<f64>();
        dp.push(step);
    }
    JumpProbabilityTable::new(dp, survival)
}

/// History state with the trajectory's states as equally weighted slices.
pub fn history_from_trajectory(traj: &Trajectory) -> Result<HistoryState> {
    HistoryState::from_slices(&traj.states, traj.grid)
}
