use crate::error::{Error, Result};
use crate::grid::ClockGrid;
use crate::linalg::{c, CMatrix};
use crate::qcore::{JumpProbabilityTable, LindbladModel, PureState};
use crate::sse::{self, JumpEvent, RngStream, Trajectory};

use super::build::{assemble, build_nonhermitian_clock, check_state, NoJumpHops};
use super::history::{measure_clock, HistoryState};
use super::{ClockHamiltonian, ClockOptions, ClockRecipe, SliceTerm};

/// Penalty `w * (1 - (dt / dp_m) C_m |psi><psi| C_m^dag)` pinning the slice
/// after a jump to the collapsed state, together with that state.
fn jump_term(
    psi: &PureState,
    model: &LindbladModel,
    channel: usize,
    dp_m: f64,
    dt: f64,
    weight: f64,
) -> Result<SliceTerm> {
    if dp_m <= 0.0 {
        return Err(Error::ZeroJumpProbability { channel });
    }
    let op = &model.jump_ops()[channel];
    let kicked = op * psi.amplitudes();
    let d = psi.dim();
    let rank_one = &kicked * kicked.adjoint() * c(dt / dp_m);
    let penalty = (CMatrix::identity(d, d) - rank_one).scale(weight);
    let target = PureState::new(kicked)?;
    Ok(SliceTerm::Jump {
        channel,
        target,
        penalty,
    })
}

fn check_grid(model: &LindbladModel, grid: &ClockGrid) -> Result<()> {
    if model.dim() != grid.dim {
        return Err(Error::DimensionMismatch {
            expected: grid.dim,
            got: model.dim(),
        });
    }
    Ok(())
}

/// Appends free terms for edges `from..N-1`, dressed along the no-jump
/// evolution that starts from `start` on slice `from`.
fn push_free_branch(
    terms: &mut Vec<SliceTerm>,
    start: &PureState,
    model: &LindbladModel,
    grid: &ClockGrid,
    hops: &NoJumpHops,
    from: usize,
) -> Result<()> {
    let mut psi = start.clone();
    let mut survival = 1.0;
    for _ in from..grid.n_slices - 1 {
        let (next, norm) = sse::free_step_with_norm(&psi, model, grid.dt)?;
        let s = survival * norm * norm;
        terms.push(hops.term((survival / s).sqrt()));
        survival = s;
        psi = next;
    }
    Ok(())
}

/// Single-jump clock with the jump prescribed.
///
/// Edges before the jump are dressed from `table`; the edge into
/// `event.slice` carries the jump penalty built on the no-jump state of
/// `eta0` one slice earlier; later edges follow free evolution of the
/// collapsed state with no further jumps.
pub fn forced_single_jump_clock(
    eta0: &HistoryState,
    table: &JumpProbabilityTable,
    model: &LindbladModel,
    grid: ClockGrid,
    event: JumpEvent,
    opts: &ClockOptions,
) -> Result<ClockHamiltonian> {
    check_grid(model, &grid)?;
    if eta0.grid != grid || table.slices() != grid.n_slices {
        return Err(Error::DimensionMismatch {
            expected: grid.n_slices,
            got: table.slices(),
        });
    }
    if event.slice == 0 || event.slice >= grid.n_slices || event.channel >= model.channels() {
        return Err(Error::InvalidParams(format!(
            "jump at slice {} channel {} does not fit the grid",
            event.slice, event.channel
        )));
    }
    if let Some(&total) = table.dp_total.iter().find(|&&p| p >= 1.0) {
        return Err(Error::TimestepTooLarge { total });
    }
    let psi0 = measure_clock(eta0, 0)?;
    let hops = NoJumpHops::new(model, grid.dt, opts.inverse)?;
    let s = event.slice;
    let mut terms: Vec<SliceTerm> = (0..s - 1).map(|k| hops.term(table.dressing(k))).collect();
    let before = measure_clock(eta0, s - 1)?;
    let jump = jump_term(
        &before,
        model,
        event.channel,
        table.dp[s - 1][event.channel],
        grid.dt,
        opts.penalty_weight,
    )?;
    let target = match &jump {
        SliceTerm::Jump { target, .. } => target.clone(),
        SliceTerm::Free { .. } => unreachable!(),
    };
    terms.push(jump);
    push_free_branch(&mut terms, &target, model, &grid, &hops, s)?;
    let matrix = assemble(&grid, &psi0, &terms, opts);
    Ok(ClockHamiltonian {
        matrix,
        grid,
        recipe: ClockRecipe::SingleJump(Some(event)),
        psi0,
        terms,
        options: *opts,
    })
}

/// Draws one single-jump clock.
///
/// Slices are walked with the trajectory draw order: one uniform per edge
/// against `table`, one more for the channel when a jump is drawn. Drawing
/// stops at the first jump. Without a jump the matrix is exactly the dressed
/// non-Hermitian clock with `psi0` taken from slice 0 of `eta0`.
pub fn sample_single_jump_clock(
    eta0: &HistoryState,
    table: &JumpProbabilityTable,
    model: &LindbladModel,
    grid: ClockGrid,
    rng: &mut RngStream,
    opts: &ClockOptions,
) -> Result<ClockHamiltonian> {
    check_grid(model, &grid)?;
    if let Some(&total) = table.dp_total.iter().find(|&&p| p >= 1.0) {
        return Err(Error::TimestepTooLarge { total });
    }
    if table.slices() != grid.n_slices {
        return Err(Error::DimensionMismatch {
            expected: grid.n_slices,
            got: table.slices(),
        });
    }
    for k in 0..grid.n_slices - 1 {
        if let Some(channel) = sse::sample_step(rng, &table.dp[k]) {
            let event = JumpEvent { slice: k + 1, channel };
            return forced_single_jump_clock(eta0, table, model, grid, event, opts);
        }
    }
    let psi0 = measure_clock(eta0, 0)?;
    let mut clock = build_nonhermitian_clock(model, grid, &psi0, Some(table), opts)?;
    clock.recipe = ClockRecipe::SingleJump(None);
    Ok(clock)
}

/// Clock whose local terms follow a recorded trajectory: dressed free hops
/// on free edges, jump penalties where the trajectory jumped.
pub fn clock_from_trajectory(traj: &Trajectory, model: &LindbladModel, opts: &ClockOptions) -> Result<ClockHamiltonian> {
    let grid = traj.grid;
    check_grid(model, &grid)?;
    traj.jumps.validate(grid.n_slices, model.channels())?;
    let hops = NoJumpHops::new(model, grid.dt, opts.inverse)?;
    let mut terms = Vec::with_capacity(grid.n_slices - 1);
    for k in 0..grid.n_slices - 1 {
        match traj.jumps.channel_at(k + 1) {
            Some(m) => terms.push(jump_term(
                &traj.states[k],
                model,
                m,
                traj.probs.dp[k][m],
                grid.dt,
                opts.penalty_weight,
            )?),
            None => terms.push(hops.term(traj.probs.dressing(k))),
        }
    }
    let psi0 = traj.states[0].clone();
    let matrix = assemble(&grid, &psi0, &terms, opts);
    Ok(ClockHamiltonian {
        matrix,
        grid,
        recipe: ClockRecipe::StochasticExact {
            jumps: traj.jumps.clone(),
        },
        psi0,
        terms,
        options: *opts,
    })
}

/// Propagates one trajectory from `rng` and builds the clock with the same
/// local decisions.
pub fn sample_exact_stochastic_clock(
    psi0: &PureState,
    model: &LindbladModel,
    grid: ClockGrid,
    rng: &mut RngStream,
    opts: &ClockOptions,
) -> Result<(ClockHamiltonian, Trajectory)> {
    check_grid(model, &grid)?;
    check_state(psi0, &grid)?;
    let traj = sse::propagate(psi0, model, grid.t_total, grid.dt, rng)?;
    let clock = clock_from_trajectory(&traj, model, opts)?;
    Ok((clock, traj))
}

/// The clock restricted to each block, embedded in the full space.
pub fn segment_hamiltonians(clock: &ClockHamiltonian) -> Vec<CMatrix> {
    let n = clock.dim();
    clock
        .blocks()
        .iter()
        .map(|slices| {
            let idx = clock.block_range_indices(slices);
            let mut m = CMatrix::zeros(n, n);
            m.view_mut((idx.start, idx.start), (idx.len(), idx.len()))
                .copy_from(&clock.matrix.view((idx.start, idx.start), (idx.len(), idx.len())));
            m
        })
        .collect()
}
