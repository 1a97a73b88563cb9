use crate::error::{Error, Result};
use crate::grid::ClockGrid;
use crate::linalg::{self, CMatrix};
use crate::qcore::{JumpProbabilityTable, LindbladModel, PureState};

use super::{ClockHamiltonian, ClockOptions, ClockRecipe, InverseMode, SliceTerm};

pub(crate) fn check_state(psi0: &PureState, grid: &ClockGrid) -> Result<()> {
    if psi0.dim() != grid.dim {
        return Err(Error::DimensionMismatch {
            expected: grid.dim,
            got: psi0.dim(),
        });
    }
    if (psi0.amplitudes().norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams("initial state is not normalized".into()));
    }
    Ok(())
}

fn check_options(opts: &ClockOptions) -> Result<()> {
    if !(opts.penalty_weight > 0.0 && opts.penalty_weight.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "penalty weight must be positive, got {}",
            opts.penalty_weight
        )));
    }
    Ok(())
}

/// `weight * (1 - |psi><psi|)`
pub(crate) fn complement_penalty(psi: &PureState, weight: f64) -> CMatrix {
    let d = psi.dim();
    (CMatrix::identity(d, d) - psi.projector()).scale(weight)
}

/// Hops `(f R, R^-1 / f)` for the non-Hermitian clock with dressing `f`.
pub(crate) struct NoJumpHops {
    r: CMatrix,
    r_inv: CMatrix,
}

impl NoJumpHops {
    pub(crate) fn new(model: &LindbladModel, dt: f64, mode: InverseMode) -> Result<Self> {
        let r = model.no_jump_propagator(dt);
        let r_inv = match mode {
            InverseMode::Exact => linalg::inverse(&r)?,
            InverseMode::FirstOrder => model.no_jump_propagator_inverse_first_order(dt),
        };
        Ok(NoJumpHops { r, r_inv })
    }

    pub(crate) fn term(&self, dressing: f64) -> SliceTerm {
        SliceTerm::Free {
            forward: self.r.map(|z| z * dressing),
            backward: self.r_inv.map(|z| z / dressing),
        }
    }
}

/// Sums the local terms plus the initial-condition penalty on slice 0.
pub(crate) fn assemble(grid: &ClockGrid, psi0: &PureState, terms: &[SliceTerm], opts: &ClockOptions) -> CMatrix {
    let d = grid.dim;
    let n = grid.full_dim();
    let mut m = CMatrix::zeros(n, n);
    let eye = CMatrix::identity(d, d);
    for (k, term) in terms.iter().enumerate() {
        let (a, b) = (k * d, (k + 1) * d);
        match term {
            SliceTerm::Free { forward, backward } => {
                {
                    let mut blk = m.view_mut((b, a), (d, d));
                    blk -= forward;
                }
                {
                    let mut blk = m.view_mut((a, b), (d, d));
                    blk -= backward;
                }
                {
                    let mut blk = m.view_mut((a, a), (d, d));
                    blk += &eye;
                }
                let mut blk = m.view_mut((b, b), (d, d));
                blk += &eye;
            }
            SliceTerm::Jump { penalty, .. } => {
                let mut blk = m.view_mut((b, b), (d, d));
                blk += penalty;
            }
        }
    }
    let mut blk = m.view_mut((0, 0), (d, d));
    blk += complement_penalty(psi0, opts.penalty_weight);
    m
}

/// Unitary clock with `U = exp(-i H dt)`.
pub fn build_unitary_clock(
    h_sys: &CMatrix,
    grid: ClockGrid,
    psi0: &PureState,
    opts: &ClockOptions,
) -> Result<ClockHamiltonian> {
    check_options(opts)?;
    check_state(psi0, &grid)?;
    if h_sys.nrows() != grid.dim || h_sys.ncols() != grid.dim {
        return Err(Error::DimensionMismatch {
            expected: grid.dim,
            got: h_sys.nrows(),
        });
    }
    let defect = linalg::hermiticity_defect(h_sys);
    if defect > 1e-12 {
        return Err(Error::NonHermitianInput {
            defect,
            allowed: 1e-12,
        });
    }
    let u = linalg::unitary_propagator(h_sys, grid.dt)?;
    let term = SliceTerm::Free {
        forward: u.clone(),
        backward: u.adjoint(),
    };
    let terms = vec![term; grid.n_slices - 1];
    let matrix = assemble(&grid, psi0, &terms, opts);
    Ok(ClockHamiltonian {
        matrix,
        grid,
        recipe: ClockRecipe::Unitary,
        psi0: psi0.clone(),
        terms,
        options: *opts,
    })
}

/// Clock for jump-free conditional evolution under `R = 1 - i H dt - D dt`.
///
/// Without `probs` the hops are the bare `R` and `R^-1`, and the null vector
/// carries the decaying branch norm. With `probs` each edge is dressed by
/// `sqrt(survival(t) / survival(t + dt))` so every slice has equal weight.
pub fn build_nonhermitian_clock(
    model: &LindbladModel,
    grid: ClockGrid,
    psi0: &PureState,
    probs: Option<&JumpProbabilityTable>,
    opts: &ClockOptions,
) -> Result<ClockHamiltonian> {
    check_options(opts)?;
    check_state(psi0, &grid)?;
    if model.dim() != grid.dim {
        return Err(Error::DimensionMismatch {
            expected: grid.dim,
            got: model.dim(),
        });
    }
    if let Some(table) = probs {
        if table.slices() != grid.n_slices {
            return Err(Error::DimensionMismatch {
                expected: grid.n_slices,
                got: table.slices(),
            });
        }
        if let Some(&total) = table.dp_total.iter().find(|&&p| p >= 1.0) {
            return Err(Error::TimestepTooLarge { total });
        }
    }
    let hops = NoJumpHops::new(model, grid.dt, opts.inverse)?;
    let terms: Vec<SliceTerm> = (0..grid.n_slices - 1)
        .map(|k| hops.term(probs.map_or(1.0, |t| t.dressing(k))))
        .collect();
    let matrix = assemble(&grid, psi0, &terms, opts);
    Ok(ClockHamiltonian {
        matrix,
        grid,
        recipe: ClockRecipe::NonHermitian {
            dressed: probs.is_some(),
        },
        psi0: psi0.clone(),
        terms,
        options: *opts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{ground_history, HistoryState};
    use crate::linalg::{c, frobenius, CVector, ONE, ZERO};
    use crate::qcore::{two_level_model, TwoLevelParams};
    use crate::sse;

    fn model(gamma: f64) -> LindbladModel {
        two_level_model(TwoLevelParams::new(1.0, gamma).unwrap()).unwrap()
    }

    /// History state assembled directly from repeated application of `step`.
    fn explicit_history(grid: &ClockGrid, psi0: &PureState, step: &CMatrix) -> CVector {
        let mut v = CVector::zeros(grid.full_dim());
        let mut psi = psi0.amplitudes().clone();
        for k in 0..grid.n_slices {
            v.rows_mut(k * grid.dim, grid.dim).copy_from(&psi);
            psi = step * psi;
        }
        let norm = v.norm();
        v / c(norm)
    }

    #[test]
    fn trivial_dynamics_two_slices() {
        let grid = ClockGrid::new(0.5, 0.5, 2).unwrap();
        let psi0 = PureState::equal_superposition();
        let clock = build_unitary_clock(&CMatrix::zeros(2, 2), grid, &psi0, &ClockOptions::default()).unwrap();
        let eta = ground_history(&clock).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for k in 0..2 {
            let slice = eta.slice(k);
            assert!((&slice - psi0.amplitudes().map(|z| z * s)).norm() < 1e-10);
        }
        assert!(clock.residual(&eta) < 1e-12);
    }

    #[test]
    fn unitary_clock_is_hermitian_and_encodes_u_powers() {
        let m = model(0.0);
        let grid = ClockGrid::new(1.0, 0.05, 2).unwrap();
        let psi0 = PureState::equal_superposition();
        let clock = build_unitary_clock(m.h_sys(), grid, &psi0, &ClockOptions::default()).unwrap();
        assert!(linalg::hermiticity_defect(&clock.matrix) < 1e-12);
        let u = linalg::unitary_propagator(m.h_sys(), 0.05).unwrap();
        let expected = explicit_history(&grid, &psi0, &u);
        assert!((&clock.matrix * &expected).norm() < 1e-12);
        let eta = ground_history(&clock).unwrap();
        let phase = expected.dotc(&eta.vector);
        assert!((&eta.vector - expected.map(|z| z * phase)).norm() < 1e-9);
    }

    #[test]
    fn unitary_ground_level_is_unique_zero() {
        let m = model(0.0);
        let grid = ClockGrid::new(1.0, 0.05, 2).unwrap();
        let clock = build_unitary_clock(m.h_sys(), grid, &PureState::equal_superposition(), &ClockOptions::default())
            .unwrap();
        let eig = linalg::hermitian_eig(&clock.matrix, linalg::EIG_TOL).unwrap();
        assert!(eig.eigenvalues[0].re.abs() < 1e-9);
        assert!(eig.eigenvalues[1].re > 1e-3);
    }

    #[test]
    fn non_hermitian_input_rejected() {
        let grid = ClockGrid::new(1.0, 0.5, 2).unwrap();
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 1)] = ONE;
        assert!(matches!(
            build_unitary_clock(&h, grid, &PureState::basis(2, 0), &ClockOptions::default()),
            Err(Error::NonHermitianInput { .. })
        ));
    }

    #[test]
    fn undressed_null_vector_is_r_power_history() {
        let m = model(0.2);
        let grid = ClockGrid::new(1.0, 0.05, 2).unwrap();
        let psi0 = PureState::equal_superposition();
        let clock = build_nonhermitian_clock(&m, grid, &psi0, None, &ClockOptions::default()).unwrap();
        let expected = explicit_history(&grid, &psi0, &m.no_jump_propagator(0.05));
        assert!((&clock.matrix * &expected).norm() < 1e-12);
    }

    #[test]
    fn closed_limit_matches_first_order_unitary_steps() {
        let m = model(0.0);
        let grid = ClockGrid::new(1.0, 0.05, 2).unwrap();
        let psi0 = PureState::equal_superposition();
        let clock = build_nonhermitian_clock(&m, grid, &psi0, None, &ClockOptions::default()).unwrap();
        let eta = ground_history(&clock).unwrap();
        let traj = sse::propagate(&psi0, &m, 1.0, 0.05, &mut sse::RngStream::new(0, 0)).unwrap();
        for (k, s) in traj.states.iter().enumerate() {
            let got = eta.normalized_slice(k).unwrap();
            assert!(got.phase_distance(s) < 1e-9);
        }
    }

    #[test]
    fn first_order_clock_matches_printed_form() {
        let m = model(0.2);
        let grid = ClockGrid::new(0.1, 0.05, 2).unwrap();
        let psi0 = PureState::equal_superposition();
        let clock = build_nonhermitian_clock(&m, grid, &psi0, None, &ClockOptions::first_order()).unwrap();
        // upper block (0, 1) is -(1 + i H dt + D dt)
        let blk = clock.matrix.view((0, 2), (2, 2)).into_owned();
        assert_eq!(blk[(0, 0)], c(-1.0));
        assert!((blk[(1, 1)] + num_complex::Complex64::new(1.0 + 0.005, 0.05)).norm() < 1e-15);
        assert_eq!(blk[(0, 1)], ZERO);
        let first = clock.matrix.view((0, 0), (2, 2)).into_owned();
        let weight = ClockOptions::default().penalty_weight;
        let expected = CMatrix::identity(2, 2) + complement_penalty(&psi0, weight);
        assert!(frobenius(&(first - expected)) < 1e-15);
    }

    #[test]
    fn dressed_slices_have_equal_weight() {
        let m = model(0.2);
        let grid = ClockGrid::new(1.0, 0.05, 2).unwrap();
        let psi0 = PureState::equal_superposition();
        let bare = build_nonhermitian_clock(&m, grid, &psi0, None, &ClockOptions::default()).unwrap();
        let eta0 = ground_history(&bare).unwrap();
        let table = crate::clock::jump_table_from_history(&eta0, &m).unwrap();
        let dressed = build_nonhermitian_clock(&m, grid, &psi0, Some(&table), &ClockOptions::default()).unwrap();
        let eta = ground_history(&dressed).unwrap();
        let w = grid.slice_weight().sqrt();
        for k in 0..grid.n_slices {
            assert!((eta.slice_norm(k) - w).abs() < 1e-6);
        }
        let physical: HistoryState = eta0.physical();
        assert!(dressed.residual(&physical) < 1e-9);
    }
}
