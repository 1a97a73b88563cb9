//! Deterministic master-equation reference: classical RK4 on the Lindblad
//! right-hand side and the closed-form damped two-level atom.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ClockGrid;
use crate::linalg::{self, c, CMatrix};
use crate::qcore::{DensityMatrix, LindbladModel, TwoLevelParams};

/// Density matrices on an increasing time grid.
#[derive(Debug, Clone)]
pub struct DensityTrace {
    pub grid: Vec<f64>,
    pub rhos: Vec<DensityMatrix>,
}

impl DensityTrace {
    pub fn new(grid: Vec<f64>, rhos: Vec<DensityMatrix>) -> Result<Self> {
        if grid.len() != rhos.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: rhos.len(),
            });
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("time grid must be strictly increasing".into()));
        }
        Ok(DensityTrace { grid, rhos })
    }

    pub fn len(&self) -> usize {
        self.rhos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhos.is_empty()
    }

    pub fn last(&self) -> &DensityMatrix {
        self.rhos.last().expect("nonempty trace")
    }

    /// `max_t ||rho_a(t) - rho_b(t)||_F`
    pub fn max_frobenius_distance(&self, other: &DensityTrace) -> f64 {
        self.rhos
            .iter()
            .zip(&other.rhos)
            .map(|(a, b)| a.frobenius_distance(b))
            .fold(0.0, f64::max)
    }

    /// Largest elementwise modulus difference over all slices.
    pub fn max_abs_difference(&self, other: &DensityTrace) -> f64 {
        self.rhos
            .iter()
            .zip(&other.rhos)
            .map(|(a, b)| a.max_abs_difference(b))
            .fold(0.0, f64::max)
    }

    /// Column names for a system of dimension `d`: the real diagonal, and
    /// real and imaginary parts of the upper triangle, row by row.
    pub fn csv_header(d: usize) -> String {
        let mut cols = vec!["t".to_string()];
        for i in 0..d {
            for j in i..d {
                if i == j {
                    cols.push(format!("re_rho{i}{j}"));
                } else {
                    cols.push(format!("re_rho{i}{j}"));
                    cols.push(format!("im_rho{i}{j}"));
                }
            }
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.rhos.first().map_or(2, |r| r.dim());
        writeln!(w, "{}", Self::csv_header(d))?;
        for (t, rho) in self.grid.iter().zip(&self.rhos) {
            let m = rho.matrix();
            let mut row = vec![t.to_string()];
            for i in 0..d {
                for j in i..d {
                    row.push(m[(i, j)].re.to_string());
                    if i != j {
                        row.push(m[(i, j)].im.to_string());
                    }
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `i[rho, H] - 1/2 sum (C^dag C rho + rho C^dag C) + sum C rho C^dag`
pub fn lindblad_rhs(rho: &DensityMatrix, model: &LindbladModel) -> Result<CMatrix> {
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: rho.dim(),
        });
    }
    Ok(rhs_matrix(rho.matrix(), model))
}

fn rhs_matrix(rho: &CMatrix, model: &LindbladModel) -> CMatrix {
    let mut out = linalg::commutator(rho, model.h_sys()).map(|z| z * linalg::I);
    out -= linalg::anticommutator(model.dissipator_half(), rho);
    for op in model.jump_ops() {
        out += op * rho * op.adjoint();
    }
    out
}

/// One classical RK4 step without any post-processing.
pub fn rk4_step(rho: &CMatrix, model: &LindbladModel, dt: f64) -> CMatrix {
    let h = c(dt);
    let k1 = rhs_matrix(rho, model);
    let k2 = rhs_matrix(&(rho + &k1 * (h * 0.5)), model);
    let k3 = rhs_matrix(&(rho + &k2 * (h * 0.5)), model);
    let k4 = rhs_matrix(&(rho + &k3 * h), model);
    rho + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * (h / 6.0)
}

fn tidy(rho: CMatrix) -> CMatrix {
    let herm = (&rho + rho.adjoint()).scale(0.5);
    let tr = herm.trace().re;
    herm.scale(1.0 / tr)
}

/// RK4 integration sampled at every grid point; each stored matrix is
/// re-Hermitized and trace-renormalized.
pub fn rk4_propagate(
    rho0: &DensityMatrix,
    model: &LindbladModel,
    t_total: f64,
    dt: f64,
) -> Result<DensityTrace> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: rho0.dim(),
        });
    }
    let grid = ClockGrid::new(t_total, dt, model.dim())?;
    let mut rhos = Vec::with_capacity(grid.n_slices);
    let mut rho = rho0.matrix().clone();
    rhos.push(rho0.clone());
    for _ in 1..grid.n_slices {
        rho = tidy(rk4_step(&rho, model, dt));
        rhos.push(DensityMatrix::new(rho.clone())?);
    }
    DensityTrace::new((0..grid.n_slices).map(|k| grid.time(k)).collect(), rhos)
}

/// Closed-form solution of the damped two-level atom.
pub fn analytic_two_level(rho0: &DensityMatrix, p: TwoLevelParams, t: f64) -> Result<DensityMatrix> {
    if rho0.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: rho0.dim(),
        });
    }
    p.validate()?;
    let m0 = rho0.matrix();
    let excited = m0[(1, 1)].re * (-p.gamma * t).exp();
    let coherence = m0[(0, 1)] * Complex64::new(-p.gamma / 2.0, p.omega).scale(t).exp();
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 0)] = c(m0[(0, 0)].re + (m0[(1, 1)].re - excited));
    m[(1, 1)] = c(excited);
    m[(0, 1)] = coherence;
    m[(1, 0)] = coherence.conj();
    DensityMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::qcore::{two_level_model, PureState};

    fn params(gamma: f64) -> TwoLevelParams {
        TwoLevelParams::new(1.0, gamma).unwrap()
    }

    fn superposition() -> DensityMatrix {
        DensityMatrix::pure(&PureState::equal_superposition())
    }

    #[test]
    fn ground_state_is_stationary() {
        let m = two_level_model(params(0.2)).unwrap();
        let rhs = lindblad_rhs(&DensityMatrix::pure(&PureState::basis(2, 0)), &m).unwrap();
        assert_eq!(frobenius(&rhs), 0.0);
    }

    #[test]
    fn excited_state_decays_into_ground() {
        let m = two_level_model(params(0.2)).unwrap();
        let rhs = lindblad_rhs(&DensityMatrix::pure(&PureState::basis(2, 1)), &m).unwrap();
        assert!((rhs[(0, 0)] - c(0.2)).norm() < 1e-15);
        assert!((rhs[(1, 1)] - c(-0.2)).norm() < 1e-15);
        assert!(rhs[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn closed_rhs_is_commutator() {
        let m = two_level_model(params(0.0)).unwrap();
        let rho = superposition();
        let rhs = lindblad_rhs(&rho, &m).unwrap();
        let expected = linalg::commutator(rho.matrix(), m.h_sys()).map(|z| z * linalg::I);
        assert!(frobenius(&(&rhs - expected)) < 1e-15);
        assert!(rhs.trace().norm() < 1e-15);
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let m = two_level_model(params(0.7)).unwrap();
        let rho = DensityMatrix::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(0.3), Complex64::new(0.1, 0.2), Complex64::new(0.1, -0.2), c(0.7)],
        ))
        .unwrap();
        let rhs = lindblad_rhs(&rho, &m).unwrap();
        assert!(rhs.trace().norm() < 1e-12);
        assert!(linalg::hermiticity_defect(&rhs) < 1e-12);
    }

    #[test]
    fn eigenstate_populations_constant() {
        let m = two_level_model(params(0.0)).unwrap();
        let tr = rk4_propagate(&DensityMatrix::pure(&PureState::basis(2, 1)), &m, 1.0, 0.01).unwrap();
        for rho in &tr.rhos {
            assert!((rho.population(1) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn analytic_limits() {
        let rho0 = superposition();
        let same = analytic_two_level(&rho0, params(0.2), 0.0).unwrap();
        assert_eq!(same, rho0);
        let later = analytic_two_level(&rho0, params(0.2), 1.0).unwrap();
        assert!((later.population(1) - 0.5 * (-0.2f64).exp()).abs() < 1e-15);
        assert!((later.population(1) - 0.40937).abs() < 1e-5);
        let closed = analytic_two_level(&rho0, params(0.0), 2.0).unwrap();
        assert!((closed.population(1) - 0.5).abs() < 1e-15);
        let expected = c(0.5) * Complex64::new(0.0, 2.0).exp();
        assert!((closed.matrix()[(0, 1)] - expected).norm() < 1e-15);
    }

    #[test]
    fn raw_rk4_step_preserves_trace() {
        let m = two_level_model(params(0.2)).unwrap();
        let mut rho = superposition().matrix().clone();
        for _ in 0..100 {
            let next = rk4_step(&rho, &m, 0.01);
            assert!((next.trace().re - rho.trace().re).abs() < 1e-9);
            rho = next;
        }
    }

    #[test]
    fn csv_header_generalizes() {
        assert_eq!(DensityTrace::csv_header(2), "t,re_rho00,re_rho01,im_rho01,re_rho11");
        assert_eq!(DensityTrace::csv_header(3).split(',').count(), 10);
    }
}
