//! State and model types shared by the trajectory, master-equation and clock
//! routes.
//!
//! Basis convention: index 0 is the atomic ground state `|0>`, index 1 the
//! excited state `|1>`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, frobenius, CMatrix, CVector, ONE, ZERO};


#[derive(Debug, Clone, PartialEq)]
pub struct PureState(CVector);

impl PureState {
    /// Normalizes `amplitudes`; fails on a zero or non-finite vector.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if !linalg::is_finite_vector(&amplitudes) {
            return Err(Error::InvalidParams("state has non-finite amplitudes".into()));
        }
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidParams("state has zero norm".into()));
        }
        Ok(PureState(amplitudes / c(norm)))
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        PureState(v)
    }

    /// `(|0> + |1>)/sqrt(2)`, the initial state used throughout the demos.
    pub fn equal_superposition() -> Self {
        let a = c(std::f64::consts::FRAC_1_SQRT_2);
        PureState(CVector::from_column_slice(&[a, a]))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    pub fn projector(&self) -> CMatrix {
        linalg::outer(&self.0, &self.0)
    }

    pub fn expectation(&self, op: &CMatrix) -> Complex64 {
        self.0.dotc(&(op * &self.0))
    }

    /// `|<self|other>|`, insensitive to global phase.
    pub fn overlap_abs(&self, other: &PureState) -> f64 {
        self.0.dotc(&other.0).norm()
    }

    /// Smallest `||self - e^{i phi} other||` over the global phase.
    pub fn phase_distance(&self, other: &PureState) -> f64 {
        let ov = other.0.dotc(&self.0);
        let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { ONE };
        (&self.0 - other.0.map(|z| z * phase)).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Checks Hermiticity (1e-9), unit trace (1e-8) and positivity (-1e-8).
    pub fn new(rho: CMatrix) -> Result<Self> {
        let d = Self::new_unchecked(rho);
        d.validate()?;
        Ok(d)
    }

    pub(crate) fn new_unchecked(rho: CMatrix) -> Self {
        DensityMatrix(rho)
    }

    pub fn pure(psi: &PureState) -> Self {
        DensityMatrix(psi.projector())
    }

    pub fn validate(&self) -> Result<()> {
        let rho = &self.0;
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch {
                expected: rho.nrows(),
                got: rho.ncols(),
            });
        }
        linalg::ensure_finite(rho, "density matrix")?;
        let herm = linalg::hermiticity_defect(rho);
        if herm > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "density matrix not Hermitian ({herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::InvalidParams(format!("density matrix trace {tr}")));
        }
        let min_eig = self.min_eigenvalue()?;
        if min_eig < -1e-8 {
            return Err(Error::InvalidParams(format!(
                "density matrix not positive (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let sym = (&self.0 + self.0.adjoint()).scale(0.5);
        Ok(linalg::hermitian_eig(&sym, linalg::EIG_TOL)?.eigenvalues[0].re)
    }

    pub fn population(&self, i: usize) -> f64 {
        self.0[(i, i)].re
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        frobenius(&(&self.0 - &other.0))
    }

    pub fn max_abs_difference(&self, other: &DensityMatrix) -> f64 {
        (&self.0 - &other.0)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Which operator the two-level model uses for its single jump channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JumpConvention {
    /// `sqrt(gamma) |0><1|`: emission collapses the atom to its ground state.
    #[default]
    Lowering,
    /// `sqrt(gamma) |0><0|`, kept for comparison only.
    GroundProjector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    pub omega: f64,
    pub gamma: f64,
}

impl TwoLevelParams {
    pub fn new(omega: f64, gamma: f64) -> Result<Self> {
        let p = TwoLevelParams { omega, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega.is_finite() || self.omega <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// System Hamiltonian plus jump operators.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    h_sys: CMatrix,
    jump_ops: Vec<CMatrix>,
    jump_products: Vec<CMatrix>,
    dissipator_half: CMatrix,
}

impl LindbladModel {
    pub fn new(h_sys: CMatrix, jump_ops: Vec<CMatrix>) -> Result<Self> {
        let d = h_sys.nrows();
        if h_sys.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: h_sys.ncols(),
            });
        }
        linalg::ensure_finite(&h_sys, "system Hamiltonian")?;
        let defect = linalg::hermiticity_defect(&h_sys);
        if defect > 1e-12 {
            return Err(Error::NonHermitianInput {
                defect,
                allowed: 1e-12,
            });
        }
        for op in &jump_ops {
            if op.nrows() != d || op.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: op.nrows().max(op.ncols()),
                });
            }
            linalg::ensure_finite(op, "jump operator")?;
        }
        let jump_products: Vec<CMatrix> = jump_ops.iter().map(|op| op.adjoint() * op).collect();
        let mut dissipator_half = CMatrix::zeros(d, d);
        for p in &jump_products {
            dissipator_half += p;
        }
        dissipator_half = dissipator_half.scale(0.5);
        Ok(LindbladModel {
            h_sys,
            jump_ops,
            jump_products,
            dissipator_half,
        })
    }

    pub fn dim(&self) -> usize {
        self.h_sys.nrows()
    }

    pub fn channels(&self) -> usize {
        self.jump_ops.len()
    }

    pub fn h_sys(&self) -> &CMatrix {
        &self.h_sys
    }

    pub fn jump_ops(&self) -> &[CMatrix] {
        &self.jump_ops
    }

    /// `C_m^dag C_m`
    pub fn jump_product(&self, m: usize) -> &CMatrix {
        &self.jump_products[m]
    }

    /// `D = 1/2 sum_m C_m^dag C_m`
    pub fn dissipator_half(&self) -> &CMatrix {
        &self.dissipator_half
    }

    /// First-order no-jump propagator `R = 1 - i H dt - D dt`.
    pub fn no_jump_propagator(&self, dt: f64) -> CMatrix {
        let d = self.dim();
        CMatrix::identity(d, d) - self.h_sys.map(|z| z * linalg::I * dt) - self.dissipator_half.scale(dt)
    }

    /// First-order expansion `1 + i H dt + D dt` of the inverse of `R`.
    pub fn no_jump_propagator_inverse_first_order(&self, dt: f64) -> CMatrix {
        let d = self.dim();
        CMatrix::identity(d, d) + self.h_sys.map(|z| z * linalg::I * dt) + self.dissipator_half.scale(dt)
    }

    pub fn is_closed(&self) -> bool {
        self.jump_ops.iter().all(|op| op.iter().all(|z| *z == ZERO))
    }
}

pub fn two_level_model(p: TwoLevelParams) -> Result<LindbladModel> {
    two_level_model_with(p, JumpConvention::Lowering)
}

pub fn two_level_model_with(p: TwoLevelParams, convention: JumpConvention) -> Result<LindbladModel> {
    p.validate()?;
    let mut h = CMatrix::zeros(2, 2);
    h[(1, 1)] = c(p.omega);
    let mut op = CMatrix::zeros(2, 2);
    let amp = c(p.gamma.sqrt());
    match convention {
        JumpConvention::Lowering => op[(0, 1)] = amp,
        JumpConvention::GroundProjector => op[(0, 0)] = amp,
    }
    LindbladModel::new(h, vec![op])
}

/// Pairwise sum keeps the reduction independent of how a parallel caller
/// chunked the work, up to rounding of a balanced tree.
fn pairwise_sum(mats: &[CMatrix]) -> CMatrix {
    match mats.len() {
        1 => mats[0].clone(),
        n => {
            let (a, b) = mats.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// `rho = (1/m) sum_i |psi_i><psi_i|`
pub fn density_from_states<'a, I>(states: I) -> Result<DensityMatrix>
where
    I: IntoIterator<Item = &'a PureState>,
{
    let projectors: Vec<CMatrix> = states.into_iter().map(|s| s.projector()).collect();
    let first = projectors.first().ok_or(Error::EmptyEnsemble)?;
    let d = first.nrows();
    if let Some(bad) = projectors.iter().find(|p| p.nrows() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.nrows(),
        });
    }
    let m = projectors.len() as f64;
    let sum = pairwise_sum(&projectors);
    let rho = sum.scale(1.0 / m);
    let rho = (&rho + rho.adjoint()).scale(0.5);
    let dm = DensityMatrix::new_unchecked(rho);
    dm.validate()?;
    Ok(dm)
}

/// Per-slice jump probabilities `dp[t][m] = dt <psi(t)|C_m^dag C_m|psi(t)>`
/// together with the no-jump survival probability of the current branch.
///
/// `survival[t]` is the squared norm the unnormalized no-jump state would have
/// at slice `t`, relative to the start of its branch (slice 0, or the slice a
/// jump landed on). The free-evolution dressing between `t` and `t + dt` is
/// `sqrt(survival[t] / survival[t+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpProbabilityTable {
    pub dp: Vec<Vec<f64>>,
    pub dp_total: Vec<f64>,
    pub survival: Vec<f64>,
}

impl JumpProbabilityTable {
    pub fn new(dp: Vec<Vec<f64>>, survival: Vec<f64>) -> Result<Self> {
        if dp.len() != survival.len() {
            return Err(Error::DimensionMismatch {
                expected: dp.len(),
                got: survival.len(),
            });
        }
        let dp_total: Vec<f64> = dp.iter().map(|row| row.iter().sum()).collect();
        for (row, &total) in dp.iter().zip(&dp_total) {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || total >= 1.0 {
                return Err(Error::TimestepTooLarge { total });
            }
        }
        if survival.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::TimestepTooLarge { total: 1.0 });
        }
        Ok(JumpProbabilityTable {
            dp,
            dp_total,
            survival,
        })
    }

    pub fn slices(&self) -> usize {
        self.dp.len()
    }

    pub fn channels(&self) -> usize {
        self.dp.first().map_or(0, |r| r.len())
    }

    /// Factor multiplying `R` on the free edge `t -> t + 1`.
    pub fn dressing(&self, t: usize) -> f64 {
        (self.survival[t] / self.survival[t + 1]).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_two_level() {
        let m = two_level_model(TwoLevelParams::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(m.h_sys()[(1, 1)], c(1.0));
        assert_eq!(m.h_sys()[(0, 0)], ZERO);
        assert!(m.is_closed());
    }

    #[test]
    fn emission_operator_algebra() {
        let m = two_level_model(TwoLevelParams::new(1.0, 0.2).unwrap()).unwrap();
        let cdc = m.jump_product(0);
        assert!((cdc[(1, 1)] - c(0.2)).norm() < 1e-15);
        assert_eq!(cdc[(0, 0)], ZERO);
        let d = m.dissipator_half();
        assert!((d[(1, 1)] - c(0.1)).norm() < 1e-15);
        let c_op = &m.jump_ops()[0];
        let independent = (c_op.adjoint() * c_op).scale(0.5);
        assert!(frobenius(&(d - independent)) < 1e-15);
    }

    #[test]
    fn negative_gamma_rejected() {
        assert!(matches!(
            TwoLevelParams::new(1.0, -1.0),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn pure_and_mixed_densities() {
        let g = PureState::basis(2, 0);
        let e = PureState::basis(2, 1);
        let rho = density_from_states([&g]).unwrap();
        assert_eq!(rho.population(0), 1.0);
        let rho = density_from_states([&g, &e]).unwrap();
        assert_eq!(rho.population(0), 0.5);
        assert_eq!(rho.population(1), 0.5);
        assert_eq!(rho.matrix()[(0, 1)], ZERO);
    }

    #[test]
    fn ensemble_errors() {
        let empty: Vec<PureState> = vec![];
        assert_eq!(density_from_states(&empty), Err(Error::EmptyEnsemble));
        let a = PureState::basis(2, 0);
        let b = PureState::basis(3, 0);
        assert!(matches!(
            density_from_states([&a, &b]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn phase_distance_ignores_global_phase() {
        let a = PureState::equal_superposition();
        let b = PureState::new(a.amplitudes().map(|z| z * Complex64::from_polar(1.0, 0.7))).unwrap();
        assert!(a.phase_distance(&b) < 1e-15);
    }

    fn arb_state(dim: usize) -> impl Strategy<Value = PureState> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
            .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
            .prop_map(|v| {
                PureState::new(CVector::from_iterator(
                    v.len(),
                    v.into_iter().map(|(a, b)| Complex64::new(a, b)),
                ))
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn ensemble_density_is_valid(states in prop::collection::vec(arb_state(3), 1..40)) {
            let rho = density_from_states(&states).unwrap();
            prop_assert!(rho.validate().is_ok());
            prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normalization_holds(s in arb_state(4)) {
            prop_assert!((s.amplitudes().norm() - 1.0).abs() < 1e-9);
        }
    }
}
