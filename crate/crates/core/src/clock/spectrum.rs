use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ClockGrid;
use crate::linalg::{self, CMatrix, CVector};
use crate::qcore::{LindbladModel, PureState};

use super::build::build_nonhermitian_clock;
use super::{ClockHamiltonian, ClockOptions, ClockRecipe, SliceTerm};

/// Upper edge of the free-hopping band.
pub const BAND_TOP: f64 = 4.0;

/// Eigenvalues above this count as penalized, out-of-band states.
pub const ABOVE_BAND_THRESHOLD: f64 = BAND_TOP + 1e-6;

/// Largest clock dimension `spectrum_report` accepts by default.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Relative Hermiticity defect below which the transformed clock is
/// diagonalized as Hermitian.
const SIMILARITY_DEFECT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumRoute {
    /// The clock itself is Hermitian.
    Hermitian,
    /// Slice-wise similarity to a Hermitian matrix.
    Similarity,
    /// Complex Schur form of the raw matrix.
    Schur,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Real parts, ascending.
    pub eigenvalues: Vec<f64>,
    pub max_imag: f64,
    /// Neighbouring eigenvalues closer than `DEGENERACY_TOL`, paired greedily.
    pub degenerate_pairs: Vec<(usize, usize)>,
    pub above_band: Vec<f64>,
    pub gap: f64,
    pub route: SpectrumRoute,
    pub max_residual: f64,
}

impl SpectrumReport {
    fn from_values(values: &[Complex64], route: SpectrumRoute, max_imag: f64, max_residual: f64) -> Self {
        let mut eigenvalues: Vec<f64> = values.iter().map(|z| z.re).collect();
        eigenvalues.sort_by(f64::total_cmp);
        let mut degenerate_pairs = Vec::new();
        let mut i = 0;
        while i + 1 < eigenvalues.len() {
            if eigenvalues[i + 1] - eigenvalues[i] < linalg::DEGENERACY_TOL {
                degenerate_pairs.push((i, i + 1));
                i += 2;
            } else {
                i += 1;
            }
        }
        let above_band = eigenvalues.iter().copied().filter(|&x| x > ABOVE_BAND_THRESHOLD).collect();
        let levels = linalg::group_degenerate(&eigenvalues, linalg::DEGENERACY_TOL);
        let gap = if levels.len() > 1 {
            (eigenvalues[levels[1][0]] - eigenvalues[levels[0][0]]).max(0.0)
        } else {
            0.0
        };
        SpectrumReport {
            eigenvalues,
            max_imag,
            degenerate_pairs,
            above_band,
            gap,
            route,
            max_residual,
        }
    }

    pub fn ground(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Number of eigenvalues within `tol` of the smallest one.
    pub fn ground_multiplicity(&self, tol: f64) -> usize {
        let g = self.ground();
        self.eigenvalues.iter().take_while(|&&x| x - g <= tol).count()
    }

    /// True when every eigenvalue belongs to a degenerate pair.
    pub fn fully_paired(&self) -> bool {
        2 * self.degenerate_pairs.len() == self.eigenvalues.len()
    }

    /// Largest spacing inside a pair.
    pub fn max_pair_splitting(&self) -> f64 {
        self.degenerate_pairs
            .iter()
            .map(|&(i, j)| self.eigenvalues[j] - self.eigenvalues[i])
            .fold(0.0, f64::max)
    }

    /// Columns `index,eigenvalue,pair_index,above_band`; `pair_index` is -1
    /// for unpaired levels.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut partner = vec![-1i64; self.eigenvalues.len()];
        for &(i, j) in &self.degenerate_pairs {
            partner[i] = j as i64;
            partner[j] = i as i64;
        }
        writeln!(w, "index,eigenvalue,pair_index,above_band")?;
        for (i, x) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{i},{x},{},{}", partner[i], u8::from(*x > ABOVE_BAND_THRESHOLD))?;
        }
        Ok(())
    }
}

/// Per-slice matrices `S_k` and `S_k^-1` that turn every free hop into the
/// identity: `S_{k+1} = F_k S_k` along a block, `S = 1` where a block starts.
///
/// When every backward hop is the exact inverse of its forward hop,
/// `S^-1 H S` is the path Laplacian plus penalties and therefore Hermitian.
pub fn hermitizing_transform(clock: &ClockHamiltonian) -> (Vec<CMatrix>, Vec<CMatrix>) {
    let d = clock.grid.dim;
    let eye = CMatrix::identity(d, d);
    let mut s = vec![eye.clone()];
    let mut s_inv = vec![eye.clone()];
    for term in &clock.terms {
        match term {
            SliceTerm::Free { forward, backward } => {
                let next = forward * s.last().unwrap();
                let next_inv = s_inv.last().unwrap() * backward;
                s.push(next);
                s_inv.push(next_inv);
            }
            SliceTerm::Jump { .. } => {
                s.push(eye.clone());
                s_inv.push(eye.clone());
            }
        }
    }
    (s, s_inv)
}

/// `A_{ij} -> L_i A_{ij} R_j` on the tridiagonal slice blocks of `a`.
fn transform_tridiagonal(a: &CMatrix, grid: &ClockGrid, left: &[CMatrix], right: &[CMatrix]) -> CMatrix {
    let d = grid.dim;
    let n = grid.n_slices;
    let mut out = CMatrix::zeros(a.nrows(), a.ncols());
    for i in 0..n {
        for j in i.saturating_sub(1)..(i + 2).min(n) {
            let blk = a.view((i * d, j * d), (d, d));
            let t = &left[i] * blk * &right[j];
            out.view_mut((i * d, j * d), (d, d)).copy_from(&t);
        }
    }
    out
}

/// Spectrum of a clock, capped at [`DEFAULT_DIM_CAP`].
pub fn spectrum_report(clock: &ClockHamiltonian) -> Result<SpectrumReport> {
    spectrum_report_capped(clock, DEFAULT_DIM_CAP)
}

/// Hermitian clocks are diagonalized directly. Otherwise the slice-wise
/// similarity of [`hermitizing_transform`] is tried; if the transformed
/// matrix is not Hermitian to `1e-8` relative, the complex Schur form of the
/// raw matrix is used. Imaginary parts are reported, never dropped.
pub fn spectrum_report_capped(clock: &ClockHamiltonian, cap: usize) -> Result<SpectrumReport> {
    let n = clock.dim();
    if n > cap {
        return Err(Error::InvalidParams(format!("clock dimension {n} exceeds the cap {cap}")));
    }
    let a = &clock.matrix;
    let scale = linalg::frobenius(a).max(1.0);
    if linalg::hermiticity_defect(a) <= 1e-12 * scale {
        let eig = linalg::hermitian_eig(a, linalg::EIG_TOL)?;
        let imag = (0..n)
            .map(|j| {
                let v = eig.vectors.column(j);
                v.dotc(&(a * v)).im.abs()
            })
            .fold(0.0, f64::max);
        return Ok(SpectrumReport::from_values(
            &eig.eigenvalues,
            SpectrumRoute::Hermitian,
            imag,
            eig.max_residual(),
        ));
    }
    let (s, s_inv) = hermitizing_transform(clock);
    let h = transform_tridiagonal(a, &clock.grid, &s_inv, &s);
    if linalg::hermiticity_defect(&h) <= SIMILARITY_DEFECT_TOL * scale {
        let sym = (&h + h.adjoint()).scale(0.5);
        let eig = linalg::hermitian_eig(&sym, linalg::EIG_TOL)?;
        let mut max_imag: f64 = 0.0;
        let mut max_res: f64 = 0.0;
        for j in 0..n {
            let v: CVector = eig.vectors.column(j).into_owned();
            let hv = &h * &v;
            let rayleigh = v.dotc(&hv);
            max_imag = max_imag.max(rayleigh.im.abs());
            max_res = max_res.max((hv - &v * eig.eigenvalues[j]).norm());
        }
        return Ok(SpectrumReport::from_values(
            &eig.eigenvalues,
            SpectrumRoute::Similarity,
            max_imag,
            max_res,
        ));
    }
    let values = linalg::general_eigenvalues(a)?;
    let max_imag = values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(SpectrumReport::from_values(&values, SpectrumRoute::Schur, max_imag, 0.0))
}

fn require_undressed(clock: &ClockHamiltonian) -> Result<()> {
    match clock.recipe {
        ClockRecipe::NonHermitian { dressed: false } => Ok(()),
        ref other => Err(Error::RecipeMismatch {
            expected: "NonHermitian",
            got: other.name(),
        }),
    }
}

/// `O H O^-1` with `O|t> = (1 + t D)|t>`, `D = 1/2 sum C^dag C`.
///
/// The inverse of each `1 + t D` is taken exactly, so the result is a true
/// similarity of the clock; it is Hermitian up to `O(dt^2)` per hop.
pub fn similarity_transform(clock: &ClockHamiltonian, model: &LindbladModel) -> Result<CMatrix> {
    require_undressed(clock)?;
    if model.dim() != clock.grid.dim {
        return Err(Error::DimensionMismatch {
            expected: clock.grid.dim,
            got: model.dim(),
        });
    }
    let d = clock.grid.dim;
    let eye = CMatrix::identity(d, d);
    let mut o = Vec::with_capacity(clock.grid.n_slices);
    let mut o_inv = Vec::with_capacity(clock.grid.n_slices);
    for k in 0..clock.grid.n_slices {
        let ok = &eye + model.dissipator_half().scale(clock.grid.time(k));
        o_inv.push(linalg::inverse(&ok)?);
        o.push(ok);
    }
    Ok(transform_tridiagonal(&clock.matrix, &clock.grid, &o, &o_inv))
}

/// `(||[H, H^dag]||_F, ||P [H, H^dag] P||_F)` with `P = |psi0><psi0| (x) 1`.
pub fn normality_residual(clock: &ClockHamiltonian, psi0: &PureState) -> Result<(f64, f64)> {
    if !matches!(clock.recipe, ClockRecipe::NonHermitian { .. }) {
        return Err(Error::RecipeMismatch {
            expected: "NonHermitian",
            got: clock.recipe.name(),
        });
    }
    if psi0.dim() != clock.grid.dim {
        return Err(Error::DimensionMismatch {
            expected: clock.grid.dim,
            got: psi0.dim(),
        });
    }
    let h = &clock.matrix;
    let comm = linalg::commutator(h, &h.adjoint());
    let p = linalg::kron(
        &CMatrix::identity(clock.grid.n_slices, clock.grid.n_slices),
        &psi0.projector(),
    );
    let projected = &p * &comm * &p;
    Ok((linalg::frobenius(&comm), linalg::frobenius(&projected)))
}

/// Ground gap of the undressed non-Hermitian clock for each runtime.
pub fn gap_scan(
    model: &LindbladModel,
    psi0: &PureState,
    t_values: &[f64],
    dt: f64,
    opts: &ClockOptions,
) -> Result<Vec<(f64, f64)>> {
    t_values
        .iter()
        .map(|&t| {
            let grid = ClockGrid::new(t, dt, model.dim())?;
            let clock = build_nonhermitian_clock(model, grid, psi0, None, opts)?;
            Ok((t, spectrum_report(&clock)?.gap))
        })
        .collect()
}

/// Least-squares fit of `y = a x^p` on log-log axes, returning `(p, a)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidParams(
            "power-law fit needs at least two positive points".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("power-law fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, (my - slope * mx).exp()))
}
