use crate::error::{Error, Result};

/// Uniform clock grid `t = 0, dt, ..., t_total` over a system of dimension
/// `dim`. Global clock-space index is `slice * dim + system_index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockGrid {
    pub t_total: f64,
    pub dt: f64,
    pub n_slices: usize,
    pub dim: usize,
}

impl ClockGrid {
    pub fn new(t_total: f64, dt: f64, dim: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && t_total.is_finite() && t_total > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need positive runtime and step, got T = {t_total}, dt = {dt}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParams("system dimension must be positive".into()));
        }
        let steps = (t_total / dt).round();
        if steps < 1.0 || (t_total - steps * dt).abs() > 1e-12 * t_total.max(1.0) {
            return Err(Error::GridMisaligned { t_total, dt });
        }
        Ok(ClockGrid {
            t_total,
            dt,
            n_slices: steps as usize + 1,
            dim,
        })
    }

    pub fn time(&self, slice: usize) -> f64 {
        slice as f64 * self.dt
    }

    /// Dimension of system (x) clock space.
    pub fn full_dim(&self) -> usize {
        self.n_slices * self.dim
    }

    pub fn index(&self, slice: usize, component: usize) -> usize {
        slice * self.dim + component
    }

    /// `dt / (T + dt)`, the weight of every slice in a history state.
    pub fn slice_weight(&self) -> f64 {
        1.0 / self.n_slices as f64
    }
}
