use crate::error::{Error, Result};
use crate::linalg::c;
use crate::sse::RngStream;

use super::{ClockHamiltonian, ClockRecipe};

/// Stream id reserved for disorder draws, disjoint from trajectory streams.
pub const DISORDER_STREAM: u64 = u64::MAX;

/// Static diagonal disorder with entries uniform in `[0, delta_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisorderSpec {
    pub delta_max: f64,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn new(delta_max: f64, seed: u64) -> Result<Self> {
        if !(delta_max >= 0.0 && delta_max.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "disorder strength must be finite and nonnegative, got {delta_max}"
            )));
        }
        Ok(DisorderSpec { delta_max, seed })
    }

    /// The `n` diagonal entries drawn for this seed.
    pub fn diagonal(&self, n: usize) -> Vec<f64> {
        let mut rng = RngStream::new(self.seed, DISORDER_STREAM);
        (0..n).map(|_| self.delta_max * rng.next_uniform()).collect()
    }
}

/// Adds the drawn diagonal to the clock. Local terms are kept, so block
/// structure and initial states still describe the undisordered clock.
pub fn add_disorder(clock: &ClockHamiltonian, spec: DisorderSpec) -> ClockHamiltonian {
    let mut out = clock.clone();
    for (i, x) in spec.diagonal(clock.dim()).into_iter().enumerate() {
        out.matrix[(i, i)] += c(x);
    }
    out.recipe = ClockRecipe::Disordered {
        base: Box::new(clock.recipe.clone()),
        seed: spec.seed,
        delta_max: spec.delta_max,
    };
    out
}
