//! Quantum-jump (Monte Carlo wave-function) propagation.
//!
//! Each step draws one uniform number for the jump/no-jump decision and, only
//! when a jump happens, one more for the channel. The clock samplers consume
//! the same stream in the same order, so a trajectory and a clock built from
//! the same `(seed, stream_id)` see identical decisions.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ClockGrid;
use crate::lindblad_ref::DensityTrace;
use crate::linalg::{c, CVector};
use crate::qcore::{density_from_states, DensityMatrix, JumpProbabilityTable, LindbladModel, PureState};

/// Above this total per-step jump probability the first-order scheme is
/// meaningless.
pub const MAX_STEP_PROBABILITY: f64 = 0.5;

/// Portable counter-based uniform stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            counter: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of uniforms drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform in `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        self.counter += 1;
        self.rng.random::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpEvent {
    /// Slice the collapsed state lives on.
    pub slice: usize,
    pub channel: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JumpRecord {
    pub events: Vec<JumpEvent>,
}

impl JumpRecord {
    pub fn single(slice: usize, channel: usize) -> Self {
        JumpRecord {
            events: vec![JumpEvent { slice, channel }],
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn channel_at(&self, slice: usize) -> Option<usize> {
        self.events.iter().find(|e| e.slice == slice).map(|e| e.channel)
    }

    pub fn validate(&self, n_slices: usize, channels: usize) -> Result<()> {
        let mut last = 0;
        for e in &self.events {
            if e.slice <= last || e.slice >= n_slices {
                return Err(Error::InvalidParams(format!(
                    "jump slices must be strictly increasing in [1, {}], got {}",
                    n_slices - 1,
                    e.slice
                )));
            }
            if e.channel >= channels {
                return Err(Error::InvalidParams(format!(
                    "jump channel {} out of range (M = {channels})",
                    e.channel
                )));
            }
            last = e.slice;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: ClockGrid,
    pub states: Vec<PureState>,
    pub jumps: JumpRecord,
    pub probs: JumpProbabilityTable,
}

impl Trajectory {
    pub fn final_state(&self) -> &PureState {
        self.states.last().expect("trajectory has at least two slices")
    }

    /// CSV with columns `slice,t,re_0..,im_0..,jumped,channel`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.dim;
        let mut header = vec!["slice".to_string(), "t".to_string()];
        header.extend((0..d).map(|i| format!("re_{i}")));
        header.extend((0..d).map(|i| format!("im_{i}")));
        header.push("jumped".into());
        header.push("channel".into());
        writeln!(w, "{}", header.join(","))?;
        for (k, s) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string(), self.grid.time(k).to_string()];
            row.extend(s.amplitudes().iter().map(|z| z.re.to_string()));
            row.extend(s.amplitudes().iter().map(|z| z.im.to_string()));
            match self.jumps.channel_at(k) {
                Some(m) => {
                    row.push("1".into());
                    row.push(m.to_string());
                }
                None => {
                    row.push("0".into());
                    row.push("-1".into());
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `dp_m = dt <psi|C_m^dag C_m|psi>` for every channel.
pub fn jump_probabilities(psi: &PureState, model: &LindbladModel, dt: f64) -> Result<Vec<f64>> {
    check_dims(psi, model)?;
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(format!("time step must be nonnegative, got {dt}")));
    }
    let dp: Vec<f64> = (0..model.channels())
        .map(|m| (dt * psi.expectation(model.jump_product(m)).re).max(0.0))
        .collect();
    let total: f64 = dp.iter().sum();
    if total > MAX_STEP_PROBABILITY {
        return Err(Error::TimestepTooLarge { total });
    }
    Ok(dp)
}

fn check_dims(psi: &PureState, model: &LindbladModel) -> Result<()> {
    if psi.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: psi.dim(),
        });
    }
    Ok(())
}

/// No-jump step `R psi / ||R psi||` with `R = 1 - i H dt - D dt`, returning the
/// new state and `||R psi||`.
pub(crate) fn free_step_with_norm(psi: &PureState, model: &LindbladModel, dt: f64) -> Result<(PureState, f64)> {
    jump_probabilities(psi, model, dt)?;
    let next: CVector = model.no_jump_propagator(dt) * psi.amplitudes();
    let norm = next.norm();
    Ok((PureState::new(next)?, norm))
}

/// Free non-Hermitian step, renormalized exactly.
pub fn free_step(psi: &PureState, model: &LindbladModel, dt: f64) -> Result<PureState> {
    free_step_with_norm(psi, model, dt).map(|(s, _)| s)
}

/// Collapse `C_m psi / sqrt(dp_m / dt)`.
pub fn jump_step(psi: &PureState, model: &LindbladModel, m: usize, _dt: f64) -> Result<PureState> {
    check_dims(psi, model)?;
    if m >= model.channels() {
        return Err(Error::InvalidParams(format!("no jump channel {m}")));
    }
    // dp_m / dt is the channel rate <C^dag C>; used directly so dt = 0 stays defined
    let rate = psi.expectation(model.jump_product(m)).re;
    if rate <= 0.0 {
        return Err(Error::ZeroJumpProbability { channel: m });
    }
    let jumped = &model.jump_ops()[m] * psi.amplitudes() / c(rate.sqrt());
    PureState::new(jumped)
}

enum Decision {
    Free,
    Jump(usize),
}

fn draw_decision(rng: &mut RngStream, dp: &[f64]) -> Decision {
    let total: f64 = dp.iter().sum();
    let u = rng.next_uniform();
    if u >= total {
        return Decision::Free;
    }
    let target = rng.next_uniform() * total;
    let mut acc = 0.0;
    for (m, &p) in dp.iter().enumerate() {
        acc += p;
        if target < acc {
            return Decision::Jump(m);
        }
    }
    // rounding at the top edge
    Decision::Jump(dp.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// Shared by the jump samplers: one draw per step, a second only on a jump.
pub(crate) fn sample_step(rng: &mut RngStream, dp: &[f64]) -> Option<usize> {
    match draw_decision(rng, dp) {
        Decision::Free => None,
        Decision::Jump(m) => Some(m),
    }
}

struct Recorder {
    states: Vec<PureState>,
    dp: Vec<Vec<f64>>,
    survival: Vec<f64>,
    events: Vec<JumpEvent>,
}

impl Recorder {
    fn new(psi0: &PureState, n: usize) -> Self {
        let mut states = Vec::with_capacity(n);
        states.push(psi0.clone());
        Recorder {
            states,
            dp: Vec::with_capacity(n),
            survival: vec![1.0],
            events: Vec::new(),
        }
    }

    fn step(&mut self, model: &LindbladModel, dt: f64, jump: Option<usize>) -> Result<()> {
        let psi = self.states.last().unwrap();
        let k = self.states.len() - 1;
        match jump {
            None => {
                let (next, norm) = free_step_with_norm(psi, model, dt)?;
                let s = self.survival[k] * norm * norm;
                self.states.push(next);
                self.survival.push(s);
            }
            Some(m) => {
                let next = jump_step(psi, model, m, dt)?;
                self.states.push(next);
                self.survival.push(1.0);
                self.events.push(JumpEvent {
                    slice: k + 1,
                    channel: m,
                });
            }
        }
        Ok(())
    }

    fn finish(mut self, model: &LindbladModel, grid: ClockGrid) -> Result<Trajectory> {
        let last = self.states.last().unwrap();
        self.dp.push(raw_probabilities(last, model, grid.dt));
        Ok(Trajectory {
            grid,
            probs: JumpProbabilityTable::new(self.dp, self.survival)?,
            jumps: JumpRecord { events: self.events },
            states: self.states,
        })
    }
}

fn raw_probabilities(psi: &PureState, model: &LindbladModel, dt: f64) -> Vec<f64> {
    (0..model.channels())
        .map(|m| (dt * psi.expectation(model.jump_product(m)).re).max(0.0))
        .collect()
}

/// Propagates one stochastic trajectory on the grid `0, dt, ..., t_total`.
pub fn propagate(
    psi0: &PureState,
    model: &LindbladModel,
    t_total: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    check_dims(psi0, model)?;
    let grid = ClockGrid::new(t_total, dt, model.dim())?;
    let mut rec = Recorder::new(psi0, grid.n_slices);
    for _ in 0..grid.n_slices - 1 {
        let dp = jump_probabilities(rec.states.last().unwrap(), model, dt)?;
        let jump = sample_step(rng, &dp);
        rec.dp.push(dp);
        rec.step(model, dt, jump)?;
    }
    rec.finish(model, grid)
}

/// Propagates with a prescribed jump record instead of random draws.
pub fn propagate_forced(
    psi0: &PureState,
    model: &LindbladModel,
    t_total: f64,
    dt: f64,
    record: &JumpRecord,
) -> Result<Trajectory> {
    check_dims(psi0, model)?;
    let grid = ClockGrid::new(t_total, dt, model.dim())?;
    record.validate(grid.n_slices, model.channels())?;
    let mut rec = Recorder::new(psi0, grid.n_slices);
    for k in 0..grid.n_slices - 1 {
        let dp = jump_probabilities(rec.states.last().unwrap(), model, dt)?;
        rec.dp.push(dp);
        rec.step(model, dt, record.channel_at(k + 1))?;
    }
    rec.finish(model, grid)
}

/// `m` trajectories on streams `0..m` of `seed`, in stream order.
pub fn propagate_ensemble(
    psi0: &PureState,
    model: &LindbladModel,
    t_total: f64,
    dt: f64,
    seed: u64,
    m: usize,
) -> Result<Vec<Trajectory>> {
    (0..m as u64)
        .into_par_iter()
        .map(|i| propagate(psi0, model, t_total, dt, &mut RngStream::new(seed, i)))
        .collect()
}

/// Endpoint of one trajectory without recording intermediate states. Draws
/// exactly what [`propagate`] draws.
pub fn propagate_final(
    psi0: &PureState,
    model: &LindbladModel,
    t_total: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<PureState> {
    check_dims(psi0, model)?;
    let grid = ClockGrid::new(t_total, dt, model.dim())?;
    let mut psi = psi0.clone();
    for _ in 0..grid.n_slices - 1 {
        let dp = jump_probabilities(&psi, model, dt)?;
        psi = match sample_step(rng, &dp) {
            None => free_step(&psi, model, dt)?,
            Some(m) => jump_step(&psi, model, m, dt)?,
        };
    }
    Ok(psi)
}

/// Ensemble density at one slice.
pub fn ensemble_density(trajs: &[Trajectory], slice: usize) -> Result<DensityMatrix> {
    let first = trajs.first().ok_or(Error::EmptyEnsemble)?;
    if trajs.iter().any(|t| t.states.len() != first.states.len()) {
        return Err(Error::InvalidParams("trajectories use different grids".into()));
    }
    if slice >= first.states.len() {
        return Err(Error::InvalidParams(format!("slice {slice} outside the grid")));
    }
    density_from_states(trajs.iter().map(|t| &t.states[slice]))
}

/// Ensemble densities at every slice.
pub fn density_trace(trajs: &[Trajectory]) -> Result<DensityTrace> {
    let first = trajs.first().ok_or(Error::EmptyEnsemble)?;
    let grid = first.grid;
    let rhos = (0..grid.n_slices)
        .map(|k| ensemble_density(trajs, k))
        .collect::<Result<Vec<_>>>()?;
    DensityTrace::new((0..grid.n_slices).map(|k| grid.time(k)).collect(), rhos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::qcore::{two_level_model, TwoLevelParams};

    fn model(gamma: f64) -> LindbladModel {
        two_level_model(TwoLevelParams::new(1.0, gamma).unwrap()).unwrap()
    }

    #[test]
    fn ground_state_cannot_emit() {
        let dp = jump_probabilities(&PureState::basis(2, 0), &model(0.2), 0.05).unwrap();
        assert_eq!(dp, vec![0.0]);
    }

    #[test]
    fn superposition_probability() {
        let dp = jump_probabilities(&PureState::equal_superposition(), &model(0.2), 0.05).unwrap();
        assert!((dp[0] - 0.2 * 0.05 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_system_never_jumps() {
        let dp = jump_probabilities(&PureState::basis(2, 1), &model(0.0), 0.05).unwrap();
        assert_eq!(dp, vec![0.0]);
    }

    #[test]
    fn oversized_step_rejected() {
        let r = jump_probabilities(&PureState::basis(2, 1), &model(20.0), 0.05);
        assert!(matches!(r, Err(Error::TimestepTooLarge { .. })));
    }

    #[test]
    fn eigenstate_free_step_is_phase_only() {
        let g = PureState::basis(2, 0);
        let next = free_step(&g, &model(0.0), 0.37).unwrap();
        assert!(next.phase_distance(&g) < 1e-15);
    }

    #[test]
    fn free_step_damps_excited_amplitude() {
        let next = free_step(&PureState::equal_superposition(), &model(0.2), 0.05).unwrap();
        let a = next.amplitudes()[0].norm_sqr();
        let b = next.amplitudes()[1].norm_sqr();
        assert!(b < a);
        // hand evaluation: |1 - i w dt - G dt/2|^2 relative to 1
        let ratio = (1.0 - 0.005f64).powi(2) + 0.05f64.powi(2);
        assert!((b / a - ratio).abs() < 1e-14);
        assert!((a + b - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_step_is_identity() {
        let s = PureState::equal_superposition();
        assert_eq!(free_step(&s, &model(0.2), 0.0).unwrap(), s);
    }

    #[test]
    fn jumps_collapse_to_ground() {
        let m = model(0.2);
        for psi in [PureState::equal_superposition(), PureState::basis(2, 1)] {
            let j = jump_step(&psi, &m, 0, 0.05).unwrap();
            assert!((j.amplitudes()[0] - ONE).norm() < 1e-12);
            assert!(j.amplitudes()[1].norm() < 1e-15);
        }
        assert_eq!(
            jump_step(&PureState::basis(2, 0), &m, 0, 0.05),
            Err(Error::ZeroJumpProbability { channel: 0 })
        );
    }

    #[test]
    fn rng_stream_is_reproducible() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut other = RngStream::new(7, 4);
        let xa: Vec<f64> = (0..5).map(|_| a.next_uniform()).collect();
        let xb: Vec<f64> = (0..5).map(|_| b.next_uniform()).collect();
        let xo: Vec<f64> = (0..5).map(|_| other.next_uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xo);
        assert_eq!(a.counter(), 5);
        assert!(xa.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn draw_count_contract() {
        let m = model(0.2);
        let mut rng = RngStream::new(11, 0);
        let traj = propagate(&PureState::equal_superposition(), &m, 1.0, 0.05, &mut rng).unwrap();
        assert_eq!(rng.counter(), 20 + traj.jumps.len() as u64);
    }

    #[test]
    fn closed_trajectory_has_no_jumps() {
        let m = model(0.0);
        let traj = propagate(&PureState::equal_superposition(), &m, 1.0, 0.05, &mut RngStream::new(1, 0)).unwrap();
        assert!(traj.jumps.is_empty());
        assert_eq!(traj.states.len(), 21);
        let mut psi = PureState::equal_superposition();
        for s in &traj.states[1..] {
            psi = free_step(&psi, &m, 0.05).unwrap();
            assert!(s.phase_distance(&psi) < 1e-15);
        }
    }

    #[test]
    fn at_most_one_emission() {
        let m = model(2.0);
        for i in 0..200 {
            let traj = propagate(&PureState::equal_superposition(), &m, 1.0, 0.05, &mut RngStream::new(5, i)).unwrap();
            assert!(traj.jumps.len() <= 1);
            if let Some(e) = traj.jumps.events.first() {
                for s in &traj.states[e.slice..] {
                    assert!(s.phase_distance(&PureState::basis(2, 0)) < 1e-12);
                }
            }
            for s in &traj.states {
                assert!((s.amplitudes().norm() - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn forced_record_validation() {
        let m = model(0.2);
        let psi = PureState::equal_superposition();
        assert!(propagate_forced(&psi, &m, 1.0, 0.05, &JumpRecord::single(0, 0)).is_err());
        assert!(propagate_forced(&psi, &m, 1.0, 0.05, &JumpRecord::single(21, 0)).is_err());
        assert!(propagate_forced(&psi, &m, 1.0, 0.05, &JumpRecord::single(3, 1)).is_err());
        let t = propagate_forced(&psi, &m, 1.0, 0.05, &JumpRecord::single(20, 0)).unwrap();
        assert!(t.states[20].phase_distance(&PureState::basis(2, 0)) < 1e-15);
    }

    #[test]
    fn csv_dump_shape() {
        let m = model(0.2);
        let t = propagate_forced(&PureState::equal_superposition(), &m, 0.1, 0.05, &JumpRecord::single(1, 0)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "slice,t,re_0,re_1,im_0,im_1,jumped,channel");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",0,-1"));
        assert!(lines[2].ends_with(",1,0"));
    }

    #[test]
    fn final_state_matches_full_propagation() {
        let m = model(0.2);
        let psi0 = PureState::equal_superposition();
        for stream in 0..16 {
            let full = propagate(&psi0, &m, 1.0, 0.05, &mut RngStream::new(4, stream)).unwrap();
            let mut rng = RngStream::new(4, stream);
            let end = propagate_final(&psi0, &m, 1.0, 0.05, &mut rng).unwrap();
            assert_eq!(&end, full.final_state());
            assert_eq!(rng.counter(), 20 + full.jumps.len() as u64);
        }
    }

    #[test]
    fn trace_covers_every_slice() {
        let m = model(0.2);
        let trajs = propagate_ensemble(&PureState::equal_superposition(), &m, 1.0, 0.05, 2, 5).unwrap();
        let tr = density_trace(&trajs).unwrap();
        assert_eq!(tr.len(), 21);
        assert_eq!(tr.rhos[3], ensemble_density(&trajs, 3).unwrap());
        assert!(matches!(density_trace(&[]), Err(Error::EmptyEnsemble)));
    }
}
