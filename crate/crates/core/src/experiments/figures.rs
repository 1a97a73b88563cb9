use std::io::Write;

use rayon::prelude::*;

use crate::clock::{
    add_disorder, build_nonhermitian_clock, fit_power_law, forced_single_jump_clock, gap_scan as scan_gaps,
    ground_history, jump_table_from_history, measure_clock, sample_exact_stochastic_clock, sample_single_jump_clock,
    spectrum_report, ClockHamiltonian, ClockOptions, DisorderSpec, HistoryState, JumpProbabilityTable,
    SpectrumReport, density_trace_from_clocks,
};
use crate::error::Result;
use crate::grid::ClockGrid;
use crate::lindblad_ref::{analytic_two_level, rk4_propagate, DensityTrace};
use crate::qcore::{two_level_model, two_level_model_with, DensityMatrix, JumpConvention, LindbladModel, PureState, TwoLevelParams};
use crate::sse::{self, JumpEvent, JumpRecord, RngStream};

use super::{Output, RunConfig};

/// Runtime used for the convergence reference check of the RK4 integrator.
const RK4_CHECK_DT: f64 = 1e-3;

/// Target of the fig2 penalty root find.
const FIG2_TARGET: f64 = 7.3;

struct Setup {
    params: TwoLevelParams,
    model: LindbladModel,
    psi0: PureState,
    opts: ClockOptions,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let params = cfg.params()?;
    Ok(Setup {
        params,
        model: two_level_model(params)?,
        psi0: cfg.initial_state()?,
        opts: ClockOptions::default().with_penalty(cfg.penalty_weight),
    })
}

/// Undressed clock, its ground state and the jump table read from it.
fn no_jump_history(s: &Setup, grid: ClockGrid) -> Result<(ClockHamiltonian, HistoryState, JumpProbabilityTable)> {
    let clock = build_nonhermitian_clock(&s.model, grid, &s.psi0, None, &s.opts)?;
    let eta0 = ground_history(&clock)?;
    let table = jump_table_from_history(&eta0, &s.model)?;
    Ok((clock, eta0, table))
}

fn write_populations<W: Write>(w: &mut W, rows: &[(usize, f64, usize, [f64; 4])]) -> Result<()> {
    writeln!(w, "slice,t,block,ground_pop,excited_pop,re_coherence,im_coherence")?;
    for (k, t, b, v) in rows {
        writeln!(w, "{k},{t},{b},{},{},{},{}", v[0], v[1], v[2], v[3])?;
    }
    Ok(())
}

/// `(|a|^2, |b|^2, Re a b*, Im a b*)` of a two-component vector.
fn populations(a: num_complex::Complex64, b: num_complex::Complex64) -> [f64; 4] {
    let coh = a * b.conj();
    [a.norm_sqr(), b.norm_sqr(), coh.re, coh.im]
}

fn max_phase_distance(eta: &HistoryState, states: &[PureState]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (k, s) in states.iter().enumerate() {
        worst = worst.max(measure_clock(eta, k)?.phase_distance(s));
    }
    Ok(worst)
}

fn spectrum_metrics(out: &mut Output, r: &SpectrumReport) {
    out.metric("ground_eigenvalue", r.ground());
    out.metric("ground_multiplicity", r.ground_multiplicity(1e-8) as f64);
    out.metric("max_imag", r.max_imag);
    out.metric("above_band_count", r.above_band.len() as f64);
    out.metric("above_band_value", r.above_band.first().copied().unwrap_or(f64::NAN));
    out.metric("gap", r.gap);
}

/// Ground state of the no-jump clock: populations and coherence of the
/// unnormalized branch, relative to slice 0.
pub(crate) fn fig1(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let s = setup(cfg)?;
    let grid = cfg.grid()?;
    let (clock, eta0, _) = no_jump_history(&s, grid)?;
    let n0 = eta0.slice_norm(0);
    let rows: Vec<_> = (0..grid.n_slices)
        .map(|k| {
            let v = eta0.slice(k) / num_complex::Complex64::new(n0, 0.0);
            (k, grid.time(k), 0, populations(v[0], v[1]))
        })
        .collect();
    out.csv("fig1_populations.csv", |w| write_populations(w, &rows))?;
    out.csv("fig1_history.csv", |w| eta0.write_csv(w))?;
    let traj = sse::propagate_forced(&s.psi0, &s.model, cfg.t_total, cfg.dt, &JumpRecord::default())?;
    let first = rows[0].3;
    let drift = |i: usize| rows.iter().map(|r| (r.3[i] - first[i]).abs()).fold(0.0, f64::max);
    out.metric("null_residual", clock.residual(&eta0));
    out.metric("max_phase_distance_vs_sse", max_phase_distance(&eta0, &traj.states)?);
    out.metric("ground_pop_drift", drift(0));
    out.metric("excited_pop_drift", drift(1));
    out.metric("excited_pop_final", rows.last().unwrap().3[1]);
    Ok(())
}

fn top_eigenvalue(s: &Setup, grid: ClockGrid, weight: f64) -> Result<f64> {
    let opts = s.opts.with_penalty(weight);
    let clock = build_nonhermitian_clock(&s.model, grid, &s.psi0, None, &opts)?;
    Ok(*spectrum_report(&clock)?.eigenvalues.last().unwrap())
}

/// Spectrum of the no-jump clock, a sweep of the penalty weight and the
/// weight that puts the penalized level at 7.3.
pub(crate) fn fig2(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let s = setup(cfg)?;
    let grid = cfg.grid()?;
    let clock = build_nonhermitian_clock(&s.model, grid, &s.psi0, None, &s.opts)?;
    let report = spectrum_report(&clock)?;
    out.csv("fig2_spectrum.csv", |w| report.write_csv(w))?;
    spectrum_metrics(out, &report);
    out.metric(
        "min_eigenvalue",
        report.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min),
    );
    let weights: Vec<f64> = (2..=20).map(|i| 0.5 * i as f64).collect();
    let tops = weights
        .iter()
        .map(|&w| top_eigenvalue(&s, grid, w))
        .collect::<Result<Vec<_>>>()?;
    out.csv("fig2_penalty_sweep.csv", |w| {
        writeln!(w, "penalty_weight,top_eigenvalue,above_band")?;
        for (pw, top) in weights.iter().zip(&tops) {
            writeln!(w, "{pw},{top},{}", u8::from(*top > crate::clock::ABOVE_BAND_THRESHOLD))?;
        }
        Ok(())
    })?;
    let (mut lo, mut hi) = (2.5, 20.0);
    if top_eigenvalue(&s, grid, lo)? < FIG2_TARGET && top_eigenvalue(&s, grid, hi)? > FIG2_TARGET {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if top_eigenvalue(&s, grid, mid)? < FIG2_TARGET {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.metric("penalty_for_7_3", 0.5 * (lo + hi));
    } else {
        out.metric("penalty_for_7_3", f64::NAN);
    }
    Ok(())
}

fn jump_event(cfg: &RunConfig, grid: &ClockGrid) -> JumpEvent {
    let slice = if cfg.jump_slice == 0 {
        grid.n_slices / 2
    } else {
        cfg.jump_slice
    };
    JumpEvent { slice, channel: 0 }
}

fn forced_clock(cfg: &RunConfig) -> Result<(Setup, ClockGrid, JumpEvent, ClockHamiltonian)> {
    let s = setup(cfg)?;
    let grid = cfg.grid()?;
    let (_, eta0, table) = no_jump_history(&s, grid)?;
    let event = jump_event(cfg, &grid);
    let clock = forced_single_jump_clock(&eta0, &table, &s.model, grid, event, &s.opts)?;
    Ok((s, grid, event, clock))
}

/// Ground pair of the clock with one forced emission.
pub(crate) fn fig3(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let (s, grid, event, clock) = forced_clock(cfg)?;
    let eta = ground_history(&clock)?;
    let rows = (0..grid.n_slices)
        .map(|k| {
            let psi = measure_clock(&eta, k)?;
            let a = psi.amplitudes();
            Ok((k, grid.time(k), usize::from(k >= event.slice), populations(a[0], a[1])))
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv("fig3_ground_pair.csv", |w| write_populations(w, &rows))?;
    out.csv("fig3_history.csv", |w| eta.write_csv(w))?;
    let traj = sse::propagate_forced(
        &s.psi0,
        &s.model,
        cfg.t_total,
        cfg.dt,
        &JumpRecord::single(event.slice, event.channel),
    )?;
    let w = grid.slice_weight().sqrt();
    let weight_dev = (0..grid.n_slices)
        .map(|k| (eta.slice_norm(k) - w).abs())
        .fold(0.0, f64::max);
    out.metric("jump_slice", event.slice as f64);
    out.metric("null_residual", clock.residual(&eta));
    out.metric("max_phase_distance_vs_sse", max_phase_distance(&eta, &traj.states)?);
    out.metric("slice_weight_deviation", weight_dev);
    Ok(())
}

/// Spectrum of the forced single-jump clock.
pub(crate) fn fig4(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let (_, _, event, clock) = forced_clock(cfg)?;
    let report = spectrum_report(&clock)?;
    out.csv("fig4_spectrum.csv", |w| report.write_csv(w))?;
    out.metric("jump_slice", event.slice as f64);
    spectrum_metrics(out, &report);
    out.metric("fully_paired", f64::from(u8::from(report.fully_paired())));
    out.metric("max_pair_splitting", report.max_pair_splitting());
    Ok(())
}

/// Exact stochastic clocks on streams `0..m`, each with its trajectory.
fn stochastic_ensemble(
    s: &Setup,
    grid: ClockGrid,
    seed: u64,
    m: usize,
) -> Result<Vec<(ClockHamiltonian, sse::Trajectory)>> {
    (0..m as u64)
        .into_par_iter()
        .map(|i| sample_exact_stochastic_clock(&s.psi0, &s.model, grid, &mut RngStream::new(seed, i), &s.opts))
        .collect()
}

fn analytic_trace(s: &Setup, grid: &ClockGrid) -> Result<DensityTrace> {
    let rho0 = DensityMatrix::pure(&s.psi0);
    let times: Vec<f64> = (0..grid.n_slices).map(|k| grid.time(k)).collect();
    let rhos = times
        .iter()
        .map(|&t| analytic_two_level(&rho0, s.params, t))
        .collect::<Result<Vec<_>>>()?;
    DensityTrace::new(times, rhos)
}

/// Clock-ensemble density against the trajectory ensemble with the same
/// seeds, plus the single-jump sampler and the closed form.
pub(crate) fn fig5(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let s = setup(cfg)?;
    let grid = cfg.grid()?;
    let m = cfg.m_trajectories;
    let pairs = stochastic_ensemble(&s, grid, cfg.seed, m)?;
    let etas = pairs
        .par_iter()
        .map(|(clock, _)| ground_history(clock))
        .collect::<Result<Vec<_>>>()?;
    let trajs: Vec<sse::Trajectory> = pairs.into_iter().map(|(_, t)| t).collect();
    let clock_trace = density_trace_from_clocks(&etas)?;
    let sse_trace = sse::density_trace(&trajs)?;

    let (_, eta0, table) = no_jump_history(&s, grid)?;
    let single = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let clock =
                sample_single_jump_clock(&eta0, &table, &s.model, grid, &mut RngStream::new(cfg.seed, i), &s.opts)?;
            ground_history(&clock)
        })
        .collect::<Result<Vec<_>>>()?;
    let single_trace = density_trace_from_clocks(&single)?;
    let exact = analytic_trace(&s, &grid)?;

    out.csv("fig5_clock_density.csv", |w| clock_trace.write_csv(w))?;
    out.csv("fig5_sse_density.csv", |w| sse_trace.write_csv(w))?;
    out.csv("fig5_single_jump_density.csv", |w| single_trace.write_csv(w))?;
    out.csv("fig5_lindblad.csv", |w| exact.write_csv(w))?;
    out.metric("trajectories", m as f64);
    out.metric("jumps_total", trajs.iter().map(|t| t.jumps.len()).sum::<usize>() as f64);
    out.metric("max_abs_deviation", clock_trace.max_abs_difference(&sse_trace));
    out.metric("single_jump_max_abs_deviation", single_trace.max_abs_difference(&sse_trace));
    out.metric("max_frobenius_vs_lindblad", clock_trace.max_frobenius_distance(&exact));
    Ok(())
}

/// Deviation of a disordered clock ensemble from its trajectory ensemble,
/// `max_t ||rho_clock(t) - rho_sse(t)||_F`, with both traces.
pub fn disorder_deviation(
    cfg: &RunConfig,
    t_total: f64,
    delta_max: f64,
) -> Result<(f64, DensityTrace, DensityTrace)> {
    let s = setup(cfg)?;
    let grid = ClockGrid::new(t_total, cfg.dt, 2)?;
    let pairs = stochastic_ensemble(&s, grid, cfg.seed, cfg.m_trajectories)?;
    let etas = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (clock, _))| {
            let spec = DisorderSpec::new(delta_max, cfg.seed.wrapping_add(i as u64))?;
            ground_history(&add_disorder(clock, spec))
        })
        .collect::<Result<Vec<_>>>()?;
    let trajs: Vec<sse::Trajectory> = pairs.into_iter().map(|(_, t)| t).collect();
    let clock_trace = density_trace_from_clocks(&etas)?;
    let sse_trace = sse::density_trace(&trajs)?;
    Ok((clock_trace.max_frobenius_distance(&sse_trace), clock_trace, sse_trace))
}

/// Disordered clock ensembles at each configured runtime.
pub(crate) fn fig6(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let mut rows = Vec::new();
    for &t in &cfg.t_values {
        let (dev, clock_trace, sse_trace) = disorder_deviation(cfg, t, cfg.delta_max)?;
        out.csv(&format!("fig6_T{t}_clock_density.csv"), |w| clock_trace.write_csv(w))?;
        out.csv(&format!("fig6_T{t}_sse_density.csv"), |w| sse_trace.write_csv(w))?;
        out.metric(format!("deviation_T{t}"), dev);
        rows.push((t, dev));
    }
    out.csv("fig6_deviation.csv", |w| {
        writeln!(w, "T,delta_max,delta_max_T2,deviation")?;
        for (t, dev) in &rows {
            writeln!(w, "{t},{},{},{dev}", cfg.delta_max, cfg.delta_max * t * t)?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Ground gap against runtime, open and closed.
pub(crate) fn gap_scan(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let s = setup(cfg)?;
    let open = scan_gaps(&s.model, &s.psi0, &cfg.gap_t_values, cfg.dt, &s.opts)?;
    let closed_model = two_level_model_with(TwoLevelParams::new(cfg.omega, 0.0)?, JumpConvention::default())?;
    let closed = scan_gaps(&closed_model, &s.psi0, &cfg.gap_t_values, cfg.dt, &s.opts)?;
    out.csv("gap_scan.csv", |w| {
        writeln!(w, "T,gap,gap_closed")?;
        for ((t, g), (_, gc)) in open.iter().zip(&closed) {
            writeln!(w, "{t},{g},{gc}")?;
        }
        Ok(())
    })?;
    out.metric("exponent", fit_power_law(&open)?.0);
    out.metric("exponent_closed", fit_power_law(&closed)?.0);
    Ok(())
}

/// Stream id of trajectory `i` in replicate `r` of ensemble size index `j`.
fn convergence_stream(j: usize, r: usize, i: usize) -> u64 {
    ((j as u64) << 48) | ((r as u64) << 32) | i as u64
}

/// Trajectory-ensemble error at `t = T` against the closed form for growing
/// ensembles, and the RK4 reference against the closed form.
pub(crate) fn convergence(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let s = setup(cfg)?;
    let rho0 = DensityMatrix::pure(&s.psi0);
    let exact = analytic_two_level(&rho0, s.params, cfg.t_total)?;
    let mut rows = Vec::new();
    for (j, &m) in cfg.m_values.iter().enumerate() {
        let errors = (0..cfg.replicates)
            .map(|r| {
                let finals = (0..m)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = RngStream::new(cfg.seed, convergence_stream(j, r, i));
                        sse::propagate_final(&s.psi0, &s.model, cfg.t_total, cfg.convergence_dt, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let rho = crate::qcore::density_from_states(finals.iter())?;
                Ok(rho.frobenius_distance(&exact))
            })
            .collect::<Result<Vec<f64>>>()?;
        let rms = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
        let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = errors.iter().copied().fold(0.0, f64::max);
        rows.push((m, rms, lo, hi));
    }
    out.csv("convergence.csv", |w| {
        writeln!(w, "m,rms_error,min_error,max_error")?;
        for (m, rms, lo, hi) in &rows {
            writeln!(w, "{m},{rms},{lo},{hi}")?;
        }
        Ok(())
    })?;
    let points: Vec<(f64, f64)> = rows.iter().map(|&(m, rms, _, _)| (m as f64, rms)).collect();
    out.metric("slope", fit_power_law(&points)?.0);

    let rk4 = rk4_propagate(&rho0, &s.model, cfg.t_total, RK4_CHECK_DT)?;
    let rk4_dev = rk4
        .grid
        .iter()
        .zip(&rk4.rhos)
        .map(|(&t, rho)| Ok(rho.max_abs_difference(&analytic_two_level(&rho0, s.params, t)?)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.csv("convergence_rk4.csv", |w| rk4.write_csv(w))?;
    out.metric("rk4_max_abs_deviation", rk4_dev);
    out.metric("rk4_excited_final", rk4.last().population(1));
    Ok(())
}
