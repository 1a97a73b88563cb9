use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::clock::DEFAULT_PENALTY_WEIGHT;
use crate::error::{Error, Result};
use crate::grid::ClockGrid;
use crate::linalg::CVector;
use crate::qcore::{PureState, TwoLevelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    GapScan,
    Convergence,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Fig1,
        Experiment::Fig2,
        Experiment::Fig3,
        Experiment::Fig4,
        Experiment::Fig5,
        Experiment::Fig6,
        Experiment::GapScan,
        Experiment::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1",
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::Fig6 => "fig6",
            Experiment::GapScan => "gap_scan",
            Experiment::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                Error::Config(format!("unknown experiment `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Parameters of one run. Keys of the config file match the field names;
/// `T` is accepted for `t_total`, `m` for `m_trajectories`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub omega: f64,
    pub gamma: f64,
    pub t_total: f64,
    pub dt: f64,
    pub psi0: [Complex64; 2],
    pub m_trajectories: usize,
    pub seed: u64,
    pub delta_max: f64,
    pub penalty_weight: f64,
    /// fig3/fig4: slice the forced jump lands on; 0 picks the middle slice.
    pub jump_slice: usize,
    /// fig6 runtimes.
    pub t_values: Vec<f64>,
    /// gap_scan runtimes.
    pub gap_t_values: Vec<f64>,
    /// convergence ensemble sizes.
    pub m_values: Vec<usize>,
    /// convergence: independent ensembles per size.
    pub replicates: usize,
    /// convergence: trajectory step.
    pub convergence_dt: f64,
}

impl RunConfig {
    /// Defaults: omega = 1, Gamma = 0.2, dt = 0.05, psi0 = (1, 1)/sqrt 2.
    /// fig3/fig4 run to T = 1.95 so a jump at t = 1.0 splits the clock into
    /// two blocks of 20 slices.
    pub fn new(experiment: Experiment) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let t_total = match experiment {
            Experiment::Fig3 | Experiment::Fig4 => 1.95,
            _ => 1.0,
        };
        RunConfig {
            experiment,
            omega: 1.0,
            gamma: 0.2,
            t_total,
            dt: 0.05,
            psi0: [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
            m_trajectories: 20,
            seed: 20_160_501,
            delta_max: 0.01,
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
            jump_slice: 0,
            t_values: vec![2.5, 10.0],
            gap_t_values: vec![1.0, 2.0, 4.0, 8.0],
            m_values: vec![100, 400, 1600, 6400],
            replicates: 8,
            convergence_dt: 0.002,
        }
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn from_file(experiment: Experiment, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::new(experiment);
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply_override(line)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        Ok(())
    }

    /// Applies one `key=value` pair.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "experiment" => self.experiment = value.parse()?,
            "omega" => self.omega = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "T" | "t_total" => self.t_total = parse_num(key, value)?,
            "dt" => self.dt = parse_num(key, value)?,
            "psi0" => self.psi0 = parse_pair(value)?,
            "m" | "m_trajectories" => self.m_trajectories = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "delta_max" => self.delta_max = parse_num(key, value)?,
            "penalty_weight" => self.penalty_weight = parse_num(key, value)?,
            "jump_slice" => self.jump_slice = parse_num(key, value)?,
            "t_values" => self.t_values = parse_list(key, value)?,
            "gap_t_values" => self.gap_t_values = parse_list(key, value)?,
            "m_values" => self.m_values = parse_list(key, value)?,
            "replicates" => self.replicates = parse_num(key, value)?,
            "convergence_dt" => self.convergence_dt = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn params(&self) -> Result<TwoLevelParams> {
        TwoLevelParams::new(self.omega, self.gamma).map_err(|e| Error::Config(strip(e)))
    }

    pub fn initial_state(&self) -> Result<PureState> {
        PureState::new(CVector::from_column_slice(&self.psi0))
            .map_err(|_| Error::Config("psi0 must be a nonzero finite amplitude pair".into()))
    }

    pub fn grid(&self) -> Result<ClockGrid> {
        config_grid(self.t_total, self.dt)
    }

    /// Checks every field the chosen experiment reads.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.initial_state()?;
        self.grid()?;
        if self.m_trajectories == 0 {
            return Err(Error::Config("m_trajectories must be at least 1".into()));
        }
        if !(self.delta_max >= 0.0 && self.delta_max.is_finite()) {
            return Err(Error::Config("delta_max must be finite and nonnegative".into()));
        }
        if !(self.penalty_weight > 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::Config("penalty_weight must be positive".into()));
        }
        match self.experiment {
            Experiment::Fig3 | Experiment::Fig4 => {
                let n = self.grid()?.n_slices;
                if self.jump_slice >= n {
                    return Err(Error::Config(format!(
                        "jump_slice {} outside 1..{n}",
                        self.jump_slice
                    )));
                }
            }
            Experiment::Fig6 => {
                if self.t_values.is_empty() {
                    return Err(Error::Config("t_values is empty".into()));
                }
                for &t in &self.t_values {
                    config_grid(t, self.dt)?;
                }
            }
            Experiment::GapScan => {
                if self.gap_t_values.len() < 2 {
                    return Err(Error::Config("gap_t_values needs at least two runtimes".into()));
                }
                for &t in &self.gap_t_values {
                    config_grid(t, self.dt)?;
                }
            }
            Experiment::Convergence => {
                if self.m_values.len() < 2 || self.m_values.contains(&0) {
                    return Err(Error::Config("m_values needs at least two positive sizes".into()));
                }
                if self.replicates == 0 {
                    return Err(Error::Config("replicates must be at least 1".into()));
                }
                config_grid(self.t_total, self.convergence_dt)?;
            }
            _ => {}
        }
        Ok(())
    }
}

fn config_grid(t: f64, dt: f64) -> Result<ClockGrid> {
    ClockGrid::new(t, dt, 2).map_err(|e| Error::Config(strip(e)))
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse_num(key, v.trim()))
        .collect()
}

fn parse_pair(value: &str) -> Result<[Complex64; 2]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("psi0: expected two amplitudes, got `{value}`")));
    }
    let parse = |s: &str| {
        s.parse::<Complex64>()
            .map_err(|_| Error::Config(format!("psi0: cannot parse amplitude `{s}`")))
    };
    Ok([parse(parts[0])?, parse(parts[1])?])
}
