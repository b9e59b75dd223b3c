//! Time-to-solution: stop targets, the restart protocol, and the
//! exponential scaling fit.

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::coloring::{dsatur, Coloring};
use crate::error::{Error, Result};
use crate::rng::mix64;
use crate::sampler::{AnnealSchedule, Chain, Observer, RunStats, SamplerConfig, UpdateMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    /// Exact ground state, or every clause satisfied.
    #[serde(rename = "100")]
    Tts100,
    /// Normalized energy `E / E_ground >= 0.99`.
    #[serde(rename = "99")]
    Tts99,
    /// At least `ceil(0.95 c)` clauses satisfied.
    #[serde(rename = "95")]
    Tts95,
}

impl Target {
    pub fn percent(self) -> u32 {
        match self {
            Target::Tts100 => 100,
            Target::Tts99 => 99,
            Target::Tts95 => 95,
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches("tts") {
            "100" => Ok(Target::Tts100),
            "99" => Ok(Target::Tts99),
            "95" => Ok(Target::Tts95),
            _ => Err(Error::InvalidArgument(format!("unknown target `{s}`"))),
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "tts{}", self.percent())
    }
}

/// A target resolved against a concrete circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Goal {
    /// Stop once the energy is at or below `threshold` (real units).
    Energy { ground: f64, threshold: f64 },
    /// Stop once this many clauses are satisfied.
    Clauses { required: usize, total: usize },
}

/// Resolves `target`. SAT circuits use clause counts for the 100 and 95
/// targets; energy targets need a planted ground state.
pub fn resolve_goal(circuit: &Circuit, target: Target) -> Result<Goal> {
    if let Some(layout) = circuit.sat() {
        let total = layout.cnf.num_clauses();
        match target {
            Target::Tts100 => return Ok(Goal::Clauses { required: total, total }),
            Target::Tts95 => {
                return Ok(Goal::Clauses {
                    required: (total * 95).div_ceil(100),
                    total,
                })
            }
            Target::Tts99 => {}
        }
    } else if target == Target::Tts95 {
        return Err(Error::InvalidArgument(
            "the 95% target needs a SAT circuit".into(),
        ));
    }
    let model = circuit.compose()?;
    let ground = circuit.planted_energy()?.ok_or(Error::UnknownGroundEnergy)? as f64 * model.unit();
    if ground >= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "normalized energy needs a negative ground energy, got {ground}"
        )));
    }
    let threshold = match target {
        Target::Tts100 => ground,
        _ => 0.99 * ground,
    };
    Ok(Goal::Energy { ground, threshold })
}

/// Observer for a resolved goal on a circuit's composed model.
pub struct GoalObserver<'a> {
    circuit: &'a Circuit,
    goal: Goal,
    unit: f64,
}

impl<'a> GoalObserver<'a> {
    /// `unit` is the energy unit of the chain's model.
    pub fn new(circuit: &'a Circuit, goal: Goal, unit: f64) -> Self {
        GoalObserver { circuit, goal, unit }
    }
}

impl Observer for GoalObserver<'_> {
    fn reached(&mut self, values: &[i8], energy: i64) -> bool {
        match self.goal {
            Goal::Energy { threshold, .. } => energy as f64 * self.unit <= threshold + 1e-9,
            Goal::Clauses { required, .. } => {
                self.circuit.satisfied_clauses(values).unwrap_or(0) >= required
            }
        }
    }

    fn clauses(&mut self, values: &[i8]) -> Option<usize> {
        self.circuit.satisfied_clauses(values)
    }
}

/// Restarts with growing budgets: attempt `a` gets `min_sweeps * growth^a`
/// sweeps from a fresh random state, until `max_total_sweeps` are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartPolicy {
    pub min_sweeps: u64,
    pub growth: u64,
    pub max_total_sweeps: u64,
}

impl Default for RestartPolicy {
    fn default() -> Self {
        RestartPolicy {
            min_sweeps: 1_000,
            growth: 2,
            max_total_sweeps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsResult {
    pub target: Target,
    pub success: bool,
    /// Sweeps summed over all attempts up to the hit (or the whole budget).
    pub sweeps: u64,
    pub wall_ns: u64,
    pub flips: u64,
    pub attempts: usize,
    pub best_energy: f64,
    pub best_state: Vec<i8>,
    /// Trace of the last attempt.
    pub last_run: RunStats,
}

/// Runs the restart protocol on `circuit`'s composed model. `initial`, if
/// given, seeds the first attempt instead of a random state.
pub fn measure_tts(
    circuit: &Circuit,
    coloring: Option<&Coloring>,
    config: &SamplerConfig,
    target: Target,
    policy: &RestartPolicy,
    initial: Option<&[i8]>,
) -> Result<TtsResult> {
    if policy.min_sweeps == 0 || policy.growth == 0 {
        return Err(Error::InvalidArgument("restart budgets must be positive".into()));
    }
    let goal = resolve_goal(circuit, target)?;
    let model = circuit.compose()?;
    let owned;
    let coloring = match (coloring, config.mode) {
        (Some(c), _) => Some(c),
        (None, UpdateMode::Chromatic) => {
            owned = dsatur(&model);
            Some(&owned)
        }
        (None, _) => None,
    };

    let mut result = TtsResult {
        target,
        success: false,
        sweeps: 0,
        wall_ns: 0,
        flips: 0,
        attempts: 0,
        best_energy: f64::INFINITY,
        best_state: Vec::new(),
        last_run: RunStats::default(),
    };
    let mut budget = policy.min_sweeps;
    while result.sweeps < policy.max_total_sweeps || result.attempts == 0 {
        let this = budget.min(policy.max_total_sweeps.saturating_sub(result.sweeps)).max(1);
        let steps = (config.schedule.steps as u64).min(this).max(1);
        let attempt_config = SamplerConfig {
            seed: mix64(config.seed.wrapping_add(result.attempts as u64)),
            schedule: AnnealSchedule {
                steps: steps as usize,
                ..config.schedule
            },
            sweeps_per_beta: this / steps,
            ..config.clone()
        };
        let mut chain = Chain::from_config(&model, coloring, &attempt_config)?;
        if let (Some(state), 0) = (initial, result.attempts) {
            chain.set_state(state)?;
        }
        let mut observer = GoalObserver::new(circuit, goal, chain.model().unit());
        let out = chain.anneal(&attempt_config, &mut observer)?;
        result.attempts += 1;
        result.sweeps += out.stats.sweeps;
        result.wall_ns += out.stats.wall_ns;
        result.flips += out.stats.flips;
        if out.best_energy < result.best_energy {
            result.best_energy = out.best_energy;
            result.best_state = out.best_state;
        }
        result.last_run = out.stats;
        if out.reached_at.is_some() {
            result.success = true;
            if matches!(goal, Goal::Clauses { .. }) {
                result.best_state = out.final_state;
            }
            break;
        }
        budget = budget.saturating_mul(policy.growth);
    }
    Ok(result)
}

/// `t = t0 exp(N / tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub t0: f64,
    pub tau: f64,
}

impl ExpFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.t0 * (n / self.tau).exp()
    }
}

/// Least squares of `ln t` against `N`.
pub fn fit_exponential(points: &[(f64, f64)]) -> Result<ExpFit> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("fit needs at least two points".into()));
    }
    if points.iter().any(|&(_, t)| t.is_nan() || t <= 0.0) {
        return Err(Error::InvalidArgument("fit needs positive times".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit needs distinct sizes".into()));
    }
    let slope = sxy / sxx;
    if slope == 0.0 {
        return Err(Error::InvalidArgument("times do not grow with size".into()));
    }
    Ok(ExpFit {
        t0: (my - slope * mx).exp(),
        tau: 1.0 / slope,
    })
}
