//! Bayesian optimisation of the model hyperparameters: a Gaussian-process
//! surrogate with expected-improvement acquisition, plus a random-search
//! fallback. [`minimize`] works on any objective; [`run_hpo`] wires it to
//! short-budget training runs scored by validation MAE.

mod gp;
mod space;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gp::{expected_improvement, GaussianProcess, LENGTH_SCALE_GRID};
pub use space::{Dim, Scale, SearchSpace};

use crate::model::RcvaeConfig;
use crate::numcore::{streams, Rng};
use crate::trainer::{train, TrainConfig, TrainInputs};
use crate::{Error, Result};

/// Random candidates scored by EI per suggestion.
pub const EI_CANDIDATES: usize = 1024;
/// Observation noise variance of the surrogate (targets are standardized).
pub const GP_NOISE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub point: Vec<f64>,
    /// `None` exactly when the trial failed.
    pub objective: Option<f64>,
    pub status: TrialStatus,
}

impl Trial {
    /// Successful trial; a non-finite objective is recorded as a failure.
    pub fn ok(point: Vec<f64>, objective: f64) -> Self {
        if objective.is_finite() {
            Self {
                point,
                objective: Some(objective),
                status: TrialStatus::Ok,
            }
        } else {
            Self::failed(point, format!("non-finite objective {objective}"))
        }
    }

    pub fn failed(point: Vec<f64>, reason: impl Into<String>) -> Self {
        Self {
            point,
            objective: None,
            status: TrialStatus::Failed(reason.into()),
        }
    }

    fn from_result(point: Vec<f64>, result: Result<f64>) -> Self {
        match result {
            Ok(v) => Self::ok(point, v),
            Err(e) => Self::failed(point, e.to_string()),
        }
    }
}

/// Surrogate target for a failed trial: twice the worst observed objective.
/// For non-positive objectives doubling would reward failure, so any value
/// above zero is used instead.
pub fn failure_penalty(worst: f64) -> f64 {
    if worst > 0.0 {
        2.0 * worst
    } else {
        1.0
    }
}

/// Observed trials plus the bookkeeping needed to make the next suggestion.
#[derive(Debug, Clone)]
pub struct BoState {
    space: SearchSpace,
    trials: Vec<Trial>,
    design: Vec<Vec<f64>>,
    issued: usize,
    pending: Vec<Vec<f64>>,
}

impl BoState {
    pub fn new(space: SearchSpace) -> Result<Self> {
        space.validate()?;
        Ok(Self {
            space,
            trials: Vec::new(),
            design: Vec::new(),
            issued: 0,
            pending: Vec::new(),
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    /// Size of the space-filling initial design.
    pub fn initial_design_len(&self) -> usize {
        5.max(self.space.len() + 1)
    }

    /// Index of the lowest successful objective (earliest on ties).
    pub fn best_index(&self) -> Option<usize> {
        self.trials
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.objective.map(|v| (i, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Running minimum of successful objectives after each trial.
    pub fn best_so_far(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.trials
            .iter()
            .map(|t| {
                if let Some(v) = t.objective {
                    best = Some(best.map_or(v, |b| b.min(v)));
                }
                best
            })
            .collect()
    }

    /// Next point: the Latin-hypercube initial design first, then the EI
    /// maximiser over [`EI_CANDIDATES`] uniform candidates. Points issued but
    /// not yet observed enter the surrogate at the current best value, so a
    /// batch of suggestions spreads out.
    pub fn suggest(&mut self, rng: &mut Rng) -> Result<Vec<f64>> {
        let n_init = self.initial_design_len();
        let point = if self.issued < n_init {
            if self.design.is_empty() {
                self.design = latin_hypercube(n_init, self.space.len(), rng);
            }
            self.space.from_unit(&self.design[self.issued])
        } else {
            match self.surrogate()? {
                Some((gp, best)) => self.maximise_ei(&gp, best, rng),
                None => self.random_point(rng),
            }
        };
        self.issued += 1;
        self.pending.push(point.clone());
        Ok(point)
    }

    /// Uniform random point, the random-search strategy.
    pub fn random_point(&self, rng: &mut Rng) -> Vec<f64> {
        let u: Vec<f64> = (0..self.space.len()).map(|_| rng.uniform()).collect();
        self.space.from_unit(&u)
    }

    /// Records a finished trial. Points outside the space are rejected.
    pub fn observe(&mut self, trial: Trial) -> Result<()> {
        self.space.check(&trial.point)?;
        if let Some(i) = self.pending.iter().position(|p| *p == trial.point) {
            self.pending.remove(i);
        }
        self.trials.push(trial);
        Ok(())
    }

    /// Surrogate targets per trial, with failures replaced by the penalty.
    /// `None` until some trial has succeeded.
    pub fn surrogate_targets(&self) -> Option<Vec<f64>> {
        let worst = self.trials.iter().filter_map(|t| t.objective).reduce(f64::max)?;
        let penalty = failure_penalty(worst);
        Some(self.trials.iter().map(|t| t.objective.unwrap_or(penalty)).collect())
    }

    /// GP over observed and pending points, with the best observed value.
    fn surrogate(&self) -> Result<Option<(GaussianProcess, f64)>> {
        let Some(mut ys) = self.surrogate_targets() else {
            return Ok(None);
        };
        let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let mut xs: Vec<Vec<f64>> = self.trials.iter().map(|t| self.space.to_unit(&t.point)).collect();
        for p in &self.pending {
            xs.push(self.space.to_unit(p));
            ys.push(best);
        }
        Ok(Some((GaussianProcess::fit(&xs, &ys, GP_NOISE)?, best)))
    }

    fn maximise_ei(&self, gp: &GaussianProcess, best: f64, rng: &mut Rng) -> Vec<f64> {
        let mut top: Option<(f64, Vec<f64>)> = None;
        for _ in 0..EI_CANDIDATES {
            let point = self.random_point(rng);
            let (mean, std) = gp.predict(&self.space.to_unit(&point));
            let ei = expected_improvement(mean, std, best);
            if top.as_ref().is_none_or(|(b, _)| ei > *b) {
                top = Some((ei, point));
            }
        }
        top.expect("at least one candidate").1
    }
}

/// `n` points in `[0, 1]^dims`, one per stratum along every axis.
fn latin_hypercube(n: usize, dims: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut strata);
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.uniform()) / n as f64;
        }
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Bayesian,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub budget: usize,
    /// Trials evaluated concurrently per round.
    pub workers: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub trials: Vec<Trial>,
    pub best: usize,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

/// Minimises `objective` over `space`. Suggestions and observations run on
/// one coordinator; each round evaluates up to `workers` points in parallel
/// and records them in suggestion order, so results do not depend on timing.
pub fn minimize<F>(space: &SearchSpace, opts: &SearchOptions, objective: F) -> Result<SearchOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if opts.budget == 0 {
        return Err(Error::Spec("search budget must be at least 1".into()));
    }
    let workers = opts.workers.max(1);
    let mut state = BoState::new(space.clone())?;
    let mut rng = Rng::seed_from(opts.seed).substream(streams::HPO);
    while state.trials().len() < opts.budget {
        let round = workers.min(opts.budget - state.trials().len());
        let points = (0..round)
            .map(|_| match opts.strategy {
                Strategy::Bayesian => state.suggest(&mut rng),
                Strategy::Random => Ok(state.random_point(&mut rng)),
            })
            .collect::<Result<Vec<_>>>()?;
        let results: Vec<Result<f64>> = points.par_iter().map(|p| objective(p)).collect();
        for (point, result) in points.into_iter().zip(results) {
            let trial = Trial::from_result(point, result);
            if let TrialStatus::Failed(why) = &trial.status {
                log::warn!("trial {} failed: {why}", state.trials().len() + 1);
            }
            state.observe(trial)?;
        }
    }
    let best = state
        .best_index()
        .ok_or_else(|| Error::Hpo(format!("all {} trials failed", opts.budget)))?;
    Ok(SearchOutcome {
        trials: state.trials,
        best,
    })
}

/// The tuned hyperparameters, in [`SearchSpace::rcvae`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub hidden: usize,
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub batch_size: usize,
}

impl Hyperparams {
    pub fn from_point(point: &[f64]) -> Result<Self> {
        let [eta, h, j, d, k] = point else {
            return Err(Error::Spec(format!("expected 5 hyperparameters, got {}", point.len())));
        };
        Ok(Self {
            learning_rate: *eta,
            hidden: *h as usize,
            latent_dim: *j as usize,
            embed_dim: *d as usize,
            batch_size: *k as usize,
        })
    }

    pub fn to_point(&self) -> Vec<f64> {
        vec![
            self.learning_rate,
            self.hidden as f64,
            self.latent_dim as f64,
            self.embed_dim as f64,
            self.batch_size as f64,
        ]
    }

    /// Copies the tuned values into a model and training config.
    pub fn apply(&self, model: &mut RcvaeConfig, cfg: &mut TrainConfig) {
        model.hidden = self.hidden;
        model.latent_dim = self.latent_dim;
        model.embed_dim = self.embed_dim;
        cfg.learning_rate = self.learning_rate;
        cfg.batch_size = self.batch_size;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpoConfig {
    pub budget: usize,
    /// `max_epochs` of each trial's training run.
    pub trial_epochs: usize,
    /// Early-stop patience of each trial; capped below `trial_epochs`.
    pub trial_patience: usize,
    pub workers: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub space: SearchSpace,
}

impl Default for HpoConfig {
    fn default() -> Self {
        Self {
            budget: 20,
            trial_epochs: 50,
            trial_patience: 10,
            workers: 1,
            strategy: Strategy::Bayesian,
            seed: 0,
            space: SearchSpace::rcvae(),
        }
    }
}

impl HpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.trial_epochs < 2 {
            return Err(Error::Spec("hpo needs budget >= 1 and trial_epochs >= 2".into()));
        }
        self.space.validate()?;
        if self.space.len() != 5 {
            return Err(Error::Spec("hpo space must list eta, h, J, D, K".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpoOutcome {
    pub trials: Vec<Trial>,
    pub best_index: usize,
    pub best: Hyperparams,
}

/// Searches hyperparameters by training a short model per trial and scoring
/// its best validation MAE. `model` supplies the fixed fields (input size,
/// depths); `train_cfg` supplies everything but the learning rate and batch
/// size.
pub fn run_hpo(
    inputs: &TrainInputs<'_>,
    model: RcvaeConfig,
    train_cfg: &TrainConfig,
    hpo: &HpoConfig,
) -> Result<HpoOutcome> {
    hpo.validate()?;
    let opts = SearchOptions {
        budget: hpo.budget,
        workers: hpo.workers,
        strategy: hpo.strategy,
        seed: hpo.seed,
    };
    let outcome = minimize(&hpo.space, &opts, |point| {
        let hp = Hyperparams::from_point(point)?;
        let (mut m, mut cfg) = (model, train_cfg.clone());
        hp.apply(&mut m, &mut cfg);
        cfg.max_epochs = hpo.trial_epochs;
        cfg.patience = hpo.trial_patience.min(hpo.trial_epochs - 1);
        let (_, state) = train(inputs, m, &cfg)?;
        log::info!("trial {hp:?}: val MAE {:.6}", state.best_val);
        Ok(state.best_val)
    })?;
    Ok(HpoOutcome {
        best: Hyperparams::from_point(&outcome.best_trial().point)?,
        best_index: outcome.best,
        trials: outcome.trials,
    })
}

pub const TRIALS_HEADER: [&str; 8] = ["trial", "eta", "h", "J", "D", "K", "val_mae", "status"];

/// Trial log, numbered from 1; failed trials leave `val_mae` empty.
pub fn write_trials_csv<W: Write>(out: W, trials: &[Trial]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIALS_HEADER)?;
    for (i, t) in trials.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(t.point.iter().map(f64::to_string));
        rec.push(t.objective.map(|v| v.to_string()).unwrap_or_default());
        rec.push(match &t.status {
            TrialStatus::Ok => "ok".into(),
            TrialStatus::Failed(why) => format!("failed: {why}"),
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_line() -> SearchSpace {
        SearchSpace::new(vec![Dim::new("x", 0.0, 1.0, Scale::Linear).unwrap()]).unwrap()
    }

    fn opts(budget: usize, seed: u64) -> SearchOptions {
        SearchOptions {
            budget,
            workers: 1,
            strategy: Strategy::Bayesian,
            seed,
        }
    }

    #[test]
    fn first_suggestion_in_bounds() {
        let mut state = BoState::new(SearchSpace::rcvae()).unwrap();
        let p = state.suggest(&mut Rng::seed_from(3)).unwrap();
        assert!(state.space().check(&p).is_ok());
    }

    #[test]
    fn quadratic_optimum_recovered() {
        let out = minimize(&unit_line(), &opts(25, 0), |x| Ok((x[0] - 0.3).powi(2))).unwrap();
        let x = out.best_trial().point[0];
        assert!((x - 0.3).abs() < 0.05, "best x {x}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let f = |x: &[f64]| Ok((x[0] - 0.7).abs());
        let a = minimize(&unit_line(), &opts(12, 9), f).unwrap();
        let b = minimize(&unit_line(), &opts(12, 9), f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_one_returns_that_trial() {
        let out = minimize(&unit_line(), &opts(1, 4), |x| Ok(x[0])).unwrap();
        assert_eq!(out.trials.len(), 1);
        assert_eq!(out.best, 0);
    }

    #[test]
    fn out_of_bounds_observation_rejected() {
        let mut state = BoState::new(unit_line()).unwrap();
        assert!(matches!(state.observe(Trial::ok(vec![1.5], 0.0)), Err(Error::Spec(_))));
    }

    #[test]
    fn duplicate_observations_keep_suggesting() {
        let mut state = BoState::new(unit_line()).unwrap();
        for _ in 0..6 {
            state.observe(Trial::ok(vec![0.5], 1.0)).unwrap();
        }
        state.issued = state.initial_design_len();
        let p = state.suggest(&mut Rng::seed_from(1)).unwrap();
        assert!(state.space().check(&p).is_ok());
    }

    #[test]
    fn failures_get_penalty_and_all_failed_is_an_error() {
        let mut state = BoState::new(unit_line()).unwrap();
        state.observe(Trial::ok(vec![0.1], 3.0)).unwrap();
        state.observe(Trial::failed(vec![0.2], "boom")).unwrap();
        state.observe(Trial::ok(vec![0.3], f64::NAN)).unwrap();
        assert_eq!(state.surrogate_targets().unwrap(), vec![3.0, 6.0, 6.0]);
        let err = minimize(&unit_line(), &opts(3, 0), |_| Err(Error::Numeric("x".into()))).unwrap_err();
        assert!(matches!(err, Error::Hpo(_)));
    }

    #[test]
    fn best_so_far_is_monotone() {
        let out = minimize(&unit_line(), &opts(15, 2), |x| Ok((x[0] * 7.0).sin())).unwrap();
        let mut state = BoState::new(unit_line()).unwrap();
        for t in out.trials {
            state.observe(t).unwrap();
        }
        let trace: Vec<f64> = state.best_so_far().into_iter().map(Option::unwrap).collect();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn parallel_rounds_are_deterministic() {
        let f = |x: &[f64]| Ok((x[0] - 0.4).powi(2));
        let par = SearchOptions { workers: 4, ..opts(16, 5) };
        let a = minimize(&unit_line(), &par, f).unwrap();
        assert_eq!(a, minimize(&unit_line(), &par, f).unwrap());
        assert_eq!(a.trials.len(), 16);
    }

    #[test]
    fn trial_log_format() {
        let trials = vec![
            Trial::ok(vec![1e-3, 64.0, 8.0, 16.0, 32.0], 0.25),
            Trial::failed(vec![1e-4, 32.0, 4.0, 8.0, 64.0], "diverged"),
        ];
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &trials).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,eta,h,J,D,K,val_mae,status");
        assert_eq!(lines[1], "1,0.001,64,8,16,32,0.25,ok");
        assert_eq!(lines[2], "2,0.0001,32,4,8,64,,failed: diverged");
    }

    #[test]
    fn hyperparams_round_trip() {
        let hp = Hyperparams {
            learning_rate: 1e-3,
            hidden: 64,
            latent_dim: 8,
            embed_dim: 16,
            batch_size: 32,
        };
        assert_eq!(Hyperparams::from_point(&hp.to_point()).unwrap(), hp);
        assert!(Hyperparams::from_point(&[1.0]).is_err());
    }
}
