//! Multitask calibration of the epidemic model.
//!
//! Clinical rates are shared across all regions while the mobility map and
//! initial conditions are per-region. Everything is fitted jointly by Adam
//! on the population-normalized mean-squared error between smoothed observed
//! and smoothed predicted cumulative deaths, over several independently
//! seeded trials; the trial with the lowest held-out loss wins.

mod adam;
mod adjoint;
mod packing;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epimodel::GlobalParams;
use crate::exec::{self, ExecMode};
use crate::mobility::{MobilityMapParams, MobilityVector};

pub use packing::{pack, unpack, ParamLayout};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("series must be non-empty")]
    EmptySeries,
    #[error("region {region}: {have} days available, {need} required")]
    InsufficientDays {
        region: String,
        have: usize,
        need: usize,
    },
    #[error("no parameters for region {0}")]
    UnknownRegion(String),
    #[error("test window must be non-empty")]
    EmptyTestWindow,
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("invalid dataset: {0}")]
    BadDataset(String),
    #[error("all {0} trials diverged")]
    AllTrialsFailed(usize),
    #[error(transparent)]
    Epi(#[from] crate::epimodel::EpiError),
    #[error(transparent)]
    Mobility(#[from] crate::mobility::MobilityError),
}

/// Aligned daily mobility and cumulative deaths for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDataset {
    pub region_id: String,
    pub population: f64,
    #[serde(rename = "dates")]
    pub days: Vec<NaiveDate>,
    pub mobility: Vec<MobilityVector>,
    #[serde(rename = "deaths")]
    pub deaths_raw: Vec<f64>,
}

impl RegionDataset {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.days.is_empty() {
            return Err(LearnError::BadDataset(format!(
                "region {}: empty date range",
                self.region_id
            )));
        }
        if self.days.len() != self.mobility.len() || self.days.len() != self.deaths_raw.len() {
            return Err(LearnError::BadDataset(format!(
                "region {}: dates ({}), mobility ({}), deaths ({}) lengths differ",
                self.region_id,
                self.days.len(),
                self.mobility.len(),
                self.deaths_raw.len()
            )));
        }
        for pair in self.days.windows(2) {
            if pair[1] != pair[0].succ_opt().unwrap() {
                return Err(LearnError::BadDataset(format!(
                    "region {}: date gap between {} and {}",
                    self.region_id, pair[0], pair[1]
                )));
            }
        }
        if !(self.population > 0.0) {
            return Err(LearnError::BadDataset(format!(
                "region {}: population must be positive",
                self.region_id
            )));
        }
        let k = self.mobility[0].len();
        for (t, m) in self.mobility.iter().enumerate() {
            if m.len() != k {
                return Err(LearnError::BadDataset(format!(
                    "region {}: mobility dimension changes on day {t}",
                    self.region_id
                )));
            }
            m.validate()
                .map_err(|e| LearnError::BadDataset(format!("region {}: {e}", self.region_id)))?;
        }
        Ok(())
    }

    /// Cleaned (nondecreasing) then 7-day-smoothed cumulative deaths.
    pub fn smoothed_deaths(&self) -> Vec<f64> {
        rolling_mean(&clean_cumulative(&self.deaths_raw))
    }
}

/// Per-region trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub mobility_map: MobilityMapParams,
    pub init: crate::epimodel::RegionInit,
}

/// Shared clinical rates plus per-region mobility maps and initial
/// conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub global: GlobalParams,
    #[serde(rename = "regions")]
    pub per_region: BTreeMap<String, RegionParams>,
}

impl ParamSet {
    pub fn validate(&self) -> Result<(), LearnError> {
        self.global.validate()?;
        for rp in self.per_region.values() {
            rp.mobility_map.validate()?;
            rp.init.validate()?;
        }
        Ok(())
    }
}

/// Sampling intervals for parameter initialization. The clinical intervals
/// are plausibility ranges, not ground truth; all of them are configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub rho_ei: (f64, f64),
    pub rho_ea: (f64, f64),
    pub rho_ir: (f64, f64),
    pub rho_ih: (f64, f64),
    pub rho_ar: (f64, f64),
    pub rho_hr: (f64, f64),
    pub alpha_d: (f64, f64),
    /// Log-uniform range for `theta_k * population`, so the infection term
    /// starts at a plausible scale across region sizes.
    pub theta_times_pop: (f64, f64),
    /// Uniform range for the exponents `alpha_k`.
    pub alpha_exponent: (f64, f64),
    /// Log-uniform range for `b * population`.
    pub b_times_pop: (f64, f64),
    /// Log-uniform range for `gamma_A`.
    pub gamma_a: (f64, f64),
    /// Log-uniform range for E0, I0, A0, R0 as fractions of population.
    pub compartment_frac: (f64, f64),
    /// Log-uniform range for H0 as a fraction of population.
    pub hospital_frac: (f64, f64),
    /// S0 starts at this fraction of the population (when learned).
    pub s0_frac: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            rho_ei: (0.1, 0.4),
            rho_ea: (0.1, 0.4),
            rho_ir: (0.05, 0.2),
            rho_ih: (0.01, 0.1),
            rho_ar: (0.05, 0.2),
            rho_hr: (0.05, 0.2),
            alpha_d: (0.1, 0.4),
            theta_times_pop: (0.02, 0.5),
            alpha_exponent: (0.5, 2.0),
            b_times_pop: (1e-4, 1e-2),
            gamma_a: (0.2, 1.0),
            compartment_frac: (1e-6, 1e-3),
            hospital_frac: (1e-7, 1e-4),
            s0_frac: 0.5,
        }
    }
}

impl InitConfig {
    fn validate(&self) -> Result<(), LearnError> {
        let intervals = [
            ("rho_ei", self.rho_ei),
            ("rho_ea", self.rho_ea),
            ("rho_ir", self.rho_ir),
            ("rho_ih", self.rho_ih),
            ("rho_ar", self.rho_ar),
            ("rho_hr", self.rho_hr),
            ("alpha_d", self.alpha_d),
        ];
        for (name, (lo, hi)) in intervals {
            if !(0.0 < lo && lo <= hi && hi < 1.0) {
                return Err(LearnError::BadConfig(format!(
                    "{name} interval ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"
                )));
            }
        }
        if self.rho_ei.1 + self.rho_ea.1 >= 1.0 {
            return Err(LearnError::BadConfig(
                "rho_ei + rho_ea upper bounds must sum below 1".into(),
            ));
        }
        if self.rho_ir.1 + self.rho_ih.1 >= 1.0 {
            return Err(LearnError::BadConfig(
                "rho_ir + rho_ih upper bounds must sum below 1".into(),
            ));
        }
        for (name, (lo, hi)) in [
            ("theta_times_pop", self.theta_times_pop),
            ("b_times_pop", self.b_times_pop),
            ("gamma_a", self.gamma_a),
            ("compartment_frac", self.compartment_frac),
            ("hospital_frac", self.hospital_frac),
        ] {
            if !(0.0 < lo && lo <= hi) {
                return Err(LearnError::BadConfig(format!(
                    "{name} interval ({lo}, {hi}) must be positive and ordered"
                )));
            }
        }
        if !(self.s0_frac > 0.0) {
            return Err(LearnError::BadConfig("s0_frac must be positive".into()));
        }
        Ok(())
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Regions per mini-batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Per-epoch multiplicative decay of the learning rate; 1.0 disables it.
    pub lr_decay: f64,
    pub trials: usize,
    pub rng_seed: u64,
    pub train_days: usize,
    pub test_days: usize,
    /// Learn `S0` (starting from `s0_frac * population`) or pin it to the
    /// census population.
    pub learn_s0: bool,
    /// Category names used in the fitted mobility maps; defaults to
    /// `c0..c{K-1}` when absent.
    pub categories: Option<Vec<String>>,
    pub init: InitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch_size: 4,
            learning_rate: 1e-2,
            lr_decay: 1.0,
            trials: 10,
            rng_seed: 0,
            train_days: 60,
            test_days: 21,
            learn_s0: true,
            categories: None,
            init: InitConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, data: &[RegionDataset]) -> Result<(), LearnError> {
        if data.is_empty() {
            return Err(LearnError::BadDataset("no regions".into()));
        }
        if self.batch_size == 0 || self.batch_size > data.len() {
            return Err(LearnError::BadConfig(format!(
                "batch_size {} must be in 1..={}",
                self.batch_size,
                data.len()
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LearnError::BadConfig("learning_rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(LearnError::BadConfig(format!(
                "lr_decay {} must lie in (0, 1]",
                self.lr_decay
            )));
        }
        if self.trials == 0 {
            return Err(LearnError::BadConfig("at least one trial is required".into()));
        }
        if self.train_days == 0 || self.test_days == 0 {
            return Err(LearnError::BadConfig(
                "train_days and test_days must be positive".into(),
            ));
        }
        if let Some(cats) = &self.categories {
            let k = data[0].mobility.first().map(|m| m.len()).unwrap_or(0);
            if cats.len() != k {
                return Err(LearnError::BadConfig(format!(
                    "{} category names given but data has {k} categories",
                    cats.len()
                )));
            }
        }
        self.init.validate()?;
        let need = self.train_days + self.test_days + 1;
        for ds in data {
            ds.validate()?;
            if ds.days.len() < need {
                return Err(LearnError::InsufficientDays {
                    region: ds.region_id.clone(),
                    have: ds.days.len(),
                    need,
                });
            }
        }
        Ok(())
    }

    fn category_names(&self, data: &[RegionDataset]) -> Vec<String> {
        self.categories.clone().unwrap_or_else(|| {
            let k = data[0].mobility.first().map(|m| m.len()).unwrap_or(0);
            (0..k).map(|j| format!("c{j}")).collect()
        })
    }
}

/// Trailing 7-day rolling mean with partial windows at the start, so day `t`
/// only ever sees data up to `t`.
pub fn rolling7(series: &[f64]) -> Result<Vec<f64>, LearnError> {
    if series.is_empty() {
        return Err(LearnError::EmptySeries);
    }
    Ok(rolling_mean(series))
}

pub(crate) fn rolling_mean(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut window_sum = 0.0;
    for t in 0..series.len() {
        window_sum += series[t];
        if t >= 7 {
            window_sum -= series[t - 7];
        }
        let w = (t + 1).min(7) as f64;
        out.push(window_sum / w);
    }
    out
}

/// Forces cumulative counts nondecreasing by running maximum; public data
/// contains downward corrections that the cumulative model cannot express.
pub fn clean_cumulative(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut hi = f64::NEG_INFINITY;
    for &x in series {
        hi = hi.max(x);
        out.push(hi);
    }
    out
}

fn check_region_coverage(
    params: &ParamSet,
    data: &[RegionDataset],
    need_days: usize,
) -> Result<(), LearnError> {
    for ds in data {
        if !params.per_region.contains_key(&ds.region_id) {
            return Err(LearnError::UnknownRegion(ds.region_id.clone()));
        }
        if ds.days.len() < need_days {
            return Err(LearnError::InsufficientDays {
                region: ds.region_id.clone(),
                have: ds.days.len(),
                need: need_days,
            });
        }
    }
    Ok(())
}

/// Training loss: population-normalized MSE between smoothed observed and
/// smoothed predicted cumulative deaths, averaged over regions and the first
/// `t_train` days.
pub fn loss(params: &ParamSet, data: &[RegionDataset], t_train: usize) -> Result<f64, LearnError> {
    params.validate()?;
    check_region_coverage(params, data, t_train + 1)?;
    let inv_mt = 1.0 / (data.len() as f64 * t_train as f64);
    let mut total = 0.0;
    for ds in data {
        let rp = &params.per_region[&ds.region_id];
        let x_smooth = ds.smoothed_deaths();
        total += adjoint::region_loss(
            &params.global,
            &rp.mobility_map,
            &rp.init,
            &ds.mobility,
            &x_smooth,
            ds.population,
            t_train,
            inv_mt,
        );
    }
    Ok(total)
}

/// Loss and its exact gradient in the packed (reparametrized) coordinates of
/// `layout`.
pub fn loss_gradient(
    params: &ParamSet,
    data: &[RegionDataset],
    t_train: usize,
    layout: &ParamLayout,
) -> Result<(f64, Vec<f64>), LearnError> {
    params.validate()?;
    check_region_coverage(params, data, t_train + 1)?;
    let batch: Vec<usize> = (0..data.len()).collect();
    batch_loss_gradient(params, data, &batch, t_train, layout, ExecMode::Sequential)
}

/// Gradient of the mini-batch loss (normalized by the batch size) over the
/// regions in `batch`. Per-region work may run in parallel; the reduction
/// order is fixed by the batch order, so results do not depend on the worker
/// count.
pub fn batch_loss_gradient(
    params: &ParamSet,
    data: &[RegionDataset],
    batch: &[usize],
    t_train: usize,
    layout: &ParamLayout,
    mode: ExecMode,
) -> Result<(f64, Vec<f64>), LearnError> {
    let inv_mt = 1.0 / (batch.len() as f64 * t_train as f64);
    let pieces = exec::map_collect(mode, batch, |&r| {
        let ds = &data[r];
        let rp = &params.per_region[&ds.region_id];
        let x_smooth = ds.smoothed_deaths();
        let (l, ng) = adjoint::region_loss_grad(
            &params.global,
            &rp.mobility_map,
            &rp.init,
            &ds.mobility,
            &x_smooth,
            ds.population,
            t_train,
            inv_mt,
        );
        (r, l, ng)
    });
    let mut total = 0.0;
    let mut region_grads = Vec::with_capacity(pieces.len());
    for (r, l, ng) in pieces {
        total += l;
        region_grads.push((r, ng));
    }
    let grad = packing::chain_to_packed(params, layout, &region_grads);
    Ok((total, grad))
}

/// Rolls the fitted model through `train_t + test_t` days of observed
/// mobility and scores the normalized MSE on the test window only. Returns
/// the per-region MSE keyed by region id.
pub fn evaluate_test(
    params: &ParamSet,
    data: &[RegionDataset],
    train_t: usize,
    test_t: usize,
) -> Result<BTreeMap<String, f64>, LearnError> {
    if test_t == 0 {
        return Err(LearnError::EmptyTestWindow);
    }
    params.validate()?;
    let total_t = train_t + test_t;
    check_region_coverage(params, data, total_t + 1)?;
    let mut out = BTreeMap::new();
    for ds in data {
        let rp = &params.per_region[&ds.region_id];
        let d = adjoint::forward_deaths(
            &params.global,
            &rp.mobility_map,
            &rp.init,
            &ds.mobility,
            total_t,
        );
        let xhat = rolling_mean(&d);
        let x_smooth = ds.smoothed_deaths();
        let inv_n = 1.0 / ds.population;
        let mut mse = 0.0;
        for t in (train_t + 1)..=total_t {
            let r = (x_smooth[t] - xhat[t]) * inv_n;
            mse += r * r;
        }
        out.insert(ds.region_id.clone(), mse / test_t as f64);
    }
    Ok(out)
}

fn log_uniform(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        return range.0;
    }
    (rng.random_range(range.0.ln()..range.1.ln())).exp()
}

fn uniform(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        return range.0;
    }
    rng.random_range(range.0..range.1)
}

/// Draws an initial parameter set: clinical rates uniformly from the
/// configured plausibility intervals, per-region parameters log-uniform (or
/// uniform for the exponents). `D0` is pinned to the observed day-0 deaths.
pub fn init_params(
    data: &[RegionDataset],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<ParamSet, LearnError> {
    cfg.init.validate()?;
    let categories = cfg.category_names(data);
    let global = GlobalParams {
        rho_ei: uniform(rng, cfg.init.rho_ei),
        rho_ea: uniform(rng, cfg.init.rho_ea),
        rho_ir: uniform(rng, cfg.init.rho_ir),
        rho_ih: uniform(rng, cfg.init.rho_ih),
        rho_ar: uniform(rng, cfg.init.rho_ar),
        rho_hr: uniform(rng, cfg.init.rho_hr),
        alpha_d: uniform(rng, cfg.init.alpha_d),
    };
    let mut per_region = BTreeMap::new();
    for ds in data {
        ds.validate()?;
        let k = ds.mobility[0].len();
        let n = ds.population;
        let theta: Vec<f64> = (0..k)
            .map(|_| log_uniform(rng, cfg.init.theta_times_pop) / n)
            .collect();
        let alpha: Vec<f64> = (0..k).map(|_| uniform(rng, cfg.init.alpha_exponent)).collect();
        let b = log_uniform(rng, cfg.init.b_times_pop) / n;
        let gamma_a = log_uniform(rng, cfg.init.gamma_a);
        let e0 = n * log_uniform(rng, cfg.init.compartment_frac);
        let i0 = n * log_uniform(rng, cfg.init.compartment_frac);
        let a0 = n * log_uniform(rng, cfg.init.compartment_frac);
        let h0 = n * log_uniform(rng, cfg.init.hospital_frac);
        let r0 = n * log_uniform(rng, cfg.init.compartment_frac);
        let d0 = clean_cumulative(&ds.deaths_raw)[0];
        per_region.insert(
            ds.region_id.clone(),
            RegionParams {
                mobility_map: MobilityMapParams {
                    theta,
                    alpha,
                    b,
                    gamma_a,
                    categories: categories.clone(),
                },
                init: crate::epimodel::RegionInit {
                    s0: cfg.init.s0_frac * n,
                    e0,
                    i0,
                    a0,
                    h0,
                    r0,
                    d0,
                },
            },
        );
    }
    Ok(ParamSet { global, per_region })
}

/// One trial's summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub trial: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub failed: bool,
}

/// One logged epoch; epoch 0 records the initialization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub trial: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

/// Training output: the winning parameters plus the full per-trial record.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ParamSet,
    pub best_trial: usize,
    pub trials: Vec<TrialReport>,
    pub history: Vec<EpochRecord>,
}

struct TrialResult {
    params: ParamSet,
    report: TrialReport,
    history: Vec<EpochRecord>,
}

/// Runs `cfg.trials` independent Adam optimizations (in parallel under the
/// default execution mode) and returns the trial with the lowest held-out
/// loss. Deterministic for a fixed seed regardless of worker count.
pub fn train(data: &[RegionDataset], cfg: &TrainConfig) -> Result<TrainOutcome, LearnError> {
    train_with_mode(data, cfg, ExecMode::Parallel)
}

pub fn train_with_mode(
    data: &[RegionDataset],
    cfg: &TrainConfig,
    mode: ExecMode,
) -> Result<TrainOutcome, LearnError> {
    cfg.validate(data)?;
    let layout = ParamLayout::from_datasets(data, cfg.category_names(data), cfg.learn_s0)?;
    let results = exec::map_indices(mode, cfg.trials, |trial| {
        run_trial(trial, data, cfg, &layout, mode)
    });

    let mut trials = Vec::with_capacity(cfg.trials);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut results_ok = Vec::with_capacity(cfg.trials);
    for res in results {
        let res = res?;
        trials.push(res.report.clone());
        history.extend(res.history.iter().cloned());
        if !res.report.failed && res.report.test_loss.is_finite() {
            let candidate = (res.report.trial, res.report.test_loss);
            best = match best {
                Some((_, best_loss)) if best_loss <= candidate.1 => best,
                _ => Some((candidate.0, candidate.1)),
            };
        }
        results_ok.push(res);
    }
    let (best_trial, _) = best.ok_or(LearnError::AllTrialsFailed(cfg.trials))?;
    let best_params = results_ok
        .into_iter()
        .find(|r| r.report.trial == best_trial)
        .expect("winning trial present")
        .params;
    Ok(TrainOutcome {
        best: best_params,
        best_trial,
        trials,
        history,
    })
}

fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn run_trial(
    trial: usize,
    data: &[RegionDataset],
    cfg: &TrainConfig,
    layout: &ParamLayout,
    mode: ExecMode,
) -> Result<TrialResult, LearnError> {
    use rand::seq::SliceRandom;

    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.rng_seed, trial));
    let params0 = init_params(data, cfg, &mut rng)?;
    let mut x = pack(&params0, layout)?;
    let mut adam = adam::Adam::new(cfg.learning_rate, x.len());
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut failed = false;

    let aggregate_test = |params: &ParamSet| -> Result<f64, LearnError> {
        let per_region = evaluate_test(params, data, cfg.train_days, cfg.test_days)?;
        Ok(per_region.values().sum::<f64>() / per_region.len() as f64)
    };

    let init_train = loss(&params0, data, cfg.train_days)?;
    let init_test = aggregate_test(&params0)?;
    history.push(EpochRecord {
        trial,
        epoch: 0,
        train_loss: init_train,
        test_loss: init_test,
    });

    let mut order: Vec<usize> = (0..data.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        if cfg.lr_decay < 1.0 {
            adam.set_learning_rate(cfg.learning_rate * cfg.lr_decay.powi(epoch as i32 - 1));
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let params = unpack(&x, layout);
            let (l, grad) =
                batch_loss_gradient(&params, data, batch, cfg.train_days, layout, mode)?;
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                failed = true;
                break 'epochs;
            }
            adam.update(&mut x, &grad);
        }
        let params = unpack(&x, layout);
        let train_loss = loss(&params, data, cfg.train_days)?;
        let test_loss = aggregate_test(&params)?;
        if !train_loss.is_finite() || !test_loss.is_finite() {
            failed = true;
            break;
        }
        history.push(EpochRecord {
            trial,
            epoch,
            train_loss,
            test_loss,
        });
    }

    let params = unpack(&x, layout);
    let (train_loss, test_loss) = if failed {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            history.last().map(|h| h.train_loss).unwrap_or(init_train),
            history.last().map(|h| h.test_loss).unwrap_or(init_test),
        )
    };
    Ok(TrialResult {
        params,
        report: TrialReport {
            trial,
            train_loss,
            test_loss,
            failed,
        },
        history,
    })
}
