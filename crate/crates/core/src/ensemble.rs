//! Seeded parallel ensembles and exponential-rate fitting.
//!
//! Trajectory `i` always uses stream `i` of the master seed. Trajectories run
//! in fixed chunks on a rayon pool; the results of each chunk are folded into
//! the statistics in index order on the calling thread, so the output does not
//! depend on the worker count.

use rayon::prelude::*;

use crate::engine::{run_trajectory, RngStream, SimulationParams, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::models::{Model, Observable};

/// Trajectories per parallel chunk. Fixed so results never depend on workers.
const CHUNK: usize = 64;

/// Minimum number of points inside a fit window.
pub const MIN_FIT_POINTS: usize = 10;

/// Default fit windows stop once `mean − 2·se` drops below this.
pub const FIT_FLOOR: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleConfig {
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Number of contiguous trajectory batches kept for jackknife errors.
    pub batches: usize,
}

impl EnsembleConfig {
    pub fn new(n_trajectories: usize, master_seed: u64) -> Self {
        Self {
            n_trajectories,
            master_seed,
            workers: None,
            batches: 20,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }
}

/// Per-trajectory facts kept after the full record is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub jump_times: Vec<f64>,
    /// Last recorded value of each observable.
    pub final_values: Vec<f64>,
}

impl TrajectorySummary {
    pub fn first_jump(&self) -> Option<f64> {
        self.jump_times.first().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStatistics {
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    /// `mean[j][i]`: observable `j` at `times[i]`.
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub n_trajectories: usize,
    pub n_failed: usize,
    pub total_jumps: usize,
    pub stride: usize,
    pub master_seed: u64,
    pub summaries: Vec<TrajectorySummary>,
    /// `batch_sums[b][j][i]` and the trajectory count of each batch.
    pub batch_sums: Vec<Vec<Vec<f64>>>,
    pub batch_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub rate: f64,
    /// Intercept of the fitted line `ln v = intercept − rate·t`.
    pub intercept: f64,
    pub window: (f64, f64),
    pub residual_rms: f64,
    pub n_points: usize,
}

/// A fitted rate with its jackknife standard error over trajectory batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub fit: FitResult,
    pub std_error: f64,
}

struct Accumulator {
    count: usize,
    mean: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
    batch_sums: Vec<Vec<Vec<f64>>>,
    batch_sizes: Vec<usize>,
    total_jumps: usize,
}

impl Accumulator {
    fn new(n_obs: usize, n_points: usize, batches: usize) -> Self {
        let zeros = vec![vec![0.0; n_points]; n_obs];
        Self {
            count: 0,
            mean: zeros.clone(),
            m2: zeros.clone(),
            batch_sums: vec![zeros; batches],
            batch_sizes: vec![0; batches],
            total_jumps: 0,
        }
    }

    fn add(&mut self, rec: &TrajectoryRecord, batch: usize) {
        self.count += 1;
        self.total_jumps += rec.jumps.len();
        let n = self.count as f64;
        for (j, values) in rec.values.iter().enumerate() {
            let mean = &mut self.mean[j];
            let m2 = &mut self.m2[j];
            let sums = &mut self.batch_sums[batch][j];
            for (i, &x) in values.iter().enumerate() {
                let delta = x - mean[i];
                mean[i] += delta / n;
                m2[i] += delta * (x - mean[i]);
                sums[i] += x;
            }
        }
        self.batch_sizes[batch] += 1;
    }

    fn std_error(&self) -> Vec<Vec<f64>> {
        let n = self.count;
        self.m2
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&m2| {
                        if n < 2 {
                            0.0
                        } else {
                            (m2.max(0.0) / (n - 1) as f64 / n as f64).sqrt()
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn batch_of(index: usize, n: usize, batches: usize) -> usize {
    index * batches / n
}

/// Runs `config.n_trajectories` trajectories of `model` and aggregates them.
pub fn run_ensemble(
    model: &Model,
    sim: &SimulationParams,
    config: &EnsembleConfig,
) -> Result<EnsembleStatistics> {
    let n = config.n_trajectories;
    if n == 0 {
        return Err(Error::InvalidParameter("n_trajectories must be >= 1".into()));
    }
    sim.validate(model)?;
    let batches = config.batches.clamp(1, n);
    let times = sim.record_times();
    let mut acc = Accumulator::new(sim.observables.len(), times.len(), batches);
    let mut summaries = Vec::with_capacity(n);
    let mut failures: Vec<Error> = Vec::new();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;

    let max_failures = n / 100;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let records: Vec<Result<TrajectoryRecord>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| run_trajectory(model, sim, RngStream::new(config.master_seed, i as u64)))
                .collect()
        });
        for (offset, rec) in records.into_iter().enumerate() {
            match rec {
                Ok(rec) => {
                    acc.add(&rec, batch_of(start + offset, n, batches));
                    summaries.push(TrajectorySummary {
                        jump_times: rec.jumps.iter().map(|j| j.time).collect(),
                        final_values: rec.values.iter().map(|v| *v.last().unwrap_or(&f64::NAN)).collect(),
                    });
                }
                Err(e) => {
                    log::warn!("trajectory {} failed: {e}", start + offset);
                    failures.push(e);
                    if failures.len() > max_failures {
                        return Err(Error::EnsembleFailure {
                            failed: failures.len(),
                            total: n,
                            first: Box::new(failures.swap_remove(0)),
                        });
                    }
                }
            }
        }
    }

    let std_error = acc.std_error();
    Ok(EnsembleStatistics {
        times,
        observables: sim.observables.clone(),
        mean: acc.mean,
        std_error,
        n_trajectories: acc.count,
        n_failed: failures.len(),
        total_jumps: acc.total_jumps,
        stride: sim.stride(),
        master_seed: config.master_seed,
        summaries,
        batch_sums: acc.batch_sums,
        batch_sizes: acc.batch_sizes,
    })
}

impl EnsembleStatistics {
    fn index(&self, obs: Observable) -> Result<usize> {
        self.observables
            .iter()
            .position(|o| *o == obs)
            .ok_or_else(|| Error::InvalidParameter(format!("observable `{obs}` was not recorded")))
    }

    pub fn mean_of(&self, obs: Observable) -> Result<&[f64]> {
        Ok(&self.mean[self.index(obs)?])
    }

    pub fn std_error_of(&self, obs: Observable) -> Result<&[f64]> {
        Ok(&self.std_error[self.index(obs)?])
    }

    /// Mean of `obs` over all trajectories except batch `skip`.
    fn leave_one_out(&self, j: usize, skip: usize) -> Vec<f64> {
        let kept = (self.n_trajectories - self.batch_sizes[skip]) as f64;
        (0..self.times.len())
            .map(|i| {
                let total: f64 = self.batch_sums.iter().map(|b| b[j][i]).sum();
                (total - self.batch_sums[skip][j][i]) / kept
            })
            .collect()
    }

    /// Fits `transform(mean)` on `window`, with a delete-one-batch jackknife
    /// standard error on the rate.
    pub fn fit_rate<F>(&self, obs: Observable, window: (f64, f64), transform: F) -> Result<RateEstimate>
    where
        F: Fn(f64) -> f64,
    {
        let j = self.index(obs)?;
        let series: Vec<f64> = self.mean[j].iter().map(|&v| transform(v)).collect();
        let fit = fit_exponential_rate(&self.times, &series, window)?;
        let b = self.batch_sizes.iter().filter(|&&s| s > 0).count();
        if b < 2 {
            return Ok(RateEstimate {
                fit,
                std_error: f64::NAN,
            });
        }
        let mut rates = Vec::with_capacity(b);
        for skip in (0..self.batch_sizes.len()).filter(|&k| self.batch_sizes[k] > 0) {
            let loo: Vec<f64> = self.leave_one_out(j, skip).into_iter().map(&transform).collect();
            rates.push(fit_exponential_rate(&self.times, &loo, window)?.rate);
        }
        let avg = rates.iter().sum::<f64>() / b as f64;
        let var = rates.iter().map(|r| (r - avg).powi(2)).sum::<f64>() * (b - 1) as f64 / b as f64;
        Ok(RateEstimate {
            fit,
            std_error: var.sqrt(),
        })
    }

    /// Time average of the mean of `obs` over `[t_lo, t_hi]`, with the
    /// standard error of that average across trajectories (jackknife).
    pub fn time_average(&self, obs: Observable, window: (f64, f64)) -> Result<(f64, f64)> {
        let j = self.index(obs)?;
        let idx: Vec<usize> = (0..self.times.len())
            .filter(|&i| self.times[i] >= window.0 && self.times[i] <= window.1)
            .collect();
        if idx.is_empty() {
            return Err(Error::TooFewPoints {
                t_lo: window.0,
                t_hi: window.1,
                found: 0,
                needed: 1,
            });
        }
        let avg = |v: &[f64]| idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64;
        let value = avg(&self.mean[j]);
        let active: Vec<usize> = (0..self.batch_sizes.len()).filter(|&k| self.batch_sizes[k] > 0).collect();
        let b = active.len();
        if b < 2 {
            return Ok((value, f64::NAN));
        }
        let est: Vec<f64> = active.iter().map(|&k| avg(&self.leave_one_out(j, k))).collect();
        let m = est.iter().sum::<f64>() / b as f64;
        let var = est.iter().map(|e| (e - m).powi(2)).sum::<f64>() * (b - 1) as f64 / b as f64;
        Ok((value, var.sqrt()))
    }
}

/// Least-squares line through `ln(values)` against `times` on `window`
/// (inclusive); `rate` is minus the slope.
pub fn fit_exponential_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<FitResult> {
    let (t_lo, t_hi) = window;
    if !(t_lo < t_hi) {
        return Err(Error::InvalidParameter(format!("fit window ({t_lo}, {t_hi}) is empty")));
    }
    if times.len() != values.len() {
        return Err(Error::InvalidParameter(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_lo && **t <= t_hi)
        .map(|(t, v)| (*t, *v))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            t_lo,
            t_hi,
            found: points.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    if let Some(&(time, value)) = points.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveValues { time, value });
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(t, v) in &points {
        let dt = t - t_mean;
        sxx += dt * dt;
        sxy += dt * (v.ln() - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let rss: f64 = points
        .iter()
        .map(|&(t, v)| (v.ln() - intercept - slope * t).powi(2))
        .sum();
    Ok(FitResult {
        rate: -slope,
        intercept,
        window,
        residual_rms: (rss / n).sqrt(),
        n_points: points.len(),
    })
}

/// Default window: skip `skip` time units, stop before the first point where
/// `value − 2·se < FIT_FLOOR`.
pub fn default_fit_window(times: &[f64], values: &[f64], std_errors: &[f64], skip: f64) -> (f64, f64) {
    let t_lo = times.iter().copied().find(|&t| t >= skip).unwrap_or(skip);
    let mut t_hi = t_lo;
    for ((&t, &v), &se) in times.iter().zip(values).zip(std_errors) {
        if t < t_lo {
            continue;
        }
        if v - 2.0 * se < FIT_FLOOR {
            break;
        }
        t_hi = t;
    }
    (t_lo, t_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DetectorParams, InitialSystem, ModelSpec};
    use approx::assert_relative_eq;

    fn detector() -> Model {
        Model::new(ModelSpec::DetectorMeasurement {
            detector: DetectorParams::new(10.0, 1.0, 1.0),
            omega_a: 1.0,
            initial: InitialSystem::Superposition,
        })
        .unwrap()
    }

    fn sim(t_max: f64) -> SimulationParams {
        SimulationParams::new(0.1, t_max, vec![Observable::RhoAa, Observable::RhoGg])
    }

    #[test]
    fn single_trajectory_ensemble_is_the_trajectory() {
        let m = detector();
        let s = sim(20.0);
        let stats = run_ensemble(&m, &s, &EnsembleConfig::new(1, 99)).unwrap();
        let rec = run_trajectory(&m, &s, RngStream::new(99, 0)).unwrap();
        assert_eq!(stats.mean, rec.values);
        assert!(stats.std_error.iter().flatten().all(|&e| e == 0.0));
        assert_eq!(stats.total_jumps, rec.jumps.len());
        assert_eq!(stats.times, rec.times);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let m = detector();
        let s = sim(15.0);
        let one = run_ensemble(&m, &s, &EnsembleConfig::new(150, 5).with_workers(1)).unwrap();
        let three = run_ensemble(&m, &s, &EnsembleConfig::new(150, 5).with_workers(3)).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn std_error_matches_sample_formula() {
        let m = detector();
        let s = sim(10.0);
        let stats = run_ensemble(&m, &s, &EnsembleConfig::new(30, 8)).unwrap();
        let recs: Vec<_> = (0..30)
            .map(|i| run_trajectory(&m, &s, RngStream::new(8, i)).unwrap())
            .collect();
        for i in [0, 37, 100] {
            let xs: Vec<f64> = recs.iter().map(|r| r.values[0][i]).collect();
            let mean = xs.iter().sum::<f64>() / 30.0;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 29.0;
            assert_relative_eq!(stats.mean[0][i], mean, max_relative = 1e-12, epsilon = 1e-15);
            assert_relative_eq!(stats.std_error[0][i], (var / 30.0).sqrt(), max_relative = 1e-9, epsilon = 1e-15);
        }
        for v in stats.mean.iter().flatten() {
            assert!((-1e-12..=1.0 + 1e-12).contains(v));
        }
    }

    #[test]
    fn std_error_scales_as_inverse_root_n() {
        let m = detector();
        let s = sim(20.0);
        let small = run_ensemble(&m, &s, &EnsembleConfig::new(250, 1)).unwrap();
        let large = run_ensemble(&m, &s, &EnsembleConfig::new(1000, 2)).unwrap();
        let se = |st: &EnsembleStatistics| {
            let v = st.std_error_of(Observable::RhoGg).unwrap();
            v[50..].iter().sum::<f64>() / (v.len() - 50) as f64
        };
        let ratio = se(&small) / se(&large);
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn too_many_failures_abort() {
        let m = Model::new(ModelSpec::DetectorMeasurement {
            detector: DetectorParams::new(100.0, 10.0, 1.0),
            omega_a: 1.0,
            initial: InitialSystem::Ground,
        })
        .unwrap();
        let r = run_ensemble(&m, &sim(5.0), &EnsembleConfig::new(10, 0));
        assert!(matches!(r, Err(Error::EnsembleFailure { .. })));
        assert!(run_ensemble(&m, &sim(5.0), &EnsembleConfig::new(0, 0)).is_err());
    }

    #[test]
    fn fit_exact_exponential() {
        let times: Vec<f64> = (0..=300).map(|i| i as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| 3.0 * (-0.01 * t).exp()).collect();
        let fit = fit_exponential_rate(&times, &values, (10.0, 250.0)).unwrap();
        assert!((fit.rate - 0.01).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);
        assert_eq!(fit.n_points, 241);
    }

    #[test]
    fn fit_constant_and_errors() {
        let times: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let flat = vec![0.4; 20];
        assert_eq!(fit_exponential_rate(&times, &flat, (0.0, 19.0)).unwrap().rate, 0.0);
        let mut bad = flat.clone();
        bad[7] = 0.0;
        assert!(matches!(
            fit_exponential_rate(&times, &bad, (0.0, 19.0)),
            Err(Error::NonPositiveValues { time, .. }) if time == 7.0
        ));
        assert!(matches!(
            fit_exponential_rate(&times, &flat, (0.0, 5.0)),
            Err(Error::TooFewPoints { found: 6, .. })
        ));
        assert!(fit_exponential_rate(&times, &flat, (5.0, 5.0)).is_err());
    }

    #[test]
    fn default_window_rules() {
        let times: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| (-0.05 * t).exp()).collect();
        let se = vec![0.005; 100];
        let (lo, hi) = default_fit_window(&times, &values, &se, 10.0);
        assert_eq!(lo, 10.0);
        // e^{-0.05 t} − 0.01 ≥ 0.02  ⇔  t ≤ 20 ln(1/0.03) ≈ 70.1
        assert_eq!(hi, 70.0);
    }

    #[test]
    fn jackknife_errors_on_a_conserved_population() {
        // measurement does not disturb the mean ground population
        let m = detector();
        let s = SimulationParams::new(0.1, 30.0, vec![Observable::RhoGg]);
        let stats = run_ensemble(&m, &s, &EnsembleConfig::new(400, 3)).unwrap();
        let est = stats.fit_rate(Observable::RhoGg, (5.0, 30.0), |v| v).unwrap();
        assert!(est.std_error > 0.0);
        assert!(est.fit.rate.abs() < 5.0 * est.std_error, "{est:?}");
        let (avg, se) = stats.time_average(Observable::RhoGg, (20.0, 30.0)).unwrap();
        assert!(se > 0.0 && se < 0.05);
        assert!((avg - 0.5).abs() < 5.0 * se, "{avg} ± {se}");
    }
}
