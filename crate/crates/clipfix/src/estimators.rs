//! The four streaming contact indicators evaluated per 1 kHz tick:
//! CEI (rho_e), CCI (rho_c with z-score confidence interval), and the two
//! comparison baselines (constant force threshold, force change rate).

use crate::signal::{guarded_ratio_diff, CumulativeStats};

/// 99.5% two-sided confidence interval.
pub const DEFAULT_Z: f64 = 2.807;
/// Valid rho_c samples required before the CI test becomes active.
pub const DEFAULT_WARMUP_MIN: u64 = 100;
/// Floor on the rho_c standard deviation estimate. Calibrated to the
/// smoothed-increment noise scale so that late shrinkage of the push
/// increments cannot collapse the confidence interval onto sensor noise.
pub const DEFAULT_RHO_SIGMA_FLOOR: f64 = 0.15;
/// Minimum per-tick push increment that yields an informative rho_c sample.
/// Below this the ratio is dominated by sensor noise and the tick is skipped.
pub const DEFAULT_CCI_DEN_EPSILON: f64 = 5e-3;
/// Contact establishment threshold E.
pub const DEFAULT_E: f64 = 0.75;

/// Edge verdict of a contact-change estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeVerdict {
    None,
    Detached,
    ReEstablished,
}

/// Internal state of the CI-based estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiState {
    Warming,
    Stable,
    Detached,
    ReEstablished,
}

#[derive(Debug, Clone)]
pub struct CciConfig {
    pub z: f64,
    pub warmup_min: u64,
    pub sigma_floor: f64,
    pub den_epsilon: f64,
}

impl Default for CciConfig {
    fn default() -> Self {
        Self {
            z: DEFAULT_Z,
            warmup_min: DEFAULT_WARMUP_MIN,
            sigma_floor: DEFAULT_RHO_SIGMA_FLOOR,
            den_epsilon: DEFAULT_CCI_DEN_EPSILON,
        }
    }
}

/// Contact change indicator: rho_c = d f_c / d f_push as a ratio of one-tick
/// increments, tested against the z-score CI of its cumulative statistics.
///
/// Samples that trigger a verdict are compared against, never absorbed into,
/// the prediction; statistics freeze once the contact is considered detached.
#[derive(Debug, Clone)]
pub struct CciEstimator {
    cfg: CciConfig,
    stats: CumulativeStats,
    state: CiState,
    last: Option<(f64, f64)>,
    /// Last computed rho_c, for tracing. NaN until the first valid sample.
    pub rho: f64,
}

impl CciEstimator {
    pub fn new(cfg: CciConfig) -> Self {
        let stats = CumulativeStats::new(cfg.sigma_floor);
        Self {
            cfg,
            stats,
            state: CiState::Warming,
            last: None,
            rho: f64::NAN,
        }
    }

    pub fn state(&self) -> CiState {
        self.state
    }

    pub fn mean(&self) -> f64 {
        self.stats.mean()
    }

    pub fn sigma(&self) -> f64 {
        self.stats.sigma()
    }

    /// Feed one tick of (smoothed measured force, commanded push force).
    pub fn update(&mut self, f_c_smoothed: f64, f_push: f64) -> ChangeVerdict {
        let Some((last_fc, last_fp)) = self.last.replace((f_c_smoothed, f_push)) else {
            return ChangeVerdict::None;
        };
        let Some(rho) = guarded_ratio_diff(
            f_c_smoothed - last_fc,
            f_push - last_fp,
            self.cfg.den_epsilon,
        ) else {
            return ChangeVerdict::None;
        };
        self.rho = rho;
        match self.state {
            CiState::Warming => {
                self.stats.update(rho);
                if self.stats.count() >= self.cfg.warmup_min {
                    self.state = CiState::Stable;
                }
                ChangeVerdict::None
            }
            CiState::Stable => {
                if rho < self.stats.mean() - self.cfg.z * self.stats.sigma() {
                    self.state = CiState::Detached;
                    ChangeVerdict::Detached
                } else {
                    self.stats.update(rho);
                    ChangeVerdict::None
                }
            }
            CiState::Detached => {
                if rho > self.stats.mean() + self.cfg.z * self.stats.sigma() {
                    self.state = CiState::ReEstablished;
                    ChangeVerdict::ReEstablished
                } else {
                    ChangeVerdict::None
                }
            }
            CiState::ReEstablished => ChangeVerdict::None,
        }
    }
}

impl Default for CciEstimator {
    fn default() -> Self {
        Self::new(CciConfig::default())
    }
}

/// Contact establishment verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstablishVerdict {
    None,
    Established,
}

/// Minimum push force before the establishment ratio is tested, N. Below
/// this level the ratio is dominated by noise and the phantom inertial term
/// (which both scale as 1/f_push), so testing it would fire spuriously while
/// the push ramps in.
pub const DEFAULT_CEI_MIN_PUSH: f64 = 1.0;

/// Contact establishment indicator: rho_e = f_c / f_push against threshold E.
#[derive(Debug, Clone)]
pub struct CeiEstimator {
    pub threshold: f64,
    pub min_push: f64,
    established: bool,
    /// Last computed rho_e, for tracing.
    pub rho: f64,
}

impl CeiEstimator {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            min_push: DEFAULT_CEI_MIN_PUSH,
            established: false,
            rho: f64::NAN,
        }
    }

    pub fn established(&self) -> bool {
        self.established
    }

    pub fn update(&mut self, f_c_smoothed: f64, f_push: f64) -> EstablishVerdict {
        if f_push < self.min_push {
            return EstablishVerdict::None;
        }
        self.rho = f_c_smoothed / f_push;
        if !self.established && self.rho > self.threshold {
            self.established = true;
            EstablishVerdict::Established
        } else {
            EstablishVerdict::None
        }
    }
}

impl Default for CeiEstimator {
    fn default() -> Self {
        Self::new(DEFAULT_E)
    }
}

/// Constant contact force threshold baseline F_c: arms once the force exceeds
/// the threshold, reports the first drop back below it.
#[derive(Debug, Clone)]
pub struct ThresholdBaseline {
    pub f_threshold: f64,
    armed: bool,
    fired: bool,
}

impl ThresholdBaseline {
    pub fn new(f_threshold: f64) -> Self {
        Self {
            f_threshold,
            armed: false,
            fired: false,
        }
    }

    pub fn armed(&self) -> bool {
        self.armed
    }

    pub fn update(&mut self, f_c_smoothed: f64) -> ChangeVerdict {
        if f_c_smoothed > self.f_threshold {
            self.armed = true;
        } else if self.armed && !self.fired {
            self.fired = true;
            return ChangeVerdict::Detached;
        }
        ChangeVerdict::None
    }
}

/// Contact force change rate baseline df_c/dt, run through the same
/// z-score CI machinery as the CCI for a fair comparison.
#[derive(Debug, Clone)]
pub struct DerivativeBaseline {
    cfg: CciConfig,
    stats: CumulativeStats,
    state: CiState,
    last: Option<f64>,
}

impl DerivativeBaseline {
    pub fn new(cfg: CciConfig) -> Self {
        let stats = CumulativeStats::new(cfg.sigma_floor);
        Self {
            cfg,
            stats,
            state: CiState::Warming,
            last: None,
        }
    }

    pub fn state(&self) -> CiState {
        self.state
    }

    pub fn update(&mut self, f_c_smoothed: f64, dt: f64) -> ChangeVerdict {
        let Some(last) = self.last.replace(f_c_smoothed) else {
            return ChangeVerdict::None;
        };
        let rate = (f_c_smoothed - last) / dt;
        match self.state {
            CiState::Warming => {
                self.stats.update(rate);
                if self.stats.count() >= self.cfg.warmup_min {
                    self.state = CiState::Stable;
                }
                ChangeVerdict::None
            }
            CiState::Stable => {
                if rate < self.stats.mean() - self.cfg.z * self.stats.sigma() {
                    self.state = CiState::Detached;
                    ChangeVerdict::Detached
                } else {
                    self.stats.update(rate);
                    ChangeVerdict::None
                }
            }
            CiState::Detached => {
                if rate > self.stats.mean() + self.cfg.z * self.stats.sigma() {
                    self.state = CiState::ReEstablished;
                    ChangeVerdict::ReEstablished
                } else {
                    ChangeVerdict::None
                }
            }
            CiState::ReEstablished => ChangeVerdict::None,
        }
    }
}

impl Default for DerivativeBaseline {
    fn default() -> Self {
        Self::new(CciConfig::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed_constant_rho(est: &mut CciEstimator, n: usize) {
        // rho_c = 1 stream: both forces ramp together
        for i in 0..=n {
            let f = 0.01 * i as f64;
            est.update(f, f);
        }
    }

    #[test]
    fn cci_detach_on_drop_after_stable_stream() {
        let mut est = CciEstimator::default();
        feed_constant_rho(&mut est, 500);
        assert_eq!(est.state(), CiState::Stable);
        // force flatlines while push keeps rising: rho drops to 0...
        // with mu ~= 1 and sigma at the floor, 0 < 1 - z*sigma fires at once
        let f_stuck = 5.0;
        let mut verdict = ChangeVerdict::None;
        for i in 501..510 {
            verdict = est.update(f_stuck - 5.0, 0.01 * i as f64);
            if verdict != ChangeVerdict::None {
                break;
            }
        }
        assert_eq!(verdict, ChangeVerdict::Detached);
    }

    #[test]
    fn cci_no_verdict_during_warmup() {
        let mut est = CciEstimator::default();
        for i in 0..=50 {
            let f = 0.01 * i as f64;
            assert_eq!(est.update(0.0, f), ChangeVerdict::None);
        }
        assert_eq!(est.state(), CiState::Warming);
    }

    #[test]
    fn cci_undefined_ticks_skipped() {
        let mut est = CciEstimator::default();
        feed_constant_rho(&mut est, 500);
        let sigma_before = est.sigma();
        // push frozen: denominator below epsilon, no state change
        for _ in 0..100 {
            assert_eq!(est.update(123.0, 5.0), ChangeVerdict::None);
        }
        assert_eq!(est.state(), CiState::Stable);
        assert_eq!(est.sigma(), sigma_before);
    }

    #[test]
    fn cci_outlier_excluded_from_stats() {
        let mut est = CciEstimator::default();
        feed_constant_rho(&mut est, 500);
        let mu = est.mean();
        let sigma = est.sigma();
        // a triggering sample must not contaminate mu/sigma
        let v = est.update(-10.0, 5.01 + 0.01);
        assert_eq!(v, ChangeVerdict::Detached);
        assert_eq!(est.mean(), mu);
        assert_eq!(est.sigma(), sigma);
    }

    #[test]
    fn cci_reestablish_after_detach() {
        let mut est = CciEstimator::default();
        feed_constant_rho(&mut est, 500);
        let mut fp = 5.0;
        fp += 0.01;
        assert_eq!(est.update(0.0, fp), ChangeVerdict::Detached);
        // flat force during free flight: no verdict
        for _ in 0..50 {
            fp += 0.01;
            assert_eq!(est.update(0.0, fp), ChangeVerdict::None);
        }
        // rear contact: force jumps much faster than push
        fp += 0.01;
        assert_eq!(est.update(2.0, fp), ChangeVerdict::ReEstablished);
        // terminal
        fp += 0.01;
        assert_eq!(est.update(4.0, fp), ChangeVerdict::None);
    }

    #[test]
    fn cci_scale_invariance() {
        // multiplying both traces by k > 0 yields identical verdict ticks,
        // provided the force-dimensioned denominator guard scales along
        let trace: Vec<(f64, f64)> = (0..700)
            .map(|i| {
                let fp = 0.01 * i as f64;
                let fc = if i < 600 { fp } else { 0.0 };
                (fc, fp)
            })
            .collect();
        let verdict_tick = |k: f64| {
            let mut est = CciEstimator::new(CciConfig {
                den_epsilon: k * DEFAULT_CCI_DEN_EPSILON,
                ..CciConfig::default()
            });
            trace
                .iter()
                .position(|(fc, fp)| est.update(k * fc, k * fp) == ChangeVerdict::Detached)
        };
        let base = verdict_tick(1.0);
        assert!(base.is_some());
        for k in [0.5, 2.0, 10.0] {
            assert_eq!(verdict_tick(k), base);
        }
    }

    #[test]
    fn cei_equilibrium_establishes() {
        let mut est = CeiEstimator::default();
        assert_eq!(est.update(6.0, 6.0), EstablishVerdict::Established);
        assert!(est.established());
        // fires once
        assert_eq!(est.update(6.0, 6.0), EstablishVerdict::None);
    }

    #[test]
    fn cei_phantom_force_not_established() {
        // free flight with defaults: f_push = 6, a = f_push/(m + m_e),
        // phantom = m_e * a = 1.0 N -> rho_e = 1/6 < 0.75
        let m = 0.5f64;
        let m_e = 0.1f64;
        let f_push = 6.0;
        let phantom = m_e * f_push / (m + m_e);
        assert!((phantom - 1.0).abs() < 1e-12);
        let mut est = CeiEstimator::default();
        assert_eq!(est.update(phantom, f_push), EstablishVerdict::None);
        assert!((est.rho - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cei_zero_push_noop() {
        let mut est = CeiEstimator::default();
        assert_eq!(est.update(5.0, 0.0), EstablishVerdict::None);
        assert!(!est.established());
    }

    #[test]
    fn threshold_baseline_arm_then_detach() {
        let mut b = ThresholdBaseline::new(3.0);
        let mut verdicts = Vec::new();
        for f in [0.5, 2.0, 5.0, 8.0, 6.0, 2.5, 1.0, 4.0, 2.0] {
            verdicts.push(b.update(f));
        }
        let hits: Vec<usize> = verdicts
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == ChangeVerdict::Detached)
            .map(|(i, _)| i)
            .collect();
        // first crossing below reported, the later one ignored
        assert_eq!(hits, vec![5]);
    }

    #[test]
    fn threshold_baseline_never_armed() {
        let mut b = ThresholdBaseline::new(3.0);
        for f in [0.5, 1.0, 2.0, 1.5, 0.2] {
            assert_eq!(b.update(f), ChangeVerdict::None);
        }
        assert!(!b.armed());
    }

    #[test]
    fn derivative_baseline_detects_abrupt_drop() {
        let mut b = DerivativeBaseline::default();
        let mut verdict = ChangeVerdict::None;
        for i in 0..600 {
            let f = if i < 500 { 0.01 * i as f64 } else { 0.0 };
            let v = b.update(f, 1e-3);
            if v != ChangeVerdict::None {
                verdict = v;
                break;
            }
        }
        assert_eq!(verdict, ChangeVerdict::Detached);
    }

    #[test]
    fn derivative_baseline_flat_trace_no_verdict() {
        let mut b = DerivativeBaseline::default();
        for _ in 0..1000 {
            assert_eq!(b.update(0.0, 1e-3), ChangeVerdict::None);
        }
    }
}
