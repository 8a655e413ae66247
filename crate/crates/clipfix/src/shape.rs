//! Adaptive resampling of the clip-fixing skill parameters (approach height,
//! peak push force) over a board of fixtures with unknown vertical offsets.
//!
//! The controller only ever sees sampled parameters and the resulting verdict;
//! the hidden fixture offsets stay on the simulator side of the interface.

use crate::skill::{AnomalyVerdict, Fixture, MpParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Hard safety bounds the sampled ranges can never leave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyBounds {
    pub z_min: f64,
    pub z_max: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for SafetyBounds {
    fn default() -> Self {
        Self {
            z_min: -15e-3,
            z_max: 15e-3,
            f_min: 5.0,
            f_max: 25.0,
        }
    }
}

/// Current uniform sampling ranges for both skill parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRanges {
    pub z_lo: f64,
    pub z_hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl ParamRanges {
    pub fn from_bounds(b: &SafetyBounds) -> Self {
        Self {
            z_lo: b.z_min,
            z_hi: b.z_max,
            f_lo: b.f_min,
            f_hi: b.f_max,
        }
    }

    /// Draw one parameter pair uniformly from the current ranges.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> MpParams {
        let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            if lo >= hi {
                lo
            } else {
                rng.gen_range(lo..hi)
            }
        };
        MpParams {
            approach_z: draw(rng, self.z_lo, self.z_hi),
            f_push_max: draw(rng, self.f_lo, self.f_hi),
        }
    }

    /// Shrink the ranges from one verdict, clamped to the safety bounds.
    ///
    /// - missed contact: the object passed above the opening, so the used
    ///   height becomes the new upper bound;
    /// - entry blockage: either too low or too weak, so the used height
    ///   becomes the new lower bound and weaker pushes are ruled out;
    /// - overforce: the used peak push becomes the new upper force bound.
    ///
    /// If an update inverts a range, it collapses to its midpoint.
    pub fn update(&mut self, used: &MpParams, verdict: AnomalyVerdict, bounds: &SafetyBounds) {
        match verdict {
            AnomalyVerdict::Success => {}
            AnomalyVerdict::MissedContact => {
                self.z_hi = used.approach_z;
            }
            AnomalyVerdict::EntryBlockage => {
                self.z_lo = used.approach_z;
                self.f_lo = self.f_lo.max(used.f_push_max);
            }
            AnomalyVerdict::Overforce => {
                self.f_hi = used.f_push_max;
            }
        }
        self.z_lo = self.z_lo.clamp(bounds.z_min, bounds.z_max);
        self.z_hi = self.z_hi.clamp(bounds.z_min, bounds.z_max);
        self.f_lo = self.f_lo.clamp(bounds.f_min, bounds.f_max);
        self.f_hi = self.f_hi.clamp(bounds.f_min, bounds.f_max);
        if self.z_lo > self.z_hi {
            let mid = 0.5 * (self.z_lo + self.z_hi);
            self.z_lo = mid;
            self.z_hi = mid;
        }
        if self.f_lo > self.f_hi {
            let mid = 0.5 * (self.f_lo + self.f_hi);
            self.f_lo = mid;
            self.f_hi = mid;
        }
    }
}

/// How parameters are chosen across iterations on one fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Same parameters every iteration (the naive baseline).
    Fixed,
    /// Ranges shrink from each verdict.
    Adaptive,
}

/// A board of fixtures processed in order.
#[derive(Debug, Clone)]
pub struct FixtureBoard {
    pub fixtures: Vec<Fixture>,
}

/// One attempted fixing iteration on the board.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoardIteration {
    pub fixture_id: usize,
    pub iteration: u64,
    pub params: MpParams,
    pub verdict: AnomalyVerdict,
    pub ticks: u64,
}

/// Outcome of one fixture after up to `max_iterations` attempts.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOutcome {
    pub fixture_id: usize,
    pub succeeded: bool,
    pub iterations: Vec<BoardIteration>,
}

/// Full board run result.
#[derive(Debug, Clone, PartialEq)]
pub struct BoardReport {
    pub outcomes: Vec<FixtureOutcome>,
}

impl BoardReport {
    pub fn all_succeeded(&self) -> bool {
        self.outcomes.iter().all(|o| o.succeeded)
    }

    pub fn iterations(&self) -> impl Iterator<Item = &BoardIteration> {
        self.outcomes.iter().flat_map(|o| o.iterations.iter())
    }
}

/// Run the board. `attempt` executes one fixing iteration against a fixture
/// and reports only what a real controller could observe: the verdict and the
/// tick count. Ranges reset per fixture; in `Fixed` mode the initial draw from
/// the full ranges is reused for every iteration.
pub fn run_board<F>(
    board: &FixtureBoard,
    bounds: &SafetyBounds,
    mode: SamplingMode,
    max_iterations: u64,
    rng: &mut ChaCha8Rng,
    mut attempt: F,
) -> BoardReport
where
    F: FnMut(&Fixture, &MpParams) -> (AnomalyVerdict, u64),
{
    let mut outcomes = Vec::with_capacity(board.fixtures.len());
    for (fixture_id, fixture) in board.fixtures.iter().enumerate() {
        let mut ranges = ParamRanges::from_bounds(bounds);
        let fixed_params = ranges.sample(rng);
        let mut iterations = Vec::new();
        let mut succeeded = false;
        for iteration in 0..max_iterations {
            let params = match mode {
                SamplingMode::Fixed => fixed_params,
                SamplingMode::Adaptive => ranges.sample(rng),
            };
            let (verdict, ticks) = attempt(fixture, &params);
            iterations.push(BoardIteration {
                fixture_id,
                iteration,
                params,
                verdict,
                ticks,
            });
            if verdict == AnomalyVerdict::Success {
                succeeded = true;
                break;
            }
            if mode == SamplingMode::Adaptive {
                ranges.update(&params, verdict, bounds);
            }
        }
        outcomes.push(FixtureOutcome {
            fixture_id,
            succeeded,
            iterations,
        });
    }
    BoardReport { outcomes }
}
