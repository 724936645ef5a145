//! The distinguisher game: shown the real filtered model and the filtered
//! interpretation in random order, a distinguisher tries to tell which one
//! is real. A GUI is aware when no distinguisher does much better than a
//! coin flip.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::CanonicalJson;
use crate::validator::{wilson_interval, VerdictRecord, Z95};

#[derive(Debug, Error)]
pub enum DistinguisherError {
    #[error("the likelihood distinguisher needs a calibration table")]
    MissingCalibration,
    #[error("unknown distinguisher {0:?}")]
    Unknown(String),
    #[error("the game needs at least one sample and one trial")]
    EmptyInput,
}

/// One suite element after the pipeline: its real and perceived filtered
/// views.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPair {
    pub real: CanonicalJson,
    pub perceived: CanonicalJson,
}

impl From<&VerdictRecord> for ViewPair {
    fn from(v: &VerdictRecord) -> Self {
        Self { real: v.actual.clone(), perceived: v.perceived.clone() }
    }
}

/// Empirical joint frequencies of (real, perceived) views from a labeled
/// calibration run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    joint: BTreeMap<(String, String), u64>,
    real: BTreeMap<String, u64>,
    perceived: BTreeMap<String, u64>,
    total: u64,
}

impl CalibrationTable {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a ViewPair>) -> Self {
        let mut t = Self::default();
        for p in pairs {
            let (r, q) = (p.real.as_str().to_string(), p.perceived.as_str().to_string());
            *t.joint.entry((r.clone(), q.clone())).or_default() += 1;
            *t.real.entry(r).or_default() += 1;
            *t.perceived.entry(q).or_default() += 1;
            t.total += 1;
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count of samples whose real view is `real` and perceived view is `perceived`.
    pub fn joint(&self, real: &str, perceived: &str) -> u64 {
        self.joint.get(&(real.to_string(), perceived.to_string())).copied().unwrap_or(0)
    }

    fn marginal_score(&self, real: &str, perceived: &str) -> u64 {
        self.real.get(real).copied().unwrap_or(0) * self.perceived.get(perceived).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Distinguisher {
    /// Uniform guess.
    Random,
    /// Uniform on equal views; otherwise claims the lexicographically
    /// smaller view is the real one.
    Equality,
    /// Picks the ordering the calibration run makes more likely: joint
    /// frequencies first, then the product of marginals, then a coin flip.
    Likelihood(CalibrationTable),
}

impl Distinguisher {
    pub const NAMES: [&'static str; 3] = ["random", "equality", "likelihood"];

    pub fn by_name(name: &str, calibration: Option<CalibrationTable>) -> Result<Self, DistinguisherError> {
        match name {
            "random" => Ok(Self::Random),
            "equality" => Ok(Self::Equality),
            "likelihood" => calibration.map(Self::Likelihood).ok_or(DistinguisherError::MissingCalibration),
            other => Err(DistinguisherError::Unknown(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Equality => "equality",
            Self::Likelihood(_) => "likelihood",
        }
    }

    /// The position (0 or 1) this distinguisher believes holds the real view.
    pub fn guess<R: Rng>(&self, f0: &CanonicalJson, f1: &CanonicalJson, rng: &mut R) -> u8 {
        match self {
            Self::Random => rng.random_range(0..2),
            Self::Equality => match f0.as_str().cmp(f1.as_str()) {
                std::cmp::Ordering::Equal => rng.random_range(0..2),
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Greater => 1,
            },
            Self::Likelihood(t) => {
                let (a, b) = (f0.as_str(), f1.as_str());
                // hypothesis 0: f0 real and f1 perceived; hypothesis 1: the reverse
                let by_joint = t.joint(a, b).cmp(&t.joint(b, a));
                let by_marginal = t.marginal_score(a, b).cmp(&t.marginal_score(b, a));
                match by_joint.then(by_marginal) {
                    std::cmp::Ordering::Greater => 0,
                    std::cmp::Ordering::Less => 1,
                    std::cmp::Ordering::Equal => rng.random_range(0..2),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguisherTrial {
    pub trial: u64,
    pub sample: usize,
    pub hidden: u8,
    pub pair: (CanonicalJson, CanonicalJson),
    pub guess: u8,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageReport {
    pub distinguisher: String,
    pub n_trials: u64,
    pub correct: u64,
    pub p_hat: f64,
    pub advantage: f64,
    /// Wilson interval for the success probability.
    pub ci95: (f64, f64),
}

/// Plays `n_trials` rounds. Trial `t` draws from its own RNG stream
/// `(seed, t)`: the suite sample, the hidden bit, then any coin the
/// distinguisher flips.
pub fn play(
    suite: &[ViewPair],
    v: &Distinguisher,
    n_trials: u64,
    seed: u64,
) -> Result<(AdvantageReport, Vec<DistinguisherTrial>), DistinguisherError> {
    if suite.is_empty() || n_trials == 0 {
        return Err(DistinguisherError::EmptyInput);
    }
    let trials: Vec<DistinguisherTrial> = (0..n_trials)
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let sample = rng.random_range(0..suite.len());
            let hidden: u8 = rng.random_range(0..2);
            let x = &suite[sample];
            let pair = if hidden == 0 {
                (x.real.clone(), x.perceived.clone())
            } else {
                (x.perceived.clone(), x.real.clone())
            };
            let guess = v.guess(&pair.0, &pair.1, &mut rng);
            DistinguisherTrial { trial, sample, hidden, pair, guess, correct: guess == hidden }
        })
        .collect();
    let correct = trials.iter().filter(|t| t.correct).count() as u64;
    let p_hat = correct as f64 / n_trials as f64;
    let report = AdvantageReport {
        distinguisher: v.name().to_string(),
        n_trials,
        correct,
        p_hat,
        advantage: (p_hat - 0.5).abs(),
        ci95: wilson_interval(correct, n_trials, Z95),
    };
    Ok((report, trials))
}

/// Best success probability any distinguisher can reach on samples drawn
/// uniformly from `suite`.
pub fn optimal_success(suite: &[ViewPair]) -> f64 {
    if suite.is_empty() {
        return 0.5;
    }
    let t = CalibrationTable::from_pairs(suite);
    let values: BTreeSet<&String> = t.real.keys().chain(t.perceived.keys()).collect();
    let mut mass = 0.0;
    for (i, a) in values.iter().enumerate() {
        mass += 0.5 * t.joint(a, a) as f64;
        for b in values.iter().skip(i + 1) {
            mass += t.joint(a, b).max(t.joint(b, a)) as f64;
        }
    }
    mass / t.total as f64
}
