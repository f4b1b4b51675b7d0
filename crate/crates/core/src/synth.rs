//! Seeded generators for the synthetic regression scenarios.
//!
//! Randomness comes from ChaCha8 keyed by the experiment seed. Every
//! (repeat, purpose) pair reads its own ChaCha stream, so the learning,
//! calibration and test splits of a repeat never share draws and resizing one
//! split leaves the others bit-identical. See [`stream_rng`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Split};
use crate::error::{domain, Error, Result};

/// What a random stream is used for. The discriminant is the low byte of the
/// ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Stream {
    Theta = 0,
    Learn = 1,
    Cal = 2,
    Test = 3,
    Permutation = 4,
    Outliers = 5,
    Init = 6,
}

/// ChaCha8 generator keyed by `seed_from_u64(seed)` and positioned on stream
/// `(index << 8) | purpose`.
pub fn stream_rng(seed: u64, index: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 8) | purpose as u64);
    rng
}

/// A 64-bit seed for model initialization derived from the same scheme.
pub fn derived_seed(seed: u64, index: u64) -> u64 {
    stream_rng(seed, index, Stream::Init).random()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseLaw {
    /// `N(0, 1)`.
    Normal,
    /// `0.95 N(0, 1) + 0.05 N(2, 1)`.
    MixNormal,
    /// Pareto with shape 2 and scale 1.
    Pareto,
    /// `0.95 Pareto(2, 1) + 0.05 N(-20, 1)`.
    MixPareto,
}

const PARETO_SHAPE: f64 = 2.0;
const PARETO_SCALE: f64 = 1.0;
const CONTAMINATION: f64 = 0.05;

impl NoiseLaw {
    pub const ALL: [NoiseLaw; 4] = [NoiseLaw::Normal, NoiseLaw::MixNormal, NoiseLaw::Pareto, NoiseLaw::MixPareto];

    pub fn name(self) -> &'static str {
        match self {
            NoiseLaw::Normal => "normal",
            NoiseLaw::MixNormal => "mix-normal",
            NoiseLaw::Pareto => "pareto",
            NoiseLaw::MixPareto => "mix-pareto",
        }
    }

    /// Analytic mean of the law.
    pub fn mean(self) -> f64 {
        let pareto = PARETO_SHAPE * PARETO_SCALE / (PARETO_SHAPE - 1.0);
        match self {
            NoiseLaw::Normal => 0.0,
            NoiseLaw::MixNormal => CONTAMINATION * 2.0,
            NoiseLaw::Pareto => pareto,
            NoiseLaw::MixPareto => (1.0 - CONTAMINATION) * pareto + CONTAMINATION * -20.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseLaw::Normal => normal(rng),
            NoiseLaw::MixNormal => {
                if rng.random::<f64>() < CONTAMINATION {
                    2.0 + normal(rng)
                } else {
                    normal(rng)
                }
            }
            NoiseLaw::Pareto => pareto(rng),
            NoiseLaw::MixPareto => {
                if rng.random::<f64>() < CONTAMINATION {
                    -20.0 + normal(rng)
                } else {
                    pareto(rng)
                }
            }
        }
    }
}

impl fmt::Display for NoiseLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseLaw::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| domain(format!("unknown noise law '{s}'")))
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Inverse-CDF Pareto draw `scale * U^(-1/shape)` with `U` in `(0, 1]`.
fn pareto<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    PARETO_SCALE * u.powf(-1.0 / PARETO_SHAPE)
}

/// Pareto(2, 1) distribution function.
pub fn pareto_cdf(x: f64) -> f64 {
    if x < PARETO_SCALE {
        0.0
    } else {
        1.0 - (PARETO_SCALE / x).powf(PARETO_SHAPE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// `Y = X^T theta + e`, `X ~ N(0, I_3)`, `theta ~ U(0, 1)^3`.
    Linear3d,
    /// `Y = X^2 + e`, `X ~ N(0, 1)`.
    Quadratic,
    /// `Y = X + |X| e`, `X ~ N(0, 1)`.
    Heteroscedastic,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Linear3d, ScenarioKind::Quadratic, ScenarioKind::Heteroscedastic];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Linear3d => "linear",
            ScenarioKind::Quadratic => "quadratic",
            ScenarioKind::Heteroscedastic => "hetero",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ScenarioKind::Linear3d => 3,
            ScenarioKind::Quadratic | ScenarioKind::Heteroscedastic => 1,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| domain(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub noise: NoiseLaw,
    pub n_learn: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub seed: u64,
    pub repeat: u64,
    /// Draw a new coefficient vector for every repeat instead of one per seed.
    pub redraw_theta: bool,
    /// Subtract the analytic noise mean before use.
    pub center_noise: bool,
    /// Multiplier on the noise; zero gives noiseless responses.
    pub noise_scale: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, noise: NoiseLaw, n: usize, seed: u64) -> Self {
        Self {
            kind,
            noise,
            n_learn: n,
            n_cal: n,
            n_test: n,
            seed,
            repeat: 0,
            redraw_theta: false,
            center_noise: false,
            noise_scale: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_learn == 0 || self.n_cal == 0 || self.n_test == 0 {
            return Err(domain("split sizes must be positive"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(domain(format!("noise scale must be nonnegative, got {}", self.noise_scale)));
        }
        Ok(())
    }
}

/// A generated dataset and, for the linear scenario, its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub data: Dataset,
    pub theta: Option<Vec<f64>>,
}

/// Coefficients of the linear scenario for `spec`.
pub fn scenario_theta(spec: &ScenarioSpec) -> Vec<f64> {
    let index = if spec.redraw_theta { spec.repeat + 1 } else { 0 };
    let mut rng = stream_rng(spec.seed, index, Stream::Theta);
    (0..3).map(|_| rng.random::<f64>()).collect()
}

pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let theta = (spec.kind == ScenarioKind::Linear3d).then(|| scenario_theta(spec));
    let offset = if spec.center_noise { spec.noise.mean() } else { 0.0 };
    let make = |n: usize, purpose: Stream| -> Split {
        let mut rng = stream_rng(spec.seed, spec.repeat, purpose);
        let dim = spec.kind.dim();
        let mut split = Split::empty(dim);
        let mut x = vec![0.0; dim];
        for _ in 0..n {
            x.iter_mut().for_each(|v| *v = normal(&mut rng));
            let e = spec.noise_scale * (spec.noise.sample(&mut rng) - offset);
            let y = match spec.kind {
                ScenarioKind::Linear3d => {
                    let t = theta.as_deref().expect("linear scenario has coefficients");
                    x.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() + e
                }
                ScenarioKind::Quadratic => x[0] * x[0] + e,
                ScenarioKind::Heteroscedastic => x[0] + x[0].abs() * e,
            };
            split.push(&x, y);
        }
        split
    };
    let data = Dataset::new(
        make(spec.n_learn, Stream::Learn),
        make(spec.n_cal, Stream::Cal),
        make(spec.n_test, Stream::Test),
    )?;
    Ok(Scenario { data, theta })
}
