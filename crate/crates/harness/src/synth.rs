//! Synthetic spectra with known ground truth.
//!
//! Each sample draws a latent vector `u` uniformly from `[0, 1]^3`. Channel
//! `c` of `C` sits at position `t = c / (C - 1)` and reads
//!
//! ```text
//! s(t) = 1000 * ( 0.05 + 0.1 * u0 * t
//!               + sum_b a_b(u) * exp(-(t - m_b(u))^2 / (2 * w_b^2)) )
//!        + 1000 * noise * e,      e ~ N(0, 1)
//! a_b(u) = 0.2 + sum_l W[b][l] * u_l
//! m_b(u) = (b + 0.5) / B + 0.01 * (u_(b mod 3) - 0.5)
//! w_b    = 0.02 + 0.01 * (b mod 3)
//! ```
//!
//! with `B = 10` bumps and a mixing matrix `W` whose entries lie in `[0, 1]`.
//! `W` is a fixed property of the generator and does not depend on the seed.
//! Target `k` is `lo_k + (hi_k - lo_k) * g_k(u)` with the shapes `g_k` from
//! [`TARGET_SHAPES`]; target 0 is linear in `u0`. Targets are noise-free, and
//! latents and noise come from separate streams, so the noise level never
//! changes which latents are drawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use topoproj::seed::derive_seed;
use topoproj::Dataset;

use crate::data::LabeledTable;
use crate::error::{Error, Result};

pub const N_LATENT: usize = 3;
pub const N_BUMPS: usize = 10;

const MIXING_SEED: u64 = 0x5eed_5bec;

/// Name, low and high value of each target.
pub const TARGET_SCALES: [(&str, f64, f64); 13] = [
    ("ash", 5.0, 25.0),
    ("moisture", 2.0, 30.0),
    ("volatile_matter", 20.0, 45.0),
    ("fixed_carbon", 30.0, 70.0),
    ("sulfur", 0.3, 5.0),
    ("btu", 8000.0, 14000.0),
    ("na2o", 0.1, 8.0),
    ("sio2", 20.0, 60.0),
    ("al2o3", 10.0, 35.0),
    ("fe2o3", 2.0, 30.0),
    ("cao", 1.0, 25.0),
    ("mgo", 0.5, 6.0),
    ("k2o", 0.2, 3.0),
];

/// Shape functions mapping `[0, 1]^3` into `[0, 1]`. Each is monotone in
/// every latent, like a property that mixes linearly-ish with composition.
pub const TARGET_SHAPES: [fn(&[f64]) -> f64; 13] = [
    |u| u[0],
    |u| u[1] * u[1],
    |u| (std::f64::consts::FRAC_PI_2 * u[2]).sin(),
    |u| u[0] * u[1],
    |u| ((u[2] - u[0]).exp() - (-1f64).exp()) / (1f64.exp() - (-1f64).exp()),
    |u| (u[0] + u[1] + u[2]) / 3.0,
    |u| u[1] * (1.0 - u[2]),
    |u| 0.5 + 0.5 * (std::f64::consts::PI * u[0]).cos(),
    |u| u[2].powi(3),
    |u| u[0] * (0.3 + 0.7 * u[2]),
    |u| u[1] * u[2],
    |u| 1.5 * (1.0 / (1.0 + u[0] + u[1]) - 1.0 / 3.0),
    |u| u[0] * (1.0 - 0.5 * u[1]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_unlabeled: usize,
    pub n_labeled: usize,
    pub n_channels: usize,
    pub n_targets: usize,
    /// Standard deviation of additive channel noise, relative to the 1000x scale.
    pub noise: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(n_unlabeled: usize, n_labeled: usize, seed: u64) -> Self {
        Self { n_unlabeled, n_labeled, n_channels: 512, n_targets: 13, noise: 0.01, seed }
    }
}

/// Two tables sharing one generator. Both keep their ground-truth targets;
/// ids run `0..n_unlabeled` then continue through the labeled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub unlabeled: LabeledTable,
    pub labeled: LabeledTable,
    pub latent_unlabeled: Dataset,
    pub latent_labeled: Dataset,
}

fn mixing() -> [[f64; N_LATENT]; N_BUMPS] {
    let mut rng = ChaCha8Rng::seed_from_u64(MIXING_SEED);
    let mut w = [[0.0; N_LATENT]; N_BUMPS];
    for row in &mut w {
        for v in row.iter_mut() {
            *v = rng.random();
        }
    }
    w
}

/// Noise-free spectrum for latent `u`.
pub fn clean_spectrum(u: &[f64], n_channels: usize) -> Vec<f64> {
    let w = mixing();
    spectrum_with(&w, u, n_channels)
}

fn spectrum_with(w: &[[f64; N_LATENT]; N_BUMPS], u: &[f64], n_channels: usize) -> Vec<f64> {
    let denom = (n_channels.max(2) - 1) as f64;
    (0..n_channels)
        .map(|c| {
            let t = c as f64 / denom;
            let mut s = 0.05 + 0.1 * u[0] * t;
            for (b, wb) in w.iter().enumerate() {
                let a = 0.2 + wb.iter().zip(u).map(|(x, y)| x * y).sum::<f64>();
                let m = (b as f64 + 0.5) / N_BUMPS as f64 + 0.01 * (u[b % N_LATENT] - 0.5);
                let width = 0.02 + 0.01 * (b % 3) as f64;
                s += a * (-(t - m) * (t - m) / (2.0 * width * width)).exp();
            }
            1000.0 * s
        })
        .collect()
}

pub fn target_names(n_targets: usize) -> Vec<String> {
    (0..n_targets)
        .map(|k| match TARGET_SCALES.get(k) {
            Some((name, _, _)) => name.to_string(),
            None => format!("target{k}"),
        })
        .collect()
}

/// Ground-truth targets for latent `u`.
pub fn targets_for(u: &[f64], n_targets: usize) -> Vec<f64> {
    (0..n_targets)
        .map(|k| {
            let shape = TARGET_SHAPES[k % TARGET_SHAPES.len()](u);
            let (_, lo, hi) = TARGET_SCALES[k % TARGET_SCALES.len()];
            lo + (hi - lo) * shape
        })
        .collect()
}

fn generate(params: &SynthParams, n: usize, stream: u64, first_id: usize) -> Result<(LabeledTable, Dataset)> {
    let w = mixing();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, &[stream, 0]));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, &[stream, 1]));
    let mut latent = Vec::with_capacity(n * N_LATENT);
    let mut spectra = Vec::with_capacity(n * params.n_channels);
    let mut targets = Vec::with_capacity(n * params.n_targets);
    for _ in 0..n {
        let u: Vec<f64> = (0..N_LATENT).map(|_| rng.random()).collect();
        let mut s = spectrum_with(&w, &u, params.n_channels);
        if params.noise > 0.0 {
            for v in &mut s {
                let e: f64 = noise_rng.sample(StandardNormal);
                *v += 1000.0 * params.noise * e;
            }
        }
        targets.extend(targets_for(&u, params.n_targets));
        spectra.extend(s);
        latent.extend(u);
    }
    let channel_names = (0..params.n_channels).map(|c| format!("ch{c}")).collect();
    let table = LabeledTable {
        ids: (first_id..first_id + n).collect(),
        features: Dataset::new(channel_names, spectra)?,
        targets: Some(Dataset::new(target_names(params.n_targets), targets)?),
    };
    let latent = Dataset::new((0..N_LATENT).map(|l| format!("u{l}")).collect(), latent)?;
    Ok((table, latent))
}

pub fn generate_synthetic_spectra(params: &SynthParams) -> Result<SynthData> {
    if params.n_channels == 0 || params.n_targets == 0 {
        return Err(Error::Config("synthetic data needs at least one channel and one target".into()));
    }
    if !(params.noise >= 0.0 && params.noise.is_finite()) {
        return Err(Error::Config(format!("noise must be finite and non-negative, got {}", params.noise)));
    }
    let (unlabeled, latent_unlabeled) = generate(params, params.n_unlabeled, 0, 0)?;
    let (labeled, latent_labeled) = generate(params, params.n_labeled, 1, params.n_unlabeled)?;
    Ok(SynthData { unlabeled, labeled, latent_unlabeled, latent_labeled })
}
