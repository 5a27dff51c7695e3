//! Seeded noise models. All randomness comes from a SplitMix64 stream so
//! that a `(image, NoiseSpec)` pair always produces the same output.

use std::f64::consts::PI;

use super::GridImage;
use crate::error::{Error, Result};

/// SplitMix64 generator (Steele, Lea & Flood constants).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal pair by Box–Muller; `u1` is mapped into `(0, 1]`.
    pub fn next_normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * PI * u2;
        (r * t.cos(), r * t.sin())
    }

    /// Fills `out` with standard normals, consuming pairs in order
    /// (cosine branch first).
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.next_normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.next_normal_pair().0;
        }
    }

    /// Poisson sample by sequential CDF inversion. Large means are split
    /// into chunks so that `exp(-mean)` never underflows.
    pub fn next_poisson(&mut self, mean: f64) -> u64 {
        const CHUNK: f64 = 500.0;
        let mut remaining = mean;
        let mut total = 0;
        while remaining > 0.0 {
            let lam = remaining.min(CHUNK);
            remaining -= lam;
            total += self.poisson_inversion(lam);
        }
        total
    }

    fn poisson_inversion(&mut self, lam: f64) -> u64 {
        let u = self.next_f64();
        let mut k = 0u64;
        let mut p = (-lam).exp();
        let mut cdf = p;
        let cap = (lam + 50.0 * lam.sqrt() + 100.0) as u64;
        while u > cdf && k < cap {
            k += 1;
            p *= lam / k as f64;
            cdf += p;
        }
        k
    }

    /// Derives an independent child seed, e.g. one stream per sweep level.
    pub fn derive(seed: u64, index: u64) -> u64 {
        SplitMix64::new(seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03)).next_u64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Poisson,
    Impulse,
}

/// `level` is the standard deviation (gaussian), the intensity scaling
/// (poisson) or the corrupted fraction (impulse).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            level: sigma,
            seed,
        }
    }

    pub fn poisson(scale: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Poisson,
            level: scale,
            seed,
        }
    }

    pub fn impulse(fraction: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Impulse,
            level: fraction,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0 && self.level.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise level {} must be >= 0", self.level)));
        }
        if self.kind == NoiseKind::Impulse && self.level > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "impulse fraction {} outside [0, 1]",
                self.level
            )));
        }
        Ok(())
    }
}

/// Applies the noise model to `u`. Pure in `(u, spec)`.
pub fn add_noise(u: &GridImage, spec: &NoiseSpec) -> Result<GridImage> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let data = u.as_slice();
    let out = match spec.kind {
        NoiseKind::Gaussian => {
            if spec.level == 0.0 {
                return Ok(u.clone());
            }
            let mut z = vec![0.0; data.len()];
            rng.fill_normal(&mut z);
            data.iter().zip(&z).map(|(v, n)| v + spec.level * n).collect()
        }
        NoiseKind::Poisson => {
            if let Some(&neg) = data.iter().find(|&&v| v < 0.0) {
                return Err(Error::NegativeIntensity(neg));
            }
            if spec.level == 0.0 {
                return Ok(u.clone());
            }
            data.iter()
                .map(|&v| rng.next_poisson(v / spec.level) as f64 * spec.level)
                .collect()
        }
        NoiseKind::Impulse => {
            let n = data.len();
            let count = ((spec.level * n as f64).round() as usize).min(n);
            let (lo, hi) = (u.min(), u.max());
            let mut order: Vec<usize> = (0..n).collect();
            let mut out = data.to_vec();
            for i in 0..count {
                let j = i + ((rng.next_f64() * (n - i) as f64) as usize).min(n - i - 1);
                order.swap(i, j);
                out[order[i]] = if rng.next_f64() < 0.5 { lo } else { hi };
            }
            out
        }
    };
    Ok(u.with_data(out))
}
