//! Reproducible Wiener increments.
//!
//! Every increment is addressed by `(seed, trajectory, step, mode)` in a
//! ChaCha20 keystream, so any worker can produce any increment, paths are
//! prefix-stable when the step count grows, and coupled runs share noise by
//! sharing the address. Gaussians come from the inverse normal CDF so each
//! draw consumes exactly one 64-bit word.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Words reserved per step in the keystream; bounds the mode count.
const MODES_PER_STEP: u128 = 1 << 16;

/// Fully determines a set of Wiener increments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePathSpec {
    pub seed: u64,
    /// Ensemble member; selects an independent keystream.
    #[serde(default)]
    pub trajectory: u64,
    pub mode_count: usize,
    pub step_count: usize,
    pub dt: f64,
    /// Tag for non-noise randomness; never affects the increments.
    #[serde(default)]
    pub variant: u64,
}

impl NoisePathSpec {
    pub fn new(seed: u64, mode_count: usize, step_count: usize, dt: f64) -> Self {
        Self { seed, trajectory: 0, mode_count, step_count, dt, variant: 0 }
    }

    pub fn with_trajectory(mut self, trajectory: u64) -> Self {
        self.trajectory = trajectory;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("noise time step must be positive, got {}", self.dt)));
        }
        if self.mode_count as u128 >= MODES_PER_STEP {
            return Err(Error::Config(format!("at most {} noise modes", MODES_PER_STEP - 1)));
        }
        Ok(())
    }

    /// Same increment stream as `other` (only `variant` may differ).
    pub fn is_coupled_with(&self, other: &NoisePathSpec) -> bool {
        self.seed == other.seed
            && self.trajectory == other.trajectory
            && self.mode_count == other.mode_count
            && self.step_count == other.step_count
            && self.dt.to_bits() == other.dt.to_bits()
    }

    fn noise_rng(&self) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.trajectory);
        rng
    }

    fn variant_rng(&self) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.variant.to_le_bytes());
        key[31] = 1;
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.trajectory);
        rng
    }

    /// `ΔW^k_j` for every mode of one step, written into `out`.
    pub fn step_increments(&self, step: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.mode_count);
        if out.is_empty() {
            return;
        }
        let mut rng = self.noise_rng();
        rng.set_word_pos(2 * MODES_PER_STEP * step as u128);
        let scale = self.dt.sqrt();
        for w in out.iter_mut() {
            *w = scale * standard_normal(rng.next_u64());
        }
    }

    /// A single increment `ΔW^k_j`.
    pub fn increment(&self, step: usize, mode: usize) -> f64 {
        let mut rng = self.noise_rng();
        rng.set_word_pos(2 * (MODES_PER_STEP * step as u128 + mode as u128));
        self.dt.sqrt() * standard_normal(rng.next_u64())
    }

    /// `count` uniforms in `(0, 1)` from the variant-keyed stream, for
    /// perturbing initial data without touching the noise.
    pub fn variant_uniforms(&self, count: usize) -> Vec<f64> {
        let mut rng = self.variant_rng();
        (0..count).map(|_| unit_open(rng.next_u64())).collect()
    }
}

/// Uniform in the open interval `(0, 1)` from the top 52 bits; every value
/// and its complement are exactly representable.
#[inline]
pub fn unit_open(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal variate by inversion of one uniform word. The upper half
/// is inverted through `1 - u` so both tails keep full precision and the map
/// is exactly odd under `u ↦ 1 - u`.
#[inline]
pub fn standard_normal(x: u64) -> f64 {
    let u = unit_open(x);
    if u < 0.5 {
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
    } else {
        std::f64::consts::SQRT_2 * erfc_inv(2.0 * (1.0 - u))
    }
}

/// Spec with the same increments and a different non-noise tag.
pub fn couple(spec: &NoisePathSpec, variant: u64) -> NoisePathSpec {
    NoisePathSpec { variant, ..*spec }
}

/// Increments for all steps and modes, laid out `[step][mode]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementBlock {
    pub mode_count: usize,
    pub step_count: usize,
    pub dt: f64,
    values: Vec<f64>,
}

const BLOCK_MAGIC: &[u8; 4] = b"WINC";

impl IncrementBlock {
    pub fn step(&self, j: usize) -> &[f64] {
        &self.values[j * self.mode_count..(j + 1) * self.mode_count]
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.mode_count + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `"WINC"`, u32 LE mode count, u64 LE step count, f64 LE dt, then the
    /// increments as f64 LE in `[step][mode]` order.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(BLOCK_MAGIC)?;
        w.write_all(&(self.mode_count as u32).to_le_bytes())?;
        w.write_all(&(self.step_count as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BLOCK_MAGIC {
            return Err(Error::Format("not an increment block".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let mode_count = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let step_count = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let dt = f64::from_le_bytes(b8);
        let n = mode_count
            .checked_mul(step_count)
            .ok_or_else(|| Error::Format("increment block too large".into()))?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Ok(Self { mode_count, step_count, dt, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub fn wiener_increments(spec: &NoisePathSpec) -> IncrementBlock {
    let mut values = vec![0.0; spec.mode_count * spec.step_count];
    if spec.mode_count > 0 {
        for (j, chunk) in values.chunks_mut(spec.mode_count).enumerate() {
            spec.step_increments(j, chunk);
        }
    }
    IncrementBlock { mode_count: spec.mode_count, step_count: spec.step_count, dt: spec.dt, values }
}
