use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Vector;
use crate::error::{check_len, MheError, Result};

/// Distribution of one noise block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    Zero { dim: usize },
    Constant { values: Vec<f64> },
    /// Independent uniform draws on `[lower_i, upper_i]` per coordinate.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl NoiseSpec {
    pub fn symmetric_box(radius: &[f64]) -> Self {
        NoiseSpec::UniformBox {
            lower: radius.iter().map(|r| -r).collect(),
            upper: radius.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseSpec::Zero { dim } => *dim,
            NoiseSpec::Constant { values } => values.len(),
            NoiseSpec::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseSpec::UniformBox { lower, upper } = self {
            check_len("uniform noise upper bound", lower.len(), upper.len())?;
            for (i, (lo, hi)) in lower.iter().zip(upper).enumerate() {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(MheError::InvalidBounds { index: i });
                }
            }
        }
        Ok(())
    }

    fn draw_into(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        match self {
            NoiseSpec::Zero { dim } => out.extend(std::iter::repeat(0.0).take(*dim)),
            NoiseSpec::Constant { values } => out.extend_from_slice(values),
            NoiseSpec::UniformBox { lower, upper } => {
                for (lo, hi) in lower.iter().zip(upper) {
                    // gen_range panics on empty ranges
                    let sample = if lo < hi { rng.gen_range(*lo..=*hi) } else { *lo };
                    out.push(sample);
                }
            }
        }
    }
}

/// Seeded generator of stacked `(process, measurement)` noise vectors.
///
/// Both blocks draw from one ChaCha stream, so identical specs and seed give
/// a bit-identical sequence.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    process: NoiseSpec,
    measurement: NoiseSpec,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(process: NoiseSpec, measurement: NoiseSpec, seed: u64) -> Result<Self> {
        process.validate()?;
        measurement.validate()?;
        Ok(Self {
            process,
            measurement,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn dim(&self) -> usize {
        self.process.dim() + self.measurement.dim()
    }

    pub fn draw(&mut self) -> Vector {
        let mut out = Vec::with_capacity(self.dim());
        self.process.draw_into(&mut self.rng, &mut out);
        self.measurement.draw_into(&mut self.rng, &mut out);
        Vector::from_vec(out)
    }
}
