use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{determinant, Matrix};
use crate::moments::{MinorSpec, WishartModel};

/// Draws per chunk in [`mc_moment_estimate`].
pub const DEFAULT_CHUNK_SIZE: usize = 2048;

/// A Monte Carlo point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub reps: u64,
    pub seed: u64,
}

impl OracleEstimate {
    /// `|estimate − truth| / stderr`; infinite when the standard error is 0
    /// and the estimate misses.
    pub fn z_score(&self, truth: f64) -> f64 {
        let diff = (self.estimate - truth).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McMoments {
    pub mean: OracleEstimate,
    pub variance: OracleEstimate,
}

/// Generator for substream `stream` of `seed`. Distinct streams of the same
/// seed are independent ChaCha keystreams.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Reusable sampler holding the Cholesky factor of `Σ` and the chi-square
/// laws of the Bartlett diagonal.
#[derive(Clone, Debug)]
pub struct WishartSampler {
    chol: Matrix,
    dof: u64,
    chi_square: Vec<Gamma<f64>>,
}

impl WishartSampler {
    pub fn new(model: &WishartModel) -> Result<Self> {
        let chol = model.sigma().cholesky()?;
        let r = model.dim() as u64;
        let chi_square = if model.dof() >= r {
            (0..r)
                .map(|i| {
                    Gamma::new((model.dof() - i) as f64 / 2.0, 2.0)
                        .map_err(|e| invalid(format!("chi-square law: {e}")))
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            chol,
            dof: model.dof(),
            chi_square,
        })
    }

    /// One draw of `S`, exactly symmetric.
    ///
    /// With `n ≥ r` this is the Bartlett construction `S = (L·A)(L·A)ᵀ`, `A`
    /// lower triangular with `A[i][i]² ~ χ²(n − i)` and standard normal
    /// entries below the diagonal. With `n < r` the Bartlett diagonal is
    /// undefined and `S = Σ_t X_t X_tᵀ` is formed from `n` Gaussian vectors.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let r = self.chol.rows();
        let factor = if self.chi_square.is_empty() {
            let n = self.dof as usize;
            let mut z = Matrix::zeros(r, n);
            for i in 0..r {
                for t in 0..n {
                    z.set(i, t, rng.sample(StandardNormal));
                }
            }
            self.chol.matmul(&z)
        } else {
            let mut a = Matrix::zeros(r, r);
            for i in 0..r {
                a.set(i, i, self.chi_square[i].sample(rng).sqrt());
                for j in 0..i {
                    a.set(i, j, rng.sample(StandardNormal));
                }
            }
            self.chol.matmul(&a)
        };
        let mut s = Matrix::zeros(r, r);
        for i in 0..r {
            for j in 0..=i {
                let v: f64 = factor.row(i).iter().zip(factor.row(j)).map(|(x, y)| x * y).sum();
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        s
    }
}

/// One Wishart draw, deterministic in `(model, seed)`.
pub fn sample_wishart(model: &WishartModel, seed: u64) -> Result<Matrix> {
    let sampler = WishartSampler::new(model)?;
    Ok(sampler.sample(&mut substream(seed, 0)))
}

/// Running count, mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Welford) -> Welford {
        if self.count == 0.0 {
            return other;
        }
        if other.count == 0.0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Welford {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }

    /// Removes `part` from `self` (inverse of [`Welford::merge`]).
    fn without(self, part: Welford) -> Welford {
        let count = self.count - part.count;
        if count <= 0.0 {
            return Welford::default();
        }
        let mean = (self.count * self.mean - part.count * part.mean) / count;
        let delta = part.mean - mean;
        Welford {
            count,
            mean,
            m2: (self.m2 - part.m2 - delta * delta * count * part.count / self.count).max(0.0),
        }
    }

    fn sample_variance(&self) -> f64 {
        self.m2 / (self.count - 1.0)
    }
}

/// Sizes of the chunks `reps` draws are split into: at least two, sizes
/// differing by at most one.
fn chunk_sizes(reps: u64, chunk_size: usize) -> Vec<u64> {
    let chunk_size = chunk_size.max(1) as u64;
    let chunks = reps.div_ceil(chunk_size).max(2).min(reps);
    let base = reps / chunks;
    let extra = reps % chunks;
    (0..chunks).map(|i| base + u64::from(i < extra)).collect()
}

fn chunk_values(
    sampler: &WishartSampler,
    spec: &MinorSpec,
    seed: u64,
    chunk: u64,
    len: u64,
) -> Vec<f64> {
    let mut rng = substream(seed, chunk);
    let rows = spec.rows().as_slice();
    let cols = spec.cols().as_slice();
    let m = rows.len();
    let mut block = Matrix::zeros(m, m);
    (0..len)
        .map(|_| {
            let s = sampler.sample(&mut rng);
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    block.set(a, b, s[(i, j)]);
                }
            }
            determinant(&block)
        })
        .collect()
}

/// Monte Carlo mean and variance of `det(S_{I×J})` with the default chunk
/// size.
pub fn mc_moment_estimate(
    model: &WishartModel,
    spec: &MinorSpec,
    reps: u64,
    seed: u64,
) -> Result<McMoments> {
    mc_moment_estimate_chunked(model, spec, reps, seed, DEFAULT_CHUNK_SIZE)
}

/// Monte Carlo mean and variance of `det(S_{I×J})`.
///
/// Draws are split into chunks; chunk `g` uses substream `g` of `seed`, and
/// chunk summaries are merged in chunk order, so the result depends only on
/// `(model, spec, reps, seed, chunk_size)` and not on the thread pool.
///
/// The mean's standard error is `s/√N`. The variance's standard error is the
/// delete-one-chunk jackknife; with three or fewer draws (too few for the
/// jackknife) it falls back to the fourth-moment formula.
pub fn mc_moment_estimate_chunked(
    model: &WishartModel,
    spec: &MinorSpec,
    reps: u64,
    seed: u64,
    chunk_size: usize,
) -> Result<McMoments> {
    if reps < 2 {
        return Err(invalid(format!("need at least 2 replications, got {reps}")));
    }
    if spec.dim() != model.dim() {
        return Err(invalid(format!(
            "minor indexes dimension {}, model has dimension {}",
            spec.dim(),
            model.dim()
        )));
    }
    let sampler = WishartSampler::new(model)?;
    let sizes = chunk_sizes(reps, chunk_size);

    let summaries: Vec<Welford> = sizes
        .par_iter()
        .enumerate()
        .map(|(g, &len)| {
            let mut w = Welford::default();
            for x in chunk_values(&sampler, spec, seed, g as u64, len) {
                w.push(x);
            }
            w
        })
        .collect();
    let total = summaries.iter().fold(Welford::default(), |acc, &w| acc.merge(w));

    let n = total.count;
    let variance = total.sample_variance();
    let mean_se = (variance / n).sqrt();

    let largest = sizes.iter().copied().max().unwrap_or(0) as f64;
    let variance_se = if n - largest >= 2.0 {
        let g = summaries.len() as f64;
        let loo: Vec<f64> = summaries
            .iter()
            .map(|&w| total.without(w).sample_variance())
            .collect();
        let loo_mean = loo.iter().sum::<f64>() / g;
        ((g - 1.0) / g * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt()
    } else {
        let values: Vec<f64> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &len)| chunk_values(&sampler, spec, seed, g as u64, len))
            .collect();
        let m4 = values.iter().map(|x| (x - total.mean).powi(4)).sum::<f64>() / n;
        let s2 = variance;
        ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    };

    Ok(McMoments {
        mean: OracleEstimate {
            estimate: total.mean,
            stderr: mean_se,
            reps,
            seed,
        },
        variance: OracleEstimate {
            estimate: variance,
            stderr: variance_se,
            reps,
            seed,
        },
    })
}
