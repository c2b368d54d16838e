//! Synthetic block-diagonal precision sets (Models I and II) and samplers.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{MultiNetworkSample, PrecisionSet};
use crate::error::{Error, Result};

/// Blocks are redrawn at most this many times before giving up.
pub const MAX_PD_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    /// Every within-block pair is linked in all `k` graphs.
    I,
    /// Each within-block pair is, with probability 1/2, linked in a single graph only.
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    #[default]
    Gaussian,
    /// i.i.d. Laplace(0, 1/sqrt 2) components (unit variance) mapped through `Sigma^{1/2}`.
    Laplace,
}

/// What to do with `p mod block_size` leftover nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Remainder {
    /// `p` must be a multiple of the block size.
    #[default]
    Reject,
    /// Leftover nodes form a trailing block with unit diagonal and no edges.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k: usize,
    pub p: usize,
    pub n_per_class: usize,
    pub block_size: usize,
    pub model: Model,
    pub noise: Noise,
    pub seed: u64,
    #[serde(default)]
    pub remainder: Remainder,
}

/// One diagonal block: nodes `start..start + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub len: usize,
    pub kind: BlockKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Diagonal 1, links U[0.2, 0.4].
    Upper,
    /// Diagonal 3, links U[0.6, 1.2].
    Lower,
    /// Diagonal 1, no links.
    Remainder,
}

impl BlockKind {
    fn diagonal(self) -> f64 {
        match self {
            BlockKind::Lower => 3.0,
            _ => 1.0,
        }
    }

    fn range(self) -> (f64, f64) {
        match self {
            BlockKind::Upper => (0.2, 0.4),
            BlockKind::Lower => (0.6, 1.2),
            BlockKind::Remainder => (0.0, 0.0),
        }
    }
}

impl SimConfig {
    pub fn new(k: usize, p: usize, n_per_class: usize, model: Model, seed: u64) -> Self {
        Self {
            k,
            p,
            n_per_class,
            block_size: 8,
            model,
            noise: Noise::Gaussian,
            seed,
            remainder: Remainder::Reject,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        if self.block_size < 2 {
            return Err(Error::Invalid("block size must be at least 2".into()));
        }
        if self.p < self.block_size {
            return Err(Error::Invalid(format!(
                "p = {} is smaller than the block size {}",
                self.p, self.block_size
            )));
        }
        if self.p % self.block_size != 0 && self.remainder == Remainder::Reject {
            return Err(Error::Invalid(format!(
                "p = {} is not a multiple of the block size {}",
                self.p, self.block_size
            )));
        }
        if self.n_per_class < 2 {
            return Err(Error::Invalid("need at least 2 samples per class".into()));
        }
        Ok(())
    }

    /// Full blocks (the first half, rounded down, are upper) then any remainder.
    pub fn blocks(&self) -> Vec<Block> {
        let full = self.p / self.block_size;
        let upper = full / 2;
        let mut out: Vec<Block> = (0..full)
            .map(|i| Block {
                start: i * self.block_size,
                len: self.block_size,
                kind: if i < upper { BlockKind::Upper } else { BlockKind::Lower },
            })
            .collect();
        let rest = self.p % self.block_size;
        if rest > 0 {
            out.push(Block {
                start: full * self.block_size,
                len: rest,
                kind: BlockKind::Remainder,
            });
        }
        out
    }
}

/// SplitMix64 mix of `(seed, stream)`, giving independent per-stream seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TRUTH_STREAM: u64 = 0;
const SAMPLE_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;

pub fn gen_model1(config: &SimConfig) -> Result<PrecisionSet> {
    generate(config, Model::I)
}

pub fn gen_model2(config: &SimConfig) -> Result<PrecisionSet> {
    generate(config, Model::II)
}

/// The precision set for `config.model`.
pub fn gen_truth(config: &SimConfig) -> Result<PrecisionSet> {
    generate(config, config.model)
}

fn generate(config: &SimConfig, model: Model) -> Result<PrecisionSet> {
    config.validate()?;
    let (k, p) = (config.k, config.p);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, TRUTH_STREAM));
    let mut omega = vec![DMatrix::<f64>::zeros(p, p); k];
    for (bi, block) in config.blocks().into_iter().enumerate() {
        let mut attempts = 0;
        let blocks = loop {
            attempts += 1;
            let draw = draw_block(block, k, model, &mut rng);
            if draw.iter().all(|m| m.clone().cholesky().is_some()) {
                break draw;
            }
            if attempts >= MAX_PD_ATTEMPTS {
                return Err(Error::GeneratorExhausted {
                    block: bi,
                    attempts,
                });
            }
        };
        if attempts > 1 {
            log::debug!("block {bi}: {} non-positive-definite draws rejected", attempts - 1);
        }
        for (m, b) in omega.iter_mut().zip(blocks) {
            m.view_mut((block.start, block.start), (block.len, block.len))
                .copy_from(&b);
        }
    }
    PrecisionSet::new(omega)
}

// One joint draw of a block across all k graphs; each unordered pair is
// assigned once and mirrored.
fn draw_block(block: Block, k: usize, model: Model, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
    let m = block.len;
    let mut out = vec![DMatrix::from_diagonal_element(m, m, block.kind.diagonal()); k];
    if block.kind == BlockKind::Remainder {
        return out;
    }
    let (lo, hi) = block.kind.range();
    for a in 0..m {
        for b in (a + 1)..m {
            let single = match model {
                Model::I => None,
                Model::II => {
                    if rng.random_bool(0.5) {
                        None
                    } else {
                        Some(rng.random_range(0..k))
                    }
                }
            };
            for (t, mat) in out.iter_mut().enumerate() {
                let v = match single {
                    None => rng.random_range(lo..=hi),
                    Some(k0) if k0 == t => rng.random_range(lo..=hi),
                    Some(_) => 0.0,
                };
                mat[(a, b)] = v;
                mat[(b, a)] = v;
            }
        }
    }
    out
}

/// Symmetric square root of `Omega^{-1}`.
pub fn covariance_sqrt(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = omega.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite { index: 0 });
    }
    let d = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&d) * v.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Draws `n_per_class` rows per class from `N(0, Omega^{-1})` or its Laplace analogue.
pub fn sample_from(
    truth: &PrecisionSet,
    n_per_class: usize,
    noise: Noise,
    seed: u64,
) -> Result<MultiNetworkSample> {
    let p = truth.p();
    let mut data = Vec::with_capacity(truth.k());
    for (t, omega) in truth.matrices().iter().enumerate() {
        let root = covariance_sqrt(omega).map_err(|_| Error::NotPositiveDefinite { index: t })?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
        let mut z = DMatrix::<f64>::zeros(n_per_class, p);
        // row-major fill so each row is one draw
        for i in 0..n_per_class {
            for j in 0..p {
                z[(i, j)] = match noise {
                    Noise::Gaussian => rng.sample(StandardNormal),
                    Noise::Laplace => {
                        let e1: f64 = rng.sample(Exp1);
                        let e2: f64 = rng.sample(Exp1);
                        (e1 - e2) / std::f64::consts::SQRT_2
                    }
                };
            }
        }
        data.push(z * &root);
    }
    MultiNetworkSample::new(data)
}

/// Truth plus a training sample, both derived from `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<(PrecisionSet, MultiNetworkSample)> {
    let truth = gen_truth(config)?;
    let sample = sample_from(
        &truth,
        config.n_per_class,
        config.noise,
        derive_seed(config.seed, SAMPLE_STREAM),
    )?;
    Ok((truth, sample))
}

/// An independent sample of the same size from `truth`, for validation.
pub fn simulate_validation(config: &SimConfig, truth: &PrecisionSet) -> Result<MultiNetworkSample> {
    sample_from(
        truth,
        config.n_per_class,
        config.noise,
        derive_seed(config.seed, VALIDATION_STREAM),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_block(cfg: &SimConfig, a: usize, b: usize) -> Option<Block> {
        cfg.blocks()
            .into_iter()
            .find(|bl| a >= bl.start && a < bl.start + bl.len && b >= bl.start && b < bl.start + bl.len)
    }

    #[test]
    fn model1_layout() {
        let cfg = SimConfig::new(3, 16, 10, Model::I, 1);
        let truth = gen_model1(&cfg).unwrap();
        for m in truth.matrices() {
            for a in 0..16 {
                for b in 0..16 {
                    let v = m[(a, b)];
                    assert_eq!(v, m[(b, a)]);
                    match (a == b, a < 8 && b < 8, a >= 8 && b >= 8) {
                        (true, true, _) => assert_eq!(v, 1.0),
                        (true, _, true) => assert_eq!(v, 3.0),
                        (false, true, _) => assert!((0.2..=0.4).contains(&v)),
                        (false, _, true) => assert!((0.6..=1.2).contains(&v)),
                        _ => assert_eq!(v, 0.0),
                    }
                }
            }
            assert!(m.clone().symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn model2_single_class_fraction() {
        let cfg = SimConfig::new(4, 48, 10, Model::II, 11);
        let truth = gen_model2(&cfg).unwrap();
        let (mut pairs, mut single) = (0usize, 0usize);
        for a in 0..48 {
            for b in (a + 1)..48 {
                let link = truth.link(a, b);
                let nz = link.iter().filter(|v| **v != 0.0).count();
                if in_block(&cfg, a, b).is_some() {
                    pairs += 1;
                    assert!(nz == 1 || nz == 4, "nz = {nz}");
                    if nz == 1 {
                        single += 1;
                    }
                } else {
                    assert_eq!(nz, 0);
                }
            }
        }
        let (n, mean) = (pairs as f64, pairs as f64 / 2.0);
        assert!((single as f64 - mean).abs() <= 4.0 * (n * 0.25).sqrt());
    }

    #[test]
    fn remainder_policy() {
        let mut cfg = SimConfig::new(2, 50, 10, Model::I, 3);
        assert!(gen_model1(&cfg).is_err());
        cfg.remainder = Remainder::Diagonal;
        let truth = gen_model1(&cfg).unwrap();
        let blocks = cfg.blocks();
        assert_eq!(blocks.len(), 7);
        assert_eq!(blocks.iter().filter(|b| b.kind == BlockKind::Upper).count(), 3);
        let m = truth.matrix(0);
        assert_eq!(m[(48, 48)], 1.0);
        assert_eq!(m[(48, 49)], 0.0);
        assert_eq!(m[(47, 48)], 0.0);
    }

    #[test]
    fn deterministic() {
        let cfg = SimConfig::new(2, 16, 20, Model::II, 5);
        let (t1, s1) = simulate(&cfg).unwrap();
        let (t2, s2) = simulate(&cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(s1.class(1), s2.class(1));
        assert_ne!(derive_seed(5, 0), derive_seed(5, 1));
    }

    #[test]
    fn laplace_moments() {
        let truth = PrecisionSet::identity(1, 3);
        let s = sample_from(&truth, 10_000, Noise::Laplace, 9).unwrap();
        let x = s.class(0);
        for j in 0..3 {
            let col = x.column(j);
            let var = col.map(|v| v * v).mean();
            let kurt = col.map(|v| v.powi(4)).mean() / (var * var) - 3.0;
            assert!((var - 1.0).abs() < 0.1, "var {var}");
            assert!((kurt - 3.0).abs() < 0.8, "kurtosis {kurt}");
        }
    }

    #[test]
    fn gaussian_covariance() {
        let cfg = SimConfig::new(1, 8, 20_000, Model::I, 2);
        let truth = gen_model1(&cfg).unwrap();
        let s = sample_from(&truth, 20_000, Noise::Gaussian, 4).unwrap();
        let cov = &s.covariances()[0];
        let sigma = truth.matrix(0).clone().try_inverse().unwrap();
        assert!((cov - &sigma).amax() < 0.1 * sigma.amax());
    }
}
