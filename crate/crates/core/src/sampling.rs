//! Backward-state distributions and the Monte Carlo engine that recovers
//! outcome frequencies by averaging over backward states.
//!
//! Every sample owns its random stream: sample `i` of `(seed, stream)` draws
//! from a ChaCha8 generator keyed by `(seed, stream)` and positioned on
//! ChaCha stream `i`. Work is split into fixed-size chunks and reduced by
//! integer addition, so results do not depend on the number of workers.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign_over_basis, Assignment, PurePair};
use crate::error::{Error, Result};
use crate::qcore::{
    c, hermitian_part, overlap_sq, trace, CMatrix, CVector, DensityMatrix, HermitianOperator,
    OrthonormalBasis, StateVector, UnitaryOperator, C64,
};

/// Samples per work item.
pub const CHUNK: u64 = 4096;

/// Addresses an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    /// Generator for sample `i`; a pure function of `(seed, stream_index, i)`.
    pub fn sample_rng(&self, i: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_index.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(i);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackwardDistribution {
    /// `|<n|a>|^2` uniform on `[0, 1]`, the rest Haar-random in the
    /// complement of `a`.
    UniformOverlap(StateVector),
    /// Unitarily invariant pure states.
    HaarPure,
    Fixed(StateVector),
}

impl BackwardDistribution {
    pub fn kind(&self) -> DistKind {
        match self {
            Self::UniformOverlap(_) => DistKind::UniformOverlap,
            Self::HaarPure => DistKind::HaarPure,
            Self::Fixed(_) => DistKind::Fixed,
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Self::UniformOverlap(s) | Self::Fixed(s) => Some(s.dim()),
            Self::HaarPure => None,
        }
    }

    pub fn sample<R: Rng>(&self, d: usize, rng: &mut R) -> Result<StateVector> {
        match self {
            Self::UniformOverlap(target) => Ok(backward_uniform_overlap(target, rng)),
            Self::HaarPure => haar_state(d, rng),
            Self::Fixed(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    UniformOverlap,
    #[serde(rename = "haar")]
    HaarPure,
    Fixed,
}

impl DistKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::UniformOverlap => "uniform-overlap",
            Self::HaarPure => "haar",
            Self::Fixed => "fixed",
        }
    }
}

fn gaussian_vector<R: Rng>(d: usize, rng: &mut R) -> CVector {
    CVector::from_fn(d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

fn ginibre<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    DMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Haar-random pure state from a normalized complex Gaussian vector.
pub fn haar_state<R: Rng>(d: usize, rng: &mut R) -> Result<StateVector> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    loop {
        if let Ok(s) = StateVector::from_vector(gaussian_vector(d, rng)) {
            return Ok(s);
        }
    }
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `R`'s
/// diagonal folded back into `Q`.
pub fn haar_unitary<R: Rng>(d: usize, rng: &mut R) -> Result<UnitaryOperator> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let qr = ginibre(d, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            c(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    UnitaryOperator::new(q)
}

pub fn haar_basis<R: Rng>(d: usize, rng: &mut R) -> Result<OrthonormalBasis> {
    OrthonormalBasis::from_unitary(&haar_unitary(d, rng)?)
}

/// Full-rank random density matrix `G G^dag / Tr(G G^dag)`.
pub fn random_density_matrix<R: Rng>(d: usize, rng: &mut R) -> Result<DensityMatrix> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let g = ginibre(d, rng);
    let m = hermitian_part(&(&g * g.adjoint()));
    let tr = trace(&m).re;
    DensityMatrix::new(m.unscale(tr))
}

/// Random Hermitian matrix from the Gaussian unitary ensemble.
pub fn random_hermitian<R: Rng>(d: usize, rng: &mut R) -> Result<HermitianOperator> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    HermitianOperator::new(hermitian_part(&ginibre(d, rng)))
}

/// Backward state `n` with `|<n|a>|^2 = u`, `u ~ U(0,1)`, a uniform relative
/// phase, and a Haar-random direction in the orthogonal complement of `a`.
pub fn backward_uniform_overlap<R: Rng>(a: &StateVector, rng: &mut R) -> StateVector {
    let u: f64 = rng.random();
    let phi: f64 = rng.random::<f64>() * TAU;
    let av = a.amplitudes();
    let w = loop {
        let g = gaussian_vector(a.dim(), rng);
        let perp = &g - av * av.dotc(&g);
        let norm = perp.norm();
        if norm > 1e-8 {
            break perp.unscale(norm);
        }
    };
    let n = av * C64::from_polar(u.sqrt(), phi) + w * c((1.0 - u).sqrt(), 0.0);
    StateVector::from_vector(n).expect("unit vector by construction")
}

/// Monte Carlo run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub stream: u64,
    pub tie_tol: f64,
}

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            seed,
            stream: 0,
            tie_tol: 0.0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_tie_tol(mut self, tie_tol: f64) -> Self {
        self.tie_tol = tie_tol;
        self
    }

    fn rng_stream(&self) -> RngStream {
        RngStream::new(self.seed, self.stream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornEstimate {
    pub frequency: f64,
    pub std_err: f64,
    pub samples: u64,
    pub hits: u64,
}

impl BornEstimate {
    pub fn from_counts(hits: u64, samples: u64) -> Self {
        let f = if samples == 0 {
            0.0
        } else {
            hits as f64 / samples as f64
        };
        let std_err = if samples == 0 {
            0.0
        } else {
            (f * (1.0 - f) / samples as f64).sqrt()
        };
        Self {
            frequency: f,
            std_err,
            samples,
            hits,
        }
    }

    /// `|frequency - expected| <= k * std_err`.
    pub fn within(&self, expected: f64, k: f64) -> bool {
        (self.frequency - expected).abs() <= k * self.std_err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisEstimate {
    pub outcomes: Vec<BornEstimate>,
    pub no_assign: BornEstimate,
    pub samples: u64,
}

impl BasisEstimate {
    pub fn no_assign_rate(&self) -> f64 {
        self.no_assign.frequency
    }

    pub fn assigned(&self) -> u64 {
        self.samples - self.no_assign.hits
    }

    /// Frequency of outcome `k` among samples that assigned some outcome.
    pub fn conditional(&self, k: usize) -> BornEstimate {
        BornEstimate::from_counts(self.outcomes[k].hits, self.assigned())
    }
}

fn chunk_ranges(samples: u64) -> Vec<(u64, u64)> {
    (0..samples.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(samples)))
        .collect()
}

/// Counts, in parallel over fixed chunks, how often `tally` picks each of
/// `slots` bins.
fn sharded_counts<F>(samples: u64, slots: usize, tally: F) -> Result<Vec<u64>>
where
    F: Fn(u64) -> Result<usize> + Sync,
{
    let partial = chunk_ranges(samples)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut counts = vec![0u64; slots];
            for i in lo..hi {
                counts[tally(i)?] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(partial.into_iter().fold(vec![0u64; slots], |mut acc, v| {
        acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        acc
    }))
}

fn check_inputs(d: usize, dist: &BackwardDistribution, cfg: &McConfig) -> Result<()> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    if let Some(found) = dist.dim() {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    Ok(())
}

/// Frequency with which `(forward, n)` assigns outcome `a` when `n` is drawn
/// from `dist`.
pub fn born_mc(
    forward: &StateVector,
    a: &StateVector,
    dist: &BackwardDistribution,
    cfg: &McConfig,
) -> Result<BornEstimate> {
    let d = forward.dim();
    if a.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: a.dim(),
        });
    }
    check_inputs(d, dist, cfg)?;
    let p = overlap_sq(forward, a)?;
    let stream = cfg.rng_stream();
    let threshold = 1.0 + cfg.tie_tol;
    let counts = sharded_counts(cfg.samples, 2, |i| {
        let mut rng = stream.sample_rng(i);
        let n = dist.sample(d, &mut rng)?;
        Ok(usize::from(p + overlap_sq(&n, a)? > threshold))
    })?;
    Ok(BornEstimate::from_counts(counts[1], cfg.samples))
}

/// Per-outcome frequencies over a full basis, with the no-outcome fraction.
pub fn basis_mc(
    forward: &StateVector,
    basis: &OrthonormalBasis,
    dist: &BackwardDistribution,
    cfg: &McConfig,
) -> Result<BasisEstimate> {
    let d = forward.dim();
    if basis.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: basis.dim(),
        });
    }
    check_inputs(d, dist, cfg)?;
    let stream = cfg.rng_stream();
    let counts = sharded_counts(cfg.samples, d + 1, |i| {
        let mut rng = stream.sample_rng(i);
        let n = dist.sample(d, &mut rng)?;
        let pair = PurePair::new(forward.clone(), n)?;
        Ok(match assign_over_basis(&pair, basis, cfg.tie_tol)? {
            Assignment::Assigned(k) => k,
            Assignment::NoOutcome => d,
        })
    })?;
    Ok(BasisEstimate {
        outcomes: counts[..d]
            .iter()
            .map(|&h| BornEstimate::from_counts(h, cfg.samples))
            .collect(),
        no_assign: BornEstimate::from_counts(counts[d], cfg.samples),
        samples: cfg.samples,
    })
}

/// Analytic assignment probability for an outcome with Born weight `p`:
/// `p` under the uniform-overlap distribution, `p^(d-1)` under Haar (the
/// overlap of a Haar state with a fixed vector is Beta(1, d-1)).
pub fn born_oracle(kind: DistKind, p: f64, d: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [0, 1]")));
    }
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    match kind {
        DistKind::UniformOverlap => Ok(p),
        DistKind::HaarPure => Ok(p.powi(d as i32 - 1)),
        DistKind::Fixed => Err(Error::OracleNotApplicable),
    }
}
