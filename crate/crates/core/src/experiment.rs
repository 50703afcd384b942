//! Experiment harness: declarative configs, deterministic runners and CSV/JSON
//! result emission.
//!
//! Every random draw comes from an [`RngStream`] keyed by the config seed, a
//! per-purpose stream index and the draw index, so payloads depend only on the
//! config. Worker count only sizes the thread pool.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{
    assign_over_basis, satisfies_pure, weak_value, Assignment, MixedPair, PurePair, TwoState,
};
use crate::blochpbr::{
    bloch_from_state, pbr_distinguishing_vector, state_from_bloch, BlochVector,
    PbrGeometricInstance,
};
use crate::dynamics::{
    commutator_solve, halving_ratio, stationary_partner, CommutatorTarget, StationarySolveInput,
};
use crate::error::{Error, Result};
use crate::qcore::{
    c, commutator, frobenius, json, min_eigenvalue, outer, overlap_sq, spectral_default, CMatrix,
    HermitianOperator, OrthonormalBasis, StateVector, UnitaryOperator,
};
use crate::sampling::{
    basis_mc, born_mc, born_oracle, haar_basis, haar_state, haar_unitary, random_density_matrix,
    random_hermitian, BackwardDistribution, BornEstimate, DistKind, McConfig, RngStream,
};
use crate::sic::{
    builtin_sic, search_fiducial, sic_distinguish, sic_expand, sic_from_fiducial, sic_reconstruct,
    sic_rule_check, validate_sic, welch_bound, FiducialSearchConfig, Separation, SicPovm,
    MAX_SEARCH_DIM,
};

pub const SCHEMA_VERSION: u32 = 1;

/// CSV header, in order. `wall_time_s` is dropped in byte-comparison mode.
pub const COLUMNS: [&str; 19] = [
    "schema_version",
    "experiment",
    "dist",
    "d",
    "p_or_theta",
    "N",
    "seed",
    "outcome",
    "frequency",
    "stderr",
    "noAssignRate",
    "conditional",
    "oracle",
    "metric",
    "value",
    "status",
    "detail",
    "config",
    "wall_time_s",
];

/// Largest dimension accepted by the non-SIC experiments.
pub const MAX_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BornMc,
    BasisMc,
    ExclusivityScan,
    SicValidate,
    SicSearch,
    SicDistinguish,
    StationarySolve,
    PbrGeometric,
    WeakValue,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::BornMc,
        ExperimentKind::BasisMc,
        ExperimentKind::ExclusivityScan,
        ExperimentKind::SicValidate,
        ExperimentKind::SicSearch,
        ExperimentKind::SicDistinguish,
        ExperimentKind::StationarySolve,
        ExperimentKind::PbrGeometric,
        ExperimentKind::WeakValue,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::BornMc => "born-mc",
            ExperimentKind::BasisMc => "basis-mc",
            ExperimentKind::ExclusivityScan => "exclusivity-scan",
            ExperimentKind::SicValidate => "sic-validate",
            ExperimentKind::SicSearch => "sic-search",
            ExperimentKind::SicDistinguish => "sic-distinguish",
            ExperimentKind::StationarySolve => "stationary-solve",
            ExperimentKind::PbrGeometric => "pbr-geometric",
            ExperimentKind::WeakValue => "weak-value",
        }
    }
}

/// Backward-state distribution. The uniform-overlap target is the outcome
/// being measured, so it is not part of the descriptor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionSpec {
    #[default]
    UniformOverlap,
    #[serde(rename = "haar")]
    HaarPure,
    Fixed {
        state: StateVector,
    },
}

impl DistributionSpec {
    pub fn kind(&self) -> DistKind {
        match self {
            DistributionSpec::UniformOverlap => DistKind::UniformOverlap,
            DistributionSpec::HaarPure => DistKind::HaarPure,
            DistributionSpec::Fixed { .. } => DistKind::Fixed,
        }
    }

    fn with_target(&self, target: &StateVector) -> BackwardDistribution {
        match self {
            DistributionSpec::UniformOverlap => {
                BackwardDistribution::UniformOverlap(target.clone())
            }
            DistributionSpec::HaarPure => BackwardDistribution::HaarPure,
            DistributionSpec::Fixed { state } => BackwardDistribution::Fixed(state.clone()),
        }
    }
}

/// Experiment-specific knobs. Unset fields take the documented defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentParams {
    /// born-mc Born weights; default 0.1, 0.2, ..., 0.9.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<f64>>,
    /// basis-mc tilt angles in degrees; default 30, 60, 90, 120, 150.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<Vec<f64>>,
    /// Fiducial search restarts; default 20.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    /// Fiducial search iteration cap per restart; default 2000.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// SIC validation tolerance; default 1e-10 (sic-validate), 1e-5 (sic-search).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sic_tol: Option<f64>,
    /// stationary-solve time steps; default 1e-2, 1e-3, 1e-4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<Vec<f64>>,
    /// stationary-solve input file (one object or an array).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// weak-value observable; default diag(0, 1, ..., d-1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<HermitianOperator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<StateVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_selected: Option<StateVector>,
}

impl ExperimentParams {
    pub fn p_grid(&self) -> Vec<f64> {
        self.p_grid
            .clone()
            .unwrap_or_else(|| (1..=9).map(|k| k as f64 / 10.0).collect())
    }

    pub fn theta_deg(&self) -> Vec<f64> {
        self.theta_deg
            .clone()
            .unwrap_or_else(|| vec![30.0, 60.0, 90.0, 120.0, 150.0])
    }

    pub fn restarts(&self) -> usize {
        self.restarts.unwrap_or(20)
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters.unwrap_or(2000)
    }

    pub fn dt(&self) -> Vec<f64> {
        self.dt.clone().unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dim: usize,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub tie_tol: f64,
    #[serde(default)]
    pub distribution: DistributionSpec,
    #[serde(default)]
    pub params: ExperimentParams,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, dim: usize, samples: u64, seed: u64) -> Self {
        Self {
            experiment,
            dim,
            samples,
            seed,
            tie_tol: 0.0,
            distribution: DistributionSpec::default(),
            params: ExperimentParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d < 2 {
            return Err(Error::config("dim", format!("must be >= 2, got {d}")));
        }
        let max = match self.experiment {
            ExperimentKind::SicValidate
            | ExperimentKind::SicSearch
            | ExperimentKind::SicDistinguish => MAX_SEARCH_DIM,
            ExperimentKind::PbrGeometric => 2,
            _ => MAX_DIM,
        };
        if d > max {
            return Err(Error::config(
                "dim",
                format!("must be <= {max} for {}, got {d}", self.experiment.name()),
            ));
        }
        if self.samples == 0 {
            return Err(Error::config("samples", "must be >= 1"));
        }
        if !(self.tie_tol.is_finite() && self.tie_tol >= 0.0) {
            return Err(Error::config(
                "tieTol",
                format!("must be finite and >= 0, got {}", self.tie_tol),
            ));
        }
        if let DistributionSpec::Fixed { state } = &self.distribution {
            if state.dim() != d {
                return Err(Error::config(
                    "distribution.state",
                    format!("dimension {} does not match dim {d}", state.dim()),
                ));
            }
        }
        let p = &self.params;
        if let Some(grid) = &p.p_grid {
            if grid.is_empty() || grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::config(
                    "params.pGrid",
                    "must be a non-empty list of values in [0, 1]",
                ));
            }
        }
        if let Some(thetas) = &p.theta_deg {
            if thetas.is_empty() || thetas.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(
                    "params.thetaDeg",
                    "must be a non-empty list of finite angles",
                ));
            }
        }
        if p.restarts == Some(0) {
            return Err(Error::config("params.restarts", "must be >= 1"));
        }
        if p.max_iters == Some(0) {
            return Err(Error::config("params.maxIters", "must be >= 1"));
        }
        if let Some(tol) = p.sic_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::config("params.sicTol", "must be finite and > 0"));
            }
        }
        if let Some(dts) = &p.dt {
            if dts.is_empty() || dts.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::config(
                    "params.dt",
                    "must be a non-empty list of positive steps",
                ));
            }
        }
        if let Some(a) = &p.observable {
            if a.dim() != d {
                return Err(Error::config(
                    "params.observable",
                    format!("dimension {} does not match dim {d}", a.dim()),
                ));
            }
        }
        for (field, s) in [
            ("params.forward", &p.forward),
            ("params.postSelected", &p.post_selected),
        ] {
            if let Some(s) = s {
                if s.dim() != d {
                    return Err(Error::config(
                        field,
                        format!("dimension {} does not match dim {d}", s.dim()),
                    ));
                }
            }
        }
        if p.forward.is_some() != p.post_selected.is_some() {
            return Err(Error::config(
                "params.forward",
                "forward and postSelected must be given together",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
        }
    }
}

/// One output row. Columns an experiment does not produce stay empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub dist: Option<DistKind>,
    pub d: usize,
    pub p_or_theta: Option<f64>,
    #[serde(rename = "N")]
    pub samples: u64,
    pub seed: u64,
    pub outcome: Option<usize>,
    pub frequency: Option<f64>,
    pub stderr: Option<f64>,
    #[serde(rename = "noAssignRate")]
    pub no_assign_rate: Option<f64>,
    pub conditional: Option<f64>,
    pub oracle: Option<f64>,
    pub metric: Option<String>,
    pub value: Option<f64>,
    pub status: Option<Status>,
    pub detail: Option<serde_json::Value>,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl ResultRecord {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.experiment,
            dist: None,
            d: cfg.dim,
            p_or_theta: None,
            samples: cfg.samples,
            seed: cfg.seed,
            outcome: None,
            frequency: None,
            stderr: None,
            no_assign_rate: None,
            conditional: None,
            oracle: None,
            metric: None,
            value: None,
            status: None,
            detail: None,
            config: cfg.clone(),
            wall_time_s: None,
        }
    }

    fn metric(cfg: &ExperimentConfig, name: &str, value: f64) -> Self {
        Self {
            metric: Some(name.to_string()),
            value: Some(value),
            ..Self::new(cfg)
        }
    }

    fn check(mut self, ok: bool) -> Self {
        self.status = Some(Status::from_bool(ok));
        self
    }

    fn estimate(mut self, e: &BornEstimate) -> Self {
        self.frequency = Some(e.frequency);
        self.stderr = Some(e.std_err);
        self
    }

    pub fn failed(&self) -> bool {
        self.status == Some(Status::Fail)
    }
}

/// Runs `cfg` on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let start = Instant::now();
    let mut records = match cfg.experiment {
        ExperimentKind::BornMc => run_born_mc(cfg),
        ExperimentKind::BasisMc => run_basis_mc(cfg),
        ExperimentKind::ExclusivityScan => run_exclusivity_scan(cfg),
        ExperimentKind::SicValidate => run_sic_validate(cfg),
        ExperimentKind::SicSearch => run_sic_search(cfg),
        ExperimentKind::SicDistinguish => run_sic_distinguish(cfg),
        ExperimentKind::StationarySolve => run_stationary_solve(cfg),
        ExperimentKind::PbrGeometric => run_pbr_geometric(cfg),
        ExperimentKind::WeakValue => run_weak_value(cfg),
    }?;
    let wall = start.elapsed().as_secs_f64();
    for r in &mut records {
        r.wall_time_s = Some(wall);
    }
    Ok(records)
}

/// Runs `cfg` on a dedicated pool of `workers` threads.
pub fn run_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<ResultRecord>> {
    if workers == 0 {
        return Err(Error::config("workers", "must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(cfg))
}

fn draw(cfg: &ExperimentConfig, stream: u64, i: u64) -> ChaCha8Rng {
    RngStream::new(cfg.seed, stream).sample_rng(i)
}

fn mc_config(cfg: &ExperimentConfig, stream: u64) -> McConfig {
    McConfig::new(cfg.samples, cfg.seed)
        .with_stream(stream)
        .with_tie_tol(cfg.tie_tol)
}

/// `cos(t)|0> + sin(t)|1>` padded with zeros.
fn qubit_plane_state(d: usize, cos: f64, sin: f64) -> Result<StateVector> {
    let mut amps = vec![0.0; d];
    amps[0] = cos;
    amps[1] = sin;
    StateVector::from_real(&amps)
}

fn run_born_mc(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let d = cfg.dim;
    let a = StateVector::basis(d, 0)?;
    let dist = cfg.distribution.with_target(&a);
    let mut out = Vec::new();
    for (idx, p) in cfg.params.p_grid().into_iter().enumerate() {
        let forward = qubit_plane_state(d, p.sqrt(), (1.0 - p).sqrt())?;
        let est = born_mc(&forward, &a, &dist, &mc_config(cfg, idx as u64))?;
        let oracle = match &dist {
            BackwardDistribution::Fixed(n) => {
                let pair = PurePair::new(forward.clone(), n.clone())?;
                f64::from(u8::from(satisfies_pure(&pair, &a, cfg.tie_tol)?))
            }
            _ => born_oracle(dist.kind(), p, d)?,
        };
        out.push(ResultRecord {
            dist: Some(dist.kind()),
            p_or_theta: Some(p),
            outcome: Some(0),
            oracle: Some(oracle),
            ..ResultRecord::new(cfg).estimate(&est)
        });
    }
    Ok(out)
}

/// Basis tilted by `theta` in the `{|0>, |1>}` plane, computational elsewhere.
fn tilted_basis(d: usize, theta: f64) -> Result<OrthonormalBasis> {
    let (s, c) = (theta / 2.0).sin_cos();
    let mut vectors = vec![qubit_plane_state(d, c, s)?, qubit_plane_state(d, -s, c)?];
    for k in 2..d {
        vectors.push(StateVector::basis(d, k)?);
    }
    OrthonormalBasis::new(vectors)
}

fn run_basis_mc(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let d = cfg.dim;
    let forward = StateVector::basis(d, 0)?;
    let mut out = Vec::new();
    for (idx, theta) in cfg.params.theta_deg().into_iter().enumerate() {
        let basis = tilted_basis(d, theta.to_radians())?;
        let dist = cfg.distribution.with_target(&basis.vectors()[0]);
        let est = basis_mc(&forward, &basis, &dist, &mc_config(cfg, idx as u64))?;
        // fixed backward states assign deterministically
        let fixed = match &dist {
            BackwardDistribution::Fixed(n) => Some(assign_over_basis(
                &PurePair::new(forward.clone(), n.clone())?,
                &basis,
                cfg.tie_tol,
            )?),
            _ => None,
        };
        for (k, e) in est.outcomes.iter().enumerate() {
            let oracle = match fixed {
                Some(assigned) => Some(f64::from(u8::from(assigned == Assignment::Assigned(k)))),
                // Haar and uniform overlap coincide at d = 2 and give Born weights
                None if d == 2 => Some(overlap_sq(&forward, &basis.vectors()[k])?),
                None => None,
            };
            out.push(ResultRecord {
                dist: Some(dist.kind()),
                p_or_theta: Some(theta),
                outcome: Some(k),
                no_assign_rate: Some(est.no_assign_rate()),
                conditional: Some(est.conditional(k).frequency),
                oracle,
                ..ResultRecord::new(cfg).estimate(e)
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScanOutcome {
    Assigned(usize),
    NoOutcome,
    Multiple,
}

fn scan<P: TwoState>(pair: &P, basis: &OrthonormalBasis, tie_tol: f64) -> Result<ScanOutcome> {
    match assign_over_basis(pair, basis, tie_tol) {
        Ok(Assignment::Assigned(k)) => Ok(ScanOutcome::Assigned(k)),
        Ok(Assignment::NoOutcome) => Ok(ScanOutcome::NoOutcome),
        Err(Error::MultipleOutcomes { .. }) => Ok(ScanOutcome::Multiple),
        Err(e) => Err(e),
    }
}

/// Assignment and bitwise rule values agree under forward/backward swap.
fn swap_symmetric<P: TwoState>(
    pair: &P,
    swapped: &P,
    basis: &OrthonormalBasis,
    tie_tol: f64,
) -> Result<bool> {
    for a in basis.vectors() {
        if pair.rule_value(a)?.to_bits() != swapped.rule_value(a)?.to_bits() {
            return Ok(false);
        }
    }
    Ok(scan(pair, basis, tie_tol)? == scan(swapped, basis, tie_tol)?)
}

fn run_exclusivity_scan(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let d = cfg.dim;
    let (mut multi_pure, mut multi_mixed, mut asym, mut none_pure, mut none_mixed) =
        (0u64, 0u64, 0u64, 0u64, 0u64);
    for i in 0..cfg.samples {
        let mut rng = draw(cfg, 0, i);
        let pure = PurePair::new(haar_state(d, &mut rng)?, haar_state(d, &mut rng)?)?;
        let mixed = MixedPair::new(
            random_density_matrix(d, &mut rng)?,
            random_density_matrix(d, &mut rng)?,
        )?;
        let basis = haar_basis(d, &mut rng)?;
        match scan(&pure, &basis, cfg.tie_tol)? {
            ScanOutcome::Multiple => multi_pure += 1,
            ScanOutcome::NoOutcome => none_pure += 1,
            ScanOutcome::Assigned(_) => {}
        }
        match scan(&mixed, &basis, cfg.tie_tol)? {
            ScanOutcome::Multiple => multi_mixed += 1,
            ScanOutcome::NoOutcome => none_mixed += 1,
            ScanOutcome::Assigned(_) => {}
        }
        if !swap_symmetric(&pure, &pure.time_reversed(), &basis, cfg.tie_tol)?
            || !swap_symmetric(&mixed, &mixed.time_reversed(), &basis, cfg.tie_tol)?
        {
            asym += 1;
        }
    }
    let n = cfg.samples;
    Ok(vec![
        ResultRecord::metric(cfg, "multiple_outcomes_pure", multi_pure as f64)
            .check(multi_pure == 0),
        ResultRecord::metric(cfg, "multiple_outcomes_mixed", multi_mixed as f64)
            .check(multi_mixed == 0),
        ResultRecord::metric(cfg, "swap_mismatches", asym as f64).check(asym == 0),
        ResultRecord::metric(cfg, "no_outcome_pure", none_pure as f64)
            .estimate(&BornEstimate::from_counts(none_pure, n)),
        ResultRecord::metric(cfg, "no_outcome_mixed", none_mixed as f64)
            .estimate(&BornEstimate::from_counts(none_mixed, n)),
    ])
}

fn amplitudes_json(s: &StateVector) -> serde_json::Value {
    serde_json::json!(json::vector_to_pairs(s.amplitudes()))
}

/// Built-in SIC where available, otherwise the best searched orbit.
fn sic_for(cfg: &ExperimentConfig) -> Result<SicPovm> {
    match builtin_sic(cfg.dim) {
        Some(s) => Ok(s),
        None => {
            let report = search_fiducial(&FiducialSearchConfig {
                dim: cfg.dim,
                restarts: cfg.params.restarts(),
                max_iters: cfg.params.max_iters(),
                seed: cfg.seed,
            })?;
            sic_from_fiducial(&report.fiducial)
        }
    }
}

fn run_sic_validate(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let d = cfg.dim;
    let tol = cfg.params.sic_tol.unwrap_or(1e-10);
    let s = sic_for(cfg)?;
    let v = validate_sic(&s, tol);
    let (mut roundtrip, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..cfg.samples {
        let rho = random_density_matrix(d, &mut draw(cfg, 0, i))?;
        let coeffs = sic_expand(rho.matrix(), &s)?;
        roundtrip = roundtrip.max(frobenius(&(sic_reconstruct(&coeffs, &s)? - rho.matrix())));
        for &l in &coeffs.lambdas {
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    let floor = -1.0 / d as f64;
    Ok(vec![
        ResultRecord {
            detail: Some(amplitudes_json(s.fiducial())),
            ..ResultRecord::metric(cfg, "max_pair_deviation", v.max_pair_deviation).check(v.pass)
        },
        ResultRecord::metric(cfg, "identity_deviation", v.identity_deviation)
            .check(v.identity_deviation <= tol),
        ResultRecord::metric(cfg, "roundtrip_max", roundtrip).check(roundtrip <= 1e-9),
        ResultRecord {
            oracle: Some(floor),
            ..ResultRecord::metric(cfg, "lambda_min", lo).check(lo >= floor - 1e-12)
        },
        ResultRecord {
            oracle: Some(1.0),
            ..ResultRecord::metric(cfg, "lambda_max", hi).check(hi <= 1.0 + 1e-12)
        },
    ])
}

fn run_sic_search(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let tol = cfg.params.sic_tol.unwrap_or(1e-5);
    let report = search_fiducial(&FiducialSearchConfig {
        dim: cfg.dim,
        restarts: cfg.params.restarts(),
        max_iters: cfg.params.max_iters(),
        seed: cfg.seed,
    })?;
    let v = validate_sic(&sic_from_fiducial(&report.fiducial)?, tol);
    let bound = welch_bound(cfg.dim);
    let mut out = vec![
        ResultRecord {
            oracle: Some(bound),
            outcome: Some(report.best_restart),
            detail: Some(serde_json::json!({
                "fiducial": amplitudes_json(&report.fiducial),
                "iterations": report.iterations,
            })),
            ..ResultRecord::metric(cfg, "frame_potential", report.frame_potential)
                .check(report.converged)
        },
        ResultRecord::metric(cfg, "max_pair_deviation", v.max_pair_deviation).check(v.pass),
    ];
    for (k, &fp) in report.restart_potentials.iter().enumerate() {
        out.push(ResultRecord {
            outcome: Some(k),
            oracle: Some(bound),
            ..ResultRecord::metric(cfg, "restart_potential", fp)
        });
    }
    Ok(out)
}

fn run_sic_distinguish(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let d = cfg.dim;
    let s = sic_for(cfg)?;
    let (mut none, mut wrong) = (0u64, 0u64);
    for i in 0..cfg.samples {
        let mut rng = draw(cfg, 0, i);
        let p0 = MixedPair::new(
            random_density_matrix(d, &mut rng)?,
            random_density_matrix(d, &mut rng)?,
        )?;
        let p1 = MixedPair::new(
            random_density_matrix(d, &mut rng)?,
            random_density_matrix(d, &mut rng)?,
        )?;
        match sic_distinguish(&p0, &p1, &s)? {
            Separation::NoSeparator => none += 1,
            Separation::Index(k) => {
                let c0 = sic_expand(&p0.summed(), &s)?;
                let c1 = sic_expand(&p1.summed(), &s)?;
                if sic_rule_check(&c0, k, d)? == sic_rule_check(&c1, k, d)? {
                    wrong += 1;
                }
            }
        }
    }
    let n = cfg.samples;
    Ok(vec![
        ResultRecord::metric(cfg, "no_separator", none as f64)
            .estimate(&BornEstimate::from_counts(none, n)),
        ResultRecord::metric(cfg, "separated", (n - none) as f64)
            .estimate(&BornEstimate::from_counts(n - none, n)),
        ResultRecord::metric(cfg, "separator_mismatches", wrong as f64).check(wrong == 0),
    ])
}

/// Hamiltonian with `E_0 = E_1` in a Haar-random eigenbasis.
fn degenerate_hamiltonian(d: usize, rng: &mut ChaCha8Rng) -> Result<HermitianOperator> {
    use rand::Rng;
    let mut e: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    e[1] = e[0];
    let v: UnitaryOperator = haar_unitary(d, rng)?;
    let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        e.iter().map(|&x| c(x, 0.0)),
    ));
    HermitianOperator::new(crate::qcore::hermitian_part(
        &(v.matrix() * diag * v.matrix().adjoint()),
    ))
}

fn relative_residual(rho: &CMatrix, h: &HermitianOperator, k: &CMatrix) -> Result<f64> {
    Ok(frobenius(&(commutator(rho, h.matrix())? - k)) / frobenius(k).max(1.0))
}

fn run_stationary_solve(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    if let Some(path) = &cfg.params.input {
        return stationary_from_file(cfg, path);
    }
    let d = cfg.dim;
    let dts = cfg.params.dt();
    let mut worst = 0.0f64;
    let (mut infeasible_cases, mut detected, mut false_alarms) = (0u64, 0u64, 0u64);
    let mut stationary = vec![(f64::INFINITY, f64::NEG_INFINITY); dts.len()];
    let mut moving = stationary.clone();
    for i in 0..cfg.samples {
        let mut rng = draw(cfg, 0, i);
        let degenerate = i % 10 == 9;
        let h = if degenerate {
            degenerate_hamiltonian(d, &mut rng)?
        } else {
            random_hermitian(d, &mut rng)?
        };
        let down = random_density_matrix(d, &mut rng)?;
        let k = commutator(down.matrix(), h.matrix())?;
        let k = (&k - k.adjoint()).scale(0.5);
        let spec = spectral_default(&h)?;
        let diagonal: Vec<f64> = spec
            .to_eigenbasis(down.matrix())
            .diagonal()
            .iter()
            .map(|z| z.re)
            .collect();
        let input = StationarySolveInput {
            hamiltonian: h.clone(),
            target: CommutatorTarget::new(k.clone())?,
            diagonal: diagonal.clone(),
        };
        match commutator_solve(&input, false) {
            Ok(rho) => worst = worst.max(relative_residual(&rho, &h, &k)?),
            Err(Error::InfeasibleK { .. }) => false_alarms += 1,
            Err(e) => return Err(e),
        }

        // break feasibility on the diagonal, and inside the degenerate block
        let v = spec.vectors_matrix();
        let col = |j: usize| v.column(j).into_owned();
        let eps = c(0.0, 1e-6 * frobenius(&k).max(1.0));
        let mut bad = vec![&k + outer(&col(0), &col(0)) * eps];
        if let Some(block) = spec.blocks.iter().find(|b| b.len() > 1) {
            let (i, j) = (col(block.start), col(block.start + 1));
            bad.push(&k + (outer(&i, &j) + outer(&j, &i)) * eps);
        }
        for kb in bad {
            infeasible_cases += 1;
            let input = StationarySolveInput {
                target: CommutatorTarget::new(kb)?,
                ..input.clone()
            };
            if matches!(
                commutator_solve(&input, false),
                Err(Error::InfeasibleK { .. })
            ) {
                detected += 1;
            }
        }

        if degenerate {
            continue;
        }
        // stationary partner: shift the eigenbasis diagonal by a traceless step
        let step = 0.5 * min_eigenvalue(down.matrix()).max(0.0);
        let mut shifted = diagonal;
        shifted[0] += step;
        shifted[1] -= step;
        let still = MixedPair::new(stationary_partner(&down, &h, &shifted)?, down.clone())?;
        let moved = MixedPair::new(random_density_matrix(d, &mut rng)?, down)?;
        for (j, &dt) in dts.iter().enumerate() {
            let r = halving_ratio(&still, &h, dt)?;
            stationary[j] = (stationary[j].0.min(r), stationary[j].1.max(r));
            let r = halving_ratio(&moved, &h, dt)?;
            moving[j] = (moving[j].0.min(r), moving[j].1.max(r));
        }
    }
    let mut out = vec![
        ResultRecord::metric(cfg, "residual_max", worst).check(worst <= 1e-12),
        ResultRecord::metric(cfg, "infeasible_detected", detected as f64)
            .check(detected == infeasible_cases && false_alarms == 0),
        ResultRecord::metric(cfg, "false_infeasible", false_alarms as f64).check(false_alarms == 0),
    ];
    for (j, &dt) in dts.iter().enumerate() {
        let rows = [
            (
                "halving_ratio_stationary_min",
                stationary[j].0,
                4.0,
                (3.2, 4.8),
            ),
            (
                "halving_ratio_stationary_max",
                stationary[j].1,
                4.0,
                (3.2, 4.8),
            ),
            (
                "halving_ratio_nonstationary_min",
                moving[j].0,
                2.0,
                (1.6, 2.4),
            ),
            (
                "halving_ratio_nonstationary_max",
                moving[j].1,
                2.0,
                (1.6, 2.4),
            ),
        ];
        for (name, value, oracle, (lo, hi)) in rows {
            // empty when every instance was degenerate
            let ok = value.is_infinite() || (lo..=hi).contains(&value);
            out.push(ResultRecord {
                p_or_theta: Some(dt),
                oracle: Some(oracle),
                ..ResultRecord::metric(cfg, name, value).check(ok)
            });
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SolveInputs {
    One(StationarySolveInput),
    Many(Vec<StationarySolveInput>),
}

fn stationary_from_file(cfg: &ExperimentConfig, path: &Path) -> Result<Vec<ResultRecord>> {
    let io = |message: String| Error::Io {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
    let inputs = match serde_json::from_str::<SolveInputs>(&text).map_err(|e| io(e.to_string()))? {
        SolveInputs::One(x) => vec![x],
        SolveInputs::Many(xs) => xs,
    };
    let mut out = Vec::new();
    for (idx, input) in inputs.iter().enumerate() {
        if input.hamiltonian.dim() != cfg.dim {
            return Err(Error::config(
                "params.input",
                format!(
                    "instance {idx} has dimension {}, config dim is {}",
                    input.hamiltonian.dim(),
                    cfg.dim
                ),
            ));
        }
        let rho = commutator_solve(input, false)?;
        let residual = relative_residual(&rho, &input.hamiltonian, input.target.matrix())?;
        out.push(ResultRecord {
            outcome: Some(idx),
            detail: Some(serde_json::json!(json::matrix_to_rows(&rho))),
            ..ResultRecord::metric(cfg, "residual", residual).check(residual <= 1e-12)
        });
    }
    Ok(out)
}

fn random_bloch(rng: &mut ChaCha8Rng) -> Result<BlochVector> {
    let v = bloch_from_state(&haar_state(2, rng)?)?;
    v.normalized().ok_or(Error::DegenerateInstance)
}

fn run_pbr_geometric(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let (mut margin_a, mut margin_b) = (f64::INFINITY, f64::INFINITY);
    let (mut separated, mut degenerate, mut mismatches) = (0u64, 0u64, 0u64);
    let (mut constructed, mut caught) = (0u64, 0u64);
    for i in 0..cfg.samples {
        let mut rng = draw(cfg, 0, i);
        let v: Vec<BlochVector> = (0..4)
            .map(|_| random_bloch(&mut rng))
            .collect::<Result<_>>()?;
        let inst = PbrGeometricInstance::new((v[0], v[1]), (v[2], v[3]))?;
        match pbr_distinguishing_vector(&inst) {
            Ok(a) => {
                separated += 1;
                let a_state = state_from_bloch(&a)?;
                let s: Vec<StateVector> = v.iter().map(state_from_bloch).collect::<Result<_>>()?;
                let ma = overlap_sq(&s[0], &a_state)? + overlap_sq(&s[1], &a_state)? - 1.0;
                let mb = 1.0 - overlap_sq(&s[2], &a_state)? - overlap_sq(&s[3], &a_state)?;
                margin_a = margin_a.min(ma);
                margin_b = margin_b.min(mb);
                let pa = PurePair::new(s[0].clone(), s[1].clone())?;
                let pb = PurePair::new(s[2].clone(), s[3].clone())?;
                if !satisfies_pure(&pa, &a_state, 0.0)? || satisfies_pure(&pb, &a_state, 0.0)? {
                    mismatches += 1;
                }
            }
            Err(Error::DegenerateInstance) => degenerate += 1,
            Err(e) => return Err(e),
        }
        // parallel sums and a vanishing sum built from the same draw
        let flipped = v[0].scale(-1.0);
        for bad in [
            PbrGeometricInstance::new((v[0], v[0]), (v[0], v[0]))?,
            PbrGeometricInstance::new((v[0], flipped), (v[2], v[3]))?,
        ] {
            constructed += 1;
            if pbr_distinguishing_vector(&bad) == Err(Error::DegenerateInstance) {
                caught += 1;
            }
        }
    }
    Ok(vec![
        ResultRecord::metric(cfg, "separated", separated as f64),
        ResultRecord::metric(cfg, "degenerate_random", degenerate as f64),
        ResultRecord::metric(cfg, "margin_a_min", margin_a)
            .check(separated == 0 || margin_a >= 1e-9),
        ResultRecord::metric(cfg, "margin_b_min", margin_b)
            .check(separated == 0 || margin_b >= 1e-9),
        ResultRecord::metric(cfg, "rule_mismatches", mismatches as f64).check(mismatches == 0),
        ResultRecord::metric(cfg, "degenerate_detected", caught as f64)
            .check(caught == constructed),
    ])
}

fn run_weak_value(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let d = cfg.dim;
    let a = match &cfg.params.observable {
        Some(a) => a.clone(),
        None => HermitianOperator::diagonal(&(0..d).map(|k| k as f64).collect::<Vec<_>>())?,
    };
    if let (Some(fwd), Some(post)) = (&cfg.params.forward, &cfg.params.post_selected) {
        let w = weak_value(&a, fwd, post)?;
        return Ok(vec![
            ResultRecord {
                detail: Some(serde_json::json!([w.value.re, w.value.im])),
                ..ResultRecord::metric(cfg, "weak_value_re", w.value.re)
            },
            ResultRecord::metric(cfg, "weak_value_im", w.value.im),
            ResultRecord::metric(cfg, "event_probability", w.event_probability),
        ]);
    }
    let spec = spectral_default(&a)?;
    let eigvecs = spec.vectors_matrix();
    let (mut sum, mut sum_sq, mut strong) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..cfg.samples {
        let mut rng = draw(cfg, 0, i);
        let psi = haar_state(d, &mut rng)?;
        let phi = haar_state(d, &mut rng)?;
        let p = weak_value(&a, &psi, &phi)?.event_probability;
        sum += p;
        sum_sq += p * p;
        // post-selecting on an eigenvector returns its eigenvalue
        let k = (i % d as u64) as usize;
        let eig = StateVector::from_vector(eigvecs.column(k).into_owned())?;
        let w = weak_value(&a, &psi, &eig)?;
        strong = strong.max((w.value - c(spec.eigenvalues[k], 0.0)).norm());
    }
    let n = cfg.samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(vec![
        ResultRecord {
            frequency: Some(mean),
            stderr: Some((var / n).sqrt()),
            oracle: Some(1.0 / d as f64),
            ..ResultRecord::metric(cfg, "event_probability_mean", mean)
        },
        ResultRecord::metric(cfg, "strong_limit_max_deviation", strong).check(strong <= 1e-10),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn num(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_row(r: &ResultRecord, include_wall_time: bool) -> Result<Vec<String>> {
    let config =
        serde_json::to_string(&r.config).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut row = vec![
        r.schema_version.to_string(),
        r.experiment.name().to_string(),
        r.dist.map(|k| k.name().to_string()).unwrap_or_default(),
        r.d.to_string(),
        num(r.p_or_theta),
        r.samples.to_string(),
        r.seed.to_string(),
        opt(r.outcome),
        num(r.frequency),
        num(r.stderr),
        num(r.no_assign_rate),
        num(r.conditional),
        num(r.oracle),
        r.metric.clone().unwrap_or_default(),
        num(r.value),
        r.status.map(|s| s.name().to_string()).unwrap_or_default(),
        r.detail.as_ref().map(|v| v.to_string()).unwrap_or_default(),
        config,
    ];
    if include_wall_time {
        row.push(num(r.wall_time_s));
    }
    Ok(row)
}

/// Serializes `records` to bytes. With `include_wall_time = false` the output
/// is a pure function of the config.
pub fn render(
    records: &[ResultRecord],
    format: OutputFormat,
    include_wall_time: bool,
) -> Result<Vec<u8>> {
    let fail = |e: String| Error::InvalidArgument(format!("serialization failed: {e}"));
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let width = if include_wall_time {
                COLUMNS.len()
            } else {
                COLUMNS.len() - 1
            };
            w.write_record(&COLUMNS[..width])
                .map_err(|e| fail(e.to_string()))?;
            for r in records {
                w.write_record(csv_row(r, include_wall_time)?)
                    .map_err(|e| fail(e.to_string()))?;
            }
            w.into_inner().map_err(|e| fail(e.to_string()))
        }
        OutputFormat::Json => {
            let rows: Vec<ResultRecord> = records
                .iter()
                .cloned()
                .map(|mut r| {
                    if !include_wall_time {
                        r.wall_time_s = None;
                    }
                    r
                })
                .collect();
            let mut bytes = serde_json::to_vec_pretty(&rows).map_err(|e| fail(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Writes records to `path`, or to stdout when `path` is `None`.
pub fn emit_results(
    records: &[ResultRecord],
    format: OutputFormat,
    path: Option<&Path>,
    include_wall_time: bool,
) -> Result<()> {
    let bytes = render(records, format, include_wall_time)?;
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        }),
        None => std::io::stdout().write_all(&bytes).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            message: e.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ExperimentKind, dim: usize, samples: u64) -> ExperimentConfig {
        ExperimentConfig::new(kind, dim, samples, 42)
    }

    #[test]
    fn config_requires_seed() {
        let err = serde_json::from_str::<ExperimentConfig>(
            r#"{"experiment":"born-mc","dim":2,"samples":10}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("seed"));
        let ok: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"born-mc","dim":2,"samples":10,"seed":1}"#)
                .unwrap();
        assert_eq!(ok.distribution, DistributionSpec::UniformOverlap);
        assert_eq!(ok.tie_tol, 0.0);
    }

    #[test]
    fn config_validation_names_fields() {
        let mut c = cfg(ExperimentKind::BornMc, 1, 10);
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "dim"));
        c.dim = 2;
        c.samples = 0;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "samples"));
        c.samples = 1;
        c.params.p_grid = Some(vec![1.5]);
        assert!(
            matches!(c.validate(), Err(Error::Config { field, .. }) if field == "params.pGrid")
        );
        let pbr = cfg(ExperimentKind::PbrGeometric, 3, 1);
        assert!(matches!(pbr.validate(), Err(Error::Config { field, .. }) if field == "dim"));
    }

    #[test]
    fn distribution_descriptor_round_trip() {
        let spec = DistributionSpec::Fixed {
            state: StateVector::basis(2, 1).unwrap(),
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.starts_with(r#"{"kind":"fixed""#));
        assert_eq!(
            serde_json::from_str::<DistributionSpec>(&text).unwrap(),
            spec
        );
        assert_eq!(
            serde_json::from_str::<DistributionSpec>(r#"{"kind":"haar"}"#).unwrap(),
            DistributionSpec::HaarPure
        );
    }

    #[test]
    fn born_mc_records_match_oracle() {
        let records = run_experiment(&cfg(ExperimentKind::BornMc, 2, 20_000)).unwrap();
        assert_eq!(records.len(), 9);
        for r in &records {
            let (f, s, o) = (r.frequency.unwrap(), r.stderr.unwrap(), r.oracle.unwrap());
            assert!((f - o).abs() < 4.0 * s, "{f} vs {o}");
        }
    }

    #[test]
    fn fixed_backward_oracle_is_deterministic() {
        let mut c = cfg(ExperimentKind::BornMc, 2, 100);
        c.distribution = DistributionSpec::Fixed {
            state: StateVector::basis(2, 0).unwrap(),
        };
        for r in run_experiment(&c).unwrap() {
            assert_eq!(r.frequency, r.oracle);
        }
    }

    #[test]
    fn tilted_basis_is_orthonormal() {
        let b = tilted_basis(4, 1.0).unwrap();
        assert_eq!(b.dim(), 4);
        assert!(
            (overlap_sq(&StateVector::basis(4, 0).unwrap(), &b.vectors()[0]).unwrap()
                - 0.5f64.cos().powi(2))
            .abs()
                < 1e-15
        );
    }

    #[test]
    fn empty_records_render_header_only() {
        let bytes = render(&[], OutputFormat::Csv, false).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.trim_end(), COLUMNS[..COLUMNS.len() - 1].join(","));
        assert_eq!(render(&[], OutputFormat::Json, false).unwrap(), b"[]\n");
    }

    #[test]
    fn wall_time_is_optional_in_output() {
        let records = run_experiment(&cfg(ExperimentKind::SicValidate, 2, 5)).unwrap();
        let with = String::from_utf8(render(&records, OutputFormat::Json, true).unwrap()).unwrap();
        let without =
            String::from_utf8(render(&records, OutputFormat::Json, false).unwrap()).unwrap();
        assert!(with.contains("wall_time_s"));
        assert!(!without.contains("wall_time_s"));
    }

    #[test]
    fn zero_workers_is_a_config_error() {
        let err = run_with_workers(&cfg(ExperimentKind::SicValidate, 2, 1), 0).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }
}
