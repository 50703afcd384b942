//! SIC-POVMs generated as Weyl-Heisenberg orbits of a fiducial state.
//!
//! Displacements are `D_{jk} = X^j Z^k` with `X|m> = |m+1>` and
//! `Z|m> = w^m |m>`, `w = exp(2 pi i / d)`, listed in the order `j * d + k`.
//! The extra phase used in some conventions is dropped: it cancels in
//! `D |f><f| D^dag`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::MixedPair;
use crate::blochpbr::{state_from_bloch, BlochVector};
use crate::error::{Error, Result};
use crate::qcore::{
    c, frobenius, identity, outer, trace_product, CMatrix, CVector, Projector, StateVector,
    UnitaryOperator, C64,
};
use crate::sampling::{haar_state, RngStream};

/// Tolerance a SIC must meet before it is used for expansions.
pub const EXPAND_TOL: f64 = 1e-8;

/// Largest dimension accepted by [`search_fiducial`].
pub const MAX_SEARCH_DIM: usize = 8;

/// `2 d^3 / (d + 1)`, the minimum frame potential of `d^2` unit vectors in
/// `C^d`, attained exactly by SICs.
pub fn welch_bound(d: usize) -> f64 {
    let d = d as f64;
    2.0 * d * d * d / (d + 1.0)
}

/// Applies `X^j Z^k` (or its adjoint) without forming the matrix.
#[derive(Debug, Clone)]
struct Displacer {
    d: usize,
    roots: Vec<C64>,
}

impl Displacer {
    fn new(d: usize) -> Self {
        let roots = (0..d)
            .map(|m| C64::from_polar(1.0, TAU * m as f64 / d as f64))
            .collect();
        Self { d, roots }
    }

    fn apply(&self, j: usize, k: usize, f: &[C64], out: &mut [C64]) {
        let d = self.d;
        for m in 0..d {
            out[(m + j) % d] = self.roots[(k * m) % d] * f[m];
        }
    }

    fn apply_adjoint(&self, j: usize, k: usize, f: &[C64], out: &mut [C64]) {
        let d = self.d;
        for m in 0..d {
            out[m] = self.roots[(d - (k * m) % d) % d] * f[(m + j) % d];
        }
    }
}

pub fn wh_displacements(d: usize) -> Result<Vec<UnitaryOperator>> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let w = Displacer::new(d);
    let mut out = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            let m = CMatrix::from_fn(d, d, |row, col| {
                if row == (col + j) % d {
                    w.roots[(k * col) % d]
                } else {
                    c(0.0, 0.0)
                }
            });
            out.push(UnitaryOperator::new(m)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SicValidation {
    pub max_pair_deviation: f64,
    pub identity_deviation: f64,
    pub pass: bool,
}

/// A candidate SIC: `d^2` rank-one projectors. Construction does not imply
/// validity; see [`validate_sic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SicPovm {
    dim: usize,
    projectors: Vec<Projector>,
    fiducial: StateVector,
    max_pair_deviation: f64,
    identity_deviation: f64,
}

impl SicPovm {
    /// Wraps arbitrary projectors; the count must be `d^2`.
    pub fn from_projectors(projectors: Vec<Projector>, fiducial: StateVector) -> Result<Self> {
        let d = fiducial.dim();
        if projectors.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: projectors.len(),
            });
        }
        if let Some(p) = projectors.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.dim(),
            });
        }
        let target = 1.0 / (d as f64 + 1.0);
        let mut max_pair_deviation = 0.0f64;
        for (k, pk) in projectors.iter().enumerate() {
            for pl in &projectors[k + 1..] {
                let t = trace_product(pk.matrix(), pl)?;
                max_pair_deviation = max_pair_deviation.max((t - target).abs());
            }
        }
        let sum = projectors
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, p| acc + p.matrix());
        let identity_deviation = frobenius(&(sum - identity(d).scale(d as f64)));
        Ok(Self {
            dim: d,
            projectors,
            fiducial,
            max_pair_deviation,
            identity_deviation,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    pub fn fiducial(&self) -> &StateVector {
        &self.fiducial
    }
}

pub fn sic_from_fiducial(f: &StateVector) -> Result<SicPovm> {
    let d = f.dim();
    let w = Displacer::new(d);
    let fv: Vec<C64> = f.amplitudes().iter().copied().collect();
    let mut buf = vec![c(0.0, 0.0); d];
    let mut projectors = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            w.apply(j, k, &fv, &mut buf);
            let v = CVector::from_column_slice(&buf);
            projectors.push(Projector::new(outer(&v, &v))?);
        }
    }
    SicPovm::from_projectors(projectors, f.clone())
}

pub fn validate_sic(s: &SicPovm, tol: f64) -> SicValidation {
    SicValidation {
        max_pair_deviation: s.max_pair_deviation,
        identity_deviation: s.identity_deviation,
        pass: s.max_pair_deviation <= tol && s.identity_deviation <= tol,
    }
}

/// Known fiducials: the tetrahedral qubit state with Bloch vector
/// `(1,1,1)/sqrt(3)` and the qutrit state `(0, 1, -1)/sqrt(2)`.
pub fn builtin_fiducial(d: usize) -> Option<StateVector> {
    match d {
        2 => {
            let s = 1.0 / 3f64.sqrt();
            state_from_bloch(&BlochVector::new(s, s, s)).ok()
        }
        3 => StateVector::from_real(&[0.0, 1.0, -1.0]).ok(),
        _ => None,
    }
}

pub fn builtin_sic(d: usize) -> Option<SicPovm> {
    builtin_fiducial(d).and_then(|f| sic_from_fiducial(&f).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SicCoefficients {
    pub lambdas: Vec<f64>,
    pub trace_of_rho: f64,
}

fn require_valid(s: &SicPovm) -> Result<()> {
    let v = validate_sic(s, EXPAND_TOL);
    if !v.pass {
        return Err(Error::InvalidSic {
            max_pair_deviation: v.max_pair_deviation,
            identity_deviation: v.identity_deviation,
        });
    }
    Ok(())
}

/// Coefficients of `r = sum_k lambda_k P_k`:
/// `lambda_k = ((d + 1) Tr[r P_k] - Tr r) / d`.
pub fn sic_expand(r: &CMatrix, s: &SicPovm) -> Result<SicCoefficients> {
    require_valid(s)?;
    let d = s.dim() as f64;
    let tr = crate::qcore::trace(r);
    if tr.im.abs() > crate::qcore::TOL.imaginary_residue {
        return Err(Error::ImaginaryResidue { residue: tr.im });
    }
    let lambdas = s
        .projectors
        .iter()
        .map(|p| Ok(((d + 1.0) * trace_product(r, p)? - tr.re) / d))
        .collect::<Result<Vec<_>>>()?;
    Ok(SicCoefficients {
        lambdas,
        trace_of_rho: tr.re,
    })
}

pub fn sic_reconstruct(coeffs: &SicCoefficients, s: &SicPovm) -> Result<CMatrix> {
    if coeffs.lambdas.len() != s.projectors.len() {
        return Err(Error::DimensionMismatch {
            expected: s.projectors.len(),
            found: coeffs.lambdas.len(),
        });
    }
    let d = s.dim();
    Ok(coeffs
        .lambdas
        .iter()
        .zip(&s.projectors)
        .fold(CMatrix::zeros(d, d), |acc, (&l, p)| {
            acc + p.matrix().scale(l)
        }))
}

/// Outcome rule for SIC element `k` applied to `rho_fwd + rho_bwd`:
/// `lambda_k > 1 - 1/d`.
pub fn sic_rule_check(coeffs: &SicCoefficients, k: usize, d: usize) -> Result<bool> {
    if (coeffs.trace_of_rho - 2.0).abs() > 1e-8 {
        return Err(Error::WrongTrace {
            trace: coeffs.trace_of_rho,
            expected: 2.0,
        });
    }
    let lambda = coeffs.lambdas.get(k).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "SIC index {k} out of range ({} elements)",
            coeffs.lambdas.len()
        ))
    })?;
    Ok(*lambda > 1.0 - 1.0 / d as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Separation {
    Index(usize),
    NoSeparator,
}

/// First SIC element (in displacement order) whose outcome differs between
/// the two pairs.
pub fn sic_distinguish(pair0: &MixedPair, pair1: &MixedPair, s: &SicPovm) -> Result<Separation> {
    if pair0.dim() != pair1.dim() || pair0.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: if pair0.dim() != s.dim() {
                pair0.dim()
            } else {
                pair1.dim()
            },
        });
    }
    let c0 = sic_expand(&pair0.summed(), s)?;
    let c1 = sic_expand(&pair1.summed(), s)?;
    for k in 0..s.projectors.len() {
        if sic_rule_check(&c0, k, s.dim())? != sic_rule_check(&c1, k, s.dim())? {
            return Ok(Separation::Index(k));
        }
    }
    Ok(Separation::NoSeparator)
}

/// `sum_{k,l} |<psi_k|psi_l>|^4`, diagonal included.
pub fn frame_potential(states: &[StateVector]) -> Result<f64> {
    let Some(first) = states.first() else {
        return Ok(0.0);
    };
    let d = first.dim();
    if let Some(bad) = states.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.dim(),
        });
    }
    let mut total = 0.0;
    for a in states {
        for b in states {
            total += a.amplitudes().dotc(b.amplitudes()).norm_sqr().powi(2);
        }
    }
    Ok(total)
}

/// The `d^2` orbit states `D_{jk} |f>`.
pub fn orbit(f: &StateVector) -> Vec<StateVector> {
    let d = f.dim();
    let w = Displacer::new(d);
    let fv: Vec<C64> = f.amplitudes().iter().copied().collect();
    let mut buf = vec![c(0.0, 0.0); d];
    let mut out = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            w.apply(j, k, &fv, &mut buf);
            out.push(
                StateVector::from_vector(CVector::from_column_slice(&buf)).expect("unitary image"),
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiducialSearchReport {
    pub fiducial: StateVector,
    pub frame_potential: f64,
    pub lower_bound: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub best_restart: usize,
    /// Final potential of every restart, in restart order.
    pub restart_potentials: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiducialSearchConfig {
    pub dim: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

/// Gap to the Welch bound below which a search counts as converged.
pub const CONVERGENCE_GAP: f64 = 1e-6;

/// Orbit potential of `x / |x|` divided by `d^2`, and its gradient with
/// respect to the real coordinates `(Re x, Im x)`.
struct OrbitObjective {
    d: usize,
    w: Displacer,
}

impl OrbitObjective {
    fn new(d: usize) -> Self {
        Self {
            d,
            w: Displacer::new(d),
        }
    }

    fn to_complex(&self, x: &[f64]) -> Vec<C64> {
        (0..self.d).map(|i| c(x[i], x[self.d + i])).collect()
    }

    /// Returns `sum_c |<z|D_c z>|^4 / |z|^8` and fills `grad`.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.d;
        let z = self.to_complex(x);
        let s: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        let mut dz = vec![c(0.0, 0.0); d];
        let mut dtz = vec![c(0.0, 0.0); d];
        let mut gz = vec![c(0.0, 0.0); d];
        let mut numer = 0.0;
        for j in 0..d {
            for k in 0..d {
                self.w.apply(j, k, &z, &mut dz);
                self.w.apply_adjoint(j, k, &z, &mut dtz);
                let h: C64 = z.iter().zip(&dz).map(|(a, b)| a.conj() * b).sum();
                let h2 = h.norm_sqr();
                numer += h2 * h2;
                for i in 0..d {
                    gz[i] += (h.conj() * dz[i] + h * dtz[i]) * (2.0 * h2);
                }
            }
        }
        let s4 = s.powi(4);
        let value = numer / s4;
        for i in 0..d {
            // real gradient = 2 * d/d(conj z)
            let g = (gz[i] / s4 - z[i] * (4.0 * value / s)) * 2.0;
            grad[i] = g.re;
            grad[d + i] = g.im;
        }
        value
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct DescentResult {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
}

/// Limited-memory BFGS with Armijo backtracking. Every accepted step
/// decreases the objective.
fn lbfgs(obj: &OrbitObjective, x0: Vec<f64>, max_iters: usize) -> DescentResult {
    const MEMORY: usize = 8;
    const ARMIJO: f64 = 1e-4;
    const STALL_LIMIT: usize = 25;
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut value = obj.eval(&x, &mut g);
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(MEMORY);
    let mut iterations = 0;
    let mut g_new = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut stalled = 0;

    while iterations < max_iters && stalled < STALL_LIMIT {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= 1e-13 {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        } else {
            q.iter_mut().for_each(|qi| *qi /= gnorm);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v / gnorm).collect();
            slope = -gnorm;
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let v = obj.eval(&x_new, &mut g_new);
            if v <= value + ARMIJO * step * slope && v <= value {
                accepted = true;
                if value - v <= 1e-15 * value {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-300 {
                    if hist.len() == MEMORY {
                        hist.remove(0);
                    }
                    hist.push((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                value = v;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        }
        // keep |x| near 1; the objective is scale invariant
        let norm = dot(&x, &x).sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            x.iter_mut().for_each(|v| *v /= norm);
            g.iter_mut().for_each(|v| *v *= norm);
            hist.clear();
        }
    }
    DescentResult {
        x,
        value,
        iterations,
    }
}

/// Minimizes the orbit frame potential over candidate fiducials with random
/// restarts. Restarts run in parallel; the report keeps the lowest final
/// potential, ties going to the lowest restart index.
pub fn search_fiducial(cfg: &FiducialSearchConfig) -> Result<FiducialSearchReport> {
    let d = cfg.dim;
    if !(2..=MAX_SEARCH_DIM).contains(&d) {
        return Err(Error::UnsupportedDimension {
            dim: d,
            min: 2,
            max: MAX_SEARCH_DIM,
        });
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }
    let obj = OrbitObjective::new(d);
    let runs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(cfg.seed, r as u64).sample_rng(0);
            let start = haar_state(d, &mut rng)?;
            let x0: Vec<f64> = start
                .amplitudes()
                .iter()
                .map(|z| z.re)
                .chain(start.amplitudes().iter().map(|z| z.im))
                .collect();
            Ok(lbfgs(&obj, x0, cfg.max_iters))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    let mut restart_potentials = Vec::with_capacity(runs.len());
    for (r, run) in runs.iter().enumerate() {
        restart_potentials.push(run.value * (d * d) as f64);
        if run.value < runs[best].value {
            best = r;
        }
    }
    let run = &runs[best];
    let fiducial = StateVector::from_vector(CVector::from_vec(obj.to_complex(&run.x)))?;
    let potential = frame_potential(&orbit(&fiducial))?;
    let lower_bound = welch_bound(d);
    Ok(FiducialSearchReport {
        fiducial,
        frame_potential: potential,
        lower_bound,
        iterations: run.iterations,
        restarts: cfg.restarts,
        converged: potential <= lower_bound + CONVERGENCE_GAP,
        best_restart: best,
        restart_potentials,
    })
}
