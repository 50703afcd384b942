//! Two-state evolution, the stationarity condition `[rho_fwd, H] = [rho_bwd, H]`
//! and the commutator inverse problem `[rho, H] = K`.
//!
//! With `[A, B] = AB - BA` and `H = sum_i E_i |i><i|`, the eigenbasis entries
//! satisfy `[rho, H]_ij = rho_ij (E_j - E_i)`, so `rho_ij = K_ij / (E_j - E_i)`
//! off the degenerate blocks.

use serde::{Deserialize, Serialize};

use crate::assignment::MixedPair;
use crate::error::{Error, Result};
use crate::qcore::{
    anti_hermitian_deviation, c, commutator, frobenius, hermitian_part, json, min_eigenvalue,
    spectral_default, CMatrix, DensityMatrix, HermitianOperator, UnitaryOperator, TOL,
};

/// Which side of the pair carries `U^dag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolutionConvention {
    /// `rho_fwd -> U^dag rho_fwd U`, `rho_bwd -> U rho_bwd U^dag`.
    #[default]
    Literal,
    /// `rho_fwd -> U rho_fwd U^dag`, `rho_bwd -> U^dag rho_bwd U`.
    Textbook,
}

fn conjugate(rho: &DensityMatrix, u: &CMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(hermitian_part(&(u * rho.matrix() * u.adjoint())))
}

pub fn evolve_pair(
    pair: &MixedPair,
    u: &UnitaryOperator,
    convention: EvolutionConvention,
) -> Result<MixedPair> {
    if u.dim() != pair.dim() {
        return Err(Error::DimensionMismatch {
            expected: pair.dim(),
            found: u.dim(),
        });
    }
    let fwd = u.matrix().adjoint();
    let bwd = u.matrix().clone();
    let (f, b) = match convention {
        EvolutionConvention::Literal => (fwd, bwd),
        EvolutionConvention::Textbook => (bwd, fwd),
    };
    MixedPair::new(
        conjugate(&pair.forward, &f)?,
        conjugate(&pair.backward, &b)?,
    )
}

fn check_h(pair: &MixedPair, h: &HermitianOperator) -> Result<()> {
    if h.dim() != pair.dim() {
        return Err(Error::DimensionMismatch {
            expected: pair.dim(),
            found: h.dim(),
        });
    }
    Ok(())
}

/// `||[rho_fwd, H] - [rho_bwd, H]||_F <= tol`.
pub fn stationarity_check(pair: &MixedPair, h: &HermitianOperator, tol: f64) -> Result<bool> {
    check_h(pair, h)?;
    let kf = commutator(pair.forward.matrix(), h.matrix())?;
    let kb = commutator(pair.backward.matrix(), h.matrix())?;
    Ok(frobenius(&(kf - kb)) <= tol)
}

/// An anti-Hermitian commutator target `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorTarget {
    m: CMatrix,
}

impl CommutatorTarget {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let deviation = anti_hermitian_deviation(&m);
        if deviation > TOL.hermitian {
            return Err(Error::NotAntiHermitian { deviation });
        }
        Ok(Self { m })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            m: CMatrix::zeros(d, d),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }
}

impl Serialize for CommutatorTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        json::serialize_matrix(&self.m, s)
    }
}

impl<'de> Deserialize<'de> for CommutatorTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = json::deserialize_matrix(d)?;
        CommutatorTarget::new(m).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySolveInput {
    pub hamiltonian: HermitianOperator,
    pub target: CommutatorTarget,
    /// Diagonal of the solution in the eigenbasis of `H`, eigenvalues ascending.
    pub diagonal: Vec<f64>,
}

/// Solves `[rho, H] = K` for Hermitian `rho` with a prescribed eigenbasis
/// diagonal. Off-diagonal entries inside degenerate blocks are set to zero.
///
/// `K` is feasible when, in the eigenbasis, its diagonal and its entries
/// inside degenerate blocks vanish to within `1e-10 * max(1, ||K||_F)`.
pub fn commutator_solve(input: &StationarySolveInput, require_psd: bool) -> Result<CMatrix> {
    let h = &input.hamiltonian;
    let d = h.dim();
    let k = input.target.matrix();
    if k.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: k.nrows(),
        });
    }
    if input.diagonal.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: input.diagonal.len(),
        });
    }
    let spec = spectral_default(h)?;
    let kp = spec.to_eigenbasis(k);
    let feasibility = 1e-10 * frobenius(k).max(1.0);
    let e = &spec.eigenvalues;

    let mut rho = CMatrix::zeros(d, d);
    for i in 0..d {
        rho[(i, i)] = c(input.diagonal[i], 0.0);
        let block = spec.block_of(i);
        for j in block.clone() {
            let magnitude = kp[(i, j)].norm();
            if magnitude > feasibility {
                return Err(Error::InfeasibleK {
                    row: i,
                    col: j,
                    magnitude,
                });
            }
        }
        for j in (i + 1)..d {
            if block.contains(&j) {
                continue;
            }
            // average the two anti-Hermitian halves of K to keep rho Hermitian
            let kij = (kp[(i, j)] - kp[(j, i)].conj()) * 0.5;
            let v = kij / (e[j] - e[i]);
            rho[(i, j)] = v;
            rho[(j, i)] = v.conj();
        }
    }
    let rho = hermitian_part(&spec.from_eigenbasis(&rho));
    if require_psd {
        let min = min_eigenvalue(&rho);
        if min < -TOL.psd {
            return Err(Error::NotPsd { eigenvalue: min });
        }
    }
    Ok(rho)
}

/// A forward density matrix sharing `rho_bwd`'s commutator with `H`.
pub fn stationary_partner(
    rho_down: &DensityMatrix,
    h: &HermitianOperator,
    diagonal: &[f64],
) -> Result<DensityMatrix> {
    if h.dim() != rho_down.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho_down.dim(),
            found: h.dim(),
        });
    }
    let k = commutator(rho_down.matrix(), h.matrix())?;
    let input = StationarySolveInput {
        hamiltonian: h.clone(),
        target: CommutatorTarget {
            m: (&k - k.adjoint()).scale(0.5),
        },
        diagonal: diagonal.to_vec(),
    };
    DensityMatrix::new(commutator_solve(&input, true)?)
}

/// `||S(dt) - S(0)||_F` with `S(t) = U^dag rho_fwd U + U rho_bwd U^dag`,
/// `U = exp(-i H t)`.
pub fn first_order_invariance_check(
    pair: &MixedPair,
    h: &HermitianOperator,
    dt: f64,
) -> Result<f64> {
    check_h(pair, h)?;
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let u = h.propagator(dt);
    let um = u.matrix();
    let s0 = pair.summed();
    let st = um.adjoint() * pair.forward.matrix() * um + um * pair.backward.matrix() * um.adjoint();
    Ok(frobenius(&(st - s0)))
}

/// `r(dt) / r(dt / 2)`: near 4 when the first-order change vanishes, near 2
/// otherwise.
pub fn halving_ratio(pair: &MixedPair, h: &HermitianOperator, dt: f64) -> Result<f64> {
    Ok(first_order_invariance_check(pair, h, dt)?
        / first_order_invariance_check(pair, h, dt / 2.0)?)
}
