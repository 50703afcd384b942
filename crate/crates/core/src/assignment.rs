//! The deterministic outcome rule.
//!
//! A system carries a forward-evolving and a backward-evolving state. Outcome
//! `|a>` occurs iff `|<fwd|a>|^2 + |<bwd|a>|^2 > 1` (pure pairs), or
//! `Tr[(rho_fwd + rho_bwd) P_a] > 1` (mixed pairs). The inequality is strict;
//! `tie_tol` shifts the threshold to `1 + tie_tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    inner, overlap_sq, projector_of, trace_product, DensityMatrix, HermitianOperator,
    OrthonormalBasis, Projector, StateVector, C64,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurePair {
    pub forward: StateVector,
    pub backward: StateVector,
}

impl PurePair {
    pub fn new(forward: StateVector, backward: StateVector) -> Result<Self> {
        if forward.dim() != backward.dim() {
            return Err(Error::DimensionMismatch {
                expected: forward.dim(),
                found: backward.dim(),
            });
        }
        Ok(Self { forward, backward })
    }

    pub fn dim(&self) -> usize {
        self.forward.dim()
    }

    /// Exchange of forward and backward states.
    pub fn time_reversed(&self) -> Self {
        Self {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
        }
    }

    pub fn to_mixed(&self) -> MixedPair {
        MixedPair {
            forward: DensityMatrix::pure(&self.forward),
            backward: DensityMatrix::pure(&self.backward),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedPair {
    pub forward: DensityMatrix,
    pub backward: DensityMatrix,
}

impl MixedPair {
    pub fn new(forward: DensityMatrix, backward: DensityMatrix) -> Result<Self> {
        if forward.dim() != backward.dim() {
            return Err(Error::DimensionMismatch {
                expected: forward.dim(),
                found: backward.dim(),
            });
        }
        Ok(Self { forward, backward })
    }

    pub fn dim(&self) -> usize {
        self.forward.dim()
    }

    pub fn time_reversed(&self) -> Self {
        Self {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
        }
    }

    /// `rho_fwd + rho_bwd`, the operator that decides outcomes.
    pub fn summed(&self) -> crate::qcore::CMatrix {
        self.forward.matrix() + self.backward.matrix()
    }
}

/// Either kind of pair, evaluated against a single outcome.
pub trait TwoState {
    fn dim(&self) -> usize;

    /// Left-hand side of the rule for outcome `a`.
    fn rule_value(&self, a: &StateVector) -> Result<f64>;
}

impl TwoState for PurePair {
    fn dim(&self) -> usize {
        PurePair::dim(self)
    }

    fn rule_value(&self, a: &StateVector) -> Result<f64> {
        Ok(overlap_sq(&self.forward, a)? + overlap_sq(&self.backward, a)?)
    }
}

impl TwoState for MixedPair {
    fn dim(&self) -> usize {
        MixedPair::dim(self)
    }

    fn rule_value(&self, a: &StateVector) -> Result<f64> {
        trace_product(&self.summed(), &projector_of(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assignment {
    Assigned(usize),
    NoOutcome,
}

pub fn satisfies_pure(pair: &PurePair, a: &StateVector, tie_tol: f64) -> Result<bool> {
    Ok(pair.rule_value(a)? > 1.0 + tie_tol)
}

pub fn satisfies_mixed(pair: &MixedPair, p: &Projector, tie_tol: f64) -> Result<bool> {
    Ok(trace_product(&pair.summed(), p)? > 1.0 + tie_tol)
}

/// Evaluates the rule on every basis element. At most one may pass; more
/// than one is reported as [`Error::MultipleOutcomes`].
pub fn assign_over_basis<P: TwoState>(
    pair: &P,
    basis: &OrthonormalBasis,
    tie_tol: f64,
) -> Result<Assignment> {
    if pair.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: pair.dim(),
            found: basis.dim(),
        });
    }
    let mut hit = None;
    let mut count = 0;
    for (k, a) in basis.vectors().iter().enumerate() {
        if pair.rule_value(a)? > 1.0 + tie_tol {
            hit.get_or_insert(k);
            count += 1;
        }
    }
    match (count, hit) {
        (0, _) => Ok(Assignment::NoOutcome),
        (1, Some(k)) => Ok(Assignment::Assigned(k)),
        _ => Err(Error::MultipleOutcomes { count }),
    }
}

/// Strong measurement: both states end up on the observed outcome.
pub fn collapse<P: TwoState>(_pair: &P, a: &StateVector) -> PurePair {
    PurePair {
        forward: a.clone(),
        backward: a.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakValue {
    pub value: C64,
    pub event_probability: f64,
}

/// `<final|A|forward> / <final|forward>` together with the probability
/// `|<forward|final>|^2` of the post-selected event.
pub fn weak_value(
    a: &HermitianOperator,
    forward: &StateVector,
    final_state: &StateVector,
) -> Result<WeakValue> {
    let d = forward.dim();
    for found in [final_state.dim(), a.dim()] {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    let denom = inner(final_state, forward)?;
    if denom.norm() < 1e-12 {
        return Err(Error::OrthogonalPostSelection {
            overlap: denom.norm(),
        });
    }
    let numer = final_state
        .amplitudes()
        .dotc(&(a.matrix() * forward.amplitudes()));
    Ok(WeakValue {
        value: numer / denom,
        event_probability: overlap_sq(forward, final_state)?,
    })
}
