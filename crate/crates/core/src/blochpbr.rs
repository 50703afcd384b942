//! Qubit Bloch-sphere geometry: the dot-product form of the outcome rule and
//! the single-measurement separator for two qubit pairs.
//!
//! Convention: `|0>` sits at `+z`, components are the expectations of the
//! standard Pauli matrices, and `|<m|a>|^2 = (1 + m.a) / 2`.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, StateVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for BlochVector {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<BlochVector> for [f64; 3] {
    fn from(v: BlochVector) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for BlochVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for BlochVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl BlochVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scale(1.0 / n))
    }

    fn check_unit(&self) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(())
    }
}

pub fn bloch_from_state(s: &StateVector) -> Result<BlochVector> {
    if s.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: s.dim(),
        });
    }
    let a = s.amplitudes();
    let coh = a[0].conj() * a[1];
    Ok(BlochVector::new(
        2.0 * coh.re,
        2.0 * coh.im,
        a[0].norm_sqr() - a[1].norm_sqr(),
    ))
}

/// Pure qubit state with a real, non-negative amplitude on `|0>`.
pub fn state_from_bloch(v: &BlochVector) -> Result<StateVector> {
    v.check_unit()?;
    let theta = v.z.clamp(-1.0, 1.0).acos();
    let phi = v.y.atan2(v.x);
    StateVector::normalized(vec![
        c((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ])
}

/// `m.a + n.a > 0`.
pub fn bell_condition(m: &BlochVector, n: &BlochVector, a: &BlochVector) -> bool {
    m.dot(a) + n.dot(a) > 0.0
}

/// Two qubit pairs given by their Bloch vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbrGeometricInstance {
    pub pair_a: (BlochVector, BlochVector),
    pub pair_b: (BlochVector, BlochVector),
}

/// Angle below which the two pair sums count as parallel.
pub const PARALLEL_TOL: f64 = 1e-9;

impl PbrGeometricInstance {
    pub fn new(
        pair_a: (BlochVector, BlochVector),
        pair_b: (BlochVector, BlochVector),
    ) -> Result<Self> {
        for v in [pair_a.0, pair_a.1, pair_b.0, pair_b.1] {
            v.check_unit()?;
        }
        Ok(Self { pair_a, pair_b })
    }

    pub fn rotated(&self, r: &[[f64; 3]; 3]) -> Self {
        let rot = |v: BlochVector| {
            BlochVector::new(
                r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
                r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
                r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
            )
        };
        Self {
            pair_a: (rot(self.pair_a.0), rot(self.pair_a.1)),
            pair_b: (rot(self.pair_b.0), rot(self.pair_b.1)),
        }
    }
}

/// Unit `a` in the plane of `u = m + m'` and `v = x + x'` with `a.u > 0` and
/// `a.v < 0`.
///
/// Returns the normalized bisector of `u_hat` and `-v_hat`, which maximizes
/// `min(a.u_hat, -a.v_hat)`; both margins equal `sin(angle(u, v) / 2)`.
pub fn pbr_distinguishing_vector(inst: &PbrGeometricInstance) -> Result<BlochVector> {
    let u = inst.pair_a.0 + inst.pair_a.1;
    let v = inst.pair_b.0 + inst.pair_b.1;
    let (Some(uh), Some(vh)) = (
        (u.norm() > 1e-12).then(|| u.normalized()).flatten(),
        (v.norm() > 1e-12).then(|| v.normalized()).flatten(),
    ) else {
        return Err(Error::DegenerateInstance);
    };
    let angle = uh.cross(&vh).norm().atan2(uh.dot(&vh));
    if angle <= PARALLEL_TOL {
        return Err(Error::DegenerateInstance);
    }
    (uh - vh).normalized().ok_or(Error::DegenerateInstance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{satisfies_pure, PurePair};
    use crate::qcore::overlap_sq;
    use std::f64::consts::FRAC_1_SQRT_2;

    const PZ: BlochVector = BlochVector::new(0.0, 0.0, 1.0);
    const MZ: BlochVector = BlochVector::new(0.0, 0.0, -1.0);
    const PX: BlochVector = BlochVector::new(1.0, 0.0, 0.0);

    fn close(a: &BlochVector, b: &BlochVector, tol: f64) -> bool {
        (*a - *b).norm() <= tol
    }

    #[test]
    fn bloch_from_state_examples() {
        let z = StateVector::basis(2, 0).unwrap();
        assert_eq!(bloch_from_state(&z).unwrap(), PZ);
        let plus = StateVector::from_real(&[1.0, 1.0]).unwrap();
        assert!(close(&bloch_from_state(&plus).unwrap(), &PX, 1e-15));
        assert!(bloch_from_state(&StateVector::basis(3, 0).unwrap()).is_err());
    }

    #[test]
    fn state_from_bloch_examples() {
        assert_eq!(
            state_from_bloch(&PZ).unwrap(),
            StateVector::basis(2, 0).unwrap()
        );
        let down = state_from_bloch(&MZ).unwrap();
        assert!(
            (overlap_sq(&down, &StateVector::basis(2, 1).unwrap()).unwrap() - 1.0).abs() < 1e-15
        );
        assert!(down.amplitudes()[0].norm() < 1e-15);
        let plus = state_from_bloch(&PX).unwrap();
        assert!((plus.amplitudes()[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((plus.amplitudes()[1] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!(state_from_bloch(&BlochVector::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn round_trip_up_to_phase() {
        let s = StateVector::normalized(vec![c(0.3, -0.8), c(0.1, 0.5)]).unwrap();
        let back = state_from_bloch(&bloch_from_state(&s).unwrap()).unwrap();
        assert!((overlap_sq(&s, &back).unwrap() - 1.0).abs() < 1e-14);
        assert!(back.amplitudes()[0].im == 0.0 && back.amplitudes()[0].re >= 0.0);
    }

    #[test]
    fn bell_condition_examples() {
        assert!(bell_condition(&PZ, &PZ, &PZ));
        assert!(bell_condition(&PZ, &PX, &PZ));
        let pair = PurePair::new(
            state_from_bloch(&PZ).unwrap(),
            state_from_bloch(&PX).unwrap(),
        )
        .unwrap();
        assert!(satisfies_pure(&pair, &state_from_bloch(&PZ).unwrap(), 0.0).unwrap());
        for a in [PZ, MZ, PX, BlochVector::new(0.0, 1.0, 0.0)] {
            assert!(!bell_condition(&PZ, &MZ, &a));
        }
    }

    #[test]
    fn pbr_examples() {
        let inst = PbrGeometricInstance::new((PZ, PZ), (PX, PX)).unwrap();
        let a = pbr_distinguishing_vector(&inst).unwrap();
        assert!(close(
            &a,
            &BlochVector::new(-FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2),
            1e-15
        ));
        assert!((a.dot(&PZ) - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((a.dot(&PX) + FRAC_1_SQRT_2).abs() < 1e-15);

        let parallel = PbrGeometricInstance::new((PZ, PZ), (PZ, PZ)).unwrap();
        assert_eq!(
            pbr_distinguishing_vector(&parallel),
            Err(Error::DegenerateInstance)
        );
        let zero = PbrGeometricInstance::new((PZ, MZ), (PX, PX)).unwrap();
        assert_eq!(
            pbr_distinguishing_vector(&zero),
            Err(Error::DegenerateInstance)
        );

        // antiparallel sums are separable with margin 1
        let anti = PbrGeometricInstance::new((PZ, PZ), (MZ, MZ)).unwrap();
        assert!(close(
            &pbr_distinguishing_vector(&anti).unwrap(),
            &PZ,
            1e-15
        ));
    }

    #[test]
    fn bloch_serializes_as_triple() {
        let text = serde_json::to_string(&PX).unwrap();
        assert_eq!(text, "[1.0,0.0,0.0]");
        let back: BlochVector = serde_json::from_str("[0.0,0.0,-1.0]").unwrap();
        assert_eq!(back, MZ);
    }
}
