//! Continuous 6D rotation encoding: the first two columns of a rotation
//! matrix, decoded by Gram-Schmidt and a cross product.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

const DEGENERATE_EPS: f64 = 1e-9;

pub fn rot_to_6d(r: &Matrix3<f64>) -> [f64; 6] {
    [r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]]
}

pub fn six_d_to_rot(d: &[f64; 6]) -> Result<Matrix3<f64>> {
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite 6D rotation".into()));
    }
    let a1 = Vector3::new(d[0], d[1], d[2]);
    let a2 = Vector3::new(d[3], d[4], d[5]);
    let n1 = a1.norm();
    if n1 < DEGENERATE_EPS {
        return Err(Error::Degenerate("first 6D column has zero length".into()));
    }
    let b1 = a1 / n1;
    let u2 = a2 - b1 * b1.dot(&a2);
    let n2 = u2.norm();
    if n2 < DEGENERATE_EPS * a2.norm().max(1.0) {
        return Err(Error::Degenerate("6D columns are (nearly) parallel".into()));
    }
    let b2 = u2 / n2;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Smallest rotation taking unit direction `from` onto unit direction `to`.
pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let a = from.normalize();
    let b = to.normalize();
    let c = a.dot(&b);
    if c < -1.0 + 1e-12 {
        // antiparallel: half turn about any axis orthogonal to `a`
        let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let axis = a.cross(&helper).normalize();
        return 2.0 * axis * axis.transpose() - Matrix3::identity();
    }
    let v = a.cross(&b);
    let k = Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0);
    Matrix3::identity() + k + k * k / (1.0 + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
        let axis = Vector3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        );
        let angle = rng.random::<f64>() * std::f64::consts::PI * 2.0;
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
    }

    #[test]
    fn identity_encodes_to_unit_columns() {
        assert_eq!(rot_to_6d(&Matrix3::identity()), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn round_trip_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let back = six_d_to_rot(&rot_to_6d(&r)).unwrap();
            worst = worst.max((back - r).abs().max());
        }
        assert!(worst < 1e-9, "max element error {worst}");
    }

    #[test]
    fn perturbed_input_decodes_to_proper_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut d = rot_to_6d(&random_rotation(&mut rng));
            for v in d.iter_mut() {
                *v += 0.2 * (rng.random::<f64>() - 0.5);
            }
            let r = six_d_to_rot(&d).unwrap();
            let gram = r.transpose() * r;
            assert!((gram - Matrix3::identity()).abs().max() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_columns_are_rejected() {
        assert!(matches!(
            six_d_to_rot(&[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(six_d_to_rot(&[0.0; 6]).is_err());
    }

    #[test]
    fn rotation_between_aligns_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 0.3);
            let b = Vector3::new(0.1, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let r = rotation_between(&a, &b);
            assert!((r * a.normalize() - b.normalize()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
        let a = Vector3::new(0.0, -1.0, 0.0);
        let r = rotation_between(&a, &-a);
        assert!((r * a + a).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }
}
