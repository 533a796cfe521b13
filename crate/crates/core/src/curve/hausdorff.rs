//! Point-set Hausdorff distance and its bounding-box-normalized variant.

use crate::curve::{CurveError, DiscreteCurve3};

/// Directed Hausdorff distance `sup_a inf_b |a - b|` between the vertex sets.
fn directed(a: &DiscreteCurve3, b: &DiscreteCurve3) -> f64 {
    let mut worst = 0.0f64;
    for p in &a.points {
        let mut best = f64::INFINITY;
        for q in &b.points {
            let d2 = (p - q).norm_squared();
            if d2 < best {
                best = d2;
            }
        }
        if best > worst {
            worst = best;
        }
    }
    worst.sqrt()
}

/// Symmetric point-set Hausdorff distance in mm.
pub fn hausdorff(a: &DiscreteCurve3, b: &DiscreteCurve3) -> Result<f64, CurveError> {
    if a.is_empty() || b.is_empty() {
        return Err(CurveError::TooFewPoints { got: 0, need: 1 });
    }
    Ok(directed(a, b).max(directed(b, a)))
}

/// Hausdorff distance normalized by the bounding-box diagonal of the
/// *reference* curve `a` (dimensionless; reported as a fraction).
///
/// A zero Hausdorff distance normalizes to zero even for degenerate boxes; a
/// positive distance over a degenerate reference box is an error.
pub fn normalized_hausdorff(a: &DiscreteCurve3, b: &DiscreteCurve3) -> Result<f64, CurveError> {
    let h = hausdorff(a, b)?;
    if h == 0.0 {
        return Ok(0.0);
    }
    let diag = a.bounding_box_diagonal();
    if diag <= 1e-12 {
        return Err(CurveError::DegenerateBBox { diag, h });
    }
    Ok(h / diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn cube_corners() -> DiscreteCurve3 {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(Vec3::new(x, y, z));
                }
            }
        }
        DiscreteCurve3::new(pts, false)
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let c = cube_corners();
        assert_eq!(hausdorff(&c, &c).unwrap(), 0.0);
        assert_eq!(normalized_hausdorff(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn shifted_cube_corners() {
        // Shifting by 0.1 along x pairs corners at exactly 0.1 apart, which
        // is also the worst case; the unit-cube diagonal is sqrt(3).
        let a = cube_corners();
        let shifted = DiscreteCurve3::new(
            a.points.iter().map(|p| p + Vec3::new(0.1, 0.0, 0.0)).collect(),
            false,
        );
        let h = hausdorff(&a, &shifted).unwrap();
        assert!((h - 0.1).abs() < 1e-12);
        let nh = normalized_hausdorff(&a, &shifted).unwrap();
        assert!((nh - 0.1 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn known_ratio_fixture() {
        // Two-point sets constructed so the Hausdorff distance is exactly
        // 22.5 while the reference bounding-box diagonal is exactly 321.6;
        // the ratio must come out as 22.5 / 321.6 ~ 7.0%.
        let d = 321.6 / 3f64.sqrt();
        let a = DiscreteCurve3::new(
            vec![Vec3::zeros(), Vec3::new(d, d, d)],
            false,
        );
        let b = DiscreteCurve3::new(
            vec![
                Vec3::new(22.5, 0.0, 0.0),
                Vec3::new(22.5 + d, d, d),
            ],
            false,
        );
        assert!((a.bounding_box_diagonal() - 321.6).abs() < 1e-9);
        assert!((hausdorff(&a, &b).unwrap() - 22.5).abs() < 1e-9);
        let nh = normalized_hausdorff(&a, &b).unwrap();
        assert!((nh - 22.5 / 321.6).abs() < 1e-12);
        assert!((nh - 0.070).abs() < 5e-4);
    }

    #[test]
    fn degenerate_reference_box_is_guarded() {
        let point = DiscreteCurve3::new(vec![Vec3::zeros(), Vec3::zeros()], false);
        let other = DiscreteCurve3::new(vec![Vec3::new(1.0, 0.0, 0.0)], false);
        assert!(matches!(
            normalized_hausdorff(&point, &other),
            Err(CurveError::DegenerateBBox { .. })
        ));
        // Same degenerate box but zero distance: fine.
        assert_eq!(normalized_hausdorff(&point, &point).unwrap(), 0.0);
    }

    #[test]
    fn triangle_inequality_on_random_sets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            DiscreteCurve3::new(
                (0..12)
                    .map(|_| {
                        Vec3::new(
                            rng.gen_range(-5.0..5.0),
                            rng.gen_range(-5.0..5.0),
                            rng.gen_range(-5.0..5.0),
                        )
                    })
                    .collect(),
                false,
            )
        };
        for _ in 0..40 {
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let c = mk(&mut rng);
            let ab = hausdorff(&a, &b).unwrap();
            let bc = hausdorff(&b, &c).unwrap();
            let ac = hausdorff(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
            assert!((ab - hausdorff(&b, &a).unwrap()).abs() < 1e-12);
        }
    }
}
