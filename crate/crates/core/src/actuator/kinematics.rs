//! Constant-curvature bending kinematics.

use super::ActuatorError;

/// Bending angle from the tip position in the bending plane.
///
/// For a constant-curvature arc tangent to the y-axis at the base the chord
/// makes half the bending angle with the base tangent, so `θ = 2·atan2(z, y)`.
pub fn bending_angle_from_tip(tip_y: f64, tip_z: f64) -> Result<f64, ActuatorError> {
    if tip_y == 0.0 && tip_z == 0.0 {
        return Err(ActuatorError::DegenerateTip);
    }
    Ok(2.0 * tip_z.atan2(tip_y))
}

/// Tip position `(y, z)` of an arc of length `length` bent by `theta`.
pub fn tip_from_bending_angle(length: f64, theta: f64) -> [f64; 2] {
    if theta.abs() < 1e-12 {
        return [length, 0.0];
    }
    let radius = length / theta;
    [radius * theta.sin(), radius * (1.0 - theta.cos())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn undeflected_tip_is_zero_angle() {
        assert_eq!(bending_angle_from_tip(80.0, 0.0).unwrap(), 0.0);
        assert_eq!(tip_from_bending_angle(80.0, 0.0), [80.0, 0.0]);
    }

    #[test]
    fn quarter_turn_arc() {
        let l = 80.0;
        let tip = [2.0 * l / PI, 2.0 * l / PI];
        let generated = tip_from_bending_angle(l, PI / 2.0);
        assert!((generated[0] - tip[0]).abs() < 1e-12 && (generated[1] - tip[1]).abs() < 1e-12);
        assert!((bending_angle_from_tip(tip[0], tip[1]).unwrap() - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn odd_in_tip_z() {
        let a = bending_angle_from_tip(40.0, 13.0).unwrap();
        let b = bending_angle_from_tip(40.0, -13.0).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn degenerate_tip() {
        assert!(matches!(bending_angle_from_tip(0.0, 0.0), Err(ActuatorError::DegenerateTip)));
    }

    proptest! {
        #[test]
        fn round_trip(theta in 1e-6f64..(PI - 1e-6), length in 10.0f64..200.0) {
            let [y, z] = tip_from_bending_angle(length, theta);
            let back = bending_angle_from_tip(y, z).unwrap();
            prop_assert!((back - theta).abs() < 1e-9);
        }
    }
}
