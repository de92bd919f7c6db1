//! Target placement around the cursor's start position.

use crate::math::Vec3;

use super::TaskError;

pub const POSITIONS: usize = 12;
pub const RADII_CM: [f64; 2] = [52.0, 96.0];

/// Unit direction of target `idx` (1-based).
///
/// 1..=8 are the diagonals `(±1/2, ±1/2, ±√2/2)` ordered by sign pattern
/// (+++, ++−, +−+, +−−, −++, ...), i.e. X̂ yawed ±45° about Y, pitched ±45°
/// about Z and mirrored. 9..=12 are +X, −X, +Y, −Y. The front and back
/// directions (±Z) are not used.
pub fn target_direction(idx: usize) -> Result<Vec3, TaskError> {
    match idx {
        1..=8 => {
            let bits = idx - 1;
            let sign = |bit: usize| if bits & (1 << bit) == 0 { 1.0 } else { -1.0 };
            Ok(Vec3::new(sign(2) * 0.5, sign(1) * 0.5, sign(0) * std::f64::consts::FRAC_1_SQRT_2))
        }
        9 => Ok(Vec3::X),
        10 => Ok(-Vec3::X),
        11 => Ok(Vec3::Y),
        12 => Ok(-Vec3::Y),
        _ => Err(TaskError::PositionOutOfRange(idx)),
    }
}

pub fn target_position(idx: usize, radius_cm: f64) -> Result<Vec3, TaskError> {
    if !(radius_cm > 0.0 && radius_cm.is_finite()) {
        return Err(TaskError::InvalidRadius(radius_cm));
    }
    Ok(target_direction(idx)? * radius_cm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_examples() {
        assert_eq!(target_position(9, 52.0).unwrap(), Vec3::new(52.0, 0.0, 0.0));
        assert_eq!(target_position(10, 52.0).unwrap(), Vec3::new(-52.0, 0.0, 0.0));
        assert_eq!(target_position(11, 96.0).unwrap(), Vec3::new(0.0, 96.0, 0.0));
        assert_eq!(target_position(12, 96.0).unwrap(), Vec3::new(0.0, -96.0, 0.0));
    }

    #[test]
    fn first_diagonal() {
        let p = target_position(1, 96.0).unwrap();
        assert_eq!(p.x, 48.0);
        assert_eq!(p.y, 48.0);
        assert!((p.z - 67.882_250_993_908_56).abs() < 1e-12);
        assert!((p.norm() - 96.0).abs() < 1e-12);
    }

    #[test]
    fn diagonals_are_sign_ordered() {
        let signs: Vec<[bool; 3]> = (1..=8)
            .map(|i| {
                let d = target_direction(i).unwrap();
                [d.x > 0.0, d.y > 0.0, d.z > 0.0]
            })
            .collect();
        assert_eq!(signs[0], [true, true, true]);
        assert_eq!(signs[1], [true, true, false]);
        assert_eq!(signs[2], [true, false, true]);
        assert_eq!(signs[7], [false, false, false]);
    }

    #[test]
    fn out_of_range() {
        assert!(target_direction(0).is_err());
        assert!(target_direction(13).is_err());
        assert!(target_position(1, 0.0).is_err());
    }
}
