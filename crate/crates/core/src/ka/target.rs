//! Target functions on the unit square, with continuity moduli.
//!
//! The modulus is taken in the sup metric: `w(d)` bounds `|f(p) - f(q)|`
//! whenever both coordinates of `p - q` are at most `d` in magnitude. The
//! named targets carry exact closed forms; gridded targets measure an
//! empirical modulus on their own sample grid.

use super::KaError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetFunction {
    Zero,
    Constant { value: f64 },
    XPlusY,
    XTimesY,
    /// `sin(pi x) sin(pi y)`; one interior bump, range `[0, 1]`.
    SinSin,
    /// `n x n` samples on the uniform grid including endpoints, row-major in
    /// `y` then `x`, evaluated by bilinear interpolation.
    Grid { n: usize, values: Vec<f64> },
}

impl TargetFunction {
    pub fn validate(&self) -> Result<(), KaError> {
        match self {
            TargetFunction::Constant { value } if !value.is_finite() => {
                Err(KaError::BadTarget(format!("constant value {value} is not finite")))
            }
            TargetFunction::Grid { n, values } => {
                if *n < 2 {
                    return Err(KaError::BadTarget(format!("grid side {n} must be >= 2")));
                }
                if values.len() != n * n {
                    return Err(KaError::BadTarget(format!(
                        "grid of side {n} needs {} values, got {}",
                        n * n,
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(KaError::BadTarget("grid contains a non-finite value".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Evaluates at `(x, y)` in the closed unit square.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        match self {
            TargetFunction::Zero => 0.0,
            TargetFunction::Constant { value } => *value,
            TargetFunction::XPlusY => x + y,
            TargetFunction::XTimesY => x * y,
            TargetFunction::SinSin => (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin(),
            TargetFunction::Grid { n, values } => {
                let side = *n;
                let u = x * (side - 1) as f64;
                let v = y * (side - 1) as f64;
                let i = (u.floor() as usize).min(side - 2);
                let j = (v.floor() as usize).min(side - 2);
                let fu = u - i as f64;
                let fv = v - j as f64;
                let at = |jj: usize, ii: usize| values[jj * side + ii];
                let bottom = at(j, i) * (1.0 - fu) + at(j, i + 1) * fu;
                let top = at(j + 1, i) * (1.0 - fu) + at(j + 1, i + 1) * fu;
                bottom * (1.0 - fv) + top * fv
            }
        }
    }

    /// Modulus of continuity at distance `d` (sup metric), clamped to `[0, 1]`
    /// distances. Closed forms for the named targets; the gridded target
    /// reports the largest sample-pair difference within distance `d`, a
    /// measured estimate rather than a bound.
    pub fn modulus(&self, d: f64) -> f64 {
        let d = d.clamp(0.0, 1.0);
        if d == 0.0 {
            return 0.0;
        }
        match self {
            TargetFunction::Zero | TargetFunction::Constant { .. } => 0.0,
            TargetFunction::XPlusY => 2.0 * d,
            // sup over the square of |x'y' - xy| with both shifts <= d.
            TargetFunction::XTimesY => 2.0 * d - d * d,
            TargetFunction::SinSin => {
                if d >= 0.5 {
                    1.0
                } else {
                    (std::f64::consts::PI * d).sin()
                }
            }
            TargetFunction::Grid { n, values } => {
                let side = *n;
                let spacing = 1.0 / (side - 1) as f64;
                // Sample pairs within sup-distance d; O(n^4) but grids are small.
                let reach = (d / spacing + 1e-12).floor() as usize;
                let mut worst = 0.0_f64;
                for j in 0..side {
                    for i in 0..side {
                        let base = values[j * side + i];
                        for dj in 0..=reach.min(side - 1 - j) {
                            for di in 0..=reach.min(side - 1 - i) {
                                let other = values[(j + dj) * side + (i + di)];
                                worst = worst.max((base - other).abs());
                            }
                            // Also look left in x while moving up in y.
                            for di in 1..=reach.min(i) {
                                let other = values[(j + dj) * side + (i - di)];
                                worst = worst.max((base - other).abs());
                            }
                        }
                    }
                }
                worst
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::rel_close;

    /// Brute-force empirical modulus on an m x m sample grid.
    fn empirical_modulus(f: &TargetFunction, d: f64, m: usize) -> f64 {
        let pts: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let mut worst = 0.0_f64;
        for &x1 in &pts {
            for &y1 in &pts {
                let v1 = f.eval(x1, y1);
                for &x2 in pts.iter().filter(|&&x| x >= x1 && x - x1 <= d) {
                    for &y2 in pts.iter().filter(|&&y| (y - y1).abs() <= d) {
                        worst = worst.max((v1 - f.eval(x2, y2)).abs());
                    }
                }
            }
        }
        worst
    }

    #[test]
    fn closed_forms_match_empirical_modulus() {
        // The empirical value on a finite grid undershoots the true modulus
        // slightly; require agreement within 10% plus grid slack.
        for f in [TargetFunction::XPlusY, TargetFunction::XTimesY, TargetFunction::SinSin] {
            for d in [0.1, 0.25, 0.4] {
                let exact = f.modulus(d);
                let emp = empirical_modulus(&f, d, 41);
                assert!(
                    emp <= exact + 1e-12 && emp >= 0.9 * exact,
                    "{f:?} at d={d}: exact {exact}, empirical {emp}"
                );
            }
        }
    }

    #[test]
    fn trivial_moduli_are_zero() {
        assert_eq!(TargetFunction::Zero.modulus(0.3), 0.0);
        assert_eq!(TargetFunction::Constant { value: 4.2 }.modulus(0.9), 0.0);
        assert_eq!(TargetFunction::XPlusY.modulus(0.0), 0.0);
    }

    #[test]
    fn named_modulus_values() {
        assert!(rel_close(TargetFunction::XPlusY.modulus(0.25), 0.5, 1e-15));
        assert!(rel_close(TargetFunction::XTimesY.modulus(0.5), 0.75, 1e-15));
        assert!(rel_close(
            TargetFunction::SinSin.modulus(0.25),
            std::f64::consts::FRAC_1_SQRT_2,
            1e-12
        ));
        assert_eq!(TargetFunction::SinSin.modulus(0.7), 1.0);
        // Distances clamp to the unit square.
        assert_eq!(TargetFunction::XPlusY.modulus(3.0), 2.0);
    }

    #[test]
    fn grid_target_interpolates_and_validates() {
        // 2x2 grid of the function x (independent of y).
        let g = TargetFunction::Grid { n: 2, values: vec![0.0, 1.0, 0.0, 1.0] };
        g.validate().unwrap();
        assert_eq!(g.eval(0.0, 0.0), 0.0);
        assert_eq!(g.eval(1.0, 0.7), 1.0);
        assert!(rel_close(g.eval(0.25, 0.9), 0.25, 1e-15));

        let bad = TargetFunction::Grid { n: 3, values: vec![0.0; 8] };
        assert!(matches!(bad.validate(), Err(KaError::BadTarget(_))));
        let tiny = TargetFunction::Grid { n: 1, values: vec![0.0] };
        assert!(matches!(tiny.validate(), Err(KaError::BadTarget(_))));
    }

    #[test]
    fn grid_modulus_matches_hand_example() {
        // Side 3, values equal to x coordinate: {0, .5, 1} per row.
        let g = TargetFunction::Grid { n: 3, values: vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0, 0.0, 0.5, 1.0] };
        assert_eq!(g.modulus(0.5), 0.5);
        assert_eq!(g.modulus(1.0), 1.0);
        assert_eq!(g.modulus(0.4), 0.0, "below one grid spacing no pair qualifies");
    }

    #[test]
    fn serde_tagging_round_trips() {
        for f in [
            TargetFunction::Zero,
            TargetFunction::Constant { value: 0.75 },
            TargetFunction::SinSin,
            TargetFunction::Grid { n: 2, values: vec![0.0, 1.0, 2.0, 3.0] },
        ] {
            let json = serde_json::to_string(&f).unwrap();
            let back: TargetFunction = serde_json::from_str(&json).unwrap();
            assert_eq!(f, back);
        }
        let json = serde_json::to_string(&TargetFunction::XPlusY).unwrap();
        assert!(json.contains("x_plus_y"));
    }
}
