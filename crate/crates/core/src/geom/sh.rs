//! Real spherical harmonics basis, degrees 0 through 4.
//!
//! Ordering is the standard (l, m) order: for each band l the entries run
//! m = -l..l. Constants follow the common graphics convention (no
//! Condon-Shortley phase), matching the band-0..3 tables used by 3DGS-style
//! renderers, extended to band 4.

use crate::error::{Error, Result};

use super::vec3::Vec3;

pub const MAX_DEGREE: usize = 4;

/// Number of basis values for `max_degree`.
pub const fn basis_len(max_degree: usize) -> usize {
    (max_degree + 1) * (max_degree + 1)
}

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2_0: f64 = 1.092_548_430_592_079_2;
const C2_1: f64 = 0.315_391_565_252_520_05;
const C2_2: f64 = 0.546_274_215_296_039_6;
const C3_0: f64 = 0.590_043_589_926_643_5;
const C3_1: f64 = 2.890_611_442_640_554;
const C3_2: f64 = 0.457_045_799_464_465_74;
const C3_3: f64 = 0.373_176_332_590_115_4;
const C3_4: f64 = 1.445_305_721_320_277;
const C4_0: f64 = 2.503_342_941_796_704_6;
const C4_1: f64 = 1.770_130_769_779_930_2;
const C4_2: f64 = 0.946_174_695_757_560_1;
const C4_3: f64 = 0.669_046_543_557_289_2;
const C4_4: f64 = 0.105_785_546_915_204_31;
const C4_5: f64 = 0.473_087_347_878_780_03;
const C4_6: f64 = 0.625_835_735_449_176_1;

/// Evaluates the real SH basis for a unit direction.
///
/// Returns `(max_degree + 1)^2` values; degree 4 yields the 25-value basis.
pub fn sh_basis(dir: Vec3, max_degree: usize) -> Result<Vec<f64>> {
    if max_degree > MAX_DEGREE {
        return Err(Error::invalid(format!(
            "sh degree {max_degree} out of range [0, {MAX_DEGREE}]"
        )));
    }
    debug_assert!((dir.norm() - 1.0).abs() < 1e-6, "sh_basis expects a unit direction");
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut out = Vec::with_capacity(basis_len(max_degree));
    out.push(C0);
    if max_degree >= 1 {
        out.extend_from_slice(&[C1 * y, C1 * z, C1 * x]);
    }
    if max_degree >= 2 {
        let (x2, y2, z2) = (x * x, y * y, z * z);
        out.extend_from_slice(&[
            C2_0 * x * y,
            C2_0 * y * z,
            C2_1 * (3.0 * z2 - 1.0),
            C2_0 * x * z,
            C2_2 * (x2 - y2),
        ]);
    }
    if max_degree >= 3 {
        let (x2, y2, z2) = (x * x, y * y, z * z);
        out.extend_from_slice(&[
            C3_0 * y * (3.0 * x2 - y2),
            C3_1 * x * y * z,
            C3_2 * y * (5.0 * z2 - 1.0),
            C3_3 * z * (5.0 * z2 - 3.0),
            C3_2 * x * (5.0 * z2 - 1.0),
            C3_4 * z * (x2 - y2),
            C3_0 * x * (x2 - 3.0 * y2),
        ]);
    }
    if max_degree >= 4 {
        let (x2, y2, z2) = (x * x, y * y, z * z);
        out.extend_from_slice(&[
            C4_0 * x * y * (x2 - y2),
            C4_1 * y * z * (3.0 * x2 - y2),
            C4_2 * x * y * (7.0 * z2 - 1.0),
            C4_3 * y * z * (7.0 * z2 - 3.0),
            C4_4 * (z2 * (35.0 * z2 - 30.0) + 3.0),
            C4_3 * x * z * (7.0 * z2 - 3.0),
            C4_5 * (x2 - y2) * (7.0 * z2 - 1.0),
            C4_1 * x * z * (x2 - 3.0 * y2),
            C4_6 * (x2 * (x2 - 3.0 * y2) - y2 * (3.0 * x2 - y2)),
        ]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent recurrence-based evaluator.
    ///
    /// Builds associated Legendre values P_l^m(z) / sin^m(theta) through the
    /// standard recurrences and multiplies by sin^m(theta) cos(m phi) and
    /// sin^m(theta) sin(m phi) accumulated directly from (x, y), which avoids
    /// dividing by sin(theta) at the poles.
    fn sh_oracle(dir: Vec3, max_degree: usize) -> Vec<f64> {
        let (x, y, z) = (dir.x, dir.y, dir.z);
        let lmax = max_degree;
        // p[l][m] = P_l^m(z) / sin^m, no Condon-Shortley phase.
        let mut p = vec![vec![0.0f64; lmax + 1]; lmax + 1];
        p[0][0] = 1.0;
        for m in 1..=lmax {
            // P_m^m = (2m-1)!! sin^m  =>  reduced form (2m-1)!!.
            p[m][m] = p[m - 1][m - 1] * (2.0 * m as f64 - 1.0);
        }
        for m in 0..lmax {
            p[m + 1][m] = z * (2.0 * m as f64 + 1.0) * p[m][m];
        }
        for m in 0..=lmax {
            for l in (m + 2)..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                p[l][m] = ((2.0 * lf - 1.0) * z * p[l - 1][m]
                    - (lf + mf - 1.0) * p[l - 2][m])
                    / (lf - mf);
            }
        }
        // a[m] = sin^m cos(m phi), b[m] = sin^m sin(m phi).
        let mut a = vec![0.0f64; lmax + 1];
        let mut b = vec![0.0f64; lmax + 1];
        a[0] = 1.0;
        for m in 0..lmax {
            a[m + 1] = a[m] * x - b[m] * y;
            b[m + 1] = a[m] * y + b[m] * x;
        }
        let factorial = |n: usize| -> f64 { (1..=n).map(|k| k as f64).product::<f64>().max(1.0) };
        let mut out = Vec::new();
        for l in 0..=lmax {
            for m in -(l as isize)..=(l as isize) {
                let ma = m.unsigned_abs();
                let k = ((2.0 * l as f64 + 1.0) / (4.0 * std::f64::consts::PI)
                    * factorial(l - ma)
                    / factorial(l + ma))
                .sqrt();
                let val = if m == 0 {
                    k * p[l][0]
                } else if m > 0 {
                    std::f64::consts::SQRT_2 * k * p[l][ma] * a[ma]
                } else {
                    std::f64::consts::SQRT_2 * k * p[l][ma] * b[ma]
                };
                out.push(val);
            }
        }
        out
    }

    #[test]
    fn degree_zero_constant() {
        let v = sh_basis(Vec3::new(0.0, 1.0, 0.0), 0).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0] - 0.2820947918).abs() < 1e-9);
    }

    #[test]
    fn band_one_at_north_pole() {
        let v = sh_basis(Vec3::new(0.0, 0.0, 1.0), 1).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v[1].abs() < 1e-15);
        assert!((v[2] - 0.4886025119).abs() < 1e-9);
        assert!(v[3].abs() < 1e-15);
    }

    #[test]
    fn degree_out_of_range() {
        assert!(sh_basis(Vec3::new(0.0, 0.0, 1.0), 5).is_err());
    }

    #[test]
    fn matches_recurrence_oracle() {
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..200 {
            let dir = Vec3::new(next(), next(), next());
            if dir.norm() < 1e-3 {
                continue;
            }
            let dir = dir.normalized();
            let ours = sh_basis(dir, 4).unwrap();
            let oracle = sh_oracle(dir, 4);
            assert_eq!(ours.len(), 25);
            for (i, (a, b)) in ours.iter().zip(oracle.iter()).enumerate() {
                assert!(
                    (a - b).abs() < 1e-10,
                    "index {i}: basis {a} vs oracle {b} at dir {dir:?}"
                );
            }
        }
        // Poles exercise the sin(theta) = 0 path of the oracle.
        for pole in [Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)] {
            let ours = sh_basis(pole, 4).unwrap();
            let oracle = sh_oracle(pole, 4);
            for (a, b) in ours.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
