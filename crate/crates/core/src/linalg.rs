//! Small dense row-major matrix helpers.

/// Relative convergence threshold for the column-orthogonality sweep.
const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 60;

/// `out = a * b` for n×n row-major matrices.
pub fn matmul(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// `out = a * x` for an n×n row-major matrix.
pub fn matvec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate().take(n) {
        *o = a[i * n..(i + 1) * n]
            .iter()
            .zip(x)
            .map(|(aij, xj)| aij * xj)
            .sum();
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Singular values of an n×n row-major matrix, sorted descending.
///
/// One-sided (Hestenes) Jacobi: plane rotations are applied to column pairs
/// until every pair is orthogonal to relative precision; the column norms
/// are then the singular values. Converges quadratically and keeps small
/// singular values to high relative accuracy.
pub fn singular_values(m: &[f64], n: usize) -> Vec<f64> {
    // work on columns: cols[j] is column j
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| m[i * n + j]).collect())
        .collect();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for i in 0..n {
                        a += cp[i] * cp[i];
                        b += cq[i] * cq[i];
                        g += cp[i] * cq[i];
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let xp = cols[p][i];
                    let xq = cols[q][i];
                    cols[p][i] = c * xp - s * xq;
                    cols[q][i] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn spectral_norm(m: &[f64], n: usize) -> f64 {
    match n {
        1 => m[0].abs(),
        2 => {
            // largest root of σ⁴ - |m|_F² σ² + det² = 0
            let fro2 = m.iter().map(|v| v * v).sum::<f64>();
            let det = m[0] * m[3] - m[1] * m[2];
            let disc = ((fro2 - 2.0 * det) * (fro2 + 2.0 * det)).max(0.0);
            (0.5 * (fro2 + disc.sqrt())).sqrt()
        }
        _ => singular_values(m, n)[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_values() {
        let sv = singular_values(&[3.0, 0.0, 0.0, -5.0], 2);
        assert_eq!(sv, vec![5.0, 3.0]);
    }

    #[test]
    fn rotation_has_unit_values() {
        let (s, c) = 0.7f64.sin_cos();
        let sv = singular_values(&[c, s, -s, c], 2);
        assert!((sv[0] - 1.0).abs() < 1e-15 && (sv[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient() {
        let sv = singular_values(&[1.0, 2.0, 2.0, 4.0], 2);
        assert!((sv[0] - 5.0).abs() < 1e-14);
        assert!(sv[1].abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn planar_norm_matches_jacobi(vals in prop::collection::vec(-10.0f64..10.0, 4)) {
            let closed = spectral_norm(&vals, 2);
            let jacobi = singular_values(&vals, 2)[0];
            prop_assert!((closed - jacobi).abs() <= 1e-12 * jacobi.max(1e-300));
        }

        // nalgebra's SVD serves as an independent reference
        #[test]
        fn agrees_with_nalgebra(vals in prop::collection::vec(-10.0f64..10.0, 9)) {
            let ours = singular_values(&vals, 3);
            let m = nalgebra::Matrix3::from_row_slice(&vals);
            let mut theirs: Vec<f64> = m.singular_values().iter().copied().collect();
            theirs.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in ours.iter().zip(&theirs) {
                prop_assert!((a - b).abs() <= 1e-10 * theirs[0].max(1e-300));
            }
        }
    }
}
