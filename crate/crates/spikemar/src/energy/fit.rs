//! Tiny least-squares fits used to verify scaling claims.

/// Fits `y = a + b*x` by least squares and returns the largest relative
/// residual `|y - yhat| / y`.
pub fn linear_fit_max_residual(points: &[(f64, f64)]) -> f64 {
    assert!(points.len() >= 2, "need at least two points");
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    points
        .iter()
        .map(|&(x, y)| ((y - (a + b * x)) / y).abs())
        .fold(0.0, f64::max)
}

/// Fits `y = a + b*x + c*x^2` by least squares (normal equations, solved by
/// Gaussian elimination) and returns the coefficient of determination R^2.
pub fn quadratic_fit_r2(points: &[(f64, f64)]) -> f64 {
    assert!(points.len() >= 3, "need at least three points");
    let mut s = [0.0f64; 5]; // sums of x^0..x^4
    let mut t = [0.0f64; 3]; // sums of y*x^0..y*x^2
    for &(x, y) in points {
        let mut xp = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += xp;
            if k < 3 {
                t[k] += y * xp;
            }
            xp *= x;
        }
    }
    let mut m = [
        [s[0], s[1], s[2], t[0]],
        [s[1], s[2], s[3], t[1]],
        [s[2], s[3], s[4], t[2]],
    ];
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).expect("finite"))
            .expect("non-empty");
        m.swap(col, pivot);
        for row in 0..3 {
            if row != col && m[col][col] != 0.0 {
                let k = m[row][col] / m[col][col];
                for j in col..4 {
                    m[row][j] -= k * m[col][j];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..3).map(|i| m[i][3] / m[i][i]).collect();
    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| (y - (coef[0] + coef[1] * x + coef[2] * x * x)).powi(2))
        .sum();
    if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    }
}
