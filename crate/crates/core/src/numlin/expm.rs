use super::{require_square, solve, Matrix};
use crate::error::Result;

// Degree-13 Pade coefficients and the 1-norm bound below which no scaling is
// needed (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &Matrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a * h)` by scaling and squaring with a degree-13 Pade approximant.
pub fn expm(a: &Matrix, h: f64) -> Result<Matrix> {
    let n = require_square(a, "expm")?;
    let ident = Matrix::identity(n, n);
    if n == 0 || h == 0.0 {
        return Ok(ident);
    }
    let mut m = a * h;
    let nrm = norm1(&m);
    if nrm == 0.0 {
        return Ok(ident);
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    if s > 0 {
        m /= 2f64.powi(s);
    }
    let b = &PADE13;
    let m2 = &m * &m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;
    let u_inner = &m6 * (&m6 * b[13] + &m4 * b[11] + &m2 * b[9]) + &m6 * b[7] + &m4 * b[5] + &m2 * b[3] + &ident * b[1];
    let u = &m * u_inner;
    let v = &m6 * (&m6 * b[12] + &m4 * b[10] + &m2 * b[8]) + &m6 * b[6] + &m4 * b[4] + &m2 * b[2] + &ident * b[0];
    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}
