//! Matrix exponential by scaling and squaring with a degree-13 Padé kernel.
//!
//! Follows the classical choice of Higham (2005): the matrix is scaled by
//! `2^-s` so that its 1-norm falls below `THETA_13`, the [13/13] Padé
//! approximant is evaluated with six matrix products, and the result is
//! squared `s` times.

use nalgebra::DMatrix;

use super::matrix::Matrix;
use crate::error::{Error, Result};

const THETA_13: f64 = 5.371920351148152;

const PADE_13: [f64; 14] = [
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

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Returns `e^{A t}`.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Input(format!("time must be finite and >= 0, got {t}")));
    }
    let at = a.inner() * t;
    Matrix::checked(expm(&at)?)
}

fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = norm1(a);
    if norm == 0.0 {
        return Ok(ident);
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-squarings);

    let b = &PADE_13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Input("singular Padé denominator".into()))?;

    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}
