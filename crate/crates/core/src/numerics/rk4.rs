use crate::error::{Error, Result};

/// Classical fourth-order Runge-Kutta with reusable stage buffers.
///
/// The derivative callback writes `dx/dt` at `(t, x)` into its third argument.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` in place from `t` to `t + h`.
    pub fn step<F>(&mut self, mut f: F, x: &mut [f64], t: f64, h: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Input(format!("step must be positive, got {h}")));
        }
        let n = x.len();
        if self.k1.len() != n {
            *self = Rk4::new(n);
        }

        eval(&mut f, t, x, &mut self.k1)?;
        stage(&mut self.tmp, x, &self.k1, 0.5 * h);
        eval(&mut f, t + 0.5 * h, &self.tmp, &mut self.k2)?;
        stage(&mut self.tmp, x, &self.k2, 0.5 * h);
        eval(&mut f, t + 0.5 * h, &self.tmp, &mut self.k3)?;
        stage(&mut self.tmp, x, &self.k3, h);
        eval(&mut f, t + h, &self.tmp, &mut self.k4)?;

        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn stage(out: &mut [f64], x: &[f64], k: &[f64], scale: f64) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + scale * ki;
    }
}

fn eval<F>(f: &mut F, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    f(t, x, dx)?;
    if let Some(v) = dx.iter().find(|v| !v.is_finite()) {
        return Err(Error::IntegrationFault {
            t,
            reason: format!("non-finite derivative {v}"),
        });
    }
    Ok(())
}

/// One RK4 step returning the new state.
pub fn rk4_step<F>(f: F, state: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut x = state.to_vec();
    Rk4::new(x.len()).step(f, &mut x, t, h)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field() {
        let x = rk4_step(
            |_, _, dx| {
                dx[0] = 1.0;
                Ok(())
            },
            &[0.0],
            0.0,
            0.1,
        )
        .unwrap();
        assert!((x[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn exponential_decay() {
        let mut rk = Rk4::new(1);
        let mut x = [1.0];
        for i in 0..100 {
            rk.step(
                |_, x, dx| {
                    dx[0] = -x[0];
                    Ok(())
                },
                &mut x,
                i as f64 * 0.01,
                0.01,
            )
            .unwrap();
        }
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn time_dependent_field_is_exact_for_cubics() {
        // x' = 3 t^2 integrates exactly under Simpson-weighted stages
        let x = rk4_step(
            |t, _, dx| {
                dx[0] = 3.0 * t * t;
                Ok(())
            },
            &[0.0],
            1.0,
            0.5,
        )
        .unwrap();
        assert!((x[0] - (1.5f64.powi(3) - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn non_finite_derivative_reports_time() {
        let err = rk4_step(
            |t, _, dx| {
                dx[0] = if t > 0.2 { f64::INFINITY } else { 0.0 };
                Ok(())
            },
            &[0.0],
            0.0,
            0.4,
        )
        .unwrap_err();
        match err {
            Error::IntegrationFault { t, .. } => assert!((t - 0.2).abs() < 1e-12 || t > 0.2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_step() {
        assert!(rk4_step(|_, _, _| Ok(()), &[0.0], 0.0, 0.0).is_err());
    }
}
