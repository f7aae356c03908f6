//! Dormand–Prince 5(4) with step-size control and cubic Hermite dense output.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-10, h_max: f64::INFINITY, max_steps: 500_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, ..Default::default() }
    }
}

/// Accepted step points with their derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution<const N: usize> {
    t: Vec<f64>,
    y: Vec<[f64; N]>,
    dy: Vec<[f64; N]>,
    rejected: usize,
}

impl<const N: usize> DenseSolution<N> {
    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn states(&self) -> &[[f64; N]] {
        &self.y
    }

    pub fn derivatives(&self) -> &[[f64; N]] {
        &self.dy
    }

    pub fn accepted_steps(&self) -> usize {
        self.t.len().saturating_sub(1)
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    /// Cubic Hermite interpolation between step points; exact at the nodes.
    pub fn eval(&self, t: f64) -> Option<[f64; N]> {
        let (t0, t1) = (self.t[0], self.t_end());
        if !(t >= t0 && t <= t1) {
            return None;
        }
        let k = match self.t.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => return Some(self.y[k]),
            Err(k) => k - 1,
        };
        let h = self.t[k + 1] - self.t[k];
        let s = (t - self.t[k]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = h00 * self.y[k][i]
                + h10 * h * self.dy[k][i]
                + h01 * self.y[k + 1][i]
                + h11 * h * self.dy[k + 1][i];
        }
        Some(out)
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates y' = f(t, y) from t0 to t_end.
///
/// Every time in `stops` inside (t0, t_end] is hit exactly by a step
/// boundary. `on_accept` sees each accepted state and may veto it with an
/// error, which aborts the integration. A right-hand side error inside a
/// step counts as a rejection and the step is retried smaller.
pub fn solve<const N: usize, F, G>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    stops: &[f64],
    opts: &OdeOptions,
    mut on_accept: G,
) -> Result<DenseSolution<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    G: FnMut(f64, &[f64; N]) -> Result<()>,
{
    if !(t_end > t0) {
        return Err(Error::InvalidParams("integration window must have t_end > t0"));
    }
    let mut stops: Vec<f64> = stops.iter().copied().filter(|&s| s > t0 && s < t_end).collect();
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup();
    stops.push(t_end);
    let mut next_stop = 0;

    let f0 = f(t0, &y0)?;
    on_accept(t0, &y0)?;
    let mut sol = DenseSolution { t: alloc::vec![t0], y: alloc::vec![y0], dy: alloc::vec![f0], rejected: 0 };
    let (mut t, mut y, mut k1) = (t0, y0, f0);
    let span = t_end - t0;
    let mut h = initial_step(&y, &k1, opts).min(span).min(opts.h_max);
    let mut steps = 0;

    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepFailure { t, reason: "too many steps" });
        }
        let target = stops[next_stop];
        let mut hits_stop = false;
        if t + h >= target || target - (t + h) < 1e-12 * span {
            h = target - t;
            hits_stop = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepFailure { t, reason: "step size underflow" });
        }
        match attempt(&mut f, t, &y, &k1, h) {
            Ok((y_new, k7, err_vec)) => {
                let mut acc = 0.0;
                for i in 0..N {
                    let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                    let r = err_vec[i] / sc;
                    acc += r * r;
                }
                let err = (acc / N as f64).sqrt();
                if err.is_finite() && err <= 1.0 {
                    let t_new = if hits_stop { target } else { t + h };
                    on_accept(t_new, &y_new)?;
                    t = t_new;
                    y = y_new;
                    k1 = k7;
                    sol.t.push(t);
                    sol.y.push(y);
                    sol.dy.push(k1);
                    if hits_stop {
                        next_stop += 1;
                    }
                    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    h = (h * fac).min(opts.h_max);
                } else {
                    sol.rejected += 1;
                    let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
                    h *= fac;
                }
            }
            Err(_) => {
                sol.rejected += 1;
                h *= 0.25;
            }
        }
    }
    Ok(sol)
}

fn initial_step<const N: usize>(y: &[f64; N], dy: &[f64; N], opts: &OdeOptions) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = opts.atol + opts.rtol * y[i].abs();
        d0 += (y[i] / sc) * (y[i] / sc);
        d1 += (dy[i] / sc) * (dy[i] / sc);
    }
    let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

type Attempt<const N: usize> = ([f64; N], [f64; N], [f64; N]);

fn attempt<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64) -> Result<Attempt<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut k = [[0.0; N]; 7];
    k[0] = *k1;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        for v in &ys {
            if !v.is_finite() {
                return Err(Error::StepFailure { t, reason: "non-finite stage" });
            }
        }
        k[s] = f(t + C[s] * h, &ys)?;
    }
    // stage 7 is evaluated at the fifth-order solution (FSAL)
    let mut y_new = *y;
    for (j, kj) in k.iter().enumerate().take(6) {
        for i in 0..N {
            y_new[i] += h * A[6][j] * kj[i];
        }
    }
    let mut err = [0.0; N];
    for (j, kj) in k.iter().enumerate() {
        for i in 0..N {
            err[i] += h * E[j] * kj[i];
        }
    }
    Ok((y_new, k[6], err))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let sol = solve(
            |_, y: &[f64; 2]| Ok([y[1], -y[0]]),
            0.0,
            [1.0, 0.0],
            2.0 * core::f64::consts::PI,
            &[1.0, 2.5],
            &OdeOptions::with_tol(1e-12),
            |_, _| Ok(()),
        )
        .unwrap();
        let end = sol.states().last().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-9 && end[1].abs() < 1e-9);
        assert!(sol.times().contains(&1.0) && sol.times().contains(&2.5));
        let mid = sol.eval(1.0).unwrap();
        assert!((mid[0] - 1f64.cos()).abs() < 1e-10);
        let between = sol.eval(0.3).unwrap();
        assert!((between[0] - 0.3f64.cos()).abs() < 1e-6);
    }

    #[test]
    fn rhs_error_shrinks_step_then_fails() {
        let res = solve(
            |t, y: &[f64; 1]| {
                if t > 0.5 {
                    Err(Error::SingularConfiguration("wall"))
                } else {
                    Ok([y[0]])
                }
            },
            0.0,
            [1.0],
            1.0,
            &[],
            &OdeOptions::default(),
            |_, _| Ok(()),
        );
        assert!(matches!(res, Err(Error::StepFailure { .. })));
    }

    #[test]
    fn veto_aborts() {
        let res = solve(
            |_, y: &[f64; 1]| Ok([y[0]]),
            0.0,
            [1.0],
            1.0,
            &[],
            &OdeOptions::default(),
            |_, y| if y[0] > 2.0 { Err(Error::StepFailure { t: 0.0, reason: "veto" }) } else { Ok(()) },
        );
        assert!(matches!(res, Err(Error::StepFailure { reason: "veto", .. })));
    }
}
