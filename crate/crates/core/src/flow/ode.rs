//! Adaptive Dormand-Prince 5(4) integration with step rejection on
//! undefined right-hand sides.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; a tenth of the span when absent.
    pub h0: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h0: None,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdeStatus {
    Reached,
    /// The observer asked to stop.
    Stopped,
    StepUnderflow,
    MaxSteps,
    /// The right-hand side stayed undefined down to the minimal step.
    Undefined,
}

#[derive(Clone, Debug)]
pub struct OdeEnd {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub rejected: usize,
    pub status: OdeStatus,
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
/// Fifth-order weights (equal to the last row of `A`).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One trial step: fifth-order solution and the scaled error norm.
fn trial<F>(f: &mut F, t: f64, y: &[f64], k0: &[f64], h: f64, o: &OdeOptions) -> Option<(Vec<f64>, Vec<f64>, f64)>
where
    F: FnMut(f64, &[f64]) -> Option<Vec<f64>>,
{
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(k0.to_vec());
    for s in 1..7 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..n {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        let ks = f(t + C[s] * h, &ys)?;
        if ks.iter().any(|v| !v.is_finite()) {
            return None;
        }
        k.push(ks);
    }
    let mut y5 = y.to_vec();
    let mut err = 0.0;
    for i in 0..n {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += B5[s] * k[s][i];
            d4 += B4[s] * k[s][i];
        }
        y5[i] += h * d5;
        let sc = o.atol + o.rtol * y[i].abs().max(y5[i].abs());
        err += (h * (d5 - d4) / sc).powi(2);
    }
    // first-same-as-last: the last stage is the derivative at the new point
    Some((y5, k.swap_remove(6), (err / n as f64).sqrt()))
}

/// Integrate `y' = f(t, y)` from `t0` toward `t1` (either direction).
/// `observe(t, y)` runs after every accepted step and returns `false` to stop.
pub fn integrate<F, O>(mut f: F, t0: f64, y0: &[f64], t1: f64, o: &OdeOptions, mut observe: O) -> OdeEnd
where
    F: FnMut(f64, &[f64]) -> Option<Vec<f64>>,
    O: FnMut(f64, &[f64]) -> bool,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0.to_vec();
    let end = |t: f64, y: Vec<f64>, steps, rejected, status| OdeEnd {
        t,
        y,
        steps,
        rejected,
        status,
    };
    if span == 0.0 {
        return end(t, y, 0, 0, OdeStatus::Reached);
    }
    let Some(mut k0) = f(t, &y) else {
        return end(t, y, 0, 0, OdeStatus::Undefined);
    };
    let mut h = o.h0.unwrap_or(0.1 * span).min(o.h_max).min(span);
    let (mut steps, mut rejected) = (0, 0);
    loop {
        let left = (t1 - t) * dir;
        if left <= 0.0 {
            return end(t, y, steps, rejected, OdeStatus::Reached);
        }
        if steps >= o.max_steps {
            return end(t, y, steps, rejected, OdeStatus::MaxSteps);
        }
        // land exactly on t1 rather than leaving a sliver
        let last = h > 0.99 * left;
        let hs = if last { left } else { h };
        match trial(&mut f, t, &y, &k0, dir * hs, o) {
            Some((yn, kn, err)) if err <= 1.0 => {
                t = if last { t1 } else { t + dir * hs };
                y = yn;
                k0 = kn;
                steps += 1;
                if !observe(t, &y) {
                    return end(t, y, steps, rejected, OdeStatus::Stopped);
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (hs * fac).min(o.h_max);
            }
            Some((_, _, err)) => {
                rejected += 1;
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < o.h_min {
                    return end(t, y, steps, rejected, OdeStatus::StepUnderflow);
                }
            }
            None => {
                rejected += 1;
                h = 0.25 * hs;
                if h < o.h_min {
                    return end(t, y, steps, rejected, OdeStatus::Undefined);
                }
            }
        }
    }
}
