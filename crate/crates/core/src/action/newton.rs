//! Damped Newton minimization of the discrete action over interior nodes.

use super::blocktri::BlockTridiag;
use crate::space::{potential_derivs_raw, potential_raw, MassSystem};

pub(crate) struct DiscreteProblem<'a> {
    pub sys: &'a MassSystem,
    pub dt: Vec<f64>,
    pub start: &'a [f64],
    pub end: &'a [f64],
}

pub(crate) struct NewtonOutcome {
    pub interior: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonSettings {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl<'a> DiscreteProblem<'a> {
    fn b(&self) -> usize {
        self.sys.len()
    }

    fn cells(&self) -> usize {
        self.dt.len()
    }

    fn node<'z>(&'z self, z: &'z [f64], j: usize) -> &'z [f64] {
        let b = self.b();
        if j == 0 {
            self.start
        } else if j == self.cells() {
            self.end
        } else {
            &z[(j - 1) * b..j * b]
        }
    }

    /// Discrete action; `+inf` when a midpoint collides.
    pub fn value(&self, z: &[f64]) -> f64 {
        let b = self.b();
        let d = self.sys.dim();
        let m = self.sys.masses();
        let mut mid = vec![0.0; b];
        let mut total = 0.0;
        for j in 0..self.cells() {
            let (p, q) = (self.node(z, j), self.node(z, j + 1));
            let mut kin = 0.0;
            for k in 0..b {
                let dv = q[k] - p[k];
                kin += m[k / d] * dv * dv;
                mid[k] = 0.5 * (p[k] + q[k]);
            }
            let u = potential_raw(self.sys, &mid);
            if !u.is_finite() {
                return f64::INFINITY;
            }
            total += 0.5 * kin / self.dt[j] + self.dt[j] * u;
        }
        total
    }

    /// Value, gradient, block Hessian and the kinetic diagonal used for damping.
    fn derivatives(
        &self,
        z: &[f64],
        grad: &mut [f64],
        hess: &mut BlockTridiag,
        kin_diag: &mut [f64],
    ) -> f64 {
        let b = self.b();
        let bb = b * b;
        let d = self.sys.dim();
        let m = self.sys.masses();
        let cells = self.cells();
        grad.iter_mut().for_each(|v| *v = 0.0);
        kin_diag.iter_mut().for_each(|v| *v = 0.0);
        hess.clear();
        let mut mid = vec![0.0; b];
        let mut du = vec![0.0; b];
        let mut hu = vec![0.0; bb];
        let mut total = 0.0;
        for j in 0..cells {
            let (p, q) = (self.node(z, j), self.node(z, j + 1));
            let dt = self.dt[j];
            let mut kin = 0.0;
            for k in 0..b {
                let dv = q[k] - p[k];
                kin += m[k / d] * dv * dv;
                mid[k] = 0.5 * (p[k] + q[k]);
            }
            let u = potential_derivs_raw(self.sys, &mid, &mut du, Some(&mut hu));
            total += 0.5 * kin / dt + dt * u;
            let left = if j >= 1 { Some(j - 1) } else { None };
            let right = if j + 1 < cells { Some(j) } else { None };
            for (side, sign) in [(left, -1.0), (right, 1.0)] {
                if let Some(i) = side {
                    for k in 0..b {
                        let mk = m[k / d];
                        grad[i * b + k] += sign * mk * (q[k] - p[k]) / dt + 0.5 * dt * du[k];
                        kin_diag[i * b + k] += mk / dt;
                    }
                    let blk = &mut hess.diag[i * bb..(i + 1) * bb];
                    for r in 0..b {
                        blk[r * b + r] += m[r / d] / dt;
                        for c in 0..b {
                            blk[r * b + c] += 0.25 * dt * hu[r * b + c];
                        }
                    }
                }
            }
            if let (Some(l), Some(_)) = (left, right) {
                let blk = &mut hess.off[l * bb..(l + 1) * bb];
                for r in 0..b {
                    blk[r * b + r] -= m[r / d] / dt;
                    for c in 0..b {
                        blk[r * b + c] += 0.25 * dt * hu[r * b + c];
                    }
                }
            }
        }
        total
    }

    /// Minimizes from `z0`. Infinite values reject trial steps, so iterates
    /// never cross a collision.
    pub fn minimize(&self, z0: Vec<f64>, set: NewtonSettings) -> NewtonOutcome {
        let b = self.b();
        let m = self.cells() - 1;
        let mut z = z0;
        if m == 0 {
            let v = self.value(&z);
            return NewtonOutcome {
                interior: z,
                value: v,
                converged: v.is_finite(),
                iterations: 0,
            };
        }
        let mut grad = vec![0.0; m * b];
        let mut kin = vec![0.0; m * b];
        let mut hess = BlockTridiag::new(b, m);
        let mut value = self.value(&z);
        let mut converged = false;
        let mut iterations = 0;
        let mut mu_prev = 0.0f64;
        if !value.is_finite() {
            return NewtonOutcome {
                interior: z,
                value,
                converged: false,
                iterations: 0,
            };
        }
        let mut trial = vec![0.0; m * b];
        while iterations < set.max_iter {
            iterations += 1;
            let v = self.derivatives(&z, &mut grad, &mut hess, &mut kin);
            if !v.is_finite() {
                break;
            }
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let mut mu: f64 = 0.0;
            let mut step = None;
            let mut first = mu_prev * 0.1;
            if first < 1e-10 {
                first = 0.0;
            }
            mu = mu.max(first);
            for _ in 0..40 {
                if let Some(p) = hess.solve_shifted(&kin, mu, &rhs) {
                    step = Some(p);
                    break;
                }
                mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
            }
            let Some(p) = step else { break };
            mu_prev = mu;
            let dec: f64 = -grad.iter().zip(&p).map(|(g, s)| g * s).sum::<f64>();
            let scale = value.abs().max(f64::MIN_POSITIVE);
            if !(dec > set.rel_tol * scale) {
                converged = dec.is_finite();
                break;
            }
            let near = dec < 1e-8 * scale && mu == 0.0;
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                for k in 0..m * b {
                    trial[k] = z[k] + alpha * p[k];
                }
                let vt = self.value(&trial);
                let ok = vt.is_finite()
                    && (vt <= value - 1e-4 * alpha * dec || (near && vt <= value + 1e-13 * scale));
                if ok {
                    std::mem::swap(&mut z, &mut trial);
                    value = vt;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // rounding floor: accept the current point when the model gain is tiny
                converged = dec < 1e-9 * scale;
                break;
            }
        }
        let value = self.value(&z);
        NewtonOutcome {
            interior: z,
            value,
            converged,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_differences() {
        let sys = MassSystem::new(vec![1.0, 2.0, 0.7], 2, 0.5).unwrap();
        let start = vec![0.0, 0.0, 1.0, 0.1, -0.5, 0.9];
        let end = vec![0.3, 0.2, 1.1, -0.3, -0.8, 0.7];
        let prob = DiscreteProblem {
            sys: &sys,
            dt: vec![0.1, 0.2, 0.15, 0.3],
            start: &start,
            end: &end,
        };
        let mut z = Vec::new();
        for j in 1..4 {
            let f = j as f64 / 4.0;
            for k in 0..6 {
                z.push(start[k] + f * (end[k] - start[k]) + 0.01 * ((j * 7 + k) as f64).sin());
            }
        }
        let b = 6;
        let mut g = vec![0.0; 3 * b];
        let mut kin = vec![0.0; 3 * b];
        let mut h = BlockTridiag::new(b, 3);
        prob.derivatives(&z, &mut g, &mut h, &mut kin);
        let eps = 1e-6;
        for k in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += eps;
            zm[k] -= eps;
            let fd = (prob.value(&zp) - prob.value(&zm)) / (2.0 * eps);
            assert!(
                (fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                "k={k} fd={fd} g={}",
                g[k]
            );
        }
        // one Hessian column via gradient differences
        let col = 4;
        let mut gp = vec![0.0; 3 * b];
        let mut gm = vec![0.0; 3 * b];
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[col] += eps;
        zm[col] -= eps;
        let mut hh = BlockTridiag::new(b, 3);
        prob.derivatives(&zp, &mut gp, &mut hh, &mut kin);
        prob.derivatives(&zm, &mut gm, &mut hh, &mut kin);
        for r in 0..b {
            let fd = (gp[r] - gm[r]) / (2.0 * eps);
            assert!((fd - h.diag[r * b + col]).abs() < 1e-5 * (1.0 + fd.abs()));
            let fd1 = (gp[b + r] - gm[b + r]) / (2.0 * eps);
            // block (1, 0) is the transpose of off[0]
            assert!((fd1 - h.off[col * b + r]).abs() < 1e-5 * (1.0 + fd1.abs()));
        }
    }
}
