//! Weighted-lasso proximal gradient (ISTA) on a precomputed Gram system.
//!
//! Minimizes `F(w) = (1/2T)||y - Xw||^2 + sum_j penalty_j |w_j|` for centered
//! `X`, `y`, written as `yy - c'w + w'Gw/2` with `G = X'X/T`, `c = X'y/T`,
//! `yy = y'y/(2T)`.

/// Proximal map of `t|.|`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the relative objective change falls below this...
    pub tolerance: f64,
    /// ...and the first-order optimality residual falls below this
    /// (relative to `max(1, |c|_inf)`).
    pub kkt_tolerance: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            kkt_tolerance: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub weights: Vec<f64>,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub struct GramProblem<'a> {
    pub gram: &'a [f64],
    pub cross: &'a [f64],
    pub half_yy: f64,
    pub penalties: &'a [f64],
}

impl GramProblem<'_> {
    fn dim(&self) -> usize {
        self.cross.len()
    }

    fn gram_times(&self, w: &[f64], out: &mut [f64]) {
        let p = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.gram[i * p..(i + 1) * p]
                .iter()
                .zip(w)
                .map(|(g, x)| g * x)
                .sum();
        }
    }

    fn smooth(&self, w: &[f64], gw: &[f64]) -> f64 {
        let cw: f64 = self.cross.iter().zip(w).map(|(c, x)| c * x).sum();
        let wgw: f64 = w.iter().zip(gw).map(|(x, g)| x * g).sum();
        self.half_yy - cw + 0.5 * wgw
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        self.penalties.iter().zip(w).map(|(l, x)| l * x.abs()).sum()
    }

    /// Largest violation of the subgradient optimality conditions.
    fn kkt_residual(&self, w: &[f64], grad: &[f64]) -> f64 {
        w.iter()
            .zip(grad)
            .zip(self.penalties)
            .map(|((&x, &g), &l)| {
                if x != 0.0 {
                    (g + l * x.signum()).abs()
                } else {
                    (g.abs() - l).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Power-iteration estimate of the spectral norm of `G`.
    fn lipschitz(&self) -> f64 {
        let p = self.dim();
        let mut v = vec![1.0 / (p as f64).sqrt(); p];
        let mut gv = vec![0.0; p];
        let mut est = 0.0;
        for _ in 0..100 {
            self.gram_times(&v, &mut gv);
            let norm = gv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let converged = (norm - est).abs() <= 1e-12 * norm;
            est = norm;
            v.iter_mut().zip(&gv).for_each(|(a, b)| *a = b / norm);
            if converged {
                break;
            }
        }
        est
    }

    pub fn solve(&self, opts: &SolverOptions) -> SolverOutput {
        let p = self.dim();
        let mut w = vec![0.0; p];
        let mut gw = vec![0.0; p];
        let mut grad: Vec<f64> = self.cross.iter().map(|c| -c).collect();
        let mut objective = self.half_yy;
        let mut trace = vec![objective];
        let lip = self.lipschitz();
        if p == 0 || lip == 0.0 {
            return SolverOutput {
                weights: w,
                objective_trace: trace,
                iterations: 0,
                converged: true,
            };
        }
        let scale = self.cross.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let mut step = 1.0 / lip;
        let mut candidate = vec![0.0; p];
        let mut g_candidate = vec![0.0; p];
        let mut converged = false;
        let mut iterations = 0;

        while iterations < opts.max_iter {
            iterations += 1;
            let smooth = objective - self.penalty(&w);
            // backtracking on the quadratic upper bound
            let mut halvings = 0;
            let cand_smooth = loop {
                for j in 0..p {
                    candidate[j] =
                        soft_threshold(w[j] - step * grad[j], step * self.penalties[j]);
                }
                self.gram_times(&candidate, &mut g_candidate);
                let f_new = self.smooth(&candidate, &g_candidate);
                let (mut lin, mut sq) = (0.0, 0.0);
                for j in 0..p {
                    let d = candidate[j] - w[j];
                    lin += grad[j] * d;
                    sq += d * d;
                }
                let bound = smooth + lin + sq / (2.0 * step);
                if f_new <= bound + 1e-15 * smooth.abs().max(1.0) || halvings >= 60 {
                    break f_new;
                }
                step *= 0.5;
                halvings += 1;
            };
            let cand_objective = cand_smooth + self.penalty(&candidate);
            if cand_objective > objective {
                // no representable descent left
                converged = true;
                break;
            }
            let change = (objective - cand_objective) / objective.abs().max(f64::MIN_POSITIVE);
            std::mem::swap(&mut w, &mut candidate);
            std::mem::swap(&mut gw, &mut g_candidate);
            for j in 0..p {
                grad[j] = gw[j] - self.cross[j];
            }
            objective = cand_objective;
            trace.push(objective);
            if change < opts.tolerance && self.kkt_residual(&w, &grad) <= opts.kkt_tolerance * scale
            {
                converged = true;
                break;
            }
        }
        SolverOutput {
            weights: w,
            objective_trace: trace,
            iterations,
            converged,
        }
    }
}
