//! Sequential minimal optimization for the soft-margin SVM dual
//!
//! ```text
//! min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j <x_i, x_j>
//! ```
//!
//! Working pairs are chosen by maximal violation for `i` and second-order
//! gain for `j`; ties go to the lowest index so the schedule is deterministic.

const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    /// Offset of the decision function `f(x) = sum a_i y_i <x_i, x> + bias`.
    pub bias: f64,
    /// Maximal KKT violation `m(a) - M(a)` at exit, together with `|y'a|`.
    pub residual: f64,
    pub iterations: usize,
}

pub(crate) struct SmoSolver<'a> {
    gram: &'a [f64],
    labels: &'a [f64],
    c: f64,
    tolerance: f64,
    max_iterations: usize,
}

impl<'a> SmoSolver<'a> {
    pub fn new(gram: &'a [f64], labels: &'a [f64], c: f64) -> Self {
        let n = labels.len();
        assert_eq!(gram.len(), n * n);
        Self {
            gram,
            labels,
            c,
            tolerance: 1e-11,
            max_iterations: 100_000 + 1000 * n,
        }
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.labels.len() + j]
    }

    fn q(&self, i: usize, j: usize) -> f64 {
        self.labels[i] * self.labels[j] * self.k(i, j)
    }

    pub fn solve(&self) -> DualSolution {
        let n = self.labels.len();
        let y = self.labels;
        let c = self.c;
        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let upper = |a: f64| a >= c;
        let lower = |a: f64| a <= 0.0;

        let mut iterations = 0;
        let mut gap;
        loop {
            // i: maximal violator in I_up
            let mut g_max = f64::NEG_INFINITY;
            let mut i_sel = None;
            for t in 0..n {
                let v = -y[t] * grad[t];
                let in_up = if y[t] > 0.0 {
                    !upper(alpha[t])
                } else {
                    !lower(alpha[t])
                };
                if in_up && v > g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
            // j: best second-order step in I_low
            let mut g_max2 = f64::NEG_INFINITY;
            let mut j_sel = None;
            let mut best = f64::INFINITY;
            if let Some(i) = i_sel {
                for t in 0..n {
                    let in_low = if y[t] > 0.0 {
                        !lower(alpha[t])
                    } else {
                        !upper(alpha[t])
                    };
                    if !in_low {
                        continue;
                    }
                    let v = y[t] * grad[t];
                    g_max2 = g_max2.max(v);
                    let diff = g_max + v;
                    if diff > 0.0 {
                        let quad = (self.k(i, i) + self.k(t, t) - 2.0 * self.k(i, t)).max(TAU);
                        let obj = -diff * diff / quad;
                        if obj < best {
                            best = obj;
                            j_sel = Some(t);
                        }
                    }
                }
            }
            gap = if i_sel.is_some() && g_max2.is_finite() {
                (g_max + g_max2).max(0.0)
            } else {
                0.0
            };
            let (Some(i), Some(j)) = (i_sel, j_sel) else {
                break;
            };
            if gap < self.tolerance || iterations >= self.max_iterations {
                break;
            }
            iterations += 1;

            let (old_i, old_j) = (alpha[i], alpha[j]);
            let q_ij = self.q(i, j);
            if y[i] != y[j] {
                let quad = (self.k(i, i) + self.k(j, j) + 2.0 * q_ij).max(TAU);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (self.k(i, i) + self.k(j, j) - 2.0 * q_ij).max(TAU);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }

            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for (t, g) in grad.iter_mut().enumerate() {
                *g += self.q(i, t) * di + self.q(j, t) * dj;
            }
        }

        // offset from free vectors, or the middle of the feasible interval
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut free_sum) = (0usize, 0.0);
        for t in 0..n {
            let yg = y[t] * grad[t];
            if upper(alpha[t]) {
                if y[t] < 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else if lower(alpha[t]) {
                if y[t] > 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        let rho = if free > 0 {
            free_sum / free as f64
        } else {
            (ub + lb) / 2.0
        };
        let equality: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
        DualSolution {
            alpha,
            bias: -rho,
            residual: gap.max(equality.abs()),
            iterations,
        }
    }
}
