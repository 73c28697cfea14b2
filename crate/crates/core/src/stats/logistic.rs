use crate::error::{RanError, Result};

const MAX_ITERS: usize = 500;
const REL_TOL: f64 = 1e-10;

/// `β1·(1/2 − 1/(1+exp(β2(x−β3)))) + β4·x + β5`.
pub fn logistic(beta: &[f64; 5], x: f64) -> f64 {
    let [b1, b2, b3, b4, b5] = *beta;
    b1 * (0.5 - sigmoid_neg(b2 * (x - b3))) + b4 * x + b5
}

/// `1 / (1 + exp(z))`, stable for large |z|.
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

fn jacobian_row(beta: &[f64; 5], x: f64) -> [f64; 5] {
    let [b1, b2, b3, _, _] = *beta;
    let z = b2 * (x - b3);
    let s = sigmoid_neg(z);
    // d/dz of −1/(1+e^z) is s·(1−s).
    let ds = s * (1.0 - s);
    [0.5 - s, b1 * ds * (x - b3), -b1 * ds * b2, x, 1.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub beta: [f64; 5],
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sse(beta: &[f64; 5], x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&a, &b)| (logistic(beta, a) - b).powi(2)).sum()
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let piv = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..5 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let s: f64 = (row + 1..5).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Least-squares 5-parameter logistic by Levenberg-damped Gauss-Newton.
pub fn logistic_fit(x: &[f64], y: &[f64]) -> Result<LogisticFit> {
    super::check_pairs(x, y, 5)?;
    let n = x.len() as f64;
    let mx = super::mean(x);
    let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sx == 0.0 {
        return Err(RanError::UndefinedStatistic("constant predictions".into()));
    }
    let (ymin, ymax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let sign = match super::pearson(x, y) {
        Ok(r) if r < 0.0 => -1.0,
        _ => 1.0,
    };
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    // Fit on u = (x - median) / std so conditioning does not depend on the
    // location or scale of the predictions; parameters are mapped back at the end.
    let u: Vec<f64> = x.iter().map(|v| (v - median) / sx).collect();
    let x = &u[..];
    let mut beta = [ymax - ymin, sign * 4.0, 0.0, 0.0, super::mean(y)];
    let mut cur = sse(&beta, x, y);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERS {
        iterations += 1;
        let mut jtj = [[0.0; 5]; 5];
        let mut jtr = [0.0; 5];
        for (&xi, &yi) in x.iter().zip(y) {
            let j = jacobian_row(&beta, xi);
            let r = yi - logistic(&beta, xi);
            for a in 0..5 {
                jtr[a] += j[a] * r;
                for b in 0..5 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        // Retry with growing damping until the step reduces the error.
        let mut improved = None;
        while lambda < 1e12 {
            let mut damped = jtj;
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-12);
            }
            if let Some(step) = solve5(damped, jtr) {
                let mut cand = beta;
                for (c, s) in cand.iter_mut().zip(step) {
                    *c += s;
                }
                let e = sse(&cand, x, y);
                if e.is_finite() && e <= cur {
                    improved = Some((cand, e));
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((cand, e)) = improved else {
            // No damping level makes progress: a (local) minimum.
            converged = true;
            break;
        };
        let rel = (cur - e) / cur.max(f64::MIN_POSITIVE);
        beta = cand;
        cur = e;
        lambda = (lambda / 10.0).max(1e-12);
        if rel < REL_TOL || cur == 0.0 {
            converged = true;
            break;
        }
    }
    let [b1, b2, b3, b4, b5] = beta;
    let beta = [b1, b2 / sx, median + sx * b3, b4 / sx, b5 - b4 * median / sx];
    Ok(LogisticFit {
        beta,
        sse: cur,
        iterations,
        converged,
    })
}
