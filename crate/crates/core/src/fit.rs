//! Two-exponential least-squares fit of an afterpulse histogram,
//! `y(t) = c + a1 exp(-t/tau1) + a2 exp(-t/tau2)`.
//!
//! The linear parameters are solved exactly for each lifetime pair; the
//! two lifetimes are then refined by Nelder-Mead in log space. Residuals
//! are weighted by `1/max(y, 1)` (Poisson counts).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::histogram::CountHistogram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Flat level per bin (dark counts).
    pub offset: f64,
    /// `(amplitude per bin at t = 0, lifetime in s)`, fastest first.
    pub components: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
    pub rms_residual: f64,
    pub degenerate: bool,
}

impl DecayFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.offset + self.components.iter().map(|(a, tau)| a * (-t / tau).exp()).sum::<f64>()
    }
}

struct Problem<'a> {
    t: Vec<f64>,
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem<'_> {
    /// Best linear coefficients for fixed lifetimes, and the weighted SSE.
    fn solve(&self, tau: [f64; 2]) -> Option<([f64; 3], f64)> {
        let mut ata = [[0.0; 3]; 3];
        let mut atb = [0.0; 3];
        for ((&t, &y), &w) in self.t.iter().zip(self.y).zip(&self.w) {
            let row = [1.0, (-t / tau[0]).exp(), (-t / tau[1]).exp()];
            for i in 0..3 {
                atb[i] += w * row[i] * y;
                for j in 0..3 {
                    ata[i][j] += w * row[i] * row[j];
                }
            }
        }
        let coef = solve3(ata, atb)?;
        let sse = self
            .t
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&t, &y), &w)| {
                let r = y - (coef[0] + coef[1] * (-t / tau[0]).exp() + coef[2] * (-t / tau[1]).exp());
                w * r * r
            })
            .sum();
        Some((coef, sse))
    }

    fn cost(&self, log_tau: [f64; 2]) -> f64 {
        let tau = [log_tau[0].exp(), log_tau[1].exp()];
        if (log_tau[0] - log_tau[1]).abs() < 1e-3 {
            return f64::INFINITY;
        }
        self.solve(tau).map_or(f64::INFINITY, |(_, sse)| sse)
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: f64, iters: usize) -> [f64; 2] {
    let mut simplex = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut vals = simplex.map(&f);
    for _ in 0..iters {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        simplex = idx.map(|i| simplex[i]);
        vals = idx.map(|i| vals[i]);
        if (vals[2] - vals[0]).abs() <= 1e-12 * vals[0].abs().max(1e-300) {
            break;
        }
        let centroid = [(simplex[0][0] + simplex[1][0]) / 2.0, (simplex[0][1] + simplex[1][1]) / 2.0];
        let along = |k: f64| [centroid[0] + k * (simplex[2][0] - centroid[0]), centroid[1] + k * (simplex[2][1] - centroid[1])];
        let refl = along(-1.0);
        let fr = f(refl);
        if fr < vals[0] {
            let exp = along(-2.0);
            let fe = f(exp);
            (simplex[2], vals[2]) = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < vals[1] {
            (simplex[2], vals[2]) = (refl, fr);
        } else {
            let con = along(0.5);
            let fc = f(con);
            if fc < vals[2] {
                (simplex[2], vals[2]) = (con, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = [(simplex[0][0] + simplex[i][0]) / 2.0, (simplex[0][1] + simplex[i][1]) / 2.0];
                    vals[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap_or(0);
    simplex[best]
}

/// Fits bins from `first_bin` on; time is measured from the start of bin 0.
pub fn fit_two_exponential(hist: &CountHistogram, first_bin: usize) -> Result<DecayFit> {
    if hist.len() < first_bin + 6 {
        return Err(invalid("histogram", "need at least six bins to fit five parameters"));
    }
    let y = &hist.counts[first_bin..];
    let t: Vec<f64> = (first_bin..hist.len()).map(|i| hist.bin_start(i)).collect();
    let w = y.iter().map(|v| 1.0 / v.max(1.0)).collect();
    let problem = Problem { t, y, w };

    let lo = hist.bin_width_s.ln();
    let hi = (hist.bin_width_s * hist.len() as f64).ln();
    let grid: Vec<f64> = (0..=24).map(|i| lo + (hi - lo) * f64::from(i) / 24.0).collect();
    let mut start = [grid[0], grid[1]];
    let mut best = f64::INFINITY;
    for (i, &a) in grid.iter().enumerate() {
        for &b in &grid[i + 1..] {
            let c = problem.cost([a, b]);
            if c < best {
                best = c;
                start = [a, b];
            }
        }
    }
    let log_tau = nelder_mead(|p| problem.cost(p), start, 0.1, 2000);
    let mut tau = [log_tau[0].exp(), log_tau[1].exp()];
    let (mut coef, _) = problem.solve(tau).ok_or_else(|| invalid("histogram", "singular fit"))?;
    if tau[0] > tau[1] {
        tau.swap(0, 1);
        coef.swap(1, 2);
    }

    let residuals: Vec<f64> = problem
        .t
        .iter()
        .zip(y)
        .map(|(&t, &v)| v - (coef[0] + coef[1] * (-t / tau[0]).exp() + coef[2] * (-t / tau[1]).exp()))
        .collect();
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    let scale = y.iter().cloned().fold(0.0, f64::max).max(1.0);
    let degenerate = coef[1] <= 1e-9 * scale || coef[2] <= 1e-9 * scale || !tau.iter().all(|t| t.is_finite());

    Ok(DecayFit { offset: coef[0], components: vec![(coef[1], tau[0]), (coef[2], tau[1])], residuals, rms_residual, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_data_recovered() {
        let bw = 0.4e-6;
        let counts = (0..200)
            .map(|i| {
                let t = i as f64 * bw;
                50.0 + 9000.0 * (-t / 1.2e-6).exp() + 800.0 * (-t / 9e-6).exp()
            })
            .collect();
        let h = CountHistogram::new(bw, counts, None).unwrap();
        let fit = fit_two_exponential(&h, 0).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.offset - 50.0).abs() < 0.05);
        let (a1, t1) = fit.components[0];
        let (a2, t2) = fit.components[1];
        assert!((t1 - 1.2e-6).abs() / 1.2e-6 < 1e-3, "{t1}");
        assert!((t2 - 9e-6).abs() / 9e-6 < 1e-3, "{t2}");
        assert!((a1 - 9000.0).abs() / 9000.0 < 1e-3);
        assert!((a2 - 800.0).abs() / 800.0 < 1e-3);
        assert!(fit.rms_residual < 0.1);
    }

    #[test]
    fn flat_is_degenerate() {
        let h = CountHistogram::new(1e-6, vec![30.0; 50], None).unwrap();
        let fit = fit_two_exponential(&h, 0).unwrap();
        assert!(fit.degenerate);
    }

    #[test]
    fn too_few_bins() {
        let h = CountHistogram::new(1e-6, vec![3.0; 5], None).unwrap();
        assert!(fit_two_exponential(&h, 0).is_err());
    }
}
