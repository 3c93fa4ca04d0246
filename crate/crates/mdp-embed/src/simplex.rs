//! Dense two-phase simplex with Bland's rule.
//!
//! Sized for occupation-measure programs: a few hundred variables at most.
//! Phase 1 certifies infeasibility with the Farkas vector read off the final
//! basis; Bland's rule keeps every pivot choice deterministic and finite.

use nalgebra::DMatrix;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub(crate) struct LpProblem {
    /// Minimized objective over the structural variables.
    pub objective: Vec<f64>,
    /// Equality rows (coefficients, rhs).
    pub eq: Vec<(Vec<f64>, f64)>,
    /// `≤` rows (coefficients, rhs).
    pub le: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug)]
pub(crate) enum LpSolution {
    Optimal { x: Vec<f64>, value: f64 },
    /// Farkas certificate: `y` (indexed eq rows then le rows) satisfies
    /// `yᵀA ≤ 0` on every column and `yᵀb = gap > 0`.
    Infeasible { dual: Vec<f64>, gap: f64 },
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum LpError {
    #[error("linear program is unbounded below")]
    Unbounded,
    #[error("simplex basis became singular")]
    Singular,
}

struct Tableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    n_cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= piv;
        }
        self.b[row] /= piv;
        for r in 0..self.a.len() {
            if r == row {
                continue;
            }
            let factor = self.a[r][col];
            if factor == 0.0 {
                continue;
            }
            for c in 0..self.n_cols {
                self.a[r][c] -= factor * self.a[row][c];
            }
            self.b[r] -= factor * self.b[row];
        }
        self.basis[row] = col;
    }

    /// Bland: entering column is the lowest index with negative reduced
    /// cost; the leaving row breaks ratio ties by lowest basis variable.
    fn iterate(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpError> {
        loop {
            let m = self.a.len();
            let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let reduced =
                    cost[j] - (0..m).map(|i| cb[i] * self.a[i][j]).sum::<f64>();
                if reduced < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                if self.a[i][col] > PIVOT_TOL {
                    let ratio = self.b[i] / self.a[i][col];
                    match leaving {
                        None => leaving = Some((i, ratio)),
                        Some((best, best_ratio)) => {
                            if ratio < best_ratio - 1e-12
                                || ((ratio - best_ratio).abs() <= 1e-12
                                    && self.basis[i] < self.basis[best])
                            {
                                leaving = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
        }
    }
}

pub(crate) fn solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    let n = p.objective.len();
    let n_le = p.le.len();
    let m = p.eq.len() + n_le;
    let n_slack = n + n_le;
    let n_all = n_slack + m; // artificials at the end

    let mut a = vec![vec![0.0; n_all]; m];
    let mut b = vec![0.0; m];
    let mut sign = vec![1.0; m];
    for (i, (coeffs, rhs)) in p.eq.iter().chain(p.le.iter()).enumerate() {
        assert_eq!(coeffs.len(), n, "constraint arity mismatch");
        a[i][..n].copy_from_slice(coeffs);
        b[i] = *rhs;
        if i >= p.eq.len() {
            a[i][n + (i - p.eq.len())] = 1.0;
        }
        if b[i] < 0.0 {
            sign[i] = -1.0;
            for v in a[i].iter_mut() {
                *v = -*v;
            }
            b[i] = -b[i];
        }
        a[i][n_slack + i] = 1.0;
    }

    let mut t = Tableau {
        a,
        b,
        basis: (n_slack..n_all).collect(),
        n_cols: n_all,
    };

    // Phase 1: minimize the artificial mass.
    let mut phase1_cost = vec![0.0; n_all];
    for c in phase1_cost.iter_mut().skip(n_slack) {
        *c = 1.0;
    }
    t.iterate(&phase1_cost, n_all)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&t.b)
        .filter(|&(&j, _)| j >= n_slack)
        .map(|(_, &v)| v)
        .sum();
    let scale = 1.0 + p.eq.iter().chain(p.le.iter()).fold(0.0f64, |s, (_, r)| s.max(r.abs()));
    if infeasibility > FEAS_TOL * scale {
        // Farkas vector y = c_Bᵀ B⁻¹ of the phase-1 optimum, mapped back
        // through the row sign flips.
        let mut bt = DMatrix::<f64>::zeros(m, m);
        let mut cb = DMatrix::<f64>::zeros(m, 1);
        for (i, &j) in t.basis.iter().enumerate() {
            cb[(i, 0)] = phase1_cost[j];
        }
        // Rebuild original (sign-adjusted) columns of the basis.
        let mut orig = vec![vec![0.0; m]; n_all];
        for (i, (coeffs, _)) in p.eq.iter().chain(p.le.iter()).enumerate() {
            for (j, &v) in coeffs.iter().enumerate() {
                orig[j][i] = v * sign[i];
            }
        }
        for i in p.eq.len()..m {
            orig[n + (i - p.eq.len())][i] = sign[i];
        }
        for i in 0..m {
            orig[n_slack + i][i] = 1.0;
        }
        for (col, &j) in t.basis.iter().enumerate() {
            for r in 0..m {
                bt[(col, r)] = orig[j][r]; // Bᵀ
            }
        }
        let y = bt.lu().solve(&cb).ok_or(LpError::Singular)?;
        let dual: Vec<f64> = (0..m).map(|i| y[(i, 0)] * sign[i]).collect();
        let gap: f64 = p
            .eq
            .iter()
            .chain(p.le.iter())
            .enumerate()
            .map(|(i, (_, rhs))| dual[i] * rhs)
            .sum();
        return Ok(LpSolution::Infeasible { dual, gap });
    }

    // Drive leftover artificials out of the basis; a row with no usable
    // pivot is redundant and can sit at zero level harmlessly.
    for i in 0..m {
        if t.basis[i] >= n_slack {
            if let Some(col) = (0..n_slack)
                .find(|&j| !t.basis.contains(&j) && t.a[i][j].abs() > PIVOT_TOL)
            {
                t.pivot(i, col);
            }
        }
    }

    // Phase 2 over structural and slack columns only.
    let mut cost = vec![0.0; n_all];
    cost[..n].copy_from_slice(&p.objective);
    t.iterate(&cost, n_slack)?;

    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.b[i].max(0.0);
        }
    }
    let value = x
        .iter()
        .zip(&p.objective)
        .map(|(xi, ci)| xi * ci)
        .sum::<f64>();
    Ok(LpSolution::Optimal { x, value })
}
