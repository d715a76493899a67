//! Small dense two-phase simplex (Bland's rule) used by the oracle to price
//! communication exactly. Independent of any MILP backend on purpose.

use crate::ilp::Cmp;

const EPS: f64 = 1e-9;

/// `min cost·x` subject to `rows`, `0 <= x <= upper`.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub upper: Vec<Option<f64>>,
    pub rows: Vec<(Vec<(usize, f64)>, Cmp, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn add_var(&mut self, cost: f64, upper: Option<f64>) -> usize {
        self.cost.push(cost);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.rows.push((terms, cmp, rhs));
    }

    pub fn minimize(&self) -> LpOutcome {
        let n = self.cost.len();
        let mut rows: Vec<(Vec<f64>, Cmp, f64)> = Vec::new();
        for (terms, cmp, rhs) in &self.rows {
            let mut dense = vec![0.0; n];
            for &(j, c) in terms {
                dense[j] += c;
            }
            rows.push((dense, *cmp, *rhs));
        }
        for (j, u) in self.upper.iter().enumerate() {
            if let Some(u) = *u {
                let mut dense = vec![0.0; n];
                dense[j] = 1.0;
                rows.push((dense, Cmp::Le, u));
            }
        }
        // rhs >= 0
        for (dense, cmp, rhs) in rows.iter_mut() {
            if *rhs < 0.0 {
                dense.iter_mut().for_each(|v| *v = -*v);
                *rhs = -*rhs;
                *cmp = match *cmp {
                    Cmp::Le => Cmp::Ge,
                    Cmp::Ge => Cmp::Le,
                    Cmp::Eq => Cmp::Eq,
                };
            }
        }
        let m = rows.len();
        let slacks = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        let artificials = rows.iter().filter(|r| r.1 != Cmp::Le).count();
        let cols = n + slacks + artificials;
        let mut tab = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let (mut next_slack, mut next_art) = (n, n + slacks);
        for (i, (dense, cmp, rhs)) in rows.into_iter().enumerate() {
            tab[i][..n].copy_from_slice(&dense);
            tab[i][cols] = rhs;
            match cmp {
                Cmp::Le => {
                    tab[i][next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Cmp::Ge => {
                    tab[i][next_slack] = -1.0;
                    next_slack += 1;
                    tab[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Cmp::Eq => {
                    tab[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        let first_art = n + slacks;

        let mut phase1 = vec![0.0; cols];
        phase1[first_art..].iter_mut().for_each(|c| *c = 1.0);
        let allowed_all = vec![true; cols];
        if run(&mut tab, &mut basis, &phase1, &allowed_all) == Status::Unbounded {
            return LpOutcome::Infeasible;
        }
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= first_art)
            .map(|(i, _)| tab[i][cols])
            .sum();
        if infeas > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..m {
            if basis[i] >= first_art {
                if let Some(j) = (0..first_art).find(|&j| tab[i][j].abs() > EPS) {
                    pivot(&mut tab, &mut basis, i, j);
                }
            }
        }
        let mut phase2 = vec![0.0; cols];
        phase2[..n].copy_from_slice(&self.cost);
        let mut allowed = vec![true; cols];
        allowed[first_art..].iter_mut().for_each(|a| *a = false);
        if run(&mut tab, &mut basis, &phase2, &allowed) == Status::Unbounded {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = tab[i][cols];
            }
        }
        let value = x.iter().zip(&self.cost).map(|(a, c)| a * c).sum();
        LpOutcome::Optimal { value, x }
    }
}

#[derive(PartialEq)]
enum Status {
    Optimal,
    Unbounded,
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = tab[row][col];
    tab[row].iter_mut().for_each(|v| *v /= p);
    let pivot_row = tab[row].clone();
    for (i, r) in tab.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = r[col];
        if f.abs() > 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
    basis[row] = col;
}

fn run(tab: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: &[bool]) -> Status {
    let cols = cost.len();
    loop {
        // reduced costs
        let entering = (0..cols).find(|&j| {
            if !allowed[j] || basis.contains(&j) {
                return false;
            }
            let d = cost[j]
                - basis
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| cost[b] * tab[i][j])
                    .sum::<f64>();
            d < -EPS
        });
        let Some(j) = entering else {
            return Status::Optimal;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..tab.len() {
            let a = tab[i][j];
            if a > EPS {
                let ratio = tab[i][cols] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - 1e-12 || (ratio <= best + 1e-12 && basis[i] < basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
        }
        let Some((i, _)) = leave else {
            return Status::Unbounded;
        };
        pivot(tab, basis, i, j);
    }
}
