//! Small dense integer programs: two-phase simplex for the relaxation and
//! depth-first branch-and-bound for integrality.
//!
//! Problems here have a few dozen variables at most, so the tableau is
//! rebuilt for every node and Bland's rule is used throughout to rule out
//! cycling on the highly degenerate balance constraints.

const PIVOT_EPS: f64 = 1e-9;
const INT_EPS: f64 = 1e-6;
const MAX_PIVOTS: usize = 50_000;
const MAX_NODES: usize = 2_000_000;

/// `coeffs · x <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

enum Run {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: usize,
    width: usize,
    // (rows + 1) x width, objective row last, rhs in the last column
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(rows: usize, width: usize) -> Self {
        Self {
            rows,
            width,
            data: vec![0.0; (rows + 1) * width],
            basis: vec![0; rows],
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.width + c] = v;
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    /// Loads reduced costs for `cost` given the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let z = self.rows;
        for c in 0..self.width {
            let mut v = if c < cost.len() { cost[c] } else { 0.0 };
            for r in 0..self.rows {
                let cb = cost[self.basis[r]];
                if cb != 0.0 {
                    v -= cb * self.at(r, c);
                }
            }
            self.set(z, c, v);
        }
    }

    fn objective_value(&self) -> f64 {
        -self.at(self.rows, self.rhs_col())
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(pr, pc);
        for c in 0..w {
            let v = self.at(pr, c) * inv;
            self.set(pr, c, if v.abs() < 1e-12 { 0.0 } else { v });
        }
        self.set(pr, pc, 1.0);
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let factor = self.at(r, pc);
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.data[r * w..(r + 1) * w];
            for (dst, &src) in row.iter_mut().zip(&pivot_row) {
                let v = *dst - factor * src;
                *dst = if v.abs() < 1e-12 { 0.0 } else { v };
            }
            row[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Bland's rule: lowest-index improving column, lowest-index basic
    /// variable among tied ratios.
    fn run(&mut self, allowed: &[bool]) -> Run {
        let rhs = self.rhs_col();
        for _ in 0..MAX_PIVOTS {
            let Some(entering) = (0..rhs).find(|&c| allowed[c] && self.at(self.rows, c) < -PIVOT_EPS) else {
                return Run::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, entering);
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.at(r, rhs) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-12 || ((ratio - lratio).abs() <= 1e-12 && self.basis[r] < self.basis[lr])
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            match leave {
                None => return Run::Unbounded,
                Some((r, _)) => self.pivot(r, entering),
            }
        }
        panic!("simplex exceeded {MAX_PIVOTS} pivots");
    }
}

/// Minimizes `objective · x` subject to the constraints and `x >= 0`.
pub(crate) fn solve_lp(objective: &[f64], constraints: &[Constraint]) -> LpOutcome {
    let n = objective.len();
    let m = constraints.len();
    let n_art = constraints.iter().filter(|c| c.rhs < 0.0).count();
    let cols = n + m + n_art;
    let mut tab = Tableau::new(m, cols + 1);

    let mut next_art = n + m;
    for (i, c) in constraints.iter().enumerate() {
        debug_assert_eq!(c.coeffs.len(), n);
        let sign = if c.rhs < 0.0 { -1.0 } else { 1.0 };
        for (j, &a) in c.coeffs.iter().enumerate() {
            tab.set(i, j, sign * a);
        }
        tab.set(i, n + i, sign);
        tab.set(i, cols, sign * c.rhs);
        if sign < 0.0 {
            tab.set(i, next_art, 1.0);
            tab.basis[i] = next_art;
            next_art += 1;
        } else {
            tab.basis[i] = n + i;
        }
    }

    let mut allowed = vec![true; cols];
    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[n + m..].iter_mut().for_each(|c| *c = 1.0);
        tab.set_objective(&phase1);
        if let Run::Unbounded = tab.run(&allowed) {
            unreachable!("phase one is bounded below by zero");
        }
        if tab.objective_value() > 1e-7 {
            return LpOutcome::Infeasible;
        }
        for r in 0..m {
            if tab.basis[r] >= n + m {
                if let Some(c) = (0..n + m).find(|&c| tab.at(r, c).abs() > PIVOT_EPS) {
                    tab.pivot(r, c);
                }
            }
        }
        allowed[n + m..].iter_mut().for_each(|a| *a = false);
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(objective);
    tab.set_objective(&cost);
    if let Run::Unbounded = tab.run(&allowed) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.at(r, cols);
        }
    }
    let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpOutcome::Optimal { x, value }
}

/// Minimize `objective · x` over the constraints with the first
/// `integer_vars` variables integral and bounded by `upper`.
#[derive(Debug, Clone)]
pub(crate) struct IntegerProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub integer_vars: usize,
    pub upper: Vec<f64>,
    /// The objective takes integer values at integer points, which lets
    /// nodes be pruned on the rounded-up relaxation bound.
    pub integral_objective: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct IntSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

struct Node {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Depth-first search, branching on the first fractional integer variable
/// and exploring the rounded-down side first. An incumbent is only
/// replaced by a strictly better one, so the result is deterministic.
pub(crate) fn branch_and_bound(p: &IntegerProgram) -> Option<IntSolution> {
    let n = p.objective.len();
    let k = p.integer_vars;
    debug_assert_eq!(p.upper.len(), k);
    let mut stack = vec![Node {
        lower: vec![0.0; k],
        upper: p.upper.clone(),
    }];
    let mut best: Option<IntSolution> = None;
    let mut nodes = 0usize;

    while let Some(node) = stack.pop() {
        nodes += 1;
        assert!(nodes <= MAX_NODES, "branch-and-bound exceeded {MAX_NODES} nodes");

        let mut constraints = p.constraints.clone();
        for j in 0..k {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            constraints.push(Constraint::new(row, node.upper[j]));
            if node.lower[j] > 0.0 {
                let mut row = vec![0.0; n];
                row[j] = -1.0;
                constraints.push(Constraint::new(row, -node.lower[j]));
            }
        }
        let (x, value) = match solve_lp(&p.objective, &constraints) {
            LpOutcome::Optimal { x, value } => (x, value),
            LpOutcome::Infeasible | LpOutcome::Unbounded => continue,
        };
        if let Some(inc) = &best {
            let bound = if p.integral_objective {
                (value - INT_EPS).ceil()
            } else {
                value
            };
            if bound >= inc.value - INT_EPS {
                continue;
            }
        }

        match (0..k).find(|&j| (x[j] - x[j].round()).abs() > INT_EPS) {
            None => {
                let mut x = x;
                x[..k].iter_mut().for_each(|v| *v = v.round());
                let value = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
                if best.as_ref().is_none_or(|inc| value < inc.value - INT_EPS) {
                    best = Some(IntSolution { x, value });
                }
            }
            Some(j) => {
                let down = x[j].floor();
                let mut up_node = Node {
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                };
                up_node.lower[j] = down + 1.0;
                let mut down_node = node;
                down_node.upper[j] = down;
                if up_node.lower[j] <= up_node.upper[j] {
                    stack.push(up_node);
                }
                if down_node.lower[j] <= down_node.upper[j] {
                    stack.push(down_node);
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(coeffs: &[f64], rhs: f64) -> Constraint {
        Constraint::new(coeffs.to_vec(), rhs)
    }

    fn optimal(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let (x, v) = optimal(solve_lp(
            &[-3.0, -5.0],
            &[c(&[1.0, 0.0], 4.0), c(&[0.0, 2.0], 12.0), c(&[3.0, 2.0], 18.0)],
        ));
        assert!((v + 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn phase_one_handles_lower_bounds() {
        // min x + y st x + y >= 3, x >= 1
        let (x, v) = optimal(solve_lp(&[1.0, 1.0], &[c(&[-1.0, -1.0], -3.0), c(&[-1.0, 0.0], -1.0)]));
        assert!((v - 3.0).abs() < 1e-9);
        assert!(x[0] >= 1.0 - 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        assert_eq!(
            solve_lp(&[1.0], &[c(&[1.0], 1.0), c(&[-1.0], -2.0)]),
            LpOutcome::Infeasible
        );
        assert_eq!(solve_lp(&[-1.0], &[c(&[-1.0], 0.0)]), LpOutcome::Unbounded);
    }

    #[test]
    fn branch_and_bound_finds_integer_optimum() {
        // max 5x + 4y st 6x + 4y <= 24, x + 2y <= 6; LP optimum (3, 1.5) -> 21
        // integer optimum is (4, 0) -> 20
        let p = IntegerProgram {
            objective: vec![-5.0, -4.0],
            constraints: vec![c(&[6.0, 4.0], 24.0), c(&[1.0, 2.0], 6.0)],
            integer_vars: 2,
            upper: vec![10.0, 10.0],
            integral_objective: true,
        };
        let s = branch_and_bound(&p).unwrap();
        assert_eq!(s.value, -20.0);
        assert_eq!(s.x, vec![4.0, 0.0]);
    }

    #[test]
    fn branch_and_bound_reports_integer_infeasibility() {
        // 2x = 1 has no integer solution
        let p = IntegerProgram {
            objective: vec![1.0],
            constraints: vec![c(&[2.0], 1.0), c(&[-2.0], -1.0)],
            integer_vars: 1,
            upper: vec![5.0],
            integral_objective: true,
        };
        assert!(branch_and_bound(&p).is_none());
    }
}
