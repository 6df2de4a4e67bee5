//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Every row `a·x {<=,=,>=} b` gets a slack `s` with `a·x + s = b` whose bounds
//! encode the sense, plus an artificial column that is only used in phase one.
//! Dantzig pricing with a Harris ratio test is the default; after a streak of
//! degenerate pivots the solver switches to Bland's rule until it makes
//! progress again.

use super::{LinearProgram, LpError, Objective, Sense, SolveResult, Status, VarKind};

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Hard cap on pivots across both phases.
    pub max_iterations: usize,
    /// Degenerate pivots in a row before switching to Bland's rule.
    pub degenerate_streak: usize,
    pub refactor_every: usize,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub pivot_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            degenerate_streak: 30,
            refactor_every: 64,
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            pivot_tol: 1e-9,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<SolveResult, LpError> {
    solve_lp_with(lp, &SimplexOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SimplexOptions) -> Result<SolveResult, LpError> {
    lp.validate()?;
    let nbin = lp.vars.iter().filter(|v| v.kind == VarKind::Binary).count();
    if nbin > 0 {
        return Err(LpError::IntegralityInLp(nbin));
    }
    super::maybe_dump(lp, "lp");
    solve_relaxation(lp, opts)
}

/// Solves the program treating binaries as continuous within their bounds.
pub(crate) fn solve_relaxation(lp: &LinearProgram, opts: &SimplexOptions) -> Result<SolveResult, LpError> {
    let mut s = Simplex::new(lp, *opts);
    s.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
    Free,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    opts: SimplexOptions,
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    art_sign: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    b: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, opts: SimplexOptions) -> Self {
        let m = lp.rows.len();
        let n = lp.vars.len();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(v, a) in &row.terms {
                cols[v.0].push((i, a));
            }
        }
        let total = n + 2 * m;
        let mut lo = vec![0.0; total];
        let mut hi = vec![0.0; total];
        for (j, v) in lp.vars.iter().enumerate() {
            lo[j] = v.lower;
            hi[j] = v.upper;
        }
        for (i, row) in lp.rows.iter().enumerate() {
            let (l, h) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo[n + i] = l;
            hi[n + i] = h;
        }
        let b: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        Self {
            lp,
            opts,
            m,
            n,
            cols,
            art_sign: vec![1.0; m],
            lo,
            hi,
            cost: vec![0.0; total],
            x: vec![0.0; total],
            state: vec![State::AtLower; total],
            basis: Vec::with_capacity(m),
            binv: vec![0.0; m * m],
            b,
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn total(&self) -> usize {
        self.n + 2 * self.m
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                f(i, a);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            let i = j - self.n - self.m;
            f(i, self.art_sign[i]);
        }
    }

    fn nonbasic_start(&self, j: usize) -> (State, f64) {
        let (l, h) = (self.lo[j], self.hi[j]);
        if l.is_finite() {
            (State::AtLower, l)
        } else if h.is_finite() {
            (State::AtUpper, h)
        } else {
            (State::Free, 0.0)
        }
    }

    fn initial_basis(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut resid = self.b.clone();
        for j in 0..n {
            let (st, val) = self.nonbasic_start(j);
            self.state[j] = st;
            self.x[j] = val;
            if val != 0.0 {
                for &(i, a) in &self.cols[j] {
                    resid[i] -= a * val;
                }
            }
        }
        self.basis.clear();
        for i in 0..m {
            let s = n + i;
            let a = n + m + i;
            let r = resid[i];
            if r >= self.lo[s] && r <= self.hi[s] {
                self.state[s] = State::Basic;
                self.x[s] = r;
                self.basis.push(s);
                // artificial stays nonbasic, fixed at zero
                self.lo[a] = 0.0;
                self.hi[a] = 0.0;
                self.state[a] = State::AtLower;
                self.x[a] = 0.0;
            } else {
                let clamp = r.clamp(self.lo[s], self.hi[s]);
                self.state[s] = if clamp == self.lo[s] { State::AtLower } else { State::AtUpper };
                self.x[s] = clamp;
                let diff = r - clamp;
                self.art_sign[i] = if diff >= 0.0 { 1.0 } else { -1.0 };
                self.lo[a] = 0.0;
                self.hi[a] = f64::INFINITY;
                self.state[a] = State::Basic;
                self.x[a] = diff.abs();
                self.basis.push(a);
            }
        }
        self.binv = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            let d = if j >= n + m { self.art_sign[j - n - m] } else { 1.0 };
            self.binv[k * m + k] = 1.0 / d;
        }
    }

    fn run(&mut self) -> Result<SolveResult, LpError> {
        self.initial_basis();
        let (n, m) = (self.n, self.m);

        // phase one: minimise the sum of artificials
        let needs_phase_one = self.basis.iter().any(|&j| j >= n + m);
        if needs_phase_one {
            for j in 0..self.total() {
                self.cost[j] = if j >= n + m { 1.0 } else { 0.0 };
            }
            match self.iterate()? {
                Outcome::Optimal => {}
                Outcome::Unbounded => unreachable!("phase one objective is bounded below"),
            }
            let infeas: f64 = (n + m..self.total()).map(|j| self.x[j].max(0.0)).sum();
            let scale = 1.0 + self.b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if infeas > 1e-7 * scale {
                let mut r = SolveResult::without_solution(Status::Infeasible);
                r.iterations = self.iterations;
                return Ok(r);
            }
        }
        for j in n + m..self.total() {
            self.lo[j] = 0.0;
            self.hi[j] = 0.0;
            if self.state[j] != State::Basic {
                self.x[j] = 0.0;
                self.state[j] = State::AtLower;
            }
        }

        let flip = if self.lp.objective == Objective::Maximize { -1.0 } else { 1.0 };
        for j in 0..self.total() {
            self.cost[j] = if j < n { flip * self.lp.vars[j].cost } else { 0.0 };
        }
        match self.iterate()? {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                let mut r = SolveResult::without_solution(Status::Unbounded);
                r.iterations = self.iterations;
                return Ok(r);
            }
        }
        self.refactor()?;

        let y = self.duals();
        let x: Vec<f64> = self.x[..n].to_vec();
        let mut reduced = vec![0.0; n];
        for (j, d) in reduced.iter_mut().enumerate() {
            *d = flip * self.reduced_cost(j, &y);
        }
        let duals: Vec<f64> = y.iter().map(|v| flip * v).collect();
        let objective = self.lp.evaluate(&x);
        Ok(SolveResult {
            status: Status::Optimal,
            x,
            objective,
            duals: Some(duals),
            reduced_costs: Some(reduced),
            milp: None,
            iterations: self.iterations,
        })
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for (yi, bi) in y.iter_mut().zip(row) {
                    *yi += c * bi;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        let mut d = self.cost[j];
        self.for_column(j, |i, a| d -= y[i] * a);
        d
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_column(j, |i, a| {
            for (k, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[k * m + i] * a;
            }
        });
        alpha
    }

    fn iterate(&mut self) -> Result<Outcome, LpError> {
        let mut streak = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(LpError::CyclingGuard {
                    iterations: self.iterations,
                });
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            let bland = streak >= self.opts.degenerate_streak;
            let y = self.duals();

            // pricing
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.total() {
                let st = self.state[j];
                if st == State::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                let tol = self.opts.opt_tol * (1.0 + self.cost[j].abs());
                let eligible = match st {
                    State::AtLower => d < -tol,
                    State::AtUpper => d > tol,
                    State::Free => d.abs() > tol,
                    State::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    entering = Some((j, d));
                }
            }
            let Some((q, dq)) = entering else {
                return Ok(Outcome::Optimal);
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);

            // ratio test
            let ptol = self.opts.pivot_tol;
            let ftol = self.opts.feas_tol;
            let ratio = |k: usize, relaxed: bool| -> Option<f64> {
                let j = self.basis[k];
                let delta = -dir * alpha[k];
                let slack = if relaxed { ftol } else { 0.0 };
                if delta > ptol && self.hi[j].is_finite() {
                    Some(((self.hi[j] - self.x[j] + slack) / delta).max(0.0))
                } else if delta < -ptol && self.lo[j].is_finite() {
                    Some(((self.x[j] - self.lo[j] + slack) / -delta).max(0.0))
                } else {
                    None
                }
            };
            let flip_len = self.hi[q] - self.lo[q];
            let mut leave: Option<usize> = None;
            let mut step;
            if bland {
                step = f64::INFINITY;
                let mut leave_col = usize::MAX;
                for k in 0..self.m {
                    if let Some(t) = ratio(k, false) {
                        let j = self.basis[k];
                        if t < step - 1e-12 || (t <= step + 1e-12 && j < leave_col) {
                            step = t;
                            leave = Some(k);
                            leave_col = j;
                        }
                    }
                }
            } else {
                let mut bound = f64::INFINITY;
                for k in 0..self.m {
                    if let Some(t) = ratio(k, true) {
                        bound = bound.min(t);
                    }
                }
                step = f64::INFINITY;
                if bound.is_finite() {
                    let mut piv = 0.0;
                    for k in 0..self.m {
                        if let Some(t) = ratio(k, false) {
                            if t <= bound && alpha[k].abs() > piv {
                                piv = alpha[k].abs();
                                leave = Some(k);
                                step = t;
                            }
                        }
                    }
                }
            }
            if flip_len.is_finite() && flip_len <= step {
                step = flip_len;
                leave = None;
            }
            if step.is_infinite() {
                return Ok(Outcome::Unbounded);
            }

            self.iterations += 1;
            if step <= 1e-12 {
                streak += 1;
            } else {
                streak = 0;
            }

            self.x[q] += dir * step;
            for k in 0..self.m {
                if alpha[k] != 0.0 {
                    let j = self.basis[k];
                    self.x[j] -= dir * alpha[k] * step;
                }
            }

            match leave {
                None => {
                    self.state[q] = if dir > 0.0 { State::AtUpper } else { State::AtLower };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some(r) => {
                    let out = self.basis[r];
                    let delta = -dir * alpha[r];
                    if delta > 0.0 {
                        self.state[out] = State::AtUpper;
                        self.x[out] = self.hi[out];
                    } else {
                        self.state[out] = State::AtLower;
                        self.x[out] = self.lo[out];
                    }
                    if self.lo[out] == f64::NEG_INFINITY && self.hi[out] == f64::INFINITY {
                        self.state[out] = State::Free;
                    }
                    self.state[q] = State::Basic;
                    self.basis[r] = q;
                    self.pivot(r, &alpha);
                    self.since_refactor += 1;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let inv = 1.0 / alpha[r];
        for v in &mut self.binv[r * m..(r + 1) * m] {
            *v *= inv;
        }
        let prow: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
        for k in 0..m {
            if k == r || alpha[k] == 0.0 {
                continue;
            }
            let f = alpha[k];
            let row = &mut self.binv[k * m..(k + 1) * m];
            for (v, p) in row.iter_mut().zip(&prow) {
                *v -= f * p;
            }
        }
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // dense B, then Gauss-Jordan with partial pivoting on [B | I]
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.for_column(j, |i, v| a[i * m + k] = v);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut p = c;
            let mut best = a[c * m + c].abs();
            for r in c + 1..m {
                let v = a[r * m + c].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < 1e-11 {
                return Err(LpError::SingularBasis {
                    row: c,
                    name: self.lp.rows[c].name.clone(),
                });
            }
            if p != c {
                for col in 0..m {
                    a.swap(p * m + col, c * m + col);
                    inv.swap(p * m + col, c * m + col);
                }
            }
            let d = 1.0 / a[c * m + c];
            for col in 0..m {
                a[c * m + col] *= d;
                inv[c * m + col] *= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for col in 0..m {
                    a[r * m + col] -= f * a[c * m + col];
                    inv[r * m + col] -= f * inv[c * m + col];
                }
            }
        }
        // `inv` is B^{-1} with rows indexed by basis position
        self.binv = inv;

        let mut rhs = self.b.clone();
        for j in 0..self.total() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_column(j, |i, v| rhs[i] -= v * xj);
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.basis[k]] = v;
        }
        Ok(())
    }
}

enum Outcome {
    Optimal,
    Unbounded,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpmilp::{LinearProgram, Objective, Sense, Status};

    #[test]
    fn single_constraint_max() {
        let mut lp = LinearProgram::new(Objective::Maximize);
        let x = lp.continuous("x", 0.0, f64::INFINITY, 1.0);
        let r = lp.add_row("cap", [(x, 1.0)], Sense::Le, 5.0);
        let res = solve_lp(&lp).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.value(x) - 5.0).abs() < 1e-9);
        assert!((res.dual(r) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_generator_dispatch() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        let a = lp.continuous("a", 0.0, 50.0, 10.0);
        let b = lp.continuous("b", 0.0, 100.0, 30.0);
        let bal = lp.add_row("balance", [(a, 1.0), (b, 1.0)], Sense::Eq, 80.0);
        let res = solve_lp(&lp).unwrap();
        assert!((res.value(a) - 50.0).abs() < 1e-9);
        assert!((res.value(b) - 30.0).abs() < 1e-9);
        assert!((res.objective - 1400.0).abs() < 1e-9);
        assert!((res.dual(bal) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn empty_feasible_set() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        let x = lp.continuous("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_row("le", [(x, 1.0)], Sense::Le, 1.0);
        lp.add_row("ge", [(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new(Objective::Maximize);
        let x = lp.continuous("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.continuous("y", 0.0, f64::INFINITY, 0.0);
        lp.add_row("r", [(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn no_rows_picks_bounds() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        let x = lp.continuous("x", -2.0, 3.0, 1.0);
        let y = lp.continuous("y", -2.0, 3.0, -1.0);
        let res = solve_lp(&lp).unwrap();
        assert_eq!(res.value(x), -2.0);
        assert_eq!(res.value(y), 3.0);
    }

    #[test]
    fn rejects_binaries() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        lp.binary("u", 1.0);
        assert_eq!(solve_lp(&lp), Err(LpError::IntegralityInLp(1)));
    }

    #[test]
    fn free_variables_and_ge_rows() {
        // min x + y, x - y = 1, x + y >= 3 with free x, y
        let mut lp = LinearProgram::new(Objective::Minimize);
        let x = lp.continuous("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = lp.continuous("y", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let e = lp.add_row("e", [(x, 1.0), (y, -1.0)], Sense::Eq, 1.0);
        let g = lp.add_row("g", [(x, 1.0), (y, 1.0)], Sense::Ge, 3.0);
        let res = solve_lp(&lp).unwrap();
        assert!((res.value(x) - 2.0).abs() < 1e-9);
        assert!((res.value(y) - 1.0).abs() < 1e-9);
        assert!(res.dual(e).abs() < 1e-9);
        assert!((res.dual(g) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut lp = LinearProgram::new(Objective::Maximize);
        let x = lp.continuous("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.continuous("y", 0.0, f64::INFINITY, 1.0);
        lp.add_row("a", [(x, 1.0), (y, 2.0)], Sense::Le, 4.0);
        lp.add_row("b", [(x, 3.0), (y, 1.0)], Sense::Le, 6.0);
        let opts = SimplexOptions {
            max_iterations: 1,
            ..SimplexOptions::default()
        };
        assert_eq!(
            solve_lp_with(&lp, &opts),
            Err(LpError::CyclingGuard { iterations: 1 })
        );
    }
}
