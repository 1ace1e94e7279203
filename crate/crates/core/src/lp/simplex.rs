//! Bounded-variable revised simplex with a composite phase 1, devex pricing,
//! Bland's rule under degeneracy, and power-of-two equilibration.
//!
//! The basis inverse is kept as a dense LU factorization plus a product-form
//! eta file, refactored periodically. Exact primal and dual solutions are
//! required by the cut-generation layers, so tolerances are tight (1e-9 on
//! scaled data) and every pivot is deterministic: ties break by pivot
//! magnitude first, then smallest index.

use super::problem::{LpError, LpProblem, LpSolution, LpStatus, RowSense, Sense};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const PIVOT_GOOD: f64 = 1e-8;
const DEGEN_STEP: f64 = 1e-10;
const ETA_LIMIT: usize = 64;
const DEGEN_STREAK_LIMIT: usize = 40;
const DEVEX_RESET: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VStat {
    Basic,
    AtLo,
    AtUp,
    FreeZero,
}

struct DenseLu {
    m: usize,
    /// Combined L (strictly lower, unit diagonal) and U (upper) factors, row-major.
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    fn factor(m: usize, cols: &[&[(usize, f64)]]) -> Result<Self, LpError> {
        let mut a = vec![0.0; m * m];
        for (j, col) in cols.iter().enumerate() {
            for &(i, v) in *col {
                a[i * m + j] = v;
            }
        }
        let mut piv = vec![0usize; m];
        for k in 0..m {
            let mut p = k;
            let mut best = a[k * m + k].abs();
            for i in (k + 1)..m {
                let v = a[i * m + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-13 {
                return Err(LpError::NumericalFailure(format!(
                    "singular basis at elimination step {k}"
                )));
            }
            piv[k] = p;
            if p != k {
                for j in 0..m {
                    a.swap(k * m + j, p * m + j);
                }
            }
            let diag = a[k * m + k];
            for i in (k + 1)..m {
                let mult = a[i * m + k] / diag;
                if mult == 0.0 {
                    continue;
                }
                a[i * m + k] = mult;
                for j in (k + 1)..m {
                    a[i * m + j] -= mult * a[k * m + j];
                }
            }
        }
        Ok(Self { m, a, piv })
    }

    /// Solves B z = v in place.
    fn ftran(&self, v: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            v.swap(k, self.piv[k]);
        }
        for k in 0..m {
            let vk = v[k];
            if vk == 0.0 {
                continue;
            }
            for i in (k + 1)..m {
                let l = self.a[i * m + k];
                if l != 0.0 {
                    v[i] -= l * vk;
                }
            }
        }
        for k in (0..m).rev() {
            let mut acc = v[k];
            for j in (k + 1)..m {
                let u = self.a[k * m + j];
                if u != 0.0 {
                    acc -= u * v[j];
                }
            }
            v[k] = acc / self.a[k * m + k];
        }
    }

    /// Solves B' z = v in place.
    fn btran(&self, v: &mut [f64]) {
        let m = self.m;
        // U' w = v (forward substitution over columns of U)
        for k in 0..m {
            let mut acc = v[k];
            for j in 0..k {
                let u = self.a[j * m + k];
                if u != 0.0 {
                    acc -= u * v[j];
                }
            }
            v[k] = acc / self.a[k * m + k];
        }
        // L' u = w (backward substitution)
        for k in (0..m).rev() {
            let mut acc = v[k];
            for j in (k + 1)..m {
                let l = self.a[j * m + k];
                if l != 0.0 {
                    acc -= l * v[j];
                }
            }
            v[k] = acc;
        }
        for k in (0..m).rev() {
            v.swap(k, self.piv[k]);
        }
    }
}

struct Factor {
    m: usize,
    lu: Option<DenseLu>,
    etas: Vec<(usize, Vec<f64>)>,
}

impl Factor {
    fn identity(m: usize) -> Self {
        Self {
            m,
            lu: None,
            etas: Vec::new(),
        }
    }

    fn ftran(&self, v: &mut [f64]) {
        if let Some(lu) = &self.lu {
            lu.ftran(v);
        }
        for (r, d) in &self.etas {
            let zr = v[*r] / d[*r];
            if zr != 0.0 {
                for i in 0..self.m {
                    v[i] -= d[i] * zr;
                }
                v[*r] = zr;
            } else {
                v[*r] = 0.0;
            }
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for (r, d) in self.etas.iter().rev() {
            let mut acc = v[*r];
            for i in 0..self.m {
                if i != *r {
                    acc -= d[i] * v[i];
                }
            }
            v[*r] = acc / d[*r];
        }
        if let Some(lu) = &self.lu {
            lu.btran(v);
        }
    }

    fn push_eta(&mut self, r: usize, d: Vec<f64>) {
        self.etas.push((r, d));
    }

    fn needs_refactor(&self) -> bool {
        self.etas.len() >= ETA_LIMIT
    }
}

struct Work {
    m: usize,
    n: usize,
    n_total: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    vstat: Vec<VStat>,
    /// Values of nonbasic variables (their active bound, or 0 for free).
    xn: Vec<f64>,
    /// Values of basic variables, aligned with `basis`.
    xb: Vec<f64>,
    factor: Factor,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    devex: Vec<f64>,
    bland: bool,
    degen_streak: usize,
    pivots: usize,
    p1_pivots: usize,
    pivot_cap: usize,
    banned: Vec<bool>,
}

enum PhaseOutcome {
    Done,
    Unbounded,
    PivotLimit,
}

pub fn solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let m = problem.nrows();
    let n = problem.ncols();
    let minimize = problem.sense == Sense::Min;

    let (row_scale, col_scale) = equilibrate(problem);

    // Scaled working columns: structural then one slack per row.
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n + m);
    for j in 0..n {
        let col = problem
            .mat
            .col(j)
            .iter()
            .map(|&(i, v)| (i, v * row_scale[i] * col_scale[j]))
            .collect();
        cols.push(col);
    }
    for i in 0..m {
        cols.push(vec![(i, 1.0)]);
    }

    let mut cost = vec![0.0; n + m];
    for j in 0..n {
        let c = problem.cost[j] * col_scale[j];
        cost[j] = if minimize { c } else { -c };
    }

    let mut lo = vec![0.0; n + m];
    let mut hi = vec![0.0; n + m];
    for j in 0..n {
        lo[j] = problem.lower[j] / col_scale[j];
        hi[j] = problem.upper[j] / col_scale[j];
    }
    for i in 0..m {
        let (l, h) = match problem.row_senses[i] {
            RowSense::Le => (0.0, f64::INFINITY),
            RowSense::Ge => (f64::NEG_INFINITY, 0.0),
            RowSense::Eq => (0.0, 0.0),
        };
        lo[n + i] = l;
        hi[n + i] = h;
    }

    let rhs: Vec<f64> = (0..m).map(|i| problem.rhs[i] * row_scale[i]).collect();

    let mut vstat = vec![VStat::Basic; n + m];
    let mut xn = vec![0.0; n + m];
    for (j, stat) in vstat.iter_mut().enumerate().take(n) {
        if lo[j].is_finite() {
            *stat = VStat::AtLo;
            xn[j] = lo[j];
        } else if hi[j].is_finite() {
            *stat = VStat::AtUp;
            xn[j] = hi[j];
        } else {
            *stat = VStat::FreeZero;
            xn[j] = 0.0;
        }
    }
    let basis: Vec<usize> = (n..n + m).collect();

    let mut w = Work {
        m,
        n,
        n_total: n + m,
        cols,
        cost,
        lo,
        hi,
        rhs,
        basis,
        vstat,
        xn,
        xb: Vec::new(),
        factor: Factor::identity(m),
        row_scale,
        col_scale,
        devex: vec![1.0; n + m],
        bland: false,
        degen_streak: 0,
        pivots: 0,
        p1_pivots: 0,
        pivot_cap: 20_000 + 100 * (n + m),
        banned: vec![false; n + m],
    };
    w.recompute_basics();

    // Phase 1: drive bound violations of the slack basis to zero.
    if w.total_infeasibility() > FEAS_TOL {
        match w.run_phase(true)? {
            PhaseOutcome::Done => {}
            PhaseOutcome::Unbounded => {
                return Err(LpError::NumericalFailure(
                    "phase-1 objective unbounded; scaling or data error".into(),
                ))
            }
            PhaseOutcome::PivotLimit => {
                return Err(LpError::NumericalFailure(
                    "cycling safeguard exhausted in phase 1".into(),
                ))
            }
        }
        if w.total_infeasibility() > FEAS_TOL * (1.0 + w.m as f64).sqrt() * 10.0 {
            return Ok(LpSolution::infeasible());
        }
        w.clamp_small_violations();
    }

    // Phase 2: optimize the true objective from the feasible basis.
    w.p1_pivots = w.pivots;
    w.devex.iter_mut().for_each(|x| *x = 1.0);
    w.bland = false;
    w.degen_streak = 0;
    match w.run_phase(false)? {
        PhaseOutcome::Done => {}
        PhaseOutcome::Unbounded => return Ok(LpSolution::unbounded()),
        PhaseOutcome::PivotLimit => {
            return Err(LpError::NumericalFailure(
                "cycling safeguard exhausted in phase 2".into(),
            ))
        }
    }

    if std::env::var("MSPDUALS_LP_STATS").is_ok() && w.pivots > 200 {
        eprintln!(
            "lp stats: m={m} n={n} pivots={} p1={} bland={} degen_streak={}",
            w.pivots, w.p1_pivots, w.bland, w.degen_streak
        );
    }
    Ok(w.extract(problem, minimize))
}

/// Row/column max-abs equilibration rounded to powers of two, so scaling is
/// exact in floating point and duals unscale without rounding noise.
fn equilibrate(problem: &LpProblem) -> (Vec<f64>, Vec<f64>) {
    let m = problem.nrows();
    let n = problem.ncols();
    let mut row_scale = vec![1.0_f64; m];
    let mut col_scale = vec![1.0_f64; n];
    for _ in 0..2 {
        let mut row_max = vec![0.0_f64; m];
        for j in 0..n {
            for &(i, v) in problem.mat.col(j) {
                let a = (v * row_scale[i] * col_scale[j]).abs();
                row_max[i] = row_max[i].max(a);
            }
        }
        for i in 0..m {
            if row_max[i] > 0.0 {
                row_scale[i] *= pow2_inverse(row_max[i]);
            }
        }
        let mut col_max = vec![0.0_f64; n];
        for j in 0..n {
            for &(i, v) in problem.mat.col(j) {
                let a = (v * row_scale[i] * col_scale[j]).abs();
                col_max[j] = col_max[j].max(a);
            }
        }
        for j in 0..n {
            if col_max[j] > 0.0 {
                col_scale[j] *= pow2_inverse(col_max[j]);
            }
        }
    }
    (row_scale, col_scale)
}

/// Largest power of two p with p*x in [0.5, 1).
fn pow2_inverse(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    let e = x.log2().ceil() as i32;
    (2.0_f64).powi(-e)
}

impl Work {
    fn recompute_basics(&mut self) {
        let mut v = self.rhs.clone();
        for j in 0..self.n_total {
            if self.vstat[j] != VStat::Basic {
                let xj = self.xn[j];
                if xj != 0.0 {
                    for &(i, a) in &self.cols[j] {
                        v[i] -= a * xj;
                    }
                }
            }
        }
        self.factor.ftran(&mut v);
        self.xb = v;
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let col_refs: Vec<&[(usize, f64)]> =
            self.basis.iter().map(|&j| self.cols[j].as_slice()).collect();
        let lu = DenseLu::factor(self.m, &col_refs)?;
        self.factor = Factor {
            m: self.m,
            lu: Some(lu),
            etas: Vec::new(),
        };
        self.recompute_basics();
        Ok(())
    }

    fn total_infeasibility(&self) -> f64 {
        let mut total = 0.0;
        for (pos, &j) in self.basis.iter().enumerate() {
            let v = self.xb[pos];
            if v < self.lo[j] {
                total += self.lo[j] - v;
            } else if v > self.hi[j] {
                total += v - self.hi[j];
            }
        }
        total
    }

    fn clamp_small_violations(&mut self) {
        for (pos, &j) in self.basis.iter().enumerate() {
            let v = self.xb[pos];
            if v < self.lo[j] && self.lo[j] - v < 1e-7 {
                self.xb[pos] = self.lo[j];
            } else if v > self.hi[j] && v - self.hi[j] < 1e-7 {
                self.xb[pos] = self.hi[j];
            }
        }
    }

    fn phase_costs_basic(&self, phase1: bool) -> Vec<f64> {
        let mut cb = vec![0.0; self.m];
        for (pos, &j) in self.basis.iter().enumerate() {
            cb[pos] = if phase1 {
                let v = self.xb[pos];
                if v < self.lo[j] - FEAS_TOL {
                    -1.0
                } else if v > self.hi[j] + FEAS_TOL {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[j]
            };
        }
        cb
    }

    fn run_phase(&mut self, phase1: bool) -> Result<PhaseOutcome, LpError> {
        loop {
            if self.pivots >= self.pivot_cap {
                return Ok(PhaseOutcome::PivotLimit);
            }
            if phase1 && self.total_infeasibility() <= FEAS_TOL {
                return Ok(PhaseOutcome::Done);
            }
            if self.factor.needs_refactor() {
                self.refactor()?;
            }

            let mut y = self.phase_costs_basic(phase1);
            self.factor.btran(&mut y);

            let Some((q, dq, sig)) = self.price(&y, phase1) else {
                if self.banned.iter().any(|&b| b) {
                    // A column was sidelined on a stale factorization; rebuild
                    // and give it one more chance before declaring optimality.
                    self.refactor()?;
                    self.banned.iter_mut().for_each(|b| *b = false);
                    let mut y2 = self.phase_costs_basic(phase1);
                    self.factor.btran(&mut y2);
                    if self.price(&y2, phase1).is_some() {
                        continue;
                    }
                }
                return Ok(PhaseOutcome::Done);
            };

            // Direction of basics per unit increase of t: xb -= sig * t * dvec.
            let mut dvec = vec![0.0; self.m];
            for &(i, a) in &self.cols[q] {
                dvec[i] = a;
            }
            self.factor.ftran(&mut dvec);

            match self.ratio_test(q, sig, &dvec, phase1, dq) {
                RatioResult::Unbounded => return Ok(PhaseOutcome::Unbounded),
                RatioResult::BoundFlip(t) => {
                    let dir = sig * t;
                    for i in 0..self.m {
                        if dvec[i] != 0.0 {
                            self.xb[i] -= dvec[i] * dir;
                        }
                    }
                    self.vstat[q] = if sig > 0.0 { VStat::AtUp } else { VStat::AtLo };
                    self.xn[q] = if sig > 0.0 { self.hi[q] } else { self.lo[q] };
                    self.note_step(t);
                    self.pivots += 1;
                    self.banned.iter_mut().for_each(|b| *b = false);
                }
                RatioResult::Pivot { row: r, t, target } => {
                    let pivot = dvec[r];
                    if pivot.abs() < PIVOT_GOOD && !self.factor.etas.is_empty() {
                        // Suspicious pivot on a stale factorization; rebuild and retry.
                        self.refactor()?;
                        continue;
                    }
                    if pivot.abs() < PIVOT_TOL {
                        self.banned[q] = true;
                        continue;
                    }
                    let dir = sig * t;
                    for i in 0..self.m {
                        if dvec[i] != 0.0 {
                            self.xb[i] -= dvec[i] * dir;
                        }
                    }
                    let entering_value = self.xn[q] + dir;
                    let leaving = self.basis[r];
                    self.vstat[leaving] = match target {
                        BoundTarget::Lower => VStat::AtLo,
                        BoundTarget::Upper => VStat::AtUp,
                    };
                    self.xn[leaving] = match target {
                        BoundTarget::Lower => self.lo[leaving],
                        BoundTarget::Upper => self.hi[leaving],
                    };
                    self.update_devex(q, r, &dvec, dq);
                    self.basis[r] = q;
                    self.vstat[q] = VStat::Basic;
                    self.xb[r] = entering_value;
                    self.factor.push_eta(r, dvec);
                    self.note_step(t);
                    self.pivots += 1;
                    self.banned.iter_mut().for_each(|b| *b = false);
                }
            }
        }
    }

    fn note_step(&mut self, t: f64) {
        if t <= DEGEN_STEP {
            self.degen_streak += 1;
            if self.degen_streak > DEGEN_STREAK_LIMIT {
                self.bland = true;
            }
        } else {
            self.degen_streak = 0;
            self.bland = false;
        }
    }

    /// Chooses the entering column. Returns (column, reduced cost, direction).
    fn price(&self, y: &[f64], phase1: bool) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n_total {
            let stat = self.vstat[j];
            if stat == VStat::Basic || self.banned[j] {
                continue;
            }
            let cj = if phase1 { 0.0 } else { self.cost[j] };
            let mut d = cj;
            for &(i, a) in &self.cols[j] {
                d -= a * y[i];
            }
            let sig = match stat {
                VStat::AtLo => {
                    if d < -OPT_TOL {
                        1.0
                    } else {
                        continue;
                    }
                }
                VStat::AtUp => {
                    if d > OPT_TOL {
                        -1.0
                    } else {
                        continue;
                    }
                }
                VStat::FreeZero => {
                    if d < -OPT_TOL {
                        1.0
                    } else if d > OPT_TOL {
                        -1.0
                    } else {
                        continue;
                    }
                }
                VStat::Basic => unreachable!(),
            };
            if self.bland {
                // Smallest eligible index.
                return Some((j, d, sig));
            }
            let score = d * d / self.devex[j];
            if score > best_score {
                best_score = score;
                best = Some((j, d, sig));
            }
        }
        best
    }

    fn ratio_test(&self, q: usize, sig: f64, dvec: &[f64], phase1: bool, dq: f64) -> RatioResult {
        if phase1 {
            return self.ratio_test_phase1(q, sig, dvec, dq);
        }
        let mut t_min = f64::INFINITY;
        let mut row: Option<(usize, BoundTarget, f64)> = None; // (row, target, |pivot|)
        for pos in 0..self.m {
            let d = dvec[pos];
            if d.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[pos];
            let v = self.xb[pos];
            let delta = -sig * d; // change of basic per unit t
            let (t_cand, target) = if delta > 0.0 {
                if self.hi[j].is_finite() {
                    ((self.hi[j] - v) / delta, BoundTarget::Upper)
                } else {
                    continue;
                }
            } else if self.lo[j].is_finite() {
                ((self.lo[j] - v) / delta, BoundTarget::Lower)
            } else {
                continue;
            };
            let t_cand = t_cand.max(0.0);
            let better = if t_cand < t_min * (1.0 - 1e-12) - 1e-15 {
                true
            } else if t_cand <= t_min * (1.0 + 1e-12) + 1e-15 {
                match &row {
                    Some((r_pos, _, r_piv)) => {
                        if self.bland {
                            self.basis[pos] < self.basis[*r_pos]
                        } else {
                            d.abs() > *r_piv
                        }
                    }
                    None => true,
                }
            } else {
                false
            };
            if better {
                t_min = t_cand.min(t_min);
                row = Some((pos, target, d.abs()));
            }
        }

        let t_flip = if self.lo[q].is_finite() && self.hi[q].is_finite() {
            self.hi[q] - self.lo[q]
        } else {
            f64::INFINITY
        };

        if t_flip <= t_min {
            if t_flip.is_infinite() {
                return RatioResult::Unbounded;
            }
            return RatioResult::BoundFlip(t_flip);
        }
        match row {
            Some((r, target, _)) => RatioResult::Pivot {
                row: r,
                t: t_min,
                target,
            },
            None => RatioResult::Unbounded,
        }
    }

    /// Composite phase-1 ratio test with long steps over *violated* bounds:
    /// the total infeasibility is piecewise linear in the step, so walk the
    /// breakpoints where infeasible basics reach their violated bound
    /// (repairing them and flattening the slope) and stop either when the
    /// aggregate slope turns nonnegative or at the first bound of a feasible
    /// basic, which blocks as in phase 2. One pivot can repair many violated
    /// rows without breaking feasible ones.
    fn ratio_test_phase1(&self, q: usize, sig: f64, dvec: &[f64], dq: f64) -> RatioResult {
        // (t, slope increase (0 marks a hard block), row, target, |pivot|)
        let mut events: Vec<(f64, f64, usize, BoundTarget, f64)> = Vec::new();
        for pos in 0..self.m {
            let d = dvec[pos];
            if d.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[pos];
            let v = self.xb[pos];
            let delta = -sig * d;
            let (t_cand, target, inc) = if v < self.lo[j] - FEAS_TOL {
                if delta > 0.0 {
                    // repairing; the far bound still blocks hard
                    if self.hi[j].is_finite() {
                        events.push((
                            ((self.hi[j] - v) / delta).max(0.0),
                            0.0,
                            pos,
                            BoundTarget::Upper,
                            d.abs(),
                        ));
                    }
                    ((self.lo[j] - v) / delta, BoundTarget::Lower, delta.abs())
                } else {
                    continue; // moves deeper; its worsening is in the slope already
                }
            } else if v > self.hi[j] + FEAS_TOL {
                if delta < 0.0 {
                    if self.lo[j].is_finite() {
                        events.push((
                            ((self.lo[j] - v) / delta).max(0.0),
                            0.0,
                            pos,
                            BoundTarget::Lower,
                            d.abs(),
                        ));
                    }
                    ((self.hi[j] - v) / delta, BoundTarget::Upper, delta.abs())
                } else {
                    continue;
                }
            } else if delta > 0.0 {
                if self.hi[j].is_finite() {
                    ((self.hi[j] - v) / delta, BoundTarget::Upper, 0.0)
                } else {
                    continue;
                }
            } else if self.lo[j].is_finite() {
                ((self.lo[j] - v) / delta, BoundTarget::Lower, 0.0)
            } else {
                continue;
            };
            events.push((t_cand.max(0.0), inc, pos, target, d.abs()));
        }
        // Deterministic walk order: by step; hard blocks before repairs at
        // equal steps, then larger pivots.
        events.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(b.4.total_cmp(&a.4))
                .then(a.2.cmp(&b.2))
        });

        let t_flip = if self.lo[q].is_finite() && self.hi[q].is_finite() {
            self.hi[q] - self.lo[q]
        } else {
            f64::INFINITY
        };

        if self.bland {
            // Anti-cycling mode: classic single-breakpoint rule, ties by
            // smallest leaving index.
            let first = events.iter().min_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(self.basis[a.2].cmp(&self.basis[b.2]))
            });
            return match first {
                Some(&(t, _, pos, target, _)) if t_flip > t => {
                    RatioResult::Pivot { row: pos, t, target }
                }
                _ if t_flip.is_finite() => RatioResult::BoundFlip(t_flip),
                _ => RatioResult::Unbounded,
            };
        }

        // Aggregate infeasibility slope along the improving direction.
        let mut slope = -(sig * dq).abs();
        for &(t, inc, pos, target, _) in &events {
            if t_flip <= t {
                return RatioResult::BoundFlip(t_flip);
            }
            if inc == 0.0 {
                // feasible basic blocks
                return RatioResult::Pivot { row: pos, t, target };
            }
            slope += inc;
            if slope >= -OPT_TOL {
                return RatioResult::Pivot { row: pos, t, target };
            }
        }
        if t_flip.is_finite() {
            return RatioResult::BoundFlip(t_flip);
        }
        RatioResult::Unbounded
    }

    fn update_devex(&mut self, q: usize, r: usize, dvec: &[f64], _dq: f64) {
        let alpha_q = dvec[r];
        if alpha_q.abs() < PIVOT_TOL {
            return;
        }
        let wq = self.devex[q].max(1.0);
        // Pivot row of B^{-1}N via btran(e_r).
        let mut rho = vec![0.0; self.m];
        rho[r] = 1.0;
        self.factor.btran(&mut rho);
        let mut max_w = 0.0_f64;
        for j in 0..self.n_total {
            if self.vstat[j] == VStat::Basic || j == q {
                continue;
            }
            let mut alpha_j = 0.0;
            for &(i, a) in &self.cols[j] {
                alpha_j += a * rho[i];
            }
            if alpha_j != 0.0 {
                let cand = (alpha_j / alpha_q) * (alpha_j / alpha_q) * wq;
                if cand > self.devex[j] {
                    self.devex[j] = cand;
                }
            }
            max_w = max_w.max(self.devex[j]);
        }
        let leaving = self.basis[r];
        self.devex[leaving] = (wq / (alpha_q * alpha_q)).max(1.0);
        self.devex[q] = 1.0;
        if max_w > DEVEX_RESET {
            self.devex.iter_mut().for_each(|x| *x = 1.0);
        }
    }

    fn extract(&mut self, problem: &LpProblem, minimize: bool) -> LpSolution {
        let n = self.n;
        // Fresh duals from the final basis.
        let mut y = self.phase_costs_basic(false);
        self.factor.btran(&mut y);

        let mut x = vec![0.0; n];
        for j in 0..n {
            if self.vstat[j] != VStat::Basic {
                x[j] = self.xn[j] * self.col_scale[j];
            }
        }
        for (pos, &j) in self.basis.iter().enumerate() {
            if j < n {
                x[j] = self.xb[pos] * self.col_scale[j];
            }
        }

        let mut duals = vec![0.0; self.m];
        for i in 0..self.m {
            let v = y[i] * self.row_scale[i];
            duals[i] = if minimize { v } else { -v };
        }

        let mut reduced = vec![0.0; n];
        let mut zero_rc = 0usize;
        for j in 0..n {
            let mut d = self.cost[j];
            for &(i, a) in &self.cols[j] {
                d -= a * y[i];
            }
            if self.vstat[j] != VStat::Basic && d.abs() <= OPT_TOL {
                zero_rc += 1;
            }
            let unscaled = d / self.col_scale[j];
            reduced[j] = if minimize { unscaled } else { -unscaled };
        }

        let objective: f64 = (0..n).map(|j| problem.cost[j] * x[j]).sum();

        LpSolution {
            status: LpStatus::Optimal,
            primal: x,
            duals,
            reduced_costs: reduced,
            objective,
            zero_reduced_costs: zero_rc,
        }
    }
}

#[derive(Clone, Copy)]
enum BoundTarget {
    Lower,
    Upper,
}

enum RatioResult {
    Unbounded,
    BoundFlip(f64),
    Pivot {
        row: usize,
        t: f64,
        target: BoundTarget,
    },
}
