//! Dense convex QP solver (primal active set).
//!
//! Solves
//!
//! ```text
//! min ½ zᵀHz + gᵀz   s.t.  lb ≤ z ≤ ub,  lbA ≤ A z ≤ ubA
//! ```
//!
//! Rows with `lbA = ubA` are equalities. Bounds in the working set are
//! handled by fixing variables; general working rows enter through a Schur
//! complement on the Cholesky factor of the free Hessian block. A feasible
//! starting point is found with an elastic phase 1 when the warm start
//! violates a general row.
//!
//! Multiplier convention: `H z + g − μ_b − Aᵀ μ_A = 0`, with `μ ≥ 0` on active
//! lower bounds and `μ ≤ 0` on active upper bounds.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lower bound above upper bound at index {0}")]
    Bounds(usize),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("singular KKT system")]
    Singular,
    #[error("dump format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lba: DVector<f64>,
    pub uba: DVector<f64>,
}

impl QpProblem {
    /// Box-constrained problem; use `f64::INFINITY` for absent bounds.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        let n = g.len();
        Self { h, g, lb, ub, a: DMatrix::zeros(0, n), lba: DVector::zeros(0), uba: DVector::zeros(0) }
    }

    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self::new(h, g, DVector::from_element(n, f64::NEG_INFINITY), DVector::from_element(n, f64::INFINITY))
    }

    pub fn with_rows(mut self, a: DMatrix<f64>, lba: DVector<f64>, uba: DVector<f64>) -> Self {
        self.a = a;
        self.lba = lba;
        self.uba = uba;
        self
    }

    pub fn with_equalities(self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let b2 = b.clone();
        self.with_rows(a, b, b2)
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        let m = self.rows();
        if self.h.shape() != (n, n) || self.lb.len() != n || self.ub.len() != n {
            return Err(QpError::Dimension(format!("n = {n}")));
        }
        if self.a.ncols() != n || self.lba.len() != m || self.uba.len() != m {
            return Err(QpError::Dimension(format!("rows = {m}")));
        }
        for i in 0..n {
            if self.lb[i] > self.ub[i] {
                return Err(QpError::Bounds(i));
            }
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !finite(self.h.as_slice()) {
            return Err(QpError::NonFinite("H"));
        }
        if !finite(self.g.as_slice()) {
            return Err(QpError::NonFinite("g"));
        }
        if !finite(self.a.as_slice()) {
            return Err(QpError::NonFinite("A"));
        }
        if self.lb.iter().chain(&self.ub).chain(&self.lba).chain(&self.uba).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("bounds"));
        }
        Ok(())
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    /// Largest violation of the box and row constraints.
    pub fn infeasibility(&self, z: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            worst = worst.max(self.lb[i] - z[i]).max(z[i] - self.ub[i]);
        }
        if self.rows() > 0 {
            let az = &self.a * z;
            for r in 0..self.rows() {
                worst = worst.max(self.lba[r] - az[r]).max(az[r] - self.uba[r]);
            }
        }
        worst
    }

    /// Plain-text dump: a header line `qp <n> <m>` followed by labelled
    /// blocks `H`, `g`, `lb`, `ub`, `A`, `lbA`, `ubA`, one matrix row per line,
    /// whitespace-separated, infinities written as `inf`/`-inf`.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<(), QpError> {
        let mut s = String::new();
        let _ = writeln!(s, "qp {} {}", self.dim(), self.rows());
        let mat = |s: &mut String, name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(s, "{name}");
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        };
        let vec = |s: &mut String, name: &str, v: &DVector<f64>| {
            let _ = writeln!(s, "{name}");
            let row: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        };
        mat(&mut s, "H", &self.h);
        vec(&mut s, "g", &self.g);
        vec(&mut s, "lb", &self.lb);
        vec(&mut s, "ub", &self.ub);
        mat(&mut s, "A", &self.a);
        vec(&mut s, "lbA", &self.lba);
        vec(&mut s, "ubA", &self.uba);
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, QpError> {
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
        let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
        let header = it.next().ok_or_else(|| QpError::Format("empty input".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "qp" {
            return Err(QpError::Format(format!("bad header '{header}'")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| QpError::Format(format!("bad size '{s}'")));
        let n = parse_usize(parts[1])?;
        let m = parse_usize(parts[2])?;
        let mut nums = |expect: &str, rows: usize, cols: usize, one_line: bool| -> Result<DMatrix<f64>, QpError> {
            let label = it.next().ok_or_else(|| QpError::Format(format!("missing block {expect}")))?;
            if label != expect {
                return Err(QpError::Format(format!("expected block {expect}, found '{label}'")));
            }
            let mut data = DMatrix::zeros(rows, cols);
            let lines_needed = match (rows * cols, one_line) {
                (0, _) => 0,
                (_, true) => 1,
                (_, false) => rows,
            };
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..lines_needed {
                let line = it.next().ok_or_else(|| QpError::Format(format!("short block {expect}")))?;
                for tok in line.split_whitespace() {
                    values.push(tok.parse::<f64>().map_err(|_| QpError::Format(format!("bad number '{tok}'")))?);
                }
            }
            if values.len() != rows * cols {
                return Err(QpError::Format(format!("block {expect}: expected {} values, got {}", rows * cols, values.len())));
            }
            for r in 0..rows {
                for c in 0..cols {
                    data[(r, c)] = values[r * cols + c];
                }
            }
            Ok(data)
        };
        let h = nums("H", n, n, false)?;
        let g = nums("g", n, 1, true)?.column(0).into_owned();
        let lb = nums("lb", n, 1, true)?.column(0).into_owned();
        let ub = nums("ub", n, 1, true)?.column(0).into_owned();
        let a = nums("A", m, n, false)?;
        let lba = nums("lbA", m, 1, true)?.column(0).into_owned();
        let uba = nums("ubA", m, 1, true)?.column(0).into_owned();
        let p = QpProblem { h, g, lb, ub, a, lba, uba };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub bound_multipliers: DVector<f64>,
    pub row_multipliers: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Primal feasibility tolerance (absolute, scaled by `1 + |bound|`).
    pub feas_tol: f64,
    /// Relative Hessian regularization used when the free block is not
    /// positive definite.
    pub regularization: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iter: 200, feas_tol: 1e-9, regularization: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
    Equal,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Lower => 1.0,
            Side::Upper => -1.0,
            Side::Equal => 0.0,
        }
    }
}

/// Cholesky factor of the free Hessian block, plus the transformed working
/// rows `V = L⁻¹ A_Fᵀ`.
///
/// Regularization grows by 100x per retry up to this many retries.
const MAX_REG_TRIES: usize = 12;

const BLAND_AFTER: usize = 3;

struct Factor {
    free: Vec<usize>,
    l: DMatrix<f64>,
    v_cols: Vec<DVector<f64>>,
    /// Orthonormal basis of `span(V)`, for dependence tests.
    q_cols: Vec<DVector<f64>>,
}

impl Factor {
    fn new(h: &DMatrix<f64>, free: Vec<usize>, reg: f64) -> Option<Self> {
        let nf = free.len();
        let mut hf = DMatrix::zeros(nf, nf);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                hf[(a, b)] = 0.5 * (h[(i, j)] + h[(j, i)]);
            }
        }
        let scale = (0..nf).map(|i| hf[(i, i)].abs()).fold(1.0f64, f64::max);
        if !scale.is_finite() {
            return None;
        }
        let mut eps = 0.0;
        for _ in 0..=MAX_REG_TRIES {
            let mut m = hf.clone();
            for i in 0..nf {
                m[(i, i)] += eps;
            }
            if let Some(ch) = m.cholesky() {
                return Some(Self { free, l: ch.unpack(), v_cols: Vec::new(), q_cols: Vec::new() });
            }
            eps = if eps == 0.0 { reg * scale } else { eps * 100.0 };
        }
        None
    }

    fn restrict(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| x[i]))
    }

    fn restrict_row(&self, a: &DMatrix<f64>, r: usize) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| a[(r, i)]))
    }

    fn lsolve(&self, x: &mut DVector<f64>) {
        self.l.solve_lower_triangular_mut(x);
    }

    fn ltsolve(&self, x: &mut DVector<f64>) {
        self.l.tr_solve_lower_triangular_mut(x);
    }

    /// Appends `v = L⁻¹ a_F` unless it lies in the span of the current columns.
    fn try_push(&mut self, v: DVector<f64>) -> bool {
        let mut q = v.clone();
        for _ in 0..2 {
            for b in &self.q_cols {
                q.axpy(-b.dot(&q), b, 1.0);
            }
        }
        let qn = q.norm();
        if !(qn > 1e-9 * v.norm()) {
            return false;
        }
        self.q_cols.push(q / qn);
        self.v_cols.push(v);
        true
    }

    fn remove(&mut self, k: usize) {
        self.v_cols.remove(k);
        let cols = std::mem::take(&mut self.v_cols);
        self.q_cols.clear();
        for v in cols {
            let pushed = self.try_push(v);
            debug_assert!(pushed);
        }
    }

    fn schur(&self) -> DMatrix<f64> {
        let m = self.v_cols.len();
        let mut s = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let d = self.v_cols[a].dot(&self.v_cols[b]);
                s[(a, b)] = d;
                s[(b, a)] = d;
            }
        }
        s
    }
}

fn solve_spd(s: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if s.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    if let Some(ch) = s.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    s.clone().lu().solve(rhs)
}

struct ActiveSet<'a> {
    p: &'a QpProblem,
    settings: QpSettings,
    fixed: Vec<Option<Side>>,
    rows: Vec<(usize, Side)>,
    in_rows: Vec<bool>,
    /// Rows implied by the working set; skipped by the ratio test until a
    /// constraint leaves the working set.
    implied: Vec<bool>,
}

enum Outcome {
    Optimal { mu_b: DVector<f64>, mu_a: DVector<f64> },
    MaxIter,
}

impl<'a> ActiveSet<'a> {
    fn new(p: &'a QpProblem, settings: QpSettings) -> Self {
        Self {
            p,
            settings,
            fixed: vec![None; p.dim()],
            rows: Vec::new(),
            in_rows: vec![false; p.rows()],
            implied: vec![false; p.rows()],
        }
    }

    fn bound_tol(&self, b: f64) -> f64 {
        self.settings.feas_tol * (1.0 + b.abs())
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.p.dim()).filter(|&i| self.fixed[i].is_none()).collect()
    }

    /// Factors the free block and rebuilds `V`, dropping working rows that
    /// depend on earlier ones. A dependent row is implied by the rest of the
    /// working set, so removing it leaves the feasible steps unchanged.
    fn factor(&mut self) -> Option<Factor> {
        let mut f = Factor::new(&self.p.h, self.free_indices(), self.settings.regularization)?;
        let rows = std::mem::take(&mut self.rows);
        for (r, side) in rows {
            if self.push_row(&mut f, r) {
                self.rows.push((r, side));
            } else {
                self.in_rows[r] = false;
                self.implied[r] = true;
            }
        }
        Some(f)
    }

    fn push_row(&self, f: &mut Factor, r: usize) -> bool {
        let mut v = f.restrict_row(&self.p.a, r);
        if v.norm() <= 1e-10 * self.p.a.row(r).norm().max(1e-300) {
            return false;
        }
        f.lsolve(&mut v);
        f.try_push(v)
    }

    /// Working set from the constraints active at a feasible `z`.
    fn detect(&mut self, z: &mut DVector<f64>) {
        let p = self.p;
        for i in 0..p.dim() {
            if p.lb[i] == p.ub[i] {
                self.fixed[i] = Some(Side::Equal);
                z[i] = p.lb[i];
            } else if p.lb[i].is_finite() && z[i] - p.lb[i] <= self.bound_tol(p.lb[i]) {
                self.fixed[i] = Some(Side::Lower);
                z[i] = p.lb[i];
            } else if p.ub[i].is_finite() && p.ub[i] - z[i] <= self.bound_tol(p.ub[i]) {
                self.fixed[i] = Some(Side::Upper);
                z[i] = p.ub[i];
            }
        }
        if p.rows() == 0 {
            return;
        }
        let az = &p.a * &*z;
        let mut cand: Vec<(usize, Side)> = Vec::new();
        for r in 0..p.rows() {
            if p.lba[r] == p.uba[r] {
                cand.push((r, Side::Equal));
            }
        }
        for r in 0..p.rows() {
            if p.lba[r] == p.uba[r] {
                continue;
            }
            if p.lba[r].is_finite() && (az[r] - p.lba[r]).abs() <= self.bound_tol(p.lba[r]) {
                cand.push((r, Side::Lower));
            } else if p.uba[r].is_finite() && (p.uba[r] - az[r]).abs() <= self.bound_tol(p.uba[r]) {
                cand.push((r, Side::Upper));
            }
        }
        for (r, side) in cand {
            self.rows.push((r, side));
            self.in_rows[r] = true;
        }
    }

    fn run(&mut self, z: &mut DVector<f64>, iterations: &mut usize) -> Outcome {
        let p = self.p;
        let n = p.dim();
        let Some(mut f) = self.factor() else {
            return Outcome::MaxIter;
        };
        let mut at_minimum = false;
        // consecutive zero-length steps; past BLAND_AFTER, drops follow
        // Bland's rule so degenerate vertices cannot cycle
        let mut stalled = 0usize;
        while *iterations < self.settings.max_iter {
            *iterations += 1;
            let grad = &p.h * &*z + &p.g;
            let mut w = f.restrict(&grad);
            f.lsolve(&mut w);
            let mw = f.v_cols.len();
            let lambda = if mw > 0 {
                let s = f.schur();
                // A_W p = b_W − A_W z also removes residual drift on working rows
                let rhs = DVector::from_iterator(
                    mw,
                    f.v_cols.iter().zip(&self.rows).map(|(c, &(r, side))| {
                        let target = if side == Side::Upper { p.uba[r] } else { p.lba[r] };
                        -c.dot(&w) - (target - p.a.row(r).dot(&z.transpose()))
                    }),
                );
                match solve_spd(&s, &rhs) {
                    Some(l) => l,
                    None => {
                        // a working row went dependent; rebuild without it
                        match self.factor() {
                            Some(g) if g.v_cols.len() < mw => f = g,
                            _ => return Outcome::MaxIter,
                        }
                        continue;
                    }
                }
            } else {
                DVector::zeros(0)
            };
            let mut step = w.clone();
            for (k, col) in f.v_cols.iter().enumerate() {
                step += col * lambda[k];
            }
            f.ltsolve(&mut step);
            step.neg_mut();

            let zn = z.amax().max(1.0);
            if !at_minimum && step.amax() > 1e-9 * zn {
                let mut full = DVector::zeros(n);
                for (k, &i) in f.free.iter().enumerate() {
                    full[i] = step[k];
                }
                let (alpha, block) = self.ratio_test(z, &full);
                z.axpy(alpha, &full, 1.0);
                stalled = if alpha == 0.0 { stalled + 1 } else { 0 };
                match block {
                    Some(Block::Bound(i, side)) => {
                        z[i] = if side == Side::Lower { p.lb[i] } else { p.ub[i] };
                        self.fixed[i] = Some(side);
                        f = match self.factor() {
                            Some(f) => f,
                            None => return Outcome::MaxIter,
                        };
                        at_minimum = false;
                    }
                    Some(Block::Row(r, side)) => {
                        if self.push_row(&mut f, r) {
                            self.rows.push((r, side));
                            self.in_rows[r] = true;
                        } else {
                            self.implied[r] = true;
                        }
                        at_minimum = false;
                    }
                    None => at_minimum = true,
                }
                continue;
            }

            // Stationary on the working set: check multiplier signs.
            let mut atl = DVector::zeros(n);
            for (k, &(r, _)) in self.rows.iter().enumerate() {
                atl.axpy(lambda[k], &p.a.row(r).transpose(), 1.0);
            }
            let mut mu_b = DVector::zeros(n);
            let mut mu_a = DVector::zeros(p.rows());
            let gscale = 1.0 + grad.amax();
            let dual_tol = 1e-10 * gscale;
            let bland = stalled >= BLAND_AFTER;
            // key: most negative multiplier, or lowest index under Bland's rule
            let mut worst: Option<(f64, Drop)> = None;
            for i in 0..n {
                if let Some(side) = self.fixed[i] {
                    let mu = grad[i] + atl[i];
                    mu_b[i] = mu;
                    let signed = side.sign() * mu;
                    let key = if bland { i as f64 } else { signed };
                    if side != Side::Equal && signed < -dual_tol && worst.as_ref().is_none_or(|(wv, _)| key < *wv) {
                        worst = Some((key, Drop::Bound(i)));
                    }
                }
            }
            for (k, &(r, side)) in self.rows.iter().enumerate() {
                let mu = -lambda[k];
                mu_a[r] = mu;
                let signed = side.sign() * mu;
                let key = if bland { (n + r) as f64 } else { signed };
                if side != Side::Equal && signed < -dual_tol && worst.as_ref().is_none_or(|(wv, _)| key < *wv) {
                    worst = Some((key, Drop::Row(k)));
                }
            }
            match worst {
                None => return Outcome::Optimal { mu_b, mu_a },
                Some((_, Drop::Bound(i))) => {
                    self.implied.fill(false);
                    self.fixed[i] = None;
                    f = match self.factor() {
                        Some(f) => f,
                        None => return Outcome::MaxIter,
                    };
                }
                Some((_, Drop::Row(k))) => {
                    let (r, _) = self.rows.remove(k);
                    self.in_rows[r] = false;
                    self.implied.fill(false);
                    f.remove(k);
                }
            }
            at_minimum = false;
        }
        Outcome::MaxIter
    }

    fn ratio_test(&self, z: &DVector<f64>, d: &DVector<f64>) -> (f64, Option<Block>) {
        let p = self.p;
        let mut alpha = 1.0;
        let mut block = None;
        let dn = d.amax();
        for i in 0..p.dim() {
            if self.fixed[i].is_some() || d[i] == 0.0 {
                continue;
            }
            if d[i] < -1e-14 * dn && p.lb[i].is_finite() {
                let a = ((p.lb[i] - z[i]) / d[i]).max(0.0);
                if a < alpha {
                    alpha = a;
                    block = Some(Block::Bound(i, Side::Lower));
                }
            } else if d[i] > 1e-14 * dn && p.ub[i].is_finite() {
                let a = ((p.ub[i] - z[i]) / d[i]).max(0.0);
                if a < alpha {
                    alpha = a;
                    block = Some(Block::Bound(i, Side::Upper));
                }
            }
        }
        if p.rows() > 0 {
            let ad = &p.a * d;
            let az = &p.a * z;
            for r in 0..p.rows() {
                if self.in_rows[r] || self.implied[r] {
                    continue;
                }
                let thresh = 1e-12 * p.a.row(r).norm() * dn;
                if ad[r] < -thresh && p.lba[r].is_finite() {
                    let a = ((p.lba[r] - az[r]) / ad[r]).max(0.0);
                    if a < alpha {
                        alpha = a;
                        block = Some(Block::Row(r, Side::Lower));
                    }
                } else if ad[r] > thresh && p.uba[r].is_finite() {
                    let a = ((p.uba[r] - az[r]) / ad[r]).max(0.0);
                    if a < alpha {
                        alpha = a;
                        block = Some(Block::Row(r, Side::Upper));
                    }
                }
            }
        }
        (alpha, block)
    }
}

enum Block {
    Bound(usize, Side),
    Row(usize, Side),
}

enum Drop {
    Bound(usize),
    Row(usize),
}

/// Reusable solver; holds settings only, so it is cheap to clone per thread.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self { settings }
    }

    pub fn solve(&self, p: &QpProblem, warm_start: Option<&DVector<f64>>) -> QpSolution {
        solve_qp_with(p, warm_start, &self.settings)
    }
}

pub fn solve_qp(p: &QpProblem, warm_start: Option<&DVector<f64>>) -> QpSolution {
    solve_qp_with(p, warm_start, &QpSettings::default())
}

fn clamp_box(p: &QpProblem, z: &mut DVector<f64>) {
    for i in 0..p.dim() {
        z[i] = z[i].clamp(p.lb[i], p.ub[i]);
    }
}

/// Elastic projection `min ½‖z − z0‖² + M s + ½ s²` with every row relaxed
/// by the shared slack `s ≥ 0`. For `M` above the multiplier norm the
/// solution has `s = 0` and is the feasible point nearest the warm start.
fn elastic(p: &QpProblem, z0: &DVector<f64>, penalty: f64, settings: &QpSettings, iterations: &mut usize) -> DVector<f64> {
    let n = p.dim();
    let m = p.rows();
    let h = DMatrix::identity(n + 1, n + 1);
    let mut g = DVector::zeros(n + 1);
    g.rows_mut(0, n).copy_from(&-z0);
    g[n] = penalty;
    let mut lb = DVector::from_element(n + 1, 0.0);
    let mut ub = DVector::from_element(n + 1, f64::INFINITY);
    lb.rows_mut(0, n).copy_from(&p.lb);
    ub.rows_mut(0, n).copy_from(&p.ub);
    let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
    for r in 0..m {
        if p.lba[r].is_finite() {
            rows.push((r, 1.0, p.lba[r], f64::INFINITY));
        }
        if p.uba[r].is_finite() {
            rows.push((r, -1.0, f64::NEG_INFINITY, p.uba[r]));
        }
    }
    let mut a = DMatrix::zeros(rows.len(), n + 1);
    let mut lba = DVector::zeros(rows.len());
    let mut uba = DVector::zeros(rows.len());
    for (k, &(r, sign, lo, hi)) in rows.iter().enumerate() {
        a.view_mut((k, 0), (1, n)).copy_from(&p.a.row(r));
        a[(k, n)] = sign;
        lba[k] = lo;
        uba[k] = hi;
    }
    let aux = QpProblem { h, g, lb, ub, a, lba, uba };
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(z0);
    z[n] = p.infeasibility(z0).max(0.0);
    let mut solver = ActiveSet::new(&aux, *settings);
    solver.detect(&mut z);
    solver.run(&mut z, iterations);
    z
}

pub fn solve_qp_with(p: &QpProblem, warm_start: Option<&DVector<f64>>, settings: &QpSettings) -> QpSolution {
    let n = p.dim();
    let mut iterations = 0;
    let mut z = warm_start.cloned().unwrap_or_else(|| DVector::zeros(n));
    clamp_box(p, &mut z);
    let infeasible = |z: DVector<f64>, it: usize| QpSolution {
        objective: p.objective(&z),
        z,
        status: QpStatus::Infeasible,
        iterations: it,
        bound_multipliers: DVector::zeros(n),
        row_multipliers: DVector::zeros(p.rows()),
    };
    if p.validate().is_err() || (0..n).any(|i| p.lb[i] > p.ub[i]) {
        return infeasible(z, 0);
    }
    let row_tol = settings.feas_tol * (1.0 + p.lba.iter().chain(p.uba.iter()).filter(|x| x.is_finite()).fold(0.0f64, |a, b| a.max(b.abs())));
    if p.rows() > 0 && p.infeasibility(&z) > row_tol {
        let scale = 1.0 + z.amax() + p.infeasibility(&z);
        let mut penalty = 1e3 * scale;
        let mut found = false;
        for _ in 0..3 {
            let ze = elastic(p, &z, penalty, settings, &mut iterations);
            z = ze.rows(0, n).into_owned();
            clamp_box(p, &mut z);
            if ze[n] <= row_tol.max(1e-7) {
                found = true;
                break;
            }
            if iterations >= settings.max_iter {
                break;
            }
            penalty *= 1e3;
        }
        if !found {
            if iterations >= settings.max_iter {
                return QpSolution { status: QpStatus::MaxIter, ..infeasible(z, iterations) };
            }
            return infeasible(z, iterations);
        }
    }
    let mut solver = ActiveSet::new(p, *settings);
    solver.detect(&mut z);
    let outcome = solver.run(&mut z, &mut iterations);
    clamp_box(p, &mut z);
    let (status, bound_multipliers, row_multipliers) = match outcome {
        Outcome::Optimal { mu_b, mu_a } => (QpStatus::Optimal, mu_b, mu_a),
        Outcome::MaxIter => (QpStatus::MaxIter, DVector::zeros(n), DVector::zeros(p.rows())),
    };
    QpSolution { objective: p.objective(&z), z, status, iterations, bound_multipliers, row_multipliers }
}

/// Worst violation among stationarity, primal feasibility, multiplier signs
/// and complementarity.
pub fn kkt_residual(p: &QpProblem, s: &QpSolution) -> f64 {
    let z = &s.z;
    let stat = &p.h * z + &p.g - &s.bound_multipliers - p.a.transpose() * &s.row_multipliers;
    let mut worst = stat.amax();
    worst = worst.max(p.infeasibility(z));
    for i in 0..p.dim() {
        let mu = s.bound_multipliers[i];
        let (dl, du) = (z[i] - p.lb[i], p.ub[i] - z[i]);
        if p.lb[i] == p.ub[i] {
            continue;
        }
        worst = worst.max((mu.max(0.0) * dl).abs()).max((mu.min(0.0) * du).abs());
    }
    if p.rows() > 0 {
        let az = &p.a * z;
        for r in 0..p.rows() {
            let mu = s.row_multipliers[r];
            if p.lba[r] == p.uba[r] {
                continue;
            }
            let (dl, du) = (az[r] - p.lba[r], p.uba[r] - az[r]);
            worst = worst.max((mu.max(0.0) * dl).abs()).max((mu.min(0.0) * du).abs());
        }
    }
    worst
}

/// Equality-constrained QP `min ½ zᵀHz + gᵀz s.t. A z = b` by a direct KKT
/// solve. Returns the primal solution.
pub fn solve_equality_qp(h: &DMatrix<f64>, g: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, QpError> {
    let n = g.len();
    let m = b.len();
    if h.shape() != (n, n) || a.shape() != (m, n) {
        return Err(QpError::Dimension(format!("n = {n}, m = {m}")));
    }
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    rhs.rows_mut(n, m).copy_from(b);
    let scale = k.amax().max(1e-300);
    let lu = k.lu();
    let sol = lu.solve(&rhs).ok_or(QpError::Singular)?;
    if !sol.iter().all(|x| x.is_finite()) {
        return Err(QpError::Singular);
    }
    // reject numerically singular systems
    let resid = lu_residual(h, a, g, b, &sol);
    if resid > 1e-6 * scale * (1.0 + sol.amax()) {
        return Err(QpError::Singular);
    }
    Ok(sol.rows(0, n).into_owned())
}

fn lu_residual(h: &DMatrix<f64>, a: &DMatrix<f64>, g: &DVector<f64>, b: &DVector<f64>, sol: &DVector<f64>) -> f64 {
    let n = g.len();
    let m = b.len();
    let z = sol.rows(0, n);
    let l = sol.rows(n, m);
    let r1 = h * z + a.transpose() * l + g;
    let r2 = a * z - b;
    r1.amax().max(r2.amax())
}
