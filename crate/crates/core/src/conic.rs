//! Small dense conic programs over Hermitian PSD blocks and non-negative
//! scalars, solved by a primal-dual interior-point method.
//!
//! A problem reads
//!
//! ```text
//! minimize    sum_n Tr(C_n V_n) + c^T x
//! subject to  sum_n Tr(A_in V_n) + a_i^T x  (<=, =, >=)  b_i
//!             V_n Hermitian PSD, x >= 0
//! ```
//!
//! Complex blocks are mapped to real symmetric blocks of twice the size and
//! inequality rows get slack variables, which gives a real standard-form
//! SDP. The interior-point method is an infeasible-start path-following
//! scheme with the HKM search direction and a Mehrotra predictor-corrector.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::CMat;

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn token(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// One linear row `sum_n Tr(A_n V_n) + a^T x (sense) rhs`. Blocks that do not
/// appear in the row are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRow {
    pub blocks: Vec<Option<CMat>>,
    pub scalars: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl AffineRow {
    pub fn new(n_blocks: usize, n_scalars: usize, sense: Sense, rhs: f64) -> Self {
        AffineRow { blocks: vec![None; n_blocks], scalars: vec![0.0; n_scalars], sense, rhs }
    }

    pub fn with_block(mut self, block: usize, coeff: CMat) -> Self {
        self.blocks[block] = Some(coeff);
        self
    }

    pub fn with_scalar(mut self, index: usize, coeff: f64) -> Self {
        self.scalars[index] = coeff;
        self
    }

    /// Row value at a candidate point.
    pub fn evaluate(&self, v: &[CMat], x: &[f64]) -> f64 {
        let blocks: f64 = self.blocks.iter().zip(v).filter_map(|(a, v)| a.as_ref().map(|a| trace_product(a, v))).sum();
        blocks + self.scalars.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSubproblem {
    pub block_dims: Vec<usize>,
    pub n_scalars: usize,
    pub block_costs: Vec<CMat>,
    pub scalar_costs: Vec<f64>,
    pub rows: Vec<AffineRow>,
}

/// `Re Tr(A B)` for Hermitian `A`, `B`.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| (x * y).re).sum()
}

fn hermitian_defect(a: &CMat) -> f64 {
    let scale = a.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    (a - a.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm())) / scale
}

impl SdpSubproblem {
    /// Problem with zero objective and no rows.
    pub fn new(block_dims: Vec<usize>, n_scalars: usize) -> Self {
        let block_costs = block_dims.iter().map(|&d| CMat::zeros(d, d)).collect();
        SdpSubproblem { block_dims, n_scalars, block_costs, scalar_costs: vec![0.0; n_scalars], rows: Vec::new() }
    }

    /// Set the cost of block `n` to `coeff * Tr(V_n)`.
    pub fn set_trace_cost(&mut self, block: usize, coeff: f64) {
        let d = self.block_dims[block];
        self.block_costs[block] = CMat::identity(d, d) * Complex64::from(coeff);
    }

    pub fn add_row(&mut self, row: AffineRow) {
        self.rows.push(row);
    }

    pub fn objective(&self, v: &[CMat], x: &[f64]) -> f64 {
        let blocks: f64 = self.block_costs.iter().zip(v).map(|(c, v)| trace_product(c, v)).sum();
        blocks + self.scalar_costs.iter().zip(x).map(|(c, x)| c * x).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let nb = self.block_dims.len();
        if self.block_dims.contains(&0) {
            return bad("PSD blocks must have positive dimension".into());
        }
        if self.block_costs.len() != nb || self.scalar_costs.len() != self.n_scalars {
            return bad("objective does not match the variable layout".into());
        }
        let check = |a: &CMat, d: usize, what: &str| -> Result<()> {
            if a.nrows() != d || a.ncols() != d {
                return bad(format!("{what}: expected {d}x{d}, got {}x{}", a.nrows(), a.ncols()));
            }
            if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return bad(format!("{what}: non-finite entry"));
            }
            if hermitian_defect(a) > HERMITIAN_TOL {
                return bad(format!("{what}: not Hermitian"));
            }
            Ok(())
        };
        for (n, c) in self.block_costs.iter().enumerate() {
            check(c, self.block_dims[n], &format!("cost of block {n}"))?;
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.blocks.len() != nb || row.scalars.len() != self.n_scalars {
                return bad(format!("row {i} does not match the variable layout"));
            }
            if !row.rhs.is_finite() || row.scalars.iter().any(|s| !s.is_finite()) {
                return bad(format!("row {i} has non-finite data"));
            }
            for (n, a) in row.blocks.iter().enumerate() {
                if let Some(a) = a {
                    check(a, self.block_dims[n], &format!("row {i}, block {n}"))?;
                }
            }
        }
        if self.scalar_costs.iter().any(|c| !c.is_finite()) {
            return bad("non-finite scalar cost".into());
        }
        Ok(())
    }

    /// Plain-text dump for offline cross-checking.
    ///
    /// ```text
    /// sdp <n_blocks> <n_scalars> <n_rows>
    /// dims <d_1> ... <d_B>
    /// cost <n>            followed by d_n lines of "re im" pairs
    /// scalar_cost <c_1> ... <c_S>
    /// row <i> <sense> <rhs>
    /// block <n>           followed by d_n lines of "re im" pairs
    /// scalars <a_1> ... <a_S>
    /// end
    /// ```
    ///
    /// Numbers use Rust's shortest round-trip formatting, so `read_text`
    /// recovers the problem bit for bit.
    pub fn write_text(&self) -> String {
        let mut s = String::new();
        let matrix = |s: &mut String, a: &CMat| {
            for r in 0..a.nrows() {
                let line: Vec<String> = (0..a.ncols()).map(|c| format!("{:?} {:?}", a[(r, c)].re, a[(r, c)].im)).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        };
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "sdp {} {} {}", self.block_dims.len(), self.n_scalars, self.rows.len());
        let _ = writeln!(s, "dims {}", self.block_dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
        for (n, c) in self.block_costs.iter().enumerate() {
            let _ = writeln!(s, "cost {n}");
            matrix(&mut s, c);
        }
        let _ = writeln!(s, "scalar_cost {}", list(&self.scalar_costs));
        for (i, row) in self.rows.iter().enumerate() {
            let _ = writeln!(s, "row {i} {} {:?}", row.sense.token(), row.rhs);
            for (n, a) in row.blocks.iter().enumerate() {
                if let Some(a) = a {
                    let _ = writeln!(s, "block {n}");
                    matrix(&mut s, a);
                }
            }
            let _ = writeln!(s, "scalars {}", list(&row.scalars));
        }
        s.push_str("end\n");
        s
    }

    pub fn read_text(text: &str) -> Result<Self> {
        let err = |msg: &str| Error::InvalidConfig(format!("subproblem dump: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = move || -> Result<&str> { lines.next().ok_or_else(|| err("unexpected end of input")) };
        let nums = |line: &str, skip: usize| -> Result<Vec<f64>> {
            line.split_whitespace().skip(skip).map(|t| t.parse::<f64>().map_err(|_| err("bad number"))).collect()
        };
        let counts = |line: &str| -> Result<Vec<usize>> {
            line.split_whitespace().skip(1).map(|t| t.parse().map_err(|_| err("bad count"))).collect()
        };
        let header = counts(next()?)?;
        let [nb, ns, nr] = header[..] else { return Err(err("bad header")) };
        let dims = counts(next()?)?;
        if dims.len() != nb {
            return Err(err("dims count"));
        }
        fn read_matrix<'a>(d: usize, next: &mut impl FnMut() -> Result<&'a str>) -> Result<CMat> {
            let err = |msg: &str| Error::InvalidConfig(format!("subproblem dump: {msg}"));
            let mut a = CMat::zeros(d, d);
            for r in 0..d {
                let v: Vec<f64> = next()?.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| err("bad number"))).collect::<Result<_>>()?;
                if v.len() != 2 * d {
                    return Err(err("matrix row length"));
                }
                for c in 0..d {
                    a[(r, c)] = Complex64::new(v[2 * c], v[2 * c + 1]);
                }
            }
            Ok(a)
        }
        let mut sp = SdpSubproblem::new(dims.clone(), ns);
        for n in 0..nb {
            if next()? != format!("cost {n}") {
                return Err(err("expected cost"));
            }
            sp.block_costs[n] = read_matrix(dims[n], &mut next)?;
        }
        sp.scalar_costs = nums(next()?, 1)?;
        for _ in 0..nr {
            let head: Vec<&str> = next()?.split_whitespace().collect();
            if head.len() != 4 || head[0] != "row" {
                return Err(err("expected row"));
            }
            let sense = match head[2] {
                "<=" => Sense::Le,
                "=" => Sense::Eq,
                ">=" => Sense::Ge,
                _ => return Err(err("bad sense")),
            };
            let rhs = head[3].parse().map_err(|_| err("bad rhs"))?;
            let mut row = AffineRow::new(nb, ns, sense, rhs);
            loop {
                let line = next()?;
                if let Some(b) = line.strip_prefix("block ") {
                    let n: usize = b.parse().map_err(|_| err("bad block index"))?;
                    if n >= nb {
                        return Err(err("block index out of range"));
                    }
                    row.blocks[n] = Some(read_matrix(dims[n], &mut next)?);
                } else if line.starts_with("scalars") {
                    row.scalars = nums(line, 1)?;
                    break;
                } else {
                    return Err(err("expected block or scalars"));
                }
            }
            sp.rows.push(row);
        }
        sp.validate()?;
        Ok(sp)
    }
}

/// `[[Re A, -Im A], [Im A, Re A]]` for Hermitian `A`.
pub fn hermitian_to_real_embedding(a: &CMat) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidConfig("embedding needs a square matrix".into()));
    }
    if hermitian_defect(a) > HERMITIAN_TOL {
        return Err(Error::InvalidConfig("embedding needs a Hermitian matrix".into()));
    }
    Ok(embed(a))
}

fn embed(a: &CMat) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = a[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of the embedding: averages the two copies of the real and
/// imaginary parts, so any real symmetric input maps to a Hermitian matrix.
pub fn real_embedding_to_hermitian(x: &DMatrix<f64>) -> CMat {
    let n = x.nrows() / 2;
    CMat::from_fn(n, n, |r, c| {
        let re = 0.5 * (x[(r, c)] + x[(r + n, c + n)]);
        let im = 0.5 * (x[(r + n, c)] - x[(r, c + n)]);
        Complex64::new(re, im)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
}

/// Relative residuals of a returned point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    /// `|primal - dual| / max(1, |primal|)`.
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub v_blocks: Vec<CMat>,
    pub scalars: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Row multipliers. Rows with `>=` have non-negative multipliers, rows
    /// with `<=` non-positive ones.
    pub multipliers: Vec<f64>,
    /// Dual slack matrices `Y_n = C_n - sum_i y_i A_in`.
    pub dual_blocks: Vec<CMat>,
    pub dual_scalars: Vec<f64>,
    /// `|b_i - row_i|` for inequality rows, zero for equalities.
    pub row_slacks: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Target for scaled residuals and gap.
    pub tolerance: f64,
    /// Residual level at which a stalled solve is still reported optimal.
    pub accept_feasibility: f64,
    pub accept_gap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iterations: 100, tolerance: 1e-10, accept_feasibility: 1e-8, accept_gap: 1e-7 }
    }
}

/// Anything that can solve an `SdpSubproblem`.
pub trait ConicBackend {
    fn solve(&self, sp: &SdpSubproblem, opts: &SolverOptions) -> Result<SdpSolution>;
}

/// The built-in dense interior-point method.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn solve(&self, sp: &SdpSubproblem, opts: &SolverOptions) -> Result<SdpSolution> {
        sp.validate()?;
        if sp.rows.is_empty() {
            return Ok(solve_unconstrained(sp));
        }
        let rp = RealProblem::build(sp);
        let run = rp.run(opts);
        Ok(rp.assemble(sp, run))
    }
}

/// Solve with the built-in backend and default options.
pub fn solve(sp: &SdpSubproblem) -> Result<SdpSolution> {
    InteriorPoint.solve(sp, &SolverOptions::default())
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    a.clone().symmetric_eigenvalues().min()
}

pub fn min_hermitian_eigenvalue(a: &CMat) -> f64 {
    min_eigenvalue(&embed(a))
}

/// Without rows the optimum is zero when every cost is PSD and unbounded
/// otherwise.
fn solve_unconstrained(sp: &SdpSubproblem) -> SdpSolution {
    let bounded = sp.block_costs.iter().all(|c| min_hermitian_eigenvalue(c) >= 0.0) && sp.scalar_costs.iter().all(|&c| c >= 0.0);
    SdpSolution {
        status: if bounded { SolveStatus::Optimal } else { SolveStatus::Unbounded },
        v_blocks: sp.block_dims.iter().map(|&d| CMat::zeros(d, d)).collect(),
        scalars: vec![0.0; sp.n_scalars],
        objective: 0.0,
        dual_objective: 0.0,
        multipliers: Vec::new(),
        dual_blocks: sp.block_costs.clone(),
        dual_scalars: sp.scalar_costs.clone(),
        row_slacks: Vec::new(),
        residuals: Residuals { primal: 0.0, dual: 0.0, rel_gap: 0.0 },
        iterations: 0,
    }
}

/// Real standard form `min <C,X> s.t. A(X) = b, X in cone`, with row and
/// objective normalization applied.
struct RealProblem {
    dims: Vec<usize>,
    n_lin: usize,
    c_blocks: Vec<DMatrix<f64>>,
    c_lin: DVector<f64>,
    a_blocks: Vec<Vec<Option<DMatrix<f64>>>>,
    a_lin: DMatrix<f64>,
    b: DVector<f64>,
    row_scale: Vec<f64>,
    cost_scale: f64,
}

#[derive(Clone)]
struct Point {
    x: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
    zl: DVector<f64>,
}

struct Run {
    point: Point,
    status: SolveStatus,
    iterations: usize,
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

fn sym(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Largest step `alpha` keeping `X + alpha dX` PSD, given `X = L L^T`.
fn max_step_psd(l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(t) = l.solve_lower_triangular(dx) else { return 0.0 };
    let Some(t) = l.solve_lower_triangular(&t.transpose()) else { return 0.0 };
    let lmin = min_eigenvalue(&sym(t));
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_lin(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter().zip(dx.iter()).filter(|(_, &d)| d < 0.0).map(|(&x, &d)| -x / d).fold(f64::INFINITY, f64::min)
}

impl RealProblem {
    fn build(sp: &SdpSubproblem) -> Self {
        let dims: Vec<usize> = sp.block_dims.iter().map(|d| 2 * d).collect();
        let n_slack = sp.rows.iter().filter(|r| r.sense != Sense::Eq).count();
        let n_lin = sp.n_scalars + n_slack;
        let m = sp.rows.len();
        let half_embed = |a: &CMat| embed(a) * 0.5;

        let mut a_blocks = Vec::with_capacity(m);
        let mut a_lin = DMatrix::zeros(m, n_lin);
        let mut b = DVector::zeros(m);
        let mut row_scale = vec![1.0; m];
        let mut slack = sp.n_scalars;
        for (i, row) in sp.rows.iter().enumerate() {
            let blocks: Vec<Option<DMatrix<f64>>> = row.blocks.iter().map(|a| a.as_ref().map(half_embed)).collect();
            for (j, &s) in row.scalars.iter().enumerate() {
                a_lin[(i, j)] = s;
            }
            match row.sense {
                Sense::Le => {
                    a_lin[(i, slack)] = 1.0;
                    slack += 1;
                }
                Sense::Ge => {
                    a_lin[(i, slack)] = -1.0;
                    slack += 1;
                }
                Sense::Eq => {}
            }
            let norm_sq: f64 = blocks.iter().flatten().map(|a| a.norm_squared()).sum::<f64>() + a_lin.row(i).norm_squared();
            let r = if norm_sq > 0.0 { 1.0 / norm_sq.sqrt() } else { 1.0 };
            row_scale[i] = r;
            a_blocks.push(blocks.into_iter().map(|a| a.map(|a| a * r)).collect::<Vec<_>>());
            a_lin.row_mut(i).scale_mut(r);
            b[i] = row.rhs * r;
        }

        let mut c_blocks: Vec<DMatrix<f64>> = sp.block_costs.iter().map(half_embed).collect();
        let mut c_lin = DVector::zeros(n_lin);
        for (j, &c) in sp.scalar_costs.iter().enumerate() {
            c_lin[j] = c;
        }
        let c_norm = (c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + c_lin.norm_squared()).sqrt();
        let cost_scale = if c_norm > 0.0 { 1.0 / c_norm } else { 1.0 };
        for c in &mut c_blocks {
            *c *= cost_scale;
        }
        c_lin *= cost_scale;

        RealProblem { dims, n_lin, c_blocks, c_lin, a_blocks, a_lin, b, row_scale, cost_scale }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn cone_dim(&self) -> f64 {
        (self.dims.iter().sum::<usize>() + self.n_lin) as f64
    }

    fn a_op(&self, x: &[DMatrix<f64>], xl: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a_lin * xl;
        for (i, row) in self.a_blocks.iter().enumerate() {
            out[i] += row.iter().zip(x).filter_map(|(a, x)| a.as_ref().map(|a| frob(a, x))).sum::<f64>();
        }
        out
    }

    fn at_op(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut blocks: Vec<DMatrix<f64>> = self.dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        for (i, row) in self.a_blocks.iter().enumerate() {
            for (acc, a) in blocks.iter_mut().zip(row) {
                if let Some(a) = a {
                    *acc += a * y[i];
                }
            }
        }
        (blocks, self.a_lin.transpose() * y)
    }

    fn primal_objective(&self, p: &Point) -> f64 {
        self.c_blocks.iter().zip(&p.x).map(|(c, x)| frob(c, x)).sum::<f64>() + self.c_lin.dot(&p.xl)
    }

    fn dual_residual(&self, p: &Point) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let (aty, atyl) = self.at_op(&p.y);
        let rd: Vec<DMatrix<f64>> = self.c_blocks.iter().zip(&aty).zip(&p.z).map(|((c, a), z)| c - a - z).collect();
        (rd, &self.c_lin - atyl - &p.zl)
    }

    fn initial_point(&self) -> Point {
        let n = self.cone_dim();
        let sqrt_n = n.sqrt();
        let mut xi: f64 = 10f64.max(sqrt_n);
        let mut eta: f64 = 10f64.max(sqrt_n);
        for i in 0..self.m() {
            let a_norm = (self.a_blocks[i].iter().flatten().map(|a| a.norm_squared()).sum::<f64>()
                + self.a_lin.row(i).norm_squared())
            .sqrt();
            xi = xi.max(sqrt_n * (1.0 + self.b[i].abs()) / (1.0 + a_norm));
            eta = eta.max(a_norm);
        }
        let c_norm = (self.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + self.c_lin.norm_squared()).sqrt();
        eta = eta.max(c_norm);
        Point {
            x: self.dims.iter().map(|&d| DMatrix::identity(d, d) * xi).collect(),
            xl: DVector::from_element(self.n_lin, xi),
            y: DVector::zeros(self.m()),
            z: self.dims.iter().map(|&d| DMatrix::identity(d, d) * eta).collect(),
            zl: DVector::from_element(self.n_lin, eta),
        }
    }

    /// Farkas-type certificate checks on the scaled iterate.
    fn certificate(&self, p: &Point) -> Option<SolveStatus> {
        let by = self.b.dot(&p.y);
        if by > 0.0 {
            let (aty, atyl) = self.at_op(&p.y);
            let worst = aty.iter().map(|a| min_eigenvalue(&(-a))).fold(f64::INFINITY, f64::min).min(atyl.iter().map(|v| -v).fold(f64::INFINITY, f64::min));
            if worst >= -1e-8 * by {
                return Some(SolveStatus::Infeasible);
            }
        }
        let cx = self.primal_objective(p);
        if cx < 0.0 {
            let ax = self.a_op(&p.x, &p.xl);
            let x_norm = (p.x.iter().map(|x| x.norm_squared()).sum::<f64>() + p.xl.norm_squared()).sqrt();
            if x_norm > 1e6 * (1.0 + self.b.norm()) && (ax - &self.b).norm() <= 1e-6 * cx.abs() && self.b.norm() <= 1e-8 * cx.abs() {
                return Some(SolveStatus::Unbounded);
            }
        }
        None
    }

    fn run(&self, opts: &SolverOptions) -> Run {
        let m = self.m();
        let n = self.cone_dim();
        let mut p = self.initial_point();
        let b_norm = self.b.norm();
        let c_norm = (self.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + self.c_lin.norm_squared()).sqrt();
        let mut best: Option<(f64, Point)> = None;
        let mut status = SolveStatus::NumericalTrouble;
        let mut iterations = 0;

        for it in 0..opts.max_iterations {
            iterations = it;
            let rp = &self.b - self.a_op(&p.x, &p.xl);
            let (rd, rdl) = self.dual_residual(&p);
            let pobj = self.primal_objective(&p);
            let dobj = self.b.dot(&p.y);
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rdl.norm_squared()).sqrt() / (1.0 + c_norm);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let merit = pinf.max(dinf).max(gap);
            if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
                best = Some((merit, p.clone()));
            }
            if pinf <= opts.tolerance && dinf <= opts.tolerance && gap <= opts.tolerance {
                status = SolveStatus::Optimal;
                break;
            }
            if it >= 5 {
                if let Some(s) = self.certificate(&p) {
                    status = s;
                    best = Some((merit, p.clone()));
                    break;
                }
            }

            let mu = (p.x.iter().zip(&p.z).map(|(x, z)| frob(x, z)).sum::<f64>() + p.xl.dot(&p.zl)) / n;
            let chol_x: Option<Vec<DMatrix<f64>>> = p.x.iter().map(|x| x.clone().cholesky().map(|c| c.l())).collect();
            let z_inv: Option<Vec<DMatrix<f64>>> = p.z.iter().map(|z| z.clone().cholesky().map(|c| c.inverse())).collect();
            let chol_z: Option<Vec<DMatrix<f64>>> = p.z.iter().map(|z| z.clone().cholesky().map(|c| c.l())).collect();
            let (Some(lx), Some(z_inv), Some(lz)) = (chol_x, z_inv, chol_z) else { break };

            // Schur complement M_ij = <A_i, X A_j Z^-1> + sum_l a_il a_jl x_l / z_l.
            let mut schur = DMatrix::zeros(m, m);
            let ratio = p.xl.component_div(&p.zl);
            for j in 0..m {
                for (bk, aj) in self.a_blocks[j].iter().enumerate() {
                    let Some(aj) = aj else { continue };
                    let t = &p.x[bk] * aj * &z_inv[bk];
                    for i in 0..m {
                        if let Some(ai) = &self.a_blocks[i][bk] {
                            schur[(i, j)] += frob(ai, &t);
                        }
                    }
                }
            }
            schur += &self.a_lin * DMatrix::from_diagonal(&ratio) * self.a_lin.transpose();
            let schur = sym(schur);
            let factor = SchurFactor::new(schur);

            let direction = |g: &[DMatrix<f64>], gl: &DVector<f64>| -> Option<(Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>, DVector<f64>)> {
                // rhs = rp - A(G) + A(X Rd Z^-1)
                let xrz: Vec<DMatrix<f64>> = p.x.iter().zip(&rd).zip(&z_inv).map(|((x, r), zi)| x * r * zi).collect();
                let xrzl = p.xl.component_mul(&rdl).component_div(&p.zl);
                let rhs = &rp - self.a_op(g, gl) + self.a_op(&xrz, &xrzl);
                let mut dy = factor.solve(&rhs)?;
                let build = |dy: &DVector<f64>| {
                    let (atdy, atdyl) = self.at_op(dy);
                    let dz: Vec<DMatrix<f64>> = rd.iter().zip(&atdy).map(|(r, a)| r - a).collect();
                    let dzl = &rdl - atdyl;
                    let dx: Vec<DMatrix<f64>> =
                        g.iter().zip(&p.x).zip(&dz).zip(&z_inv).map(|(((g, x), dz), zi)| sym(g - x * dz * zi)).collect();
                    let dxl = gl - p.xl.component_mul(&dzl).component_div(&p.zl);
                    (dx, dxl, dz, dzl)
                };
                let (mut dx, mut dxl, mut dz, mut dzl) = build(&dy);
                // Refine against the actual primal residual of the direction,
                // which the ill-conditioned Schur matrix alone cannot secure.
                for _ in 0..2 {
                    let e = &rp - self.a_op(&dx, &dxl);
                    if e.norm() <= 1e-3 * opts.tolerance * (1.0 + b_norm) {
                        break;
                    }
                    dy += factor.solve(&e)?;
                    (dx, dxl, dz, dzl) = build(&dy);
                }
                Some((dx, dxl, dy, dz, dzl))
            };
            let steps = |dx: &[DMatrix<f64>], dxl: &DVector<f64>, dz: &[DMatrix<f64>], dzl: &DVector<f64>| -> (f64, f64) {
                let ap = lx.iter().zip(dx).map(|(l, d)| max_step_psd(l, d)).fold(max_step_lin(&p.xl, dxl), f64::min);
                let ad = lz.iter().zip(dz).map(|(l, d)| max_step_psd(l, d)).fold(max_step_lin(&p.zl, dzl), f64::min);
                (ap, ad)
            };

            // Predictor.
            let g_aff: Vec<DMatrix<f64>> = p.x.iter().map(|x| -x).collect();
            let gl_aff = -&p.xl;
            let Some((dxa, dxla, _, dza, dzla)) = direction(&g_aff, &gl_aff) else { break };
            let (apa, ada) = steps(&dxa, &dxla, &dza, &dzla);
            let (apa, ada) = (apa.min(1.0), ada.min(1.0));
            let mu_aff = (p.x.iter().zip(&dxa).zip(p.z.iter().zip(&dza)).map(|((x, dx), (z, dz))| frob(&(x + dx * apa), &(z + dz * ada))).sum::<f64>()
                + (&p.xl + &dxla * apa).dot(&(&p.zl + &dzla * ada)))
                / n;
            let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

            // Corrector.
            let g: Vec<DMatrix<f64>> = p
                .x
                .iter()
                .zip(&z_inv)
                .zip(dxa.iter().zip(&dza))
                .map(|((x, zi), (dx, dz))| zi * (sigma * mu) - x - dx * dz * zi)
                .collect();
            let gl = p.zl.map(|z| sigma * mu / z) - &p.xl - dxla.component_mul(&dzla).component_div(&p.zl);
            let Some((dx, dxl, dy, dz, dzl)) = direction(&g, &gl) else { break };
            let (ap, ad) = steps(&dx, &dxl, &dz, &dzl);
            let gamma = 0.9 + 0.09 * apa.min(ada);
            let (ap, ad) = ((gamma * ap).min(1.0), (gamma * ad).min(1.0));
            if ap < 1e-12 && ad < 1e-12 {
                break;
            }
            for (x, d) in p.x.iter_mut().zip(&dx) {
                *x += d * ap;
            }
            p.xl += &dxl * ap;
            p.y += &dy * ad;
            for (z, d) in p.z.iter_mut().zip(&dz) {
                *z += d * ad;
            }
            p.zl += &dzl * ad;
            iterations = it + 1;
        }

        let point = match status {
            SolveStatus::Optimal => p,
            SolveStatus::Infeasible | SolveStatus::Unbounded => best.map(|b| b.1).unwrap_or(p),
            SolveStatus::NumericalTrouble => {
                // Fall back to the best iterate seen, checked against the
                // relaxed acceptance thresholds during assembly.
                let (_, bp) = best.unwrap_or((f64::INFINITY, p.clone()));
                if let Some(s) = self.certificate(&bp) {
                    status = s;
                }
                bp
            }
        };
        Run { point, status, iterations }
    }

    fn assemble(&self, sp: &SdpSubproblem, run: Run) -> SdpSolution {
        let p = &run.point;
        let cs = self.cost_scale;
        let v_blocks: Vec<CMat> = p.x.iter().map(real_embedding_to_hermitian).collect();
        let scalars: Vec<f64> = p.xl.iter().take(sp.n_scalars).copied().collect();
        let multipliers: Vec<f64> = p.y.iter().zip(&self.row_scale).map(|(y, r)| y * r / cs).collect();
        let dual_blocks: Vec<CMat> = p.z.iter().map(|z| real_embedding_to_hermitian(z) * Complex64::from(2.0 / cs)).collect();
        let dual_scalars: Vec<f64> = p.zl.iter().take(sp.n_scalars).map(|z| z / cs).collect();

        let objective = sp.objective(&v_blocks, &scalars);
        let dual_objective: f64 = sp.rows.iter().zip(&multipliers).map(|(r, y)| r.rhs * y).sum();
        let values: Vec<f64> = sp.rows.iter().map(|r| r.evaluate(&v_blocks, &scalars)).collect();
        let row_slacks: Vec<f64> = sp.rows.iter().zip(&values).map(|(r, v)| if r.sense == Sense::Eq { 0.0 } else { (r.rhs - v).abs() }).collect();

        // Scaled residuals drive the status; they are invariant to the
        // magnitudes of the input data.
        let rp = &self.b - self.a_op(&p.x, &p.xl);
        let (rd, rdl) = self.dual_residual(p);
        let c_norm = (self.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + self.c_lin.norm_squared()).sqrt();
        let primal = rp.norm() / (1.0 + self.b.norm());
        let dual = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rdl.norm_squared()).sqrt() / (1.0 + c_norm);
        let rel_gap = (objective - dual_objective).abs() / objective.abs().max(1.0);
        let scaled_gap = {
            let (po, d) = (self.primal_objective(p), self.b.dot(&p.y));
            (po - d).abs() / (1.0 + po.abs() + d.abs())
        };

        let status = match run.status {
            SolveStatus::Optimal | SolveStatus::NumericalTrouble => {
                if primal <= 1e-8 && dual <= 1e-8 && scaled_gap <= 1e-7 {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::NumericalTrouble
                }
            }
            s => s,
        };
        SdpSolution {
            status,
            v_blocks,
            scalars,
            objective,
            dual_objective,
            multipliers,
            dual_blocks,
            dual_scalars,
            row_slacks,
            residuals: Residuals { primal, dual, rel_gap },
            iterations: run.iterations,
        }
    }
}

/// Factorization of the Schur matrix: Cholesky when well conditioned, an
/// eigenvalue pseudo-inverse otherwise (redundant equality rows make the
/// matrix singular).
enum SchurFactor {
    Empty,
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Pinv(DMatrix<f64>),
}

impl SchurFactor {
    fn new(m: DMatrix<f64>) -> Self {
        if m.nrows() == 0 {
            return SchurFactor::Empty;
        }
        if let Some(c) = m.clone().cholesky() {
            let d = c.l_dirty().diagonal();
            let (lo, hi) = (d.min(), d.max());
            if lo > 0.0 && (lo / hi).powi(2) > 1e-13 {
                return SchurFactor::Chol(c);
            }
        }
        let eig = m.symmetric_eigen();
        let cut = 1e-13 * eig.eigenvalues.amax();
        let inv = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
        SchurFactor::Pinv(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            SchurFactor::Empty => Some(DVector::zeros(0)),
            SchurFactor::Chol(c) => Some(c.solve(rhs)),
            SchurFactor::Pinv(p) => Some(p * rhs),
        }
        .filter(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Optimality residuals of a solution in the units of the input problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// `||C_n - sum_i y_i A_in - Y_n||_F` per block.
    pub stationarity: Vec<f64>,
    /// Largest `|c_j - sum_i y_i a_ij - z_j|` over scalars.
    pub scalar_stationarity: f64,
    /// Largest row violation.
    pub primal_violation: f64,
    /// Largest of `|<Y_n, V_n>|`, `|z_j x_j|` and `|y_i s_i|`.
    pub complementarity: f64,
    /// Largest violation of `Y_n PSD`, `z >= 0` and the multiplier signs.
    pub dual_sign_violation: f64,
    /// Largest negative eigenvalue of any `V_n`, as a positive number.
    pub psd_violation: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .iter()
            .copied()
            .chain([self.scalar_stationarity, self.primal_violation, self.complementarity, self.dual_sign_violation, self.psd_violation])
            .fold(0.0, f64::max)
    }
}

pub fn verify_kkt(sp: &SdpSubproblem, sol: &SdpSolution) -> KktReport {
    let y = &sol.multipliers;
    let stationarity = (0..sp.block_dims.len())
        .map(|n| {
            let mut r = &sp.block_costs[n] - &sol.dual_blocks[n];
            for (row, yi) in sp.rows.iter().zip(y) {
                if let Some(a) = &row.blocks[n] {
                    r -= a * Complex64::from(*yi);
                }
            }
            r.norm()
        })
        .collect();
    let scalar_stationarity = (0..sp.n_scalars)
        .map(|j| {
            let aty: f64 = sp.rows.iter().zip(y).map(|(r, yi)| r.scalars[j] * yi).sum();
            (sp.scalar_costs[j] - aty - sol.dual_scalars[j]).abs()
        })
        .fold(0.0, f64::max);
    let mut primal_violation: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    let mut dual_sign_violation: f64 = 0.0;
    for ((row, yi), s) in sp.rows.iter().zip(y).zip(&sol.row_slacks) {
        let v = row.evaluate(&sol.v_blocks, &sol.scalars);
        let viol = match row.sense {
            Sense::Le => v - row.rhs,
            Sense::Ge => row.rhs - v,
            Sense::Eq => (v - row.rhs).abs(),
        };
        primal_violation = primal_violation.max(viol);
        complementarity = complementarity.max((yi * s).abs());
        dual_sign_violation = dual_sign_violation.max(match row.sense {
            Sense::Le => *yi,
            Sense::Ge => -yi,
            Sense::Eq => 0.0,
        });
    }
    for (yb, vb) in sol.dual_blocks.iter().zip(&sol.v_blocks) {
        complementarity = complementarity.max(trace_product(yb, vb).abs());
        dual_sign_violation = dual_sign_violation.max(-min_hermitian_eigenvalue(yb));
    }
    for (z, x) in sol.dual_scalars.iter().zip(&sol.scalars) {
        complementarity = complementarity.max((z * x).abs());
        dual_sign_violation = dual_sign_violation.max(-z).max(-x);
    }
    let psd_violation = sol.v_blocks.iter().map(|v| -min_hermitian_eigenvalue(v)).fold(0.0, f64::max);
    KktReport { stationarity, scalar_stationarity, primal_violation, complementarity, dual_sign_violation, psd_violation }
}
