//! Backend-agnostic cone programs and the single solver coupling point.
//!
//! A [`ConicProblem`] is a linear objective over real variables plus a list
//! of affine-map-into-cone constraints in the standard slack form
//!
//! ```text
//!     minimize    c^T x
//!     subject to  s = b - A x,   s in K_0 x K_1 x ... (per block)
//! ```
//!
//! with cones drawn from {zero, nonnegative, second-order, PSD}. PSD blocks
//! are real symmetric matrices packed in svec layout (upper triangle,
//! column-major, off-diagonals scaled by sqrt(2)). Complex Hermitian blocks
//! enter through the real embedding
//!
//! ```text
//!     H = A + jB   ->   [[A, -B], [B, A]]
//! ```
//!
//! which doubles every eigenvalue's multiplicity and therefore preserves
//! positive semidefiniteness; complex-origin PSD blocks always have even
//! side. The embedding and its eigenvalue property are fixed and tested
//! here so upstream LMI builders never touch backend conventions.
//!
//! Every constraint block carries a human-readable provenance tag, and a
//! problem can be dumped to a plain-text sparse listing for cross-checking
//! against external solvers.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::C64;

/// Default primal feasibility / duality-gap tolerance passed to the backend.
pub const DEFAULT_TOL: f64 = 1e-8;

// ---- Public types ----

/// Cone tag for one constraint block. `Psd(d)` is the cone of real
/// symmetric PSD matrices of side `d`, occupying d(d+1)/2 svec rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    Nonnegative(usize),
    SecondOrder(usize),
    Psd(usize),
}

impl Cone {
    /// Number of scalar rows the block occupies in the stacked system.
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonnegative(d) | Cone::SecondOrder(d) => d,
            Cone::Psd(d) => d * (d + 1) / 2,
        }
    }
}

/// One affine-map-into-cone constraint: `b - A x` restricted to `cone`.
#[derive(Debug, Clone)]
pub struct ConeBlock {
    pub cone: Cone,
    /// Sparse rows of A as (local row, variable, coefficient) triplets.
    pub triplets: Vec<(usize, usize, f64)>,
    /// Dense constant term, length `cone.rows()`.
    pub b: Vec<f64>,
    /// Nonempty provenance tag naming the constraint's origin.
    pub tag: String,
}

/// A cone program awaiting solve. Immutable once handed to [`ConicProblem::solve`].
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    nvars: usize,
    objective: Vec<f64>,
    blocks: Vec<ConeBlock>,
}

/// Termination class reported by [`ConicProblem::solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Solver output: primal point, objective, and the worst per-cone residual
/// of the returned point (recomputed here, not trusted from the backend).
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub max_residual: f64,
    pub solve_time: f64,
}

/// Per-block feasibility residuals for a candidate point.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// (tag, residual) per block, in problem order.
    pub residuals: Vec<(String, f64)>,
    pub max_residual: f64,
}

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("constraint tag must be nonempty")]
    EmptyTag,
    #[error("block dimension mismatch: {0}")]
    Dimension(String),
    #[error("backend rejected problem: {0}")]
    Backend(String),
}

// ---- Assembly ----

impl ConicProblem {
    /// Problem over `nvars` real variables with zero objective.
    pub fn new(nvars: usize) -> Self {
        Self {
            nvars,
            objective: vec![0.0; nvars],
            blocks: Vec::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    /// Sets the minimization coefficient of one variable.
    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    /// Adds a raw block; validates tag, row bounds, and b length.
    pub fn add_block(&mut self, block: ConeBlock) -> Result<(), ConicError> {
        if block.tag.is_empty() {
            return Err(ConicError::EmptyTag);
        }
        let rows = block.cone.rows();
        if block.b.len() != rows {
            return Err(ConicError::Dimension(format!(
                "tag {}: b has {} rows, cone needs {rows}",
                block.tag,
                block.b.len()
            )));
        }
        for &(r, v, _) in &block.triplets {
            if r >= rows || v >= self.nvars {
                return Err(ConicError::Dimension(format!(
                    "tag {}: triplet ({r},{v}) out of bounds ({rows} rows, {} vars)",
                    block.tag, self.nvars
                )));
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Equality rows: `b - A x = 0`.
    pub fn add_zero(
        &mut self,
        tag: &str,
        triplets: Vec<(usize, usize, f64)>,
        b: Vec<f64>,
    ) -> Result<(), ConicError> {
        self.add_block(ConeBlock {
            cone: Cone::Zero(b.len()),
            triplets,
            b,
            tag: tag.to_string(),
        })
    }

    /// Inequality rows: `b - A x >= 0` elementwise.
    pub fn add_nonnegative(
        &mut self,
        tag: &str,
        triplets: Vec<(usize, usize, f64)>,
        b: Vec<f64>,
    ) -> Result<(), ConicError> {
        self.add_block(ConeBlock {
            cone: Cone::Nonnegative(b.len()),
            triplets,
            b,
            tag: tag.to_string(),
        })
    }

    /// Second-order cone: with s = b - A x, requires `||s[1..]|| <= s[0]`.
    pub fn add_second_order(
        &mut self,
        tag: &str,
        triplets: Vec<(usize, usize, f64)>,
        b: Vec<f64>,
    ) -> Result<(), ConicError> {
        self.add_block(ConeBlock {
            cone: Cone::SecondOrder(b.len()),
            triplets,
            b,
            tag: tag.to_string(),
        })
    }

    /// Real symmetric LMI `B0 + sum_v x_v Bv >= 0` (PSD), given the constant
    /// matrix and per-variable coefficient matrices.
    pub fn add_psd_real(
        &mut self,
        tag: &str,
        constant: &DMatrix<f64>,
        terms: &[(usize, DMatrix<f64>)],
    ) -> Result<(), ConicError> {
        let d = constant.nrows();
        if constant.ncols() != d {
            return Err(ConicError::Dimension(format!("tag {tag}: constant not square")));
        }
        let b = svec(constant);
        let mut triplets = Vec::new();
        for (var, mat) in terms {
            if mat.nrows() != d || mat.ncols() != d {
                return Err(ConicError::Dimension(format!(
                    "tag {tag}: term for var {var} is {}x{}, expected {d}x{d}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            // s = b - A x must equal svec(B0) + x_v svec(Bv), so A carries -svec(Bv).
            for (row, val) in svec(mat).into_iter().enumerate() {
                if val != 0.0 {
                    triplets.push((row, *var, -val));
                }
            }
        }
        self.add_block(ConeBlock {
            cone: Cone::Psd(d),
            triplets,
            b,
            tag: tag.to_string(),
        })
    }

    /// Complex Hermitian LMI `B0 + sum_v x_v Bv >= 0`, embedded to the real
    /// PSD cone of side `2 d` via [`embed_hermitian`].
    pub fn add_psd_hermitian(
        &mut self,
        tag: &str,
        constant: &DMatrix<C64>,
        terms: &[(usize, DMatrix<C64>)],
    ) -> Result<(), ConicError> {
        let embedded: Vec<(usize, DMatrix<f64>)> = terms
            .iter()
            .map(|(v, m)| (*v, embed_hermitian(m)))
            .collect();
        self.add_psd_real(tag, &embed_hermitian(constant), &embedded)
    }
}

// ---- Solve and feasibility ----

impl ConicProblem {
    /// Solves with the cone backend at feasibility/gap tolerance `tol`.
    /// `max_residual` in the result is recomputed via [`Self::check_feasibility`].
    pub fn solve(&self, tol: f64) -> Result<ConicSolution, ConicError> {
        let (a, b, cones) = self.assemble();
        let p = CscMatrix::<f64>::zeros((self.nvars, self.nvars));
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(tol)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .build()
            .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &b, &cones, settings)
            .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::NumericalFailure,
        };
        let max_residual = if status == SolveStatus::Optimal {
            self.check_feasibility(&sol.x).max_residual
        } else {
            f64::INFINITY
        };
        Ok(ConicSolution {
            status,
            primal: sol.x.clone(),
            objective: sol.obj_val,
            max_residual,
            solve_time: sol.solve_time,
        })
    }

    /// Per-cone violation of `point`: zero blocks report max |s|, nonnegative
    /// blocks max(-s), second-order blocks (||s[1..]|| - s[0])+, PSD blocks
    /// (-lambda_min)+ of the unpacked matrix.
    pub fn check_feasibility(&self, point: &[f64]) -> FeasibilityReport {
        let mut residuals = Vec::with_capacity(self.blocks.len());
        let mut max_residual = 0.0_f64;
        for block in &self.blocks {
            let s = block.slack(point);
            let r = match block.cone {
                Cone::Zero(_) => s.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
                Cone::Nonnegative(_) => s.iter().fold(0.0_f64, |m, v| m.max(-v)).max(0.0),
                Cone::SecondOrder(_) => {
                    let tail: f64 = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                    (tail - s[0]).max(0.0)
                }
                Cone::Psd(d) => {
                    let mat = unsvec(&s, d);
                    let eig = mat.symmetric_eigenvalues();
                    (-eig.min()).max(0.0)
                }
            };
            max_residual = max_residual.max(r);
            residuals.push((block.tag.clone(), r));
        }
        FeasibilityReport {
            residuals,
            max_residual,
        }
    }

    /// Stacks all blocks into one CSC matrix, constant vector, and cone list.
    fn assemble(&self) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
        let total_rows: usize = self.blocks.iter().map(|bl| bl.cone.rows()).sum();
        let mut b = Vec::with_capacity(total_rows);
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut cones = Vec::with_capacity(self.blocks.len());
        let mut offset = 0;
        for block in &self.blocks {
            for &(r, v, val) in &block.triplets {
                triplets.push((offset + r, v, val));
            }
            b.extend_from_slice(&block.b);
            cones.push(match block.cone {
                Cone::Zero(d) => SupportedConeT::ZeroConeT(d),
                Cone::Nonnegative(d) => SupportedConeT::NonnegativeConeT(d),
                Cone::SecondOrder(d) => SupportedConeT::SecondOrderConeT(d),
                Cone::Psd(d) => SupportedConeT::PSDTriangleConeT(d),
            });
            offset += block.cone.rows();
        }
        // Duplicate (row, col) entries are summed while building CSC.
        triplets.sort_by_key(|&(r, c, _)| (c, r));
        let mut colptr = vec![0usize; self.nvars + 1];
        let mut rowval = Vec::with_capacity(triplets.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for &(r, c, v) in &triplets {
            if last == Some((c, r)) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                colptr[c + 1] += 1;
                last = Some((c, r));
            }
        }
        for c in 0..self.nvars {
            colptr[c + 1] += colptr[c];
        }
        let a = CscMatrix::new(total_rows, self.nvars, colptr, rowval, nzval);
        (a, b, cones)
    }

    /// Writes a plain-text sparse listing: header with variable count and
    /// per-cone sizes, objective triplets, then per-block `b` and `A` data.
    pub fn dump(&self, out: &mut dyn std::io::Write) -> std::io::Result<()> {
        writeln!(out, "conic-problem vars {} blocks {}", self.nvars, self.blocks.len())?;
        write!(out, "objective")?;
        for (v, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                write!(out, " {v}:{c:.17e}")?;
            }
        }
        writeln!(out)?;
        for (i, block) in self.blocks.iter().enumerate() {
            let kind = match block.cone {
                Cone::Zero(d) => format!("zero {d}"),
                Cone::Nonnegative(d) => format!("nonneg {d}"),
                Cone::SecondOrder(d) => format!("soc {d}"),
                Cone::Psd(d) => format!("psd {d}"),
            };
            writeln!(out, "block {i} {kind} tag \"{}\"", block.tag)?;
            for (r, v) in block.b.iter().enumerate() {
                if *v != 0.0 {
                    writeln!(out, "b {r} {v:.17e}")?;
                }
            }
            for &(r, v, val) in &block.triplets {
                writeln!(out, "A {r} {v} {val:.17e}")?;
            }
        }
        Ok(())
    }
}

impl ConeBlock {
    /// Evaluates the slack `s = b - A x` at `point`.
    pub fn slack(&self, point: &[f64]) -> Vec<f64> {
        let mut s = self.b.clone();
        for &(r, v, val) in &self.triplets {
            s[r] -= val * point[v];
        }
        s
    }
}

// ---- Packing and embedding ----

/// Upper-triangle column-major packing with sqrt(2)-scaled off-diagonals.
/// Inverse of [`unsvec`]; symmetrizes its input implicitly by averaging.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for col in 0..d {
        for row in 0..=col {
            if row == col {
                out.push(m[(row, col)]);
            } else {
                out.push((m[(row, col)] + m[(col, row)]) * std::f64::consts::FRAC_1_SQRT_2);
            }
        }
    }
    out
}

/// Unpacks an svec slice back to a dense symmetric matrix of side `d`.
pub fn unsvec(s: &[f64], d: usize) -> DMatrix<f64> {
    assert_eq!(s.len(), d * (d + 1) / 2);
    let mut m = DMatrix::zeros(d, d);
    let mut idx = 0;
    for col in 0..d {
        for row in 0..=col {
            if row == col {
                m[(row, col)] = s[idx];
            } else {
                let v = s[idx] * std::f64::consts::FRAC_1_SQRT_2;
                m[(row, col)] = v;
                m[(col, row)] = v;
            }
            idx += 1;
        }
    }
    m
}

/// Real embedding `[[Re H, -Im H], [Im H, Re H]]` of a complex matrix. For
/// Hermitian `H` the result is symmetric with each eigenvalue of `H`
/// appearing twice, so PSD is preserved in both directions.
pub fn embed_hermitian(h: &DMatrix<C64>) -> DMatrix<f64> {
    let d = h.nrows();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..h.ncols() {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + d)] = -z.im;
            out[(i + d, j)] = z.im;
            out[(i + d, j + d)] = z.re;
        }
    }
    out
}

/// Real composition of a complex vector as `(Re v, Im v)`, the variable
/// layout assumed by [`embed_hermitian`]-based quadratic forms.
pub fn split_complex(v: &DVector<C64>) -> Vec<f64> {
    v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect()
}
