//! Sparse direct solves through faer.
//!
//! Symmetric matrices go through a supernodal LDLᵀ with AMD ordering and
//! sign-guided pivot regularization (saddle systems have a zero pressure block);
//! everything else, and any symmetric solve whose refinement stalls, uses the
//! supernodal LU with partial pivoting. The matrix is equilibrated symmetrically
//! before factoring and the solution is polished by iterative refinement against
//! the unscaled operator. Symbolic analyses are cached per thread and keyed by
//! sparsity pattern, so repeated solves on one mesh only pay for the numeric
//! factorization.

use std::cell::RefCell;
use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Mat, Par, Side};

use super::sparse::SparseMatrix;
use crate::error::SolverError;

/// Relative residual bound, in the equilibrated variables, every returned solution satisfies.
pub const RESIDUAL_TOL: f64 = 1e-10;
const RUIZ_SWEEPS: usize = 4;
const MAX_REFINE: usize = 4;
const CACHE_SLOTS: usize = 8;

#[derive(Clone)]
enum Symbolic {
    Lu(SymbolicLu<usize>),
    Ldlt(Arc<SymbolicCholesky<usize>>),
}

struct CachedSymbolic {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    symmetric: bool,
    symbolic: Symbolic,
}

thread_local! {
    static SYMBOLIC_CACHE: RefCell<Vec<CachedSymbolic>> = const { RefCell::new(Vec::new()) };
}

fn symbolic_for(k: &SparseMatrix, symmetric: bool) -> Result<Symbolic, SolverError> {
    SYMBOLIC_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        if let Some(pos) = cache
            .iter()
            .position(|e| e.symmetric == symmetric && e.row_ptr == k.row_ptr() && e.col_idx == k.col_idx())
        {
            let hit = cache.remove(pos);
            let symbolic = hit.symbolic.clone();
            cache.push(hit);
            return Ok(symbolic);
        }
        // CSR of K is the CSC of Kᵀ; the LU is of Kᵀ
        let n = k.nrows();
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, k.row_ptr(), None, k.col_idx());
        let backend = |e: faer::sparse::FaerError| SolverError::Backend(format!("{e:?}"));
        let symbolic = if symmetric {
            Symbolic::Ldlt(Arc::new(
                factorize_symbolic_cholesky(pattern, Side::Lower, SymmetricOrdering::Amd, CholeskySymbolicParams::default())
                    .map_err(backend)?,
            ))
        } else {
            Symbolic::Lu(SymbolicLu::try_new(pattern).map_err(backend)?)
        };
        if cache.len() == CACHE_SLOTS {
            cache.remove(0);
        }
        cache.push(CachedSymbolic {
            row_ptr: k.row_ptr().to_vec(),
            col_idx: k.col_idx().to_vec(),
            symmetric,
            symbolic: symbolic.clone(),
        });
        Ok(symbolic)
    })
}

fn is_symmetric(k: &SparseMatrix) -> bool {
    (0..k.nrows()).all(|r| {
        let (cols, vals) = k.row(r);
        cols.iter().zip(vals).all(|(&c, &v)| c == r || k.get(c, r) == v)
    })
}

/// Symmetric Ruiz equilibration `D K D`; returns `D`.
fn equilibrate(k: &SparseMatrix) -> Vec<f64> {
    let n = k.nrows();
    let mut d = vec![1.0; n];
    for _ in 0..RUIZ_SWEEPS {
        let mut m = vec![0.0f64; n];
        for r in 0..n {
            let (cols, vals) = k.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let s = (v * d[r] * d[c]).abs();
                m[r] = m[r].max(s);
                m[c] = m[c].max(s);
            }
        }
        for (di, mi) in d.iter_mut().zip(&m) {
            if *mi > 0.0 {
                *di /= mi.sqrt();
            }
        }
    }
    d
}

enum Numeric {
    Lu(Lu<usize, f64>),
    Ldlt { symbolic: Arc<SymbolicCholesky<usize>>, values: Vec<f64> },
}

/// Numeric factorization of a square sparse matrix, reusable for many right-hand sides.
pub struct Factorization {
    numeric: Numeric,
    scale: Vec<f64>,
    matrix: SparseMatrix,
    /// `‖D K D‖∞` of the equilibrated matrix.
    norm: f64,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("n", &self.matrix.nrows()).finish()
    }
}

impl Factorization {
    pub fn new(k: &SparseMatrix) -> Result<Self, SolverError> {
        let n = k.nrows();
        if n != k.ncols() {
            return Err(SolverError::Dimension(format!("matrix is {}x{}", n, k.ncols())));
        }
        if k.values().iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Dimension("matrix has non-finite entries".into()));
        }
        if n == 0 {
            return Err(SolverError::Dimension("empty matrix".into()));
        }
        let scale = equilibrate(k);
        let mut values = k.values().to_vec();
        for r in 0..n {
            for idx in k.row_ptr()[r]..k.row_ptr()[r + 1] {
                values[idx] *= scale[r] * scale[k.col_idx()[idx]];
            }
        }
        let norm = (0..n)
            .map(|r| (k.row_ptr()[r]..k.row_ptr()[r + 1]).map(|i| values[i].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if is_symmetric(k) {
            if let Ok(numeric) = ldlt(k, &values) {
                let f = Self { numeric, scale: scale.clone(), matrix: k.clone(), norm };
                // keep LDLᵀ only if it resolves a probe right-hand side to working accuracy
                let probe: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
                let kp = k.matvec(&probe);
                if f.refined(&kp).map(|(_, r)| r <= 1e-3 * RESIDUAL_TOL).unwrap_or(false) {
                    return Ok(f);
                }
            }
        }
        let Symbolic::Lu(symbolic) = symbolic_for(k, false)? else { unreachable!() };
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, k.row_ptr(), None, k.col_idx());
        let lu = Lu::try_new_with_symbolic(symbolic, SparseColMatRef::new(pattern, &values)).map_err(|e| match e {
            LuError::SymbolicSingular { index } => SolverError::Singular { row: index },
            LuError::Generic(g) => SolverError::Backend(format!("{g:?}")),
        })?;
        Ok(Self { numeric: Numeric::Lu(lu), scale, matrix: k.clone(), norm })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i] * self.scale[i]);
        match &self.numeric {
            Numeric::Lu(lu) => lu.solve_transpose_in_place(b.as_mut()),
            Numeric::Ldlt { symbolic, values } => {
                let mut buf = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
                LdltRef::new(symbolic, values).solve_in_place_with_conj(
                    Conj::No,
                    b.as_mut(),
                    Par::Seq,
                    MemStack::new(&mut buf),
                );
            }
        }
        (0..n).map(|i| b[(i, 0)] * self.scale[i]).collect()
    }

    /// `‖D r‖∞` and `‖D K D‖∞ ‖D⁻¹ x‖∞ + ‖D b‖∞`: residual and its scale in the
    /// equilibrated variables, where rows and unknowns of very different magnitude
    /// (viscous momentum against pressure) weigh alike.
    fn scaled_residual(&self, res: &[f64], x: &[f64], b: &[f64]) -> (f64, f64) {
        let d = &self.scale;
        let r = res.iter().zip(d).map(|(v, s)| (v * s).abs()).fold(0.0, f64::max);
        let xs = x.iter().zip(d).map(|(v, s)| (v / s).abs()).fold(0.0, f64::max);
        let bs = b.iter().zip(d).map(|(v, s)| (v * s).abs()).fold(0.0, f64::max);
        (r, self.norm * xs + bs)
    }

    /// Refined solution and its relative residual in the equilibrated variables.
    fn refined(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64), SolverError> {
        let mut x = self.raw_solve(rhs);
        if let Some(row) = x.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::Singular { row });
        }
        let mut res = residual(&self.matrix, &x, rhs);
        let (mut res_norm, mut scale) = self.scaled_residual(&res, &x, rhs);
        let max_refine = if matches!(self.numeric, Numeric::Ldlt { .. }) { 3 * MAX_REFINE } else { MAX_REFINE };
        for _ in 0..max_refine {
            // refine to working precision, not just to the contract
            if res_norm <= 1e-15 * scale {
                break;
            }
            let dx = self.raw_solve(&res);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let trial_res = residual(&self.matrix, &trial, rhs);
            let (trial_norm, trial_scale) = self.scaled_residual(&trial_res, &trial, rhs);
            if !(trial_norm < res_norm) {
                break;
            }
            x = trial;
            res = trial_res;
            (res_norm, scale) = (trial_norm, trial_scale);
        }
        Ok((x, if scale > 0.0 { res_norm / scale } else { 0.0 }))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(SolverError::Dimension(format!("rhs has {} entries, matrix {}", rhs.len(), n)));
        }
        let (x, rel) = self.refined(rhs)?;
        if !(rel <= RESIDUAL_TOL) {
            return Err(SolverError::Residual { residual: rel, tolerance: RESIDUAL_TOL });
        }
        Ok(x)
    }
}

/// Regularized LDLᵀ of the equilibrated values. Expected pivot signs follow the
/// diagonal; rows with a zero diagonal (pressure) are expected negative.
fn ldlt(k: &SparseMatrix, values: &[f64]) -> Result<Numeric, SolverError> {
    let n = k.nrows();
    let Symbolic::Ldlt(symbolic) = symbolic_for(k, true)? else { unreachable!() };
    let signs: Vec<i8> = (0..n).map(|i| if k.get(i, i) > 0.0 { 1 } else { -1 }).collect();
    let reg = LdltRegularization {
        dynamic_regularization_signs: Some(&signs),
        dynamic_regularization_delta: 1e-9,
        dynamic_regularization_epsilon: 1e-13,
    };
    let pattern = SymbolicSparseColMatRef::new_checked(n, n, k.row_ptr(), None, k.col_idx());
    let mut l_values = vec![0.0; symbolic.len_val()];
    let params = Default::default();
    let mut buf = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, params));
    symbolic
        .factorize_numeric_ldlt(
            &mut l_values,
            SparseColMatRef::new(pattern, values),
            Side::Lower,
            reg,
            Par::Seq,
            MemStack::new(&mut buf),
            params,
        )
        .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
    Ok(Numeric::Ldlt { symbolic, values: l_values })
}

fn residual(k: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let kx = k.matvec(x);
    b.iter().zip(kx).map(|(bi, ki)| bi - ki).collect()
}

/// Solves `K x = rhs` by a sparse direct factorization with refinement.
pub fn factor_solve(k: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    Factorization::new(k)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::norm_inf;
    use crate::linalg::TripletBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_residual(k: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
        norm_inf(&residual(k, x, b)) / (k.norm_inf() * norm_inf(x) + norm_inf(b))
    }

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.5, -2.0, 3.25];
        assert_eq!(factor_solve(&SparseMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn two_by_two_hand_solve() {
        let k = SparseMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let x = factor_solve(&k, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15 && (x[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let mut t = TripletBuilder::new(n, n);
        let mut g = vec![vec![0.0; n]; n];
        for row in g.iter_mut() {
            for v in row.iter_mut() {
                if rng.random_bool(0.15) {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
        }
        // GᵀG + I
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| g[k][i] * g[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
                if s != 0.0 {
                    t.push(i, j, s);
                }
            }
        }
        let k = t.build();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = factor_solve(&k, &b).unwrap();
        assert!(rel_residual(&k, &x, &b) < 1e-14);
    }

    #[test]
    fn indefinite_saddle_needs_pivoting() {
        let k = SparseMatrix::from_dense(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1e-3],
        ]);
        let b = [1.0, 2.0, 3.0];
        let x = factor_solve(&k, &b).unwrap();
        assert!(rel_residual(&k, &x, &b) < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let k = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(factor_solve(&k, &[1.0, 1.0]), Err(SolverError::Singular { .. } | SolverError::Residual { .. })));
        let structurally = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert!(factor_solve(&structurally, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn permuted_rhs_is_deterministic() {
        let k = SparseMatrix::from_dense(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]]);
        let f = Factorization::new(&k).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x1 = f.solve(&b).unwrap();
        let x2 = f.solve(&b).unwrap();
        assert_eq!(x1, x2);
        let x3 = factor_solve(&k, &b).unwrap();
        assert_eq!(x1, x3);
    }

    #[test]
    fn dimension_errors() {
        let k = SparseMatrix::from_dense(&[vec![1.0, 2.0]]);
        assert!(matches!(factor_solve(&k, &[1.0]), Err(SolverError::Dimension(_))));
        assert!(matches!(factor_solve(&SparseMatrix::identity(2), &[1.0]), Err(SolverError::Dimension(_))));
    }
}
