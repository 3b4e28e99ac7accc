use super::direct::factor_solve;
use super::sparse::SparseMatrix;
use crate::error::SolverError;

/// Velocity-pressure block system
///
/// ```text
/// [ A + X   -Bᵀ ] [u]   [f + r]
/// [ -B       0  ] [π] = [ -g  ]
/// ```
///
/// with `B_kj = (q_k, ∇·φ_j)`, so `π` is the physical pressure. `fixed` marks
/// velocity unknowns removed by symmetric elimination (homogeneous Dirichlet).
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl SaddleSystem {
    pub fn new(a: SparseMatrix, b: SparseMatrix, f: Vec<f64>) -> Result<Self, SolverError> {
        let (nu, np) = (a.nrows(), b.nrows());
        if a.ncols() != nu || b.ncols() != nu || f.len() != nu {
            return Err(SolverError::Dimension(format!(
                "A {}x{}, B {}x{}, f {}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                f.len()
            )));
        }
        Ok(Self { a, b, f, g: vec![0.0; np], fixed: vec![false; nu] })
    }

    pub fn n_velocity(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_pressure(&self) -> usize {
        self.b.nrows()
    }

    /// Eliminates `dofs` (value zero) from the momentum block and the coupling.
    pub fn constrain(&mut self, dofs: impl IntoIterator<Item = usize>) {
        for d in dofs {
            self.fixed[d] = true;
        }
        self.a.eliminate_symmetric(&self.fixed);
        self.b.zero_rows_cols(None, Some(&self.fixed));
        for (fi, &fx) in self.f.iter_mut().zip(&self.fixed) {
            if fx {
                *fi = 0.0;
            }
        }
    }

    /// Full block matrix and right-hand side with an optional extra velocity block and load.
    pub fn assemble(
        &self,
        extra_block: Option<&SparseMatrix>,
        extra_load: Option<&[f64]>,
    ) -> Result<(SparseMatrix, Vec<f64>), SolverError> {
        let nu = self.n_velocity();
        let np = self.n_pressure();
        let top_left = match extra_block {
            Some(x) => {
                if x.nrows() != nu || x.ncols() != nu {
                    return Err(SolverError::Dimension(format!("extra block {}x{}, expected {nu}", x.nrows(), x.ncols())));
                }
                let mut x = x.clone();
                x.zero_rows_cols(Some(&self.fixed), Some(&self.fixed));
                self.a.add_scaled(1.0, &x, 1.0)
            }
            None => self.a.clone(),
        };
        let bt = self.b.transpose();
        let k = SparseMatrix::from_blocks(&[nu, np], &[nu, np], &[
            vec![Some((&top_left, 1.0)), Some((&bt, -1.0))],
            vec![Some((&self.b, -1.0)), None],
        ]);
        let mut rhs = Vec::with_capacity(nu + np);
        rhs.extend_from_slice(&self.f);
        if let Some(r) = extra_load {
            if r.len() != nu {
                return Err(SolverError::Dimension(format!("extra load has {} entries, expected {nu}", r.len())));
            }
            for ((ri, &li), &fx) in rhs.iter_mut().zip(r).zip(&self.fixed) {
                if !fx {
                    *ri += li;
                }
            }
        }
        rhs.extend(self.g.iter().map(|v| -v));
        Ok((k, rhs))
    }
}

/// Monolithic solve of the block system; returns `(u, π)`.
pub fn solve_saddle(
    sys: &SaddleSystem,
    extra_block: Option<&SparseMatrix>,
    extra_load: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let (k, rhs) = sys.assemble(extra_block, extra_load)?;
    let mut x = factor_solve(&k, &rhs)?;
    let p = x.split_off(sys.n_velocity());
    Ok((x, p))
}
