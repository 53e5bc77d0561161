//! Symmetric positive definite systems with a block-tridiagonal body and a
//! dense border (arrowhead):
//!
//! ```text
//! [ B   C₀ᵀ C₁ᵀ …    ] [x_b]   [r_b]
//! [ C₀  D₀  U₀       ] [x_0]   [r_0]
//! [ C₁  U₀ᵀ D₁  U₁   ] [x_1] = [r_1]
//! [ …       …    …   ] [ … ]   [ … ]
//! ```
//!
//! Solved by block Cholesky elimination along the chain and a Schur
//! complement on the border.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub border_dim: usize,
    pub block_dim: usize,
    pub diag: Vec<DMatrix<f64>>,
    /// `upper[t]` couples block `t` (rows) with block `t + 1` (columns).
    pub upper: Vec<DMatrix<f64>>,
    pub border: DMatrix<f64>,
    /// `cross[t]` couples block `t` (rows) with the border (columns).
    pub cross: Vec<DMatrix<f64>>,
}

impl BlockSystem {
    pub fn zeros(border_dim: usize, block_dim: usize, blocks: usize) -> Self {
        BlockSystem {
            border_dim,
            block_dim,
            diag: vec![DMatrix::zeros(block_dim, block_dim); blocks],
            upper: vec![DMatrix::zeros(block_dim, block_dim); blocks.saturating_sub(1)],
            border: DMatrix::zeros(border_dim, border_dim),
            cross: vec![DMatrix::zeros(block_dim, border_dim); blocks],
        }
    }

    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.border_dim + self.block_dim * self.blocks()
    }

    /// Diagonal entries in solution order (border first).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d: Vec<f64> = (0..self.border_dim).map(|i| self.border[(i, i)]).collect();
        for b in &self.diag {
            d.extend((0..self.block_dim).map(|i| b[(i, i)]));
        }
        d
    }

    /// Dense copy, for tests and diagnostics.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (nb, bd) = (self.border_dim, self.block_dim);
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        m.view_mut((0, 0), (nb, nb)).copy_from(&self.border);
        for t in 0..self.blocks() {
            let o = nb + t * bd;
            m.view_mut((o, o), (bd, bd)).copy_from(&self.diag[t]);
            m.view_mut((o, 0), (bd, nb)).copy_from(&self.cross[t]);
            m.view_mut((0, o), (nb, bd)).copy_from(&self.cross[t].transpose());
            if t + 1 < self.blocks() {
                m.view_mut((o, o + bd), (bd, bd)).copy_from(&self.upper[t]);
                m.view_mut((o + bd, o), (bd, bd)).copy_from(&self.upper[t].transpose());
            }
        }
        m
    }

    /// Solves `(A + diag(shift)) x = rhs`; `None` if the shifted matrix is not
    /// numerically positive definite.
    pub fn solve_shifted(&self, shift: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
        let (nb, bd, n) = (self.border_dim, self.block_dim, self.blocks());
        debug_assert_eq!(shift.len(), self.dim());
        debug_assert_eq!(rhs.len(), self.dim());

        let shifted = |m: &DMatrix<f64>, offset: usize| {
            let mut m = m.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += shift[offset + i];
            }
            m
        };

        // Forward elimination: S_t = D_t − U_{t−1}ᵀ S_{t−1}⁻¹ U_{t−1}
        let mut factors: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(n);
        for t in 0..n {
            let mut s = shifted(&self.diag[t], nb + t * bd);
            if t > 0 {
                let u = &self.upper[t - 1];
                let sinv_u = factors[t - 1].solve(u);
                s -= u.transpose() * sinv_u;
            }
            factors.push(Cholesky::new(s)?);
        }

        // Block right-hand side: column 0 is the body rhs, the rest are the border couplings.
        let cols = 1 + nb;
        let mut g: Vec<DMatrix<f64>> = (0..n)
            .map(|t| {
                let mut m = DMatrix::zeros(bd, cols);
                for i in 0..bd {
                    m[(i, 0)] = rhs[nb + t * bd + i];
                }
                m.view_mut((0, 1), (bd, nb)).copy_from(&self.cross[t]);
                m
            })
            .collect();
        for t in 1..n {
            let prev = factors[t - 1].solve(&g[t - 1]);
            let corr = self.upper[t - 1].transpose() * prev;
            g[t] -= corr;
        }
        let mut x: Vec<DMatrix<f64>> = vec![DMatrix::zeros(bd, cols); n];
        for t in (0..n).rev() {
            let mut r = g[t].clone();
            if t + 1 < n {
                r -= &self.upper[t] * &x[t + 1];
            }
            x[t] = factors[t].solve(&r);
        }

        // Border: (B − Cᵀ T⁻¹ C) x_b = r_b − Cᵀ T⁻¹ r_t
        let mut out = vec![0.0; self.dim()];
        let mut x_b = DVector::zeros(nb);
        if nb > 0 {
            let mut schur = shifted(&self.border, 0);
            let mut rb = DVector::from_column_slice(&rhs[..nb]);
            for t in 0..n {
                let ct = self.cross[t].transpose();
                schur -= &ct * x[t].columns(1, nb);
                rb -= &ct * x[t].column(0);
            }
            x_b = Cholesky::new(schur)?.solve(&rb);
            out[..nb].copy_from_slice(x_b.as_slice());
        }
        for t in 0..n {
            let body = x[t].column(0) - x[t].columns(1, nb) * &x_b;
            out[nb + t * bd..nb + (t + 1) * bd].copy_from_slice(body.as_slice());
        }
        Some(out)
    }
}
