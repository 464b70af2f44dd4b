//! Divergence-form diffusion `∇·d∇` with zero-flux boundaries on a masked
//! subdomain, plus its backward-Euler step.
//!
//! The operator is stored as a list of interior faces with conductance
//! `g = harmonic_mean(d_l, d_r) / h²`. Faces on the mask boundary are
//! simply absent, which is the discrete no-flux condition, so every row
//! sums to zero and constants are annihilated exactly.
//!
//! Two solvers back the implicit step `(I − dt·L + dt·S)·w⁺ = w`:
//! [`ImplicitStep`] factors the matrix once (banded Cholesky) and is reused
//! for every cohort and step that shares it; [`solve_spd`] is a Jacobi
//! preconditioned conjugate gradient for one-off systems.

use crate::grid::{Grid, ScalarField, Support};
use crate::{Error, Result};

/// Default relative residual for [`solve_spd`].
pub const CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator {
    support: Support,
    n: usize,
    faces: Vec<Face>,
}

impl DiffusionOperator {
    /// Assembles `∇·d∇` on the active cells of `support`.
    pub fn assemble(grid: &Grid, support: Support, d: &ScalarField) -> Result<Self> {
        grid.check(d, support)?;
        let dv = d.values();
        if let Some((i, &v)) = dv.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
            let cell = grid.cells(support)[i];
            return Err(Error::Coefficient(format!(
                "diffusivity must be positive, got {v} at cell {:?}",
                grid.ix_iy(cell)
            )));
        }
        let h2 = grid.cell_area();
        let nx = grid.nx();
        let mut faces = Vec::new();
        for (a, cell) in grid.cells(support).into_iter().enumerate() {
            let (ix, iy) = grid.ix_iy(cell);
            let right = (ix + 1 < nx).then(|| cell + 1);
            let up = (iy + 1 < grid.ny()).then(|| cell + nx);
            for nb in [right, up].into_iter().flatten() {
                if let Some(b) = grid.local_index(support, nb) {
                    let g = 2.0 * dv[a] * dv[b] / (dv[a] + dv[b]) / h2;
                    faces.push(Face { a, b, conductance: g });
                }
            }
        }
        Ok(DiffusionOperator { support, n: grid.len(support), faces })
    }

    /// The operator of a vanishing diffusivity.
    pub fn zero(grid: &Grid, support: Support) -> Self {
        DiffusionOperator { support, n: grid.len(support), faces: Vec::new() }
    }

    /// A diffusivity that vanishes identically yields [`DiffusionOperator::zero`];
    /// anything else must be positive everywhere.
    pub fn assemble_or_zero(grid: &Grid, support: Support, d: &ScalarField) -> Result<Self> {
        grid.check(d, support)?;
        if d.values().iter().all(|&v| v == 0.0) {
            Ok(Self::zero(grid, support))
        } else {
            Self::assemble(grid, support, d)
        }
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn is_zero(&self) -> bool {
        self.faces.is_empty()
    }

    /// `out = L·w`.
    pub fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for f in &self.faces {
            let flux = f.conductance * (w[f.b] - w[f.a]);
            out[f.a] += flux;
            out[f.b] -= flux;
        }
    }

    pub fn apply(&self, w: &ScalarField) -> Result<ScalarField> {
        self.check(w)?;
        let mut out = vec![0.0; self.n];
        self.apply_into(w.values(), &mut out);
        Ok(ScalarField::new(self.support, out))
    }

    /// Diagonal of L (nonpositive).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.n];
        for f in &self.faces {
            diag[f.a] -= f.conductance;
            diag[f.b] -= f.conductance;
        }
        diag
    }

    fn bandwidth(&self) -> usize {
        self.faces.iter().map(|f| f.b - f.a).max().unwrap_or(0)
    }

    fn check(&self, w: &ScalarField) -> Result<()> {
        if w.support() != self.support {
            return Err(Error::SupportMismatch { expected: self.support, found: w.support() });
        }
        if w.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: w.len() });
        }
        Ok(())
    }
}

/// Cholesky factor of a symmetric positive definite band matrix, stored row
/// by row over columns `i − bw ..= i`.
#[derive(Debug, Clone)]
struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (j + self.bw - i)]
    }

    /// Factors `I·diag_shift + dt·(−L)` where `diag` holds the full diagonal.
    fn factor(n: usize, bw: usize, diag: &[f64], off: &[(usize, usize, f64)]) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            l[i * w + bw] = diag[i];
        }
        for &(a, b, v) in off {
            // lower triangle: row b, column a
            l[b * w + (a + bw - b)] += v;
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l[i * w + (j + bw - i)];
                let k0 = lo.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { row: i });
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    /// Solves `W` interleaved right-hand sides in place: `x[i*W + k]`.
    fn solve_interleaved<const W: usize>(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut acc = [0.0; W];
            acc.copy_from_slice(&x[i * W..i * W + W]);
            for k in i.saturating_sub(bw)..i {
                let lik = self.at(i, k);
                for r in 0..W {
                    acc[r] -= lik * x[k * W + r];
                }
            }
            let d = self.at(i, i);
            for r in 0..W {
                x[i * W + r] = acc[r] / d;
            }
        }
        for i in (0..n).rev() {
            let mut acc = [0.0; W];
            acc.copy_from_slice(&x[i * W..i * W + W]);
            for k in i + 1..(i + bw + 1).min(n) {
                let lki = self.at(k, i);
                for r in 0..W {
                    acc[r] -= lki * x[k * W + r];
                }
            }
            let d = self.at(i, i);
            for r in 0..W {
                x[i * W + r] = acc[r] / d;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Diagonal(Vec<f64>),
    Banded(BandedCholesky),
}

/// A factored backward-Euler step `(I − dt·L + dt·diag(sink))⁻¹`.
///
/// Results are independent of whether right-hand sides are solved one at a
/// time or in batches.
#[derive(Debug, Clone)]
pub struct ImplicitStep {
    support: Support,
    dt: f64,
    factor: Factor,
}

const BLOCK: usize = 8;

impl ImplicitStep {
    pub fn new(op: &DiffusionOperator, dt: f64, sink: Option<&[f64]>) -> Result<Self> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::Coefficient(format!("time step must be nonnegative, got {dt}")));
        }
        let n = op.len();
        let mut diag = vec![1.0; n];
        if let Some(s) = sink {
            if s.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: s.len() });
            }
            for (d, &si) in diag.iter_mut().zip(s) {
                if si < 0.0 {
                    return Err(Error::Coefficient(format!("sink rate must be nonnegative, got {si}")));
                }
                *d += dt * si;
            }
        }
        let factor = if op.is_zero() || dt == 0.0 {
            Factor::Diagonal(diag)
        } else {
            for f in op.faces() {
                diag[f.a] += dt * f.conductance;
                diag[f.b] += dt * f.conductance;
            }
            let off: Vec<_> = op.faces().iter().map(|f| (f.a, f.b, -dt * f.conductance)).collect();
            Factor::Banded(BandedCholesky::factor(n, op.bandwidth(), &diag, &off)?)
        };
        Ok(ImplicitStep { support: op.support(), dt, factor })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn solve_in_place(&self, w: &mut [f64]) {
        match &self.factor {
            Factor::Diagonal(d) => w.iter_mut().zip(d).for_each(|(x, d)| *x /= d),
            Factor::Banded(c) => c.solve_interleaved::<1>(w),
        }
    }

    pub fn solve(&self, w: &ScalarField) -> Result<ScalarField> {
        if w.support() != self.support {
            return Err(Error::SupportMismatch { expected: self.support, found: w.support() });
        }
        let mut out = w.clone();
        self.check_len(out.len())?;
        self.solve_in_place(out.values_mut());
        Ok(out)
    }

    /// Solves many right-hand sides, overwriting each with its solution.
    pub fn solve_many(&self, fields: &mut [ScalarField]) -> Result<()> {
        for f in fields.iter() {
            if f.support() != self.support {
                return Err(Error::SupportMismatch { expected: self.support, found: f.support() });
            }
            self.check_len(f.len())?;
        }
        let chol = match &self.factor {
            Factor::Diagonal(_) => {
                for f in fields.iter_mut() {
                    self.solve_in_place(f.values_mut());
                }
                return Ok(());
            }
            Factor::Banded(c) => c,
        };
        let n = chol.n;
        let mut buf = vec![0.0; n * BLOCK];
        let mut chunks = fields.chunks_mut(BLOCK);
        for chunk in &mut chunks {
            if chunk.len() < BLOCK {
                for f in chunk.iter_mut() {
                    chol.solve_interleaved::<1>(f.values_mut());
                }
                continue;
            }
            for (r, f) in chunk.iter().enumerate() {
                for (i, &v) in f.values().iter().enumerate() {
                    buf[i * BLOCK + r] = v;
                }
            }
            chol.solve_interleaved::<BLOCK>(&mut buf);
            for (r, f) in chunk.iter_mut().enumerate() {
                for (i, v) in f.values_mut().iter_mut().enumerate() {
                    *v = buf[i * BLOCK + r];
                }
            }
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let n = match &self.factor {
            Factor::Diagonal(d) => d.len(),
            Factor::Banded(c) => c.n,
        };
        if len != n {
            return Err(Error::LengthMismatch { expected: n, found: len });
        }
        Ok(())
    }
}

/// The shifted system `I − dt·L + dt·diag(sink)` as a matrix-free operator.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedSystem<'a> {
    pub op: &'a DiffusionOperator,
    pub dt: f64,
    pub sink: Option<&'a [f64]>,
}

impl ShiftedSystem<'_> {
    pub fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        self.op.apply_into(w, out);
        for (i, o) in out.iter_mut().enumerate() {
            let s = self.sink.map_or(0.0, |s| s[i]);
            *o = w[i] - self.dt * *o + self.dt * s * w[i];
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = self.op.diagonal();
        for (i, di) in d.iter_mut().enumerate() {
            *di = 1.0 - self.dt * *di + self.dt * self.sink.map_or(0.0, |s| s[i]);
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for an SPD operator given as a
/// matrix-vector product. Stops at `‖b − Ax‖₂ ≤ tol·‖b‖₂`.
pub fn solve_spd(
    matvec: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = rhs.len();
    if diag.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: diag.len() });
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    // Jacobi initial guess; exact for diagonal systems
    let mut x: Vec<f64> = rhs.iter().zip(diag).map(|(b, d)| b / d).collect();
    let mut ax = vec![0.0; n];
    matvec(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut res = dot(&r, &r).sqrt() / b_norm;
    if res <= tol {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: res });
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverNonConvergence { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok(CgOutcome { x, iterations: it, relative_residual: res });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverNonConvergence { iterations: max_iter, residual: res })
}

/// One backward-Euler step solved by PCG: `(I − dt·L + dt·sink)·w⁺ = w`.
pub fn step_backward_euler(
    op: &DiffusionOperator,
    w: &ScalarField,
    dt: f64,
    sink: Option<&ScalarField>,
    tol: f64,
) -> Result<(ScalarField, CgOutcome)> {
    op.check(w)?;
    if !(dt >= 0.0) {
        return Err(Error::Coefficient(format!("time step must be nonnegative, got {dt}")));
    }
    if let Some(s) = sink {
        op.check(s)?;
        if s.values().iter().any(|&v| v < 0.0) {
            return Err(Error::Coefficient("sink rate must be nonnegative".into()));
        }
    }
    let system = ShiftedSystem { op, dt, sink: sink.map(|s| s.values()) };
    let out = solve_spd(|v, o| system.apply_into(v, o), &system.diagonal(), w.values(), tol, 10 * op.len() + 100)?;
    Ok((ScalarField::new(op.support(), out.x.clone()), out))
}
