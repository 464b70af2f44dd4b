//! Cell-centered rectangular mesh carrying the host habitat Ω (the whole
//! rectangle), the vector habitat Ω* and the seeding region Ω**.
//!
//! Fields live on the active cells of one of two supports. A field on Ω*
//! stores one value per Ω* cell in row-major order of the underlying grid.

use std::collections::VecDeque;

use crate::{Error, Result};

/// Which habitat a field is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Support {
    Omega,
    Star,
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    /// Square `[lo, hi]²`.
    pub fn square(lo: f64, hi: f64) -> Self {
        Rect::new(lo, hi, lo, hi)
    }

    fn contains(&self, x: f64, y: f64, eps: f64) -> bool {
        x >= self.x0 - eps && x <= self.x1 + eps && y >= self.y0 - eps && y <= self.y1 + eps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    h: f64,
    star: Vec<bool>,
    starstar: Vec<bool>,
    star_cells: Vec<usize>,
    star_local: Vec<Option<usize>>,
}

/// One value per active cell of a support.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    support: Support,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(support: Support, values: Vec<f64>) -> Self {
        ScalarField { support, values }
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::new(self.support, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same support.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.same_shape(other)?;
        Ok(ScalarField::new(
            self.support,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn same_shape(&self, other: &ScalarField) -> Result<()> {
        if self.support != other.support {
            return Err(Error::SupportMismatch { expected: self.support, found: other.support });
        }
        if self.values.len() != other.values.len() {
            return Err(Error::LengthMismatch { expected: self.values.len(), found: other.values.len() });
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Grid {
    /// Rasterizes the habitats by cell-center membership.
    ///
    /// Ω* must stay at least one cell away from the outer boundary so that
    /// the two habitat boundaries never meet.
    pub fn build(lx: f64, ly: f64, nx: usize, ny: usize, star: Rect, starstar: Rect) -> Result<Grid> {
        if nx < 3 || ny < 3 {
            return Err(Error::Geometry(format!("need at least 3x3 cells, got {nx}x{ny}")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Geometry(format!("side lengths must be positive, got {lx} x {ly}")));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(Error::Geometry(format!("cells must be square, got hx = {hx}, hy = {hy}")));
        }
        let h = hx;
        for (name, r) in [("star", &star), ("starstar", &starstar)] {
            if !(r.x0 < r.x1 && r.y0 < r.y1) {
                return Err(Error::Geometry(format!("{name} rectangle is empty or inverted: {r:?}")));
            }
        }
        if star.x0 <= 0.0 || star.y0 <= 0.0 || star.x1 >= lx || star.y1 >= ly {
            return Err(Error::Geometry(format!(
                "vector habitat {star:?} touches the outer boundary of [0,{lx}]x[0,{ly}]"
            )));
        }
        if starstar.x0 < 0.0 || starstar.y0 < 0.0 || starstar.x1 > lx || starstar.y1 > ly {
            return Err(Error::Geometry(format!("seeding region {starstar:?} leaves the domain")));
        }

        let eps = 1e-9 * h;
        let n = nx * ny;
        let mut mask_star = vec![false; n];
        let mut mask_starstar = vec![false; n];
        for iy in 0..ny {
            for ix in 0..nx {
                let (x, y) = ((ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h);
                mask_star[iy * nx + ix] = star.contains(x, y, eps);
                mask_starstar[iy * nx + ix] = starstar.contains(x, y, eps);
            }
        }

        let star_cells: Vec<usize> = (0..n).filter(|&c| mask_star[c]).collect();
        if star_cells.is_empty() {
            return Err(Error::Geometry("vector habitat contains no cell centers".into()));
        }
        for &c in &star_cells {
            let (ix, iy) = (c % nx, c / nx);
            if ix == 0 || iy == 0 || ix == nx - 1 || iy == ny - 1 {
                return Err(Error::Geometry(format!(
                    "vector habitat cell ({ix}, {iy}) lies on the outer boundary"
                )));
            }
        }
        let starstar_count = mask_starstar.iter().filter(|&&b| b).count();
        if starstar_count == 0 {
            return Err(Error::Geometry("seeding region contains no cell centers".into()));
        }
        if starstar_count >= n {
            return Err(Error::Geometry("seeding region must be strictly smaller than the domain".into()));
        }

        let mut star_local = vec![None; n];
        for (local, &c) in star_cells.iter().enumerate() {
            star_local[c] = Some(local);
        }
        let grid = Grid {
            lx,
            ly,
            nx,
            ny,
            h,
            star: mask_star,
            starstar: mask_starstar,
            star_cells,
            star_local,
        };
        if !grid.star_is_connected() {
            return Err(Error::Geometry("vector habitat is not connected".into()));
        }
        Ok(grid)
    }

    fn star_is_connected(&self) -> bool {
        let mut seen = vec![false; self.nx * self.ny];
        let mut queue = VecDeque::from([self.star_cells[0]]);
        seen[self.star_cells[0]] = true;
        let mut count = 0;
        while let Some(c) = queue.pop_front() {
            count += 1;
            for nb in self.neighbors(c) {
                if self.star[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        count == self.star_cells.len()
    }

    fn neighbors(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = (c % self.nx, c / self.nx);
        let nx = self.nx;
        [
            (ix > 0).then(|| c - 1),
            (ix + 1 < nx).then(|| c + 1),
            (iy > 0).then(|| c - nx),
            (iy + 1 < self.ny).then(|| c + nx),
        ]
        .into_iter()
        .flatten()
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// |Ω| = Lx·Ly.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of active cells of a support.
    pub fn len(&self, support: Support) -> usize {
        match support {
            Support::Omega => self.cell_count(),
            Support::Star => self.star_cells.len(),
        }
    }

    /// Global (row-major) index of each active cell, in field order.
    pub fn cells(&self, support: Support) -> Vec<usize> {
        match support {
            Support::Omega => (0..self.cell_count()).collect(),
            Support::Star => self.star_cells.clone(),
        }
    }

    /// Position of a global cell in fields of the given support.
    pub fn local_index(&self, support: Support, cell: usize) -> Option<usize> {
        match support {
            Support::Omega => (cell < self.cell_count()).then_some(cell),
            Support::Star => self.star_local.get(cell).copied().flatten(),
        }
    }

    pub fn ix_iy(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn center(&self, cell: usize) -> (f64, f64) {
        let (ix, iy) = self.ix_iy(cell);
        ((ix as f64 + 0.5) * self.h, (iy as f64 + 0.5) * self.h)
    }

    pub fn in_star(&self, cell: usize) -> bool {
        self.star[cell]
    }

    pub fn in_starstar(&self, cell: usize) -> bool {
        self.starstar[cell]
    }

    pub fn mask_star(&self) -> &[bool] {
        &self.star
    }

    pub fn mask_starstar(&self) -> &[bool] {
        &self.starstar
    }

    pub fn constant(&self, support: Support, c: f64) -> ScalarField {
        ScalarField::new(support, vec![c; self.len(support)])
    }

    pub fn zeros(&self, support: Support) -> ScalarField {
        self.constant(support, 0.0)
    }

    /// Builds a field by evaluating `f` at every active cell center.
    pub fn field_from_fn(&self, support: Support, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = self
            .cells(support)
            .into_iter()
            .map(|c| {
                let (x, y) = self.center(c);
                f(x, y)
            })
            .collect();
        ScalarField::new(support, values)
    }

    pub fn check(&self, field: &ScalarField, support: Support) -> Result<()> {
        if field.support != support {
            return Err(Error::SupportMismatch { expected: support, found: field.support });
        }
        let expected = self.len(support);
        if field.values.len() != expected {
            return Err(Error::LengthMismatch { expected, found: field.values.len() });
        }
        Ok(())
    }

    /// Midpoint rule: h² times the sum over active cells.
    pub fn integrate(&self, field: &ScalarField, support: Support) -> Result<f64> {
        self.check(field, support)?;
        Ok(self.cell_area() * field.values.iter().sum::<f64>())
    }

    /// Copies an Ω* field onto Ω, writing `fill` outside Ω*.
    pub fn extend_to_omega(&self, field: &ScalarField, fill: f64) -> Result<ScalarField> {
        self.check(field, Support::Star)?;
        let mut out = vec![fill; self.cell_count()];
        for (&c, &v) in self.star_cells.iter().zip(&field.values) {
            out[c] = v;
        }
        Ok(ScalarField::new(Support::Omega, out))
    }

    pub fn restrict_to_star(&self, field: &ScalarField) -> Result<ScalarField> {
        self.check(field, Support::Omega)?;
        Ok(ScalarField::new(
            Support::Star,
            self.star_cells.iter().map(|&c| field.values[c]).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(n: usize) -> Grid {
        Grid::build(1.0, 1.0, n, n, Rect::square(0.3, 0.7), Rect::square(0.4, 0.5)).unwrap()
    }

    #[test]
    fn rasterizes_star_by_cell_centers() {
        let g = unit_grid(10);
        // centers 0.35, 0.45, 0.55, 0.65 on each axis
        assert_eq!(g.len(Support::Star), 16);
        assert!((g.integrate(&g.constant(Support::Star, 1.0), Support::Star).unwrap() - 0.16).abs() < 1e-14);
        // 0.45 is the only center in [0.4, 0.5]
        assert_eq!(g.mask_starstar().iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn rejects_star_touching_boundary() {
        let err = Grid::build(1.0, 1.0, 10, 10, Rect::square(0.0, 0.5), Rect::square(0.1, 0.2));
        assert!(matches!(err, Err(Error::Geometry(_))));
        // rectangle inside, but a boundary cell center is covered
        let err = Grid::build(1.0, 1.0, 10, 10, Rect::square(0.04, 0.5), Rect::square(0.1, 0.2));
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_non_square_cells() {
        let err = Grid::build(1.0, 2.0, 10, 10, Rect::square(0.3, 0.7), Rect::square(0.4, 0.5));
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn minimal_three_by_three() {
        let g = Grid::build(3.0, 3.0, 3, 3, Rect::square(1.2, 1.8), Rect::square(0.0, 1.0)).unwrap();
        assert_eq!(g.len(Support::Star), 1);
        assert_eq!(g.cells(Support::Star), vec![4]);
    }

    #[test]
    fn thin_star_is_accepted_and_full_starstar_rejected() {
        let err = Grid::build(1.0, 1.0, 10, 10, Rect::new(0.3, 0.7, 0.45, 0.55), Rect::square(0.1, 0.2));
        assert!(err.is_ok());
        // a starstar covering everything is not strictly smaller than the domain
        let err = Grid::build(1.0, 1.0, 10, 10, Rect::square(0.3, 0.7), Rect::square(0.0, 1.0));
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn unit_constant_integrates_to_one() {
        let g = unit_grid(10);
        let one = g.constant(Support::Omega, 1.0);
        assert!((g.integrate(&one, Support::Omega).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(g.integrate(&one, Support::Star), Err(Error::SupportMismatch { .. })));
    }

    #[test]
    fn extend_and_restrict() {
        let g = unit_grid(10);
        let psi = g.constant(Support::Star, 2.0);
        let ext = g.extend_to_omega(&psi, 0.0).unwrap();
        assert_eq!(ext.values()[0], 0.0);
        assert_eq!(ext.values()[99], 0.0);
        assert_eq!(ext.values()[4 * 10 + 4], 2.0);
        assert_eq!(g.integrate(&ext, Support::Omega).unwrap(), g.integrate(&psi, Support::Star).unwrap());
        assert_eq!(g.restrict_to_star(&ext).unwrap(), psi);
        let u = g.constant(Support::Omega, 3.0);
        assert!(g.restrict_to_star(&u).unwrap().values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn restriction_of_field_supported_in_starstar() {
        // starstar outside the vector habitat: restriction of k vanishes
        let g = Grid::build(1.0, 1.0, 10, 10, Rect::square(0.3, 0.7), Rect::square(0.0, 0.2)).unwrap();
        let k = g.field_from_fn(Support::Omega, |x, y| if x < 0.2 && y < 0.2 { 25.0 } else { 0.0 });
        assert!(g.restrict_to_star(&k).unwrap().values().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn integrate_is_linear(
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            f in proptest::collection::vec(-5.0f64..5.0, 100),
            g in proptest::collection::vec(-5.0f64..5.0, 100),
        ) {
            let grid = unit_grid(10);
            let f = ScalarField::new(Support::Omega, f);
            let g = ScalarField::new(Support::Omega, g);
            let comb = f.zip_with(&g, |x, y| a * x + b * y).unwrap();
            let lhs = grid.integrate(&comb, Support::Omega).unwrap();
            let rhs = a * grid.integrate(&f, Support::Omega).unwrap() + b * grid.integrate(&g, Support::Omega).unwrap();
            let scale = 1.0 + a.abs() * 5.0 + b.abs() * 5.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn restrict_extend_round_trip(vals in proptest::collection::vec(-5.0f64..5.0, 16), fill in -1.0f64..1.0) {
            let grid = unit_grid(10);
            let f = ScalarField::new(Support::Star, vals);
            prop_assert_eq!(grid.restrict_to_star(&grid.extend_to_omega(&f, fill).unwrap()).unwrap(), f);
        }
    }
}
