//! Uniform tensor discretisation of `(0,T) x (0,1)^2`.
//!
//! Spatial nodes run over `0..=nx+1` by `0..=ny+1`; index 0 and `nx+1` are
//! on the wall. Time levels run over `0..=nt`.

use crate::error::{Error, Result};
use crate::field::Field3;

/// Centre of the unit square, used as origin for every radial quantity.
pub const CENTER: [f64; 2] = [0.5, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left];

    pub fn normal(self) -> [f64; 2] {
        match self {
            Edge::Bottom => [0.0, -1.0],
            Edge::Right => [1.0, 0.0],
            Edge::Top => [0.0, 1.0],
            Edge::Left => [-1.0, 0.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub ix: usize,
    pub iy: usize,
    pub edge: Edge,
    pub normal: [f64; 2],
    pub corner: bool,
    /// Edge quadrature weight; zero for corners.
    pub weight: f64,
    /// Position along the owning edge in `(0,1)`.
    pub arc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeGrid {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t_final: f64,
    pub h: f64,
    pub hy: f64,
    pub k: f64,
    boundary: Vec<BoundaryNode>,
    n_trace: usize,
}

impl SpaceTimeGrid {
    pub fn new(nx: usize, ny: usize, nt: usize, t_final: f64) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::invalid(format!("grid needs nx, ny >= 8, got {nx} x {ny}")));
        }
        if nt < 8 {
            return Err(Error::invalid(format!("grid needs nt >= 8, got {nt}")));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
        }
        let h = 1.0 / (nx as f64 + 1.0);
        let hy = 1.0 / (ny as f64 + 1.0);
        let k = t_final / nt as f64;

        let mut boundary = Vec::with_capacity(2 * (nx + ny) + 4);
        let edge_w = |i: usize, n: usize, step: f64| {
            if i == 1 || i == n {
                0.5 * step
            } else {
                step
            }
        };
        for ix in 1..=nx {
            boundary.push(BoundaryNode {
                ix,
                iy: 0,
                edge: Edge::Bottom,
                normal: Edge::Bottom.normal(),
                corner: false,
                weight: edge_w(ix, nx, h),
                arc: ix as f64 * h,
            });
        }
        for iy in 1..=ny {
            boundary.push(BoundaryNode {
                ix: nx + 1,
                iy,
                edge: Edge::Right,
                normal: Edge::Right.normal(),
                corner: false,
                weight: edge_w(iy, ny, hy),
                arc: iy as f64 * hy,
            });
        }
        for ix in 1..=nx {
            boundary.push(BoundaryNode {
                ix,
                iy: ny + 1,
                edge: Edge::Top,
                normal: Edge::Top.normal(),
                corner: false,
                weight: edge_w(ix, nx, h),
                arc: ix as f64 * h,
            });
        }
        for iy in 1..=ny {
            boundary.push(BoundaryNode {
                ix: 0,
                iy,
                edge: Edge::Left,
                normal: Edge::Left.normal(),
                corner: false,
                weight: edge_w(iy, ny, hy),
                arc: iy as f64 * hy,
            });
        }
        let n_trace = boundary.len();
        // Corners carry Dirichlet values only. Each is attached to the edge
        // that precedes it counter-clockwise so it still has a unit normal.
        for (ix, iy, edge) in [
            (0, 0, Edge::Bottom),
            (nx + 1, 0, Edge::Right),
            (nx + 1, ny + 1, Edge::Top),
            (0, ny + 1, Edge::Left),
        ] {
            boundary.push(BoundaryNode {
                ix,
                iy,
                edge,
                normal: edge.normal(),
                corner: true,
                weight: 0.0,
                arc: 0.0,
            });
        }
        Ok(Self { nx, ny, nt, t_final, h, hy, k, boundary, n_trace })
    }

    /// Array shape of a full space-time field: `[nt+1, nx+2, ny+2]`.
    pub fn dims(&self) -> [usize; 3] {
        [self.nt + 1, self.nx + 2, self.ny + 2]
    }

    pub fn slice_dims(&self) -> [usize; 2] {
        [self.nx + 2, self.ny + 2]
    }

    pub fn n_levels(&self) -> usize {
        self.nt + 1
    }

    pub fn n_interior(&self) -> usize {
        self.nx * self.ny
    }

    pub fn t(&self, m: usize) -> f64 {
        m as f64 * self.k
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.h
    }

    pub fn y(&self, iy: usize) -> f64 {
        iy as f64 * self.hy
    }

    /// Flat index of node `(m, ix, iy)` in a full space-time field.
    #[inline]
    pub fn node_index(&self, m: usize, ix: usize, iy: usize) -> usize {
        (m * (self.nx + 2) + ix) * (self.ny + 2) + iy
    }

    pub fn node_coords(&self, idx: usize) -> (usize, usize, usize) {
        let ny2 = self.ny + 2;
        let per = (self.nx + 2) * ny2;
        (idx / per, (idx % per) / ny2, idx % ny2)
    }

    #[inline]
    pub fn is_boundary(&self, ix: usize, iy: usize) -> bool {
        ix == 0 || iy == 0 || ix == self.nx + 1 || iy == self.ny + 1
    }

    /// Index among interior unknowns, `(ix-1)*ny + (iy-1)`.
    #[inline]
    pub fn interior_index(&self, ix: usize, iy: usize) -> usize {
        (ix - 1) * self.ny + (iy - 1)
    }

    /// All boundary nodes: trace nodes first, then the four corners.
    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    /// Boundary nodes that carry DN samples (corners excluded).
    pub fn trace_nodes(&self) -> &[BoundaryNode] {
        &self.boundary[..self.n_trace]
    }

    pub fn n_trace(&self) -> usize {
        self.n_trace
    }

    /// Trapezoid weights in time.
    pub fn time_weight(&self, m: usize) -> f64 {
        if m == 0 || m == self.nt {
            0.5 * self.k
        } else {
            self.k
        }
    }

    pub fn boundary_length(&self) -> f64 {
        self.trace_nodes().iter().map(|b| b.weight).sum()
    }

    /// Discrete `l2(Q)` norm over interior nodes: trapezoid in time, cell
    /// area in space.
    pub fn l2_norm_c(&self, u: &Field3<crate::C64>) -> f64 {
        self.l2_sq(u, |v| v.norm_sqr()).sqrt()
    }

    pub fn l2_norm_r(&self, u: &Field3<f64>) -> f64 {
        self.l2_sq(u, |v| v * v).sqrt()
    }

    fn l2_sq<T: Copy + Default>(&self, u: &Field3<T>, sq: impl Fn(T) -> f64) -> f64 {
        assert_eq!(u.dims(), self.dims(), "field does not live on this grid");
        let area = self.h * self.hy;
        let mut total = 0.0;
        for m in 0..=self.nt {
            let mut s = 0.0;
            for ix in 1..=self.nx {
                for iy in 1..=self.ny {
                    s += sq(u.get(m, ix, iy));
                }
            }
            total += self.time_weight(m) * area * s;
        }
        total
    }

    /// Spatial `l2` norm of one slice over interior nodes.
    pub fn slice_norm_c(&self, u: &[crate::C64]) -> f64 {
        let ny2 = self.ny + 2;
        let mut s = 0.0;
        for ix in 1..=self.nx {
            for iy in 1..=self.ny {
                s += u[ix * ny2 + iy].norm_sqr();
            }
        }
        (s * self.h * self.hy).sqrt()
    }
}

/// Points `x + m h omega`, `m = 0, 1, ...`, kept while they stay strictly
/// inside the disc of radius `r_ext` about the domain centre. The start
/// point is always returned.
pub fn ray_points(x: [f64; 2], omega: [f64; 2], h: f64, r_ext: f64) -> Result<Vec<[f64; 2]>> {
    let norm = (omega[0] * omega[0] + omega[1] * omega[1]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("ray direction must be a unit vector, |omega| = {norm}")));
    }
    if !(h > 0.0) {
        return Err(Error::invalid(format!("ray step must be positive, got {h}")));
    }
    let mut pts = vec![x];
    let mut m = 1usize;
    loop {
        let s = m as f64 * h;
        let p = [x[0] + s * omega[0], x[1] + s * omega[1]];
        let r = ((p[0] - CENTER[0]).powi(2) + (p[1] - CENTER[1]).powi(2)).sqrt();
        if r >= r_ext {
            break;
        }
        pts.push(p);
        m += 1;
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert!(SpaceTimeGrid::new(3, 3, 4, 1.0).is_err());
        assert!(SpaceTimeGrid::new(15, 15, 16, 0.0).is_err());
        assert!(SpaceTimeGrid::new(15, 15, 7, 1.0).is_err());
    }

    #[test]
    fn steps_from_sizes() {
        let g = SpaceTimeGrid::new(15, 15, 16, 1.0).unwrap();
        assert_eq!(g.h, 1.0 / 16.0);
        assert_eq!(g.k, 1.0 / 16.0);
    }

    #[test]
    fn counts_at_127() {
        let g = SpaceTimeGrid::new(127, 127, 512, 1.0).unwrap();
        assert_eq!(g.n_interior(), 127 * 127);
        assert_eq!(g.n_trace(), 4 * 127);
        assert_eq!(g.boundary_nodes().iter().filter(|b| b.corner).count(), 4);
        // enumeration oracle: every wall node appears exactly once
        let mut seen = vec![0u8; 129 * 129];
        for b in g.boundary_nodes() {
            seen[b.ix * 129 + b.iy] += 1;
        }
        for ix in 0..129 {
            for iy in 0..129 {
                let want = u8::from(g.is_boundary(ix, iy));
                assert_eq!(seen[ix * 129 + iy], want);
            }
        }
    }

    #[test]
    fn boundary_length_excludes_corners() {
        for n in [8, 15, 63] {
            let g = SpaceTimeGrid::new(n, n, 8, 1.0).unwrap();
            assert!((g.boundary_length() - (4.0 - 8.0 * g.h)).abs() < 1e-12);
        }
    }

    #[test]
    fn normals_are_axis_unit() {
        let g = SpaceTimeGrid::new(9, 11, 8, 1.0).unwrap();
        for b in g.boundary_nodes() {
            let [a, c] = b.normal;
            assert_eq!(a * a + c * c, 1.0);
            assert!(a == 0.0 || c == 0.0);
        }
    }

    #[test]
    fn index_roundtrip() {
        let g = SpaceTimeGrid::new(9, 11, 8, 1.0).unwrap();
        let total = g.dims().iter().product::<usize>();
        for idx in 0..total {
            let (m, i, j) = g.node_coords(idx);
            assert_eq!(g.node_index(m, i, j), idx);
        }
    }

    #[test]
    fn ray_examples() {
        let pts = ray_points([0.5, 0.5], [1.0, 0.0], 0.25, 1.0).unwrap();
        let s: Vec<f64> = pts.iter().map(|p| p[0] - 0.5).collect();
        assert_eq!(s, vec![0.0, 0.25, 0.5, 0.75]);

        let x = [0.3, 1.0];
        let r = ((0.3f64 - 0.5).powi(2) + 0.25).sqrt();
        assert_eq!(ray_points(x, [0.0, 1.0], 0.1, r).unwrap().len(), 1);

        assert!(ray_points([0.5, 0.5], [0.6, 0.8], 0.1, 1.0).is_ok());
        assert!(ray_points([0.5, 0.5], [1.0, 1.0], 0.1, 1.0).is_err());
        assert!(ray_points([0.5, 0.5], [1.0, 0.0], 0.0, 1.0).is_err());
    }
}
