//! Small geometric kernels shared by the meshing, projection and audit code.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }

    /// Closed-interval overlap test.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && other.max[k] <= self.max[k])
    }
}

/// Closest point to `p` on triangle `(a, b, c)` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Signed solid angle subtended by triangle `(a, b, c)` at `p`
/// (Van Oosterom–Strackee). Positive when `p` lies on the side opposite the
/// right-hand normal of the winding.
pub fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let ra = a - p;
    let rb = b - p;
    let rc = c - p;
    let la = ra.norm();
    let lb = rb.norm();
    let lc = rc.norm();
    let numer = ra.dot(&rb.cross(&rc));
    let denom = la * lb * lc + ra.dot(&rb) * lc + rb.dot(&rc) * la + rc.dot(&ra) * lb;
    2.0 * numer.atan2(denom)
}

/// Unnormalized triangle normal `(b - a) × (c - a)`; its norm is twice the area.
#[inline]
pub fn triangle_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (b - a).cross(&(c - a))
}

#[inline]
pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * triangle_normal(a, b, c).norm()
}

/// Determinant of the 4×4 homogeneous matrix with rows `(x_i, y_i, z_i, 1)`.
///
/// Equals `-(p1 - p0) · ((p2 - p0) × (p3 - p0))`, i.e. six times the signed
/// volume under this row convention.
#[inline]
pub fn homogeneous_det(p0: &Vec3, p1: &Vec3, p2: &Vec3, p3: &Vec3) -> f64 {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let e3 = p3 - p0;
    -e1.dot(&e2.cross(&e3))
}

/// Gradient of [`homogeneous_det`] with respect to each of the four points.
#[inline]
pub fn homogeneous_det_grad(p0: &Vec3, p1: &Vec3, p2: &Vec3, p3: &Vec3) -> [Vec3; 4] {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let e3 = p3 - p0;
    let g1 = -e2.cross(&e3);
    let g2 = -e3.cross(&e1);
    let g3 = -e1.cross(&e2);
    [-(g1 + g2 + g3), g1, g2, g3]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closest_point_regions() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let interior = closest_point_on_triangle(&Vec3::new(0.2, 0.2, 5.0), &a, &b, &c);
        assert!((interior - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        let vertex = closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert_eq!(vertex, a);
        let edge = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((edge - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn solid_angle_of_octant() {
        // One octant of the sphere seen from the origin covers 4π/8.
        let w = solid_angle(
            &Vec3::zeros(),
            &Vec3::x(),
            &Vec3::y(),
            &Vec3::z(),
        );
        assert!((w.abs() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn det_gradient_matches_differences() {
        let p = [
            Vec3::new(0.1, 0.2, -0.3),
            Vec3::new(1.1, 0.1, 0.2),
            Vec3::new(0.3, 0.9, 0.1),
            Vec3::new(0.2, 0.4, 1.3),
        ];
        let g = homogeneous_det_grad(&p[0], &p[1], &p[2], &p[3]);
        let h = 1e-6;
        for v in 0..4 {
            for k in 0..3 {
                let mut plus = p;
                let mut minus = p;
                plus[v][k] += h;
                minus[v][k] -= h;
                let fd = (homogeneous_det(&plus[0], &plus[1], &plus[2], &plus[3])
                    - homogeneous_det(&minus[0], &minus[1], &minus[2], &minus[3]))
                    / (2.0 * h);
                assert!((fd - g[v][k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn homogeneous_det_matches_cofactor_expansion() {
        let p = [
            Vec3::new(0.5, -0.2, 0.3),
            Vec3::new(1.7, 0.4, 0.1),
            Vec3::new(0.2, 1.3, -0.6),
            Vec3::new(0.9, 0.8, 1.1),
        ];
        let m = nalgebra::Matrix4::from_fn(|r, c| if c == 3 { 1.0 } else { p[r][c] });
        assert!((m.determinant() - homogeneous_det(&p[0], &p[1], &p[2], &p[3])).abs() < 1e-12);
    }
}
