use nalgebra::{Matrix3, Point3, Vector3};

use crate::geometry::GeneralizedCylinder;

/// Default number of straight pieces a cylinder is split into.
pub const DEFAULT_PRISMS_PER_GC: usize = 16;

/// Oriented box around one straight piece of a cylinder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingPrism {
    pub center: Point3<f64>,
    /// Columns are the box axes (first one along the piece's chord).
    pub axes: Matrix3<f64>,
    pub half_extents: Vector3<f64>,
}

impl BoundingPrism {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let local = self.axes.tr_mul(&(p - self.center));
        (0..3).all(|k| local[k].abs() <= self.half_extents[k])
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.x * self.half_extents.y * self.half_extents.z
    }

    /// World point from box-local coordinates in `[-1, 1]^3`.
    pub fn point_at(&self, unit: &Vector3<f64>) -> Point3<f64> {
        self.center + self.axes * unit.component_mul(&self.half_extents)
    }

    /// World-space axis-aligned bounds.
    pub fn aabb(&self) -> (Point3<f64>, Point3<f64>) {
        let abs = self.axes.abs();
        let r = abs * self.half_extents;
        (self.center - r, self.center + r)
    }
}

/// Splits the parameter range into `m` equal pieces and bounds each one.
///
/// Every point whose in-volume closest-point candidate has a parameter in a
/// piece lies in that piece's box; boxes are grown by `pad` on every side.
pub fn build_prisms(gc: &GeneralizedCylinder, m: usize, pad: f64) -> Vec<BoundingPrism> {
    let m = m.max(1);
    let curve = gc.curve();
    let params = curve.params();
    (0..m)
        .map(|j| {
            let t0 = j as f64 / m as f64;
            let t1 = (j + 1) as f64 / m as f64;
            let k0 = curve.segment_at(t0);
            let mut k1 = curve.segment_at(t1);
            if k1 > k0 && params[k1] >= t1 {
                k1 -= 1;
            }

            // profile radius bound over [t0, t1]: lerped radii peak at ends or key frames
            let mut r = gc.frame_at(t0).r_y.max(gc.frame_at(t0).r_z);
            let f1 = gc.frame_at(t1);
            r = r.max(f1.r_y).max(f1.r_z);
            for kf in gc.keyframes().iter().filter(|k| k.t > t0 && k.t < t1) {
                r = r.max(kf.r_y).max(kf.r_z);
            }

            // largest bend at polyline vertices touching the piece
            let mut tan_bend: f64 = 0.0;
            for v in k0.max(1)..=(k1 + 1).min(params.len() - 2) {
                let c = curve.segment_direction(v - 1).dot(&curve.segment_direction(v)).clamp(-1.0, 1.0);
                let tan = if c <= 1e-6 { 1e6 } else { (1.0 - c * c).sqrt() / c };
                tan_bend = tan_bend.max(tan);
            }

            let p0 = curve.point_at(t0);
            let chord = curve.point_at(t1) - p0;
            let a = if chord.norm() > 1e-12 { chord.normalize() } else { curve.segment_direction(k0).into_inner() };
            let y = gc.frame_at(0.5 * (t0 + t1)).y.into_inner();
            let mut u = y - a * y.dot(&a);
            if u.norm() < 1e-6 {
                u = a.cross(&Vector3::x());
                if u.norm() < 1e-6 {
                    u = a.cross(&Vector3::y());
                }
            }
            let u = u.normalize();
            let v = a.cross(&u);
            let axes = Matrix3::from_columns(&[a, u, v]);

            let mut lo = Vector3::repeat(f64::INFINITY);
            let mut hi = Vector3::repeat(f64::NEG_INFINITY);
            // a vertex candidate exactly at t1 is expressed on the following segment
            let k_hi = if k1 + 1 < params.len() - 1 && params[k1 + 1] == t1 { k1 + 1 } else { k1 };
            for k in k0..=k_hi {
                let d = curve.segment_direction(k).into_inner();
                let s0 = params[k].max(t0).min(t1);
                let s1 = params[k + 1].min(t1).max(s0);
                for s in [s0, s1] {
                    let local = axes.tr_mul(&(curve.point_on_segment(k, s) - p0));
                    for axis in 0..3 {
                        let e = axes.column(axis);
                        let c = d.dot(&e);
                        let extent = r * ((1.0 - c * c).max(0.0).sqrt() + tan_bend);
                        lo[axis] = lo[axis].min(local[axis] - extent);
                        hi[axis] = hi[axis].max(local[axis] + extent);
                    }
                }
            }
            let half = (hi - lo) / 2.0 + Vector3::repeat(pad);
            let center = p0 + axes * ((hi + lo) / 2.0);
            BoundingPrism { center, axes, half_extents: half }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{propagate_frames, CurveSpec, KeyFrame};
    use crate::shapes;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn curved_gc() -> GeneralizedCylinder {
        let pts = [
            Point3::new(-0.6, -0.3, 0.0),
            Point3::new(-0.2, 0.6, 0.1),
            Point3::new(0.3, -0.5, -0.1),
            Point3::new(0.6, 0.3, 0.0),
        ];
        let spec = CurveSpec::from_control_points(&pts).unwrap();
        let curve = spec.discretize(512).unwrap();
        let ts = [0.0, 0.4, 1.0];
        let rots = propagate_frames(&curve, &ts, Vector3::z()).unwrap();
        let radii = [(0.1, 0.15), (0.2, 0.08), (0.12, 0.12)];
        let kfs = ts
            .iter()
            .zip(rots)
            .zip(radii)
            .map(|((&t, rot), (r_y, r_z))| KeyFrame { t, r_y, r_z, rot })
            .collect();
        GeneralizedCylinder::from_parts(spec, curve, kfs).unwrap()
    }

    #[test]
    fn straight_single_prism() {
        let gc = shapes::straight_gc(-0.5, 0.5, 0.2);
        let p = build_prisms(&gc, 1, 0.01);
        assert_eq!(p.len(), 1);
        assert_relative_eq!(p[0].half_extents, Vector3::new(0.51, 0.21, 0.21), epsilon = 1e-12);
        assert_relative_eq!(p[0].center, Point3::origin(), epsilon = 1e-12);
    }

    #[test]
    fn prisms_cover_interior_points() {
        let gc = curved_gc();
        let prisms = build_prisms(&gc, 16, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut found = 0;
        while found < 10_000 {
            let q = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.4..0.4));
            if gc.contains(&q).is_some() {
                found += 1;
                assert!(prisms.iter().any(|p| p.contains(&q)), "{q:?} uncovered");
            }
        }
    }

    #[test]
    fn finer_split_is_tighter() {
        let gc = curved_gc();
        let one: f64 = build_prisms(&gc, 1, 0.0).iter().map(BoundingPrism::volume).sum();
        let eight: f64 = build_prisms(&gc, 8, 0.0).iter().map(BoundingPrism::volume).sum();
        assert!(eight < one, "{eight} vs {one}");
    }
}
