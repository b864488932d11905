//! Load and motion exchange across a nonconforming 2D interface.
//!
//! The fluid side carries many boundary points ("centers") with pressures,
//! the structural side a coarser polyline of nodes. Pairing is computed once
//! per geometry: every structural node gets inverse-distance weights over
//! its `k` nearest centers, and every fluid point gets its orthogonal
//! projection onto the nearest structural segment.

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("{what} is empty")]
    Empty { what: &'static str },
    #[error("{positions} positions but {values} values")]
    LengthMismatch { positions: usize, values: usize },
    #[error("all {0} fluid centers coincide")]
    DegenerateGeometry(usize),
    #[error("IDW exponent must be positive, got {0}")]
    InvalidExponent(f64),
    #[error("interface moved {moved:e} since pairing, re-pair threshold is {threshold:e}")]
    StalePairs { moved: f64, threshold: f64 },
    #[error("{found} samples supplied, pairing expects {expected}")]
    SampleCount { expected: usize, found: usize },
}

/// Point positions with one value each.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample<T> {
    positions: Vec<Point>,
    values: Vec<T>,
}

impl<T> FieldSample<T> {
    pub fn new(positions: Vec<Point>, values: Vec<T>) -> Result<Self, TransferError> {
        if positions.len() != values.len() {
            return Err(TransferError::LengthMismatch {
                positions: positions.len(),
                values: values.len(),
            });
        }
        Ok(Self { positions, values })
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Normalized inverse-distance weights of `query` over `centers`.
///
/// An exact coincidence puts all weight on the first coincident center.
pub fn idw_weights(query: &Point, centers: &[Point], alpha: f64) -> Vec<f64> {
    let mut w = vec![0.0; centers.len()];
    if let Some(hit) = centers.iter().position(|c| distance(query, c) == 0.0) {
        w[hit] = 1.0;
        return w;
    }
    for (wi, c) in w.iter_mut().zip(centers) {
        *wi = distance(query, c).powf(-alpha);
    }
    let total: f64 = w.iter().sum();
    if total.is_finite() && total > 0.0 {
        w.iter_mut().for_each(|wi| *wi /= total);
    } else {
        // every weight underflowed or overflowed; fall back to the nearest center
        let nearest = nearest_index(query, centers);
        w.fill(0.0);
        w[nearest] = 1.0;
    }
    w
}

fn nearest_index(query: &Point, centers: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = distance(query, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Inverse-distance-weighted value at `query`.
pub fn idw(query: &Point, centers: &FieldSample<f64>, alpha: f64) -> Result<f64, TransferError> {
    if centers.is_empty() {
        return Err(TransferError::Empty { what: "center set" });
    }
    if !(alpha > 0.0) {
        return Err(TransferError::InvalidExponent(alpha));
    }
    let w = idw_weights(query, &centers.positions, alpha);
    Ok(w.iter().zip(&centers.values).map(|(w, v)| w * v).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingOptions {
    /// Nearest fluid centers used per structural node.
    pub k: usize,
    /// IDW exponent.
    pub alpha: f64,
    /// Re-pair once the interface has moved this fraction of the minimum fluid spacing.
    pub repair_fraction: f64,
}

impl Default for PairingOptions {
    fn default() -> Self {
        Self {
            k: 4,
            alpha: 2.0,
            repair_fraction: 0.1,
        }
    }
}

/// Orthogonal projection of a fluid point onto the structural polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Segment between structural nodes `segment` and `segment + 1`
    /// (node 0 itself when there is a single node).
    pub segment: usize,
    /// Position along the segment in [0, 1].
    pub t: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPairs {
    node_centers: Vec<Vec<(usize, f64)>>,
    projections: Vec<Projection>,
    tributary: Vec<f64>,
    structural_positions: Vec<Point>,
    fluid_positions: Vec<Point>,
    min_fluid_spacing: f64,
    repair_fraction: f64,
}

impl CouplingPairs {
    /// `(center index, weight)` pairs of a structural node; weights sum to one.
    pub fn node_centers(&self, node: usize) -> &[(usize, f64)] {
        &self.node_centers[node]
    }

    pub fn projection(&self, fluid_point: usize) -> &Projection {
        &self.projections[fluid_point]
    }

    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    /// Half the length of the segments adjacent to each structural node.
    pub fn tributary_lengths(&self) -> &[f64] {
        &self.tributary
    }

    pub fn structural_count(&self) -> usize {
        self.structural_positions.len()
    }

    pub fn fluid_count(&self) -> usize {
        self.fluid_positions.len()
    }

    pub fn structural_positions(&self) -> &[Point] {
        &self.structural_positions
    }

    pub fn fluid_positions(&self) -> &[Point] {
        &self.fluid_positions
    }

    pub fn min_fluid_spacing(&self) -> f64 {
        self.min_fluid_spacing
    }

    /// Motion beyond which the pairs are considered stale.
    pub fn repair_threshold(&self) -> f64 {
        self.repair_fraction * self.min_fluid_spacing
    }

    /// Largest displacement of `current` relative to `reference`.
    fn motion(reference: &[Point], current: &[Point]) -> f64 {
        reference
            .iter()
            .zip(current)
            .map(|(a, b)| distance(a, b))
            .fold(0.0, f64::max)
    }

    /// Whether structural nodes at `current` have moved past the re-pair threshold.
    pub fn is_stale(&self, current_structural: &[Point]) -> bool {
        Self::motion(&self.structural_positions, current_structural) > self.repair_threshold()
    }

    fn check_fresh(&self, reference: &[Point], current: &[Point]) -> Result<(), TransferError> {
        if reference.len() != current.len() {
            return Err(TransferError::SampleCount {
                expected: reference.len(),
                found: current.len(),
            });
        }
        let moved = Self::motion(reference, current);
        let threshold = self.repair_threshold();
        if moved > threshold {
            return Err(TransferError::StalePairs { moved, threshold });
        }
        Ok(())
    }
}

/// Builds IDW pairs for structural nodes and projections for fluid points.
pub fn pair_meshes(
    structural: &[Point],
    fluid: &[Point],
    opts: &PairingOptions,
) -> Result<CouplingPairs, TransferError> {
    if structural.is_empty() {
        return Err(TransferError::Empty { what: "structural node set" });
    }
    if fluid.is_empty() {
        return Err(TransferError::Empty { what: "fluid point set" });
    }
    if !(opts.alpha > 0.0) {
        return Err(TransferError::InvalidExponent(opts.alpha));
    }
    if fluid.len() > 1 && fluid.iter().all(|p| p == &fluid[0]) {
        return Err(TransferError::DegenerateGeometry(fluid.len()));
    }
    let k = opts.k.clamp(1, fluid.len());

    let node_centers = structural
        .iter()
        .map(|node| {
            let mut order: Vec<usize> = (0..fluid.len()).collect();
            // stable sort keeps lower indices first on equal distance
            order.sort_by(|&a, &b| {
                distance(node, &fluid[a]).total_cmp(&distance(node, &fluid[b]))
            });
            order.truncate(k);
            let near: Vec<Point> = order.iter().map(|&i| fluid[i]).collect();
            let w = idw_weights(node, &near, opts.alpha);
            order
                .into_iter()
                .zip(w)
                .filter(|(_, w)| *w > 0.0)
                .collect()
        })
        .collect();

    let projections = fluid.iter().map(|p| project(p, structural)).collect();

    let mut tributary = vec![0.0; structural.len()];
    for (i, pair) in structural.windows(2).enumerate() {
        let half = 0.5 * distance(&pair[0], &pair[1]);
        tributary[i] += half;
        tributary[i + 1] += half;
    }

    let mut min_spacing = f64::INFINITY;
    for i in 0..fluid.len() {
        for j in (i + 1)..fluid.len() {
            let d = distance(&fluid[i], &fluid[j]);
            if d > 0.0 && d < min_spacing {
                min_spacing = d;
            }
        }
    }
    if !min_spacing.is_finite() {
        // a single fluid point: fall back to the structural extent
        min_spacing = structural
            .windows(2)
            .map(|p| distance(&p[0], &p[1]))
            .fold(0.0, f64::max);
    }

    Ok(CouplingPairs {
        node_centers,
        projections,
        tributary,
        structural_positions: structural.to_vec(),
        fluid_positions: fluid.to_vec(),
        min_fluid_spacing: min_spacing,
        repair_fraction: opts.repair_fraction,
    })
}

fn project(p: &Point, nodes: &[Point]) -> Projection {
    if nodes.len() == 1 {
        return Projection {
            segment: 0,
            t: 0.0,
            distance: distance(p, &nodes[0]),
        };
    }
    let mut best = Projection {
        segment: 0,
        t: 0.0,
        distance: f64::INFINITY,
    };
    for (s, seg) in nodes.windows(2).enumerate() {
        let (a, b) = (seg[0], seg[1]);
        let e = [b[0] - a[0], b[1] - a[1]];
        let len2 = e[0] * e[0] + e[1] * e[1];
        let t = if len2 > 0.0 {
            (((p[0] - a[0]) * e[0] + (p[1] - a[1]) * e[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let foot = [a[0] + t * e[0], a[1] + t * e[1]];
        let d = distance(p, &foot);
        if d < best.distance {
            best = Projection {
                segment: s,
                t,
                distance: d,
            };
        }
    }
    best
}

/// Nodal point loads from fluid pressures: IDW pressure at each node times
/// its tributary length.
///
/// The sample positions are the current fluid point positions; pairs are
/// rejected as stale once they have moved past the re-pair threshold.
pub fn map_loads(pressures: &FieldSample<f64>, pairs: &CouplingPairs) -> Result<Vec<f64>, TransferError> {
    pairs.check_fresh(&pairs.fluid_positions, &pressures.positions)?;
    Ok(pairs
        .node_centers
        .iter()
        .zip(&pairs.tributary)
        .map(|(centers, trib)| {
            let p: f64 = centers.iter().map(|(j, w)| w * pressures.values[*j]).sum();
            p * trib
        })
        .collect())
}

/// Values that can be linearly interpolated along a segment.
pub trait Interpolant: Copy {
    fn lerp(a: Self, b: Self, t: f64) -> Self;
}

impl Interpolant for f64 {
    fn lerp(a: f64, b: f64, t: f64) -> f64 {
        a + t * (b - a)
    }
}

impl Interpolant for [f64; 2] {
    fn lerp(a: Self, b: Self, t: f64) -> Self {
        [f64::lerp(a[0], b[0], t), f64::lerp(a[1], b[1], t)]
    }
}

/// Fluid boundary displacements interpolated along each point's projected segment.
///
/// The sample positions are the current structural node positions.
pub fn map_motion<T: Interpolant>(
    displacements: &FieldSample<T>,
    pairs: &CouplingPairs,
) -> Result<Vec<T>, TransferError> {
    pairs.check_fresh(&pairs.structural_positions, &displacements.positions)?;
    let v = &displacements.values;
    Ok(pairs
        .projections
        .iter()
        .map(|pr| {
            if v.len() == 1 {
                v[0]
            } else {
                T::lerp(v[pr.segment], v[pr.segment + 1], pr.t)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize, length: f64, offset: f64) -> Vec<Point> {
        (0..n)
            .map(|i| [offset + length * i as f64 / (n - 1) as f64, 0.0])
            .collect()
    }

    fn cells(n: usize, length: f64) -> Vec<Point> {
        (0..n).map(|j| [length * (j as f64 + 0.5) / n as f64, 0.0]).collect()
    }

    #[test]
    fn idw_worked_example() {
        let s = FieldSample::new(vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]], vec![1.0, 2.0, 10.0])
            .unwrap();
        let v = idw(&[2.0, 0.0], &s, 2.0).unwrap();
        assert!((v - 12.25 / 2.25).abs() < 1e-12);
        let mid = FieldSample::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![0.0, 1.0]).unwrap();
        assert!((idw(&[0.5, 0.0], &mid, 2.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn idw_coincidence_and_errors() {
        let s = FieldSample::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![3.0, 7.0]).unwrap();
        assert_eq!(idw(&[1.0, 0.0], &s, 2.0).unwrap(), 7.0);
        assert_eq!(idw(&[1.0, 0.0], &s, 0.0), Err(TransferError::InvalidExponent(0.0)));
        let empty = FieldSample::<f64>::new(vec![], vec![]).unwrap();
        assert!(idw(&[0.0, 0.0], &empty, 2.0).is_err());
        assert!(FieldSample::new(vec![[0.0, 0.0]], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn single_node_single_center() {
        let pairs = pair_meshes(&[[0.0, 0.0]], &[[0.5, 0.5]], &PairingOptions::default()).unwrap();
        assert_eq!(pairs.node_centers(0), &[(0, 1.0)]);
        assert_eq!(pairs.projection(0).t, 0.0);
    }

    #[test]
    fn coincident_centers_flagged() {
        let err = pair_meshes(&line(3, 1.0, 0.0), &[[0.2, 0.0]; 5], &PairingOptions::default());
        assert_eq!(err, Err(TransferError::DegenerateGeometry(5)));
    }

    #[test]
    fn projections_inside_segments() {
        let structural = line(5, 1.0, 0.0);
        let fluid = cells(16, 1.0);
        let pairs = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
        for (p, pr) in fluid.iter().zip(pairs.projections()) {
            assert!((0.0..=1.0).contains(&pr.t));
            assert!(pr.distance < 1e-15);
            let x = structural[pr.segment][0] + pr.t * 0.25;
            assert!((x - p[0]).abs() < 1e-14);
        }
        for i in 0..5 {
            let w: f64 = pairs.node_centers(i).iter().map(|c| c.1).sum();
            assert!((w - 1.0).abs() < 1e-14);
            assert_eq!(pairs.node_centers(i).len(), 4);
            assert!(pairs.node_centers(i).iter().all(|c| c.1 > 0.0));
        }
    }

    #[test]
    fn uniform_pressure_conserved() {
        let structural = line(33, 0.35, 0.0);
        let fluid = cells(128, 0.35);
        let pairs = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
        let s = FieldSample::new(fluid.clone(), vec![250.0; 128]).unwrap();
        let loads = map_loads(&s, &pairs).unwrap();
        let total: f64 = loads.iter().sum();
        assert!((total / (250.0 * 0.35) - 1.0).abs() < 1e-6);
        let interior = loads[1];
        assert!(loads[1..32].iter().all(|l| (l - interior).abs() < 1e-10));
    }

    #[test]
    fn linear_ramp_resultant_and_moment() {
        let l = 0.35;
        let structural = line(33, l, 0.0);
        let fluid = cells(128, l);
        let pairs = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
        let (a, b) = (100.0, 2000.0);
        let values = fluid.iter().map(|p| a + b * p[0]).collect();
        let loads = map_loads(&FieldSample::new(fluid, values).unwrap(), &pairs).unwrap();
        let resultant: f64 = loads.iter().sum();
        let moment: f64 = loads.iter().zip(&structural).map(|(f, p)| f * p[0]).sum();
        let exact_resultant = a * l + b * l * l / 2.0;
        let exact_moment = a * l * l / 2.0 + b * l.powi(3) / 3.0;
        assert!((resultant / exact_resultant - 1.0).abs() < 0.02);
        assert!((moment / exact_moment - 1.0).abs() < 0.02);
    }

    #[test]
    fn localized_patch_loads_nearby_nodes_only() {
        let structural = line(11, 1.0, 0.0);
        let fluid = cells(100, 1.0);
        let pairs = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
        let values = fluid
            .iter()
            .map(|p| if (p[0] - 0.5).abs() < 0.03 { 1.0 } else { 0.0 })
            .collect();
        let loads = map_loads(&FieldSample::new(fluid, values).unwrap(), &pairs).unwrap();
        for (i, l) in loads.iter().enumerate() {
            if i == 5 {
                assert!(*l > 0.0);
            } else {
                assert_eq!(*l, 0.0);
            }
        }
    }

    #[test]
    fn motion_rigid_zero_and_linear() {
        let structural = line(10, 1.0, 0.0);
        let fluid: Vec<Point> = (0..100).map(|j| [j as f64 / 99.0, 0.0]).collect();
        let pairs = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
        let rigid = FieldSample::new(structural.clone(), vec![[0.1, -0.2]; 10]).unwrap();
        for m in map_motion(&rigid, &pairs).unwrap() {
            assert_eq!(m, [0.1, -0.2]);
        }
        let zero = FieldSample::new(structural.clone(), vec![0.0; 10]).unwrap();
        assert!(map_motion(&zero, &pairs).unwrap().iter().all(|v| *v == 0.0));
        let lin = FieldSample::new(
            structural.clone(),
            structural.iter().map(|p| 3.0 * p[0] - 1.0).collect(),
        )
        .unwrap();
        for (m, p) in map_motion(&lin, &pairs).unwrap().iter().zip(&fluid) {
            assert!((m - (3.0 * p[0] - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn stale_pairs_rejected() {
        let structural = line(5, 1.0, 0.0);
        let fluid = cells(20, 1.0);
        let pairs = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
        assert!((pairs.repair_threshold() - 0.005).abs() < 1e-12);
        let moved: Vec<Point> = structural.iter().map(|p| [p[0], 0.01]).collect();
        assert!(pairs.is_stale(&moved));
        let s = FieldSample::new(moved, vec![0.0; 5]).unwrap();
        assert!(matches!(map_motion(&s, &pairs), Err(TransferError::StalePairs { .. })));
        let nudged: Vec<Point> = structural.iter().map(|p| [p[0], 0.001]).collect();
        assert!(!pairs.is_stale(&nudged));
    }

    #[test]
    fn brute_force_projection_distance() {
        let n = 10;
        let curve = |s: f64| [s, 0.2 * (3.0 * s).sin()];
        let structural: Vec<Point> = (0..n).map(|i| curve(i as f64 / (n - 1) as f64)).collect();
        let fluid: Vec<Point> = (0..100).map(|j| curve((j as f64 + 0.5) / 100.0)).collect();
        let pairs = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
        let h = structural
            .windows(2)
            .map(|p| distance(&p[0], &p[1]))
            .fold(0.0, f64::max);
        for (p, pr) in fluid.iter().zip(pairs.projections()) {
            assert!(pr.distance <= h);
            // no segment is closer than the chosen one
            for s in 0..n - 1 {
                let other = project(p, &structural[s..s + 2]);
                assert!(other.distance >= pr.distance - 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn idw_is_convex_and_reproduces_constants(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -10.0f64..10.0), 1..12),
            q in (-6.0f64..6.0, -6.0f64..6.0),
            c in -1e3f64..1e3,
        ) {
            let positions: Vec<Point> = pts.iter().map(|p| [p.0, p.1]).collect();
            let values: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = FieldSample::new(positions.clone(), values).unwrap();
            let v = idw(&[q.0, q.1], &s, 2.0).unwrap();
            prop_assert!(v >= lo - 1e-12 * lo.abs().max(1.0) && v <= hi + 1e-12 * hi.abs().max(1.0));
            let n = positions.len();
            let cs = FieldSample::new(positions, vec![c; n]).unwrap();
            let vc = idw(&[q.0, q.1], &cs, 2.0).unwrap();
            prop_assert!((vc - c).abs() <= 1e-12 * c.abs().max(1e-300));
        }

        #[test]
        fn motion_mapping_is_linear(
            a in prop::collection::vec(-1.0f64..1.0, 8),
            b in prop::collection::vec(-1.0f64..1.0, 8),
        ) {
            let structural = line(8, 1.0, 0.0);
            let fluid = cells(37, 1.0);
            let pairs = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let ma = map_motion(&FieldSample::new(structural.clone(), a).unwrap(), &pairs).unwrap();
            let mb = map_motion(&FieldSample::new(structural.clone(), b).unwrap(), &pairs).unwrap();
            let ms = map_motion(&FieldSample::new(structural, sum).unwrap(), &pairs).unwrap();
            for i in 0..ms.len() {
                prop_assert!((ms[i] - ma[i] - mb[i]).abs() <= 1e-12);
            }
        }

        #[test]
        fn rigid_round_trip_preserves_constant_loads(
            shift in (-1.0f64..1.0, -1.0f64..1.0),
            p in 1.0f64..1e4,
        ) {
            let structural = line(9, 1.0, 0.0);
            let fluid = cells(40, 1.0);
            let base = pair_meshes(&structural, &fluid, &PairingOptions::default()).unwrap();
            let moved_s: Vec<Point> = structural.iter().map(|q| [q[0] + shift.0, q[1] + shift.1]).collect();
            let motion = map_motion(
                &FieldSample::new(structural.clone(), vec![[shift.0, shift.1]; 9]).unwrap(),
                &base,
            ).unwrap();
            let moved_f: Vec<Point> = fluid.iter().zip(&motion).map(|(q, m)| [q[0] + m[0], q[1] + m[1]]).collect();
            let moved = pair_meshes(&moved_s, &moved_f, &PairingOptions::default()).unwrap();
            let before = map_loads(&FieldSample::new(fluid, vec![p; 40]).unwrap(), &base).unwrap();
            let after = map_loads(&FieldSample::new(moved_f, vec![p; 40]).unwrap(), &moved).unwrap();
            for (x, y) in before.iter().zip(&after) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs());
            }
        }
    }
}
