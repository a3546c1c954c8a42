//! Tagged triangular meshes of the magnet, the wrapped stripe and the
//! surrounding air disk.
//!
//! Region boundaries are inserted as constraint edges of a constrained
//! Delaunay triangulation, the stripe and magnet are pre-seeded with
//! structured points at the target resolution, and the result is refined
//! for angle quality. Circle vertices are laid out on an angular grid
//! anchored at the tangency point so that meshes for neighbouring wrap
//! angles share most of their structure.

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use thiserror::Error;

use crate::geometry::{GripperGeometry, Vec2, WrapPath};

/// Angle targeted by the Delaunay refinement; the accepted floor is [`MIN_ANGLE_DEG`].
const REFINE_ANGLE_DEG: f64 = 25.0;
pub const MIN_ANGLE_DEG: f64 = 20.0;
/// Boundary and seed spacing relative to `h_max`.
const SPACING_FACTOR: f64 = 0.75;
/// Angular grid step is `GRID_BASE_DEG / k` for an integer k.
const GRID_BASE_DEG: f64 = 5.0;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh parameters: {0}")]
    Params(String),
    #[error("h_max = {h_max} m exceeds the thinnest feature ({feature} m); use h_max <= {feature} m (at least two elements then fit across the stripe)")]
    TooCoarse { h_max: f64, feature: f64 },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("mesh quality target missed: {0}")]
    Quality(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Air,
    Mre,
    Pm,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Air => "air",
            Region::Mre => "mre",
            Region::Pm => "pm",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshParams {
    /// Target maximum edge length in the magnet and stripe.
    pub h_max: f64,
    /// Target maximum edge length in the air.
    pub h_air: f64,
    /// Air disk radius as a multiple of `r_frame + finger_length`.
    pub air_radius_factor: f64,
    /// Air gap below which the wedge between the free segment and the
    /// magnet is filled with elastomer.
    #[serde(default = "default_fillet_gap")]
    pub contact_fillet_gap: f64,
    /// Growth of the air element size with distance from the magnet and
    /// stripe: `h = min(h_air, h_max + grading * distance)`.
    #[serde(default = "default_grading")]
    pub grading: f64,
}

fn default_fillet_gap() -> f64 {
    0.2e-3
}

fn default_grading() -> f64 {
    0.3
}

impl Default for MeshParams {
    fn default() -> Self {
        Self {
            h_max: 0.5e-3,
            h_air: 20e-3,
            air_radius_factor: 5.0,
            contact_fillet_gap: default_fillet_gap(),
            grading: default_grading(),
        }
    }
}

impl MeshParams {
    pub fn validate(&self) -> Result<(), MeshError> {
        if !(self.h_max > 0.0 && self.h_max.is_finite()) {
            return Err(MeshError::Params(format!("h_max must be positive, got {}", self.h_max)));
        }
        if !(self.h_air >= self.h_max && self.h_air.is_finite()) {
            return Err(MeshError::Params(format!(
                "h_air ({}) must be finite and at least h_max ({})",
                self.h_air, self.h_max
            )));
        }
        if !(self.air_radius_factor >= 3.0 && self.air_radius_factor.is_finite()) {
            return Err(MeshError::Params(format!(
                "air_radius_factor must be >= 3, got {}",
                self.air_radius_factor
            )));
        }
        if !(self.contact_fillet_gap > 0.0 && self.contact_fillet_gap.is_finite()) {
            return Err(MeshError::Params(format!(
                "contact_fillet_gap must be positive, got {}",
                self.contact_fillet_gap
            )));
        }
        if !(self.grading > 0.0 && self.grading.is_finite()) {
            return Err(MeshError::Params(format!("grading must be positive, got {}", self.grading)));
        }
        Ok(())
    }

    /// Same parameters with every element size divided by `factor`.
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            h_max: self.h_max / factor,
            h_air: self.h_air / factor,
            grading: self.grading / factor,
            ..*self
        }
    }
}

/// Closed polygon; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub points: Vec<Vec2>,
}

impl Polygon {
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (p, q) = (self.points[i], self.points[(i + 1) % n]);
                p.x * q.y - q.x * p.y
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n).map(|i| (self.points[(i + 1) % n] - self.points[i]).norm()).sum()
    }

    /// Even-odd containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.points.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        if n < 3 {
            return false;
        }
        let seg = |i: usize| (self.points[i], self.points[(i + 1) % n]);
        let boxes: Vec<[f64; 4]> = (0..n)
            .map(|i| {
                let (a, b) = seg(i);
                [a.x.min(b.x), a.x.max(b.x), a.y.min(b.y), a.y.max(b.y)]
            })
            .collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (bi, bj) = (boxes[i], boxes[j]);
                if bi[1] < bj[0] || bj[1] < bi[0] || bi[3] < bj[2] || bj[3] < bi[2] {
                    continue;
                }
                let (a, b) = seg(i);
                let (c, d) = seg(j);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

fn orient(p: Vec2, q: Vec2, r: Vec2) -> f64 {
    (q - p).perp(&(r - p))
}

fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    let on = |p: Vec2, q: Vec2, r: Vec2, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(a, b, c, o1) || on(a, b, d, o2) || on(c, d, a, o3) || on(c, d, b, o4)
}

/// Region boundaries as index loops into a shared vertex list, plus
/// interior seed points.
#[derive(Debug, Clone)]
pub struct Outline {
    pub vertices: Vec<Vec2>,
    pub magnet_loop: Vec<usize>,
    pub mre_loop: Option<Vec<usize>>,
    pub air_loop: Vec<usize>,
    pub air_radius: f64,
    /// Stripe offset from the mid-line by half the thickness, without the
    /// contact fillet.
    pub stripe: Option<Polygon>,
    pub seeds: Vec<Vec2>,
    /// Smallest geometric feature the mesh has to resolve.
    pub thinnest_feature: f64,
}

impl Outline {
    fn polygon(&self, lp: &[usize]) -> Polygon {
        Polygon {
            points: lp.iter().map(|&i| self.vertices[i]).collect(),
        }
    }

    pub fn magnet_polygon(&self) -> Polygon {
        self.polygon(&self.magnet_loop)
    }

    /// Elastomer region: stripe plus contact fillet.
    pub fn mre_polygon(&self) -> Option<Polygon> {
        self.mre_loop.as_ref().map(|l| self.polygon(l))
    }

    pub fn air_polygon(&self) -> Polygon {
        self.polygon(&self.air_loop)
    }

    fn segments(&self) -> Vec<[usize; 2]> {
        let mut segs: Vec<[usize; 2]> = Vec::new();
        let loops = std::iter::once(&self.magnet_loop)
            .chain(self.mre_loop.iter())
            .chain(std::iter::once(&self.air_loop));
        for lp in loops {
            for k in 0..lp.len() {
                let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
                segs.push([a.min(b), a.max(b)]);
            }
        }
        segs.sort_unstable();
        segs.dedup();
        segs
    }

    /// Isolated uniformly magnetizable disk of `radius` in an air disk.
    pub fn magnet_in_air(radius: f64, air_radius: f64, p: &MeshParams) -> Result<Self, MeshError> {
        p.validate()?;
        if !(radius > 0.0 && air_radius > 3.0 * radius) {
            return Err(MeshError::Geometry(format!(
                "air radius {air_radius} must exceed three magnet radii ({radius})"
            )));
        }
        let mut b = OutlineBuilder::default();
        let delta = grid_step(radius, p.h_max);
        let n = (TAU / delta).round() as usize;
        let offsets: Vec<f64> = (0..n).map(|j| j as f64 * delta).collect();
        let magnet_loop: Vec<usize> = offsets.iter().map(|&a| b.polar(radius, a)).collect();
        let seeds = disk_seeds(radius, 0.0, delta, p.h_max);
        let air_loop = b.circle(air_radius, p.h_air);
        Ok(Outline {
            vertices: b.vertices,
            magnet_loop,
            mre_loop: None,
            air_loop,
            air_radius,
            stripe: None,
            seeds,
            thinnest_feature: 2.0 * radius,
        })
    }
}

#[derive(Default)]
struct OutlineBuilder {
    vertices: Vec<Vec2>,
}

impl OutlineBuilder {
    fn push(&mut self, p: Vec2) -> usize {
        self.vertices.push(p);
        self.vertices.len() - 1
    }

    fn polar(&mut self, r: f64, phi: f64) -> usize {
        self.push(Vec2::new(phi.cos(), phi.sin()) * r)
    }

    fn circle(&mut self, r: f64, h: f64) -> Vec<usize> {
        let n = ((TAU * r / h).ceil() as usize).max(64);
        (0..n).map(|k| self.polar(r, TAU * k as f64 / n as f64)).collect()
    }

    /// Points strictly between `a` and `b` at spacing at most `h`.
    fn between(&mut self, a: Vec2, b: Vec2, h: f64) -> Vec<usize> {
        let n = (((b - a).norm() / h).ceil() as usize).max(1);
        (1..n).map(|k| self.push(a + (b - a) * (k as f64 / n as f64))).collect()
    }
}

/// Angular step `GRID_BASE_DEG / k` whose arc length at radius `r` is at most
/// `SPACING_FACTOR * h`.
fn grid_step(r: f64, h: f64) -> f64 {
    let base = GRID_BASE_DEG.to_radians();
    let k = (base * r / (SPACING_FACTOR * h)).ceil().max(1.0);
    base / k
}

/// Concentric ring seeds inside a disk of `radius`, aligned with the
/// boundary grid `phi0 + j * delta` on the outermost ring.
fn disk_seeds(radius: f64, phi0: f64, delta: f64, h: f64) -> Vec<Vec2> {
    let dr = SPACING_FACTOR * h * 3f64.sqrt() / 2.0;
    let n_rings = (radius / dr).floor() as usize;
    let mut seeds = Vec::new();
    let boundary_count = (TAU / delta).round() as usize;
    for k in 1..n_rings {
        let rho = radius - k as f64 * dr;
        if rho < 0.5 * dr {
            break;
        }
        let want = ((TAU * rho / (SPACING_FACTOR * h)).ceil() as usize).max(6);
        // keep the first rings on the boundary grid, then thin out
        let count = if k <= 2 { boundary_count.min(want.max(boundary_count * 9 / 10)) } else { want };
        let shift = if k % 2 == 1 { 0.5 } else { 0.0 };
        for j in 0..count {
            let phi = phi0 + TAU * (j as f64 + shift) / count as f64;
            seeds.push(Vec2::new(phi.cos(), phi.sin()) * rho);
        }
    }
    seeds.push(Vec2::zeros());
    seeds
}

/// Region outlines for the magnet, the wrapped finger and the air disk.
pub fn build_geometry_outline(
    g: &GripperGeometry,
    path: &WrapPath,
    p: &MeshParams,
) -> Result<Outline, MeshError> {
    g.validate().map_err(|e| MeshError::Geometry(e.to_string()))?;
    p.validate()?;
    let a = g.magnet_radius();
    let t = g.finger_thickness;
    let ro = a + t;
    let theta = path.state.theta;
    let phi_t = path.tangent_angle();
    let u = path.tail_direction;
    let normal = Vec2::new(phi_t.cos(), phi_t.sin());
    let tail = if path.state.free_length < 1e-9 * g.finger_length {
        0.0
    } else {
        path.state.free_length
    };
    if (path.contact_radius - g.contact_radius()).abs() > 1e-12 * g.contact_radius() {
        return Err(MeshError::Geometry("wrap path does not belong to this geometry".into()));
    }

    let h = p.h_max;
    let delta = grid_step(ro, h);
    let n_grid = (TAU / delta).round() as usize;
    let n_layers = ((t / (SPACING_FACTOR * h)).ceil() as usize).max(2);
    let ds = 0.5 * (a + ro) * delta;
    let cap_spacing = t / n_layers as f64 * 1.0001;

    // Fillet wedge between the free segment's inner edge and the magnet.
    let gap = p.contact_fillet_gap;
    let mut s_fillet = if tail > 0.0 {
        ((a + gap).powi(2) - a * a).sqrt().min(tail)
    } else {
        0.0
    };
    if tail - s_fillet < 0.25 * ds {
        s_fillet = tail;
    }
    let q_offset = if s_fillet > 0.0 {
        TAU - (s_fillet / a).atan()
    } else {
        TAU
    };
    if theta >= q_offset - 0.5 * delta {
        return Err(MeshError::Geometry(format!(
            "finger tip at {:.2} deg runs into the free segment; stripe would overlap itself",
            theta.to_degrees()
        )));
    }

    // Circle offsets, counter-clockwise from the tangency point.
    let mut specials = vec![0.0];
    if theta > 0.0 {
        specials.push(theta);
    }
    if s_fillet > 0.0 {
        specials.push(q_offset);
    }
    let mut offsets: Vec<f64> = (0..n_grid)
        .map(|j| j as f64 * delta)
        .filter(|&o| {
            specials
                .iter()
                .all(|&s| (o - s).abs() > 0.25 * delta && (o - s).abs() < TAU - 0.25 * delta)
        })
        .chain(specials.iter().copied())
        .collect();
    offsets.sort_by(|x, y| x.partial_cmp(y).unwrap());
    offsets.dedup();

    let mut b = OutlineBuilder::default();
    let magnet_ids: Vec<usize> = offsets.iter().map(|&o| b.polar(a, phi_t + o)).collect();
    let idx_of = |o: f64| offsets.iter().position(|&x| x == o).unwrap();
    let i_tip = idx_of(theta);

    let arc_offsets: Vec<f64> = offsets.iter().copied().filter(|&o| o <= theta).collect();
    let outer_ids: Vec<usize> = arc_offsets.iter().map(|&o| b.polar(ro, phi_t + o)).collect();
    let tip_in = b.vertices[magnet_ids[i_tip]];
    let tip_out = b.vertices[*outer_ids.last().unwrap()];

    let t_in = normal * a;
    let t_out = normal * ro;
    // tail stations anchored at the tangency point
    let mut stations: Vec<f64> = Vec::new();
    if tail > 0.0 {
        let mut s = 0.0;
        while s < tail - 0.25 * ds {
            stations.push(s);
            s += ds;
        }
        stations.push(tail);
        if s_fillet < tail {
            stations.retain(|&s| s == 0.0 || (s - s_fillet).abs() > 0.25 * ds);
            stations.push(s_fillet);
            stations.sort_by(|x, y| x.partial_cmp(y).unwrap());
        }
    }

    let mut seeds = Vec::new();
    let layer = |k: usize| t * k as f64 / n_layers as f64;
    let mut mre: Vec<usize> = Vec::new();
    let mut stripe_pts: Vec<Vec2> = Vec::new();
    let outer_arc_pts: Vec<Vec2> = outer_ids.iter().rev().map(|&i| b.vertices[i]).collect();

    if tail > 0.0 {
        let e_in = t_in + u * tail;
        let e_out = t_out + u * tail;
        // inner edge from the fixed end back to the fillet drop point
        for &s in stations.iter().rev() {
            if s >= s_fillet {
                let id = b.push(t_in + u * s);
                mre.push(id);
            } else if s > 0.0 {
                seeds.push(t_in + u * s);
            }
        }
        // magnet circle from the fillet foot through the tangency point to the tip
        mre.extend(magnet_ids[idx_of(q_offset)..].iter());
        mre.extend(magnet_ids[..=i_tip].iter());
        mre.extend(b.between(tip_in, tip_out, cap_spacing));
        mre.extend(outer_ids.iter().rev());
        for &s in &stations[1..] {
            let id = b.push(t_out + u * s);
            mre.push(id);
        }
        mre.extend(b.between(e_out, e_in, cap_spacing));

        stripe_pts.push(e_in);
        stripe_pts.extend(arc_offsets.iter().map(|&o| b.vertices[magnet_ids[idx_of(o)]]));
        stripe_pts.extend(&outer_arc_pts);
        stripe_pts.push(e_out);

        for &s in &stations {
            if s == tail || (s == 0.0 && theta == 0.0) {
                continue;
            }
            for k in 1..n_layers {
                seeds.push(t_in + u * s + normal * layer(k));
            }
        }
    } else {
        // the whole finger lies on the magnet
        mre.extend(magnet_ids[..=i_tip].iter());
        mre.extend(b.between(tip_in, tip_out, cap_spacing));
        mre.extend(outer_ids.iter().rev());
        mre.extend(b.between(t_out, t_in, cap_spacing));
        stripe_pts.extend(arc_offsets.iter().map(|&o| b.vertices[magnet_ids[idx_of(o)]]));
        stripe_pts.extend(&outer_arc_pts);
    }
    for &o in &arc_offsets {
        if o == 0.0 || o == theta {
            continue;
        }
        let dir = Vec2::new((phi_t + o).cos(), (phi_t + o).sin());
        for k in 1..n_layers {
            seeds.push(dir * (a + layer(k)));
        }
    }

    let mut mre_poly = Polygon {
        points: mre.iter().map(|&i| b.vertices[i]).collect(),
    };
    if mre_poly.signed_area() < 0.0 {
        mre.reverse();
        mre_poly.points.reverse();
    }
    if !mre_poly.is_simple() {
        return Err(MeshError::Geometry(format!(
            "stripe outline self-intersects at wrap angle {:.2} deg",
            theta.to_degrees()
        )));
    }
    let stripe = Polygon { points: stripe_pts };

    seeds.extend(disk_seeds(a, phi_t, delta, h));
    let air_radius = p.air_radius_factor * (g.r_frame + g.finger_length);
    let air_loop = b.circle(air_radius, p.h_air);

    Ok(Outline {
        vertices: b.vertices,
        magnet_loop: magnet_ids,
        mre_loop: Some(mre),
        air_loop,
        air_radius,
        stripe: Some(stripe),
        seeds,
        thinnest_feature: t,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Vec2>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    /// Nodes on the outer air circle, ascending.
    pub boundary_nodes: Vec<usize>,
}

impl Mesh {
    pub fn signed_area(&self, e: usize) -> f64 {
        let [i, j, k] = self.triangles[e];
        let (p, q, r) = (self.nodes[i], self.nodes[j], self.nodes[k]);
        0.5 * orient(p, q, r)
    }

    pub fn centroid(&self, e: usize) -> Vec2 {
        let [i, j, k] = self.triangles[e];
        (self.nodes[i] + self.nodes[j] + self.nodes[k]) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|e| self.signed_area(e)).sum()
    }

    pub fn region_area(&self, r: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&e| self.regions[e] == r)
            .map(|e| self.signed_area(e))
            .sum()
    }

    fn edges_of(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.triangles[e];
        let (p, q, r) = (self.nodes[i], self.nodes[j], self.nodes[k]);
        [(q - p).norm(), (r - q).norm(), (p - r).norm()]
    }

    /// Smallest interior angle of element `e` in degrees.
    pub fn min_angle_deg(&self, e: usize) -> f64 {
        let [i, j, k] = self.triangles[e];
        let pts = [self.nodes[i], self.nodes[j], self.nodes[k]];
        (0..3)
            .map(|c| {
                let (p, q, r) = (pts[c], pts[(c + 1) % 3], pts[(c + 2) % 3]);
                let (v, w) = (q - p, r - p);
                v.perp(&w).abs().atan2(v.dot(&w)).to_degrees()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.triangles.len())
            .map(|e| self.min_angle_deg(e))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_edge_in(&self, r: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&e| self.regions[e] == r)
            .flat_map(|e| self.edges_of(e))
            .fold(0.0, f64::max)
    }

    /// Every edge used by exactly one triangle lies on the outer boundary.
    pub fn is_conforming(&self) -> bool {
        let mut count = std::collections::HashMap::new();
        for t in &self.triangles {
            for c in 0..3 {
                let (a, b) = (t[c], t[(c + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        let on_boundary: std::collections::HashSet<usize> = self.boundary_nodes.iter().copied().collect();
        count.iter().all(|(&(a, b), &n)| {
            n == 2 || (n == 1 && on_boundary.contains(&a) && on_boundary.contains(&b))
        })
    }

    /// Plain-text dump: node count, `x y` lines, element count, `i j k tag` lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.nodes.len())?;
        for p in &self.nodes {
            writeln!(w, "{} {}", p.x, p.y)?;
        }
        writeln!(w, "{}", self.triangles.len())?;
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            writeln!(w, "{} {} {} {}", t[0], t[1], t[2], r)?;
        }
        Ok(())
    }
}

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

fn to_spade(p: Vec2) -> Point2<f64> {
    Point2::new(p.x, p.y)
}

/// Constrained Delaunay triangulation of an outline with region tags.
pub fn triangulate(outline: &Outline, p: &MeshParams) -> Result<Mesh, MeshError> {
    p.validate()?;
    if p.h_max > outline.thinnest_feature {
        return Err(MeshError::TooCoarse {
            h_max: p.h_max,
            feature: outline.thinnest_feature,
        });
    }
    let magnet = outline.magnet_polygon();
    let mre = outline.mre_polygon();
    let classify = |c: Vec2| {
        if magnet.contains(c) {
            Region::Pm
        } else if mre.as_ref().is_some_and(|m| m.contains(c)) {
            Region::Mre
        } else {
            Region::Air
        }
    };

    let mut points: Vec<Point2<f64>> = outline.vertices.iter().map(|&v| to_spade(v)).collect();
    points.extend(outline.seeds.iter().map(|&v| to_spade(v)));
    let edges = outline.segments();
    let mut conflicts = 0usize;
    let mut cdt = Cdt::try_bulk_load_cdt(points, edges, |_| conflicts += 1)
        .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
    if conflicts > 0 {
        return Err(MeshError::Triangulation(format!(
            "{conflicts} region boundary segments intersect"
        )));
    }

    let air_area = 3f64.sqrt() / 4.0 * p.h_air * p.h_air;
    let refine = |cdt: &mut Cdt| {
        let budget = 40 * cdt.num_vertices() + 100_000;
        let params = RefinementParameters::<f64>::new()
            .with_angle_limit(AngleLimit::from_deg(REFINE_ANGLE_DEG))
            .with_max_allowed_area(air_area)
            .with_max_additional_vertices(budget);
        cdt.refine(params).refinement_complete
    };

    let feature_segments: Vec<(Vec2, Vec2)> = std::iter::once(&outline.magnet_loop)
        .chain(outline.mre_loop.iter())
        .flat_map(|lp| (0..lp.len()).map(move |k| (lp[k], lp[(k + 1) % lp.len()])))
        .map(|(i, j)| (outline.vertices[i], outline.vertices[j]))
        .collect();
    let target = |c: Vec2, r: Region| {
        if r != Region::Air {
            return p.h_max;
        }
        let d = feature_segments
            .iter()
            .map(|&(a, b)| point_segment_distance(c, a, b))
            .fold(f64::INFINITY, f64::min);
        (p.h_max + p.grading * d).min(p.h_air)
    };
    let mut complete = refine(&mut cdt);
    for _ in 0..40 {
        let mut inserts = Vec::new();
        for f in cdt.inner_faces() {
            let [a, b, c] = f.positions();
            let (a, b, c) = (Vec2::new(a.x, a.y), Vec2::new(b.x, b.y), Vec2::new(c.x, c.y));
            let centroid = (a + b + c) / 3.0;
            let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
            // cheap reject before the distance query
            if longest <= p.h_max {
                continue;
            }
            if longest > target(centroid, classify(centroid)) {
                inserts.push(centroid);
            }
        }
        if inserts.is_empty() {
            break;
        }
        for c in inserts {
            cdt.insert(to_spade(c))
                .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
        }
        complete = refine(&mut cdt);
    }
    if !complete {
        return Err(MeshError::Quality("refinement ran out of vertex budget".into()));
    }

    let nodes: Vec<Vec2> = cdt
        .vertices()
        .map(|v| {
            let q = v.position();
            Vec2::new(q.x, q.y)
        })
        .collect();
    let air = outline.air_polygon();
    let mut triangles = Vec::with_capacity(cdt.num_inner_faces());
    let mut regions = Vec::with_capacity(cdt.num_inner_faces());
    for f in cdt.inner_faces() {
        let [a, b, c] = f.vertices().map(|v| v.fix().index());
        let centroid = (nodes[a] + nodes[b] + nodes[c]) / 3.0;
        if !air.contains(centroid) {
            continue;
        }
        triangles.push([a, b, c]);
        regions.push(classify(centroid));
    }
    let mut boundary_nodes: Vec<usize> = cdt
        .convex_hull()
        .map(|e| e.from().fix().index())
        .collect();
    boundary_nodes.sort_unstable();
    boundary_nodes.dedup();

    let mesh = Mesh {
        nodes,
        triangles,
        regions,
        boundary_nodes,
    };
    let (worst_e, worst) = (0..mesh.triangles.len())
        .map(|e| (e, mesh.min_angle_deg(e)))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    if worst < MIN_ANGLE_DEG {
        let c = mesh.centroid(worst_e);
        return Err(MeshError::Quality(format!(
            "minimum angle {worst:.2} deg below {MIN_ANGLE_DEG} deg ({} element at ({:.6}, {:.6}) m)",
            mesh.regions[worst_e], c.x, c.y
        )));
    }
    Ok(mesh)
}

/// Outline plus triangulation for one wrap state.
pub fn mesh_configuration(g: &GripperGeometry, path: &WrapPath, p: &MeshParams) -> Result<Mesh, MeshError> {
    triangulate(&build_geometry_outline(g, path, p)?, p)
}

/// Mesh of the magnet alone at the same angular grid, with the stripe region
/// meshed but tagged as air.
pub fn strip_mre(mesh: &Mesh) -> Mesh {
    Mesh {
        regions: mesh
            .regions
            .iter()
            .map(|&r| if r == Region::Mre { Region::Air } else { r })
            .collect(),
        ..mesh.clone()
    }
}
