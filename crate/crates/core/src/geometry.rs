//! Gripper cross-section and the rolled configuration of a single finger.
//!
//! Coordinates are in metres with the magnet centre at the origin. The stripe
//! comes in from the anchor side along a straight line tangent to the contact
//! circle and then winds counter-clockwise around the magnet. The contact
//! circle is the stripe mid-line, `d_pm / 2 + finger_thickness / 2`.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Default guard kept between the wound tip and the tangency point.
pub const DEFAULT_WRAP_GAP: f64 = 5.0 * PI / 180.0;

/// Relative tolerance on polyline length versus finger length.
const PATH_LENGTH_RTOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("wrap angle {theta} rad outside [0, {max}] rad")]
    WrapOutOfRange { theta: f64, max: f64 },
    #[error("anchor at distance {distance} m lies inside the contact circle of radius {radius} m")]
    AnchorInside { distance: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperGeometry {
    /// Mounting-frame radius, the circle through the magnet centres.
    pub r_frame: f64,
    /// Permanent magnet outer diameter.
    pub d_pm: f64,
    /// Finger width; also the extrusion depth of the plane model.
    pub width: f64,
    pub finger_length: f64,
    pub finger_thickness: f64,
    #[serde(default = "default_fingers")]
    pub n_fingers: usize,
}

fn default_fingers() -> usize {
    3
}

impl Default for GripperGeometry {
    /// Prototype dimensions (thickness at the middle of the 2-4 mm range).
    fn default() -> Self {
        Self {
            r_frame: 18e-3,
            d_pm: 20e-3,
            width: 15e-3,
            finger_length: 60e-3,
            finger_thickness: 3e-3,
            n_fingers: 3,
        }
    }
}

impl GripperGeometry {
    pub fn new(
        r_frame: f64,
        d_pm: f64,
        width: f64,
        finger_length: f64,
        finger_thickness: f64,
        n_fingers: usize,
    ) -> Result<Self, GeometryError> {
        let g = Self {
            r_frame,
            d_pm,
            width,
            finger_length,
            finger_thickness,
            n_fingers,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let lengths = [
            ("r_frame", self.r_frame),
            ("d_pm", self.d_pm),
            ("width", self.width),
            ("finger_length", self.finger_length),
            ("finger_thickness", self.finger_thickness),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::Invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.n_fingers < 2 {
            return Err(GeometryError::Invalid(format!(
                "n_fingers must be at least 2, got {}",
                self.n_fingers
            )));
        }
        if self.r_frame <= self.d_pm / 2.0 {
            return Err(GeometryError::Invalid(format!(
                "r_frame ({}) must exceed d_pm / 2 ({}); magnets would meet at the centre",
                self.r_frame,
                self.d_pm / 2.0
            )));
        }
        Ok(())
    }

    pub fn magnet_radius(&self) -> f64 {
        self.d_pm / 2.0
    }

    /// Radius of the stripe mid-line where it lies on the magnet.
    pub fn contact_radius(&self) -> f64 {
        self.d_pm / 2.0 + self.finger_thickness / 2.0
    }

    /// Largest cylindrical object admitted in the open state.
    pub fn open_radius(&self) -> f64 {
        self.r_frame - self.d_pm / 2.0
    }

    /// Smallest circle enclosed by the three finger faces in the closed state.
    pub fn close_radius(&self) -> Result<f64, GeometryError> {
        if self.n_fingers != 3 {
            return Err(GeometryError::Unsupported(format!(
                "closed radius relation holds for 3 fingers only, got {}",
                self.n_fingers
            )));
        }
        Ok(3f64.sqrt() / 6.0 * self.width)
    }

    pub fn max_wrap_angle(&self) -> f64 {
        self.max_wrap_angle_with_gap(DEFAULT_WRAP_GAP)
    }

    /// Wrap angle at which the whole finger lies on the contact circle,
    /// capped at one turn minus `gap`.
    pub fn max_wrap_angle_with_gap(&self, gap: f64) -> f64 {
        (self.finger_length / self.contact_radius()).min(TAU - gap)
    }

    /// Anchor used when none is given: the tail leaves the bottom of the
    /// magnet towards -x and is straight for the full finger length at zero wrap.
    pub fn default_anchor(&self) -> Vec2 {
        Vec2::new(-self.finger_length, -self.contact_radius())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrapState {
    pub theta: f64,
    pub arc_length: f64,
    pub free_length: f64,
}

/// Stripe mid-line for one wrap angle.
#[derive(Debug, Clone, PartialEq)]
pub struct WrapPath {
    /// Mid-line from the fixed end through the tangency point to the wound tip.
    pub polyline: Vec<Vec2>,
    /// Angular span `(start, end)` of the contact arc, counter-clockwise.
    pub contact_span: (f64, f64),
    pub state: WrapState,
    pub contact_radius: f64,
    /// Unit vector pointing from the tangency point along the free segment.
    pub tail_direction: Vec2,
}

impl WrapPath {
    pub fn tangent_angle(&self) -> f64 {
        self.contact_span.0
    }

    pub fn length(&self) -> f64 {
        self.polyline.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Build the mid-line of the finger wrapped by `theta` around the magnet.
///
/// `anchor` fixes the direction of the free segment: it runs along the line
/// through `anchor` tangent to the contact circle, and has length
/// `finger_length - contact_radius * theta`.
pub fn wrap_path(g: &GripperGeometry, theta: f64, anchor: Vec2) -> Result<WrapPath, GeometryError> {
    g.validate()?;
    let max = g.max_wrap_angle();
    if !(theta.is_finite() && (0.0..=max).contains(&theta)) {
        return Err(GeometryError::WrapOutOfRange { theta, max });
    }
    let rc = g.contact_radius();
    let dist = anchor.norm();
    if dist <= rc {
        return Err(GeometryError::AnchorInside {
            distance: dist,
            radius: rc,
        });
    }

    // Tangency point for counter-clockwise winding seen from the anchor.
    let phi_t = anchor.y.atan2(anchor.x) + (rc / dist).acos();
    let radial = Vec2::new(phi_t.cos(), phi_t.sin());
    let tangent_pt = radial * rc;
    let tail_direction = Vec2::new(radial.y, -radial.x);

    let arc_length = (rc * theta).min(g.finger_length);
    let free_length = (g.finger_length - arc_length).max(0.0);
    let fixed_end = tangent_pt + tail_direction * free_length;

    // Chord error of n segments over theta is theta^2 / (24 n^2) relative.
    let mut n_arc = ((theta / (24.0 * PATH_LENGTH_RTOL).sqrt()).ceil() as usize).max(1);
    let mut polyline = Vec::new();
    loop {
        polyline.clear();
        polyline.push(fixed_end);
        if free_length > 0.0 {
            polyline.push(tangent_pt);
        }
        if theta > 0.0 {
            for k in 1..=n_arc {
                let phi = phi_t + theta * k as f64 / n_arc as f64;
                polyline.push(Vec2::new(phi.cos(), phi.sin()) * rc);
            }
        }
        let len: f64 = polyline.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        if ((len - g.finger_length) / g.finger_length).abs() <= PATH_LENGTH_RTOL || theta == 0.0 {
            break;
        }
        n_arc *= 2;
    }

    Ok(WrapPath {
        polyline,
        contact_span: (phi_t, phi_t + theta),
        state: WrapState {
            theta,
            arc_length,
            free_length,
        },
        contact_radius: rc,
        tail_direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mm(v: f64) -> f64 {
        v * 1e-3
    }

    fn table1() -> GripperGeometry {
        GripperGeometry::default()
    }

    #[test]
    fn open_radius_examples() {
        let g = table1();
        assert_relative_eq!(g.open_radius(), mm(8.0), max_relative = 1e-12);
        let g = GripperGeometry { r_frame: mm(25.0), d_pm: mm(10.0), ..table1() };
        assert_relative_eq!(g.open_radius(), mm(20.0), max_relative = 1e-12);
    }

    #[test]
    fn touching_magnets_rejected() {
        let g = GripperGeometry { r_frame: mm(10.0), ..table1() };
        assert_eq!(g.open_radius(), 0.0);
        assert!(matches!(g.validate(), Err(GeometryError::Invalid(_))));
    }

    #[test]
    fn close_radius_examples() {
        assert_relative_eq!(table1().close_radius().unwrap(), mm(4.330127), max_relative = 1e-6);
        let g = GripperGeometry { width: mm(6.0), ..table1() };
        assert_relative_eq!(g.close_radius().unwrap(), mm(3f64.sqrt()), max_relative = 1e-12);
        let g = GripperGeometry { width: 0.0, ..table1() };
        assert!(g.validate().is_err());
        let two = GripperGeometry { n_fingers: 2, ..table1() };
        assert!(matches!(two.close_radius(), Err(GeometryError::Unsupported(_))));
    }

    #[test]
    fn max_wrap_examples() {
        let g = table1();
        assert_relative_eq!(g.max_wrap_angle(), 60.0 / 11.5, max_relative = 1e-12);
        assert!((g.max_wrap_angle().to_degrees() - 299.0).abs() < 0.5);

        let short = GripperGeometry { finger_length: mm(0.001), ..table1() };
        assert_relative_eq!(short.max_wrap_angle(), 0.001 / 11.5, max_relative = 1e-12);

        let thin = GripperGeometry {
            finger_thickness: 1e-12,
            finger_length: PI * mm(20.0) / 2.0,
            ..table1()
        };
        assert_relative_eq!(thin.max_wrap_angle(), PI, max_relative = 1e-9);

        let long = GripperGeometry { finger_length: 1.0, ..table1() };
        assert_relative_eq!(long.max_wrap_angle(), TAU - DEFAULT_WRAP_GAP, max_relative = 1e-12);
    }

    #[test]
    fn straight_path_at_zero_wrap() {
        let g = table1();
        let p = wrap_path(&g, 0.0, g.default_anchor()).unwrap();
        assert_eq!(p.polyline.len(), 2);
        assert_relative_eq!(p.state.free_length, g.finger_length);
        assert_relative_eq!(p.length(), g.finger_length, max_relative = 1e-12);
        // default anchor coincides with the fixed end at zero wrap
        assert_relative_eq!((p.polyline[0] - g.default_anchor()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn half_turn_lengths() {
        let g = table1();
        let p = wrap_path(&g, PI, g.default_anchor()).unwrap();
        assert_relative_eq!(p.state.arc_length, mm(11.5) * PI, max_relative = 1e-12);
        assert_relative_eq!(p.state.free_length, mm(60.0) - mm(11.5) * PI, max_relative = 1e-12);
        assert!((p.state.arc_length - mm(36.13)).abs() < mm(0.01));
        assert!((p.state.free_length - mm(23.87)).abs() < mm(0.01));
    }

    #[test]
    fn full_consumption_at_max_wrap() {
        let g = table1();
        let p = wrap_path(&g, g.max_wrap_angle(), g.default_anchor()).unwrap();
        assert!(p.state.free_length.abs() <= 1e-9 * g.finger_length);
    }

    #[test]
    fn contact_points_on_midline_circle() {
        let g = table1();
        let p = wrap_path(&g, 2.0, g.default_anchor()).unwrap();
        let rc = g.contact_radius();
        for pt in &p.polyline[1..] {
            assert!(((pt.norm() - rc) / rc).abs() < 1e-9);
        }
    }

    #[test]
    fn path_errors() {
        let g = table1();
        assert!(matches!(
            wrap_path(&g, -0.1, g.default_anchor()),
            Err(GeometryError::WrapOutOfRange { .. })
        ));
        assert!(matches!(
            wrap_path(&g, 6.0, g.default_anchor()),
            Err(GeometryError::WrapOutOfRange { .. })
        ));
        assert!(matches!(
            wrap_path(&g, 1.0, Vec2::new(0.005, 0.0)),
            Err(GeometryError::AnchorInside { .. })
        ));
    }

    fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
        let orient = |p: Vec2, q: Vec2, r: Vec2| (q - p).perp(&(r - p));
        let (o1, o2) = (orient(a, b, c), orient(a, b, d));
        let (o3, o4) = (orient(c, d, a), orient(c, d, b));
        o1 * o2 < 0.0 && o3 * o4 < 0.0
    }

    proptest! {
        #[test]
        fn open_radius_monotone(rf in 0.011f64..0.1, d in 0.005f64..0.02, dr in 1e-4f64..0.01) {
            let g = GripperGeometry { r_frame: rf, d_pm: d, ..table1() };
            let wider = GripperGeometry { r_frame: rf + dr, ..g };
            let bigger = GripperGeometry { d_pm: d + dr, ..g };
            prop_assert!(wider.open_radius() > g.open_radius());
            prop_assert!(bigger.open_radius() < g.open_radius());
        }

        #[test]
        fn close_radius_linear(w in 1e-3f64..0.1) {
            let g = GripperGeometry { width: w, ..table1() };
            let g2 = GripperGeometry { width: 2.0 * w, ..table1() };
            prop_assert_eq!(g2.close_radius().unwrap(), 2.0 * g.close_radius().unwrap());
        }

        #[test]
        fn path_length_and_monotone_free_length(t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let g = table1();
            let max = g.max_wrap_angle();
            let (lo, hi) = if t1 < t2 { (t1 * max, t2 * max) } else { (t2 * max, t1 * max) };
            let a = wrap_path(&g, lo, g.default_anchor()).unwrap();
            let b = wrap_path(&g, hi, g.default_anchor()).unwrap();
            for p in [&a, &b] {
                prop_assert!(((p.length() - g.finger_length) / g.finger_length).abs() <= 1e-6);
                let s = p.state;
                prop_assert!(((s.arc_length + s.free_length - g.finger_length) / g.finger_length).abs() <= 1e-9);
            }
            if hi > lo {
                prop_assert!(a.state.free_length > b.state.free_length);
            }
        }

        #[test]
        fn path_is_simple(t in 0.0f64..1.0) {
            let g = table1();
            let p = wrap_path(&g, t * g.max_wrap_angle(), g.default_anchor()).unwrap();
            let pts = &p.polyline;
            // sparse subsample keeps the quadratic check quick
            let step = (pts.len() / 200).max(1);
            let sub: Vec<Vec2> = pts.iter().step_by(step).copied().chain(std::iter::once(*pts.last().unwrap())).collect();
            for i in 0..sub.len().saturating_sub(1) {
                for j in (i + 2)..sub.len().saturating_sub(1) {
                    prop_assert!(!segments_cross(sub[i], sub[i + 1], sub[j], sub[j + 1]));
                }
            }
        }
    }
}
