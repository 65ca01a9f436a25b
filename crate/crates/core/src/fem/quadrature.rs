//! Quadrature rules on the reference triangle and the unit interval.
//! Weights are normalized to sum to one.

use crate::geometry::Point;

/// Degree-2 rule with interior points.
pub const TRI3: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

const A1: f64 = 0.059_715_871_789_769_82;
const B1: f64 = 0.470_142_064_105_115_1;
const A2: f64 = 0.797_426_985_353_087_3;
const B2: f64 = 0.101_286_507_323_456_3;
const W0: f64 = 0.225;
const W1: f64 = 0.132_394_152_788_506_2;
const W2: f64 = 0.125_939_180_544_827_1;

/// Degree-5 seven-point rule, used for error integrals.
pub const TRI7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
    ([A1, B1, B1], W1),
    ([B1, A1, B1], W1),
    ([B1, B1, A1], W1),
    ([A2, B2, B2], W2),
    ([B2, A2, B2], W2),
    ([B2, B2, A2], W2),
];

/// Two-point Gauss rule on `[0, 1]`.
pub fn gauss2() -> [(f64, f64); 2] {
    let d = 0.5 / 3f64.sqrt();
    [(0.5 - d, 0.5), (0.5 + d, 0.5)]
}

pub fn map_bary(coords: &[Point; 3], bary: &[f64; 3]) -> Point {
    [
        bary[0] * coords[0][0] + bary[1] * coords[1][0] + bary[2] * coords[2][0],
        bary[0] * coords[0][1] + bary[1] * coords[1][1] + bary[2] * coords[2][1],
    ]
}

pub fn lerp(a: Point, b: Point, s: f64) -> Point {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}
