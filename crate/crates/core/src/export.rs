// SPDX-License-Identifier: Apache-2.0

//! ASCII PCD export of map points for external viewers.

use std::fmt::Write as _;

use crate::classify::{Label, MapPoint};

/// Numeric class code stored in the `label` field.
pub fn label_code(label: Label) -> u32 {
    match label {
        Label::I => 0,
        Label::G => 1,
        Label::R => 2,
        Label::O => 3,
        Label::U => 4,
    }
}

/// Renders points as an unorganized ASCII PCD (v0.7) cloud with fields
/// `x y z intensity label`.
pub fn to_pcd(points: &[MapPoint]) -> String {
    let n = points.len();
    let mut out = String::with_capacity(256 + 48 * n);
    out.push_str("# .PCD v0.7 - Point Cloud Data file format\n");
    out.push_str("VERSION 0.7\nFIELDS x y z intensity label\nSIZE 4 4 4 4 4\nTYPE F F F F U\nCOUNT 1 1 1 1 1\n");
    let _ = write!(out, "WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n");
    for p in points {
        let _ = writeln!(
            out,
            "{:.4} {:.4} {:.4} {:.1} {}",
            p.position.x,
            p.position.y,
            p.position.z,
            p.intensity,
            label_code(p.label)
        );
    }
    out
}
