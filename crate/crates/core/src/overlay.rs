//! Drawing plans on top of a color image. Everything is clipped to the
//! image, so glyphs partly off-screen are safe to draw.

use crate::detection::Detection;
use crate::imaging::{CameraIntrinsics, ColorImage};
use crate::mask::BBox;
use crate::sampling::GraspCandidate;
use crate::suction::SuctionCandidate;

pub const PASS: [u8; 3] = [40, 200, 60];
pub const FAIL: [u8; 3] = [220, 40, 40];
pub const SELECTED: [u8; 3] = [255, 220, 0];
pub const BOX: [u8; 3] = [40, 120, 255];

#[derive(Clone, Debug, PartialEq)]
pub enum Glyph {
    /// Jaw-to-jaw segment with short ticks across each jaw.
    Grasp { candidate: GraspCandidate, color: [u8; 3] },
    /// Circle at the suction point and an arrow along the projected normal.
    Suction { candidate: SuctionCandidate, color: [u8; 3] },
    Box { bbox: BBox, color: [u8; 3] },
}

impl Glyph {
    pub fn detection(d: &Detection) -> Self {
        Glyph::Box { bbox: d.bbox, color: BOX }
    }
}

fn put(img: &mut ColorImage, x: i64, y: i64, rgb: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.put(x as usize, y as usize, rgb);
    }
}

pub fn draw_line(img: &mut ColorImage, a: [f64; 2], b: [f64; 2], rgb: [u8; 3]) {
    let steps = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().max(1.0) as i64;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put(img, (a[0] + t * (b[0] - a[0])).round() as i64, (a[1] + t * (b[1] - a[1])).round() as i64, rgb);
    }
}

pub fn draw_circle(img: &mut ColorImage, c: [f64; 2], r: f64, rgb: [u8; 3]) {
    let n = (2.0 * std::f64::consts::PI * r).ceil().max(8.0) as usize;
    for i in 0..n {
        let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        put(img, (c[0] + r * t.cos()).round() as i64, (c[1] + r * t.sin()).round() as i64, rgb);
    }
}

pub fn draw_box(img: &mut ColorImage, b: &BBox, rgb: [u8; 3]) {
    let (x0, y0, x1, y1) = (b.min.x as f64, b.min.y as f64, b.max.x as f64, b.max.y as f64);
    draw_line(img, [x0, y0], [x1, y0], rgb);
    draw_line(img, [x1, y0], [x1, y1], rgb);
    draw_line(img, [x1, y1], [x0, y1], rgb);
    draw_line(img, [x0, y1], [x0, y0], rgb);
}

pub fn draw(img: &mut ColorImage, glyph: &Glyph, k: &CameraIntrinsics) {
    match glyph {
        Glyph::Grasp { candidate: g, color } => {
            let (a, b) = (g.jaw1.as_f64(), g.jaw2.as_f64());
            draw_line(img, a, b, *color);
            let axis = g.axis();
            let across = [-axis[1] * 6.0, axis[0] * 6.0];
            for p in [a, b] {
                draw_line(img, [p[0] - across[0], p[1] - across[1]], [p[0] + across[0], p[1] + across[1]], *color);
            }
        }
        Glyph::Suction { candidate: s, color } => {
            let c = s.pixel.as_f64();
            draw_circle(img, c, 7.0, *color);
            // tip of a 3 cm arrow along the normal, projected back
            let tip = crate::imaging::Point3::new(
                s.point.x + 0.03 * s.normal[0],
                s.point.y + 0.03 * s.normal[1],
                s.point.z + 0.03 * s.normal[2],
            );
            if let Ok((u, v)) = k.project(tip) {
                draw_line(img, c, [u, v], *color);
            }
        }
        Glyph::Box { bbox, color } => draw_box(img, bbox, *color),
    }
}

/// Copy of `base` with every glyph drawn, in order.
pub fn render_overlay(base: &ColorImage, glyphs: &[Glyph], k: &CameraIntrinsics) -> ColorImage {
    let mut img = base.clone();
    for g in glyphs {
        draw(&mut img, g, k);
    }
    img
}
