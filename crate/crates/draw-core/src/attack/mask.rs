//! Free-form tamper mask generation: unions of random brush strokes and
//! rectangles until the area fraction lands in the requested range, with
//! centers drawn uniformly outside a 5% corner band.

use ndarray::Array2;
use rand::Rng;

use crate::error::{DrawError, Result};
use crate::imaging::BinaryMask;

pub fn generate_freeform_mask(
    h: usize,
    w: usize,
    area_range: (f64, f64),
    rng: &mut impl Rng,
) -> Result<BinaryMask> {
    let (lo, hi) = area_range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(DrawError::InvalidArgument(format!(
            "invalid area range [{lo}, {hi}]"
        )));
    }
    if h < 8 || w < 8 {
        return Err(DrawError::Dimension(
            "mask generation needs at least 8x8 images".into(),
        ));
    }
    let mut grid = Array2::<f32>::zeros((h, w));
    if hi == 0.0 {
        return BinaryMask::from_data(grid);
    }
    let total = (h * w) as f64;
    // aim somewhere inside the range (bounded away from zero so the mask is
    // useful for training)
    let target = rng.gen_range(lo.max(0.05).min(hi)..=hi);
    let mut area = 0.0;
    for _ in 0..200 {
        let proposal = if rng.gen_bool(0.6) {
            brush_stroke(h, w, rng)
        } else {
            rectangle(h, w, rng)
        };
        // accept only while the hard cap holds
        let mut union = grid.clone();
        union.zip_mut_with(&proposal, |a, &b| *a = a.max(b));
        let union_area = f64::from(union.sum()) / total;
        if union_area <= hi {
            grid = union;
            area = union_area;
        }
        if area >= target {
            break;
        }
    }
    BinaryMask::from_data(grid)
}

/// Center position outside the 5% corner squares.
fn center(h: usize, w: usize, rng: &mut impl Rng) -> (f64, f64) {
    loop {
        let cy = rng.gen_range(0.0..h as f64);
        let cx = rng.gen_range(0.0..w as f64);
        let near_y = cy < 0.05 * h as f64 || cy > 0.95 * h as f64;
        let near_x = cx < 0.05 * w as f64 || cx > 0.95 * w as f64;
        if !(near_y && near_x) {
            return (cy, cx);
        }
    }
}

fn brush_stroke(h: usize, w: usize, rng: &mut impl Rng) -> Array2<f32> {
    let mut grid = Array2::<f32>::zeros((h, w));
    let (mut cy, mut cx) = center(h, w, rng);
    let vertices = rng.gen_range(3..=7);
    let radius = rng.gen_range(0.02..0.07) * w.min(h) as f64;
    let mut angle = rng.gen_range(0.0..std::f64::consts::TAU);
    for _ in 0..vertices {
        angle += rng.gen_range(-1.0..1.0);
        let len = rng.gen_range(0.05..0.2) * w.min(h) as f64;
        let ny = cy + angle.sin() * len;
        let nx = cx + angle.cos() * len;
        stamp_segment(&mut grid, cy, cx, ny, nx, radius);
        cy = ny.clamp(0.0, h as f64 - 1.0);
        cx = nx.clamp(0.0, w as f64 - 1.0);
    }
    grid
}

fn stamp_segment(grid: &mut Array2<f32>, y0: f64, x0: f64, y1: f64, x1: f64, r: f64) {
    let (h, w) = grid.dim();
    let steps = ((y1 - y0).hypot(x1 - x0).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let cy = y0 + (y1 - y0) * t;
        let cx = x0 + (x1 - x0) * t;
        let ylo = ((cy - r).floor().max(0.0)) as usize;
        let yhi = ((cy + r).ceil().min(h as f64 - 1.0)) as usize;
        let xlo = ((cx - r).floor().max(0.0)) as usize;
        let xhi = ((cx + r).ceil().min(w as f64 - 1.0)) as usize;
        for y in ylo..=yhi {
            for x in xlo..=xhi {
                if (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r {
                    grid[[y, x]] = 1.0;
                }
            }
        }
    }
}

fn rectangle(h: usize, w: usize, rng: &mut impl Rng) -> Array2<f32> {
    let mut grid = Array2::<f32>::zeros((h, w));
    let (cy, cx) = center(h, w, rng);
    let rh = rng.gen_range(0.08..0.3) * h as f64;
    let rw = rng.gen_range(0.08..0.3) * w as f64;
    let y0 = (cy - rh / 2.0).max(0.0) as usize;
    let y1 = ((cy + rh / 2.0) as usize).min(h - 1);
    let x0 = (cx - rw / 2.0).max(0.0) as usize;
    let x1 = ((cx + rw / 2.0) as usize).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            grid[[y, x]] = 1.0;
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_range_gives_zero_mask() {
        let mut rng = stream(0, "mask", 0);
        let m = generate_freeform_mask(64, 64, (0.0, 0.0), &mut rng).unwrap();
        assert!(!m.any());
    }

    #[test]
    fn areas_respect_cap_and_mean_range() {
        let mut total = 0.0;
        let n = 300;
        for i in 0..n {
            let mut rng = stream(1, "mask", i);
            let m = generate_freeform_mask(64, 64, (0.0, 0.3), &mut rng).unwrap();
            let a = m.area();
            assert!(a <= 0.3 + 1e-9, "area {a} exceeds cap");
            assert!(m.is_binary());
            total += a;
        }
        let mean = total / n as f64;
        assert!((0.05..=0.30).contains(&mean), "mean area {mean}");
    }

    #[test]
    fn fixed_seed_reproduces_bits() {
        let mut r1 = stream(7, "mask", 3);
        let mut r2 = stream(7, "mask", 3);
        let a = generate_freeform_mask(48, 32, (0.0, 0.3), &mut r1).unwrap();
        let b = generate_freeform_mask(48, 32, (0.0, 0.3), &mut r2).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn infeasible_range_rejected() {
        let mut rng = stream(0, "mask", 0);
        assert!(generate_freeform_mask(64, 64, (0.4, 0.2), &mut rng).is_err());
        assert!(generate_freeform_mask(4, 4, (0.0, 0.3), &mut rng).is_err());
    }
}
