//! Bilinear affine resampling between an object canvas and the image frame.
//!
//! Coordinates are normalized to [-1, 1] with pixel centers at
//! (2i + 1)/n - 1, so a unit transform between equal-sized grids is an exact
//! copy. Samples outside the source grid read as zero.
//!
//! `Paste` maps a small canvas onto the image (decoder direction); `Crop`
//! extracts a glimpse from the image (encoder direction). Both directions are
//! differentiable with respect to the source grid and the pose.

use crate::real::{fl, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarpDir {
    /// Output pixel (u, v) samples the input at ((u - tx)/ex, (v - ty)/ey).
    Paste,
    /// Output pixel (p, q) samples the input at (ex*p + tx, ey*q + ty).
    Crop,
}

/// Pose per image: x/y half-extents and x/y translations, normalized.
#[derive(Clone, Copy, Debug)]
pub struct Pose<F> {
    pub ex: F,
    pub ey: F,
    pub tx: F,
    pub ty: F,
}

#[inline]
fn center<F: Real>(i: usize, n: usize) -> F {
    fl::<F>((2 * i + 1) as f64 / n as f64 - 1.0)
}

/// Source pixel coordinate and its derivatives w.r.t. (extent, translation).
#[inline]
fn source_coord<F: Real>(out_c: F, extent: F, trans: F, src_n: usize, dir: WarpDir) -> (F, F, F) {
    let half = fl::<F>(src_n as f64 / 2.0);
    match dir {
        WarpDir::Paste => {
            let p = (out_c - trans) / extent;
            let c = (p + F::one()) * half - fl::<F>(0.5);
            // dc/dextent, dc/dtrans
            (c, -p * half / extent, -half / extent)
        }
        WarpDir::Crop => {
            let u = extent * out_c + trans;
            let c = (u + F::one()) * half - fl::<F>(0.5);
            (c, out_c * half, half)
        }
    }
}

/// Forward warp. `input` is [b, h, w, c] flattened, `poses` one per image,
/// output is [b, out_h, out_w, c].
pub fn warp_forward<F: Real>(
    input: &[F],
    (b, h, w, c): (usize, usize, usize, usize),
    poses: &[Pose<F>],
    (out_h, out_w): (usize, usize),
    dir: WarpDir,
) -> Vec<F> {
    assert_eq!(input.len(), b * h * w * c);
    assert_eq!(poses.len(), b);
    let mut out = vec![F::zero(); b * out_h * out_w * c];
    for (bi, pose) in poses.iter().enumerate() {
        let src = &input[bi * h * w * c..(bi + 1) * h * w * c];
        let dst = &mut out[bi * out_h * out_w * c..(bi + 1) * out_h * out_w * c];
        for oy in 0..out_h {
            let (cy, _, _) = source_coord(center::<F>(oy, out_h), pose.ey, pose.ty, h, dir);
            let y0 = cy.floor();
            let fy = cy - y0;
            let y0i = y0.f64() as isize;
            for ox in 0..out_w {
                let (cx, _, _) = source_coord(center::<F>(ox, out_w), pose.ex, pose.tx, w, dir);
                let x0 = cx.floor();
                let fx = cx - x0;
                let x0i = x0.f64() as isize;
                let w00 = (F::one() - fx) * (F::one() - fy);
                let w10 = fx * (F::one() - fy);
                let w01 = (F::one() - fx) * fy;
                let w11 = fx * fy;
                for ch in 0..c {
                    let pick = |yy: isize, xx: isize| -> F {
                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                            F::zero()
                        } else {
                            src[(yy as usize * w + xx as usize) * c + ch]
                        }
                    };
                    let v = w00 * pick(y0i, x0i)
                        + w10 * pick(y0i, x0i + 1)
                        + w01 * pick(y0i + 1, x0i)
                        + w11 * pick(y0i + 1, x0i + 1);
                    dst[(oy * out_w + ox) * c + ch] = v;
                }
            }
        }
    }
    out
}

/// Backward warp: gradients w.r.t. the input grid and the per-image pose.
#[allow(clippy::too_many_arguments)]
pub fn warp_backward<F: Real>(
    input: &[F],
    (b, h, w, c): (usize, usize, usize, usize),
    poses: &[Pose<F>],
    (out_h, out_w): (usize, usize),
    dir: WarpDir,
    grad_out: &[F],
) -> (Vec<F>, Vec<Pose<F>>) {
    assert_eq!(grad_out.len(), b * out_h * out_w * c);
    let mut g_in = vec![F::zero(); input.len()];
    let mut g_pose = vec![
        Pose { ex: F::zero(), ey: F::zero(), tx: F::zero(), ty: F::zero() };
        b
    ];
    for (bi, pose) in poses.iter().enumerate() {
        let src = &input[bi * h * w * c..(bi + 1) * h * w * c];
        let gsrc_base = bi * h * w * c;
        let gout = &grad_out[bi * out_h * out_w * c..(bi + 1) * out_h * out_w * c];
        let gp = &mut g_pose[bi];
        for oy in 0..out_h {
            let (cy, dcy_de, dcy_dt) = source_coord(center::<F>(oy, out_h), pose.ey, pose.ty, h, dir);
            let y0 = cy.floor();
            let fy = cy - y0;
            let y0i = y0.f64() as isize;
            for ox in 0..out_w {
                let (cx, dcx_de, dcx_dt) =
                    source_coord(center::<F>(ox, out_w), pose.ex, pose.tx, w, dir);
                let x0 = cx.floor();
                let fx = cx - x0;
                let x0i = x0.f64() as isize;
                let w00 = (F::one() - fx) * (F::one() - fy);
                let w10 = fx * (F::one() - fy);
                let w01 = (F::one() - fx) * fy;
                let w11 = fx * fy;
                for ch in 0..c {
                    let g = gout[(oy * out_w + ox) * c + ch];
                    if g == F::zero() {
                        continue;
                    }
                    let idx = |yy: isize, xx: isize| -> Option<usize> {
                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                            None
                        } else {
                            Some((yy as usize * w + xx as usize) * c + ch)
                        }
                    };
                    let pick = |yy: isize, xx: isize| -> F {
                        idx(yy, xx).map_or(F::zero(), |i| src[i])
                    };
                    let v00 = pick(y0i, x0i);
                    let v10 = pick(y0i, x0i + 1);
                    let v01 = pick(y0i + 1, x0i);
                    let v11 = pick(y0i + 1, x0i + 1);
                    // Input gradient: scatter the bilinear weights.
                    if let Some(i) = idx(y0i, x0i) {
                        g_in[gsrc_base + i] = g_in[gsrc_base + i] + g * w00;
                    }
                    if let Some(i) = idx(y0i, x0i + 1) {
                        g_in[gsrc_base + i] = g_in[gsrc_base + i] + g * w10;
                    }
                    if let Some(i) = idx(y0i + 1, x0i) {
                        g_in[gsrc_base + i] = g_in[gsrc_base + i] + g * w01;
                    }
                    if let Some(i) = idx(y0i + 1, x0i + 1) {
                        g_in[gsrc_base + i] = g_in[gsrc_base + i] + g * w11;
                    }
                    // Pose gradient via the interpolant's spatial derivative.
                    let dv_dcx = (F::one() - fy) * (v10 - v00) + fy * (v11 - v01);
                    let dv_dcy = (F::one() - fx) * (v01 - v00) + fx * (v11 - v10);
                    gp.ex = gp.ex + g * dv_dcx * dcx_de;
                    gp.tx = gp.tx + g * dv_dcx * dcx_dt;
                    gp.ey = gp.ey + g * dv_dcy * dcy_de;
                    gp.ty = gp.ty + g * dv_dcy * dcy_dt;
                }
            }
        }
    }
    (g_in, g_pose)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_paste_between_equal_grids_is_identity() {
        let (h, w) = (5, 7);
        let input: Vec<f64> = (0..h * w).map(|i| i as f64 * 0.1).collect();
        let pose = Pose { ex: 1.0, ey: 1.0, tx: 0.0, ty: 0.0 };
        let out = warp_forward(&input, (1, h, w, 1), &[pose], (h, w), WarpDir::Paste);
        for (a, b) in input.iter().zip(out.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_off_canvas_paste_is_zero() {
        let input = vec![1.0f64; 16];
        let pose = Pose { ex: 0.2, ey: 0.2, tx: 5.0, ty: 0.0 };
        let out = warp_forward(&input, (1, 4, 4, 1), &[pose], (8, 8), WarpDir::Paste);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn crop_then_identity_roundtrip_center() {
        // Cropping the center half and pasting it back at the same pose keeps
        // the center region (up to interpolation) and zeroes nothing inside.
        let (hw, g) = (8, 4);
        let input: Vec<f64> = (0..hw * hw).map(|i| (i % 13) as f64).collect();
        let pose = Pose { ex: 0.5, ey: 0.5, tx: 0.0, ty: 0.0 };
        let glimpse = warp_forward(&input, (1, hw, hw, 1), &[pose], (g, g), WarpDir::Crop);
        assert_eq!(glimpse.len(), g * g);
        // Glimpse pixel (0,0) samples image at normalized (-0.375, -0.375)
        // which is image pixel coordinate 2.0 exactly.
        assert!((glimpse[0] - input[2 * hw + 2]).abs() < 1e-12);
    }

    #[test]
    fn warp_linearity_in_input() {
        let pose = Pose { ex: 0.7, ey: 0.55, tx: 0.21, ty: -0.1 };
        let u: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..36).map(|i| (i as f64 * 0.11).cos()).collect();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.3 * a + 1.7 * b).collect();
        let wu = warp_forward(&u, (1, 6, 6, 1), &[pose], (9, 9), WarpDir::Paste);
        let wv = warp_forward(&v, (1, 6, 6, 1), &[pose], (9, 9), WarpDir::Paste);
        let wm = warp_forward(&mix, (1, 6, 6, 1), &[pose], (9, 9), WarpDir::Paste);
        for i in 0..wm.len() {
            assert!((wm[i] - (0.3 * wu[i] + 1.7 * wv[i])).abs() < 1e-12);
        }
    }
}
