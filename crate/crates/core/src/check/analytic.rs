//! Formula-level suites: losses, activations, cost model.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{rel_err, CheckOptions, Recorder, FD_ABS_FLOOR, FD_STEP};
use crate::activation::{finite_difference, ActivationKind};
use crate::blocks::{BlockConfig, ConvSite, CspConfig, GsConvConfig, VovGscspConfig};
use crate::cost::{cost_block, cost_sc, pool_comparisons, ratio_c, ratio_closed_form, ratio_p, sppf_efficiency};
use crate::loss::{
    ciou_alpha_at, ciou_loss_fixed_alpha, ciou_v, ciou_v_grad, ciou_v_grad_quoted, iou, loss, loss_grad,
    rasterized_iou, BBox, LossKind,
};
use crate::rng::{SeedStream, StreamRng};
use crate::tensor::{conv2d_naive_counted, maxpool2d_counted, ConvParams, Shape, Tensor};

/// Largest `|mish(x) - swish(x)|` on the 0.001 grid over [-10, 10], from a
/// dense-sampling run.
pub const MISH_SWISH_MAX_GAP: f64 = 0.18435114121777455;

fn random_box(rng: &mut StreamRng) -> BBox {
    BBox::new(
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
        rng.gen_range(0.2..5.0),
        rng.gen_range(0.2..5.0),
    )
}

/// A target box and a prediction near it, so most pairs overlap.
fn random_pair(rng: &mut StreamRng) -> (BBox, BBox) {
    let gt = random_box(rng);
    let pred = BBox::new(
        gt.cx + rng.gen_range(-3.0..3.0),
        gt.cy + rng.gen_range(-3.0..3.0),
        rng.gen_range(0.2..5.0),
        rng.gen_range(0.2..5.0),
    );
    (pred, gt)
}

/// True when some prediction edge is within `margin` of a target edge along
/// the same axis (where max/min terms are not differentiable).
fn near_kink(pred: &BBox, gt: &BBox, margin: f64) -> bool {
    let [px1, py1, px2, py2] = pred.corners();
    let [gx1, gy1, gx2, gy2] = gt.corners();
    [
        (px1, gx1),
        (px1, gx2),
        (px2, gx1),
        (px2, gx2),
        (py1, gy1),
        (py1, gy2),
        (py2, gy1),
        (py2, gy2),
    ]
    .iter()
    .any(|(a, b)| (a - b).abs() < margin)
}

fn smooth_pair(rng: &mut StreamRng) -> (BBox, BBox) {
    loop {
        let (p, g) = random_pair(rng);
        if !near_kink(&p, &g, 1e-3) {
            return (p, g);
        }
    }
}

pub(super) fn losses(r: &mut Recorder, opts: &CheckOptions) {
    let seeds = SeedStream::new(opts.seed).split("check.losses");
    r.prop("worked_pair", || {
        let pred = BBox::new(0.5, 0.5, 1.0, 1.0);
        let gt = BBox::new(2.5, 0.5, 1.0, 1.0);
        let expect = [1.0, 4.0 / 3.0, 1.4, 1.4, 1.4];
        let got: Vec<f64> = LossKind::ALL.iter().map(|&k| loss(k, &pred, &gt)).collect();
        let worst = got.iter().zip(expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok((
            format!("{got:.12?}, max |err| {worst:.2e}"),
            "{1, 4/3, 1.4, 1.4, 1.4} within 1e-9".into(),
            worst < 1e-9,
        ))
    });
    r.prop("rasterized_iou", || {
        let mut rng = seeds.rng("raster");
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let (a, b) = random_pair(&mut rng);
            worst = worst.max((rasterized_iou(&a, &b, 1024)? - iou(&a, &b)).abs());
        }
        Ok((
            format!("max |raster - iou| = {worst:.3e} on 100 pairs"),
            "< 2e-3 at resolution 1024".into(),
            worst < 2e-3,
        ))
    });
    r.prop("identity_is_zero", || {
        let mut rng = seeds.rng("identity");
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let b = random_box(&mut rng);
            for k in LossKind::ALL {
                let g = loss_grad(k, &b, &b);
                worst = worst.max(loss(k, &b, &b).abs()).max(g.value.abs());
                worst = g.grad.iter().fold(worst, |m, v| m.max(v.abs()));
            }
        }
        Ok((
            format!("max |loss| or |grad| = {worst:e}"),
            "exactly 0".into(),
            worst == 0.0,
        ))
    });
    r.prop("ciou_degenerates_to_diou", || {
        let mut rng = seeds.rng("proportional");
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let gt = random_box(&mut rng);
            let s = rng.gen_range(0.3..3.0);
            let pred = BBox::new(
                gt.cx + rng.gen_range(-2.0..2.0),
                gt.cy + rng.gen_range(-2.0..2.0),
                gt.w * s,
                gt.h * s,
            );
            worst = worst.max((loss(LossKind::Ciou, &pred, &gt) - loss(LossKind::Diou, &pred, &gt)).abs());
        }
        Ok((
            format!("max |CIoU - DIoU| = {worst:.3e} on 1000 proportional pairs"),
            "< 1e-12".into(),
            worst < 1e-12,
        ))
    });
    r.prop("v_grad_ratio_relation", || {
        let mut rng = seeds.rng("vgrad");
        let (mut worst, mut same_sign) = (0.0f64, 0);
        for _ in 0..1000 {
            let (p, g) = random_pair(&mut rng);
            for (dw, dh) in [ciou_v_grad(&p, &g), ciou_v_grad_quoted(&p, &g)] {
                worst = worst.max((dw + p.h / p.w * dh).abs());
                same_sign += usize::from(dw * dh > 0.0);
            }
        }
        Ok((
            format!("max |dv/dw + (h/w) dv/dh| = {worst:.3e}, {same_sign} same-sign pairs"),
            "< 1e-12 on 1000 pairs, signs always opposite".into(),
            worst < 1e-12 && same_sign == 0,
        ))
    });
    r.prop("v_grad_finite_difference", || {
        let mut rng = seeds.rng("vgrad_fd");
        let (mut worst, mut max_abs) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let (p, g) = random_pair(&mut rng);
            let (dw, dh) = ciou_v_grad(&p, &g);
            let fw = finite_difference(|w| ciou_v(&BBox { w, ..p }, &g), p.w, FD_STEP);
            let fh = finite_difference(|h| ciou_v(&BBox { h, ..p }, &g), p.h, FD_STEP);
            worst = worst
                .max(rel_err(dw, fw, FD_ABS_FLOOR))
                .max(rel_err(dh, fh, FD_ABS_FLOOR));
            max_abs = max_abs.max((dw - fw).abs()).max((dh - fh).abs());
        }
        Ok((
            format!("max rel err {worst:.3e}, max |analytic - fd| {max_abs:.3e} on 100 pairs"),
            format!("<= {:e} (floor {FD_ABS_FLOOR:e})", opts.tol),
            worst <= opts.tol,
        ))
    });
    r.prop("loss_grad_finite_difference", || {
        let mut rng = seeds.rng("grad_fd");
        let (mut worst, mut max_abs) = (0.0f64, 0.0f64);
        let mut perturbed = 0;
        for _ in 0..100 {
            let (p, g) = smooth_pair(&mut rng);
            for kind in LossKind::ALL {
                let lg = loss_grad(kind, &p, &g);
                perturbed += usize::from(lg.perturbed);
                let alpha = ciou_alpha_at(&p, &g);
                let f = |b: &BBox| match kind {
                    LossKind::Ciou => ciou_loss_fixed_alpha(b, &g, alpha),
                    _ => loss(kind, b, &g),
                };
                for j in 0..4 {
                    let base = p.to_array();
                    let fd = finite_difference(
                        |v| {
                            let mut a = base;
                            a[j] = v;
                            f(&BBox::from_array(a))
                        },
                        base[j],
                        FD_STEP,
                    );
                    worst = worst.max(rel_err(lg.grad[j], fd, FD_ABS_FLOOR));
                    max_abs = max_abs.max((lg.grad[j] - fd).abs());
                }
            }
        }
        Ok((
            format!(
                "max rel err {worst:.3e}, max |analytic - fd| {max_abs:.3e} over 100 pairs x 5 losses x 4 partials \
                 ({perturbed} nudged)"
            ),
            format!("<= {:e} (floor {FD_ABS_FLOOR:e})", opts.tol),
            worst <= opts.tol && perturbed == 0,
        ))
    });
    r.prop("value_ranges", || {
        let mut rng = seeds.rng("ranges");
        let mut bad = Vec::new();
        for _ in 0..1000 {
            let (p, g) = random_pair(&mut rng);
            for k in LossKind::ALL {
                let v = loss(k, &p, &g);
                if !(0.0..=k.upper_bound()).contains(&v) {
                    bad.push(format!("{k}={v}"));
                }
            }
        }
        Ok((
            format!("{} out-of-range values", bad.len()),
            "IoU in [0,1], GIoU/DIoU in [0,2], CIoU in [0,3], EIoU in [0,4]".into(),
            bad.is_empty(),
        ))
    });
}

pub(super) fn activations(r: &mut Recorder, opts: &CheckOptions) {
    let seeds = SeedStream::new(opts.seed).split("check.activations");
    r.prop("derivative_finite_difference", || {
        let mut rng = seeds.rng("points");
        let (mut worst, mut max_abs) = (0.0f64, 0.0f64);
        let mut worst_at = String::new();
        for kind in ActivationKind::all() {
            let mut n = 0;
            while n < 1000 {
                let x: f64 = rng.gen_range(-8.0..8.0);
                if kind.kinks().iter().any(|k| (x - k).abs() < 1e-3) {
                    continue;
                }
                n += 1;
                let (a, fd) = (kind.derivative(x), finite_difference(|v| kind.apply(v), x, FD_STEP));
                max_abs = max_abs.max((a - fd).abs());
                let e = rel_err(a, fd, FD_ABS_FLOOR);
                if e > worst {
                    worst = e;
                    worst_at = format!("{kind} at {x:.4}");
                }
            }
        }
        Ok((
            format!(
                "max rel err {worst:.3e}{}, max |analytic - fd| {max_abs:.3e} over 1000 points x 6 kinds",
                if worst_at.is_empty() {
                    String::new()
                } else {
                    format!(" ({worst_at})")
                }
            ),
            format!("<= {:e} (floor {FD_ABS_FLOOR:e})", opts.tol),
            worst <= opts.tol,
        ))
    });
    r.prop("mish_prime_at_one", || {
        let a = ActivationKind::Mish.derivative(1.0);
        let fd = finite_difference(|v| ActivationKind::Mish.apply(v), 1.0, FD_STEP);
        let e = rel_err(a, fd, 0.0);
        Ok((
            format!("analytic {a:.12}, fd {fd:.12}, rel err {e:.2e}"),
            "<= 1e-6".into(),
            e <= 1e-6,
        ))
    });
    let grid = |lo: i32, hi: i32| (lo..=hi).map(|i| f64::from(i) * 1e-3);
    r.prop("mish_swish_closeness", || {
        let gap = grid(-10_000, 10_000)
            .map(|x| (ActivationKind::Mish.apply(x) - ActivationKind::SWISH.apply(x)).abs())
            .fold(0.0, f64::max);
        let e = (gap - MISH_SWISH_MAX_GAP).abs() / MISH_SWISH_MAX_GAP;
        Ok((
            format!("max |mish - swish| = {gap:.12} on [-10, 10]"),
            format!("within 1% of {MISH_SWISH_MAX_GAP}"),
            e <= 0.01,
        ))
    });
    r.prop("bounded_below_unbounded_above", || {
        let mut lines = Vec::new();
        let mut ok = true;
        for kind in [ActivationKind::SWISH, ActivationKind::Mish] {
            let (argmin, min) = grid(-20_000, 20_000)
                .map(|x| (x, kind.apply(x)))
                .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            let top = kind.apply(20.0);
            let interior = argmin > -20.0 && argmin < 0.0;
            ok &= min > -0.5 && interior && (top - 20.0).abs() < 1e-6;
            lines.push(format!("{kind}: min {min:.5} at {argmin:.3}, f(20) = {top:.9}"));
        }
        Ok((
            lines.join("; "),
            "min > -0.5 at an interior x < 0, f(20) ~ 20".into(),
            ok,
        ))
    });
}

pub(super) fn cost(r: &mut Recorder, opts: &CheckOptions) {
    let seeds = SeedStream::new(opts.seed).split("check.cost");
    r.prop("dsc_ratio_appendix", || {
        let (p, c) = (ratio_p(3, 16, 3), ratio_c(3, 16, 3, 320, 320));
        let v = p.value();
        Ok((
            format!("ratio_p {v:.5} = ratio_c {:.5} ({}/{})", c.value(), p.num, p.den),
            "ratio_p == ratio_c, |ratio - 0.174| <= 5e-4".into(),
            p == c && (v - 0.174).abs() <= 5e-4,
        ))
    });
    r.prop("dsc_ratio_exact_random", || {
        let mut rng = seeds.rng("ratios");
        let mut bad = 0;
        for _ in 0..50 {
            let (ci, co) = (rng.gen_range(1..=64), rng.gen_range(1..=256));
            let k = *[1, 3, 5, 7].choose(&mut rng).unwrap();
            let (h, w) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
            let p = ratio_p(ci, co, k);
            bad += usize::from(p != ratio_c(ci, co, k, h, w) || p != ratio_closed_form(co, k));
        }
        Ok((
            format!("{bad} of 50 configs unequal"),
            "exact integer-ratio equality".into(),
            bad == 0,
        ))
    });
    r.prop("sppf_efficiency_analytic", || {
        let e = sppf_efficiency(&[5, 9, 13], 5, 3)?;
        let rel = (e - 277.8).abs() / 277.8;
        Ok((
            format!("{e:.2}% (rel diff {rel:.1e} to 277.8%)"),
            "within 0.1% of 277.8%".into(),
            rel <= 1e-3,
        ))
    });
    r.prop("sppf_efficiency_counted", || {
        // 44x44 keeps a 32x32 interior clear of every 13x13 window border
        let (side, margin) = (44usize, 6usize);
        let x = Tensor::random_uniform(Shape::new(1, 1, side, side), -1.0, 1.0, &mut seeds.rng("pool"));
        let interior = |counts: &[u32]| -> u64 {
            (margin..side - margin)
                .flat_map(|y| (margin..side - margin).map(move |x| (y, x)))
                .map(|(y, x)| u64::from(counts[y * side + x]))
                .sum()
        };
        let mut spp = 0u64;
        for k in [5, 9, 13] {
            spp += interior(&maxpool2d_counted(&x, k, 1)?.1);
        }
        let mut sppf = 0u64;
        let mut cur = x.clone();
        for _ in 0..3 {
            let (y, counts) = maxpool2d_counted(&cur, 5, 1)?;
            sppf += interior(&counts);
            cur = y;
        }
        let pixels = ((side - 2 * margin) * (side - 2 * margin)) as u64;
        let counted = (spp as f64 - sppf as f64) / sppf as f64 * 100.0;
        let analytic = pool_comparisons(&[5, 9, 13], 5, 3)?;
        let rel = (counted - 277.8).abs() / 277.8;
        Ok((
            format!(
                "{counted:.2}% from {}/{} comparisons per pixel (analytic {}/{})",
                spp / pixels,
                sppf / pixels,
                analytic.0,
                analytic.1
            ),
            "per-pixel counts equal analytic, within 0.1% of 277.8%".into(),
            spp == analytic.0 * pixels && sppf == analytic.1 * pixels && rel <= 1e-3,
        ))
    });
    r.prop("gsconv_cost_band", || {
        let mut parts = Vec::new();
        let mut ok = true;
        for c in [32, 64, 96, 128, 192, 256] {
            let cfg = BlockConfig::GsConv(GsConvConfig::new(c, c, 1, 1));
            let ratio =
                cost_block("g", &cfg, Shape::new(1, c, 20, 20))?.flops as f64 / cost_sc(c, c, 1, 20, 20).flops as f64;
            let inside = (0.58..=0.70).contains(&ratio);
            ok &= inside;
            parts.push(format!("C={c}: {ratio:.4}{}", if inside { "" } else { " (outside)" }));
        }
        Ok((parts.join(", "), "[0.58, 0.70] for every C".into(), ok))
    });
    r.prop("vov_gscsp_below_csp", || {
        let mut parts = Vec::new();
        let mut ok = true;
        let mut savings = Vec::new();
        for c in [64, 128, 256] {
            for n in [1, 3] {
                let s = Shape::new(1, c, 20, 20);
                let vov = cost_block("v", &BlockConfig::VovGscsp(VovGscspConfig::new(c, c, n)), s)?.flops;
                let csp = cost_block("c", &BlockConfig::Csp(CspConfig::new(c, c, n)), s)?.flops;
                ok &= vov < csp;
                let pct = (csp as f64 - vov as f64) / csp as f64 * 100.0;
                savings.push(pct);
                parts.push(format!("c={c} n={n}: -{pct:.2}%"));
            }
        }
        let mean = savings.iter().sum::<f64>() / savings.len() as f64;
        Ok((
            format!("{} (mean -{mean:.2}%)", parts.join(", ")),
            "VoV-GSCSP flops strictly lower in every config".into(),
            ok,
        ))
    });
    r.prop("mac_counter_matches_analytic", || {
        let mut rng = seeds.rng("macs");
        let mut bad = 0;
        for _ in 0..50 {
            let g = rng.gen_range(1..=3);
            let k = *[1, 3, 5].choose(&mut rng).unwrap();
            let p = ConvParams::new(
                g * rng.gen_range(1..=4),
                g * rng.gen_range(1..=4),
                k,
                rng.gen_range(1..=2),
            )
            .with_groups(g);
            let s = Shape::new(
                rng.gen_range(1..=3),
                p.in_c,
                rng.gen_range(1..=12),
                rng.gen_range(1..=12),
            );
            let x = Tensor::random_uniform(s, -1.0, 1.0, &mut rng);
            let w = Tensor::random_uniform(p.weight_shape(), -1.0, 1.0, &mut rng);
            let mut counted = 0u64;
            conv2d_naive_counted(&x, &w, None, &p, &mut counted)?;
            let analytic = ConvSite::new("c", p, s.h, s.w).macs() * s.n as u64;
            bad += usize::from(counted != analytic);
        }
        Ok((format!("{bad} of 50 configs differ"), "exact equality".into(), bad == 0))
    });
    r.prop("batch_and_area_scaling", || {
        let cfg = BlockConfig::VovGscsp(VovGscspConfig::new(32, 32, 1));
        let base = cost_block("v", &cfg, Shape::new(1, 32, 10, 10))?.flops;
        let batched = cost_block("v", &cfg, Shape::new(4, 32, 10, 10))?.flops;
        let doubled = cost_block("v", &cfg, Shape::new(1, 32, 20, 20))?.flops;
        Ok((
            format!("n=1: {base}, n=4: {batched}, 2x side: {doubled}"),
            "batch-invariant, 4x for doubled side".into(),
            base == batched && doubled == 4 * base,
        ))
    });
}
