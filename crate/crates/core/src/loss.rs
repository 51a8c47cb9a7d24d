//! IoU-family bounding-box regression losses with analytic gradients.
//!
//! Losses are evaluated with a small forward-mode dual number carrying the
//! partials with respect to the predicted box's `(cx, cy, w, h)`, so the value
//! and gradient always come from the same expression.
//!
//! CIoU's trade-off weight `alpha = v / ((1 - IoU) + v)` is held constant while
//! differentiating: the gradient returned for [`LossKind::Ciou`] is that of
//! `1 - IoU + rho^2/d^2 + alpha_0 * v` with `alpha_0` evaluated at the current
//! boxes.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Smallest admissible width or height.
pub const MIN_SIZE: f64 = 1e-9;
/// Shift applied to a prediction whose edges coincide with the target's.
pub const BOUNDARY_NUDGE: f64 = 1e-9;

/// Axis-aligned box in center/size form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Builds a box, clamping sizes below [`MIN_SIZE`].
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::checked(cx, cy, w, h).0
    }

    /// Like [`BBox::new`] but also reports whether a size was clamped.
    pub fn checked(cx: f64, cy: f64, w: f64, h: f64) -> (Self, bool) {
        let clamped = !(w >= MIN_SIZE && h >= MIN_SIZE);
        let fix = |v: f64| if v >= MIN_SIZE { v } else { MIN_SIZE };
        (
            Self {
                cx,
                cy,
                w: fix(w),
                h: fix(h),
            },
            clamped,
        )
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn corners(&self) -> [f64; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        ]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.cx * s, self.cy * s, self.w * s, self.h * s)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Iou,
    Giou,
    Diou,
    Ciou,
    Eiou,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Iou,
        LossKind::Giou,
        LossKind::Diou,
        LossKind::Ciou,
        LossKind::Eiou,
    ];

    /// Least upper bound of the loss value (attained only by IoU, on disjoint boxes).
    pub fn upper_bound(&self) -> f64 {
        match self {
            LossKind::Iou => 1.0,
            LossKind::Giou | LossKind::Diou => 2.0,
            LossKind::Ciou => 3.0,
            LossKind::Eiou => 4.0,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Iou => "iou",
            LossKind::Giou => "giou",
            LossKind::Diou => "diou",
            LossKind::Ciou => "ciou",
            LossKind::Eiou => "eiou",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown loss `{s}`")))
    }
}

/// Value plus partials with respect to the prediction's `(cx, cy, w, h)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Dual {
    v: f64,
    g: [f64; 4],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self { v, g: [0.0; 4] }
    }

    fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; 4];
        g[i] = 1.0;
        Self { v, g }
    }

    fn map(self, v: f64, dv: f64) -> Self {
        Self {
            v,
            g: self.g.map(|d| d * dv),
        }
    }

    fn sq(self) -> Self {
        self * self
    }

    fn atan(self) -> Self {
        self.map(self.v.atan(), 1.0 / (1.0 + self.v * self.v))
    }

    // Ties go to `other`, which callers pass as the target-side operand.
    fn max(self, other: Self) -> Self {
        if self.v > other.v {
            self
        } else {
            other
        }
    }

    fn min(self, other: Self) -> Self {
        if self.v < other.v {
            self
        } else {
            other
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            g: std::array::from_fn(|i| self.g[i] + o.g[i]),
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            g: std::array::from_fn(|i| self.g[i] - o.g[i]),
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            g: std::array::from_fn(|i| self.g[i] * o.v + self.v * o.g[i]),
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual {
            v: q,
            g: std::array::from_fn(|i| (self.g[i] - q * o.g[i]) / o.v),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.map(-self.v, -1.0)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        self + Dual::constant(o)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        self.map(self.v * o, o)
    }
}

/// Every geometric term the five losses are assembled from.
struct Terms {
    iou: Dual,
    union: Dual,
    enclose_w: Dual,
    enclose_h: Dual,
    /// Squared center distance.
    rho2: Dual,
    /// Squared enclosing-box diagonal.
    diag2: Dual,
    /// Aspect-ratio consistency term.
    v: Dual,
    w: Dual,
    h: Dual,
}

fn terms(pred: &BBox, gt: &BBox) -> Terms {
    let (cx, cy) = (Dual::var(pred.cx, 0), Dual::var(pred.cy, 1));
    let (w, h) = (Dual::var(pred.w, 2), Dual::var(pred.h, 3));
    let (x1, x2) = (cx - w * 0.5, cx + w * 0.5);
    let (y1, y2) = (cy - h * 0.5, cy + h * 0.5);
    let [gx1, gy1, gx2, gy2] = gt.corners().map(Dual::constant);

    let zero = Dual::constant(0.0);
    let iw = (x2.min(gx2) - x1.max(gx1)).max(zero);
    let ih = (y2.min(gy2) - y1.max(gy1)).max(zero);
    let inter = iw * ih;
    // Areas from the same corner arithmetic as the intersection, so identical
    // boxes give IoU exactly 1.
    let pred_area = (x2 - x1) * (y2 - y1);
    let gt_area = (gx2 - gx1) * (gy2 - gy1);
    let union = pred_area + gt_area - inter;
    let iou = inter / union;

    let enclose_w = x2.max(gx2) - x1.min(gx1);
    let enclose_h = y2.max(gy2) - y1.min(gy1);
    let rho2 = (cx + (-gt.cx)).sq() + (cy + (-gt.cy)).sq();
    let diag2 = enclose_w.sq() + enclose_h.sq();

    let dtheta = Dual::constant((gt.w / gt.h).atan()) - (w / h).atan();
    let v = dtheta.sq() * (4.0 / (PI * PI));
    Terms {
        iou,
        union,
        enclose_w,
        enclose_h,
        rho2,
        diag2,
        v,
        w,
        h,
    }
}

/// CIoU trade-off weight; zero when both `1 - IoU` and `v` vanish.
fn ciou_alpha(iou: f64, v: f64) -> f64 {
    let denom = (1.0 - iou) + v;
    if denom > 0.0 {
        v / denom
    } else {
        0.0
    }
}

fn evaluate(kind: LossKind, pred: &BBox, gt: &BBox, alpha: Option<f64>) -> Dual {
    let t = terms(pred, gt);
    let base = -t.iou + 1.0;
    match kind {
        LossKind::Iou => base,
        LossKind::Giou => {
            let c = t.enclose_w * t.enclose_h;
            base + (c - t.union) / c
        }
        LossKind::Diou => base + t.rho2 / t.diag2,
        LossKind::Ciou => {
            let alpha = alpha.unwrap_or_else(|| ciou_alpha(t.iou.v, t.v.v));
            base + t.rho2 / t.diag2 + t.v * alpha
        }
        LossKind::Eiou => {
            let dw = (t.w + (-gt.w)).sq() / t.enclose_w.sq();
            let dh = (t.h + (-gt.h)).sq() / t.enclose_h.sq();
            base + t.rho2 / t.diag2 + dw + dh
        }
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    terms(a, b).iou.v
}

pub fn loss(kind: LossKind, pred: &BBox, gt: &BBox) -> f64 {
    evaluate(kind, pred, gt, None).v
}

/// CIoU's `alpha` at the given boxes.
pub fn ciou_alpha_at(pred: &BBox, gt: &BBox) -> f64 {
    let t = terms(pred, gt);
    ciou_alpha(t.iou.v, t.v.v)
}

/// CIoU loss with `alpha` pinned to a caller-supplied constant.
pub fn ciou_loss_fixed_alpha(pred: &BBox, gt: &BBox, alpha: f64) -> f64 {
    evaluate(LossKind::Ciou, pred, gt, Some(alpha)).v
}

/// CIoU's aspect-ratio term `v`.
pub fn ciou_v(pred: &BBox, gt: &BBox) -> f64 {
    terms(pred, gt).v.v
}

/// Partials `(dv/dw, dv/dh)` of the aspect-ratio term.
pub fn ciou_v_grad(pred: &BBox, gt: &BBox) -> (f64, f64) {
    let d = (gt.w / gt.h).atan() - (pred.w / pred.h).atan();
    let s = 8.0 / (PI * PI) * d / (pred.w * pred.w + pred.h * pred.h);
    (-s * pred.h, s * pred.w)
}

/// The aspect-ratio partials in the commonly quoted form
/// `dv/dw = 8/pi^2 (atan(w_gt/h_gt) - atan(w/h)) h/(w^2+h^2)` and
/// `dv/dh = -8/pi^2 (...) w/(w^2+h^2)`. This is the exact negation of
/// [`ciou_v_grad`]; both satisfy `dv/dw = -(h/w) dv/dh`.
pub fn ciou_v_grad_quoted(pred: &BBox, gt: &BBox) -> (f64, f64) {
    let (dw, dh) = ciou_v_grad(pred, gt);
    (-dw, -dh)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    /// Partials with respect to `(cx, cy, w, h)` of the prediction.
    pub grad: [f64; 4],
    /// Set when the prediction was nudged off a non-differentiable edge
    /// coincidence before differentiating.
    pub perturbed: bool,
}

fn edges_coincide(a: f64, b: f64, c: f64, d: f64) -> bool {
    a == c || a == d || b == c || b == d
}

/// Loss value and analytic gradient with respect to the prediction.
///
/// At `pred == gt` every loss sits at its minimum of zero and the zero
/// subgradient is returned. Otherwise, if any prediction edge coincides
/// exactly with a target edge, the prediction center is moved by
/// [`BOUNDARY_NUDGE`] along that axis first and `perturbed` is set.
pub fn loss_grad(kind: LossKind, pred: &BBox, gt: &BBox) -> LossGrad {
    if pred == gt {
        return LossGrad {
            value: 0.0,
            grad: [0.0; 4],
            perturbed: false,
        };
    }
    let [px1, py1, px2, py2] = pred.corners();
    let [gx1, gy1, gx2, gy2] = gt.corners();
    let mut p = *pred;
    let mut perturbed = false;
    if edges_coincide(px1, px2, gx1, gx2) {
        p.cx += BOUNDARY_NUDGE;
        perturbed = true;
    }
    if edges_coincide(py1, py2, gy1, gy2) {
        p.cy += BOUNDARY_NUDGE;
        perturbed = true;
    }
    let d = evaluate(kind, &p, gt, None);
    LossGrad {
        value: d.v,
        grad: d.g,
        perturbed,
    }
}

/// Grid estimate of IoU: the joint bounding region is divided into
/// `resolution`² cells and each cell center is tested against both boxes
/// (half-open on the right and bottom edges).
pub fn rasterized_iou(a: &BBox, b: &BBox, resolution: usize) -> Result<f64> {
    if resolution < 64 {
        return Err(Error::Invalid(format!(
            "raster resolution must be at least 64, got {resolution}"
        )));
    }
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let (x0, y0) = (ax1.min(bx1), ay1.min(by1));
    let (sx, sy) = (
        (ax2.max(bx2) - x0) / resolution as f64,
        (ay2.max(by2) - y0) / resolution as f64,
    );
    let inside = |lo: f64, hi: f64, p: f64| lo <= p && p < hi;

    let cols: Vec<(bool, bool)> = (0..resolution)
        .map(|i| {
            let px = x0 + (i as f64 + 0.5) * sx;
            (inside(ax1, ax2, px), inside(bx1, bx2, px))
        })
        .collect();
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    for j in 0..resolution {
        let py = y0 + (j as f64 + 0.5) * sy;
        let (ra, rb) = (inside(ay1, ay2, py), inside(by1, by2, py));
        if !ra && !rb {
            continue;
        }
        for &(ca, cb) in &cols {
            let (ia, ib) = (ra && ca, rb && cb);
            na += ia as u64;
            nb += ib as u64;
            both += (ia && ib) as u64;
        }
    }
    let union = na + nb - both;
    Ok(if union == 0 { 0.0 } else { both as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{finite_difference, rel_close};

    fn unit_pair() -> (BBox, BBox) {
        (BBox::new(0.5, 0.5, 1.0, 1.0), BBox::new(2.5, 0.5, 1.0, 1.0))
    }

    #[test]
    fn clamp_is_flagged() {
        let (b, clamped) = BBox::checked(0.0, 0.0, 0.0, 2.0);
        assert!(clamped);
        assert_eq!(b.w, MIN_SIZE);
        assert!(!BBox::checked(0.0, 0.0, 1.0, 2.0).1);
        assert!(BBox::checked(0.0, 0.0, f64::NAN, 2.0).1);
    }

    #[test]
    fn corners_round_trip() {
        let b = BBox::from_corners(1.0, 2.0, 4.0, 8.0);
        assert_eq!(b, BBox::new(2.5, 5.0, 3.0, 6.0));
        assert_eq!(b.corners(), [1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 0.0, 1.0, 1.0)), 0.0);
        let b = a.translate(0.5, 0.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn worked_pair() {
        let (p, g) = unit_pair();
        let expect = [1.0, 4.0 / 3.0, 1.4, 1.4, 1.4];
        for (kind, e) in LossKind::ALL.into_iter().zip(expect) {
            assert!((loss(kind, &p, &g) - e).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn zero_at_identity() {
        let b = BBox::new(1.3, -2.0, 0.7, 4.1);
        for kind in LossKind::ALL {
            assert_eq!(loss(kind, &b, &b), 0.0);
            assert_eq!(loss_grad(kind, &b, &b).grad, [0.0; 4]);
        }
    }

    #[test]
    fn ciou_degenerates_for_proportional_boxes() {
        let g = BBox::new(0.0, 0.0, 2.0, 1.0);
        let p = BBox::new(0.0, 0.0, 6.0, 3.0);
        assert_eq!(ciou_v(&p, &g), 0.0);
        assert_eq!(loss(LossKind::Ciou, &p, &g), loss(LossKind::Diou, &p, &g));
    }

    #[test]
    fn v_grad_values() {
        let p = BBox::new(0.0, 0.0, 2.0, 1.0);
        let g = BBox::new(0.0, 0.0, 1.0, 1.0);
        // mpmath, 40 digits
        let (dw, dh) = ciou_v_grad(&p, &g);
        assert!((dw - 0.052_160_235_214_473_88).abs() < 1e-15);
        assert!((dh + 0.104_320_470_428_947_75).abs() < 1e-15);
        let (qw, qh) = ciou_v_grad_quoted(&p, &g);
        assert_eq!((qw, qh), (-dw, -dh));
        let fw = finite_difference(|w| ciou_v(&BBox { w, ..p }, &g), p.w, 1e-4);
        let fh = finite_difference(|h| ciou_v(&BBox { h, ..p }, &g), p.h, 1e-4);
        assert!(rel_close(dw, fw, 1e-6, 1e-8));
        assert!(rel_close(dh, fh, 1e-6, 1e-8));
        let matched = BBox::new(3.0, 1.0, 4.0, 4.0);
        assert_eq!(ciou_v_grad(&matched, &g), (0.0, 0.0));
    }

    #[test]
    fn touching_edges_are_nudged() {
        let (p, g) = (BBox::new(0.5, 0.5, 1.0, 1.0), BBox::new(1.5, 0.5, 1.0, 1.0));
        let r = loss_grad(LossKind::Giou, &p, &g);
        assert!(r.perturbed);
        let far = BBox::new(4.0, 3.0, 1.0, 2.0);
        assert!(!loss_grad(LossKind::Giou, &far, &g).perturbed);
    }

    #[test]
    fn raster_examples() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(rasterized_iou(&a, &a, 256).unwrap(), 1.0);
        assert_eq!(rasterized_iou(&a, &a.translate(3.0, 0.0), 256).unwrap(), 0.0);
        let r = rasterized_iou(&a, &a.translate(0.5, 0.0), 512).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 5e-3);
        assert!(rasterized_iou(&a, &a, 32).is_err());
    }

    #[test]
    fn parse_kinds() {
        for k in LossKind::ALL {
            assert_eq!(k.to_string().parse::<LossKind>().unwrap(), k);
        }
        assert!("siou".parse::<LossKind>().is_err());
    }
}
