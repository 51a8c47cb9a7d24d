use proptest::prelude::*;

use slimneck::loss::{loss, BBox, LossKind};
use slimneck::tensor::{
    channel_shuffle, concat_channels, conv2d_im2col, conv2d_naive, maxpool2d, split_channels, ConvParams, Shape, Tensor,
};

fn tensor(shape: Shape) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-4.0f32..4.0, shape.len()).prop_map(move |d| Tensor::new(shape, d).unwrap())
}

fn shaped() -> impl Strategy<Value = Tensor> {
    (1usize..3, 1usize..9, 1usize..9, 1usize..9).prop_flat_map(|(n, c, h, w)| tensor(Shape::new(n, c, h, w)))
}

fn bbox() -> impl Strategy<Value = BBox> {
    (-5.0f64..5.0, -5.0f64..5.0, 0.2f64..4.0, 0.2f64..4.0).prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shuffle_is_a_bijection(x in shaped(), pick in 0usize..8) {
        let c = x.shape().c;
        let divisors: Vec<usize> = (1..=c).filter(|g| c % g == 0).collect();
        let g = divisors[pick % divisors.len()];
        let y = channel_shuffle(&x, g).unwrap();
        let mut a: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        prop_assert!(channel_shuffle(&y, c / g).unwrap().bit_eq(&x));
    }

    #[test]
    fn concat_then_split_round_trips(a in shaped(), extra in 1usize..5, seed in any::<u64>()) {
        let s = a.shape();
        let b = Tensor::from_fn(Shape::new(s.n, extra, s.h, s.w), |n, c, y, x| {
            ((seed as usize).wrapping_add(n * 31 + c * 7 + y * 3 + x) % 97) as f32 - 48.0
        });
        let joined = concat_channels(&[&a, &b]).unwrap();
        let parts = split_channels(&joined, &[s.c, extra]).unwrap();
        prop_assert!(parts[0].bit_eq(&a));
        prop_assert!(parts[1].bit_eq(&b));
    }

    #[test]
    fn im2col_matches_naive(
        (x, w, p) in (1usize..4, 1usize..4, 0usize..3, 1usize..3, 3usize..10, 3usize..10).prop_flat_map(
            |(g, per_in, ki, stride, h, wd)| {
                let k = [1, 3, 5][ki];
                let (in_c, out_c) = (g * per_in, g * (1 + per_in % 2));
                let p = ConvParams::new(in_c, out_c, k, stride).with_groups(g);
                (tensor(Shape::new(1, in_c, h, wd)), tensor(p.weight_shape()), Just(p))
            }
        )
    ) {
        let a = conv2d_naive(&x, &w, None, &p).unwrap();
        let b = conv2d_im2col(&x, &w, None, &p).unwrap();
        prop_assert!(a.bit_eq(&b));
    }

    #[test]
    fn maxpool_is_monotone(x in shaped(), bump in prop::collection::vec(0.0f32..2.0, 1..600), ki in 0usize..3) {
        let k = [1, 3, 5][ki];
        let y = Tensor::new(x.shape(), x.data().iter().enumerate().map(|(i, v)| v + bump[i % bump.len()]).collect()).unwrap();
        let (px, py) = (maxpool2d(&x, k, 1).unwrap(), maxpool2d(&y, k, 1).unwrap());
        prop_assert!(px.data().iter().zip(py.data()).all(|(a, b)| a <= b));
    }

    #[test]
    fn maxpool_keeps_constants(c in -3.0f32..3.0, h in 1usize..12, w in 1usize..12, ki in 0usize..3) {
        let x = Tensor::full(Shape::new(1, 2, h, w), c);
        prop_assert!(maxpool2d(&x, [1, 3, 5][ki], 1).unwrap().bit_eq(&x));
    }

    #[test]
    fn losses_are_symmetric(a in bbox(), b in bbox()) {
        for k in LossKind::ALL {
            prop_assert!(close(loss(k, &a, &b), loss(k, &b, &a)), "{k}");
        }
    }

    #[test]
    fn losses_are_translation_invariant(a in bbox(), b in bbox(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        for k in LossKind::ALL {
            let moved = loss(k, &a.translate(dx, dy), &b.translate(dx, dy));
            prop_assert!((loss(k, &a, &b) - moved).abs() < 1e-9, "{k}");
        }
    }

    #[test]
    fn losses_are_scale_invariant(a in bbox(), b in bbox(), s in 0.1f64..10.0) {
        for k in LossKind::ALL {
            prop_assert!(close(loss(k, &a, &b), loss(k, &a.scale(s), &b.scale(s))), "{k}");
        }
    }
}
