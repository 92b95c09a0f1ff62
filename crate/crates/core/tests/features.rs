use proptest::prelude::*;
use wdistortion::features::{conv_bank_apply, random_feature_stack, Boundary, KernelBank, Nonlinearity};
use wdistortion::{Grid, StackSpec};

fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Direct quadruple loop over output channel, input channel, and taps.
fn brute_correlate(x: &Grid<f64>, bank: &KernelBank<f64>) -> Grid<f64> {
    let (h, w, _) = x.dims();
    let k = bank.size();
    let half = (k / 2) as i64;
    Grid::from_fn(h, w, bank.d_out(), |r, c, o| {
        let mut s = 0.0;
        for i in 0..bank.d_in() {
            for a in 0..k {
                for b in 0..k {
                    let rr = reflect(r as i64 + a as i64 - half, h);
                    let cc = reflect(c as i64 + b as i64 - half, w);
                    s += bank.tap(o, i, a, b) * x.get(rr, cc, i);
                }
            }
        }
        s
    })
}

fn field(h: usize, w: usize, d: usize) -> impl Strategy<Value = Grid<f64>> {
    prop::collection::vec(-2.0f64..2.0, h * w * d).prop_map(move |v| Grid::new(h, w, d, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_brute_force(x in field(7, 5, 2), seed in any::<u64>(), k in prop::sample::select(vec![1usize, 3, 5])) {
        let bank = KernelBank::random(3, 2, k, Nonlinearity::Identity, seed).unwrap();
        let fast = conv_bank_apply(&x, &bank, Boundary::Reflect).unwrap();
        let slow = brute_correlate(&x, &bank);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_before_rectification(x in field(6, 6, 2), y in field(6, 6, 2), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let bank = KernelBank::random(4, 2, 3, Nonlinearity::Identity, 5).unwrap();
        let combo = Grid::new(6, 6, 2, x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = conv_bank_apply(&combo, &bank, Boundary::Reflect).unwrap();
        let fx = conv_bank_apply(&x, &bank, Boundary::Reflect).unwrap();
        let fy = conv_bank_apply(&y, &bank, Boundary::Reflect).unwrap();
        for ((l, p), q) in lhs.as_slice().iter().zip(fx.as_slice()).zip(fy.as_slice()) {
            prop_assert!((l - (a * p + b * q)).abs() <= 1e-10);
        }
    }

    #[test]
    fn shift_covariant_in_interior(x in field(10, 10, 1)) {
        let bank = KernelBank::random(2, 1, 3, Nonlinearity::Identity, 8).unwrap();
        let shifted = Grid::from_fn(10, 10, 1, |r, c, _| x.get(r, (c + 1).min(9), 0));
        let f = conv_bank_apply(&x, &bank, Boundary::Reflect).unwrap();
        let g = conv_bank_apply(&shifted, &bank, Boundary::Reflect).unwrap();
        for r in 3..7 {
            for c in 3..6 {
                for o in 0..2 {
                    prop_assert!((g.get(r, c, o) - f.get(r, c + 1, o)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn backward_is_adjoint(x in field(5, 6, 2), y in field(5, 6, 3)) {
        let bank = KernelBank::random(3, 2, 3, Nonlinearity::Identity, 2).unwrap();
        let ax = bank.correlate(&x, Boundary::Reflect).unwrap();
        let aty = bank.correlate_backward(&y).unwrap();
        let lhs: f64 = ax.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.as_slice().iter().zip(aty.as_slice()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn stack_values_finite(x in field(9, 11, 3), seed in any::<u64>()) {
        let spec = StackSpec { num_layers: 3, widths: vec![4, 4, 4], kernel_size: 3, seed };
        let stack = random_feature_stack(&x, &spec).unwrap();
        prop_assert!(stack.layers.iter().all(|l| l.values.as_slice().iter().all(|v| v.is_finite())));
        let dims: Vec<_> = stack.layers.iter().map(|l| (l.scale, l.values.height(), l.values.width())).collect();
        prop_assert_eq!(dims, vec![(1, 9, 11), (1, 9, 11), (2, 5, 6), (4, 3, 3)]);
    }
}
