//! Expression-level properties: derivatives against finite differences,
//! symmetry of mixed partials, and printer/parser round trips.

mod common;

use common::{coords, poly, rng};
use foliation_poisson::expr::Func;
use foliation_poisson::{parse_scalar, ScalarExpr};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random smooth expression that is finite on all of R^m.
fn smooth(r: &mut ChaCha8Rng, m: usize, depth: usize) -> ScalarExpr {
    if depth == 0 {
        return poly(r, m, 2, 2);
    }
    let a = smooth(r, m, depth - 1);
    match r.gen_range(0..7) {
        0 => a.add(&smooth(r, m, depth - 1)),
        1 => a.mul(&smooth(r, m, depth - 1)),
        2 => a.apply(Func::Sin),
        3 => a.apply(Func::Cos),
        4 => a.mul(&ScalarExpr::constant(0.5)).apply(Func::Exp),
        5 => ScalarExpr::one().add(&a.mul(&a)).apply(Func::Sqrt),
        _ => a.div(&ScalarExpr::constant(2.0).add(&a.mul(&a))),
    }
}

fn point(r: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| r.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partials_match_central_differences(seed: u64, m in 1usize..=4) {
        let mut r = rng(seed);
        let f = smooth(&mut r, m, 3);
        let x = point(&mut r, m);
        let h = 1e-5;
        for i in 0..m {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (f.eval(&up).unwrap() - f.eval(&down).unwrap()) / (2.0 * h);
            let exact = f.partial(i).eval(&x).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "{fd} vs {exact}");
        }
    }

    #[test]
    fn mixed_partials_commute(seed: u64, m in 2usize..=4) {
        let mut r = rng(seed);
        let f = smooth(&mut r, m, 3);
        let x = point(&mut r, m);
        let i = r.gen_range(0..m);
        let j = r.gen_range(0..m);
        let a = f.partial(i).partial(j).eval(&x).unwrap();
        let b = f.partial(j).partial(i).eval(&x).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn printing_then_parsing_preserves_values(seed: u64, m in 1usize..=4) {
        let mut r = rng(seed);
        let c = coords(m);
        let f = smooth(&mut r, m, 3);
        let text = f.display(&c).to_string();
        let g = parse_scalar(&text, &c).unwrap();
        for _ in 0..8 {
            let x = point(&mut r, m);
            let (a, b) = (f.eval(&x).unwrap(), g.eval(&x).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{text}: {a} vs {b}");
        }
        prop_assert_eq!(g.display(&c).to_string(), text);
    }
}

#[test]
fn unary_minus_binds_looser_than_power() {
    let c = coords(1);
    let f = parse_scalar("-x1**2", &c).unwrap();
    assert_eq!(f.eval(&[3.0]).unwrap(), -9.0);
    let g = parse_scalar("(-x1)**2", &c).unwrap();
    assert_eq!(g.eval(&[3.0]).unwrap(), 9.0);
}
