use proptest::prelude::*;
use regge_core::expr::{Expr, ExprJet, Func, Var};

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(Expr::c),
        Just(Expr::x()),
        Just(Expr::y()),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            // Denominators bounded away from zero.
            (inner.clone(), inner.clone()).prop_map(|(a, b)| {
                let d = Expr::Add(Box::new(Expr::c(2.0)), Box::new(Expr::Pow(Box::new(b), 2)));
                Expr::Div(Box::new(a), Box::new(d))
            }),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), 0i32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            inner.clone().prop_map(|a| Expr::Call(Func::Sin, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Cos, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Atan, Box::new(a))),
            inner.clone().prop_map(|a| {
                let pos = Expr::Add(Box::new(Expr::c(1.0)), Box::new(Expr::Pow(Box::new(a), 2)));
                Expr::Call(Func::Sqrt, Box::new(pos))
            }),
            inner.clone().prop_map(|a| {
                let pos = Expr::Add(Box::new(Expr::c(1.5)), Box::new(Expr::Pow(Box::new(a), 2)));
                Expr::Call(Func::Log, Box::new(pos))
            }),
        ]
    })
}

fn finite(e: &Expr, x: f64, y: f64) -> Option<f64> {
    e.eval(x, y).ok().filter(|v| v.is_finite() && v.abs() < 1e6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn derivative_matches_central_difference(e in arb_expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let h = 1e-5;
        for (v, (dx, dy)) in [(Var::X, (h, 0.0)), (Var::Y, (0.0, h))] {
            let (Some(p), Some(m)) = (finite(&e, x + dx, y + dy), finite(&e, x - dx, y - dy)) else {
                return Ok(());
            };
            let fd = (p - m) / (2.0 * h);
            let Some(d) = finite(&e.diff(v), x, y) else { return Ok(()) };
            prop_assert!((d - fd).abs() <= 1e-5 * (1.0 + fd.abs().max(p.abs())), "{e}: d/d{v:?} = {d}, fd = {fd}");
        }
    }

    #[test]
    fn simplify_preserves_values(e in arb_expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        if let Some(v) = finite(&e, x, y) {
            let s = e.simplify().eval(x, y).unwrap();
            prop_assert!((s - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn display_round_trips(e in arb_expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let back = Expr::parse(&e.to_string()).unwrap();
        if let Some(v) = finite(&e, x, y) {
            let w = back.eval(x, y).unwrap();
            prop_assert!((w - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}

#[test]
fn jet_orders_follow_graded_layout() {
    let e = Expr::parse("x^3*y^2 + sin(x*y)").unwrap();
    let j = ExprJet::new(&e, 3);
    let (x, y) = (0.4, -0.7);
    let v = j.eval_all(x, y).unwrap();
    assert_eq!(v.len(), 10);
    // f_xy = 6 x^2 y + cos(xy) - xy sin(xy)
    let fxy = 6.0 * x * x * y + (x * y).cos() - x * y * (x * y).sin();
    assert!((v[4] - fxy).abs() < 1e-13);
    assert!((j.eval(1, 1, x, y).unwrap() - fxy).abs() < 1e-13);
}

#[test]
fn errors_carry_positions() {
    let err = Expr::parse("x + * y").unwrap_err().to_string();
    assert!(err.contains("offset 4"), "{err}");
    assert!(Expr::parse("foo(x)").unwrap_err().to_string().contains("foo"));
    assert!(Expr::parse("1/x").unwrap().eval(0.0, 1.0).is_err());
    assert!(Expr::parse("sqrt(x)").unwrap().eval(-1.0, 0.0).is_err());
}
