use capput::pricing::payoff;
use capput::{MarketState, ModelParams, Pricer, ScaleFunctions};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (0.01f64..0.3, 0.05f64..0.6, 1.0f64..1e4, 0.05f64..2.0)
        .prop_map(|(r, sigma, k, c)| ModelParams::new(r, sigma, k, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn price_is_bounded_by_payoff_and_strike(p in params(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let pricer = Pricer::new(&p).unwrap();
        let (a, c, lk) = (pricer.barrier(), p.c, p.log_strike());
        let x_bar = a - c + u * (lk + 3.0 * c - (a - c));
        let x = x_bar - 2.0 * c * v;
        let value = pricer.value(&MarketState { x, x_bar }).unwrap();
        let k = p.strike_k;
        prop_assert!(value >= payoff(&p, x) - 1e-10 * k, "{value} < payoff at ({x}, {x_bar})");
        prop_assert!(value >= -1e-10 * k && value <= k * (1.0 + 1e-10));
    }

    #[test]
    fn barrier_lies_below_log_strike(p in params()) {
        let pricer = Pricer::new(&p).unwrap();
        prop_assert!(pricer.barrier() < p.log_strike());
        // λ itself may round to 1; its excess over 1 may not.
        prop_assert!(pricer.lambda_c() >= 1.0);
        prop_assert!(pricer.scale().one_minus_lambda(p.c) < 0.0);
        prop_assert!(pricer.delta_c() > 0.0);
    }

    #[test]
    fn drawdown_identity_holds(p in params()) {
        let sf = ScaleFunctions::new(&p);
        let ec = p.c.exp();
        let lhs = sf.lambda(p.c) * sf.delta(p.c) / sf.one_minus_lambda(p.c);
        prop_assert!(((lhs + ec) / ec).abs() < 1e-10);
    }

    #[test]
    fn scale_functions_are_increasing(p in params(), x in 0.0f64..5.0, dx in 1e-3f64..1.0) {
        let sf = ScaleFunctions::new(&p);
        prop_assert!(sf.w(x + dx) > sf.w(x));
        prop_assert!(sf.z(x + dx) > sf.z(x));
        prop_assert!(sf.w(x) >= 0.0 && sf.z(x) >= 1.0);
    }
}
