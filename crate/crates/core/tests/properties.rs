use logitgates::activations::{and_ail, and_il, or_ail, or_il, signed_geomean, xnor_ail, xnor_il};
use logitgates::numerics::sigmoid;
use logitgates::tensor::Matrix;
use logitgates::{Activation, EnsembleSpec, Kind, Strategy as Routing};
use proptest::prelude::*;

fn logit() -> impl Strategy<Value = f64> {
    -30.0..30.0_f64
}

fn any_act() -> impl Strategy<Value = Activation> {
    let all: Vec<Activation> = Activation::all()
        .into_iter()
        .filter(|a| a.arity() == 2)
        .collect();
    proptest::sample::select(all)
}

proptest! {
    #[test]
    fn de_morgan_is_exact(x in logit(), y in logit()) {
        prop_assert_eq!(and_il(x, y), -or_il(-x, -y));
        prop_assert_eq!(and_ail(x, y), -or_ail(-x, -y));
    }

    #[test]
    fn binary_ops_commute(x in logit(), y in logit()) {
        prop_assert_eq!(and_il(x, y).to_bits(), and_il(y, x).to_bits());
        prop_assert_eq!(or_il(x, y).to_bits(), or_il(y, x).to_bits());
        prop_assert_eq!(xnor_il(x, y).to_bits(), xnor_il(y, x).to_bits());
        prop_assert_eq!(and_ail(x, y), and_ail(y, x));
        prop_assert_eq!(or_ail(x, y), or_ail(y, x));
        prop_assert_eq!(xnor_ail(x, y), xnor_ail(y, x));
        prop_assert_eq!(signed_geomean(x, y), signed_geomean(y, x));
    }

    #[test]
    fn probability_identities(x in -20.0..20.0_f64, y in -20.0..20.0_f64) {
        let (px, py) = (sigmoid(x), sigmoid(y));
        prop_assert!((sigmoid(and_il(x, y)) - px * py).abs() < 1e-12);
        prop_assert!((sigmoid(or_il(x, y)) - (px + py - px * py)).abs() < 1e-12);
        prop_assert!((sigmoid(xnor_il(x, y)) - (px * py + (1.0 - px) * (1.0 - py))).abs() < 1e-12);
    }

    #[test]
    fn xnor_is_odd_in_each_argument(x in logit(), y in logit()) {
        prop_assert!((xnor_il(-x, y) + xnor_il(x, y)).abs() < 1e-9);
        prop_assert!((xnor_il(x, -y) + xnor_il(x, y)).abs() < 1e-9);
        prop_assert_eq!(xnor_ail(-x, y), -xnor_ail(x, y));
    }

    #[test]
    fn or_with_a_zero_operand_is_relu(x in logit()) {
        prop_assert_eq!(or_ail(x, 0.0), x.max(0.0));
        prop_assert_eq!(and_ail(x, 0.0), x.min(0.0));
    }

    #[test]
    fn il_is_bounded_by_ail_sign(x in logit(), y in logit()) {
        // AND can only lower the smaller logit, OR only raise the larger one
        prop_assert!(and_il(x, y) <= x.min(y) + 1e-12);
        prop_assert!(or_il(x, y) >= x.max(y) - 1e-12);
        prop_assert!(xnor_il(x, y).abs() <= x.abs().min(y.abs()) + 1e-12);
    }

    #[test]
    fn ail_gradients_never_vanish(x in logit(), y in logit()) {
        prop_assume!(x != 0.0 && y != 0.0);
        for kind in [Kind::And, Kind::Or, Kind::Xnor] {
            let (dx, dy) = Activation::ail(kind).gradient(x, y);
            prop_assert!(dx.abs() + dy.abs() >= 1.0, "{kind:?} at ({x}, {y})");
        }
    }

    #[test]
    fn ensemble_backward_matches_finite_differences(
        act in any_act(),
        dup in any::<bool>(),
        z in proptest::collection::vec(-4.0..4.0_f64, 8),
        up in proptest::collection::vec(-1.0..1.0_f64, 16),
    ) {
        let strategy = if dup { Routing::Duplication } else { Routing::Partition };
        let spec = EnsembleSpec::new(vec![act], strategy).unwrap();
        let zm = Matrix::from_vec(2, 4, z.clone());
        let out_w = spec.output_width(4).unwrap();
        let upm = Matrix::from_vec(2, out_w, up[..2 * out_w].to_vec());
        let analytic = spec.backward(&zm, &upm);
        let h = 1e-6;
        for i in 0..z.len() {
            let (mut zp, mut zn) = (z.clone(), z.clone());
            zp[i] += h;
            zn[i] -= h;
            let fp = spec.forward(&Matrix::from_vec(2, 4, zp));
            let fn_ = spec.forward(&Matrix::from_vec(2, 4, zn));
            let fd: f64 = fp.as_slice().iter().zip(fn_.as_slice()).zip(upm.as_slice())
                .map(|((a, b), u)| (a - b) / (2.0 * h) * u)
                .sum();
            // only meaningful where the stencil stays on one branch
            let pair = (i / 4) * 4 + (i % 4) / 2 * 2;
            let (a, b) = (z[pair], z[pair + 1]);
            prop_assume!(a.abs() > 1e-3 && b.abs() > 1e-3 && (a - b).abs() > 1e-3 && (a + b).abs() > 1e-3);
            prop_assert!((analytic.as_slice()[i] - fd).abs() < 1e-6, "{act} {strategy:?} coord {i}");
        }
    }

    #[test]
    fn single_activation_strategies_agree(
        act in any_act(),
        z in proptest::collection::vec(-4.0..4.0_f64, 12),
    ) {
        let zm = Matrix::from_vec(2, 6, z);
        let p = EnsembleSpec::new(vec![act], Routing::Partition).unwrap();
        let d = EnsembleSpec::new(vec![act], Routing::Duplication).unwrap();
        prop_assert_eq!(p.forward(&zm), d.forward(&zm));
    }

    #[test]
    fn spec_text_roundtrips(
        acts in proptest::collection::vec(any_act(), 1..4),
        dup in any::<bool>(),
    ) {
        let strategy = if dup { Routing::Duplication } else { Routing::Partition };
        let spec = EnsembleSpec::new(acts, strategy).unwrap();
        let back: EnsembleSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(back, spec);
    }
}
