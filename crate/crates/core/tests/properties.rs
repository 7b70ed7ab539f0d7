use proptest::prelude::*;
use riesz_core::data::{fold_assignment, gen_synthetic_ate};
use riesz_core::links::canonical_pair;
use riesz_core::losses::LossDomain;
use riesz_core::*;

fn losses() -> impl Strategy<Value = LossSpec> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(LossSpec::sq),
        (0.0..3.0f64).prop_map(LossSpec::ukl),
        (0.1..3.0f64).prop_map(LossSpec::bkl),
        (0.0..2.0f64, 0.2..3.0f64).prop_map(|(c, d)| LossSpec::bp(c, d)),
        (0.5..2.0f64).prop_map(LossSpec::pu),
    ]
}

fn point(domain: LossDomain, positive: bool, u: f64) -> f64 {
    let s = if positive { 1.0 } else { -1.0 };
    match domain {
        LossDomain::Real => 20.0 * (u - 0.5),
        LossDomain::AbsAbove(c) => s * (c + 1e-3 + 50.0 * u * u),
        LossDomain::UnitPunctured => s * (1e-3 + 0.998 * u),
    }
}

proptest! {
    #[test]
    fn bregman_is_nonnegative_on_a_branch(loss in losses(), pos in any::<bool>(), u in 0.0..1.0f64, w in 0.0..1.0f64) {
        let (a0, a) = (point(loss.domain(), pos, u), point(loss.domain(), pos, w));
        let d = loss.bregman(a0, a).unwrap();
        prop_assert!(d >= -1e-12 * (1.0 + loss.g(a0).unwrap().abs()), "{d}");
        prop_assert!(loss.bregman(a, a).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn canonical_links_invert_the_derivative(loss in losses(), xi in any::<bool>(), t in -0.9..0.9f64) {
        let Ok(link) = canonical_pair(&loss) else { return Ok(()) };
        let v = if loss.kind == LossKind::Bp { t * (1.0 + 1.0 / loss.delta) } else { 4.0 * t };
        let a = link.apply(xi, v).unwrap();
        prop_assert!((loss.dg(a).unwrap() - v).abs() <= 1e-8 * (1.0 + v.abs()));
        prop_assert!(link.is_canonical_for(&loss));
    }

    #[test]
    fn links_are_monotone_with_matching_derivative(kind in prop::sample::select(vec![LinkKind::Raw, LinkKind::LinearSq, LinkKind::LogBranch, LinkKind::Exponential]), xi in any::<bool>(), v in -3.0..3.0f64, dv in 0.01..1.0f64) {
        let link = LinkSpec::new(kind).with_c(0.5);
        let (lo, hi) = (link.apply(xi, v).unwrap(), link.apply(xi, v + dv).unwrap());
        prop_assert!(hi > lo);
        let h = 1e-6;
        let fd = (link.apply(xi, v + h).unwrap() - link.apply(xi, v - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - link.deriv(xi, v).unwrap()).abs() <= 1e-5 * (1.0 + fd.abs()));
    }

    #[test]
    fn saturated_links_stay_bounded(b in 0.5..5.0f64, v in -1e6..1e6f64, xi in any::<bool>()) {
        let link = LinkSpec::new(LinkKind::AtePropensityLogit).with_saturation(b);
        let a = link.apply(xi, v).unwrap();
        prop_assert!(a.abs() <= 1.0 + b.exp() + 1e-9);
    }

    #[test]
    fn functionals_are_linear(seed in 0u64..1000, a in -3.0..3.0f64, b in -3.0..3.0f64, which in 0usize..3) {
        let (data, _) = gen_synthetic_ate(seed, 40).unwrap();
        let f = [Functional::Ate, Functional::Ame { ame_coordinate: 1 }, Functional::Ame { ame_coordinate: 3 }][which].clone();
        let h1 = |x: &[f64]| x[0] * x[1] + x[2].sin();
        let h2 = |x: &[f64]| (x[1] - x[3]).powi(2) + x[0];
        let mix = |x: &[f64]| a * h1(x) + b * h2(x);
        let lhs = f.mean(&data, &mix).unwrap();
        let rhs = a * f.mean(&data, &h1).unwrap() + b * f.mean(&data, &h2).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + lhs.abs()));
    }

    #[test]
    fn folds_partition_evenly(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let f = fold_assignment(n, k, seed).unwrap();
        let mut sizes = vec![0usize; k];
        for &j in &f {
            sizes[j] += 1;
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(f, fold_assignment(n, k, seed).unwrap());
    }
}

#[test]
fn convex_fits_ignore_row_order() {
    let (data, _) = gen_synthetic_ate(3, 300).unwrap();
    let mut idx: Vec<usize> = (0..data.n()).collect();
    idx.reverse();
    idx.swap(10, 200);
    let perm = data.subset(&idx);
    for (loss, branch) in [(LossSpec::sq(0.0), BranchRule::AlwaysPositive), (LossSpec::ukl(1.0), BranchRule::TreatmentSign)] {
        let basis = BasisSpec::new(BasisKind::Polynomial { degree: 2 });
        let cfg = FitConfig::canonical(loss, branch, ModelSpec::Linear { basis })
            .unwrap()
            .with_penalty(Penalty::l2(1e-2))
            .with_grad_tol(1e-10)
            .with_max_iters(5000);
        let (a, b) = (
            fit_riesz(&cfg, &data, &Functional::Ate).unwrap(),
            fit_riesz(&cfg, &perm, &Functional::Ate).unwrap(),
        );
        for x in data.rows() {
            let d = (a.model.alpha(x).unwrap() - b.model.alpha(x).unwrap()).abs();
            assert!(d < 1e-6, "{loss:?}: {d}");
        }
    }
}

#[test]
fn oracle_representer_satisfies_the_riesz_identity_on_average() {
    let (data, oracle) = gen_synthetic_ate(5, 200_000).unwrap();
    let h = |x: &[f64]| x[0] * (1.0 + x[1]) + x[2];
    let gap = riesz_core::functionals::riesz_identity_check(&Functional::Ate, &oracle, &h, &data).unwrap();
    assert!(gap < 0.05, "{gap}");
}
