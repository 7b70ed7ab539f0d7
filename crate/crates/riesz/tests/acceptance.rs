//! One pass/fail line per acceptance criterion.

use std::process::ExitCode;
use std::time::Instant;

use riesz::benchmark::{run_benchmark, BenchmarkConfig, BenchmarkRow};
use riesz_core::balancing::{nn_lsif_weights, nn_match, nn_matching_ate};
use riesz_core::data::gen_synthetic_ate;
use riesz_core::estimators::tmle_update;
use riesz_core::fit::{fit_riesz, FitConfig, Penalty};
use riesz_core::losses::{LossDomain, LossKind};
use riesz_core::models::{fit_least_squares, BasisKind, BasisSpec, Model};
use riesz_core::rng::Stream;
use riesz_core::verify::{bp_sq_bridge, bp_ukl_bridge, check_dual_bruteforce, check_gradients, null_shift_ratio_error, random_match_instance};
use riesz_core::{BranchRule, Dataset, Functional, LossSpec, ModelSpec};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn poly(degree: usize) -> BasisSpec {
    BasisSpec::new(BasisKind::Polynomial { degree })
}

fn ate_contrast(basis: &BasisSpec, x: &[f64]) -> Vec<f64> {
    let (mut x1, mut x0) = (x.to_vec(), x.to_vec());
    x1[0] = 1.0;
    x0[0] = 0.0;
    let (p1, p0) = (basis.eval(&x1).unwrap(), basis.eval(&x0).unwrap());
    p1.iter().zip(&p0).map(|(a, b)| a - b).collect()
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let checks = check_gradients(7);
    let secs = t.elapsed().as_secs_f64();
    let worst_lin = checks.iter().filter(|c| !c.name.ends_with("mlp")).map(|c| c.statistic).fold(0.0, f64::max);
    let worst_mlp = checks.iter().filter(|c| c.name.ends_with("mlp")).map(|c| c.statistic).fold(0.0, f64::max);
    let ok = checks.iter().all(|c| c.passed) && secs < 30.0;
    outcome(
        ok,
        format!(
            "{} configurations x 20 points, worst linear/kernel {worst_lin:.1e}, worst network {worst_mlp:.1e}, {secs:.1} s",
            checks.len()
        ),
    )
}

fn draw(rng: &mut Stream, domain: LossDomain, sign: f64) -> f64 {
    match domain {
        LossDomain::Real => 4.0 * rng.normal(),
        LossDomain::AbsAbove(c) => sign * (c + (2.0 * rng.normal()).exp()),
        LossDomain::UnitPunctured => sign * (0.001 + 0.998 * rng.uniform()),
    }
}

fn bregman_nonnegative() -> Outcome {
    let losses = [
        LossSpec::sq(0.5),
        LossSpec::ukl(1.0),
        LossSpec::bkl(1.0),
        LossSpec::bp(1.0, 0.5),
        LossSpec::bp(0.0, 2.0),
        LossSpec::pu(1.0),
    ];
    let mut rng = Stream::new(2, "acceptance/bregman");
    let mut worst_neg: f64 = 0.0;
    let mut worst_self: f64 = 0.0;
    for loss in losses {
        for _ in 0..10_000 {
            let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            let (a0, a) = (draw(&mut rng, loss.domain(), sign), draw(&mut rng, loss.domain(), sign));
            worst_neg = worst_neg.max(-loss.bregman(a0, a).unwrap());
            worst_self = worst_self.max(loss.bregman(a, a).unwrap().abs());
        }
    }
    outcome(
        worst_neg <= 1e-12 && worst_self <= 1e-12,
        format!(
            "6 losses x 1e4 pairs, most negative {:.1e}, largest self-divergence {worst_self:.1e}",
            -worst_neg
        ),
    )
}

fn balance_bound() -> Outcome {
    let basis = poly(1);
    let mut worst: f64 = f64::NEG_INFINITY;
    for seed in 0..10 {
        let (data, _) = gen_synthetic_ate(seed, 500).unwrap();
        let contrasts: Vec<Vec<f64>> = data.rows().map(|x| ate_contrast(&basis, x)).collect();
        let feats: Vec<Vec<f64>> = data.rows().map(|x| basis.eval(x).unwrap()).collect();
        for (loss, branch) in [(LossSpec::sq(0.0), BranchRule::AlwaysPositive), (LossSpec::ukl(1.0), BranchRule::TreatmentSign)] {
            for (lambda, order) in [(0.0, 1), (0.1, 1), (0.1, 2)] {
                let pen = if lambda == 0.0 {
                    Penalty::none()
                } else if order == 1 {
                    Penalty::l1(lambda)
                } else {
                    Penalty::l2(lambda)
                };
                let cfg = FitConfig::canonical(loss, branch, ModelSpec::Linear { basis: basis.clone() })
                    .unwrap()
                    .with_penalty(pen);
                let fit = fit_riesz(&cfg, &data, &Functional::Ate).unwrap();
                let Model::Linear(m) = &fit.model.model else { unreachable!() };
                let n = data.n() as f64;
                for j in 0..m.beta.len() {
                    let mut r = 0.0;
                    for (i, x) in data.rows().enumerate() {
                        r += (fit.model.alpha(x).unwrap() * feats[i][j] - contrasts[i][j]) / n;
                    }
                    let bound = if order == 1 { lambda } else { lambda * m.beta[j].abs() };
                    worst = worst.max(r.abs() - bound);
                }
            }
        }
    }
    outcome(
        worst <= 1e-6,
        format!("SQ and UKL, 3 penalties, 10 seeds, largest |residual| - bound {worst:.1e}"),
    )
}

fn dual() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for seed in 0..5 {
        for kind in [LossKind::Sq, LossKind::Ukl] {
            for (p, lambda) in [(1, 0.0), (2, 0.05), (3, 0.0), (3, 0.05)] {
                let c = check_dual_bruteforce(kind, 30, p, lambda, seed);
                ok &= c.passed;
                worst = worst.max(c.statistic);
            }
        }
    }
    outcome(ok, format!("n = 30, p <= 3, 5 seeds, largest pointwise gap {worst:.1e}"))
}

fn aipw_equals_ipw() -> Outcome {
    let basis = poly(1);
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (data, _) = gen_synthetic_ate(100 + seed, 500).unwrap();
        let gamma = Model::Linear(fit_least_squares(&basis, &data, 0.0).unwrap());
        for (loss, branch) in [(LossSpec::sq(0.0), BranchRule::AlwaysPositive), (LossSpec::ukl(1.0), BranchRule::TreatmentSign)] {
            let cfg = FitConfig::canonical(loss, branch, ModelSpec::Linear { basis: basis.clone() })
                .unwrap()
                .with_grad_tol(1e-12)
                .with_max_iters(20_000);
            let alpha = fit_riesz(&cfg, &data, &Functional::Ate).unwrap().model;
            let n = data.n() as f64;
            let (mut ipw, mut aipw) = (0.0, 0.0);
            for (i, x) in data.rows().enumerate() {
                let a = alpha.alpha(x).unwrap();
                let (mut x1, mut x0) = (x.to_vec(), x.to_vec());
                x1[0] = 1.0;
                x0[0] = 0.0;
                let g = gamma.eval(x).unwrap();
                ipw += a * data.y(i) / n;
                aipw += (gamma.eval(&x1).unwrap() - gamma.eval(&x0).unwrap() + a * (data.y(i) - g)) / n;
            }
            worst = worst.max((aipw - ipw).abs());
        }
    }
    outcome(worst <= 1e-8, format!("SQ and UKL, 10 seeds, largest |AIPW - IPW| {worst:.1e}"))
}

fn tmle_score() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let (data, _) = gen_synthetic_ate(200 + seed, 800).unwrap();
        let cfg = FitConfig::canonical(LossSpec::sq(0.0), BranchRule::AlwaysPositive, ModelSpec::Linear { basis: poly(2) })
            .unwrap()
            .with_penalty(Penalty::l2(0.01));
        let alpha = fit_riesz(&cfg, &data, &Functional::Ate).unwrap().model;
        let gamma = Model::Linear(fit_least_squares(&poly(1).on_z(), &data, 1e-3).unwrap());
        let eps = tmle_update(&data, &alpha, &gamma, &Functional::Ate).unwrap().epsilon;
        let mut s = 0.0;
        for (i, x) in data.rows().enumerate() {
            let a = alpha.alpha(x).unwrap();
            s += a * (data.y(i) - gamma.eval(x).unwrap() - eps * a);
        }
        worst = worst.max(s.abs());
    }
    outcome(worst <= 1e-10, format!("5 seeds, largest |sum alpha (Y - updated gamma)| {worst:.1e}"))
}

fn brute_counts(data: &Dataset, m: usize) -> Vec<usize> {
    let n = data.n();
    let mut k = vec![0; n];
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| data.treatment(j) != data.treatment(i))
            .map(|j| (data.z(i).iter().zip(data.z(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &cand[..m] {
            k[j] += 1;
        }
    }
    k
}

fn matching() -> Outcome {
    let (mut forms, mut lsif): (f64, f64) = (0.0, 0.0);
    for seed in 0..5 {
        for (n, dim) in [(40, 1), (100, 2)] {
            let data = random_match_instance(seed, n, dim).unwrap();
            for m in [1, 2, 5] {
                let ms = nn_match(&data, m).unwrap();
                let mut imputed = 0.0;
                for i in 0..n {
                    let other = ms.match_sets[i].iter().map(|&j| data.y(j)).sum::<f64>() / m as f64;
                    imputed += if data.treatment(i) { data.y(i) - other } else { other - data.y(i) } / n as f64;
                }
                forms = forms.max((nn_matching_ate(&data, m).unwrap() - imputed).abs());
                let k = brute_counts(&data, m);
                for (w, k) in nn_lsif_weights(&data, m).unwrap().iter().zip(k) {
                    lsif = lsif.max((w - (1.0 + k as f64 / m as f64)).abs());
                }
            }
        }
    }
    outcome(
        forms <= 1e-12 && lsif <= 1e-12,
        format!("M in 1, 2, 5, n <= 100, forms gap {forms:.1e}, LSIF gap {lsif:.1e}"),
    )
}

fn power_bridges() -> Outcome {
    let (mut sq, mut ukl): (f64, f64) = (0.0, 0.0);
    for seed in 0..3 {
        sq = sq.max(bp_sq_bridge(seed).unwrap());
        ukl = ukl.max(bp_ukl_bridge(seed).unwrap());
    }
    outcome(
        sq <= 1e-4 && ukl <= 1e-2,
        format!("delta = 1 vs SQ pointwise {sq:.1e}, delta = 1e-3 vs UKL objective relative {ukl:.1e}"),
    )
}

fn consistency() -> Outcome {
    let cfg = FitConfig::canonical(LossSpec::sq(0.0), BranchRule::AlwaysPositive, ModelSpec::Linear { basis: poly(3) }).unwrap();
    let mut medians = Vec::new();
    for n in [500, 2000, 8000] {
        let mut errs = Vec::new();
        for r in 0..20 {
            let (all, oracle) = gen_synthetic_ate(r, 13_000).unwrap();
            let train = all.subset(&(0..n).collect::<Vec<_>>());
            let hold = all.subset(&(8000..13_000).collect::<Vec<_>>());
            let fit = fit_riesz(&cfg, &train, &Functional::Ate).unwrap();
            let mse = hold.rows().map(|x| (fit.model.alpha(x).unwrap() - oracle.representer(x)).powi(2)).sum::<f64>() / hold.n() as f64;
            errs.push(mse.sqrt());
        }
        errs.sort_by(f64::total_cmp);
        medians.push(0.5 * (errs[9] + errs[10]));
    }
    let ok = medians.windows(2).all(|w| w[1] < w[0]);
    outcome(
        ok,
        format!(
            "median holdout L2 error at n = 500, 2000, 8000: {:.3}, {:.3}, {:.3}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn row<'a>(rows: &'a [BenchmarkRow], variant: &str, method: &str) -> &'a BenchmarkRow {
    rows.iter().find(|r| r.variant == variant && r.method == method).expect("benchmark row")
}

fn table() -> Outcome {
    let cfg = BenchmarkConfig::default();
    let t = Instant::now();
    let rows = run_benchmark(&cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    for r in &rows {
        println!(
            "    {:10} {:5} mse {:9.4} coverage {:.2} width {:.3} used {} failed {}",
            r.variant, r.method, r.mse, r.coverage, r.mean_ci_width, r.replications, r.failures
        );
    }
    let oracle = row(&rows, "True", "AIPW");
    let a = oracle.mse <= 0.05 && (0.90..=1.0).contains(&oracle.coverage);
    let (logit_aipw, logit_ipw) = (row(&rows, "SQ-Logit", "AIPW").mse, row(&rows, "SQ-Logit", "IPW").mse);
    let b = logit_aipw <= 0.3 && logit_aipw <= logit_ipw / 3.0;
    let dm_cov = rows
        .iter()
        .filter(|r| r.method == "DM" && r.variant != "True")
        .map(|r| r.coverage)
        .fold(0.0, f64::max);
    let c = dm_cov <= 0.30;
    let (bkl, sqlin) = (row(&rows, "BKL-MLE", "IPW").mse, row(&rows, "SQ-Linear", "IPW").mse);
    let d = bkl >= sqlin;
    let tag = |p: bool| if p { "ok" } else { "FAILED" };
    outcome(
        a && b && c && d,
        format!(
            "{} replications in {secs:.0} s; (a) oracle AIPW mse {:.4} coverage {:.2} {}; (b) SQ-Logit AIPW {logit_aipw:.3} vs IPW {logit_ipw:.3} {}; (c) largest fitted DM coverage {dm_cov:.2} {}; (d) BKL IPW {bkl:.3} vs SQ-Linear IPW {sqlin:.3} {}",
            cfg.replications,
            oracle.mse,
            oracle.coverage,
            tag(a),
            tag(b),
            tag(c),
            tag(d)
        ),
    )
}

fn null_shift() -> Outcome {
    let sq = null_shift_ratio_error(LossSpec::sq(0.0), 2000, 11).unwrap();
    let ukl = null_shift_ratio_error(LossSpec::ukl(0.0), 2000, 11).unwrap();
    outcome(sq <= 0.1 && ukl <= 0.1, format!("mean |alpha - 1| SQ {sq:.3}, UKL {ukl:.3}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("analytic gradients match finite differences", gradients),
        ("Bregman divergences are non-negative", bregman_nonnegative),
        ("balance residuals within penalty bounds", balance_bound),
        ("fits match brute-force dual solutions", dual),
        ("AIPW equals IPW under automatic orthogonalization", aipw_equals_ipw),
        ("TMLE update solves the score equation", tmle_score),
        ("nearest-neighbor matching identities", matching),
        ("power losses bridge SQ and UKL", power_bridges),
        ("representer error decreases with n", consistency),
        ("Monte Carlo benchmark envelopes", table),
        ("null shift gives unit ratios", null_shift),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = (k + 1).to_string();
        if filter.as_ref().is_some_and(|f| *f != id) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}: {name}: {} [{:.1} s]", o.detail, t.elapsed().as_secs_f64());
        failed += usize::from(!o.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
