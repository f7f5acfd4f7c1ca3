use approx::assert_abs_diff_eq;
use gpda_core::diagnostics::{column, diagnose};
use gpda_core::gp::{build_surrogate, AcquisitionConfig, GPModel};
use gpda_core::samplers::{postprocess, run_chains, total_stats, trimmed, ProposalConfig, SamplingMode};
use gpda_core::{Bounds, FnDensity, LogDensity};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SD: [f64; 2] = [0.08, 0.05];

fn gaussian(mean: [f64; 2]) -> impl LogDensity {
    FnDensity::new(2, move |t: &[f64]| {
        -0.5 * (0..2).map(|j| ((t[j] - mean[j]) / SD[j]).powi(2)).sum::<f64>()
    })
}

fn surrogate_of<T: LogDensity>(target: &T, bounds: &Bounds) -> GPModel {
    let cfg = AcquisitionConfig {
        budget_max: 40,
        ..AcquisitionConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    build_surrogate(target, bounds, &cfg, 15, &mut rng).unwrap().gp
}

fn moments(pooled: &[Vec<f64>], j: usize) -> (f64, f64) {
    let xs = column(pooled, j);
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn starts() -> Vec<Vec<f64>> {
    vec![vec![0.2, 0.5], vec![0.4, 0.7], vec![0.25, 0.65], vec![0.35, 0.55]]
}

#[test]
fn delayed_acceptance_removes_surrogate_bias() {
    let bounds = Bounds::uniform(2, 0.0, 1.0).unwrap();
    let exact = gaussian([0.3, 0.6]);
    // the surrogate is trained on a shifted target
    let gp = surrogate_of(&gaussian([0.36, 0.6]), &bounds);
    let prop = ProposalConfig::new(0.07).unwrap();
    let n = 20_000;

    let run = |mode| run_chains(&exact, Some(&gp), &bounds, &starts(), prop, n, mode, 4).unwrap();
    let two = run(SamplingMode::TwoStage);
    let only = run(SamplingMode::SurrogateOnly);

    let (m_two, s_two) = moments(&postprocess(&two, 0.25, 1).unwrap(), 0);
    let (m_only, _) = moments(&postprocess(&only, 0.25, 1).unwrap(), 0);
    assert_abs_diff_eq!(m_two, 0.3, epsilon = 0.01);
    assert_abs_diff_eq!(s_two, SD[0], epsilon = 0.01);
    assert!(m_only > 0.34, "surrogate-only mean {m_only}");

    assert_eq!(total_stats(&only).exact_evaluations, 0);
    let stats = total_stats(&two);
    assert!(stats.exact_tested < stats.proposed);
    assert_eq!(stats.exact_evaluations, stats.exact_tested + starts().len() as u64);
    let report = diagnose(&trimmed(&two, 0.25, 1).unwrap()).unwrap();
    assert!(report.parameters.iter().all(|p| p.rhat < 1.1));
}

#[test]
fn exact_and_two_stage_agree_on_a_good_surrogate() {
    let bounds = Bounds::uniform(2, 0.0, 1.0).unwrap();
    let exact = gaussian([0.3, 0.6]);
    let gp = surrogate_of(&exact, &bounds);
    let prop = ProposalConfig::new(0.07).unwrap();
    let n = 20_000;

    let base = run_chains(&exact, None, &bounds, &starts(), prop, n, SamplingMode::Exact, 9).unwrap();
    let two = run_chains(
        &exact,
        Some(&gp),
        &bounds,
        &starts(),
        prop,
        n,
        SamplingMode::TwoStage,
        9,
    )
    .unwrap();
    let (a, b) = (
        postprocess(&base, 0.25, 2).unwrap(),
        postprocess(&two, 0.25, 2).unwrap(),
    );
    for j in 0..2 {
        let (ma, sa) = moments(&a, j);
        let (mb, sb) = moments(&b, j);
        assert_abs_diff_eq!(ma, mb, epsilon = 0.01);
        assert_abs_diff_eq!(sa, sb, epsilon = 0.01);
    }
    // a faithful surrogate screens out proposals the exact chain would mostly reject
    assert!(total_stats(&two).exact_evaluations < total_stats(&base).exact_evaluations);
}

#[test]
fn chains_are_reproducible_per_seed() {
    let bounds = Bounds::uniform(2, 0.0, 1.0).unwrap();
    let exact = gaussian([0.3, 0.6]);
    let gp = surrogate_of(&exact, &bounds);
    let prop = ProposalConfig::new(0.05).unwrap();
    for mode in [SamplingMode::Exact, SamplingMode::TwoStage, SamplingMode::SurrogateOnly] {
        let a = run_chains(&exact, Some(&gp), &bounds, &starts(), prop, 500, mode, 21).unwrap();
        let b = run_chains(&exact, Some(&gp), &bounds, &starts(), prop, 500, mode, 21).unwrap();
        let c = run_chains(&exact, Some(&gp), &bounds, &starts(), prop, 500, mode, 22).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].samples, c[0].samples);
    }
}
