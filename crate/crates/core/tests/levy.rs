use proptest::prelude::*;
use slowfast::levy::{thin_controlled, LevyModel};
use slowfast::rng::{stream, Channel};
use slowfast::stats::mean_se;

#[test]
fn jump_counts_match_the_total_mass() {
    let levy = LevyModel::gauss_light(2.0, 1).unwrap();
    let mass = levy.effective_mass().unwrap();
    let counts: Vec<f64> = (0..4000)
        .map(|i| {
            let mut c = stream(1, Channel::JumpCount, i);
            let mut m = stream(1, Channel::JumpMark, i);
            levy.sample_jumps(3.0, 2.0, &mut c, &mut m).unwrap().len() as f64
        })
        .collect();
    let (mean, se) = mean_se(&counts);
    assert!((mean - 6.0 * mass).abs() <= 3.0 * se, "{mean} ± {se}");
}

#[test]
fn marks_have_the_normalized_second_moment() {
    let levy = LevyModel::gauss_light(2.0, 1).unwrap();
    let target = levy.second_moment().unwrap() / levy.effective_mass().unwrap();
    let mut rng = stream(2, Channel::JumpMark, 0);
    let mut z = [0.0];
    let sq: Vec<f64> = (0..40_000)
        .map(|_| {
            levy.sample_mark(&mut rng, &mut z).unwrap();
            z[0] * z[0]
        })
        .collect();
    let (mean, se) = mean_se(&sq);
    assert!((mean - target).abs() <= 3.0 * se, "{mean} vs {target}");
}

#[test]
fn truncated_strongly_tempered_marks_respect_the_cutoff() {
    let levy = LevyModel::strongly_tempered(1.5, 4, 2).unwrap().with_truncation(0.05).unwrap();
    let mut rng = stream(3, Channel::JumpMark, 0);
    let mut z = [0.0; 2];
    for _ in 0..5000 {
        levy.sample_mark(&mut rng, &mut z).unwrap();
        assert!(z.iter().map(|v| v * v).sum::<f64>().sqrt() >= 0.05);
    }
}

#[test]
fn thinning_keeps_the_expected_fraction() {
    let levy = LevyModel::gauss_light(1.0, 1).unwrap();
    let mut c = stream(4, Channel::JumpCount, 0);
    let mut m = stream(4, Channel::JumpMark, 0);
    let mut u = stream(4, Channel::Thinning, 0);
    let jumps = levy.sample_jumps(200.0, 10.0, &mut c, &mut m).unwrap();
    let kept = thin_controlled(&jumps, &|_, z| if z[0] > 0.0 { 0.5 } else { 2.0 }, 2.0, &mut u).unwrap();
    let expected = jumps.len() as f64 * (0.5 * 0.25 + 0.5 * 1.0);
    let sd = (jumps.len() as f64 * 0.25).sqrt();
    assert!((kept.len() as f64 - expected).abs() <= 4.0 * sd, "{} vs {expected}", kept.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jump_times_are_sorted_and_inside_the_horizon(seed in 0u64..10_000, horizon in 0.01f64..5.0) {
        let levy = LevyModel::gauss_light(1.0, 1).unwrap();
        let mut c = stream(seed, Channel::JumpCount, 0);
        let mut m = stream(seed, Channel::JumpMark, 0);
        let jumps = levy.sample_jumps(10.0, horizon, &mut c, &mut m).unwrap();
        prop_assert!(jumps.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert!(jumps.iter().all(|j| j.time >= 0.0 && j.time < horizon && j.mark[0] != 0.0));
    }

    #[test]
    fn symmetric_measure_has_zero_odd_moments(alpha in 0.3f64..4.0) {
        let levy = LevyModel::gauss_light(alpha, 1).unwrap();
        let q = levy.nu_integral(&|z, o| o[0] = z[0].powi(3), 1).unwrap();
        prop_assert!(q.value[0].abs() < 1e-9);
    }

    #[test]
    fn thinning_with_unit_intensity_keeps_everything(seed in 0u64..1000) {
        let levy = LevyModel::gauss_light(1.0, 1).unwrap();
        let mut c = stream(seed, Channel::JumpCount, 1);
        let mut m = stream(seed, Channel::JumpMark, 1);
        let mut u = stream(seed, Channel::Thinning, 1);
        let jumps = levy.sample_jumps(5.0, 1.0, &mut c, &mut m).unwrap();
        let kept = thin_controlled(&jumps, &|_, _| 1.0, 1.0, &mut u).unwrap();
        prop_assert_eq!(kept, jumps);
    }
}
