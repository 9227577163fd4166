use perfprobe::bugs::default_catalog;
use perfprobe::sim::*;
use perfprobe::stage1::inference_error;
use perfprobe::stage2::{classify, Decision};
use proptest::prelude::*;

const DESIGNS: [&str; 4] = ["skylake", "k8", "jaguar", "silvermont"];

fn small_workload(seed: u64, which: usize, n: usize) -> Workload {
    let mut profile = default_profiles(n)[which].clone();
    profile.memory_footprint = profile.memory_footprint.min(64 * 1024);
    generate_workload(seed, &profile).unwrap()
}

fn series(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| (prop::collection::vec(0.0..4.0f64, n), prop::collection::vec(0.0..4.0f64, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inference_error_is_a_symmetric_nonnegative_distance((y, z) in series(2..=64)) {
        let d = inference_error(&y, &z).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(inference_error(&y, &y).unwrap(), 0.0);
        prop_assert!((d - inference_error(&z, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn inference_error_scales_linearly((y, z) in series(2..=64), k in 0.1..10.0f64) {
        let d = inference_error(&y, &z).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
        let zs: Vec<f64> = z.iter().map(|v| v * k).collect();
        prop_assert!((inference_error(&ys, &zs).unwrap() - k * d).abs() <= 1e-9 * (1.0 + k * d));
    }

    #[test]
    fn raising_a_gamma_never_clears_a_bug(
        gp in prop::collection::vec(0.0..30.0f64, 1..8),
        gm in prop::collection::vec(0.0..10.0f64, 1..8),
        bump in 0.0..20.0f64,
        pick in any::<prop::sample::Index>(),
    ) {
        let (before, _, s0) = classify(&gp, &gm, 15.0, 5.0);
        let mut gp2 = gp.clone();
        let i = pick.index(gp2.len());
        gp2[i] += bump;
        let (after, _, s1) = classify(&gp2, &gm, 15.0, 5.0);
        prop_assert!(s1 >= s0);
        prop_assert!(before == Decision::BugFree || after == Decision::Bug);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_respects_width_and_conservation(seed in 0u64..1000, which in 0usize..10, d in 0usize..4) {
        let cfg = preset(DESIGNS[d]).unwrap();
        let w = small_workload(seed, which, 4000);
        let trace = simulate(&w, &cfg, None, 100).unwrap();
        let width = cfg.pipeline_width as f64;
        let n = w.instructions.len() as u64;
        prop_assert!((trace.committed() - n as f64).abs() < 1e-6);
        prop_assert!(trace.total_cycles() >= n.div_ceil(cfg.pipeline_width as u64));
        for s in &trace.steps {
            prop_assert!(s.ipc <= width + 1e-9);
        }
    }

    #[test]
    fn larger_delays_never_shorten_a_run(seed in 0u64..1000, which in 0usize..10, d in 0usize..4, bug in 0usize..64, t in 0u32..40, extra in 1u32..40) {
        let delayed: Vec<_> = default_catalog().into_iter().filter(|b| b.t_delay.is_some()).collect();
        let spec = &delayed[bug % delayed.len()];
        let cfg = preset(DESIGNS[d]).unwrap();
        let w = small_workload(seed, which, 4000);
        let lo = simulate(&w, &cfg, Some(&spec.with_delay(t)), 100).unwrap().total_cycles();
        let hi = simulate(&w, &cfg, Some(&spec.with_delay(t + extra)), 100).unwrap().total_cycles();
        prop_assert!(hi >= lo, "{} on {}: T={} gives {} but T={} gives {}", spec.name, DESIGNS[d], t, lo, t + extra, hi);
    }
}
