use batchlab_core::{
    build_plan, lemma1_bound, run_replicated, run_sgd, GradientOracle, LeastSquares, Logistic,
    NoisyQuadratic, RunOptions, SamplingMode, ScheduleSpec, StopReason,
};
use proptest::prelude::*;

fn seeds(k: u64) -> Vec<u64> {
    (0..k).collect()
}

#[test]
fn doubling_batches_beat_constant_batches_at_equal_sfo() {
    let p = NoisyQuadratic::isotropic(10, 1.0, 1.0).unwrap();
    let n = 4096;
    let constant = build_plan(&ScheduleSpec::constant(16, 0.1, 4, 2), n).unwrap();
    let doubling = build_plan(&ScheduleSpec::exp_bs(16, 2.0, 0.1, 4, 2), n).unwrap();
    assert_eq!(constant.total_sfo(), doubling.total_sfo());

    let opts = RunOptions::new(0);
    let a = run_replicated(&p, &constant, &seeds(30), &opts).unwrap();
    let b = run_replicated(&p, &doubling, &seeds(30), &opts).unwrap();
    assert!(
        b.mean_min_grad_norm() < a.mean_min_grad_norm(),
        "doubling {} vs constant {}",
        b.mean_min_grad_norm(),
        a.mean_min_grad_norm()
    );
}

#[test]
fn constant_schedule_respects_descent_bound() {
    let p = NoisyQuadratic::isotropic(10, 1.0, 1.0).unwrap();
    let plan = build_plan(&ScheduleSpec::constant(16, 0.1, 1, 1), 16 * 500).unwrap();
    let rep = run_replicated(&p, &plan, &seeds(30), &RunOptions::new(0)).unwrap();
    let gap = rep.runs.iter().map(|r| r.summary.initial_gap).sum::<f64>() / 30.0;
    let (etas, batches): (Vec<f64>, Vec<usize>) = plan.iterations().map(|(b, eta)| (eta, b)).unzip();
    let bound = lemma1_bound(gap, 1.0, 1.0, &etas, &batches).unwrap();
    let observed = rep.mean_min_grad_norm_sq();
    assert!(observed <= bound, "{observed} > {bound}");
}

#[test]
fn finite_sum_runs_descend() {
    let ls = LeastSquares::new(256, 4, 1).unwrap();
    let lg = Logistic::new(256, 4, 2).unwrap();
    let problems: [&dyn GradientOracle; 2] = [&ls, &lg];
    for p in problems {
        let eta = 0.5 / p.constants().l;
        let plan = build_plan(&ScheduleSpec::linear(8, 8, eta, 4, 3), 256).unwrap();
        for sampling in [SamplingMode::WithReplacement, SamplingMode::ShuffledEpochs] {
            let rec = run_sgd(p, &plan, &RunOptions::new(5).with_sampling(sampling)).unwrap();
            assert_eq!(rec.summary.stop, StopReason::Completed);
            assert_eq!(rec.summary.total_sfo, plan.total_sfo());
            let first = rec.rows.first().unwrap().loss;
            let last = rec.rows.last().unwrap().loss;
            assert!(last < first, "{}: {last} !< {first}", p.name());
            assert!(last >= p.constants().f_star - 1e-9);
        }
    }
}

#[test]
fn stage_entry_losses_are_recorded_iterates() {
    let p = NoisyQuadratic::isotropic(3, 1.0, 1.0).unwrap();
    let plan = build_plan(&ScheduleSpec::exp_bs_exp_lr(4, 2.0, 0.05, 1.4, 4, 1), 64).unwrap();
    let rec = run_sgd(&p, &plan, &RunOptions::new(2)).unwrap();
    for (stage, sr) in plan.stages.iter().zip(&rec.stages) {
        let row = rec.rows.iter().find(|r| r.t == stage.start()).unwrap();
        assert_eq!(row.loss, sr.entry_loss);
        assert_eq!(row.stage, stage.stage);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn executed_sfo_matches_plan(
        n in 1usize..300,
        b0 in 1usize..40,
        db in 0usize..20,
        m in 1usize..5,
        e in 1u32..3,
        seed in any::<u64>(),
        cadence in 1u64..7,
    ) {
        let p = NoisyQuadratic::isotropic(2, 1.0, 1.0).unwrap();
        let plan = build_plan(&ScheduleSpec::linear(b0, db, 0.1, m, e), n).unwrap();
        let rec = run_sgd(&p, &plan, &RunOptions::new(seed).with_cadence(cadence)).unwrap();
        prop_assert_eq!(rec.summary.total_sfo, plan.total_sfo());
        prop_assert_eq!(rec.summary.iterations, plan.total_iterations());
        let t = plan.total_iterations();
        prop_assert_eq!(rec.rows.len() as u64, t.div_ceil(cadence) + 1);
        prop_assert!(rec.rows.windows(2).all(|w| w[0].t < w[1].t && w[0].sfo <= w[1].sfo));
    }
}
