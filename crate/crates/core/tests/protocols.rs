use ranpac_core::accumulator::{Accumulator, Target};
use ranpac_core::feature_store::{split_cil, synth_generate, Dataset, SynthSpec};
use ranpac_core::protocols::{
    dil_domain_report, run, ExperimentConfig, LambdaConfig, Method, NoClock, ProjectionConfig, Protocol, ScheduleConfig, TargetMode,
};
use ranpac_core::solver::{solve, LambdaSchedule};

fn config(protocol: Protocol, method: Method) -> ExperimentConfig {
    ExperimentConfig { protocol, method, target_mode: TargetMode::OneHot, seed: 9 }
}

fn ranpac(m: usize, lambda: LambdaConfig) -> Method {
    Method::Ranpac { projection: ProjectionConfig::new(m), lambda }
}

fn fixed(value: f64) -> LambdaConfig {
    LambdaConfig::Fixed { value }
}

fn store(classes: usize, dim: usize, per_class: usize, scale: f64) -> Dataset {
    synth_generate(&SynthSpec::isotropic(classes, dim, per_class, scale, 21)).unwrap()
}

#[test]
fn ncm_on_two_separated_classes() {
    let ds = store(2, 8, 60, 6.0);
    let res = run(&ds, &config(Protocol::Cil { tasks: 2, seed: None }, Method::Ncm { projection: None }), &NoClock).unwrap();
    assert!(res.final_accuracy().unwrap() >= 0.99);
}

#[test]
fn single_task_matrix_is_one_by_one() {
    let ds = store(4, 8, 20, 3.0);
    let res = run(&ds, &config(Protocol::Cil { tasks: 1, seed: None }, ranpac(64, LambdaConfig::default())), &NoClock).unwrap();
    assert_eq!(res.r.len(), 1);
    assert_eq!(res.r[0].len(), 1);
    assert_eq!(res.avg_accuracy[0], res.r[0][0]);
    assert_eq!(res.avg_forgetting, vec![None]);
}

#[test]
fn runs_are_deterministic() {
    let ds = store(6, 10, 30, 2.0);
    let cfg = config(Protocol::Cil { tasks: 3, seed: None }, ranpac(96, LambdaConfig::default()));
    let a = run(&ds, &cfg, &NoClock).unwrap();
    let b = run(&ds, &cfg, &NoClock).unwrap();
    assert_eq!(a, b);
}

#[test]
fn class_coverage_grows_monotonically() {
    let ds = store(10, 8, 10, 2.0);
    let res = run(&ds, &config(Protocol::Cil { tasks: 4, seed: None }, ranpac(32, fixed(1.0))), &NoClock).unwrap();
    assert!(res.classes_seen.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*res.classes_seen.last().unwrap(), 10);
}

#[test]
fn final_head_does_not_depend_on_task_count() {
    let ds = store(20, 12, 15, 1.5);
    let reference = {
        let mut acc = Accumulator::classification(12, 20);
        for r in ds.train() {
            acc.update(&r.features_f64(), Target::Class(r.label as usize)).unwrap();
        }
        solve(acc.gram(), acc.prototypes(), 0.5).unwrap().weights
    };
    let mut overall = Vec::new();
    for t in [1usize, 5, 10, 20] {
        let split = split_cil(&ds, t, 3).unwrap();
        let mut acc = Accumulator::classification(12, 20);
        for task in &split.tasks {
            for &i in &task.train {
                let r = ds.record(i).unwrap();
                acc.update(&r.features_f64(), Target::Class(r.label as usize)).unwrap();
            }
        }
        let w = solve(acc.gram(), acc.prototypes(), 0.5).unwrap().weights;
        let diff = w.sub(&reference).unwrap().frobenius_norm() / reference.frobenius_norm();
        assert!(diff < 1e-9, "T={t}: {diff}");

        let res = run(&ds, &config(Protocol::Cil { tasks: t, seed: None }, Method::GramNoRp { lambda: fixed(0.5) }), &NoClock).unwrap();
        overall.push(res.final_accuracy().unwrap());
    }
    // Equal class and task sizes make the final row mean the full-set accuracy.
    for a in &overall[1..] {
        assert!((a - overall[0]).abs() < 1e-12, "{overall:?}");
    }
}

#[test]
fn final_accuracy_is_stable_across_split_seeds() {
    let ds = store(10, 16, 20, 1.0);
    let finals: Vec<f64> = (0..4)
        .map(|s| {
            let cfg = config(Protocol::Cil { tasks: 5, seed: Some(100 + s) }, ranpac(128, fixed(1.0)));
            run(&ds, &cfg, &NoClock).unwrap().final_accuracy().unwrap()
        })
        .collect();
    for a in &finals {
        assert!((a - finals[0]).abs() <= 1e-3, "{finals:?}");
    }
}

#[test]
fn snapshot_and_continue_matches_uninterrupted() {
    let ds = store(8, 10, 20, 2.0);
    let split = split_cil(&ds, 4, 1).unwrap();
    let feed = |acc: &mut Accumulator, tasks: &[ranpac_core::feature_store::TaskAssignment]| {
        for task in tasks {
            for &i in &task.train {
                let r = ds.record(i).unwrap();
                acc.update(&r.features_f64(), Target::Class(r.label as usize)).unwrap();
            }
        }
    };
    let mut whole = Accumulator::classification(10, 8);
    feed(&mut whole, &split.tasks);
    let mut first = Accumulator::classification(10, 8);
    feed(&mut first, &split.tasks[..2]);
    let mut resumed = Accumulator::restore(&first.snapshot()).unwrap();
    feed(&mut resumed, &split.tasks[2..]);
    assert_eq!(whole, resumed);
    let a = solve(whole.gram(), whole.prototypes(), 0.1).unwrap();
    let b = solve(resumed.gram(), resumed.prototypes(), 0.1).unwrap();
    assert_eq!(a.weights, b.weights);
}

#[test]
fn uniform_task_agnostic_matches_single_task() {
    let ds = store(6, 10, 25, 1.0);
    let schedule = ScheduleConfig {
        micro_tasks: 4,
        batches_per_micro_task: 5,
        batch_size: 10,
        width_fraction: None,
        checkpoint_every: 4,
        queue_fraction: 0.1,
        seed: None,
    };
    let method = ranpac(48, fixed(0.3));
    let agnostic = run(&ds, &config(Protocol::TaskAgnostic(schedule), method.clone()), &NoClock).unwrap();
    let single = run(&ds, &config(Protocol::Cil { tasks: 1, seed: None }, method), &NoClock).unwrap();
    assert_eq!(agnostic.checkpoints.len(), 1);
    let cp = &agnostic.checkpoints[0];
    assert_eq!(cp.samples_seen, ds.train().len() as u64);
    assert!((cp.accuracy_all - single.final_accuracy().unwrap()).abs() <= 1.0 / ds.val().len() as f64);
}

#[test]
fn seen_accuracy_dominates_all_class_accuracy() {
    let ds = store(10, 12, 40, 1.5);
    let schedule = ScheduleConfig {
        micro_tasks: 20,
        batches_per_micro_task: 2,
        batch_size: 8,
        width_fraction: Some(0.1),
        checkpoint_every: 4,
        queue_fraction: 0.2,
        seed: None,
    };
    let res = run(&ds, &config(Protocol::TaskAgnostic(schedule), ranpac(64, LambdaConfig::default())), &NoClock).unwrap();
    assert!(res.checkpoints.len() >= 5);
    for cp in &res.checkpoints {
        assert!(cp.accuracy_seen >= cp.accuracy_all);
    }
    assert!(res.checkpoints.windows(2).all(|w| w[0].classes_seen <= w[1].classes_seen));
    let last = res.checkpoints.last().unwrap();
    if last.classes_seen == 10 {
        assert_eq!(last.accuracy_seen, last.accuracy_all);
    }
}

#[test]
fn dil_unseen_domain_improves_after_its_task() {
    let spec = SynthSpec { domains: 2, ..SynthSpec::isotropic(5, 16, 40, 2.0, 4) };
    let ds = synth_generate(&spec).unwrap();
    let res = run(&ds, &config(Protocol::Dil, ranpac(128, LambdaConfig::CrossValidate(LambdaSchedule::default()))), &NoClock).unwrap();
    let report = dil_domain_report(&res).unwrap();
    assert_eq!(report.per_task.len(), 2);
    assert!(report.per_task[1][1] > report.per_task[0][1], "{:?}", report.per_task);
    // Equal-size domains: macro mean equals overall accuracy.
    for (m, o) in report.macro_mean.iter().zip(&report.overall) {
        assert!((m - o).abs() < 1e-12);
    }
    // DIL rows report full validation accuracy.
    assert!((res.r[1][0] - report.overall[1]).abs() < 1e-12);
}

#[test]
fn lda_and_gram_baselines_run_on_cil() {
    let ds = store(6, 10, 30, 3.0);
    for method in [
        Method::Lda { projection: None, options: Default::default() },
        Method::GramNoRp { lambda: LambdaConfig::default() },
        Method::Ncm { projection: Some(ProjectionConfig::new(64)) },
    ] {
        let res = run(&ds, &config(Protocol::Cil { tasks: 3, seed: None }, method), &NoClock).unwrap();
        assert!(res.final_accuracy().unwrap() > 0.9, "{}", res.config.method.name());
    }
}
