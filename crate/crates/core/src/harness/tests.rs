use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::pipeline::Mode;

fn cfg(text: &str) -> Result<ExperimentConfig, HarnessError> {
    ExperimentConfig::parse(text)
}

#[test]
fn paper_settings_accept_their_own_geometry() {
    let c = cfg("setting = sync-baseline\ncycle_ms = 75\n").unwrap();
    assert_eq!((c.width, c.height, c.batch_size, c.cycle_ms), (160, 90, 128, 75));
    assert_eq!(c.mode(), Mode::Sync);
}

#[test]
fn paper_settings_reject_foreign_values() {
    let err = cfg("setting = sync-highres\nbatch_size = 128\n").unwrap_err();
    assert!(err.to_string().contains("batch size is 80"), "{err}");
    assert!(cfg("setting = async-baseline\ncycle_ms = 75\ndelay_grad = 1\n").is_err());
    assert!(cfg("setting = async-highres\nwidth = 160\ndelay_grad = 1\n").is_err());
    assert!(cfg("setting = sync-baseline\ntraining_minutes = 60\n").is_err());
    assert!(cfg("setting = sync-baseline\nreset_ms = 0\n").is_err());
    assert!(cfg("setting = sync-baseline\nepisode_ms = 5000\n").is_err());
}

#[test]
fn malformed_files_rejected() {
    assert!(cfg("setting = sync-baseline\nseeds = \n").unwrap_err().to_string().contains("empty"));
    assert!(cfg("setting = sync-baseline\nseeds = 1,1\n").is_err());
    assert!(cfg("setting = sync-baseline\ncolour = red\n").unwrap_err().to_string().contains("unknown key"));
    assert!(cfg("setting = sync-baseline\nwidth\n").is_err());
    assert!(cfg("setting = nope\n").is_err());
    assert!(cfg("# nothing\n").is_err());
    assert!(cfg("setting = sync-baseline\nbatch_size = many\n").is_err());
    assert!(cfg("setting = sync-baseline\nkinematics = 1,2,3\n").is_err());
    // Async in virtual mode with nothing to wait on would never advance time.
    assert!(cfg("setting = async-baseline\n").is_err());
}

#[test]
fn comments_and_blank_lines_ignored() {
    let c = cfg("# header\n\nsetting = sync-baseline # trailing\n  seeds = 3, 4 ,5\n").unwrap();
    assert_eq!(c.seeds, vec![3, 4, 5]);
}

#[test]
fn run_lengths_follow_training_time() {
    let a = cfg("setting = async-baseline\ndelay_grad = 1\n").unwrap();
    assert_eq!((a.total_steps(), a.episodes(), a.horizon(), a.init_steps()), (108_000, 720, 150, 5000));
    let s = cfg("setting = sync-baseline\n").unwrap();
    assert_eq!((s.total_steps(), s.episodes(), s.horizon(), s.init_steps()), (57_600, 720, 80, 2666));
    let h = cfg("setting = sync-highres\n").unwrap();
    assert_eq!((h.total_steps(), h.episodes(), h.horizon(), h.init_steps()), (54_000, 720, 75, 2500));
}

#[test]
fn desk_scale_preset() {
    let a = cfg("setting = async-baseline\nscale = desk\ndelay_grad = 1\n").unwrap();
    assert_eq!((a.width, a.height, a.cycle_ms, a.batch_size), (40, 24, 40, 32));
    assert_eq!((a.total_steps(), a.episodes()), (45_000, 300));
    let s = cfg("setting = sync-baseline\nscale = desk\n").unwrap();
    assert_eq!((s.cycle_ms, s.total_steps(), s.episodes()), (120, 15_000, 300));
    assert!(cfg("setting = sync-baseline\nscale = desk\ncycle_ms = 75\n").is_ok());
    assert!(cfg("setting = sync-baseline\nscale = desk\ncycle_ms = 60\n").is_err());
    assert!(cfg("setting = async-baseline\nscale = desk\ncycle_ms = 50\ndelay_grad = 1\n").is_err());
    assert!(cfg("setting = async-baseline\nscale = desk\nwidth = 160\ndelay_grad = 1\n").is_err());
    assert!(cfg("setting = sync-baseline\nscale = desk\nbatch_size = 129\n").is_err());
    // 0.25 minutes at 120 ms is 125 steps, not whole 50-step episodes.
    assert!(cfg("setting = sync-baseline\nscale = desk\ntraining_minutes = 0.25\n").is_err());
}

#[test]
fn overrides_replace_values_and_are_checked() {
    let mut pairs = parse_pairs("setting = sync-baseline\nseeds = 0,1\n").unwrap();
    apply_override(&mut pairs, "seeds=7").unwrap();
    assert_eq!(ExperimentConfig::from_pairs(&pairs).unwrap().seeds, vec![7]);
    assert!(apply_override(&mut pairs, "nonsense=1").is_err());
    assert!(apply_override(&mut pairs, "seeds").is_err());
}

#[test]
fn config_errors_exit_with_one() {
    assert_eq!(cfg("setting = x\n").unwrap_err().exit_code(), 1);
    assert_eq!(HarnessError::Run("x".into()).exit_code(), 2);
    assert_eq!(HarnessError::Aggregate("x".into()).exit_code(), 2);
}

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        load_config(&p, &[]).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert_eq!(n, 6);
}

fn summary(seed: u64, returns: Vec<f64>) -> RunSummary {
    RunSummary {
        seed,
        total_steps: 150 * returns.len() as u64,
        returns,
        total_updates: 0,
        mean_cycle_ms: 40.0,
        drops: 0,
        failure: None,
    }
}

#[test]
fn identical_runs_give_zero_width() {
    let runs = vec![summary(0, vec![1.0, 2.0, 3.0]), summary(1, vec![1.0, 2.0, 3.0])];
    let t = aggregate("x", &runs, 1).unwrap();
    assert_eq!(t.rows.len(), 3);
    for (r, m) in t.rows.iter().zip([1.0, 2.0, 3.0]) {
        assert_eq!((r.mean, r.ci_low, r.ci_high, r.n), (m, m, m, 2));
    }
}

#[test]
fn two_point_interval_uses_t_with_one_dof() {
    let runs = vec![summary(0, vec![0.0]), summary(1, vec![2.0])];
    let r = aggregate("x", &runs, 1).unwrap().rows[0];
    // s = sqrt(2), n = 2, t_{0.975,1} = 12.7062047364...
    let half = 12.706_204_736_432_095 * 2f64.sqrt() / 2f64.sqrt();
    assert!((r.mean - 1.0).abs() < 1e-15);
    assert!((r.ci_high - 1.0 - half).abs() < 1e-9);
    assert!((1.0 - r.ci_low - half).abs() < 1e-9);
}

#[test]
fn five_run_interval() {
    let v = [1.0, 2.0, 4.0, 8.0, 16.0];
    let runs: Vec<_> = v.iter().enumerate().map(|(i, &x)| summary(i as u64, vec![x])).collect();
    let r = aggregate("x", &runs, 1).unwrap().rows[0];
    let mean = 6.2;
    let s = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0).sqrt();
    let half = 2.776_445_105_197_798_7 * s / 5f64.sqrt();
    assert!((r.mean - mean).abs() < 1e-12);
    assert!((r.ci_high - r.mean - half).abs() < 1e-9);
}

#[test]
fn windows_average_episodes() {
    let runs = vec![summary(0, vec![1.0, 3.0, 5.0, 7.0, 9.0]), summary(1, vec![1.0, 3.0, 5.0, 7.0, 9.0])];
    let t = aggregate("x", &runs, 2).unwrap();
    let got: Vec<(u64, f64)> = t.rows.iter().map(|r| (r.episode, r.mean)).collect();
    assert_eq!(got, vec![(0, 2.0), (2, 6.0), (4, 9.0)]);
}

#[test]
fn aggregation_preconditions() {
    assert!(aggregate("x", &[summary(0, vec![1.0])], 1).is_err());
    assert!(aggregate("x", &[summary(0, vec![1.0]), summary(1, vec![1.0, 2.0])], 1).is_err());
    assert!(aggregate("x", &[summary(0, vec![1.0]), summary(1, vec![1.0])], 0).is_err());
}

proptest! {
    #[test]
    fn aggregation_is_permutation_invariant(
        data in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 6), 2..8),
        rot in 0usize..8,
    ) {
        let runs: Vec<_> = data.iter().enumerate().map(|(i, r)| summary(i as u64, r.clone())).collect();
        let mut shuffled = runs.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        prop_assert_eq!(aggregate("x", &runs, 2).unwrap(), aggregate("x", &shuffled, 2).unwrap());
    }
}

#[test]
fn curve_csv_round_trip() {
    let runs = vec![summary(0, vec![0.0, 1.0]), summary(1, vec![2.0, 1.5])];
    let t = aggregate("s", &runs, 1).unwrap();
    let mut buf = Vec::new();
    write_curve_csv(&t, &mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("episode,mean,ci_low,ci_high,n\n"));
    assert_eq!(read_curve_csv("s", &buf[..]).unwrap(), t);
}

#[test]
fn final_return_uses_last_tenth() {
    let r: Vec<f64> = (0..20).map(f64::from).collect();
    assert_eq!(final_return(&r), 18.5);
    assert_eq!(final_return(&[4.0, 6.0]), 6.0);
    assert_eq!(final_return(&(0..15).map(f64::from).collect::<Vec<_>>()), 13.5);
}

#[test]
fn welch_matches_reference_values() {
    // Equal sizes and variances: t = -2*sqrt(2) on 2 dof, whose CDF is
    // 1/2 + t / (2 sqrt(2 + t^2)).
    let p = welch_p_value(&[0.0, 2.0], &[4.0, 6.0]).unwrap();
    let t = 8f64.sqrt();
    assert!((p - 2.0 * (0.5 - t / (2.0 * (2.0 + t * t).sqrt()))).abs() < 1e-10);
    // Unequal sizes; reference from an independent statistics package.
    let p = welch_p_value(&[1.0, 2.5, 3.0, 4.2, 5.1], &[2.0, 2.2, 6.1, 7.9]).unwrap();
    assert!((p - 0.436_213_403_497_483_46).abs() < 1e-8);
    assert!(welch_p_value(&[1.0], &[2.0, 3.0]).is_none());
    assert!(welch_p_value(&[1.0, 1.0], &[1.0, 1.0]).is_none());
}

fn settings(a: Vec<RunSummary>, b: Vec<RunSummary>) -> BTreeMap<String, Vec<RunSummary>> {
    BTreeMap::from([("async-baseline".to_string(), a), ("sync-baseline".to_string(), b)])
}

#[test]
fn strictly_better_in_every_seed_is_ordered() {
    let a: Vec<_> = (0..5).map(|s| summary(s, vec![0.0, 10.0 + s as f64])).collect();
    let b: Vec<_> = (0..5).map(|s| summary(s, vec![0.0, 9.5 + s as f64])).collect();
    let rep = compare_settings(&settings(a, b));
    assert_eq!(rep.relation("async-baseline", "sync-baseline").unwrap().order, Order::Better);
    assert_eq!(rep.relation("sync-baseline", "async-baseline").unwrap().order, Order::Worse);
    assert_eq!(rep.relation("async-baseline", "sync-baseline").unwrap().a_wins, 5);
}

#[test]
fn equal_curves_are_indistinguishable() {
    let a: Vec<_> = (0..5).map(|s| summary(s, vec![1.0, 2.0])).collect();
    let rep = compare_settings(&settings(a.clone(), a));
    assert_eq!(rep.relation("async-baseline", "sync-baseline").unwrap().order, Order::Indistinguishable);
}

#[test]
fn sample_ratio_of_paper_run_lengths() {
    let a: Vec<_> = (0..3)
        .map(|s| RunSummary {
            total_steps: 108_000,
            ..summary(s, vec![1.0])
        })
        .collect();
    let b: Vec<_> = (0..3)
        .map(|s| RunSummary {
            total_steps: 57_600,
            ..summary(s, vec![1.0])
        })
        .collect();
    let rep = compare_settings(&settings(a, b));
    let ratio = rep.setting("async-baseline").unwrap().mean_samples / rep.setting("sync-baseline").unwrap().mean_samples;
    assert_eq!(ratio, 1.875);
    let text = rep.to_string();
    assert!(text.contains("async-baseline ~ sync-baseline"), "{text}");
}

#[test]
fn failed_runs_excluded_from_returns() {
    let mut a: Vec<_> = (0..3).map(|s| summary(s, vec![5.0])).collect();
    a[1].failure = Some("boom".into());
    a[1].returns = vec![-1000.0];
    let b: Vec<_> = (0..3).map(|s| summary(s, vec![1.0])).collect();
    let rep = compare_settings(&settings(a, b));
    let s = rep.setting("async-baseline").unwrap();
    assert_eq!((s.failed, s.mean_final_return), (1, 5.0));
    assert_eq!(rep.relation("async-baseline", "sync-baseline").unwrap().paired, 2);
}

fn table(label: &str, v: f64) -> CurveTable {
    CurveTable {
        label: label.into(),
        rows: (0..5)
            .map(|e| CurveRow {
                episode: e,
                mean: v,
                ci_low: v,
                ci_high: v,
                n: 5,
            })
            .collect(),
    }
}

#[test]
fn svg_is_well_formed_with_one_series_per_table() {
    let tables: Vec<_> = Setting::ALL.iter().enumerate().map(|(i, s)| table(s.name(), i as f64)).collect();
    let svg = render_curves("curves", &tables).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(doc.root().children().filter(|n| n.is_element()).count(), 1);
    let series: Vec<_> = root.descendants().filter(|n| n.attribute("class") == Some("series")).collect();
    assert_eq!(series.len(), 4);
    for s in Setting::ALL {
        assert!(svg.contains(&format!("<title>{}</title>", s.name())));
    }
}

#[test]
fn flat_series_is_a_horizontal_line_with_empty_band() {
    let svg = render_curves("flat", &[table("one", 3.0)]).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let line = doc.descendants().find(|n| n.has_tag_name("polyline")).unwrap();
    let ys: Vec<&str> = line.attribute("points").unwrap().split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
    assert!(ys.iter().all(|y| *y == ys[0]));
    let band = doc.descendants().find(|n| n.has_tag_name("polygon")).unwrap();
    assert!(band.attribute("points").unwrap().split(' ').all(|p| p.ends_with(ys[0])));
}

#[test]
fn bar_chart_is_well_formed() {
    let chart = BarChart {
        title: "updates <per run>".into(),
        y_label: "updates".into(),
        bars: vec![("a".into(), 10.0), ("b".into(), 0.0)],
    };
    let svg = render_bars(&chart).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("rect")).count(), 3);
    assert!(render_bars(&BarChart { bars: vec![], ..chart }).is_err());
    assert!(render_curves("x", &[]).is_err());
}

fn tiny(dir: &std::path::Path) -> ExperimentConfig {
    cfg(&format!(
        "setting = async-baseline\nscale = desk\nagent = random\ntraining_minutes = 0.2\nseeds = 4, 9\ndelay_grad = 50\noutput = {}\n",
        dir.display()
    ))
    .unwrap()
}

#[test]
fn experiment_writes_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tiny(tmp.path());
    let sums = run_experiment(&c, 2).unwrap();
    assert_eq!(sums.len(), 2);
    assert_eq!(sums.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![4, 9]);
    for s in &sums {
        assert_eq!(s.failure, None);
        assert_eq!((s.total_steps, s.returns.len()), (300, 2));
        assert_eq!(s.mean_cycle_ms, 40.0);
    }
    let loaded = load_runs(&tmp.path().join("async-baseline")).unwrap();
    assert_eq!(loaded, sums);
    assert_ne!(sums[0].returns, sums[1].returns);
}

#[test]
fn same_seed_same_summary() {
    let (t1, t2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run_experiment(&tiny(t1.path()), 1).unwrap();
    let b = run_experiment(&tiny(t2.path()), 1).unwrap();
    assert_eq!(a, b);
    let read = |d: &std::path::Path| std::fs::read(d.join("async-baseline/seed-4/steps.csv")).unwrap();
    assert_eq!(read(t1.path()), read(t2.path()));
}

#[test]
fn recorded_failure_survives_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("seed-3");
    let log = crate::pipeline::RunLog {
        failure: Some("updater worker panicked".into()),
        ..Default::default()
    };
    write_run(&dir, &log).unwrap();
    let s = RunSummary::load(&dir).unwrap();
    assert_eq!(s.failure.as_deref(), Some("updater worker panicked"));
    write_run(&dir, &crate::pipeline::RunLog::default()).unwrap();
    assert_eq!(RunSummary::load(&dir).unwrap().failure, None);
}
