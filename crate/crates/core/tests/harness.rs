use stoi_mse::costs::CostKind;
use stoi_mse::harness::{
    run_pipeline, system_dir, ExperimentConfig, LrSearchConfig, LrSearchReport, ResultTable, SYSTEM_PAIR, UNPROCESSED,
};
use stoi_mse::signal::NoiseKind;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        n_list: vec![4, 8],
        train_noises: vec![NoiseKind::Ssn, NoiseKind::Bbl],
        test_noises: vec![NoiseKind::Ssn, NoiseKind::Bus],
        test_snr_db: vec![0.0],
        train_utterances: 6,
        val_utterances: 2,
        test_utterances: 3,
        duration_s: 1.2,
        hidden: vec![16],
        lr_search: None,
        stoi_n: 8,
        seed: 11,
        ..ExperimentConfig::default()
    };
    cfg.elc.max_epochs = 2;
    cfg.mse.max_epochs = 2;
    cfg
}

#[test]
fn tiny_pipeline_produces_expected_rows_and_is_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let table = run_pipeline(&cfg, dir.path()).unwrap();

    for noise in ["SSN", "BUS"] {
        assert!(table.find(UNPROCESSED, noise, 0.0, 0, "STOI").is_some());
        for n in [4, 8] {
            for sys in ["ELC", "MSE"] {
                let elc = table.find(sys, noise, 0.0, n, "ELC").unwrap();
                assert!(elc.value > -1.0 && elc.value < 1.0);
                assert!(elc.ci_lo <= elc.value && elc.value <= elc.ci_hi);
                assert_eq!(elc.count, 3 * 15);
                let stoi = table.find(sys, noise, 0.0, n, "STOI").unwrap();
                assert!(stoi.value > -1.0 && stoi.value <= 1.0);
            }
            assert!(table.find(SYSTEM_PAIR, noise, 0.0, n, "ELC_diff").is_some());
            assert!(table.find(SYSTEM_PAIR, noise, 0.0, n, "gain_corr").is_some());
        }
    }
    for cost in CostKind::BOTH {
        let sd = system_dir(dir.path(), cost, 4);
        assert!(sd.join("system.json").exists());
        assert!(sd.join("train_log_band_01.csv").exists());
    }
    let csv = std::fs::File::open(dir.path().join("results.csv")).unwrap();
    assert_eq!(ResultTable::read_csv(csv).unwrap(), table.rounded());

    let again = run_pipeline(&cfg, dir.path()).unwrap();
    assert_eq!(again, table);
}

#[test]
fn same_seed_same_results_in_fresh_directories() {
    let cfg = ExperimentConfig {
        n_list: vec![4],
        test_noises: vec![NoiseKind::Ssn],
        ..tiny()
    };
    let a = run_pipeline(&cfg, tempfile::tempdir().unwrap().path()).unwrap();
    let b = run_pipeline(&cfg, tempfile::tempdir().unwrap().path()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn step_search_choices_are_used_and_saved() {
    let cfg = ExperimentConfig {
        n_list: vec![4],
        test_noises: vec![NoiseKind::Ssn],
        lr_search: Some(LrSearchConfig {
            elc_candidates: vec![1e-3, 1e-2],
            mse_candidates: vec![1e-4, 1e-3],
            n: 4,
            bands: vec![2, 9],
            epochs: 1,
            ..LrSearchConfig::default()
        }),
        ..tiny()
    };
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, dir.path()).unwrap();
    let report: LrSearchReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lr_search.json")).unwrap()).unwrap();
    assert_eq!(report.candidates.len(), 4);
    assert!(report.candidates.iter().all(|c| c.per_band.len() == 2));
    for cost in CostKind::BOTH {
        assert!(cfg.lr_search.as_ref().unwrap().candidates(cost).contains(&report.chosen(cost)));
        let log = std::fs::read_to_string(system_dir(dir.path(), cost, 4).join("train_log_band_01.csv")).unwrap();
        let first_lr: f64 = log.lines().nth(2).unwrap().rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(first_lr, report.chosen(cost));
    }
}

#[test]
fn unmatched_training_noise_is_rejected() {
    let cfg = ExperimentConfig {
        train_noises: vec![NoiseKind::Ped],
        ..tiny()
    };
    let err = run_pipeline(&cfg, tempfile::tempdir().unwrap().path()).unwrap_err();
    assert!(err.to_string().contains("config"), "{err}");
}
