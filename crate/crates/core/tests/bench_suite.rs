//! Synthetic sweep behavior at reduced scale and report reproducibility.
//! The full-scale sweep assertions live in the acceptance suite.

mod common;

use percis_core::bench::{
    run_synthetic_sweep, EnvPoint, SyntheticConfig, METHOD_ALL, METHOD_ENGINEERED, METHOD_LIMITED,
    METHOD_ORACLE,
};

fn mini_config() -> SyntheticConfig {
    SyntheticConfig {
        n_train: 6000,
        n_test: 6000,
        repetitions: 6,
        seed: 7,
        ..SyntheticConfig::default()
    }
}

#[test]
fn in_domain_ordering_and_unstable_shift_direction() {
    let cfg = mini_config();
    let sweep = [
        EnvPoint {
            sigma_mg: 1.0,
            sigma_mb: 1.0,
        },
        EnvPoint {
            sigma_mg: 1.0,
            sigma_mb: 8.0,
        },
    ];
    let report = run_synthetic_sweep(&cfg, &sweep).unwrap();
    let at = |method: &str, point: &EnvPoint| report.accuracy_of(method, &point.label()).unwrap();

    // In-domain, the full feature set beats the restricted one (up to a
    // small tolerance).
    let in_domain = &sweep[0];
    assert!(
        at(METHOD_ALL, in_domain).mean >= at(METHOD_LIMITED, in_domain).mean - 0.01,
        "in-domain ordering violated: {report:?}"
    );

    // Under a strong unstable shift the restricted model wins.
    let shifted = &sweep[1];
    assert!(
        at(METHOD_LIMITED, shifted).mean >= at(METHOD_ALL, shifted).mean,
        "full features survived a strong unstable shift: all {:?} limited {:?}",
        at(METHOD_ALL, shifted),
        at(METHOD_LIMITED, shifted)
    );

    // The engineered features track the hidden-component reference closely.
    for point in &sweep {
        let gap =
            (at(METHOD_ENGINEERED, point).mean - at(METHOD_ORACLE, point).mean).abs();
        assert!(gap <= 0.03, "engineered vs reference gap {gap} at {point:?}");
    }

    // Means and deviations are sane.
    for method in &report.methods {
        for condition in &report.conditions {
            let m = report.accuracy_of(method, condition).unwrap();
            assert!((0.0..=1.0).contains(&m.mean));
            assert!(m.sd >= 0.0);
        }
    }
}

#[test]
fn synthetic_report_is_bit_reproducible() {
    let cfg = SyntheticConfig {
        n_train: 2000,
        n_test: 2000,
        repetitions: 3,
        seed: 99,
        ..SyntheticConfig::default()
    };
    let sweep = [EnvPoint {
        sigma_mg: 1.0,
        sigma_mb: 2.0,
    }];
    let a = run_synthetic_sweep(&cfg, &sweep).unwrap().to_json();
    let b = run_synthetic_sweep(&cfg, &sweep).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn curves_csv_has_one_row_per_condition_method() {
    let cfg = SyntheticConfig {
        n_train: 1500,
        n_test: 1500,
        repetitions: 2,
        seed: 3,
        ..SyntheticConfig::default()
    };
    let sweep = [
        EnvPoint {
            sigma_mg: 1.0,
            sigma_mb: 1.0,
        },
        EnvPoint {
            sigma_mg: 2.0,
            sigma_mb: 1.0,
        },
    ];
    let report = run_synthetic_sweep(&cfg, &sweep).unwrap();
    let csv = report.to_curves_csv();
    let lines: Vec<&str> = csv.trim_end().lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 4);
    assert!(lines[0].starts_with("condition,method"));
}
