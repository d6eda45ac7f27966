use std::path::Path;

use nou_amm::intensity::LiquiditySpec;
use nou_amm::model::NouParams;
use nou_amm_cli::config::{load_config, load_liquidity, load_params, resolve_config, Choice, RunConfig, PRESETS};
use nou_amm_cli::error::{EXIT_NUMERICAL, EXIT_VALIDATION};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn shipped_configs_match_presets() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    for name in PRESETS {
        let cfg = load_config(&root.join("configs").join(format!("{name}.json"))).unwrap();
        let preset = RunConfig::preset(name).unwrap();
        assert_eq!(cfg.params(), preset.params());
        assert_eq!(cfg.liquidity.resolve(), preset.liquidity.resolve());
        assert_eq!(cfg.simulation, preset.simulation);
        assert_eq!(cfg.gammas, preset.gammas);
        assert_eq!(cfg.control, preset.control);
    }
}

#[test]
fn presets_and_inline_objects_both_parse() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.json", r#"{"model": "usdc_usdt", "liquidity": "wsteth_weth"}"#);
    let cfg = load_config(&p).unwrap();
    assert_eq!(cfg.params(), NouParams::usdc_usdt());
    assert_eq!(cfg.liquidity.resolve(), LiquiditySpec::wsteth_weth());
    assert_eq!(cfg.simulation.n_paths, 300);
    assert_eq!(cfg.simulation.dt_seconds, 10.0);

    let p = write(
        dir.path(),
        "b.json",
        r#"{"model": {"kappa": 2, "eta": 1, "sigma": 1e-3, "nu": 2e-3, "u_bar": 1.01},
            "liquidity": {"lambda_01": 100, "a_01": 0.5, "b_01": 5000, "lambda_10": 120, "a_10": 0, "b_10": 4000,
                          "sizes": [{"z": 10, "w": 0.5}, {"z": 20, "w": 0.5}]},
            "replay": {"data": "series.csv"}}"#,
    );
    let cfg = load_config(&p).unwrap();
    assert_eq!(cfg.params(), NouParams::new(2.0, 1.0, 1e-3, 2e-3, 1.01).unwrap());
    assert!(matches!(cfg.liquidity, Choice::Inline(_)));
    assert_eq!(cfg.liquidity.resolve().sizes.atoms.len(), 2);
    assert_eq!(cfg.replay.unwrap().data.unwrap(), dir.path().join("series.csv"));
}

#[test]
fn config_serializes_back_to_itself() {
    let cfg = RunConfig::preset("wsteth_weth").unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    let back: RunConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
}

fn error_for(text: &str) -> nou_amm_cli::error::CliError {
    let dir = tempfile::tempdir().unwrap();
    load_config(&write(dir.path(), "cfg.json", text)).unwrap_err()
}

#[test]
fn syntax_errors_name_file_line_and_field() {
    let e = error_for("{\"model\": \"usdc_usdt\",\n \"liquidity\": \"usdc_usdt\",\n \"simulation\": {\"n_path\": 3}}");
    assert_eq!(e.code, EXIT_VALIDATION);
    assert!(e.message.contains("cfg.json"), "{e}");
    assert!(e.message.contains("line 3"), "{e}");
    assert!(e.message.contains("simulation.n_path"), "{e}");

    let e = error_for("{\"model\": \"usdc\", \"liquidity\": \"usdc_usdt\"}");
    assert!(e.message.contains("field `model`") && e.message.contains("unknown preset"), "{e}");

    let e = error_for("{\"model\": \"usdc_usdt\", \"liquidity\": \"usdc_usdt\", \"control\": {\"gamma\": \"big\"}}");
    assert!(e.message.contains("control.gamma"), "{e}");

    let e = error_for("{\"liquidity\": \"usdc_usdt\"}");
    assert!(e.message.contains("model"), "{e}");
}

#[test]
fn invariant_violations_are_rejected_before_running() {
    let cases = [
        (r#"{"model": {"kappa": 0.01, "eta": 0.03, "sigma": 5e-4, "nu": 5e-4, "u_bar": 1}, "liquidity": "usdc_usdt"}"#, "model"),
        (r#"{"model": "usdc_usdt", "liquidity": "usdc_usdt", "simulation": {"dt_seconds": 3600}}"#, "dt_seconds"),
        (r#"{"model": "usdc_usdt", "liquidity": "usdc_usdt", "simulation": {"n_paths": 1}}"#, "n_paths"),
        (r#"{"model": "usdc_usdt", "liquidity": "usdc_usdt", "gammas": [1, -1]}"#, "gammas"),
        (r#"{"model": "usdc_usdt", "liquidity": "usdc_usdt", "control": {"gamma": 0}}"#, "control"),
        (r#"{"model": "usdc_usdt", "liquidity": "usdc_usdt", "control": {"grid_n": 0}}"#, "control"),
        (r#"{"model": "usdc_usdt", "liquidity": "usdc_usdt", "replay": {"resample_seconds": 0}}"#, "resample_seconds"),
        (
            r#"{"model": "usdc_usdt", "liquidity": {"lambda_01": -1, "a_01": 0, "b_01": 1, "lambda_10": 1, "a_10": 0, "b_10": 1, "sizes": [{"z": 1, "w": 1}]}}"#,
            "liquidity",
        ),
    ];
    for (text, field) in cases {
        let e = error_for(text);
        assert_eq!(e.code, EXIT_VALIDATION, "{e}");
        assert!(e.message.contains(field), "{field}: {e}");
    }
    assert_ne!(EXIT_VALIDATION, EXIT_NUMERICAL);
}

#[test]
fn config_or_preset_but_not_both() {
    assert!(resolve_config(None, Some("usdc_usdt")).is_ok());
    assert!(resolve_config(None, Some("eurc_usdc")).is_err());
    assert!(resolve_config(None, None).is_err());
    assert!(resolve_config(Some(Path::new("x.json")), Some("usdc_usdt")).is_err());
}

#[test]
fn params_and_liquidity_arguments_accept_files_or_presets() {
    assert_eq!(load_params("wsteth_weth").unwrap().params, NouParams::wsteth_weth());
    assert_eq!(load_liquidity("usdc_usdt").unwrap(), LiquiditySpec::usdc_usdt());
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "p.json",
        r#"{"kappa": 6, "eta": 3, "sigma": 6e-3, "nu": 4e-3, "u_bar": 1.15, "log_likelihood": 1.0,
            "yield": {"r": 0.03, "intercept": 0.14, "residual_std": 1e-3}}"#,
    );
    let f = load_params(p.to_str().unwrap()).unwrap();
    assert_eq!(f.params, NouParams::wsteth_weth());
    assert_eq!(f.yield_estimate.unwrap().r, 0.03);
    assert!(load_params(dir.path().join("missing.json").to_str().unwrap()).is_err());
}
